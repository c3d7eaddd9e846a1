//! Result files: one CSV per metric family plus aggregates and metadata.
//!
//! | file | columns |
//! |------|---------|
//! | `correlation.csv` | scenario, estimator, architecture, sweep_axis, sweep_value, trial, user, eta_u, eta_v |
//! | `spectral_efficiency.csv` | scenario, estimator, architecture, sweep_axis, sweep_value, trial, se_dl, se_ul |
//! | `ser.csv` | scenario, estimator, architecture, sweep_axis, sweep_value, trial, symbols, errors, ser |
//! | `rate.csv` | scenario, estimator, architecture, sweep_axis, sweep_value, trial, user, se_dl, se_ul, rate_dl_mbps, rate_ul_mbps |
//! | `aggregate.csv` | scenario, estimator, architecture, sweep_axis, sweep_value, metric, count, mean, p5, p50, p95, q000 … q100 |
//! | `timing.csv` | scenario, estimator, architecture, sweep_value, trial, user, wall_time_s (only on request) |
//!
//! Numbers use the shortest decimal form that parses back to the same `f64`,
//! switching to exponent notation for very small or large magnitudes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{MetricFamily, Scenario, SnrMode, SweepAxis};
use super::run::{ResultTable, TrialRecord, CDF_POINTS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    /// A single `results.json` holding rows and aggregates.
    StructuredText,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EmitOptions {
    pub timing: bool,
}

fn axis_label(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::SnrDb => "snr_db",
        SweepAxis::Users => "users",
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

struct Sink {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl Sink {
    fn create<S: AsRef<str>>(path: PathBuf, header: &[S]) -> Result<Self> {
        let file = File::create(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        let mut sink = Self {
            writer: csv::Writer::from_writer(BufWriter::new(file)),
            path,
        };
        sink.write(header.iter().map(|s| s.as_ref().to_string()))?;
        Ok(sink)
    }

    fn write<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.writer
            .write_record(&fields)
            .map_err(|e| Error::Output {
                path: self.path.clone(),
                message: e.to_string(),
            })
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })
    }
}

fn row_prefix(table: &ResultTable, r: &TrialRecord) -> Vec<String> {
    vec![
        table.scenario.clone(),
        r.estimator.label().to_string(),
        r.architecture.label().to_string(),
        axis_label(table.sweep_axis).to_string(),
        num(r.sweep_value),
        r.trial.to_string(),
    ]
}

const PREFIX: [&str; 6] = [
    "scenario",
    "estimator",
    "architecture",
    "sweep_axis",
    "sweep_value",
    "trial",
];

fn header<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    PREFIX
        .iter()
        .copied()
        .chain(extra.iter().copied())
        .collect()
}

pub fn cdf_column_names() -> Vec<String> {
    (0..CDF_POINTS).map(|i| format!("q{i:03}")).collect()
}

/// Write the per-family CSVs and `aggregate.csv` into `dir`, returning the files written.
pub fn write_csv(
    scenario: &Scenario,
    table: &ResultTable,
    dir: &Path,
    options: EmitOptions,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut open = |name: &str, extra: &[&str]| -> Result<Sink> {
        let path = dir.join(name);
        written.push(path.clone());
        Sink::create(path, &header(extra))
    };

    if scenario.has_metric(MetricFamily::Correlation) {
        let mut sink = open("correlation.csv", &["user", "eta_u", "eta_v"])?;
        for r in &table.rows {
            let mut f = row_prefix(table, r);
            f.extend([r.user.to_string(), num(r.eta_u), num(r.eta_v)]);
            sink.write(f)?;
        }
        sink.finish()?;
    }
    if scenario.has_metric(MetricFamily::SpectralEfficiency) {
        let mut sink = open("spectral_efficiency.csv", &["se_dl", "se_ul"])?;
        for r in &table.rows {
            let mut f = row_prefix(table, r);
            f.extend([opt(r.se_dl), opt(r.se_ul)]);
            sink.write(f)?;
        }
        sink.finish()?;
    }
    if scenario.has_metric(MetricFamily::Ser) {
        let mut sink = open("ser.csv", &["symbols", "errors", "ser"])?;
        for r in &table.rows {
            let mut f = row_prefix(table, r);
            f.extend([
                r.ser_symbols.map(|x| x.to_string()).unwrap_or_default(),
                r.ser_errors.map(|x| x.to_string()).unwrap_or_default(),
                opt(r.ser),
            ]);
            sink.write(f)?;
        }
        sink.finish()?;
    }
    if scenario.has_metric(MetricFamily::Rate) {
        let mut sink = open(
            "rate.csv",
            &["user", "se_dl", "se_ul", "rate_dl_mbps", "rate_ul_mbps"],
        )?;
        for r in &table.rows {
            let mut f = row_prefix(table, r);
            f.extend([
                r.user.to_string(),
                opt(r.se_dl),
                opt(r.se_ul),
                opt(r.rate_dl_mbps),
                opt(r.rate_ul_mbps),
            ]);
            sink.write(f)?;
        }
        sink.finish()?;
    }

    let names = cdf_column_names();
    let mut agg_header = vec![
        "scenario",
        "estimator",
        "architecture",
        "sweep_axis",
        "sweep_value",
        "metric",
        "count",
        "mean",
        "p5",
        "p50",
        "p95",
    ];
    agg_header.extend(names.iter().map(String::as_str));
    let path = dir.join("aggregate.csv");
    written.push(path.clone());
    let mut sink = Sink::create(path, &agg_header)?;
    for a in &table.aggregates {
        let mut f = vec![
            table.scenario.clone(),
            a.estimator.label().to_string(),
            a.architecture.label().to_string(),
            axis_label(table.sweep_axis).to_string(),
            num(a.sweep_value),
            a.metric.to_string(),
            a.count.to_string(),
            num(a.mean),
            num(a.p5),
            num(a.p50),
            num(a.p95),
        ];
        f.extend(a.cdf.iter().map(|&x| num(x)));
        sink.write(f)?;
    }
    sink.finish()?;

    if options.timing {
        let path = dir.join("timing.csv");
        written.push(path.clone());
        let mut sink = Sink::create(
            path,
            &[
                "scenario",
                "estimator",
                "architecture",
                "sweep_value",
                "trial",
                "user",
                "wall_time_s",
            ],
        )?;
        for r in &table.rows {
            sink.write([
                table.scenario.clone(),
                r.estimator.label().to_string(),
                r.architecture.label().to_string(),
                num(r.sweep_value),
                r.trial.to_string(),
                r.user.to_string(),
                num(r.wall_time_s),
            ])?;
        }
        sink.finish()?;
    }

    written.push(write_metadata(scenario, table, dir)?);
    Ok(written)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    f.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_metadata(scenario: &Scenario, table: &ResultTable, dir: &Path) -> Result<PathBuf> {
    let mode = match scenario.system.snr_mode {
        SnrMode::Direct => "direct",
        SnrMode::LinkBudget => "link-budget",
    };
    let meta = json!({
        "scenario": table.scenario,
        "kind": scenario.kind,
        "master_seed": scenario.master_seed,
        "trials": scenario.trials,
        "snr_mode": mode,
        "snr_definition": match scenario.system.snr_mode {
            SnrMode::Direct => "unit-power probe entries and unit data power over noise variance per antenna",
            SnrMode::LinkBudget => "noise variance k*T*W*F from noise density, bandwidth and noise figure",
        },
        "sweep_axis": axis_label(table.sweep_axis),
        "sweep_values": table.sweep_values,
        "noise_variances": table.noise_variances,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "config": scenario,
    });
    let path = dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Output {
        path: path.clone(),
        message: e.to_string(),
    })?;
    write_text(&path, &(text + "\n"))?;
    Ok(path)
}

/// Write `table` in the requested format under `dir`.
pub fn emit_results(
    scenario: &Scenario,
    table: &ResultTable,
    dir: &Path,
    format: OutputFormat,
    options: EmitOptions,
) -> Result<Vec<PathBuf>> {
    match format {
        OutputFormat::Csv => write_csv(scenario, table, dir, options),
        OutputFormat::StructuredText => {
            fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?;
            let path = dir.join("results.json");
            let text = serde_json::to_string_pretty(table).map_err(|e| Error::Output {
                path: path.clone(),
                message: e.to_string(),
            })?;
            write_text(&path, &(text + "\n"))?;
            Ok(vec![path, write_metadata(scenario, table, dir)?])
        }
    }
}
