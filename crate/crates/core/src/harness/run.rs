//! Seeded trial execution and aggregation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{snr_to_noise_var, MetricFamily, Scenario, ScenarioKind, SweepAxis};
use crate::beamforming::Architecture;
use crate::channel::{generate_channel, ChannelParams, ChannelRealization};
use crate::error::{Error, Result};
use crate::metrics::{correlation, se_multiuser, se_single_user, ser_differential, LinkDirection};
use crate::protocols::{make_pilots, run_multiuser, run_single_user_on, Estimator, LinkContext};

/// Stream tags separating the random draws of one cell.
const TAG_CHANNEL: u64 = 0;
const TAG_ESTIMATION: u64 = 1;
const TAG_SER: u64 = 2;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mix a master seed with cell coordinates into an independent stream seed.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix64(master), |acc, &c| {
        splitmix64(acc ^ splitmix64(c.wrapping_add(1)))
    })
}

fn cell_rng(master: u64, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, coords))
}

fn estimator_index(e: Estimator) -> u64 {
    Estimator::ALL
        .iter()
        .position(|&x| x == e)
        .expect("estimator is listed") as u64
}

/// One (estimator, architecture, sweep point, trial, user) outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub estimator: Estimator,
    pub architecture: Architecture,
    pub sweep_index: usize,
    pub sweep_value: f64,
    pub trial: usize,
    pub user: usize,
    pub eta_u: f64,
    pub eta_v: f64,
    pub se_dl: Option<f64>,
    pub se_ul: Option<f64>,
    pub ser: Option<f64>,
    pub ser_symbols: Option<u64>,
    pub ser_errors: Option<u64>,
    pub rate_dl_mbps: Option<f64>,
    pub rate_ul_mbps: Option<f64>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

pub const CDF_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub estimator: Estimator,
    pub architecture: Architecture,
    pub sweep_value: f64,
    pub metric: &'static str,
    pub count: usize,
    pub mean: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    /// Empirical quantiles at probabilities 0.00, 0.01, …, 1.00.
    pub cdf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub scenario: String,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub noise_variances: Vec<f64>,
    pub rows: Vec<TrialRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl ResultTable {
    pub fn aggregate(
        &self,
        estimator: Estimator,
        arch: Architecture,
        sweep_value: f64,
        metric: &str,
    ) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| {
            a.estimator == estimator
                && a.architecture == arch
                && a.sweep_value == sweep_value
                && a.metric == metric
        })
    }

    pub fn mean(
        &self,
        estimator: Estimator,
        arch: Architecture,
        sweep_value: f64,
        metric: &str,
    ) -> Option<f64> {
        self.aggregate(estimator, arch, sweep_value, metric)
            .map(|a| a.mean)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

struct PointContext<'a> {
    scenario: &'a Scenario,
    link: &'a LinkContext,
    sweep_index: usize,
    sweep_value: f64,
    noise_var: f64,
    trial: usize,
}

impl PointContext<'_> {
    fn cells(&self) -> impl Iterator<Item = (Estimator, Architecture)> + '_ {
        self.scenario.estimators.iter().flat_map(move |&e| {
            self.scenario
                .architectures
                .iter()
                .filter(move |&&a| e.supports(a))
                .map(move |&a| (e, a))
        })
    }

    fn seed(&self, tag: u64, estimator: Estimator) -> ChaCha8Rng {
        let s = self.scenario;
        cell_rng(
            s.master_seed,
            &[
                tag,
                self.sweep_index as u64,
                self.trial as u64,
                estimator_index(estimator),
            ],
        )
    }

    fn record(&self, estimator: Estimator, architecture: Architecture, user: usize) -> TrialRecord {
        TrialRecord {
            estimator,
            architecture,
            sweep_index: self.sweep_index,
            sweep_value: self.sweep_value,
            trial: self.trial,
            user,
            eta_u: f64::NAN,
            eta_v: f64::NAN,
            se_dl: None,
            se_ul: None,
            ser: None,
            ser_symbols: None,
            ser_errors: None,
            rate_dl_mbps: None,
            rate_ul_mbps: None,
            wall_time_s: 0.0,
        }
    }
}

fn channel_stream(scenario: &Scenario, sweep_index: usize, trial: usize) -> ChaCha8Rng {
    // Channels are shared across SNR points; a user-count sweep redraws them per point.
    match scenario.sweep.axis {
        SweepAxis::SnrDb => cell_rng(scenario.master_seed, &[TAG_CHANNEL, trial as u64]),
        SweepAxis::Users => cell_rng(
            scenario.master_seed,
            &[TAG_CHANNEL, sweep_index as u64, trial as u64],
        ),
    }
}

fn eta(
    true_vec: &ChannelRealization,
    d_ms: &crate::linalg::CMat,
    d_bs: &crate::linalg::CMat,
) -> Result<(f64, f64)> {
    let c = &true_vec.svd_cache;
    Ok((
        correlation(c.u.column(0), d_ms.column(0))?,
        correlation(c.v.column(0), d_bs.column(0))?,
    ))
}

fn single_user_point(p: &PointContext<'_>) -> Result<Vec<TrialRecord>> {
    let s = p.scenario;
    let link = &p.link.config;
    let mut rng = channel_stream(s, p.sweep_index, p.trial);
    let mut params = s.channel.clone();
    params.distance_m = s.system.distance_m;
    let channel = generate_channel(&params, &link.ms, &link.bs, &mut rng)?;
    let (_, (data_bs, data_ms)) = s.powers();
    let mut out = Vec::new();
    for (estimator, arch) in p.cells() {
        let start = Instant::now();
        let mut rng = p.seed(TAG_ESTIMATION, estimator);
        let outcome = run_single_user_on(p.link, &channel, estimator, arch, p.noise_var, &mut rng)?;
        let (d_ms, d_bs) = (&outcome.d_ms.full_matrix, &outcome.d_bs.full_matrix);
        let mut rec = p.record(estimator, arch, 0);
        (rec.eta_u, rec.eta_v) = eta(&channel, d_ms, d_bs)?;
        if s.has_metric(MetricFamily::SpectralEfficiency) {
            let h = &channel.matrix;
            rec.se_dl = Some(se_single_user(
                h,
                d_ms,
                d_bs,
                data_bs,
                p.noise_var,
                LinkDirection::Downlink,
            )?);
            rec.se_ul = Some(se_single_user(
                h,
                d_ms,
                d_bs,
                data_ms,
                p.noise_var,
                LinkDirection::Uplink,
            )?);
        }
        if s.has_metric(MetricFamily::Ser) {
            let mut rng = p.seed(TAG_SER, estimator);
            let point = [(p.sweep_value, p.noise_var)];
            let sample = ser_differential(
                &channel.matrix,
                d_ms,
                d_bs,
                &point,
                s.ser.symbols_per_trial,
                data_bs,
                &mut rng,
            )?[0];
            rec.ser = Some(sample.ser);
            rec.ser_symbols = Some(sample.num_symbols);
            rec.ser_errors = Some(sample.num_errors);
        }
        rec.wall_time_s = start.elapsed().as_secs_f64();
        out.push(rec);
    }
    Ok(out)
}

fn multiuser_point(p: &PointContext<'_>) -> Result<Vec<TrialRecord>> {
    let s = p.scenario;
    let link = &p.link.config;
    let k_users = s.users_at(p.sweep_value);
    let m = link.streams;
    let [d0, d1] = s.system.distance_range_m;
    let mut rng = channel_stream(s, p.sweep_index, p.trial);
    let mut channels = Vec::with_capacity(k_users);
    for _ in 0..k_users {
        let params = ChannelParams {
            distance_m: rng.random_range(d0..=d1),
            ..s.channel.clone()
        };
        channels.push(generate_channel(&params, &link.ms, &link.bs, &mut rng)?);
    }
    let (_, (data_bs, data_ms)) = s.powers();
    let alpha = vec![s.pilot_alpha(); k_users];
    let pilots = make_pilots(k_users, m, link.probe_len_ms, &alpha, &mut rng)?;
    let matrices: Vec<_> = channels.iter().map(|c| c.matrix.clone()).collect();
    let bandwidth_mhz = s.system.bandwidth_hz / 1e6;
    let mut out = Vec::new();
    for (estimator, arch) in p.cells() {
        let start = Instant::now();
        let mut rng = p.seed(TAG_ESTIMATION, estimator);
        let outcome = run_multiuser(
            p.link,
            &channels,
            estimator,
            arch,
            s.multiuser.mode,
            &pilots,
            p.noise_var,
            &mut rng,
        )?;
        let d: Vec<_> = outcome.d.iter().map(|b| b.full_matrix.clone()).collect();
        let (dl, ul) = if s.has_metric(MetricFamily::Rate) {
            let dl = se_multiuser(
                &matrices,
                &d,
                &outcome.j,
                data_bs,
                data_ms,
                p.noise_var,
                LinkDirection::Downlink,
            )?;
            let ul = se_multiuser(
                &matrices,
                &d,
                &outcome.j,
                data_bs,
                data_ms,
                p.noise_var,
                LinkDirection::Uplink,
            )?;
            (Some(dl), Some(ul))
        } else {
            (None, None)
        };
        let elapsed = start.elapsed().as_secs_f64() / k_users as f64;
        for (k, channel) in channels.iter().enumerate() {
            let mut rec = p.record(estimator, arch, k);
            (rec.eta_u, rec.eta_v) = eta(channel, &d[k], &outcome.j[k])?;
            if let (Some(dl), Some(ul)) = (&dl, &ul) {
                rec.se_dl = Some(dl[k]);
                rec.se_ul = Some(ul[k]);
                rec.rate_dl_mbps = Some(dl[k] * bandwidth_mhz);
                rec.rate_ul_mbps = Some(ul[k] * bandwidth_mhz);
            }
            rec.wall_time_s = elapsed;
            out.push(rec);
        }
    }
    Ok(out)
}

type Extract = fn(&TrialRecord) -> Option<f64>;

fn metric_extractors(scenario: &Scenario) -> Vec<(&'static str, Extract)> {
    let mut out: Vec<(&'static str, Extract)> = Vec::new();
    if scenario.has_metric(MetricFamily::Correlation) {
        out.push(("eta_u", |r| Some(r.eta_u)));
        out.push(("eta_v", |r| Some(r.eta_v)));
    }
    if scenario.has_metric(MetricFamily::SpectralEfficiency)
        || scenario.has_metric(MetricFamily::Rate)
    {
        out.push(("se_dl", |r| r.se_dl));
        out.push(("se_ul", |r| r.se_ul));
    }
    if scenario.has_metric(MetricFamily::Ser) {
        out.push(("ser", |r| r.ser));
    }
    if scenario.has_metric(MetricFamily::Rate) {
        out.push(("rate_dl_mbps", |r| r.rate_dl_mbps));
        out.push(("rate_ul_mbps", |r| r.rate_ul_mbps));
    }
    out
}

/// Mean, 5/50/95 percentiles and a 1%-resolution quantile table per group.
pub fn aggregate(scenario: &Scenario, rows: &[TrialRecord]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    let extractors = metric_extractors(scenario);
    for (sweep_index, &sweep_value) in scenario.sweep.values.iter().enumerate() {
        for &estimator in &scenario.estimators {
            for &arch in &scenario.architectures {
                if !estimator.supports(arch) {
                    continue;
                }
                let group: Vec<&TrialRecord> = rows
                    .iter()
                    .filter(|r| {
                        r.sweep_index == sweep_index
                            && r.estimator == estimator
                            && r.architecture == arch
                    })
                    .collect();
                for &(metric, extract) in &extractors {
                    let mut values: Vec<f64> = group.iter().filter_map(|r| extract(r)).collect();
                    values.sort_by(f64::total_cmp);
                    let count = values.len();
                    let mean = if count == 0 {
                        f64::NAN
                    } else {
                        values.iter().sum::<f64>() / count as f64
                    };
                    out.push(AggregateRow {
                        estimator,
                        architecture: arch,
                        sweep_value,
                        metric,
                        count,
                        mean,
                        p5: quantile_sorted(&values, 0.05),
                        p50: quantile_sorted(&values, 0.50),
                        p95: quantile_sorted(&values, 0.95),
                        cdf: (0..CDF_POINTS)
                            .map(|i| quantile_sorted(&values, i as f64 / 100.0))
                            .collect(),
                    });
                }
            }
        }
    }
    out
}

/// Run every trial × sweep × estimator × architecture cell of a validated scenario.
pub fn run_scenario(scenario: &Scenario, options: RunOptions) -> Result<ResultTable> {
    scenario.validate()?;
    let link = LinkContext::new(scenario.link_config()?)?;
    let noise: Vec<f64> = scenario
        .sweep
        .values
        .iter()
        .map(|&v| match scenario.sweep.axis {
            SweepAxis::SnrDb => snr_to_noise_var(scenario, v),
            SweepAxis::Users => snr_to_noise_var(scenario, scenario.system.snr_db),
        })
        .collect();
    let tasks: Vec<(usize, usize)> = (0..scenario.sweep.values.len())
        .flat_map(|i| (0..scenario.trials).map(move |t| (i, t)))
        .collect();
    let work = |&(sweep_index, trial): &(usize, usize)| -> Result<Vec<TrialRecord>> {
        let p = PointContext {
            scenario,
            link: &link,
            sweep_index,
            sweep_value: scenario.sweep.values[sweep_index],
            noise_var: noise[sweep_index],
            trial,
        };
        match scenario.kind {
            ScenarioKind::SingleUser => single_user_point(&p),
            ScenarioKind::Multiuser => multiuser_point(&p),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let chunks: Vec<Vec<TrialRecord>> =
        pool.install(|| tasks.par_iter().map(work).collect::<Result<_>>())?;
    let mut rows: Vec<TrialRecord> = chunks.into_iter().flatten().collect();
    rows.sort_by_key(|r| {
        (
            r.sweep_index,
            estimator_index(r.estimator),
            r.architecture,
            r.trial,
            r.user,
        )
    });
    let aggregates = aggregate(scenario, &rows);
    Ok(ResultTable {
        scenario: scenario.name.clone(),
        sweep_axis: scenario.sweep.axis,
        sweep_values: scenario.sweep.values.clone(),
        noise_variances: noise,
        rows,
        aggregates,
    })
}
