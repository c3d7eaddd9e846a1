//! Scenario files: versioned TOML with unknown keys rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aml::{AmlOptions, SamplerPattern};
use crate::beamforming::{Architecture, GridLayout};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::ls::LsOptions;
use crate::protocols::{EstimationMode, Estimator, LinkConfig, TrackingOptions};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    SingleUser,
    Multiuser,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricFamily {
    Correlation,
    SpectralEfficiency,
    Ser,
    Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrMode {
    /// `σ² = 10^(−SNR/10)` against unit-power probes and unit data power.
    Direct,
    /// `σ² = k T W F` from the noise density, bandwidth and noise figure.
    LinkBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    SnrDb,
    Users,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub n_ms: usize,
    pub n_bs: usize,
    pub rf_ms: usize,
    pub rf_bs: usize,
    pub rf_grid: GridLayout,
    pub streams: usize,
    pub users: usize,
    pub probe_len_bs: usize,
    pub probe_len_ms: usize,
    pub snr_mode: SnrMode,
    /// Fixed SNR when the sweep axis is not SNR (direct mode).
    pub snr_db: f64,
    /// Per-entry probe power in direct mode (link-budget mode uses `P_T/N`).
    pub probe_entry_power: f64,
    pub precoded_phase_b: bool,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub tx_power_bs_w: f64,
    pub tx_power_ms_w: f64,
    pub distance_m: f64,
    pub distance_range_m: [f64; 2],
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_ms: 16,
            n_bs: 64,
            rf_ms: 8,
            rf_bs: 8,
            rf_grid: GridLayout::Printed,
            streams: 1,
            users: 1,
            probe_len_bs: 30,
            probe_len_ms: 30,
            snr_mode: SnrMode::Direct,
            snr_db: 0.0,
            probe_entry_power: 1.0,
            precoded_phase_b: true,
            bandwidth_hz: 500e6,
            carrier_hz: 73e9,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 6.0,
            tx_power_bs_w: 1.0,
            tx_power_ms_w: 0.1,
            distance_m: 50.0,
            distance_range_m: [5.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsConfig {
    pub grid_factor_ms: usize,
    pub grid_factor_bs: usize,
    pub regularization: f64,
    pub clip_negative: bool,
}

impl Default for LsConfig {
    fn default() -> Self {
        Self {
            grid_factor_ms: 8,
            grid_factor_bs: 4,
            regularization: 1e-6,
            clip_negative: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmlConfig {
    pub grid_factor: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub sampler: SamplerPattern,
    /// Sampled antennas per side; 0 means the RF chain count.
    pub chains_ms: usize,
    pub chains_bs: usize,
}

impl Default for AmlConfig {
    fn default() -> Self {
        let o = AmlOptions::default();
        Self {
            grid_factor: o.grid_factor,
            max_iters: o.max_iters,
            tol: o.tol,
            sampler: o.sampler,
            chains_ms: 0,
            chains_bs: 0,
        }
    }
}

impl AmlConfig {
    pub fn options(&self) -> AmlOptions {
        AmlOptions {
            grid_factor: self.grid_factor,
            max_iters: self.max_iters,
            tol: self.tol,
            sampler: self.sampler,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SerConfig {
    pub symbols_per_trial: u64,
}

impl Default for SerConfig {
    fn default() -> Self {
        Self {
            symbols_per_trial: 1000,
        }
    }
}

/// How the uplink pilot power `P_T,MS` maps onto unit-energy pilot rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotPower {
    /// Every pilot slot is sent at `P_T,MS/M` per stream: `α_k = P_MS·P_T,MS/M`.
    #[default]
    PerSlot,
    /// The whole pilot sequence carries `P_T,MS/M` per stream: `α_k = P_T,MS/M`.
    PerSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiuserConfig {
    pub mode: EstimationMode,
    pub pilot_power: PilotPower,
}

impl Default for MultiuserConfig {
    fn default() -> Self {
        Self {
            mode: EstimationMode::ZeroForcing,
            pilot_power: PilotPower::PerSlot,
        }
    }
}

impl Scenario {
    /// Uplink pilot coefficient `α_k`, identical for every user.
    pub fn pilot_alpha(&self) -> f64 {
        let (_, (_, data_ms)) = self.powers();
        let per_stream = data_ms / self.system.streams as f64;
        match self.multiuser.pilot_power {
            PilotPower::PerSlot => per_stream * self.system.probe_len_ms as f64,
            PilotPower::PerSequence => per_stream,
        }
    }
}

fn default_trials() -> usize {
    100
}

fn default_architectures() -> Vec<Architecture> {
    vec![Architecture::FullyDigital, Architecture::Hybrid]
}

fn default_metrics() -> Vec<MetricFamily> {
    vec![MetricFamily::Correlation]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub kind: ScenarioKind,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub estimators: Vec<Estimator>,
    #[serde(default = "default_architectures")]
    pub architectures: Vec<Architecture>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricFamily>,
    #[serde(default)]
    pub system: SystemConfig,
    pub sweep: Sweep,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub tracking: TrackingOptions,
    #[serde(default)]
    pub ls: LsConfig,
    #[serde(default)]
    pub aml: AmlConfig,
    #[serde(default)]
    pub ser: SerConfig,
    #[serde(default)]
    pub multiuser: MultiuserConfig,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn has_metric(&self, family: MetricFamily) -> bool {
        self.metrics.contains(&family)
    }

    /// Number of users at a sweep point.
    pub fn users_at(&self, sweep_value: f64) -> usize {
        match self.sweep.axis {
            SweepAxis::Users => sweep_value as usize,
            SweepAxis::SnrDb => self.system.users,
        }
    }

    /// Per-entry probe powers `(BS, MS)` and data powers `(BS, MS)` for the SNR mode.
    pub fn powers(&self) -> ((f64, f64), (f64, f64)) {
        let s = &self.system;
        match s.snr_mode {
            SnrMode::Direct => ((s.probe_entry_power, s.probe_entry_power), (1.0, 1.0)),
            SnrMode::LinkBudget => (
                (
                    s.tx_power_bs_w / s.n_bs as f64,
                    s.tx_power_ms_w / s.streams as f64,
                ),
                (s.tx_power_bs_w, s.tx_power_ms_w),
            ),
        }
    }

    pub fn link_config(&self) -> Result<LinkConfig> {
        let s = &self.system;
        let mut cfg = LinkConfig::new(s.n_ms, s.n_bs, s.rf_ms, s.rf_bs, s.streams)?;
        let ((probe_bs, probe_ms), _) = self.powers();
        cfg.grid_layout = s.rf_grid;
        cfg.probe_len_bs = s.probe_len_bs;
        cfg.probe_len_ms = s.probe_len_ms;
        cfg.probe_power_bs = probe_bs;
        cfg.probe_power_ms = probe_ms;
        cfg.precoded_phase_b = s.precoded_phase_b;
        cfg.tracking = self.tracking;
        cfg.ls = LsOptions {
            regularization: self.ls.regularization,
            clip_negative: self.ls.clip_negative,
        };
        cfg.ls_grid_factor_ms = self.ls.grid_factor_ms;
        cfg.ls_grid_factor_bs = self.ls.grid_factor_bs;
        cfg.aml = self.aml.options();
        cfg.aml_chains_ms = if self.aml.chains_ms == 0 {
            s.rf_ms
        } else {
            self.aml.chains_ms
        };
        cfg.aml_chains_bs = if self.aml.chains_bs == 0 {
            s.rf_bs
        } else {
            self.aml.chains_bs
        };
        Ok(cfg)
    }

    /// Reject the scenario before any trial runs, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::InvalidConfig(format!("{field}: {why}")));
        if self.version != SCHEMA_VERSION {
            return bad(
                "version",
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    self.version
                ),
            );
        }
        if self.name.trim().is_empty() {
            return bad("name", "must not be empty".into());
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return bad("estimators", "at least one estimator is required".into());
        }
        if self.architectures.is_empty() {
            return bad(
                "architectures",
                "at least one architecture is required".into(),
            );
        }
        if self.metrics.is_empty() {
            return bad("metrics", "at least one metric family is required".into());
        }
        if self.sweep.values.is_empty() || self.sweep.values.iter().any(|v| !v.is_finite()) {
            return bad(
                "sweep.values",
                "must be a nonempty list of finite numbers".into(),
            );
        }
        let s = &self.system;
        match (s.snr_mode, self.sweep.axis) {
            (SnrMode::LinkBudget, SweepAxis::SnrDb) => {
                return bad(
                    "sweep.axis",
                    "an SNR sweep needs snr_mode = \"direct\"".into(),
                );
            }
            (_, SweepAxis::Users) => {
                if self
                    .sweep
                    .values
                    .iter()
                    .any(|v| *v < 1.0 || v.fract() != 0.0)
                {
                    return bad(
                        "sweep.values",
                        "user counts must be positive integers".into(),
                    );
                }
                if self.kind == ScenarioKind::SingleUser {
                    return bad(
                        "sweep.axis",
                        "a user-count sweep needs kind = \"multiuser\"".into(),
                    );
                }
            }
            _ => {}
        }
        if !s.snr_db.is_finite() {
            return bad("system.snr_db", "must be finite".into());
        }
        for (field, v) in [
            ("system.bandwidth_hz", s.bandwidth_hz),
            ("system.tx_power_bs_w", s.tx_power_bs_w),
            ("system.tx_power_ms_w", s.tx_power_ms_w),
            ("system.distance_m", s.distance_m),
            ("system.probe_entry_power", s.probe_entry_power),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, format!("must be positive, got {v}"));
            }
        }
        let [d0, d1] = s.distance_range_m;
        if !(d0.is_finite() && d1.is_finite() && 0.0 < d0 && d0 <= d1) {
            return bad(
                "system.distance_range_m",
                "must be an ordered pair of positive distances".into(),
            );
        }
        self.channel
            .validate()
            .map_err(|e| Error::InvalidConfig(format!("channel: {e}")))?;
        let link = self.link_config()?;
        link.validate()?;
        match self.kind {
            ScenarioKind::SingleUser => {
                if self.has_metric(MetricFamily::Rate) {
                    return bad(
                        "metrics",
                        "\"rate\" is reported by multiuser scenarios only".into(),
                    );
                }
                if self.has_metric(MetricFamily::Ser) && s.streams != 1 {
                    return bad("metrics", "\"ser\" needs streams = 1".into());
                }
            }
            ScenarioKind::Multiuser => {
                if self.estimators.contains(&Estimator::Aml) {
                    return bad("estimators", "AML has no multiuser protocol".into());
                }
                if self.has_metric(MetricFamily::Ser)
                    || self.has_metric(MetricFamily::SpectralEfficiency)
                {
                    return bad(
                        "metrics",
                        "multiuser scenarios report \"rate\" and \"correlation\"".into(),
                    );
                }
                let users = self.sweep_users().max().unwrap_or(s.users);
                if users == 0 {
                    return bad("system.users", "must be at least 1".into());
                }
                if self.multiuser.mode == EstimationMode::ZeroForcing
                    && s.probe_len_ms < s.streams * users
                {
                    return bad(
                        "system.probe_len_ms",
                        format!(
                            "ZF needs at least M·K = {} pilot symbols",
                            s.streams * users
                        ),
                    );
                }
            }
        }
        Ok(())
    }

    fn sweep_users(&self) -> impl Iterator<Item = usize> + '_ {
        self.sweep.values.iter().map(|&v| self.users_at(v))
    }
}

/// Noise variance at a sweep point; the mode is recorded with the results.
pub fn snr_to_noise_var(scenario: &Scenario, snr_db: f64) -> f64 {
    let s = &scenario.system;
    match s.snr_mode {
        SnrMode::Direct => 10f64.powf(-snr_db / 10.0),
        SnrMode::LinkBudget => {
            let dbm = s.noise_psd_dbm_hz + 10.0 * s.bandwidth_hz.log10() + s.noise_figure_db;
            10f64.powf((dbm - 30.0) / 10.0)
        }
    }
}
