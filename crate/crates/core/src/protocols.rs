//! Two-phase TDD estimation protocols.
//!
//! Phase (a): the BS probes, the MS estimates its combiner from the received
//! stream. Phase (b): the MS transmits pilots through that combiner and the BS
//! estimates its own beamformer. Estimators only ever see received samples.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aml::{aml_sketch, aml_solve, make_sampler, AmlOptions, AmlProblem};
use crate::beamforming::{
    build_rf_combiner_with, composite_channel, Architecture, Beamformer, GridLayout,
};
use crate::channel::{generate_channel, ChannelParams, ChannelRealization, UlaGeometry};
use crate::error::{Error, Result};
use crate::linalg::{complex_normal_matrix, hermitian_eig_desc, CMat};
use crate::ls::{build_grid, sample_covariance, LsFitter, LsOptions};
use crate::tracking::{svd_init, OojaState, OojaVariant, PastdState, SubspaceTracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "PASTd")]
    Pastd,
    #[serde(rename = "OOJA")]
    Ooja,
    #[serde(rename = "LS")]
    Ls,
    #[serde(rename = "AML")]
    Aml,
    #[serde(rename = "PerfectCSI")]
    PerfectCsi,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Pastd,
        Estimator::Ooja,
        Estimator::Ls,
        Estimator::Aml,
        Estimator::PerfectCsi,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Pastd => "PASTd",
            Estimator::Ooja => "OOJA",
            Estimator::Ls => "LS",
            Estimator::Aml => "AML",
            Estimator::PerfectCsi => "PerfectCSI",
        }
    }

    /// AML and PerfectCSI produce fully-digital beamformers regardless of the RF stage.
    pub fn supports(self, arch: Architecture) -> bool {
        arch == Architecture::FullyDigital
            || !matches!(self, Estimator::Aml | Estimator::PerfectCsi)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct ProbeSignal {
    pub vectors: CMat,
    pub power_scale: f64,
}

impl ProbeSignal {
    /// I.i.d. equiprobable `±√power_scale` entries.
    pub fn antipodal<R: Rng + ?Sized>(
        dimension: usize,
        count: usize,
        power_scale: f64,
        rng: &mut R,
    ) -> Self {
        let a = power_scale.sqrt();
        let mut vectors = CMat::zeros(dimension, count);
        for j in 0..count {
            for i in 0..dimension {
                vectors[(i, j)] = Complex64::new(if rng.random::<bool>() { a } else { -a }, 0.0);
            }
        }
        Self {
            vectors,
            power_scale,
        }
    }

    pub fn all_ones(dimension: usize, count: usize, power_scale: f64) -> Self {
        Self {
            vectors: CMat::from_element(dimension, count, Complex64::new(power_scale.sqrt(), 0.0)),
            power_scale,
        }
    }

    pub fn dimension(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.ncols() == 0
    }
}

fn check_noise(noise_var: f64) -> Result<()> {
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be non-negative, got {noise_var}"
        )));
    }
    Ok(())
}

/// Receiver noise: drawn per antenna, then passed through the analog stage if any.
fn receiver_noise<R: Rng + ?Sized>(
    dim: usize,
    count: usize,
    noise_var: f64,
    rx_rf: Option<&CMat>,
    rng: &mut R,
) -> CMat {
    match rx_rf {
        Some(rf) => rf.adjoint() * complex_normal_matrix(rng, rf.nrows(), count, noise_var),
        None => complex_normal_matrix(rng, dim, count, noise_var),
    }
}

/// `r(n) = H s(n) + w(n)`, one column per probe vector.
pub fn phase_a_receive<R: Rng + ?Sized>(
    h: &CMat,
    probe: &ProbeSignal,
    noise_var: f64,
    rx_rf: Option<&CMat>,
    rng: &mut R,
) -> Result<CMat> {
    check_noise(noise_var)?;
    if probe.dimension() != h.ncols() {
        return Err(Error::InvalidArgument(format!(
            "probe dimension {} does not match {} transmit ports",
            probe.dimension(),
            h.ncols()
        )));
    }
    let noise = receiver_noise(h.nrows(), probe.len(), noise_var, rx_rf, rng);
    Ok(h * &probe.vectors + noise)
}

/// `r(n) = Hᴴ D_MS s(n) + w(n)`, one column per pilot vector.
pub fn phase_b_receive<R: Rng + ?Sized>(
    h: &CMat,
    d_ms: &CMat,
    pilots: &CMat,
    noise_var: f64,
    rx_rf: Option<&CMat>,
    rng: &mut R,
) -> Result<CMat> {
    check_noise(noise_var)?;
    if d_ms.nrows() != h.nrows() || d_ms.ncols() != pilots.nrows() {
        return Err(Error::InvalidArgument(
            "combiner and pilots do not conform with the channel".into(),
        ));
    }
    let noise = receiver_noise(h.ncols(), pilots.ncols(), noise_var, rx_rf, rng);
    Ok(h.adjoint() * (d_ms * pilots) + noise)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingOptions {
    pub forgetting: f64,
    pub ooja_step: f64,
    pub ooja_variant: OojaVariant,
    /// Scale the OOJA input to unit average power using the initialization samples.
    pub normalize_ooja_input: bool,
    pub init_samples: usize,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            forgetting: 0.995,
            ooja_step: 0.01,
            ooja_variant: OojaVariant::Principal,
            normalize_ooja_input: true,
            init_samples: 10,
        }
    }
}

/// Static description of one BS–MS link and the estimation protocol.
#[derive(Debug, Clone)]
pub struct LinkConfig {
    pub ms: UlaGeometry,
    pub bs: UlaGeometry,
    pub rf_ms: usize,
    pub rf_bs: usize,
    pub grid_layout: GridLayout,
    pub streams: usize,
    pub probe_len_bs: usize,
    pub probe_len_ms: usize,
    /// Per-entry power of the BS probe.
    pub probe_power_bs: f64,
    /// Per-entry power of the MS pilot.
    pub probe_power_ms: f64,
    /// Phase (b) pilots are sent through the phase-(a) combiner; otherwise unprecoded.
    pub precoded_phase_b: bool,
    pub tracking: TrackingOptions,
    pub ls: LsOptions,
    pub ls_grid_factor_ms: usize,
    pub ls_grid_factor_bs: usize,
    pub aml: AmlOptions,
    pub aml_chains_ms: usize,
    pub aml_chains_bs: usize,
}

impl LinkConfig {
    pub fn new(
        n_ms: usize,
        n_bs: usize,
        rf_ms: usize,
        rf_bs: usize,
        streams: usize,
    ) -> Result<Self> {
        Ok(Self {
            ms: UlaGeometry::new(n_ms)?,
            bs: UlaGeometry::new(n_bs)?,
            rf_ms,
            rf_bs,
            grid_layout: GridLayout::Printed,
            streams,
            probe_len_bs: 30,
            probe_len_ms: 30,
            probe_power_bs: 1.0,
            probe_power_ms: 1.0,
            precoded_phase_b: true,
            tracking: TrackingOptions::default(),
            ls: LsOptions::default(),
            ls_grid_factor_ms: 8,
            ls_grid_factor_bs: 4,
            aml: AmlOptions::default(),
            aml_chains_ms: rf_ms,
            aml_chains_bs: rf_bs,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.streams;
        if m == 0 {
            return Err(Error::InvalidConfig(
                "multiplexing order M must be at least 1".into(),
            ));
        }
        if self.rf_ms > self.ms.num_elements
            || self.rf_bs > self.bs.num_elements
            || self.rf_ms == 0
            || self.rf_bs == 0
        {
            return Err(Error::InvalidConfig(
                "RF chain counts must lie in [1, antennas]".into(),
            ));
        }
        if m > self.rf_ms || m > self.rf_bs {
            return Err(Error::InvalidConfig(format!(
                "M = {m} exceeds the RF chain count"
            )));
        }
        if self.probe_len_bs < m || self.probe_len_ms < m {
            return Err(Error::InvalidConfig(
                "probe lengths must be at least M".into(),
            ));
        }
        if self.tracking.init_samples < m {
            return Err(Error::InvalidConfig(
                "initialization needs at least M samples".into(),
            ));
        }
        let t = &self.tracking;
        if !(t.forgetting > 0.0 && t.forgetting <= 1.0)
            || !(t.ooja_step > 0.0 && t.ooja_step.is_finite())
        {
            return Err(Error::InvalidConfig(
                "forgetting must lie in (0, 1] and the OOJA step be positive".into(),
            ));
        }
        if !(self.probe_power_bs > 0.0 && self.probe_power_ms > 0.0) {
            return Err(Error::InvalidConfig("probe powers must be positive".into()));
        }
        if self.aml_chains_ms == 0
            || self.aml_chains_bs == 0
            || self.aml_chains_ms > self.ms.num_elements
            || self.aml_chains_bs > self.bs.num_elements
        {
            return Err(Error::InvalidConfig(
                "AML sampler sizes must lie in [1, antennas]".into(),
            ));
        }
        self.aml.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Ms,
    Bs,
}

/// Link configuration plus everything derived from it once: RF stages and LS fitters.
#[derive(Debug)]
pub struct LinkContext {
    pub config: LinkConfig,
    pub rf_ms: CMat,
    pub rf_bs: CMat,
    ls_fitters: [OnceLock<std::result::Result<LsFitter, String>>; 4],
}

impl LinkContext {
    pub fn new(config: LinkConfig) -> Result<Self> {
        config.validate()?;
        let rf_ms = build_rf_combiner_with(&config.ms, config.rf_ms, config.grid_layout)?;
        let rf_bs = build_rf_combiner_with(&config.bs, config.rf_bs, config.grid_layout)?;
        Ok(Self {
            config,
            rf_ms,
            rf_bs,
            ls_fitters: Default::default(),
        })
    }

    /// Replace the analog stages, e.g. with identities to exercise the hybrid path.
    pub fn with_rf(mut self, rf_ms: CMat, rf_bs: CMat) -> Result<Self> {
        if rf_ms.nrows() != self.config.ms.num_elements
            || rf_bs.nrows() != self.config.bs.num_elements
        {
            return Err(Error::InvalidArgument(
                "RF stages must have one row per antenna".into(),
            ));
        }
        self.rf_ms = rf_ms;
        self.rf_bs = rf_bs;
        self.ls_fitters = Default::default();
        Ok(self)
    }

    pub fn rf(&self, side: Side) -> &CMat {
        match side {
            Side::Ms => &self.rf_ms,
            Side::Bs => &self.rf_bs,
        }
    }

    pub fn ls_fitter(&self, side: Side, arch: Architecture) -> Result<&LsFitter> {
        let slot = match (side, arch) {
            (Side::Ms, Architecture::FullyDigital) => 0,
            (Side::Bs, Architecture::FullyDigital) => 1,
            (Side::Ms, Architecture::Hybrid) => 2,
            (Side::Bs, Architecture::Hybrid) => 3,
        };
        let built = self.ls_fitters[slot].get_or_init(|| {
            let (geom, factor) = match side {
                Side::Ms => (&self.config.ms, self.config.ls_grid_factor_ms),
                Side::Bs => (&self.config.bs, self.config.ls_grid_factor_bs),
            };
            let projection = (arch == Architecture::Hybrid).then(|| self.rf(side));
            build_grid(geom, factor * geom.num_elements, projection)
                .and_then(|grid| LsFitter::new(grid, self.config.ls))
                .map_err(|e| e.to_string())
        });
        built.as_ref().map_err(|e| Error::IllPosedGrid(e.clone()))
    }

    /// Dominant-subspace estimate from a block of received samples (one per column).
    pub fn estimate(
        &self,
        estimator: Estimator,
        side: Side,
        arch: Architecture,
        samples: &CMat,
    ) -> Result<CMat> {
        let m = self.config.streams;
        let t = &self.config.tracking;
        match estimator {
            Estimator::Pastd | Estimator::Ooja => {
                let n_init = t.init_samples.min(samples.ncols());
                let init = svd_init(&samples.columns(0, n_init).into_owned(), m)?;
                let rest = samples
                    .columns(n_init, samples.ncols() - n_init)
                    .into_owned();
                let estimate = if estimator == Estimator::Pastd {
                    let mut st = PastdState::from_init(&init, t.forgetting)?;
                    st.update_all(&rest)?;
                    st.finalize()
                } else {
                    let mut st = OojaState::from_init(&init, t.ooja_step, t.ooja_variant)?;
                    if t.normalize_ooja_input {
                        st = st.normalized_to(&init);
                    }
                    st.update_all(&rest)?;
                    st.finalize()
                };
                Ok(estimate.basis)
            }
            Estimator::Ls => {
                let e = sample_covariance(samples)?;
                Ok(self.ls_fitter(side, arch)?.fit(&e, m)?.basis)
            }
            Estimator::Aml | Estimator::PerfectCsi => Err(Error::UnsupportedConfig(format!(
                "{estimator} does not estimate from a sample stream"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SingleUserOutcome {
    pub d_ms: Beamformer,
    pub d_bs: Beamformer,
}

fn wrap(arch: Architecture, rf: &CMat, bb: CMat) -> Result<Beamformer> {
    match arch {
        Architecture::FullyDigital => Ok(Beamformer::fully_digital(bb)),
        Architecture::Hybrid => Beamformer::hybrid(rf.clone(), bb),
    }
}

fn perfect_csi(channel: &ChannelRealization, m: usize) -> SingleUserOutcome {
    let c = &channel.svd_cache;
    SingleUserOutcome {
        d_ms: Beamformer::fully_digital(c.u.columns(0, m).into_owned()),
        d_bs: Beamformer::fully_digital(c.v.columns(0, m).into_owned()),
    }
}

/// Phase-(b) pilot block: precoded `M`-stream pilots, or unprecoded per-antenna pilots.
fn phase_b_pilots<R: Rng + ?Sized>(
    ctx: &LinkContext,
    d_ms_bb: &CMat,
    ones: bool,
    rng: &mut R,
) -> (CMat, CMat) {
    let cfg = &ctx.config;
    let (dim, precoder) = if cfg.precoded_phase_b {
        (d_ms_bb.ncols(), d_ms_bb.clone())
    } else {
        (
            d_ms_bb.nrows(),
            CMat::identity(d_ms_bb.nrows(), d_ms_bb.nrows()),
        )
    };
    let pilots = if ones {
        ProbeSignal::all_ones(dim, cfg.probe_len_ms, cfg.probe_power_ms)
    } else {
        ProbeSignal::antipodal(dim, cfg.probe_len_ms, cfg.probe_power_ms, rng)
    };
    (precoder, pilots.vectors)
}

fn run_aml<R: Rng + ?Sized>(
    ctx: &LinkContext,
    channel: &ChannelRealization,
    noise_var: f64,
    rng: &mut R,
) -> Result<SingleUserOutcome> {
    let cfg = &ctx.config;
    let h = &channel.matrix;
    let opts = &cfg.aml;
    let solve = |geom: &UlaGeometry, chains: usize, received: &CMat, rng: &mut R| -> Result<CMat> {
        let sampler = make_sampler(geom.num_elements, chains, opts.sampler, rng)?;
        let sketches = aml_sketch(received, &sampler);
        let problem = AmlProblem::new(
            geom,
            sampler,
            opts.grid_factor * geom.num_elements,
            sketches,
            noise_var,
        )?;
        Ok(aml_solve(&problem, opts.max_iters, opts.tol, cfg.streams)?.subspace)
    };
    let probe = ProbeSignal::all_ones(h.ncols(), cfg.probe_len_bs, cfg.probe_power_bs);
    let r_ms = phase_a_receive(h, &probe, noise_var, None, rng)?;
    let d_ms = solve(&cfg.ms, cfg.aml_chains_ms, &r_ms, rng)?;
    let (precoder, pilots) = phase_b_pilots(ctx, &d_ms, true, rng);
    let r_bs = phase_b_receive(h, &precoder, &pilots, noise_var, None, rng)?;
    let d_bs = solve(&cfg.bs, cfg.aml_chains_bs, &r_bs, rng)?;
    Ok(SingleUserOutcome {
        d_ms: Beamformer::fully_digital(d_ms),
        d_bs: Beamformer::fully_digital(d_bs),
    })
}

/// Run both protocol phases on a given channel.
pub fn run_single_user_on<R: Rng + ?Sized>(
    ctx: &LinkContext,
    channel: &ChannelRealization,
    estimator: Estimator,
    arch: Architecture,
    noise_var: f64,
    rng: &mut R,
) -> Result<SingleUserOutcome> {
    check_noise(noise_var)?;
    let cfg = &ctx.config;
    if channel.shape() != (cfg.ms.num_elements, cfg.bs.num_elements) {
        return Err(Error::InvalidArgument(
            "channel shape does not match the link geometry".into(),
        ));
    }
    if !estimator.supports(arch) {
        return Err(Error::UnsupportedConfig(format!(
            "{estimator} has no {} variant",
            arch.label()
        )));
    }
    match estimator {
        Estimator::PerfectCsi => return Ok(perfect_csi(channel, cfg.streams)),
        Estimator::Aml => return run_aml(ctx, channel, noise_var, rng),
        _ => {}
    }
    let (h_eff, rx_ms, rx_bs) = match arch {
        Architecture::FullyDigital => (channel.matrix.clone(), None, None),
        Architecture::Hybrid => (
            composite_channel(&channel.matrix, &ctx.rf_ms, &ctx.rf_bs)?,
            Some(&ctx.rf_ms),
            Some(&ctx.rf_bs),
        ),
    };
    let probe = ProbeSignal::antipodal(h_eff.ncols(), cfg.probe_len_bs, cfg.probe_power_bs, rng);
    let r_ms = phase_a_receive(&h_eff, &probe, noise_var, rx_ms, rng)?;
    let d_ms_bb = ctx.estimate(estimator, Side::Ms, arch, &r_ms)?;

    let (precoder, pilots) = phase_b_pilots(ctx, &d_ms_bb, false, rng);
    let r_bs = phase_b_receive(&h_eff, &precoder, &pilots, noise_var, rx_bs, rng)?;
    let d_bs_bb = ctx.estimate(estimator, Side::Bs, arch, &r_bs)?;

    Ok(SingleUserOutcome {
        d_ms: wrap(arch, &ctx.rf_ms, d_ms_bb)?,
        d_bs: wrap(arch, &ctx.rf_bs, d_bs_bb)?,
    })
}

/// Draw a channel, then run both protocol phases on it.
pub fn run_single_user<R: Rng + ?Sized>(
    ctx: &LinkContext,
    params: &ChannelParams,
    estimator: Estimator,
    arch: Architecture,
    noise_var: f64,
    rng: &mut R,
) -> Result<(SingleUserOutcome, ChannelRealization)> {
    let channel = generate_channel(params, &ctx.config.ms, &ctx.config.bs, rng)?;
    let outcome = run_single_user_on(ctx, &channel, estimator, arch, noise_var, rng)?;
    Ok((outcome, channel))
}

#[derive(Debug, Clone)]
pub struct PilotSet {
    pub matrices: Vec<CMat>,
    pub zf_duals: Option<Vec<CMat>>,
    pub powers: Vec<f64>,
}

const PILOT_RETRIES: usize = 100;

impl PilotSet {
    /// Wrap explicit pilot matrices, computing ZF duals when the stack is wide enough.
    pub fn from_matrices(matrices: Vec<CMat>, powers: Vec<f64>) -> Result<Self> {
        if matrices.is_empty() || matrices.len() != powers.len() {
            return Err(Error::InvalidArgument(
                "one pilot matrix and power per user is required".into(),
            ));
        }
        let (m, p) = matrices[0].shape();
        if matrices.iter().any(|x| x.shape() != (m, p)) {
            return Err(Error::InvalidArgument(
                "pilot matrices must share their shape".into(),
            ));
        }
        let zf_duals = if p >= m * matrices.len() {
            Some(zf_duals(&matrices)?)
        } else {
            None
        };
        Ok(Self {
            matrices,
            zf_duals,
            powers,
        })
    }

    pub fn users(&self) -> usize {
        self.matrices.len()
    }

    pub fn streams(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.matrices[0].ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn stack(matrices: &[CMat]) -> CMat {
    let (m, p) = matrices[0].shape();
    let mut s = CMat::zeros(m * matrices.len(), p);
    for (k, x) in matrices.iter().enumerate() {
        s.rows_mut(k * m, m).copy_from(x);
    }
    s
}

/// Right inverse `Sᴴ(SSᴴ)⁻¹` of the stacked pilots, split per user.
fn zf_duals(matrices: &[CMat]) -> Result<Vec<CMat>> {
    let m = matrices[0].nrows();
    let s = stack(matrices);
    let gram = &s * s.adjoint();
    let (eig, _) = hermitian_eig_desc(&gram);
    if eig[eig.len() - 1] < 1e-8 * eig[0] {
        return Err(Error::PilotGeneration(
            "stacked pilot matrix is nearly rank deficient".into(),
        ));
    }
    let inv = gram
        .cholesky()
        .ok_or_else(|| Error::PilotGeneration("stacked pilot matrix is rank deficient".into()))?
        .inverse();
    let right = s.adjoint() * inv;
    Ok((0..matrices.len())
        .map(|k| right.columns(k * m, m).into_owned())
        .collect())
}

/// Random binary pilots with orthonormal rows per user.
pub fn make_pilots<R: Rng + ?Sized>(
    k: usize,
    m: usize,
    p: usize,
    powers: &[f64],
    rng: &mut R,
) -> Result<PilotSet> {
    if m == 0 || k == 0 || p < m {
        return Err(Error::InvalidConfig(format!(
            "cannot build {m} orthogonal pilot rows of length {p}"
        )));
    }
    if powers.len() != k {
        return Err(Error::InvalidArgument(
            "one power per user is required".into(),
        ));
    }
    let scale = 1.0 / (p as f64).sqrt();
    for _ in 0..PILOT_RETRIES {
        let mut matrices = Vec::with_capacity(k);
        for _ in 0..k {
            matrices.push(orthonormal_binary_rows(m, p, scale, rng)?);
        }
        match PilotSet::from_matrices(matrices, powers.to_vec()) {
            Ok(set) => return Ok(set),
            Err(Error::PilotGeneration(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::PilotGeneration(format!(
        "no full-rank pilot stack after {PILOT_RETRIES} draws"
    )))
}

fn orthonormal_binary_rows<R: Rng + ?Sized>(
    m: usize,
    p: usize,
    scale: f64,
    rng: &mut R,
) -> Result<CMat> {
    'draw: for _ in 0..PILOT_RETRIES {
        let mut rows = CMat::from_fn(m, p, |_, _| {
            Complex64::new(if rng.random::<bool>() { scale } else { -scale }, 0.0)
        });
        for i in 0..m {
            for j in 0..i {
                let proj: Complex64 = (0..p).map(|n| rows[(j, n)].conj() * rows[(i, n)]).sum();
                for n in 0..p {
                    let v = rows[(j, n)];
                    rows[(i, n)] -= proj * v;
                }
            }
            let norm = rows.row(i).norm();
            if norm < 1e-8 {
                continue 'draw;
            }
            rows.row_mut(i).unscale_mut(norm);
        }
        return Ok(rows);
    }
    Err(Error::PilotGeneration(
        "rows stayed linearly dependent".into(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimationMode {
    #[serde(rename = "PM")]
    PilotMatched,
    #[serde(rename = "ZF")]
    ZeroForcing,
}

#[derive(Debug, Clone)]
pub struct EstimatedDirections {
    /// Per-user scaled right-vector estimates `J_k`.
    pub j: Vec<CMat>,
    /// Per-user combiners used during the uplink pilots.
    pub d: Vec<CMat>,
}

/// `Y = Σ_k √α_k H_kᴴ D_k Φ_k + Z`, then PM (`Y Φ_kᴴ`) or ZF (`Y Z_k`) per user.
pub fn run_multiuser_phase_b<R: Rng + ?Sized>(
    channels: &[CMat],
    combiners: &[CMat],
    pilots: &PilotSet,
    mode: EstimationMode,
    noise_var: f64,
    rx_rf: Option<&CMat>,
    rng: &mut R,
) -> Result<EstimatedDirections> {
    check_noise(noise_var)?;
    let k_users = pilots.users();
    if channels.len() != k_users || combiners.len() != k_users {
        return Err(Error::InvalidArgument(
            "one channel and combiner per pilot user is required".into(),
        ));
    }
    if mode == EstimationMode::ZeroForcing && pilots.zf_duals.is_none() {
        return Err(Error::InvalidConfig(format!(
            "ZF needs P_MS ≥ M K = {}, got {}",
            pilots.streams() * k_users,
            pilots.len()
        )));
    }
    let n_rx = channels[0].ncols();
    let mut y = receiver_noise(n_rx, pilots.len(), noise_var, rx_rf, rng);
    for k in 0..k_users {
        let amp = Complex64::new(pilots.powers[k].sqrt(), 0.0);
        y += channels[k].adjoint() * (&combiners[k] * amp) * &pilots.matrices[k];
    }
    let j = match mode {
        EstimationMode::PilotMatched => pilots
            .matrices
            .iter()
            .map(|phi| &y * phi.adjoint())
            .collect(),
        EstimationMode::ZeroForcing => pilots
            .zf_duals
            .as_ref()
            .expect("checked above")
            .iter()
            .map(|z| &y * z)
            .collect(),
    };
    Ok(EstimatedDirections {
        j,
        d: combiners.to_vec(),
    })
}

#[derive(Debug, Clone)]
pub struct MultiuserOutcome {
    pub d: Vec<Beamformer>,
    /// Scaled right-vector estimates mapped to the antenna domain.
    pub j: Vec<CMat>,
}

/// Phase (a) for every user from one broadcast probe, then the joint uplink phase (b).
#[allow(clippy::too_many_arguments)]
pub fn run_multiuser<R: Rng + ?Sized>(
    ctx: &LinkContext,
    channels: &[ChannelRealization],
    estimator: Estimator,
    arch: Architecture,
    mode: EstimationMode,
    pilots: &PilotSet,
    noise_var: f64,
    rng: &mut R,
) -> Result<MultiuserOutcome> {
    check_noise(noise_var)?;
    let m = ctx.config.streams;
    if pilots.streams() != m || pilots.users() != channels.len() {
        return Err(Error::InvalidArgument(
            "pilot set does not match users and streams".into(),
        ));
    }
    match estimator {
        Estimator::PerfectCsi => {
            let d = channels
                .iter()
                .map(|c| Beamformer::fully_digital(c.svd_cache.u.columns(0, m).into_owned()));
            let j = channels.iter().map(|c| {
                let mut v = c.svd_cache.v.columns(0, m).into_owned();
                for (i, mut col) in v.column_iter_mut().enumerate() {
                    col.scale_mut(c.svd_cache.singular_values[i]);
                }
                v
            });
            return Ok(MultiuserOutcome {
                d: d.collect(),
                j: j.collect(),
            });
        }
        Estimator::Aml => {
            return Err(Error::UnsupportedConfig(
                "AML has no multiuser protocol".into(),
            ))
        }
        _ => {}
    }
    if !estimator.supports(arch) {
        return Err(Error::UnsupportedConfig(format!(
            "{estimator} has no {} variant",
            arch.label()
        )));
    }
    let h_eff: Vec<CMat> = match arch {
        Architecture::FullyDigital => channels.iter().map(|c| c.matrix.clone()).collect(),
        Architecture::Hybrid => channels
            .iter()
            .map(|c| composite_channel(&c.matrix, &ctx.rf_ms, &ctx.rf_bs))
            .collect::<Result<_>>()?,
    };
    let (rx_ms, rx_bs) = match arch {
        Architecture::FullyDigital => (None, None),
        Architecture::Hybrid => (Some(&ctx.rf_ms), Some(&ctx.rf_bs)),
    };
    let probe = ProbeSignal::antipodal(
        h_eff[0].ncols(),
        ctx.config.probe_len_bs,
        ctx.config.probe_power_bs,
        rng,
    );
    let mut combiners = Vec::with_capacity(channels.len());
    for h in &h_eff {
        let r = phase_a_receive(h, &probe, noise_var, rx_ms, rng)?;
        combiners.push(ctx.estimate(estimator, Side::Ms, arch, &r)?);
    }
    let est = run_multiuser_phase_b(&h_eff, &combiners, pilots, mode, noise_var, rx_bs, rng)?;
    let d = combiners
        .into_iter()
        .map(|bb| wrap(arch, &ctx.rf_ms, bb))
        .collect::<Result<_>>()?;
    let j = match arch {
        Architecture::FullyDigital => est.j,
        Architecture::Hybrid => est.j.iter().map(|jk| &ctx.rf_bs * jk).collect(),
    };
    Ok(MultiuserOutcome { d, j })
}

/// Identity analog stages, for checking that hybrid code paths reduce to fully-digital ones.
pub fn identity_rf(config: &LinkConfig) -> (CMat, CMat) {
    let n_ms = config.ms.num_elements;
    let n_bs = config.bs.num_elements;
    (CMat::identity(n_ms, n_ms), CMat::identity(n_bs, n_bs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::dominant_pair;
    use crate::linalg::{CVec, ONE, ZERO};
    use crate::metrics::correlation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rank_one(n_ms: usize, n_bs: usize) -> ChannelRealization {
        let params = ChannelParams {
            rays_per_cluster: vec![1],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        generate_channel(
            &params,
            &UlaGeometry::new(n_ms).unwrap(),
            &UlaGeometry::new(n_bs).unwrap(),
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_unit_probe_reads_columns() {
        let ch = rank_one(4, 6);
        let probe = ProbeSignal {
            vectors: CMat::identity(6, 6),
            power_scale: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = phase_a_receive(&ch.matrix, &probe, 0.0, None, &mut rng).unwrap();
        assert_eq!(r, ch.matrix);
        assert!(phase_a_receive(&ch.matrix, &probe, -1.0, None, &mut rng).is_err());
    }

    #[test]
    fn phase_b_with_true_combiner_returns_scaled_right_vector() {
        let ch = rank_one(4, 8);
        let (u, v, s) = dominant_pair(&ch);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pilots = CMat::from_element(1, 1, ONE);
        let r = phase_b_receive(
            &ch.matrix,
            &CMat::from_columns(&[u]),
            &pilots,
            0.0,
            None,
            &mut rng,
        )
        .unwrap();
        let expected: CVec = v * Complex64::new(s, 0.0);
        assert!((r.column(0) - expected).norm() < 1e-10 * s);
        let silent =
            phase_b_receive(&ch.matrix, &CMat::zeros(4, 1), &pilots, 0.0, None, &mut rng).unwrap();
        assert!(silent.iter().all(|x| *x == ZERO));
    }

    #[test]
    fn probe_covariance_is_close_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probe = ProbeSignal::antipodal(4, 20_000, 1.0, &mut rng);
        let cov = &probe.vectors * probe.vectors.adjoint() / Complex64::new(20_000.0, 0.0);
        assert!((cov - CMat::identity(4, 4)).norm() < 0.05);
    }

    #[test]
    fn noiseless_pastd_recovers_rank_one_link() {
        let ch = rank_one(16, 64);
        let mut cfg = LinkConfig::new(16, 64, 8, 8, 1).unwrap();
        cfg.probe_len_bs = 200;
        cfg.probe_len_ms = 200;
        let ctx = LinkContext::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = run_single_user_on(
            &ctx,
            &ch,
            Estimator::Pastd,
            Architecture::FullyDigital,
            0.0,
            &mut rng,
        )
        .unwrap();
        let (u, v, _) = dominant_pair(&ch);
        assert!(correlation(u.as_view(), out.d_ms.full_matrix.column(0)).unwrap() >= 0.999);
        assert!(correlation(v.as_view(), out.d_bs.full_matrix.column(0)).unwrap() >= 0.999);
    }

    #[test]
    fn single_user_pilots() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = make_pilots(1, 1, 8, &[1.0], &mut rng).unwrap();
        let phi = &set.matrices[0];
        assert!(((phi * phi.adjoint())[(0, 0)].re - 1.0).abs() < 1e-12);
        let z = &set.zf_duals.as_ref().unwrap()[0];
        assert!((z - phi.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn two_user_orthogonal_pilots_have_hermitian_duals() {
        let s = 0.5f64.sqrt();
        let a = CMat::from_row_slice(1, 2, &[Complex64::new(s, 0.0), Complex64::new(s, 0.0)]);
        let b = CMat::from_row_slice(1, 2, &[Complex64::new(s, 0.0), Complex64::new(-s, 0.0)]);
        let set = PilotSet::from_matrices(vec![a.clone(), b.clone()], vec![1.0, 1.0]).unwrap();
        let duals = set.zf_duals.unwrap();
        assert!((&duals[0] - a.adjoint()).norm() < 1e-12);
        assert!((&duals[1] - b.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn zf_requires_long_pilots() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let set = make_pilots(3, 1, 2, &[1.0; 3], &mut rng).unwrap();
        assert!(set.zf_duals.is_none());
        let h = vec![CMat::zeros(2, 4); 3];
        let d = vec![CMat::zeros(2, 1); 3];
        let r = run_multiuser_phase_b(
            &h,
            &d,
            &set,
            EstimationMode::ZeroForcing,
            0.1,
            None,
            &mut rng,
        );
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn single_user_zf_is_exact() {
        let ch = rank_one(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set = make_pilots(1, 1, 16, &[0.3], &mut rng).unwrap();
        let d = CMat::from_columns(&[ch.svd_cache.u.column(0).into_owned()]);
        let est = run_multiuser_phase_b(
            std::slice::from_ref(&ch.matrix),
            std::slice::from_ref(&d),
            &set,
            EstimationMode::ZeroForcing,
            0.0,
            None,
            &mut rng,
        )
        .unwrap();
        let expected = ch.matrix.adjoint() * &d * Complex64::new(0.3f64.sqrt(), 0.0);
        assert!((&est.j[0] - expected).norm() < 1e-10);
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.label().parse::<Estimator>().unwrap(), e);
        }
        assert!("nope".parse::<Estimator>().is_err());
    }
}
