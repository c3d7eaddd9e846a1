//! Independent reference computations shared by the oracle tests and the
//! acceptance report. Each check returns the measured quantity so callers can
//! assert on it or print it.

#![allow(dead_code)]

use mmwave_subspace::aml::{aml_solve, fixed_point_residual, grad_f1, AmlProblem};
use mmwave_subspace::beamforming::Architecture;
use mmwave_subspace::channel::{generate_channel, ChannelParams, UlaGeometry};
use mmwave_subspace::linalg::{complex_normal_matrix, CMat, CVec};
use mmwave_subspace::ls::{build_grid, LsFitter, LsOptions};
use mmwave_subspace::metrics::correlation;
use mmwave_subspace::protocols::{
    identity_rf, make_pilots, run_multiuser, run_single_user_on, EstimationMode, Estimator,
    LinkConfig, LinkContext,
};
use mmwave_subspace::tracking::{svd_init, OojaState, OojaVariant, PastdState, SubspaceTracker};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    let v = complex_normal_matrix(rng, n, 1, 1.0).column(0).into_owned();
    let norm = v.norm();
    v / c(norm)
}

/// Noiseless stream `r(n) = c(n)·u⋆` in dimension `n`.
fn rank_one_stream(rng: &mut ChaCha8Rng, n: usize, steps: usize) -> (CVec, CMat) {
    let u = random_unit(rng, n);
    let coeffs = complex_normal_matrix(rng, 1, steps, 1.0);
    (u.clone(), &u * coeffs)
}

/// Correlation reached by PASTd (β = 1) after 200 noiseless rank-one samples.
pub fn pastd_rank_one_correlation(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let (u, samples) = rank_one_stream(&mut rng, 16, 200);
    // Start from a random direction so convergence is exercised, not inherited.
    let start = CMat::from_columns(&[random_unit(&mut rng, 16)]);
    let mut st = PastdState::new(start, vec![1.0], 1.0).unwrap();
    st.update_all(&samples).unwrap();
    correlation(u.as_view(), st.finalize().basis.column(0)).unwrap()
}

/// OOJA on a noiseless rank-one stream: final correlation and the largest
/// `‖WᴴW − I‖` seen over 500 steps.
pub fn ooja_rank_one(seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let (u, samples) = rank_one_stream(&mut rng, 16, 500);
    let start = CMat::from_columns(&[random_unit(&mut rng, 16)]);
    let mut st = OojaState::new(start, 0.05, OojaVariant::Principal).unwrap();
    let mut drift = st.orthonormality_error();
    for col in samples.column_iter() {
        st.update(col.as_view()).unwrap();
        drift = drift.max(st.orthonormality_error());
    }
    (
        correlation(u.as_view(), st.finalize().basis.column(0)).unwrap(),
        drift,
    )
}

/// OOJA orthonormality drift with `M = 3` on a noisy full-rank stream.
pub fn ooja_drift_multistream(seed: u64, steps: usize) -> f64 {
    let mut rng = rng(seed);
    let samples = complex_normal_matrix(&mut rng, 16, steps, 1.0);
    let init = svd_init(&samples.columns(0, 10).into_owned(), 3).unwrap();
    let mut st = OojaState::from_init(&init, 0.01, OojaVariant::Principal)
        .unwrap()
        .normalized_to(&init);
    let mut drift = st.orthonormality_error();
    for col in samples.column_iter().skip(10) {
        st.update(col.as_view()).unwrap();
        drift = drift.max(st.orthonormality_error());
    }
    drift
}

/// Random Hermitian positive semidefinite matrix.
pub fn random_covariance(rng: &mut ChaCha8Rng, n: usize, samples: usize) -> CMat {
    let r = complex_normal_matrix(rng, n, samples, 1.0);
    &r * r.adjoint() / c(samples as f64)
}

/// Brute-force regularized LS over the real vectorization of `E − Σ s_i g_i g_iᴴ`,
/// solved by SVD of the augmented system `[A; √ε I] s ≈ [b; 0]`.
pub fn brute_force_ls(steering: &CMat, e: &CMat, regularization: f64) -> DVector<f64> {
    let (n, l) = steering.shape();
    let rows = 2 * n * n;
    let mut a = DMatrix::<f64>::zeros(rows + l, l);
    for i in 0..l {
        let g = steering.column(i);
        let atom = g * g.adjoint();
        for (k, z) in atom.iter().enumerate() {
            a[(k, i)] = z.re;
            a[(n * n + k, i)] = z.im;
        }
    }
    let mut b = DVector::<f64>::zeros(rows + l);
    for (k, z) in e.iter().enumerate() {
        b[k] = z.re;
        b[n * n + k] = z.im;
    }
    let top = a.rows(0, rows).into_owned();
    let gram_trace: f64 = (0..l).map(|i| top.column(i).norm_squared()).sum();
    let eps = regularization * gram_trace / l as f64;
    for i in 0..l {
        a[(rows + i, i)] = eps.sqrt();
    }
    a.svd(true, true).solve(&b, 1e-300).unwrap()
}

/// Largest coefficient discrepancy between the fitter and the brute-force oracle (N = 4, L = 8).
pub fn ls_vs_brute_force(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let geom = UlaGeometry::new(4).unwrap();
    let fitter = LsFitter::new(build_grid(&geom, 8, None).unwrap(), LsOptions::default()).unwrap();
    let e = random_covariance(&mut rng, 4, 6);
    let fast = fitter.coefficients(&e).unwrap();
    let oracle = brute_force_ls(
        &fitter.grid.steering,
        &e,
        LsOptions::default().regularization,
    );
    (fast - &oracle).amax() / oracle.amax().max(1.0)
}

/// Largest deviation of `Φ_j Z_k` from `δ_jk I` over random pilot sets.
pub fn zf_identity_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for &(k, m, p) in &[(15, 1, 32), (3, 2, 8), (4, 3, 12), (1, 1, 1)] {
        let set = make_pilots(k, m, p, &vec![1.0; k], &mut rng).unwrap();
        let duals = set.zf_duals.as_ref().unwrap();
        for (j, phi) in set.matrices.iter().enumerate() {
            for (l, z) in duals.iter().enumerate() {
                let target = if j == l {
                    CMat::identity(m, m)
                } else {
                    CMat::zeros(m, m)
                };
                worst = worst.max((phi * z - target).camax());
            }
        }
    }
    worst
}

/// Random AML instance with `chains` distinct sampled antennas out of `n`.
pub fn small_aml_problem(
    rng: &mut ChaCha8Rng,
    n: usize,
    chains: usize,
    grid: usize,
    p: usize,
) -> AmlProblem {
    let geom = UlaGeometry::new(n).unwrap();
    let mut sampler: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        sampler.swap(i, rng.random_range(0..=i));
    }
    sampler.truncate(chains);
    let sketches = complex_normal_matrix(rng, chains, p, 1.0);
    AmlProblem::new(&geom, sampler, grid, sketches, 0.3).unwrap()
}

/// Worst relative error between `grad_f1` and central differences of `f1`
/// over 20 random instances.
pub fn aml_gradient_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let problem = small_aml_problem(&mut rng, 8, 4, 8, 5);
        let w = complex_normal_matrix(&mut rng, 8, 5, 1.0);
        let grad = grad_f1(&problem, &w);
        let h = 1e-6;
        let mut fd = CMat::zeros(8, 5);
        for i in 0..8 {
            for j in 0..5 {
                for (dir, unit) in [(0, c(1.0)), (1, Complex64::new(0.0, 1.0))] {
                    let mut plus = w.clone();
                    let mut minus = w.clone();
                    plus[(i, j)] += unit * h;
                    minus[(i, j)] -= unit * h;
                    let d = (problem.f1(&plus) - problem.f1(&minus)) / (2.0 * h);
                    if dir == 0 {
                        fd[(i, j)].re = d;
                    } else {
                        fd[(i, j)].im = d;
                    }
                }
            }
        }
        worst = worst.max((&grad - &fd).norm() / grad.norm());
    }
    worst
}

pub struct AmlFixedPoint {
    pub residual: f64,
    pub tol: f64,
    pub objective_start: f64,
    pub objective_end: f64,
    pub converged: bool,
}

/// Solve a small instance and report the proximal fixed-point residual.
pub fn aml_fixed_point(seed: u64) -> AmlFixedPoint {
    let mut rng = rng(seed);
    let problem = small_aml_problem(&mut rng, 8, 4, 16, 50);
    let tol = 1e-6;
    let sol = aml_solve(&problem, 2000, tol, 1).unwrap();
    AmlFixedPoint {
        residual: fixed_point_residual(&problem, &sol.w),
        tol,
        objective_start: problem.objective(&CMat::zeros(16, 50)),
        objective_end: sol.objective,
        converged: sol.converged,
    }
}

/// Relative error of the Monte Carlo mean of `‖H‖²_F` against `N_MS·N_BS`
/// (3 clusters × 5 rays, 10⁴ draws).
pub fn channel_energy_error(seed: u64, draws: usize) -> f64 {
    let mut rng = rng(seed);
    let (ms, bs) = (UlaGeometry::new(16).unwrap(), UlaGeometry::new(64).unwrap());
    let params = ChannelParams {
        n_clusters: 3,
        ..ChannelParams::default()
    };
    let mut total = 0.0;
    for _ in 0..draws {
        total += generate_channel(&params, &ms, &bs, &mut rng)
            .unwrap()
            .matrix
            .norm_squared();
    }
    (total / draws as f64 / (16.0 * 64.0) - 1.0).abs()
}

/// Whether every hybrid code path reproduces the fully-digital one exactly
/// when both analog stages are identities. Returns the first mismatch.
pub fn identity_rf_mismatch(seed: u64) -> Option<String> {
    let mut cfg = LinkConfig::new(8, 16, 8, 16, 2).unwrap();
    cfg.probe_len_bs = 20;
    cfg.probe_len_ms = 20;
    let (rf_ms, rf_bs) = identity_rf(&cfg);
    let fd = LinkContext::new(cfg.clone()).unwrap();
    let hy = LinkContext::new(cfg)
        .unwrap()
        .with_rf(rf_ms, rf_bs)
        .unwrap();
    let mut ch_rng = rng(seed);
    let (ms, bs) = (fd.config.ms, fd.config.bs);
    let params = ChannelParams {
        n_clusters: 2,
        ..ChannelParams::default()
    };
    let channel = generate_channel(&params, &ms, &bs, &mut ch_rng).unwrap();
    for est in [Estimator::Pastd, Estimator::Ooja, Estimator::Ls] {
        let a = run_single_user_on(
            &fd,
            &channel,
            est,
            Architecture::FullyDigital,
            0.1,
            &mut rng(seed + 1),
        )
        .unwrap();
        let b = run_single_user_on(
            &hy,
            &channel,
            est,
            Architecture::Hybrid,
            0.1,
            &mut rng(seed + 1),
        )
        .unwrap();
        if a.d_ms.full_matrix != b.d_ms.full_matrix || a.d_bs.full_matrix != b.d_bs.full_matrix {
            return Some(format!("single-user {est}"));
        }
    }
    let channels: Vec<_> = (0..3)
        .map(|_| generate_channel(&params, &ms, &bs, &mut ch_rng).unwrap())
        .collect();
    let pilots = make_pilots(3, 2, 20, &[1.0, 0.5, 2.0], &mut ch_rng).unwrap();
    for est in [Estimator::Pastd, Estimator::Ooja, Estimator::Ls] {
        for mode in [EstimationMode::PilotMatched, EstimationMode::ZeroForcing] {
            let run = |ctx: &LinkContext, arch| {
                run_multiuser(
                    ctx,
                    &channels,
                    est,
                    arch,
                    mode,
                    &pilots,
                    0.1,
                    &mut rng(seed + 2),
                )
                .unwrap()
            };
            let a = run(&fd, Architecture::FullyDigital);
            let b = run(&hy, Architecture::Hybrid);
            let same_d =
                a.d.iter()
                    .zip(&b.d)
                    .all(|(x, y)| x.full_matrix == y.full_matrix);
            if !same_d || a.j != b.j {
                return Some(format!("multiuser {est} {mode:?}"));
            }
        }
    }
    None
}
