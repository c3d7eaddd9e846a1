//! Approximate maximum-likelihood covariance estimation from antenna sketches.
//!
//! The covariance is modeled on a grid of `G` steering vectors; the sketch
//! `X = B r` (first or random `N^RF` antennas) is explained by `G̃ W` with a
//! row-sparse `W`, found by FISTA on
//! `f(W) = (1/2ζ)‖G̃W − X‖²_F + Σ_i ‖W_(i,·)‖`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::UlaGeometry;
use crate::error::{Error, Result};
use crate::linalg::{dominant_eigvecs, hermitian_eig_desc, CMat};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerPattern {
    #[default]
    First,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmlOptions {
    /// Grid size as a multiple of the array size.
    pub grid_factor: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub sampler: SamplerPattern,
}

impl Default for AmlOptions {
    fn default() -> Self {
        Self {
            grid_factor: 4,
            max_iters: 2000,
            tol: 1e-6,
            sampler: SamplerPattern::First,
        }
    }
}

impl AmlOptions {
    pub fn validate(&self) -> Result<()> {
        if self.grid_factor == 0 || self.max_iters == 0 || !(self.tol > 0.0 && self.tol.is_finite())
        {
            return Err(Error::InvalidConfig(
                "AML needs grid_factor ≥ 1, max_iters ≥ 1 and tol > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Indices of the antennas kept by the 0/1 sampling operator.
pub fn make_sampler<R: Rng + ?Sized>(
    num_elements: usize,
    num_chains: usize,
    pattern: SamplerPattern,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if num_chains == 0 || num_chains > num_elements {
        return Err(Error::InvalidConfig(format!(
            "cannot sample {num_chains} of {num_elements} antennas"
        )));
    }
    Ok(match pattern {
        SamplerPattern::First => (0..num_chains).collect(),
        SamplerPattern::Random => {
            let mut idx = sample(rng, num_elements, num_chains).into_vec();
            idx.sort_unstable();
            idx
        }
    })
}

/// Dense `N^RF × N` selection matrix for the given antenna indices.
pub fn sampler_matrix(indices: &[usize], num_elements: usize) -> CMat {
    let mut b = CMat::zeros(indices.len(), num_elements);
    for (row, &col) in indices.iter().enumerate() {
        b[(row, col)] = Complex64::new(1.0, 0.0);
    }
    b
}

/// Rows of the received block kept by the sampler: column `n` of the result is `B r(n)`.
pub fn aml_sketch(received: &CMat, sampler: &[usize]) -> CMat {
    received.select_rows(sampler.iter())
}

#[derive(Debug, Clone)]
pub struct AmlProblem {
    pub sampler: Vec<usize>,
    pub grid_angles: Vec<f64>,
    pub grid: CMat,
    pub projected_grid: CMat,
    pub sketches: CMat,
    pub noise_var: f64,
    pub zeta: f64,
    pub lipschitz: f64,
}

impl AmlProblem {
    pub fn new(
        geometry: &UlaGeometry,
        sampler: Vec<usize>,
        grid_size: usize,
        sketches: CMat,
        noise_var: f64,
    ) -> Result<Self> {
        let n = geometry.num_elements;
        if sampler.is_empty() || sampler.iter().any(|&i| i >= n) {
            return Err(Error::InvalidArgument(
                "sampler must select existing antennas".into(),
            ));
        }
        let mut sorted = sampler.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != sampler.len() {
            return Err(Error::InvalidArgument(
                "sampler rows must select distinct antennas".into(),
            ));
        }
        if sketches.nrows() != sampler.len() || sketches.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "sketch block is {}x{} for {} sampled antennas",
                sketches.nrows(),
                sketches.ncols(),
                sampler.len()
            )));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance estimate must be positive, got {noise_var}"
            )));
        }
        if grid_size == 0 {
            return Err(Error::InvalidConfig("AML grid must be nonempty".into()));
        }
        let grid_angles: Vec<f64> = (0..grid_size)
            .map(|i| (-1.0 + 2.0 * i as f64 / grid_size as f64) * PI / 2.0)
            .collect();
        let mut grid = CMat::zeros(n, grid_size);
        for (j, &theta) in grid_angles.iter().enumerate() {
            grid.set_column(j, &geometry.steering(theta));
        }
        let n_rf = sampler.len() as f64;
        let projected_grid = grid.select_rows(sampler.iter()) / Complex64::new(n_rf.sqrt(), 0.0);
        let zeta = noise_var * (sketches.ncols() as f64).sqrt();
        let (eigs, _) = hermitian_eig_desc(&(&projected_grid * projected_grid.adjoint()));
        let lipschitz = eigs[0] / zeta;
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::NumericalDegeneracy(format!(
                "Lipschitz constant {lipschitz} is not usable"
            )));
        }
        Ok(Self {
            sampler,
            grid_angles,
            grid,
            projected_grid,
            sketches,
            noise_var,
            zeta,
            lipschitz,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid.ncols()
    }

    pub fn f1(&self, w: &CMat) -> f64 {
        (&self.projected_grid * w - &self.sketches).norm_squared() / (2.0 * self.zeta)
    }

    pub fn objective(&self, w: &CMat) -> f64 {
        self.f1(w) + group_norm(w)
    }
}

/// Sum of row norms.
pub fn group_norm(w: &CMat) -> f64 {
    w.row_iter().map(|r| r.norm()).sum()
}

/// `∇f₁(W) = (1/ζ) G̃ᴴ(G̃W − X)`.
pub fn grad_f1(problem: &AmlProblem, w: &CMat) -> CMat {
    let residual = &problem.projected_grid * w - &problem.sketches;
    problem.projected_grid.adjoint() * residual / Complex64::new(problem.zeta, 0.0)
}

/// Row-wise group soft thresholding.
pub fn prox_group(w: &CMat, threshold: f64) -> CMat {
    let mut out = w.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        let scale = if norm > 0.0 {
            (norm - threshold).max(0.0) / norm
        } else {
            0.0
        };
        row.scale_mut(scale);
    }
    out
}

#[derive(Debug, Clone)]
pub struct AmlSolution {
    pub w: CMat,
    pub coefficients: Vec<f64>,
    pub subspace: CMat,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

impl AmlSolution {
    pub fn dominant_index(&self) -> usize {
        self.coefficients
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Norm of the proximal-gradient fixed-point residual at `w`.
pub fn fixed_point_residual(problem: &AmlProblem, w: &CMat) -> f64 {
    let step = 1.0 / problem.lipschitz;
    let r = w - grad_f1(problem, w) * Complex64::new(step, 0.0);
    (w - prox_group(&r, step)).norm()
}

pub fn aml_solve(
    problem: &AmlProblem,
    max_iters: usize,
    tol: f64,
    m: usize,
) -> Result<AmlSolution> {
    let g = problem.grid_size();
    let p = problem.sketches.ncols();
    let step = 1.0 / problem.lipschitz;
    let mut w = CMat::zeros(g, p);
    let mut z = w.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        let r = &z - grad_f1(problem, &z) * Complex64::new(step, 0.0);
        let w_next = prox_group(&r, step);
        let t_next = (1.0 + (4.0 * t * t + 1.0).sqrt()) / 2.0;
        let diff = &w_next - &w;
        let change = diff.norm();
        if !change.is_finite() {
            return Err(Error::Divergence(format!(
                "iterate became non-finite at iteration {iterations}"
            )));
        }
        let alpha = 1.0 + (t - 1.0) / t_next;
        z = &w + diff * Complex64::new(alpha, 0.0);
        let rel = change / w.norm().max(1.0);
        w = w_next;
        t = t_next;
        iterations += 1;
        // Momentum can make consecutive iterates close while W is still off the
        // fixed point, so a small step alone does not end the run.
        if rel < tol && fixed_point_residual(problem, &w) < tol {
            converged = true;
            break;
        }
    }
    let objective = problem.objective(&w);
    if !objective.is_finite() {
        return Err(Error::Divergence("objective is not finite".into()));
    }
    let n_rf = problem.sampler.len() as f64;
    let coefficients: Vec<f64> = w.row_iter().map(|r| r.norm() / n_rf.sqrt()).collect();
    let mut weighted = problem.grid.clone();
    for (mut col, &c) in weighted.column_iter_mut().zip(&coefficients) {
        col.scale_mut(c);
    }
    let t_star = weighted * problem.grid.adjoint();
    let (_, subspace) = dominant_eigvecs(&t_star, m);
    Ok(AmlSolution {
        w,
        coefficients,
        subspace,
        iterations,
        converged,
        objective,
    })
}
