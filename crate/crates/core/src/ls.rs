//! Least-squares covariance fitting on a dense angular grid.
//!
//! The sample covariance `E` is approximated by `Σ s_i g_i g_iᴴ` with real
//! coefficients; the normal equations are `F s = e` with `F_ij = |g_iᴴ g_j|²`
//! and `e_i = Re(g_iᴴ E g_i)`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::UlaGeometry;
use crate::error::{Error, Result};
use crate::linalg::{dominant_eigvecs, hermitian_part, CMat};

pub fn sample_covariance(samples: &CMat) -> Result<CMat> {
    let count = samples.ncols();
    if count == 0 || samples.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "sample covariance needs at least one sample".into(),
        ));
    }
    let cov = samples * samples.adjoint() / Complex64::new(count as f64, 0.0);
    Ok(hermitian_part(&cov))
}

#[derive(Debug, Clone)]
pub struct AngularGrid {
    pub size: usize,
    pub angles: Vec<f64>,
    pub steering: CMat,
}

/// Grid `θ_i = 2π(i−1)/L`; with an RF projection `R` the columns are `Rᴴ a(θ_i)`.
pub fn build_grid(
    geometry: &UlaGeometry,
    l: usize,
    rf_projection: Option<&CMat>,
) -> Result<AngularGrid> {
    let n_eff = rf_projection.map_or(geometry.num_elements, |r| r.ncols());
    if let Some(r) = rf_projection {
        if r.nrows() != geometry.num_elements {
            return Err(Error::InvalidArgument(format!(
                "RF projection has {} rows for {} antennas",
                r.nrows(),
                geometry.num_elements
            )));
        }
    }
    if l <= n_eff {
        return Err(Error::InvalidConfig(format!(
            "grid size {l} must exceed the dimension {n_eff}"
        )));
    }
    let angles: Vec<f64> = (0..l).map(|i| 2.0 * PI * i as f64 / l as f64).collect();
    let mut full = CMat::zeros(geometry.num_elements, l);
    for (j, &theta) in angles.iter().enumerate() {
        full.set_column(j, &geometry.steering(theta));
    }
    let steering = match rf_projection {
        Some(r) => r.adjoint() * full,
        None => full,
    };
    Ok(AngularGrid {
        size: l,
        angles,
        steering,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsOptions {
    /// Tikhonov weight relative to `tr(F)/L`.
    pub regularization: f64,
    /// Clip negative coefficients to zero before the eigendecomposition.
    pub clip_negative: bool,
}

impl Default for LsOptions {
    fn default() -> Self {
        Self {
            regularization: 1e-6,
            clip_negative: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LsSolution {
    pub coefficients: DVector<f64>,
    pub reconstructed: CMat,
    pub basis: CMat,
}

/// Grid with its regularized Gram matrix factored once, reusable across fits.
#[derive(Debug, Clone)]
pub struct LsFitter {
    pub grid: AngularGrid,
    pub gram: DMatrix<f64>,
    pub epsilon: f64,
    pub options: LsOptions,
    factor: Cholesky<f64, Dyn>,
}

impl LsFitter {
    pub fn new(grid: AngularGrid, options: LsOptions) -> Result<Self> {
        if !(options.regularization.is_finite() && options.regularization >= 0.0) {
            return Err(Error::InvalidConfig(
                "LS regularization must be finite and non-negative".into(),
            ));
        }
        let inner = grid.steering.adjoint() * &grid.steering;
        let l = grid.size;
        let gram = DMatrix::from_fn(l, l, |i, j| inner[(i, j)].norm_sqr());
        let epsilon = options.regularization * gram.trace() / l as f64;
        let mut regularized = gram.clone();
        for i in 0..l {
            regularized[(i, i)] += epsilon;
        }
        let factor = Cholesky::new(regularized).ok_or_else(|| {
            Error::IllPosedGrid(format!("Gram matrix of the {l}-point grid is singular"))
        })?;
        Ok(Self {
            grid,
            gram,
            epsilon,
            options,
            factor,
        })
    }

    /// `e_i = Re(g_iᴴ E g_i)`.
    pub fn projections(&self, e: &CMat) -> Result<DVector<f64>> {
        let g = &self.grid.steering;
        if e.nrows() != g.nrows() || e.ncols() != g.nrows() {
            return Err(Error::InvalidArgument(format!(
                "covariance is {}x{}, grid dimension is {}",
                e.nrows(),
                e.ncols(),
                g.nrows()
            )));
        }
        let eg = e * g;
        Ok(DVector::from_fn(self.grid.size, |i, _| {
            g.column(i).dotc(&eg.column(i)).re
        }))
    }

    pub fn coefficients(&self, e: &CMat) -> Result<DVector<f64>> {
        let rhs = self.projections(e)?;
        let mut s = self.factor.solve(&rhs);
        if self.options.clip_negative {
            s.iter_mut().for_each(|x| *x = x.max(0.0));
        }
        Ok(s)
    }

    pub fn reconstruct(&self, coefficients: &DVector<f64>) -> CMat {
        let g = &self.grid.steering;
        let mut scaled = g.clone();
        for (mut col, &s) in scaled.column_iter_mut().zip(coefficients.iter()) {
            col.scale_mut(s);
        }
        hermitian_part(&(scaled * g.adjoint()))
    }

    pub fn fit(&self, e: &CMat, m: usize) -> Result<LsSolution> {
        let coefficients = self.coefficients(e)?;
        let reconstructed = self.reconstruct(&coefficients);
        let (_, basis) = dominant_eigvecs(&reconstructed, m);
        Ok(LsSolution {
            coefficients,
            reconstructed,
            basis,
        })
    }

    /// `‖E − Σ s_i g_i g_iᴴ‖²_F + ε‖s‖²`, the function the coefficients minimize.
    pub fn objective(&self, e: &CMat, coefficients: &DVector<f64>) -> f64 {
        (e - self.reconstruct(coefficients)).norm_squared()
            + self.epsilon * coefficients.norm_squared()
    }
}

/// One-shot fit with default options.
pub fn ls_fit(grid: &AngularGrid, e: &CMat, m: usize) -> Result<LsSolution> {
    LsFitter::new(grid.clone(), LsOptions::default())?.fit(e, m)
}
