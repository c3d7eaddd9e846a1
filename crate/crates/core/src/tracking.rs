//! Streaming estimation of dominant eigenvectors: PASTd with deflation and the
//! orthonormal Oja (OOJA) tracker, both seeded by a batch eigendecomposition.

use nalgebra::DVectorView;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dominant_eigvecs, normalize_columns, CMat};

const EIGVAL_FLOOR: f64 = 1e-12;

/// Seed for a tracker: dominant eigenpairs of the sample covariance of the first samples.
#[derive(Debug, Clone)]
pub struct InitBasis {
    pub basis: CMat,
    pub eigvals: Vec<f64>,
    /// Trace of the initialization covariance (average received power).
    pub total_power: f64,
    pub samples_used: usize,
}

/// `M` dominant eigenvectors of `(1/n) Σ r rᴴ` over the columns of `samples`.
pub fn svd_init(samples: &CMat, m: usize) -> Result<InitBasis> {
    let (n, count) = samples.shape();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot track {m} eigenvectors in dimension {n}"
        )));
    }
    if count < m {
        return Err(Error::InvalidArgument(format!(
            "{count} samples cannot initialize {m} eigenvectors"
        )));
    }
    let cov = samples * samples.adjoint() / Complex64::new(count as f64, 0.0);
    let total_power = cov.diagonal().iter().map(|x| x.re).sum();
    let (eigvals, basis) = dominant_eigvecs(&cov, m);
    Ok(InitBasis {
        basis,
        eigvals,
        total_power,
        samples_used: count,
    })
}

#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    pub basis: CMat,
    pub samples_consumed: usize,
}

pub trait SubspaceTracker {
    fn update(&mut self, sample: DVectorView<'_, Complex64>) -> Result<()>;
    fn finalize(&self) -> SubspaceEstimate;

    fn update_all(&mut self, samples: &CMat) -> Result<()> {
        for col in samples.column_iter() {
            self.update(col.as_view())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PastdState {
    pub forgetting: f64,
    pub eigvecs: CMat,
    pub eigvals: Vec<f64>,
    pub steps: usize,
}

impl PastdState {
    pub fn new(eigvecs: CMat, eigvals: Vec<f64>, forgetting: f64) -> Result<Self> {
        if !(forgetting > 0.0 && forgetting <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "forgetting factor must lie in (0, 1], got {forgetting}"
            )));
        }
        if eigvals.len() != eigvecs.ncols() {
            return Err(Error::InvalidArgument(
                "one eigenvalue per tracked vector is required".into(),
            ));
        }
        let eigvals = eigvals.into_iter().map(|l| l.max(EIGVAL_FLOOR)).collect();
        Ok(Self {
            forgetting,
            eigvecs,
            eigvals,
            steps: 0,
        })
    }

    pub fn from_init(init: &InitBasis, forgetting: f64) -> Result<Self> {
        Self::new(init.basis.clone(), init.eigvals.clone(), forgetting)
    }
}

impl SubspaceTracker for PastdState {
    fn update(&mut self, sample: DVectorView<'_, Complex64>) -> Result<()> {
        if sample.len() != self.eigvecs.nrows() {
            return Err(Error::InvalidArgument(format!(
                "sample length {} does not match dimension {}",
                sample.len(),
                self.eigvecs.nrows()
            )));
        }
        let mut x = sample.clone_owned();
        for m in 0..self.eigvecs.ncols() {
            let mut u = self.eigvecs.column_mut(m);
            let y = u.dotc(&x);
            let lambda = self.forgetting * self.eigvals[m] + y.norm_sqr();
            if !(lambda > 0.0) {
                return Err(Error::NumericalDegeneracy(format!(
                    "eigenvalue {m} collapsed to zero"
                )));
            }
            self.eigvals[m] = lambda;
            let gain = y.conj() / lambda;
            // u ← u + (x − u y) y*/λ, then deflate x with the updated u.
            let residual = &x - &u * y;
            u.axpy(gain, &residual, Complex64::new(1.0, 0.0));
            x.axpy(-y, &u, Complex64::new(1.0, 0.0));
        }
        self.steps += 1;
        Ok(())
    }

    fn finalize(&self) -> SubspaceEstimate {
        let m = self.eigvecs.ncols();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| self.eigvals[b].total_cmp(&self.eigvals[a]));
        let mut basis = CMat::from_fn(self.eigvecs.nrows(), m, |i, j| self.eigvecs[(i, order[j])]);
        normalize_columns(&mut basis);
        SubspaceEstimate {
            basis,
            samples_consumed: self.steps,
        }
    }
}

/// Direction of the OOJA correction term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OojaVariant {
    /// `W ← W + τ z vᴴ + δ φ p vᴴ`: ascends toward the principal subspace.
    #[default]
    Principal,
    /// `W ← W − δ p̄ vᴴ` with `p̄ = −τz/δ + φp`, exactly as typeset.
    AsPrinted,
}

#[derive(Debug, Clone)]
pub struct OojaState {
    pub step: f64,
    pub basis: CMat,
    pub variant: OojaVariant,
    /// Multiplies every incoming sample before the update.
    pub input_scale: f64,
    pub steps: usize,
    projected_power: CMat,
}

impl OojaState {
    pub fn new(basis: CMat, step: f64, variant: OojaVariant) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "OOJA step must be positive, got {step}"
            )));
        }
        let m = basis.ncols();
        Ok(Self {
            step,
            basis,
            variant,
            input_scale: 1.0,
            steps: 0,
            projected_power: CMat::zeros(m, m),
        })
    }

    pub fn from_init(init: &InitBasis, step: f64, variant: OojaVariant) -> Result<Self> {
        Self::new(init.basis.clone(), step, variant)
    }

    /// Scale the input stream to unit average power, using the initialization power.
    pub fn normalized_to(mut self, init: &InitBasis) -> Self {
        if init.total_power > 0.0 {
            self.input_scale = 1.0 / init.total_power.sqrt();
        }
        self
    }

    pub fn orthonormality_error(&self) -> f64 {
        let m = self.basis.ncols();
        (self.basis.adjoint() * &self.basis - CMat::identity(m, m)).norm()
    }
}

impl SubspaceTracker for OojaState {
    fn update(&mut self, sample: DVectorView<'_, Complex64>) -> Result<()> {
        if sample.len() != self.basis.nrows() {
            return Err(Error::InvalidArgument(format!(
                "sample length {} does not match dimension {}",
                sample.len(),
                self.basis.nrows()
            )));
        }
        let r = sample * Complex64::new(self.input_scale, 0.0);
        let v = self.basis.adjoint() * &r;
        let v_norm2 = v.norm_squared();
        if v_norm2 == 0.0 {
            self.steps += 1;
            return Ok(());
        }
        let z = &self.basis * &v;
        let p = &r - &z;
        let delta = self.step;
        let phi = 1.0 / (1.0 + delta * delta * p.norm_squared() * v_norm2).sqrt();
        let tau = (phi - 1.0) / v_norm2;
        let p_coeff = match self.variant {
            OojaVariant::Principal => delta * phi,
            OojaVariant::AsPrinted => -delta * phi,
        };
        let direction = z * Complex64::new(tau, 0.0) + p * Complex64::new(p_coeff, 0.0);
        self.basis += direction * v.adjoint();
        self.projected_power += &v * v.adjoint();
        self.steps += 1;
        Ok(())
    }

    fn finalize(&self) -> SubspaceEstimate {
        // Rotate to the Ritz vectors of the accumulated projected power so columns
        // come out ordered by estimated eigenvalue.
        let mut basis = if self.projected_power.norm() > 0.0 {
            let (_, q) = dominant_eigvecs(&self.projected_power, self.basis.ncols());
            &self.basis * q
        } else {
            self.basis.clone()
        };
        normalize_columns(&mut basis);
        SubspaceEstimate {
            basis,
            samples_consumed: self.steps,
        }
    }
}

pub fn pastd_step(state: &mut PastdState, sample: DVectorView<'_, Complex64>) -> Result<()> {
    state.update(sample)
}

pub fn ooja_step(state: &mut OojaState, sample: DVectorView<'_, Complex64>) -> Result<()> {
    state.update(sample)
}

pub fn finalize<T: SubspaceTracker>(state: &T) -> SubspaceEstimate {
    state.finalize()
}
