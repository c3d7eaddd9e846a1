//! Estimator scoring: eigenvector correlations, spectral efficiencies and
//! differential 4-PSK symbol error rates.

use std::f64::consts::LN_2;

use nalgebra::DVectorView;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_normal, hpd_logdet, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationScore {
    pub eta_u: f64,
    pub eta_v: f64,
}

/// `|uᴴ û| / (‖u‖ ‖û‖)`.
pub fn correlation(
    u_true: DVectorView<'_, Complex64>,
    u_est: DVectorView<'_, Complex64>,
) -> Result<f64> {
    if u_true.len() != u_est.len() {
        return Err(Error::InvalidArgument(format!(
            "vectors have lengths {} and {}",
            u_true.len(),
            u_est.len()
        )));
    }
    let (a, b) = (u_true.norm(), u_est.norm());
    if a == 0.0 || b == 0.0 {
        return Err(Error::InvalidArgument(
            "correlation of a zero vector".into(),
        ));
    }
    Ok((u_true.dotc(&u_est).norm() / (a * b)).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkDirection {
    #[serde(rename = "DL")]
    Downlink,
    #[serde(rename = "UL")]
    Uplink,
}

fn logdet_ratio_bits(signal: &CMat, interference_plus_noise: &CMat) -> Result<f64> {
    let base = hpd_logdet(interference_plus_noise)
        .ok_or_else(|| Error::InvalidBeamformer("combiner Gram matrix is singular".into()))?;
    let total = hpd_logdet(&(interference_plus_noise + signal)).ok_or_else(|| {
        Error::InvalidBeamformer("received covariance is not positive definite".into())
    })?;
    Ok(((total - base) / LN_2).max(0.0))
}

fn check_noise(noise_var: f64) -> Result<()> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    Ok(())
}

/// Single-user spectral efficiency with equal power over the `M` streams.
///
/// DL: `log₂det[I + (P/M)(σ² D_MSᴴD_MS)⁻¹ D_MSᴴ H D_BS D_BSᴴ Hᴴ D_MS]`; UL swaps the roles.
pub fn se_single_user(
    h: &CMat,
    d_ms: &CMat,
    d_bs: &CMat,
    power: f64,
    noise_var: f64,
    direction: LinkDirection,
) -> Result<f64> {
    check_noise(noise_var)?;
    if d_ms.nrows() != h.nrows() || d_bs.nrows() != h.ncols() || d_ms.ncols() != d_bs.ncols() {
        return Err(Error::InvalidArgument(
            "beamformers do not conform with the channel".into(),
        ));
    }
    let m = d_ms.ncols() as f64;
    let (rx, effective) = match direction {
        LinkDirection::Downlink => (d_ms, d_ms.adjoint() * h * d_bs),
        LinkDirection::Uplink => (d_bs, d_bs.adjoint() * h.adjoint() * d_ms),
    };
    let noise = rx.adjoint() * rx * Complex64::new(noise_var, 0.0);
    let signal = &effective * effective.adjoint() * Complex64::new(power / m, 0.0);
    logdet_ratio_bits(&signal, &noise)
}

fn normalized_columns_scaled(a: &CMat, power_per_column: f64, what: &str) -> Result<CMat> {
    let mut out = a.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let n = col.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateEstimate(format!(
                "{what} column {j} has zero norm"
            )));
        }
        col.scale_mut(power_per_column.sqrt() / n);
    }
    Ok(out)
}

/// Per-user multiuser spectral efficiencies.
///
/// Downlink precoders are the estimated `J_k` with column powers
/// `P_T,BS/(M K ‖J_k col‖²)`; uplink users transmit along `D_k` with column
/// powers `P_T,MS/(M ‖D_k col‖²)` and the BS combines with `J_k`.
pub fn se_multiuser(
    channels: &[CMat],
    d: &[CMat],
    j: &[CMat],
    power_bs: f64,
    power_ms: f64,
    noise_var: f64,
    direction: LinkDirection,
) -> Result<Vec<f64>> {
    check_noise(noise_var)?;
    let k_users = channels.len();
    if d.len() != k_users || j.len() != k_users || k_users == 0 {
        return Err(Error::InvalidArgument(
            "one channel, combiner and estimate per user is required".into(),
        ));
    }
    let m = d[0].ncols() as f64;
    let sigma2 = Complex64::new(noise_var, 0.0);
    let mut rates = Vec::with_capacity(k_users);
    match direction {
        LinkDirection::Downlink => {
            let per_col = power_bs / (m * k_users as f64);
            let precoders: Vec<CMat> = j
                .iter()
                .map(|jk| normalized_columns_scaled(jk, per_col, "J"))
                .collect::<Result<_>>()?;
            for k in 0..k_users {
                let front = d[k].adjoint() * &channels[k];
                let mut interference = d[k].adjoint() * &d[k] * sigma2;
                let mut signal = CMat::zeros(d[k].ncols(), d[k].ncols());
                for (l, f) in precoders.iter().enumerate() {
                    let a = &front * f;
                    if l == k {
                        signal = &a * a.adjoint();
                    } else {
                        interference += &a * a.adjoint();
                    }
                }
                rates.push(logdet_ratio_bits(&signal, &interference)?);
            }
        }
        LinkDirection::Uplink => {
            let per_col = power_ms / m;
            let transmit: Vec<CMat> = d
                .iter()
                .map(|dk| normalized_columns_scaled(dk, per_col, "D"))
                .collect::<Result<_>>()?;
            for k in 0..k_users {
                normalized_columns_scaled(&j[k], 1.0, "J")?;
                let jh = j[k].adjoint();
                let mut interference = &jh * &j[k] * sigma2;
                let mut signal = CMat::zeros(j[k].ncols(), j[k].ncols());
                for (l, tx) in transmit.iter().enumerate() {
                    let b = &jh * channels[l].adjoint() * tx;
                    if l == k {
                        signal = &b * b.adjoint();
                    } else {
                        interference += &b * b.adjoint();
                    }
                }
                rates.push(logdet_ratio_bits(&signal, &interference)?);
            }
        }
    }
    Ok(rates)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerSample {
    pub snr_db: f64,
    pub num_symbols: u64,
    pub num_errors: u64,
    pub ser: f64,
}

const QPSK: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, -1.0),
];

/// Nearest 4-PSK index to `z`.
fn detect_qpsk(z: Complex64) -> usize {
    if !z.is_finite() {
        return 0;
    }
    (0..4)
        .max_by(|&a, &b| (z * QPSK[a].conj()).re.total_cmp(&(z * QPSK[b].conj()).re))
        .unwrap_or(0)
}

/// Empirical SER of differential 4-PSK through `D_MSᴴ H D_BS` at each `(snr_db, σ²)` point.
pub fn ser_differential<R: Rng + ?Sized>(
    h: &CMat,
    d_ms: &CMat,
    d_bs: &CMat,
    points: &[(f64, f64)],
    num_symbols: u64,
    power: f64,
    rng: &mut R,
) -> Result<Vec<SerSample>> {
    if d_ms.ncols() != 1 || d_bs.ncols() != 1 {
        return Err(Error::UnsupportedConfig(
            "differential SER is defined for a single stream".into(),
        ));
    }
    if d_ms.nrows() != h.nrows() || d_bs.nrows() != h.ncols() {
        return Err(Error::InvalidArgument(
            "beamformers do not conform with the channel".into(),
        ));
    }
    let gain = (d_ms.adjoint() * h * d_bs)[(0, 0)] * power.sqrt();
    let combiner_energy = d_ms.norm_squared();
    let mut out = Vec::with_capacity(points.len());
    for &(snr_db, noise_var) in points {
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be non-negative, got {noise_var}"
            )));
        }
        let var = noise_var * combiner_energy;
        let mut phase = 0usize;
        let mut y_prev = gain + complex_normal(rng, var);
        let mut errors = 0u64;
        for _ in 0..num_symbols {
            let sym = rng.random_range(0..4usize);
            phase = (phase + sym) % 4;
            let y = gain * QPSK[phase] + complex_normal(rng, var);
            let z = y * y_prev.conj() / y_prev.norm_sqr();
            if detect_qpsk(z) != sym {
                errors += 1;
            }
            y_prev = y;
        }
        let ser = if num_symbols == 0 {
            0.0
        } else {
            errors as f64 / num_symbols as f64
        };
        out.push(SerSample {
            snr_db,
            num_symbols,
            num_errors: errors,
            ser,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_normal_matrix, svd_sorted, CVec, ZERO};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn correlation_cases() {
        let e1 = CVec::from_column_slice(&[c(1.0, 0.0), ZERO]);
        let e2 = CVec::from_column_slice(&[ZERO, c(1.0, 0.0)]);
        let mix = (&e1 + &e2) / c(2f64.sqrt(), 0.0);
        assert!((correlation(e1.as_view(), mix.as_view()).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(correlation(e1.as_view(), e2.as_view()).unwrap(), 0.0);
        let rot = &mix * Complex64::from_polar(3.0, 1.1);
        assert!((correlation(mix.as_view(), rot.as_view()).unwrap() - 1.0).abs() < 1e-15);
        let zero = CVec::zeros(2);
        assert!(correlation(e1.as_view(), zero.as_view()).is_err());
    }

    #[test]
    fn se_with_true_vectors_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = complex_normal_matrix(&mut rng, 8, 16, 1.0);
        let (u, s, v) = svd_sorted(&h);
        let d_ms = u.columns(0, 1).into_owned();
        let d_bs = v.columns(0, 1).into_owned();
        let expected = (1.0 + 2.0 * s[0] * s[0] / 0.5).log2();
        for dir in [LinkDirection::Downlink, LinkDirection::Uplink] {
            let se = se_single_user(&h, &d_ms, &d_bs, 2.0, 0.5, dir).unwrap();
            assert!((se - expected).abs() < 1e-10);
        }
        assert_eq!(
            se_single_user(&h, &d_ms, &d_bs, 0.0, 0.5, LinkDirection::Downlink).unwrap(),
            0.0
        );
    }

    #[test]
    fn se_rejects_rank_deficient_combiner() {
        let h = CMat::identity(2, 2);
        let d = CMat::zeros(2, 1);
        assert!(matches!(
            se_single_user(
                &h,
                &d,
                &CMat::identity(2, 1),
                1.0,
                1.0,
                LinkDirection::Downlink
            ),
            Err(Error::InvalidBeamformer(_))
        ));
    }

    #[test]
    fn multiuser_single_user_reduces_to_single_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = complex_normal_matrix(&mut rng, 4, 8, 1.0);
        let (u, s, v) = svd_sorted(&h);
        let d = u.columns(0, 1).into_owned();
        let j = v.columns(0, 1).into_owned() * c(s[0], 0.0);
        let rates = se_multiuser(
            std::slice::from_ref(&h),
            std::slice::from_ref(&d),
            &[j],
            1.0,
            0.5,
            0.1,
            LinkDirection::Downlink,
        )
        .unwrap();
        let single = se_single_user(
            &h,
            &d,
            &v.columns(0, 1).into_owned(),
            1.0,
            0.1,
            LinkDirection::Downlink,
        )
        .unwrap();
        assert!((rates[0] - single).abs() < 1e-10);
    }

    #[test]
    fn multiuser_zero_column_is_degenerate() {
        let h = CMat::identity(2, 2);
        let d = CMat::identity(2, 1);
        let j = CMat::zeros(2, 1);
        assert!(matches!(
            se_multiuser(&[h], &[d], &[j], 1.0, 1.0, 1.0, LinkDirection::Uplink),
            Err(Error::DegenerateEstimate(_))
        ));
    }

    #[test]
    fn ser_noiseless_and_zero_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = CMat::from_element(1, 1, c(0.3, -0.2));
        let d = CMat::from_element(1, 1, c(1.0, 0.0));
        let clean = ser_differential(&h, &d, &d, &[(0.0, 0.0)], 1000, 1.0, &mut rng).unwrap();
        assert_eq!(clean[0].num_errors, 0);
        let zero = CMat::zeros(1, 1);
        let noisy = ser_differential(&zero, &d, &d, &[(0.0, 1.0)], 40_000, 1.0, &mut rng).unwrap();
        assert!((noisy[0].ser - 0.75).abs() < 0.015);
    }

    #[test]
    fn ser_requires_single_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = CMat::identity(2, 2);
        let d = CMat::identity(2, 2);
        assert!(matches!(
            ser_differential(&h, &d, &d, &[(0.0, 1.0)], 10, 1.0, &mut rng),
            Err(Error::UnsupportedConfig(_))
        ));
    }

    /// Exact DQPSK symbol error probability by numerical integration.
    fn dqpsk_ser(gamma: f64) -> f64 {
        let upper = 3.0 * PI / 4.0;
        let n = 20_000;
        let h = upper / n as f64;
        let f = |t: f64| (-gamma * 0.5 / (1.0 + 0.5f64.sqrt() * t.cos())).exp();
        let mut acc = f(0.0) + f(upper);
        for i in 1..n {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0 / PI
    }

    #[test]
    fn scalar_dqpsk_matches_analytic_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let one = CMat::from_element(1, 1, c(1.0, 0.0));
        let snr_db = 15.0;
        let sigma2 = 10f64.powf(-snr_db / 10.0);
        let n = 1_000_000;
        let got =
            ser_differential(&one, &one, &one, &[(snr_db, sigma2)], n, 1.0, &mut rng).unwrap()[0];
        let p = dqpsk_ser(1.0 / sigma2);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (got.ser - p).abs() < 3.0 * se,
            "empirical {} vs analytic {p}",
            got.ser
        );
    }
}
