//! Clustered narrowband mmWave channel model and ULA array responses.
//!
//! A realization is `H = γ Σ_i Σ_l α_il √L(r) a_MS(φ_MS) a_BS(φ_BS)ᴴ + H_LOS`
//! with `γ = √(N_BS N_MS / Σ_i N_ray,i)`. Every realization keeps the ray
//! metadata it was built from, so the matrix can be reconstructed and audited.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_normal, svd_sorted, CMat, CVec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UlaGeometry {
    pub num_elements: usize,
    pub spacing_wavelengths: f64,
}

impl UlaGeometry {
    pub fn new(num_elements: usize) -> Result<Self> {
        Self::with_spacing(num_elements, 0.5)
    }

    pub fn with_spacing(num_elements: usize, spacing_wavelengths: f64) -> Result<Self> {
        if num_elements == 0 {
            return Err(Error::InvalidArgument(
                "ULA needs at least one element".into(),
            ));
        }
        if !(spacing_wavelengths.is_finite() && spacing_wavelengths > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "element spacing must be positive, got {spacing_wavelengths}"
            )));
        }
        Ok(Self {
            num_elements,
            spacing_wavelengths,
        })
    }

    /// Unit-norm response `(1/√N) exp(−j 2π d m sin φ)`, no argument checks.
    pub(crate) fn steering(&self, angle: f64) -> CVec {
        let n = self.num_elements;
        let scale = 1.0 / (n as f64).sqrt();
        let k = -2.0 * PI * self.spacing_wavelengths * angle.sin();
        CVec::from_fn(n, |m, _| Complex64::from_polar(scale, k * m as f64))
    }
}

/// Array response of a ULA at `angle` (radians from broadside).
pub fn array_response(geometry: &UlaGeometry, angle: f64) -> Result<CVec> {
    if !angle.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "angle must be finite, got {angle}"
        )));
    }
    Ok(geometry.steering(angle))
}

/// Distance-dependent attenuation `r ↦ L(r)` in linear scale.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathLoss {
    #[default]
    Unity,
    LogDistance {
        #[serde(default = "default_pl0_db")]
        pl0_db: f64,
        #[serde(default = "default_ref_distance")]
        ref_distance_m: f64,
        #[serde(default = "default_nlos_exponent")]
        nlos_exponent: f64,
        #[serde(default = "default_los_exponent")]
        los_exponent: f64,
    },
}

fn default_pl0_db() -> f64 {
    70.0
}
fn default_ref_distance() -> f64 {
    1.0
}
fn default_nlos_exponent() -> f64 {
    3.0
}
fn default_los_exponent() -> f64 {
    2.0
}

impl PathLoss {
    pub fn log_distance_default() -> Self {
        PathLoss::LogDistance {
            pl0_db: default_pl0_db(),
            ref_distance_m: default_ref_distance(),
            nlos_exponent: default_nlos_exponent(),
            los_exponent: default_los_exponent(),
        }
    }

    pub fn attenuation(&self, distance_m: f64, los: bool) -> f64 {
        match *self {
            PathLoss::Unity => 1.0,
            PathLoss::LogDistance {
                pl0_db,
                ref_distance_m,
                nlos_exponent,
                los_exponent,
            } => {
                let n = if los { los_exponent } else { nlos_exponent };
                let db = pl0_db + 10.0 * n * (distance_m / ref_distance_m).log10();
                10f64.powf(-db / 10.0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let PathLoss::LogDistance {
            pl0_db,
            ref_distance_m,
            nlos_exponent,
            los_exponent,
        } = *self
        {
            let ok = pl0_db.is_finite()
                && ref_distance_m.is_finite()
                && ref_distance_m > 0.0
                && nlos_exponent.is_finite()
                && los_exponent.is_finite();
            if !ok {
                return Err(Error::InvalidConfig(
                    "log-distance path loss parameters must be finite, r0 > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Cluster centers uniform on `[center_min, center_max]`, per-ray Laplacian offsets
/// whose standard deviation is `ray_spread_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AngleDistribution {
    pub center_min_rad: f64,
    pub center_max_rad: f64,
    pub ray_spread_deg: f64,
}

impl Default for AngleDistribution {
    fn default() -> Self {
        Self {
            center_min_rad: -PI / 2.0,
            center_max_rad: PI / 2.0,
            ray_spread_deg: 5.0,
        }
    }
}

impl AngleDistribution {
    fn sample_center<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.center_min_rad + (self.center_max_rad - self.center_min_rad) * rng.random::<f64>()
    }

    fn sample_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let b = self.ray_spread_deg.to_radians() / std::f64::consts::SQRT_2;
        if b == 0.0 {
            return 0.0;
        }
        // Inverse CDF of Laplace(0, b).
        let u: f64 = rng.random::<f64>() - 0.5;
        -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub n_clusters: usize,
    /// Rays per cluster; a single entry applies to every cluster.
    pub rays_per_cluster: Vec<usize>,
    /// Per-cluster gain variance; a single entry applies to every cluster.
    pub ray_gain_variance: Vec<f64>,
    pub carrier_frequency_hz: f64,
    pub distance_m: f64,
    pub los_probability: f64,
    pub pathloss: PathLoss,
    pub angles: AngleDistribution,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            n_clusters: 1,
            rays_per_cluster: vec![5],
            ray_gain_variance: vec![1.0],
            carrier_frequency_hz: 73e9,
            distance_m: 50.0,
            los_probability: 0.0,
            pathloss: PathLoss::Unity,
            angles: AngleDistribution::default(),
        }
    }
}

fn per_cluster<T: Copy>(values: &[T], i: usize) -> T {
    if values.len() == 1 {
        values[0]
    } else {
        values[i]
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let broadcastable = |len: usize| len == 1 || len == self.n_clusters;
        if !broadcastable(self.rays_per_cluster.len()) {
            return Err(Error::InvalidConfig(format!(
                "rays_per_cluster has {} entries for {} clusters",
                self.rays_per_cluster.len(),
                self.n_clusters
            )));
        }
        if !broadcastable(self.ray_gain_variance.len()) {
            return Err(Error::InvalidConfig(format!(
                "ray_gain_variance has {} entries for {} clusters",
                self.ray_gain_variance.len(),
                self.n_clusters
            )));
        }
        if self.rays_per_cluster.contains(&0) {
            return Err(Error::InvalidConfig(
                "every cluster needs at least one ray".into(),
            ));
        }
        if self
            .ray_gain_variance
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::InvalidConfig(
                "ray gain variances must be finite and non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.los_probability) {
            return Err(Error::InvalidConfig(format!(
                "los_probability must lie in [0, 1], got {}",
                self.los_probability
            )));
        }
        if !(self.distance_m.is_finite() && self.distance_m > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "distance_m must be positive, got {}",
                self.distance_m
            )));
        }
        let a = &self.angles;
        if !(a.center_min_rad.is_finite()
            && a.center_max_rad.is_finite()
            && a.center_min_rad <= a.center_max_rad)
        {
            return Err(Error::InvalidConfig(
                "angle center range must be finite and ordered".into(),
            ));
        }
        if !(a.ray_spread_deg.is_finite() && a.ray_spread_deg >= 0.0) {
            return Err(Error::InvalidConfig(
                "ray_spread_deg must be non-negative".into(),
            ));
        }
        self.pathloss.validate()
    }

    pub fn total_rays(&self) -> usize {
        (0..self.n_clusters)
            .map(|i| per_cluster(&self.rays_per_cluster, i))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayPath {
    pub cluster: usize,
    pub gain: Complex64,
    pub aoa_ms: f64,
    pub aod_bs: f64,
    pub attenuation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosComponent {
    pub phase: f64,
    pub aoa_ms: f64,
    pub aod_bs: f64,
    pub attenuation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdCache {
    pub u: CMat,
    pub singular_values: Vec<f64>,
    pub v: CMat,
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub matrix: CMat,
    pub nlos_rays: Vec<RayPath>,
    pub los_component: Option<LosComponent>,
    pub normalization: f64,
    pub ms_geometry: UlaGeometry,
    pub bs_geometry: UlaGeometry,
    pub svd_cache: SvdCache,
}

impl ChannelRealization {
    /// Wrap an arbitrary matrix (no ray metadata); used for synthetic tests.
    pub fn from_matrix(
        matrix: CMat,
        ms_geometry: UlaGeometry,
        bs_geometry: UlaGeometry,
    ) -> Result<Self> {
        if matrix.nrows() != ms_geometry.num_elements || matrix.ncols() != bs_geometry.num_elements
        {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{} but geometries expect {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                ms_geometry.num_elements,
                bs_geometry.num_elements
            )));
        }
        let (u, singular_values, v) = svd_sorted(&matrix);
        Ok(Self {
            matrix,
            nlos_rays: Vec::new(),
            los_component: None,
            normalization: 0.0,
            ms_geometry,
            bs_geometry,
            svd_cache: SvdCache {
                u,
                singular_values,
                v,
            },
        })
    }

    /// Rebuild the channel matrix from the stored ray metadata.
    pub fn reconstruct(&self) -> CMat {
        let n_ms = self.ms_geometry.num_elements;
        let n_bs = self.bs_geometry.num_elements;
        let mut h = CMat::zeros(n_ms, n_bs);
        for ray in &self.nlos_rays {
            let coeff = ray.gain * (self.normalization * ray.attenuation.sqrt());
            let a_ms = self.ms_geometry.steering(ray.aoa_ms);
            let a_bs = self.bs_geometry.steering(ray.aod_bs);
            h += (a_ms * coeff) * a_bs.adjoint();
        }
        if let Some(los) = &self.los_component {
            let scale = ((n_ms * n_bs) as f64 * los.attenuation).sqrt();
            let coeff = Complex64::from_polar(scale, los.phase);
            let a_ms = self.ms_geometry.steering(los.aoa_ms);
            let a_bs = self.bs_geometry.steering(los.aod_bs);
            h += (a_ms * coeff) * a_bs.adjoint();
        }
        h
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }
}

pub fn generate_channel<R: Rng + ?Sized>(
    params: &ChannelParams,
    ms_geom: &UlaGeometry,
    bs_geom: &UlaGeometry,
    rng: &mut R,
) -> Result<ChannelRealization> {
    params.validate()?;
    if params.n_clusters == 0 && params.los_probability == 0.0 {
        return Err(Error::DegenerateChannel(
            "no clusters and no line-of-sight path".into(),
        ));
    }
    let n_ms = ms_geom.num_elements;
    let n_bs = bs_geom.num_elements;
    let total_rays = params.total_rays();
    let gamma = if total_rays > 0 {
        ((n_bs * n_ms) as f64 / total_rays as f64).sqrt()
    } else {
        0.0
    };
    let nlos_att = params.pathloss.attenuation(params.distance_m, false);

    let mut rays = Vec::with_capacity(total_rays);
    for i in 0..params.n_clusters {
        let variance = per_cluster(&params.ray_gain_variance, i);
        let center_ms = params.angles.sample_center(rng);
        let center_bs = params.angles.sample_center(rng);
        for _ in 0..per_cluster(&params.rays_per_cluster, i) {
            let aoa_ms = center_ms + params.angles.sample_offset(rng);
            let aod_bs = center_bs + params.angles.sample_offset(rng);
            let gain = complex_normal(rng, variance);
            rays.push(RayPath {
                cluster: i,
                gain,
                aoa_ms,
                aod_bs,
                attenuation: nlos_att,
            });
        }
    }

    let los_component = if rng.random::<f64>() < params.los_probability {
        let phase = 2.0 * PI * rng.random::<f64>();
        let aoa_ms = params.angles.sample_center(rng);
        let aod_bs = params.angles.sample_center(rng);
        let attenuation = params.pathloss.attenuation(params.distance_m, true);
        Some(LosComponent {
            phase,
            aoa_ms,
            aod_bs,
            attenuation,
        })
    } else {
        None
    };

    let mut realization = ChannelRealization {
        matrix: CMat::zeros(n_ms, n_bs),
        nlos_rays: rays,
        los_component,
        normalization: gamma,
        ms_geometry: *ms_geom,
        bs_geometry: *bs_geom,
        svd_cache: SvdCache {
            u: CMat::zeros(0, 0),
            singular_values: Vec::new(),
            v: CMat::zeros(0, 0),
        },
    };
    realization.matrix = realization.reconstruct();
    if realization.matrix.norm() == 0.0 {
        return Err(Error::DegenerateChannel("all-zero channel matrix".into()));
    }
    let (u, singular_values, v) = svd_sorted(&realization.matrix);
    realization.svd_cache = SvdCache {
        u,
        singular_values,
        v,
    };
    Ok(realization)
}

/// Dominant left/right singular vectors and the largest singular value.
pub fn dominant_pair(realization: &ChannelRealization) -> (CVec, CVec, f64) {
    let c = &realization.svd_cache;
    (
        c.u.column(0).into_owned(),
        c.v.column(0).into_owned(),
        c.singular_values[0],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geoms(n_ms: usize, n_bs: usize) -> (UlaGeometry, UlaGeometry) {
        (
            UlaGeometry::new(n_ms).unwrap(),
            UlaGeometry::new(n_bs).unwrap(),
        )
    }

    #[test]
    fn broadside_response_is_flat() {
        let a = array_response(&UlaGeometry::new(4).unwrap(), 0.0).unwrap();
        for x in a.iter() {
            assert!((x - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn endfire_two_element_response() {
        let a = array_response(&UlaGeometry::new(2).unwrap(), PI / 2.0).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((a[0] - Complex64::new(s, 0.0)).norm() < 1e-15);
        assert!((a[1] - Complex64::new(-s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn non_finite_angle_rejected() {
        let g = UlaGeometry::new(3).unwrap();
        assert!(matches!(
            array_response(&g, f64::NAN),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn single_ray_channel_is_rank_one() {
        let (gm, gb) = geoms(8, 16);
        let params = ChannelParams {
            rays_per_cluster: vec![1],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = generate_channel(&params, &gm, &gb, &mut rng).unwrap();
        let s = &ch.svd_cache.singular_values;
        let ray = &ch.nlos_rays[0];
        let expected = ch.normalization * ray.attenuation.sqrt() * ray.gain.norm();
        assert!((s[0] - expected).abs() < 1e-10 * expected);
        assert!(s[1] < 1e-10 * s[0]);
    }

    #[test]
    fn generation_is_deterministic() {
        let (gm, gb) = geoms(16, 64);
        let params = ChannelParams {
            n_clusters: 3,
            ..Default::default()
        };
        let a = generate_channel(&params, &gm, &gb, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_channel(&params, &gm, &gb, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.nlos_rays, b.nlos_rays);
    }

    #[test]
    fn no_paths_is_degenerate() {
        let (gm, gb) = geoms(2, 2);
        let params = ChannelParams {
            n_clusters: 0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate_channel(&params, &gm, &gb, &mut rng),
            Err(Error::DegenerateChannel(_))
        ));
    }

    #[test]
    fn los_only_channel() {
        let (gm, gb) = geoms(4, 8);
        let params = ChannelParams {
            n_clusters: 0,
            los_probability: 1.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = generate_channel(&params, &gm, &gb, &mut rng).unwrap();
        assert!(ch.los_component.is_some());
        // Rank one with σ₁ = √(N_MS N_BS L).
        assert!((ch.svd_cache.singular_values[0] - (32f64).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn reconstruction_and_svd_match() {
        let (gm, gb) = geoms(16, 64);
        let params = ChannelParams {
            n_clusters: 3,
            los_probability: 0.5,
            pathloss: PathLoss::log_distance_default(),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let ch = generate_channel(&params, &gm, &gb, &mut rng).unwrap();
            assert!(crate::linalg::rel_frobenius_error(&ch.reconstruct(), &ch.matrix) < 1e-10);
            let c = &ch.svd_cache;
            let s = CMat::from_diagonal(&CVec::from_iterator(
                c.singular_values.len(),
                c.singular_values.iter().map(|&x| Complex64::new(x, 0.0)),
            ));
            let usv = &c.u * s * c.v.adjoint();
            assert!(crate::linalg::rel_frobenius_error(&usv, &ch.matrix) < 1e-10);
            assert!(c.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn diagonal_dominant_pair() {
        let (gm, gb) = geoms(2, 2);
        let h = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        let ch = ChannelRealization::from_matrix(h, gm, gb).unwrap();
        let (u, v, s) = dominant_pair(&ch);
        assert!((s - 2.0).abs() < 1e-14);
        assert!((u[0].norm() - 1.0).abs() < 1e-14 && (v[0].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dominant_pair_attains_sigma_one() {
        let (gm, gb) = geoms(16, 64);
        let params = ChannelParams {
            n_clusters: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = generate_channel(&params, &gm, &gb, &mut rng).unwrap();
        let (u, v, s) = dominant_pair(&ch);
        let g = (u.adjoint() * &ch.matrix * v)[(0, 0)].norm();
        assert!((g - s).abs() < 1e-8);
    }

    #[test]
    fn log_distance_defaults() {
        let pl = PathLoss::log_distance_default();
        // 70 dB + 30·log10(10) = 100 dB.
        assert!((pl.attenuation(10.0, false) - 1e-10).abs() < 1e-22);
        assert!((pl.attenuation(10.0, true) - 1e-9).abs() < 1e-21);
    }
}
