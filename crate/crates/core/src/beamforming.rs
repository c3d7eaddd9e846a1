//! Fixed-grid analog RF stages, hybrid beamformers and composite channels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::UlaGeometry;
use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Placement of the analog steering grid over `[−π/2, π/2]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridLayout {
    /// `ϑ_i = −π/2 + π(i−1)/N^RF`, never reaching `+π/2`.
    #[default]
    Printed,
    /// Same spacing shifted by half a step so the grid is symmetric.
    Centered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfGrid {
    pub num_chains: usize,
    pub angles: Vec<f64>,
}

impl RfGrid {
    pub fn new(num_chains: usize, layout: GridLayout) -> Result<Self> {
        if num_chains == 0 {
            return Err(Error::InvalidConfig(
                "at least one RF chain is required".into(),
            ));
        }
        let step = PI / num_chains as f64;
        let offset = match layout {
            GridLayout::Printed => 0.0,
            GridLayout::Centered => 0.5,
        };
        let angles = (0..num_chains)
            .map(|i| -PI / 2.0 + step * (i as f64 + offset))
            .collect();
        Ok(Self { num_chains, angles })
    }
}

/// RF combiner whose columns are array responses over the printed angle grid.
pub fn build_rf_combiner(geometry: &UlaGeometry, num_chains: usize) -> Result<CMat> {
    build_rf_combiner_with(geometry, num_chains, GridLayout::Printed)
}

pub fn build_rf_combiner_with(
    geometry: &UlaGeometry,
    num_chains: usize,
    layout: GridLayout,
) -> Result<CMat> {
    if num_chains > geometry.num_elements {
        return Err(Error::InvalidConfig(format!(
            "{num_chains} RF chains exceed {} antennas",
            geometry.num_elements
        )));
    }
    let grid = RfGrid::new(num_chains, layout)?;
    let mut rf = CMat::zeros(geometry.num_elements, num_chains);
    for (j, &angle) in grid.angles.iter().enumerate() {
        rf.set_column(j, &geometry.steering(angle));
    }
    Ok(rf)
}

/// `H̃ = D_MS,RFᴴ · H · D_BS,RF`.
pub fn composite_channel(h: &CMat, rf_ms: &CMat, rf_bs: &CMat) -> Result<CMat> {
    if rf_ms.nrows() != h.nrows() || rf_bs.nrows() != h.ncols() {
        return Err(Error::InvalidArgument(format!(
            "channel {}x{} does not conform with RF stages {}x{} and {}x{}",
            h.nrows(),
            h.ncols(),
            rf_ms.nrows(),
            rf_ms.ncols(),
            rf_bs.nrows(),
            rf_bs.ncols()
        )));
    }
    Ok(rf_ms.adjoint() * h * rf_bs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "FD")]
    FullyDigital,
    #[serde(rename = "HY")]
    Hybrid,
}

impl Architecture {
    pub fn label(self) -> &'static str {
        match self {
            Architecture::FullyDigital => "FD",
            Architecture::Hybrid => "HY",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    pub kind: Architecture,
    pub full_matrix: CMat,
    pub rf_part: Option<CMat>,
    pub bb_part: Option<CMat>,
}

impl Beamformer {
    pub fn fully_digital(matrix: CMat) -> Self {
        Self {
            kind: Architecture::FullyDigital,
            full_matrix: matrix,
            rf_part: None,
            bb_part: None,
        }
    }

    pub fn hybrid(rf_part: CMat, bb_part: CMat) -> Result<Self> {
        if rf_part.ncols() != bb_part.nrows() {
            return Err(Error::InvalidArgument(format!(
                "RF part has {} chains, baseband part has {} rows",
                rf_part.ncols(),
                bb_part.nrows()
            )));
        }
        let full_matrix = &rf_part * &bb_part;
        Ok(Self {
            kind: Architecture::Hybrid,
            full_matrix,
            rf_part: Some(rf_part),
            bb_part: Some(bb_part),
        })
    }

    pub fn streams(&self) -> usize {
        self.full_matrix.ncols()
    }

    /// True when every RF entry has modulus `1/√N_ant` (vacuous for FD).
    pub fn rf_modulus_ok(&self, tol: f64) -> bool {
        match &self.rf_part {
            None => true,
            Some(rf) => {
                let target = 1.0 / (rf.nrows() as f64).sqrt();
                rf.iter().all(|x| (x.norm() - target).abs() <= tol)
            }
        }
    }
}

pub fn effective_beamformer(b: &Beamformer) -> CMat {
    b.full_matrix.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_normal_matrix, ZERO};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn printed_grid_spans_half_open_interval() {
        let g = RfGrid::new(8, GridLayout::Printed).unwrap();
        assert_eq!(g.angles.len(), 8);
        assert!((g.angles[0] + PI / 2.0).abs() < 1e-15);
        assert!(g.angles.windows(2).all(|w| w[0] < w[1]));
        assert!(*g.angles.last().unwrap() < PI / 2.0);
    }

    #[test]
    fn centered_grid_is_symmetric() {
        let g = RfGrid::new(4, GridLayout::Centered).unwrap();
        for i in 0..4 {
            assert!((g.angles[i] + g.angles[3 - i]).abs() < 1e-14);
        }
    }

    #[test]
    fn single_chain_points_to_minus_half_pi() {
        let geom = UlaGeometry::new(4).unwrap();
        let rf = build_rf_combiner(&geom, 1).unwrap();
        let a = geom.steering(-PI / 2.0);
        assert_eq!(rf.column(0), a.column(0));
    }

    #[test]
    fn full_grid_columns_have_unit_norm() {
        let geom = UlaGeometry::new(8).unwrap();
        let rf = build_rf_combiner(&geom, 8).unwrap();
        let gram = rf.adjoint() * &rf;
        for i in 0..8 {
            assert!((gram[(i, i)].re - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn entries_match_direct_formula() {
        let geom = UlaGeometry::new(64).unwrap();
        let rf = build_rf_combiner(&geom, 8).unwrap();
        for j in 0..8 {
            let theta = -PI / 2.0 + PI * j as f64 / 8.0;
            for m in [0usize, 1, 17, 63] {
                let expected = Complex64::from_polar(1.0 / 8.0, -PI * m as f64 * theta.sin());
                assert!((rf[(m, j)] - expected).norm() < 1e-13);
            }
        }
        assert!(rf.iter().all(|x| (x.norm() - 0.125).abs() < 1e-15));
    }

    #[test]
    fn too_many_chains_rejected() {
        let geom = UlaGeometry::new(4).unwrap();
        assert!(matches!(
            build_rf_combiner(&geom, 5),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn composite_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = complex_normal_matrix(&mut rng, 4, 6, 1.0);
        let c = composite_channel(&h, &CMat::identity(4, 4), &CMat::identity(6, 6)).unwrap();
        assert_eq!(c, h);
        let z = CMat::zeros(4, 6);
        let rf_ms = build_rf_combiner(&UlaGeometry::new(4).unwrap(), 2).unwrap();
        let rf_bs = build_rf_combiner(&UlaGeometry::new(6).unwrap(), 3).unwrap();
        assert!(composite_channel(&z, &rf_ms, &rf_bs)
            .unwrap()
            .iter()
            .all(|x| *x == ZERO));
    }

    #[test]
    fn composite_matches_explicit_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = complex_normal_matrix(&mut rng, 16, 64, 1.0);
        let rf_ms = build_rf_combiner(&UlaGeometry::new(16).unwrap(), 8).unwrap();
        let rf_bs = build_rf_combiner(&UlaGeometry::new(64).unwrap(), 8).unwrap();
        let c = composite_channel(&h, &rf_ms, &rf_bs).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = ZERO;
                for a in 0..16 {
                    for b in 0..64 {
                        acc += rf_ms[(a, i)].conj() * h[(a, b)] * rf_bs[(b, j)];
                    }
                }
                assert!((acc - c[(i, j)]).norm() < 1e-12 * (1.0 + acc.norm()));
            }
        }
    }

    #[test]
    fn composite_shape_mismatch() {
        let h = CMat::zeros(4, 6);
        assert!(composite_channel(&h, &CMat::identity(5, 5), &CMat::identity(6, 6)).is_err());
    }

    #[test]
    fn effective_beamformer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rf = build_rf_combiner(&UlaGeometry::new(16).unwrap(), 4).unwrap();
        let bb = complex_normal_matrix(&mut rng, 4, 2, 1.0);
        let b = Beamformer::hybrid(rf.clone(), bb.clone()).unwrap();
        let eff = effective_beamformer(&b);
        for i in 0..16 {
            for j in 0..2 {
                let acc: Complex64 = (0..4).map(|k| rf[(i, k)] * bb[(k, j)]).sum();
                assert!((acc - eff[(i, j)]).norm() < 1e-12);
            }
        }
        assert!(b.rf_modulus_ok(1e-15));
        let zero = Beamformer::hybrid(rf, CMat::zeros(4, 2)).unwrap();
        assert!(effective_beamformer(&zero).iter().all(|x| *x == ZERO));
        let d = complex_normal_matrix(&mut rng, 8, 1, 1.0);
        assert_eq!(
            effective_beamformer(&Beamformer::fully_digital(d.clone())),
            d
        );
    }
}
