//! Dominant singular-vector estimation for clustered mmWave MIMO links.
//!
//! Two-phase TDD protocols estimate the combiners at both link ends from
//! received samples only: PASTd and OOJA subspace trackers, a grid-based
//! least-squares covariance fit and an AML baseline solved by FISTA, under
//! fully-digital or fixed-grid hybrid beamforming, for one or many users.
//! A seeded Monte Carlo harness sweeps scenarios and writes CSV tables.
//!
//! The runnable examples are the main entry points:
//!
//! ```bash
//! cargo run --release --example channel_realization
//! cargo run --release --example track_subspace
//! cargo run --release --example ls_covariance_fit
//! cargo run --release --example hybrid_link
//! cargo run --release --example aml_fista
//! cargo run --release --example dqpsk_ser
//! cargo run --release --example multiuser_zf
//! cargo run --release --example sweep_scenario -- fig3 out/fig3
//! ```

pub mod aml;
pub mod beamforming;
pub mod channel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod ls;
pub mod metrics;
pub mod protocols;
pub mod tracking;

pub use error::{Error, Result};
