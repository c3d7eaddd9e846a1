//! Serve several users at once: every MS estimates its combiner from a
//! broadcast probe, then the BS separates their uplink pilots with pilot
//! matching or zero forcing.

use mmwave_subspace::beamforming::Architecture;
use mmwave_subspace::channel::{generate_channel, ChannelParams, PathLoss};
use mmwave_subspace::metrics::{se_multiuser, LinkDirection};
use mmwave_subspace::protocols::{
    make_pilots, run_multiuser, EstimationMode, Estimator, LinkConfig, LinkContext,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mmwave_subspace::Result<()> {
    let users = 6;
    let (p_bs, p_ms) = (1.0, 0.1);
    let noise_var = 7.94e-12;
    let mut config = LinkConfig::new(4, 64, 2, 16, 1)?;
    config.probe_len_bs = 60;
    config.probe_len_ms = 32;
    config.probe_power_bs = p_bs / 64.0;
    config.probe_power_ms = p_ms;
    let ctx = LinkContext::new(config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let channels = (0..users)
        .map(|_| {
            let params = ChannelParams {
                pathloss: PathLoss::log_distance_default(),
                distance_m: rng.random_range(5.0..=100.0),
                ..ChannelParams::default()
            };
            generate_channel(&params, &ctx.config.ms, &ctx.config.bs, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let matrices: Vec<_> = channels.iter().map(|c| c.matrix.clone()).collect();
    // Unit-energy pilot rows over 32 slots, each slot sent at p_ms.
    let pilots = make_pilots(users, 1, 32, &vec![32.0 * p_ms; users], &mut rng)?;

    println!("{users} users, 4x64, 2/16 RF chains, downlink SE per user (bit/s/Hz)");
    for (estimator, arch, mode) in [
        (
            Estimator::PerfectCsi,
            Architecture::FullyDigital,
            EstimationMode::ZeroForcing,
        ),
        (
            Estimator::Pastd,
            Architecture::FullyDigital,
            EstimationMode::ZeroForcing,
        ),
        (
            Estimator::Pastd,
            Architecture::FullyDigital,
            EstimationMode::PilotMatched,
        ),
        (
            Estimator::Pastd,
            Architecture::Hybrid,
            EstimationMode::ZeroForcing,
        ),
    ] {
        let out = run_multiuser(
            &ctx, &channels, estimator, arch, mode, &pilots, noise_var, &mut rng,
        )?;
        let d: Vec<_> = out.d.iter().map(|b| b.full_matrix.clone()).collect();
        let se = se_multiuser(
            &matrices,
            &d,
            &out.j,
            p_bs,
            p_ms,
            noise_var,
            LinkDirection::Downlink,
        )?;
        let label = format!("{}-{} {:?}", estimator.label(), arch.label(), mode);
        println!("{label:<28} {:.2?}", se);
    }
    Ok(())
}
