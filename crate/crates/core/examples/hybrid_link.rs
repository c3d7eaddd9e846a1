//! Run the two-phase protocol with every estimator on one channel, under
//! fully-digital and hybrid beamforming, and report correlations and
//! spectral efficiency.

use mmwave_subspace::beamforming::Architecture;
use mmwave_subspace::channel::{generate_channel, ChannelParams};
use mmwave_subspace::metrics::{correlation, se_single_user, LinkDirection};
use mmwave_subspace::protocols::{run_single_user_on, Estimator, LinkConfig, LinkContext};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mmwave_subspace::Result<()> {
    let config = LinkConfig::new(16, 64, 8, 8, 1)?;
    let ctx = LinkContext::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let channel = generate_channel(
        &ChannelParams::default(),
        &ctx.config.ms,
        &ctx.config.bs,
        &mut rng,
    )?;
    let noise_var = 10f64.powf(-10.0 / 10.0);
    let c = &channel.svd_cache;

    println!("16x64 link, 8/8 RF chains, SNR 10 dB");
    println!(
        "{:<11} {:<3} {:>7} {:>7} {:>9}",
        "estimator", "", "eta_U", "eta_V", "SE b/s/Hz"
    );
    for estimator in Estimator::ALL {
        for arch in [Architecture::FullyDigital, Architecture::Hybrid] {
            if !estimator.supports(arch) {
                continue;
            }
            let out = run_single_user_on(&ctx, &channel, estimator, arch, noise_var, &mut rng)?;
            let (d_ms, d_bs) = (&out.d_ms.full_matrix, &out.d_bs.full_matrix);
            let se = se_single_user(
                &channel.matrix,
                d_ms,
                d_bs,
                1.0,
                noise_var,
                LinkDirection::Downlink,
            )?;
            println!(
                "{:<11} {:<3} {:>7.3} {:>7.3} {:>9.2}",
                estimator.label(),
                arch.label(),
                correlation(c.u.column(0), d_ms.column(0))?,
                correlation(c.v.column(0), d_bs.column(0))?,
                se
            );
        }
    }
    Ok(())
}
