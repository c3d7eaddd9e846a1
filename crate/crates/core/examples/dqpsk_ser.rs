//! Differential 4-PSK symbol error rate through estimated versus ideal
//! beamformers.

use mmwave_subspace::beamforming::Architecture;
use mmwave_subspace::channel::{generate_channel, ChannelParams};
use mmwave_subspace::metrics::ser_differential;
use mmwave_subspace::protocols::{run_single_user_on, Estimator, LinkConfig, LinkContext};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mmwave_subspace::Result<()> {
    let ctx = LinkContext::new(LinkConfig::new(16, 64, 8, 8, 1)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let snrs = [-30.0, -25.0, -20.0, -15.0];
    let trials = 20;
    let symbols = 2000;

    let cases = [
        (Estimator::PerfectCsi, Architecture::FullyDigital),
        (Estimator::Pastd, Architecture::FullyDigital),
        (Estimator::Pastd, Architecture::Hybrid),
    ];
    print!("{:<14}", "SNR dB");
    snrs.iter().for_each(|s| print!("{s:>10.0}"));
    println!();
    for (estimator, arch) in cases {
        let mut errors = vec![0u64; snrs.len()];
        let mut total = 0u64;
        let mut ch_rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..trials {
            let channel = generate_channel(
                &ChannelParams::default(),
                &ctx.config.ms,
                &ctx.config.bs,
                &mut ch_rng,
            )?;
            for (i, &snr) in snrs.iter().enumerate() {
                let noise_var = 10f64.powf(-snr / 10.0);
                let out = run_single_user_on(&ctx, &channel, estimator, arch, noise_var, &mut rng)?;
                let s = ser_differential(
                    &channel.matrix,
                    &out.d_ms.full_matrix,
                    &out.d_bs.full_matrix,
                    &[(snr, noise_var)],
                    symbols,
                    1.0,
                    &mut rng,
                )?;
                errors[i] += s[0].num_errors;
            }
            total += symbols;
        }
        print!("{:<14}", format!("{}-{}", estimator.label(), arch.label()));
        errors
            .iter()
            .for_each(|&e| print!("{:>10.2e}", e as f64 / total as f64));
        println!();
    }
    Ok(())
}
