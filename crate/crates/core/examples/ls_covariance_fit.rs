//! Fit a sample covariance with grid steering matrices and compare the
//! fitted dominant eigenvector against the unfitted one.

use mmwave_subspace::channel::{dominant_pair, generate_channel, ChannelParams, UlaGeometry};
use mmwave_subspace::linalg::{complex_normal_matrix, dominant_eigvecs};
use mmwave_subspace::ls::{build_grid, sample_covariance, LsFitter, LsOptions};
use mmwave_subspace::metrics::correlation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mmwave_subspace::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (ms, bs) = (UlaGeometry::new(16)?, UlaGeometry::new(64)?);
    let fitter = LsFitter::new(build_grid(&ms, 8 * 16, None)?, LsOptions::default())?;
    println!(
        "grid of {} points, epsilon = {:.3e}",
        fitter.grid.size, fitter.epsilon
    );
    println!("{:>8} {:>10} {:>10}", "SNR dB", "raw", "LS fit");
    for snr_db in [-20.0, -10.0, 0.0, 10.0] {
        let channel = generate_channel(&ChannelParams::default(), &ms, &bs, &mut rng)?;
        let (u1, _, _) = dominant_pair(&channel);
        let noise_var = 10f64.powf(-snr_db / 10.0);
        let received = &channel.matrix * complex_normal_matrix(&mut rng, 64, 30, 1.0)
            + complex_normal_matrix(&mut rng, 16, 30, noise_var);
        let e = sample_covariance(&received)?;
        let (_, raw) = dominant_eigvecs(&e, 1);
        let fit = fitter.fit(&e, 1)?;
        println!(
            "{snr_db:>8.0} {:>10.4} {:>10.4}",
            correlation(u1.as_view(), raw.column(0))?,
            correlation(u1.as_view(), fit.basis.column(0))?
        );
    }
    Ok(())
}
