//! Feed noisy received samples to PASTd and OOJA and watch the dominant
//! eigenvector estimate converge.

use mmwave_subspace::channel::{dominant_pair, generate_channel, ChannelParams, UlaGeometry};
use mmwave_subspace::linalg::{complex_normal_matrix, CMat};
use mmwave_subspace::metrics::correlation;
use mmwave_subspace::tracking::{svd_init, OojaState, OojaVariant, PastdState, SubspaceTracker};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mmwave_subspace::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (ms, bs) = (UlaGeometry::new(16)?, UlaGeometry::new(64)?);
    let channel = generate_channel(&ChannelParams::default(), &ms, &bs, &mut rng)?;
    let (u1, _, _) = dominant_pair(&channel);

    let snr_db = 0.0;
    let noise_var = 10f64.powf(-snr_db / 10.0);
    let samples = 200;
    let probes = complex_normal_matrix(&mut rng, 64, samples, 1.0);
    let noise = complex_normal_matrix(&mut rng, 16, samples, noise_var);
    let received: CMat = &channel.matrix * probes + noise;

    let init = svd_init(&received.columns(0, 10).into_owned(), 1)?;
    let mut pastd = PastdState::from_init(&init, 0.995)?;
    let mut ooja = OojaState::from_init(&init, 0.01, OojaVariant::Principal)?.normalized_to(&init);
    println!("SNR {snr_db} dB, tracking the dominant left singular vector of a 16x64 channel");
    println!("{:>6} {:>8} {:>8}", "step", "PASTd", "OOJA");
    for (n, col) in received.column_iter().enumerate().skip(10) {
        pastd.update(col.as_view())?;
        ooja.update(col.as_view())?;
        if (n + 1) % 20 == 0 {
            let p = pastd.finalize().basis;
            let o = ooja.finalize().basis;
            println!(
                "{:>6} {:>8.4} {:>8.4}",
                n + 1,
                correlation(u1.as_view(), p.column(0))?,
                correlation(u1.as_view(), o.column(0))?
            );
        }
    }
    let w = ooja.finalize().basis;
    let gram = w.adjoint() * &w - CMat::identity(1, 1);
    println!(
        "OOJA |W^H W - I| = {:.2e}",
        gram.map(|x: Complex64| x.norm()).max()
    );
    Ok(())
}
