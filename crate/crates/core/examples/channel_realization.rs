//! Draw clustered channels and inspect their structure.
//!
//! ```bash
//! cargo run --release --example channel_realization
//! ```

use mmwave_subspace::channel::{
    dominant_pair, generate_channel, ChannelParams, PathLoss, UlaGeometry,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mmwave_subspace::Result<()> {
    let ms = UlaGeometry::new(16)?;
    let bs = UlaGeometry::new(64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let params = ChannelParams::default();
    let channel = generate_channel(&params, &ms, &bs, &mut rng)?;
    let s = &channel.svd_cache.singular_values;
    let energy: f64 = s.iter().map(|x| x * x).sum();
    println!(
        "16x64 channel, {} rays, ||H||_F^2 = {:.1}",
        channel.nlos_rays.len(),
        channel.matrix.norm_squared()
    );
    println!("top singular values: {:.2?}", &s[..4]);
    println!(
        "energy in the dominant mode: {:.1}%",
        100.0 * s[0] * s[0] / energy
    );
    for ray in &channel.nlos_rays {
        println!(
            "  cluster {} AoA {:+6.1} deg  AoD {:+6.1} deg  |gain| {:.2}",
            ray.cluster,
            ray.aoa_ms.to_degrees(),
            ray.aod_bs.to_degrees(),
            ray.gain.norm()
        );
    }

    let (u, v, sigma) = dominant_pair(&channel);
    let check = (u.adjoint() * &channel.matrix * &v)[(0, 0)].norm();
    println!("|u1^H H v1| = {check:.4} (sigma1 = {sigma:.4})");

    // Same draw with a 73 GHz path loss at 50 m and three clusters.
    let far = ChannelParams {
        n_clusters: 3,
        pathloss: PathLoss::log_distance_default(),
        distance_m: 50.0,
        ..ChannelParams::default()
    };
    let channel = generate_channel(&far, &ms, &bs, &mut rng)?;
    println!(
        "3 clusters at 50 m: ||H||_F^2 = {:.3e}, attenuation {:.3e}",
        channel.matrix.norm_squared(),
        far.pathloss.attenuation(50.0, false)
    );
    Ok(())
}
