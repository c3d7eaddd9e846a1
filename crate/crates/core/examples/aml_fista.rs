//! Solve the sampled-array AML problem with FISTA and read off the
//! dominant direction.

use mmwave_subspace::aml::{
    aml_sketch, aml_solve, fixed_point_residual, make_sampler, AmlProblem, SamplerPattern,
};
use mmwave_subspace::channel::{dominant_pair, generate_channel, ChannelParams, UlaGeometry};
use mmwave_subspace::linalg::{complex_normal_matrix, CMat};
use mmwave_subspace::metrics::correlation;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mmwave_subspace::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (ms, bs) = (UlaGeometry::new(16)?, UlaGeometry::new(64)?);
    let channel = generate_channel(&ChannelParams::default(), &ms, &bs, &mut rng)?;
    let (u1, _, _) = dominant_pair(&channel);

    let noise_var = 0.1;
    let probe = CMat::from_element(64, 30, Complex64::new(1.0, 0.0));
    let received = &channel.matrix * probe + complex_normal_matrix(&mut rng, 16, 30, noise_var);

    for pattern in [SamplerPattern::First, SamplerPattern::Random] {
        let sampler = make_sampler(16, 8, pattern, &mut rng)?;
        let sketches = aml_sketch(&received, &sampler);
        let problem = AmlProblem::new(&ms, sampler.clone(), 4 * 16, sketches, noise_var)?;
        let sol = aml_solve(&problem, 2000, 1e-6, 1)?;
        println!("sampler {pattern:?} {sampler:?}");
        println!(
            "  {} iterations (converged: {}), objective {:.4}, residual {:.2e}",
            sol.iterations,
            sol.converged,
            sol.objective,
            fixed_point_residual(&problem, &sol.w)
        );
        println!(
            "  dominant grid angle {:+.1} deg, eta_U = {:.3}",
            problem.grid_angles[sol.dominant_index()].to_degrees(),
            correlation(u1.as_view(), sol.subspace.column(0))?
        );
    }
    Ok(())
}
