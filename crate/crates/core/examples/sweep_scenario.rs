//! Run a built-in preset or a scenario file and write its result tables.
//!
//! ```bash
//! cargo run --release --example sweep_scenario -- fig3 out/fig3 20
//! cargo run --release --example sweep_scenario -- my_scenario.toml out/mine
//! ```

use std::path::{Path, PathBuf};

use mmwave_subspace::harness::{
    preset, run_scenario, write_csv, EmitOptions, RunOptions, Scenario,
};

fn main() -> mmwave_subspace::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let source = args.first().map(String::as_str).unwrap_or("fig4");
    let out = PathBuf::from(args.get(1).map(String::as_str).unwrap_or("out/example"));
    let mut scenario = if Path::new(source).exists() {
        Scenario::from_path(Path::new(source))?
    } else {
        preset(source)?
    };
    if let Some(trials) = args.get(2).and_then(|t| t.parse().ok()) {
        scenario.trials = trials;
    }

    let table = run_scenario(&scenario, RunOptions::default())?;
    for path in write_csv(&scenario, &table, &out, EmitOptions::default())? {
        println!("wrote {}", path.display());
    }
    for a in table.aggregates.iter().filter(|a| a.metric != "eta_v") {
        println!(
            "{:<11} {:<3} {:>7} {:<13} mean {:>9.4}  p5 {:>9.4}  p95 {:>9.4}",
            a.estimator.label(),
            a.architecture.label(),
            a.sweep_value,
            a.metric,
            a.mean,
            a.p5,
            a.p95
        );
    }
    Ok(())
}
