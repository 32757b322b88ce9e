//! A Monte Carlo comparison of the naive, calibrated and oracle estimators.
//!
//! Defaults to n = 100, 20% censoring and the strong quadratic distortion;
//! pass the number of replications as the first argument.
//!
//! ```bash
//! cargo run --release -p distortcox --example simulation_study -- 500
//! ```

use distortcox::simulation::{calibrate_tau, run_study_with_tau, DistortionSpec, SimulationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let mut config = SimulationConfig::paper(100, 0.2, DistortionSpec::quadratic_paper());
    config.replications = reps;

    let tau = calibrate_tau(&config)?;
    println!("{}; tau = {:.4} gives {:.1}% censoring in the pilot sample", config.distortion, tau.tau, 100.0 * tau.pilot_cr);
    let summary = run_study_with_tau(&config, tau.tau)?;
    println!(
        "{} replications ({} failed), achieved censoring {:.1}%",
        summary.replications,
        summary.replication_failures,
        100.0 * summary.achieved_cr
    );
    println!();
    println!("{:<10} {:<6} {:>7} {:>6} {:>6} {:>6} {:>6}", "method", "param", "Bias", "SD", "SE", "MSE", "CP");
    for row in &summary.rows {
        println!(
            "{:<10} {:<6} {:>7.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3}",
            row.method.label(),
            row.parameter,
            row.bias,
            row.sd.unwrap_or(f64::NAN),
            row.se,
            row.mse,
            row.cp
        );
    }
    Ok(())
}
