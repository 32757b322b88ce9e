//! Estimating the distortion function and undoing it.
//!
//! Simulates `X̃ = φ(U)·X` with `φ(u) = 3(u + 1)²/79`, estimates `φ` by
//! Nadaraya-Watson smoothing of `X̃` on `U` divided by the mean of `X̃`, and
//! compares the calibrated covariate with the (normally unobserved) truth.
//!
//! ```bash
//! cargo run --release -p distortcox --example calibrate_covariate
//! ```

use distortcox::calibration::calibrate;
use distortcox::kernel::{select_bandwidth, BandwidthGrid};
use distortcox::rng::StreamRng;
use distortcox::simulation::{generate_dataset, DistortionSpec, SimulationConfig};

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let phi = DistortionSpec::quadratic_paper();
    let config = SimulationConfig::paper(1000, 0.2, phi.clone());
    let data = generate_dataset(&config, 1.0, &mut StreamRng::new(7, 0));
    let u = data.u();
    let x_tilde = data.x_tilde();
    let x = data.x_true().expect("simulated data keep X");

    let h = select_bandwidth(&u, &BandwidthGrid::around_silverman(&u)?)?;
    let cal = calibrate(&u, &x_tilde, h)?;

    println!("{phi}, n = {}, bandwidth {:.4}", data.n(), h.value());
    println!("{:>6}  {:>8}  {:>8}", "u", "phi", "phi_hat");
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    for &i in order.iter().step_by(u.len() / 10) {
        println!("{:>6.3}  {:>8.4}  {:>8.4}", u[i], phi.eval(u[i]), cal.phi_hat[i]);
    }
    println!();
    println!("mean |X~ - X| = {:.4}", mean_abs_diff(&x_tilde, &x));
    println!("mean |X^ - X| = {:.4}", mean_abs_diff(&cal.x_hat, &x));
    Ok(())
}
