//! Least-squares cross-validation for the confounder bandwidth.
//!
//! Draws `U ~ Unif[2, 6]`, evaluates the CV criterion over the default
//! log-spaced grid around Silverman's rule, and prints the curve.
//!
//! ```bash
//! cargo run --release -p distortcox --example bandwidth_selection -- 200
//! ```

use distortcox::kernel::{cv_curve, silverman_bandwidth, BandwidthGrid};
use distortcox::rng::StreamRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let mut rng = StreamRng::new(42, 0);
    let u: Vec<f64> = (0..n).map(|_| rng.uniform_range(2.0, 6.0)).collect();

    let reference = silverman_bandwidth(&u)?;
    let grid = BandwidthGrid::around_silverman(&u)?;
    let curve = cv_curve(&u, &grid)?;

    println!("n = {n}, Silverman reference h = {:.4}", reference.value());
    println!("{:>10}  {:>12}", "h", "CV(h)");
    for (k, (h, score)) in curve.bandwidths.iter().zip(&curve.scores).enumerate() {
        let mark = if k == curve.selected_index { "  <- selected" } else { "" };
        println!("{:>10.4}  {:>12.6}{mark}", h.value(), score);
    }
    println!("selected h = {:.4}", curve.selected.value());
    Ok(())
}
