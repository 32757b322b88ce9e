//! Stratified Kaplan-Meier curves from the bundled synthetic file, with an
//! SVG step plot written to the system temp directory.
//!
//! ```bash
//! cargo run --release -p distortcox --example kaplan_meier
//! ```

use std::fs::File;
use std::path::Path;

use distortcox::cli::svg::{step_plot, StepSeries};
use distortcox::data::read_time_event;
use distortcox::km::km_estimate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_linear.csv");
    let (rows, _) = read_time_event(File::open(&path)?, "time", "event", Some("group"))?;

    let mut curves = Vec::new();
    for group in ["low", "high"] {
        let (t, e): (Vec<f64>, Vec<bool>) = rows
            .iter()
            .filter(|r| r.stratum.as_deref() == Some(group))
            .map(|r| (r.time, r.event))
            .unzip();
        let curve = km_estimate(&t, &e)?;
        println!("group {group}: n = {}, S(0.25) = {:.3}, S(0.5) = {:.3}", curve.n, curve.survival_at(0.25), curve.survival_at(0.5));
        curves.push((group, curve));
    }

    let t_max = rows.iter().map(|r| r.time).fold(0.0, f64::max);
    let series: Vec<StepSeries<'_>> = curves
        .iter()
        .map(|(label, c)| StepSeries { label, points: c.times.iter().copied().zip(c.survival.iter().copied()).collect() })
        .collect();
    let out = std::env::temp_dir().join("kaplan_meier.svg");
    std::fs::write(&out, step_plot(&series, t_max, "time"))?;
    println!("wrote {}", out.display());
    Ok(())
}
