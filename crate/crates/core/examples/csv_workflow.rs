//! Reading a CSV file through a column mapping and fitting it.
//!
//! The bundled file has an id column, two adjustment covariates, the
//! confounder `u`, the distorted covariate `x`, its undistorted value
//! `x_true` and a grouping column; only mapped columns are read.
//!
//! ```bash
//! cargo run --release -p distortcox --example csv_workflow
//! ```

use std::path::Path;

use distortcox::cli::config::{BandwidthChoice, FitMethod};
use distortcox::cli::{coefficients_csv, fit_dataset};
use distortcox::data::{ingest_csv, ColumnMapping};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_linear.csv");
    let mapping = ColumnMapping {
        time: "time".into(),
        event: "event".into(),
        covariate: "x".into(),
        confounder: "u".into(),
        adjust: vec!["z1".into(), "z2".into()],
        truth: Some("x_true".into()),
    };
    let ingested = ingest_csv(&path, &mapping)?;
    let data = &ingested.dataset;
    println!("{} subjects, {} dropped, censoring {:.1}%", data.n(), ingested.rejected.len(), 100.0 * data.censoring_rate());

    for method in [FitMethod::Naive, FitMethod::Proposed] {
        let fit = fit_dataset(data, method, BandwidthChoice::Auto, None, 0.95)?;
        println!();
        println!("{}:", method.label());
        print!("{}", coefficients_csv(&fit));
    }
    Ok(())
}
