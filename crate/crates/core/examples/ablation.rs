//! The {CIF off, on} × {forward, backward, both} grid on the synthetic task.
//! Takes a few minutes on one core.

use hmbitcn::ablation::{ablation_csv, run_ablation};
use hmbitcn::cli::default_experiment;

fn main() -> hmbitcn::Result<()> {
    let rows = run_ablation(&default_experiment())?;
    print!("{}", ablation_csv(&rows));
    Ok(())
}
