//! Trains the classifier with difference-mode CIF on the synthetic low-SNR
//! task for two seeds and prints the test metrics.

use hmbitcn::cli::default_experiment;
use hmbitcn::train::{history_csv, run_multi_seed};

fn main() -> hmbitcn::Result<()> {
    let mut exp = default_experiment();
    exp.train.seeds = vec![41, 42];
    exp.train.max_epochs = 30;
    let result = run_multi_seed(&exp)?;
    for run in &result.runs {
        println!("seed {} stopped at best epoch {}", run.seed, run.outcome.best_epoch);
    }
    print!("{}", history_csv(&result.runs[0].outcome.history));
    print!("{}", result.report.summary());
    Ok(())
}
