//! The six evaluation metrics on a hand-made three-class example.

use hmbitcn::train::{confusion_metrics, Evaluation};
use hmbitcn::Tensor;

fn main() -> hmbitcn::Result<()> {
    let y_true = [0, 0, 1, 1, 2, 2];
    let probs = Tensor::new(
        vec![6, 3],
        vec![
            0.7, 0.2, 0.1, //
            0.4, 0.5, 0.1, //
            0.1, 0.8, 0.1, //
            0.3, 0.4, 0.3, //
            0.2, 0.2, 0.6, //
            0.5, 0.1, 0.4,
        ],
    )?;
    let cm = confusion_metrics(&y_true, &[0, 1, 1, 1, 2, 0], 3)?;
    println!("per-class F1: {:?}", cm.f1);
    let e = Evaluation::from_scores(&y_true, &probs)?;
    for (name, v) in Evaluation::METRIC_NAMES.iter().zip(e.values()) {
        println!("{name:<9} {v:.4}");
    }
    Ok(())
}
