//! Reverse-mode gradients of the full model, learnable CIF included,
//! against central finite differences.

use hmbitcn::cif::{CifConfig, CoefficientMode};
use hmbitcn::model::{HmBiTcn, HmBiTcnConfig};
use hmbitcn::rng::{seeded, Normal};
use hmbitcn::Tensor;

fn main() -> hmbitcn::Result<()> {
    let mut cfg = HmBiTcnConfig::desk_default(4, 3);
    cfg.channel_widths = vec![4, 4, 4];
    cfg.cif = Some(CifConfig::new(1, 2, 0.8, -0.6).with_mode(CoefficientMode::LearnableSuppression));
    let model = HmBiTcn::new(cfg, 11)?;
    let mut normal = Normal::new(seeded(5));
    let x = Tensor::new(vec![2, 16, 4], (0..128).map(|_| normal.sample()).collect())?;
    for (name, err) in model.gradient_check(&x, &[0, 2], 1e-6)? {
        println!("{name:<28} {err:.2e}");
    }
    Ok(())
}
