//! Channel-imposed fusion on a tiny batch, in both overwrite directions.

use hmbitcn::cif::CifConfig;
use hmbitcn::Tensor;

fn main() -> hmbitcn::Result<()> {
    // B=1, T=2, C=4: channels (0,1) are the front group, (2,3) the back group.
    let x = Tensor::new(vec![1, 2, 4], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])?;
    for t in [1, -1] {
        let cfg = CifConfig::new(t, 2, 1.0, -1.0);
        let y = cfg.apply(&x)?;
        println!("t = {t:>2}: {:?}", y.data());
    }
    Ok(())
}
