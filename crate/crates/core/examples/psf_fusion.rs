//! Pairwise fusion with explicit (source, partner, destination) triples,
//! compared against the group form it generalises.

use hmbitcn::cif::{ChannelPair, CifConfig};
use hmbitcn::Tensor;

fn main() -> hmbitcn::Result<()> {
    let x = Tensor::new(vec![1, 1, 6], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])?;
    let group = CifConfig::new(1, 2, 0.5, 2.0);
    let pairs = group.fusion_pairs(6);
    println!("group form as triples: {pairs:?}");
    let psf = CifConfig::psf(pairs, 0.5, 2.0);
    assert_eq!(group.apply(&x)?, psf.apply(&x)?);

    // Arbitrary pairing: fuse channel 1 with channel 4 into channel 5.
    let custom = CifConfig::psf(vec![ChannelPair::new(1, 4, 5)], 1.0, -1.0);
    println!("custom pairing: {:?}", custom.apply(&x)?.data());
    Ok(())
}
