//! Empirical receptive field of the forward branch at every convolution layer,
//! next to the stacked-dilation count and the per-layer closed form.

use hmbitcn::cli::receptive_field_table;
use hmbitcn::model::HmBiTcnConfig;

fn main() -> hmbitcn::Result<()> {
    let cfg = HmBiTcnConfig::desk_default(4, 2);
    print!("{}", receptive_field_table(&cfg, 0)?);
    Ok(())
}
