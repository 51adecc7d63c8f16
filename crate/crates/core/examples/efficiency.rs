//! Parameter counts and wall-clock cost per batch for each direction mode.

use hmbitcn::model::{timing_report, DirectionMode, HmBiTcnConfig};

fn main() -> hmbitcn::Result<()> {
    println!("mode,parameters,active_parameters,forward_ms,forward_backward_ms");
    for mode in DirectionMode::ALL {
        let mut cfg = HmBiTcnConfig::desk_default(4, 2);
        cfg.direction_mode = mode;
        let r = timing_report(&cfg, 32, 64, 5)?;
        println!(
            "{},{},{},{:.2},{:.2}",
            mode.label(),
            r.parameters,
            r.active_parameters,
            r.forward_ms,
            r.forward_backward_ms
        );
    }
    Ok(())
}
