//! Subspace diagnostics of a fused block: linear-identity residual,
//! shared-pattern error and principal angles between the two groups.

use hmbitcn::rng::{seeded, Normal};
use hmbitcn::svd::{report_row, svd, Matrix, SvdReportRow};

fn main() -> hmbitcn::Result<()> {
    let n = 4;
    let mut normal = Normal::new(seeded(3));
    let independent = Matrix::from_fn(64, 2 * n, |_, _| normal.sample());
    // Back group is an exact multiple of the front group.
    let shared = Matrix::from_fn(64, 2 * n, |i, j| independent[(i, j % n)] * if j < n { 1.0 } else { -0.5 });

    println!("{}", SvdReportRow::CSV_HEADER);
    for x in [&independent, &shared] {
        println!("{}", report_row(x, n, 1.0, -1.0)?.csv_row());
    }
    let f = svd(&independent)?;
    println!("singular values: {:?}", f.s);
    Ok(())
}
