//! Closed-form SNR gain of `a·x1 + b·x2` against a Monte-Carlo estimate,
//! plus the best coefficients found by a grid search.

use hmbitcn::snr::{
    classify_mode, empirical_snr_gain, grid_search_coefficients, sample_correlated_pairs, theoretical_gain,
    SignalModel, DEFAULT_GRID_RESOLUTION,
};

fn main() -> hmbitcn::Result<()> {
    let (rho, gamma) = (0.0, 0.9);
    let model = SignalModel::new(1.0, 4.0, rho, gamma)?;
    let pairs = sample_correlated_pairs(&model, 200_000, 1)?;
    println!("a,b,theoretical,empirical,mode");
    for (a, b) in [(1.0, 1.0), (1.0, -1.0), (1.0, 0.0), (0.5, -1.0)] {
        let th = theoretical_gain(a, b, rho, gamma)?;
        let em = empirical_snr_gain(a, b, &pairs.s1, &pairs.s2, &pairs.e1, &pairs.e2)?;
        println!("{a},{b},{th:.4},{em:.4},{}", classify_mode(a, b, rho, gamma));
    }
    let best = grid_search_coefficients(rho, gamma, DEFAULT_GRID_RESOLUTION)?;
    println!(
        "grid optimum: a = {:.3}, b = {:.3}, gain = {:.3} ({})",
        best.a, best.b, best.gain, best.mode
    );
    Ok(())
}
