//! SNR gain of a two-channel linear fusion `y = a·x₁ + b·x₂`.
//!
//! With `xᵢ = sᵢ + εᵢ`, equal per-channel signal variance `σ_s²` and noise
//! variance `σ_ε²`, signal correlation `ρ` and noise correlation `γ`, the
//! fused SNR is `SNR_in · (a² + b² + 2abρ) / (a² + b² + 2abγ)`. Gain exceeds one
//! exactly when `2ab(ρ − γ) > 0`.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Normal};

/// Denominators at or below this are treated as total noise cancellation.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

pub const DEFAULT_GRID_RESOLUTION: usize = 3600;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub sigma_s2: f64,
    pub sigma_e2: f64,
    pub rho: f64,
    pub gamma: f64,
}

impl SignalModel {
    pub fn new(sigma_s2: f64, sigma_e2: f64, rho: f64, gamma: f64) -> Result<Self> {
        let m = Self {
            sigma_s2,
            sigma_e2,
            rho,
            gamma,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s2 > 0.0 && self.sigma_e2 > 0.0) {
            return Err(Error::Argument("variances must be positive".into()));
        }
        if !(self.rho.abs() <= 1.0 && self.gamma.abs() <= 1.0) {
            return Err(Error::Argument("correlations must lie in [-1, 1]".into()));
        }
        Ok(())
    }

    pub fn snr_in(&self) -> f64 {
        self.sigma_s2 / self.sigma_e2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionMode {
    /// `ab < 0` and `ρ < γ`: correlated noise is subtracted away.
    Difference,
    /// `ab > 0` and `ρ > γ`: correlated signal adds up faster than noise.
    Cooperative,
    /// `2ab(ρ − γ) = 0`: gain is exactly one.
    Neutral,
    /// Gain below one.
    Degrading,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FusionMode::Difference => "difference",
            FusionMode::Cooperative => "cooperative",
            FusionMode::Neutral => "neutral",
            FusionMode::Degrading => "degrading",
        };
        f.write_str(s)
    }
}

pub fn theoretical_gain(a: f64, b: f64, rho: f64, gamma: f64) -> Result<f64> {
    let base = a * a + b * b;
    let denominator = base + 2.0 * a * b * gamma;
    if denominator <= DEGENERATE_DENOMINATOR {
        return Err(Error::Degenerate(format!(
            "noise power a² + b² + 2abγ = {denominator:e} (a = {a}, b = {b}, γ = {gamma})"
        )));
    }
    Ok((base + 2.0 * a * b * rho) / denominator)
}

pub fn classify_mode(a: f64, b: f64, rho: f64, gamma: f64) -> FusionMode {
    let ab = a * b;
    if 2.0 * ab * (rho - gamma) == 0.0 {
        FusionMode::Neutral
    } else if ab < 0.0 && rho < gamma {
        FusionMode::Difference
    } else if ab > 0.0 && rho > gamma {
        FusionMode::Cooperative
    } else {
        FusionMode::Degrading
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatedPairs {
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
}

/// Draws `count` independent realisations of the two-channel model.
///
/// Each pair is built from independent standard normals by the 2×2 Cholesky
/// factor: `s₂ = σ_s(ρ·z₁ + √(1−ρ²)·z₂)`, likewise for the noise with `γ`.
pub fn sample_correlated_pairs(model: &SignalModel, count: usize, seed: u64) -> Result<CorrelatedPairs> {
    model.validate()?;
    if count == 0 {
        return Err(Error::Argument("sample count must be positive".into()));
    }
    let mut normal = Normal::new(rng::seeded(seed));
    let ss = model.sigma_s2.sqrt();
    let se = model.sigma_e2.sqrt();
    let rho_c = (1.0 - model.rho * model.rho).sqrt();
    let gamma_c = (1.0 - model.gamma * model.gamma).sqrt();
    let mut out = CorrelatedPairs {
        s1: Vec::with_capacity(count),
        s2: Vec::with_capacity(count),
        e1: Vec::with_capacity(count),
        e2: Vec::with_capacity(count),
    };
    for _ in 0..count {
        let z1 = normal.sample();
        let z2 = normal.sample();
        let z3 = normal.sample();
        let z4 = normal.sample();
        out.s1.push(ss * z1);
        out.s2.push(ss * (model.rho * z1 + rho_c * z2));
        out.e1.push(se * z3);
        out.e2.push(se * (model.gamma * z3 + gamma_c * z4));
    }
    Ok(out)
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

fn combined_variance(a: f64, b: f64, x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().zip(y).map(|(p, q)| a * p + b * q).sum::<f64>() / n;
    x.iter()
        .zip(y)
        .map(|(p, q)| {
            let d = a * p + b * q - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0)
}

/// Measured `SNR_out / SNR_in` from sample variances, with `SNR_in` taken from channel 1.
pub fn empirical_snr_gain(a: f64, b: f64, s1: &[f64], s2: &[f64], e1: &[f64], e2: &[f64]) -> Result<f64> {
    let n = s1.len();
    if n < 2 || s2.len() != n || e1.len() != n || e2.len() != n {
        return Err(Error::Argument(
            "need four equal-length sample arrays of at least two points".into(),
        ));
    }
    let noise_out = combined_variance(a, b, e1, e2);
    let noise_in = sample_variance(e1);
    let signal_in = sample_variance(s1);
    if noise_out <= 0.0 || noise_in <= 0.0 || signal_in <= 0.0 {
        return Err(Error::Degenerate("zero sample variance".into()));
    }
    let signal_out = combined_variance(a, b, s1, s2);
    Ok((signal_out / noise_out) / (signal_in / noise_in))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridOptimum {
    pub a: f64,
    pub b: f64,
    pub gain: f64,
    pub mode: FusionMode,
}

/// Maximises [`theoretical_gain`] over `resolution` equally spaced angles on
/// the unit circle `a² + b² = 1` (gain is invariant to rescaling `(a, b)`).
pub fn grid_search_coefficients(rho: f64, gamma: f64, resolution: usize) -> Result<GridOptimum> {
    if resolution == 0 {
        return Err(Error::Argument("grid resolution must be positive".into()));
    }
    let mut best: Option<GridOptimum> = None;
    for k in 0..resolution {
        let theta = TAU * k as f64 / resolution as f64;
        let (b, a) = theta.sin_cos();
        let Ok(gain) = theoretical_gain(a, b, rho, gamma) else {
            continue;
        };
        if best.is_none_or(|o| gain > o.gain) {
            best = Some(GridOptimum {
                a,
                b,
                gain,
                mode: classify_mode(a, b, rho, gamma),
            });
        }
    }
    let mut best = best.ok_or_else(|| Error::Degenerate("every grid point cancels the noise".into()))?;
    if best.gain <= 1.0 {
        best.mode = FusionMode::Neutral;
    }
    Ok(best)
}

/// One row of the Monte-Carlo verification table.
#[derive(Clone, Debug, PartialEq)]
pub struct SnrCell {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
    pub gamma: f64,
    pub theoretical_gain: f64,
    pub empirical_gain: f64,
    pub mode: FusionMode,
    pub samples: usize,
    pub seed: u64,
}

impl SnrCell {
    pub fn relative_error(&self) -> f64 {
        (self.empirical_gain - self.theoretical_gain).abs() / self.theoretical_gain
    }

    pub const CSV_HEADER: &'static str = "a,b,rho,gamma,theoretical_gain,empirical_gain,mode,N,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{},{},{}",
            self.a, self.b, self.rho, self.gamma, self.theoretical_gain, self.empirical_gain, self.mode, self.samples, self.seed
        )
    }
}

/// Coefficient pairs of the default verification grid.
pub const VERIFY_COEFFICIENTS: [(f64, f64); 9] = [
    (1.0, 1.0),
    (1.0, -1.0),
    (0.5, 1.0),
    (1.0, -0.5),
    (0.3, 1.0),
    (1.0, 0.3),
    (-0.5, -1.0),
    (0.3, -1.0),
    (-1.0, 0.5),
];

/// Correlation levels used for both `ρ` and `γ` in the default grid.
pub const VERIFY_CORRELATIONS: [f64; 5] = [-0.9, -0.5, 0.0, 0.5, 0.9];

/// Minimum noise-power factor for a cell to enter the verification grid.
pub const VERIFY_MIN_DENOMINATOR: f64 = 0.1;

/// Runs the Monte-Carlo check over every `(a, b) × (ρ, γ)` combination whose
/// noise-power factor is at least [`VERIFY_MIN_DENOMINATOR`].
///
/// One sample set (unit variances) is drawn per `(ρ, γ)` with seed
/// `derive_seed(seed, index)` and shared by all coefficient pairs.
pub fn verify_grid(
    coefficients: &[(f64, f64)],
    correlations: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<SnrCell>> {
    let mut cells = Vec::new();
    let mut index = 0u64;
    for &rho in correlations {
        for &gamma in correlations {
            let cell_seed = rng::derive_seed(seed, index);
            index += 1;
            let wanted: Vec<(f64, f64)> = coefficients
                .iter()
                .copied()
                .filter(|&(a, b)| a * a + b * b + 2.0 * a * b * gamma >= VERIFY_MIN_DENOMINATOR)
                .collect();
            if wanted.is_empty() {
                continue;
            }
            let model = SignalModel::new(1.0, 1.0, rho, gamma)?;
            let p = sample_correlated_pairs(&model, samples, cell_seed)?;
            for (a, b) in wanted {
                cells.push(SnrCell {
                    a,
                    b,
                    rho,
                    gamma,
                    theoretical_gain: theoretical_gain(a, b, rho, gamma)?,
                    empirical_gain: empirical_snr_gain(a, b, &p.s1, &p.s2, &p.e1, &p.e2)?,
                    mode: classify_mode(a, b, rho, gamma),
                    samples,
                    seed: cell_seed,
                });
            }
        }
    }
    Ok(cells)
}
