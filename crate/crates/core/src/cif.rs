//! Channel-imposed fusion.
//!
//! CIF overwrites one group of `n` channels with `a·front + b·back`, where
//! `front` is the first `n` channels and `back` the last `n`. The sign of `t`
//! selects which group is overwritten. PSF generalises this to explicit
//! `(source, partner, destination)` channel triples.
//!
//! All tensors here are laid out `B×T×C`.

use serde::{Deserialize, Serialize};

use crate::error::{config, dim, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Magnitude floor used when projecting learnable coefficients onto their sign orthant.
pub const COEFFICIENT_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    #[default]
    Fixed,
    /// Trainable with `a > 0, b > 0`.
    LearnableCoupling,
    /// Trainable with `a > 0, b < 0`.
    LearnableSuppression,
}

impl CoefficientMode {
    pub fn is_learnable(self) -> bool {
        !matches!(self, CoefficientMode::Fixed)
    }
}

/// `(source, partner, destination)` channel indices for one PSF fusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPair {
    pub source: usize,
    pub partner: usize,
    pub destination: usize,
}

impl ChannelPair {
    pub fn new(source: usize, partner: usize, destination: usize) -> Self {
        Self {
            source,
            partner,
            destination,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CifConfig {
    /// Only the sign is used: `t > 0` overwrites the front group, otherwise the back group.
    pub t: i64,
    pub n: usize,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub coefficient_mode: CoefficientMode,
    /// When set, the transform is PSF over these triples and `t`, `n` are ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_map: Option<Vec<ChannelPair>>,
}

impl CifConfig {
    pub fn new(t: i64, n: usize, a: f64, b: f64) -> Self {
        Self {
            t,
            n,
            a,
            b,
            coefficient_mode: CoefficientMode::Fixed,
            pair_map: None,
        }
    }

    pub fn with_mode(mut self, mode: CoefficientMode) -> Self {
        self.coefficient_mode = mode;
        self
    }

    pub fn psf(pairs: Vec<ChannelPair>, a: f64, b: f64) -> Self {
        Self {
            t: 1,
            n: 0,
            a,
            b,
            coefficient_mode: CoefficientMode::Fixed,
            pair_map: Some(pairs),
        }
    }

    /// Checks the configuration against a channel count.
    pub fn validate(&self, channels: usize) -> Result<()> {
        if !self.a.is_finite() || !self.b.is_finite() {
            return config("CIF coefficients must be finite");
        }
        match &self.pair_map {
            Some(pairs) => validate_pairs(pairs, channels)?,
            None => {
                if self.n == 0 || 2 * self.n > channels {
                    return config(format!(
                        "CIF group width n = {} must satisfy 1 ≤ n ≤ {} for C = {channels}",
                        self.n,
                        channels / 2
                    ));
                }
            }
        }
        let signs_ok = match self.coefficient_mode {
            CoefficientMode::Fixed => true,
            CoefficientMode::LearnableCoupling => self.a > 0.0 && self.b > 0.0,
            CoefficientMode::LearnableSuppression => self.a > 0.0 && self.b < 0.0,
        };
        if !signs_ok {
            return config(format!(
                "coefficients a = {}, b = {} violate the {:?} sign constraint",
                self.a, self.b, self.coefficient_mode
            ));
        }
        Ok(())
    }

    /// The fusion expressed as explicit triples, for either form of the config.
    pub fn fusion_pairs(&self, channels: usize) -> Vec<ChannelPair> {
        match &self.pair_map {
            Some(p) => p.clone(),
            None => {
                let back = channels - self.n;
                (0..self.n)
                    .map(|i| {
                        let dst = if self.t > 0 { i } else { back + i };
                        ChannelPair::new(i, back + i, dst)
                    })
                    .collect()
            }
        }
    }

    /// Applies whichever transform the config describes.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        match &self.pair_map {
            Some(pairs) => apply_psf(x, pairs, self.a, self.b),
            None => apply_cif(x, self),
        }
    }
}

fn validate_pairs(pairs: &[ChannelPair], channels: usize) -> Result<()> {
    let mut seen = vec![false; channels];
    for p in pairs {
        if p.source >= channels || p.partner >= channels || p.destination >= channels {
            return config(format!("pair {p:?} indexes outside {channels} channels"));
        }
        if std::mem::replace(&mut seen[p.destination], true) {
            return config(format!("duplicate PSF destination channel {}", p.destination));
        }
    }
    Ok(())
}

/// Front/back channel fusion on a `B×T×C` tensor.
pub fn apply_cif(x: &Tensor, cfg: &CifConfig) -> Result<Tensor> {
    let (_, _, channels) = x.dims3()?;
    if cfg.pair_map.is_some() {
        return config("apply_cif called with a PSF pair map; use apply_psf");
    }
    cfg.validate(channels)?;
    let n = cfg.n;
    let back = channels - n;
    let dst = if cfg.t > 0 { 0 } else { back };
    let mut out = x.data().to_vec();
    for (row, src) in out.chunks_mut(channels).zip(x.data().chunks(channels)) {
        let front = &src[..n];
        let tail = &src[back..];
        for ((o, f), k) in row[dst..dst + n].iter_mut().zip(front).zip(tail) {
            *o = cfg.a * f + cfg.b * k;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Pairwise fusion: `out[.., dst] = a·x[.., src] + b·x[.., partner]`.
pub fn apply_psf(x: &Tensor, pairs: &[ChannelPair], a: f64, b: f64) -> Result<Tensor> {
    let (_, _, channels) = x.dims3()?;
    validate_pairs(pairs, channels)?;
    let mut out = x.data().to_vec();
    for (row, src) in out.chunks_mut(channels).zip(x.data().chunks(channels)) {
        for p in pairs {
            row[p.destination] = a * src[p.source] + b * src[p.partner];
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Closed-form `(∂L/∂a, ∂L/∂b)` from the upstream gradient of the fused block.
///
/// `upstream` is `B×T×P` where `P` is the number of fused channels, ordered as
/// in [`CifConfig::fusion_pairs`]. Each coefficient gradient is the inner
/// product of the upstream gradient with the channels that coefficient scales.
pub fn cif_coefficient_gradients(
    upstream: &Tensor,
    x: &Tensor,
    cfg: &CifConfig,
) -> Result<(f64, f64)> {
    let (batch, len, channels) = x.dims3()?;
    let pairs = cfg.fusion_pairs(channels);
    if upstream.shape() != [batch, len, pairs.len()] {
        return dim(format!(
            "upstream gradient {:?} does not match fused block {:?}",
            upstream.shape(),
            [batch, len, pairs.len()]
        ));
    }
    let mut grad_a = 0.0;
    let mut grad_b = 0.0;
    for (row, up) in x.data().chunks(channels).zip(upstream.data().chunks(pairs.len())) {
        for (p, u) in pairs.iter().zip(up) {
            grad_a += u * row[p.source];
            grad_b += u * row[p.partner];
        }
    }
    Ok((grad_a, grad_b))
}

/// Extracts the fused destination channels of a full `B×T×C` gradient, in
/// [`CifConfig::fusion_pairs`] order.
pub fn fused_block(full: &Tensor, cfg: &CifConfig) -> Result<Tensor> {
    let (batch, len, channels) = full.dims3()?;
    let pairs = cfg.fusion_pairs(channels);
    let mut out = Vec::with_capacity(batch * len * pairs.len());
    for row in full.data().chunks(channels) {
        out.extend(pairs.iter().map(|p| row[p.destination]));
    }
    Tensor::new(vec![batch, len, pairs.len()], out)
}

/// Projects `(a, b)` onto the open sign orthant required by `mode`.
pub fn constrain_coefficients(a: f64, b: f64, mode: CoefficientMode) -> (f64, f64) {
    match mode {
        CoefficientMode::Fixed => (a, b),
        CoefficientMode::LearnableCoupling => (a.max(COEFFICIENT_EPS), b.max(COEFFICIENT_EPS)),
        CoefficientMode::LearnableSuppression => {
            (a.max(COEFFICIENT_EPS), b.min(-COEFFICIENT_EPS))
        }
    }
}

/// Records the fusion on a graph with `a` and `b` as one-element nodes, so that
/// learnable coefficients receive gradients through ordinary backward.
pub fn apply_cif_graph(g: &mut Graph, x: Var, a: Var, b: Var, cfg: &CifConfig) -> Result<Var> {
    let (_, _, channels) = g.value(x).dims3()?;
    cfg.validate(channels)?;
    match &cfg.pair_map {
        None => {
            let n = cfg.n;
            let back = channels - n;
            let front_v = g.slice_last(x, 0, n)?;
            let back_v = g.slice_last(x, back, n)?;
            let fa = g.mul_scalar(front_v, a)?;
            let bb = g.mul_scalar(back_v, b)?;
            let added = g.add(fa, bb)?;
            g.assign_last(x, added, if cfg.t > 0 { 0 } else { back })
        }
        Some(pairs) => {
            let mut out = x;
            for p in pairs {
                let s = g.slice_last(x, p.source, 1)?;
                let q = g.slice_last(x, p.partner, 1)?;
                let sa = g.mul_scalar(s, a)?;
                let qb = g.mul_scalar(q, b)?;
                let fused = g.add(sa, qb)?;
                out = g.assign_last(out, fused, p.destination)?;
            }
            Ok(out)
        }
    }
}
