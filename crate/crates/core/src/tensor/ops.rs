//! Forward kernels shared by the graph and by callers that only need values.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::Tensor;
use crate::error::{dim, Result};

/// Causal dilated 1-D convolution over `B×C_in×T` input.
///
/// `y[b,o,t] = bias[o] + Σ_c Σ_i w[o,c,i] · x[b,c,t − i·d]`, with `x` zero for
/// negative time indices, so the output keeps length `T`.
pub fn conv1d_causal(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    dilation: usize,
) -> Result<Tensor> {
    let (batch, c_in, len) = input.dims3()?;
    let (c_out, w_in, k) = weight.dims3()?;
    check_conv(c_in, w_in, c_out, k, bias, dilation, len)?;
    let x = input.data();
    let w = weight.data();
    let mut out = vec![0.0; batch * c_out * len];
    for b in 0..batch {
        for o in 0..c_out {
            let row = &mut out[(b * c_out + o) * len..(b * c_out + o + 1) * len];
            row.fill(bias.data()[o]);
            for c in 0..c_in {
                let xr = &x[(b * c_in + c) * len..(b * c_in + c + 1) * len];
                for i in 0..k {
                    let lag = i * dilation;
                    if lag >= len {
                        break;
                    }
                    let wv = w[(o * c_in + c) * k + i];
                    for (y, xv) in row[lag..].iter_mut().zip(&xr[..len - lag]) {
                        *y += wv * xv;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![batch, c_out, len], out))
}

pub(crate) fn check_conv(
    c_in: usize,
    w_in: usize,
    c_out: usize,
    k: usize,
    bias: &Tensor,
    dilation: usize,
    len: usize,
) -> Result<()> {
    if c_in != w_in {
        return dim(format!(
            "conv input has {c_in} channels but weight expects {w_in}"
        ));
    }
    if bias.shape() != [c_out] {
        return dim(format!(
            "conv bias shape {:?} does not match {c_out} output channels",
            bias.shape()
        ));
    }
    if k == 0 || dilation == 0 || len == 0 {
        return dim("conv requires k ≥ 1, dilation ≥ 1 and T ≥ 1");
    }
    Ok(())
}

/// Reverses the last (time) axis of a rank-3 tensor.
pub fn flip_time(x: &Tensor) -> Result<Tensor> {
    let (_, _, len) = x.dims3()?;
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(len) {
        row.reverse();
    }
    Ok(Tensor::from_parts_unchecked(x.shape().to_vec(), out))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_scalar(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// d/dx [x·Φ(x)] = Φ(x) + x·φ(x)
pub fn gelu_derivative(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    normal_cdf(x) + x * pdf
}

/// Exact GELU, `x·Φ(x)`, elementwise.
pub fn gelu(x: &Tensor) -> Tensor {
    Tensor::from_parts_unchecked(
        x.shape().to_vec(),
        x.data().iter().map(|&v| gelu_scalar(v)).collect(),
    )
}

/// `x·Wᵀ + b` for `x: B×F`, `W: O×F`, `b: O`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (batch, features) = x.dims2()?;
    let (outs, w_features) = weight.dims2()?;
    if features != w_features || bias.shape() != [outs] {
        return dim(format!(
            "linear: input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        ));
    }
    let mut out = vec![0.0; batch * outs];
    for b in 0..batch {
        let xr = &x.data()[b * features..(b + 1) * features];
        for o in 0..outs {
            let wr = &weight.data()[o * features..(o + 1) * features];
            out[b * outs + o] =
                bias.data()[o] + xr.iter().zip(wr).map(|(a, w)| a * w).sum::<f64>();
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![batch, outs], out))
}

/// Mean over the time axis: `B×C×T → B×C`.
pub fn global_avg_pool_time(x: &Tensor) -> Result<Tensor> {
    let (batch, channels, len) = x.dims3()?;
    let out = x
        .data()
        .chunks(len)
        .map(|row| row.iter().sum::<f64>() / len as f64)
        .collect();
    Ok(Tensor::from_parts_unchecked(vec![batch, channels], out))
}

/// Swaps the two trailing axes of a rank-3 tensor (`B×T×C ↔ B×C×T`).
pub fn swap_last_two(x: &Tensor) -> Result<Tensor> {
    let (d0, d1, d2) = x.dims3()?;
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for a in 0..d0 {
        for i in 0..d1 {
            for j in 0..d2 {
                out[(a * d2 + j) * d1 + i] = src[(a * d1 + i) * d2 + j];
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![d0, d2, d1], out))
}

/// Row-wise softmax of a `B×K` matrix, stabilized by max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let (_, k) = logits.dims2()?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(k) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(Tensor::from_parts_unchecked(logits.shape().to_vec(), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(values: &[f64]) -> Tensor {
        Tensor::new(vec![1, 1, values.len()], values.to_vec()).unwrap()
    }

    fn kernel(values: &[f64]) -> Tensor {
        Tensor::new(vec![1, 1, values.len()], values.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let y = conv1d_causal(&seq(&[1.0, 1.0, 1.0]), &kernel(&[1.0]), &Tensor::zeros(vec![1]), 1)
            .unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn conv_two_tap_lag_one() {
        let y = conv1d_causal(&seq(&[1.0, 2.0, 3.0]), &kernel(&[1.0, 1.0]), &Tensor::zeros(vec![1]), 1)
            .unwrap();
        assert_eq!(y.data(), &[1.0, 3.0, 5.0]);
    }

    #[test]
    fn conv_two_tap_dilation_two() {
        let y = conv1d_causal(
            &seq(&[1.0, 2.0, 3.0, 4.0]),
            &kernel(&[1.0, 1.0]),
            &Tensor::zeros(vec![1]),
            2,
        )
        .unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn conv_lag_beyond_length_contributes_nothing() {
        let y = conv1d_causal(&seq(&[1.0, 2.0]), &kernel(&[1.0, 5.0]), &Tensor::scalar(0.5).reshape(vec![1]).unwrap(), 3)
            .unwrap();
        assert_eq!(y.data(), &[1.5, 2.5]);
    }

    #[test]
    fn conv_channel_mismatch_is_dimension_error() {
        let w = Tensor::zeros(vec![1, 2, 1]);
        assert!(matches!(
            conv1d_causal(&seq(&[1.0]), &w, &Tensor::zeros(vec![1]), 1),
            Err(crate::Error::Dimension(_))
        ));
    }

    #[test]
    fn flip_examples() {
        assert_eq!(flip_time(&seq(&[1.0, 2.0, 3.0])).unwrap().data(), &[3.0, 2.0, 1.0]);
        assert_eq!(flip_time(&seq(&[5.0])).unwrap().data(), &[5.0]);
        assert_eq!(
            flip_time(&seq(&[1.0, 2.0, 3.0, 4.0])).unwrap().data(),
            &[4.0, 3.0, 2.0, 1.0]
        );
        assert!(flip_time(&Tensor::zeros(vec![3])).is_err());
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        // Φ(1) = 0.841344746068542948585232545632...
        assert!((gelu_scalar(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((gelu_scalar(12.0) - 12.0).abs() < 1e-12);
        assert!(gelu_scalar(-12.0).abs() < 1e-12);
    }

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let numeric = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2.0 * h);
            assert!((numeric - gelu_derivative(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn swap_last_two_transposes() {
        let x = Tensor::new(vec![1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = swap_last_two(&x).unwrap();
        assert_eq!(y.shape(), &[1, 3, 2]);
        assert_eq!(y.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(swap_last_two(&y).unwrap(), x);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let l = Tensor::new(vec![1, 2], vec![1000.0, 1000.0]).unwrap();
        assert_eq!(softmax_rows(&l).unwrap().data(), &[0.5, 0.5]);
    }
}
