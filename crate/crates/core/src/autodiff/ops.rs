//! Forward/backward kernels for the fixed layer set.
//!
//! Every reduction runs row-major and sequentially, so results are bitwise
//! reproducible at a fixed precision. Backward kernels take the upstream
//! gradient and return gradients for each differentiable input.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::Scalar;

/// Output spatial extent of a convolution/pooling axis, or a configuration
/// error when the extent is not a positive integer.
pub fn out_extent(input: usize, window: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    let padded = input + 2 * padding;
    if padded < window {
        return Err(Error::Config(format!(
            "window {window} exceeds padded input extent {padded}"
        )));
    }
    if (padded - window) % stride != 0 {
        return Err(Error::Config(format!(
            "output extent ({padded} - {window})/{stride} + 1 is not an integer"
        )));
    }
    Ok((padded - window) / stride + 1)
}

fn require_rank<T: Scalar>(t: &Tensor<T>, rank: usize, context: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::Validation(format!(
            "{context}: expected rank {rank}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Linear: out[i,j] = sum_k input[i,k] * weight[k,j] + bias[j]
// ---------------------------------------------------------------------------

pub fn linear_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    require_rank(input, 2, "linear input")?;
    require_rank(weight, 2, "linear weight")?;
    require_rank(bias, 1, "linear bias")?;
    let (m, k) = (input.shape()[0], input.shape()[1]);
    let (wk, n) = (weight.shape()[0], weight.shape()[1]);
    if k != wk {
        return Err(Error::shape_mismatch("linear input/weight", input.shape(), weight.shape()));
    }
    if bias.shape()[0] != n {
        return Err(Error::shape_mismatch("linear weight/bias", weight.shape(), bias.shape()));
    }

    let x = input.data();
    let w = weight.data();
    let b = bias.data();
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::zero();
            for kk in 0..k {
                acc += x[i * k + kk] * w[kk * n + j];
            }
            out[i * n + j] = acc + b[j];
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Returns (d_input, d_weight, d_bias).
pub fn linear_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (m, k) = (input.shape()[0], input.shape()[1]);
    let n = weight.shape()[1];
    debug_assert_eq!(grad_out.shape(), &[m, n]);

    let x = input.data();
    let w = weight.data();
    let g = grad_out.data();

    let mut d_input = vec![T::zero(); m * k];
    for i in 0..m {
        for kk in 0..k {
            let mut acc = T::zero();
            for j in 0..n {
                acc += g[i * n + j] * w[kk * n + j];
            }
            d_input[i * k + kk] = acc;
        }
    }

    let mut d_weight = vec![T::zero(); k * n];
    for kk in 0..k {
        for j in 0..n {
            let mut acc = T::zero();
            for i in 0..m {
                acc += x[i * k + kk] * g[i * n + j];
            }
            d_weight[kk * n + j] = acc;
        }
    }

    let mut d_bias = vec![T::zero(); n];
    for j in 0..n {
        let mut acc = T::zero();
        for i in 0..m {
            acc += g[i * n + j];
        }
        d_bias[j] = acc;
    }

    (
        Tensor::new(vec![m, k], d_input).expect("shape"),
        Tensor::new(vec![k, n], d_weight).expect("shape"),
        Tensor::new(vec![n], d_bias).expect("shape"),
    )
}

// ---------------------------------------------------------------------------
// Conv2d: direct cross-correlation
// ---------------------------------------------------------------------------

pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    require_rank(input, 4, "conv2d input")?;
    require_rank(kernel, 4, "conv2d kernel")?;
    require_rank(bias, 1, "conv2d bias")?;
    let [m, ci, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    let [co, kci, kh, kw] = [kernel.shape()[0], kernel.shape()[1], kernel.shape()[2], kernel.shape()[3]];
    if ci != kci {
        return Err(Error::shape_mismatch("conv2d input/kernel channels", input.shape(), kernel.shape()));
    }
    if bias.shape()[0] != co {
        return Err(Error::shape_mismatch("conv2d kernel/bias", kernel.shape(), bias.shape()));
    }
    let oh = out_extent(h, kh, stride, padding)?;
    let ow = out_extent(w, kw, stride, padding)?;

    let x = input.data();
    let k = kernel.data();
    let b = bias.data();
    let mut out = vec![T::zero(); m * co * oh * ow];
    for bi in 0..m {
        for o in 0..co {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = T::zero();
                    for c in 0..ci {
                        for u in 0..kh {
                            let y = (i * stride + u) as isize - padding as isize;
                            if y < 0 || y >= h as isize {
                                continue;
                            }
                            for v in 0..kw {
                                let xcol = (j * stride + v) as isize - padding as isize;
                                if xcol < 0 || xcol >= w as isize {
                                    continue;
                                }
                                acc += x[((bi * ci + c) * h + y as usize) * w + xcol as usize]
                                    * k[((o * ci + c) * kh + u) * kw + v];
                            }
                        }
                    }
                    out[((bi * co + o) * oh + i) * ow + j] = acc + b[o];
                }
            }
        }
    }
    Tensor::new(vec![m, co, oh, ow], out)
}

/// Returns (d_input, d_kernel, d_bias).
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [m, ci, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    let [co, _, kh, kw] = [kernel.shape()[0], kernel.shape()[1], kernel.shape()[2], kernel.shape()[3]];
    let [oh, ow] = [grad_out.shape()[2], grad_out.shape()[3]];

    let x = input.data();
    let k = kernel.data();
    let g = grad_out.data();

    let mut d_input = vec![T::zero(); m * ci * h * w];
    let mut d_kernel = vec![T::zero(); kernel.numel()];
    let mut d_bias = vec![T::zero(); co];

    for bi in 0..m {
        for o in 0..co {
            for i in 0..oh {
                for j in 0..ow {
                    let go = g[((bi * co + o) * oh + i) * ow + j];
                    d_bias[o] += go;
                    for c in 0..ci {
                        for u in 0..kh {
                            let y = (i * stride + u) as isize - padding as isize;
                            if y < 0 || y >= h as isize {
                                continue;
                            }
                            for v in 0..kw {
                                let xcol = (j * stride + v) as isize - padding as isize;
                                if xcol < 0 || xcol >= w as isize {
                                    continue;
                                }
                                let in_off = ((bi * ci + c) * h + y as usize) * w + xcol as usize;
                                let k_off = ((o * ci + c) * kh + u) * kw + v;
                                d_kernel[k_off] += go * x[in_off];
                                d_input[in_off] += go * k[k_off];
                            }
                        }
                    }
                }
            }
        }
    }

    (
        Tensor::new(input.shape().to_vec(), d_input).expect("shape"),
        Tensor::new(kernel.shape().to_vec(), d_kernel).expect("shape"),
        Tensor::new(vec![co], d_bias).expect("shape"),
    )
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .map(|&v| if v > T::zero() { v } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

/// Gate passes gradient where the input was strictly positive; the
/// subgradient at exactly zero is taken as zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data().iter())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

// ---------------------------------------------------------------------------
// MaxPool2d
// ---------------------------------------------------------------------------

/// Returns the pooled tensor and, for each output cell, the flat index of its
/// source element (first occurrence wins on ties, scanning the window
/// row-major).
pub fn maxpool2d_forward<T: Scalar>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    require_rank(input, 4, "maxpool2d input")?;
    if window == 0 {
        return Err(Error::Config("pool window must be positive".into()));
    }
    let [m, c, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    let oh = out_extent(h, window, stride, 0)?;
    let ow = out_extent(w, window, stride, 0)?;

    let x = input.data();
    let mut out = vec![T::zero(); m * c * oh * ow];
    let mut argmax = vec![0usize; m * c * oh * ow];
    for bi in 0..m {
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_off = 0usize;
                    for u in 0..window {
                        for v in 0..window {
                            let off =
                                ((bi * c + ch) * h + i * stride + u) * w + j * stride + v;
                            if x[off] > best {
                                best = x[off];
                                best_off = off;
                            }
                        }
                    }
                    let o = ((bi * c + ch) * oh + i) * ow + j;
                    out[o] = best;
                    argmax[o] = best_off;
                }
            }
        }
    }
    Ok((Tensor::new(vec![m, c, oh, ow], out)?, argmax))
}

/// Routes each output-cell gradient back to the recorded argmax element.
pub fn maxpool2d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let mut d_input = Tensor::zeros(input_shape);
    let d = d_input.data_mut();
    for (cell, &src) in argmax.iter().enumerate() {
        d[src] += grad_out.data()[cell];
    }
    d_input
}

// ---------------------------------------------------------------------------
// Flatten
// ---------------------------------------------------------------------------

pub fn flatten_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    if input.rank() < 2 {
        return Err(Error::Validation(format!(
            "flatten expects a batched tensor, got shape {:?}",
            input.shape()
        )));
    }
    let m = input.shape()[0];
    let rest: usize = input.shape()[1..].iter().product();
    input.reshaped(vec![m, rest])
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Row-wise softmax, computed max-shifted for overflow safety. The shift is an
/// algebraic identity, so the result equals the unshifted definition.
pub fn softmax_forward<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    require_rank(logits, 2, "softmax logits")?;
    let (m, c) = (logits.shape()[0], logits.shape()[1]);
    if c < 2 {
        return Err(Error::Validation(format!(
            "softmax needs at least 2 classes, got {c}"
        )));
    }
    let a = logits.data();
    let mut out = vec![T::zero(); m * c];
    for i in 0..m {
        let row = &a[i * c..(i + 1) * c];
        let mut max = row[0];
        for &v in &row[1..] {
            if v > max {
                max = v;
            }
        }
        let mut denom = T::zero();
        for j in 0..c {
            let e = (row[j] - max).exp();
            out[i * c + j] = e;
            denom += e;
        }
        for j in 0..c {
            out[i * c + j] = out[i * c + j] / denom;
        }
    }
    Tensor::new(vec![m, c], out)
}

/// Jacobian-vector product: d_logits[j] = p[j] * (g[j] - sum_k g[k] * p[k]).
pub fn softmax_backward<T: Scalar>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let (m, c) = (probs.shape()[0], probs.shape()[1]);
    let p = probs.data();
    let g = grad_out.data();
    let mut d = vec![T::zero(); m * c];
    for i in 0..m {
        let mut dot = T::zero();
        for j in 0..c {
            dot += g[i * c + j] * p[i * c + j];
        }
        for j in 0..c {
            d[i * c + j] = p[i * c + j] * (g[i * c + j] - dot);
        }
    }
    Tensor::new(vec![m, c], d).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    /// Deterministic pseudo-random fill for oracle tests.
    fn fill(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn linear_identity_weight_passes_input() {
        let input = tensor(&[1, 2], &[1.0, 2.0]);
        let weight = tensor(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let bias = tensor(&[2], &[0.0, 0.0]);
        let out = linear_forward(&input, &weight, &bias).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn linear_zero_input_passes_bias() {
        let input = tensor(&[1, 2], &[0.0, 0.0]);
        let weight = fill(&[2, 2], 7);
        let bias = tensor(&[2], &[3.0, 4.0]);
        let out = linear_forward(&input, &weight, &bias).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
    }

    #[test]
    fn linear_matches_triple_loop_oracle() {
        let input = fill(&[2, 3], 1);
        let weight = fill(&[3, 2], 2);
        let bias = fill(&[2], 3);
        let out = linear_forward(&input, &weight, &bias).unwrap();
        // Independent brute-force matmul.
        for i in 0..2 {
            for j in 0..2 {
                let mut expect = bias.at(&[j]);
                for k in 0..3 {
                    expect += input.at(&[i, k]) * weight.at(&[k, j]);
                }
                assert!((out.at(&[i, j]) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_shape_mismatch_names_both_shapes() {
        let input = tensor(&[1, 3], &[0.0; 3]);
        let weight = tensor(&[2, 2], &[0.0; 4]);
        let bias = tensor(&[2], &[0.0; 2]);
        let err = linear_forward(&input, &weight, &bias).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn conv_scalar_kernel_scales_input() {
        let input = Tensor::filled(&[1, 1, 3, 3], 1.0f64);
        let kernel = tensor(&[1, 1, 1, 1], &[2.0]);
        let bias = tensor(&[1], &[0.0]);
        let out = conv2d_forward(&input, &kernel, &bias, 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conv_zero_kernel_yields_bias_map() {
        let input = fill(&[1, 2, 4, 4], 5);
        let kernel = Tensor::zeros(&[3, 2, 3, 3]);
        let bias = tensor(&[3], &[0.5, -1.0, 2.0]);
        let out = conv2d_forward(&input, &kernel, &bias, 1, 1).unwrap();
        for o in 0..3 {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(out.at(&[0, o, i, j]), bias.at(&[o]));
                }
            }
        }
    }

    #[test]
    fn conv_matches_seven_loop_oracle() {
        let input = fill(&[2, 2, 5, 5], 11);
        let kernel = fill(&[3, 2, 3, 3], 12);
        let bias = fill(&[3], 13);
        let (stride, padding) = (1usize, 1usize);
        let out = conv2d_forward(&input, &kernel, &bias, stride, padding).unwrap();
        assert_eq!(out.shape(), &[2, 3, 5, 5]);
        for b in 0..2 {
            for o in 0..3 {
                for i in 0..5 {
                    for j in 0..5 {
                        let mut acc = 0.0f64;
                        for c in 0..2 {
                            for u in 0..3 {
                                for v in 0..3 {
                                    let y = (i * stride + u) as isize - padding as isize;
                                    let x = (j * stride + v) as isize - padding as isize;
                                    if y >= 0 && y < 5 && x >= 0 && x < 5 {
                                        acc += input.at(&[b, c, y as usize, x as usize])
                                            * kernel.at(&[o, c, u, v]);
                                    }
                                }
                            }
                        }
                        acc += bias.at(&[o]);
                        assert!((out.at(&[b, o, i, j]) - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn conv_rejects_non_integral_extent() {
        let input = Tensor::zeros(&[1, 1, 5, 5]);
        let kernel = Tensor::zeros(&[1, 1, 2, 2]);
        let bias = Tensor::zeros(&[1]);
        let err = conv2d_forward::<f64>(&input, &kernel, &bias, 2, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn relu_sign_cases() {
        let t = tensor(&[3], &[-1.0, 0.0, 2.0]);
        assert_eq!(relu_forward(&t).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_identity_on_positives() {
        let t = tensor(&[4], &[0.5, 1.0, 2.0, 3.5]);
        assert_eq!(relu_forward(&t).data(), t.data());
    }

    #[test]
    fn relu_gate_zero_at_kink() {
        let t = tensor(&[3], &[-1.0, 0.0, 2.0]);
        let g = tensor(&[3], &[5.0, 5.0, 5.0]);
        assert_eq!(relu_backward(&t, &g).data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn maxpool_single_window() {
        let t = tensor(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let (out, argmax) = maxpool2d_forward(&t, 2, 2).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(argmax, vec![3]);
    }

    #[test]
    fn maxpool_tie_routes_to_first_cell() {
        let t = Tensor::filled(&[1, 1, 4, 4], 7.0f64);
        let (out, argmax) = maxpool2d_forward(&t, 2, 2).unwrap();
        assert!(out.data().iter().all(|&v| v == 7.0));
        // First row-major element of each window.
        assert_eq!(argmax, vec![0, 2, 8, 10]);
        let g = tensor(&[1, 1, 2, 2], &[1.0, 1.0, 1.0, 1.0]);
        let d = maxpool2d_backward(&[1, 1, 4, 4], &argmax, &g);
        assert_eq!(d.at(&[0, 0, 0, 0]), 1.0);
        assert_eq!(d.at(&[0, 0, 0, 1]), 0.0);
    }

    #[test]
    fn maxpool_matches_window_scan_oracle() {
        let input = fill(&[1, 1, 4, 4], 21);
        let (out, _) = maxpool2d_forward(&input, 2, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut best = f64::NEG_INFINITY;
                for u in 0..2 {
                    for v in 0..2 {
                        best = best.max(input.at(&[0, 0, 2 * i + u, 2 * j + v]));
                    }
                }
                assert_eq!(out.at(&[0, 0, i, j]), best);
            }
        }
    }

    #[test]
    fn maxpool_rejects_non_integral_extent() {
        let input = Tensor::<f64>::zeros(&[1, 1, 5, 5]);
        assert!(matches!(
            maxpool2d_forward(&input, 2, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn softmax_uniform_logits() {
        let t = tensor(&[1, 4], &[0.0; 4]);
        let p = softmax_forward(&t).unwrap();
        for &v in p.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_stable_under_large_logits() {
        let t = tensor(&[1, 2], &[1000.0, 0.0]);
        let p = softmax_forward(&t).unwrap();
        assert!(p.all_finite());
        assert!((p.at(&[0, 0]) - 1.0).abs() < 1e-12);
        assert!(p.at(&[0, 1]) < 1e-12);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let t = tensor(&[1, 3], &[1.0, 2.0, 3.0]);
        let p = softmax_forward(&t).unwrap();
        // Unshifted evaluation is safe at these magnitudes and serves as the
        // independent oracle.
        let denom: f64 = [1.0f64, 2.0, 3.0].iter().map(|a| a.exp()).sum();
        for j in 0..3 {
            let expect = ((j + 1) as f64).exp() / denom;
            assert!((p.at(&[0, j]) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn flatten_keeps_batch_axis() {
        let t = fill(&[2, 3, 2, 2], 4);
        let f = flatten_forward(&t).unwrap();
        assert_eq!(f.shape(), &[2, 12]);
        assert_eq!(f.data(), t.data());
    }
}
