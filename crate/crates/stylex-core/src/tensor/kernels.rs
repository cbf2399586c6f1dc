//! Single-threaded array kernels behind the tape ops.
//!
//! Convolutions go through an im2col buffer laid out positions-major so the
//! inner matmul loop runs over a contiguous filter axis and vectorizes.
//! Reductions accumulate in f64.

/// C[m,n] += A[m,k] * B[k,n], all row-major.
pub fn matmul_acc(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ip * bv;
            }
        }
    }
}

pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

/// Gather one batch item into a positions-major im2col buffer.
///
/// `col[pos * ckk + (c*k*k + u*k + v)]` holds the input sample under filter
/// tap (u, v) for output position `pos`; samples in the padding region are 0.
#[allow(clippy::too_many_arguments)]
pub fn im2col_t(
    col: &mut [f32],
    input: &[f32],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
) {
    let ckk = c_in * k * k;
    debug_assert_eq!(col.len(), h_out * w_out * ckk);
    for oi in 0..h_out {
        for oj in 0..w_out {
            let pos = oi * w_out + oj;
            let dst = &mut col[pos * ckk..(pos + 1) * ckk];
            let i0 = (oi * stride) as isize - padding as isize;
            let j0 = (oj * stride) as isize - padding as isize;
            let mut idx = 0;
            for c in 0..c_in {
                let plane = &input[c * h * w..(c + 1) * h * w];
                for u in 0..k {
                    let ii = i0 + u as isize;
                    if ii < 0 || ii >= h as isize {
                        dst[idx..idx + k].iter_mut().for_each(|v| *v = 0.0);
                        idx += k;
                        continue;
                    }
                    let row = &plane[ii as usize * w..(ii as usize + 1) * w];
                    for v in 0..k {
                        let jj = j0 + v as isize;
                        dst[idx] = if jj < 0 || jj >= w as isize {
                            0.0
                        } else {
                            row[jj as usize]
                        };
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// Scatter-add a positions-major column gradient back onto the input plane.
#[allow(clippy::too_many_arguments)]
pub fn col2im_t_acc(
    dinput: &mut [f32],
    dcol: &[f32],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
) {
    let ckk = c_in * k * k;
    for oi in 0..h_out {
        for oj in 0..w_out {
            let pos = oi * w_out + oj;
            let src = &dcol[pos * ckk..(pos + 1) * ckk];
            let i0 = (oi * stride) as isize - padding as isize;
            let j0 = (oj * stride) as isize - padding as isize;
            let mut idx = 0;
            for c in 0..c_in {
                let base = c * h * w;
                for u in 0..k {
                    let ii = i0 + u as isize;
                    if ii < 0 || ii >= h as isize {
                        idx += k;
                        continue;
                    }
                    let row_base = base + ii as usize * w;
                    for v in 0..k {
                        let jj = j0 + v as isize;
                        if jj >= 0 && jj < w as isize {
                            dinput[row_base + jj as usize] += src[idx];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }
}

pub fn sum_f64(values: &[f32]) -> f64 {
    values.iter().map(|&v| v as f64).sum()
}

/// Per-channel mean and biased variance over batch and spatial axes of a
/// [B, C, H*W] view, f64 accumulation.
pub fn channel_moments(
    input: &[f32],
    batch: usize,
    channels: usize,
    spatial: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = (batch * spatial) as f64;
    let mut mean = vec![0.0f64; channels];
    let mut var = vec![0.0f64; channels];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * spatial;
            let mut acc = 0.0f64;
            for &v in &input[off..off + spatial] {
                acc += v as f64;
            }
            mean[c] += acc;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * spatial;
            let mu = mean[c];
            let mut acc = 0.0f64;
            for &v in &input[off..off + spatial] {
                let d = v as f64 - mu;
                acc += d * d;
            }
            var[c] += acc;
        }
    }
    for v in var.iter_mut() {
        *v /= n;
    }
    (mean, var)
}
