//! Same-size 2-d cross-correlation, forward and both backward passes.
//!
//! Logical layout is NCHW. Internally each image is lowered to an
//! `[H*W, C*k*k]` patch matrix (im2row) so that all three passes become
//! plain row-major GEMM calls; the patch axis order is (c, ky, kx), matching
//! the flattening of a `[C', C, k, k]` kernel row.

use crate::arr::{Arr, Scalar};
use crate::linalg;
use rayon::prelude::*;

/// Patch matrix for one image: rows indexed by output pixel, columns by
/// (c, ky, kx). Out-of-canvas taps are zero.
fn im2row<F: Scalar>(input: &Arr<F>, n: usize, k: usize, pad: usize, out: &mut [F]) {
    let (c_in, h, w) = (input.shape()[1], input.shape()[2], input.shape()[3]);
    let ck2 = c_in * k * k;
    debug_assert_eq!(out.len(), h * w * ck2);
    out.fill(F::zero());
    let img = &input.data()[n * c_in * h * w..(n + 1) * c_in * h * w];
    for y in 0..h {
        for ky in 0..k {
            let sy = y + ky;
            if sy < pad || sy >= h + pad {
                continue;
            }
            let sy = sy - pad;
            for c in 0..c_in {
                let src_row = &img[(c * h + sy) * w..(c * h + sy + 1) * w];
                for kx in 0..k {
                    let col = (c * k + ky) * k + kx;
                    // x + kx - pad must land in [0, w)
                    let x_lo = pad.saturating_sub(kx);
                    let x_hi = (w + pad - kx).min(w);
                    for x in x_lo..x_hi {
                        out[(y * w + x) * ck2 + col] = src_row[x + kx - pad];
                    }
                }
            }
        }
    }
}

fn check_finite_shapes<F: Scalar>(input: &Arr<F>, kernel: &Arr<F>) -> (usize, usize, usize, usize, usize, usize) {
    let s = input.shape();
    let ks = kernel.shape();
    assert_eq!(s.len(), 4, "conv2d input must be rank 4");
    assert_eq!(ks.len(), 4, "conv2d kernel must be rank 4");
    (s[0], s[1], s[2], s[3], ks[0], ks[2])
}

/// out[n,co,y,x] = sum_{c,ky,kx} in[n,c,y+ky-pad,x+kx-pad] * ker[co,c,ky,kx]
pub fn forward<F: Scalar>(input: &Arr<F>, kernel: &Arr<F>, pad: usize) -> Arr<F> {
    let (n_img, c_in, h, w, c_out, k) = check_finite_shapes(input, kernel);
    let ck2 = c_in * k * k;
    let hw = h * w;
    // kernel as matrix [C', CK2] -> transposed [CK2, C'] for row-major gemm
    let mut kt = vec![F::zero(); ck2 * c_out];
    linalg::transpose(c_out, ck2, kernel.data(), &mut kt);

    let mut out = Arr::zeros(&[n_img, c_out, h, w]);
    let per_img = c_out * hw;
    out.data_mut()
        .par_chunks_mut(per_img)
        .enumerate()
        .for_each(|(n, out_img)| {
            let mut rows = vec![F::zero(); hw * ck2];
            im2row(input, n, k, pad, &mut rows);
            let mut ot = vec![F::zero(); hw * c_out];
            F::gemm(hw, c_out, ck2, &rows, &kt, &mut ot, false);
            linalg::transpose(hw, c_out, &ot, out_img);
        });
    out
}

/// Gradient with respect to the input.
pub fn backward_input<F: Scalar>(
    kernel: &Arr<F>,
    grad_out: &Arr<F>,
    input_shape: &[usize],
    pad: usize,
) -> Arr<F> {
    let (n_img, c_out, h, w) = (
        grad_out.shape()[0],
        grad_out.shape()[1],
        grad_out.shape()[2],
        grad_out.shape()[3],
    );
    let c_in = input_shape[1];
    let k = kernel.shape()[2];
    let ck2 = c_in * k * k;
    let hw = h * w;

    let mut grad_in = Arr::zeros(input_shape);
    let per_img_in = c_in * h * w;
    grad_in
        .data_mut()
        .par_chunks_mut(per_img_in)
        .enumerate()
        .for_each(|(n, gin)| {
            // dRows[HW, CK2] = dOutT[HW, C'] x K[C', CK2]
            let gout_img = &grad_out.data()[n * c_out * hw..(n + 1) * c_out * hw];
            let mut gout_t = vec![F::zero(); hw * c_out];
            linalg::transpose(c_out, hw, gout_img, &mut gout_t);
            let mut grows = vec![F::zero(); hw * ck2];
            F::gemm(hw, ck2, c_out, &gout_t, kernel.data(), &mut grows, false);
            // scatter rows back (col2im), fixed accumulation order
            for y in 0..h {
                for x in 0..w {
                    let row = &grows[(y * w + x) * ck2..(y * w + x + 1) * ck2];
                    for c in 0..c_in {
                        for ky in 0..k {
                            let sy = y + ky;
                            if sy < pad || sy >= h + pad {
                                continue;
                            }
                            let sy = sy - pad;
                            for kx in 0..k {
                                let sx = x + kx;
                                if sx < pad || sx >= w + pad {
                                    continue;
                                }
                                let sx = sx - pad;
                                let gi = (c * h + sy) * w + sx;
                                gin[gi] = gin[gi] + row[(c * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        });
    grad_in
}

/// Gradient with respect to the kernel, accumulated over the batch in
/// image order.
pub fn backward_kernel<F: Scalar>(
    input: &Arr<F>,
    grad_out: &Arr<F>,
    kernel_shape: &[usize],
    pad: usize,
) -> Arr<F> {
    let (n_img, c_in, h, w, _, _) = check_finite_shapes(input, &Arr::zeros(kernel_shape));
    let c_out = kernel_shape[0];
    let k = kernel_shape[2];
    let ck2 = c_in * k * k;
    let hw = h * w;

    let partials: Vec<Vec<F>> = (0..n_img)
        .into_par_iter()
        .map(|n| {
            let mut rows = vec![F::zero(); hw * ck2];
            im2row(input, n, k, pad, &mut rows);
            let gout_img = &grad_out.data()[n * c_out * hw..(n + 1) * c_out * hw];
            // dK[C', CK2] = dOut[C', HW] x Rows[HW, CK2]
            let mut dk = vec![F::zero(); c_out * ck2];
            F::gemm(c_out, ck2, hw, gout_img, &rows, &mut dk, false);
            dk
        })
        .collect();

    let mut grad_k = Arr::zeros(kernel_shape);
    for p in partials {
        for (g, v) in grad_k.data_mut().iter_mut().zip(p.iter()) {
            *g = *g + *v;
        }
    }
    grad_k
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Nested-loop direct convolution, the independence oracle.
    fn conv_oracle(input: &Arr<f64>, kernel: &Arr<f64>, pad: usize) -> Arr<f64> {
        let (n_img, c_in, h, w) = (
            input.shape()[0],
            input.shape()[1],
            input.shape()[2],
            input.shape()[3],
        );
        let (c_out, k) = (kernel.shape()[0], kernel.shape()[2]);
        let mut out = Arr::zeros(&[n_img, c_out, h, w]);
        for n in 0..n_img {
            for co in 0..c_out {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = 0.0;
                        for c in 0..c_in {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = y as isize + ky as isize - pad as isize;
                                    let sx = x as isize + kx as isize - pad as isize;
                                    if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w
                                    {
                                        acc += input.at4(n, c, sy as usize, sx as usize)
                                            * kernel.at4(co, c, ky, kx);
                                    }
                                }
                            }
                        }
                        out.set4(n, co, y, x, acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = Arr::from_vec(
            &[1, 2, 4, 4],
            (0..32).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        );
        let mut kernel = Arr::zeros(&[2, 2, 1, 1]);
        kernel.set4(0, 0, 0, 0, 1.0);
        kernel.set4(1, 1, 0, 0, 1.0);
        let out = forward(&input, &kernel, 0);
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn all_ones_3x3_on_constant_gives_9c_interior() {
        let input = Arr::full(&[1, 1, 5, 5], 2.0f32);
        let kernel = Arr::full(&[1, 1, 3, 3], 1.0f32);
        let out = forward(&input, &kernel, 1);
        assert_eq!(out.at4(0, 0, 2, 2), 18.0);
        // corner sees only a 2x2 window
        assert_eq!(out.at4(0, 0, 0, 0), 8.0);
    }

    #[test]
    fn random_case_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input64 = Arr::from_vec(
            &[1, 2, 5, 5],
            (0..50).map(|_| rng.gen_range(-1.0f64..1.0)).collect::<Vec<_>>(),
        );
        let kernel64 = Arr::from_vec(
            &[3, 2, 3, 3],
            (0..54).map(|_| rng.gen_range(-1.0f64..1.0)).collect::<Vec<_>>(),
        );
        let want = conv_oracle(&input64, &kernel64, 1);
        let input32 = input64.map(|v| v as f32);
        let kernel32 = kernel64.map(|v| v as f32);
        let got = forward(&input32, &kernel32, 1);
        for (g, w) in got.data().iter().zip(want.data().iter()) {
            let rel = (f64::from(*g) - w).abs() / w.abs().max(1.0);
            assert!(rel <= 1e-5, "got {g} want {w}");
        }
    }
}
