//! Row-major GEMM kernels backing the convolution and projection layers.
//!
//! Two implementations: a portable blocked loop that LLVM auto-vectorizes,
//! and an AVX2+FMA microkernel selected at runtime for f32. Both compute
//! each output element with the same, fixed accumulation order over `k`
//! within a register block, and threads only ever own disjoint row ranges,
//! so results are bit-stable across thread counts for a given build.

use num_traits::Float;
use rayon::prelude::*;

/// Work threshold (in multiply-adds) below which threading is not worth it.
const PAR_FLOP_THRESHOLD: usize = 1 << 18;

/// `c = a * b` (or `c += a * b`), all row-major contiguous.
pub fn gemm_generic<F: Float + Send + Sync + Copy>(
    m: usize,
    n: usize,
    k: usize,
    a: &[F],
    b: &[F],
    c: &mut [F],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs buffer mismatch");
    assert_eq!(b.len(), k * n, "gemm: rhs buffer mismatch");
    assert_eq!(c.len(), m * n, "gemm: out buffer mismatch");
    if m == 0 || n == 0 {
        return;
    }
    let body = |(i, c_row): (usize, &mut [F])| {
        if !accumulate {
            for v in c_row.iter_mut() {
                *v = F::zero();
            }
        }
        let a_row = &a[i * k..(i + 1) * k];
        for (kk, &aik) in a_row.iter().enumerate() {
            if aik == F::zero() {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row.iter()) {
                *cv = *cv + aik * bv;
            }
        }
    };
    if m * n * k >= PAR_FLOP_THRESHOLD {
        c.par_chunks_mut(n).enumerate().for_each(body);
    } else {
        c.chunks_mut(n).enumerate().for_each(body);
    }
}

/// f32 entry point with runtime CPU dispatch.
pub fn gemm_f32(m: usize, n: usize, k: usize, a: &[f32], b: &[f32], c: &mut [f32], accumulate: bool) {
    assert_eq!(a.len(), m * k, "gemm: lhs buffer mismatch");
    assert_eq!(b.len(), k * n, "gemm: rhs buffer mismatch");
    assert_eq!(c.len(), m * n, "gemm: out buffer mismatch");
    if m == 0 || n == 0 {
        return;
    }
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") && n >= 8 {
            let run = |(i0, c_rows): (usize, &mut [f32])| {
                let rows = c_rows.len() / n;
                // SAFETY: avx2+fma presence checked above.
                unsafe { gemm_block_avx2(i0, rows, n, k, a, b, c_rows, accumulate) };
            };
            let row_work = n * k;
            if m * row_work >= PAR_FLOP_THRESHOLD && m >= 2 {
                let threads = rayon::current_num_threads().max(1);
                let rows_per = m.div_ceil(threads).max(1);
                c.par_chunks_mut(rows_per * n)
                    .enumerate()
                    .for_each(|(bi, chunk)| run((bi * rows_per, chunk)));
            } else {
                run((0, c));
            }
            return;
        }
    }
    gemm_generic(m, n, k, a, b, c, accumulate);
}

/// AVX2 microkernel: 4 rows x 16 columns of C held in registers across the
/// full k loop. Tails fall back to scalar code with the same k order.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn gemm_block_avx2(
    row0: usize,
    rows: usize,
    n: usize,
    k: usize,
    a: &[f32],
    b: &[f32],
    c: &mut [f32],
    accumulate: bool,
) {
    use std::arch::x86_64::*;
    const MR: usize = 4;
    const NR: usize = 16;

    let mut i = 0;
    while i < rows {
        let ib = MR.min(rows - i);
        let mut j = 0;
        while j + NR <= n {
            if ib == MR {
                let mut acc = [[_mm256_setzero_ps(); 2]; MR];
                if accumulate {
                    for r in 0..MR {
                        let base = (i + r) * n + j;
                        acc[r][0] = _mm256_loadu_ps(c.as_ptr().add(base));
                        acc[r][1] = _mm256_loadu_ps(c.as_ptr().add(base + 8));
                    }
                }
                let ar0 = (row0 + i) * k;
                for kk in 0..k {
                    let b0 = _mm256_loadu_ps(b.as_ptr().add(kk * n + j));
                    let b1 = _mm256_loadu_ps(b.as_ptr().add(kk * n + j + 8));
                    for r in 0..MR {
                        let av = _mm256_set1_ps(*a.get_unchecked(ar0 + r * k + kk));
                        acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
                        acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
                    }
                }
                for r in 0..MR {
                    let base = (i + r) * n + j;
                    _mm256_storeu_ps(c.as_mut_ptr().add(base), acc[r][0]);
                    _mm256_storeu_ps(c.as_mut_ptr().add(base + 8), acc[r][1]);
                }
            } else {
                for r in 0..ib {
                    let mut acc0 = _mm256_setzero_ps();
                    let mut acc1 = _mm256_setzero_ps();
                    let base = (i + r) * n + j;
                    if accumulate {
                        acc0 = _mm256_loadu_ps(c.as_ptr().add(base));
                        acc1 = _mm256_loadu_ps(c.as_ptr().add(base + 8));
                    }
                    let ar = (row0 + i + r) * k;
                    for kk in 0..k {
                        let av = _mm256_set1_ps(*a.get_unchecked(ar + kk));
                        let b0 = _mm256_loadu_ps(b.as_ptr().add(kk * n + j));
                        let b1 = _mm256_loadu_ps(b.as_ptr().add(kk * n + j + 8));
                        acc0 = _mm256_fmadd_ps(av, b0, acc0);
                        acc1 = _mm256_fmadd_ps(av, b1, acc1);
                    }
                    _mm256_storeu_ps(c.as_mut_ptr().add(base), acc0);
                    _mm256_storeu_ps(c.as_mut_ptr().add(base + 8), acc1);
                }
            }
            j += NR;
        }
        if j < n {
            for r in 0..ib {
                let ar = (row0 + i + r) * k;
                for jj in j..n {
                    let mut s = if accumulate { c[(i + r) * n + jj] } else { 0.0 };
                    for kk in 0..k {
                        s = a[ar + kk].mul_add(b[kk * n + jj], s);
                    }
                    c[(i + r) * n + jj] = s;
                }
            }
        }
        i += ib;
    }
}

/// Transposes a row-major `rows x cols` matrix into `out` (`cols x rows`).
pub fn transpose<F: Copy>(rows: usize, cols: usize, src: &[F], out: &mut [F]) {
    assert_eq!(src.len(), rows * cols);
    assert_eq!(out.len(), rows * cols);
    // Block for cache friendliness; 32x32 tiles of f32 fit easily in L1.
    const B: usize = 32;
    let mut r0 = 0;
    while r0 < rows {
        let r1 = (r0 + B).min(rows);
        let mut c0 = 0;
        while c0 < cols {
            let c1 = (c0 + B).min(cols);
            for r in r0..r1 {
                for c in c0..c1 {
                    out[c * rows + r] = src[r * cols + c];
                }
            }
            c0 = c1;
        }
        r0 = r1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference(m: usize, n: usize, k: usize, a: &[f32], b: &[f32]) -> Vec<f32> {
        let mut c = vec![0.0f64; m * n];
        for i in 0..m {
            for kk in 0..k {
                let av = a[i * k + kk] as f64;
                for j in 0..n {
                    c[i * n + j] += av * b[kk * n + j] as f64;
                }
            }
        }
        c.into_iter().map(|v| v as f32).collect()
    }

    #[test]
    fn f32_matches_reference_on_odd_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m, n, k) in &[(1, 1, 1), (3, 17, 5), (4, 16, 9), (7, 33, 12), (13, 40, 31)] {
            let a: Vec<f32> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut c = vec![0.0f32; m * n];
            gemm_f32(m, n, k, &a, &b, &mut c, false);
            let want = reference(m, n, k, &a, &b);
            for (got, want) in c.iter().zip(want.iter()) {
                assert!((got - want).abs() <= 1e-4, "got {got} want {want}");
            }
        }
    }

    #[test]
    fn accumulate_adds_on_top() {
        let a = vec![1.0f32, 2.0];
        let b = vec![3.0f32, 4.0];
        let mut c = vec![10.0f32];
        gemm_f32(1, 1, 2, &a, &b, &mut c, true);
        assert_eq!(c[0], 10.0 + 11.0);
    }

    #[test]
    fn transpose_roundtrip() {
        let src: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let mut t = vec![0.0f32; 12];
        let mut back = vec![0.0f32; 12];
        transpose(3, 4, &src, &mut t);
        transpose(4, 3, &t, &mut back);
        assert_eq!(src, back);
    }
}
