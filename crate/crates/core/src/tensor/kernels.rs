//! Raw compute kernels shared by graph forward and backward passes.
//!
//! All kernels are single-threaded with a fixed accumulation order, so
//! results are bitwise reproducible. Scalar reductions accumulate in f64,
//! which also tightens the finite-difference gradient oracles in f32.

use crate::tensor::scalar::Scalar;

/// C[m,n] += A[m,k] @ B[k,n]
pub fn matmul_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += aip * bv;
            }
        }
    }
}

pub fn matmul<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::ZERO; m * n];
    matmul_acc(a, b, &mut c, m, k, n);
    c
}

/// C[m,n] += A[m,k] @ B[n,k]^T
pub fn matmul_bt_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = S::ZERO;
            for (&av, &bv) in arow.iter().zip(brow.iter()) {
                acc += av * bv;
            }
            c[i * n + j] += acc;
        }
    }
}

/// C[m,n] += A[k,m]^T @ B[k,n]
pub fn matmul_at_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += av * bv;
            }
        }
    }
}

/// Geometry of one 3D convolution. Spatial padding is symmetric "same"-style
/// (extra pixel goes to the bottom/right); temporal padding sits entirely on
/// the past side (`pad_t = kt - 1` for causal convs, 0 for full-stride merges).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    pub ci: usize,
    pub co: usize,
    pub kt: usize,
    pub kh: usize,
    pub kw: usize,
    pub st: usize,
    pub sh: usize,
    pub sw: usize,
    pub pad_t: usize,
    pub in_t: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl ConvSpec {
    pub fn out_t(&self) -> usize {
        (self.in_t + self.pad_t).saturating_sub(self.kt) / self.st + 1
    }
    pub fn out_h(&self) -> usize {
        self.in_h.div_ceil(self.sh)
    }
    pub fn out_w(&self) -> usize {
        self.in_w.div_ceil(self.sw)
    }
    pub fn pad_h_total(&self) -> usize {
        ((self.out_h() - 1) * self.sh + self.kh).saturating_sub(self.in_h)
    }
    pub fn pad_w_total(&self) -> usize {
        ((self.out_w() - 1) * self.sw + self.kw).saturating_sub(self.in_w)
    }
    pub fn patch(&self) -> usize {
        self.ci * self.kt * self.kh * self.kw
    }
    pub fn out_cols(&self) -> usize {
        self.out_t() * self.out_h() * self.out_w()
    }
}

/// Unfold x[C,T,H,W] into col[patch, out_cols]; out-of-range taps read zero.
pub fn im2col<S: Scalar>(x: &[S], spec: &ConvSpec) -> Vec<S> {
    let (ot, oh, ow) = (spec.out_t(), spec.out_h(), spec.out_w());
    let (ph, pw) = (spec.pad_h_total() / 2, spec.pad_w_total() / 2);
    let cols = spec.out_cols();
    let mut col = vec![S::ZERO; spec.patch() * cols];
    let hw = spec.in_h * spec.in_w;
    let thw = spec.in_t * hw;
    for c in 0..spec.ci {
        for dt in 0..spec.kt {
            for dh in 0..spec.kh {
                for dw in 0..spec.kw {
                    let prow = ((c * spec.kt + dt) * spec.kh + dh) * spec.kw + dw;
                    let out = &mut col[prow * cols..(prow + 1) * cols];
                    for t in 0..ot {
                        let it = (t * spec.st + dt) as isize - spec.pad_t as isize;
                        if it < 0 || it as usize >= spec.in_t {
                            continue;
                        }
                        let base_t = c * thw + it as usize * hw;
                        for h in 0..oh {
                            let ih = (h * spec.sh + dh) as isize - ph as isize;
                            if ih < 0 || ih as usize >= spec.in_h {
                                continue;
                            }
                            let base_h = base_t + ih as usize * spec.in_w;
                            let orow = (t * oh + h) * ow;
                            for w in 0..ow {
                                let iw = (w * spec.sw + dw) as isize - pw as isize;
                                if iw < 0 || iw as usize >= spec.in_w {
                                    continue;
                                }
                                out[orow + w] = x[base_h + iw as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add the columns back: inverse of [`im2col`] for gradients.
pub fn col2im_acc<S: Scalar>(col: &[S], dx: &mut [S], spec: &ConvSpec) {
    let (ot, oh, ow) = (spec.out_t(), spec.out_h(), spec.out_w());
    let (ph, pw) = (spec.pad_h_total() / 2, spec.pad_w_total() / 2);
    let cols = spec.out_cols();
    let hw = spec.in_h * spec.in_w;
    let thw = spec.in_t * hw;
    for c in 0..spec.ci {
        for dt in 0..spec.kt {
            for dh in 0..spec.kh {
                for dw in 0..spec.kw {
                    let prow = ((c * spec.kt + dt) * spec.kh + dh) * spec.kw + dw;
                    let src = &col[prow * cols..(prow + 1) * cols];
                    for t in 0..ot {
                        let it = (t * spec.st + dt) as isize - spec.pad_t as isize;
                        if it < 0 || it as usize >= spec.in_t {
                            continue;
                        }
                        let base_t = c * thw + it as usize * hw;
                        for h in 0..oh {
                            let ih = (h * spec.sh + dh) as isize - ph as isize;
                            if ih < 0 || ih as usize >= spec.in_h {
                                continue;
                            }
                            let base_h = base_t + ih as usize * spec.in_w;
                            let orow = (t * oh + h) * ow;
                            for w in 0..ow {
                                let iw = (w * spec.sw + dw) as isize - pw as isize;
                                if iw < 0 || iw as usize >= spec.in_w {
                                    continue;
                                }
                                dx[base_h + iw as usize] += src[orow + w];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Row-wise softmax over the last axis; `rows * cols == x.len()`.
pub fn softmax_rows<S: Scalar>(x: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut y = vec![S::ZERO; x.len()];
    for r in 0..rows {
        let xi = &x[r * cols..(r + 1) * cols];
        let yo = &mut y[r * cols..(r + 1) * cols];
        let mut mx = xi[0];
        for &v in xi.iter() {
            mx = mx.max_s(v);
        }
        let mut denom = 0.0f64;
        for (o, &v) in yo.iter_mut().zip(xi.iter()) {
            let e = (v - mx).exp();
            denom += e.to_f64();
            *o = e;
        }
        let inv = S::from_f64(1.0 / denom);
        for o in yo.iter_mut() {
            *o *= inv;
        }
    }
    y
}

/// Sum with f64 accumulation.
pub fn sum_f64<S: Scalar>(x: &[S]) -> f64 {
    x.iter().map(|v| v.to_f64()).sum()
}

/// Per-group mean and inverse stddev for group norm over [C,rest] layout.
/// Returns (mean, inv_std) of length `groups`, computed in f64.
pub fn group_stats<S: Scalar>(
    x: &[S],
    channels: usize,
    groups: usize,
    eps: f64,
) -> (Vec<f64>, Vec<f64>) {
    let per_ch = x.len() / channels;
    let ch_per_g = channels / groups;
    let gsize = (ch_per_g * per_ch) as f64;
    let mut mean = vec![0.0f64; groups];
    let mut inv_std = vec![0.0f64; groups];
    for g in 0..groups {
        let seg = &x[g * ch_per_g * per_ch..(g + 1) * ch_per_g * per_ch];
        let m = sum_f64(seg) / gsize;
        let mut var = 0.0f64;
        for &v in seg {
            let d = v.to_f64() - m;
            var += d * d;
        }
        var /= gsize;
        mean[g] = m;
        inv_std[g] = 1.0 / (var + eps).sqrt();
    }
    (mean, inv_std)
}
