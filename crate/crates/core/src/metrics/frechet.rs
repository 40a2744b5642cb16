//! Fréchet distance between Gaussian moment fits of two feature sets.

use crate::error::{MatError, Result};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
/// Returns (eigenvalues, eigenvectors as columns of a row-major matrix).
pub fn jacobi_eigen_sym(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j].abs();
            }
        }
        if off / scale < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() / scale < 1e-18 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    (eig, v)
}

/// Matrix square root of a symmetric PSD matrix via eigendecomposition;
/// negative eigenvalues are clamped at zero.
pub fn sqrtm_sym(a: &[f64], n: usize) -> Vec<f64> {
    let (eig, v) = jacobi_eigen_sym(a, n);
    let roots: Vec<f64> = eig.iter().map(|&l| l.max(0.0).sqrt()).collect();
    // V diag(roots) V^T
    let mut out = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v[i * n + k] * roots[k] * v[j * n + k];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

fn matmul_f64(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0f64; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

fn moments(feats: &[Vec<f32>], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = feats.len();
    let mut mu = vec![0.0f64; d];
    for f in feats {
        for (m, &x) in mu.iter_mut().zip(f) {
            *m += x as f64;
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    let mut cov = vec![0.0f64; d * d];
    for f in feats {
        for i in 0..d {
            let di = f[i] as f64 - mu[i];
            for j in 0..d {
                cov[i * d + j] += di * (f[j] as f64 - mu[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for c in &mut cov {
        *c /= denom;
    }
    (mu, cov)
}

const COV_EPS: f64 = 1e-6;

/// `||muA - muB||^2 + Tr(SA + SB - 2 (SA SB)^{1/2})`.
///
/// Covariances are regularized with +eps I (eps = 1e-6) so degenerate sets
/// stay well-posed; the product is symmetrized before its eigendecomposition
/// and negative eigenvalues are clamped at zero. Result clamped at 0.
pub fn frechet_distance(feats_a: &[Vec<f32>], feats_b: &[Vec<f32>]) -> Result<f64> {
    if feats_a.len() < 2 || feats_b.len() < 2 {
        return Err(MatError::Contract(
            "frechet_distance needs at least 2 samples per set".to_string(),
        ));
    }
    let d = feats_a[0].len();
    if d == 0 || d > 64 {
        return Err(MatError::Contract(format!(
            "feature dimension {d} outside 1..=64"
        )));
    }
    if feats_a.iter().chain(feats_b).any(|f| f.len() != d) {
        return Err(MatError::Dimension("inconsistent feature dims".to_string()));
    }
    let (mu_a, mut cov_a) = moments(feats_a, d);
    let (mu_b, mut cov_b) = moments(feats_b, d);
    for i in 0..d {
        cov_a[i * d + i] += COV_EPS;
        cov_b[i * d + i] += COV_EPS;
    }
    let mean_term: f64 = mu_a
        .iter()
        .zip(&mu_b)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let prod = matmul_f64(&cov_a, &cov_b, d);
    // symmetrize before the eigendecomposition
    let mut sym = vec![0.0f64; d * d];
    for i in 0..d {
        for j in 0..d {
            sym[i * d + j] = 0.5 * (prod[i * d + j] + prod[j * d + i]);
        }
    }
    let (eig, _) = jacobi_eigen_sym(&sym, d);
    let tr_sqrt: f64 = eig.iter().map(|&l| l.max(0.0).sqrt()).sum();
    let tr_a: f64 = (0..d).map(|i| cov_a[i * d + i]).sum();
    let tr_b: f64 = (0..d).map(|i| cov_b[i * d + i]).sum();
    Ok((mean_term + tr_a + tr_b - 2.0 * tr_sqrt).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identical_sets_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let feats: Vec<Vec<f32>> = (0..50)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let d = frechet_distance(&feats, &feats).unwrap();
        assert!(d.abs() < 1e-8, "distance {d}");
    }

    #[test]
    fn one_dim_gaussians_with_unit_mean_gap() {
        // equal variance, means 0 and 1: closed form distance = 1.0
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draw = |rng: &mut ChaCha8Rng, mean: f32| -> Vec<Vec<f32>> {
            (0..100_000)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    vec![mean + 0.5 * z as f32]
                })
                .collect()
        };
        let a = draw(&mut rng, 0.0);
        let b = draw(&mut rng, 1.0);
        let d = frechet_distance(&a, &b).unwrap();
        assert!((d - 1.0).abs() < 0.02, "distance {d}");
    }

    #[test]
    fn sqrtm_matches_constructed_spd_decomposition() {
        // build SPD = Q diag(l) Q^T from an independent orthogonalization,
        // compare sqrtm against Q diag(sqrt(l)) Q^T
        let n = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _case in 0..10 {
            // Gram-Schmidt a random matrix into Q
            let mut q = vec![0.0f64; n * n];
            for col in 0..n {
                let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                for prev in 0..col {
                    let dot: f64 = (0..n).map(|i| v[i] * q[i * n + prev]).sum();
                    for i in 0..n {
                        v[i] -= dot * q[i * n + prev];
                    }
                }
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                for i in 0..n {
                    q[i * n + col] = v[i] / norm;
                }
            }
            let eig: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
            let build = |vals: &[f64]| -> Vec<f64> {
                let mut m = vec![0.0f64; n * n];
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += q[i * n + k] * vals[k] * q[j * n + k];
                        }
                        m[i * n + j] = acc;
                    }
                }
                m
            };
            let spd = build(&eig);
            let sqrt_true = build(&eig.iter().map(|&l| l.sqrt()).collect::<Vec<_>>());
            let sqrt_got = sqrtm_sym(&spd, n);
            let max_diff = sqrt_true
                .iter()
                .zip(&sqrt_got)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_diff < 1e-8, "sqrtm max diff {max_diff}");
        }
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<Vec<f32>> = (0..40)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let b: Vec<Vec<f32>> = (0..40)
            .map(|_| (0..4).map(|_| rng.random_range(0.0..2.0)).collect())
            .collect();
        let dab = frechet_distance(&a, &b).unwrap();
        let dba = frechet_distance(&b, &a).unwrap();
        assert!((dab - dba).abs() < 1e-9);
        assert!(dab >= 0.0);
    }
}
