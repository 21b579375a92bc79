//! Small dense eigen-solvers used by the graph builders.

use crate::tensor::Tensor;

/// Result of a power iteration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    /// Rayleigh quotient of the final iterate.
    pub value: f64,
    /// Relative change of the quotient over the last step.
    pub rel_change: f64,
    pub iterations: usize,
}

/// Block power iteration (simultaneous iteration) on a symmetric matrix,
/// returning the largest Ritz value of the iterated subspace.
///
/// Each step multiplies the block by `m`, takes the Rayleigh–Ritz values of
/// the block and re-orthonormalizes it. The top Ritz value never exceeds
/// the top eigenvalue, and eigenvalues clustered inside the block do not
/// slow it down: the rate is set by the first eigenvalue outside it.
/// Stops once that value changes by at most `tol` (relative) or after
/// `max_iter` steps. `None` when the start block is degenerate or values
/// become non-finite.
pub fn block_power_iteration(m: &Tensor, start: &[Vec<f64>], tol: f64, max_iter: usize) -> Option<PowerEstimate> {
    let n = m.shape()[0];
    let a = m.data();
    let mut block = orthonormalize(start.to_vec());
    if block.is_empty() {
        return None;
    }
    let mut prev: Option<f64> = None;
    let mut est = None;
    for it in 1..=max_iter {
        let images: Vec<Vec<f64>> = block
            .iter()
            .map(|v| (0..n).map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum()).collect())
            .collect();
        let p = block.len();
        let h = Tensor::from_fn(vec![p, p], |k| {
            let (i, j) = (k / p, k % p);
            let hij: f64 = block[i].iter().zip(&images[j]).map(|(x, y)| x * y).sum();
            let hji: f64 = block[j].iter().zip(&images[i]).map(|(x, y)| x * y).sum();
            0.5 * (hij + hji)
        });
        if !h.is_finite() {
            return None;
        }
        let ritz = symmetric_eigen(&h).0[0];
        let rel_change = prev.map_or(f64::INFINITY, |q| (ritz - q).abs() / ritz.abs().max(f64::MIN_POSITIVE));
        est = Some(PowerEstimate {
            value: ritz,
            rel_change,
            iterations: it,
        });
        if rel_change <= tol {
            break;
        }
        prev = Some(ritz);
        block = orthonormalize(images);
        if block.is_empty() {
            // the block fell into the null space
            return Some(PowerEstimate {
                value: 0.0,
                rel_change: 0.0,
                iterations: it,
            });
        }
    }
    est
}

/// Modified Gram–Schmidt (two passes), dropping vectors that are linearly
/// dependent on the ones before them.
fn orthonormalize(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        let norm0 = norm(&v);
        if norm0 == 0.0 || !norm0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let nv = norm(&v);
        if nv <= 1e-10 * norm0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        basis.push(v);
    }
    basis
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as columns of an `n×n` row-major matrix. Each eigenvector is
/// sign-normalized so its largest-magnitude component is positive.
pub fn symmetric_eigen(m: &Tensor) -> (Vec<f64>, Tensor) {
    let n = m.shape()[0];
    let mut a = m.data().to_vec();
    let mut v = Tensor::eye(n).into_data();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
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
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        let pivot = (0..n)
            .max_by(|&x, &y| v[x * n + src].abs().total_cmp(&v[y * n + src].abs()))
            .unwrap_or(0);
        let sign = if v[pivot * n + src] < 0.0 { -1.0 } else { 1.0 };
        for row in 0..n {
            vecs[row * n + col] = sign * v[row * n + src];
        }
    }
    (values, Tensor::from_parts(vec![n, n], vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalizes_small_matrix() {
        let m = Tensor::new(vec![3, 3], vec![4., 1., 2., 1., 3., 0., 2., 0., 5.]).unwrap();
        let (vals, vecs) = symmetric_eigen(&m);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let trace: f64 = vals.iter().sum();
        assert!((trace - 12.0).abs() < 1e-12);
        // M v = λ v for each column
        for (c, lambda) in vals.iter().enumerate() {
            for r in 0..3 {
                let mv: f64 = (0..3).map(|k| m.at(&[r, k]) * vecs.at(&[k, c])).sum();
                assert!((mv - lambda * vecs.at(&[r, c])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_power_iteration_finds_top_eigenvalue() {
        let m = Tensor::new(vec![2, 2], vec![1., -1., -1., 1.]).unwrap();
        let l = block_power_iteration(&m, &[vec![1.0, 0.3]], 1e-12, 1000).unwrap();
        assert!((l.value - 2.0).abs() < 1e-12 && l.rel_change <= 1e-12);
        let z = block_power_iteration(&Tensor::zeros(vec![3, 3]), &[vec![1.0; 3]], 1e-12, 10).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(block_power_iteration(&m, &[vec![0.0, 0.0]], 1e-12, 10).is_none());
        // a single start orthogonal to the top eigenvector stays on the lower one
        let stuck = block_power_iteration(&m, &[vec![1.0, 1.0]], 1e-12, 1000).unwrap();
        assert!(stuck.value.abs() < 1e-12);
        // a block spanning the space is exact after one step
        let full = block_power_iteration(&m, &[vec![1.0, 1.0], vec![1.0, 2.0]], 1e-12, 1000).unwrap();
        assert!((full.value - 2.0).abs() < 1e-14);
    }

    #[test]
    fn near_degenerate_pair_inside_block() {
        // eigenvalues 2, 2 - 1e-7, 1, 0.5 in a rotated basis
        let d = [2.0, 2.0 - 1e-7, 1.0, 0.5];
        let q = Tensor::new(
            vec![4, 4],
            vec![0.5, 0.5, 0.5, 0.5, 0.5, -0.5, 0.5, -0.5, 0.5, 0.5, -0.5, -0.5, 0.5, -0.5, -0.5, 0.5],
        )
        .unwrap();
        let m = Tensor::from_fn(vec![4, 4], |k| {
            let (i, j) = (k / 4, k % 4);
            (0..4).map(|r| q.at(&[i, r]) * d[r] * q.at(&[j, r])).sum()
        });
        let start = vec![vec![1.0, 0.2, -0.3, 0.1], vec![0.3, -1.0, 0.5, 0.2]];
        let l = block_power_iteration(&m, &start, 1e-15, 1000).unwrap();
        assert!((l.value - 2.0).abs() < 1e-13, "{}", l.value);
    }
}
