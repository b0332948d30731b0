//! Small dense helpers: cyclic Jacobi for tiny symmetric matrices and a
//! Gauss–Legendre rule.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods shadow it once std is linked
use num_traits::Float;

/// Eigen-decomposition of a real symmetric `n × n` matrix (row-major).
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns of a row-major matrix.
pub(crate) fn symmetric_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
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
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = v[row * n + src];
        }
    }
    (values, vectors)
}

/// Two-point Gauss–Legendre rule on `[0, 1]`.
pub(crate) const GAUSS_LEGENDRE_2: [(f64, f64); 2] = {
    const X: f64 = 0.577_350_269_189_625_8;
    [(0.5 - 0.5 * X, 0.5), (0.5 + 0.5 * X, 0.5)]
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalizes() {
        let m = [4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 1.0];
        let (vals, vecs) = symmetric_eigen(&m, 3);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        for (c, &lambda) in vals.iter().enumerate() {
            for r in 0..3 {
                let mv: f64 = (0..3).map(|k| m[r * 3 + k] * vecs[k * 3 + c]).sum();
                assert!((mv - lambda * vecs[r * 3 + c]).abs() < 1e-12);
            }
        }
        let trace: f64 = vals.iter().sum();
        assert!((trace - 8.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_cubics() {
        let integral: f64 = GAUSS_LEGENDRE_2
            .iter()
            .map(|&(x, w)| w * x.powi(3))
            .sum();
        assert!((integral - 0.25).abs() < 1e-15);
    }
}
