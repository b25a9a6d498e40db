//! Small eigen-solvers: dense Hermitian decomposition and a preconditioned
//! single-vector LOBPCG iteration for the lowest eigenpair of a real
//! symmetric operator given as a closure.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense Hermitian eigen-decomposition, eigenvalues ascending.
pub fn hermitian_eigen(matrix: DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let n = matrix.nrows();
    let eig = SymmetricEigen::try_new(matrix, 1e-15, 10_000 * n.max(1))
        .ok_or_else(|| Error::EigenSolver("dense Hermitian solve did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Inverse square root of a Hermitian positive definite matrix together
/// with its spectral condition number.
pub fn inverse_sqrt(matrix: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, f64)> {
    let n = matrix.nrows();
    let (values, vectors) = hermitian_eigen(matrix.clone())?;
    let lo = values[0];
    let hi = values[n - 1];
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(lo > 1e-12 * hi.abs().max(1e-300)) {
        return Err(Error::SingularGram { condition });
    }
    let scale: Vec<f64> = values.iter().map(|v| 1.0 / v.sqrt()).collect();
    let out = DMatrix::from_fn(n, n, |r, c| {
        (0..n)
            .map(|k| vectors[(r, k)] * scale[k] * vectors[(c, k)].conj())
            .sum::<Complex64>()
    });
    Ok((out, condition))
}

#[derive(Debug, Clone)]
pub struct LowestPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Lowest eigenpair of a real symmetric operator.
///
/// `weight` is the quadrature weight of the inner product
/// `<u, v> = weight * sum u v`; the returned vector is normalised in it.
pub fn lobpcg_lowest<A, P>(
    apply: A,
    precondition: P,
    initial: Vec<f64>,
    weight: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LowestPair>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let dot = |u: &[f64], v: &[f64]| weight * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let normalize = |u: &mut Vec<f64>| -> f64 {
        let n = dot(u, u).sqrt();
        if n > 0.0 {
            u.iter_mut().for_each(|x| *x /= n);
        }
        n
    };

    let mut x = initial;
    if normalize(&mut x) == 0.0 {
        return Err(Error::EigenSolver("zero initial vector".into()));
    }
    let mut hx = apply(&x);
    let mut lambda = dot(&x, &hx);
    let mut p: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut residual = f64::INFINITY;
    let mut best = (f64::INFINITY, 0usize);

    for iter in 0..max_iter {
        let r: Vec<f64> = hx.iter().zip(&x).map(|(h, v)| h - lambda * v).collect();
        residual = dot(&r, &r).sqrt();
        if residual < best.0 {
            best = (residual, iter);
        }
        if residual <= tol {
            return Ok(LowestPair { value: lambda, vector: x, residual, iterations: iter });
        }
        // stagnation at round-off level
        if iter > best.1 + 50 && best.0 <= 1e3 * tol {
            return Ok(LowestPair { value: lambda, vector: x, residual, iterations: iter });
        }

        let w = precondition(&r);
        let mut basis: Vec<Vec<f64>> = vec![x.clone()];
        let mut images: Vec<Vec<f64>> = vec![hx.clone()];
        let mut candidates = vec![w];
        if let Some((pv, _)) = &p {
            candidates.push(pv.clone());
        }
        for mut c in candidates {
            let before = dot(&c, &c).sqrt();
            for _ in 0..2 {
                for b in &basis {
                    let proj = dot(b, &c);
                    c.iter_mut().zip(b).for_each(|(ci, bi)| *ci -= proj * bi);
                }
            }
            let after = dot(&c, &c).sqrt();
            if after > 1e-10 * before && after > 0.0 {
                c.iter_mut().for_each(|ci| *ci /= after);
                images.push(apply(&c));
                basis.push(c);
            }
        }

        let k = basis.len();
        let small = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i])));
        let eig = SymmetricEigen::try_new(small, 1e-15, 1000)
            .ok_or_else(|| Error::EigenSolver("Rayleigh-Ritz step failed".into()))?;
        let imin = (0..k)
            .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
            .unwrap_or(0);
        let y: DVector<f64> = eig.eigenvectors.column(imin).into_owned();

        let combine = |vs: &[Vec<f64>], from: usize| -> Vec<f64> {
            let mut out = vec![0.0; vs[0].len()];
            for (i, v) in vs.iter().enumerate().skip(from) {
                let c = y[i];
                out.iter_mut().zip(v).for_each(|(o, vi)| *o += c * vi);
            }
            out
        };
        let new_x = combine(&basis, 0);
        let new_hx = combine(&images, 0);
        if k > 1 {
            p = Some((combine(&basis, 1), combine(&images, 1)));
        }
        x = new_x;
        hx = new_hx;
        let n = normalize(&mut x);
        hx.iter_mut().for_each(|h| *h /= n);
        lambda = dot(&x, &hx);
    }
    Err(Error::EigenSolver(format!(
        "LOBPCG reached {max_iter} iterations with residual {residual:.3e}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_eigen_sorted() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(2.0, 0.0),
            ],
        );
        let (vals, _) = hermitian_eigen(m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_sqrt_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(4.0, 0.0),
            Complex64::new(9.0, 0.0),
        ]));
        let (s, cond) = inverse_sqrt(&m).unwrap();
        assert!((s[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!((s[(1, 1)].re - 1.0 / 3.0).abs() < 1e-14);
        assert!((cond - 2.25).abs() < 1e-12);
    }

    #[test]
    fn singular_gram_rejected() {
        let m = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(inverse_sqrt(&m), Err(Error::SingularGram { .. })));
    }

    #[test]
    fn lobpcg_finds_lowest_of_tridiagonal() {
        // discrete Dirichlet Laplacian: lowest eigenvalue 2 - 2 cos(pi/(n+1))
        let n = 60;
        let apply = |u: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let l = if i > 0 { u[i - 1] } else { 0.0 };
                    let r = if i + 1 < n { u[i + 1] } else { 0.0 };
                    2.0 * u[i] - l - r
                })
                .collect()
        };
        let init: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i as f64).sin()).collect();
        let pair = lobpcg_lowest(apply, |r| r.to_vec(), init, 1.0, 1e-10, 5000).unwrap();
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((pair.value - exact).abs() < 1e-12, "{} vs {}", pair.value, exact);
    }
}
