//! Dense helpers: quadrature nodes, Hermitian and general matrix square
//! roots, Bartels-Stewart Sylvester solves and matrix norms.

use nalgebra::{DMatrix, Schur, SymmetricEigen};
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

/// Gauss-Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (0.0, 1.0);
            for k in 1..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Chebyshev-Lobatto nodes on [a, b] (descending from b to a) and the
/// spectral differentiation matrix acting on values at those nodes.
pub fn chebyshev(n: usize, a: f64, b: f64) -> (Vec<f64>, DMatrix<f64>) {
    assert!(n >= 2);
    let m = n - 1;
    let t: Vec<f64> = (0..n)
        .map(|j| (std::f64::consts::PI * j as f64 / m as f64).cos())
        .collect();
    let c = |j: usize| -> f64 {
        let e = if j == 0 || j == m { 2.0 } else { 1.0 };
        if j % 2 == 0 {
            e
        } else {
            -e
        }
    };
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[(i, j)] = c(i) / c(j) / (t[i] - t[j]);
            }
        }
    }
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    let half = 0.5 * (b - a);
    let nodes = t.iter().map(|&ti| a + half * (ti + 1.0)).collect();
    (nodes, d / half)
}

pub fn hs_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Operator norm (largest singular value).
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Principal square root of a Hermitian positive semi-definite matrix.
pub fn herm_sqrt(m: &CMat) -> Result<CMat> {
    herm_fn(m, |x| {
        if x < -1e-10 {
            Err(Error::NotPositiveDefinite(x))
        } else {
            Ok(x.max(0.0).sqrt())
        }
    })
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn herm_fn(m: &CMat, f: impl Fn(f64) -> Result<f64>) -> Result<CMat> {
    let n = m.nrows();
    if n == 1 {
        return Ok(CMat::from_element(1, 1, C64::from(f(m[(0, 0)].re)?)));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut d = CMat::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = C64::from(f(eig.eigenvalues[i])?);
    }
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

pub fn herm_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)].re];
    }
    SymmetricEigen::new(hermitian_part(m)).eigenvalues.iter().cloned().collect()
}

fn schur(m: &CMat) -> (CMat, CMat) {
    let n = m.nrows();
    if n == 1 {
        return (CMat::identity(1, 1), m.clone());
    }
    match Schur::try_new(m.clone(), 1e-15, 10_000) {
        Some(s) => s.unpack(),
        None => Schur::new(m.clone()).unpack(),
    }
}

/// Principal square root of a general matrix via the Schur form.
pub fn sqrtm(m: &CMat) -> CMat {
    let n = m.nrows();
    let (q, t) = schur(m);
    let mut r = CMat::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = t[(i, i)].sqrt();
    }
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            let den = r[(i, i)] + r[(j, j)];
            r[(i, j)] = if den.norm() > 0.0 { s / den } else { C64::new(0.0, 0.0) };
        }
    }
    &q * r * q.adjoint()
}

/// Solves `A X + X B = C` by the Bartels-Stewart method. Fails when the
/// spectra of `A` and `-B` come closer than `gap_tol`.
pub fn sylvester(a: &CMat, b: &CMat, c: &CMat, gap_tol: f64) -> Result<CMat> {
    let n = a.nrows();
    let m = b.nrows();
    let (u, r) = schur(a);
    let (v, s) = schur(b);
    let f = u.adjoint() * c * &v;
    let mut y = CMat::zeros(n, m);
    let mut min_gap = f64::INFINITY;
    for j in 0..m {
        let mut rhs: Vec<C64> = (0..n).map(|i| f[(i, j)]).collect();
        for k in 0..j {
            let skj = s[(k, j)];
            if skj != C64::new(0.0, 0.0) {
                for (i, v) in rhs.iter_mut().enumerate() {
                    *v -= y[(i, k)] * skj;
                }
            }
        }
        let shift = s[(j, j)];
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for k in i + 1..n {
                acc -= r[(i, k)] * y[(k, j)];
            }
            let d = r[(i, i)] + shift;
            min_gap = min_gap.min(d.norm());
            if d.norm() <= gap_tol {
                return Err(Error::SylvesterSingular(d.norm()));
            }
            y[(i, j)] = acc / d;
        }
    }
    Ok(u * y * v.adjoint())
}

pub fn cscale(m: &CMat, s: f64) -> CMat {
    m.map(|z| z * s)
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        for k in 0..14 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn chebyshev_differentiates() {
        let (y, d) = chebyshev(16, -0.5, 0.0);
        let f: Vec<f64> = y.iter().map(|t| (2.0 * t).sin()).collect();
        for i in 0..16 {
            let df: f64 = (0..16).map(|j| d[(i, j)] * f[j]).sum();
            assert!((df - 2.0 * (2.0 * y[i]).cos()).abs() < 1e-11);
        }
        assert!(y[0].abs() < 1e-15);
    }

    #[test]
    fn sylvester_matches_residual() {
        let n = 4;
        let a = CMat::from_fn(n, n, |i, j| C64::new((i * 3 + j) as f64 * 0.1 + if i == j { 3.0 } else { 0.0 }, (i as f64 - j as f64) * 0.2));
        let b = CMat::from_fn(n, n, |i, j| C64::new(if i == j { 2.0 } else { 0.3 }, 0.1 * j as f64));
        let c = CMat::from_fn(n, n, |i, j| C64::new(i as f64, j as f64));
        let x = sylvester(&a, &b, &c, 1e-12).unwrap();
        let res = &a * &x + &x * &b - &c;
        assert!(hs_norm(&res) < 1e-12);
    }

    #[test]
    fn sqrtm_squares_back() {
        let a = CMat::from_fn(3, 3, |i, j| C64::new(if i == j { 4.0 } else { 0.5 }, 0.3 * (i as f64 - j as f64)));
        let r = sqrtm(&a);
        assert!(hs_norm(&(&r * &r - &a)) < 1e-12);
    }
}
