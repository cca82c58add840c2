//! Dense linear algebra for the small dimensions this crate works in.
//!
//! Everything here is self-contained: a cyclic Jacobi eigensolver for
//! symmetric matrices, the inverse square root used for whitening, and a
//! column-pivoted Householder QR that backs polynomial least squares.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};

const SYMMETRY_TOL: f64 = 1e-12;
const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;
const SIGN_TOL: f64 = 1e-12;
/// Eigengap below which an extremal eigenvector is reported as degenerate.
pub const DEGENERATE_GAP: f64 = 1e-12;
/// Relative pivot size below which a Vandermonde column is treated as dependent.
pub const PIVOT_TOL: f64 = 1e-10;

/// A real symmetric matrix stored densely in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    /// Builds a matrix from rows, checking shape, finiteness and symmetry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidInput(
                "matrix must have at least one row".into(),
            ));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "expected a square matrix of order {dim}, found a row of length {}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for order {dim}, found {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has a non-finite entry".into()));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(1.0) {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(SymMatrix { dim, data })
    }

    /// Builds `f(i, j)` for `i <= j` and mirrors it below the diagonal.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.dim.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `self += weight * v vᵀ`
    pub fn add_outer(&mut self, v: &[f64], weight: f64) {
        debug_assert_eq!(v.len(), self.dim);
        let d = self.dim;
        for i in 0..d {
            let wi = weight * v[i];
            for j in i..d {
                self.data[i * d + j] += wi * v[j];
            }
        }
        self.mirror_upper();
    }

    /// `self += weight * other`
    pub fn add_scaled(&mut self, other: &SymMatrix, weight: f64) {
        debug_assert_eq!(other.dim, self.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += weight * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data.chunks(self.dim).map(|row| dot(row, v)).collect()
    }

    /// Square of the matrix, which is again symmetric.
    pub fn square(&self) -> SymMatrix {
        let d = self.dim;
        SymMatrix::from_upper_fn(d, |i, j| {
            (0..d).map(|k| self.get(i, k) * self.get(k, j)).sum()
        })
    }

    /// `self · a · self`, symmetric whenever both factors are.
    pub fn sandwich(&self, a: &SymMatrix) -> SymMatrix {
        let d = self.dim;
        let mut tmp = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let s = self.get(i, k);
                if s == 0.0 {
                    continue;
                }
                for j in 0..d {
                    tmp[i * d + j] += s * a.get(k, j);
                }
            }
        }
        SymMatrix::from_upper_fn(d, |i, j| {
            (0..d).map(|k| tmp[i * d + k] * self.get(k, j)).sum()
        })
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> Result<f64> {
        let eig = sym_eigen(self)?;
        Ok(eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    fn mirror_upper(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in (i + 1)..d {
                self.data[j * d + i] = self.data[i * d + j];
            }
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.rows()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Returns `v / ‖v‖`, or `None` for a zero or non-finite vector.
pub fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    if n > 0.0 && n.is_finite() {
        Some(v.iter().map(|x| x / n).collect())
    } else {
        None
    }
}

/// Flips `v` in place so that its first coordinate larger than `1e-12` in
/// magnitude is positive.
pub fn canonical_sign(v: &mut [f64]) {
    if let Some(&lead) = v.iter().find(|x| x.abs() > SIGN_TOL) {
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Full spectrum of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector paired with `values[i]`, in
    /// canonical sign.
    pub vectors: Vec<Vec<f64>>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(λ) Vᵀ`
    pub fn reconstruct(&self) -> SymMatrix {
        let mut m = SymMatrix::zeros(self.dim());
        for (lambda, v) in self.values.iter().zip(&self.vectors) {
            m.add_outer(v, *lambda);
        }
        m
    }

    /// Difference between the two largest eigenvalues (the largest itself in
    /// dimension one).
    pub fn top_gap(&self) -> f64 {
        match self.values.as_slice() {
            [] => 0.0,
            [only] => only.abs(),
            [first, second, ..] => first - second,
        }
    }

    /// Difference between the two smallest eigenvalues.
    pub fn bottom_gap(&self) -> f64 {
        let n = self.values.len();
        match n {
            0 => 0.0,
            1 => self.values[0].abs(),
            _ => self.values[n - 2] - self.values[n - 1],
        }
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Iterates until the off-diagonal Frobenius mass drops below
/// `1e-14 · ‖A‖_F`, for at most 100 sweeps. Eigenpairs are sorted by
/// eigenvalue (descending) and, for exactly repeated eigenvalues, by the
/// lexicographic order of the canonically signed eigenvectors, so the output
/// is a deterministic function of the input.
pub fn sym_eigen(a: &SymMatrix) -> Result<EigenDecomposition> {
    let d = a.dim;
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has a non-finite entry".into()));
    }
    // Work on the exact symmetric part.
    let mut m = a.data.clone();
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (m[i * d + j] + m[j * d + i]);
            m[i * d + j] = s;
            m[j * d + i] = s;
        }
    }
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }

    let scale = a.frobenius_norm();
    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                s += 2.0 * m[i * d + j] * m[i * d + j];
            }
        }
        s.sqrt()
    };

    let mut converged = scale == 0.0 || off(&m) <= JACOBI_TOL * scale;
    let mut sweep = 0;
    while !converged && sweep < JACOBI_MAX_SWEEPS {
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m[p * d + p], m[q * d + q]);
                // Once an entry is negligible against both diagonal entries
                // its rotation would be the identity in floating point.
                if sweep > 3
                    && app.abs() + 1e2 * apq.abs() == app.abs()
                    && aqq.abs() + 1e2 * apq.abs() == aqq.abs()
                {
                    m[p * d + q] = 0.0;
                    m[q * d + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, d, p, q, c, s, t, apq);
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
        sweep += 1;
        converged = off(&m) <= JACOBI_TOL * scale;
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|i| {
            let mut col: Vec<f64> = (0..d).map(|k| v[k * d + i]).collect();
            canonical_sign(&mut col);
            (m[i * d + i], col)
        })
        .collect();
    pairs.sort_by(|(la, va), (lb, vb)| lb.total_cmp(la).then_with(|| lexicographic(va, vb)));
    let (values, vectors) = pairs.into_iter().unzip();
    Ok(EigenDecomposition { values, vectors })
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn rotate(m: &mut [f64], d: usize, p: usize, q: usize, c: f64, s: f64, t: f64, apq: f64) {
    let tau = s / (1.0 + c);
    m[p * d + p] -= t * apq;
    m[q * d + q] += t * apq;
    m[p * d + q] = 0.0;
    m[q * d + p] = 0.0;
    for r in 0..d {
        if r == p || r == q {
            continue;
        }
        let arp = m[r * d + p];
        let arq = m[r * d + q];
        let new_rp = arp - s * (arq + tau * arp);
        let new_rq = arq + s * (arp - tau * arq);
        m[r * d + p] = new_rp;
        m[p * d + r] = new_rp;
        m[r * d + q] = new_rq;
        m[q * d + r] = new_rq;
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// An extremal eigenpair together with the gap that isolates it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalEigen {
    pub value: f64,
    pub vector: Vec<f64>,
    pub gap: f64,
    pub warning: Option<Warning>,
}

fn extremal(eig: EigenDecomposition, smallest: bool) -> ExtremalEigen {
    let d = eig.dim();
    let (idx, gap) = if smallest {
        (d - 1, eig.bottom_gap())
    } else {
        (0, eig.top_gap())
    };
    let warning = (d > 1 && gap < DEGENERATE_GAP).then_some(Warning::DegenerateSpectrum { gap });
    let value = eig.values[idx];
    let vector = eig
        .vectors
        .into_iter()
        .nth(idx)
        .expect("index within spectrum");
    ExtremalEigen {
        value,
        vector,
        gap,
        warning,
    }
}

/// Eigenvector of the smallest eigenvalue, flagged when the two smallest
/// eigenvalues are closer than `1e-12`.
pub fn smallest_eigenvector(a: &SymMatrix) -> Result<ExtremalEigen> {
    Ok(extremal(sym_eigen(a)?, true))
}

/// Eigenvector of the largest eigenvalue, flagged when the two largest
/// eigenvalues are closer than `1e-12`.
pub fn largest_eigenvector(a: &SymMatrix) -> Result<ExtremalEigen> {
    Ok(extremal(sym_eigen(a)?, false))
}

/// Symmetric inverse square root `W` with `W A W = I`.
///
/// Fails with [`Error::SingularCovariance`] unless
/// `λ_min(A) > rel_tol · λ_max(A)`.
pub fn inv_sqrt(a: &SymMatrix, rel_tol: f64) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    let max = eig.values[0];
    let min = *eig.values.last().expect("nonempty spectrum");
    if !(min > rel_tol * max) || max <= 0.0 {
        return Err(Error::SingularCovariance { min, max, rel_tol });
    }
    let mut w = SymMatrix::zeros(a.dim());
    for (lambda, v) in eig.values.iter().zip(&eig.vectors) {
        w.add_outer(v, 1.0 / lambda.sqrt());
    }
    Ok(w)
}

/// Least-squares polynomial fit of degree at most `degree`.
///
/// Coefficients come back in ascending power order, length `degree + 1`.
/// The abscissae are centred and scaled before a column-pivoted Householder
/// QR of the Vandermonde matrix; when a pivot falls below `1e-10` relative
/// to the first one the fit is retried at the next lower degree and the
/// result zero-padded, so fewer than `degree + 1` distinct abscissae never
/// produce an extrapolating fit.
pub fn polyfit_ls(abscissae: &[f64], ordinates: &[f64], degree: usize) -> Result<Vec<f64>> {
    if abscissae.len() != ordinates.len() {
        return Err(Error::InvalidInput(format!(
            "{} abscissae but {} ordinates",
            abscissae.len(),
            ordinates.len()
        )));
    }
    if abscissae.is_empty() {
        return Err(Error::EmptyBin);
    }
    if abscissae.iter().chain(ordinates).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "non-finite value in polynomial fit".into(),
        ));
    }

    let n = abscissae.len();
    let center = abscissae.iter().sum::<f64>() / n as f64;
    let mut half = abscissae
        .iter()
        .fold(0.0_f64, |m, t| m.max((t - center).abs()));
    if half == 0.0 {
        half = 1.0;
    }
    let u: Vec<f64> = abscissae.iter().map(|t| (t - center) / half).collect();

    for deg in (1..=degree.min(n - 1)).rev() {
        let cols = deg + 1;
        let mut a = vec![0.0; n * cols];
        for (i, &ui) in u.iter().enumerate() {
            let mut p = 1.0;
            for k in 0..cols {
                a[i * cols + k] = p;
                p *= ui;
            }
        }
        if let Some(local) = pivoted_qr_solve(&mut a, n, cols, ordinates.to_vec()) {
            let mut coeffs = shift_basis(&local, center, half);
            coeffs.resize(degree + 1, 0.0);
            return Ok(coeffs);
        }
    }
    let mut coeffs = vec![0.0; degree + 1];
    coeffs[0] = ordinates.iter().sum::<f64>() / n as f64;
    Ok(coeffs)
}

/// Solves `min ‖A c − b‖` for full-rank `A` (row-major, `rows × cols`),
/// returning `None` when a pivot is relatively smaller than `PIVOT_TOL`.
fn pivoted_qr_solve(a: &mut [f64], rows: usize, cols: usize, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut col_norms: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| a[i * cols + j].powi(2)).sum())
        .collect();
    let mut first_pivot = 0.0;
    let mut diag = vec![0.0; cols];

    for k in 0..cols {
        // Pivot on the remaining column of largest norm.
        let (best, _) = col_norms[k..]
            .iter()
            .enumerate()
            .fold(
                (k, -1.0),
                |(bi, bv), (off, &v)| if v > bv { (k + off, v) } else { (bi, bv) },
            );
        if best != k {
            for i in 0..rows {
                a.swap(i * cols + k, i * cols + best);
            }
            col_norms.swap(k, best);
            perm.swap(k, best);
        }

        let alpha_sq: f64 = (k..rows).map(|i| a[i * cols + k].powi(2)).sum();
        let alpha = alpha_sq.sqrt();
        if k == 0 {
            first_pivot = alpha;
        }
        if !(alpha > PIVOT_TOL * first_pivot) || alpha == 0.0 {
            return None;
        }
        let akk = a[k * cols + k];
        let r = if akk > 0.0 { -alpha } else { alpha };
        // Householder vector v = x - r e1, stored in place.
        a[k * cols + k] = akk - r;
        let vnorm_sq = alpha_sq - akk * akk + (akk - r) * (akk - r);
        diag[k] = r;
        if vnorm_sq > 0.0 {
            for j in (k + 1)..cols {
                let s: f64 = (k..rows).map(|i| a[i * cols + k] * a[i * cols + j]).sum();
                let f = 2.0 * s / vnorm_sq;
                for i in k..rows {
                    a[i * cols + j] -= f * a[i * cols + k];
                }
            }
            let s: f64 = (k..rows).map(|i| a[i * cols + k] * b[i]).sum();
            let f = 2.0 * s / vnorm_sq;
            for i in k..rows {
                b[i] -= f * a[i * cols + k];
            }
        }
        for j in (k + 1)..cols {
            col_norms[j] = ((k + 1)..rows).map(|i| a[i * cols + j].powi(2)).sum();
        }
    }

    // Back substitution on R (diagonal kept separately).
    let mut z = vec![0.0; cols];
    for k in (0..cols).rev() {
        let s: f64 = ((k + 1)..cols).map(|j| a[k * cols + j] * z[j]).sum();
        z[k] = (b[k] - s) / diag[k];
    }
    let mut c = vec![0.0; cols];
    for (k, &p) in perm.iter().enumerate() {
        c[p] = z[k];
    }
    Some(c)
}

/// Rewrites `Σ b_k ((t − c)/h)^k` in powers of `t`.
fn shift_basis(local: &[f64], center: f64, half: f64) -> Vec<f64> {
    let m = local.len();
    let mut out = vec![0.0; m];
    let mut binom = vec![1.0_f64; m];
    for (k, &bk) in local.iter().enumerate() {
        if k > 0 {
            for i in (1..k).rev() {
                binom[i] += binom[i - 1];
            }
            binom[k] = 1.0;
        }
        let scale = bk / half.powi(k as i32);
        for (i, slot) in out.iter_mut().enumerate().take(k + 1) {
            *slot += scale * binom[i] * (-center).powi((k - i) as i32);
        }
    }
    out
}

/// Evaluates ascending-order coefficients at `t` by Horner's rule.
#[inline]
pub fn poly_eval(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &SymMatrix, b: &SymMatrix) -> f64 {
        a.sub(b).spectral_norm().unwrap()
    }

    #[test]
    fn identity_spectrum() {
        let eig = sym_eigen(&SymMatrix::identity(3)).unwrap();
        assert_eq!(eig.values, vec![1.0, 1.0, 1.0]);
        for (i, v) in eig.vectors.iter().enumerate() {
            for (j, w) in eig.vectors.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(v, w) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn analytic_two_by_two() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = sym_eigen(&a).unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((eig.vectors[0][0] - r).abs() < 1e-14 && (eig.vectors[0][1] - r).abs() < 1e-14);
        assert!((eig.vectors[1][0] - r).abs() < 1e-14 && (eig.vectors[1][1] + r).abs() < 1e-14);
        let small = smallest_eigenvector(&a).unwrap();
        assert_eq!(small.vector, eig.vectors[1]);
        assert!(small.warning.is_none());
    }

    #[test]
    fn smallest_of_diagonal() {
        let s = smallest_eigenvector(&SymMatrix::from_diag(&[5.0, 3.0, 1.0])).unwrap();
        assert_eq!(s.vector, vec![0.0, 0.0, 1.0]);
        assert_eq!(s.value, 1.0);
    }

    #[test]
    fn repeated_eigenvalue_warns_and_is_deterministic() {
        let a = SymMatrix::from_diag(&[1.0, 1.0]);
        let first = smallest_eigenvector(&a).unwrap();
        assert!(matches!(
            first.warning,
            Some(Warning::DegenerateSpectrum { .. })
        ));
        let second = smallest_eigenvector(&a).unwrap();
        assert_eq!(first.vector, second.vector);
        // Lexicographic tie-break puts (0, 1) ahead of (1, 0).
        assert_eq!(first.vector, vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_non_finite() {
        let err = SymMatrix::from_rows(&[vec![f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        let raw = SymMatrix {
            dim: 1,
            data: vec![f64::INFINITY],
        };
        assert!(matches!(sym_eigen(&raw), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_asymmetric() {
        let err = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.1, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn canonical_sign_and_reconstruction_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=12 {
            let a = SymMatrix::from_upper_fn(d, |_, _| rng.random_range(-3.0..3.0));
            let eig = sym_eigen(&a).unwrap();
            assert!(max_abs_diff(&eig.reconstruct(), &a) <= 1e-9 * a.frobenius_norm().max(1.0));
            for w in eig.values.windows(2) {
                assert!(w[0] >= w[1]);
            }
            for (lambda, v) in eig.values.iter().zip(&eig.vectors) {
                let lead = v.iter().find(|x| x.abs() > 1e-12).unwrap();
                assert!(*lead > 0.0);
                let av = a.mul_vec(v);
                for (x, y) in av.iter().zip(v) {
                    assert!((x - lambda * y).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn inv_sqrt_diagonal() {
        let w = inv_sqrt(&SymMatrix::from_diag(&[4.0, 9.0]), 1e-12).unwrap();
        assert!((w.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((w.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.get(0, 1), 0.0);
        let id = inv_sqrt(&SymMatrix::identity(4), 1e-12).unwrap();
        assert_eq!(id, SymMatrix::identity(4));
    }

    #[test]
    fn inv_sqrt_rejects_singular() {
        let a = SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            inv_sqrt(&a, 1e-10),
            Err(Error::SingularCovariance { .. })
        ));
        let neg = SymMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            inv_sqrt(&neg, 1e-10),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn inv_sqrt_whitens_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let b: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            // A = B Bᵀ + 0.1 I
            let a = SymMatrix::from_upper_fn(3, |i, j| {
                (0..3).map(|k| b[i * 3 + k] * b[j * 3 + k]).sum::<f64>()
                    + if i == j { 0.1 } else { 0.0 }
            });
            let w = inv_sqrt(&a, 1e-12).unwrap();
            let should_be_id = w.sandwich(&a);
            assert!(max_abs_diff(&should_be_id, &SymMatrix::identity(3)) <= 1e-9);
            // Oracle: eigenvalues of W are λ^{-1/2}.
            let ea = sym_eigen(&a).unwrap();
            let ew = sym_eigen(&w).unwrap();
            for (lw, la) in ew.values.iter().zip(ea.values.iter().rev()) {
                assert!((lw - 1.0 / la.sqrt()).abs() <= 1e-9 * lw.abs().max(1.0));
            }
        }
    }

    #[test]
    fn polyfit_exact_line_and_mean() {
        let t = [0.0, 1.0, 2.0];
        let y = [1.0, 3.0, 5.0];
        let c1 = polyfit_ls(&t, &y, 1).unwrap();
        assert!((c1[0] - 1.0).abs() < 1e-14 && (c1[1] - 2.0).abs() < 1e-14);
        let c0 = polyfit_ls(&t, &y, 0).unwrap();
        assert_eq!(c0.len(), 1);
        assert!((c0[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn polyfit_degree_fallback_pads_with_zeros() {
        // Two distinct abscissae cannot support a quadratic.
        let c = polyfit_ls(&[1.0, 1.0, 2.0, 2.0], &[0.0, 2.0, 3.0, 5.0], 2).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c[2], 0.0);
        assert!((c[0] - -2.0).abs() < 1e-12 && (c[1] - 3.0).abs() < 1e-12);
        // A single abscissa falls back to the mean.
        let c = polyfit_ls(&[3.0, 3.0], &[1.0, 2.0], 1).unwrap();
        assert_eq!(c, vec![1.5, 0.0]);
    }

    #[test]
    fn polyfit_errors() {
        assert!(matches!(polyfit_ls(&[], &[], 1), Err(Error::EmptyBin)));
        assert!(matches!(
            polyfit_ls(&[1.0], &[], 1),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            polyfit_ls(&[f64::NAN], &[1.0], 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn polyfit_narrow_bin_far_from_origin() {
        let t: Vec<f64> = (0..10).map(|i| 3.0 + 1e-3 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| 1.0 - 2.0 * t).collect();
        let c = polyfit_ls(&t, &y, 1).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-9 && (c[1] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn shift_basis_matches_direct_expansion() {
        // 1 + 2u + 3u² with u = (t - 1)/2 = 3/4 t² - t/2 + 3/4 ... checked pointwise.
        let local = [1.0, 2.0, 3.0];
        let c = shift_basis(&local, 1.0, 2.0);
        for &t in &[-2.0, 0.0, 0.5, 3.0] {
            let u = (t - 1.0) / 2.0;
            assert!((poly_eval(&c, t) - poly_eval(&local, u)).abs() < 1e-12);
        }
    }
}
