//! Small dense helpers shared by the modules: aliases, norms, condition
//! numbers, general eigenvalues and multiset spectrum matching.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Builds a complex matrix from real row-major data.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    assert_eq!(data.len(), rows * cols, "real_matrix: wrong data length");
    CMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c(x, 0.0)))
}

pub fn real_vector(data: &[f64]) -> CVector {
    CVector::from_iterator(data.len(), data.iter().map(|&x| c(x, 0.0)))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.norm()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Ratio of largest to smallest singular value; infinite when the smallest
/// vanishes.
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 && hi.is_finite() => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Numerical rank: count of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &CMatrix, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let Some(&hi) = sv.first() else { return 0 };
    if hi == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&x| x > rel_tol * hi).count()
}

/// Eigenpairs of a Hermitian matrix, unsorted.
///
/// Taken from the complex Schur form: for normal input the triangular factor
/// is diagonal up to rounding and the Schur vectors are orthonormal
/// eigenvectors. nalgebra's symmetric QR path is not used because it returns
/// inaccurate pairs on a fraction of random inputs.
pub fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let (q, t) = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::SolverFailure("Schur iteration did not converge".into()))?
        .unpack();
    Ok((t.diagonal().iter().map(|z| z.re).collect(), q))
}

/// Eigenvalues of a general (non-Hermitian) complex square matrix via the
/// complex Schur form.
pub fn general_eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::SolverFailure("Schur iteration did not converge".into()))?;
    let vals = schur
        .eigenvalues()
        .ok_or_else(|| Error::SolverFailure("Schur form has unresolved blocks".into()))?;
    let mut out: Vec<Complex64> = vals.iter().copied().collect();
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

/// Greedy nearest-neighbour pairing of two multisets of eigenvalues.
///
/// Each element of `found` is paired with the closest still-unused element of
/// `reference`. Returns `None` when the multisets differ in size.
pub fn match_spectra(
    found: &[Complex64],
    reference: &[Complex64],
) -> Option<Vec<(Complex64, Complex64)>> {
    if found.len() != reference.len() {
        return None;
    }
    greedy_pairs(found, reference)
}

fn greedy_pairs(found: &[Complex64], reference: &[Complex64]) -> Option<Vec<(Complex64, Complex64)>> {
    let mut used = vec![false; reference.len()];
    let mut pairs = Vec::with_capacity(found.len());
    for &x in found {
        let best = reference
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .min_by(|(_, a), (_, b)| (**a - x).norm().total_cmp(&(**b - x).norm()))
            .map(|(i, _)| i)?;
        used[best] = true;
        pairs.push((x, reference[best]));
    }
    Some(pairs)
}

fn worst_relative(pairs: Option<Vec<(Complex64, Complex64)>>) -> f64 {
    match pairs {
        Some(pairs) => pairs
            .iter()
            .map(|(x, r)| (x - r).norm() / (1.0 + r.norm()))
            .fold(0.0, f64::max),
        None => f64::INFINITY,
    }
}

/// Largest `|found - reference| / (1 + |reference|)` over a greedy matching,
/// or infinity when the sizes differ.
pub fn spectrum_mismatch(found: &[Complex64], reference: &[Complex64]) -> f64 {
    worst_relative(match_spectra(found, reference))
}

/// Like `spectrum_mismatch`, but `found` only needs to be a sub-multiset of
/// `reference`; infinity when it is larger.
pub fn subset_mismatch(found: &[Complex64], reference: &[Complex64]) -> f64 {
    worst_relative(greedy_pairs(found, reference))
}

/// `y x^{-1}` via a column-pivoted QR of `xᵀ`; `None` when `x` is singular.
pub fn right_divide(y: &CMatrix, x: &CMatrix) -> Option<CMatrix> {
    if x.nrows() != x.ncols() || y.ncols() != x.nrows() {
        return None;
    }
    if y.nrows() == 0 {
        return Some(CMatrix::zeros(0, x.ncols()));
    }
    x.transpose()
        .col_piv_qr()
        .solve(&y.transpose())
        .map(|m| m.transpose())
}

pub fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&x| c(x, 0.0)).collect()
}

/// Rotates the phase of `v` so its first non-negligible component is real and
/// positive.
pub fn normalize_phase(v: &mut CVector) {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return;
    }
    if let Some(first) = v.iter().copied().find(|z| z.norm() > 1e-10 * scale) {
        let phase = first.conj() / first.norm();
        v.iter_mut().for_each(|z| *z *= phase);
    }
}

/// Lexicographic comparison of complex vectors (real part, then imaginary).
pub fn lex_cmp(a: &CVector, b: &CVector) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}
