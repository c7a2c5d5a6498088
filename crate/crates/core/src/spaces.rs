//! Truncated Hilbert-space bookkeeping: validated Hermitian observables,
//! their eigendecomposition, model-space index sets with projectors and the
//! reordering that puts the model-space basis first, and eigenvector
//! selections.
//!
//! Index sets (K for model spaces, J for eigenvector selections) are 1-based
//! at construction, matching the file formats and CLI. They are stored
//! 0-based; `labels()` gives the 1-based view back.

use std::cmp::Ordering;

use itertools::Itertools;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::transform::DecouplingMap;

/// Relative Hermiticity tolerance, scaled by the largest entry magnitude.
pub const HERMITIAN_REL_TOL: f64 = 1e-12;
/// `sigma_min / sigma_max` below this ratio is treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;
/// Default cap on the condition number of `[P_K Psi_J]`.
pub const DEFAULT_COND_CAP: f64 = 1e12;
/// Relative width used to group numerically degenerate eigenvalues.
const DEGENERACY_REL_TOL: f64 = 1e-10;

/// An N×N complex Hermitian matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableMatrix {
    m: CMatrix,
}

impl ObservableMatrix {
    /// Validates Hermiticity and finiteness, then symmetrizes `(M + M†)/2`.
    pub fn new(m: CMatrix) -> Result<Self> {
        validate_hermitian(m)
    }

    pub fn from_real_rows(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Self::new(linalg::real_matrix(n, n, data))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn frobenius_norm(&self) -> f64 {
        linalg::frobenius(&self.m)
    }

    /// Absolute eigen-residual tolerance for this observable.
    pub fn eig_tol(&self) -> f64 {
        1e-10 * (1.0 + self.frobenius_norm())
    }
}

/// Checks that `m` is square, finite and Hermitian to
/// `HERMITIAN_REL_TOL * max|entry|`, and returns the symmetrized matrix.
pub fn validate_hermitian(m: CMatrix) -> Result<ObservableMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let tol = HERMITIAN_REL_TOL * linalg::max_abs(&m);
    let adjoint = m.adjoint();
    let asymmetry = linalg::max_abs(&(&m - &adjoint));
    if asymmetry > tol {
        return Err(Error::NotHermitian { asymmetry, tol });
    }
    let sym = (&m + adjoint).scale(0.5);
    Ok(ObservableMatrix { m: sym })
}

/// Full eigendecomposition: values ascending, columns of `vectors`
/// orthonormal and phase-normalized.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigensystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> CVector {
        self.vectors.column(i).into_owned()
    }

    /// `V diag(E) V†`.
    pub fn reconstruct(&self) -> CMatrix {
        let lambda = CMatrix::from_diagonal(&CVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&e| linalg::c(e, 0.0)),
        ));
        &self.vectors * lambda * self.vectors.adjoint()
    }
}

pub fn eigendecompose(o: &ObservableMatrix) -> Result<Eigensystem> {
    let n = o.dim();
    let (eigenvalues, eigenvectors) = linalg::hermitian_eigen(o.matrix())?;

    let mut pairs: Vec<(f64, CVector)> = (0..n)
        .map(|i| {
            let mut v = eigenvectors.column(i).into_owned();
            linalg::normalize_phase(&mut v);
            (eigenvalues[i], v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Degenerate clusters: descending lexicographic order of the
    // phase-normalized eigenvectors, so e_1 precedes e_2 and so on.
    let width = DEGENERACY_REL_TOL * (1.0 + o.frobenius_norm());
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && pairs[end].0 - pairs[end - 1].0 <= width {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by(|a, b| match linalg::lex_cmp(&b.1, &a.1) {
                Ordering::Equal => a.0.total_cmp(&b.0),
                o => o,
            });
        }
        start = end;
    }

    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (i, (_, v)) in pairs.iter().enumerate() {
        vectors.set_column(i, v);
    }

    let tol = o.eig_tol();
    for (i, &e) in values.iter().enumerate() {
        let v = vectors.column(i);
        let r = (o.matrix() * v - v * linalg::c(e, 0.0)).norm();
        if !(r <= tol) {
            return Err(Error::SolverFailure(format!(
                "eigenpair {} residual {r:e} exceeds {tol:e}",
                i + 1
            )));
        }
    }
    Ok(Eigensystem { values, vectors })
}

/// A model space: d basis indices out of N, with the permutation that places
/// them first (followed by the complement in increasing order).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModelSpace {
    total_dim: usize,
    indices: Vec<usize>,
    complement: Vec<usize>,
}

impl ModelSpace {
    /// `labels` are 1-based and may come in any order; they are stored sorted.
    pub fn new(total_dim: usize, labels: &[usize]) -> Result<Self> {
        let zero: Vec<usize> = labels
            .iter()
            .map(|&k| {
                if k == 0 || k > total_dim {
                    Err(Error::IndexOutOfRange {
                        index: k,
                        len: total_dim,
                    })
                } else {
                    Ok(k - 1)
                }
            })
            .collect::<Result<_>>()?;
        Self::from_zero_based(total_dim, zero)
    }

    pub fn from_zero_based(total_dim: usize, mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        if let Some(&bad) = indices.iter().find(|&&k| k >= total_dim) {
            return Err(Error::IndexOutOfRange {
                index: bad + 1,
                len: total_dim,
            });
        }
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateIndex(w[0] + 1));
        }
        let complement = (0..total_dim).filter(|k| indices.binary_search(k).is_err()).collect();
        Ok(ModelSpace {
            total_dim,
            indices,
            complement,
        })
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// Model-space dimension d.
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn complement_dim(&self) -> usize {
        self.complement.len()
    }

    /// 0-based model-space indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// 0-based complement indices.
    pub fn complement(&self) -> &[usize] {
        &self.complement
    }

    /// 1-based model-space indices.
    pub fn labels(&self) -> Vec<usize> {
        self.indices.iter().map(|k| k + 1).collect()
    }

    /// `permutation()[new_position] = original_index` (0-based).
    pub fn permutation(&self) -> Vec<usize> {
        self.indices.iter().chain(self.complement.iter()).copied().collect()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Diagonal 0/1 projectors `(P, Q)` in the original ordering.
    pub fn projectors(&self) -> (CMatrix, CMatrix) {
        let n = self.total_dim;
        let mut p = CMatrix::zeros(n, n);
        let mut q = CMatrix::identity(n, n);
        for &k in &self.indices {
            p[(k, k)] = linalg::ONE;
            q[(k, k)] = linalg::ZERO;
        }
        (p, q)
    }

    pub fn p_part(&self, v: &CVector) -> CVector {
        v.select_rows(self.indices.iter())
    }

    pub fn q_part(&self, v: &CVector) -> CVector {
        v.select_rows(self.complement.iter())
    }

    /// Rows restricted to the model space: `[P Psi]` as a d×m matrix.
    pub fn p_rows(&self, m: &CMatrix) -> CMatrix {
        m.select_rows(self.indices.iter())
    }

    pub fn q_rows(&self, m: &CMatrix) -> CMatrix {
        m.select_rows(self.complement.iter())
    }

    /// The partition `(a, b, b⁺, f)` of a square matrix.
    pub fn blocks(&self, m: &CMatrix) -> (CMatrix, CMatrix, CMatrix, CMatrix) {
        let p = &self.indices;
        let q = &self.complement;
        let rows_p = m.select_rows(p.iter());
        let rows_q = m.select_rows(q.iter());
        (
            rows_p.select_columns(p.iter()),
            rows_p.select_columns(q.iter()),
            rows_q.select_columns(p.iter()),
            rows_q.select_columns(q.iter()),
        )
    }

    /// Inverse of `blocks`: places the four blocks back in original order.
    pub fn assemble(&self, pp: &CMatrix, pq: &CMatrix, qp: &CMatrix, qq: &CMatrix) -> CMatrix {
        let n = self.total_dim;
        let mut out = CMatrix::zeros(n, n);
        for (bi, &i) in self.indices.iter().enumerate() {
            for (bj, &j) in self.indices.iter().enumerate() {
                out[(i, j)] = pp[(bi, bj)];
            }
            for (bj, &j) in self.complement.iter().enumerate() {
                out[(i, j)] = pq[(bi, bj)];
            }
        }
        for (bi, &i) in self.complement.iter().enumerate() {
            for (bj, &j) in self.indices.iter().enumerate() {
                out[(i, j)] = qp[(bi, bj)];
            }
            for (bj, &j) in self.complement.iter().enumerate() {
                out[(i, j)] = qq[(bi, bj)];
            }
        }
        out
    }

    /// Builds an N-vector from its P-components and Q-components.
    pub fn embed(&self, p_part: &CVector, q_part: &CVector) -> Result<CVector> {
        if p_part.len() != self.dim() || q_part.len() != self.complement_dim() {
            return Err(Error::DimensionMismatch(format!(
                "embed expects ({}, {}) components, got ({}, {})",
                self.dim(),
                self.complement_dim(),
                p_part.len(),
                q_part.len()
            )));
        }
        let mut v = CVector::zeros(self.total_dim);
        for (bi, &i) in self.indices.iter().enumerate() {
            v[i] = p_part[bi];
        }
        for (bi, &i) in self.complement.iter().enumerate() {
            v[i] = q_part[bi];
        }
        Ok(v)
    }
}

pub fn projectors(ms: &ModelSpace) -> (CMatrix, CMatrix) {
    ms.projectors()
}

/// A chosen set of d eigenpairs `(E_i, psi_i)`, i in J.
#[derive(Clone, Debug)]
pub struct EigenSelection {
    indices: Vec<usize>,
    pub values: Vec<f64>,
    /// N×d, one eigenvector per column.
    pub vectors: CMatrix,
}

impl EigenSelection {
    /// Wraps explicitly given eigenpairs. `indices` are 0-based positions in
    /// the source spectrum.
    pub fn from_parts(indices: Vec<usize>, values: Vec<f64>, vectors: CMatrix) -> Result<Self> {
        if values.len() != vectors.ncols() || indices.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} indices, {} values, {} vectors",
                indices.len(),
                values.len(),
                vectors.ncols()
            )));
        }
        if values.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        let d = values.len();
        let rank = linalg::numerical_rank(&vectors, SINGULAR_RATIO);
        if rank < d {
            return Err(Error::DimensionMismatch(format!(
                "selected vectors have rank {rank} < {d}"
            )));
        }
        Ok(EigenSelection {
            indices,
            values,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn total_dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn labels(&self) -> Vec<usize> {
        self.indices.iter().map(|j| j + 1).collect()
    }

    pub fn vector(&self, i: usize) -> CVector {
        self.vectors.column(i).into_owned()
    }

    /// `Lambda_J` as a d×d diagonal matrix.
    pub fn lambda(&self) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim(),
            self.values.iter().map(|&e| linalg::c(e, 0.0)),
        ))
    }

    /// `[P_K Psi_J]`, d×d.
    pub fn projected(&self, ms: &ModelSpace) -> CMatrix {
        ms.p_rows(&self.vectors)
    }

    /// Largest `|O psi_i - E_i psi_i|`.
    pub fn max_residual(&self, o: &ObservableMatrix) -> f64 {
        (0..self.dim())
            .map(|i| {
                let v = self.vectors.column(i);
                (o.matrix() * v - v * linalg::c(self.values[i], 0.0)).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Checks a 1-based index list: in range and free of duplicates. Order is
/// preserved.
pub fn parse_index_set(labels: &[usize], len: usize) -> Result<Vec<usize>> {
    if labels.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    let mut seen = vec![false; len];
    labels
        .iter()
        .map(|&j| {
            if j == 0 || j > len {
                return Err(Error::IndexOutOfRange { index: j, len });
            }
            if std::mem::replace(&mut seen[j - 1], true) {
                return Err(Error::DuplicateIndex(j));
            }
            Ok(j - 1)
        })
        .collect()
}

/// Picks eigenpairs by 1-based position in the ascending spectrum.
pub fn select_eigenvectors(pairs: &Eigensystem, labels: &[usize]) -> Result<EigenSelection> {
    let idx = parse_index_set(labels, pairs.len())?;
    let values = idx.iter().map(|&j| pairs.values[j]).collect();
    let vectors = pairs.vectors.select_columns(idx.iter());
    EigenSelection::from_parts(idx, values, vectors)
}

/// Condition number of `[P_K Psi]` for an N×d column set.
pub fn projection_condition(vectors: &CMatrix, ms: &ModelSpace) -> f64 {
    linalg::condition_number(&ms.p_rows(vectors))
}

/// Smallest singular value of `[P_K Psi]`. For orthonormal columns
/// `|s|_2 = sqrt(1/σ_min² - 1)`, so this, unlike the scale-free condition
/// number, controls the size of the decoupling map.
pub fn projection_sigma_min(vectors: &CMatrix, ms: &ModelSpace) -> f64 {
    linalg::singular_values(&ms.p_rows(vectors)).last().copied().unwrap_or(0.0)
}

/// Whether a condition number passes both the singularity ratio and the cap.
pub fn is_invertible(condition: f64, cond_cap: f64) -> bool {
    condition.is_finite() && condition <= cond_cap && condition <= 1.0 / SINGULAR_RATIO
}

/// All legitimate model spaces for a selection, sorted by ascending
/// condition number of `[P_K Psi_J]` (ties by K).
pub fn enumerate_model_spaces(
    sel: &EigenSelection,
    cond_cap: f64,
) -> Result<Vec<(ModelSpace, f64)>> {
    let n = sel.total_dim();
    let d = sel.dim();
    let candidates: Vec<Vec<usize>> = (0..n).combinations(d).collect();
    let mut found: Vec<(ModelSpace, f64)> = candidates
        .into_par_iter()
        .filter_map(|k| {
            let ms = ModelSpace::from_zero_based(n, k).ok()?;
            let cond = projection_condition(&sel.vectors, &ms);
            is_invertible(cond, cond_cap).then_some((ms, cond))
        })
        .collect();
    if found.is_empty() {
        return Err(Error::CapTooTight { cap: cond_cap });
    }
    found.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.indices.cmp(&b.0.indices)));
    Ok(found)
}

/// A well-conditioned model space without enumeration: greedy row pivoting
/// on `[Psi_J]` picks, at each step, the basis index whose row has the
/// largest component orthogonal to the rows already chosen.
pub fn suggest_model_space(sel: &EigenSelection, cond_cap: f64) -> Result<(ModelSpace, f64)> {
    let n = sel.total_dim();
    let d = sel.dim();
    let mut rows: Vec<CVector> = (0..n).map(|i| sel.vectors.row(i).transpose()).collect();
    let mut chosen = Vec::with_capacity(d);
    for _ in 0..d {
        let (best, _) = (0..n)
            .filter(|i| !chosen.contains(i))
            .map(|i| (i, rows[i].norm()))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let pivot = rows[best].clone();
        let pn = pivot.norm();
        chosen.push(best);
        if pn == 0.0 {
            continue;
        }
        let u = pivot / linalg::c(pn, 0.0);
        for r in rows.iter_mut() {
            let proj = u.dotc(r);
            *r -= &u * proj;
        }
    }
    let ms = ModelSpace::from_zero_based(n, chosen)?;
    let condition = projection_condition(&sel.vectors, &ms);
    if !is_invertible(condition, cond_cap) {
        return Err(Error::SingularProjection {
            model_space: ms.labels(),
            condition,
        });
    }
    Ok((ms, condition))
}

/// Inverse image of a model-space vector: P-components `alpha`, Q-components
/// `s alpha`, in original index order.
pub fn retrieve_full_vector(alpha: &CVector, dm: &DecouplingMap) -> Result<CVector> {
    let ms = dm.model_space();
    if alpha.len() != ms.dim() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has length {}, model space has dimension {}",
            alpha.len(),
            ms.dim()
        )));
    }
    ms.embed(alpha, &(dm.s() * alpha))
}
