//! The similarity transform `O -> e^{-S} O e^{S}` with `S = Q S P`.
//!
//! All of the structure lives in the (N-d)×d block `s`: `S² = 0`, so
//! `e^{±S} = 1 ± S` and the transformed blocks have closed forms in terms of
//! the partition `(a, b, b⁺, f)` of `O`.

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::spaces::{self, EigenSelection, ModelSpace, ObservableMatrix};

/// How a decoupling map was obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    /// From eigenvectors; 1-based eigenpair labels J.
    Direct { selection: Vec<usize> },
    /// From the fixed-point solver.
    Iterative { iterations: usize, residual: f64 },
    /// Supplied externally (file or caller).
    Supplied,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecouplingMap {
    model_space: ModelSpace,
    s: CMatrix,
    provenance: Provenance,
}

impl DecouplingMap {
    pub fn new(model_space: ModelSpace, s: CMatrix) -> Result<Self> {
        Self::with_provenance(model_space, s, Provenance::Supplied)
    }

    pub fn with_provenance(
        model_space: ModelSpace,
        s: CMatrix,
        provenance: Provenance,
    ) -> Result<Self> {
        let (rows, cols) = (model_space.complement_dim(), model_space.dim());
        if s.shape() != (rows, cols) {
            return Err(Error::DimensionMismatch(format!(
                "s must be {rows}x{cols}, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        if s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(DecouplingMap {
            model_space,
            s,
            provenance,
        })
    }

    /// The trivial map `s = 0`.
    pub fn zero(model_space: ModelSpace) -> Self {
        let s = CMatrix::zeros(model_space.complement_dim(), model_space.dim());
        DecouplingMap {
            model_space,
            s,
            provenance: Provenance::Supplied,
        }
    }

    pub fn model_space(&self) -> &ModelSpace {
        &self.model_space
    }

    pub fn s(&self) -> &CMatrix {
        &self.s
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn total_dim(&self) -> usize {
        self.model_space.total_dim()
    }

    /// The full N×N operator `S` in original index order.
    pub fn embedded(&self) -> CMatrix {
        let ms = &self.model_space;
        let n = ms.total_dim();
        let mut big = CMatrix::zeros(n, n);
        for (bi, &i) in ms.complement().iter().enumerate() {
            for (bj, &j) in ms.indices().iter().enumerate() {
                big[(i, j)] = self.s[(bi, bj)];
            }
        }
        big
    }

    /// `e^{S} P` restricted to its nonzero columns: the N×d matrix whose
    /// permuted form is `[I; s]`.
    pub fn lift(&self) -> CMatrix {
        let ms = &self.model_space;
        let mut out = CMatrix::zeros(ms.total_dim(), ms.dim());
        for (bj, &j) in ms.indices().iter().enumerate() {
            out[(j, bj)] = linalg::ONE;
        }
        for (bi, &i) in ms.complement().iter().enumerate() {
            for bj in 0..ms.dim() {
                out[(i, bj)] = self.s[(bi, bj)];
            }
        }
        out
    }

    fn check_dim(&self, o: &ObservableMatrix) -> Result<()> {
        if o.dim() != self.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "observable is {}x{}, decoupling map acts on dimension {}",
                o.dim(),
                o.dim(),
                self.total_dim()
            )));
        }
        Ok(())
    }
}

/// Absolute residual below which `O` counts as decoupled by a map.
pub fn decoupling_tolerance(o: &ObservableMatrix) -> f64 {
    1e-9 * (1.0 + o.frobenius_norm())
}

/// `s = [Q Psi_J][P Psi_J]^{-1}` for a selection of eigenvectors.
pub fn construct_s_direct(sel: &EigenSelection, ms: &ModelSpace) -> Result<DecouplingMap> {
    construct_s_direct_with_cap(sel, ms, spaces::DEFAULT_COND_CAP)
}

pub fn construct_s_direct_with_cap(
    sel: &EigenSelection,
    ms: &ModelSpace,
    cond_cap: f64,
) -> Result<DecouplingMap> {
    let s = s_from_columns(&sel.vectors, ms, cond_cap)?;
    DecouplingMap::with_provenance(
        ms.clone(),
        s,
        Provenance::Direct {
            selection: sel.labels(),
        },
    )
}

/// Solves `s [P Psi] = [Q Psi]` for any N×d column set spanning the target
/// subspace. Uses a column-pivoted QR of `[P Psi]ᵀ` rather than an explicit
/// inverse.
pub fn s_from_columns(vectors: &CMatrix, ms: &ModelSpace, cond_cap: f64) -> Result<CMatrix> {
    if vectors.nrows() != ms.total_dim() || vectors.ncols() != ms.dim() {
        return Err(Error::DimensionMismatch(format!(
            "need {}x{} columns, got {}x{}",
            ms.total_dim(),
            ms.dim(),
            vectors.nrows(),
            vectors.ncols()
        )));
    }
    let p = ms.p_rows(vectors);
    let q = ms.q_rows(vectors);
    let condition = linalg::condition_number(&p);
    let singular = || Error::SingularProjection {
        model_space: ms.labels(),
        condition,
    };
    if !spaces::is_invertible(condition, cond_cap) {
        return Err(singular());
    }
    linalg::right_divide(&q, &p).ok_or_else(singular)
}

/// `e^{sign·S} = 1 + sign·S` in original index order.
pub fn exp_s(dm: &DecouplingMap, sign: i8) -> CMatrix {
    let n = dm.total_dim();
    let s = dm.embedded();
    if sign >= 0 {
        CMatrix::identity(n, n) + s
    } else {
        CMatrix::identity(n, n) - s
    }
}

/// `Õ = e^{-S} O e^{S}` by dense multiplication.
pub fn similarity_transform(o: &ObservableMatrix, dm: &DecouplingMap) -> Result<CMatrix> {
    dm.check_dim(o)?;
    Ok(exp_s(dm, -1) * o.matrix() * exp_s(dm, 1))
}

/// The four blocks of `Õ` in the model-space partition.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedBlocks {
    /// `a + b s`
    pub pp: CMatrix,
    /// `b`
    pub pq: CMatrix,
    /// `-s(a + b s) + b⁺ + f s`
    pub qp: CMatrix,
    /// `f - s b`
    pub qq: CMatrix,
}

impl TransformedBlocks {
    /// Reassembles `Õ` in original index order.
    pub fn assemble(&self, ms: &ModelSpace) -> CMatrix {
        ms.assemble(&self.pp, &self.pq, &self.qp, &self.qq)
    }
}

pub fn transformed_blocks(o: &ObservableMatrix, dm: &DecouplingMap) -> Result<TransformedBlocks> {
    dm.check_dim(o)?;
    let (a, b, b_dag, f) = dm.model_space().blocks(o.matrix());
    let s = dm.s();
    let pp = &a + &b * s;
    let qp = -(s * &pp) + b_dag + &f * s;
    let qq = f - s * &b;
    Ok(TransformedBlocks { pp, pq: b, qp, qq })
}

/// Frobenius norm of `Q Õ P = -s(a + b s) + b⁺ + f s`.
pub fn decoupling_residual(o: &ObservableMatrix, dm: &DecouplingMap) -> Result<f64> {
    Ok(linalg::frobenius(&transformed_blocks(o, dm)?.qp))
}

pub fn is_decoupled(o: &ObservableMatrix, dm: &DecouplingMap) -> Result<bool> {
    Ok(decoupling_residual(o, dm)? <= decoupling_tolerance(o))
}
