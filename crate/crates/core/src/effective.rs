//! Effective representatives of an observable on a model space.
//!
//! The first type, `O_eff = P Õ P = a + b s`, is a generally non-Hermitian
//! d×d matrix whose spectrum is the selected part of the spectrum of `O`. The
//! second type, `Ō_eff = P e^{S†} O e^{S} P = a + b s + s† b⁺ + s† f s`, is
//! Hermitian and reproduces matrix elements of `O` between vectors of the
//! invariant subspace selected by `s`, via their model-space projections.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::spaces::{self, EigenSelection, ModelSpace, ObservableMatrix};
use crate::transform::{self, DecouplingMap};

/// Relative tolerance for membership of a vector in the selected subspace.
pub const MEMBERSHIP_REL_TOL: f64 = 1e-8;
/// Relative tolerance for multiset eigenvalue matching.
pub const SPECTRUM_MATCH_TOL: f64 = 1e-8;

/// First-type representative `P Õ P`.
#[derive(Clone, Debug)]
pub struct EffectiveOperator {
    pub matrix: CMatrix,
    pub map: DecouplingMap,
    /// Decoupling residual of the originating `(O, s)`.
    pub residual: f64,
}

impl EffectiveOperator {
    pub fn model_space(&self) -> &ModelSpace {
        self.map.model_space()
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        linalg::general_eigenvalues(&self.matrix)
    }
}

/// Second-type representative `P e^{S†} O e^{S} P`.
#[derive(Clone, Debug)]
pub struct SecondTypeOperator {
    pub matrix: CMatrix,
    pub map: DecouplingMap,
}

impl SecondTypeOperator {
    pub fn model_space(&self) -> &ModelSpace {
        self.map.model_space()
    }

    /// `|M - M†|_max`; zero up to rounding.
    pub fn hermiticity_defect(&self) -> f64 {
        linalg::max_abs(&(&self.matrix - self.matrix.adjoint()))
    }
}

fn require_decoupled(o: &ObservableMatrix, dm: &DecouplingMap) -> Result<f64> {
    let residual = transform::decoupling_residual(o, dm)?;
    let tol = transform::decoupling_tolerance(o);
    if residual > tol {
        return Err(Error::NotDecoupled {
            residual,
            tol,
            member: None,
        });
    }
    Ok(residual)
}

pub fn first_type(o: &ObservableMatrix, dm: &DecouplingMap) -> Result<EffectiveOperator> {
    let residual = require_decoupled(o, dm)?;
    let blocks = transform::transformed_blocks(o, dm)?;
    Ok(EffectiveOperator {
        matrix: blocks.pp,
        map: dm.clone(),
        residual,
    })
}

/// The factorization of the characteristic polynomial of a decoupled `Õ`
/// into its P and Q parts, checked as a multiset identity of eigenvalues.
#[derive(Clone, Debug)]
pub struct Factorization {
    pub q_block: CMatrix,
    pub effective_eigenvalues: Vec<Complex64>,
    pub q_eigenvalues: Vec<Complex64>,
    pub full_eigenvalues: Vec<f64>,
    /// Largest `|Δ| / (1 + |E|)` over the greedy matching.
    pub mismatch: f64,
}

impl Factorization {
    pub fn holds(&self) -> bool {
        self.mismatch <= SPECTRUM_MATCH_TOL
    }
}

pub fn q_block_and_factorization(o: &ObservableMatrix, dm: &DecouplingMap) -> Result<Factorization> {
    require_decoupled(o, dm)?;
    let blocks = transform::transformed_blocks(o, dm)?;
    let effective_eigenvalues = linalg::general_eigenvalues(&blocks.pp)?;
    let q_eigenvalues = linalg::general_eigenvalues(&blocks.qq)?;
    let full_eigenvalues = spaces::eigendecompose(o)?.values;
    let union: Vec<Complex64> = effective_eigenvalues
        .iter()
        .chain(q_eigenvalues.iter())
        .copied()
        .collect();
    let mismatch = linalg::spectrum_mismatch(&union, &linalg::to_complex(&full_eigenvalues));
    Ok(Factorization {
        q_block: blocks.qq,
        effective_eigenvalues,
        q_eigenvalues,
        full_eigenvalues,
        mismatch,
    })
}

/// Which part of the partition an eigenvector of `Õ` lives in.
#[derive(Clone, Debug, PartialEq)]
pub enum EigenvectorCase {
    /// `Qφ = 0`: `Pφ` is an eigenvector of `O_eff` for `E`.
    ModelSpace { p_vector: CVector },
    /// `Qφ ≠ 0`: `Qφ` is an eigenvector of `QÕQ` for `E`. When `b Qφ = 0`,
    /// `E` is shared by `O_eff` and `QÕQ`.
    Complement {
        q_vector: CVector,
        common_eigenvalue: bool,
    },
}

#[derive(Clone, Debug)]
pub struct Classification {
    pub case: EigenvectorCase,
    pub value: f64,
    /// `O_eff Pφ = E Pφ` with `Pφ ≠ 0`.
    pub p_is_effective_eigenvector: bool,
    /// `E` lies in the spectra of both `O_eff` and `QÕQ`.
    pub spectra_share_value: bool,
    /// When the spectra do not share `E`: `Qφ = 0` iff `Pφ` is an `O_eff`
    /// eigenvector for `E`. Vacuously true otherwise.
    pub exclusive_criterion_holds: bool,
}

/// Classifies an eigenvector `phi` of the transformed operator `Õ`.
///
/// The product `b Qφ` is the plain (unconjugated) matrix-vector product of
/// the `PÕQ` block with `Qφ`.
pub fn classify_eigenvector(
    o: &ObservableMatrix,
    dm: &DecouplingMap,
    phi: &CVector,
    value: f64,
) -> Result<Classification> {
    require_decoupled(o, dm)?;
    let ms = dm.model_space();
    if phi.len() != ms.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "phi has length {}, expected {}",
            phi.len(),
            ms.total_dim()
        )));
    }
    let norm = phi.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let e = linalg::c(value, 0.0);
    let transformed = transform::similarity_transform(o, dm)?;
    let eig_tol = 1e-9 * (1.0 + linalg::frobenius(&transformed)) * norm;
    let eig_residual = (&transformed * phi - phi * e).norm();
    if eig_residual > eig_tol {
        return Err(Error::NotAnEigenvector {
            residual: eig_residual,
            tol: eig_tol,
        });
    }

    let blocks = transform::transformed_blocks(o, dm)?;
    let p = ms.p_part(phi);
    let q = ms.q_part(phi);
    let zero_tol = MEMBERSHIP_REL_TOL * norm;

    let p_is_effective_eigenvector =
        p.norm() > zero_tol && (&blocks.pp * &p - &p * e).norm() <= eig_tol;

    let contains = |vals: &[Complex64]| {
        vals.iter()
            .any(|z| (z - e).norm() <= SPECTRUM_MATCH_TOL * (1.0 + value.abs()))
    };
    let spectra_share_value = contains(&linalg::general_eigenvalues(&blocks.pp)?)
        && contains(&linalg::general_eigenvalues(&blocks.qq)?);

    let q_vanishes = q.norm() <= zero_tol;
    let case = if q_vanishes {
        EigenvectorCase::ModelSpace { p_vector: p }
    } else {
        let bq = &blocks.pq * &q;
        let scale = 1.0 + linalg::frobenius(&blocks.pq);
        EigenvectorCase::Complement {
            common_eigenvalue: bq.norm() <= eig_tol * scale,
            q_vector: q,
        }
    };
    let exclusive_criterion_holds =
        spectra_share_value || (q_vanishes == p_is_effective_eigenvector);

    Ok(Classification {
        case,
        value,
        p_is_effective_eigenvector,
        spectra_share_value,
        exclusive_criterion_holds,
    })
}

/// Gram matrix `γ = [PΨ]† [PΨ]` of the projected eigenvectors.
#[derive(Clone, Debug)]
pub struct OverlapMatrix {
    pub gamma: CMatrix,
    /// `[PΨ_J]`, d×d, one projected eigenvector per column.
    pub basis: CMatrix,
}

impl OverlapMatrix {
    fn cholesky(&self) -> Result<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
        let sym = (&self.gamma + self.gamma.adjoint()).scale(0.5);
        nalgebra::Cholesky::new(sym).ok_or_else(|| Error::SingularProjection {
            model_space: Vec::new(),
            condition: f64::INFINITY,
        })
    }

    pub fn inverse(&self) -> Result<CMatrix> {
        Ok(self.cholesky()?.inverse())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let sym = (&self.gamma + self.gamma.adjoint()).scale(0.5);
        Ok(linalg::hermitian_eigen(&sym)?.0.into_iter().fold(f64::INFINITY, f64::min))
    }
}

pub fn overlap_matrix(sel: &EigenSelection, ms: &ModelSpace) -> Result<OverlapMatrix> {
    let basis = sel.projected(ms);
    overlap_from_basis(basis, ms)
}

fn overlap_from_basis(basis: CMatrix, ms: &ModelSpace) -> Result<OverlapMatrix> {
    let condition = linalg::condition_number(&basis);
    if !spaces::is_invertible(condition, spaces::DEFAULT_COND_CAP) {
        return Err(Error::SingularProjection {
            model_space: ms.labels(),
            condition,
        });
    }
    let gamma = basis.adjoint() * &basis;
    let om = OverlapMatrix { gamma, basis };
    om.cholesky().map_err(|_| Error::SingularProjection {
        model_space: ms.labels(),
        condition,
    })?;
    Ok(om)
}

/// Coefficients `b_k` with `Σ_k b_k Pψ_k = χ`, from `b = γ^{-1} (⟨Pψ_i|χ⟩)_i`.
pub fn expansion_coefficients(chi: &CVector, om: &OverlapMatrix) -> Result<CVector> {
    if chi.len() != om.basis.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "chi has length {}, model space has dimension {}",
            chi.len(),
            om.basis.nrows()
        )));
    }
    let overlaps = om.basis.adjoint() * chi;
    Ok(om.cholesky()?.solve(&overlaps))
}

/// `O_eff = Σ_{i,k} E_i (γ^{-1})_{ik} |Pψ_i⟩⟨Pψ_k|`, built only from
/// model-space quantities.
pub fn spectral_reconstruct(sel: &EigenSelection, ms: &ModelSpace) -> Result<CMatrix> {
    let om = overlap_matrix(sel, ms)?;
    let gamma_inv = om.inverse()?;
    let d = sel.dim();
    let mut out = CMatrix::zeros(d, d);
    for i in 0..d {
        let pi = om.basis.column(i);
        for k in 0..d {
            let pk = om.basis.column(k);
            let weight = gamma_inv[(i, k)] * sel.values[i];
            out += (pi * pk.adjoint()) * weight;
        }
    }
    Ok(out)
}

/// Second-type representative. Defined for any `s`; the matrix-element
/// identity holds only inside the subspace selected by `s`.
pub fn second_type(o: &ObservableMatrix, dm: &DecouplingMap) -> Result<SecondTypeOperator> {
    if o.dim() != dm.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "observable is {}x{}, decoupling map acts on dimension {}",
            o.dim(),
            o.dim(),
            dm.total_dim()
        )));
    }
    let lift = dm.lift();
    let matrix = lift.adjoint() * o.matrix() * &lift;
    Ok(SecondTypeOperator {
        matrix,
        map: dm.clone(),
    })
}

/// `|Qψ - s Pψ|` against `MEMBERSHIP_REL_TOL * |ψ|`.
pub fn check_membership(psi: &CVector, dm: &DecouplingMap) -> Result<()> {
    let ms = dm.model_space();
    if psi.len() != ms.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "vector has length {}, expected {}",
            psi.len(),
            ms.total_dim()
        )));
    }
    let residual = (ms.q_part(psi) - dm.s() * ms.p_part(psi)).norm();
    let tol = MEMBERSHIP_REL_TOL * psi.norm();
    if residual > tol {
        return Err(Error::NotInSubspace { residual, tol });
    }
    Ok(())
}

fn check_same_map(ot: &SecondTypeOperator, dm: &DecouplingMap) -> Result<()> {
    if ot.model_space() != dm.model_space() {
        return Err(Error::DimensionMismatch(
            "second-type operator was built for a different model space".into(),
        ));
    }
    Ok(())
}

/// `⟨Pψ|Ō_eff|Pφ⟩`, equal to `⟨ψ|O|φ⟩` for ψ, φ in the selected subspace.
pub fn matrix_element(
    psi: &CVector,
    phi: &CVector,
    ot: &SecondTypeOperator,
    dm: &DecouplingMap,
) -> Result<Complex64> {
    check_same_map(ot, dm)?;
    check_membership(psi, dm)?;
    check_membership(phi, dm)?;
    let ms = dm.model_space();
    let p_psi = ms.p_part(psi);
    let p_phi = ms.p_part(phi);
    Ok(p_psi.dotc(&(&ot.matrix * p_phi)))
}

/// `⟨α|O_eff|α⟩ / |α|²`; complex in general.
pub fn expectation_first_type(eo: &EffectiveOperator, alpha: &CVector) -> Result<Complex64> {
    if alpha.len() != eo.matrix.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has length {}, expected {}",
            alpha.len(),
            eo.matrix.nrows()
        )));
    }
    let n2 = alpha.norm_squared();
    if n2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(alpha.dotc(&(&eo.matrix * alpha)) / n2)
}

/// `⟨O⟩_ψ = |Pψ|² ⟨Ō_eff⟩_{Pψ}`, normalized by `|ψ|²`.
pub fn expectation_second_type(
    ot: &SecondTypeOperator,
    psi: &CVector,
    dm: &DecouplingMap,
) -> Result<f64> {
    check_same_map(ot, dm)?;
    if psi.len() != dm.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "psi has length {}, expected {}",
            psi.len(),
            dm.total_dim()
        )));
    }
    let n2 = psi.norm_squared();
    if n2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    check_membership(psi, dm)?;
    let p = dm.model_space().p_part(psi);
    Ok(p.dotc(&(&ot.matrix * &p)).re / n2)
}

/// Similarity between two first-type representatives of the same selection
/// on different model spaces.
#[derive(Clone, Debug)]
pub struct Equivalence {
    /// `T = [PΨ_J][P'Ψ_J]^{-1}` with `O_eff = T O'_eff T^{-1}`.
    pub t: CMatrix,
    /// `|O_eff - T O'_eff T^{-1}|_F`.
    pub deviation: f64,
}

impl Equivalence {
    pub fn holds(&self, eo: &EffectiveOperator) -> bool {
        self.deviation <= 1e-9 * (1.0 + linalg::frobenius(&eo.matrix))
    }
}

pub fn equivalence_transform(
    eo: &EffectiveOperator,
    eo_prime: &EffectiveOperator,
    sel: &EigenSelection,
) -> Result<Equivalence> {
    let ms = eo.model_space();
    let ms_prime = eo_prime.model_space();
    if ms.dim() != sel.dim() || ms_prime.dim() != sel.dim() || ms.total_dim() != sel.total_dim() {
        return Err(Error::DimensionMismatch(
            "effective operators and selection disagree on dimensions".into(),
        ));
    }
    let p = sel.projected(ms);
    let p_prime = sel.projected(ms_prime);
    for (x, m) in [(&p, ms), (&p_prime, ms_prime)] {
        let condition = linalg::condition_number(x);
        if !spaces::is_invertible(condition, spaces::DEFAULT_COND_CAP) {
            return Err(Error::SingularProjection {
                model_space: m.labels(),
                condition,
            });
        }
    }
    let singular = || Error::SingularProjection {
        model_space: ms.labels(),
        condition: f64::INFINITY,
    };
    let t = linalg::right_divide(&p, &p_prime).ok_or_else(singular)?;
    let t_inv = linalg::right_divide(&p_prime, &p).ok_or_else(singular)?;
    let deviation = linalg::frobenius(&(&eo.matrix - &t * &eo_prime.matrix * t_inv));
    Ok(Equivalence { t, deviation })
}
