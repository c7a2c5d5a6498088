//! Commuting sets of observables: a shared eigenbasis, one decoupling map
//! for every member, effective sets whose commutators vanish, and the
//! decomposition of the full space into blocks with their own
//! representatives.

use itertools::Itertools;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::effective::{self, EffectiveOperator, SecondTypeOperator};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::spaces::{self, EigenSelection, ModelSpace, ObservableMatrix};
use crate::transform::{self, DecouplingMap};

/// Seed for the random linear combination used to find a shared eigenbasis.
const COMBINATION_SEED: u64 = 0x5eed_c0de;
/// Relative width of a degenerate cluster when refining the shared basis.
const CLUSTER_REL_TOL: f64 = 1e-9;

/// Pairwise-commuting Hermitian observables; member 0 plays the Hamiltonian.
#[derive(Clone, Debug)]
pub struct CommutingSet {
    members: Vec<ObservableMatrix>,
    /// `((ρ, σ), |[O^ρ, O^σ]|_F)` for ρ < σ, 0-based.
    pub commutator_norms: Vec<((usize, usize), f64)>,
}

impl CommutingSet {
    pub fn members(&self) -> &[ObservableMatrix] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn hamiltonian(&self) -> &ObservableMatrix {
        &self.members[0]
    }

    pub fn comm_tol(&self) -> f64 {
        comm_tol(&self.members)
    }
}

fn comm_tol(members: &[ObservableMatrix]) -> f64 {
    1e-10 * members.iter().map(|m| m.frobenius_norm()).fold(0.0, f64::max)
}

pub fn verify_commuting(members: Vec<ObservableMatrix>) -> Result<CommutingSet> {
    let Some(first) = members.first() else {
        return Err(Error::DimensionMismatch("empty commuting set".into()));
    };
    let n = first.dim();
    if let Some((i, m)) = members.iter().enumerate().find(|(_, m)| m.dim() != n) {
        return Err(Error::DimensionMismatch(format!(
            "member {} has dimension {}, member 1 has {n}",
            i + 1,
            m.dim()
        )));
    }
    let tol = comm_tol(&members);
    let mut commutator_norms = Vec::new();
    for (i, j) in (0..members.len()).tuple_combinations() {
        let norm = linalg::frobenius(&linalg::commutator(members[i].matrix(), members[j].matrix()));
        if norm > tol {
            return Err(Error::NotCommuting {
                first: i + 1,
                second: j + 1,
                norm,
            });
        }
        commutator_norms.push(((i, j), norm));
    }
    Ok(CommutingSet {
        members,
        commutator_norms,
    })
}

/// Shared eigenvectors with one eigenvalue tuple per vector, sorted
/// lexicographically by tuple.
#[derive(Clone, Debug)]
pub struct SimultaneousBasis {
    pub vectors: CMatrix,
    /// `tuples[i][σ] = E_i^σ`.
    pub tuples: Vec<Vec<f64>>,
    /// All tuples distinct, i.e. the set is complete.
    pub complete: bool,
}

impl SimultaneousBasis {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn vector(&self, i: usize) -> CVector {
        self.vectors.column(i).into_owned()
    }

    /// Selection by 1-based position, carrying the eigenvalues of `member`.
    pub fn select_for(&self, member: usize, labels: &[usize]) -> Result<EigenSelection> {
        let idx = spaces::parse_index_set(labels, self.len())?;
        let values = idx.iter().map(|&j| self.tuples[j][member]).collect();
        let vectors = self.vectors.select_columns(idx.iter());
        EigenSelection::from_parts(idx, values, vectors)
    }

    /// Selection carrying the eigenvalues of the first member.
    pub fn select(&self, labels: &[usize]) -> Result<EigenSelection> {
        self.select_for(0, labels)
    }
}

/// Splits the columns of `v` (spanning a common invariant subspace) into
/// simultaneous eigenvectors of `members[from..]`.
fn refine(v: CMatrix, members: &[ObservableMatrix], from: usize, out: &mut Vec<CVector>) -> Result<()> {
    if v.ncols() == 1 || from == members.len() {
        out.extend(v.column_iter().map(|c| c.into_owned()));
        return Ok(());
    }
    let o = members[from].matrix();
    let sub = v.adjoint() * o * &v;
    let sub = (&sub + sub.adjoint()).scale(0.5);
    let (values, vectors) = linalg::hermitian_eigen(&sub)?;
    let rotated = &v * &vectors;
    let mut order: Vec<usize> = (0..rotated.ncols()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let width = CLUSTER_REL_TOL * (1.0 + members[from].frobenius_norm());
    for cluster in clusters(&order, |i| values[i], width) {
        let block = rotated.select_columns(cluster.iter());
        refine(block, members, from + 1, out)?;
    }
    Ok(())
}

/// Groups consecutive sorted indices whose values differ by at most `width`.
fn clusters(order: &[usize], value: impl Fn(usize) -> f64, width: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for &i in order {
        match out.last_mut() {
            Some(group) if value(i) - value(*group.last().unwrap()) <= width => group.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Diagonalizes a fixed-seed random combination of the members, then
/// resolves leftover degeneracies member by member.
pub fn simultaneous_eigenbasis(cs: &CommutingSet) -> Result<SimultaneousBasis> {
    let n = cs.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(COMBINATION_SEED);
    let mut combo = CMatrix::zeros(n, n);
    for m in cs.members() {
        let w: f64 = rng.gen_range(0.5..1.5);
        combo += m.matrix().scale(w);
    }
    let combo = ObservableMatrix::new(combo)?;
    let es = spaces::eigendecompose(&combo)?;
    let order: Vec<usize> = (0..n).collect();
    let width = CLUSTER_REL_TOL * (1.0 + combo.frobenius_norm());

    let mut vectors: Vec<CVector> = Vec::with_capacity(n);
    for cluster in clusters(&order, |i| es.values[i], width) {
        refine(es.vectors.select_columns(cluster.iter()), cs.members(), 0, &mut vectors)?;
    }

    let mut entries: Vec<(Vec<f64>, CVector)> = vectors
        .into_iter()
        .map(|mut v| {
            linalg::normalize_phase(&mut v);
            let tuple = cs.members().iter().map(|m| v.dotc(&(m.matrix() * &v)).re).collect();
            (tuple, v)
        })
        .collect();

    for (tuple, v) in &entries {
        for (m, &e) in cs.members().iter().zip(tuple) {
            let r = (m.matrix() * v - v * linalg::c(e, 0.0)).norm();
            if r > m.eig_tol() {
                return Err(Error::SolverFailure(format!(
                    "shared eigenvector residual {r:e} exceeds {:e}",
                    m.eig_tol()
                )));
            }
        }
    }

    let tuple_tol: Vec<f64> = cs.members().iter().map(|m| m.eig_tol()).collect();
    let cmp_tuple = |a: &[f64], b: &[f64]| {
        for ((x, y), tol) in a.iter().zip(b).zip(&tuple_tol) {
            if (x - y).abs() > *tol {
                return x.total_cmp(y);
            }
        }
        std::cmp::Ordering::Equal
    };
    entries.sort_by(|a, b| cmp_tuple(&a.0, &b.0).then_with(|| linalg::lex_cmp(&b.1, &a.1)));

    let complete = entries
        .windows(2)
        .all(|w| cmp_tuple(&w[0].0, &w[1].0) != std::cmp::Ordering::Equal);
    if !complete {
        log::warn!("commuting set is not complete: some eigenvalue tuples repeat");
    }

    let mut mat = CMatrix::zeros(n, n);
    for (i, (_, v)) in entries.iter().enumerate() {
        mat.set_column(i, v);
    }
    Ok(SimultaneousBasis {
        vectors: mat,
        tuples: entries.into_iter().map(|e| e.0).collect(),
        complete,
    })
}

fn check_members_decoupled(cs: &CommutingSet, dm: &DecouplingMap) -> Result<()> {
    for (i, m) in cs.members().iter().enumerate() {
        let residual = transform::decoupling_residual(m, dm)?;
        let tol = transform::decoupling_tolerance(m);
        if residual > tol {
            return Err(Error::NotDecoupled {
                residual,
                tol,
                member: Some(i + 1),
            });
        }
    }
    Ok(())
}

/// One decoupling map, built from shared eigenvectors J, that decouples
/// every member.
pub fn common_s(cs: &CommutingSet, labels: &[usize], ms: &ModelSpace) -> Result<DecouplingMap> {
    let basis = simultaneous_eigenbasis(cs)?;
    common_s_with_basis(cs, &basis, labels, ms)
}

pub fn common_s_with_basis(
    cs: &CommutingSet,
    basis: &SimultaneousBasis,
    labels: &[usize],
    ms: &ModelSpace,
) -> Result<DecouplingMap> {
    let sel = basis.select(labels)?;
    let dm = transform::construct_s_direct(&sel, ms)?;
    check_members_decoupled(cs, &dm)?;
    Ok(dm)
}

#[derive(Clone, Debug)]
pub struct EffectivePair {
    pub first: EffectiveOperator,
    pub second: SecondTypeOperator,
}

#[derive(Clone, Debug)]
pub struct EffectiveSet {
    pub pairs: Vec<EffectivePair>,
    /// `((ρ, σ), |[O_eff^ρ, O_eff^σ]|_F)` for ρ < σ, 0-based.
    pub commutator_norms: Vec<((usize, usize), f64)>,
}

impl EffectiveSet {
    pub fn max_commutator(&self) -> f64 {
        self.commutator_norms.iter().map(|c| c.1).fold(0.0, f64::max)
    }
}

pub fn effective_set(cs: &CommutingSet, dm: &DecouplingMap) -> Result<EffectiveSet> {
    check_members_decoupled(cs, dm)?;
    let pairs = cs
        .members()
        .iter()
        .map(|m| {
            Ok(EffectivePair {
                first: effective::first_type(m, dm)?,
                second: effective::second_type(m, dm)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let commutator_norms = (0..pairs.len())
        .tuple_combinations()
        .map(|(i, j)| {
            let c = linalg::commutator(&pairs[i].first.matrix, &pairs[j].first.matrix);
            ((i, j), linalg::frobenius(&c))
        })
        .collect();
    Ok(EffectiveSet {
        pairs,
        commutator_norms,
    })
}

/// Second-type representative for an observable outside the commuting set;
/// no decoupling is required.
pub fn second_type_only(o_outside: &ObservableMatrix, dm: &DecouplingMap) -> Result<SecondTypeOperator> {
    effective::second_type(o_outside, dm)
}

#[derive(Clone, Debug)]
pub struct DecompositionBlock {
    /// 1-based labels J_r into the shared basis.
    pub selection: Vec<usize>,
    pub map: DecouplingMap,
    /// One pair per member of the set.
    pub pairs: Vec<EffectivePair>,
}

#[derive(Clone, Debug)]
pub struct SpaceDecomposition {
    pub blocks: Vec<DecompositionBlock>,
    pub basis: SimultaneousBasis,
    /// Per member: mismatch between the union of block spectra and the full
    /// spectrum, as `max |Δ| / (1 + |E|)`.
    pub spectrum_mismatch: Vec<f64>,
}

impl SpaceDecomposition {
    pub fn max_mismatch(&self) -> f64 {
        self.spectrum_mismatch.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the block whose selection contains the 1-based label `j`.
    pub fn block_of(&self, j: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.selection.contains(&j))
    }
}

fn validate_partition(n: usize, partition: &[Vec<usize>], model_spaces: &[ModelSpace]) -> Result<()> {
    if partition.len() != model_spaces.len() {
        return Err(Error::PartitionInvalid(format!(
            "{} blocks but {} model spaces",
            partition.len(),
            model_spaces.len()
        )));
    }
    let mut seen = vec![false; n];
    for (r, (block, ms)) in partition.iter().zip(model_spaces).enumerate() {
        if block.is_empty() {
            return Err(Error::PartitionInvalid(format!("block {} is empty", r + 1)));
        }
        if ms.total_dim() != n || ms.dim() != block.len() {
            return Err(Error::PartitionInvalid(format!(
                "block {} has |J| = {} but K has dimension {} of {}",
                r + 1,
                block.len(),
                ms.dim(),
                ms.total_dim()
            )));
        }
        for &j in block {
            if j == 0 || j > n {
                return Err(Error::PartitionInvalid(format!("label {j} out of range")));
            }
            if std::mem::replace(&mut seen[j - 1], true) {
                return Err(Error::PartitionInvalid(format!("label {j} appears twice")));
            }
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::PartitionInvalid(format!("label {} is not covered", missing + 1)));
    }
    Ok(())
}

/// Builds a decoupling map and effective pairs per block of a partition of
/// the shared eigenbasis. Blocks are processed in parallel and merged in
/// block order.
pub fn decompose_space(
    cs: &CommutingSet,
    partition: &[Vec<usize>],
    model_spaces: &[ModelSpace],
) -> Result<SpaceDecomposition> {
    let n = cs.dim();
    validate_partition(n, partition, model_spaces)?;
    let basis = simultaneous_eigenbasis(cs)?;

    let blocks = partition
        .par_iter()
        .zip(model_spaces.par_iter())
        .enumerate()
        .map(|(r, (labels, ms))| {
            let block = || -> Result<DecompositionBlock> {
                let map = common_s_with_basis(cs, &basis, labels, ms)?;
                let es = effective_set(cs, &map)?;
                Ok(DecompositionBlock {
                    selection: labels.clone(),
                    map,
                    pairs: es.pairs,
                })
            };
            block().map_err(|e| Error::InBlock {
                block: r + 1,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let spectrum_mismatch = cs
        .members()
        .iter()
        .enumerate()
        .map(|(sigma, m)| {
            let union: Vec<Complex64> = blocks
                .iter()
                .map(|b| b.pairs[sigma].first.eigenvalues())
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            let full = spaces::eigendecompose(m)?.values;
            Ok(linalg::spectrum_mismatch(&union, &linalg::to_complex(&full)))
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(SpaceDecomposition {
        blocks,
        basis,
        spectrum_mismatch,
    })
}
