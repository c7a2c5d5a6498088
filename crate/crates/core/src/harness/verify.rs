//! Invariant suite run by `verify`.
//!
//! Each trial draws a random selection J from the input's spectrum and runs
//! the module invariants against an eigendecomposition oracle. Solver checks
//! also use a seeded gap-separated instance of the same size, since the
//! fixed point need not exist for arbitrary input. Trials run in parallel;
//! each named check keeps its worst observation, so the report does not
//! depend on scheduling.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::effective::{self, SPECTRUM_MATCH_TOL};
use crate::error::{Error, Result};
use crate::harness::generate::{self, ProblemKind, ProblemParams, ProblemSpec, RNG_ALGORITHM};
use crate::harness::io;
use crate::harness::report::{sha256_hex, Check, Report};
use crate::linalg::{self, CMatrix, CVector};
use crate::observables;
use crate::solver::{self, SolverConfig};
use crate::spaces::{self, EigenSelection, Eigensystem, ModelSpace, ObservableMatrix, DEFAULT_COND_CAP};
use crate::transform::{self, DecouplingMap};

/// Exhaustive model-space enumeration is used while `C(N, d)` stays below this.
pub const ENUMERATION_LIMIT: u128 = 5000;
/// Random selections tried per trial before giving up on finding one with a
/// legitimate model space.
const SELECTION_ATTEMPTS: usize = 16;
/// Randomly drawn alternative model spaces need `σ_min([P_K Psi_J])` at
/// least this large; below it rounding in `s` alone can exceed the
/// decoupling tolerance.
const ALTERNATIVE_SIGMA_MIN: f64 = 1e-3;

/// Order in which checks appear in the report.
pub const CHECK_NAMES: &[&str] = &[
    "spaces.projectors",
    "spaces.eigen_reconstruction",
    "spaces.enumeration_count",
    "spaces.enumeration_rank_agreement",
    "spaces.retrieve_round_trip",
    "transform.decoupling_residual",
    "transform.eigen_relation",
    "transform.converse_eigenvectors",
    "transform.basis_change",
    "transform.fixed_points",
    "transform.non_membership",
    "transform.spectrum_preserved",
    "transform.block_formulas",
    "solver.consistency",
    "solver.spectrum_subset",
    "solver.deterministic",
    "effective.spectrum_subset",
    "effective.factorization",
    "effective.route_equivalence",
    "effective.second_type_hermitian",
    "effective.first_type_non_hermitian",
    "effective.gram_identity",
    "effective.expectation_identity",
    "effective.equivalence",
    "effective.inequivalent_selections",
    "observables.common_s",
    "observables.commutators",
    "observables.shared_eigenvectors",
    "observables.decomposition",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyConfig {
    pub model_dim: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            model_dim: 3,
            trials: 20,
            seed: 0,
        }
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Runs the suite. Errors are reserved for unusable input; broken
/// invariants show up as failing checks.
pub fn verify(o: &ObservableMatrix, cfg: &VerifyConfig) -> Result<Report> {
    let n = o.dim();
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    if cfg.model_dim == 0 || cfg.model_dim >= n {
        return Err(Error::InvalidConfig(format!(
            "model dimension must satisfy 1 <= d < N = {n}, got {}",
            cfg.model_dim
        )));
    }
    let es = spaces::eigendecompose(o)?;

    let mut report = Report::new();
    report.note("matrix_sha256", sha256_hex(io::format_matrix(o.matrix(), &[]).as_bytes()));
    report.note("dim", n);
    report.note("d", cfg.model_dim);
    report.note("trials", cfg.trials);
    report.note("seed", cfg.seed);
    report.note("rng", RNG_ALGORITHM);

    let reconstruction = linalg::frobenius(&(es.reconstruct() - o.matrix()));
    let mut once = vec![Check::at_most(
        "spaces.eigen_reconstruction",
        reconstruction,
        1e-10 * o.frobenius_norm(),
    )];

    let per_trial: Vec<Vec<Check>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(o, &es, cfg, t as u64))
        .collect::<Result<_>>()?;

    let mut worst: BTreeMap<String, Check> = BTreeMap::new();
    for check in per_trial.into_iter().flatten().chain(once.drain(..)) {
        let merged = match worst.remove(&check.name) {
            Some(prev) => prev.worst(check),
            None => check,
        };
        worst.insert(merged.name.clone(), merged);
    }
    let mut skipped = Vec::new();
    for name in CHECK_NAMES {
        match worst.remove(*name) {
            Some(c) => report.push(c),
            None => skipped.push(*name),
        }
    }
    debug_assert!(worst.is_empty(), "unlisted checks: {:?}", worst.keys());
    if !skipped.is_empty() {
        report.note("skipped", skipped.join(","));
    }
    Ok(report)
}

fn random_in_span(vectors: &CMatrix, rng: &mut ChaCha8Rng) -> CVector {
    let c = generate::random_vector(vectors.ncols(), rng);
    let v = vectors * c;
    let norm = v.norm();
    v / linalg::c(norm, 0.0)
}

fn random_labels(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = sample(rng, n, d).into_iter().map(|j| j + 1).collect();
    labels.sort_unstable();
    labels
}

/// Legitimate model spaces for `sel` in enumeration order, exhaustive when
/// affordable and otherwise the single greedy pick, plus the flag.
fn legitimate_spaces(sel: &EigenSelection) -> Result<(Vec<(ModelSpace, f64)>, bool)> {
    if binomial(sel.total_dim(), sel.dim()) <= ENUMERATION_LIMIT {
        Ok((spaces::enumerate_model_spaces(sel, DEFAULT_COND_CAP)?, true))
    } else {
        Ok((vec![spaces::suggest_model_space(sel, DEFAULT_COND_CAP)?], false))
    }
}

/// Model spaces ordered by decreasing `σ_min([P_K Psi_J])`, i.e. by
/// increasing `|s|`. A small condition number alone does not keep `s` small.
fn by_sigma_min(sel: &EigenSelection, legit: &[(ModelSpace, f64)]) -> Vec<ModelSpace> {
    let mut ranked: Vec<(f64, &ModelSpace)> = legit
        .iter()
        .map(|(ms, _)| (spaces::projection_sigma_min(&sel.vectors, ms), ms))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.indices().cmp(b.1.indices())));
    ranked.into_iter().map(|(_, ms)| ms.clone()).collect()
}

fn min_gap(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn run_trial(o: &ObservableMatrix, es: &Eigensystem, cfg: &VerifyConfig, t: u64) -> Result<Vec<Check>> {
    let n = o.dim();
    let d = cfg.model_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t));
    let mut checks = Vec::new();

    let mut picked = None;
    let mut last_err = None;
    for _ in 0..SELECTION_ATTEMPTS {
        let labels = random_labels(n, d, &mut rng);
        let sel = spaces::select_eigenvectors(es, &labels)?;
        match legitimate_spaces(&sel) {
            Ok(found) => {
                picked = Some((labels, sel, found));
                break;
            }
            Err(e @ (Error::CapTooTight { .. } | Error::SingularProjection { .. })) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    let (labels, sel, (legit, exhaustive)) = match picked {
        Some(p) => p,
        None => return Err(last_err.expect("at least one attempt")),
    };
    let ranked = by_sigma_min(&sel, &legit);
    let ms = ranked[0].clone();
    let dm = transform::construct_s_direct(&sel, &ms)?;
    let o_norm = o.frobenius_norm();
    let distinct = min_gap(&es.values) > 1e-6 * (1.0 + o_norm);

    spaces_checks(&mut checks, &sel, &ms, &dm, &legit, exhaustive, o, &mut rng)?;
    transform_checks(&mut checks, o, es, &sel, &dm, distinct, &mut rng)?;
    solver_checks(&mut checks, o, es, &ms, n, d, &mut rng)?;

    // effective
    let eo = effective::first_type(o, &dm)?;
    let eff_norm = linalg::frobenius(&eo.matrix);
    let eff_eigs = eo.eigenvalues()?;
    checks.push(Check::at_most(
        "effective.spectrum_subset",
        linalg::spectrum_mismatch(&eff_eigs, &linalg::to_complex(&sel.values)),
        SPECTRUM_MATCH_TOL,
    ));
    let fact = effective::q_block_and_factorization(o, &dm)?;
    checks.push(Check::at_most("effective.factorization", fact.mismatch, SPECTRUM_MATCH_TOL));
    let recon = effective::spectral_reconstruct(&sel, &ms)?;
    checks.push(Check::at_most(
        "effective.route_equivalence",
        linalg::max_abs(&(recon - &eo.matrix)),
        1e-9,
    ));
    let ot = effective::second_type(o, &dm)?;
    checks.push(Check::at_most(
        "effective.second_type_hermitian",
        ot.hermiticity_defect(),
        1e-12 * linalg::frobenius(&ot.matrix),
    ));

    let mut gram = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let (pi, pj) = (sel.vector(i), sel.vector(j));
            let direct = pi.dotc(&(o.matrix() * &pj));
            let reduced = effective::matrix_element(&pi, &pj, &ot, &dm)?;
            gram = gram.max((direct - reduced).norm());
        }
    }
    checks.push(Check::at_most("effective.gram_identity", gram, 1e-9));
    let psi = random_in_span(&sel.vectors, &mut rng);
    let direct = psi.dotc(&(o.matrix() * &psi)).re;
    let reduced = effective::expectation_second_type(&ot, &psi, &dm)?;
    checks.push(Check::at_most("effective.expectation_identity", (direct - reduced).abs(), 1e-9));

    let alternative = if ranked.len() >= 2 {
        Some(ranked[1].clone())
    } else if !exhaustive {
        random_alternative(&sel, &ms, &mut rng)?
    } else {
        None
    };
    if let Some(ms2) = alternative {
        let dm2 = transform::construct_s_direct(&sel, &ms2)?;
        let eo2 = effective::first_type(o, &dm2)?;
        let eq = effective::equivalence_transform(&eo, &eo2, &sel)?;
        checks.push(Check::at_most("effective.equivalence", eq.deviation, 1e-9 * (1.0 + eff_norm)));
    }
    if distinct && 2 * d <= n {
        let others: Vec<usize> = (1..=n).filter(|j| !labels.contains(j)).collect();
        let pick: Vec<usize> = sample(&mut rng, others.len(), d).into_iter().map(|i| others[i]).collect();
        let sel2 = spaces::select_eigenvectors(es, &pick)?;
        if let Ok((found, _)) = legitimate_spaces(&sel2) {
            let dm2 = transform::construct_s_direct(&sel2, &by_sigma_min(&sel2, &found)[0])?;
            let eigs2 = effective::first_type(o, &dm2)?.eigenvalues()?;
            checks.push(Check::at_least(
                "effective.inequivalent_selections",
                linalg::spectrum_mismatch(&eigs2, &eff_eigs),
                SPECTRUM_MATCH_TOL,
            ));
        }
    }
    if d >= 2 {
        first_type_non_hermitian(&mut checks, n, d, &mut rng)?;
    }

    if distinct {
        observables_checks(&mut checks, o, &labels, &ms, &mut rng)?;
    }
    Ok(checks)
}

/// A second model space for instances too large to enumerate: the draw with
/// the largest `σ_min` among random legitimate candidates.
fn random_alternative(sel: &EigenSelection, ms: &ModelSpace, rng: &mut ChaCha8Rng) -> Result<Option<ModelSpace>> {
    let mut best: Option<(f64, ModelSpace)> = None;
    for _ in 0..4 * SELECTION_ATTEMPTS {
        let cand = ModelSpace::from_zero_based(sel.total_dim(), sample(rng, sel.total_dim(), sel.dim()).into_vec())?;
        if &cand == ms || !spaces::is_invertible(spaces::projection_condition(&sel.vectors, &cand), DEFAULT_COND_CAP) {
            continue;
        }
        let sigma = spaces::projection_sigma_min(&sel.vectors, &cand);
        if best.as_ref().is_none_or(|(b, _)| sigma > *b) {
            best = Some((sigma, cand));
        }
    }
    Ok(best.and_then(|(sigma, ms)| (sigma >= ALTERNATIVE_SIGMA_MIN).then_some(ms)))
}

/// First-type operators are not Hermitian in general; checked on a generic
/// random instance, since structured input may happen to give a Hermitian one.
fn first_type_non_hermitian(checks: &mut Vec<Check>, n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    let generic = generate::generate(&ProblemSpec::new(ProblemKind::RandomHermitian, n, rng.gen()))?
        .into_single()?;
    let gsel = spaces::select_eigenvectors(&spaces::eigendecompose(&generic)?, &random_labels(n, d, rng))?;
    let (gms, _) = spaces::suggest_model_space(&gsel, DEFAULT_COND_CAP)?;
    let geo = effective::first_type(&generic, &transform::construct_s_direct(&gsel, &gms)?)?;
    let defect = linalg::frobenius(&(&geo.matrix - geo.matrix.adjoint()));
    checks.push(Check::at_least(
        "effective.first_type_non_hermitian",
        defect / (1.0 + linalg::frobenius(&geo.matrix)),
        1e-8,
    ));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn spaces_checks(
    checks: &mut Vec<Check>,
    sel: &EigenSelection,
    ms: &ModelSpace,
    dm: &DecouplingMap,
    legit: &[(ModelSpace, f64)],
    exhaustive: bool,
    o: &ObservableMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let n = sel.total_dim();
    let d = sel.dim();
    let (p, q) = ms.projectors();
    let id = CMatrix::identity(n, n);
    let defect = linalg::max_abs(&(&p + &q - id)) + linalg::max_abs(&(&p * &q)) + linalg::max_abs(&(&q * &p));
    checks.push(Check::at_most("spaces.projectors", defect, 0.0));

    if exhaustive {
        let total = binomial(n, d);
        let count = legit.len() as u128;
        let out_of_range = if (1..=total).contains(&count) { 0.0 } else { 1.0 };
        checks.push(Check::at_most("spaces.enumeration_count", out_of_range, 0.0));
        let mut disagreements = 0usize;
        for k in itertools::Itertools::combinations(0..n, d) {
            let cand = ModelSpace::from_zero_based(n, k)?;
            let full_rank = linalg::numerical_rank(&sel.projected(&cand), spaces::SINGULAR_RATIO) == d;
            let listed = legit.iter().any(|(m, _)| *m == cand);
            if full_rank != listed {
                disagreements += 1;
            }
        }
        checks.push(Check::at_most(
            "spaces.enumeration_rank_agreement",
            disagreements as f64,
            0.0,
        ));
    }

    let psi = random_in_span(&sel.vectors, rng);
    let tilde = transform::exp_s(dm, -1) * &psi;
    let back = spaces::retrieve_full_vector(&ms.p_part(&tilde), dm)?;
    checks.push(Check::at_most(
        "spaces.retrieve_round_trip",
        (back - psi).norm(),
        o.eig_tol(),
    ));
    Ok(())
}

fn transform_checks(
    checks: &mut Vec<Check>,
    o: &ObservableMatrix,
    es: &Eigensystem,
    sel: &EigenSelection,
    dm: &DecouplingMap,
    distinct: bool,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let ms = dm.model_space();
    let n = o.dim();
    let d = sel.dim();
    let o_norm = o.frobenius_norm();
    let s = dm.s();
    let s_norm = linalg::frobenius(s);
    let tol_dec = transform::decoupling_tolerance(o);

    let residual = transform::decoupling_residual(o, dm)?;
    checks.push(Check::at_most("transform.decoupling_residual", residual, tol_dec));

    let blocks = transform::transformed_blocks(o, dm)?;
    let pp = sel.projected(ms);
    let relation = linalg::frobenius(&(&blocks.pp * &pp - &pp * sel.lambda()));
    checks.push(Check::at_most("transform.eigen_relation", relation, tol_dec));

    if distinct {
        let tol = 1e-8 * (1.0 + s_norm);
        let found: Vec<usize> = (0..n)
            .filter(|&i| {
                let v = es.vector(i);
                (s * ms.p_part(&v) - ms.q_part(&v)).norm() <= tol
            })
            .collect();
        let mismatched = found.iter().filter(|i| !sel.indices().contains(i)).count()
            + sel.indices().iter().filter(|i| !found.contains(i)).count();
        checks.push(Check::at_most("transform.converse_eigenvectors", mismatched as f64, 0.0));
    }

    let c = loop {
        let c = generate::random_matrix(d, rng);
        if linalg::condition_number(&c) <= 1e6 {
            break c;
        }
    };
    let s2 = transform::s_from_columns(&(&sel.vectors * c), ms, DEFAULT_COND_CAP)?;
    checks.push(Check::at_most(
        "transform.basis_change",
        linalg::frobenius(&(s2 - s)),
        1e-10,
    ));

    let mut psi = generate::random_vector(n, rng);
    for &k in ms.indices() {
        psi[k] = linalg::ZERO;
    }
    let moved = transform::exp_s(dm, -1) * &psi;
    checks.push(Check::at_most("transform.fixed_points", (moved - psi).norm(), 0.0));

    let phi = generate::random_vector(n, rng);
    let q_tilde = ms.q_part(&(transform::exp_s(dm, -1) * &phi));
    checks.push(Check::at_least(
        "transform.non_membership",
        q_tilde.norm() / phi.norm(),
        1e-8,
    ));

    let dense = transform::similarity_transform(o, dm)?;
    let eigs = linalg::general_eigenvalues(&dense)?;
    checks.push(Check::at_most(
        "transform.spectrum_preserved",
        linalg::spectrum_mismatch(&eigs, &linalg::to_complex(&es.values)),
        1e-9,
    ));
    checks.push(Check::at_most(
        "transform.block_formulas",
        linalg::max_abs(&(blocks.assemble(ms) - dense)),
        1e-12 * o_norm,
    ));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn solver_checks(
    checks: &mut Vec<Check>,
    o: &ObservableMatrix,
    es: &Eigensystem,
    ms: &ModelSpace,
    n: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let spec = ProblemSpec::new(ProblemKind::GapSeparated, n, rng.gen()).with_params(ProblemParams {
        model_dim: Some(d),
        gap: Some(1.0),
        coupling: Some(0.1),
        ..ProblemParams::default()
    });
    let gapped = generate::generate(&spec)?.into_single()?;
    let low: Vec<usize> = (1..=d).collect();
    let gms = ModelSpace::new(n, &low)?;
    let ges = spaces::eigendecompose(&gapped)?;
    let direct = transform::construct_s_direct(&spaces::select_eigenvectors(&ges, &low)?, &gms)?;
    let cfg = SolverConfig::default();
    match solver::solve_decoupling_fixed_point(&gapped, &gms, &cfg) {
        Ok((dm, trace)) => {
            checks.push(Check::at_most(
                "solver.consistency",
                linalg::frobenius(&(dm.s() - direct.s())),
                1e-8,
            ));
            push_subset(checks, &gapped, &ges, &dm)?;
            let again = solver::solve_decoupling_fixed_point(&gapped, &gms, &cfg)?;
            let same = again.0 == dm && again.1 == trace;
            checks.push(Check::at_most("solver.deterministic", if same { 0.0 } else { 1.0 }, 0.0));
        }
        Err(e) if e.is_numerical() => {
            checks.push(Check::at_most("solver.consistency", f64::INFINITY, 1e-8));
        }
        Err(e) => return Err(e),
    }

    // The input itself need not admit a convergent iteration; when it does,
    // the limit must still reproduce part of the spectrum.
    if let Ok((dm, _)) = solver::solve_decoupling_fixed_point(o, ms, &cfg) {
        push_subset(checks, o, es, &dm)?;
    }
    Ok(())
}

fn push_subset(checks: &mut Vec<Check>, o: &ObservableMatrix, es: &Eigensystem, dm: &DecouplingMap) -> Result<()> {
    let pp = transform::transformed_blocks(o, dm)?.pp;
    let found = linalg::general_eigenvalues(&pp)?;
    checks.push(Check::at_most(
        "solver.spectrum_subset",
        linalg::subset_mismatch(&found, &linalg::to_complex(&es.values)),
        SPECTRUM_MATCH_TOL,
    ));
    Ok(())
}

/// Commuting set `{O, O²/|O|, O³/|O|²}`: shares the eigenvectors of `O` and is
/// complete when the spectrum of `O` is simple.
fn polynomial_family(o: &ObservableMatrix) -> Result<Vec<ObservableMatrix>> {
    let scale = linalg::c(o.frobenius_norm().max(1.0), 0.0);
    let m = o.matrix();
    let m2 = m * m / scale;
    let m3 = m * &m2 / scale;
    Ok(vec![o.clone(), ObservableMatrix::new(m2)?, ObservableMatrix::new(m3)?])
}

fn observables_checks(
    checks: &mut Vec<Check>,
    o: &ObservableMatrix,
    labels: &[usize],
    ms: &ModelSpace,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let cs = observables::verify_commuting(polynomial_family(o)?)?;
    let basis = observables::simultaneous_eigenbasis(&cs)?;
    let dm = observables::common_s_with_basis(&cs, &basis, labels, ms);
    let dm = match dm {
        Ok(dm) => dm,
        Err(Error::NotDecoupled { residual, tol, .. }) => {
            checks.push(Check::at_most("observables.common_s", residual, tol));
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let mut worst_res = 0.0f64;
    let mut min_tol = f64::INFINITY;
    let mut max_norm = 0.0f64;
    for m in cs.members() {
        worst_res = worst_res.max(transform::decoupling_residual(m, &dm)?);
        min_tol = min_tol.min(transform::decoupling_tolerance(m));
        max_norm = max_norm.max(m.frobenius_norm());
    }
    checks.push(Check::at_most("observables.common_s", worst_res, min_tol));

    let set = observables::effective_set(&cs, &dm)?;
    checks.push(Check::at_most("observables.commutators", set.max_commutator(), 1e-9));

    let mut shared = 0.0f64;
    for (sigma, pair) in set.pairs.iter().enumerate() {
        let sel = basis.select_for(sigma, labels)?;
        let pp = sel.projected(ms);
        shared = shared.max(linalg::frobenius(&(&pair.first.matrix * &pp - &pp * sel.lambda())));
    }
    checks.push(Check::at_most(
        "observables.shared_eigenvectors",
        shared,
        1e-9 * (1.0 + max_norm),
    ));

    let n = o.dim();
    let d = labels.len();
    let mut order: Vec<usize> = sample(rng, n, n).into_iter().map(|j| j + 1).collect();
    let mut partition = Vec::new();
    while !order.is_empty() {
        let take = d.min(order.len());
        let mut block: Vec<usize> = order.drain(..take).collect();
        block.sort_unstable();
        partition.push(block);
    }
    let mut spaces_r = Vec::with_capacity(partition.len());
    for block in &partition {
        let sel = basis.select(block)?;
        spaces_r.push(spaces::suggest_model_space(&sel, DEFAULT_COND_CAP)?.0);
    }
    let dec = observables::decompose_space(&cs, &partition, &spaces_r)?;
    checks.push(Check::at_most("observables.decomposition", dec.max_mismatch(), 1e-9));
    Ok(())
}
