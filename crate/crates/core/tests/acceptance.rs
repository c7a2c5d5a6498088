//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Oracles here are computed independently of the library routine
//! under test wherever a second route exists.

use std::path::Path;
use std::process::{Command, ExitCode};

use effop::effective::{self, EffectiveOperator};
use effop::harness::generate::{self, Generated, ProblemKind, ProblemParams, ProblemSpec};
use effop::harness::io;
use effop::linalg::{self, c, CMatrix, CVector};
use effop::observables;
use effop::solver::{self, SolverConfig};
use effop::spaces::{self, EigenSelection, ModelSpace, ObservableMatrix, DEFAULT_COND_CAP};
use effop::transform::{self, DecouplingMap};
use effop::Error;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }
}

/// A seeded Hermitian instance with a selection J and the best model space K.
struct Instance {
    o: ObservableMatrix,
    sel: EigenSelection,
    ranked: Vec<ModelSpace>,
    dm: DecouplingMap,
}

impl Instance {
    fn ms(&self) -> &ModelSpace {
        &self.ranked[0]
    }
}

const SIZES: [usize; 3] = [6, 8, 12];
const DIMS: [usize; 3] = [2, 3, 4];

fn random_labels(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut j: Vec<usize> = sample(rng, n, d).into_iter().map(|i| i + 1).collect();
    j.sort_unstable();
    j
}

/// Legitimate model spaces ranked by descending σ_min of `[P_K Ψ_J]`.
fn ranked_spaces(sel: &EigenSelection) -> Vec<ModelSpace> {
    let mut found: Vec<(ModelSpace, f64)> = spaces::enumerate_model_spaces(sel, DEFAULT_COND_CAP)
        .expect("some model space is legitimate")
        .into_iter()
        .map(|(ms, _)| {
            let sigma = spaces::projection_sigma_min(&sel.vectors, &ms);
            (ms, sigma)
        })
        .collect();
    found.sort_by(|a, b| b.1.total_cmp(&a.1));
    found.into_iter().map(|(ms, _)| ms).collect()
}

fn instance(i: usize) -> Instance {
    let n = SIZES[i % 3];
    let d = DIMS[(i / 3) % 3];
    let seed = 1000 + i as u64;
    let o = generate::generate(&ProblemSpec::new(ProblemKind::RandomHermitian, n, seed))
        .and_then(Generated::into_single)
        .expect("generator");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = random_labels(n, d, &mut rng);
    let pairs = spaces::eigendecompose(&o).expect("eigendecomposition");
    let sel = spaces::select_eigenvectors(&pairs, &labels).expect("selection");
    let ranked = ranked_spaces(&sel);
    let dm = transform::construct_s_direct(&sel, &ranked[0]).expect("direct s");
    Instance { o, sel, ranked, dm }
}

fn instances() -> Vec<Instance> {
    (0..50).map(instance).collect()
}

/// Eigenvalues sorted by real part, then imaginary part.
fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    v
}

/// `max |Δ| / (1 + |E|)` after sorting both lists; both are near-real here.
fn sorted_mismatch(found: Vec<Complex64>, reference: Vec<Complex64>) -> f64 {
    assert_eq!(found.len(), reference.len());
    sorted(found)
        .iter()
        .zip(sorted(reference).iter())
        .map(|(a, b)| (a - b).norm() / (1.0 + b.norm()))
        .fold(0.0, f64::max)
}

fn real(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&x| c(x, 0.0)).collect()
}

/// `e^{-S} O e^{S}` from an explicitly assembled N×N `S`.
fn transformed(o: &CMatrix, dm: &DecouplingMap) -> CMatrix {
    let ms = dm.model_space();
    let n = ms.total_dim();
    let mut s_full = CMatrix::zeros(n, n);
    for (r, &q) in ms.complement().iter().enumerate() {
        for (col, &p) in ms.indices().iter().enumerate() {
            s_full[(q, p)] = dm.s()[(r, col)];
        }
    }
    let id = CMatrix::identity(n, n);
    (&id - &s_full) * o * (&id + &s_full)
}

fn sub_block(m: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |r, k| m[(rows[r], cols[k])])
}

fn fmt_worst(label: &str, worst: f64, tol: f64) -> String {
    format!("{label} worst={worst:.3e} tol={tol:.0e}")
}

fn criterion_1(all: &[Instance]) -> Outcome {
    let (mut eff_worst, mut union_worst) = (0.0f64, 0.0f64);
    for inst in all {
        let o = inst.o.matrix();
        let ms = inst.ms();
        let ot = transformed(o, &inst.dm);
        let pp = sub_block(&ot, ms.indices(), ms.indices());
        let qq = sub_block(&ot, ms.complement(), ms.complement());
        let eff = linalg::general_eigenvalues(&pp).expect("O_eff eigenvalues");
        let q = linalg::general_eigenvalues(&qq).expect("QÕQ eigenvalues");
        eff_worst = eff_worst.max(sorted_mismatch(eff.clone(), real(&inst.sel.values)));
        let full = spaces::eigendecompose(&inst.o).unwrap().values;
        let union: Vec<Complex64> = eff.into_iter().chain(q).collect();
        union_worst = union_worst.max(sorted_mismatch(union, real(&full)));
    }
    let tol = 1e-8;
    Outcome::new(
        eff_worst <= tol && union_worst <= tol,
        format!(
            "{}; {}",
            fmt_worst("spec(O_eff) vs E_J", eff_worst, tol),
            fmt_worst("union vs spec(O)", union_worst, tol)
        ),
    )
}

fn criterion_2(all: &[Instance]) -> Outcome {
    let mut worst_ratio = 0.0f64;
    let mut lib_agrees = true;
    for inst in all {
        let ms = inst.ms();
        let ot = transformed(inst.o.matrix(), &inst.dm);
        let residual = linalg::frobenius(&sub_block(&ot, ms.complement(), ms.indices()));
        let tol = 1e-9 * (1.0 + inst.o.frobenius_norm());
        worst_ratio = worst_ratio.max(residual / tol);
        let lib = transform::decoupling_residual(&inst.o, &inst.dm).unwrap();
        lib_agrees &= (lib - residual).abs() <= tol;
    }
    Outcome::new(
        worst_ratio <= 1.0 && lib_agrees,
        format!("worst |QÕP|_F / (1e-9 (1+|O|_F)) = {worst_ratio:.3e}; library residual agrees: {lib_agrees}"),
    )
}

fn criterion_3() -> Outcome {
    let o = ObservableMatrix::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
    let pairs = spaces::eigendecompose(&o).unwrap();
    // Ascending order puts +1 second.
    let sel = spaces::select_eigenvectors(&pairs, &[2]).unwrap();
    let ms = ModelSpace::new(2, &[1]).unwrap();
    let dm = transform::construct_s_direct(&sel, &ms).unwrap();
    let ot = transform::similarity_transform(&o, &dm).unwrap();
    let blocks = transform::transformed_blocks(&o, &dm).unwrap();
    let eo = effective::first_type(&o, &dm).unwrap();
    let st = effective::second_type(&o, &dm).unwrap();
    let psi = sel.vector(0);
    let direct = psi.dotc(&(o.matrix() * &psi)).re;
    let p_psi = ms.p_part(&psi);
    let factored = p_psi.norm_squared() * (p_psi.dotc(&(&st.matrix * &p_psi)).re / p_psi.norm_squared());
    let via_lib = effective::expectation_second_type(&st, &psi, &dm).unwrap();

    let one = |x: f64| linalg::real_matrix(1, 1, &[x]);
    let diffs = [
        linalg::max_abs(&(dm.s() - one(1.0))),
        linalg::max_abs(&(ot - linalg::real_matrix(2, 2, &[1.0, 1.0, 0.0, -1.0]))),
        linalg::max_abs(&(&eo.matrix - one(1.0))),
        linalg::max_abs(&(&blocks.qq - one(-1.0))),
        linalg::max_abs(&(&st.matrix - one(2.0))),
        (direct - 1.0).abs(),
        (factored - 1.0).abs(),
        (via_lib - 1.0).abs(),
    ];
    let worst = diffs.iter().copied().fold(0.0, f64::max);
    Outcome::new(worst <= 1e-12, fmt_worst("fixture entries", worst, 1e-12))
}

fn criterion_4() -> Outcome {
    let o = ObservableMatrix::from_real_rows(2, &[1.0, 0.1, 0.1, 3.0]).unwrap();
    let ms = ModelSpace::new(2, &[1]).unwrap();
    let cfg = SolverConfig {
        max_iter: 50,
        ..SolverConfig::default()
    };
    let scalar = match solver::solve_decoupling_fixed_point(&o, &ms, &cfg) {
        Ok((dm, trace)) => {
            let err = (dm.s()[(0, 0)] - c(10.0 - 101f64.sqrt(), 0.0)).norm();
            (err, trace.records.len())
        }
        Err(e) => return Outcome::new(false, format!("scalar case failed: {e}")),
    };

    let mut family_worst = 0.0f64;
    for i in 0..20u64 {
        let n = 4 + (i as usize % 9);
        let d = 1 + (i as usize % 3);
        let params = ProblemParams {
            gap: Some(1.0),
            coupling: Some(0.1),
            model_dim: Some(d),
            ..ProblemParams::default()
        };
        let o = generate::generate(&ProblemSpec::new(ProblemKind::GapSeparated, n, 500 + i).with_params(params))
            .and_then(Generated::into_single)
            .unwrap();
        let low: Vec<usize> = (1..=d).collect();
        let ms = ModelSpace::new(n, &low).unwrap();
        let iterated = match solver::solve_decoupling_fixed_point(&o, &ms, &SolverConfig::default()) {
            Ok((dm, _)) => dm,
            Err(e) => return Outcome::new(false, format!("gap-separated seed {} failed: {e}", 500 + i)),
        };
        let pairs = spaces::eigendecompose(&o).unwrap();
        let sel = spaces::select_eigenvectors(&pairs, &low).unwrap();
        let direct = transform::construct_s_direct(&sel, &ms).unwrap();
        family_worst = family_worst.max(linalg::max_abs(&(iterated.s() - direct.s())));
    }
    let (err, iters) = scalar;
    Outcome::new(
        err <= 1e-10 && iters <= 50 && family_worst <= 1e-8,
        format!(
            "scalar |s - (10-√101)| = {err:.3e} in {iters} iterations; {}",
            fmt_worst("gap-separated |s_iter - s_direct|_max", family_worst, 1e-8)
        ),
    )
}

fn criterion_5(all: &[Instance]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for inst in all.iter().take(20) {
        let d = inst.sel.dim();
        let cmat = generate::random_matrix(d, &mut rng);
        let mixed = &inst.sel.vectors * cmat;
        let s = transform::s_from_columns(&mixed, inst.ms(), DEFAULT_COND_CAP).unwrap();
        worst = worst.max(linalg::max_abs(&(s - inst.dm.s())));
    }
    Outcome::new(worst <= 1e-10, fmt_worst("|s(ΨC) - s(Ψ)|_max", worst, 1e-10))
}

fn criterion_6(all: &[Instance]) -> Outcome {
    let mut gram_worst = 0.0f64;
    for inst in all {
        let st = effective::second_type(&inst.o, &inst.dm).unwrap();
        let ms = inst.ms();
        let d = inst.sel.dim();
        // Independent route: Ō_eff = L† O L with L the columns [I; s] in original order.
        let l = ms.p_rows(&inst.sel.vectors);
        for i in 0..d {
            for j in 0..d {
                let psi_i = inst.sel.vector(i);
                let psi_j = inst.sel.vector(j);
                let full = psi_i.dotc(&(inst.o.matrix() * &psi_j));
                let reduced = effective::matrix_element(&psi_i, &psi_j, &st, &inst.dm).unwrap();
                let p_i: CVector = l.column(i).into_owned();
                let p_j: CVector = l.column(j).into_owned();
                let lifted = inst.dm.lift();
                let by_hand = p_i.dotc(&(lifted.adjoint() * inst.o.matrix() * &lifted * p_j));
                gram_worst = gram_worst.max((full - reduced).norm()).max((full - by_hand).norm());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut rejected = 0;
    for inst in all.iter().take(10) {
        let v = generate::random_vector(inst.o.dim(), &mut rng);
        if matches!(effective::check_membership(&v, &inst.dm), Err(Error::NotInSubspace { .. })) {
            rejected += 1;
        }
    }
    Outcome::new(
        gram_worst <= 1e-9 && rejected == 10,
        format!(
            "{}; NotInSubspace raised {rejected}/10",
            fmt_worst("Gram |⟨ψi|O|ψj⟩ - ⟨Pψi|Ō_eff|Pψj⟩|", gram_worst, 1e-9)
        ),
    )
}

fn criterion_7(all: &[Instance]) -> Outcome {
    let mut worst = 0.0f64;
    for inst in all {
        let eo = effective::first_type(&inst.o, &inst.dm).unwrap();
        let sr = effective::spectral_reconstruct(&inst.sel, inst.ms()).unwrap();
        worst = worst.max(linalg::max_abs(&(sr - &eo.matrix)));
    }
    Outcome::new(worst <= 1e-9, fmt_worst("|spectral - first_type|_max", worst, 1e-9))
}

fn criterion_8() -> Outcome {
    let mut comm_worst = 0.0f64;
    let mut decouple_ratio = 0.0f64;
    for i in 0..20u64 {
        let params = ProblemParams {
            family_size: Some(3),
            ..ProblemParams::default()
        };
        let members = generate::generate(&ProblemSpec::new(ProblemKind::CommutingFamily, 9, 800 + i).with_params(params))
            .and_then(Generated::into_family)
            .unwrap();
        let cs = observables::verify_commuting(members).unwrap();
        let basis = observables::simultaneous_eigenbasis(&cs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(800 + i);
        let labels = random_labels(9, 3, &mut rng);
        let ms = ranked_spaces(&basis.select(&labels).unwrap()).remove(0);
        let dm = match observables::common_s_with_basis(&cs, &basis, &labels, &ms) {
            Ok(dm) => dm,
            Err(e) => return Outcome::new(false, format!("seed {}: {e}", 800 + i)),
        };
        let mut effs: Vec<CMatrix> = Vec::new();
        for m in cs.members() {
            let ot = transformed(m.matrix(), &dm);
            let qp = sub_block(&ot, ms.complement(), ms.indices());
            decouple_ratio =
                decouple_ratio.max(linalg::frobenius(&qp) / (1e-9 * (1.0 + m.frobenius_norm())));
            effs.push(sub_block(&ot, ms.indices(), ms.indices()));
        }
        for a in 0..effs.len() {
            for b in a + 1..effs.len() {
                let comm = &effs[a] * &effs[b] - &effs[b] * &effs[a];
                comm_worst = comm_worst.max(linalg::frobenius(&comm));
            }
        }
        let lib = observables::effective_set(&cs, &dm).unwrap().max_commutator();
        comm_worst = comm_worst.max(lib);
    }
    Outcome::new(
        comm_worst <= 1e-9 && decouple_ratio <= 1.0,
        format!(
            "{}; worst member residual / tol = {decouple_ratio:.3e}",
            fmt_worst("max |[O_eff^ρ, O_eff^σ]|_F", comm_worst, 1e-9)
        ),
    )
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Direct sum of two random Hermitian blocks: eigenvectors vanish on one
/// block, so many model spaces are illegitimate.
fn block_diagonal(n: usize, seed: u64) -> ObservableMatrix {
    let split = n / 2;
    let a = generate::generate(&ProblemSpec::new(ProblemKind::RandomHermitian, split, seed))
        .and_then(Generated::into_single)
        .unwrap();
    let b = generate::generate(&ProblemSpec::new(ProblemKind::RandomHermitian, n - split, seed + 1))
        .and_then(Generated::into_single)
        .unwrap();
    let mut m = CMatrix::zeros(n, n);
    m.view_mut((0, 0), (split, split)).copy_from(a.matrix());
    m.view_mut((split, split), (n - split, n - split)).copy_from(b.matrix());
    ObservableMatrix::new(m).unwrap()
}

/// Exhaustive count of K with `[P_K Ψ_J]` of full numerical rank, by SVD.
fn rank_count(sel: &EigenSelection) -> usize {
    use itertools::Itertools;
    let n = sel.total_dim();
    let d = sel.dim();
    (0..n)
        .combinations(d)
        .filter(|k| {
            let rows = CMatrix::from_fn(d, d, |r, col| sel.vectors[(k[r], col)]);
            let sv = rows.svd(false, false).singular_values;
            let max = sv.max();
            let min = sv.min();
            max > 0.0 && min > 1e-12 * max
        })
        .count()
}

fn criterion_9(all: &[Instance]) -> Outcome {
    let mut eq_worst = 0.0f64;
    let mut eq_cases = 0;
    let mut counts_ok = true;
    let mut rank_cases = 0;
    let mut check_counts = |sel: &EigenSelection| {
        let count = spaces::enumerate_model_spaces(sel, DEFAULT_COND_CAP).map_or(0, |v| v.len());
        let total = binomial(sel.total_dim(), sel.dim());
        let in_range = (1..=total).contains(&count);
        let agrees = sel.total_dim() > 8 || count == rank_count(sel);
        if sel.total_dim() <= 8 {
            rank_cases += 1;
        }
        counts_ok &= in_range && agrees;
    };
    for inst in all {
        check_counts(&inst.sel);
        if inst.ranked.len() < 2 {
            continue;
        }
        let eo = effective::first_type(&inst.o, &inst.dm).unwrap();
        let dm2 = transform::construct_s_direct(&inst.sel, &inst.ranked[1]).unwrap();
        let eo2 = effective::first_type(&inst.o, &dm2).unwrap();
        let eq = effective::equivalence_transform(&eo, &eo2, &inst.sel).unwrap();
        eq_worst = eq_worst.max(eq.deviation).max(manual_equivalence(&eo, &eo2, &inst.sel));
        eq_cases += 1;
    }
    for seed in 0..10u64 {
        let n = 4 + (seed as usize % 5);
        let o = block_diagonal(n, 900 + 2 * seed);
        let pairs = spaces::eigendecompose(&o).unwrap();
        let d = 1 + seed as usize % 3;
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let sel = spaces::select_eigenvectors(&pairs, &random_labels(n, d, &mut rng)).unwrap();
        check_counts(&sel);
    }
    Outcome::new(
        eq_worst <= 1e-9 && counts_ok,
        format!(
            "{} over {eq_cases} pairs; counts in range and match SVD rank ({rank_cases} cases with N ≤ 8): {counts_ok}",
            fmt_worst("|O_eff - T O'_eff T⁻¹|_F", eq_worst, 1e-9)
        ),
    )
}

fn manual_equivalence(eo: &EffectiveOperator, eo2: &EffectiveOperator, sel: &EigenSelection) -> f64 {
    let x = sel.projected(eo.model_space());
    let x2 = sel.projected(eo2.model_space());
    let x2_inv = x2.clone().try_inverse().expect("invertible");
    let t = &x * x2_inv;
    let t_inv = &x2 * x.try_inverse().expect("invertible");
    linalg::frobenius(&(&eo.matrix - t * &eo2.matrix * t_inv))
}

fn criterion_10() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let params = ProblemParams {
            family_size: Some(2),
            ..ProblemParams::default()
        };
        let members = generate::generate(&ProblemSpec::new(ProblemKind::CommutingFamily, 9, 1100 + seed).with_params(params))
            .and_then(Generated::into_family)
            .unwrap();
        let cs = observables::verify_commuting(members).unwrap();
        let basis = observables::simultaneous_eigenbasis(&cs).unwrap();
        let partition = vec![vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]];
        let model_spaces: Vec<ModelSpace> = partition
            .iter()
            .map(|j| ranked_spaces(&basis.select(j).unwrap()).remove(0))
            .collect();
        let dec = match observables::decompose_space(&cs, &partition, &model_spaces) {
            Ok(dec) => dec,
            Err(e) => return Outcome::new(false, format!("seed {}: {e}", 1100 + seed)),
        };
        worst = worst.max(dec.max_mismatch());
        for (sigma, member) in cs.members().iter().enumerate() {
            let union: Vec<Complex64> = dec
                .blocks
                .iter()
                .flat_map(|b| linalg::general_eigenvalues(&b.pairs[sigma].first.matrix).unwrap())
                .collect();
            let full = spaces::eigendecompose(member).unwrap().values;
            worst = worst.max(sorted_mismatch(union, real(&full)));
        }
    }
    Outcome::new(worst <= 1e-9, fmt_worst("per-member union vs full spectrum", worst, 1e-9))
}

fn run(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_effop"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "`effop {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn best_k_from_enumeration(report: &str) -> Option<String> {
    report
        .lines()
        .filter_map(|l| l.strip_prefix("# K="))
        .filter_map(|rest| {
            let mut fields = rest.split_whitespace();
            let labels = fields.next()?.to_string();
            let sigma: f64 = fields.find_map(|f| f.strip_prefix("sigma_min="))?.parse().ok()?;
            Some((labels, sigma))
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(labels, _)| labels)
}

fn criterion_11() -> Outcome {
    match pipeline() {
        Ok(detail) => Outcome::new(true, detail),
        Err(e) => Outcome::new(false, e),
    }
}

fn pipeline() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let (o_path, s_path, eff_path) = (path("o.txt"), path("s.txt"), path("eff.txt"));
    let j = "2,5,7";

    run(&["gen", "--kind", "random_hermitian", "--dim", "8", "--seed", "11", "--out", &o_path])?;
    let listing = run(&["enumerate", "--matrix", &o_path, "--J", j])?;
    let k = best_k_from_enumeration(&listing).ok_or("enumerate listed no model space")?;
    run(&["solve-direct", "--matrix", &o_path, "--J", j, "--K", &k, "--out-s", &s_path])?;
    run(&["effective", "--matrix", &o_path, "--s", &s_path, "--K", &k, "--J", j, "--out", &eff_path])?;
    run(&["verify", "--matrix", &o_path, "--d", "3", "--trials", "3", "--seed", "4"])?;

    // Recompute criterion (1) quantities from the written files alone.
    let o = io::read_observable(Path::new(&o_path)).map_err(|e| e.to_string())?;
    let k_labels = io::parse_labels(&k).map_err(|e| e.to_string())?;
    let ms = ModelSpace::new(o.dim(), &k_labels).map_err(|e| e.to_string())?;
    let dm = io::read_decoupling_map(Path::new(&s_path), Some(&ms)).map_err(|e| e.to_string())?;
    let eff = io::read_matrix_file(Path::new(&eff_path), true).map_err(|e| e.to_string())?;
    let eff_eigs = linalg::general_eigenvalues(&eff.matrix).map_err(|e| e.to_string())?;
    let full = spaces::eigendecompose(&o).map_err(|e| e.to_string())?.values;
    let j_values: Vec<f64> = [2, 5, 7].iter().map(|&i| full[i - 1]).collect();
    let eff_mismatch = sorted_mismatch(eff_eigs.clone(), real(&j_values));

    let ot = transformed(o.matrix(), &dm);
    let from_s = sub_block(&ot, ms.indices(), ms.indices());
    let file_vs_s = linalg::max_abs(&(&from_s - &eff.matrix));
    let qq = sub_block(&ot, ms.complement(), ms.complement());
    let union: Vec<Complex64> = eff_eigs
        .into_iter()
        .chain(linalg::general_eigenvalues(&qq).map_err(|e| e.to_string())?)
        .collect();
    let union_mismatch = sorted_mismatch(union, real(&full));
    let residual = linalg::frobenius(&sub_block(&ot, ms.complement(), ms.indices()));
    let tol = 1e-9 * (1.0 + o.frobenius_norm());

    let ok = eff_mismatch <= 1e-8 && union_mismatch <= 1e-8 && residual <= tol && file_vs_s <= 1e-12;
    let detail = format!(
        "all commands exit 0 (K={k}); from files: spec(O_eff) {eff_mismatch:.3e}, union {union_mismatch:.3e}, \
         residual {residual:.3e} (tol {tol:.1e}), O_eff file vs s {file_vs_s:.1e}"
    );
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let start = std::time::Instant::now();
    let all = instances();
    let criteria: Vec<Criterion> = vec![
        ("eigenvalue reproduction", Box::new(|| criterion_1(&all))),
        ("decoupling residual", Box::new(|| criterion_2(&all))),
        ("hand-verified 2x2 fixture", Box::new(criterion_3)),
        ("iterative solver", Box::new(criterion_4)),
        ("basis-change invariance", Box::new(|| criterion_5(&all))),
        ("matrix-element identity", Box::new(|| criterion_6(&all))),
        ("spectral reconstruction route", Box::new(|| criterion_7(&all))),
        ("symmetry preservation", Box::new(criterion_8)),
        ("model-space equivalence", Box::new(|| criterion_9(&all))),
        ("decomposition completeness", Box::new(criterion_10)),
        ("CLI round trip", Box::new(criterion_11)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check();
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        if !outcome.passed {
            failed += 1;
        }
        println!("{tag} criterion {} ({name}): {}", i + 1, outcome.detail);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.2}s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
