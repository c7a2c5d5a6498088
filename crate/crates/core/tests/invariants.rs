//! Property tests over seeded random Hermitian instances.

use effop::effective;
use effop::harness::generate::{self, Generated, ProblemKind, ProblemParams, ProblemSpec};
use effop::harness::io;
use effop::harness::report::Check;
use effop::linalg::{self, c, CMatrix};
use effop::observables;
use effop::spaces::{self, EigenSelection, ModelSpace, ObservableMatrix, DEFAULT_COND_CAP};
use effop::transform::{self, DecouplingMap};
use effop::Error;
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// An instance with a legitimate, well-conditioned `(J, K)`.
#[derive(Debug)]
struct Case {
    o: ObservableMatrix,
    sel: EigenSelection,
    ms: ModelSpace,
    dm: DecouplingMap,
    seed: u64,
}

fn case(n: usize, d_frac: f64, seed: u64) -> Case {
    let d = ((d_frac * n as f64) as usize).clamp(1, n - 1);
    let o = generate::generate(&ProblemSpec::new(ProblemKind::RandomHermitian, n, seed))
        .and_then(Generated::into_single)
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut labels: Vec<usize> = sample(&mut rng, n, d).into_iter().map(|i| i + 1).collect();
    labels.sort_unstable();
    let sel = spaces::select_eigenvectors(&spaces::eigendecompose(&o).unwrap(), &labels).unwrap();
    let (ms, _) = spaces::suggest_model_space(&sel, DEFAULT_COND_CAP).unwrap();
    let dm = transform::construct_s_direct(&sel, &ms).unwrap();
    Case { o, sel, ms, dm, seed }
}

fn cases() -> impl Strategy<Value = Case> {
    (2usize..=8, 0.1f64..0.9, any::<u64>()).prop_map(|(n, f, seed)| case(n, f, seed))
}

fn scale(o: &ObservableMatrix) -> f64 {
    1.0 + o.frobenius_norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projectors_partition_identity(c in cases()) {
        let (p, q) = spaces::projectors(&c.ms);
        let n = c.ms.total_dim();
        prop_assert_eq!(&p + &q, CMatrix::identity(n, n));
        prop_assert_eq!(&p * &p, p.clone());
        prop_assert_eq!(&p * &q, CMatrix::zeros(n, n));
    }

    #[test]
    fn eigensystem_is_orthonormal_and_reconstructs(c in cases()) {
        let es = spaces::eigendecompose(&c.o).unwrap();
        let n = c.o.dim();
        let gram = es.vectors.adjoint() * &es.vectors;
        prop_assert!(linalg::max_abs(&(gram - CMatrix::identity(n, n))) <= 1e-12);
        prop_assert!(linalg::frobenius(&(es.reconstruct() - c.o.matrix())) <= 1e-12 * scale(&c.o));
        prop_assert!(es.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn direct_s_decouples_and_reproduces_selected_spectrum(c in cases()) {
        let residual = transform::decoupling_residual(&c.o, &c.dm).unwrap();
        prop_assert!(residual <= transform::decoupling_tolerance(&c.o), "residual {residual:e}");
        let eo = effective::first_type(&c.o, &c.dm).unwrap();
        let mismatch = linalg::spectrum_mismatch(&eo.eigenvalues().unwrap(), &linalg::to_complex(&c.sel.values));
        prop_assert!(mismatch <= 1e-8);
        let fac = effective::q_block_and_factorization(&c.o, &c.dm).unwrap();
        prop_assert!(fac.holds(), "mismatch {:e}", fac.mismatch);
    }

    #[test]
    fn exponential_is_exact_and_blocks_match(c in cases()) {
        let n = c.o.dim();
        let plus = transform::exp_s(&c.dm, 1);
        let minus = transform::exp_s(&c.dm, -1);
        prop_assert!(linalg::max_abs(&(&minus * &plus - CMatrix::identity(n, n))) == 0.0);
        let direct = &minus * c.o.matrix() * &plus;
        let assembled = transform::transformed_blocks(&c.o, &c.dm).unwrap().assemble(&c.ms);
        prop_assert!(linalg::frobenius(&(direct - assembled)) <= 1e-12 * scale(&c.o) * (1.0 + linalg::frobenius(c.dm.s())).powi(2));
    }

    #[test]
    fn s_ignores_basis_change(c in cases()) {
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let cmat = generate::random_matrix(c.sel.dim(), &mut rng);
        prop_assume!(linalg::condition_number(&cmat) < 1e6);
        let s = transform::s_from_columns(&(&c.sel.vectors * cmat), &c.ms, DEFAULT_COND_CAP).unwrap();
        prop_assert!(linalg::max_abs(&(s - c.dm.s())) <= 1e-9);
    }

    #[test]
    fn selected_vectors_are_fixed_points_of_the_lift(c in cases()) {
        for i in 0..c.sel.dim() {
            let psi = c.sel.vector(i);
            let back = spaces::retrieve_full_vector(&c.ms.p_part(&psi), &c.dm).unwrap();
            prop_assert!((back - &psi).norm() <= 1e-10);
            prop_assert!(effective::check_membership(&psi, &c.dm).is_ok());
        }
    }

    #[test]
    fn second_type_is_hermitian_and_matches_matrix_elements(c in cases()) {
        let st = effective::second_type(&c.o, &c.dm).unwrap();
        prop_assert!(st.hermiticity_defect() <= 1e-12 * scale(&c.o));
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let d = c.sel.dim();
        let a = generate::random_vector(d, &mut rng);
        let b = generate::random_vector(d, &mut rng);
        let psi = &c.sel.vectors * a;
        let phi = &c.sel.vectors * b;
        let full = psi.dotc(&(c.o.matrix() * &phi));
        let reduced = effective::matrix_element(&psi, &phi, &st, &c.dm).unwrap();
        prop_assert!((full - reduced).norm() <= 1e-9 * (1.0 + full.norm()) * psi.norm() * phi.norm());
        let expect = effective::expectation_second_type(&st, &psi, &c.dm).unwrap();
        let direct = psi.dotc(&(c.o.matrix() * &psi)).re / psi.norm_squared();
        prop_assert!((expect - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn spectral_route_agrees_with_first_type(c in cases()) {
        let eo = effective::first_type(&c.o, &c.dm).unwrap();
        let sr = effective::spectral_reconstruct(&c.sel, &c.ms).unwrap();
        prop_assert!(linalg::max_abs(&(sr - &eo.matrix)) <= 1e-9 * scale(&c.o));
    }

    #[test]
    fn enumeration_is_sorted_and_bounded(c in cases()) {
        let found = spaces::enumerate_model_spaces(&c.sel, DEFAULT_COND_CAP).unwrap();
        let total = (0..c.sel.dim()).fold(1usize, |acc, i| acc * (c.o.dim() - i) / (i + 1));
        prop_assert!(!found.is_empty() && found.len() <= total);
        prop_assert!(found.windows(2).all(|w| w[0].1 <= w[1].1));
        let consistent = found
            .iter()
            .all(|(ms, cond)| (spaces::projection_condition(&c.sel.vectors, ms) - cond).abs() <= 1e-12 * cond);
        prop_assert!(consistent);
    }

    #[test]
    fn any_two_model_spaces_are_similar(c in cases()) {
        let found = spaces::enumerate_model_spaces(&c.sel, 1e6).unwrap_or_default();
        prop_assume!(found.len() >= 2);
        let eo = effective::first_type(&c.o, &c.dm).unwrap();
        let other = found.iter().map(|f| &f.0).find(|ms| **ms != c.ms).unwrap();
        let dm2 = transform::construct_s_direct(&c.sel, other).unwrap();
        prop_assume!(transform::is_decoupled(&c.o, &dm2).unwrap());
        let eo2 = effective::first_type(&c.o, &dm2).unwrap();
        let eq = effective::equivalence_transform(&eo, &eo2, &c.sel).unwrap();
        let bound = 1e-9 * (1.0 + linalg::frobenius(&eo.matrix)) * linalg::condition_number(&eq.t);
        prop_assert!(eq.deviation <= bound, "deviation {:e} bound {:e}", eq.deviation, bound);
    }

    #[test]
    fn matrix_and_s_files_round_trip_exactly(c in cases()) {
        let text = io::format_matrix(c.o.matrix(), &["seeded".to_string()]);
        let back = io::parse_matrix(&text, true).unwrap();
        prop_assert_eq!(&back.matrix, c.o.matrix());
        let s_text = io::format_decoupling_map(&c.dm);
        let dm = io::parse_decoupling_map(&s_text, None).unwrap();
        prop_assert_eq!(dm.s(), c.dm.s());
        prop_assert_eq!(dm.model_space(), &c.ms);
    }

    #[test]
    fn worst_fold_is_order_independent(values in prop::collection::vec((0.0f64..2.0, 1e-3f64..1.0), 1..12)) {
        let checks: Vec<Check> = values.iter().map(|&(r, t)| Check::at_most("x", r, t)).collect();
        let fwd = checks.iter().cloned().reduce(Check::worst).unwrap();
        let rev = checks.iter().rev().cloned().reduce(Check::worst).unwrap();
        prop_assert_eq!(&fwd, &rev);
        prop_assert_eq!(fwd.passed, checks.iter().all(|c| c.passed));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn common_s_decouples_every_member(seed in any::<u64>(), n in 4usize..=8) {
        let params = ProblemParams { family_size: Some(3), ..ProblemParams::default() };
        let members = generate::generate(&ProblemSpec::new(ProblemKind::CommutingFamily, n, seed).with_params(params))
            .and_then(Generated::into_family)
            .unwrap();
        let cs = observables::verify_commuting(members).unwrap();
        let basis = observables::simultaneous_eigenbasis(&cs).unwrap();
        let labels: Vec<usize> = (1..=n / 2).collect();
        let (ms, _) = spaces::suggest_model_space(&basis.select(&labels).unwrap(), DEFAULT_COND_CAP).unwrap();
        let dm = observables::common_s_with_basis(&cs, &basis, &labels, &ms).unwrap();
        for m in cs.members() {
            prop_assert!(transform::decoupling_residual(m, &dm).unwrap() <= transform::decoupling_tolerance(m));
        }
        let set = observables::effective_set(&cs, &dm).unwrap();
        prop_assert!(set.max_commutator() <= 1e-9);
    }

    #[test]
    fn non_hermitian_input_is_rejected(seed in any::<u64>(), n in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = generate::random_matrix(n, &mut rng);
        m = (&m + m.adjoint()).scale(0.5);
        m[(0, n - 1)] += c(1.0, 0.0);
        let rejected = matches!(spaces::validate_hermitian(m), Err(Error::NotHermitian { .. }));
        prop_assert!(rejected);
    }
}

#[test]
fn bad_index_sets_are_rejected() {
    let o = ObservableMatrix::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
    let es = spaces::eigendecompose(&o).unwrap();
    assert!(matches!(
        spaces::select_eigenvectors(&es, &[3]),
        Err(Error::IndexOutOfRange { index: 3, len: 2 })
    ));
    assert!(matches!(spaces::select_eigenvectors(&es, &[1, 1]), Err(Error::DuplicateIndex(1))));
    assert!(ModelSpace::new(2, &[0]).is_err());
}

#[test]
fn singular_projection_is_reported() {
    // Eigenvectors of a diagonal matrix are basis vectors, so K must equal J.
    let o = ObservableMatrix::from_real_rows(3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0]).unwrap();
    let sel = spaces::select_eigenvectors(&spaces::eigendecompose(&o).unwrap(), &[1]).unwrap();
    let ms = ModelSpace::new(3, &[2]).unwrap();
    assert!(matches!(
        transform::construct_s_direct(&sel, &ms),
        Err(Error::SingularProjection { .. })
    ));
    let found = spaces::enumerate_model_spaces(&sel, DEFAULT_COND_CAP).unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].0.labels(), vec![1]);
}
