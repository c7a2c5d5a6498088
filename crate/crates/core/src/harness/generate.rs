//! Seeded problem generators.
//!
//! Streams come from `ChaCha8Rng::seed_from_u64(seed)`; the same spec always
//! yields bit-identical matrices. Tests rely on properties of the output,
//! never on particular random values.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::spaces::ObservableMatrix;

/// Recorded in reports so runs can be reproduced.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.3/seed_from_u64";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    RandomHermitian,
    PlantedSpectrum,
    TridiagonalChain,
    CommutingFamily,
    /// Diagonal-dominant matrix whose first `model_dim` basis states lie at
    /// least `gap` below the rest, with off-diagonal couplings of magnitude
    /// at most `coupling`.
    GapSeparated,
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_hermitian" => Ok(ProblemKind::RandomHermitian),
            "planted_spectrum" => Ok(ProblemKind::PlantedSpectrum),
            "tridiagonal_chain" => Ok(ProblemKind::TridiagonalChain),
            "commuting_family" => Ok(ProblemKind::CommutingFamily),
            "gap_separated" => Ok(ProblemKind::GapSeparated),
            other => Err(Error::InvalidSpec(format!("unknown kind {other:?}"))),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::RandomHermitian => "random_hermitian",
            ProblemKind::PlantedSpectrum => "planted_spectrum",
            ProblemKind::TridiagonalChain => "tridiagonal_chain",
            ProblemKind::CommutingFamily => "commuting_family",
            ProblemKind::GapSeparated => "gap_separated",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProblemParams {
    pub gap: Option<f64>,
    pub coupling: Option<f64>,
    pub family_size: Option<usize>,
    pub spectrum: Option<Vec<f64>>,
    pub model_dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dim: usize,
    pub seed: u64,
    pub params: ProblemParams,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, dim: usize, seed: u64) -> Self {
        ProblemSpec {
            kind,
            dim,
            seed,
            params: ProblemParams::default(),
        }
    }

    pub fn with_params(mut self, params: ProblemParams) -> Self {
        self.params = params;
        self
    }
}

#[derive(Clone, Debug)]
pub enum Generated {
    Single {
        matrix: ObservableMatrix,
        /// Eigenvalues planted by construction, ascending, when known.
        planted: Option<Vec<f64>>,
    },
    Family {
        members: Vec<ObservableMatrix>,
        /// Planted eigenvalues per member, in shared-eigenvector order.
        planted: Vec<Vec<f64>>,
    },
}

impl Generated {
    pub fn into_single(self) -> Result<ObservableMatrix> {
        match self {
            Generated::Single { matrix, .. } => Ok(matrix),
            Generated::Family { .. } => Err(Error::InvalidSpec("expected a single matrix".into())),
        }
    }

    pub fn into_family(self) -> Result<Vec<ObservableMatrix>> {
        match self {
            Generated::Family { members, .. } => Ok(members),
            Generated::Single { .. } => Err(Error::InvalidSpec("expected a family".into())),
        }
    }
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> num_complex::Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    linalg::c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn gaussian_matrix(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    // Filled row by row so the stream order is explicit.
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = complex_gaussian(rng);
        }
    }
    m
}

/// Haar-distributed unitary from the QR of a complex Gaussian matrix, with
/// the phases of `R`'s diagonal folded into `Q`.
pub fn haar_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let qr = gaussian_matrix(n, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { linalg::ONE };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

/// `V diag(values) V†`, made exactly Hermitian.
pub fn planted(v: &CMatrix, values: &[f64]) -> Result<ObservableMatrix> {
    let lambda = CMatrix::from_diagonal(&CVector::from_iterator(
        values.len(),
        values.iter().map(|&e| linalg::c(e, 0.0)),
    ));
    let m = v * lambda * v.adjoint();
    ObservableMatrix::new((&m + m.adjoint()).scale(0.5))
}

fn uniform_sorted(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn validate(spec: &ProblemSpec) -> Result<()> {
    let p = &spec.params;
    if spec.dim < 2 {
        return Err(Error::InvalidSpec(format!("dim must be at least 2, got {}", spec.dim)));
    }
    if let Some(g) = p.gap {
        if !(g > 0.0) {
            return Err(Error::InvalidSpec(format!("gap must be positive, got {g}")));
        }
    }
    if let Some(t) = p.coupling {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidSpec(format!("coupling must be finite and non-negative, got {t}")));
        }
    }
    if p.family_size == Some(0) {
        return Err(Error::InvalidSpec("family size must be at least 1".into()));
    }
    if let Some(s) = &p.spectrum {
        if s.len() != spec.dim || s.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "planted spectrum needs {} finite values, got {}",
                spec.dim,
                s.len()
            )));
        }
    }
    if spec.kind == ProblemKind::GapSeparated {
        match p.model_dim {
            Some(d) if d >= 1 && d < spec.dim => {}
            other => {
                return Err(Error::InvalidSpec(format!(
                    "gap_separated needs 1 <= model_dim < dim, got {other:?}"
                )))
            }
        }
    }
    Ok(())
}

pub fn generate(spec: &ProblemSpec) -> Result<Generated> {
    validate(spec)?;
    let n = spec.dim;
    let p = &spec.params;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        ProblemKind::RandomHermitian => {
            let a = gaussian_matrix(n, &mut rng);
            let matrix = ObservableMatrix::new((&a + a.adjoint()).scale(0.5))?;
            Ok(Generated::Single { matrix, planted: None })
        }
        ProblemKind::PlantedSpectrum => {
            let values = match &p.spectrum {
                Some(s) => s.clone(),
                None => uniform_sorted(n, -5.0, 5.0, &mut rng),
            };
            let v = haar_unitary(n, &mut rng);
            let matrix = planted(&v, &values)?;
            let mut sorted = values;
            sorted.sort_by(f64::total_cmp);
            Ok(Generated::Single {
                matrix,
                planted: Some(sorted),
            })
        }
        ProblemKind::TridiagonalChain => {
            let t = p.coupling.unwrap_or(0.1);
            let m = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    linalg::c((i + 1) as f64, 0.0)
                } else if i.abs_diff(j) == 1 {
                    linalg::c(t, 0.0)
                } else {
                    linalg::ZERO
                }
            });
            Ok(Generated::Single {
                matrix: ObservableMatrix::new(m)?,
                planted: None,
            })
        }
        ProblemKind::CommutingFamily => {
            let c = p.family_size.unwrap_or(3);
            let v = haar_unitary(n, &mut rng);
            let mut members = Vec::with_capacity(c);
            let mut values = Vec::with_capacity(c);
            for _ in 0..c {
                let lambda: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
                members.push(planted(&v, &lambda)?);
                values.push(lambda);
            }
            Ok(Generated::Family {
                members,
                planted: values,
            })
        }
        ProblemKind::GapSeparated => {
            let d = p.model_dim.expect("validated");
            let gap = p.gap.unwrap_or(1.0);
            let t = p.coupling.unwrap_or(0.1);
            let mut m = CMatrix::zeros(n, n);
            for i in 0..n {
                let base = if i < d { 0.0 } else { 1.0 + gap };
                m[(i, i)] = linalg::c(base + rng.gen_range(0.0..1.0), 0.0);
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let mag = t * rng.gen_range(0.0..1.0);
                    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                    let z = num_complex::Complex64::from_polar(mag, phase);
                    m[(i, j)] = z;
                    m[(j, i)] = z.conj();
                }
            }
            Ok(Generated::Single {
                matrix: ObservableMatrix::new(m)?,
                planted: None,
            })
        }
    }
}

/// Random complex vector with standard normal entries.
pub fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> CVector {
    CVector::from_iterator(n, (0..n).map(|_| complex_gaussian(rng)))
}

/// Random complex square matrix with standard normal entries.
pub fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    gaussian_matrix(n, rng)
}
