//! Iterative solution of the decoupling equation `-s(a + b s) + b⁺ + f s = 0`
//! when eigenvectors are not available.
//!
//! Each sweep solves the Sylvester equation
//!
//! ```text
//! f s_{k+1} - s_{k+1} a = s_k b s_k - b⁺
//! ```
//!
//! for `s_{k+1}`. Both `a` and `f` are Hermitian, so the sweep is diagonalized
//! once up front and every iteration is an elementwise division in the joint
//! eigenbasis. Starting from `s_0 = 0` the iteration follows the small-norm
//! branch, i.e. the decoupling map whose eigenvectors are dominated by their
//! model-space components. Other branches are only reachable through
//! [`crate::transform::construct_s_direct`]. There is no global convergence
//! guarantee; strongly coupled problems may stall or diverge.


use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::spaces::{ModelSpace, ObservableMatrix};
use crate::transform::{DecouplingMap, Provenance};

/// Eigenvalue gap between the P and Q blocks below which a sweep is singular.
pub const SYLVESTER_GAP_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub initial_s: Option<CMatrix>,
    /// Iteration aborts once `|s_k|_F` exceeds this.
    pub divergence_cap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-11,
            max_iter: 500,
            initial_s: None,
            divergence_cap: 1e8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, ms: &ModelSpace) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.divergence_cap > 0.0) {
            return Err(Error::InvalidConfig("divergence_cap must be positive".into()));
        }
        if let Some(s0) = &self.initial_s {
            let want = (ms.complement_dim(), ms.dim());
            if s0.shape() != want {
                return Err(Error::DimensionMismatch(format!(
                    "initial s must be {}x{}, got {}x{}",
                    want.0,
                    want.1,
                    s0.nrows(),
                    s0.ncols()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `|Q Õ P|_F` after this sweep.
    pub residual: f64,
    /// `|s_{k+1} - s_k|_F / max(1, |s_k|_F)`.
    pub step: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl SolverTrace {
    pub fn final_residual(&self) -> Option<f64> {
        self.records.last().map(|r| r.residual)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualHistory {
    pub points: Vec<(usize, f64)>,
    /// Reported only; the iteration is not required to be monotone.
    pub monotone_decreasing: bool,
}

pub fn residual_history(trace: &SolverTrace) -> ResidualHistory {
    let points: Vec<(usize, f64)> = trace.records.iter().map(|r| (r.iteration, r.residual)).collect();
    let monotone_decreasing = points.windows(2).all(|w| w[1].1 <= w[0].1);
    ResidualHistory {
        points,
        monotone_decreasing,
    }
}

/// `f X - X a = C` for Hermitian `a` and `f`, diagonalized once.
struct HermitianSylvester {
    a_vecs: CMatrix,
    a_vals: Vec<f64>,
    f_vecs: CMatrix,
    f_vals: Vec<f64>,
}

impl HermitianSylvester {
    fn new(a: &CMatrix, f: &CMatrix) -> Result<Self> {
        let (a_vals, a_vecs) = linalg::hermitian_eigen(a)?;
        let (f_vals, f_vecs) = linalg::hermitian_eigen(f)?;
        let this = HermitianSylvester {
            a_vecs,
            a_vals,
            f_vecs,
            f_vals,
        };
        let gap = this.gap();
        if gap <= SYLVESTER_GAP_TOL {
            return Err(Error::SylvesterSingular { gap });
        }
        Ok(this)
    }

    fn gap(&self) -> f64 {
        self.f_vals
            .iter()
            .flat_map(|&x| self.a_vals.iter().map(move |&y| (x - y).abs()))
            .fold(f64::INFINITY, f64::min)
    }

    fn solve(&self, rhs: &CMatrix) -> CMatrix {
        let mut y = self.f_vecs.adjoint() * rhs * &self.a_vecs;
        for i in 0..y.nrows() {
            for j in 0..y.ncols() {
                y[(i, j)] /= self.f_vals[i] - self.a_vals[j];
            }
        }
        &self.f_vecs * y * self.a_vecs.adjoint()
    }
}

fn residual(a: &CMatrix, b: &CMatrix, b_dag: &CMatrix, f: &CMatrix, s: &CMatrix) -> f64 {
    let qp = -(s * (a + b * s)) + b_dag + f * s;
    linalg::frobenius(&qp)
}

/// Runs the Sylvester fixed-point iteration until both the relative step and
/// the decoupling residual drop to `cfg.tol`.
pub fn solve_decoupling_fixed_point(
    o: &ObservableMatrix,
    ms: &ModelSpace,
    cfg: &SolverConfig,
) -> Result<(DecouplingMap, SolverTrace)> {
    if o.dim() != ms.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "observable dimension {} vs model space on {}",
            o.dim(),
            ms.total_dim()
        )));
    }
    cfg.validate(ms)?;
    let (a, b, b_dag, f) = ms.blocks(o.matrix());
    let mut s = cfg
        .initial_s
        .clone()
        .unwrap_or_else(|| CMatrix::zeros(ms.complement_dim(), ms.dim()));

    let mut trace = SolverTrace::default();
    if ms.complement_dim() == 0 {
        trace.converged = true;
        let dm = DecouplingMap::with_provenance(
            ms.clone(),
            s,
            Provenance::Iterative {
                iterations: 0,
                residual: 0.0,
            },
        )?;
        return Ok((dm, trace));
    }

    let sweep = HermitianSylvester::new(&a, &f)?;
    let mut best = (f64::INFINITY, s.clone(), 0usize);

    for iteration in 1..=cfg.max_iter {
        let rhs = &s * &b * &s - &b_dag;
        let next = sweep.solve(&rhs);
        let norm = linalg::frobenius(&next);
        if !norm.is_finite() || norm > cfg.divergence_cap {
            return Err(Error::Diverged { iteration, norm });
        }
        let step = linalg::frobenius(&(&next - &s)) / linalg::frobenius(&s).max(1.0);
        let res = residual(&a, &b, &b_dag, &f, &next);
        trace.records.push(IterationRecord {
            iteration,
            residual: res,
            step,
        });
        s = next;
        if res < best.0 {
            best = (res, s.clone(), iteration);
        }
        if step <= cfg.tol && res <= cfg.tol {
            trace.converged = true;
            let dm = DecouplingMap::with_provenance(
                ms.clone(),
                s,
                Provenance::Iterative {
                    iterations: iteration,
                    residual: res,
                },
            )?;
            return Ok((dm, trace));
        }
    }

    let (res, s_best, at) = best;
    let dm = DecouplingMap::with_provenance(
        ms.clone(),
        s_best,
        Provenance::Iterative {
            iterations: at,
            residual: res,
        },
    )?;
    Err(Error::MaxIterExceeded {
        iterations: cfg.max_iter,
        residual: res,
        best: Box::new(dm),
        trace,
    })
}
