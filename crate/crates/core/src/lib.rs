//! Decoupling transformations and effective operators for Hermitian
//! observables restricted to a model space.
//!
//! An `N x N` Hermitian observable `O`, a model space `K` of `d` basis
//! indices and a selection `J` of `d` eigenvectors determine a nilpotent
//! generator `S = QSP` with `e^{-S} O e^{S}` block upper triangular. The
//! `P`-block of the transformed operator reproduces the selected eigenvalues.

pub mod effective;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod observables;
pub mod solver;
pub mod spaces;
pub mod transform;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
pub use spaces::{EigenSelection, Eigensystem, ModelSpace, ObservableMatrix};
pub use transform::DecouplingMap;
