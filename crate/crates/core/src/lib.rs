//! Calculus of Hörmander vector fields in two horizontal directions:
//! exact symbolic identities for the intrinsic curvature of level sets,
//! finite-difference sub-Laplacians, a semilinear system solver, spectral
//! stability certificates and diagnostics for one-dimensional symmetry.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod polynomial;
pub mod solver;
pub mod stability;
pub mod symcalc;

pub use calculus::{geometric_report, GeometricReport, JetSample};
pub use error::{Error, Result};
pub use fields::{Frame, FrameKind, VectorField};
pub use grid::{assemble_sublaplacian, Grid, GridFunction, NormKind, SparseOperator};
pub use polynomial::Polynomial;
pub use solver::{solve_semilinear, NonlinearSystem, SolveOptions, SolveResult};
pub use stability::{EigenOptions, InequalityReport, StabilityCertificate};
