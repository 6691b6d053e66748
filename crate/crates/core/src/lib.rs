//! Graph approximations, dynamically invariant energy forms and Laplacians on
//! gasket-like Julia sets of the rational family `R(z) = z^n + lambda / z^m`.
//!
//! The crate is organised bottom-up:
//!
//! * [`rational_map`] evaluates the map, finds critical points and classifies
//!   critical orbits.
//! * [`preimage`] solves `R(z) = w` for all `N = n + m` branches.
//! * [`cell_complex`] builds the level graphs `V_m`, `Γ_m` combinatorially from a
//!   [`GluingTable`] and realises `R` as the address shift.
//! * [`geometry`] embeds the level graphs in the plane, infers gluing tables from
//!   numerics and renders escape-time images.
//! * [`dirichlet_form`] computes graph energies, harmonic extensions and the
//!   dynamical energy identities.
//! * [`renormalization`] solves the three-tile renormalization problem via
//!   Δ–Y network reduction.
//! * [`spectrum`] assembles stiffness/mass pairs and solves the eigenproblems.
//!
//! Data-parallel loops (pixel rows, batches of preimage solves, grid scans)
//! go through [`exec`], which uses rayon when the `parallel` feature is on.

// index loops mirror the formulas; `!(x > 0.0)` also rejects NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cell_complex;
pub mod dirichlet_form;
mod error;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod preimage;
pub mod rational_map;
pub mod renormalization;
pub mod spectrum;

pub use cell_complex::{GluingTable, LevelGraph};
pub use dirichlet_form::{ConductanceModel, EnergyValue};
pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{EmbeddedLevel, RenderConfig};
pub use preimage::PreimageSet;
pub use rational_map::{ClassificationReport, Extended, MapSpec, OrbitAnalysis};
pub use renormalization::{RenormSolution, TriangleNetwork};
pub use spectrum::{LaplacianPair, SpectralReport, SpectrumKind, VertexMeasure};

pub use num_complex::Complex64;
