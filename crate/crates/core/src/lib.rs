//! hp boundary elements for the 3D hypersingular operator together with
//! additive Schwarz preconditioners that are robust in `h` and `p`.
//!
//! The crate is organized bottom-up: polynomial families and quadrature,
//! the hierarchical reference element, surface meshes with newest vertex
//! bisection, the global dof map, Galerkin assembly, preconditioners,
//! Krylov/spectral tools and finally the experiment drivers.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod error;
pub mod experiments;
pub mod mesh;
pub mod operator;
pub mod polynomials;
pub mod precond;
pub mod quadrature;
pub mod ref_element;
pub mod singular;
pub mod solvers;
pub mod space;

pub use error::{Error, Result};
