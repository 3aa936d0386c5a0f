//! Functional models and cascade products of linear systems over perturbed-disk
//! boundary curves C = {z + eps*z^2 : |z| = 1}, |eps| < 1/2.
//!
//! The crate is organized bottom-up:
//! - [`curve`], [`field`], [`weight`], [`grid`], [`outer`]: boundary geometry,
//!   truncated Laurent function fields, weighted inner products, Riesz (Smirnov)
//!   projections and scalar outer factorization;
//! - [`schur`]: weighted Schur-class functions and n-indexed families of factors;
//! - [`model`]: the functional n-model, its projection algebra, and the model system;
//! - [`system`]: conservative curved systems, the cascade product, similarity;
//! - [`factorization`]: regular factorizations vs. invariant subspaces;
//! - [`fixtures`]: the closed-form worked examples used as pinned test data;
//! - [`io`]: JSON/CSV interchange used by the CLI.

pub mod config;
pub mod curve;
pub mod error;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod outer;
pub mod weight;

pub mod schur;

pub mod model;

pub mod system;

pub mod factorization;

pub mod fixtures;

pub mod io;

pub use error::Error;
