//! Structure-preserving finite-difference solver for the modified
//! Hunter–Saxton equation `u_tx + (1/2)(u²)_xx = 2ωu + (1/2)u_x²` on a
//! periodic domain.
//!
//! The integrator conserves the discrete energy and constraint functional
//! exactly (up to solver tolerance), which pins the grid average and yields
//! an a-priori sup-norm bound on the numerical solution. Crate layout:
//!
//! - [`grid`] — periodic grids, stencil operators, discrete norms;
//! - [`spectral`] — circulant symbols, FFT application, Moore–Penrose
//!   pseudo-inverses, dense SVD oracle;
//! - [`invariants`] — energy, constraint functional, sup-norm bound;
//! - [`scheme`] — the conservative midpoint stepper, its fixed-point
//!   solver, and step-size planning;
//! - [`experiments`] — simulation driver, convergence study, blow-up
//!   study with inverse-norm regression;
//! - [`verify`] — oracle gates and inequality property checks;
//! - [`cli`] / [`csv`] — the `mhs` command-line tool and its deterministic
//!   CSV formats.

pub mod cli;
pub mod csv;
pub mod experiments;
pub mod grid;
pub mod invariants;
pub mod scheme;
pub mod spectral;
pub mod verify;
