//! Heat kernels attached to elliptic quadratic forms in four variables over
//! the p-adic numbers.
//!
//! The library provides exact finite-precision arithmetic in `Q_p` and
//! `Q_p^4`, the diagonal forms `f` and `f*` with their level-set geometry,
//! two independent evaluation routes for the ultrametric heat kernel
//! `Z(x, t)` and the operators `f(d, gamma)` applied to it, solvers for the
//! associated parabolic Cauchy problems (constant coefficients, and variable
//! coefficients via successive approximations), and simulation of the Markov
//! process whose transition density is `Z`.
//!
//! Everything numeric carries a certified error bound: values are returned
//! as `(value, bound)` pairs, never bare floats, and the exact parts
//! (valuations, Haar volumes, level-set masses) are computed in integer or
//! rational arithmetic.
//!
//! The crate is `no_std`-compatible (`alloc` required); disable the default
//! `std` feature for embedded use. Float transcendentals fall back to `libm`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cauchy;
pub mod error;
pub(crate) mod fmath;
pub mod kernel;
pub mod markov;
pub mod numerics;
pub mod padic;
pub mod parametrix;
pub mod qform;
pub mod radial;

pub use error::{Error, Result};
