//! Sparse recovery with partially known support.
//!
//! The central object is the convex program
//!
//! ```text
//! min_b  1/2 ||y - A b||_2^2  +  gamma ||b_{T^c}||_1
//! ```
//!
//! where `T` is a prior guess of the support of the signal behind the
//! measurements `y = A x + w`. Coordinates in `T` are free; everything else
//! pays an l1 penalty. With `T` empty this is plain basis pursuit denoising.
//!
//! The crate provides:
//!
//! * [`model`] — random sensing matrices, support partitions, signals and
//!   noisy measurements, all deterministically seeded;
//! * [`solver`] — an accelerated proximal-gradient solver for the program
//!   above, its support-restricted variant, and the genie-aided least squares
//!   estimate, with a KKT-based optimality certificate;
//! * [`bounds`] — computable l-infinity / l2 reconstruction-error bounds, the
//!   sufficient condition under which the penalized solution stays on the
//!   oracle column set, the critical penalty weight `gamma*`, and exact
//!   small-scale restricted isometry / orthogonality constants;
//! * [`harness`] — a Monte Carlo sweep over (n, |Delta|, |Delta_e|) that
//!   averages errors and bounds over trials and writes CSV / plot data,
//!   byte-reproducibly for a fixed seed.

pub mod bounds;
pub mod error;
pub mod harness;
mod linalg;
pub mod model;
pub mod solver;

pub use error::{Error, Result};
