//! Numerical calculus for pseudo-differential and Fourier integral operators
//! whose symbols obey product-type (SG) estimates in position and frequency.
//!
//! The crate provides:
//!
//! - truncated Taylor jets with exact arithmetic for derivative bookkeeping
//!   ([`jet`]);
//! - uniform centered grids with a unitary FFT and smooth test inputs
//!   ([`grid`]);
//! - handles for symbols, amplitudes, phase functions, and weights, with
//!   combinators that propagate both point values and jets ([`handle`]);
//! - probes that check weight moderation, symbol seminorm bounds, and phase
//!   admissibility numerically ([`weights`], [`symbols`], [`phases`]);
//! - quadrature application of the four operator kinds and kernel
//!   evaluation ([`operators`]);
//! - the symbolic calculus: composition expansions, adjoints, parametrices,
//!   and conjugation formulas ([`calculus`]);
//! - verification utilities: operator norm estimates, Schur-type kernel
//!   bounds, and remainder decay fits ([`verify`]);
//! - a preset registry, configuration parsing, experiment reports, and the
//!   acceptance suite backing the command line tool ([`presets`],
//!   [`config`], [`experiment`], [`acceptance`]).
//!
//! Everything is deterministic: random probes use seeded generators and
//! reports serialize with a fixed field order.

pub mod acceptance;
pub mod calculus;
pub mod error;
pub mod grid;
pub mod handle;
pub mod jet;
pub mod operators;
pub mod phases;
pub mod presets;
pub mod symbols;
pub mod verify;
pub mod weights;
