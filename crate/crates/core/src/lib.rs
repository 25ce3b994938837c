//! Factoring RSA moduli from randomly leaked key bits by running a CDCL SAT
//! solver over a multiplier circuit and calling Coppersmith's lattice method
//! from inside the search.
//!
//! The algebraic layers ([`polyint`], [`lattice`]) are generic over an exact
//! integer scalar; the rest of the crate works with the arbitrary-precision
//! aliases defined here.

use std::fmt::Debug;

use num_integer::Integer;
use num_traits::Signed;

pub mod baselines;
pub mod cnfenc;
pub mod coppersmith;
pub mod harness;
pub mod lattice;
pub mod numtheory;
pub mod pipeline;
pub mod polyint;
pub mod satcore;

/// Exact signed integer usable as a polynomial coefficient or lattice entry.
///
/// Fixed-width types are fine for small tests; they panic on overflow in
/// debug builds and must not be used where entries can exceed their range.
pub trait IntScalar: Integer + Signed + Clone + Debug + From<i64> {}

impl<T: Integer + Signed + Clone + Debug + From<i64>> IntScalar for T {}

/// Non-negative arbitrary-precision integer (moduli, factors, exponents).
pub type Nat = num_bigint::BigUint;
/// Signed arbitrary-precision integer (polynomial coefficients, lattice entries).
pub type Int = num_bigint::BigInt;
pub type IntPoly = polyint::Poly<Int>;
pub type LatticeBasis = lattice::Basis<Int>;

pub use coppersmith::OracleOutcome;
pub use pipeline::{factor, HybridConfig, Method, RunStats};
