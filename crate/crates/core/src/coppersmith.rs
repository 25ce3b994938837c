//! Factor recovery from partial knowledge of one prime.
//!
//! The high-bits variant builds the 4-dimensional lattice of
//! `{N, f, xf, x^2 f}` with `f = p_hat + x`. The low-bits variant, which the
//! solver callback uses, makes `2^m x + p_check` monic modulo `N` and reduces
//! the 5-dimensional lattice of `{N^2, N f, f^2, x f^2, x^2 f^2}` with
//! `X = floor(floor(N^(1/5)) / 4)`.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::lattice::{lll_reduce, Basis, LatticeError};
use crate::numtheory::{gcd, inth_root, mod_inverse};
use crate::polyint::{poly_to_row, row_to_poly, PolyError};
use crate::{Int, IntPoly, LatticeBasis, Nat};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("modulus too small: the root bound X is zero")]
    BoundTooSmall,
    #[error("invalid problem: {0}")]
    InvalidProblem(&'static str),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsbProblem {
    pub n: Nat,
    /// `p` with its unknown low part zeroed.
    pub p_hat: Nat,
    /// Bound on the unknown low part.
    pub x_bound: Nat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LsbProblem {
    pub n: Nat,
    /// Number of known low bits.
    pub m: u64,
    /// Value of the known low bits.
    pub p_check: Nat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleOutcome {
    /// `p * q = n` with `1 < p <= q < n`.
    Factors { p: Nat, q: Nat },
    NoFactorFound { roots_tried: usize },
}

impl OracleOutcome {
    pub fn is_factors(&self) -> bool {
        matches!(self, OracleOutcome::Factors { .. })
    }
}

/// Knobs shared by both oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleOptions {
    /// Root every reduced row instead of only the first.
    pub all_rows: bool,
    pub delta: (i64, i64),
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { all_rows: false, delta: crate::lattice::DEFAULT_DELTA }
    }
}

fn int(n: &Nat) -> Int {
    BigInt::from(n.clone())
}

fn scaled_rows(polys: &[IntPoly], x_bound: &Int, width: usize) -> Vec<Vec<Int>> {
    polys.iter().map(|p| poly_to_row(p, x_bound, width)).collect()
}

impl MsbProblem {
    pub fn new(n: Nat, p_hat: Nat, x_bound: Nat) -> Result<Self, OracleError> {
        if p_hat.is_zero() || p_hat >= n {
            return Err(OracleError::InvalidProblem("need 0 < p_hat < N"));
        }
        if x_bound.is_zero() {
            return Err(OracleError::BoundTooSmall);
        }
        Ok(MsbProblem { n, p_hat, x_bound })
    }
}

impl LsbProblem {
    pub fn new(n: Nat, m: u64, p_check: Nat) -> Result<Self, OracleError> {
        if n.is_even() {
            return Err(OracleError::InvalidProblem("N must be odd"));
        }
        if p_check.is_even() {
            return Err(OracleError::InvalidProblem("known low bits of an odd prime must be odd"));
        }
        if p_check.bits() > m {
            return Err(OracleError::InvalidProblem("p_check must be below 2^m"));
        }
        Ok(LsbProblem { n, m, p_check })
    }
}

/// Rows `N, f, xf, x^2 f` scaled by powers of `X`, with `f = p_hat + x`.
pub fn build_msb_basis(prob: &MsbProblem, opts: &OracleOptions) -> Result<LatticeBasis, OracleError> {
    let n = int(&prob.n);
    let x = int(&prob.x_bound);
    let f = IntPoly::monic_linear(int(&prob.p_hat));
    let polys = [IntPoly::constant(n), f.clone(), f.shift(1), f.shift(2)];
    Ok(Basis::with_delta(scaled_rows(&polys, &x, 4), opts.delta.0, opts.delta.1)?)
}

/// `X = floor(floor(N^(1/5)) / 4)`.
pub fn lsb_root_bound(n: &Nat) -> Nat {
    inth_root(n, 5) >> 2u32
}

/// The 5-dimensional lattice for the low-bits problem, with its bound `X` and
/// the constant `c = 2^-m p_check mod N` of the monic `f = x + c`.
pub fn build_lsb_basis(prob: &LsbProblem, opts: &OracleOptions) -> Result<(LatticeBasis, Nat, Nat), OracleError> {
    let x_bound = lsb_root_bound(&prob.n);
    if x_bound.is_zero() {
        return Err(OracleError::BoundTooSmall);
    }
    let pow = BigUint::one() << prob.m;
    let inv = mod_inverse(&pow, &prob.n).map_err(|_| OracleError::InvalidProblem("2^m not invertible mod N"))?;
    let c = (inv * &prob.p_check) % &prob.n;

    let n = int(&prob.n);
    let f = IntPoly::monic_linear(int(&c));
    let f2 = f.multiply(&f);
    let polys = [
        IntPoly::constant(&n * &n),
        f.scale(&n),
        f2.clone(),
        f2.shift(1),
        f2.shift(2),
    ];
    let basis = Basis::with_delta(scaled_rows(&polys, &int(&x_bound), 5), opts.delta.0, opts.delta.1)?;
    Ok((basis, x_bound, c))
}

/// Reduces the basis and returns the integer roots within `X` of the first
/// reduced row's polynomial (every row's, with `all_rows`).
pub fn small_roots(basis: &LatticeBasis, x_bound: &Nat, opts: &OracleOptions) -> Result<Vec<Int>, OracleError> {
    let reduced = lll_reduce(basis)?;
    let x = int(x_bound);
    let take = if opts.all_rows { reduced.dim() } else { 1 };
    let mut roots = Vec::new();
    for row in reduced.rows().iter().take(take) {
        let poly = row_to_poly(row, &x)?;
        if poly.is_zero() {
            continue;
        }
        roots.extend(poly.integer_roots(&x));
    }
    roots.sort();
    roots.dedup();
    Ok(roots)
}

fn split_factor(n: &Nat, candidate: &Nat) -> Option<OracleOutcome> {
    let g = gcd(candidate, n);
    if g.is_one() || &g == n || g.is_zero() {
        return None;
    }
    let other = n / &g;
    let (p, q) = if g <= other { (g, other) } else { (other, g) };
    Some(OracleOutcome::Factors { p, q })
}

pub fn recover_factor_msb(prob: &MsbProblem, opts: &OracleOptions) -> Result<OracleOutcome, OracleError> {
    let basis = build_msb_basis(prob, opts)?;
    let roots = small_roots(&basis, &prob.x_bound, opts)?;
    let p_hat = int(&prob.p_hat);
    for root in &roots {
        let candidate = &p_hat + root;
        if candidate.sign() != Sign::Plus {
            continue;
        }
        if let Some(found) = split_factor(&prob.n, candidate.magnitude()) {
            return Ok(found);
        }
    }
    Ok(OracleOutcome::NoFactorFound { roots_tried: roots.len() })
}

/// Completes a prime from its `m` low bits. `NoFactorFound` certifies that no
/// factor of `N` has these low bits and a high part at most `X`.
pub fn recover_factor_lsb(prob: &LsbProblem, opts: &OracleOptions) -> Result<OracleOutcome, OracleError> {
    let (basis, x_bound, _) = build_lsb_basis(prob, opts)?;
    let roots = small_roots(&basis, &x_bound, opts)?;
    let mut tried = 0;
    for root in roots.iter().filter(|r| r.sign() != Sign::Minus) {
        tried += 1;
        let candidate = (root.magnitude() << prob.m) + &prob.p_check;
        if let Some(found) = split_factor(&prob.n, &candidate) {
            return Ok(found);
        }
    }
    Ok(OracleOutcome::NoFactorFound { roots_tried: tried })
}
