//! Comparison methods: bitwise branch-and-prune from the low end, and
//! exhaustive completion of `p`'s low bits followed by the lattice oracle.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

use crate::cnfenc::{Component, Leak};
use crate::coppersmith::{recover_factor_lsb, LsbProblem, OracleOptions, OracleOutcome};
use crate::numtheory::mod_inverse;
use crate::pipeline::{threshold_bits, verify_factors, PipelineError};
use crate::Nat;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("frontier reached {count} partial keys at depth {level}")]
    BranchExplosion { count: usize, level: u64, peak_frontier: usize },
    #[error("no partial key survives depth {level}")]
    NoSolution { level: u64, peak_frontier: usize },
    #[error("{unknown} unknown low bits exceed the enumeration cap of {cap}")]
    Infeasible { unknown: u64, cap: u64 },
    #[error("all {oracle_calls} low-bit completions refuted")]
    Exhausted { oracle_calls: u64, oracle_time: Duration },
    #[error("timed out")]
    Timeout { peak_frontier: usize, levels_completed: u64, oracle_calls: u64, oracle_time: Duration },
    #[error(transparent)]
    Threshold(#[from] PipelineError),
}

#[derive(Debug, Clone)]
pub struct BnpConfig {
    /// Carry `d` along via `3d + 2(p + q) = 2N + 3`.
    pub track_d: bool,
    pub branch_limit: usize,
    pub deadline: Option<Instant>,
}

impl Default for BnpConfig {
    fn default() -> Self {
        BnpConfig { track_d: false, branch_limit: 1 << 22, deadline: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BnpOutcome {
    pub p: Nat,
    pub q: Nat,
    pub peak_frontier: usize,
    pub levels_completed: u64,
    /// `frontier_sizes[i - 1]` is the number of partial keys at depth `i`.
    pub frontier_sizes: Vec<usize>,
}

/// Low bits of `p`, `q` (and `d`) consistent with everything checked so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partial {
    pub p_low: Nat,
    pub q_low: Nat,
    /// Known modulo `2^(i + 1)` at depth `i`.
    pub d_low: Option<Nat>,
}

type LeakTable = BTreeMap<(Component, u64), bool>;

fn leak_table(leaks: &[Leak]) -> LeakTable {
    leaks.iter().map(|l| ((l.target, l.index), l.value)).collect()
}

fn allowed(table: &LeakTable, target: Component, index: u64, value: bool) -> bool {
    table.get(&(target, index)).map_or(true, |&v| v == value)
}

struct DTracker {
    /// `2N + 3`.
    rhs: Nat,
    /// Inverse of 3 modulo `2^(k + 1)`.
    inv3: Nat,
}

impl DTracker {
    fn new(n: &Nat, k: u64) -> Self {
        let modulus = BigUint::one() << (k + 1);
        let inv3 = mod_inverse(&BigUint::from(3u32), &modulus).expect("3 is odd");
        DTracker { rhs: n * 2u32 + 3u32, inv3 }
    }

    /// `d mod 2^(i + 1)` from `p, q mod 2^i`.
    fn d_low(&self, p: &Nat, q: &Nat, i: u64) -> Nat {
        let modulus = BigUint::one() << (i + 1);
        let two_pq = ((p + q) << 1u32) % &modulus;
        let rhs = &self.rhs % &modulus;
        let diff = (rhs + &modulus - two_pq) % &modulus;
        (diff * &self.inv3) % &modulus
    }

    /// Checks `d` leaks at indices `from..=i`.
    fn consistent(table: &LeakTable, d: &Nat, from: u64, i: u64) -> bool {
        (from..=i).all(|j| allowed(table, Component::D, j, d.bit(j)))
    }
}

/// Low-to-high reconstruction of `(p, q)` from leaked bits.
pub fn branch_and_prune(n: &Nat, k: u64, leaks: &[Leak], config: &BnpConfig) -> Result<BnpOutcome, BaselineError> {
    let table = leak_table(leaks);
    let tracker = config.track_d.then(|| DTracker::new(n, k));
    let one = BigUint::one();

    let mut frontier: Vec<Partial> = Vec::new();
    if allowed(&table, Component::P, 0, true) && allowed(&table, Component::Q, 0, true) {
        let d_low = tracker.as_ref().map(|t| t.d_low(&one, &one, 1));
        let keep = d_low.as_ref().map_or(true, |d| DTracker::consistent(&table, d, 0, 1));
        if keep {
            frontier.push(Partial { p_low: one.clone(), q_low: one.clone(), d_low });
        }
    }
    let mut sizes = vec![frontier.len()];
    let mut peak = frontier.len();
    if frontier.is_empty() {
        return Err(BaselineError::NoSolution { level: 1, peak_frontier: 0 });
    }

    for i in 1..k {
        if config.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(BaselineError::Timeout {
                peak_frontier: peak,
                levels_completed: i,
                oracle_calls: 0,
                oracle_time: Duration::ZERO,
            });
        }
        let bit_i = BigUint::one() << i;
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for part in &frontier {
            // Bit i of p*q is (p_i + q_i + carry) mod 2 where carry is bit i of p_low*q_low.
            let carry = (&part.p_low * &part.q_low).bit(i);
            let parity = n.bit(i) ^ carry;
            for pi in [false, true] {
                let qi = pi ^ parity;
                if !allowed(&table, Component::P, i, pi) || !allowed(&table, Component::Q, i, qi) {
                    continue;
                }
                let p_low = if pi { &part.p_low | &bit_i } else { part.p_low.clone() };
                let q_low = if qi { &part.q_low | &bit_i } else { part.q_low.clone() };
                let d_low = match &tracker {
                    None => None,
                    Some(t) => {
                        let d = t.d_low(&p_low, &q_low, i + 1);
                        if !DTracker::consistent(&table, &d, i + 1, i + 1) {
                            continue;
                        }
                        Some(d)
                    }
                };
                next.push(Partial { p_low, q_low, d_low });
            }
        }
        if next.len() > config.branch_limit {
            return Err(BaselineError::BranchExplosion { count: next.len(), level: i + 1, peak_frontier: peak });
        }
        if next.is_empty() {
            return Err(BaselineError::NoSolution { level: i + 1, peak_frontier: peak });
        }
        peak = peak.max(next.len());
        sizes.push(next.len());
        frontier = next;
    }

    for part in frontier {
        let (p, q) = if part.p_low <= part.q_low { (part.p_low, part.q_low) } else { (part.q_low, part.p_low) };
        if verify_factors(n, &p, &q) {
            return Ok(BnpOutcome { p, q, peak_frontier: peak, levels_completed: k, frontier_sizes: sizes });
        }
    }
    Err(BaselineError::NoSolution { level: k, peak_frontier: peak })
}

/// Default limit on enumerated low bits.
pub const BRUTE_FORCE_CAP: u64 = 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteOutcome {
    pub p: Nat,
    pub q: Nat,
    pub oracle_calls: u64,
    pub oracle_time: Duration,
}

/// Tries every completion of the unleaked bits among `p`'s low `t` bits in
/// ascending order, running the lattice oracle on each.
pub fn brute_force_coppersmith(
    n: &Nat,
    k: u64,
    leaks: &[Leak],
    theta: f64,
    cap: u64,
    deadline: Option<Instant>,
) -> Result<BruteOutcome, BaselineError> {
    let t = threshold_bits(k, n, theta)?;
    let table = leak_table(leaks);
    let mut fixed = BigUint::one();
    let mut unknown = Vec::new();
    if !allowed(&table, Component::P, 0, true) {
        return Err(BaselineError::Exhausted { oracle_calls: 0, oracle_time: Duration::ZERO });
    }
    for i in 1..t {
        match table.get(&(Component::P, i)) {
            Some(true) => fixed.set_bit(i, true),
            Some(false) => {}
            None => unknown.push(i),
        }
    }
    let u = unknown.len() as u64;
    if u > cap {
        return Err(BaselineError::Infeasible { unknown: u, cap });
    }
    let options = OracleOptions::default();
    let mut calls = 0u64;
    let mut oracle_time = Duration::ZERO;
    for j in 0u64..1 << u {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(BaselineError::Timeout { peak_frontier: 0, levels_completed: 0, oracle_calls: calls, oracle_time });
        }
        let mut p_check = fixed.clone();
        for (r, &pos) in unknown.iter().enumerate() {
            if (j >> r) & 1 == 1 {
                p_check.set_bit(pos, true);
            }
        }
        let problem = LsbProblem::new(n.clone(), t, p_check).map_err(PipelineError::from)?;
        let started = Instant::now();
        let outcome = recover_factor_lsb(&problem, &options).map_err(PipelineError::from)?;
        oracle_time += started.elapsed();
        calls += 1;
        if let OracleOutcome::Factors { p, q } = outcome {
            return Ok(BruteOutcome { p, q, oracle_calls: calls, oracle_time });
        }
    }
    Err(BaselineError::Exhausted { oracle_calls: calls, oracle_time })
}

/// Zero-based bit values of `n` as leaks of `target` at the given indices.
pub fn leaks_from(target: Component, value: &Nat, indices: impl IntoIterator<Item = u64>) -> Vec<Leak> {
    indices.into_iter().map(|i| Leak::new(target, i, value.bit(i))).collect()
}
