//! The hybrid driver: multiplier CNF plus a solver hook that hands the low
//! bits of `p` to the lattice oracle and blocks the patterns it refutes.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnfenc::{decode_bits, encode_d_equation, encode_factoring, low_mask, add_leak_units, EncodeError, Leak, VarMap};
use crate::coppersmith::{lsb_root_bound, recover_factor_lsb, LsbProblem, OracleError, OracleOptions, OracleOutcome};
use crate::satcore::{self, AssignmentView, FixpointObserver, NoObserver, SolveResult, SolverConfig, SolverError, Verdict};
use crate::Nat;

/// Version tag written into every JSON file.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("theta must lie in (0.5, 1], got {0}")]
    BadTheta(f64),
    #[error("threshold {t} is not below the factor length {k}")]
    ThresholdExceedsK { t: u64, k: u64 },
    #[error("timed out after {:.3} s", .0.wall_time.as_secs_f64())]
    Timeout(Box<RunStats>),
    #[error("the encoding is unsatisfiable: inconsistent leaks or an encoder bug")]
    UnsatEncoding(Box<RunStats>),
    #[error("solver returned factors that do not verify: {p} * {q}")]
    BadFactors { p: Nat, q: Nat },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Solver plus lattice oracle.
    Satcas,
    /// Plain CDCL on the same formula.
    SatOnly,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Satcas => "satcas",
            Method::SatOnly => "sat",
        })
    }
}

#[derive(Debug, Clone)]
pub struct HybridConfig {
    /// Fraction of `p`'s low bits that must be assigned before the oracle runs.
    pub theta: f64,
    pub method: Method,
    pub use_d_encoding: bool,
    pub seed: u64,
    pub time_limit: Option<Duration>,
    pub oracle: OracleOptions,
    /// Base solver settings; `seed` and the deadline are filled in per run.
    pub solver: SolverConfig,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            theta: 0.6,
            method: Method::Satcas,
            use_d_encoding: false,
            seed: 0,
            time_limit: None,
            oracle: OracleOptions::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl HybridConfig {
    pub fn new(method: Method) -> Self {
        HybridConfig { method, ..HybridConfig::default() }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.theta > 0.5 && self.theta <= 1.0 {
            Ok(())
        } else {
            Err(PipelineError::BadTheta(self.theta))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub callback_invocations: u64,
    pub oracle_calls: u64,
    pub memo_hits: u64,
    pub blocking_clauses: u64,
    pub oracle_time: Duration,
    /// Oracle calls where `q`'s low `t` bits were also assigned.
    pub pruning_checked: u64,
    /// ... and where `p_check * q_check = N (mod 2^t)` held.
    pub pruning_consistent: u64,
    /// Threshold used by the hook; `None` when no hook ran.
    pub threshold: Option<u64>,
    pub conflicts: u64,
    pub decisions: u64,
    pub wall_time: Duration,
}

/// Number of low bits of `p` handed to the oracle.
pub fn threshold_bits(k: u64, n: &Nat, theta: f64) -> Result<u64, PipelineError> {
    let x = lsb_root_bound(n);
    if x.is_zero() {
        return Err(OracleError::BoundTooSmall.into());
    }
    let log_x = x.bits() - 1;
    let by_theta = (theta * k as f64).ceil() as u64;
    let t = by_theta.max(k.saturating_sub(log_x));
    if t >= k {
        return Err(PipelineError::ThresholdExceedsK { t, k });
    }
    Ok(t)
}

fn low_value(view: &AssignmentView<'_>, bits: &[u32]) -> Option<Nat> {
    let mut out = BigUint::zero();
    for (i, &v) in bits.iter().enumerate() {
        if view.value(v)? {
            out.set_bit(i as u64, true);
        }
    }
    Some(out)
}

/// Value of `p`'s low `t` bits if all are assigned.
pub fn extract_low_bits(view: &AssignmentView<'_>, map: &VarMap, t: u64) -> Option<Nat> {
    low_value(view, &map.p_bits[..t as usize])
}

/// Clause forbidding exactly the current assignment of `p`'s low `t` bits.
/// Literals run from bit `t - 1` down to bit 0.
pub fn blocking_clause(view: &AssignmentView<'_>, map: &VarMap, t: u64) -> Vec<i32> {
    map.p_bits[..t as usize]
        .iter()
        .rev()
        .map(|&v| {
            let assigned = view.value(v).expect("blocking clause needs every low bit assigned");
            if assigned {
                -(v as i32)
            } else {
                v as i32
            }
        })
        .collect()
}

/// Solver hook running the low-bits oracle.
pub struct CoppersmithHook<'a> {
    map: &'a VarMap,
    n: Nat,
    t: u64,
    options: OracleOptions,
    memo: BTreeSet<Nat>,
    last: Option<Nat>,
    /// Low-bit values refuted by the oracle, in order.
    pub blocked: Vec<Nat>,
    pub stats: RunStats,
}

impl<'a> CoppersmithHook<'a> {
    pub fn new(map: &'a VarMap, t: u64, options: OracleOptions) -> Self {
        CoppersmithHook {
            map,
            n: map.modulus.clone(),
            t,
            options,
            memo: BTreeSet::new(),
            last: None,
            blocked: Vec::new(),
            stats: RunStats { threshold: Some(t), ..RunStats::default() },
        }
    }

    fn block(&mut self, view: &AssignmentView<'_>) -> Verdict<(Nat, Nat)> {
        self.stats.blocking_clauses += 1;
        Verdict::AddClauses(vec![blocking_clause(view, self.map, self.t)])
    }

    fn record_pruning(&mut self, view: &AssignmentView<'_>, p_check: &Nat) {
        if let Some(q_check) = low_value(view, &self.map.q_bits[..self.t as usize]) {
            self.stats.pruning_checked += 1;
            let mask = low_mask(self.t);
            if (p_check * q_check) & &mask == &self.n & &mask {
                self.stats.pruning_consistent += 1;
            }
        }
    }
}

impl FixpointObserver for CoppersmithHook<'_> {
    type Payload = (Nat, Nat);

    fn at_fixpoint(&mut self, view: &AssignmentView<'_>) -> Verdict<(Nat, Nat)> {
        self.stats.callback_invocations += 1;
        let Some(p_check) = extract_low_bits(view, self.map, self.t) else {
            return Verdict::Continue;
        };
        if self.memo.contains(&p_check) {
            self.stats.memo_hits += 1;
            return self.block(view);
        }
        if self.last.as_ref() == Some(&p_check) {
            return Verdict::Continue;
        }
        self.last = Some(p_check.clone());
        self.record_pruning(view, &p_check);
        let problem = match LsbProblem::new(self.n.clone(), self.t, p_check.clone()) {
            Ok(prob) => prob,
            Err(e) => {
                log::warn!("skipping oracle for p_check = {p_check}: {e}");
                return Verdict::Continue;
            }
        };
        let started = Instant::now();
        let outcome = recover_factor_lsb(&problem, &self.options);
        self.stats.oracle_time += started.elapsed();
        self.stats.oracle_calls += 1;
        match outcome {
            Ok(OracleOutcome::Factors { p, q }) => Verdict::Terminate((p, q)),
            Ok(OracleOutcome::NoFactorFound { .. }) => {
                self.blocked.push(p_check.clone());
                self.memo.insert(p_check);
                self.block(view)
            }
            Err(e) => {
                log::warn!("oracle failed for p_check = {p_check}: {e}");
                Verdict::Continue
            }
        }
    }
}

/// True iff `p * q = N` and `1 < p <= q < N`.
pub fn verify_factors(n: &Nat, p: &Nat, q: &Nat) -> bool {
    !p.is_one() && !p.is_zero() && p <= q && q < n && &(p * q) == n
}

fn ordered(a: Nat, b: Nat) -> (Nat, Nat) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Factors `N` (a product of two `k`-bit primes) from leaked bits.
pub fn factor(n: &Nat, k: u64, leaks: &[Leak], config: &HybridConfig) -> Result<(Nat, Nat, RunStats), PipelineError> {
    factor_traced(n, k, leaks, config).0
}

/// [`factor`], also returning every low-bit value of `p` the oracle refuted
/// (empty without the hook).
pub fn factor_traced(
    n: &Nat,
    k: u64,
    leaks: &[Leak],
    config: &HybridConfig,
) -> (Result<(Nat, Nat, RunStats), PipelineError>, Vec<Nat>) {
    let mut blocked = Vec::new();
    let result = run(n, k, leaks, config, &mut blocked);
    (result, blocked)
}

fn run(
    n: &Nat,
    k: u64,
    leaks: &[Leak],
    config: &HybridConfig,
    blocked: &mut Vec<Nat>,
) -> Result<(Nat, Nat, RunStats), PipelineError> {
    config.validate()?;
    let started = Instant::now();
    let (mut cnf, mut map) = encode_factoring(n, k)?;
    if config.use_d_encoding {
        encode_d_equation(&mut cnf, &mut map);
    }
    add_leak_units(&mut cnf, &map, leaks)?;

    let solver_config = SolverConfig {
        seed: config.seed,
        deadline: config.time_limit.map(|limit| started + limit),
        ..config.solver.clone()
    };

    let threshold = match config.method {
        Method::SatOnly => None,
        Method::Satcas => match threshold_bits(k, n, config.theta) {
            Ok(t) => Some(t),
            Err(e @ (PipelineError::ThresholdExceedsK { .. } | PipelineError::Oracle(OracleError::BoundTooSmall))) => {
                log::warn!("{e}; running without the oracle");
                None
            }
            Err(e) => return Err(e),
        },
    };

    let (result, solver_stats, mut stats) = match threshold {
        None => {
            let (result, solver_stats) = satcore::solve(&cnf, solver_config, &mut NoObserver)?;
            let result = match result {
                SolveResult::Terminated(()) => unreachable!("the null observer never terminates"),
                SolveResult::Sat(m) => SolveResult::Sat(m),
                SolveResult::Unsat => SolveResult::Unsat,
                SolveResult::TimedOut => SolveResult::TimedOut,
            };
            (result, solver_stats, RunStats::default())
        }
        Some(t) => {
            let mut hook = CoppersmithHook::new(&map, t, config.oracle);
            let (result, solver_stats) = satcore::solve(&cnf, solver_config, &mut hook)?;
            if hook.stats.pruning_checked > 0 {
                log::debug!(
                    "observed pruning: {}/{} oracle inputs consistent with N mod 2^{t}",
                    hook.stats.pruning_consistent,
                    hook.stats.pruning_checked
                );
            }
            *blocked = hook.blocked;
            (result, solver_stats, hook.stats)
        }
    };
    stats.conflicts = solver_stats.conflicts;
    stats.decisions = solver_stats.decisions;
    stats.wall_time = started.elapsed();

    let (p, q) = match result {
        SolveResult::Sat(model) => {
            let p = decode_bits(&map.p_bits, |v| model.value(v));
            let q = decode_bits(&map.q_bits, |v| model.value(v));
            ordered(p, q)
        }
        SolveResult::Terminated((p, q)) => ordered(p, q),
        SolveResult::Unsat => return Err(PipelineError::UnsatEncoding(Box::new(stats))),
        SolveResult::TimedOut => return Err(PipelineError::Timeout(Box::new(stats))),
    };
    if !verify_factors(n, &p, &q) {
        return Err(PipelineError::BadFactors { p, q });
    }
    log::info!(
        "factored with {} oracle calls, {} blocking clauses, {} conflicts in {:.3} s",
        stats.oracle_calls,
        stats.blocking_clauses,
        stats.conflicts,
        stats.wall_time.as_secs_f64()
    );
    Ok((p, q, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Found,
    Timeout,
    Exhausted,
    Infeasible,
    /// Branch-and-prune frontier exceeded its limit.
    Explosion,
    Unsat,
    Error,
}

/// Per-run JSON record shared by every method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub status: Status,
    pub p_hex: Option<String>,
    pub q_hex: Option<String>,
    pub wall_ms: u64,
    pub oracle_calls: u64,
    pub oracle_ms: u64,
    pub blocking_clauses: u64,
    pub conflicts: u64,
    pub decisions: u64,
    pub seed: u64,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_frontier: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels_completed: Option<u64>,
}

impl ResultRecord {
    pub fn new(method: impl Into<String>, seed: u64, status: Status) -> Self {
        ResultRecord {
            schema_version: SCHEMA_VERSION,
            status,
            p_hex: None,
            q_hex: None,
            wall_ms: 0,
            oracle_calls: 0,
            oracle_ms: 0,
            blocking_clauses: 0,
            conflicts: 0,
            decisions: 0,
            seed,
            method: method.into(),
            peak_frontier: None,
            levels_completed: None,
        }
    }

    pub fn with_factors(mut self, p: &Nat, q: &Nat) -> Self {
        self.p_hex = Some(p.to_str_radix(16));
        self.q_hex = Some(q.to_str_radix(16));
        self
    }

    pub fn with_stats(mut self, stats: &RunStats) -> Self {
        self.wall_ms = stats.wall_time.as_millis() as u64;
        self.oracle_calls = stats.oracle_calls;
        self.oracle_ms = stats.oracle_time.as_millis() as u64;
        self.blocking_clauses = stats.blocking_clauses;
        self.conflicts = stats.conflicts;
        self.decisions = stats.decisions;
        self
    }

    /// The same record with wall-clock fields zeroed; everything left is a
    /// function of the inputs alone.
    pub fn without_timings(&self) -> Self {
        ResultRecord { wall_ms: 0, oracle_ms: 0, ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }
}
