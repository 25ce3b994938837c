//! Conflict-driven clause-learning SAT solver with a programmatic hook.
//!
//! The engine is a conventional CDCL loop: two-watched-literal propagation,
//! first-UIP learning with recursive minimization, VSIDS-style activities,
//! phase saving, Luby restarts and LBD-based learned clause reduction.
//!
//! An optional [`FixpointObserver`] is called at every conflict-free
//! propagation fixpoint above decision level 0. It can let the search
//! continue, inject clauses (which become permanent learned clauses), or stop
//! the search with a payload.

mod heap;
mod solver;

use std::time::Instant;

use thiserror::Error;

use crate::cnfenc::CnfFormula;

pub use solver::Solver;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("clause {clause} contains the zero literal")]
    ZeroLiteral { clause: usize },
    #[error("clause {clause} mentions variable {var} but the formula has {num_vars}")]
    VarOutOfRange { clause: usize, var: u32, num_vars: u32 },
}

/// Internal literal: `var << 1 | negated`, with 0-based variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(u32);

impl Lit {
    #[inline]
    pub fn new(var: u32, negated: bool) -> Lit {
        Lit(var << 1 | negated as u32)
    }

    /// From a DIMACS literal (1-based, sign = polarity).
    #[inline]
    pub fn from_dimacs(l: i32) -> Lit {
        debug_assert!(l != 0);
        Lit::new(l.unsigned_abs() - 1, l < 0)
    }

    #[inline]
    pub fn to_dimacs(self) -> i32 {
        let v = (self.var() + 1) as i32;
        if self.negated() {
            -v
        } else {
            v
        }
    }

    #[inline]
    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    #[inline]
    pub fn negated(self) -> bool {
        self.0 & 1 == 1
    }

    #[inline]
    pub(crate) fn code(self) -> usize {
        self.0 as usize
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    #[inline]
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

/// Read access to the solver's current partial assignment.
pub struct AssignmentView<'a> {
    values: &'a [i8],
    decision_level: u32,
}

impl<'a> AssignmentView<'a> {
    /// Value of a DIMACS (1-based) variable, if assigned.
    #[inline]
    pub fn value(&self, var: u32) -> Option<bool> {
        match self.values[Lit::new(var - 1, false).code()] {
            1 => Some(true),
            -1 => Some(false),
            _ => None,
        }
    }

    pub fn decision_level(&self) -> u32 {
        self.decision_level
    }

    /// View over a raw table indexed like the solver's (`2 * var0 + negated`).
    #[cfg(test)]
    pub(crate) fn for_tests(values: &'a [i8], decision_level: u32) -> Self {
        AssignmentView { values, decision_level }
    }
}

/// What the observer wants the solver to do next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict<P> {
    Continue,
    /// DIMACS clauses; the observer vouches for their soundness.
    AddClauses(Vec<Vec<i32>>),
    Terminate(P),
}

pub trait FixpointObserver {
    type Payload;
    fn at_fixpoint(&mut self, view: &AssignmentView<'_>) -> Verdict<Self::Payload>;
}

/// Observer that never intervenes.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoObserver;

impl FixpointObserver for NoObserver {
    type Payload = ();
    fn at_fixpoint(&mut self, _: &AssignmentView<'_>) -> Verdict<()> {
        Verdict::Continue
    }
}

/// Total assignment; `values[v - 1]` is DIMACS variable `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub values: Vec<bool>,
}

impl Model {
    #[inline]
    pub fn value(&self, var: u32) -> bool {
        self.values[var as usize - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult<P> {
    Sat(Model),
    Unsat,
    Terminated(P),
    TimedOut,
}

/// Decision heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branching {
    /// Activity-ordered decisions; ties go to the lowest variable index.
    #[default]
    Vsids,
    /// Always the lowest-index unassigned variable.
    Static,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub seed: u64,
    pub branching: Branching,
    /// Conflicts per Luby unit.
    pub restart_base: u64,
    pub var_decay: f64,
    pub clause_decay: f64,
    /// Probability of a random decision variable.
    pub random_freq: f64,
    /// Seeded tiny initial activities instead of all zero.
    pub jitter_init: bool,
    pub deadline: Option<Instant>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            seed: 0,
            branching: Branching::Vsids,
            restart_base: 64,
            var_decay: 0.95,
            clause_decay: 0.999,
            random_freq: 0.0,
            jitter_init: false,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub conflicts: u64,
    pub decisions: u64,
    pub propagations: u64,
    pub restarts: u64,
    pub learned: u64,
    pub reductions: u64,
    pub observer_calls: u64,
    pub external_clauses: u64,
}

/// Runs a fresh solver on `cnf`.
pub fn solve<O: FixpointObserver>(
    cnf: &CnfFormula,
    config: SolverConfig,
    observer: &mut O,
) -> Result<(SolveResult<O::Payload>, SolverStats), SolverError> {
    let mut solver = Solver::new(cnf, config)?;
    let result = solver.solve(observer);
    Ok((result, solver.stats().clone()))
}

/// True iff every clause has a literal made true by `model`.
pub fn check_model(cnf: &CnfFormula, model: &Model) -> bool {
    model.values.len() >= cnf.num_vars as usize
        && cnf
            .clauses
            .iter()
            .all(|c| c.iter().any(|&l| model.value(l.unsigned_abs()) == (l > 0)))
}
