use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::heap::VarHeap;
use super::{
    AssignmentView, Branching, FixpointObserver, Lit, Model, SolveResult, SolverConfig, SolverError, SolverStats,
    Verdict,
};
use crate::cnfenc::CnfFormula;

const NO_REASON: u32 = u32::MAX;
const TRUE: i8 = 1;
const FALSE: i8 = -1;
const UNDEF: i8 = 0;

#[derive(Debug, Clone)]
struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    lbd: u32,
    activity: f64,
    deleted: bool,
}

#[derive(Debug, Clone, Copy)]
struct Watch {
    cref: u32,
    blocker: Lit,
}

/// CDCL engine state. Build with [`Solver::new`], run with [`Solver::solve`].
pub struct Solver {
    num_vars: usize,
    clauses: Vec<Clause>,
    /// `watches[l]` holds clauses whose first two literals include `l`;
    /// visited when `l` becomes false.
    watches: Vec<Vec<Watch>>,
    /// Indexed by literal code.
    values: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<u32>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,

    activity: Vec<f64>,
    var_inc: f64,
    heap: VarHeap,
    phase: Vec<bool>,
    cla_inc: f64,

    seen: Vec<bool>,
    analyze_stack: Vec<Lit>,
    analyze_toclear: Vec<Lit>,

    learnts: Vec<u32>,
    next_reduce: u64,
    reduce_step: u64,
    ok: bool,
    rng: ChaCha8Rng,
    config: SolverConfig,
    stats: SolverStats,
}

impl Solver {
    pub fn new(cnf: &CnfFormula, config: SolverConfig) -> Result<Self, SolverError> {
        let n = cnf.num_vars as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let activity: Vec<f64> = if config.jitter_init {
            (0..n).map(|_| rng.gen::<f64>() * 1e-5).collect()
        } else {
            vec![0.0; n]
        };
        let mut heap = VarHeap::new(n);
        for v in 0..n as u32 {
            heap.insert(v, &activity);
        }
        let mut solver = Solver {
            num_vars: n,
            clauses: Vec::with_capacity(cnf.clauses.len()),
            watches: vec![Vec::new(); 2 * n],
            values: vec![UNDEF; 2 * n],
            level: vec![0; n],
            reason: vec![NO_REASON; n],
            trail: Vec::with_capacity(n),
            trail_lim: Vec::new(),
            qhead: 0,
            activity,
            var_inc: 1.0,
            heap,
            phase: vec![false; n],
            cla_inc: 1.0,
            seen: vec![false; n],
            analyze_stack: Vec::new(),
            analyze_toclear: Vec::new(),
            learnts: Vec::new(),
            next_reduce: 2000,
            reduce_step: 300,
            ok: true,
            rng,
            config,
            stats: SolverStats::default(),
        };
        for (idx, c) in cnf.clauses.iter().enumerate() {
            let mut lits = Vec::with_capacity(c.len());
            for &l in c {
                if l == 0 {
                    return Err(SolverError::ZeroLiteral { clause: idx });
                }
                if l.unsigned_abs() > cnf.num_vars {
                    return Err(SolverError::VarOutOfRange { clause: idx, var: l.unsigned_abs(), num_vars: cnf.num_vars });
                }
                lits.push(Lit::from_dimacs(l));
            }
            if solver.ok {
                solver.add_original(lits);
            }
        }
        Ok(solver)
    }

    pub fn stats(&self) -> &SolverStats {
        &self.stats
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Learned clauses currently in the database, in DIMACS form.
    pub fn learned_clauses(&self) -> Vec<Vec<i32>> {
        self.clauses
            .iter()
            .filter(|c| c.learnt && !c.deleted)
            .map(|c| c.lits.iter().map(|l| l.to_dimacs()).collect())
            .collect()
    }

    #[inline]
    fn value(&self, l: Lit) -> i8 {
        self.values[l.code()]
    }

    #[inline]
    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// Adds a clause at level 0 before search.
    fn add_original(&mut self, mut lits: Vec<Lit>) {
        lits.sort();
        lits.dedup();
        if lits.windows(2).any(|w| w[0] == !w[1]) {
            return;
        }
        // Drop literals already false at level 0; skip satisfied clauses.
        if lits.iter().any(|&l| self.value(l) == TRUE) {
            return;
        }
        lits.retain(|&l| self.value(l) != FALSE);
        match lits.len() {
            0 => self.ok = false,
            1 => {
                self.enqueue(lits[0], NO_REASON);
                if self.propagate().is_some() {
                    self.ok = false;
                }
            }
            _ => {
                self.attach(lits, false, false, 0);
            }
        }
    }

    /// Permanent clauses are never removed by database reduction.
    fn attach(&mut self, lits: Vec<Lit>, learnt: bool, permanent: bool, lbd: u32) -> u32 {
        let cref = self.clauses.len() as u32;
        self.watches[lits[0].code()].push(Watch { cref, blocker: lits[1] });
        self.watches[lits[1].code()].push(Watch { cref, blocker: lits[0] });
        self.clauses.push(Clause { lits, learnt, lbd, activity: 0.0, deleted: false });
        if learnt && !permanent {
            self.learnts.push(cref);
        }
        cref
    }

    #[inline]
    fn enqueue(&mut self, l: Lit, reason: u32) {
        debug_assert_eq!(self.value(l), UNDEF);
        let v = l.var() as usize;
        self.values[l.code()] = TRUE;
        self.values[(!l).code()] = FALSE;
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    /// Unit propagation; returns a falsified clause on conflict.
    fn propagate(&mut self) -> Option<u32> {
        let mut conflict = None;
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[false_lit.code()]);
            let mut i = 0;
            let mut j = 0;
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.values[w.blocker.code()] == TRUE {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let cref = w.cref as usize;
                let clause = &mut self.clauses[cref];
                if clause.lits[0] == false_lit {
                    clause.lits.swap(0, 1);
                }
                let first = clause.lits[0];
                if first != w.blocker && self.values[first.code()] == TRUE {
                    ws[j] = Watch { cref: w.cref, blocker: first };
                    j += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..clause.lits.len() {
                    let l = clause.lits[k];
                    if self.values[l.code()] != FALSE {
                        clause.lits.swap(1, k);
                        self.watches[l.code()].push(Watch { cref: w.cref, blocker: first });
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = Watch { cref: w.cref, blocker: first };
                j += 1;
                if self.values[first.code()] == FALSE {
                    conflict = Some(w.cref);
                    self.qhead = self.trail.len();
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, w.cref);
                }
            }
            ws.truncate(j);
            self.watches[false_lit.code()] = ws;
            if conflict.is_some() {
                break;
            }
        }
        conflict
    }

    fn bump_var(&mut self, v: u32) {
        let a = &mut self.activity[v as usize];
        *a += self.var_inc;
        if *a > 1e100 {
            for x in self.activity.iter_mut() {
                *x *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.bumped(v, &self.activity);
    }

    fn bump_clause(&mut self, cref: u32) {
        let c = &mut self.clauses[cref as usize];
        if !c.learnt {
            return;
        }
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for &r in &self.learnts {
                self.clauses[r as usize].activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn abstract_level(&self, v: u32) -> u32 {
        1 << (self.level[v as usize] & 31)
    }

    /// First-UIP analysis. Returns the learned clause (asserting literal
    /// first, highest remaining level second) and the backjump level.
    fn analyze(&mut self, mut confl: u32) -> (Vec<Lit>, u32) {
        let mut learnt: Vec<Lit> = vec![Lit(0)];
        let mut path = 0;
        let mut p: Option<Lit> = None;
        let mut index = self.trail.len();
        let current = self.decision_level();
        loop {
            self.bump_clause(confl);
            let start = usize::from(p.is_some());
            let len = self.clauses[confl as usize].lits.len();
            for k in start..len {
                let q = self.clauses[confl as usize].lits[k];
                let v = q.var();
                if !self.seen[v as usize] && self.level[v as usize] > 0 {
                    self.bump_var(v);
                    self.seen[v as usize] = true;
                    if self.level[v as usize] >= current {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                index -= 1;
                if self.seen[self.trail[index].var() as usize] {
                    break;
                }
            }
            let lit = self.trail[index];
            p = Some(lit);
            confl = self.reason[lit.var() as usize];
            self.seen[lit.var() as usize] = false;
            path -= 1;
            if path == 0 {
                break;
            }
        }
        learnt[0] = !p.unwrap();

        // Recursive minimization.
        self.analyze_toclear.clear();
        self.analyze_toclear.extend_from_slice(&learnt);
        let abstract_levels = learnt[1..].iter().fold(0u32, |acc, l| acc | self.abstract_level(l.var()));
        let mut kept = 1;
        for i in 1..learnt.len() {
            let l = learnt[i];
            if self.reason[l.var() as usize] == NO_REASON || !self.lit_redundant(l, abstract_levels) {
                learnt[kept] = l;
                kept += 1;
            }
        }
        learnt.truncate(kept);
        for l in std::mem::take(&mut self.analyze_toclear) {
            self.seen[l.var() as usize] = false;
        }

        let backjump = if learnt.len() == 1 {
            0
        } else {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[learnt[i].var() as usize] > self.level[learnt[max_i].var() as usize] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            self.level[learnt[1].var() as usize]
        };
        (learnt, backjump)
    }

    fn lit_redundant(&mut self, p: Lit, abstract_levels: u32) -> bool {
        self.analyze_stack.clear();
        self.analyze_stack.push(p);
        let top = self.analyze_toclear.len();
        while let Some(q) = self.analyze_stack.pop() {
            let cref = self.reason[q.var() as usize];
            debug_assert_ne!(cref, NO_REASON);
            let len = self.clauses[cref as usize].lits.len();
            for k in 1..len {
                let l = self.clauses[cref as usize].lits[k];
                let v = l.var() as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    if self.reason[v] != NO_REASON && (self.abstract_level(l.var()) & abstract_levels) != 0 {
                        self.seen[v] = true;
                        self.analyze_stack.push(l);
                        self.analyze_toclear.push(l);
                    } else {
                        for l in self.analyze_toclear.drain(top..) {
                            self.seen[l.var() as usize] = false;
                        }
                        return false;
                    }
                }
            }
        }
        true
    }

    fn lbd(&mut self, lits: &[Lit]) -> u32 {
        let mut levels: Vec<u32> = lits.iter().map(|l| self.level[l.var() as usize]).collect();
        levels.sort_unstable();
        levels.dedup();
        levels.len() as u32
    }

    fn backtrack(&mut self, target: u32) {
        if self.decision_level() <= target {
            return;
        }
        let stop = self.trail_lim[target as usize];
        for idx in (stop..self.trail.len()).rev() {
            let l = self.trail[idx];
            let v = l.var();
            self.values[l.code()] = UNDEF;
            self.values[(!l).code()] = UNDEF;
            self.reason[v as usize] = NO_REASON;
            self.phase[v as usize] = !l.negated();
            self.heap.insert(v, &self.activity);
        }
        self.trail.truncate(stop);
        self.trail_lim.truncate(target as usize);
        self.qhead = stop;
    }

    /// Learns `lits` (asserting literal first) after backjumping.
    fn learn(&mut self, lits: Vec<Lit>, backjump: u32, permanent: bool) {
        self.backtrack(backjump);
        self.stats.learned += 1;
        if lits.len() == 1 {
            self.enqueue(lits[0], NO_REASON);
            return;
        }
        let lbd = self.lbd(&lits);
        let asserting = lits[0];
        let cref = self.attach(lits, true, permanent, lbd);
        self.bump_clause(cref);
        self.enqueue(asserting, cref);
    }

    fn handle_conflict(&mut self, confl: u32) -> bool {
        self.stats.conflicts += 1;
        if self.decision_level() == 0 {
            self.ok = false;
            return false;
        }
        let (learnt, backjump) = self.analyze(confl);
        self.learn(learnt, backjump, false);
        self.var_inc /= self.config.var_decay;
        self.cla_inc /= self.config.clause_decay;
        true
    }

    fn locked(&self, cref: u32) -> bool {
        let c = &self.clauses[cref as usize];
        let first = c.lits[0];
        self.value(first) == TRUE && self.reason[first.var() as usize] == cref
    }

    /// Removes about half of the reducible learned clauses, worst LBD first.
    fn reduce_db(&mut self) {
        self.stats.reductions += 1;
        let mut candidates: Vec<u32> = std::mem::take(&mut self.learnts);
        candidates.sort_by(|&a, &b| {
            let (ca, cb) = (&self.clauses[a as usize], &self.clauses[b as usize]);
            cb.lbd.cmp(&ca.lbd).then(ca.activity.partial_cmp(&cb.activity).unwrap()).then(a.cmp(&b))
        });
        let limit = candidates.len() / 2;
        let mut removed = 0;
        let mut keep = Vec::with_capacity(candidates.len());
        for cref in candidates {
            let c = &self.clauses[cref as usize];
            if removed < limit && c.lbd > 2 && c.lits.len() > 2 && !self.locked(cref) {
                let c = &mut self.clauses[cref as usize];
                c.deleted = true;
                removed += 1;
            } else {
                keep.push(cref);
            }
        }
        keep.sort_unstable();
        self.learnts = keep;
        let clauses = &self.clauses;
        for ws in self.watches.iter_mut() {
            ws.retain(|w| !clauses[w.cref as usize].deleted);
        }
        for c in self.clauses.iter_mut().filter(|c| c.deleted) {
            c.lits = Vec::new();
        }
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        let var = match self.config.branching {
            Branching::Static => (0..self.num_vars as u32).find(|&v| self.value(Lit::new(v, false)) == UNDEF),
            Branching::Vsids => {
                let mut chosen = None;
                if self.config.random_freq > 0.0 && self.rng.gen::<f64>() < self.config.random_freq {
                    let v = self.rng.gen_range(0..self.num_vars as u32);
                    if self.value(Lit::new(v, false)) == UNDEF {
                        chosen = Some(v);
                    }
                }
                if chosen.is_none() {
                    while let Some(v) = self.heap.pop(&self.activity) {
                        if self.value(Lit::new(v, false)) == UNDEF {
                            chosen = Some(v);
                            break;
                        }
                    }
                }
                chosen
            }
        }?;
        Some(Lit::new(var, !self.phase[var as usize]))
    }

    /// Attaches a clause supplied during search and restores the watch and
    /// propagation invariants. Returns false if the formula became unsatisfiable.
    fn add_external(&mut self, clause: &[i32]) -> bool {
        self.stats.external_clauses += 1;
        let mut lits: Vec<Lit> = Vec::with_capacity(clause.len());
        for &l in clause {
            if l == 0 || l.unsigned_abs() as usize > self.num_vars {
                log::warn!("dropping malformed external clause {clause:?}");
                return true;
            }
            let lit = Lit::from_dimacs(l);
            if lits.contains(&!lit) {
                return true;
            }
            if !lits.contains(&lit) {
                lits.push(lit);
            }
        }
        // Non-false literals first, then false ones by decreasing level.
        let key = |s: &Solver, l: Lit| -> (u8, std::cmp::Reverse<u32>) {
            match s.value(l) {
                TRUE => (0, std::cmp::Reverse(0)),
                UNDEF => (1, std::cmp::Reverse(0)),
                _ => (2, std::cmp::Reverse(s.level[l.var() as usize])),
            }
        };
        lits.sort_by_key(|&l| key(self, l));
        match lits.len() {
            0 => {
                self.ok = false;
                return false;
            }
            1 => {
                let l = lits[0];
                if self.value(l) == FALSE && self.level[l.var() as usize] == 0 {
                    self.ok = false;
                    return false;
                }
                self.backtrack(0);
                if self.value(l) == UNDEF {
                    self.enqueue(l, NO_REASON);
                }
                return true;
            }
            _ => {}
        }
        let (v0, v1) = (self.value(lits[0]), self.value(lits[1]));
        if v0 != FALSE && v1 != FALSE {
            self.attach(lits, true, true, 0);
            return true;
        }
        if v0 != FALSE {
            // Unit under the current assignment (or already satisfied).
            let lvl = self.level[lits[1].var() as usize];
            let lbd = self.lbd(&lits[1..]) + 1;
            if v0 == TRUE && self.level[lits[0].var() as usize] <= lvl {
                self.attach(lits, true, true, lbd);
                return true;
            }
            self.backtrack(lvl);
            let first = lits[0];
            let cref = self.attach(lits, true, true, lbd);
            if self.value(first) == UNDEF {
                self.enqueue(first, cref);
            }
            return true;
        }
        // Falsified.
        let top = self.level[lits[0].var() as usize];
        let second = self.level[lits[1].var() as usize];
        if top == 0 {
            self.ok = false;
            return false;
        }
        let lbd = self.lbd(&lits);
        if second < top {
            self.backtrack(second);
            let first = lits[0];
            let cref = self.attach(lits, true, true, lbd);
            self.enqueue(first, cref);
            return true;
        }
        self.backtrack(top);
        let cref = self.attach(lits, true, true, lbd);
        self.handle_conflict(cref)
    }

    fn timed_out(&self) -> bool {
        self.config.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn model(&self) -> Model {
        Model { values: (0..self.num_vars as u32).map(|v| self.value(Lit::new(v, false)) == TRUE).collect() }
    }

    pub fn solve<O: FixpointObserver>(&mut self, observer: &mut O) -> SolveResult<O::Payload> {
        if !self.ok {
            return SolveResult::Unsat;
        }
        let mut luby_index = 0u32;
        let mut restart_at = self.config.restart_base * luby(luby_index);
        let mut conflicts_since_restart = 0u64;
        loop {
            if let Some(confl) = self.propagate() {
                if !self.handle_conflict(confl) {
                    return SolveResult::Unsat;
                }
                conflicts_since_restart += 1;
                if self.stats.conflicts % 64 == 0 && self.timed_out() {
                    return SolveResult::TimedOut;
                }
                continue;
            }
            if conflicts_since_restart >= restart_at {
                self.stats.restarts += 1;
                luby_index += 1;
                restart_at = self.config.restart_base * luby(luby_index);
                conflicts_since_restart = 0;
                self.backtrack(0);
                continue;
            }
            if self.stats.conflicts >= self.next_reduce {
                self.next_reduce = self.stats.conflicts + 2000 + self.reduce_step * self.stats.reductions;
                self.reduce_db();
            }
            if self.decision_level() > 0 {
                self.stats.observer_calls += 1;
                let view = AssignmentView { values: &self.values, decision_level: self.decision_level() };
                match observer.at_fixpoint(&view) {
                    Verdict::Continue => {}
                    Verdict::Terminate(payload) => return SolveResult::Terminated(payload),
                    Verdict::AddClauses(clauses) => {
                        let before = (self.trail.len(), self.decision_level(), self.stats.conflicts);
                        for c in &clauses {
                            if !self.add_external(c) {
                                return SolveResult::Unsat;
                            }
                        }
                        if self.timed_out() {
                            return SolveResult::TimedOut;
                        }
                        if (self.trail.len(), self.decision_level(), self.stats.conflicts) != before {
                            continue;
                        }
                    }
                }
            }
            match self.pick_branch() {
                None => return SolveResult::Sat(self.model()),
                Some(lit) => {
                    self.stats.decisions += 1;
                    if self.stats.decisions % 1024 == 0 && self.timed_out() {
                        return SolveResult::TimedOut;
                    }
                    self.trail_lim.push(self.trail.len());
                    self.enqueue(lit, NO_REASON);
                }
            }
        }
    }

    /// Decides the given DIMACS literals in order (one level each) and
    /// propagates; returns the resulting partial assignment, or `None` on
    /// conflict. Leaves the solver at level 0 afterwards.
    pub fn fixpoint_under(&mut self, decisions: &[i32]) -> Option<Vec<Option<bool>>> {
        if !self.ok {
            return None;
        }
        let mut result = None;
        'outer: {
            if self.propagate().is_some() {
                break 'outer;
            }
            for &d in decisions {
                let lit = Lit::from_dimacs(d);
                match self.value(lit) {
                    TRUE => continue,
                    FALSE => break 'outer,
                    _ => {}
                }
                self.trail_lim.push(self.trail.len());
                self.enqueue(lit, NO_REASON);
                if self.propagate().is_some() {
                    break 'outer;
                }
            }
            result = Some(
                (0..self.num_vars as u32)
                    .map(|v| match self.value(Lit::new(v, false)) {
                        TRUE => Some(true),
                        FALSE => Some(false),
                        _ => None,
                    })
                    .collect(),
            );
        }
        self.backtrack(0);
        result
    }
}

/// Luby sequence 1, 1, 2, 1, 1, 2, 4, ...
pub(crate) fn luby(mut i: u32) -> u64 {
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < i as u64 + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    let mut x = 1u64;
    while size - 1 != i as u64 {
        size = (size - 1) >> 1;
        seq -= 1;
        i %= size as u32;
    }
    for _ in 0..seq {
        x *= 2;
    }
    x
}
