//! CNF encodings of `N = p * q` (schoolbook multiplier) and of the low
//! exponent relation `3d + 2(p + q) = 2N + 3`, plus DIMACS I/O.
//!
//! Variable numbering is fixed: `p` bits are 1..=k, `q` bits k+1..=2k, then
//! gate outputs in construction order, then `d` bits and their adder
//! auxiliaries when the d-equation is added. Columns are summed LSB first:
//! row `i` of partial products `p_j & q_i` is added into the running
//! accumulator with a ripple of half/full adders.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use num_bigint::BigUint;
use num_traits::{Num, One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numtheory::{bit, isqrt};
use crate::Nat;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("modulus with {bits} bits cannot be a product of two {k}-bit factors")]
    BadBitlength { bits: u64, k: u64 },
    #[error("modulus must be odd")]
    EvenModulus,
    #[error("bit {index} of {target} leaked as both 0 and 1")]
    ConflictingLeak { target: Component, index: u64 },
    #[error("leak index {index} out of range for {target}")]
    LeakOutOfRange { target: Component, index: u64 },
    #[error("malformed DIMACS at line {line}: {msg}")]
    Dimacs { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Which key component a leaked bit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    P,
    Q,
    D,
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Component::P => "p",
            Component::Q => "q",
            Component::D => "d",
        })
    }
}

/// A known bit of a key component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Leak {
    pub target: Component,
    pub index: u64,
    pub value: bool,
}

impl Leak {
    pub fn new(target: Component, index: u64, value: bool) -> Self {
        Leak { target, index, value }
    }
}

/// Clause database with DIMACS-style signed literals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CnfFormula {
    pub num_vars: u32,
    pub clauses: Vec<Vec<i32>>,
}

impl CnfFormula {
    pub fn new(num_vars: u32) -> Self {
        CnfFormula { num_vars, clauses: Vec::new() }
    }

    /// Appends a clause, dropping duplicate literals and tautologies.
    pub fn add_clause(&mut self, lits: &[i32]) {
        let mut c: Vec<i32> = Vec::with_capacity(lits.len());
        for &l in lits {
            assert!(l != 0 && l.unsigned_abs() <= self.num_vars, "literal {l} out of range");
            if c.contains(&-l) {
                return;
            }
            if !c.contains(&l) {
                c.push(l);
            }
        }
        self.clauses.push(c);
    }

    pub fn has_unit(&self, lit: i32) -> bool {
        self.clauses.iter().any(|c| c.len() == 1 && c[0] == lit)
    }

    fn fresh(&mut self) -> i32 {
        self.num_vars += 1;
        self.num_vars as i32
    }
}

/// Semantic bit -> variable map. Bit vectors are LSB first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarMap {
    pub k: u64,
    /// Bitlength of the modulus.
    pub n_bits: u64,
    pub modulus: Nat,
    pub p_bits: Vec<u32>,
    pub q_bits: Vec<u32>,
    pub d_bits: Option<Vec<u32>>,
    /// Multiplier outputs, length 2k.
    pub product_bits: Vec<u32>,
    pub aux_count: u32,
}

impl VarMap {
    pub fn bits_of(&self, target: Component) -> Option<&[u32]> {
        match target {
            Component::P => Some(&self.p_bits),
            Component::Q => Some(&self.q_bits),
            Component::D => self.d_bits.as_deref(),
        }
    }
}

/// Reads an integer off a bit vector under a total assignment.
pub fn decode_bits(bits: &[u32], value: impl Fn(u32) -> bool) -> Nat {
    let mut out = BigUint::zero();
    for (i, &v) in bits.iter().enumerate() {
        if value(v) {
            out.set_bit(i as u64, true);
        }
    }
    out
}

/// Circuit wire: a literal or a constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wire {
    Const(bool),
    Lit(i32),
}

impl Wire {
    fn not(self) -> Wire {
        match self {
            Wire::Const(b) => Wire::Const(!b),
            Wire::Lit(l) => Wire::Lit(-l),
        }
    }
}

struct Circuit<'a> {
    cnf: &'a mut CnfFormula,
    gates: u32,
}

impl<'a> Circuit<'a> {
    fn new(cnf: &'a mut CnfFormula) -> Self {
        Circuit { cnf, gates: 0 }
    }

    fn fresh(&mut self) -> i32 {
        self.gates += 1;
        self.cnf.fresh()
    }

    /// `c <-> x & y`
    fn and(&mut self, x: i32, y: i32) -> i32 {
        let c = self.fresh();
        self.cnf.add_clause(&[-c, x]);
        self.cnf.add_clause(&[-c, y]);
        self.cnf.add_clause(&[c, -x, -y]);
        c
    }

    /// `s <-> x ^ y`
    fn xor(&mut self, x: i32, y: i32) -> i32 {
        let s = self.fresh();
        self.cnf.add_clause(&[-s, x, y]);
        self.cnf.add_clause(&[-s, -x, -y]);
        self.cnf.add_clause(&[s, -x, y]);
        self.cnf.add_clause(&[s, x, -y]);
        s
    }

    /// `c <-> a | b`
    fn or(&mut self, a: Wire, b: Wire) -> Wire {
        match (a, b) {
            (Wire::Const(true), _) | (_, Wire::Const(true)) => Wire::Const(true),
            (Wire::Const(false), w) | (w, Wire::Const(false)) => w,
            (Wire::Lit(x), Wire::Lit(y)) => {
                let c = self.fresh();
                self.cnf.add_clause(&[c, -x]);
                self.cnf.add_clause(&[c, -y]);
                self.cnf.add_clause(&[-c, x, y]);
                Wire::Lit(c)
            }
        }
    }

    /// Returns (sum, carry).
    fn half_adder(&mut self, a: Wire, b: Wire) -> (Wire, Wire) {
        match (a, b) {
            (Wire::Const(x), Wire::Const(y)) => (Wire::Const(x ^ y), Wire::Const(x & y)),
            (Wire::Const(false), w) | (w, Wire::Const(false)) => (w, Wire::Const(false)),
            (Wire::Const(true), w) | (w, Wire::Const(true)) => (w.not(), w),
            (Wire::Lit(x), Wire::Lit(y)) => {
                let s = self.xor(x, y);
                let c = self.and(x, y);
                (Wire::Lit(s), Wire::Lit(c))
            }
        }
    }

    /// Two half adders and an OR for the carry.
    fn full_adder(&mut self, a: Wire, b: Wire, cin: Wire) -> (Wire, Wire) {
        if cin == Wire::Const(false) {
            return self.half_adder(a, b);
        }
        if a == Wire::Const(false) {
            return self.half_adder(b, cin);
        }
        if b == Wire::Const(false) {
            return self.half_adder(a, cin);
        }
        let (s1, c1) = self.half_adder(a, b);
        let (s, c2) = self.half_adder(s1, cin);
        let cout = self.or(c1, c2);
        (s, cout)
    }

    /// Ripple-carry sum; the result has one more wire than the longer input.
    fn ripple_add(&mut self, a: &[Wire], b: &[Wire]) -> Vec<Wire> {
        let width = a.len().max(b.len());
        let mut carry = Wire::Const(false);
        let mut out = Vec::with_capacity(width + 1);
        for i in 0..width {
            let x = a.get(i).copied().unwrap_or(Wire::Const(false));
            let y = b.get(i).copied().unwrap_or(Wire::Const(false));
            let (s, c) = self.full_adder(x, y, carry);
            out.push(s);
            carry = c;
        }
        out.push(carry);
        out
    }

    /// Forces a wire to a constant value.
    fn fix(&mut self, w: Wire, value: bool) {
        match w {
            Wire::Lit(l) => self.cnf.add_clause(&[if value { l } else { -l }]),
            Wire::Const(c) if c == value => {}
            Wire::Const(_) => {
                // Constant mismatch: make the formula unsatisfiable.
                let v = self.cnf.fresh();
                self.gates += 1;
                self.cnf.add_clause(&[v]);
                self.cnf.add_clause(&[-v]);
            }
        }
    }
}

/// Multiplier circuit for `p * q = N` over k-bit odd factors with top bits set.
pub fn encode_factoring(n: &Nat, k: u64) -> Result<(CnfFormula, VarMap), EncodeError> {
    let bits = n.bits();
    if k < 2 || bits + 1 < 2 * k || bits > 2 * k {
        return Err(EncodeError::BadBitlength { bits, k });
    }
    if !bit(n, 0) {
        return Err(EncodeError::EvenModulus);
    }
    let k_us = k as usize;
    let mut cnf = CnfFormula::new(2 * k as u32);
    let p_bits: Vec<u32> = (1..=k as u32).collect();
    let q_bits: Vec<u32> = (k as u32 + 1..=2 * k as u32).collect();

    let mut circuit = Circuit::new(&mut cnf);
    // acc[c] is the running column sum; row i contributes p_j & q_i at column i + j.
    let mut acc: Vec<Wire> = p_bits.iter().map(|&pj| Wire::Lit(circuit.and(pj as i32, q_bits[0] as i32))).collect();
    for (i, &qi) in q_bits.iter().enumerate().skip(1) {
        let row: Vec<Wire> = p_bits.iter().map(|&pj| Wire::Lit(circuit.and(pj as i32, qi as i32))).collect();
        let sum = circuit.ripple_add(&acc[i..], &row);
        acc.truncate(i);
        acc.extend(sum);
    }
    debug_assert_eq!(acc.len(), 2 * k_us);
    for (c, &w) in acc.iter().enumerate() {
        circuit.fix(w, bit(n, c as u64));
    }
    let aux_count = circuit.gates;
    let product_bits = acc
        .iter()
        .map(|w| match w {
            Wire::Lit(l) => *l as u32,
            Wire::Const(_) => unreachable!("multiplier outputs are gate variables"),
        })
        .collect();

    for bits in [&p_bits, &q_bits] {
        cnf.add_clause(&[bits[0] as i32]);
        cnf.add_clause(&[bits[k_us - 1] as i32]);
    }
    let map = VarMap {
        k,
        n_bits: bits,
        modulus: n.clone(),
        p_bits,
        q_bits,
        d_bits: None,
        product_bits,
        aux_count,
    };
    Ok((cnf, map))
}

/// One unit clause per leak. Repeating a leak adds nothing new.
pub fn add_leak_units(cnf: &mut CnfFormula, map: &VarMap, leaks: &[Leak]) -> Result<(), EncodeError> {
    let mut seen: BTreeMap<(Component, u64), bool> = BTreeMap::new();
    for leak in leaks {
        if let Some(&prev) = seen.get(&(leak.target, leak.index)) {
            if prev != leak.value {
                return Err(EncodeError::ConflictingLeak { target: leak.target, index: leak.index });
            }
        }
        seen.insert((leak.target, leak.index), leak.value);
    }
    for leak in leaks {
        let var = map
            .bits_of(leak.target)
            .and_then(|b| b.get(leak.index as usize))
            .ok_or(EncodeError::LeakOutOfRange { target: leak.target, index: leak.index })?;
        let lit = if leak.value { *var as i32 } else { -(*var as i32) };
        if !cnf.has_unit(lit) {
            cnf.add_clause(&[lit]);
        }
    }
    Ok(())
}

/// `floor(2N/3 + 1)`
pub fn d_tilde(n: &Nat) -> Nat {
    (n * 2u32 + 3u32) / 3u32
}

/// Length and value (MSB first) of the common prefix of the `n_bits`-bit
/// strings of `d~` and `d~ - isqrt(2N)`. The true `d` shares that prefix.
pub fn fixed_high_bits_of_d(n: &Nat, n_bits: u64) -> (u64, Vec<bool>) {
    let hi = d_tilde(n);
    let spread = isqrt(&(n * 2u32));
    let lo = if spread > hi { BigUint::zero() } else { &hi - &spread };
    let mut prefix = Vec::new();
    for i in (0..n_bits).rev() {
        let (a, b) = (bit(&hi, i), bit(&lo, i));
        if a != b {
            break;
        }
        prefix.push(a);
    }
    (prefix.len() as u64, prefix)
}

/// Adds fresh `d` bits and the adder for `d + 2d + 2p + 2q = 2N + 3`, with
/// the Lemma-style high-bit prefix of `d` fixed by unit clauses.
pub fn encode_d_equation(cnf: &mut CnfFormula, map: &mut VarMap) {
    let n = map.modulus.clone();
    let n_bits = map.n_bits;
    let first = cnf.num_vars + 1;
    cnf.num_vars += n_bits as u32;
    let d_bits: Vec<u32> = (first..first + n_bits as u32).collect();

    let zero = Wire::Const(false);
    let d: Vec<Wire> = d_bits.iter().map(|&v| Wire::Lit(v as i32)).collect();
    let d_shift: Vec<Wire> = std::iter::once(zero).chain(d.iter().copied()).collect();
    let p_shift: Vec<Wire> = std::iter::once(zero).chain(map.p_bits.iter().map(|&v| Wire::Lit(v as i32))).collect();
    let q_shift: Vec<Wire> = std::iter::once(zero).chain(map.q_bits.iter().map(|&v| Wire::Lit(v as i32))).collect();

    let mut circuit = Circuit::new(cnf);
    let three_d = circuit.ripple_add(&d, &d_shift);
    let two_pq = circuit.ripple_add(&p_shift, &q_shift);
    let total = circuit.ripple_add(&three_d, &two_pq);
    let target = &n * 2u32 + 3u32;
    assert!(target.bits() <= total.len() as u64);
    for (i, &w) in total.iter().enumerate() {
        circuit.fix(w, bit(&target, i as u64));
    }
    let gates = circuit.gates;

    let (l, prefix) = fixed_high_bits_of_d(&n, n_bits);
    for (j, &b) in prefix.iter().enumerate() {
        let var = d_bits[(n_bits - 1) as usize - j] as i32;
        cnf.add_clause(&[if b { var } else { -var }]);
    }
    debug_assert_eq!(l as usize, prefix.len());
    map.aux_count += gates;
    map.d_bits = Some(d_bits);
}

/// DIMACS with the variable map in leading comment lines.
pub fn write_dimacs<W: Write>(cnf: &CnfFormula, map: Option<&VarMap>, mut out: W) -> io::Result<()> {
    if let Some(m) = map {
        writeln!(out, "c copperbolt factoring instance")?;
        writeln!(out, "c vars: p bits 1..k, q bits k+1..2k, then gates, then d bits and their gates")?;
        writeln!(out, "c nbits {} {}", m.k, m.n_bits)?;
        writeln!(out, "c modulus {}", m.modulus.to_str_radix(16))?;
        writeln!(out, "c aux {}", m.aux_count)?;
        for (i, v) in m.p_bits.iter().enumerate() {
            writeln!(out, "c pbit {i} {v}")?;
        }
        for (i, v) in m.q_bits.iter().enumerate() {
            writeln!(out, "c qbit {i} {v}")?;
        }
        for (i, v) in m.d_bits.iter().flatten().enumerate() {
            writeln!(out, "c dbit {i} {v}")?;
        }
        for (i, v) in m.product_bits.iter().enumerate() {
            writeln!(out, "c prodbit {i} {v}")?;
        }
    }
    writeln!(out, "p cnf {} {}", cnf.num_vars, cnf.clauses.len())?;
    let mut line = String::new();
    for c in &cnf.clauses {
        line.clear();
        for l in c {
            line.push_str(&l.to_string());
            line.push(' ');
        }
        line.push('0');
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn dimacs_string(cnf: &CnfFormula, map: Option<&VarMap>) -> String {
    let mut buf = Vec::new();
    write_dimacs(cnf, map, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("DIMACS output is ASCII")
}

/// Parses DIMACS; the variable map is returned when the comment block is present.
pub fn parse_dimacs<R: BufRead>(input: R) -> Result<(CnfFormula, Option<VarMap>), EncodeError> {
    let mut cnf: Option<CnfFormula> = None;
    let mut declared = 0usize;
    let mut pending: Vec<i32> = Vec::new();
    let mut meta = MapBuilder::default();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let err = |msg: &str| EncodeError::Dimacs { line: lineno, msg: msg.to_string() };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('c') {
            meta.comment(rest.trim()).map_err(|m| err(&m))?;
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("p ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "cnf" {
                return Err(err("expected 'p cnf <vars> <clauses>'"));
            }
            let vars = parts[1].parse().map_err(|_| err("bad variable count"))?;
            declared = parts[2].parse().map_err(|_| err("bad clause count"))?;
            cnf = Some(CnfFormula::new(vars));
            continue;
        }
        let f = cnf.as_mut().ok_or_else(|| err("clause before header"))?;
        for tok in trimmed.split_whitespace() {
            let lit: i32 = tok.parse().map_err(|_| err("bad literal"))?;
            if lit == 0 {
                f.clauses.push(std::mem::take(&mut pending));
            } else {
                if lit.unsigned_abs() > f.num_vars {
                    return Err(err("literal exceeds declared variable count"));
                }
                pending.push(lit);
            }
        }
    }
    let cnf = cnf.ok_or(EncodeError::Dimacs { line: 0, msg: "missing header".into() })?;
    if !pending.is_empty() {
        return Err(EncodeError::Dimacs { line: 0, msg: "unterminated clause".into() });
    }
    if cnf.clauses.len() != declared {
        return Err(EncodeError::Dimacs {
            line: 0,
            msg: format!("header declares {declared} clauses, found {}", cnf.clauses.len()),
        });
    }
    Ok((cnf, meta.finish()))
}

#[derive(Default)]
struct MapBuilder {
    nbits: Option<(u64, u64)>,
    modulus: Option<Nat>,
    aux: u32,
    p: BTreeMap<usize, u32>,
    q: BTreeMap<usize, u32>,
    d: BTreeMap<usize, u32>,
    prod: BTreeMap<usize, u32>,
}

impl MapBuilder {
    fn comment(&mut self, text: &str) -> Result<(), String> {
        let parts: Vec<&str> = text.split_whitespace().collect();
        let num = |s: &str| s.parse::<u64>().map_err(|_| format!("bad number '{s}'"));
        match parts.as_slice() {
            ["nbits", k, n] => self.nbits = Some((num(k)?, num(n)?)),
            ["modulus", hex] => {
                self.modulus = Some(Nat::from_str_radix(hex, 16).map_err(|_| "bad modulus".to_string())?)
            }
            ["aux", a] => self.aux = num(a)? as u32,
            [kind @ ("pbit" | "qbit" | "dbit" | "prodbit"), i, v] => {
                let slot = match *kind {
                    "pbit" => &mut self.p,
                    "qbit" => &mut self.q,
                    "dbit" => &mut self.d,
                    _ => &mut self.prod,
                };
                slot.insert(num(i)? as usize, num(v)? as u32);
            }
            _ => {}
        }
        Ok(())
    }

    fn finish(self) -> Option<VarMap> {
        let (k, n_bits) = self.nbits?;
        let dense = |m: BTreeMap<usize, u32>| -> Option<Vec<u32>> {
            m.iter().enumerate().all(|(i, (&j, _))| i == j).then(|| m.into_values().collect())
        };
        let d = dense(self.d)?;
        Some(VarMap {
            k,
            n_bits,
            modulus: self.modulus?,
            p_bits: dense(self.p)?,
            q_bits: dense(self.q)?,
            d_bits: if d.is_empty() { None } else { Some(d) },
            product_bits: dense(self.prod)?,
            aux_count: self.aux,
        })
    }
}

/// True when `value` is the `n_bits`-bit prefix-consistent with `prefix` (MSB first).
pub fn has_prefix(value: &Nat, n_bits: u64, prefix: &[bool]) -> bool {
    prefix.iter().enumerate().all(|(j, &b)| bit(value, n_bits - 1 - j as u64) == b)
}

/// `2^bits - 1`
pub fn low_mask(bits: u64) -> Nat {
    (BigUint::one() << bits) - 1u32
}
