//! Instance generation, method dispatch, benchmarking and report emission.
//!
//! Everything here is deterministic in its seed except wall-clock fields.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::Num;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{branch_and_prune, brute_force_coppersmith, BaselineError, BnpConfig, BRUTE_FORCE_CAP};
use crate::cnfenc::{
    add_leak_units, encode_d_equation, encode_factoring, fixed_high_bits_of_d, write_dimacs, Component, CnfFormula,
    EncodeError, Leak, VarMap,
};
use crate::numtheory::{bit, gen_prime, mod_inverse};
use crate::pipeline::{factor, HybridConfig, Method, PipelineError, ResultRecord, RunStats, Status, SCHEMA_VERSION};
use crate::Nat;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: field `{field}`: {msg}")]
    Schema { path: PathBuf, field: String, msg: String },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("invalid arguments: {0}")]
    Args(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv { path: path.to_path_buf(), source }
}

/// A leaked bit as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakEntry {
    pub target: Component,
    pub index: u64,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub schema_version: u32,
    pub n_hex: String,
    pub k: u64,
    pub leaks: Vec<LeakEntry>,
    pub with_d: bool,
    pub seed: u64,
}

/// Ground truth for an instance. Solvers never read it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truth {
    pub schema_version: u32,
    pub p_hex: String,
    pub q_hex: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_hex: Option<String>,
}

fn parse_hex(s: &str) -> Option<Nat> {
    BigUint::from_str_radix(s.trim_start_matches("0x"), 16).ok()
}

fn hex(n: &Nat) -> String {
    n.to_str_radix(16)
}

impl Instance {
    pub fn modulus(&self) -> Nat {
        parse_hex(&self.n_hex).expect("validated instance")
    }

    pub fn leaks(&self) -> Vec<Leak> {
        self.leaks.iter().map(|e| Leak::new(e.target, e.index, e.value == 1)).collect()
    }

    /// Checks the invariants a hand-edited file could break.
    pub fn validate(&self, path: &Path) -> Result<(), HarnessError> {
        let schema = |field: &str, msg: String| HarnessError::Schema { path: path.to_path_buf(), field: field.into(), msg };
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema("schema_version", format!("expected {SCHEMA_VERSION}, found {}", self.schema_version)));
        }
        let n = parse_hex(&self.n_hex).ok_or_else(|| schema("n_hex", "not a hexadecimal integer".into()))?;
        if !bit(&n, 0) {
            return Err(schema("n_hex", "modulus must be odd".into()));
        }
        if self.k < 2 || n.bits() + 1 < 2 * self.k || n.bits() > 2 * self.k {
            return Err(schema("k", format!("{}-bit modulus cannot have two {}-bit factors", n.bits(), self.k)));
        }
        for (i, leak) in self.leaks.iter().enumerate() {
            let len = match leak.target {
                Component::P | Component::Q => self.k,
                Component::D if self.with_d => n.bits(),
                Component::D => return Err(schema(&format!("leaks[{i}].target"), "d leak without with_d".into())),
            };
            if leak.index >= len {
                return Err(schema(&format!("leaks[{i}].index"), format!("{} out of range 0..{len}", leak.index)));
            }
            if leak.value > 1 {
                return Err(schema(&format!("leaks[{i}].value"), format!("{} is not a bit", leak.value)));
            }
        }
        Ok(())
    }
}

impl Truth {
    pub fn factors(&self) -> Option<(Nat, Nat)> {
        Some((parse_hex(&self.p_hex)?, parse_hex(&self.q_hex)?))
    }
}

/// One generated problem with everything needed to write its files.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: Instance,
    pub truth: Truth,
    pub cnf: CnfFormula,
    pub map: VarMap,
}

/// Number of leaked positions out of `len` at `pct` percent.
pub fn leak_count(len: u64, pct: f64) -> usize {
    ((pct * len as f64 / 100.0).round() as usize).min(len as usize)
}

/// Random semiprime with `bits / 2`-bit factors and per-component random leaks.
pub fn gen(bits: u64, leak_pct: f64, with_d: bool, seed: u64) -> Result<Generated, HarnessError> {
    if bits < 16 || bits % 2 != 0 {
        return Err(HarnessError::Args(format!("--bits must be even and at least 16, got {bits}")));
    }
    if !(0.0..=100.0).contains(&leak_pct) {
        return Err(HarnessError::Args(format!("--leak-pct must be within 0..=100, got {leak_pct}")));
    }
    let k = bits / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = gen_prime(k, &mut rng, with_d);
    let q = loop {
        let q = gen_prime(k, &mut rng, with_d);
        if q != p {
            break q;
        }
    };
    let (p, q) = if p <= q { (p, q) } else { (q, p) };
    let n = &p * &q;
    let d = with_d.then(|| {
        let phi = (&p - 1u32) * (&q - 1u32);
        mod_inverse(&BigUint::from(3u32), &phi).expect("primes avoid 1 mod 3")
    });

    let mut components: Vec<(Component, &Nat, u64)> = vec![(Component::P, &p, k), (Component::Q, &q, k)];
    if let Some(d) = &d {
        components.push((Component::D, d, n.bits()));
    }
    let mut leaks = Vec::new();
    for (target, value, len) in components {
        let mut idx = sample(&mut rng, len as usize, leak_count(len, leak_pct)).into_vec();
        idx.sort_unstable();
        leaks.extend(idx.into_iter().map(|i| LeakEntry { target, index: i as u64, value: bit(value, i as u64) as u8 }));
    }
    if with_d {
        let n_bits = n.bits();
        let (_, prefix) = fixed_high_bits_of_d(&n, n_bits);
        for (j, &b) in prefix.iter().enumerate() {
            leaks.push(LeakEntry { target: Component::D, index: n_bits - 1 - j as u64, value: b as u8 });
        }
    }

    let instance = Instance { schema_version: SCHEMA_VERSION, n_hex: hex(&n), k, leaks, with_d, seed };
    let truth = Truth { schema_version: SCHEMA_VERSION, p_hex: hex(&p), q_hex: hex(&q), d_hex: d.as_ref().map(hex) };
    let (cnf, map) = instance_formula(&instance)?;
    Ok(Generated { instance, truth, cnf, map })
}

/// The full CNF for an instance: multiplier, optional d-equation, leak units.
pub fn instance_formula(instance: &Instance) -> Result<(CnfFormula, VarMap), HarnessError> {
    let (mut cnf, mut map) = encode_factoring(&instance.modulus(), instance.k)?;
    if instance.with_d {
        encode_d_equation(&mut cnf, &mut map);
    }
    add_leak_units(&mut cnf, &map, &instance.leaks())?;
    Ok((cnf, map))
}

/// File stem shared by an instance's JSON, truth and DIMACS files.
pub fn instance_stem(bits: u64, leak_pct: f64, with_d: bool, seed: u64) -> String {
    format!("n{bits}_l{leak_pct}{}_s{seed}", if with_d { "_d" } else { "" })
}

pub struct WrittenFiles {
    pub instance: PathBuf,
    pub truth: PathBuf,
    pub dimacs: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| HarnessError::Json { path: path.to_path_buf(), source })
}

pub fn write_generated(gen: &Generated, out_dir: &Path, stem: &str) -> Result<WrittenFiles, HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let files = WrittenFiles {
        instance: out_dir.join(format!("{stem}.instance.json")),
        truth: out_dir.join(format!("{stem}.truth.json")),
        dimacs: out_dir.join(format!("{stem}.cnf")),
    };
    write_json(&files.instance, &gen.instance)?;
    write_json(&files.truth, &gen.truth)?;
    let file = File::create(&files.dimacs).map_err(io_err(&files.dimacs))?;
    let mut out = BufWriter::new(file);
    write_dimacs(&gen.cnf, Some(&gen.map), &mut out).map_err(io_err(&files.dimacs))?;
    out.flush().map_err(io_err(&files.dimacs))?;
    Ok(files)
}

pub fn read_instance(path: &Path) -> Result<Instance, HarnessError> {
    let instance: Instance = read_json(path)?;
    instance.validate(path)?;
    Ok(instance)
}

pub fn read_truth(path: &Path) -> Result<Truth, HarnessError> {
    let truth: Truth = read_json(path)?;
    if truth.schema_version != SCHEMA_VERSION {
        return Err(HarnessError::Schema {
            path: path.to_path_buf(),
            field: "schema_version".into(),
            msg: format!("expected {SCHEMA_VERSION}, found {}", truth.schema_version),
        });
    }
    if truth.factors().is_none() {
        return Err(HarnessError::Schema { path: path.to_path_buf(), field: "p_hex".into(), msg: "bad hex".into() });
    }
    Ok(truth)
}

pub fn read_result(path: &Path) -> Result<ResultRecord, HarnessError> {
    read_json(path)
}

pub fn write_result(path: &Path, record: &ResultRecord) -> Result<(), HarnessError> {
    write_json(path, record)
}

/// Any of the four solving methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Sat,
    Satcas,
    Bnp,
    Brute,
}

impl SolveMethod {
    pub fn name(self) -> &'static str {
        match self {
            SolveMethod::Sat => "sat",
            SolveMethod::Satcas => "satcas",
            SolveMethod::Bnp => "bnp",
            SolveMethod::Brute => "brute",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sat" | "sat-only" => Some(SolveMethod::Sat),
            "satcas" => Some(SolveMethod::Satcas),
            "bnp" => Some(SolveMethod::Bnp),
            "brute" => Some(SolveMethod::Brute),
            _ => None,
        }
    }
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub theta: f64,
    pub timeout: Option<Duration>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { theta: 0.6, timeout: Some(DEFAULT_TIMEOUT) }
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

fn millis(d: Duration) -> u64 {
    d.as_millis() as u64
}

/// Runs one method on one instance and summarizes the outcome.
pub fn solve_instance(instance: &Instance, method: SolveMethod, opts: &SolveOptions) -> ResultRecord {
    let n = instance.modulus();
    let leaks = instance.leaks();
    let started = Instant::now();
    let deadline = opts.timeout.map(|t| started + t);
    let record = ResultRecord::new(method.name(), instance.seed, Status::Found);
    match method {
        SolveMethod::Sat | SolveMethod::Satcas => {
            let config = HybridConfig {
                theta: opts.theta,
                method: if method == SolveMethod::Sat { Method::SatOnly } else { Method::Satcas },
                use_d_encoding: instance.with_d,
                seed: instance.seed,
                time_limit: opts.timeout,
                ..HybridConfig::default()
            };
            match factor(&n, instance.k, &leaks, &config) {
                Ok((p, q, stats)) => record.with_factors(&p, &q).with_stats(&stats),
                Err(PipelineError::Timeout(stats)) => ResultRecord { status: Status::Timeout, ..record.with_stats(&stats) },
                Err(PipelineError::UnsatEncoding(stats)) => ResultRecord { status: Status::Unsat, ..record.with_stats(&stats) },
                Err(e) => {
                    log::error!("{e}");
                    let stats = RunStats { wall_time: started.elapsed(), ..RunStats::default() };
                    ResultRecord { status: Status::Error, ..record.with_stats(&stats) }
                }
            }
        }
        SolveMethod::Bnp => {
            let config = BnpConfig { track_d: instance.with_d, deadline, ..BnpConfig::default() };
            let result = branch_and_prune(&n, instance.k, &leaks, &config);
            let wall_ms = millis(started.elapsed());
            let record = ResultRecord { wall_ms, ..record };
            match result {
                Ok(out) => ResultRecord {
                    peak_frontier: Some(out.peak_frontier as u64),
                    levels_completed: Some(out.levels_completed),
                    ..record.with_factors(&out.p, &out.q)
                },
                Err(e) => {
                    log::warn!("{e}");
                    let (status, peak, levels) = match e {
                        BaselineError::BranchExplosion { peak_frontier, level, .. } => {
                            (Status::Explosion, peak_frontier, level.saturating_sub(1))
                        }
                        BaselineError::NoSolution { level, peak_frontier } => {
                            (Status::Exhausted, peak_frontier, level.saturating_sub(1))
                        }
                        BaselineError::Timeout { peak_frontier, levels_completed, .. } => {
                            (Status::Timeout, peak_frontier, levels_completed)
                        }
                        _ => (Status::Error, 0, 0),
                    };
                    ResultRecord {
                        status,
                        peak_frontier: Some(peak as u64),
                        levels_completed: Some(levels),
                        ..record
                    }
                }
            }
        }
        SolveMethod::Brute => {
            let result = brute_force_coppersmith(&n, instance.k, &leaks, opts.theta, BRUTE_FORCE_CAP, deadline);
            let wall_ms = millis(started.elapsed());
            let record = ResultRecord { wall_ms, ..record };
            match result {
                Ok(out) => ResultRecord {
                    oracle_calls: out.oracle_calls,
                    oracle_ms: millis(out.oracle_time),
                    ..record.with_factors(&out.p, &out.q)
                },
                Err(e) => {
                    log::warn!("{e}");
                    let (status, calls, time) = match e {
                        BaselineError::Exhausted { oracle_calls, oracle_time } => (Status::Exhausted, oracle_calls, oracle_time),
                        BaselineError::Timeout { oracle_calls, oracle_time, .. } => (Status::Timeout, oracle_calls, oracle_time),
                        BaselineError::Infeasible { .. } => (Status::Infeasible, 0, Duration::ZERO),
                        _ => (Status::Error, 0, Duration::ZERO),
                    };
                    ResultRecord { status, oracle_calls: calls, oracle_ms: millis(time), ..record }
                }
            }
        }
    }
}

/// Process exit code for a result: 0 found, 2 timeout or exhaustion, 1 error.
pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Found => 0,
        Status::Timeout | Status::Exhausted | Status::Infeasible | Status::Explosion => 2,
        Status::Unsat | Status::Error => 1,
    }
}

/// True iff the result's factors multiply to `N` and match the truth up to order.
pub fn verify_result(instance: &Instance, truth: &Truth, result: &ResultRecord) -> bool {
    let (Some(p), Some(q)) = (result.p_hex.as_deref().and_then(parse_hex), result.q_hex.as_deref().and_then(parse_hex)) else {
        return false;
    };
    let Some((tp, tq)) = truth.factors() else {
        return false;
    };
    let n = instance.modulus();
    let mut found = [p, q];
    found.sort();
    let mut expected = [tp, tq];
    expected.sort();
    &found[0] * &found[1] == n && found[0] > BigUint::from(1u32) && found == expected
}

/// One data row of the bench CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_bits: u64,
    pub leak_pct: f64,
    pub with_d: bool,
    pub method: String,
    pub seed: u64,
    pub status: Status,
    pub wall_ms: u64,
    pub oracle_calls: u64,
    pub oracle_ms: u64,
    pub blocking_clauses: u64,
    pub conflicts: u64,
    pub peak_frontier: Option<u64>,
}

impl BenchRow {
    fn from_record(n_bits: u64, leak_pct: f64, with_d: bool, rec: &ResultRecord) -> Self {
        BenchRow {
            n_bits,
            leak_pct,
            with_d,
            method: rec.method.clone(),
            seed: rec.seed,
            status: rec.status,
            wall_ms: rec.wall_ms,
            oracle_calls: rec.oracle_calls,
            oracle_ms: rec.oracle_ms,
            blocking_clauses: rec.blocking_clauses,
            conflicts: rec.conflicts,
            peak_frontier: rec.peak_frontier,
        }
    }

    /// Wall time, or `None` when the run did not find the factors.
    pub fn time(&self) -> Option<u64> {
        (self.status == Status::Found).then_some(self.wall_ms)
    }
}

/// Median with unsuccessful runs as +infinity. `None` means "timeout": at
/// least half the runs failed. Even counts average the two middle values.
pub fn median_ms(times: &[Option<u64>]) -> Option<f64> {
    if times.is_empty() {
        return None;
    }
    let mut sorted: Vec<Option<u64>> = times.to_vec();
    // None sorts last.
    sorted.sort_by_key(|t| t.map_or((1, 0), |v| (0, v)));
    let len = sorted.len();
    if len % 2 == 1 {
        sorted[len / 2].map(|v| v as f64)
    } else {
        match (sorted[len / 2 - 1], sorted[len / 2]) {
            (Some(a), Some(b)) => Some((a + b) as f64 / 2.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<u64>,
    pub leak_pcts: Vec<f64>,
    pub methods: Vec<SolveMethod>,
    pub with_d: bool,
    pub keys: u64,
    pub seed: u64,
    pub solve: SolveOptions,
    pub workers: usize,
    pub out_dir: PathBuf,
}

/// Per-cell summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n_bits: u64,
    pub leak_pct: f64,
    pub with_d: bool,
    pub method: String,
    pub keys: u64,
    pub found: u64,
    /// Milliseconds, or `timeout`.
    pub median_wall_ms: String,
}

type CellKey = (u64, u64, bool, String);

fn cell_key(row: &BenchRow) -> CellKey {
    (row.n_bits, row.leak_pct.to_bits(), row.with_d, row.method.clone())
}

fn format_median(m: Option<f64>) -> String {
    m.map_or_else(|| "timeout".to_string(), |v| format!("{v}"))
}

/// Groups rows by cell and computes medians, in cell order.
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<CellKey, Vec<&BenchRow>> = BTreeMap::new();
    for row in rows {
        cells.entry(cell_key(row)).or_default().push(row);
    }
    cells
        .into_values()
        .map(|rows| {
            let first = rows[0];
            let times: Vec<Option<u64>> = rows.iter().map(|r| r.time()).collect();
            SummaryRow {
                n_bits: first.n_bits,
                leak_pct: first.leak_pct,
                with_d: first.with_d,
                method: first.method.clone(),
                keys: rows.len() as u64,
                found: times.iter().filter(|t| t.is_some()).count() as u64,
                median_wall_ms: format_median(median_ms(&times)),
            }
        })
        .collect()
}

pub struct BenchOutput {
    pub rows_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub rows: Vec<BenchRow>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every (size, leak, method, key) job and writes `bench.csv` plus
/// `summary.csv`. Rows are appended and flushed as jobs finish.
pub fn bench(config: &BenchConfig) -> Result<BenchOutput, HarnessError> {
    if config.keys == 0 {
        return Err(HarnessError::Args("--keys must be at least 1".into()));
    }
    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    let rows_csv = config.out_dir.join("bench.csv");
    let summary_csv = config.out_dir.join("summary.csv");

    let mut jobs = Vec::new();
    for &bits in &config.sizes {
        for &pct in &config.leak_pcts {
            for key in 0..config.keys {
                for &method in &config.methods {
                    jobs.push((bits, pct, config.seed + key, method));
                }
            }
        }
    }
    // Generate up front so argument errors surface before any solving.
    let mut instances = BTreeMap::new();
    for &(bits, pct, seed, _) in &jobs {
        if let std::collections::btree_map::Entry::Vacant(slot) = instances.entry((bits, pct.to_bits(), seed)) {
            slot.insert(gen(bits, pct, config.with_d, seed)?.instance);
        }
    }

    let writer = csv::Writer::from_path(&rows_csv).map_err(csv_err(&rows_csv))?;
    let sink = Mutex::new((writer, Vec::with_capacity(jobs.len())));
    let next = Mutex::new(jobs.iter().enumerate());
    let failure: Mutex<Option<HarnessError>> = Mutex::new(None);

    let work = || loop {
        let Some((index, &(bits, pct, seed, method))) = next.lock().unwrap().next() else {
            break;
        };
        let instance = &instances[&(bits, pct.to_bits(), seed)];
        let record = solve_instance(instance, method, &config.solve);
        log::info!("{bits} bits, {pct}% leaked, seed {seed}, {method}: {:?} in {} ms", record.status, record.wall_ms);
        let row = BenchRow::from_record(bits, pct, config.with_d, &record);
        let mut guard = sink.lock().unwrap();
        let (writer, rows) = &mut *guard;
        let written = writer.serialize(&row).and_then(|_| writer.flush().map_err(csv::Error::from));
        if let Err(e) = written {
            failure.lock().unwrap().get_or_insert(csv_err(&rows_csv)(e));
        }
        rows.push((index, row));
    };
    let workers = config.workers.max(1);
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let (_, mut indexed) = sink.into_inner().unwrap();
    indexed.sort_by_key(|(i, _)| *i);
    let rows: Vec<BenchRow> = indexed.into_iter().map(|(_, r)| r).collect();

    let summary = summarize(&rows);
    let mut out = csv::Writer::from_path(&summary_csv).map_err(csv_err(&summary_csv))?;
    for row in &summary {
        out.serialize(row).map_err(csv_err(&summary_csv))?;
    }
    out.flush().map_err(io_err(&summary_csv))?;
    Ok(BenchOutput { rows_csv, summary_csv, rows, summary })
}

pub fn read_bench_rows(path: &Path) -> Result<Vec<BenchRow>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

/// Result of [`report`]: a printable table and the series files written.
pub struct Report {
    pub table: String,
    pub series: Vec<PathBuf>,
}

fn log2_ms(ms: f64) -> f64 {
    // Sub-millisecond medians plot at zero.
    ms.max(1.0).log2()
}

/// Median tables and per-method TSV series (median vs size at each leak
/// percentage, median vs leak percentage at each size). A series is only
/// emitted along an axis with more than one distinct value; timeout cells
/// are left out.
pub fn report(csv_path: &Path, out_dir: &Path) -> Result<Report, HarnessError> {
    let rows = read_bench_rows(csv_path)?;
    let summary = summarize(&rows);
    let mut table = String::new();
    if summary.is_empty() {
        return Ok(Report { table, series: Vec::new() });
    }
    table.push_str("n_bits\tleak_pct\twith_d\tmethod\tkeys\tfound\tmedian_ms\n");
    for s in &summary {
        table.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            s.n_bits, s.leak_pct, s.with_d, s.method, s.keys, s.found, s.median_wall_ms
        ));
    }

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut sizes: Vec<u64> = summary.iter().map(|s| s.n_bits).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut pcts: Vec<u64> = summary.iter().map(|s| s.leak_pct.to_bits()).collect();
    pcts.sort_by(|a, b| f64::from_bits(*a).total_cmp(&f64::from_bits(*b)));
    pcts.dedup();

    // (method, with_d) -> points
    let mut by_size: BTreeMap<(String, bool, u64), Vec<(u64, f64)>> = BTreeMap::new();
    let mut by_leak: BTreeMap<(String, bool, u64), Vec<(f64, f64)>> = BTreeMap::new();
    for s in &summary {
        let Ok(median) = s.median_wall_ms.parse::<f64>() else {
            continue;
        };
        by_size.entry((s.method.clone(), s.with_d, s.leak_pct.to_bits())).or_default().push((s.n_bits, median));
        by_leak.entry((s.method.clone(), s.with_d, s.n_bits)).or_default().push((s.leak_pct, median));
    }

    let mut series = Vec::new();
    let suffix = |with_d: bool| if with_d { "_d" } else { "" };
    if sizes.len() > 1 {
        for ((method, with_d, pct), mut points) in by_size {
            points.sort_by_key(|p| p.0);
            let path = out_dir.join(format!("{method}{}_vs_size_leak{}.tsv", suffix(with_d), f64::from_bits(pct)));
            let mut text = String::from("n_bits\tlog2_n_bits\tmedian_ms\tlog2_median_ms\n");
            for (bits, ms) in points {
                text.push_str(&format!("{bits}\t{}\t{ms}\t{}\n", (bits as f64).log2(), log2_ms(ms)));
            }
            fs::write(&path, text).map_err(io_err(&path))?;
            series.push(path);
        }
    }
    if pcts.len() > 1 {
        for ((method, with_d, bits), mut points) in by_leak {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            let path = out_dir.join(format!("{method}{}_vs_leak_n{bits}.tsv", suffix(with_d)));
            let mut text = String::from("leak_pct\tmedian_ms\tlog2_median_ms\n");
            for (pct, ms) in points {
                text.push_str(&format!("{pct}\t{ms}\t{}\n", log2_ms(ms)));
            }
            fs::write(&path, text).map_err(io_err(&path))?;
            series.push(path);
        }
    }
    Ok(Report { table, series })
}
