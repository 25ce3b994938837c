//! End-to-end acceptance checks. Runs as a plain binary so every check prints
//! exactly one PASS/FAIL line regardless of output capture; exits non-zero if
//! any check fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use copperbolt::cnfenc::{d_tilde, decode_bits, encode_d_equation, encode_factoring, fixed_high_bits_of_d};
use copperbolt::coppersmith::{
    build_lsb_basis, build_msb_basis, lsb_root_bound, recover_factor_lsb, recover_factor_msb, LsbProblem, MsbProblem,
    OracleOptions, OracleOutcome,
};
use copperbolt::harness::{gen, solve_instance, SolveMethod, SolveOptions};
use copperbolt::lattice::{is_lll_reduced, lll_reduce, Basis};
use copperbolt::numtheory::{gen_prime, isqrt, mod_inverse};
use copperbolt::pipeline::{factor_traced, threshold_bits, HybridConfig, Method, ResultRecord, Status};
use copperbolt::polyint::row_to_poly;
use copperbolt::satcore::{self, NoObserver, SolveResult, SolverConfig};
use copperbolt::{Int, LatticeBasis, Nat};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn nat(v: u64) -> Nat {
    BigUint::from(v)
}

fn semiprime(k: u64, rng: &mut ChaCha8Rng, e3: bool) -> (Nat, Nat, Nat) {
    loop {
        let a = gen_prime(k, rng, e3);
        let b = gen_prime(k, rng, e3);
        if a != b {
            let (p, q) = if a < b { (a, b) } else { (b, a) };
            return (&p * &q, p, q);
        }
    }
}

fn is_prime_by_trial(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

fn check_msb_example(bases: &mut Vec<LatticeBasis>) -> Outcome {
    let started = Instant::now();
    let problem = MsbProblem::new(nat(16_803_551), nat(2830), nat(10)).unwrap();
    let opts = OracleOptions::default();
    let factors = recover_factor_msb(&problem, &opts).unwrap();
    let basis = build_msb_basis(&problem, &opts).unwrap();
    let reduced = lll_reduce(&basis).unwrap();
    let poly = row_to_poly(&reduced.rows()[0], &BigInt::from(10)).unwrap();
    let roots = poly.integer_roots(&BigInt::from(10));
    bases.push(basis);
    let elapsed = started.elapsed();
    let expected = OracleOutcome::Factors { p: nat(2837), q: nat(5923) };
    let pass = factors == expected && roots == vec![BigInt::from(7)] && elapsed < Duration::from_secs(1);
    outcome(pass, format!("{factors:?}, first-row roots {roots:?}, {:.1} ms", elapsed.as_secs_f64() * 1e3))
}

fn lsb_bits(n: &Nat, k: u64) -> u64 {
    let log_x = lsb_root_bound(n).bits() - 1;
    ((0.6 * k as f64).ceil() as u64).max(k - log_x)
}

fn check_lsb_completeness(bases: &mut Vec<LatticeBasis>) -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let opts = OracleOptions::default();
    let (mut found, mut rejected, mut false_factors, mut total) = (0, 0, 0, 0);
    for &k in &[16u64, 24, 32, 40] {
        for _ in 0..50 {
            total += 1;
            let (n, p, q) = semiprime(k, &mut rng, false);
            // Either factor may be the one whose bits leaked.
            let target = if rng.gen::<bool>() { &p } else { &q };
            let m = lsb_bits(&n, k);
            let low = target % (BigUint::one() << m);
            let problem = LsbProblem::new(n.clone(), m, low.clone()).unwrap();
            bases.push(build_lsb_basis(&problem, &opts).unwrap().0);
            match recover_factor_lsb(&problem, &opts).unwrap() {
                OracleOutcome::Factors { p: a, q: b } if (a.clone(), b.clone()) == (p.clone(), q.clone()) => found += 1,
                _ => {}
            }
            let flip = rng.gen_range(1..m);
            let wrong = low ^ (BigUint::one() << flip);
            let problem = LsbProblem::new(n.clone(), m, wrong).unwrap();
            match recover_factor_lsb(&problem, &opts).unwrap() {
                OracleOutcome::NoFactorFound { .. } => rejected += 1,
                OracleOutcome::Factors { .. } => false_factors += 1,
            }
        }
    }
    let elapsed = started.elapsed();
    let pass = found == total && rejected == total && false_factors == 0 && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "recovered {found}/{total}, rejected flipped {rejected}/{total}, false factors {false_factors}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn check_blocking_soundness() -> Outcome {
    let primes: Vec<u64> = (1u64 << 11..1 << 12).filter(|&v| is_prime_by_trial(v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut blocks = 0usize;
    let mut violations = 0usize;
    let mut solved = 0usize;
    for i in 0..20 {
        let (n, p, q) = semiprime(12, &mut rng, false);
        let n64 = n.to_u64().unwrap();
        let t = threshold_bits(12, &n, 0.6).unwrap();
        let config = HybridConfig { seed: i, ..HybridConfig::new(Method::Satcas) };
        let (result, blocked) = factor_traced(&n, 12, &[], &config);
        if matches!(result, Ok((ref a, ref b, _)) if (a, b) == (&p, &q)) {
            solved += 1;
        }
        let factor_lows: Vec<u64> =
            primes.iter().filter(|&&r| n64 % r == 0).map(|&r| r & ((1 << t) - 1)).collect();
        for pattern in &blocked {
            blocks += 1;
            if factor_lows.contains(&pattern.to_u64().unwrap()) {
                violations += 1;
            }
        }
    }
    let pass = violations == 0 && solved == 20 && blocks > 0;
    outcome(pass, format!("{blocks} blocking clauses over 20 runs, {violations} violations, {solved}/20 factored"))
}

fn abs(v: &Int) -> Int {
    v.abs()
}

/// Shortest nonzero squared norm by exhaustive enumeration over a box of
/// coefficients that provably contains every vector no longer than `bound`.
fn shortest_sq(rows: &[Vec<i64>]) -> Option<i128> {
    let n = rows.len();
    let bound_sq: i128 = rows.iter().map(|r| r.iter().map(|&x| (x as i128).pow(2)).sum::<i128>()).min()?;
    // Coefficients c of v = c B satisfy |c_i| <= |v| * |column i of B^-1|.
    let a: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
    let inv = invert(&a)?;
    let bound = (bound_sq as f64).sqrt();
    let limits: Vec<i64> = (0..n)
        .map(|i| {
            let col: f64 = (0..n).map(|j| inv[j][i] * inv[j][i]).sum::<f64>().sqrt();
            (bound * col * (1.0 + 1e-9)).floor() as i64 + 1
        })
        .collect();
    let volume: f64 = limits.iter().map(|&l| (2 * l + 1) as f64).product();
    if volume > 5e7 {
        return None;
    }
    let mut best = bound_sq;
    let mut coeffs: Vec<i64> = limits.iter().map(|&l| -l).collect();
    loop {
        if coeffs.iter().any(|&c| c != 0) {
            let mut norm = 0i128;
            for col in 0..rows[0].len() {
                let x: i128 = (0..n).map(|i| coeffs[i] as i128 * rows[i][col] as i128).sum();
                norm += x * x;
            }
            best = best.min(norm);
        }
        let mut i = 0;
        loop {
            if i == n {
                return Some(best);
            }
            if coeffs[i] < limits[i] {
                coeffs[i] += 1;
                break;
            }
            coeffs[i] = -limits[i];
            i += 1;
        }
    }
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().copied().chain((0..n).map(|j| if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        let p = m[col][col];
        for x in m[col].iter_mut() {
            *x /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                for (x, y) in m[r].iter_mut().zip(pivot_row) {
                    *x -= f * y;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

fn check_lll(extra: &[LatticeBasis]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut checked, mut violations, mut lambda_checked, mut lambda_skipped) = (0, 0, 0, 0);
    let mut first_problem = String::new();
    let mut bases: Vec<(LatticeBasis, Option<Vec<Vec<i64>>>)> = Vec::new();
    while bases.len() < 500 {
        let dim = rng.gen_range(2..=5);
        let rows: Vec<Vec<i64>> = (0..dim).map(|_| (0..dim).map(|_| rng.gen_range(-1000..=1000)).collect()).collect();
        let big: Vec<Vec<Int>> = rows.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect();
        let basis = Basis::new(big).unwrap();
        if basis.determinant().is_zero() {
            continue;
        }
        bases.push((basis, Some(rows)));
    }
    bases.extend(extra.iter().cloned().map(|b| (b, None)));
    for (basis, small) in &bases {
        checked += 1;
        let reduced = lll_reduce(basis).unwrap();
        let reduced_ok = matches!(is_lll_reduced(&reduced), Ok(Ok(())));
        let det_ok = abs(&reduced.determinant()) == abs(&basis.determinant());
        let mut bound_ok = true;
        if let Some(rows) = small.as_ref().filter(|r| r.len() <= 3) {
            match shortest_sq(rows) {
                Some(lambda_sq) => {
                    lambda_checked += 1;
                    let b1: i128 = reduced.rows()[0].iter().map(|x| x.to_i128().unwrap().pow(2)).sum();
                    // |b1|^2 <= 2^(n-1) * lambda1^2
                    bound_ok = b1 <= (1i128 << (rows.len() - 1)) * lambda_sq;
                }
                None => lambda_skipped += 1,
            }
        }
        if !(reduced_ok && det_ok && bound_ok) {
            violations += 1;
            if first_problem.is_empty() {
                first_problem = format!(" (first: reduced {reduced_ok}, det {det_ok}, bound {bound_ok})");
            }
        }
    }
    let pass = violations == 0 && lambda_skipped == 0;
    outcome(
        pass,
        format!(
            "{checked} bases ({} from the oracles), {violations} violations{first_problem}, lambda1 checked on {lambda_checked}, skipped {lambda_skipped}",
            extra.len()
        ),
    )
}

fn check_lemma() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut bound_fail, mut prefix_fail, mut prefix_bits) = (0, 0, 0u64);
    for i in 0..500u64 {
        let k = 8 + (i % 25);
        let (n, p, q) = semiprime(k, &mut rng, true);
        let phi = (&p - 1u32) * (&q - 1u32);
        let d = mod_inverse(&nat(3), &phi).unwrap();
        let dt = d_tilde(&n);
        if !(dt >= d && &dt - &d < isqrt(&(&n * 2u32)) + 1u32) {
            bound_fail += 1;
        }
        let n_bits = n.bits();
        let (l, prefix) = fixed_high_bits_of_d(&n, n_bits);
        prefix_bits += l;
        let actual: Vec<bool> = (0..l).map(|j| d.bit(n_bits - 1 - j)).collect();
        if actual != prefix {
            prefix_fail += 1;
        }
    }
    let n = nat(788_131);
    let d = mod_inverse(&nat(3), &nat(826 * 952)).unwrap();
    let (l, _) = fixed_high_bits_of_d(&n, n.bits());
    let example_ok = d == nat(524_235) && d_tilde(&n) == nat(525_421) && l == 0;
    let pass = bound_fail == 0 && prefix_fail == 0 && example_ok;
    outcome(
        pass,
        format!(
            "500 keys: bound failures {bound_fail}, prefix failures {prefix_fail}, mean prefix {:.1} bits; N=788131 gives d={d}, d~={}, l={l}",
            prefix_bits as f64 / 500.0,
            d_tilde(&n)
        ),
    )
}

/// All models, by repeatedly solving and blocking the last one.
fn all_models(cnf: &copperbolt::cnfenc::CnfFormula) -> Vec<Vec<bool>> {
    let mut cnf = cnf.clone();
    let mut models = Vec::new();
    loop {
        match satcore::solve(&cnf, SolverConfig::default(), &mut NoObserver).unwrap().0 {
            SolveResult::Sat(m) => {
                let block: Vec<i32> =
                    m.values.iter().enumerate().map(|(i, &v)| if v { -(i as i32 + 1) } else { i as i32 + 1 }).collect();
                cnf.add_clause(&block);
                models.push(m.values);
            }
            SolveResult::Unsat => return models,
            other => panic!("unexpected {other:?}"),
        }
    }
}

fn check_encoding() -> Outcome {
    let (mut moduli, mut mismatches, mut d_checked, mut d_wrong) = (0, 0, 0, 0);
    for k in 2u64..=5 {
        let primes: Vec<u64> = (1u64 << (k - 1)..1 << k).filter(|&v| v % 2 == 1 && is_prime_by_trial(v)).collect();
        for (i, &a) in primes.iter().enumerate() {
            for &b in &primes[i..] {
                moduli += 1;
                let n = nat(a * b);
                let (cnf, map) = encode_factoring(&n, k).unwrap();
                let found: BTreeSet<(u64, u64)> = all_models(&cnf)
                    .iter()
                    .map(|m| {
                        let p = decode_bits(&map.p_bits, |v| m[v as usize - 1]).to_u64().unwrap();
                        let q = decode_bits(&map.q_bits, |v| m[v as usize - 1]).to_u64().unwrap();
                        (p, q)
                    })
                    .collect();
                let models = all_models(&cnf).len();
                let expected: BTreeSet<(u64, u64)> = [(a, b), (b, a)].into_iter().collect();
                if found != expected || models != expected.len() {
                    mismatches += 1;
                }

                let (mut cnf_d, mut map_d) = (cnf.clone(), map.clone());
                encode_d_equation(&mut cnf_d, &mut map_d);
                let phi = (a - 1) * (b - 1);
                let expected_d = (phi % 3 == 1).then(|| mod_inverse(&nat(3), &nat(phi)).unwrap());
                let d_bits = map_d.d_bits.clone().unwrap();
                let models = all_models(&cnf_d);
                match &expected_d {
                    Some(d) => {
                        d_checked += 1;
                        let ok = models.len() == expected.len()
                            && models.iter().all(|m| &decode_bits(&d_bits, |v| m[v as usize - 1]) == d);
                        if !ok {
                            d_wrong += 1;
                        }
                    }
                    // No integer d solves the relation for these primes.
                    None => {
                        if !models.is_empty() {
                            d_wrong += 1;
                        }
                    }
                }
            }
        }
    }
    let pass = mismatches == 0 && d_wrong == 0 && d_checked > 0;
    outcome(
        pass,
        format!("{moduli} moduli, {mismatches} factor-set mismatches; d decoded on {d_checked} moduli, {d_wrong} wrong"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn seconds(rec: &ResultRecord, elapsed: Duration) -> f64 {
    if rec.status == Status::Found {
        elapsed.as_secs_f64()
    } else {
        f64::INFINITY
    }
}

fn check_speed_trend() -> Outcome {
    let sat_limit = Duration::from_secs(150);
    let (mut satcas, mut sat) = (Vec::new(), Vec::new());
    for seed in 0..11 {
        let g = gen(128, 45.0, false, 1000 + seed).unwrap();
        for (method, times, limit) in
            [(SolveMethod::Satcas, &mut satcas, Duration::from_secs(300)), (SolveMethod::Sat, &mut sat, sat_limit)]
        {
            let started = Instant::now();
            let rec = solve_instance(&g.instance, method, &SolveOptions { theta: 0.6, timeout: Some(limit) });
            times.push(seconds(&rec, started.elapsed()));
        }
    }
    let (mc, ms) = (median(satcas.clone()), median(sat.clone()));
    let pass = mc <= 0.5 * ms && mc <= 300.0;
    let timeouts = sat.iter().filter(|t| t.is_infinite()).count();
    outcome(
        pass,
        format!(
            "median satcas {mc:.3} s, median sat-only {ms:.3} s (ratio {:.3}, {timeouts} sat-only runs over {} s)",
            mc / ms,
            sat_limit.as_secs()
        ),
    )
}

/// Unknown low bits of `p` that brute force would enumerate.
fn brute_width(g: &copperbolt::harness::Generated) -> Option<u64> {
    let n = g.instance.modulus();
    let t = threshold_bits(g.instance.k, &n, 0.6).ok()?;
    let known = g
        .instance
        .leaks
        .iter()
        .filter(|l| l.target == copperbolt::cnfenc::Component::P && l.index < t && l.index > 0)
        .count() as u64;
    Some(t - 1 - known)
}

/// Brute force is run when it needs at most this many oracle calls.
const BRUTE_FEASIBLE_BITS: u64 = 12;

fn agreement_instances() -> Vec<copperbolt::harness::Generated> {
    let sizes = [32u64, 48, 64, 80, 96];
    let leaks = [50.0, 60.0, 70.0];
    (0..50u64)
        .map(|i| gen(sizes[i as usize % 5], leaks[(i / 5) as usize % 3], i % 4 == 3, 2000 + i).unwrap())
        .collect()
}

fn solve_all(g: &copperbolt::harness::Generated) -> Vec<ResultRecord> {
    let opts = SolveOptions { theta: 0.6, timeout: Some(Duration::from_secs(120)) };
    let mut methods = vec![SolveMethod::Satcas, SolveMethod::Sat, SolveMethod::Bnp];
    if brute_width(g).is_some_and(|w| w <= BRUTE_FEASIBLE_BITS) {
        methods.push(SolveMethod::Brute);
    }
    methods.into_iter().map(|m| solve_instance(&g.instance, m, &opts)).collect()
}

fn check_agreement(records: &[Vec<ResultRecord>], instances: &[copperbolt::harness::Generated]) -> Outcome {
    let (mut agree, mut brute_runs) = (0, 0);
    let mut disagreements = Vec::new();
    for (i, (recs, g)) in records.iter().zip(instances).enumerate() {
        let truth = (g.truth.p_hex.clone(), g.truth.q_hex.clone());
        brute_runs += recs.iter().filter(|r| r.method == "brute").count();
        let all_match = recs.iter().all(|r| {
            r.status == Status::Found && {
                let mut pair = [r.p_hex.clone().unwrap(), r.q_hex.clone().unwrap()];
                pair.sort_by_key(|h| Nat::parse_bytes(h.as_bytes(), 16).unwrap());
                (pair[0].clone(), pair[1].clone()) == truth
            }
        });
        if all_match {
            agree += 1;
        } else {
            let statuses: Vec<String> = recs.iter().map(|r| format!("{}={:?}", r.method, r.status)).collect();
            disagreements.push(format!("#{i} {}", statuses.join(",")));
        }
    }
    let pass = agree == records.len();
    outcome(
        pass,
        format!(
            "{agree}/{} instances with identical factors across methods ({brute_runs} brute-force runs){}",
            records.len(),
            if disagreements.is_empty() { String::new() } else { format!("; {}", disagreements.join("; ")) }
        ),
    )
}

fn check_determinism(first: &[Vec<ResultRecord>], instances: &[copperbolt::harness::Generated]) -> Outcome {
    let mut identical = 0;
    let mut compared = 0;
    let regenerated = agreement_instances();
    let same_instances = regenerated.iter().zip(instances).all(|(a, b)| a.instance == b.instance && a.truth == b.truth);
    for (recs, g) in first.iter().zip(instances).take(20) {
        let rerun = solve_all(g);
        for (a, b) in recs.iter().zip(&rerun) {
            compared += 1;
            if a.without_timings().to_json() == b.without_timings().to_json() {
                identical += 1;
            }
        }
    }
    // Generated files too.
    let dir = std::env::temp_dir().join(format!("copperbolt-acceptance-{}", std::process::id()));
    let mut files_same = same_instances;
    for seed in 0..5u64 {
        let a = copperbolt::harness::write_generated(&gen(64, 50.0, seed % 2 == 1, seed).unwrap(), &dir, "a").unwrap();
        let b = copperbolt::harness::write_generated(&gen(64, 50.0, seed % 2 == 1, seed).unwrap(), &dir, "b").unwrap();
        for (x, y) in [(&a.instance, &b.instance), (&a.truth, &b.truth), (&a.dimacs, &b.dimacs)] {
            files_same &= std::fs::read(x).unwrap() == std::fs::read(y).unwrap();
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    let pass = identical == compared && files_same;
    outcome(
        pass,
        format!("{identical}/{compared} re-run records byte-identical apart from wall-clock fields; generated files identical: {files_same}"),
    )
}

fn main() {
    let mut oracle_bases = Vec::new();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        let out = f();
        println!(
            "[{}] criterion {id}: {name}: {} ({:.1} s)",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            started.elapsed().as_secs_f64()
        );
        results.push((id, name, out));
    };
    run(1, "MSB lattice example", &mut || check_msb_example(&mut oracle_bases));
    run(2, "LSB oracle completeness", &mut || check_lsb_completeness(&mut oracle_bases));
    run(3, "blocking clause soundness", &mut check_blocking_soundness);
    let extra = oracle_bases.clone();
    run(4, "LLL invariants", &mut || check_lll(&extra));
    run(5, "d approximation and prefix", &mut check_lemma);
    run(6, "encoding soundness and completeness", &mut check_encoding);
    run(7, "hybrid speed trend at 128 bits", &mut check_speed_trend);
    let instances = agreement_instances();
    let mut records: Vec<Vec<ResultRecord>> = Vec::new();
    run(8, "cross-method agreement", &mut || {
        records = instances.iter().map(solve_all).collect();
        check_agreement(&records, &instances)
    });
    run(9, "determinism", &mut || check_determinism(&records, &instances));

    let failed: Vec<u32> = results.iter().filter(|(_, _, o)| !o.pass).map(|(id, _, _)| *id).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
