use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use copperbolt::harness::{
    self, exit_code, instance_stem, read_instance, read_result, read_truth, verify_result, write_generated,
    write_result, BenchConfig, HarnessError, SolveMethod, SolveOptions,
};

#[derive(Parser)]
#[command(name = "copperbolt", version, about = "Factor RSA moduli from leaked key bits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance, its ground truth and its DIMACS encoding.
    Gen {
        #[arg(long)]
        bits: u64,
        #[arg(long = "leak-pct")]
        leak_pct: f64,
        #[arg(long = "with-d")]
        with_d: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "out-dir", default_value = ".")]
        out_dir: PathBuf,
    },
    /// Solve an instance file and print the result record.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value = "satcas", value_parser = parse_method)]
        method: SolveMethod,
        #[arg(long, default_value_t = 0.6)]
        theta: f64,
        #[arg(long = "timeout-s", default_value_t = 600.0)]
        timeout_s: f64,
        /// Also write the record next to other results here.
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
    },
    /// Run a grid of sizes, leak percentages and methods.
    Bench {
        #[arg(long, value_delimiter = ',', required = true)]
        bits: Vec<u64>,
        #[arg(long = "leak-pct", value_delimiter = ',', required = true)]
        leak_pct: Vec<f64>,
        #[arg(long = "with-d")]
        with_d: bool,
        #[arg(long, value_delimiter = ',', default_value = "satcas,sat", value_parser = parse_method)]
        method: Vec<SolveMethod>,
        #[arg(long, default_value_t = 0.6)]
        theta: f64,
        #[arg(long, default_value_t = 5)]
        keys: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "timeout-s", default_value_t = 600.0)]
        timeout_s: f64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long = "out-dir", default_value = "bench-out")]
        out_dir: PathBuf,
    },
    /// Summarize a bench CSV into tables and TSV series.
    Report {
        csv: PathBuf,
        #[arg(long = "out-dir", default_value = "report")]
        out_dir: PathBuf,
    },
    /// Check a result against an instance and its ground truth.
    Verify { instance: PathBuf, truth: PathBuf, result: PathBuf },
}

fn parse_method(s: &str) -> Result<SolveMethod, String> {
    SolveMethod::parse(s).ok_or_else(|| format!("unknown method `{s}` (expected sat, satcas, bnp or brute)"))
}

fn timeout(secs: f64) -> Result<Option<Duration>, HarnessError> {
    if secs.is_nan() || secs < 0.0 {
        return Err(HarnessError::Args(format!("--timeout-s must be non-negative, got {secs}")));
    }
    Ok((secs > 0.0).then(|| Duration::from_secs_f64(secs)))
}

fn stem_of(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.trim_end_matches(".json").trim_end_matches(".instance").to_string()
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Gen { bits, leak_pct, with_d, seed, out_dir } => {
            let generated = harness::gen(bits, leak_pct, with_d, seed)?;
            let files = write_generated(&generated, &out_dir, &instance_stem(bits, leak_pct, with_d, seed))?;
            for path in [files.instance, files.truth, files.dimacs] {
                println!("{}", path.display());
            }
            Ok(0)
        }
        Command::Solve { instance, method, theta, timeout_s, out_dir } => {
            let parsed = read_instance(&instance)?;
            let opts = SolveOptions { theta, timeout: timeout(timeout_s)? };
            let record = harness::solve_instance(&parsed, method, &opts);
            println!("{}", record.to_json());
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir).map_err(|source| HarnessError::Io { path: dir.clone(), source })?;
                write_result(&dir.join(format!("{}.{method}.result.json", stem_of(&instance))), &record)?;
            }
            Ok(exit_code(record.status))
        }
        Command::Bench { bits, leak_pct, with_d, method, theta, keys, seed, timeout_s, workers, out_dir } => {
            let config = BenchConfig {
                sizes: bits,
                leak_pcts: leak_pct,
                methods: method,
                with_d,
                keys,
                seed,
                solve: SolveOptions { theta, timeout: timeout(timeout_s)? },
                workers,
                out_dir,
            };
            let out = harness::bench(&config)?;
            println!("{}", out.rows_csv.display());
            println!("{}", out.summary_csv.display());
            Ok(0)
        }
        Command::Report { csv, out_dir } => {
            let report = harness::report(&csv, &out_dir)?;
            print!("{}", report.table);
            for path in report.series {
                println!("{}", path.display());
            }
            Ok(0)
        }
        Command::Verify { instance, truth, result } => {
            let instance = read_instance(&instance)?;
            let truth = read_truth(&truth)?;
            let result = read_result(&result)?;
            if verify_result(&instance, &truth, &result) {
                println!("ok");
                Ok(0)
            } else {
                println!("mismatch");
                Ok(1)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COPPERBOLT_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
