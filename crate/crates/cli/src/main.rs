//! `mcsched` command-line front end.
//!
//! Exit status: 0 on success or pass, 1 when the system is unschedulable or
//! a check fails, 2 on usage, parse, or I/O errors.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mcsched::bench::{run_sweep, to_csv, BenchConfig};
use mcsched::gen::{generate_system, GenParams};
use mcsched::model::McSystem;
use mcsched::pdq::PeriodicQueue;
use mcsched::sched::{check_mc_correct, count_preemptions, simulate_switch, synthesize, Policy, ScheduleTable};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "mcsched", version, about = "Mixed-criticality DAG scheduling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random MC system as JSON.
    Gen {
        /// Total utilization in both modes.
        #[arg(long)]
        u: f64,
        #[arg(long, default_value_t = 2)]
        dags: usize,
        /// Vertices per DAG.
        #[arg(long, default_value_t = 10)]
        vertices: usize,
        /// Ratio of HI vertices.
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        /// HI budget reduction factor in LO mode.
        #[arg(long, default_value_t = 2.0)]
        f: f64,
        /// Edge probability.
        #[arg(long, default_value_t = 0.2)]
        e: f64,
        #[arg(long, default_value_t = 4)]
        cores: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SystemFormat::Json)]
        format: SystemFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Synthesize LO and HI scheduling tables.
    Sched {
        system: PathBuf,
        #[arg(long, default_value = "llf", value_parser = parse_policy)]
        policy: Policy,
        #[arg(long, default_value = "lo.json")]
        lo: PathBuf,
        #[arg(long, default_value = "hi.json")]
        hi: PathBuf,
        /// Also print both tables as Gantt charts.
        #[arg(long, value_enum, default_value_t = TableFormat::Json)]
        format: TableFormat,
    },
    /// Check MC-correctness of a table pair.
    Check { system: PathBuf, lo: PathBuf, hi: PathBuf },
    /// Check every mode-switch instant (or just `--tfe`) against the HI table.
    SwitchSim {
        system: PathBuf,
        lo: PathBuf,
        hi: PathBuf,
        #[arg(long)]
        tfe: Option<u64>,
    },
    /// Simulate a periodic-delayed queue and write the delivery trace as CSV.
    PdqSim {
        queue: PathBuf,
        /// Defaults to two hyperperiods.
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run an acceptance-rate sweep from a `key = value` config file.
    Bench {
        config: PathBuf,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        /// Leave wall-time columns empty so output is reproducible.
        #[arg(long)]
        no_timing: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemFormat {
    Json,
    Dot,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Json,
    Gantt,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse()
}

enum Failure {
    /// Unschedulable system or failed check.
    Domain(String),
    Usage(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(|e| usage(format!("stdin: {e}")))?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) if p != Path::new("-") => fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        _ => io::stdout().write_all(text.as_bytes()).map_err(|e| usage(format!("stdout: {e}"))),
    }
}

fn load_system(path: &Path) -> Result<McSystem, Failure> {
    McSystem::from_json_validated(&read_input(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_table(path: &Path) -> Result<ScheduleTable, Failure> {
    ScheduleTable::from_json(&read_input(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen { u, dags, vertices, rho, f, e, cores, seed, format, output } => {
            let params = GenParams { u_target: u, n_dags: dags, n_vertices_per_dag: vertices, rho, f, e, cores, seed };
            let sys = generate_system(&params).map_err(usage)?;
            let text = match format {
                SystemFormat::Json => sys.to_json() + "\n",
                SystemFormat::Dot => sys.to_dot(),
            };
            write_output(output.as_deref(), &text)
        }
        Command::Sched { system, policy, lo, hi, format } => {
            let sys = load_system(&system)?;
            for (dag, src, dst) in sys.lo_to_hi_edges() {
                eprintln!("warning: dag {dag}: LO vertex {src} precedes HI vertex {dst}; edge ignored in HI mode");
            }
            let s = match synthesize(&sys, policy) {
                Ok(s) => s,
                Err(e) if e.is_unschedulable() => return Err(Failure::Domain(format!("{policy}: {e}"))),
                Err(e) => return Err(usage(e)),
            };
            write_output(Some(&lo), &(s.lo.to_json() + "\n"))?;
            write_output(Some(&hi), &(s.hi.to_json() + "\n"))?;
            if let TableFormat::Gantt = format {
                print!("{}{}", s.lo.gantt(), s.hi.gantt());
            }
            eprintln!(
                "{policy}: schedulable; preemptions LO {} HI {}",
                count_preemptions(&s.lo, &sys).total,
                count_preemptions(&s.hi, &sys).total
            );
            Ok(())
        }
        Command::Check { system, lo, hi } => {
            let sys = load_system(&system)?;
            let report = check_mc_correct(&load_table(&lo)?, &load_table(&hi)?, &sys);
            match report.first() {
                None => {
                    println!("MC-correct");
                    Ok(())
                }
                Some(v) => {
                    println!("not MC-correct ({} violations)", report.violations.len());
                    Err(Failure::Domain(v.to_string()))
                }
            }
        }
        Command::SwitchSim { system, lo, hi, tfe } => {
            let sys = load_system(&system)?;
            let (lo, hi) = (load_table(&lo)?, load_table(&hi)?);
            let instants: Vec<u64> = match tfe {
                Some(t) if t >= lo.horizon => return Err(usage(format!("--tfe {t} outside horizon {}", lo.horizon))),
                Some(t) => vec![t],
                None => (0..lo.horizon).collect(),
            };
            for t in &instants {
                if let Err(misses) = simulate_switch(&lo, &hi, &sys, *t) {
                    println!("unsafe");
                    return Err(Failure::Domain(misses[0].to_string()));
                }
            }
            println!("safe at {} switch instants", instants.len());
            Ok(())
        }
        Command::PdqSim { queue, horizon, seed, output } => {
            let q = PeriodicQueue::from_json(&read_input(&queue)?).map_err(usage)?;
            let horizon = match horizon {
                Some(h) => h,
                None => 2 * q.hyperperiod().map_err(usage)?,
            };
            let sim = q
                .simulate(horizon, &mut ChaCha8Rng::seed_from_u64(seed))
                .map_err(|e| Failure::Domain(e.to_string()))?;
            write_output(output.as_deref(), &sim.trace.to_csv(&q))
        }
        Command::Bench { config, jobs, no_timing, output } => {
            let mut cfg = BenchConfig::parse(&read_input(&config)?).map_err(usage)?;
            if jobs.is_some() {
                cfg.jobs = jobs;
            }
            cfg.check().map_err(usage)?;
            let records = run_sweep(&cfg).map_err(usage)?;
            write_output(output.as_deref(), &to_csv(&records, !no_timing))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
