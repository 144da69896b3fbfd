//! Acceptance-rate experiments.
//!
//! For every normalized utilization point, `n_systems` random systems are
//! generated from seeds derived from the master seed, and every policy is
//! run on the same systems. A system is accepted by a policy when both
//! tables are synthesized and pass the MC-correctness check.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::gen::{generate_system, GenError, GenParams};
use crate::model::{gcd, McSystem};
use crate::sched::{check_mc_correct, count_preemptions, synthesize, Policy};

/// Fresh seeds tried per system slot when the generator reports the
/// drawn utilizations infeasible.
pub const MAX_REGENERATIONS: u64 = 1000;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("system {index} at u_norm={u_norm}: generator infeasible after {MAX_REGENERATIONS} seeds")]
    Exhausted { u_norm: f64, index: usize },
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("invalid config `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub cores: u32,
    pub n_dags: usize,
    pub n_vertices_per_dag: usize,
    pub rho: f64,
    pub f: f64,
    pub e: f64,
    pub u_norm_points: Vec<f64>,
    pub n_systems_per_point: usize,
    pub policies: Vec<Policy>,
    pub master_seed: u64,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            cores: 4,
            n_dags: 2,
            n_vertices_per_dag: 10,
            rho: 0.5,
            f: 2.0,
            e: 0.2,
            u_norm_points: (3..=9).map(|i| i as f64 / 10.0).collect(),
            n_systems_per_point: 100,
            policies: Policy::ALL.to_vec(),
            master_seed: 1,
            jobs: None,
        }
    }
}

impl BenchConfig {
    pub fn check(&self) -> Result<(), BenchError> {
        let invalid = |field, reason: &str| Err(BenchError::Invalid { field, reason: reason.to_string() });
        if self.n_systems_per_point == 0 {
            return invalid("n_systems", "must be at least 1");
        }
        if self.u_norm_points.is_empty() {
            return invalid("u_norm", "need at least one point");
        }
        if self.u_norm_points.iter().any(|&u| !(u > 0.0 && u <= 1.0)) {
            return invalid("u_norm", "points must lie in (0, 1]");
        }
        if self.u_norm_points.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("u_norm", "points must be strictly increasing");
        }
        if self.policies.is_empty() {
            return invalid("policies", "need at least one policy");
        }
        if self.jobs == Some(0) {
            return invalid("jobs", "must be at least 1");
        }
        self.gen_params(self.u_norm_points[0], 0).check()?;
        Ok(())
    }

    pub fn gen_params(&self, u_norm: f64, seed: u64) -> GenParams {
        GenParams {
            u_target: u_norm * self.cores as f64,
            n_dags: self.n_dags,
            n_vertices_per_dag: self.n_vertices_per_dag,
            rho: self.rho,
            f: self.f,
            e: self.e,
            cores: self.cores,
            seed,
        }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut cfg = BenchConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| BenchError::Config { line: i + 1, reason };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
                v.parse().map_err(|_| format!("`{key}`: cannot parse `{v}`"))
            }
            match key {
                "cores" => cfg.cores = num(key, value).map_err(err)?,
                "dags" => cfg.n_dags = num(key, value).map_err(err)?,
                "vertices" => cfg.n_vertices_per_dag = num(key, value).map_err(err)?,
                "rho" => cfg.rho = num(key, value).map_err(err)?,
                "f" => cfg.f = num(key, value).map_err(err)?,
                "e" => cfg.e = num(key, value).map_err(err)?,
                "n_systems" => cfg.n_systems_per_point = num(key, value).map_err(err)?,
                "master_seed" | "seed" => cfg.master_seed = num(key, value).map_err(err)?,
                "jobs" => cfg.jobs = Some(num(key, value).map_err(err)?),
                "u_norm" => {
                    cfg.u_norm_points = value
                        .split(',')
                        .map(|v| num(key, v.trim()))
                        .collect::<Result<_, _>>()
                        .map_err(err)?
                }
                "policies" => {
                    cfg.policies = value
                        .split(',')
                        .map(|v| v.trim().parse::<Policy>())
                        .collect::<Result<_, _>>()
                        .map_err(err)?
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        cfg.check()?;
        Ok(cfg)
    }
}

/// Outcome of one policy on one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStats {
    pub accepted: usize,
    pub acceptance: f64,
    /// Preemptions (LO and HI tables together) over accepted systems.
    pub preempt_mean: f64,
    pub preempt_max: u64,
    /// Wall time of synthesis plus checking, over all systems.
    pub time_ms_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub u_norm: f64,
    pub n_systems: usize,
    pub per_policy: BTreeMap<Policy, PolicyStats>,
}

impl BenchRecord {
    pub fn acceptance(&self, policy: Policy) -> Option<f64> {
        self.per_policy.get(&policy).map(|s| s.acceptance)
    }

    /// Same record with wall times zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for s in r.per_policy.values_mut() {
            s.time_ms_mean = 0.0;
        }
        r
    }
}

/// u_norm as a reduced fraction over 10^6.
fn as_fraction(u: f64) -> (u64, u64) {
    let num = (u * 1e6).round() as u64;
    let g = gcd(num, 1_000_000).max(1);
    (num / g, 1_000_000 / g)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of system `index` at `u_norm`, regeneration `attempt`.
pub fn system_seed(master_seed: u64, u_norm: f64, index: usize, attempt: u64) -> u64 {
    let (num, den) = as_fraction(u_norm);
    [num, den, index as u64, attempt]
        .into_iter()
        .fold(splitmix(master_seed), |h, x| splitmix(h ^ x))
}

/// The `index`-th system of a point, regenerating on infeasible draws.
pub fn point_system(config: &BenchConfig, u_norm: f64, index: usize) -> Result<McSystem, BenchError> {
    for attempt in 0..MAX_REGENERATIONS {
        let seed = system_seed(config.master_seed, u_norm, index, attempt);
        match generate_system(&config.gen_params(u_norm, seed)) {
            Ok(s) => return Ok(s),
            Err(GenError::Infeasible { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(BenchError::Exhausted { u_norm, index })
}

#[derive(Debug, Clone, Copy)]
struct Verdict {
    accepted: bool,
    preemptions: u64,
    time_ms: f64,
}

fn evaluate(system: &McSystem, policy: Policy) -> Verdict {
    let start = Instant::now();
    let outcome = synthesize(system, policy)
        .ok()
        .filter(|s| check_mc_correct(&s.lo, &s.hi, system).is_pass());
    let time_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Some(s) => Verdict {
            accepted: true,
            preemptions: count_preemptions(&s.lo, system).total + count_preemptions(&s.hi, system).total,
            time_ms,
        },
        None => Verdict { accepted: false, preemptions: 0, time_ms },
    }
}

fn in_pool<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T, BenchError> {
    match jobs {
        None => Ok(work()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| BenchError::Pool(e.to_string()))?;
            Ok(pool.install(work))
        }
    }
}

pub fn run_point(config: &BenchConfig, u_norm: f64) -> Result<BenchRecord, BenchError> {
    config.check()?;
    let n = config.n_systems_per_point;
    let verdicts: Vec<Vec<Verdict>> = in_pool(config.jobs, || {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let system = point_system(config, u_norm, i)?;
                Ok(config.policies.iter().map(|&p| evaluate(&system, p)).collect())
            })
            .collect::<Result<Vec<_>, BenchError>>()
    })??;

    let mut per_policy = BTreeMap::new();
    for (pi, &policy) in config.policies.iter().enumerate() {
        let column: Vec<Verdict> = verdicts.iter().map(|v| v[pi]).collect();
        let accepted: Vec<&Verdict> = column.iter().filter(|v| v.accepted).collect();
        let preempt_total: u64 = accepted.iter().map(|v| v.preemptions).sum();
        per_policy.insert(
            policy,
            PolicyStats {
                accepted: accepted.len(),
                acceptance: accepted.len() as f64 / n as f64,
                preempt_mean: if accepted.is_empty() { 0.0 } else { preempt_total as f64 / accepted.len() as f64 },
                preempt_max: accepted.iter().map(|v| v.preemptions).max().unwrap_or(0),
                time_ms_mean: column.iter().map(|v| v.time_ms).sum::<f64>() / n as f64,
            },
        );
    }
    Ok(BenchRecord { u_norm, n_systems: n, per_policy })
}

pub fn run_sweep(config: &BenchConfig) -> Result<Vec<BenchRecord>, BenchError> {
    config.check()?;
    let mut records = config
        .u_norm_points
        .iter()
        .map(|&u| run_point(config, u))
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by(|a, b| a.u_norm.total_cmp(&b.u_norm));
    Ok(records)
}

pub const CSV_HEADER: &str =
    "u_norm,n_systems,accept_llf,accept_edf,preempt_mean_llf,preempt_mean_edf,time_ms_mean_llf,time_ms_mean_edf";

/// One row per record. Columns of a policy that was not run stay empty.
/// With `timing = false` the wall-time columns are left empty too, which
/// makes the output a pure function of the configuration.
pub fn to_csv(records: &[BenchRecord], timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let col = |p: Policy, f: &dyn Fn(&PolicyStats) -> String| r.per_policy.get(&p).map(f).unwrap_or_default();
        let accept = |s: &PolicyStats| format!("{:.4}", s.acceptance);
        let preempt = |s: &PolicyStats| format!("{:.3}", s.preempt_mean);
        let time = |s: &PolicyStats| if timing { format!("{:.3}", s.time_ms_mean) } else { String::new() };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.u_norm,
            r.n_systems,
            col(Policy::Llf, &accept),
            col(Policy::Edf, &accept),
            col(Policy::Llf, &preempt),
            col(Policy::Edf, &preempt),
            col(Policy::Llf, &time),
            col(Policy::Edf, &time),
        );
    }
    out
}
