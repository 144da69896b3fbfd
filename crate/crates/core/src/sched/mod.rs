//! Scheduling-table synthesis for MC-DAG systems.
//!
//! The HI table places every HI job as late as possible: the HI problem is
//! mirrored in time, list-scheduled forward, and mirrored back. The LO table
//! places every job as soon as possible, promoting HI jobs whenever the
//! HI table would otherwise get ahead of them (Safe Transition Property).
//! Priorities come from global EDF or global LLF.

mod check;
mod table;

use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use check::{
    check_mc_correct, check_stp, simulate_switch, switch_slack, McReport, McViolation, StpViolation, SwitchMiss,
};
pub use table::{count_preemptions, JobKey, JobRef, PreemptionReport, ScheduleTable};

use crate::model::{Criticality, McSystem, ModelError, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    /// G-ALAP-EDF
    Edf,
    /// G-ALAP-LLF
    Llf,
}

impl Policy {
    pub const ALL: [Policy; 2] = [Policy::Llf, Policy::Edf];

    pub fn short_name(self) -> &'static str {
        match self {
            Policy::Edf => "edf",
            Policy::Llf => "llf",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Edf => f.write_str("G-ALAP-EDF"),
            Policy::Llf => f.write_str("G-ALAP-LLF"),
        }
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "edf" | "g-alap-edf" => Ok(Policy::Edf),
            "llf" | "g-alap-llf" => Ok(Policy::Llf),
            other => Err(format!("unknown policy `{other}` (expected llf or edf)")),
        }
    }
}

/// Why synthesis gave up. These are verdicts about the system, not bugs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unschedulable {
    /// Mode utilization exceeds the core count.
    Overloaded { utilization_millis: u64, cores: u32 },
    /// A job can no longer receive its budget before its deadline.
    DeadlineMiss { job: JobKey, at: Time },
    /// A HI job had to run in LO mode to keep up with the HI table but
    /// its predecessors were unfinished.
    StpBlocked { job: JobKey, at: Time },
    /// More HI jobs had to run at once than there are cores.
    StpOverload { at: Time, required: usize },
}

impl fmt::Display for Unschedulable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unschedulable::Overloaded { utilization_millis, cores } => write!(
                f,
                "utilization {:.3} exceeds {cores} cores",
                *utilization_millis as f64 / 1000.0
            ),
            Unschedulable::DeadlineMiss { job, at } => write!(f, "{job} misses its deadline (detected at slot {at})"),
            Unschedulable::StpBlocked { job, at } => {
                write!(f, "{job} must run at slot {at} to keep the safe transition property but is not ready")
            }
            Unschedulable::StpOverload { at, required } => {
                write!(f, "{required} HI jobs must run at slot {at} to keep the safe transition property")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SchedError {
    #[error("unschedulable in {mode} mode: {reason}")]
    Unschedulable { mode: Criticality, reason: Unschedulable },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown job: {0}")]
    UnknownJob(JobKey),
    #[error("window [{t1}, {t2}] invalid for horizon {horizon}")]
    BadWindow { t1: Time, t2: Time, horizon: Time },
    #[error("table does not fit the system: {0}")]
    Mismatch(String),
    #[error("malformed table document: {0}")]
    Malformed(String),
}

impl SchedError {
    pub fn is_unschedulable(&self) -> bool {
        matches!(self, SchedError::Unschedulable { .. })
    }
}

/// ψ: slots in `[t1, t2]` (inclusive) in which `job` occupies a core.
pub fn psi(table: &ScheduleTable, job: &JobRef, t1: Time, t2: Time) -> Result<Time, SchedError> {
    if job.deadline > table.horizon {
        return Err(SchedError::UnknownJob(job.key));
    }
    if t1 > t2 || t2 > table.horizon {
        return Err(SchedError::BadWindow { t1, t2, horizon: table.horizon });
    }
    let last = t2.min(table.horizon - 1);
    Ok((t1..=last)
        .filter(|&s| table.slot(s).iter().any(|a| *a == Some(job.key)))
        .count() as Time)
}

/// One job of a list-scheduling problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemJob {
    pub key: JobKey,
    pub release: Time,
    pub deadline: Time,
    pub budget: Time,
    pub preds: Vec<usize>,
    pub succs: Vec<usize>,
    /// Heaviest chain of successor budgets; enters the laxity.
    pub tail: Time,
    /// Heaviest chain of predecessor budgets.
    pub head: Time,
}

/// The jobs of one mode over one hyperperiod, with precedence between jobs
/// of the same DAG activation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobProblem {
    pub mode: Criticality,
    pub cores: u32,
    pub horizon: Time,
    pub jobs: Vec<ProblemJob>,
}

impl JobProblem {
    /// HI mode keeps only HI vertices and edges between them.
    pub fn for_mode(system: &McSystem, mode: Criticality) -> Result<Self, SchedError> {
        let horizon = system.hyperperiod()?;
        let mut jobs = Vec::new();
        for dag in &system.dags {
            let keep = |v: &crate::model::Vertex| mode == Criticality::Lo || v.is_hi();
            let graph = dag.local_graph(keep);
            let weight = |i: usize| dag.vertices[i].budget(mode);
            let tail = graph.tail_lengths(weight);
            let head = graph.head_lengths(weight);
            let kept: Vec<usize> = (0..dag.vertices.len()).filter(|&i| keep(&dag.vertices[i])).collect();
            let mut slot_of = vec![usize::MAX; dag.vertices.len()];
            for k in 0..(horizon / dag.period) {
                let base = jobs.len();
                for (n, &i) in kept.iter().enumerate() {
                    slot_of[i] = base + n;
                }
                for &i in &kept {
                    let v = &dag.vertices[i];
                    jobs.push(ProblemJob {
                        key: JobKey { dag: dag.id, vertex: v.id, job: k as u32 },
                        release: k * dag.period,
                        deadline: k * dag.period + dag.deadline(),
                        budget: v.budget(mode),
                        preds: graph.preds[i].iter().map(|&p| slot_of[p]).collect(),
                        succs: graph.succs[i].iter().map(|&s| slot_of[s]).collect(),
                        tail: tail[i],
                        head: head[i],
                    });
                }
            }
        }
        Ok(JobProblem { mode, cores: system.cores, horizon, jobs })
    }

    /// The same problem on the reversed time axis: windows are reflected,
    /// precedence is reversed.
    pub fn mirrored(&self) -> Self {
        let h = self.horizon;
        JobProblem {
            mode: self.mode,
            cores: self.cores,
            horizon: h,
            jobs: self
                .jobs
                .iter()
                .map(|j| ProblemJob {
                    key: j.key,
                    release: h - j.deadline,
                    deadline: h - j.release,
                    budget: j.budget,
                    preds: j.succs.clone(),
                    succs: j.preds.clone(),
                    tail: j.head,
                    head: j.tail,
                })
                .collect(),
        }
    }

    fn load(&self) -> f64 {
        self.jobs.iter().map(|j| j.budget).sum::<Time>() as f64 / self.horizon.max(1) as f64
    }
}

/// Slots, per job, at which a HI job must already have received at least
/// as much LO-mode service as the HI table gives it. Indexed like the
/// LO problem's jobs; `None` for LO vertices.
pub type StpGuard = Vec<Option<Vec<Time>>>;

/// Forward list scheduling: at each slot the `cores` highest-priority ready
/// jobs run. With a guard, HI jobs that would fall behind their HI-table
/// allocation are run first.
pub fn list_schedule(
    problem: &JobProblem,
    policy: Policy,
    guard: Option<&StpGuard>,
) -> Result<ScheduleTable, Unschedulable> {
    let m = problem.cores as usize;
    let n = problem.jobs.len();
    let jobs = &problem.jobs;
    let mut table = ScheduleTable::empty(problem.mode, problem.cores, problem.horizon);

    let mut by_release: Vec<usize> = (0..n).collect();
    by_release.sort_by_key(|&j| (jobs[j].release, jobs[j].key));
    let mut next_release = 0;

    let mut remaining: Vec<Time> = jobs.iter().map(|j| j.budget).collect();
    let mut done: Vec<bool> = remaining.iter().map(|&r| r == 0).collect();
    let mut service = vec![0 as Time; n];
    let mut hi_seen = vec![0usize; n];
    let mut last_core: Vec<Option<u32>> = vec![None; n];
    let mut active: Vec<usize> = Vec::new();

    for s in 0..problem.horizon {
        while next_release < n && jobs[by_release[next_release]].release <= s {
            let j = by_release[next_release];
            if !done[j] {
                active.push(j);
            }
            next_release += 1;
        }
        if active.is_empty() {
            continue;
        }

        let laxity = |j: usize| -> i64 {
            jobs[j].deadline as i64 - s as i64 - remaining[j] as i64 - jobs[j].tail as i64
        };
        for &j in &active {
            if jobs[j].deadline < s + remaining[j] {
                return Err(Unschedulable::DeadlineMiss { job: jobs[j].key, at: s });
            }
        }

        let mut forced = Vec::new();
        if let Some(guard) = guard {
            for &j in &active {
                if let Some(hi_slots) = &guard[j] {
                    while hi_seen[j] < hi_slots.len() && hi_slots[hi_seen[j]] <= s {
                        hi_seen[j] += 1;
                    }
                    if (service[j] as usize) < hi_seen[j] {
                        forced.push(j);
                    }
                }
            }
        }

        let ready = |j: usize| jobs[j].preds.iter().all(|&p| done[p]);
        let key = |j: usize| {
            let k = jobs[j].key;
            match policy {
                Policy::Edf => (jobs[j].deadline as i64, laxity(j), k),
                Policy::Llf => (laxity(j), jobs[j].deadline as i64, k),
            }
        };

        if let Some(&j) = forced.iter().find(|&&j| !ready(j)) {
            return Err(Unschedulable::StpBlocked { job: jobs[j].key, at: s });
        }
        if forced.len() > m {
            return Err(Unschedulable::StpOverload { at: s, required: forced.len() });
        }
        forced.sort_by_key(|&j| key(j));
        let mut chosen = forced;
        let mut rest: Vec<usize> = active.iter().copied().filter(|&j| ready(j) && !chosen.contains(&j)).collect();
        rest.sort_by_key(|&j| key(j));
        chosen.extend(rest.into_iter().take(m - chosen.len()));

        // Keep a job on the core it last used when possible.
        let mut free = vec![true; m];
        let mut placed: Vec<(usize, u32)> = Vec::with_capacity(chosen.len());
        let mut unplaced = Vec::new();
        for &j in &chosen {
            match last_core[j] {
                Some(c) if free[c as usize] => {
                    free[c as usize] = false;
                    placed.push((j, c));
                }
                _ => unplaced.push(j),
            }
        }
        let mut cores = (0..m as u32).filter(|&c| free[c as usize]);
        for j in unplaced {
            placed.push((j, cores.next().expect("enough cores")));
        }

        for (j, core) in placed {
            table.set(core, s, Some(jobs[j].key));
            remaining[j] -= 1;
            service[j] += 1;
            last_core[j] = Some(core);
        }
        // completion takes effect for the next slot
        active.retain(|&j| {
            if remaining[j] == 0 {
                done[j] = true;
                false
            } else {
                true
            }
        });
    }

    if let Some(&j) = active.iter().min_by_key(|&&j| (Reverse(remaining[j]), jobs[j].key)) {
        return Err(Unschedulable::DeadlineMiss { job: jobs[j].key, at: problem.horizon });
    }
    if let Some(j) = (0..n).find(|&j| !done[j]) {
        // released after the horizon's last slot: only possible with a zero-length window
        return Err(Unschedulable::DeadlineMiss { job: jobs[j].key, at: problem.horizon });
    }
    Ok(table)
}

/// Reflects a table in time: slot `s` becomes `horizon - 1 - s`.
pub fn mirror_table(table: &ScheduleTable) -> ScheduleTable {
    let h = table.horizon;
    let mut out = ScheduleTable::empty(table.mode, table.cores, h);
    for (core, slot, job) in table.allocations() {
        out.set(core, h - 1 - slot, Some(job));
    }
    out
}

fn check_load(problem: &JobProblem) -> Result<(), Unschedulable> {
    let load = problem.load();
    if load > problem.cores as f64 {
        return Err(Unschedulable::Overloaded {
            utilization_millis: (load * 1000.0).round() as u64,
            cores: problem.cores,
        });
    }
    Ok(())
}

fn ensure_valid(system: &McSystem) -> Result<(), SchedError> {
    let violations = system.validate();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ModelError::Invalid(violations).into())
    }
}

/// HI-mode table with every HI job placed as late as possible.
pub fn build_hi_table(system: &McSystem, policy: Policy) -> Result<ScheduleTable, SchedError> {
    ensure_valid(system)?;
    let problem = JobProblem::for_mode(system, Criticality::Hi)?;
    let unsched = |reason| SchedError::Unschedulable { mode: Criticality::Hi, reason };
    check_load(&problem).map_err(unsched)?;
    let reversed = list_schedule(&problem.mirrored(), policy, None).map_err(|reason| {
        // report times on the forward axis
        let reason = match reason {
            Unschedulable::DeadlineMiss { job, at } => {
                Unschedulable::DeadlineMiss { job, at: problem.horizon.saturating_sub(at) }
            }
            other => other,
        };
        unsched(reason)
    })?;
    Ok(mirror_table(&reversed))
}

/// LO-mode table with every job placed as soon as possible while keeping
/// the Safe Transition Property against `hi_table`.
pub fn build_lo_table(
    system: &McSystem,
    policy: Policy,
    hi_table: &ScheduleTable,
) -> Result<ScheduleTable, SchedError> {
    ensure_valid(system)?;
    let problem = JobProblem::for_mode(system, Criticality::Lo)?;
    if hi_table.mode != Criticality::Hi || hi_table.horizon != problem.horizon || hi_table.cores != problem.cores {
        return Err(SchedError::Mismatch(format!(
            "expected a HI table over {} cores x {} slots",
            problem.cores, problem.horizon
        )));
    }
    let mut hi_slots = hi_table.slots_by_job();
    let guard: StpGuard = problem
        .jobs
        .iter()
        .map(|j| {
            let hi = system.dag(j.key.dag).and_then(|d| d.vertex(j.key.vertex)).is_some_and(|v| v.is_hi());
            hi.then(|| hi_slots.remove(&j.key).unwrap_or_default())
        })
        .collect();
    let unsched = |reason| SchedError::Unschedulable { mode: Criticality::Lo, reason };
    check_load(&problem).map_err(unsched)?;
    list_schedule(&problem, policy, Some(&guard)).map_err(unsched)
}

/// Plain ASAP LO table with no coupling to a HI table. Useful as a
/// baseline and for producing tables that break the transition property.
pub fn build_asap_table(system: &McSystem, policy: Policy) -> Result<ScheduleTable, SchedError> {
    ensure_valid(system)?;
    let problem = JobProblem::for_mode(system, Criticality::Lo)?;
    list_schedule(&problem, policy, None).map_err(|reason| SchedError::Unschedulable { mode: Criticality::Lo, reason })
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub lo: ScheduleTable,
    pub hi: ScheduleTable,
    /// LO-to-HI edges ignored by the HI table, as `(dag, src, dst)`.
    pub dropped_edges: Vec<(u32, u32, u32)>,
}

/// HI table first, then the LO table coupled to it.
pub fn synthesize(system: &McSystem, policy: Policy) -> Result<Synthesis, SchedError> {
    let hi = build_hi_table(system, policy)?;
    let lo = build_lo_table(system, policy, &hi)?;
    Ok(Synthesis { lo, hi, dropped_edges: system.lo_to_hi_edges() })
}
