//! Verification of synthesized tables: the Safe Transition Property,
//! MC-correctness, and a brute-force mode-switch oracle.

use std::collections::HashMap;
use std::fmt;

use super::{JobKey, JobRef, ScheduleTable};
use crate::model::{Criticality, McSystem, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StpViolation {
    pub job: JobRef,
    pub t: Time,
    pub psi_lo: Time,
    pub psi_hi: Time,
}

impl fmt::Display for StpViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at t={}: LO allocation {} is unfinished and behind HI allocation {}",
            self.job.key, self.t, self.psi_lo, self.psi_hi
        )
    }
}

/// Every job of `mode` in the system over `horizon`, with its budget.
fn mode_jobs(system: &McSystem, mode: Criticality, horizon: Time) -> Vec<(JobRef, Time)> {
    let mut out = Vec::new();
    for dag in &system.dags {
        for v in dag.vertices.iter().filter(|v| mode == Criticality::Lo || v.is_hi()) {
            for k in 0..(horizon / dag.period) {
                let release = k * dag.period;
                out.push((
                    JobRef {
                        key: JobKey { dag: dag.id, vertex: v.id, job: k as u32 },
                        release,
                        deadline: release + dag.deadline(),
                    },
                    v.budget(mode),
                ));
            }
        }
    }
    out
}

/// Number of entries of a sorted slot list that are `<= t`.
fn count_upto(slots: &[Time], t: Time) -> Time {
    slots.partition_point(|&s| s <= t) as Time
}

fn window_slots(map: &HashMap<JobKey, Vec<Time>>, job: &JobRef) -> Vec<Time> {
    map.get(&job.key)
        .map(|v| v.iter().copied().filter(|&s| s >= job.release && s < job.deadline).collect())
        .unwrap_or_default()
}

/// Checks, for every HI job and every `t` in `[release, deadline]`, that
/// `psi_lo(r, t) < C(LO)` implies `psi_lo(r, t) >= psi_hi(r, t)`.
/// Returns the violation with the smallest `t` (ties by job).
pub fn check_stp(lo: &ScheduleTable, hi: &ScheduleTable, system: &McSystem) -> Result<(), StpViolation> {
    let horizon = lo.horizon.min(hi.horizon);
    let lo_map = lo.slots_by_job();
    let hi_map = hi.slots_by_job();
    let mut first: Option<StpViolation> = None;
    for (job, c_lo) in mode_jobs(system, Criticality::Hi, horizon)
        .into_iter()
        .map(|(j, _)| (j, budget_lo(system, &j.key)))
    {
        let lo_slots = window_slots(&lo_map, &job);
        let hi_slots = window_slots(&hi_map, &job);
        for t in job.release..=job.deadline {
            if first.is_some_and(|f| f.t <= t) {
                break;
            }
            let psi_lo = count_upto(&lo_slots, t);
            let psi_hi = count_upto(&hi_slots, t);
            if psi_lo < c_lo && psi_lo < psi_hi {
                first = Some(StpViolation { job, t, psi_lo, psi_hi });
                break;
            }
        }
    }
    first.map_or(Ok(()), Err)
}

fn budget_lo(system: &McSystem, key: &JobKey) -> Time {
    system.dag(key.dag).and_then(|d| d.vertex(key.vertex)).map_or(0, |v| v.c_lo)
}

/// A HI job that cannot finish if the system switches to HI mode at `tfe`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchMiss {
    pub job: JobRef,
    pub tfe: Time,
    /// Units still owed after the switch.
    pub needed: Time,
    /// HI-table slots left after the switch inside the job's window.
    pub available: Time,
}

impl fmt::Display for SwitchMiss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "switch at t={}: {} needs {} more units but the HI table leaves {}",
            self.tfe, self.job.key, self.needed, self.available
        )
    }
}

/// Mode switch at the end of slot `tfe`: every HI job that is still
/// running in LO mode (or has just exhausted its LO budget there) has
/// received `psi_lo(r, tfe)` units and must get the rest of its HI budget
/// from HI-table slots after `tfe` within its window.
pub fn simulate_switch(
    lo: &ScheduleTable,
    hi: &ScheduleTable,
    system: &McSystem,
    tfe: Time,
) -> Result<(), Vec<SwitchMiss>> {
    let lo_map = lo.slots_by_job();
    let hi_map = hi.slots_by_job();
    let misses: Vec<SwitchMiss> = mode_jobs(system, Criticality::Hi, lo.horizon.min(hi.horizon))
        .into_iter()
        .filter(|(j, _)| j.release <= tfe && tfe < j.deadline)
        .filter_map(|(job, c_hi)| switch_outcome(&lo_map, &hi_map, system, job, c_hi, tfe))
        .filter(|m| m.available < m.needed)
        .collect();
    if misses.is_empty() {
        Ok(())
    } else {
        Err(misses)
    }
}

fn switch_outcome(
    lo_map: &HashMap<JobKey, Vec<Time>>,
    hi_map: &HashMap<JobKey, Vec<Time>>,
    system: &McSystem,
    job: JobRef,
    c_hi: Time,
    tfe: Time,
) -> Option<SwitchMiss> {
    let c_lo = budget_lo(system, &job.key);
    let lo_slots = window_slots(lo_map, &job);
    let executed = count_upto(&lo_slots, tfe);
    let overrunning = executed == c_lo && lo_slots.contains(&tfe);
    if executed >= c_lo && !overrunning {
        return None;
    }
    let hi_slots = window_slots(hi_map, &job);
    let available = hi_slots.iter().filter(|&&s| s > tfe).count() as Time;
    Some(SwitchMiss { job, tfe, needed: c_hi.saturating_sub(executed), available })
}

/// HI-table slots after `tfe` minus the units `job` still owes if the
/// switch happens at `tfe`. Non-negative slack certifies the job survives
/// that switch. `None` when the job is not executing in LO mode at `tfe`.
pub fn switch_slack(
    lo: &ScheduleTable,
    hi: &ScheduleTable,
    system: &McSystem,
    job: &JobRef,
    tfe: Time,
) -> Option<i64> {
    let c_hi = system.dag(job.key.dag)?.vertex(job.key.vertex)?.c_hi;
    switch_outcome(&lo.slots_by_job(), &hi.slots_by_job(), system, *job, c_hi, tfe)
        .map(|m| m.available as i64 - m.needed as i64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum McViolation {
    /// Table mode, core count, or horizon do not match the system.
    Shape { mode: Criticality, reason: String },
    /// An allocation names a job the mode does not have.
    UnknownJob { mode: Criticality, job: JobKey, slot: Time },
    OutOfWindow { mode: Criticality, job: JobKey, slot: Time },
    /// One job on two cores in the same slot.
    Parallel { mode: Criticality, job: JobKey, slot: Time },
    Budget { mode: Criticality, job: JobKey, got: Time, expected: Time },
    /// `job` starts before predecessor vertex `pred` of the same activation finishes.
    Precedence { mode: Criticality, job: JobKey, pred: u32 },
    Stp(StpViolation),
}

impl McViolation {
    /// Which condition of MC-correctness the violation breaks.
    pub fn condition(&self) -> &'static str {
        match self {
            McViolation::Stp(_) => "Condition HI-Mode",
            McViolation::Shape { mode, .. }
            | McViolation::UnknownJob { mode, .. }
            | McViolation::OutOfWindow { mode, .. }
            | McViolation::Parallel { mode, .. }
            | McViolation::Budget { mode, .. }
            | McViolation::Precedence { mode, .. } => match mode {
                Criticality::Lo => "Condition LO-Mode",
                Criticality::Hi => "Condition HI-Mode",
            },
        }
    }
}

impl fmt::Display for McViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.condition())?;
        match self {
            McViolation::Shape { reason, .. } => write!(f, "{reason}"),
            McViolation::UnknownJob { job, slot, .. } => write!(f, "slot {slot} holds unknown {job}"),
            McViolation::OutOfWindow { job, slot, .. } => write!(f, "{job} runs at slot {slot} outside its window"),
            McViolation::Parallel { job, slot, .. } => write!(f, "{job} runs on two cores at slot {slot}"),
            McViolation::Budget { job, got, expected, .. } => {
                write!(f, "{job} receives {got} slots, expected {expected}")
            }
            McViolation::Precedence { job, pred, .. } => {
                write!(f, "{job} starts before predecessor vertex {pred} completes")
            }
            McViolation::Stp(v) => write!(f, "safe transition property broken: {v}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct McReport {
    pub violations: Vec<McViolation>,
}

impl McReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&McViolation> {
        self.violations.first()
    }
}

/// Condition LO-Mode: every job gets exactly `c_lo` in-window slots of the
/// LO table, after all its predecessors. Condition HI-Mode: the same for HI
/// jobs with `c_hi` in the HI table (HI-only precedence), plus the Safe
/// Transition Property between the two tables.
pub fn check_mc_correct(lo: &ScheduleTable, hi: &ScheduleTable, system: &McSystem) -> McReport {
    let mut violations = Vec::new();
    let horizon = match system.hyperperiod() {
        Ok(h) => h,
        Err(e) => {
            violations.push(McViolation::Shape { mode: Criticality::Lo, reason: e.to_string() });
            return McReport { violations };
        }
    };
    let lo_ok = check_mode(lo, Criticality::Lo, system, horizon, &mut violations);
    let hi_ok = check_mode(hi, Criticality::Hi, system, horizon, &mut violations);
    if lo_ok && hi_ok {
        if let Err(v) = check_stp(lo, hi, system) {
            violations.push(McViolation::Stp(v));
        }
    }
    McReport { violations }
}

fn check_mode(
    table: &ScheduleTable,
    mode: Criticality,
    system: &McSystem,
    horizon: Time,
    out: &mut Vec<McViolation>,
) -> bool {
    let before = out.len();
    if table.mode != mode || table.cores != system.cores || table.horizon != horizon {
        out.push(McViolation::Shape {
            mode,
            reason: format!(
                "expected {mode} table over {} cores x {horizon} slots, got {} table over {} x {}",
                system.cores, table.mode, table.cores, table.horizon
            ),
        });
        return false;
    }

    let jobs = mode_jobs(system, mode, horizon);
    let index: HashMap<JobKey, usize> = jobs.iter().enumerate().map(|(i, (j, _))| (j.key, i)).collect();
    let mut slots: Vec<Vec<Time>> = vec![Vec::new(); jobs.len()];
    for (_, slot, key) in table.allocations() {
        match index.get(&key) {
            None => out.push(McViolation::UnknownJob { mode, job: key, slot }),
            Some(&i) => {
                let job = &jobs[i].0;
                if slot < job.release || slot >= job.deadline {
                    out.push(McViolation::OutOfWindow { mode, job: key, slot });
                }
                if slots[i].last() == Some(&slot) {
                    out.push(McViolation::Parallel { mode, job: key, slot });
                }
                slots[i].push(slot);
            }
        }
    }
    for (i, (job, budget)) in jobs.iter().enumerate() {
        let got = slots[i].len() as Time;
        if got != *budget {
            out.push(McViolation::Budget { mode, job: job.key, got, expected: *budget });
        }
    }

    for dag in &system.dags {
        let keep = |v: &crate::model::Vertex| mode == Criticality::Lo || v.is_hi();
        let graph = dag.local_graph(keep);
        for k in 0..(horizon / dag.period) as u32 {
            for (vi, preds) in graph.preds.iter().enumerate() {
                let key = JobKey { dag: dag.id, vertex: dag.vertices[vi].id, job: k };
                let Some(first) = index.get(&key).and_then(|&i| slots[i].first()) else {
                    continue;
                };
                for &p in preds {
                    let pk = JobKey { dag: dag.id, vertex: dag.vertices[p].id, job: k };
                    let pred_last = index.get(&pk).and_then(|&i| slots[i].last());
                    if pred_last.is_some_and(|&l| l >= *first) {
                        out.push(McViolation::Precedence { mode, job: key, pred: pk.vertex });
                    }
                }
            }
        }
    }
    out.len() == before
}
