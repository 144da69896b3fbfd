use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::SchedError;
use crate::model::{Criticality, McSystem, Time};

/// Identity of one job: the `job`-th activation of `vertex` in `dag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JobKey {
    pub dag: u32,
    pub vertex: u32,
    pub job: u32,
}

impl fmt::Display for JobKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dag {} vertex {} job {}", self.dag, self.vertex, self.job)
    }
}

/// A job together with its window `[release, deadline)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JobRef {
    pub key: JobKey,
    pub release: Time,
    pub deadline: Time,
}

impl JobRef {
    pub fn new(system: &McSystem, dag: u32, vertex: u32, job: u32) -> Result<Self, SchedError> {
        let d = system.dag(dag).ok_or(SchedError::UnknownJob(JobKey { dag, vertex, job }))?;
        if d.vertex(vertex).is_none() {
            return Err(SchedError::UnknownJob(JobKey { dag, vertex, job }));
        }
        let release = job as Time * d.period;
        Ok(JobRef { key: JobKey { dag, vertex, job }, release, deadline: release + d.deadline() })
    }
}

/// Static per-mode schedule over one hyperperiod: for every core and slot,
/// the job occupying it, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleTable {
    pub mode: Criticality,
    pub cores: u32,
    pub horizon: Time,
    slots: Vec<Option<JobKey>>,
}

#[derive(Serialize, Deserialize)]
struct TableDoc {
    mode: Criticality,
    cores: u32,
    horizon: Time,
    alloc: Vec<AllocDoc>,
}

#[derive(Serialize, Deserialize)]
struct AllocDoc {
    core: u32,
    slot: Time,
    dag: u32,
    vertex: u32,
    job: u32,
}

impl ScheduleTable {
    pub fn empty(mode: Criticality, cores: u32, horizon: Time) -> Self {
        ScheduleTable { mode, cores, horizon, slots: vec![None; cores as usize * horizon as usize] }
    }

    fn index(&self, core: u32, slot: Time) -> usize {
        assert!(core < self.cores && slot < self.horizon, "core {core} slot {slot} outside table");
        slot as usize * self.cores as usize + core as usize
    }

    pub fn get(&self, core: u32, slot: Time) -> Option<JobKey> {
        self.slots[self.index(core, slot)]
    }

    pub fn set(&mut self, core: u32, slot: Time, job: Option<JobKey>) {
        let i = self.index(core, slot);
        self.slots[i] = job;
    }

    /// Jobs running in `slot`, by core.
    pub fn slot(&self, slot: Time) -> &[Option<JobKey>] {
        let start = slot as usize * self.cores as usize;
        &self.slots[start..start + self.cores as usize]
    }

    /// Every occupied `(core, slot, job)`, ordered by slot then core.
    pub fn allocations(&self) -> impl Iterator<Item = (u32, Time, JobKey)> + '_ {
        let m = self.cores as usize;
        self.slots.iter().enumerate().filter_map(move |(i, a)| {
            a.map(|job| ((i % m) as u32, (i / m) as Time, job))
        })
    }

    /// Slots of each job in ascending order. A slot appears twice if the
    /// job occupies two cores at once.
    pub fn slots_by_job(&self) -> HashMap<JobKey, Vec<Time>> {
        let mut out: HashMap<JobKey, Vec<Time>> = HashMap::new();
        for (_, slot, job) in self.allocations() {
            out.entry(job).or_default().push(slot);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = TableDoc {
            mode: self.mode,
            cores: self.cores,
            horizon: self.horizon,
            alloc: self
                .allocations()
                .map(|(core, slot, j)| AllocDoc { core, slot, dag: j.dag, vertex: j.vertex, job: j.job })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SchedError> {
        let doc: TableDoc = serde_json::from_str(text).map_err(|e| SchedError::Malformed(e.to_string()))?;
        let mut table = ScheduleTable::empty(doc.mode, doc.cores, doc.horizon);
        for a in doc.alloc {
            if a.core >= doc.cores || a.slot >= doc.horizon {
                return Err(SchedError::Malformed(format!(
                    "allocation at core {} slot {} lies outside {} cores x {} slots",
                    a.core, a.slot, doc.cores, doc.horizon
                )));
            }
            if table.get(a.core, a.slot).is_some() {
                return Err(SchedError::Malformed(format!("core {} slot {} allocated twice", a.core, a.slot)));
            }
            table.set(a.core, a.slot, Some(JobKey { dag: a.dag, vertex: a.vertex, job: a.job }));
        }
        Ok(table)
    }

    /// One row per core, one character per slot; `.` is idle. A legend
    /// maps characters to `dag/vertex`.
    pub fn gantt(&self) -> String {
        const GLYPHS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
        let mut glyph: BTreeMap<(u32, u32), char> = BTreeMap::new();
        for (_, _, j) in self.allocations() {
            let next = glyph.len();
            glyph.entry((j.dag, j.vertex)).or_insert(GLYPHS[next % GLYPHS.len()] as char);
        }
        let mut out = format!("{} mode, {} cores, horizon {}\n", self.mode, self.cores, self.horizon);
        for core in 0..self.cores {
            out.push_str(&format!("core {core:>2} |"));
            for s in 0..self.horizon {
                out.push(match self.get(core, s) {
                    Some(j) => glyph[&(j.dag, j.vertex)],
                    None => '.',
                });
            }
            out.push_str("|\n");
        }
        for ((dag, vertex), c) in &glyph {
            out.push_str(&format!("  {c} = dag {dag} vertex {vertex}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PreemptionReport {
    pub per_job: BTreeMap<JobKey, u32>,
    pub total: u64,
}

/// A preemption of job `j` is a slot where `j` runs, does not run in the
/// next slot, and has not yet received its full budget for the table's mode.
pub fn count_preemptions(table: &ScheduleTable, system: &McSystem) -> PreemptionReport {
    let mut report = PreemptionReport::default();
    for (job, slots) in table.slots_by_job() {
        let budget = system
            .dag(job.dag)
            .and_then(|d| d.vertex(job.vertex))
            .map(|v| v.budget(table.mode))
            .unwrap_or(0);
        let mut count = 0u32;
        for (i, &s) in slots.iter().enumerate() {
            let runs_next = slots.get(i + 1).is_some_and(|&n| n == s + 1);
            if !runs_next && ((i + 1) as Time) < budget {
                count += 1;
            }
        }
        report.total += count as u64;
        report.per_job.insert(job, count);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{McDag, Vertex};

    fn key(vertex: u32) -> JobKey {
        JobKey { dag: 0, vertex, job: 0 }
    }

    fn two_lo(c_a: Time, c_b: Time) -> McSystem {
        let v = |id, c| Vertex { id, name: String::new(), crit: Criticality::Lo, c_lo: c, c_hi: 0 };
        McSystem { cores: 1, dags: vec![McDag { id: 0, period: 10, vertices: vec![v(0, c_a), v(1, c_b)], edges: vec![] }] }
    }

    fn table_with(placement: &[(Time, u32)]) -> ScheduleTable {
        let mut t = ScheduleTable::empty(Criticality::Lo, 1, 10);
        for &(s, v) in placement {
            t.set(0, s, Some(key(v)));
        }
        t
    }

    #[test]
    fn contiguous_job_has_no_preemption() {
        let r = count_preemptions(&table_with(&[(0, 0), (1, 0), (2, 0)]), &two_lo(3, 1));
        assert_eq!(r.total, 0);
    }

    #[test]
    fn one_gap_before_completion() {
        let r = count_preemptions(&table_with(&[(0, 0), (2, 0)]), &two_lo(2, 1));
        assert_eq!(r.total, 1);
        assert_eq!(r.per_job[&key(0)], 1);
    }

    #[test]
    fn interleaved_pair() {
        // ABAB: A preempted at 0, B preempted at 1, neither after completing.
        let r = count_preemptions(&table_with(&[(0, 0), (1, 1), (2, 0), (3, 1)]), &two_lo(2, 2));
        assert_eq!(r.total, 2);
    }

    #[test]
    fn json_round_trip() {
        let t = table_with(&[(0, 0), (3, 1)]);
        let back = ScheduleTable::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["alloc"][1], serde_json::json!({"core": 0, "slot": 3, "dag": 0, "vertex": 1, "job": 0}));
    }

    #[test]
    fn json_rejects_out_of_range_alloc() {
        let doc = r#"{"mode":"LO","cores":1,"horizon":4,"alloc":[{"core":1,"slot":0,"dag":0,"vertex":0,"job":0}]}"#;
        assert!(matches!(ScheduleTable::from_json(doc), Err(SchedError::Malformed(_))));
    }

    #[test]
    fn gantt_rows() {
        let g = table_with(&[(0, 0), (1, 1)]).gantt();
        assert!(g.contains("core  0 |AB........|"));
        assert!(g.contains("A = dag 0 vertex 0"));
    }
}
