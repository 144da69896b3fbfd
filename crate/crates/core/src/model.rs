//! Domain types for dual-criticality periodic DAG systems.
//!
//! A [`McSystem`] is a set of [`McDag`]s sharing `cores` identical
//! processors. Every DAG is periodic with an implicit deadline, and each
//! vertex carries a LO-mode budget and (for HI vertices) a HI-mode budget.
//! All times are integer slot counts.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Discrete time, in slots.
pub type Time = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criticality {
    #[serde(rename = "LO")]
    Lo,
    #[serde(rename = "HI")]
    Hi,
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criticality::Lo => f.write_str("LO"),
            Criticality::Hi => f.write_str("HI"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: u32,
    pub name: String,
    pub crit: Criticality,
    pub c_lo: Time,
    pub c_hi: Time,
}

impl Vertex {
    pub fn is_hi(&self) -> bool {
        self.crit == Criticality::Hi
    }

    /// Budget of this vertex in `mode`. LO vertices have no HI budget.
    pub fn budget(&self, mode: Criticality) -> Time {
        match mode {
            Criticality::Lo => self.c_lo,
            Criticality::Hi => self.c_hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McDag {
    pub id: u32,
    pub period: Time,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<(u32, u32)>,
}

impl McDag {
    /// Deadlines are implicit.
    pub fn deadline(&self) -> Time {
        self.period
    }

    pub fn vertex(&self, id: u32) -> Option<&Vertex> {
        self.vertices.iter().find(|v| v.id == id)
    }

    /// Adjacency over local vertex positions (index into `vertices`),
    /// restricted to vertices for which `keep` holds. Edges with a
    /// dropped or unknown endpoint are ignored.
    pub fn local_graph(&self, keep: impl Fn(&Vertex) -> bool) -> LocalGraph {
        let pos: HashMap<u32, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.id, i))
            .collect();
        let n = self.vertices.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        let mut seen = HashSet::new();
        for &(src, dst) in &self.edges {
            let (Some(&a), Some(&b)) = (pos.get(&src), pos.get(&dst)) else {
                continue;
            };
            if a == b || !keep(&self.vertices[a]) || !keep(&self.vertices[b]) || !seen.insert((a, b)) {
                continue;
            }
            succs[a].push(b);
            preds[b].push(a);
        }
        LocalGraph { preds, succs }
    }
}

/// Predecessor/successor lists indexed by vertex position within a DAG.
#[derive(Debug, Clone)]
pub struct LocalGraph {
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
}

impl LocalGraph {
    /// Kahn's algorithm. Returns `None` when the graph has a cycle.
    pub fn topo_order(&self) -> Option<Vec<usize>> {
        let n = self.preds.len();
        let mut indeg: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..n).rev().filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &s in &self.succs[v] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(s);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// For every vertex, the heaviest path strictly after it (its own
    /// weight excluded). Assumes acyclicity.
    pub fn tail_lengths(&self, weight: impl Fn(usize) -> Time) -> Vec<Time> {
        let order = self.topo_order().expect("acyclic graph");
        let mut tail = vec![0; order.len()];
        for &v in order.iter().rev() {
            tail[v] = self.succs[v]
                .iter()
                .map(|&s| weight(s) + tail[s])
                .max()
                .unwrap_or(0);
        }
        tail
    }

    /// Same as [`tail_lengths`](Self::tail_lengths) but over predecessors.
    pub fn head_lengths(&self, weight: impl Fn(usize) -> Time) -> Vec<Time> {
        let order = self.topo_order().expect("acyclic graph");
        let mut head = vec![0; order.len()];
        for &v in &order {
            head[v] = self.preds[v]
                .iter()
                .map(|&p| weight(p) + head[p])
                .max()
                .unwrap_or(0);
        }
        head
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McSystem {
    pub cores: u32,
    pub dags: Vec<McDag>,
}

/// Liu & Layland periodic task: period, capacity, relative deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicTask {
    pub id: u32,
    #[serde(rename = "T")]
    pub period: Time,
    #[serde(rename = "C")]
    pub capacity: Time,
    #[serde(rename = "D")]
    pub deadline: Time,
}

impl PeriodicTask {
    pub fn new(id: u32, period: Time, capacity: Time, deadline: Time) -> Result<Self, ModelError> {
        let task = PeriodicTask { id, period, capacity, deadline };
        task.check()?;
        Ok(task)
    }

    /// Checks `0 < C <= D <= T`.
    pub fn check(&self) -> Result<(), ModelError> {
        if self.capacity == 0 || self.capacity > self.deadline || self.deadline > self.period {
            return Err(ModelError::BadTask {
                id: self.id,
                period: self.period,
                capacity: self.capacity,
                deadline: self.deadline,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("hyperperiod overflows the time range")]
    HyperperiodOverflow,
    #[error("task {id}: expected 0 < C <= D <= T, got T={period} C={capacity} D={deadline}")]
    BadTask { id: u32, period: Time, capacity: Time, deadline: Time },
    #[error("malformed system document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid system: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// One structural problem found by [`McSystem::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoDags,
    NoCores,
    DuplicateDag { dag: u32 },
    ZeroPeriod { dag: u32 },
    EmptyDag { dag: u32 },
    DuplicateVertex { vertex: u32 },
    ZeroLoBudget { dag: u32, vertex: u32 },
    HiBudgetBelowLo { dag: u32, vertex: u32, c_lo: Time, c_hi: Time },
    LoVertexWithHiBudget { dag: u32, vertex: u32, c_hi: Time },
    DanglingEdge { dag: u32, src: u32, dst: u32 },
    SelfEdge { dag: u32, vertex: u32 },
    DuplicateEdge { dag: u32, src: u32, dst: u32 },
    Cycle { dag: u32, vertices: Vec<u32> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoDags => write!(f, "system has no dags"),
            NoCores => write!(f, "cores must be at least 1"),
            DuplicateDag { dag } => write!(f, "dag id {dag} appears more than once"),
            ZeroPeriod { dag } => write!(f, "dag {dag}: period must be positive"),
            EmptyDag { dag } => write!(f, "dag {dag}: no vertices"),
            DuplicateVertex { vertex } => write!(f, "vertex id {vertex} appears more than once"),
            ZeroLoBudget { dag, vertex } => write!(f, "dag {dag} vertex {vertex}: c_lo must be >= 1"),
            HiBudgetBelowLo { dag, vertex, c_lo, c_hi } => {
                write!(f, "dag {dag} vertex {vertex}: HI vertex has c_hi={c_hi} < c_lo={c_lo}")
            }
            LoVertexWithHiBudget { dag, vertex, c_hi } => {
                write!(f, "dag {dag} vertex {vertex}: LO vertex has c_hi={c_hi}, expected 0")
            }
            DanglingEdge { dag, src, dst } => write!(f, "dag {dag}: edge {src}->{dst} names a missing vertex"),
            SelfEdge { dag, vertex } => write!(f, "dag {dag}: self edge on vertex {vertex}"),
            DuplicateEdge { dag, src, dst } => write!(f, "dag {dag}: duplicate edge {src}->{dst}"),
            Cycle { dag, vertices } => write!(f, "dag {dag}: cycle through vertices {vertices:?}"),
        }
    }
}

impl McSystem {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("system serializes")
    }

    /// Parses and rejects anything [`validate`](Self::validate) complains about.
    pub fn from_json_validated(text: &str) -> Result<Self, ModelError> {
        let sys = Self::from_json(text)?;
        let violations = sys.validate();
        if violations.is_empty() {
            Ok(sys)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    /// Every invariant violation in the system; empty iff well-formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.dags.is_empty() {
            out.push(Violation::NoDags);
        }
        if self.cores == 0 {
            out.push(Violation::NoCores);
        }
        let mut dag_ids = HashSet::new();
        let mut vertex_ids = HashSet::new();
        for dag in &self.dags {
            if !dag_ids.insert(dag.id) {
                out.push(Violation::DuplicateDag { dag: dag.id });
            }
            if dag.period == 0 {
                out.push(Violation::ZeroPeriod { dag: dag.id });
            }
            if dag.vertices.is_empty() {
                out.push(Violation::EmptyDag { dag: dag.id });
            }
            for v in &dag.vertices {
                if !vertex_ids.insert(v.id) {
                    out.push(Violation::DuplicateVertex { vertex: v.id });
                }
                if v.c_lo == 0 {
                    out.push(Violation::ZeroLoBudget { dag: dag.id, vertex: v.id });
                }
                match v.crit {
                    Criticality::Hi if v.c_hi < v.c_lo => out.push(Violation::HiBudgetBelowLo {
                        dag: dag.id,
                        vertex: v.id,
                        c_lo: v.c_lo,
                        c_hi: v.c_hi,
                    }),
                    Criticality::Lo if v.c_hi != 0 => out.push(Violation::LoVertexWithHiBudget {
                        dag: dag.id,
                        vertex: v.id,
                        c_hi: v.c_hi,
                    }),
                    _ => {}
                }
            }
            let local: HashSet<u32> = dag.vertices.iter().map(|v| v.id).collect();
            let mut edges = HashSet::new();
            for &(src, dst) in &dag.edges {
                if !local.contains(&src) || !local.contains(&dst) {
                    out.push(Violation::DanglingEdge { dag: dag.id, src, dst });
                } else if src == dst {
                    out.push(Violation::SelfEdge { dag: dag.id, vertex: src });
                } else if !edges.insert((src, dst)) {
                    out.push(Violation::DuplicateEdge { dag: dag.id, src, dst });
                }
            }
            let graph = dag.local_graph(|_| true);
            if graph.topo_order().is_none() {
                out.push(Violation::Cycle { dag: dag.id, vertices: cycle_members(dag, &graph) });
            }
        }
        out
    }

    /// Least common multiple of all DAG periods.
    pub fn hyperperiod(&self) -> Result<Time, ModelError> {
        self.dags
            .iter()
            .try_fold(1u64, |acc, d| checked_lcm(acc, d.period))
            .ok_or(ModelError::HyperperiodOverflow)
    }

    /// Total utilization in `mode`: HI counts `c_hi` of HI vertices, LO
    /// counts `c_lo` of every vertex.
    pub fn utilization(&self, mode: Criticality) -> f64 {
        self.dags.iter().map(|d| dag_utilization(d, mode)).sum()
    }

    pub fn vertex_count(&self) -> usize {
        self.dags.iter().map(|d| d.vertices.len()).sum()
    }

    pub fn dag(&self, id: u32) -> Option<&McDag> {
        self.dags.iter().find(|d| d.id == id)
    }

    /// Edges from a LO vertex into a HI vertex, as `(dag, src, dst)`.
    /// These are dropped from the HI-mode precedence graph.
    pub fn lo_to_hi_edges(&self) -> Vec<(u32, u32, u32)> {
        let mut out = Vec::new();
        for dag in &self.dags {
            for &(src, dst) in &dag.edges {
                if let (Some(a), Some(b)) = (dag.vertex(src), dag.vertex(dst)) {
                    if !a.is_hi() && b.is_hi() {
                        out.push((dag.id, src, dst));
                    }
                }
            }
        }
        out
    }

    /// Graphviz rendering, one digraph per DAG. HI vertices carry `crit=HI`.
    pub fn to_dot(&self) -> String {
        let mut s = String::new();
        for dag in &self.dags {
            s.push_str(&format!("digraph dag{} {{\n", dag.id));
            s.push_str(&format!("  label=\"dag {} T={}\";\n", dag.id, dag.period));
            for v in &dag.vertices {
                match v.crit {
                    Criticality::Hi => s.push_str(&format!(
                        "  v{} [label=\"{}\", crit=HI, c_lo={}, c_hi={}, style=filled, fillcolor=gray];\n",
                        v.id, v.name, v.c_lo, v.c_hi
                    )),
                    Criticality::Lo => s.push_str(&format!(
                        "  v{} [label=\"{}\", crit=LO, c_lo={}];\n",
                        v.id, v.name, v.c_lo
                    )),
                }
            }
            for &(a, b) in &dag.edges {
                s.push_str(&format!("  v{a} -> v{b};\n"));
            }
            s.push_str("}\n");
        }
        s
    }
}

pub fn dag_utilization(dag: &McDag, mode: Criticality) -> f64 {
    let work: Time = match mode {
        Criticality::Hi => dag.vertices.iter().filter(|v| v.is_hi()).map(|v| v.c_hi).sum(),
        Criticality::Lo => dag.vertices.iter().map(|v| v.c_lo).sum(),
    };
    work as f64 / dag.period as f64
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn checked_lcm(a: u64, b: u64) -> Option<u64> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / gcd(a, b)).checked_mul(b)
}

// Vertices left over after Kahn's algorithm peels every acyclic prefix and suffix.
fn cycle_members(dag: &McDag, graph: &LocalGraph) -> Vec<u32> {
    let n = graph.preds.len();
    let mut alive: BTreeSet<usize> = (0..n).collect();
    loop {
        let removable: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&v| {
                graph.preds[v].iter().all(|p| !alive.contains(p))
                    || graph.succs[v].iter().all(|s| !alive.contains(s))
            })
            .collect();
        if removable.is_empty() {
            break;
        }
        for v in removable {
            alive.remove(&v);
        }
    }
    alive.into_iter().map(|i| dag.vertices[i].id).collect()
}
