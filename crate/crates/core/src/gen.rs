//! Random MC-system generation.
//!
//! The system utilization is first split across DAGs with UUniFast (a DAG
//! may receive more than 1 since it runs in parallel), then inside each DAG
//! across HI vertices with UUniFast-discard (a vertex is sequential, so no
//! share may exceed 1). HI vertices are scaled down by `f` in LO mode and
//! the freed LO-mode utilization is handed to the LO vertices, so both
//! modes see the same total before integer rounding.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Criticality, McDag, McSystem, Time, Vertex};

/// Redraws allowed per UUniFast-discard call before giving up.
pub const MAX_DISCARD_ROUNDS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("cannot split utilization {u_total} over {n} sequential tasks (each at most 1)")]
    Infeasible { u_total: f64, n: usize },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> GenError {
    GenError::InvalidParam { field, reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    /// Total utilization, identical in both modes.
    pub u_target: f64,
    pub n_dags: usize,
    pub n_vertices_per_dag: usize,
    /// Ratio of HI vertices per DAG.
    pub rho: f64,
    /// LO-mode budget of a HI vertex is its HI-mode budget divided by `f`.
    pub f: f64,
    /// Edge probability.
    pub e: f64,
    pub cores: u32,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            u_target: 2.0,
            n_dags: 2,
            n_vertices_per_dag: 10,
            rho: 0.5,
            f: 2.0,
            e: 0.2,
            cores: 4,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn check(&self) -> Result<(), GenError> {
        if !(self.u_target.is_finite() && self.u_target > 0.0) {
            return Err(invalid("u", format!("must be > 0, got {}", self.u_target)));
        }
        if self.n_dags == 0 {
            return Err(invalid("dags", "must be at least 1"));
        }
        if self.n_vertices_per_dag == 0 {
            return Err(invalid("vertices", "must be at least 1"));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(invalid("rho", format!("must lie in (0, 1], got {}", self.rho)));
        }
        if self.hi_vertices_per_dag() == 0 {
            return Err(invalid(
                "rho",
                format!("rho * vertices rounds to 0 HI vertices ({} * {})", self.rho, self.n_vertices_per_dag),
            ));
        }
        if !(self.f.is_finite() && self.f >= 1.0) {
            return Err(invalid("f", format!("must be >= 1, got {}", self.f)));
        }
        if !(0.0..=1.0).contains(&self.e) {
            return Err(invalid("e", format!("must lie in [0, 1], got {}", self.e)));
        }
        if self.cores == 0 {
            return Err(invalid("cores", "must be at least 1"));
        }
        Ok(())
    }

    pub fn hi_vertices_per_dag(&self) -> usize {
        ((self.rho * self.n_vertices_per_dag as f64).round() as usize).min(self.n_vertices_per_dag)
    }
}

/// Periods a generated DAG may receive. Composite numbers only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodMenu {
    pub periods: Vec<Time>,
}

impl Default for PeriodMenu {
    fn default() -> Self {
        PeriodMenu { periods: vec![100, 120, 150, 180, 200, 220, 250, 300, 400, 500] }
    }
}

/// UUniFast: `n` positive shares summing to `u_target`, uniformly
/// distributed over the simplex. Shares are unbounded above.
pub fn split_system_utilization<R: Rng + ?Sized>(u_target: f64, n: usize, rng: &mut R) -> Vec<f64> {
    assert!(n >= 1, "need at least one share");
    let mut shares = Vec::with_capacity(n);
    let mut remaining = u_target;
    for i in (1..n).rev() {
        let next = remaining * rng.gen::<f64>().powf(1.0 / i as f64);
        shares.push(remaining - next);
        remaining = next;
    }
    shares.push(remaining);
    shares
}

/// UUniFast-discard: like [`split_system_utilization`] but every share
/// must be at most 1; offending vectors are redrawn.
pub fn uunifast_discard<R: Rng + ?Sized>(u_total: f64, n: usize, rng: &mut R) -> Result<Vec<f64>, GenError> {
    const EPS: f64 = 1e-9;
    if n == 0 || u_total < 0.0 || u_total > n as f64 + EPS {
        return Err(GenError::Infeasible { u_total, n });
    }
    // The simplex corner is the only feasible point; sampling would never hit it.
    if u_total >= n as f64 - EPS {
        return Ok(vec![u_total / n as f64; n]);
    }
    for _ in 0..MAX_DISCARD_ROUNDS {
        let shares = split_system_utilization(u_total, n, rng);
        if shares.iter().all(|&u| u <= 1.0) {
            return Ok(shares);
        }
    }
    Err(GenError::Infeasible { u_total, n })
}

/// Random precedence edges over `n_hi + n_lo` vertices created HI block
/// first. A pair `(i, j)` with `i < j` in creation order becomes the edge
/// `i -> j` with probability `e`, so the result is acyclic by construction.
/// Indices are creation positions.
pub fn random_topology<R: Rng + ?Sized>(n_hi: usize, n_lo: usize, e: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let n = n_hi + n_lo;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(e) {
                edges.push((i, j));
            }
        }
    }
    edges
}

fn budget(u: f64, period: Time) -> Time {
    ((u * period as f64).round() as Time).max(1)
}

pub fn generate_system(params: &GenParams) -> Result<McSystem, GenError> {
    generate_system_with_menu(params, &PeriodMenu::default())
}

pub fn generate_system_with_menu(params: &GenParams, menu: &PeriodMenu) -> Result<McSystem, GenError> {
    params.check()?;
    if menu.periods.is_empty() || menu.periods.contains(&0) {
        return Err(invalid("periods", "menu must hold positive periods"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let shares = split_system_utilization(params.u_target, params.n_dags, &mut rng);
    let n_hi = params.hi_vertices_per_dag();
    let n_lo = params.n_vertices_per_dag - n_hi;

    let mut next_vertex = 0u32;
    let mut dags = Vec::with_capacity(params.n_dags);
    for (d, &share) in shares.iter().enumerate() {
        let period = *menu.periods.choose(&mut rng).expect("non-empty menu");
        let hi_utils = uunifast_discard(share, n_hi, &mut rng)?;
        let lo_total = share - share / params.f;
        let lo_utils = if n_lo > 0 {
            uunifast_discard(lo_total.max(0.0), n_lo, &mut rng)?
        } else {
            Vec::new()
        };

        let mut vertices = Vec::with_capacity(params.n_vertices_per_dag);
        for (i, &u) in hi_utils.iter().enumerate() {
            let c_lo = budget(u / params.f, period);
            let c_hi = budget(u, period).max(c_lo);
            vertices.push(Vertex {
                id: next_vertex,
                name: format!("D{d}H{i}"),
                crit: Criticality::Hi,
                c_lo,
                c_hi,
            });
            next_vertex += 1;
        }
        for (i, &u) in lo_utils.iter().enumerate() {
            vertices.push(Vertex {
                id: next_vertex,
                name: format!("D{d}L{i}"),
                crit: Criticality::Lo,
                c_lo: budget(u, period),
                c_hi: 0,
            });
            next_vertex += 1;
        }

        let edges = random_topology(n_hi, n_lo, params.e, &mut rng)
            .into_iter()
            .map(|(a, b)| (vertices[a].id, vertices[b].id))
            .collect();
        dags.push(McDag { id: d as u32, period, vertices, edges });
    }
    Ok(McSystem { cores: params.cores, dags })
}

/// Largest gap between LO- and HI-mode utilization that budget rounding
/// can introduce: one slot per vertex per period.
pub fn rounding_slack(system: &McSystem) -> f64 {
    system
        .dags
        .iter()
        .map(|d| d.vertices.len() as f64 / d.period as f64)
        .sum()
}
