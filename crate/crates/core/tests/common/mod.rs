#![allow(dead_code)]

use mcsched::gen::{generate_system_with_menu, GenParams, PeriodMenu};
use mcsched::model::{McSystem, PeriodicTask, Time};
use mcsched::pdq::PeriodicQueue;
use rand::Rng;

pub fn random_task<R: Rng>(rng: &mut R, id: u32, max_period: Time) -> PeriodicTask {
    let period = rng.gen_range(2..=max_period);
    let deadline = rng.gen_range(1..=period);
    let capacity = rng.gen_range(1..=deadline);
    PeriodicTask { id, period, capacity, deadline }
}

/// 1 to 4 senders and one receiver, periods in [2, 50], D <= T.
pub fn random_queue<R: Rng>(rng: &mut R) -> PeriodicQueue {
    let n = rng.gen_range(1..=4);
    let senders = (0..n).map(|i| random_task(rng, i + 1, 50)).collect();
    let receiver = random_task(rng, 100, 50);
    PeriodicQueue::new(senders, receiver, None).unwrap()
}

/// Brute-force ordering of sender jobs: every job whose deadline is at most
/// `limit` is listed, sorted by (deadline, sender position) and ranked from 1.
/// Work proceeds in deadline windows so memory stays bounded. `visit`
/// receives `(rank, sender position, job index, deadline)`.
pub fn ranked_sender_jobs(q: &PeriodicQueue, limit: Time, mut visit: impl FnMut(u64, usize, u64, Time)) {
    const WINDOW: Time = 1 << 16;
    let mut rank = 0u64;
    let mut lo = 0;
    while lo <= limit {
        let hi = (lo + WINDOW).min(limit + 1);
        let mut batch: Vec<(Time, usize, u64)> = Vec::new();
        for (j, s) in q.senders().iter().enumerate() {
            // jobs with lo <= k*T + D < hi
            let first = if lo <= s.deadline { 0 } else { (lo - s.deadline).div_ceil(s.period) };
            let mut k = first;
            while k * s.period + s.deadline < hi {
                batch.push((k * s.period + s.deadline, j, k));
                k += 1;
            }
        }
        batch.sort_unstable();
        for (d, j, k) in batch {
            rank += 1;
            visit(rank, j, k, d);
        }
        lo = hi;
    }
}

/// Periods whose pairwise LCMs stay at or below 200.
pub fn small_menu() -> PeriodMenu {
    PeriodMenu { periods: vec![10, 20, 25, 40, 50, 100, 200] }
}

pub fn small_system<R: Rng>(rng: &mut R, seed: u64) -> McSystem {
    loop {
        let cores = rng.gen_range(1..=4);
        let n_dags = rng.gen_range(1..=2);
        let n_vertices_per_dag = rng.gen_range(1..=5);
        let params = GenParams {
            u_target: rng.gen_range(0.1..0.9) * cores as f64,
            n_dags,
            n_vertices_per_dag,
            rho: rng.gen_range(0.4..=1.0),
            f: rng.gen_range(1.0..3.0),
            e: rng.gen_range(0.0..0.5),
            cores,
            seed: seed ^ rng.gen::<u64>(),
        };
        if let Ok(s) = generate_system_with_menu(&params, &small_menu()) {
            return s;
        }
    }
}
