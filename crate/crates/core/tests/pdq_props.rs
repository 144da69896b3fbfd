mod common;

use mcsched::pdq::PeriodicQueue;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn queue(seed: u64) -> PeriodicQueue {
    common::random_queue(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #[test]
    fn received_is_monotone_and_periodic(seed: u64) {
        let q = queue(seed);
        let l = q.senders().iter().fold(1, |a, s| mcsched::model::checked_lcm(a, s.period).unwrap());
        let step = q.received_count(3 * l) - q.received_count(2 * l);
        for t in 0..(2 * l).min(5000) {
            prop_assert!(q.received_count(t + 1) >= q.received_count(t));
            prop_assert_eq!(q.received_count(t + l) - q.received_count(t), step);
        }
    }

    #[test]
    fn send_indices_are_a_bijection(seed: u64) {
        let q = queue(seed);
        let h = q.hyperperiod().unwrap();
        prop_assume!(h <= 20_000);
        let limit = 3 * h;
        let mut seen = vec![false; q.received_count(limit) as usize + 1];
        for (j, s) in q.senders().iter().enumerate() {
            let mut k = 0;
            while k * s.period + s.deadline <= limit {
                let idx = q.send_index(j, k) as usize;
                prop_assert!(idx >= 1 && idx < seen.len());
                prop_assert!(!seen[idx], "duplicate index {}", idx);
                seen[idx] = true;
                k += 1;
            }
        }
        prop_assert!(seen[1..].iter().all(|&b| b));
    }

    #[test]
    fn indices_need_no_state(seed: u64, j_pick: usize, k in 0u64..500) {
        let q = queue(seed);
        let j = j_pick % q.senders().len();
        let fresh = PeriodicQueue::from_json(&q.to_json()).unwrap();
        prop_assert_eq!(q.send_index(j, k), fresh.send_index(j, k));
        prop_assert_eq!(q.read_index(k), fresh.read_index(k));
        // evaluation order does not matter
        let later = q.send_index(j, k + 7);
        prop_assert_eq!(q.send_index(j, k + 7), later);
    }

    #[test]
    fn receiver_sees_deadline_order(seed: u64, jitter: u64) {
        let q = queue(seed);
        let h = q.hyperperiod().unwrap();
        prop_assume!(h <= 5_000);
        let sim = q.simulate(h, &mut ChaCha8Rng::seed_from_u64(jitter)).unwrap();
        let tr = q.receiver().period;
        for rj in &sim.trace.jobs {
            for w in rj.consumed.windows(2) {
                prop_assert!((w[0].send_deadline, w[0].sender) < (w[1].send_deadline, w[1].sender));
                prop_assert_eq!(w[1].seq, w[0].seq + 1);
            }
            for m in &rj.consumed {
                prop_assert_eq!(m.delivery_time, rj.release);
                prop_assert!(m.delivery_time >= m.send_deadline);
                prop_assert!(m.delivery_time < m.send_deadline + tr);
            }
        }
    }
}
