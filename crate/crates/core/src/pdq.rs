//! Periodic-delayed communication over a single queue.
//!
//! Every sender job writes exactly one message. The message becomes
//! visible to the receiver at the first receiver release at or after the
//! sender job's deadline, and all messages delivered to a receiver job are
//! discarded when that job completes. Messages are ordered by sender
//! deadline, then by the senders' list order.
//!
//! The index functions below are closed forms over the static task
//! parameters: a sender job can compute where to write, and a receiver job
//! where to read, without any shared state.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{checked_lcm, ModelError, PeriodicTask, Time};

#[derive(Debug, Error)]
pub enum PdqError {
    #[error(transparent)]
    Task(#[from] ModelError),
    #[error("malformed queue document: {0}")]
    Malformed(String),
    #[error("sender ids must be distinct (id {0} repeats)")]
    DuplicateSender(u32),
    #[error("queue capacity must be at least 1")]
    ZeroCapacity,
    #[error("hyperperiod overflows the time range")]
    Overflow,
    #[error(
        "slot {slot} collision at t={time}: message {incoming} written while message {resident} is still live"
    )]
    SlotCollision { slot: u64, time: Time, incoming: u64, resident: u64 },
    #[error("receiver job {job} expected message {seq} in slot {slot} at t={time}")]
    MissingMessage { job: u64, seq: u64, slot: u64, time: Time },
}

/// A queue fed by `senders` (in priority order) and drained by `receiver`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodicQueue {
    senders: Vec<PeriodicTask>,
    receiver: PeriodicTask,
    capacity: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QueueDoc {
    senders: Vec<PeriodicTask>,
    receiver: PeriodicTask,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    capacity: Option<u64>,
}

impl PeriodicQueue {
    /// Capacity defaults to [`queue_bound`](Self::queue_bound).
    pub fn new(senders: Vec<PeriodicTask>, receiver: PeriodicTask, capacity: Option<u64>) -> Result<Self, PdqError> {
        for t in senders.iter().chain(std::iter::once(&receiver)) {
            t.check()?;
        }
        for (i, s) in senders.iter().enumerate() {
            if senders[..i].iter().any(|o| o.id == s.id) {
                return Err(PdqError::DuplicateSender(s.id));
            }
        }
        let mut q = PeriodicQueue { senders, receiver, capacity: 1 };
        q.capacity = match capacity {
            Some(0) => return Err(PdqError::ZeroCapacity),
            Some(c) => c,
            None => q.queue_bound().max(1),
        };
        Ok(q)
    }

    pub fn from_json(text: &str) -> Result<Self, PdqError> {
        let doc: QueueDoc = serde_json::from_str(text).map_err(|e| PdqError::Malformed(e.to_string()))?;
        Self::new(doc.senders, doc.receiver, doc.capacity)
    }

    pub fn to_json(&self) -> String {
        let doc = QueueDoc { senders: self.senders.clone(), receiver: self.receiver, capacity: Some(self.capacity) };
        serde_json::to_string_pretty(&doc).expect("queue serializes")
    }

    pub fn senders(&self) -> &[PeriodicTask] {
        &self.senders
    }

    pub fn receiver(&self) -> &PeriodicTask {
        &self.receiver
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn with_capacity(mut self, capacity: u64) -> Self {
        self.capacity = capacity.max(1);
        self
    }

    /// LCM of every sender and receiver period.
    pub fn hyperperiod(&self) -> Result<Time, PdqError> {
        self.senders
            .iter()
            .chain(std::iter::once(&self.receiver))
            .try_fold(1, |acc, t| checked_lcm(acc, t.period))
            .ok_or(PdqError::Overflow)
    }

    /// Number of messages whose sender deadline is `<= t`: the sum over
    /// senders of `floor((t - D) / T) + 1`, each term clamped at 0.
    pub fn received_count(&self, t: Time) -> u64 {
        self.senders.iter().map(|s| jobs_due_by(s, t)).sum()
    }

    /// Messages of later senders (in list order) whose deadline coincides
    /// with that of job `k` of sender `j`.
    pub fn followers(&self, j: usize, k: u64) -> u64 {
        let deadline = job_deadline(&self.senders[j], k);
        self.senders[j + 1..].iter().map(|s| collide(s, deadline)).sum()
    }

    /// 1-based global sequence number of the message sent by job `k` of
    /// sender `j`.
    pub fn send_index(&self, j: usize, k: u64) -> u64 {
        self.received_count(job_deadline(&self.senders[j], k)) - self.followers(j, k)
    }

    /// Storage slot of the message sent by job `k` of sender `j`.
    pub fn send_slot(&self, j: usize, k: u64) -> u64 {
        self.send_index(j, k) % self.capacity
    }

    /// Highest sequence number visible at the release of receiver job `k`.
    pub fn read_index(&self, k: u64) -> u64 {
        self.received_count(k * self.receiver.period)
    }

    /// Sequence numbers consumed by receiver job `k`, as an inclusive range
    /// (empty when the job receives nothing).
    pub fn consumed_range(&self, k: u64) -> std::ops::RangeInclusive<u64> {
        let before = if k == 0 { 0 } else { self.read_index(k - 1) };
        (before + 1)..=self.read_index(k)
    }

    /// First receiver release at or after the deadline of job `k` of sender `j`.
    pub fn delivery_time(&self, j: usize, k: u64) -> Time {
        let tr = self.receiver.period;
        job_deadline(&self.senders[j], k).div_ceil(tr) * tr
    }

    /// Sufficient capacity: the sum over senders of
    /// `floor((2 * T_receiver + D_max) / T) + 1`, with `D_max` the largest
    /// sender deadline.
    pub fn queue_bound(&self) -> u64 {
        let d_max = self.senders.iter().map(|s| s.deadline).max().unwrap_or(0);
        let span = 2 * self.receiver.period + d_max;
        self.senders.iter().map(|s| span / s.period + 1).sum()
    }

    /// Messages of sender jobs released before `horizon`, in sequence order.
    pub fn messages(&self, horizon: Time) -> Vec<Message> {
        self.message_stream(horizon).collect()
    }

    /// Lazily merges the senders' deadline sequences in `(deadline, sender
    /// order)` order, which is sequence order. Memory is O(senders).
    pub fn message_stream(&self, horizon: Time) -> impl Iterator<Item = Message> + '_ {
        let mut heads: BinaryHeap<Reverse<(Time, usize, u64)>> = self
            .senders
            .iter()
            .enumerate()
            .filter(|(_, s)| horizon > 0 && s.period > 0)
            .map(|(j, s)| Reverse((s.deadline, j, 0)))
            .collect();
        std::iter::from_fn(move || {
            let Reverse((_, j, k)) = heads.pop()?;
            let s = &self.senders[j];
            if (k + 1) * s.period < horizon {
                heads.push(Reverse((job_deadline(s, k + 1), j, k + 1)));
            }
            Some(self.message(j, k))
        })
    }

    fn message(&self, j: usize, k: u64) -> Message {
        let seq = self.send_index(j, k);
        Message {
            seq,
            sender: j,
            sender_job: k,
            send_deadline: job_deadline(&self.senders[j], k),
            delivery_time: self.delivery_time(j, k),
            slot: seq % self.capacity,
        }
    }

    /// Worst-case lifetime of a message: from its sender job's release (the
    /// earliest it can be written) to the deadline of the receiver job it
    /// is delivered to (the latest it is discarded).
    pub fn live_interval(&self, m: &Message) -> (Time, Time) {
        let s = &self.senders[m.sender];
        (m.sender_job * s.period, m.delivery_time + self.receiver.deadline)
    }

    /// Pairs of messages that share a slot while both can be live, over
    /// sender jobs released before `horizon`.
    pub fn live_slot_collisions(&self, horizon: Time) -> Vec<(Message, Message)> {
        // Sequence order is deadline order and a message cannot be
        // discarded before its deadline, so a message overlaps some earlier
        // message of its slot iff it starts before the latest end seen there.
        let mut latest: Vec<Option<(Message, Time)>> = vec![None; self.capacity as usize];
        let mut out = Vec::new();
        for m in self.message_stream(horizon) {
            let (start, end) = self.live_interval(&m);
            let cell = &mut latest[m.slot as usize];
            match cell {
                Some((prev, prev_end)) => {
                    if start < *prev_end {
                        out.push((prev.clone(), m.clone()));
                    }
                    if end > *prev_end {
                        *cell = Some((m, end));
                    }
                }
                None => *cell = Some((m, end)),
            }
        }
        out
    }

    /// Discrete-event run over `[0, horizon)`. Sender jobs finish, and
    /// write, at a random instant in `[release + C, release + D]`; receiver
    /// jobs read their range of slots at release and free them at a random
    /// completion instant. The consumed messages are read back out of the
    /// slot array, so any indexing error shows up as a missing message or a
    /// collision.
    pub fn simulate<R: Rng + ?Sized>(&self, horizon: Time, rng: &mut R) -> Result<Simulation, PdqError> {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
        enum Action {
            // order at equal instants: free, then write, then read
            Discard { job: u64 },
            Write { sender: usize, job: u64 },
            Read { job: u64 },
        }

        let mut agenda: BinaryHeap<Reverse<(Time, Action)>> = BinaryHeap::new();
        for (j, s) in self.senders.iter().enumerate() {
            for k in 0..horizon.div_ceil(s.period) {
                let release = k * s.period;
                let done = release + rng.gen_range(s.capacity..=s.deadline);
                agenda.push(Reverse((done, Action::Write { sender: j, job: k })));
            }
        }
        let r = &self.receiver;
        if !self.senders.is_empty() {
            for k in 0..horizon.div_ceil(r.period) {
                agenda.push(Reverse((k * r.period, Action::Read { job: k })));
            }
        }

        let mut slots: Vec<Option<Message>> = vec![None; self.capacity as usize];
        let mut trace = Vec::new();
        let mut events = Vec::new();
        while let Some(Reverse((time, action))) = agenda.pop() {
            match action {
                Action::Write { sender, job } => {
                    let m = self.message(sender, job);
                    let cell = &mut slots[m.slot as usize];
                    if let Some(resident) = cell {
                        return Err(PdqError::SlotCollision {
                            slot: m.slot,
                            time,
                            incoming: m.seq,
                            resident: resident.seq,
                        });
                    }
                    events.push(PortEvent { time, kind: EventKind::Write, seq: m.seq, slot: m.slot });
                    *cell = Some(m);
                }
                Action::Read { job } => {
                    let mut consumed = Vec::new();
                    for seq in self.consumed_range(job) {
                        let slot = seq % self.capacity;
                        match &slots[slot as usize] {
                            Some(m) if m.seq == seq => consumed.push(m.clone()),
                            _ => return Err(PdqError::MissingMessage { job, seq, slot, time }),
                        }
                        events.push(PortEvent { time, kind: EventKind::Read { receiver_job: job }, seq, slot });
                    }
                    let done = time + rng.gen_range(r.capacity..=r.deadline);
                    agenda.push(Reverse((done, Action::Discard { job })));
                    trace.push(ReceiverJob { job, release: time, consumed });
                }
                Action::Discard { job } => {
                    for seq in self.consumed_range(job) {
                        let slot = seq % self.capacity;
                        slots[slot as usize] = None;
                        events.push(PortEvent { time, kind: EventKind::Discard { receiver_job: job }, seq, slot });
                    }
                }
            }
        }
        Ok(Simulation { trace: Trace { jobs: trace }, events })
    }
}

fn job_deadline(s: &PeriodicTask, k: u64) -> Time {
    k * s.period + s.deadline
}

fn jobs_due_by(s: &PeriodicTask, t: Time) -> u64 {
    if t < s.deadline {
        0
    } else {
        (t - s.deadline) / s.period + 1
    }
}

/// 1 iff `t` is a deadline of `s`.
pub fn collide(s: &PeriodicTask, t: Time) -> u64 {
    (t >= s.deadline && (t - s.deadline) % s.period == 0) as u64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub seq: u64,
    /// Position of the sender in the queue's sender list.
    pub sender: usize,
    pub sender_job: u64,
    pub send_deadline: Time,
    pub delivery_time: Time,
    pub slot: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiverJob {
    pub job: u64,
    pub release: Time,
    pub consumed: Vec<Message>,
}

/// What each receiver job consumed. Independent of execution jitter.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub jobs: Vec<ReceiverJob>,
}

impl Trace {
    pub const CSV_HEADER: &'static str = "receiver_job,seq,sender,sender_job,send_deadline,delivery_time,slot";

    /// CSV with one row per consumed message; `sender` is the task id.
    pub fn to_csv(&self, q: &PeriodicQueue) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for rj in &self.jobs {
            for m in &rj.consumed {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    rj.job,
                    m.seq,
                    q.senders[m.sender].id,
                    m.sender_job,
                    m.send_deadline,
                    m.delivery_time,
                    m.slot
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Write,
    Read { receiver_job: u64 },
    Discard { receiver_job: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortEvent {
    pub time: Time,
    pub kind: EventKind,
    pub seq: u64,
    pub slot: u64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub trace: Trace,
    /// Port activity in time order; depends on jitter.
    pub events: Vec<PortEvent>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn task(id: u32, t: Time) -> PeriodicTask {
        PeriodicTask { id, period: t, capacity: 1, deadline: t }
    }

    /// tau1 (T=5) and tau2 (T=7) send to tau3 (T=10).
    fn three_task() -> PeriodicQueue {
        PeriodicQueue::new(vec![task(1, 5), task(2, 7)], task(3, 10), None).unwrap()
    }

    #[test]
    fn received_counts() {
        let q = three_task();
        assert_eq!(q.received_count(0), 0);
        assert_eq!(q.received_count(10), 3);
    }

    #[test]
    fn received_clamps_each_sender() {
        // D much smaller than T and t far before the first deadline of the other sender
        let q = PeriodicQueue::new(
            vec![PeriodicTask { id: 1, period: 50, capacity: 1, deadline: 40 }, task(2, 3)],
            task(3, 10),
            None,
        )
        .unwrap();
        assert_eq!(q.received_count(3), 1);
    }

    #[test]
    fn collide_cases() {
        assert_eq!(collide(&task(2, 7), 7), 1);
        assert_eq!(collide(&task(2, 7), 5), 0);
        assert_eq!(collide(&task(1, 5), 35), 1);
        assert_eq!(collide(&task(1, 5), 0), 0);
    }

    #[test]
    fn followers_cases() {
        let q = three_task();
        assert_eq!(q.followers(0, 6), 1);
        assert_eq!(q.followers(0, 0), 0);
        for k in 0..20 {
            assert_eq!(q.followers(1, k), 0);
        }
    }

    #[test]
    fn send_indices() {
        let q = three_task();
        assert_eq!(q.send_index(0, 0), 1);
        assert_eq!(q.send_index(1, 0), 2);
        assert_eq!(q.send_index(0, 1), 3);
        assert_eq!(q.received_count(35), 12);
        assert_eq!(q.send_index(0, 6), 11);
        assert_eq!(q.send_index(1, 4), 12);
    }

    #[test]
    fn read_indices() {
        let q = three_task();
        assert_eq!(q.read_index(0), 0);
        assert_eq!(q.read_index(1), 3);
        assert_eq!(q.consumed_range(0).count(), 0);
        assert_eq!(q.consumed_range(1), 1..=3);
    }

    #[test]
    fn delivery_uses_sender_deadline() {
        let q = three_task();
        // m2.2 has deadline 14 and is delivered at 20
        assert_eq!(q.delivery_time(1, 1), 20);
        assert_eq!(q.delivery_time(0, 1), 10);
    }

    #[test]
    fn bounds() {
        let one = PeriodicQueue::new(vec![task(1, 10)], task(2, 10), None).unwrap();
        assert_eq!(one.queue_bound(), 4);
        assert_eq!(three_task().queue_bound(), 10);
        assert_eq!(three_task().capacity(), 10);
    }

    #[test]
    fn bound_suffices_on_example() {
        let q = three_task();
        let h = q.hyperperiod().unwrap();
        assert!(q.live_slot_collisions(2 * h).is_empty());
        // the model's worst-case live set never exceeds the bound
        let msgs = q.messages(2 * h);
        for t in 0..2 * h {
            let live = msgs
                .iter()
                .filter(|m| {
                    let (a, b) = q.live_interval(m);
                    a <= t && t < b
                })
                .count() as u64;
            assert!(live <= 10);
        }
    }

    #[test]
    fn undersized_queue_collides() {
        let q = three_task().with_capacity(2);
        assert!(!q.live_slot_collisions(70).is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(q.simulate(70, &mut rng), Err(PdqError::SlotCollision { .. })));
    }

    #[test]
    fn zero_jitter_example_trace() {
        let q = three_task();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sim = q.simulate(70, &mut rng).unwrap();
        let job1: Vec<(usize, u64)> = sim.trace.jobs[1].consumed.iter().map(|m| (m.sender, m.sender_job)).collect();
        assert_eq!(job1, vec![(0, 0), (1, 0), (0, 1)]);
        let m22 = sim.trace.jobs.iter().flat_map(|j| &j.consumed).find(|m| m.sender == 1 && m.sender_job == 1).unwrap();
        assert_eq!(m22.delivery_time, 20);
        assert_eq!(sim.trace.jobs[2].release, 20);
    }

    #[test]
    fn no_senders_no_trace() {
        let q = PeriodicQueue::new(vec![], task(3, 10), Some(1)).unwrap();
        let sim = q.simulate(100, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(sim.trace.jobs.is_empty());
        assert!(sim.events.is_empty());
    }

    #[test]
    fn json_document() {
        let doc = r#"{"senders":[{"id":1,"T":5,"C":1,"D":5},{"id":2,"T":7,"C":1,"D":7}],
                      "receiver":{"id":3,"T":10,"C":2,"D":10}}"#;
        let q = PeriodicQueue::from_json(doc).unwrap();
        assert_eq!(q.capacity(), 10);
        let again = PeriodicQueue::from_json(&q.to_json()).unwrap();
        assert_eq!(again, q);
        assert!(matches!(
            PeriodicQueue::from_json(r#"{"senders":[{"id":1,"T":5,"C":6,"D":5}],"receiver":{"id":3,"T":10,"C":2,"D":10}}"#),
            Err(PdqError::Task(_))
        ));
        assert!(matches!(
            PeriodicQueue::from_json(r#"{"senders":[{"id":1,"T":5,"C":1,"D":5},{"id":1,"T":7,"C":1,"D":7}],"receiver":{"id":3,"T":10,"C":2,"D":10}}"#),
            Err(PdqError::DuplicateSender(1))
        ));
    }

    #[test]
    fn csv_rows() {
        let q = three_task();
        let sim = q.simulate(20, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let csv = sim.trace.to_csv(&q);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], Trace::CSV_HEADER);
        assert_eq!(lines[1], "1,1,1,0,5,10,1");
        assert_eq!(lines[2], "1,2,2,0,7,10,2");
        assert_eq!(lines[3], "1,3,1,1,10,10,3");
    }
}
