//! Event-queue core: simulated clock, ordered dispatch and named random streams.
//!
//! Time is integer microseconds. Events at equal time dispatch in the order they
//! were scheduled.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MICROS_PER_SEC: u64 = 1_000_000;
pub const MICROS_PER_HOUR: u64 = 3_600 * MICROS_PER_SEC;
pub const MICROS_PER_DAY: u64 = 24 * MICROS_PER_HOUR;
/// Thirty-day month used for downtime normalization.
pub const MICROS_PER_MONTH: u64 = 30 * MICROS_PER_DAY;

/// Simulated time in microseconds since the start of the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(secs: u64) -> Self {
        SimTime(secs * MICROS_PER_SEC)
    }

    /// Rounds to the nearest microsecond; negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_nan() || secs <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((secs * MICROS_PER_SEC as f64).round() as u64)
    }

    pub fn from_hours(hours: u64) -> Self {
        SimTime(hours * MICROS_PER_HOUR)
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn plus(self, micros: u64) -> SimTime {
        SimTime(self.0 + micros)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// The kinds of event the simulation dispatches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    RequestArrival,
    HopComplete,
    MetricSample,
    HpaCheck,
    HpaUpdate,
    BackupDue,
    FailureStart,
    FailureEnd,
    ProbeDue,
    AlertEval,
    Billing,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event<P> {
    pub time: SimTime,
    pub sequence: u64,
    pub payload: P,
}

/// Handle returned by [`Scheduler::schedule`]; allows cancellation before dispatch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("event at {at} is before the current time {now}")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("random stream label must not be empty")]
    EmptyLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimClock {
    pub now: SimTime,
    pub horizon: SimTime,
}

struct Entry<P> {
    time: SimTime,
    sequence: u64,
    payload: P,
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.sequence) == (other.time, other.sequence)
    }
}
impl<P> Eq for Entry<P> {}
impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.sequence).cmp(&(other.time, other.sequence))
    }
}

/// Priority queue ordered by `(time, sequence)`.
pub struct Scheduler<P> {
    queue: BinaryHeap<Reverse<Entry<P>>>,
    cancelled: HashSet<u64>,
    next_sequence: u64,
    now: SimTime,
    dispatched: u64,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler {
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            next_sequence: 0,
            now: SimTime::ZERO,
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, time: SimTime, payload: P) -> Result<EventHandle, KernelError> {
        if time < self.now {
            return Err(KernelError::PastEvent { at: time, now: self.now });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Reverse(Entry { time, sequence, payload }));
        Ok(EventHandle(sequence))
    }

    /// Returns false if the event was already dispatched or cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        let live = self.queue.iter().any(|Reverse(e)| e.sequence == handle.0);
        live && self.cancelled.insert(handle.0)
    }

    fn pop_live(&mut self, horizon: SimTime) -> Option<Event<P>> {
        loop {
            let top = self.queue.peek()?;
            if top.0.time > horizon {
                return None;
            }
            let Reverse(entry) = self.queue.pop()?;
            if self.cancelled.remove(&entry.sequence) {
                continue;
            }
            return Some(Event {
                time: entry.time,
                sequence: entry.sequence,
                payload: entry.payload,
            });
        }
    }

    /// Dispatches every event with `time <= horizon` and leaves the clock at `horizon`.
    pub fn run_until<F>(&mut self, horizon: SimTime, mut handler: F) -> SimClock
    where
        F: FnMut(&mut Scheduler<P>, Event<P>),
    {
        while let Some(event) = self.pop_live(horizon) {
            debug_assert!(event.time >= self.now);
            self.now = event.time;
            self.dispatched += 1;
            handler(self, event);
        }
        if horizon > self.now {
            self.now = horizon;
        }
        SimClock { now: self.now, horizon }
    }
}

/// Deterministic named random stream.
///
/// The generator key is SHA-256 over the seed and label, so adding a new
/// consumer never shifts the draws of an existing one.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    label: String,
    key: [u8; 32],
    rng: ChaCha8Rng,
}

pub fn derive_stream(seed: u64, label: &str) -> Result<RngStream, KernelError> {
    if label.is_empty() {
        return Err(KernelError::EmptyLabel);
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    Ok(RngStream {
        seed,
        label: label.to_string(),
        key,
        rng: ChaCha8Rng::from_seed(key),
    })
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Child stream keyed by `id`, independent of how far this stream has advanced.
    pub fn substream(&self, id: u64) -> RngStream {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update(id.to_le_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        RngStream {
            seed: self.seed,
            label: format!("{}/{}", self.label, id),
            key,
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_at_now_runs_before_later_events() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(5), "later").unwrap();
        s.schedule(SimTime(0), "now").unwrap();
        let mut seen = vec![];
        s.run_until(SimTime(10), |_, e| seen.push(e.payload));
        assert_eq!(seen, vec!["now", "later"]);
    }

    #[test]
    fn past_event_is_rejected() {
        let mut s: Scheduler<()> = Scheduler::new();
        s.run_until(SimTime(100), |_, _| {});
        let err = s.schedule(SimTime(99), ()).unwrap_err();
        assert_eq!(
            err,
            KernelError::PastEvent {
                at: SimTime(99),
                now: SimTime(100)
            }
        );
    }

    #[test]
    fn equal_times_dispatch_in_insertion_order() {
        let mut s = Scheduler::new();
        for i in 0..10 {
            s.schedule(SimTime(7), i).unwrap();
        }
        let mut seen = vec![];
        s.run_until(SimTime(7), |_, e| seen.push(e.payload));
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn empty_run_advances_clock_to_horizon() {
        let mut s: Scheduler<()> = Scheduler::new();
        let clock = s.run_until(SimTime::from_secs(100), |_, _| panic!("no events"));
        assert_eq!(clock.now, SimTime::from_secs(100));
    }

    #[test]
    fn events_past_horizon_stay_queued() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(11), ()).unwrap();
        let mut n = 0;
        s.run_until(SimTime(10), |_, _| n += 1);
        assert_eq!(n, 0);
        assert_eq!(s.pending(), 1);
    }

    #[test]
    fn cancelled_events_are_skipped() {
        let mut s = Scheduler::new();
        let a = s.schedule(SimTime(1), 'a').unwrap();
        s.schedule(SimTime(2), 'b').unwrap();
        assert!(s.cancel(a));
        assert!(!s.cancel(a));
        let mut seen = vec![];
        s.run_until(SimTime(5), |_, e| seen.push(e.payload));
        assert_eq!(seen, vec!['b']);
    }

    #[test]
    fn handlers_can_schedule_follow_ups() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(0), 0u32).unwrap();
        let mut times = vec![];
        s.run_until(SimTime(50), |sch, e| {
            times.push(e.time.0);
            if e.payload < 5 {
                sch.schedule(e.time.plus(10), e.payload + 1).unwrap();
            }
        });
        assert_eq!(times, vec![0, 10, 20, 30, 40, 50]);
    }

    #[test]
    fn same_seed_and_label_reproduce_draws() {
        let mut a = derive_stream(7, "arrivals").unwrap();
        let mut b = derive_stream(7, "arrivals").unwrap();
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_labels_give_distinct_sequences() {
        let mut a = derive_stream(7, "arrivals").unwrap();
        let mut b = derive_stream(7, "canary").unwrap();
        let xs: Vec<u64> = (0..1000).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..1000).map(|_| b.next_u64()).collect();
        let equal = xs.iter().zip(&ys).filter(|(x, y)| x == y).count();
        assert_eq!(equal, 0);
    }

    #[test]
    fn empty_label_is_rejected() {
        assert_eq!(derive_stream(7, "").unwrap_err(), KernelError::EmptyLabel);
    }

    #[test]
    fn substreams_do_not_depend_on_parent_position() {
        let parent = derive_stream(1, "canary").unwrap();
        let mut advanced = parent.clone();
        for _ in 0..17 {
            advanced.next_u64();
        }
        assert_eq!(parent.substream(42).next_u64(), advanced.substream(42).next_u64());
        assert_ne!(parent.substream(42).next_u64(), parent.substream(43).next_u64());
    }

    #[test]
    fn unit_draws_are_in_range() {
        let mut s = derive_stream(3, "u").unwrap();
        for _ in 0..10_000 {
            let u = s.next_unit();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
