use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

/// An event stamped with its firing time and a scheduling sequence number.
#[derive(Debug)]
pub struct Scheduled<E> {
    pub time: f64,
    pub seq: u64,
    pub event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // Reversed so the max-heap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Global event queue. Pops in `(time, seq)` order; the clock never runs
/// backwards.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Scheduled<E>>,
    next_seq: u64,
    now: f64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new(), next_seq: 0, now: 0.0 }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedules `event` at `time`, clamped to the current clock.
    pub fn push(&mut self, time: f64, event: E) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { time: time.max(self.now), seq, event });
        seq
    }

    pub fn pop(&mut self) -> Option<Scheduled<E>> {
        let ev = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Scheduled<E>> {
        self.heap.iter()
    }
}

/// Inbound FIFO of one node, served at a fixed rate. Entries are the service
/// start times of admitted messages not yet handed to consensus.
#[derive(Clone, Debug)]
pub struct NodeQueue {
    service_time: f64,
    free_at: f64,
    starts: VecDeque<f64>,
}

impl NodeQueue {
    pub fn new(service_rate_msgs_per_s: f64) -> Self {
        Self { service_time: 1.0 / service_rate_msgs_per_s, free_at: 0.0, starts: VecDeque::new() }
    }

    /// Messages waiting at time `t`.
    pub fn len_at(&mut self, t: f64) -> usize {
        while self.starts.front().is_some_and(|&s| s <= t) {
            self.starts.pop_front();
        }
        self.starts.len()
    }

    /// Admits a message arriving at `t` and returns when its service starts.
    pub fn admit(&mut self, t: f64) -> f64 {
        self.len_at(t);
        let start = t.max(self.free_at);
        self.free_at = start + self.service_time;
        self.starts.push_back(start);
        start
    }
}
