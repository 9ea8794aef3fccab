//! A deterministic discrete-event engine.
//!
//! Time is an integer number of picoseconds. Events are kept in a binary heap
//! ordered by `(fire_at, sequence)`, where `sequence` is a global counter
//! incremented on every schedule call, so events that share a timestamp fire
//! in the order they were scheduled.
//!
//! Nodes are values of a single [`Protocol`] type; heterogeneous networks use
//! an enum of node kinds. A node reacts to a delivered message through the
//! [`Scheduler`], which it can use to schedule further events or send messages
//! across configured links.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulated time in integer picoseconds since the start of a run.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const PS_PER_SECOND: f64 = 1e12;

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * 1_000)
    }

    /// Rounds to the nearest picosecond; negative and NaN inputs map to zero.
    pub fn from_secs_f64(seconds: f64) -> Self {
        let ps = (seconds * Self::PS_PER_SECOND).round();
        if ps.is_nan() || ps <= 0.0 {
            SimTime::ZERO
        } else {
            SimTime(ps as u64)
        }
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / Self::PS_PER_SECOND
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ps", self.0)
    }
}

/// Index of a node inside a [`Simulation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// Returned by every schedule call; allows cancelling the event before it fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// Behaviour attached to a node.
pub trait Protocol {
    type Message;

    fn on_event(&mut self, message: Self::Message, sched: &mut Scheduler<Self::Message>);

    /// Number of detection events recorded by this node, reported in the run summary.
    fn detection_count(&self) -> u64 {
        0
    }
}

struct Scheduled<M> {
    fire_at: SimTime,
    sequence: u64,
    target: NodeId,
    message: M,
}

impl<M> PartialEq for Scheduled<M> {
    fn eq(&self, other: &Self) -> bool {
        self.sequence == other.sequence
    }
}

impl<M> Eq for Scheduled<M> {}

impl<M> PartialOrd for Scheduled<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Scheduled<M> {
    // BinaryHeap is a max-heap: reverse so the earliest (time, sequence) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Event queue, simulated clock and link table.
pub struct Scheduler<M> {
    now: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Scheduled<M>>,
    cancelled: HashSet<u64>,
    links: HashMap<(NodeId, NodeId), SimTime>,
    current: NodeId,
    stopped: bool,
}

impl<M> Default for Scheduler<M> {
    fn default() -> Self {
        Self {
            now: SimTime::ZERO,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            links: HashMap::new(),
            current: NodeId(0),
            stopped: false,
        }
    }
}

impl<M> Scheduler<M> {
    pub fn now(&self) -> SimTime {
        self.now
    }

    /// The node whose handler is currently running.
    pub fn current_node(&self) -> NodeId {
        self.current
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn schedule(
        &mut self,
        fire_at: SimTime,
        target: NodeId,
        message: M,
    ) -> Result<EventHandle> {
        if fire_at < self.now {
            return Err(Error::Causality {
                now: self.now.0,
                requested: fire_at.0,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Scheduled {
            fire_at,
            sequence,
            target,
            message,
        });
        Ok(EventHandle(sequence))
    }

    /// Schedules relative to the current clock, which can never violate causality.
    pub fn schedule_in(&mut self, delay: SimTime, target: NodeId, message: M) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, target, message)
            .expect("relative schedule is never in the past")
    }

    /// Returns `false` if the event already fired or was already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_sequence {
            return false;
        }
        if !self.queue.iter().any(|e| e.sequence == handle.0) {
            return false;
        }
        self.cancelled.insert(handle.0)
    }

    /// Configures a one-way link with a fixed propagation delay.
    pub fn connect(&mut self, from: NodeId, to: NodeId, delay: SimTime) {
        self.links.insert((from, to), delay);
    }

    pub fn connect_both(&mut self, a: NodeId, b: NodeId, delay: SimTime) {
        self.connect(a, b, delay);
        self.connect(b, a, delay);
    }

    pub fn link_delay(&self, from: NodeId, to: NodeId) -> Option<SimTime> {
        self.links.get(&(from, to)).copied()
    }

    /// Delivers `message` to `to` after the propagation delay of the `from → to` link.
    pub fn send_classical(&mut self, from: NodeId, to: NodeId, message: M) -> Result<EventHandle> {
        let delay = self.link_delay(from, to).ok_or(Error::UnknownLink {
            from: from.0,
            to: to.0,
        })?;
        Ok(self.schedule_in(delay, to, message))
    }

    /// Sends from the node whose handler is running.
    pub fn send(&mut self, to: NodeId, message: M) -> Result<EventHandle> {
        self.send_classical(self.current, to, message)
    }

    /// Ends the run after the current handler returns.
    pub fn stop(&mut self) {
        self.stopped = true;
    }

    fn pop_next(&mut self, horizon: SimTime) -> Option<Scheduled<M>> {
        loop {
            let top = self.queue.peek()?;
            if top.fire_at > horizon {
                return None;
            }
            let event = self.queue.pop()?;
            if self.cancelled.remove(&event.sequence) {
                continue;
            }
            return Some(event);
        }
    }
}

/// Summary of one [`Simulation::run_until`] call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub events_processed: u64,
    pub final_time: SimTime,
    pub detections: Vec<u64>,
}

pub struct Simulation<P: Protocol> {
    nodes: Vec<P>,
    scheduler: Scheduler<P::Message>,
    events_processed: u64,
}

impl<P: Protocol> Default for Simulation<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Protocol> Simulation<P> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            scheduler: Scheduler::default(),
            events_processed: 0,
        }
    }

    pub fn add_node(&mut self, node: P) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    pub fn node(&self, id: NodeId) -> &P {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut P {
        &mut self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[P] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<P> {
        self.nodes
    }

    pub fn scheduler(&self) -> &Scheduler<P::Message> {
        &self.scheduler
    }

    pub fn scheduler_mut(&mut self) -> &mut Scheduler<P::Message> {
        &mut self.scheduler
    }

    pub fn now(&self) -> SimTime {
        self.scheduler.now
    }

    /// Fires every pending event with `fire_at <= horizon` in `(fire_at, sequence)`
    /// order, or until a node calls [`Scheduler::stop`].
    pub fn run_until(&mut self, horizon: SimTime) -> SimulationReport {
        self.scheduler.stopped = false;
        while let Some(event) = self.scheduler.pop_next(horizon) {
            self.scheduler.now = event.fire_at;
            self.scheduler.current = event.target;
            self.events_processed += 1;
            self.nodes[event.target.0].on_event(event.message, &mut self.scheduler);
            if self.scheduler.stopped {
                break;
            }
        }
        SimulationReport {
            events_processed: self.events_processed,
            final_time: self.scheduler.now,
            detections: self.nodes.iter().map(Protocol::detection_count).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Records every delivery as (node, clock, message).
    #[derive(Default)]
    struct Recorder {
        seen: Vec<(SimTime, u32)>,
        echo_to: Option<NodeId>,
    }

    impl Protocol for Recorder {
        type Message = u32;
        fn on_event(&mut self, message: u32, sched: &mut Scheduler<u32>) {
            self.seen.push((sched.now(), message));
            if let (Some(to), true) = (self.echo_to, message < 100) {
                sched.send(to, message + 100).unwrap();
            }
        }
        fn detection_count(&self) -> u64 {
            self.seen.len() as u64
        }
    }

    fn single() -> (Simulation<Recorder>, NodeId) {
        let mut sim = Simulation::new();
        let id = sim.add_node(Recorder::default());
        (sim, id)
    }

    #[test]
    fn event_at_zero_fires_first() {
        let (mut sim, id) = single();
        sim.scheduler_mut().schedule(SimTime(5), id, 2).unwrap();
        sim.scheduler_mut().schedule(SimTime::ZERO, id, 1).unwrap();
        sim.run_until(SimTime(10));
        assert_eq!(sim.node(id).seen, vec![(SimTime(0), 1), (SimTime(5), 2)]);
    }

    #[test]
    fn ties_fire_in_schedule_order() {
        let (mut sim, id) = single();
        for m in [7, 3, 9] {
            sim.scheduler_mut().schedule(SimTime(42), id, m).unwrap();
        }
        sim.run_until(SimTime(42));
        let order: Vec<u32> = sim.node(id).seen.iter().map(|s| s.1).collect();
        assert_eq!(order, vec![7, 3, 9]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let (mut sim, id) = single();
        sim.scheduler_mut().schedule(SimTime(10), id, 0).unwrap();
        sim.run_until(SimTime(10));
        let err = sim.scheduler_mut().schedule(SimTime(5), id, 1).unwrap_err();
        assert!(matches!(
            err,
            Error::Causality {
                now: 10,
                requested: 5
            }
        ));
    }

    #[test]
    fn empty_queue_returns_immediately() {
        let (mut sim, _) = single();
        let report = sim.run_until(SimTime::from_secs_f64(1.0));
        assert_eq!(report.events_processed, 0);
        assert_eq!(report.final_time, SimTime::ZERO);
    }

    #[test]
    fn horizon_cuts_the_run() {
        let (mut sim, id) = single();
        for ns in [1, 2, 3] {
            sim.scheduler_mut()
                .schedule(SimTime::from_ns(ns), id, ns as u32)
                .unwrap();
        }
        let report = sim.run_until(SimTime::from_ns(2));
        assert_eq!(report.events_processed, 2);
        assert_eq!(report.final_time, SimTime::from_ns(2));
        // The third event is still pending and fires on a later call.
        let report = sim.run_until(SimTime::from_ns(3));
        assert_eq!(report.events_processed, 3);
    }

    #[test]
    fn cancelled_events_never_fire() {
        let (mut sim, id) = single();
        let h = sim.scheduler_mut().schedule(SimTime(1), id, 1).unwrap();
        sim.scheduler_mut().schedule(SimTime(2), id, 2).unwrap();
        assert!(sim.scheduler_mut().cancel(h));
        assert!(!sim.scheduler_mut().cancel(h));
        let report = sim.run_until(SimTime(5));
        assert_eq!(report.events_processed, 1);
        assert_eq!(sim.node(id).seen, vec![(SimTime(2), 2)]);
    }

    #[test]
    fn classical_message_arrives_after_link_delay() {
        let mut sim: Simulation<Recorder> = Simulation::new();
        let a = sim.add_node(Recorder::default());
        let b = sim.add_node(Recorder::default());
        sim.node_mut(a).echo_to = Some(b);
        // Half of a 1 km elementary link, in vacuum.
        let half = SimTime::from_secs_f64(1_000.0 / (2.0 * crate::analytic::SPEED_OF_LIGHT));
        assert_eq!(half, SimTime(1_667_820));
        sim.scheduler_mut().connect(a, b, half);
        sim.scheduler_mut().schedule(SimTime(0), a, 1).unwrap();
        sim.run_until(SimTime::from_ns(10_000));
        assert_eq!(sim.node(b).seen, vec![(half, 101)]);
    }

    #[test]
    fn unknown_link_is_a_configuration_error() {
        let mut sched: Scheduler<u32> = Scheduler::default();
        let err = sched.send_classical(NodeId(0), NodeId(1), 5).unwrap_err();
        assert!(matches!(err, Error::UnknownLink { from: 0, to: 1 }));
    }

    #[test]
    fn zero_delay_loopback_fires_after_current_event() {
        let mut sim: Simulation<Recorder> = Simulation::new();
        let a = sim.add_node(Recorder::default());
        sim.node_mut(a).echo_to = Some(a);
        sim.scheduler_mut().connect(a, a, SimTime::ZERO);
        sim.scheduler_mut().schedule(SimTime(3), a, 1).unwrap();
        sim.scheduler_mut().schedule(SimTime(3), a, 2).unwrap();
        sim.run_until(SimTime(3));
        let order: Vec<u32> = sim.node(a).seen.iter().map(|s| s.1).collect();
        // Both loopbacks land at t=3 behind the events already queued there.
        assert_eq!(order, vec![1, 2, 101, 102]);
        assert!(sim.node(a).seen.iter().all(|s| s.0 == SimTime(3)));
    }

    #[test]
    fn identical_runs_produce_identical_reports() {
        let run = || {
            let (mut sim, id) = single();
            for (i, t) in [9u64, 1, 4, 4, 7].iter().enumerate() {
                sim.scheduler_mut()
                    .schedule(SimTime(*t), id, i as u32)
                    .unwrap();
            }
            let report = sim.run_until(SimTime(8));
            (
                serde_json::to_vec(&report).unwrap(),
                sim.node(id).seen.clone(),
            )
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn delivery_is_time_ordered_and_conserving(
            times in proptest::collection::vec(0u64..1_000, 1..60),
            horizon in 0u64..1_200,
        ) {
            let (mut sim, id) = single();
            for (i, t) in times.iter().enumerate() {
                sim.scheduler_mut().schedule(SimTime(*t), id, i as u32).unwrap();
            }
            let report = sim.run_until(SimTime(horizon));
            let seen = &sim.node(id).seen;
            let expected = times.iter().filter(|t| **t <= horizon).count();
            prop_assert_eq!(report.events_processed as usize, expected);
            prop_assert_eq!(seen.len(), expected);
            for w in seen.windows(2) {
                prop_assert!(w[0].0 <= w[1].0);
                if w[0].0 == w[1].0 {
                    prop_assert!(w[0].1 < w[1].1);
                }
            }
        }
    }
}
