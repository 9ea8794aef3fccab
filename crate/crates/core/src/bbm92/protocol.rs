//! Discrete-event model of the entanglement-based link: one pair source and
//! two receivers, each with four passively selected detectors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{NodeId, Protocol, Scheduler, SimTime, Simulation};
use crate::optics::{
    arm_jitter_sigma_ps, dark_count_times, detector_index, fwhm_to_sigma, select_basis, DarkCount,
    Detector, DetectorParams, ExperimentParams, Fiber, OrderedUniformTimes, Party, PoissonTimes,
    TimeTag,
};
use crate::rng::{SeedTree, SimRng};
use crate::states::{Basis, BornTable, TwoQubitState};

/// Emissions simulated per batch in [`run_protocol_multishot`].
pub const MULTISHOT_BATCH: u64 = 1 << 20;

/// Time tags recorded by one party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTagStream {
    pub node: Party,
    pub tags: Vec<TimeTag>,
    pub acquisition_s: f64,
}

impl TimeTagStream {
    pub fn new(node: Party, tags: Vec<TimeTag>, acquisition_s: f64) -> Self {
        Self {
            node,
            tags,
            acquisition_s,
        }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Total click rate over all four detectors.
    pub fn singles_rate(&self) -> f64 {
        if self.acquisition_s > 0.0 {
            self.tags.len() as f64 / self.acquisition_s
        } else {
            0.0
        }
    }

    pub fn detector_counts(&self) -> [u64; 4] {
        let mut counts = [0; 4];
        for tag in &self.tags {
            counts[tag.detector as usize] += 1;
        }
        counts
    }
}

/// Output of one protocol simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub alice: TimeTagStream,
    pub bob: TimeTagStream,
    /// Number of pairs the source emitted.
    pub emitted_pairs: u64,
    pub exposure_s: f64,
    pub events_processed: u64,
}

#[derive(Debug, Clone, Copy)]
pub enum Bbm92Message {
    Emit,
    Photon { basis: Basis, bit: u8 },
    Dark,
}

enum EmissionSchedule {
    Poisson(PoissonTimes<SimRng>),
    Fixed(OrderedUniformTimes<SimRng>),
}

impl Iterator for EmissionSchedule {
    type Item = SimTime;

    fn next(&mut self) -> Option<SimTime> {
        match self {
            EmissionSchedule::Poisson(times) => times.next(),
            EmissionSchedule::Fixed(times) => times.next(),
        }
    }
}

/// The pair source. Each emission decides fiber survival for both arms and,
/// for the photons that survive, the basis each one meets at its receiver and
/// the joint measurement outcome.
pub struct Source {
    emissions: EmissionSchedule,
    emitted: u64,
    fibers: [Fiber; 2],
    fiber_rngs: [SimRng; 2],
    basis_rngs: [SimRng; 2],
    outcome_rng: SimRng,
    born: BornTable,
    receivers: [NodeId; 2],
}

impl Source {
    fn on_emit(&mut self, sched: &mut Scheduler<Bbm92Message>) {
        self.emitted += 1;
        let alive = [
            self.fibers[0].survives(&mut self.fiber_rngs[0]),
            self.fibers[1].survives(&mut self.fiber_rngs[1]),
        ];
        if alive[0] || alive[1] {
            let mut bases = [Basis::HV; 2];
            for arm in 0..2 {
                if alive[arm] {
                    bases[arm] = select_basis(&mut self.basis_rngs[arm]);
                }
            }
            let (a, b) = self.born.sample(bases[0], bases[1], &mut self.outcome_rng);
            let bits = [a, b];
            for arm in 0..2 {
                if alive[arm] {
                    let photon = Bbm92Message::Photon {
                        basis: bases[arm],
                        bit: bits[arm],
                    };
                    sched
                        .send(self.receivers[arm], photon)
                        .expect("source is connected to both receivers");
                }
            }
        }
        if let Some(next) = self.emissions.next() {
            let me = sched.current_node();
            sched
                .schedule(next, me, Bbm92Message::Emit)
                .expect("emission times are sorted");
        }
    }
}

/// One party's four detectors and their recorded tags.
pub struct Receiver {
    party: Party,
    detectors: [Detector; 4],
    params: DetectorParams,
    jitter_sigma_ps: [f64; 4],
    delays_ps: [i64; 4],
    rng: SimRng,
    darks: std::vec::IntoIter<DarkCount>,
    pending_dark: Option<DarkCount>,
    tags: Vec<TimeTag>,
}

fn shift(t: SimTime, delay_ps: i64) -> SimTime {
    SimTime(t.as_ps().saturating_add_signed(delay_ps))
}

impl Receiver {
    fn on_photon(&mut self, basis: Basis, bit: u8, now: SimTime) {
        let index = detector_index(basis, bit) as usize;
        let arrival = shift(now, self.delays_ps[index]);
        if let Some(tag) = self.detectors[index].detect(
            arrival,
            &self.params,
            self.jitter_sigma_ps[index],
            &mut self.rng,
        ) {
            self.tags.push(tag);
        }
    }

    fn on_dark(&mut self, sched: &mut Scheduler<Bbm92Message>) {
        if let Some(dark) = self.pending_dark.take() {
            let index = dark.detector as usize;
            let at = shift(dark.time, self.delays_ps[index]);
            if let Some(tag) = self.detectors[index].dark_click(at, &self.params) {
                self.tags.push(tag);
            }
        }
        self.schedule_dark(sched);
    }

    fn schedule_dark(&mut self, sched: &mut Scheduler<Bbm92Message>) {
        if let Some(dark) = self.darks.next() {
            self.pending_dark = Some(dark);
            let me = sched.current_node();
            let at = dark.time.max(sched.now());
            sched
                .schedule(at, me, Bbm92Message::Dark)
                .expect("dark counts are sorted");
        }
    }

    fn into_sorted_tags(mut self) -> Vec<TimeTag> {
        self.tags.sort_by_key(|t| (t.timestamp, t.detector));
        self.tags
    }
}

pub enum Bbm92Node {
    Source(Box<Source>),
    Receiver(Box<Receiver>),
}

impl Protocol for Bbm92Node {
    type Message = Bbm92Message;

    fn on_event(&mut self, message: Bbm92Message, sched: &mut Scheduler<Bbm92Message>) {
        match (self, message) {
            (Bbm92Node::Source(source), Bbm92Message::Emit) => source.on_emit(sched),
            (Bbm92Node::Receiver(rx), Bbm92Message::Photon { basis, bit }) => {
                rx.on_photon(basis, bit, sched.now())
            }
            (Bbm92Node::Receiver(rx), Bbm92Message::Dark) => rx.on_dark(sched),
            _ => {}
        }
    }

    fn detection_count(&self) -> u64 {
        match self {
            Bbm92Node::Source(_) => 0,
            Bbm92Node::Receiver(rx) => rx.tags.len() as u64,
        }
    }
}

struct Segment {
    alice: Vec<TimeTag>,
    bob: Vec<TimeTag>,
    emitted: u64,
    events: u64,
}

fn receiver(params: &ExperimentParams, party: Party, span: SimTime, seeds: &SeedTree) -> Receiver {
    let label = party.label();
    let detector = *params.detectors(party);
    let arm_sigma = arm_jitter_sigma_ps(params.detection_resolution_ps);
    let extra = params.detector_jitter_fwhm_ps.party(party);
    let jitter_sigma_ps = std::array::from_fn(|i| arm_sigma.hypot(fwhm_to_sigma(extra[i])));
    let mut dark_rng = seeds.stream(&format!("{label}/dark"));
    let darks = dark_count_times(detector.dark_rate_cps, span, &mut dark_rng);
    Receiver {
        party,
        detectors: std::array::from_fn(|i| Detector::new(party, i as u8)),
        params: detector,
        jitter_sigma_ps,
        delays_ps: *params.detector_delays_ps.party(party),
        rng: seeds.stream(&format!("{label}/detector")),
        darks: darks.into_iter(),
        pending_dark: None,
        tags: Vec::new(),
    }
}

fn simulate_segment(
    params: &ExperimentParams,
    fixed_count: Option<u64>,
    span: SimTime,
    seeds: &SeedTree,
) -> Result<Segment> {
    let state = TwoQubitState::werner_around(params.bell_state, params.source_fidelity)?;
    let emission_rng = seeds.stream("source/emission");
    let mut emissions = match fixed_count {
        Some(n) => {
            EmissionSchedule::Fixed(OrderedUniformTimes::new(n as usize, span, emission_rng))
        }
        None => {
            EmissionSchedule::Poisson(PoissonTimes::new(params.brightness_cps, span, emission_rng))
        }
    };
    let first_emission = emissions.next();

    let mut sim = Simulation::new();
    let alice = sim.add_node(Bbm92Node::Receiver(Box::new(receiver(
        params,
        Party::Alice,
        span,
        seeds,
    ))));
    let bob = sim.add_node(Bbm92Node::Receiver(Box::new(receiver(
        params,
        Party::Bob,
        span,
        seeds,
    ))));
    let source = Source {
        emissions,
        emitted: 0,
        fibers: [
            Fiber::from_loss_db(params.loss_alice_db),
            Fiber::from_loss_db(params.loss_bob_db),
        ],
        fiber_rngs: [seeds.stream("alice/fiber"), seeds.stream("bob/fiber")],
        basis_rngs: [seeds.stream("alice/basis"), seeds.stream("bob/basis")],
        outcome_rng: seeds.stream("source/outcome"),
        born: BornTable::new(&state),
        receivers: [alice, bob],
    };
    let source_id = sim.add_node(Bbm92Node::Source(Box::new(source)));
    let delay = SimTime(params.propagation_delay_ps);
    let sched = sim.scheduler_mut();
    sched.connect(source_id, alice, delay);
    sched.connect(source_id, bob, delay);
    if let Some(t) = first_emission {
        sched.schedule(t, source_id, Bbm92Message::Emit)?;
    }
    for id in [alice, bob] {
        sched.schedule(SimTime::ZERO, id, Bbm92Message::Dark)?;
    }

    let report = sim.run_until(SimTime(u64::MAX));
    let mut nodes = sim.into_nodes().into_iter();
    let mut take_receiver = || match nodes.next() {
        Some(Bbm92Node::Receiver(rx)) => rx,
        _ => unreachable!("receivers are added first"),
    };
    let alice_rx = take_receiver();
    let bob_rx = take_receiver();
    let emitted = match nodes.next() {
        Some(Bbm92Node::Source(s)) => s.emitted,
        _ => unreachable!("source is added last"),
    };
    debug_assert_eq!(alice_rx.party, Party::Alice);
    Ok(Segment {
        alice: alice_rx.into_sorted_tags(),
        bob: bob_rx.into_sorted_tags(),
        emitted,
        events: report.events_processed,
    })
}

/// Simulates `params.acquisition_s` seconds of continuous operation with
/// Poisson emissions at the configured brightness.
pub fn run_protocol(params: &ExperimentParams, seed: u64) -> Result<ProtocolRun> {
    params.validate()?;
    let span = SimTime::from_secs_f64(params.acquisition_s);
    let seeds = SeedTree::new(seed);
    let segment = simulate_segment(params, None, span, &seeds)?;
    Ok(ProtocolRun {
        alice: TimeTagStream::new(Party::Alice, segment.alice, params.acquisition_s),
        bob: TimeTagStream::new(Party::Bob, segment.bob, params.acquisition_s),
        emitted_pairs: segment.emitted,
        exposure_s: params.acquisition_s,
        events_processed: segment.events,
    })
}

/// Drops clicks that fall inside the dead time of the previous recorded click
/// on the same detector. Needed where independently simulated batches meet.
pub fn enforce_dead_time(tags: &mut Vec<TimeTag>, params: &DetectorParams) {
    let mut last: [Option<u64>; 4] = [None; 4];
    tags.retain(|tag| {
        let slot = &mut last[tag.detector as usize];
        let t = tag.timestamp.as_ps();
        if let Some(prev) = *slot {
            if t < prev.saturating_add(params.dead_time_ps) {
                return false;
            }
        }
        *slot = Some(t);
        true
    });
}

/// Simulates exactly `shots` emissions over an exposure of `shots / B`
/// seconds. The exposure is cut into batches of [`MULTISHOT_BATCH`]
/// emissions, each simulated independently from its own seed and laid end to
/// end; the result depends only on `seed` and `shots`.
pub fn run_protocol_multishot(
    params: &ExperimentParams,
    shots: u64,
    seed: u64,
) -> Result<ProtocolRun> {
    params.validate()?;
    if shots == 0 {
        return Err(Error::Domain {
            name: "shots",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    if params.brightness_cps <= 0.0 {
        return Err(Error::Domain {
            name: "brightness_cps",
            value: params.brightness_cps,
            range: "(0, inf)",
        });
    }
    let seeds = SeedTree::new(seed);
    let batches = shots.div_ceil(MULTISHOT_BATCH);
    let mut plan = Vec::with_capacity(batches as usize);
    let mut offset = 0u64;
    for k in 0..batches {
        let count = MULTISHOT_BATCH.min(shots - k * MULTISHOT_BATCH);
        let span = SimTime::from_secs_f64(count as f64 / params.brightness_cps).max(SimTime(1));
        plan.push((k, count, offset, span));
        offset += span.as_ps();
    }
    let segments: Vec<Segment> = plan
        .par_iter()
        .map(|&(k, count, offset, span)| {
            let mut seg = simulate_segment(
                params,
                Some(count),
                span,
                &seeds.child(&format!("batch/{k}")),
            )?;
            for tag in seg.alice.iter_mut().chain(seg.bob.iter_mut()) {
                tag.timestamp = SimTime(tag.timestamp.as_ps() + offset);
            }
            Ok(seg)
        })
        .collect::<Result<_>>()?;

    let exposure_s = SimTime(offset).as_secs_f64();
    let mut alice = Vec::new();
    let mut bob = Vec::new();
    let mut emitted = 0;
    let mut events = 0;
    for seg in segments {
        alice.extend(seg.alice);
        bob.extend(seg.bob);
        emitted += seg.emitted;
        events += seg.events;
    }
    for (tags, party) in [(&mut alice, Party::Alice), (&mut bob, Party::Bob)] {
        tags.sort_by_key(|t| (t.timestamp, t.detector));
        enforce_dead_time(tags, params.detectors(party));
    }
    Ok(ProtocolRun {
        alice: TimeTagStream::new(Party::Alice, alice, exposure_s),
        bob: TimeTagStream::new(Party::Bob, bob, exposure_s),
        emitted_pairs: emitted,
        exposure_s,
        events_processed: events,
    })
}
