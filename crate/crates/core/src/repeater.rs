//! Repeater chains: heralded entanglement across elementary links followed by
//! deterministic swapping, simulated on the event scheduler.
//!
//! Every elementary link has a Bell-state-measurement station at its midpoint.
//! The memory at the link's left end sends a photon that reaches the station
//! half an attempt period later; the station's herald reaches both ends after
//! the other half. A failed herald triggers the next attempt at once, so link
//! `k` succeeds at `period × (attempts on k)` and the chain completes when
//! the slowest link does.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{secure_key_rate, LINEAR_OPTICS_BSM_EFFICIENCY, SPEED_OF_LIGHT};
use crate::error::{ensure_range, Error, Result};
use crate::events::{NodeId, Protocol, Scheduler, SimTime, Simulation};
use crate::optics::transmission_from_db;
use crate::rng::{SeedTree, SimRng};
use crate::states::{qber_from_fidelity, swap_chain, TwoQubitState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepeaterChainParams {
    /// Number of elementary links; `links − 1` repeater nodes.
    pub links: usize,
    pub link_length_m: f64,
    pub link_loss_db: f64,
    pub elementary_fidelity: f64,
    /// Success probability of the midpoint measurement when both photons arrive.
    pub bsm_efficiency: f64,
    pub refractive_index: f64,
    /// Charge the classical messages that report each link to Alice with
    /// their travel time.
    pub charge_swap_signaling: bool,
}

impl Default for RepeaterChainParams {
    fn default() -> Self {
        Self {
            links: 2,
            link_length_m: 1_000.0,
            link_loss_db: 0.0,
            elementary_fidelity: 1.0,
            bsm_efficiency: LINEAR_OPTICS_BSM_EFFICIENCY,
            refractive_index: 1.0,
            charge_swap_signaling: false,
        }
    }
}

impl RepeaterChainParams {
    /// A chain of `2^n` links.
    pub fn with_exponent(n: u32) -> Self {
        Self {
            links: 1 << n,
            ..Self::default()
        }
    }

    pub fn repeaters(&self) -> usize {
        self.links.saturating_sub(1)
    }

    pub fn eta_link(&self) -> f64 {
        transmission_from_db(self.link_loss_db)
    }

    pub fn success_probability(&self) -> f64 {
        self.bsm_efficiency * self.eta_link()
    }

    /// `L0/c` in vacuum, the unit in which rates are quoted.
    pub fn unit_time_s(&self) -> f64 {
        self.link_length_m / SPEED_OF_LIGHT
    }

    /// One attempt: photon to the midpoint station and herald back.
    pub fn attempt_period(&self) -> SimTime {
        SimTime::from_secs_f64(self.link_length_m * self.refractive_index / SPEED_OF_LIGHT)
    }

    pub fn validate(&self) -> Result<()> {
        if self.links == 0 {
            return Err(Error::Domain {
                name: "links",
                value: 0.0,
                range: "[1, inf)",
            });
        }
        ensure_range(
            "link_length_m",
            self.link_length_m,
            f64::MIN_POSITIVE,
            f64::MAX,
            "(0, inf)",
        )?;
        ensure_range("link_loss_db", self.link_loss_db, 0.0, f64::MAX, "[0, inf)")?;
        ensure_range(
            "elementary_fidelity",
            self.elementary_fidelity,
            0.25,
            1.0,
            "[1/4, 1]",
        )?;
        ensure_range(
            "refractive_index",
            self.refractive_index,
            1.0,
            f64::MAX,
            "[1, inf)",
        )?;
        ensure_range("bsm_efficiency", self.bsm_efficiency, 0.0, 1.0, "(0, 1]")?;
        if self.success_probability() <= 0.0 {
            return Err(Error::Divergence);
        }
        Ok(())
    }

    /// End-to-end state after swapping every link's Werner state, left to right.
    pub fn end_to_end_state(&self) -> Result<TwoQubitState> {
        let link = TwoQubitState::werner(self.elementary_fidelity)?;
        let chain = vec![link; self.links.max(1)];
        Ok(swap_chain(&chain).expect("chain is non-empty"))
    }
}

/// Outcome of one chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct EntanglementRecord {
    pub completion_time: SimTime,
    pub end_to_end_state: TwoQubitState,
    pub link_attempts: Vec<u64>,
}

#[derive(Debug, Clone, Copy)]
pub enum ChainMessage {
    Start,
    Photon { link: usize },
    Herald { link: usize, success: bool },
    LinkUp { link: usize },
}

pub struct MemoryNode {
    index: usize,
    /// Station of the link to this node's right, if any.
    right_station: Option<NodeId>,
    attempts: u64,
    links_up: Vec<bool>,
    remaining: usize,
    completed_at: Option<SimTime>,
    alice: NodeId,
    report_delay: SimTime,
}

pub struct Station {
    link: usize,
    left: NodeId,
    right: NodeId,
    p0: f64,
    rng: SimRng,
}

pub enum ChainNode {
    Memory(MemoryNode),
    Station(Station),
}

impl MemoryNode {
    fn attempt(&mut self, sched: &mut Scheduler<ChainMessage>) {
        if let Some(station) = self.right_station {
            self.attempts += 1;
            sched
                .send(station, ChainMessage::Photon { link: self.index })
                .expect("memory is connected to its station");
        }
    }

    fn on_link_up(&mut self, link: usize, sched: &mut Scheduler<ChainMessage>) {
        if !std::mem::replace(&mut self.links_up[link], true) {
            self.remaining -= 1;
            if self.remaining == 0 {
                self.completed_at = Some(sched.now());
                sched.stop();
            }
        }
    }
}

impl Protocol for ChainNode {
    type Message = ChainMessage;

    fn on_event(&mut self, message: ChainMessage, sched: &mut Scheduler<ChainMessage>) {
        match (self, message) {
            (ChainNode::Station(st), ChainMessage::Photon { link }) => {
                debug_assert_eq!(link, st.link);
                let success = rand::Rng::random::<f64>(&mut st.rng) < st.p0;
                let herald = ChainMessage::Herald { link, success };
                sched
                    .send(st.left, herald)
                    .expect("station reaches its left memory");
                if success {
                    sched
                        .send(st.right, herald)
                        .expect("station reaches its right memory");
                }
            }
            (ChainNode::Memory(mem), ChainMessage::Herald { link, success }) => {
                if link != mem.index {
                    return;
                }
                if success {
                    let me = sched.current_node();
                    if me == mem.alice {
                        mem.on_link_up(link, sched);
                    } else {
                        let delay = mem.report_delay;
                        sched.schedule_in(delay, mem.alice, ChainMessage::LinkUp { link });
                    }
                } else {
                    mem.attempt(sched);
                }
            }
            (ChainNode::Memory(mem), ChainMessage::Start) => mem.attempt(sched),
            (ChainNode::Memory(mem), ChainMessage::LinkUp { link }) => mem.on_link_up(link, sched),
            _ => {}
        }
    }
}

fn run_chain(
    params: &RepeaterChainParams,
    seeds: &SeedTree,
    state: &TwoQubitState,
) -> Result<EntanglementRecord> {
    let links = params.links;
    let period = params.attempt_period();
    let to_station = SimTime(period.as_ps() / 2);
    let from_station = period - to_station;
    let p0 = params.success_probability();

    let mut sim = Simulation::new();
    let memories: Vec<NodeId> = (0..=links)
        .map(|index| {
            let report_delay = if params.charge_swap_signaling {
                SimTime(period.as_ps() * index as u64)
            } else {
                SimTime::ZERO
            };
            sim.add_node(ChainNode::Memory(MemoryNode {
                index,
                right_station: None,
                attempts: 0,
                links_up: vec![false; links],
                remaining: links,
                completed_at: None,
                alice: NodeId(0),
                report_delay,
            }))
        })
        .collect();
    let stations: Vec<NodeId> = (0..links)
        .map(|link| {
            sim.add_node(ChainNode::Station(Station {
                link,
                left: memories[link],
                right: memories[link + 1],
                p0,
                rng: seeds.stream(&format!("link/{link}")),
            }))
        })
        .collect();
    for link in 0..links {
        if let ChainNode::Memory(m) = sim.node_mut(memories[link]) {
            m.right_station = Some(stations[link]);
        }
        let sched = sim.scheduler_mut();
        sched.connect(memories[link], stations[link], to_station);
        sched.connect(stations[link], memories[link], from_station);
        sched.connect(stations[link], memories[link + 1], from_station);
    }
    for &memory in &memories[..links] {
        sim.scheduler_mut()
            .schedule(SimTime::ZERO, memory, ChainMessage::Start)?;
    }
    sim.run_until(SimTime(u64::MAX));

    let nodes = sim.into_nodes();
    let ChainNode::Memory(alice) = &nodes[0] else {
        unreachable!("node 0 is Alice's memory")
    };
    let completion_time = alice.completed_at.ok_or(Error::Divergence)?;
    let link_attempts = nodes[..links]
        .iter()
        .map(|node| match node {
            ChainNode::Memory(m) => m.attempts,
            ChainNode::Station(_) => unreachable!("memories come first"),
        })
        .collect();
    Ok(EntanglementRecord {
        completion_time,
        end_to_end_state: state.clone(),
        link_attempts,
    })
}

/// One run of the chain from `seed`.
pub fn simulate_chain(params: &RepeaterChainParams, seed: u64) -> Result<EntanglementRecord> {
    params.validate()?;
    let state = params.end_to_end_state()?;
    run_chain(params, &SeedTree::new(seed), &state)
}

/// `shots` independent runs; shot `i` draws from its own seed branch.
pub fn simulate_shots(
    params: &RepeaterChainParams,
    shots: usize,
    seed: u64,
) -> Result<Vec<EntanglementRecord>> {
    params.validate()?;
    if shots == 0 {
        return Err(Error::Domain {
            name: "shots",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    let state = params.end_to_end_state()?;
    let root = SeedTree::new(seed);
    (0..shots)
        .into_par_iter()
        .map(|i| run_chain(params, &root.child(&format!("shot/{i}")), &state))
        .collect()
}

/// Entanglement generation rate over many shots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntanglementRate {
    pub shots: usize,
    pub mean_completion_s: f64,
    pub completion_se_s: f64,
    /// `1/⟨T⟩` in units of `c/L0`.
    pub rate_c_over_l0: f64,
    pub rate_se: f64,
}

impl EntanglementRate {
    pub fn from_records(params: &RepeaterChainParams, records: &[EntanglementRecord]) -> Self {
        let n = records.len() as f64;
        let times: Vec<f64> = records
            .iter()
            .map(|r| r.completion_time.as_secs_f64())
            .collect();
        let mean = times.iter().sum::<f64>() / n;
        let var = if records.len() > 1 {
            times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let se = (var / n).sqrt();
        let unit = params.unit_time_s();
        let rate = unit / mean;
        Self {
            shots: records.len(),
            mean_completion_s: mean,
            completion_se_s: se,
            rate_c_over_l0: rate,
            rate_se: rate * se / mean,
        }
    }
}

pub fn entanglement_rate(
    params: &RepeaterChainParams,
    shots: usize,
    seed: u64,
) -> Result<EntanglementRate> {
    let records = simulate_shots(params, shots, seed)?;
    Ok(EntanglementRate::from_records(params, &records))
}

/// BBM92 run over the end-to-end pairs of a repeater chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainKeyRate {
    pub entanglement: EntanglementRate,
    pub end_to_end_fidelity: f64,
    pub qber: f64,
    /// Sifted pairs per `L0/c`.
    pub raw_rate_c_over_l0: f64,
    /// Secure bits per `L0/c`.
    pub secure_key_rate_c_over_l0: f64,
    pub secure_key_rate_se: f64,
    /// Secure bits per second.
    pub secure_key_rate_bps: f64,
}

pub fn chain_secure_key_rate(
    params: &RepeaterChainParams,
    shots: usize,
    seed: u64,
) -> Result<ChainKeyRate> {
    ChainKeyRate::from_entanglement(params, entanglement_rate(params, shots, seed)?)
}

impl ChainKeyRate {
    /// Key rates for `params` given an already measured entanglement rate.
    /// Only the fidelity and link length of `params` matter here, so one
    /// timing run serves every elementary fidelity.
    pub fn from_entanglement(
        params: &RepeaterChainParams,
        entanglement: EntanglementRate,
    ) -> Result<Self> {
        let fidelity = params.end_to_end_state()?.fidelity().clamp(0.25, 1.0);
        let qber = qber_from_fidelity(fidelity)?;
        let raw = entanglement.rate_c_over_l0 / 2.0;
        let secure = secure_key_rate(raw, qber)?;
        let factor = if raw > 0.0 { secure / raw } else { 0.0 };
        Ok(Self {
            entanglement,
            end_to_end_fidelity: fidelity,
            qber,
            raw_rate_c_over_l0: raw,
            secure_key_rate_c_over_l0: secure,
            secure_key_rate_se: factor * entanglement.rate_se / 2.0,
            secure_key_rate_bps: secure / params.unit_time_s(),
        })
    }
}
