//! Trial execution.
//!
//! A trial repeatedly asks the protocol which meetings could change its
//! state, races one exponential clock per such pair and applies the winning
//! meeting. Because exponential clocks are memoryless, drawing fresh clocks
//! after every state change ([`EngineMode::Resample`]) yields the same
//! process as keeping per-pair clocks alive ([`EngineMode::Persistent`]).

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{mean_ci, SummaryStats};
use crate::error::{Error, Result};
use crate::interest::{InterestProfile, NodeId, Population, Scenario};
use crate::meeting::{sample_exponential, sample_min_meeting, RateModel};
use crate::routing::{active_pairs, initial_state, is_active, next_deadline, ProtocolSpec, ProtocolState};
use crate::trace::{ContactTrace, ProfileTable};

/// Random source used for every trial.
pub type SimRng = ChaCha8Rng;

/// Name of the seed mixer, echoed in output metadata.
pub const SEED_MIXER: &str = "splitmix64";

/// Stream index reserved for the shared population in fixed-population mode.
const FIXED_POPULATION_STREAM: u64 = u64::MAX;

/// Confidence level of reported intervals.
pub const CONFIDENCE: f64 = 0.95;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index`: `splitmix64(master ^ splitmix64(index))`.
pub fn sub_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationMode {
    /// Fresh relay profiles for every trial.
    #[default]
    PerTrial,
    /// One population, drawn from the master seed, shared by all trials.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineMode {
    #[default]
    Resample,
    Persistent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub scenario: Scenario,
    pub rate_model: RateModel,
    pub protocol: ProtocolSpec,
    pub trials: usize,
    pub ttl: Option<f64>,
    pub master_seed: u64,
    pub population: PopulationMode,
    pub engine: EngineMode,
}

impl ExperimentConfig {
    /// Worst-case geometry, one trial, seed 0, per-trial populations.
    pub fn new(n: usize, m: usize, rate_model: RateModel, protocol: ProtocolSpec) -> Self {
        Self {
            n,
            m,
            scenario: Scenario::WorstCase,
            rate_model,
            protocol,
            trials: 1,
            ttl: None,
            master_seed: 0,
            population: PopulationMode::PerTrial,
            engine: EngineMode::Resample,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::config(format!("m must be at least 2, got {}", self.m)));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if let Some(ttl) = self.ttl {
            if !(ttl > 0.0) {
                return Err(Error::config(format!("ttl must be positive, got {ttl}")));
            }
        }
        self.protocol.validate(self.m)
    }

    fn shared_population(&self) -> Result<Option<Population>> {
        match self.population {
            PopulationMode::PerTrial => Ok(None),
            PopulationMode::Fixed => {
                let mut rng = rng_from_seed(sub_seed(self.master_seed, FIXED_POPULATION_STREAM));
                Population::sample(&mut rng, self.scenario, self.m, self.n).map(Some)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialResult {
    pub delivered: bool,
    pub delivery_time: Option<f64>,
    /// Edges on the delivery path; zero when undelivered.
    pub hops: u32,
    pub relay_transfers: u32,
    /// Time of the first transfer or delivery.
    pub t1: Option<f64>,
    pub seed: u64,
}

impl TrialResult {
    pub fn from_state(state: &ProtocolState, seed: u64) -> Self {
        Self {
            delivered: state.is_delivered(),
            delivery_time: state.delivered_at(),
            hops: state.delivery_hops().unwrap_or(0),
            relay_transfers: state.relay_transfers() as u32,
            t1: state.first_event_at(),
            seed,
        }
    }

    /// Delivery time if delivered no later than `ttl`.
    pub fn delivered_within(&self, ttl: f64) -> Option<f64> {
        self.delivery_time.filter(|t| *t <= ttl)
    }
}

/// One applied meeting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactLogEntry {
    pub time: f64,
    pub giver: NodeId,
    pub receiver: NodeId,
    pub copies: u32,
    pub delivered: bool,
}

/// Drives a single message through a population until delivery or `ttl`.
pub fn simulate<R: Rng + ?Sized>(
    pop: &Population,
    model: &RateModel,
    spec: &ProtocolSpec,
    ttl: Option<f64>,
    mode: EngineMode,
    rng: &mut R,
    mut log: Option<&mut Vec<ContactLogEntry>>,
) -> Result<ProtocolState> {
    let mut state = initial_state(spec, pop)?;
    let mut clocks: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    let mut pairs = Vec::new();
    let mut rates = Vec::new();

    loop {
        pairs.clear();
        rates.clear();
        for (giver, receiver) in active_pairs(spec, &state, pop) {
            let rate = model.rate_between(pop, giver, receiver);
            if rate > 0.0 {
                pairs.push((giver, receiver));
                rates.push(rate);
            }
        }
        let deadline = next_deadline(spec, &state, pop);
        // A protocol deadline only matters if it comes before the TTL.
        let deadline = deadline.filter(|d| ttl.is_none_or(|x| *d < x));

        let next = if rates.is_empty() {
            None
        } else {
            Some(match mode {
                EngineMode::Resample => {
                    let (dt, idx) = sample_min_meeting(rng, &rates)?;
                    (state.elapsed() + dt, idx)
                }
                EngineMode::Persistent => {
                    next_persistent(&mut clocks, &pairs, &rates, state.elapsed(), rng)
                }
            })
        };

        match (next, deadline) {
            (Some((t, _)), Some(d)) if t > d => {
                state.advance_to(d);
                continue;
            }
            (None, Some(d)) => {
                state.advance_to(d);
                continue;
            }
            (None, None) => {
                if ttl.is_some() {
                    break;
                }
                return Err(Error::config(
                    "no meeting with positive rate can deliver the message; set a ttl or a positive delta",
                ));
            }
            _ => {}
        }
        let (t, idx) = next.expect("handled above");
        if ttl.is_some_and(|x| t > x) {
            break;
        }
        let (giver, receiver) = pairs[idx];
        let decision = state.on_contact(spec, pop, giver, receiver, t)?;
        clocks.remove(&(giver, receiver));
        if let Some(log) = log.as_deref_mut() {
            log.push(ContactLogEntry {
                time: t,
                giver,
                receiver,
                copies: decision.transfer.map_or(0, |tr| tr.copies),
                delivered: decision.delivered,
            });
        }
        if decision.delivered {
            break;
        }
    }
    Ok(state)
}

/// Keeps one clock per active pair; new pairs get a fresh exponential clock.
/// Ties go to the pair listed first.
fn next_persistent<R: Rng + ?Sized>(
    clocks: &mut BTreeMap<(NodeId, NodeId), f64>,
    pairs: &[(NodeId, NodeId)],
    rates: &[f64],
    now: f64,
    rng: &mut R,
) -> (f64, usize) {
    let live: HashSet<(NodeId, NodeId)> = pairs.iter().copied().collect();
    clocks.retain(|k, _| live.contains(k));
    let mut best = (f64::INFINITY, 0);
    for (i, (pair, rate)) in pairs.iter().zip(rates).enumerate() {
        let t = *clocks
            .entry(*pair)
            .or_insert_with(|| now + sample_exponential(rng, *rate));
        if t < best.0 {
            best = (t, i);
        }
    }
    best
}

fn trial_with(
    config: &ExperimentConfig,
    shared: Option<&Population>,
    seed: u64,
    log: Option<&mut Vec<ContactLogEntry>>,
) -> Result<TrialResult> {
    let mut rng = rng_from_seed(seed);
    let sampled;
    let pop = match shared {
        Some(p) => p,
        None => {
            sampled = Population::sample(&mut rng, config.scenario, config.m, config.n)?;
            &sampled
        }
    };
    let state = simulate(
        pop,
        &config.rate_model,
        &config.protocol,
        config.ttl,
        config.engine,
        &mut rng,
        log,
    )?;
    Ok(TrialResult::from_state(&state, seed))
}

/// Runs one trial from its own seed.
pub fn run_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialResult> {
    config.validate()?;
    let shared = config.shared_population()?;
    trial_with(config, shared.as_ref(), seed, None)
}

/// Like [`run_trial`], also returning every applied meeting.
pub fn run_trial_logged(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(TrialResult, Vec<ContactLogEntry>)> {
    config.validate()?;
    let shared = config.shared_population()?;
    let mut log = Vec::new();
    let result = trial_with(config, shared.as_ref(), seed, Some(&mut log))?;
    Ok((result, log))
}

/// Aggregate of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    /// Mean delivery time over delivered trials; `None` with fewer than two.
    pub mean_delay: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub std_error: Option<f64>,
    pub delivery_rate: f64,
    pub delivered: usize,
    pub trials: usize,
}

impl ExperimentSummary {
    pub fn from_results(results: &[TrialResult]) -> Self {
        let delays: Vec<f64> = results.iter().filter_map(|r| r.delivery_time).collect();
        let stats: Option<SummaryStats> = mean_ci(&delays, CONFIDENCE).ok();
        let trials = results.len();
        Self {
            mean_delay: stats.as_ref().map(|s| s.mean),
            ci_low: stats.as_ref().map(|s| s.ci_low),
            ci_high: stats.as_ref().map(|s| s.ci_high),
            std_error: stats.as_ref().map(|s| s.std_error),
            delivery_rate: if trials == 0 {
                0.0
            } else {
                delays.len() as f64 / trials as f64
            },
            delivered: delays.len(),
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub results: Vec<TrialResult>,
    pub summary: ExperimentSummary,
}

/// Runs `config.trials` independent trials on the current rayon pool.
/// Results are in trial order whatever the worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let shared = config.shared_population()?;
    let results = (0..config.trials as u64)
        .into_par_iter()
        .map(|i| trial_with(config, shared.as_ref(), sub_seed(config.master_seed, i), None))
        .collect::<Result<Vec<_>>>()?;
    let summary = ExperimentSummary::from_results(&results);
    Ok(ExperimentOutcome { results, summary })
}

/// A message to replay over a recorded trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Message {
    pub source: String,
    pub destination: String,
    pub start_time: f64,
}

/// Contact trace indexed against a profile table, ready for many replays.
#[derive(Debug, Clone)]
pub struct Replayer {
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
    profiles: Vec<InterestProfile>,
    /// (start, a, b) sorted by start.
    events: Vec<(f64, usize, usize)>,
}

impl Replayer {
    pub fn new(trace: &ContactTrace, profiles: &ProfileTable) -> Result<Self> {
        let ids: Vec<String> = profiles.ids().cloned().collect();
        let index: BTreeMap<String, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::data(format!("trace node '{id}' has no interest profile")))
        };
        let mut events = Vec::with_capacity(trace.events().len());
        for e in trace.events() {
            events.push((e.start, lookup(&e.a)?, lookup(&e.b)?));
        }
        events.sort_by(|x, y| x.0.total_cmp(&y.0));
        let profiles = ids
            .iter()
            .map(|id| profiles.get(id).expect("id from table").clone())
            .collect();
        Ok(Self {
            ids,
            index,
            profiles,
            events,
        })
    }

    pub fn node_ids(&self) -> &[String] {
        &self.ids
    }

    /// Time span covered by the trace's contact starts.
    pub fn time_span(&self) -> Option<(f64, f64)> {
        Some((self.events.first()?.0, self.events.last()?.0))
    }

    /// Feeds contacts from `start_time` on to the protocol, in time order.
    /// Times in the result are measured from `start_time`.
    pub fn replay(
        &self,
        spec: &ProtocolSpec,
        source: &str,
        destination: &str,
        start_time: f64,
        ttl: Option<f64>,
    ) -> Result<TrialResult> {
        let s = self.node(source)?;
        let d = self.node(destination)?;
        if s == d {
            return Err(Error::data("source and destination must differ"));
        }
        // Map table index -> population node id.
        let mut to_node = vec![NodeId(0); self.ids.len()];
        let mut relays = Vec::with_capacity(self.ids.len().saturating_sub(2));
        for (i, p) in self.profiles.iter().enumerate() {
            to_node[i] = if i == s {
                NodeId::SOURCE
            } else if i == d {
                NodeId::DESTINATION
            } else {
                relays.push(p.clone());
                NodeId::relay(relays.len() - 1)
            };
        }
        let pop = Population::new(self.profiles[s].clone(), self.profiles[d].clone(), relays)?;
        let mut state = initial_state(spec, &pop)?;

        let first = self.events.partition_point(|e| e.0 < start_time);
        for &(t, a, b) in &self.events[first..] {
            let rel = t - start_time;
            if ttl.is_some_and(|x| rel > x) {
                break;
            }
            let (x, y) = (to_node[a], to_node[b]);
            state.advance_to(rel);
            let pair = if is_active(spec, &state, &pop, x, y) {
                Some((x, y))
            } else if is_active(spec, &state, &pop, y, x) {
                Some((y, x))
            } else {
                None
            };
            if let Some((giver, receiver)) = pair {
                let decision = state.on_contact(spec, &pop, giver, receiver, rel)?;
                if decision.delivered {
                    break;
                }
            }
        }
        Ok(TrialResult::from_state(&state, 0))
    }

    fn node(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::data(format!("unknown node id '{id}'")))
    }

    /// Random distinct endpoint pairs with start times uniform in `window`.
    pub fn sample_messages<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        count: usize,
        window: (f64, f64),
    ) -> Result<Vec<Message>> {
        if self.ids.len() < 2 {
            return Err(Error::data("need at least two profiled nodes"));
        }
        if !(window.1 >= window.0) {
            return Err(Error::argument(format!("empty start window {window:?}")));
        }
        let n = self.ids.len();
        Ok((0..count)
            .map(|_| {
                let s = rng.random_range(0..n);
                let mut d = rng.random_range(0..n - 1);
                if d >= s {
                    d += 1;
                }
                Message {
                    source: self.ids[s].clone(),
                    destination: self.ids[d].clone(),
                    start_time: rng.random_range(window.0..=window.1),
                }
            })
            .collect())
    }

    /// Replays every message (in parallel, results in message order).
    pub fn replay_all(
        &self,
        spec: &ProtocolSpec,
        messages: &[Message],
        ttl: Option<f64>,
    ) -> Result<Vec<TrialResult>> {
        messages
            .par_iter()
            .map(|m| self.replay(spec, &m.source, &m.destination, m.start_time, ttl))
            .collect()
    }
}

/// One-shot replay of a single message.
pub fn replay_trace(
    trace: &ContactTrace,
    profiles: &ProfileTable,
    spec: &ProtocolSpec,
    source: &str,
    destination: &str,
    start_time: f64,
    ttl: Option<f64>,
) -> Result<TrialResult> {
    Replayer::new(trace, profiles)?.replay(spec, source, destination, start_time, ttl)
}
