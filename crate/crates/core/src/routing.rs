//! Forwarding protocols as contact-driven state machines.
//!
//! A protocol state records which nodes hold how many copies of the message.
//! A meeting between a holder and another node either delivers the message
//! (the other node is the destination), hands over part of the holder's
//! copies, or does nothing. Which meetings can do something at a given
//! moment is captured by [`active_pairs`]; the engine only ever runs clocks
//! for those pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interest::{NodeId, Population};

/// Coordinate window a Mod-IB relay must fall in on the source's axis.
pub const MOD_IB_SOURCE_WINDOW: (f64, f64) = (0.05, 0.1);
/// Coordinate window that lets a Mod-IB relay claim one of the other axes.
pub const MOD_IB_CLAIM_WINDOW: (f64, f64) = (0.8, 0.85);

/// Which relays a multi-copy spray may hand copies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eligibility {
    /// Any relay met.
    FirstMeeting,
    /// Relays whose similarity to the destination is at least `gamma`.
    Threshold,
    /// Relays strictly more similar to the destination than every node that
    /// has held a copy so far.
    StrictlyCloser,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum ProtocolSpec {
    /// Two copies; the spare goes to the first relay the source meets.
    #[serde(rename = "fm")]
    FirstMeeting,
    /// Two copies; the spare goes to the first relay with similarity to the
    /// destination of at least `gamma`, or to any relay once `fallback_time`
    /// has passed. `None` resolves to the relay count `n`.
    #[serde(rename = "ib")]
    InterestBased { gamma: f64, fallback_time: Option<f64> },
    /// Copies go only to relays strictly closer to the destination than all
    /// previous holders.
    FmStar { copies: u32, max_hops: u32 },
    /// Destination-oblivious: the source hands one copy to each of `copies − 1`
    /// relays that sit in the coordinate windows and claim distinct axes.
    ModIb { copies: u32 },
    /// Binary spray: a holder with `c` copies hands over `⌊c/2⌋`.
    Spray {
        copies: u32,
        max_hops: u32,
        eligibility: Eligibility,
        gamma: f64,
    },
    /// Single copy, delivered only on a direct source/destination meeting.
    Direct,
}

/// Forwarding rule applied to a candidate relay.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Rule {
    Any,
    Threshold(f64),
    StrictlyCloser,
    CoordinateWindow,
}

impl ProtocolSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolSpec::FirstMeeting => "fm",
            ProtocolSpec::InterestBased { .. } => "ib",
            ProtocolSpec::FmStar { .. } => "fm_star",
            ProtocolSpec::ModIb { .. } => "mod_ib",
            ProtocolSpec::Spray { .. } => "spray",
            ProtocolSpec::Direct => "direct",
        }
    }

    /// Copies the source starts with.
    pub fn copies(&self) -> u32 {
        match *self {
            ProtocolSpec::FirstMeeting | ProtocolSpec::InterestBased { .. } => 2,
            ProtocolSpec::FmStar { copies, .. }
            | ProtocolSpec::ModIb { copies }
            | ProtocolSpec::Spray { copies, .. } => copies,
            ProtocolSpec::Direct => 1,
        }
    }

    /// Longest allowed source-to-destination path, in edges.
    pub fn max_hops(&self) -> u32 {
        match *self {
            ProtocolSpec::FirstMeeting
            | ProtocolSpec::InterestBased { .. }
            | ProtocolSpec::ModIb { .. } => 2,
            ProtocolSpec::FmStar { max_hops, .. } | ProtocolSpec::Spray { max_hops, .. } => max_hops,
            ProtocolSpec::Direct => 1,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let unit = |g: f64| {
            if (0.0..=1.0).contains(&g) {
                Ok(())
            } else {
                Err(Error::config(format!("gamma must lie in [0, 1], got {g}")))
            }
        };
        match *self {
            ProtocolSpec::FirstMeeting | ProtocolSpec::Direct => Ok(()),
            ProtocolSpec::InterestBased { gamma, fallback_time } => {
                unit(gamma)?;
                match fallback_time {
                    Some(t) if !(t > 0.0) => {
                        Err(Error::config(format!("fallback_time must be positive, got {t}")))
                    }
                    _ => Ok(()),
                }
            }
            ProtocolSpec::FmStar { copies, max_hops } => check_spray_shape(copies, max_hops),
            ProtocolSpec::Spray {
                copies,
                max_hops,
                gamma,
                ..
            } => {
                unit(gamma)?;
                check_spray_shape(copies, max_hops)
            }
            ProtocolSpec::ModIb { copies } => {
                if copies as usize != m {
                    return Err(Error::config(format!(
                        "mod_ib needs one copy per interest dimension (copies = m = {m}), got {copies}"
                    )));
                }
                Ok(())
            }
        }
    }

    fn rule(&self) -> Rule {
        match *self {
            ProtocolSpec::FirstMeeting | ProtocolSpec::Direct => Rule::Any,
            ProtocolSpec::InterestBased { gamma, .. } => Rule::Threshold(gamma),
            ProtocolSpec::FmStar { .. } => Rule::StrictlyCloser,
            ProtocolSpec::ModIb { .. } => Rule::CoordinateWindow,
            ProtocolSpec::Spray {
                eligibility, gamma, ..
            } => match eligibility {
                Eligibility::FirstMeeting => Rule::Any,
                Eligibility::Threshold => Rule::Threshold(gamma),
                Eligibility::StrictlyCloser => Rule::StrictlyCloser,
            },
        }
    }

    /// Copies handed to a new relay by a holder with `held` copies.
    fn handover(&self, held: u32) -> u32 {
        match self {
            ProtocolSpec::ModIb { .. } => 1,
            _ => held / 2,
        }
    }
}

fn check_spray_shape(copies: u32, max_hops: u32) -> Result<()> {
    if copies < 2 {
        return Err(Error::config(format!("copies must be at least 2, got {copies}")));
    }
    if max_hops < 2 {
        return Err(Error::config(format!("max_hops must be at least 2, got {max_hops}")));
    }
    Ok(())
}

impl fmt::Display for ProtocolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ProtocolSpec::FirstMeeting => write!(f, "FM"),
            ProtocolSpec::InterestBased { gamma, .. } => write!(f, "IB({gamma})"),
            ProtocolSpec::FmStar { copies, max_hops } => write!(f, "FM*(q={copies}, l={max_hops})"),
            ProtocolSpec::ModIb { copies } => write!(f, "Mod-IB(q={copies})"),
            ProtocolSpec::Spray {
                copies,
                max_hops,
                eligibility,
                gamma,
            } => write!(f, "Spray(q={copies}, l={max_hops}, {eligibility:?}, gamma={gamma})"),
            ProtocolSpec::Direct => write!(f, "FM0"),
        }
    }
}

/// Copies held by one node and its distance (in hops) from the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Holding {
    pub copies: u32,
    pub depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transfer {
    pub from: NodeId,
    pub to: NodeId,
    pub copies: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ForwardDecision {
    pub transfer: Option<Transfer>,
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolState {
    holders: BTreeMap<NodeId, Holding>,
    /// Relays that received copies, with their similarity to the destination.
    met_relay_log: Vec<(NodeId, f64)>,
    claimed_coords: BTreeSet<usize>,
    elapsed: f64,
    delivered_at: Option<f64>,
    delivered_by: Option<NodeId>,
    first_event_at: Option<f64>,
    /// Similarity of the source to the destination; floor of the best-so-far.
    source_similarity: f64,
    fallback_at: f64,
}

/// Fresh state: the source holds every copy.
pub fn initial_state(spec: &ProtocolSpec, pop: &Population) -> Result<ProtocolState> {
    spec.validate(pop.m())?;
    let fallback_at = match *spec {
        ProtocolSpec::InterestBased { fallback_time, .. } => fallback_time.unwrap_or(pop.n() as f64),
        _ => f64::INFINITY,
    };
    let mut holders = BTreeMap::new();
    holders.insert(
        NodeId::SOURCE,
        Holding {
            copies: spec.copies(),
            depth: 0,
        },
    );
    Ok(ProtocolState {
        holders,
        met_relay_log: Vec::new(),
        claimed_coords: BTreeSet::new(),
        elapsed: 0.0,
        delivered_at: None,
        delivered_by: None,
        first_event_at: None,
        source_similarity: pop.similarity_to_destination(NodeId::SOURCE),
        fallback_at,
    })
}

impl ProtocolState {
    pub fn holders(&self) -> &BTreeMap<NodeId, Holding> {
        &self.holders
    }

    pub fn copies_of(&self, node: NodeId) -> u32 {
        self.holders.get(&node).map_or(0, |h| h.copies)
    }

    pub fn total_copies(&self) -> u32 {
        self.holders.values().map(|h| h.copies).sum()
    }

    pub fn met_relay_log(&self) -> &[(NodeId, f64)] {
        &self.met_relay_log
    }

    pub fn claimed_coords(&self) -> &BTreeSet<usize> {
        &self.claimed_coords
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn delivered_at(&self) -> Option<f64> {
        self.delivered_at
    }

    pub fn is_delivered(&self) -> bool {
        self.delivered_at.is_some()
    }

    /// Edges on the delivery path, once delivered.
    pub fn delivery_hops(&self) -> Option<u32> {
        let by = self.delivered_by?;
        self.holders.get(&by).map(|h| h.depth + 1)
    }

    /// Time of the first transfer or delivery.
    pub fn first_event_at(&self) -> Option<f64> {
        self.first_event_at
    }

    /// Number of copy hand-overs to relays.
    pub fn relay_transfers(&self) -> usize {
        self.met_relay_log.len()
    }

    /// Highest similarity to the destination among nodes that have held a copy.
    pub fn best_similarity(&self) -> f64 {
        self.met_relay_log
            .iter()
            .map(|(_, s)| *s)
            .fold(self.source_similarity, f64::max)
    }

    pub fn fallback_open(&self) -> bool {
        self.elapsed >= self.fallback_at
    }

    /// Moves the clock forward without a contact (deadline crossings).
    pub fn advance_to(&mut self, time: f64) {
        if time > self.elapsed {
            self.elapsed = time;
        }
    }

    /// Applies a meeting between `giver` and `receiver` at `time`.
    pub fn on_contact(
        &mut self,
        spec: &ProtocolSpec,
        pop: &Population,
        giver: NodeId,
        receiver: NodeId,
        time: f64,
    ) -> Result<ForwardDecision> {
        if self.is_delivered() {
            return Err(Error::Protocol("message already delivered".into()));
        }
        if time < self.elapsed {
            return Err(Error::Protocol(format!(
                "contact at {time} precedes current time {}",
                self.elapsed
            )));
        }
        if giver == receiver {
            return Err(Error::Protocol(format!("{giver} cannot meet itself")));
        }
        let Some(&held) = self.holders.get(&giver) else {
            return Err(Error::Protocol(format!("{giver} holds no copy")));
        };

        if receiver == NodeId::DESTINATION {
            self.elapsed = time;
            self.delivered_at = Some(time);
            self.delivered_by = Some(giver);
            self.first_event_at.get_or_insert(time);
            if let Some(h) = self.holders.get_mut(&giver) {
                h.copies -= 1;
            }
            self.holders.insert(
                NodeId::DESTINATION,
                Holding {
                    copies: 1,
                    depth: held.depth + 1,
                },
            );
            return Ok(ForwardDecision {
                transfer: Some(Transfer {
                    from: giver,
                    to: receiver,
                    copies: 1,
                }),
                delivered: true,
            });
        }

        if self.holders.contains_key(&receiver) {
            return Err(Error::Protocol(format!("{receiver} already holds a copy")));
        }
        if held.copies < 2 {
            return Err(Error::Protocol(format!(
                "{giver} has a single copy and may only deliver to the destination"
            )));
        }
        if !is_active(spec, self, pop, giver, receiver) {
            return Err(Error::Protocol(format!(
                "meeting {giver}-{receiver} is not active under {spec}"
            )));
        }

        let copies = spec.handover(held.copies);
        if let ProtocolSpec::ModIb { .. } = spec {
            if let Some(axis) = claimable_axis(self, pop, receiver) {
                self.claimed_coords.insert(axis);
            }
        }
        if let Some(h) = self.holders.get_mut(&giver) {
            h.copies -= copies;
        }
        self.holders.insert(
            receiver,
            Holding {
                copies,
                depth: held.depth + 1,
            },
        );
        self.met_relay_log
            .push((receiver, pop.similarity_to_destination(receiver)));
        self.elapsed = time;
        self.first_event_at.get_or_insert(time);
        Ok(ForwardDecision {
            transfer: Some(Transfer {
                from: giver,
                to: receiver,
                copies,
            }),
            delivered: false,
        })
    }
}

/// Axis (zero based, never the source's) a Mod-IB candidate would claim.
fn claimable_axis(state: &ProtocolState, pop: &Population, candidate: NodeId) -> Option<usize> {
    let coords = pop.profile(candidate).coords();
    let (lo, hi) = MOD_IB_SOURCE_WINDOW;
    if !(lo..=hi).contains(&coords[0]) {
        return None;
    }
    let (lo, hi) = MOD_IB_CLAIM_WINDOW;
    coords
        .iter()
        .enumerate()
        .skip(1)
        .find(|(j, c)| (lo..=hi).contains(*c) && !state.claimed_coords.contains(j))
        .map(|(j, _)| j)
}

/// Whether `candidate` would be accepted as the next relay. The candidate is
/// assumed to hold no copy.
pub fn eligibility(
    spec: &ProtocolSpec,
    state: &ProtocolState,
    candidate: NodeId,
    pop: &Population,
) -> bool {
    Gate::new(spec, state).admits(state, pop, candidate)
}

/// Rule evaluation with the best-so-far similarity computed once.
struct Gate {
    rule: Rule,
    best: f64,
    fallback_open: bool,
}

impl Gate {
    fn new(spec: &ProtocolSpec, state: &ProtocolState) -> Self {
        let rule = spec.rule();
        let best = match rule {
            Rule::StrictlyCloser => state.best_similarity(),
            _ => 0.0,
        };
        Self {
            rule,
            best,
            fallback_open: matches!(spec, ProtocolSpec::InterestBased { .. }) && state.fallback_open(),
        }
    }

    fn admits(&self, state: &ProtocolState, pop: &Population, candidate: NodeId) -> bool {
        match self.rule {
            Rule::Any => true,
            Rule::Threshold(gamma) => {
                self.fallback_open || pop.similarity_to_destination(candidate) >= gamma
            }
            Rule::StrictlyCloser => pop.similarity_to_destination(candidate) > self.best,
            Rule::CoordinateWindow => claimable_axis(state, pop, candidate).is_some(),
        }
    }
}

/// Whether `giver` may still hand copies to relays.
fn can_spray(spec: &ProtocolSpec, giver: NodeId, held: Holding) -> bool {
    if held.copies < 2 || held.depth + 1 >= spec.max_hops() {
        return false;
    }
    // Mod-IB relays are picked by the source alone.
    !matches!(spec, ProtocolSpec::ModIb { .. }) || giver == NodeId::SOURCE
}

/// Whether a meeting between `giver` and `receiver` would change the state.
pub fn is_active(
    spec: &ProtocolSpec,
    state: &ProtocolState,
    pop: &Population,
    giver: NodeId,
    receiver: NodeId,
) -> bool {
    if state.is_delivered() || giver == receiver {
        return false;
    }
    let Some(&held) = state.holders.get(&giver) else {
        return false;
    };
    if receiver == NodeId::DESTINATION {
        return true;
    }
    if state.holders.contains_key(&receiver) || !can_spray(spec, giver, held) {
        return false;
    }
    eligibility(spec, state, receiver, pop)
}

/// Every ordered (giver, receiver) pair whose meeting would trigger a delivery
/// or a transfer, in canonical order: holders ascending, and for each holder
/// the destination first, then relays ascending.
pub fn active_pairs(
    spec: &ProtocolSpec,
    state: &ProtocolState,
    pop: &Population,
) -> Vec<(NodeId, NodeId)> {
    let mut pairs = Vec::new();
    if state.is_delivered() {
        return pairs;
    }
    let gate = Gate::new(spec, state);
    for (&holder, &held) in &state.holders {
        pairs.push((holder, NodeId::DESTINATION));
        if !can_spray(spec, holder, held) {
            continue;
        }
        for relay in (0..pop.n()).map(NodeId::relay) {
            if !state.holders.contains_key(&relay) && gate.admits(state, pop, relay) {
                pairs.push((holder, relay));
            }
        }
    }
    pairs
}

/// Time at which the active set changes without any meeting: the IB fallback,
/// if it would admit a relay that is not admitted now.
pub fn next_deadline(spec: &ProtocolSpec, state: &ProtocolState, pop: &Population) -> Option<f64> {
    let ProtocolSpec::InterestBased { gamma, .. } = *spec else {
        return None;
    };
    if state.is_delivered() || state.fallback_open() || state.copies_of(NodeId::SOURCE) < 2 {
        return None;
    }
    let pending = (0..pop.n())
        .map(NodeId::relay)
        .any(|r| !state.holders.contains_key(&r) && pop.similarity_to_destination(r) < gamma);
    pending.then_some(state.fallback_at)
}
