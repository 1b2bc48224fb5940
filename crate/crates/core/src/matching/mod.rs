//! The three matching engines and their shared bookkeeping.
//!
//! * Class I (full substitutability): source-proposing deferred acceptance
//!   with fixed quotas, one source per radio.
//! * Class II (partial substitutability): sources propose, relays hold the
//!   applicant subset with the best total score that fits their resource.
//! * Class III (no substitutability): sources share radios; a greedy start is
//!   refined by moves and swaps that raise global satisfaction.
//!
//! Every engine can be stepped one round at a time so the harness can record
//! a metrics row per iteration, and can be warm-started from a previous
//! matching after the market changed.

pub mod da;
pub mod knapsack;
mod local;
mod stability;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{capped_ratio, DroneId, Satisfaction};
use crate::preferences::Market;

use da::{DaInput, DaState};
use knapsack::Item;
use local::LocalSearch;

pub use local::IMPROVEMENT_TOLERANCE;
pub use stability::{verify_stability, Certificate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchingClass {
    #[serde(rename = "class1")]
    Class1,
    #[serde(rename = "class2")]
    Class2,
    #[serde(rename = "class3")]
    Class3,
}

impl MatchingClass {
    pub const ALL: [MatchingClass; 3] = [MatchingClass::Class1, MatchingClass::Class2, MatchingClass::Class3];

    pub fn as_str(self) -> &'static str {
        match self {
            MatchingClass::Class1 => "class1",
            MatchingClass::Class2 => "class2",
            MatchingClass::Class3 => "class3",
        }
    }
}

impl fmt::Display for MatchingClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatchingClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class1" | "1" | "full" => Ok(MatchingClass::Class1),
            "class2" | "2" | "partial" => Ok(MatchingClass::Class2),
            "class3" | "3" | "none" => Ok(MatchingClass::Class3),
            other => Err(Error::Configuration(format!("unknown matching class '{other}'"))),
        }
    }
}

/// A relay radio a source is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub relay: DroneId,
    pub radio: u32,
}

/// Assignment of sources to relay radios. Sources missing from the map are
/// unmatched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    assignment: BTreeMap<DroneId, Option<Slot>>,
}

impl Matching {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every source of the market, all unmatched.
    pub fn unmatched(market: &Market) -> Self {
        Matching {
            assignment: market.sources().iter().map(|s| (s.id, None)).collect(),
        }
    }

    pub fn assign(&mut self, source: DroneId, slot: Option<Slot>) {
        self.assignment.insert(source, slot);
    }

    pub fn remove(&mut self, source: DroneId) -> Option<Slot> {
        self.assignment.remove(&source).flatten()
    }

    pub fn slot(&self, source: DroneId) -> Option<Slot> {
        self.assignment.get(&source).copied().flatten()
    }

    pub fn contains(&self, source: DroneId) -> bool {
        self.assignment.contains_key(&source)
    }

    pub fn iter(&self) -> impl Iterator<Item = (DroneId, Option<Slot>)> + '_ {
        self.assignment.iter().map(|(k, v)| (*k, *v))
    }

    pub fn matched_count(&self) -> usize {
        self.assignment.values().filter(|v| v.is_some()).count()
    }

    pub fn occupants(&self, slot: Slot) -> Vec<DroneId> {
        self.iter().filter(|(_, v)| *v == Some(slot)).map(|(k, _)| k).collect()
    }

    pub fn relay_load(&self, relay: DroneId) -> usize {
        self.assignment.values().flatten().filter(|v| v.relay == relay).count()
    }

    pub fn is_empty(&self) -> bool {
        self.matched_count() == 0
    }
}

/// Dense form used inside the engines: `(relay index, radio)` per source index.
pub(crate) type Dense = Vec<Option<(usize, usize)>>;

/// Flat radio indexing across relays.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    offset: Vec<usize>,
    total: usize,
}

impl Layout {
    pub(crate) fn new(market: &Market) -> Self {
        let mut offset = Vec::with_capacity(market.num_relays());
        let mut total = 0;
        for r in 0..market.num_relays() {
            offset.push(total);
            total += market.radios_at(r);
        }
        Layout { offset, total }
    }

    #[inline]
    pub(crate) fn flat(&self, r: usize, k: usize) -> usize {
        self.offset[r] + k
    }

    pub(crate) fn counts(&self, dense: &[Option<(usize, usize)>]) -> Vec<u32> {
        let mut c = vec![0u32; self.total];
        for (r, k) in dense.iter().flatten() {
            c[self.flat(*r, *k)] += 1;
        }
        c
    }
}

pub(crate) fn to_dense(market: &Market, matching: &Matching) -> Result<Dense> {
    let mut dense = vec![None; market.num_sources()];
    let mut problems = Vec::new();
    for (sid, slot) in matching.iter() {
        let Some(s) = market.source_idx(sid) else {
            problems.push(format!("matching references unknown source {sid}"));
            continue;
        };
        if let Some(slot) = slot {
            match market.relay_idx(slot.relay) {
                Some(r) if (slot.radio as usize) < market.radios_at(r) => {
                    dense[s] = Some((r, slot.radio as usize));
                }
                Some(_) => problems.push(format!(
                    "source {sid}: relay {} has no radio {}",
                    slot.relay, slot.radio
                )),
                None => problems.push(format!("source {sid}: unknown relay {}", slot.relay)),
            }
        }
    }
    if problems.is_empty() {
        Ok(dense)
    } else {
        Err(Error::Validation(problems))
    }
}

pub(crate) fn from_dense(market: &Market, dense: &[Option<(usize, usize)>]) -> Matching {
    let mut m = Matching::new();
    for (s, slot) in dense.iter().enumerate() {
        let slot = slot.map(|(r, k)| Slot {
            relay: market.relays()[r].id,
            radio: k as u32,
        });
        m.assign(market.sources()[s].id, slot);
    }
    m
}

/// Rate source `s` gets at relay `r` under the class's sharing rule.
pub(crate) fn achieved_rate(market: &Market, class: MatchingClass, s: usize, r: usize, sharers: u32) -> f64 {
    let phys = market.relay_rate_at(s, r);
    match class {
        // Fixed quota: the relay's resource is cut into equal blocks.
        MatchingClass::Class1 => match (market.capacity_at(r), market.unit_bps()) {
            (Some(cap), Some(unit)) => phys.min(cap as f64 / market.quota_at(r) as f64 * unit),
            _ => phys,
        },
        // Each accepted source is granted its demanded units.
        MatchingClass::Class2 => match market.unit_bps() {
            Some(unit) => phys.min(market.units_at(s) as f64 * unit),
            None => phys,
        },
        MatchingClass::Class3 => phys / f64::from(sharers.max(1)),
    }
}

pub(crate) fn source_satisfaction(
    market: &Market,
    class: MatchingClass,
    s: usize,
    slot: Option<(usize, usize)>,
    sharers: u32,
) -> f64 {
    let rate = match slot {
        None => market.direct_rate_at(s),
        Some((r, _)) => achieved_rate(market, class, s, r, sharers),
    };
    capped_ratio(rate, market.demand_at(s))
}

/// Sum of per-source satisfaction, in source order.
pub(crate) fn total_satisfaction(
    market: &Market,
    class: MatchingClass,
    dense: &[Option<(usize, usize)>],
    counts: &[u32],
    layout: &Layout,
) -> f64 {
    dense
        .iter()
        .enumerate()
        .map(|(s, slot)| {
            let sharers = slot.map_or(1, |(r, k)| counts[layout.flat(r, k)]);
            source_satisfaction(market, class, s, *slot, sharers)
        })
        .sum()
}

pub(crate) fn global_dense(market: &Market, class: MatchingClass, dense: &[Option<(usize, usize)>]) -> f64 {
    if dense.is_empty() {
        return 0.0;
    }
    let layout = Layout::new(market);
    let counts = layout.counts(dense);
    total_satisfaction(market, class, dense, &counts, &layout) / dense.len() as f64
}

/// Mean satisfaction over all sources of the market; unmatched sources count
/// with their direct-link satisfaction.
pub fn global_satisfaction(market: &Market, class: MatchingClass, matching: &Matching) -> Result<Satisfaction> {
    let dense = to_dense(market, matching)?;
    let g = global_dense(market, class, &dense);
    crate::model::satisfaction(g, 1.0)
}

/// Achieved rate of every source, bits/s.
pub fn achieved_rates(market: &Market, class: MatchingClass, matching: &Matching) -> Result<BTreeMap<DroneId, f64>> {
    let dense = to_dense(market, matching)?;
    let layout = Layout::new(market);
    let counts = layout.counts(&dense);
    Ok(dense
        .iter()
        .enumerate()
        .map(|(s, slot)| {
            let rate = match slot {
                None => market.direct_rate_at(s),
                Some((r, k)) => achieved_rate(market, class, s, *r, counts[layout.flat(*r, *k)]),
            };
            (market.sources()[s].id, rate)
        })
        .collect())
}

/// Checks a matching against the class's feasibility invariants and returns
/// its dense form. Every violation is reported.
pub(crate) fn validate_dense(market: &Market, matching: &Matching, class: MatchingClass) -> Result<Dense> {
    let dense = to_dense(market, matching)?;
    let mut problems = Vec::new();
    let layout = Layout::new(market);
    let counts = layout.counts(&dense);
    let mut per_relay = vec![0usize; market.num_relays()];
    let mut units = vec![0u64; market.num_relays()];
    for (s, slot) in dense.iter().enumerate() {
        if let Some((r, _)) = slot {
            per_relay[*r] += 1;
            units[*r] += market.units_at(s);
            if !market.mutually_acceptable(s, *r) {
                problems.push(format!(
                    "source {} and relay {} are not mutually acceptable",
                    market.sources()[s].id,
                    market.relays()[*r].id
                ));
            }
        }
    }
    for r in 0..market.num_relays() {
        let id = market.relays()[r].id;
        match class {
            MatchingClass::Class1 => {
                if per_relay[r] > market.quota_at(r) {
                    problems.push(format!("relay {id} holds {} sources over quota {}", per_relay[r], market.quota_at(r)));
                }
                for k in 0..market.radios_at(r) {
                    if counts[layout.flat(r, k)] > 1 {
                        problems.push(format!("relay {id} radio {k} serves more than one source"));
                    }
                }
            }
            MatchingClass::Class2 => {
                if let Some(cap) = market.capacity_at(r) {
                    if units[r] > cap {
                        problems.push(format!("relay {id} holds {} units over capacity {cap}", units[r]));
                    }
                }
            }
            MatchingClass::Class3 => {}
        }
    }
    if problems.is_empty() {
        Ok(dense)
    } else {
        Err(Error::Validation(problems))
    }
}

/// Validates a matching against the market and class invariants.
pub fn validate(market: &Market, matching: &Matching, class: MatchingClass) -> Result<()> {
    validate_dense(market, matching, class).map(|_| ())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Upper bound on search iterations before giving up.
    pub max_iterations: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { max_iterations: 1000 }
    }
}

#[derive(Debug, Clone)]
struct DaTables {
    prefs: Vec<Vec<usize>>,
    rank: Vec<Vec<Option<usize>>>,
    capacity: Vec<usize>,
}

impl DaTables {
    fn new(market: &Market) -> Self {
        let prefs = (0..market.num_sources()).map(|s| market.acceptable_relays(s)).collect();
        let rank = (0..market.num_relays())
            .map(|r| (0..market.num_sources()).map(|s| market.relay_rank_at(r, s)).collect())
            .collect();
        let capacity = (0..market.num_relays()).map(|r| market.quota_at(r)).collect();
        DaTables { prefs, rank, capacity }
    }

    fn input(&self) -> DaInput<'_> {
        DaInput {
            proposer_prefs: &self.prefs,
            acceptor_rank: &self.rank,
            capacity: &self.capacity,
        }
    }
}

/// Class II proposal state: sources propose down their lists, relays keep a
/// best-fitting subset of holds plus new applicants.
#[derive(Debug, Clone)]
struct Packing {
    prefs: Vec<Vec<usize>>,
    next: Vec<usize>,
    holds: Vec<Vec<usize>>,
    held_by: Vec<Option<usize>>,
}

impl Packing {
    fn cold(market: &Market) -> Self {
        Packing {
            prefs: (0..market.num_sources()).map(|s| market.acceptable_relays(s)).collect(),
            next: vec![0; market.num_sources()],
            holds: vec![Vec::new(); market.num_relays()],
            held_by: vec![None; market.num_sources()],
        }
    }

    /// Keeps current holds; held sources continue below their relay, every
    /// unheld source starts over from the top of its list.
    fn warm(market: &Market, previous: &[Option<(usize, usize)>]) -> Self {
        let mut p = Packing::cold(market);
        for (s, slot) in previous.iter().enumerate() {
            if let Some((r, _)) = slot {
                if let Some(pos) = p.prefs[s].iter().position(|x| x == r) {
                    p.next[s] = pos + 1;
                    p.held_by[s] = Some(*r);
                    p.holds[*r].push(s);
                }
            }
        }
        for r in 0..market.num_relays() {
            p.holds[r].sort_by_key(|&s| market.relay_rank_at(r, s));
        }
        p
    }

    fn can_propose(&self, s: usize) -> bool {
        self.held_by[s].is_none() && self.next[s] < self.prefs[s].len()
    }

    fn is_done(&self) -> bool {
        (0..self.next.len()).all(|s| !self.can_propose(s))
    }

    fn round(&mut self, market: &Market) -> bool {
        let mut incoming = vec![Vec::new(); self.holds.len()];
        let mut any = false;
        for s in 0..self.next.len() {
            if self.can_propose(s) {
                incoming[self.prefs[s][self.next[s]]].push(s);
                self.next[s] += 1;
                any = true;
            }
        }
        for (r, new) in incoming.into_iter().enumerate() {
            if new.is_empty() {
                continue;
            }
            let mut pool: Vec<usize> = self.holds[r]
                .iter()
                .copied()
                .chain(new)
                .filter(|&s| market.relay_rank_at(r, s).is_some())
                .collect();
            pool.sort_by_key(|&s| market.relay_rank_at(r, s));
            let items: Vec<Item> = pool
                .iter()
                .map(|&s| Item {
                    value: market.relay_score_at(r, s),
                    weight: market.units_at(s),
                })
                .collect();
            let keep = knapsack::best_subset(&items, market.capacity_at(r).unwrap_or(u64::MAX));
            for &s in &self.holds[r] {
                self.held_by[s] = None;
            }
            self.holds[r] = keep.iter().map(|&i| pool[i]).collect();
            for &s in &self.holds[r] {
                self.held_by[s] = Some(r);
            }
        }
        any
    }

    fn dense(&self) -> Dense {
        self.held_by.iter().map(|h| h.map(|r| (r, 0))).collect()
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Deferred { tables: DaTables, state: DaState },
    Packing(Packing),
    Local(LocalSearch),
}

/// A steppable matching engine bound to one market.
///
/// `step` and `matching` must be called with the market the engine was
/// created for.
#[derive(Debug, Clone)]
pub struct Engine {
    class: MatchingClass,
    config: EngineConfig,
    inner: Inner,
    iterations: usize,
    converged: bool,
}

impl Engine {
    pub fn cold(market: &Market, class: MatchingClass, config: EngineConfig) -> Self {
        let inner = match class {
            MatchingClass::Class1 => {
                let tables = DaTables::new(market);
                let state = DaState::new(market.num_sources(), market.num_relays());
                Inner::Deferred { tables, state }
            }
            MatchingClass::Class2 => Inner::Packing(Packing::cold(market)),
            MatchingClass::Class3 => Inner::Local(LocalSearch::cold(market)),
        };
        Self::wrap(class, config, inner)
    }

    /// Starts from `previous`. Sources absent from `previous` start
    /// unmatched. With `departures`, Class I replays deferred acceptance from
    /// scratch: removing a proposer can change the proposer-optimal outcome
    /// for everyone, so the old holds are not a valid intermediate state.
    /// Class III skips greedy placement: newcomers start unmatched and enter
    /// through the same improving moves as everyone else.
    pub fn warm(
        market: &Market,
        class: MatchingClass,
        previous: &Matching,
        departures: bool,
        config: EngineConfig,
    ) -> Result<Self> {
        let dense = validate_dense(market, previous, class)?;
        let inner = match class {
            MatchingClass::Class1 if departures => return Ok(Self::cold(market, class, config)),
            MatchingClass::Class1 => {
                let tables = DaTables::new(market);
                let held: Vec<Option<usize>> = dense.iter().map(|d| d.map(|(r, _)| r)).collect();
                let state = DaState::resume(&tables.input(), &held);
                Inner::Deferred { tables, state }
            }
            MatchingClass::Class2 => Inner::Packing(Packing::warm(market, &dense)),
            MatchingClass::Class3 => Inner::Local(LocalSearch::warm(market, dense)),
        };
        Ok(Self::wrap(class, config, inner))
    }

    fn wrap(class: MatchingClass, config: EngineConfig, inner: Inner) -> Self {
        let converged = match &inner {
            Inner::Deferred { tables, state } => state.is_done(&tables.input()),
            Inner::Packing(p) => p.is_done(),
            Inner::Local(_) => false,
        };
        Engine {
            class,
            config,
            inner,
            iterations: 0,
            converged,
        }
    }

    pub fn class(&self) -> MatchingClass {
        self.class
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    /// Search iterations that changed the engine's state so far.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Runs one round. Returns whether anything changed.
    pub fn step(&mut self, market: &Market) -> Result<bool> {
        if self.converged {
            return Ok(false);
        }
        if self.iterations >= self.config.max_iterations {
            return Err(Error::TerminationCap {
                cap: self.config.max_iterations,
                best: Box::new(self.matching(market)),
            });
        }
        let changed = match &mut self.inner {
            Inner::Deferred { tables, state } => {
                let input = tables.input();
                let any = state.round(&input);
                if state.is_done(&input) {
                    self.converged = true;
                }
                any
            }
            Inner::Packing(p) => {
                let any = p.round(market);
                if p.is_done() {
                    self.converged = true;
                }
                any
            }
            Inner::Local(ls) => {
                let any = ls.sweep(market);
                if !any {
                    self.converged = true;
                }
                any
            }
        };
        if changed {
            self.iterations += 1;
        }
        Ok(changed)
    }

    /// Steps until converged.
    pub fn run(&mut self, market: &Market) -> Result<()> {
        while !self.converged {
            self.step(market)?;
        }
        Ok(())
    }

    pub fn matching(&self, market: &Market) -> Matching {
        from_dense(market, &self.dense(market))
    }

    pub(crate) fn dense(&self, market: &Market) -> Dense {
        match &self.inner {
            Inner::Deferred { state, .. } => {
                let mut dense = vec![None; market.num_sources()];
                for r in 0..market.num_relays() {
                    let mut holders = state.holds(r).to_vec();
                    holders.sort_by_key(|&s| market.relay_rank_at(r, s));
                    for (k, s) in holders.into_iter().enumerate() {
                        dense[s] = Some((r, k));
                    }
                }
                dense
            }
            Inner::Packing(p) => p.dense(),
            Inner::Local(ls) => ls.assignment().to_vec(),
        }
    }

    /// Accepted local-search steps as `(before, after)` global satisfaction,
    /// and the value right after greedy placement. Class III only.
    pub fn local_trace(&self) -> Option<LocalTrace<'_>> {
        match &self.inner {
            Inner::Local(ls) => Some((ls.initial_value(), ls.steps())),
            _ => None,
        }
    }
}

/// Value after greedy placement, then accepted steps as `(before, after)`.
pub type LocalTrace<'a> = (Option<f64>, &'a [(f64, f64)]);

/// Outcome of running an engine to convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct Solved {
    pub matching: Matching,
    pub iterations: usize,
}

pub fn solve(market: &Market, class: MatchingClass, config: EngineConfig) -> Result<Solved> {
    let mut engine = Engine::cold(market, class, config);
    engine.run(market)?;
    Ok(Solved {
        matching: engine.matching(market),
        iterations: engine.iterations(),
    })
}

/// Source-optimal stable matching with fixed quotas.
pub fn match_class1(market: &Market) -> Matching {
    let tables = DaTables::new(market);
    let mut state = DaState::new(market.num_sources(), market.num_relays());
    state.run(&tables.input());
    let engine = Engine {
        class: MatchingClass::Class1,
        config: EngineConfig::default(),
        inner: Inner::Deferred { tables, state },
        iterations: 0,
        converged: true,
    };
    engine.matching(market)
}

/// Capacity-aware proposal rounds with knapsack acceptance.
pub fn match_class2(market: &Market) -> Matching {
    let mut p = Packing::cold(market);
    while p.round(market) {}
    from_dense(market, &p.dense())
}

/// Greedy sharing followed by move/swap local search on global satisfaction.
pub fn match_class3(market: &Market, config: EngineConfig) -> Result<Matching> {
    solve(market, MatchingClass::Class3, config).map(|s| s.matching)
}
