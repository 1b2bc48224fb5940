//! Preference lists and the market they define.
//!
//! Sources rank relays by end-to-end relayed rate and only accept relays that
//! beat their direct link. Relays rank applicants by transmission efficiency:
//! the achievable rate through the relay per unit of relay resource the
//! applicant would consume.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Drone, DroneId, LinkModel, Role};

/// Scores closer than this are treated as tied and ordered by id.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceList {
    pub owner: DroneId,
    /// Best first.
    ranked: Vec<(DroneId, f64)>,
    /// Candidates scoring at or below the cutoff are unacceptable.
    pub cutoff: f64,
}

impl PreferenceList {
    /// Ranks candidates by descending score. Scores within [`TIE_TOLERANCE`]
    /// of their neighbour form a tie group that is ordered by ascending id.
    pub fn from_scores(owner: DroneId, mut scores: Vec<(DroneId, f64)>, cutoff: f64) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (id, score) in &scores {
            if *id == owner {
                return Err(Error::validation(format!("{owner} cannot rank itself")));
            }
            if !seen.insert(*id) {
                return Err(Error::validation(format!("{owner} ranks {id} twice")));
            }
            if !score.is_finite() {
                return Err(Error::validation(format!("{owner} scores {id} non-finite")));
            }
        }
        scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut start = 0;
        while start < scores.len() {
            let mut end = start + 1;
            while end < scores.len() && scores[end - 1].1 - scores[end].1 <= TIE_TOLERANCE {
                end += 1;
            }
            scores[start..end].sort_by_key(|e| e.0);
            start = end;
        }
        Ok(PreferenceList {
            owner,
            ranked: scores,
            cutoff,
        })
    }

    pub fn ranked(&self) -> &[(DroneId, f64)] {
        &self.ranked
    }

    pub fn is_acceptable(&self, score: f64) -> bool {
        score > self.cutoff
    }

    /// Acceptable candidates, best first.
    pub fn acceptable(&self) -> impl Iterator<Item = &(DroneId, f64)> + '_ {
        self.ranked.iter().filter(|(_, s)| *s > self.cutoff)
    }

    pub fn acceptable_ids(&self) -> Vec<DroneId> {
        self.acceptable().map(|(id, _)| *id).collect()
    }

    pub fn score_of(&self, id: DroneId) -> Option<f64> {
        self.ranked.iter().find(|(c, _)| *c == id).map(|(_, s)| *s)
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    /// Same list with `drop` removed and `add` merged in. Relative order of the
    /// surviving entries is unchanged because their scores are.
    pub fn updated(&self, drop: &BTreeSet<DroneId>, add: Vec<(DroneId, f64)>) -> Result<Self> {
        let mut scores: Vec<_> = self
            .ranked
            .iter()
            .filter(|(id, _)| !drop.contains(id))
            .copied()
            .collect();
        scores.extend(add);
        Self::from_scores(self.owner, scores, self.cutoff)
    }

    /// Applies `f` to every score and to the cutoff.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let scores = self.ranked.iter().map(|(id, s)| (*id, f(*s))).collect();
        Self::from_scores(self.owner, scores, f(self.cutoff))
    }
}

/// Resource units a source consumes at a relay: demand quantized by ceiling
/// division with the unit size. Without a unit size every source costs one.
pub fn resource_units(demand_bps: f64, unit_bps: Option<f64>) -> u64 {
    match unit_bps {
        Some(u) => ((demand_bps / u).ceil() as u64).max(1),
        None => 1,
    }
}

/// Relay-side score of an applicant. `priority_weight = 0` disables the
/// task-priority term.
pub fn efficiency_score(rate_bps: f64, units: u64, priority: u32, priority_weight: f64) -> f64 {
    let base = rate_bps / units as f64;
    if priority_weight == 0.0 {
        base
    } else {
        base * f64::from(priority).powf(priority_weight)
    }
}

/// Everything needed to assemble a [`Market`].
#[derive(Debug, Clone)]
pub struct MarketSpec {
    pub drones: Vec<Drone>,
    pub destination_of: BTreeMap<DroneId, DroneId>,
    pub link: LinkModel,
    /// Per-relay quota overrides. Relays default to their radio count.
    pub quotas: BTreeMap<DroneId, u32>,
    pub unit_bps: Option<f64>,
    /// When false, unmatched sources get nothing.
    pub direct_links: bool,
    pub priority_weight: f64,
}

impl MarketSpec {
    pub fn new(drones: Vec<Drone>, destination_of: BTreeMap<DroneId, DroneId>, link: LinkModel) -> Self {
        MarketSpec {
            drones,
            destination_of,
            link,
            quotas: BTreeMap::new(),
            unit_bps: None,
            direct_links: true,
            priority_weight: 0.0,
        }
    }
}

/// One matching instance: players, quotas, preferences, plus the dense rate
/// tables the engines evaluate against. Sources and relays are stored sorted
/// by id; engine-internal indices refer to those orders.
#[derive(Debug, Clone)]
pub struct Market {
    sources: Vec<Drone>,
    relays: Vec<Drone>,
    destinations: BTreeMap<DroneId, Drone>,
    destination_of: Vec<DroneId>,
    link: LinkModel,
    unit_bps: Option<f64>,
    direct_links: bool,
    priority_weight: f64,
    quotas: Vec<u32>,
    units: Vec<u64>,
    direct_rate: Vec<f64>,
    /// `[source][relay]`, one sharer.
    relay_rate: Vec<Vec<f64>>,
    source_prefs: Vec<PreferenceList>,
    relay_prefs: Vec<PreferenceList>,
    source_index: BTreeMap<DroneId, usize>,
    relay_index: BTreeMap<DroneId, usize>,
    /// `[source][relay]` rank of the relay in the source's acceptable list.
    source_rank: Vec<Vec<Option<usize>>>,
    /// `[relay][source]` rank of the source in the relay's acceptable list.
    relay_rank: Vec<Vec<Option<usize>>>,
    /// `[relay][source]` relay-side score.
    relay_score: Vec<Vec<f64>>,
}

impl Market {
    pub fn build(spec: &MarketSpec) -> Result<Market> {
        Self::build_with_cache(spec, &BTreeMap::new())
    }

    /// Builds the market, reusing cached source preference lists where the
    /// cache has one. Relay lists present in the cache are updated in place
    /// (departed applicants removed, new applicants scored and merged).
    pub fn build_with_cache(spec: &MarketSpec, cache: &BTreeMap<DroneId, PreferenceList>) -> Result<Market> {
        let mut problems = spec.link.violations();
        let mut ids = BTreeSet::new();
        for d in &spec.drones {
            problems.extend(d.violations());
            if !ids.insert(d.id) {
                problems.push(format!("duplicate drone id {}", d.id));
            }
        }
        if let Some(u) = spec.unit_bps {
            if !(u > 0.0 && u.is_finite()) {
                problems.push("resource unit size must be > 0".into());
            }
        }
        let mut sources: Vec<Drone> = spec.drones.iter().filter(|d| d.role == Role::Source).cloned().collect();
        let mut relays: Vec<Drone> = spec.drones.iter().filter(|d| d.role == Role::Relay).cloned().collect();
        let destinations: BTreeMap<DroneId, Drone> = spec
            .drones
            .iter()
            .filter(|d| d.role == Role::Destination)
            .map(|d| (d.id, d.clone()))
            .collect();
        sources.sort_by_key(|d| d.id);
        relays.sort_by_key(|d| d.id);

        let mut quotas = Vec::with_capacity(relays.len());
        for r in &relays {
            let q = spec.quotas.get(&r.id).copied().unwrap_or(r.radio_count);
            if q == 0 {
                problems.push(format!("relay {}: quota must be >= 1", r.id));
            }
            if q > r.radio_count {
                problems.push(format!(
                    "relay {}: quota {} exceeds radio count {}",
                    r.id, q, r.radio_count
                ));
            }
            quotas.push(q);
        }
        for id in spec.quotas.keys() {
            if !relays.iter().any(|r| r.id == *id) {
                problems.push(format!("quota given for non-relay {id}"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }

        let mut destination_of = Vec::with_capacity(sources.len());
        for s in &sources {
            let dst = spec
                .destination_of
                .get(&s.id)
                .ok_or_else(|| Error::Configuration(format!("source {} has no destination", s.id)))?;
            if !destinations.contains_key(dst) {
                return Err(Error::Configuration(format!(
                    "source {} targets {dst}, which is not a destination drone",
                    s.id
                )));
            }
            destination_of.push(*dst);
        }

        let link = spec.link;
        let mut direct_rate = Vec::with_capacity(sources.len());
        let mut relay_rate = Vec::with_capacity(sources.len());
        for (s, dst) in sources.iter().zip(&destination_of) {
            let dst = &destinations[dst];
            direct_rate.push(if spec.direct_links {
                model::link_rate(s, dst, &link)?
            } else {
                0.0
            });
            let mut row = Vec::with_capacity(relays.len());
            for r in &relays {
                row.push(model::relay_rate(s, r, dst, 1, &link)?);
            }
            relay_rate.push(row);
        }
        let units: Vec<u64> = sources
            .iter()
            .map(|s| resource_units(s.demand_bps, spec.unit_bps))
            .collect();

        let mut source_prefs = Vec::with_capacity(sources.len());
        for (si, s) in sources.iter().enumerate() {
            let pref = match cache.get(&s.id) {
                Some(p) => p.clone(),
                None => build_source_prefs(s, &relays, &relay_rate[si], direct_rate[si])?,
            };
            source_prefs.push(pref);
        }
        let source_ids: BTreeSet<DroneId> = sources.iter().map(|s| s.id).collect();
        let mut relay_prefs = Vec::with_capacity(relays.len());
        for (ri, r) in relays.iter().enumerate() {
            let scored = |si: usize| {
                let s = &sources[si];
                (s.id, efficiency_score(relay_rate[si][ri], units[si], s.priority, spec.priority_weight))
            };
            let pref = match cache.get(&r.id) {
                Some(old) => {
                    let known: BTreeSet<DroneId> = old.ranked().iter().map(|(id, _)| *id).collect();
                    let drop: BTreeSet<DroneId> = known.difference(&source_ids).copied().collect();
                    let add = (0..sources.len())
                        .filter(|si| !known.contains(&sources[*si].id))
                        .map(scored)
                        .collect();
                    old.updated(&drop, add)?
                }
                None => {
                    let applicants: Vec<_> = (0..sources.len()).map(scored).collect();
                    PreferenceList::from_scores(r.id, applicants, 0.0)?
                }
            };
            relay_prefs.push(pref);
        }

        let mut market = Market {
            source_index: sources.iter().enumerate().map(|(i, d)| (d.id, i)).collect(),
            relay_index: relays.iter().enumerate().map(|(i, d)| (d.id, i)).collect(),
            sources,
            relays,
            destinations,
            destination_of,
            link,
            unit_bps: spec.unit_bps,
            direct_links: spec.direct_links,
            priority_weight: spec.priority_weight,
            quotas,
            units,
            direct_rate,
            relay_rate,
            source_prefs,
            relay_prefs,
            source_rank: Vec::new(),
            relay_rank: Vec::new(),
            relay_score: Vec::new(),
        };
        market.index_preferences()?;
        Ok(market)
    }

    /// Replaces the preference lists, e.g. with scores computed from a
    /// different information source. Lists must cover every player.
    pub fn with_preferences(&self, source_prefs: Vec<PreferenceList>, relay_prefs: Vec<PreferenceList>) -> Result<Market> {
        let mut m = self.clone();
        let mut sp = source_prefs;
        let mut rp = relay_prefs;
        sp.sort_by_key(|p| p.owner);
        rp.sort_by_key(|p| p.owner);
        let owners_ok = sp.iter().map(|p| p.owner).eq(m.sources.iter().map(|d| d.id))
            && rp.iter().map(|p| p.owner).eq(m.relays.iter().map(|d| d.id));
        if !owners_ok {
            return Err(Error::validation("preference lists must cover every source and relay exactly once"));
        }
        m.source_prefs = sp;
        m.relay_prefs = rp;
        m.index_preferences()?;
        Ok(m)
    }

    fn index_preferences(&mut self) -> Result<()> {
        let (ns, nr) = (self.sources.len(), self.relays.len());
        let mut problems = Vec::new();
        let mut source_rank = vec![vec![None; nr]; ns];
        for (si, p) in self.source_prefs.iter().enumerate() {
            for (id, _) in p.ranked() {
                if !self.relay_index.contains_key(id) {
                    problems.push(format!("source {} ranks non-relay {id}", p.owner));
                }
            }
            for (rank, (id, _)) in p.acceptable().enumerate() {
                if let Some(&ri) = self.relay_index.get(id) {
                    source_rank[si][ri] = Some(rank);
                }
            }
        }
        let mut relay_rank = vec![vec![None; ns]; nr];
        let mut relay_score = vec![vec![0.0; ns]; nr];
        for (ri, p) in self.relay_prefs.iter().enumerate() {
            for (id, score) in p.ranked() {
                match self.source_index.get(id) {
                    Some(&si) => relay_score[ri][si] = *score,
                    None => problems.push(format!("relay {} ranks non-source {id}", p.owner)),
                }
            }
            for (rank, (id, _)) in p.acceptable().enumerate() {
                if let Some(&si) = self.source_index.get(id) {
                    relay_rank[ri][si] = Some(rank);
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        self.source_rank = source_rank;
        self.relay_rank = relay_rank;
        self.relay_score = relay_score;
        Ok(())
    }

    pub fn sources(&self) -> &[Drone] {
        &self.sources
    }

    pub fn relays(&self) -> &[Drone] {
        &self.relays
    }

    pub fn destinations(&self) -> &BTreeMap<DroneId, Drone> {
        &self.destinations
    }

    pub fn destination_of(&self, source: DroneId) -> Option<DroneId> {
        self.source_index.get(&source).map(|&i| self.destination_of[i])
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    pub fn unit_bps(&self) -> Option<f64> {
        self.unit_bps
    }

    pub fn direct_links(&self) -> bool {
        self.direct_links
    }

    pub fn priority_weight(&self) -> f64 {
        self.priority_weight
    }

    pub fn source_prefs(&self) -> &[PreferenceList] {
        &self.source_prefs
    }

    pub fn relay_prefs(&self) -> &[PreferenceList] {
        &self.relay_prefs
    }

    pub fn quota(&self, relay: DroneId) -> Option<u32> {
        self.relay_index.get(&relay).map(|&i| self.quotas[i])
    }

    pub fn source_idx(&self, id: DroneId) -> Option<usize> {
        self.source_index.get(&id).copied()
    }

    pub fn relay_idx(&self, id: DroneId) -> Option<usize> {
        self.relay_index.get(&id).copied()
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn num_relays(&self) -> usize {
        self.relays.len()
    }

    // Dense accessors used by the engines.

    pub(crate) fn quota_at(&self, r: usize) -> usize {
        self.quotas[r] as usize
    }

    pub(crate) fn radios_at(&self, r: usize) -> usize {
        self.relays[r].radio_count as usize
    }

    pub(crate) fn capacity_at(&self, r: usize) -> Option<u64> {
        self.relays[r].resource_capacity
    }

    pub(crate) fn units_at(&self, s: usize) -> u64 {
        self.units[s]
    }

    pub(crate) fn demand_at(&self, s: usize) -> f64 {
        self.sources[s].demand_bps
    }

    pub(crate) fn direct_rate_at(&self, s: usize) -> f64 {
        self.direct_rate[s]
    }

    /// Relayed rate with a single sharer.
    pub(crate) fn relay_rate_at(&self, s: usize, r: usize) -> f64 {
        self.relay_rate[s][r]
    }

    pub(crate) fn source_rank_at(&self, s: usize, r: usize) -> Option<usize> {
        self.source_rank[s][r]
    }

    pub(crate) fn relay_rank_at(&self, r: usize, s: usize) -> Option<usize> {
        self.relay_rank[r][s]
    }

    pub(crate) fn relay_score_at(&self, r: usize, s: usize) -> f64 {
        self.relay_score[r][s]
    }

    /// Both sides find each other acceptable.
    pub(crate) fn mutually_acceptable(&self, s: usize, r: usize) -> bool {
        self.source_rank[s][r].is_some() && self.relay_rank[r][s].is_some()
    }

    /// Relay indices acceptable to `s` (and accepting `s`), in `s`'s order.
    pub(crate) fn acceptable_relays(&self, s: usize) -> Vec<usize> {
        self.source_prefs[s]
            .acceptable()
            .filter_map(|(id, _)| self.relay_index.get(id).copied())
            .filter(|&r| self.relay_rank[r][s].is_some())
            .collect()
    }

    /// Relayed rate of `source` through `relay` with a single sharer.
    pub fn relay_rate_between(&self, source: DroneId, relay: DroneId) -> Option<f64> {
        Some(self.relay_rate[self.source_idx(source)?][self.relay_idx(relay)?])
    }

    pub fn direct_rate(&self, source: DroneId) -> Option<f64> {
        self.source_idx(source).map(|i| self.direct_rate[i])
    }

    /// Scores relays for one source from scratch. Equivalent to the list the
    /// market built for it.
    pub fn source_preferences_for(&self, source: DroneId) -> Result<PreferenceList> {
        let si = self.source_idx(source).ok_or(Error::UnknownDrone(source))?;
        build_source_prefs(&self.sources[si], &self.relays, &self.relay_rate[si], self.direct_rate[si])
    }

    /// Ranks `applicants` (source ids of this market) for `relay`.
    pub fn relay_preferences_for(&self, relay: DroneId, applicants: &[DroneId]) -> Result<PreferenceList> {
        let ri = self.relay_idx(relay).ok_or(Error::UnknownDrone(relay))?;
        let mut scores = Vec::with_capacity(applicants.len());
        for id in applicants {
            let si = self.source_idx(*id).ok_or(Error::UnknownDrone(*id))?;
            let s = &self.sources[si];
            scores.push((
                *id,
                efficiency_score(self.relay_rate[si][ri], self.units[si], s.priority, self.priority_weight),
            ));
        }
        build_relay_prefs(relay, scores)
    }
}

/// Ranks relays for `source` by relayed rate. The direct-link rate is the
/// cutoff: a relay must strictly beat it to be acceptable.
pub fn build_source_prefs(source: &Drone, relays: &[Drone], rates: &[f64], direct_rate: f64) -> Result<PreferenceList> {
    if relays.len() != rates.len() {
        return Err(Error::Configuration("one rate per relay required".into()));
    }
    let scores = relays.iter().zip(rates).map(|(r, rate)| (r.id, *rate)).collect();
    PreferenceList::from_scores(source.id, scores, direct_rate)
}

/// Ranks applicants from their precomputed efficiency scores. Any positive
/// score is acceptable.
pub fn build_relay_prefs(relay: DroneId, scored_applicants: Vec<(DroneId, f64)>) -> Result<PreferenceList> {
    PreferenceList::from_scores(relay, scored_applicants, 0.0)
}
