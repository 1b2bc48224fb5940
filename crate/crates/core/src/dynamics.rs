//! Markets that change over time: mobile relays and churn.
//!
//! Mobile relays are scored from their trajectories. A relay that passes the
//! source before the destination can also carry data (store-carry-forward),
//! and sources rank it by whichever mode yields more. Churn is applied as
//! perturbation events and the matching is repaired incrementally.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{match_class1, Engine, EngineConfig, Matching, MatchingClass};
use crate::model::{self, Drone, DroneId, Position, Role};
use crate::preferences::{efficiency_score, resource_units, Market, MarketSpec, PreferenceList};

/// Piecewise-linear path through timed waypoints, held constant outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    waypoints: Vec<(f64, Position)>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<(f64, Position)>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::Configuration("a trajectory needs at least one waypoint".into()));
        }
        if waypoints.windows(2).any(|w| w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::Configuration("waypoint times must strictly increase".into()));
        }
        Ok(Trajectory { waypoints })
    }

    pub fn stationary(at: Position) -> Self {
        Trajectory {
            waypoints: vec![(0.0, at)],
        }
    }

    pub fn is_static(&self) -> bool {
        self.waypoints.iter().all(|(_, p)| *p == self.waypoints[0].1)
    }

    pub fn position_at(&self, t: f64) -> Position {
        let wp = &self.waypoints;
        if t <= wp[0].0 {
            return wp[0].1;
        }
        for w in wp.windows(2) {
            let ((t0, a), (t1, b)) = (w[0], w[1]);
            if t <= t1 {
                let u = (t - t0) / (t1 - t0);
                return [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1]), a[2] + u * (b[2] - a[2])];
            }
        }
        wp[wp.len() - 1].1
    }
}

/// How a matched source's data is expected to travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMode {
    /// Simultaneous two-hop relaying.
    Static,
    /// Collect near the source, fly, deliver near the destination.
    Ferry,
}

/// A market whose drones follow trajectories. Drone positions in `spec` are
/// ignored in favour of the trajectories.
#[derive(Debug, Clone)]
pub struct DynamicMarket {
    pub spec: MarketSpec,
    pub trajectories: BTreeMap<DroneId, Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub static_bps: f64,
    pub ferry_bps: f64,
}

impl Scores {
    pub fn best(&self) -> f64 {
        self.static_bps.max(self.ferry_bps)
    }

    pub fn mode(&self) -> LinkMode {
        if self.ferry_bps > self.static_bps {
            LinkMode::Ferry
        } else {
            LinkMode::Static
        }
    }
}

#[derive(Debug, Clone)]
pub struct DynamicMatch {
    pub matching: Matching,
    /// Mode of every matched source.
    pub modes: BTreeMap<DroneId, LinkMode>,
    /// `(source, relay)` scores the preferences were built from.
    pub scores: BTreeMap<(DroneId, DroneId), Scores>,
    /// The market with trajectory-based preferences installed.
    pub market: Market,
}

/// Sample times `0, step, ..., horizon`.
fn sample_times(horizon: f64, step: f64) -> Vec<f64> {
    let n = (horizon / step + 1e-9).floor() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

fn at(d: &Drone, traj: &Trajectory, t: f64) -> Drone {
    Drone {
        position: traj.position_at(t),
        ..d.clone()
    }
}

/// Data a relay can carry from `src` to `dst` over the horizon by collecting
/// until some split time and delivering afterwards, averaged over the
/// horizon. Zero unless the relay's closest approach to the source comes
/// strictly before its closest approach to the destination.
#[allow(clippy::too_many_arguments)]
pub fn ferry_rate(
    src: &Drone,
    relay: &Drone,
    src_traj: &Trajectory,
    relay_traj: &Trajectory,
    dst_traj: &Trajectory,
    horizon: f64,
    step: f64,
    link: &model::LinkModel,
) -> Result<f64> {
    // interval i covers [i*step, (i+1)*step), evaluated at its start
    let n = (horizon / step + 1e-9).floor() as usize;
    if n == 0 || relay_traj.is_static() {
        return Ok(0.0);
    }
    let times: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
    let argmin = |other: &Trajectory| {
        let mut best = (0, f64::INFINITY);
        for (i, t) in times.iter().enumerate() {
            let d = model::distance(&relay_traj.position_at(*t), &other.position_at(*t));
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    };
    let (near_src, near_dst) = (argmin(src_traj), argmin(dst_traj));
    if near_dst <= near_src {
        return Ok(0.0);
    }
    let mut up = Vec::with_capacity(n);
    let mut down = Vec::with_capacity(n);
    for t in &times {
        let r = relay_traj.position_at(*t);
        up.push(model::rate_between(src.tx_power_w, &src_traj.position_at(*t), &r, link)? * step);
        down.push(model::rate_between(relay.tx_power_w, &r, &dst_traj.position_at(*t), link)? * step);
    }
    let total_down: f64 = down.iter().sum();
    let (mut collected, mut delivered_before) = (0.0, 0.0);
    let mut best = 0.0f64;
    for m in 0..n {
        collected += up[m];
        delivered_before += down[m];
        if m >= near_src && m < near_dst {
            best = best.max(collected.min(total_down - delivered_before));
        }
    }
    Ok(best / horizon)
}

/// Static two-hop rate averaged over the sample times.
fn mean_relay_rate(
    src: (&Drone, &Trajectory),
    relay: (&Drone, &Trajectory),
    dst: (&Drone, &Trajectory),
    times: &[f64],
    link: &model::LinkModel,
) -> Result<f64> {
    let mut sum = 0.0;
    for t in times {
        sum += model::relay_rate(&at(src.0, src.1, *t), &at(relay.0, relay.1, *t), &at(dst.0, dst.1, *t), 1, link)?;
    }
    Ok(sum / times.len() as f64)
}

fn mean_direct_rate(src: (&Drone, &Trajectory), dst: (&Drone, &Trajectory), times: &[f64], link: &model::LinkModel) -> Result<f64> {
    let mut sum = 0.0;
    for t in times {
        sum += model::link_rate(&at(src.0, src.1, *t), &at(dst.0, dst.1, *t), link)?;
    }
    Ok(sum / times.len() as f64)
}

/// Class I matching where sources rank relays by the better of their
/// time-averaged two-hop rate and their ferrying rate. With only stationary
/// drones this is exactly [`match_class1`] on the same market.
pub fn dynamic_match(scenario: &DynamicMarket, horizon_s: f64, step_s: f64) -> Result<DynamicMatch> {
    if !(horizon_s > 0.0 && horizon_s.is_finite()) || !(step_s > 0.0 && step_s.is_finite()) {
        return Err(Error::Configuration("horizon and step must be positive".into()));
    }
    let mut spec = scenario.spec.clone();
    for d in &mut spec.drones {
        let traj = scenario
            .trajectories
            .get(&d.id)
            .ok_or_else(|| Error::Configuration(format!("drone {} has no trajectory", d.id)))?;
        d.position = traj.position_at(0.0);
    }
    let base = Market::build(&spec)?;
    let link = *base.link();
    let times = sample_times(horizon_s, step_s);
    let traj = |id: DroneId| &scenario.trajectories[&id];

    let mut scores = BTreeMap::new();
    let mut source_prefs = Vec::new();
    let mut relay_scores: BTreeMap<DroneId, Vec<(DroneId, f64)>> = BTreeMap::new();
    for s in base.sources() {
        let dst_id = base.destination_of(s.id).expect("market validated destinations");
        let dst = &base.destinations()[&dst_id];
        let all_static_pair = traj(s.id).is_static() && traj(dst_id).is_static();
        let direct = match (base.direct_links(), all_static_pair) {
            (false, _) => 0.0,
            (true, true) => base.direct_rate(s.id).expect("known source"),
            (true, false) => mean_direct_rate((s, traj(s.id)), (dst, traj(dst_id)), &times, &link)?,
        };
        let mut ranked = Vec::new();
        for r in base.relays() {
            let static_bps = if all_static_pair && traj(r.id).is_static() {
                base.relay_rate_between(s.id, r.id).expect("known pair")
            } else {
                mean_relay_rate((s, traj(s.id)), (r, traj(r.id)), (dst, traj(dst_id)), &times, &link)?
            };
            let ferry_bps = ferry_rate(s, r, traj(s.id), traj(r.id), traj(dst_id), horizon_s, step_s, &link)?;
            let sc = Scores { static_bps, ferry_bps };
            ranked.push((r.id, sc.best()));
            let units = resource_units(s.demand_bps, base.unit_bps());
            relay_scores
                .entry(r.id)
                .or_default()
                .push((s.id, efficiency_score(sc.best(), units, s.priority, base.priority_weight())));
            scores.insert((s.id, r.id), sc);
        }
        source_prefs.push(PreferenceList::from_scores(s.id, ranked, direct)?);
    }
    let relay_prefs = base
        .relays()
        .iter()
        .map(|r| PreferenceList::from_scores(r.id, relay_scores.remove(&r.id).unwrap_or_default(), 0.0))
        .collect::<Result<Vec<_>>>()?;
    let market = base.with_preferences(source_prefs, relay_prefs)?;
    let matching = match_class1(&market);
    let modes = matching
        .iter()
        .filter_map(|(s, slot)| slot.map(|slot| (s, scores[&(s, slot.relay)].mode())))
        .collect();
    Ok(DynamicMatch {
        matching,
        modes,
        scores,
        market,
    })
}

/// A drone joining the market, with its destination if it is a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub drone: Drone,
    pub destination: Option<DroneId>,
}

/// Churn applied at one search iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEvent {
    pub at_iteration: usize,
    pub departures: BTreeSet<DroneId>,
    pub arrivals: Vec<Arrival>,
}

impl PerturbationEvent {
    pub fn is_empty(&self) -> bool {
        self.departures.is_empty() && self.arrivals.is_empty()
    }
}

/// A market together with its current matching and the preference lists
/// kept between rebuilds.
#[derive(Debug, Clone)]
pub struct DynamicState {
    pub spec: MarketSpec,
    pub market: Market,
    pub matching: Matching,
    /// Current search iteration.
    pub iteration: usize,
    cache: BTreeMap<DroneId, PreferenceList>,
    departures_pending: bool,
}

fn cache_of(market: &Market) -> BTreeMap<DroneId, PreferenceList> {
    market
        .source_prefs()
        .iter()
        .chain(market.relay_prefs())
        .map(|p| (p.owner, p.clone()))
        .collect()
}

impl DynamicState {
    /// Fresh state with every source unmatched.
    pub fn new(spec: MarketSpec) -> Result<Self> {
        let market = Market::build(&spec)?;
        Ok(DynamicState {
            matching: Matching::unmatched(&market),
            cache: cache_of(&market),
            market,
            spec,
            iteration: 0,
            departures_pending: false,
        })
    }

    /// Whether drones departed since the matching was last repaired.
    pub fn departures_pending(&self) -> bool {
        self.departures_pending
    }

    /// Cached preference lists by owner.
    pub fn cached_preferences(&self) -> &BTreeMap<DroneId, PreferenceList> {
        &self.cache
    }
}

/// Removes departed drones and adds arrivals. Departed sources lose their
/// slot, arrivals start unmatched, everyone else keeps their assignment.
/// Cached preference lists of surviving sources are reused; relay lists drop
/// departed sources and merge in arrivals.
///
/// Only sources may depart or arrive; relay churn would invalidate every
/// cached source list.
pub fn apply_perturbation(mut state: DynamicState, event: &PerturbationEvent) -> Result<DynamicState> {
    if event.at_iteration != state.iteration {
        return Err(Error::validation(format!(
            "event scheduled for iteration {} applied at iteration {}",
            event.at_iteration, state.iteration
        )));
    }
    if event.is_empty() {
        return Ok(state);
    }
    let mut problems = Vec::new();
    let by_id: BTreeMap<DroneId, &Drone> = state.spec.drones.iter().map(|d| (d.id, d)).collect();
    for id in &event.departures {
        match by_id.get(id) {
            None => return Err(Error::UnknownDrone(*id)),
            Some(d) if d.role != Role::Source => problems.push(format!("drone {id} is not a source and cannot depart")),
            Some(_) => {}
        }
    }
    let mut fresh = BTreeSet::new();
    for a in &event.arrivals {
        let id = a.drone.id;
        if by_id.contains_key(&id) || !fresh.insert(id) {
            problems.push(format!("arriving drone {id} reuses an existing id"));
        }
        if a.drone.role != Role::Source {
            problems.push(format!("arriving drone {id} is not a source"));
        }
        match a.destination {
            Some(dst) if by_id.get(&dst).is_some_and(|d| d.role == Role::Destination) => {}
            Some(dst) => problems.push(format!("arriving drone {id} targets unknown destination {dst}")),
            None => problems.push(format!("arriving source {id} has no destination")),
        }
        problems.extend(a.drone.violations());
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }

    state.spec.drones.retain(|d| !event.departures.contains(&d.id));
    for id in &event.departures {
        state.spec.destination_of.remove(id);
        state.cache.remove(id);
        state.matching.remove(*id);
    }
    for a in &event.arrivals {
        state.spec.drones.push(a.drone.clone());
        if let Some(dst) = a.destination {
            state.spec.destination_of.insert(a.drone.id, dst);
        }
    }
    state.market = Market::build_with_cache(&state.spec, &state.cache)?;
    state.cache = cache_of(&state.market);
    state.departures_pending |= !event.departures.is_empty();
    Ok(state)
}

/// Repairs the matching from its current state and returns it with the
/// number of search iterations used.
pub fn rematch_incremental(state: &mut DynamicState, class: MatchingClass, config: EngineConfig) -> Result<(Matching, usize)> {
    let mut engine = Engine::warm(&state.market, class, &state.matching, state.departures_pending, config)?;
    engine.run(&state.market)?;
    state.matching = engine.matching(&state.market);
    state.departures_pending = false;
    Ok((state.matching.clone(), engine.iterations()))
}

#[cfg(test)]
mod tests;
