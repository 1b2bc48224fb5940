//! Multi-hop relaying as a chain of matchings between adjacent levels.
//!
//! Level 0 holds sources, the last level destinations, and the levels in
//! between relays. Every sweep walks flows forward one level at a time with
//! deferred acceptance. A flow that cannot continue past a relay bans that
//! relay and retries from its source on the next sweep. Completed routes keep
//! their capacity for good.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::da::{DaInput, DaState};
use crate::model::{self, Drone, DroneId, LinkModel, Role};
use crate::preferences::PreferenceList;

/// Nodes per level and the directed links allowed between adjacent levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelGraph {
    levels: Vec<Vec<DroneId>>,
    edges: BTreeSet<(DroneId, DroneId)>,
    quotas: BTreeMap<DroneId, usize>,
}

impl LevelGraph {
    pub fn new(levels: Vec<Vec<DroneId>>, edges: impl IntoIterator<Item = (DroneId, DroneId)>) -> Result<Self> {
        let mut problems = Vec::new();
        if levels.len() < 2 {
            problems.push("a level graph needs at least a source and a destination level".to_string());
        }
        let mut level_of = BTreeMap::new();
        for (k, level) in levels.iter().enumerate() {
            for id in level {
                if level_of.insert(*id, k).is_some() {
                    problems.push(format!("drone {id} appears in more than one level"));
                }
            }
        }
        let edges: BTreeSet<_> = edges.into_iter().collect();
        for (a, b) in &edges {
            match (level_of.get(a), level_of.get(b)) {
                (Some(ka), Some(kb)) if ka + 1 == *kb => {}
                (Some(_), Some(_)) => problems.push(format!("edge {a}->{b} does not join adjacent levels")),
                _ => problems.push(format!("edge {a}->{b} references a drone outside the graph")),
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let mut sorted = levels;
        for level in &mut sorted {
            level.sort();
        }
        Ok(LevelGraph {
            levels: sorted,
            edges,
            quotas: BTreeMap::new(),
        })
    }

    /// Every node linked to every node of the next level.
    pub fn complete(levels: Vec<Vec<DroneId>>) -> Result<Self> {
        let edges: Vec<_> = levels
            .windows(2)
            .flat_map(|w| w[0].iter().flat_map(|a| w[1].iter().map(move |b| (*a, *b))).collect::<Vec<_>>())
            .collect();
        Self::new(levels, edges)
    }

    /// Overrides how many flows a node accepts. Relays default to their radio
    /// count, destinations are unlimited.
    pub fn with_quota(mut self, node: DroneId, quota: usize) -> Self {
        self.quotas.insert(node, quota);
        self
    }

    pub fn levels(&self) -> &[Vec<DroneId>] {
        &self.levels
    }

    pub fn has_edge(&self, from: DroneId, to: DroneId) -> bool {
        self.edges.contains(&(from, to))
    }
}

/// Drone data the multilevel matcher reads.
#[derive(Debug, Clone, Copy)]
pub struct MultilevelContext<'a> {
    pub drones: &'a BTreeMap<DroneId, Drone>,
    pub destination_of: &'a BTreeMap<DroneId, DroneId>,
    pub link: &'a LinkModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultilevelConfig {
    /// Weigh each candidate by the best rate it can offer one level further.
    pub lookahead: bool,
    /// Defaults to four sweeps per level.
    pub max_sweeps: Option<usize>,
}

impl Default for MultilevelConfig {
    fn default() -> Self {
        MultilevelConfig {
            lookahead: true,
            max_sweeps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub source: DroneId,
    pub relays: Vec<DroneId>,
    pub destination: DroneId,
    /// End-to-end rate after sharing every hop with routes on the same link.
    pub rate_bps: f64,
}

/// A flow that never reached its destination, with the furthest partial
/// path it held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stranded {
    pub source: DroneId,
    pub reached: Vec<DroneId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilevelOutcome {
    pub routes: Vec<Route>,
    pub stranded: Vec<Stranded>,
    pub sweeps: usize,
    /// False when the sweep budget ran out with flows still retrying.
    pub converged: bool,
}

struct Flow {
    source: DroneId,
    destination: DroneId,
    banned: BTreeSet<DroneId>,
    route: Option<Vec<DroneId>>,
    dead: bool,
    furthest: Vec<DroneId>,
}

struct Matcher<'a> {
    graph: &'a LevelGraph,
    ctx: MultilevelContext<'a>,
    lookahead: bool,
    rates: BTreeMap<(DroneId, DroneId), f64>,
}

impl Matcher<'_> {
    fn rate(&self, a: DroneId, b: DroneId) -> f64 {
        self.rates.get(&(a, b)).copied().unwrap_or(0.0)
    }

    fn quota(&self, node: DroneId) -> usize {
        if let Some(q) = self.graph.quotas.get(&node) {
            return *q;
        }
        let d = &self.ctx.drones[&node];
        match d.role {
            Role::Relay => d.radio_count as usize,
            _ => usize::MAX,
        }
    }

    /// Best rate `b` (at `level`) can pass on towards `dest`.
    fn lookahead_factor(&self, b: DroneId, level: usize, dest: DroneId) -> f64 {
        let last = self.graph.levels.len() - 1;
        if !self.lookahead || level == last {
            return 1.0;
        }
        if level + 1 == last {
            return if self.graph.has_edge(b, dest) { self.rate(b, dest) } else { 0.0 };
        }
        self.graph.levels[level + 1]
            .iter()
            .filter(|c| self.graph.has_edge(b, **c))
            .map(|c| self.rate(b, *c))
            .fold(0.0, f64::max)
    }
}

fn validate(graph: &LevelGraph, ctx: &MultilevelContext<'_>) -> Result<()> {
    let mut problems = Vec::new();
    let last = graph.levels.len() - 1;
    for (k, level) in graph.levels.iter().enumerate() {
        for id in level {
            let Some(d) = ctx.drones.get(id) else {
                problems.push(format!("level {k} lists unknown drone {id}"));
                continue;
            };
            let expected = match k {
                0 => Role::Source,
                _ if k == last => Role::Destination,
                _ => Role::Relay,
            };
            if d.role != expected {
                problems.push(format!("drone {id} at level {k} should be a {expected:?}"));
            }
            if k == 0 {
                match ctx.destination_of.get(id) {
                    Some(dst) if graph.levels[last].contains(dst) => {}
                    Some(dst) => problems.push(format!("source {id} targets {dst}, not in the last level")),
                    None => problems.push(format!("source {id} has no destination")),
                }
            }
        }
    }
    for (node, q) in &graph.quotas {
        if *q == 0 {
            problems.push(format!("node {node}: quota must be >= 1"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems))
    }
}

/// Routes every source through one relay per intermediate level.
pub fn multilevel_match(
    graph: &LevelGraph,
    ctx: MultilevelContext<'_>,
    config: MultilevelConfig,
) -> Result<MultilevelOutcome> {
    validate(graph, &ctx)?;
    let levels = &graph.levels;
    let last = levels.len() - 1;
    let max_sweeps = config.max_sweeps.unwrap_or(levels.len() * 4);
    if max_sweeps == 0 {
        return Err(Error::Configuration("max_sweeps must be >= 1".into()));
    }
    let mut rates = BTreeMap::new();
    for (a, b) in &graph.edges {
        rates.insert((*a, *b), model::link_rate(&ctx.drones[a], &ctx.drones[b], ctx.link)?);
    }
    let m = Matcher {
        graph,
        ctx,
        lookahead: config.lookahead,
        rates,
    };

    let mut flows: Vec<Flow> = levels[0]
        .iter()
        .map(|s| Flow {
            source: *s,
            destination: ctx.destination_of[s],
            banned: BTreeSet::new(),
            route: None,
            dead: false,
            furthest: Vec::new(),
        })
        .collect();
    let mut used: BTreeMap<DroneId, usize> = BTreeMap::new();
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < max_sweeps {
        let active: Vec<usize> = (0..flows.len()).filter(|&f| flows[f].route.is_none() && !flows[f].dead).collect();
        if active.is_empty() {
            converged = true;
            break;
        }
        sweeps += 1;
        let mut retry = false;
        // (flow, path so far, bottleneck rate)
        let mut moving: Vec<(usize, Vec<DroneId>, f64)> =
            active.into_iter().map(|f| (f, vec![flows[f].source], f64::INFINITY)).collect();
        for k in 0..last {
            let next = &levels[k + 1];
            let mut prefs = Vec::with_capacity(moving.len());
            let mut offers: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); next.len()];
            for (p, (f, path, bottleneck)) in moving.iter().enumerate() {
                let flow = &flows[*f];
                let here = *path.last().expect("paths start at the source");
                let mut scores = Vec::new();
                for (j, b) in next.iter().enumerate() {
                    if !graph.has_edge(here, *b) || flow.banned.contains(b) || (k + 1 == last && *b != flow.destination) {
                        continue;
                    }
                    let carried = bottleneck.min(m.rate(here, *b));
                    let score = carried * m.lookahead_factor(*b, k + 1, flow.destination);
                    if score > 0.0 {
                        scores.push((*b, score));
                        offers[j].insert(p, carried);
                    }
                }
                let list = PreferenceList::from_scores(flow.source, scores, 0.0)?;
                let index: BTreeMap<DroneId, usize> = next.iter().enumerate().map(|(j, b)| (*b, j)).collect();
                prefs.push(list.acceptable().map(|(b, _)| index[b]).collect::<Vec<_>>());
            }
            let mut rank = vec![vec![None; moving.len()]; next.len()];
            for (j, b) in next.iter().enumerate() {
                let scored: Vec<_> = offers[j].iter().map(|(p, c)| (flows[moving[*p].0].source, *c)).collect();
                let by_source: BTreeMap<DroneId, usize> =
                    offers[j].keys().map(|p| (flows[moving[*p].0].source, *p)).collect();
                let list = PreferenceList::from_scores(*b, scored, 0.0)?;
                for (r, (sid, _)) in list.acceptable().enumerate() {
                    rank[j][by_source[sid]] = Some(r);
                }
            }
            let capacity: Vec<usize> = next
                .iter()
                .map(|b| m.quota(*b).saturating_sub(used.get(b).copied().unwrap_or(0)))
                .collect();
            let input = DaInput {
                proposer_prefs: &prefs,
                acceptor_rank: &rank,
                capacity: &capacity,
            };
            let mut state = DaState::new(moving.len(), next.len());
            state.run(&input);
            let held = state.held_by().to_vec();

            let mut advanced = Vec::with_capacity(moving.len());
            for (p, (f, mut path, bottleneck)) in moving.into_iter().enumerate() {
                let flow = &mut flows[f];
                match held[p] {
                    Some(j) => {
                        let here = *path.last().expect("paths start at the source");
                        path.push(next[j]);
                        advanced.push((f, path, bottleneck.min(m.rate(here, next[j]))));
                    }
                    None => {
                        let reached = path[1..].to_vec();
                        if reached.len() > flow.furthest.len() {
                            flow.furthest = reached;
                        }
                        if k == 0 {
                            flow.dead = true;
                        } else {
                            flow.banned.insert(*path.last().expect("non-empty"));
                            retry = true;
                        }
                    }
                }
            }
            moving = advanced;
        }
        for (f, path, _) in moving {
            for node in &path[1..] {
                *used.entry(*node).or_insert(0) += 1;
            }
            flows[f].route = Some(path);
        }
        if !retry {
            converged = true;
            break;
        }
    }
    if !converged {
        converged = flows.iter().all(|f| f.route.is_some() || f.dead);
    }

    let mut share: BTreeMap<(DroneId, DroneId), u32> = BTreeMap::new();
    for path in flows.iter().filter_map(|f| f.route.as_ref()) {
        for hop in path.windows(2) {
            *share.entry((hop[0], hop[1])).or_insert(0) += 1;
        }
    }
    let mut routes = Vec::new();
    let mut stranded = Vec::new();
    for flow in flows {
        match flow.route {
            Some(path) => {
                let rate = path
                    .windows(2)
                    .map(|h| m.rate(h[0], h[1]) / f64::from(share[&(h[0], h[1])]))
                    .fold(f64::INFINITY, f64::min);
                routes.push(Route {
                    source: flow.source,
                    relays: path[1..path.len() - 1].to_vec(),
                    destination: flow.destination,
                    rate_bps: ctx.link.half_duplex_factor * rate,
                });
            }
            None => stranded.push(Stranded {
                source: flow.source,
                reached: flow.furthest,
            }),
        }
    }
    Ok(MultilevelOutcome {
        routes,
        stranded,
        sweeps,
        converged,
    })
}

#[cfg(test)]
mod tests;
