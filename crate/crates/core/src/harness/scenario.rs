//! Scenario files: strict TOML with units in the field names.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rng;
use crate::dynamics::{Arrival, PerturbationEvent};
use crate::error::{Error, Result};
use crate::matching::MatchingClass;
use crate::model::{Drone, DroneId, LinkModel, Role};
use crate::preferences::{Market, MarketSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub matching_class: MatchingClass,
    /// Extents of the flight area; positions lie in `[0, area_m]`.
    pub area_m: [f64; 3],
    pub link: LinkModel,
    /// Length of the recorded trace, in search iterations.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    pub resource_unit_bps: Option<f64>,
    #[serde(default = "default_true")]
    pub direct_links: bool,
    #[serde(default)]
    pub relay_priority_weight: f64,
    #[serde(default = "default_max_search")]
    pub max_search_iterations: usize,
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "default_oracle_cap")]
    pub oracle_cap: u64,
    #[serde(default)]
    pub dynamics: DynamicsSpec,
    #[serde(default)]
    pub drones: Vec<DroneSpec>,
    #[serde(default)]
    pub generate: Vec<GenerateSpec>,
    #[serde(default)]
    pub quotas: Vec<QuotaSpec>,
    #[serde(default)]
    pub perturbations: Vec<PerturbationSpec>,
}

fn default_iterations() -> usize {
    45
}

fn default_true() -> bool {
    true
}

fn default_max_search() -> usize {
    1000
}

fn default_oracle_cap() -> u64 {
    10_000_000
}

fn default_priority() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub horizon_s: f64,
    pub step_s: f64,
}

impl Default for DynamicsSpec {
    fn default() -> Self {
        DynamicsSpec {
            horizon_s: 30.0,
            step_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneSpec {
    pub id: u32,
    pub role: Role,
    pub position_m: [f64; 3],
    pub tx_power_w: f64,
    #[serde(default)]
    pub radio_count: u32,
    pub resource_capacity_units: Option<u64>,
    pub demand_bps: Option<f64>,
    #[serde(default = "default_priority")]
    pub priority: u32,
    pub destination: Option<u32>,
}

/// `count` drones placed uniformly in a box (the whole area by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub role: Role,
    pub count: usize,
    /// First id; defaults to one past the largest id defined before.
    pub id_start: Option<u32>,
    pub region_min_m: Option<[f64; 3]>,
    pub region_max_m: Option<[f64; 3]>,
    pub tx_power_w: f64,
    #[serde(default)]
    pub radio_count: u32,
    pub resource_capacity_units: Option<u64>,
    /// Demand range `[low, high]`. With a resource unit size, demands are
    /// whole numbers of units drawn uniformly within the range.
    pub demand_bps: Option<[f64; 2]>,
    #[serde(default = "default_priority")]
    pub priority: u32,
    pub destination: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotaSpec {
    pub relay: u32,
    pub quota: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub at_iteration: usize,
    /// Sources that leave.
    #[serde(default)]
    pub departures: Vec<u32>,
    /// Additional sources picked uniformly among those present.
    #[serde(default)]
    pub random_departures: usize,
    /// New sources drawn like the arrival group.
    #[serde(default)]
    pub arrivals: usize,
    /// Index into `generate` used as the arrival template; defaults to the
    /// first source group.
    pub arrival_group: Option<usize>,
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario = parse_scenario(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })?;
    scenario.validate()?;
    Ok(scenario)
}

/// Parses without validating.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: "<inline>".into(),
        message: e.to_string(),
    })
}

fn in_box(p: &[f64; 3], lo: &[f64; 3], hi: &[f64; 3]) -> bool {
    (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
}

impl Scenario {
    /// Id ranges of generated groups, in order.
    fn group_ids(&self) -> Vec<(u32, usize)> {
        let mut next = self.drones.iter().map(|d| d.id + 1).max().unwrap_or(1);
        let mut out = Vec::new();
        for g in &self.generate {
            let start = g.id_start.unwrap_or(next);
            out.push((start, g.count));
            next = next.max(start.saturating_add(g.count as u32));
        }
        out
    }

    fn region(&self, g: &GenerateSpec) -> ([f64; 3], [f64; 3]) {
        (g.region_min_m.unwrap_or([0.0; 3]), g.region_max_m.unwrap_or(self.area_m))
    }

    fn arrival_group(&self, p: &PerturbationSpec) -> Option<usize> {
        p.arrival_group
            .or_else(|| self.generate.iter().position(|g| g.role == Role::Source))
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.name.trim().is_empty() {
            problems.push("name must not be empty".to_string());
        }
        if self.area_m.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            problems.push("area_m extents must be > 0".into());
        }
        problems.extend(self.link.violations());
        if self.iterations == 0 {
            problems.push("iterations must be >= 1".into());
        }
        if self.max_search_iterations == 0 {
            problems.push("max_search_iterations must be >= 1".into());
        }
        if self.oracle_cap == 0 {
            problems.push("oracle_cap must be >= 1".into());
        }
        if let Some(u) = self.resource_unit_bps {
            if !(u > 0.0 && u.is_finite()) {
                problems.push("resource_unit_bps must be > 0".into());
            }
        }
        if !self.relay_priority_weight.is_finite() || self.relay_priority_weight < 0.0 {
            problems.push("relay_priority_weight must be >= 0".into());
        }
        if [self.dynamics.horizon_s, self.dynamics.step_s].iter().any(|v| v.is_nan() || *v <= 0.0) {
            problems.push("dynamics horizon_s and step_s must be > 0".into());
        }

        // ids and roles
        let mut roles: BTreeMap<u32, Role> = BTreeMap::new();
        for d in &self.drones {
            if roles.insert(d.id, d.role).is_some() {
                problems.push(format!("duplicate drone id {}", d.id));
            }
            if !in_box(&d.position_m, &[0.0; 3], &self.area_m) {
                problems.push(format!("drone {} lies outside the area", d.id));
            }
        }
        for (g, (start, count)) in self.generate.iter().zip(self.group_ids()) {
            for id in start..start.saturating_add(count as u32) {
                if roles.insert(id, g.role).is_some() {
                    problems.push(format!("generated drone id {id} collides with another drone"));
                }
            }
        }
        let is = |id: u32, role: Role| roles.get(&id) == Some(&role);
        for d in &self.drones {
            problems.extend(self.role_fields(&format!("drone {}", d.id), d.role, d.demand_bps.is_some(), d.destination, d.radio_count, &is));
            if let Some(demand) = d.demand_bps {
                if !(demand > 0.0 && demand.is_finite()) {
                    problems.push(format!("drone {}: demand_bps must be > 0", d.id));
                }
            }
            if d.priority == 0 {
                problems.push(format!("drone {}: priority must be >= 1", d.id));
            }
        }
        for (i, g) in self.generate.iter().enumerate() {
            let what = format!("generate[{i}]");
            if g.count == 0 {
                problems.push(format!("{what}: count must be >= 1"));
            }
            problems.extend(self.role_fields(&what, g.role, g.demand_bps.is_some(), g.destination, g.radio_count, &is));
            let (lo, hi) = self.region(g);
            if !in_box(&lo, &[0.0; 3], &self.area_m) || !in_box(&hi, &[0.0; 3], &self.area_m) {
                problems.push(format!("{what}: region must lie inside the area"));
            }
            if (0..3).any(|k| lo[k] > hi[k]) {
                problems.push(format!("{what}: region_min_m exceeds region_max_m"));
            }
            if let Some([low, high]) = g.demand_bps {
                if !(low > 0.0 && low <= high && high.is_finite()) {
                    problems.push(format!("{what}: demand_bps range must satisfy 0 < low <= high"));
                } else if let Some(u) = self.resource_unit_bps {
                    if (low / u).ceil() > (high / u).floor() {
                        problems.push(format!("{what}: demand range holds no whole number of resource units"));
                    }
                }
            }
            if g.priority == 0 {
                problems.push(format!("{what}: priority must be >= 1"));
            }
        }
        let mut quota_relays = BTreeSet::new();
        for q in &self.quotas {
            if !is(q.relay, Role::Relay) {
                problems.push(format!("quota given for non-relay {}", q.relay));
            }
            if q.quota == 0 {
                problems.push(format!("relay {}: quota must be >= 1", q.relay));
            }
            if !quota_relays.insert(q.relay) {
                problems.push(format!("relay {}: quota given twice", q.relay));
            }
        }
        let mut at = BTreeSet::new();
        for p in &self.perturbations {
            let what = format!("perturbation at iteration {}", p.at_iteration);
            if p.at_iteration == 0 || p.at_iteration > self.iterations {
                problems.push(format!("{what}: iteration must lie in 1..={}", self.iterations));
            }
            if !at.insert(p.at_iteration) {
                problems.push(format!("{what}: only one perturbation per iteration"));
            }
            for id in &p.departures {
                if !is(*id, Role::Source) {
                    problems.push(format!("{what}: departing drone {id} is not a source"));
                }
            }
            if p.arrivals > 0 {
                match self.arrival_group(p).and_then(|i| self.generate.get(i)) {
                    Some(g) if g.role == Role::Source => {}
                    _ => problems.push(format!("{what}: arrivals need a source generate group as template")),
                }
            }
        }
        if problems.is_empty() {
            // remaining checks need concrete drones
            if let Err(e) = self.market_spec().and_then(|s| Market::build(&s)) {
                match e {
                    Error::Validation(v) => problems.extend(v),
                    other => problems.push(other.to_string()),
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems).in_scenario(&self.name))
        }
    }

    fn role_fields(
        &self,
        what: &str,
        role: Role,
        has_demand: bool,
        destination: Option<u32>,
        radios: u32,
        is: &dyn Fn(u32, Role) -> bool,
    ) -> Vec<String> {
        let mut out = Vec::new();
        match role {
            Role::Source => {
                if !has_demand {
                    out.push(format!("{what}: sources need demand_bps"));
                }
                match destination {
                    Some(d) if is(d, Role::Destination) => {}
                    Some(d) => out.push(format!("{what}: destination {d} is not a destination drone")),
                    None => out.push(format!("{what}: sources need a destination")),
                }
            }
            Role::Relay => {
                if radios == 0 {
                    out.push(format!("{what}: relays need radio_count >= 1"));
                }
            }
            Role::Destination => {}
        }
        out
    }

    fn make_drone(&self, id: u32, g: &GenerateSpec, rng: &mut ChaCha8Rng) -> (Drone, Option<DroneId>) {
        let (lo, hi) = self.region(g);
        let mut position = [0.0; 3];
        for k in 0..3 {
            position[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
        }
        let demand = match (g.demand_bps, self.resource_unit_bps) {
            (Some([low, high]), Some(u)) => {
                let (a, b) = ((low / u).ceil() as u64, (high / u).floor() as u64);
                rng.random_range(a..=b) as f64 * u
            }
            (Some([low, high]), None) => low + (high - low) * rng.random::<f64>(),
            (None, _) => 0.0,
        };
        let drone = Drone {
            id: DroneId(id),
            role: g.role,
            position,
            tx_power_w: g.tx_power_w,
            radio_count: g.radio_count,
            resource_capacity: g.resource_capacity_units,
            demand_bps: demand,
            priority: g.priority,
        };
        (drone, g.destination.map(DroneId))
    }

    /// Concrete market inputs, with generated drones drawn from the seed.
    pub fn market_spec(&self) -> Result<MarketSpec> {
        let mut drones = Vec::new();
        let mut destination_of = BTreeMap::new();
        for d in &self.drones {
            drones.push(Drone {
                id: DroneId(d.id),
                role: d.role,
                position: d.position_m,
                tx_power_w: d.tx_power_w,
                radio_count: d.radio_count,
                resource_capacity: d.resource_capacity_units,
                demand_bps: d.demand_bps.unwrap_or(0.0),
                priority: d.priority,
            });
            if let Some(dst) = d.destination {
                destination_of.insert(DroneId(d.id), DroneId(dst));
            }
        }
        let mut rng = rng::stream(self.seed, rng::STREAM_PLACEMENT);
        for (g, (start, count)) in self.generate.iter().zip(self.group_ids()) {
            for i in 0..count as u32 {
                let (drone, dst) = self.make_drone(start + i, g, &mut rng);
                if let Some(dst) = dst {
                    destination_of.insert(drone.id, dst);
                }
                drones.push(drone);
            }
        }
        Ok(MarketSpec {
            drones,
            destination_of,
            link: self.link,
            quotas: self.quotas.iter().map(|q| (DroneId(q.relay), q.quota)).collect(),
            unit_bps: self.resource_unit_bps,
            direct_links: self.direct_links,
            priority_weight: self.relay_priority_weight,
        })
    }

    /// First id never used by the initial drones.
    pub fn next_free_id(&self) -> u32 {
        let explicit = self.drones.iter().map(|d| d.id + 1).max().unwrap_or(1);
        self.group_ids()
            .iter()
            .map(|(s, c)| s + *c as u32)
            .fold(explicit, u32::max)
    }

    /// Turns a scheduled perturbation into a concrete event. `present` are
    /// the source ids in the market right now, `next_id` the id counter for
    /// arrivals.
    pub fn resolve_perturbation(
        &self,
        p: &PerturbationSpec,
        present: &[DroneId],
        next_id: &mut u32,
        rng: &mut ChaCha8Rng,
    ) -> Result<PerturbationEvent> {
        let mut departures: BTreeSet<DroneId> = p.departures.iter().map(|id| DroneId(*id)).collect();
        let mut pool: Vec<DroneId> = present.iter().filter(|id| !departures.contains(id)).copied().collect();
        pool.sort();
        if p.random_departures > pool.len() {
            return Err(Error::Configuration(format!(
                "perturbation at iteration {} removes {} random sources but only {} remain",
                p.at_iteration,
                p.random_departures,
                pool.len()
            )));
        }
        for _ in 0..p.random_departures {
            let i = rng.random_range(0..pool.len());
            departures.insert(pool.remove(i));
        }
        let mut arrivals = Vec::new();
        if p.arrivals > 0 {
            let g = &self.generate[self.arrival_group(p).expect("validated")];
            for _ in 0..p.arrivals {
                let (drone, destination) = self.make_drone(*next_id, g, rng);
                *next_id += 1;
                arrivals.push(Arrival { drone, destination });
            }
        }
        Ok(PerturbationEvent {
            at_iteration: p.at_iteration,
            departures,
            arrivals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
seed = 1
matching_class = "class1"
area_m = [100.0, 100.0, 100.0]

[link]
carrier_freq_hz = 2.4e9
bandwidth_hz = 1e6
noise_power_w = 1e-13

[[drones]]
id = 1
role = "destination"
position_m = [90.0, 50.0, 50.0]
tx_power_w = 0.1

[[generate]]
role = "source"
count = 3
region_max_m = [20.0, 100.0, 100.0]
tx_power_w = 0.1
demand_bps = [1e6, 4e6]
destination = 1

[[generate]]
role = "relay"
count = 2
tx_power_w = 0.1
radio_count = 2
"#;

    #[test]
    fn minimal_scenario_is_valid() {
        let s = parse_scenario(MINIMAL).unwrap();
        s.validate().unwrap();
        let spec = s.market_spec().unwrap();
        assert_eq!(spec.drones.len(), 6);
        let ids: Vec<u32> = spec.drones.iter().map(|d| d.id.0).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(s.iterations, 45);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = MINIMAL.replace("seed = 1", "seed = 1\ncolour = \"red\"");
        assert!(matches!(parse_scenario(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_seed_is_rejected() {
        let text = MINIMAL.replace("seed = 1\n", "");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn violations_are_all_reported() {
        let text = MINIMAL.replace("radio_count = 2", "radio_count = 0").replace("count = 3", "count = 0");
        let err = parse_scenario(&text).unwrap().validate().unwrap_err();
        let Error::Validation(v) = err.root() else { panic!("{err}") };
        assert!(v.len() >= 2, "{v:?}");
    }

    #[test]
    fn generated_ids_never_collide_with_explicit_ones() {
        let text = format!("{MINIMAL}\n[[generate]]\nrole = \"relay\"\ncount = 1\nid_start = 1\ntx_power_w = 0.1\nradio_count = 1\n");
        let err = parse_scenario(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("collides"), "{err}");
    }

    #[test]
    fn quantized_demands_are_whole_units() {
        let text = MINIMAL.replace("area_m", "resource_unit_bps = 5e5\narea_m");
        let s = parse_scenario(&text).unwrap();
        for d in s.market_spec().unwrap().drones.iter().filter(|d| d.role == Role::Source) {
            let units = d.demand_bps / 5e5;
            assert_eq!(units, units.round());
            assert!((2.0..=8.0).contains(&units));
        }
    }
}
