#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaymatch::{Drone, DroneId, LinkModel, Market, MarketSpec};

/// Two-hop geometry where relaying usually beats the direct link: sources on
/// the left, relays mid-field, two ground stations on the right.
pub fn link() -> LinkModel {
    LinkModel {
        carrier_freq_hz: 2.4e9,
        bandwidth_hz: 1e6,
        noise_power_w: 4e-15,
        path_loss_exponent: 3.0,
        half_duplex_factor: 0.5,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub sources: usize,
    pub relays: usize,
    pub radios: u32,
    pub capacity: Option<u64>,
    pub unit_bps: Option<f64>,
    pub direct_links: bool,
}

impl Shape {
    pub fn new(sources: usize, relays: usize, radios: u32) -> Self {
        Shape {
            sources,
            relays,
            radios,
            capacity: None,
            unit_bps: None,
            direct_links: true,
        }
    }
}

pub fn random_spec(seed: u64, shape: Shape) -> MarketSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drones = vec![
        Drone::destination(1, [2000.0, 250.0, 100.0], 0.1),
        Drone::destination(2, [2000.0, 750.0, 100.0], 0.1),
    ];
    let mut destination_of = BTreeMap::new();
    let at = |rng: &mut ChaCha8Rng, x0: f64, x1: f64| {
        [rng.random_range(x0..x1), rng.random_range(0.0..1000.0), rng.random_range(50.0..200.0)]
    };
    for i in 0..shape.relays {
        let p = at(&mut rng, 800.0, 1200.0);
        let mut r = Drone::relay(10 + i as u32, p, 0.1, shape.radios);
        r.resource_capacity = shape.capacity;
        drones.push(r);
    }
    for i in 0..shape.sources {
        let p = at(&mut rng, 0.0, 200.0);
        let demand = match shape.unit_bps {
            Some(u) => rng.random_range(2u32..=10) as f64 * u,
            None => rng.random_range(0.2e6..1.0e6),
        };
        let id = 100 + i as u32;
        drones.push(Drone::source(id, p, 0.1, demand));
        destination_of.insert(DroneId(id), DroneId(1 + rng.random_range(0..2u32)));
    }
    let mut spec = MarketSpec::new(drones, destination_of, link());
    spec.unit_bps = shape.unit_bps;
    spec.direct_links = shape.direct_links;
    spec
}

pub fn random_market(seed: u64, shape: Shape) -> Market {
    Market::build(&random_spec(seed, shape)).expect("generated markets are valid")
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}
