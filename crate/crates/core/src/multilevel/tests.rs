use super::*;

fn id(n: u32) -> DroneId {
    DroneId(n)
}

struct World {
    drones: BTreeMap<DroneId, Drone>,
    destination_of: BTreeMap<DroneId, DroneId>,
    link: LinkModel,
}

impl World {
    fn new(drones: Vec<Drone>, dest: u32) -> Self {
        let destination_of = drones
            .iter()
            .filter(|d| d.role == Role::Source)
            .map(|d| (d.id, id(dest)))
            .collect();
        World {
            drones: drones.into_iter().map(|d| (d.id, d)).collect(),
            destination_of,
            link: LinkModel::default(),
        }
    }

    fn ctx(&self) -> MultilevelContext<'_> {
        MultilevelContext {
            drones: &self.drones,
            destination_of: &self.destination_of,
            link: &self.link,
        }
    }

    fn rate(&self, a: u32, b: u32) -> f64 {
        model::link_rate(&self.drones[&id(a)], &self.drones[&id(b)], &self.link).unwrap()
    }
}

#[test]
fn chain_has_one_route() {
    let w = World::new(
        vec![
            Drone::source(1, [0.0, 0.0, 0.0], 0.1, 1e6),
            Drone::relay(10, [300.0, 0.0, 0.0], 0.1, 1),
            Drone::relay(20, [700.0, 0.0, 0.0], 0.1, 1),
            Drone::destination(30, [1000.0, 0.0, 0.0], 0.1),
        ],
        30,
    );
    let g = LevelGraph::complete(vec![vec![id(1)], vec![id(10)], vec![id(20)], vec![id(30)]]).unwrap();
    let out = multilevel_match(&g, w.ctx(), MultilevelConfig::default()).unwrap();
    assert!(out.converged);
    assert_eq!(out.routes.len(), 1);
    let r = &out.routes[0];
    assert_eq!(r.relays, vec![id(10), id(20)]);
    let min_hop = w.rate(1, 10).min(w.rate(10, 20)).min(w.rate(20, 30));
    assert!((r.rate_bps - 0.5 * min_hop).abs() < 1e-6);
}

/// Two sources, two first-tier relays, one second-tier relay with a single
/// radio: only one flow can get through.
fn bottleneck() -> (World, LevelGraph) {
    let w = World::new(
        vec![
            Drone::source(1, [0.0, 0.0, 0.0], 0.1, 1e6),
            Drone::source(2, [0.0, 200.0, 0.0], 0.1, 1e6),
            Drone::relay(10, [300.0, 0.0, 0.0], 0.1, 1),
            Drone::relay(11, [300.0, 200.0, 0.0], 0.1, 1),
            Drone::relay(20, [600.0, 100.0, 0.0], 0.1, 1),
            Drone::destination(30, [1000.0, 100.0, 0.0], 0.1),
        ],
        30,
    );
    let g = LevelGraph::complete(vec![
        vec![id(1), id(2)],
        vec![id(10), id(11)],
        vec![id(20)],
        vec![id(30)],
    ])
    .unwrap();
    (w, g)
}

#[test]
fn downstream_capacity_strands_the_loser() {
    let (w, g) = bottleneck();
    let out = multilevel_match(&g, w.ctx(), MultilevelConfig::default()).unwrap();
    assert!(out.converged);
    assert_eq!(out.routes.len(), 1);
    assert_eq!(out.stranded.len(), 1);
    let winner = &out.routes[0];
    assert_eq!(winner.relays.len(), 2);
    assert_eq!(winner.relays[1], id(20));
    let loser = &out.stranded[0];
    assert_eq!(loser.reached.len(), 1, "stops at the first tier");
}

#[test]
fn routes_never_beat_their_weakest_hop() {
    let (w, g) = bottleneck();
    for lookahead in [true, false] {
        let out = multilevel_match(&g, w.ctx(), MultilevelConfig { lookahead, max_sweeps: None }).unwrap();
        for r in &out.routes {
            let mut path = vec![r.source.0];
            path.extend(r.relays.iter().map(|x| x.0));
            path.push(r.destination.0);
            let min_hop = path.windows(2).map(|h| w.rate(h[0], h[1])).fold(f64::INFINITY, f64::min);
            assert!(r.rate_bps <= min_hop);
        }
    }
}

#[test]
fn shared_hops_split_the_rate() {
    // one relay per tier with two radios: both flows share every hop
    let w = World::new(
        vec![
            Drone::source(1, [0.0, 0.0, 0.0], 0.1, 1e6),
            Drone::source(2, [0.0, 5.0, 0.0], 0.1, 1e6),
            Drone::relay(10, [300.0, 0.0, 0.0], 0.1, 2),
            Drone::destination(30, [600.0, 0.0, 0.0], 0.1),
        ],
        30,
    );
    let g = LevelGraph::complete(vec![vec![id(1), id(2)], vec![id(10)], vec![id(30)]]).unwrap();
    let out = multilevel_match(&g, w.ctx(), MultilevelConfig::default()).unwrap();
    assert_eq!(out.routes.len(), 2);
    let r1 = out.routes.iter().find(|r| r.source == id(1)).unwrap();
    let expected = 0.5 * w.rate(1, 10).min(w.rate(10, 30) / 2.0);
    assert!((r1.rate_bps - expected).abs() < 1e-6);
}

#[test]
fn invalid_graphs_are_rejected() {
    assert!(LevelGraph::new(vec![vec![id(1)]], []).is_err());
    assert!(LevelGraph::new(vec![vec![id(1)], vec![id(2)]], [(id(2), id(1))]).is_err());
    assert!(LevelGraph::new(vec![vec![id(1)], vec![id(1)]], []).is_err());
    let (w, _) = bottleneck();
    // a relay in the source level
    let g = LevelGraph::complete(vec![vec![id(10)], vec![id(30)]]).unwrap();
    assert!(matches!(multilevel_match(&g, w.ctx(), MultilevelConfig::default()), Err(Error::Validation(_))));
}

#[test]
fn lookahead_avoids_a_dead_end_relay() {
    // relay 10 is closest to the source but can only forward to the distant
    // relay 20; relay 11 leads to the well-placed relay 21
    let w = World::new(
        vec![
            Drone::source(1, [0.0, 0.0, 0.0], 0.1, 1e6),
            Drone::relay(10, [300.0, 0.0, 0.0], 0.1, 1),
            Drone::relay(11, [300.0, 300.0, 0.0], 0.1, 1),
            Drone::relay(20, [600.0, -2000.0, 0.0], 0.1, 1),
            Drone::relay(21, [600.0, 300.0, 0.0], 0.1, 1),
            Drone::destination(30, [1000.0, 0.0, 0.0], 0.1),
        ],
        30,
    );
    let levels = vec![vec![id(1)], vec![id(10), id(11)], vec![id(20), id(21)], vec![id(30)]];
    let edges = [(1, 10), (1, 11), (10, 20), (11, 21), (20, 30), (21, 30)].map(|(a, b)| (id(a), id(b)));
    let g = LevelGraph::new(levels, edges).unwrap();
    let route_rate = |path: [u32; 4]| 0.5 * path.windows(2).map(|h| w.rate(h[0], h[1])).fold(f64::INFINITY, f64::min);
    // the only two routes, enumerated
    let (dead_end, good) = (route_rate([1, 10, 20, 30]), route_rate([1, 11, 21, 30]));
    assert!(good > dead_end);

    let greedy = multilevel_match(&g, w.ctx(), MultilevelConfig { lookahead: false, max_sweeps: None }).unwrap();
    assert_eq!(greedy.routes[0].relays, vec![id(10), id(20)]);
    assert!((greedy.routes[0].rate_bps - dead_end).abs() < 1e-6);
    let ahead = multilevel_match(&g, w.ctx(), MultilevelConfig::default()).unwrap();
    assert_eq!(ahead.routes[0].relays, vec![id(11), id(21)]);
    assert!((ahead.routes[0].rate_bps - good).abs() < 1e-6);
}
