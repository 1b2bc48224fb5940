use super::*;
use crate::matching::{solve, validate};
use crate::testutil::{relay, spec, src, DEST};

fn id(n: u32) -> DroneId {
    DroneId(n)
}

fn still(spec: &MarketSpec) -> BTreeMap<DroneId, Trajectory> {
    spec.drones.iter().map(|d| (d.id, Trajectory::stationary(d.position))).collect()
}

#[test]
fn interpolation_and_hold() {
    let t = Trajectory::new(vec![(0.0, [0.0, 0.0, 0.0]), (10.0, [10.0, 20.0, 0.0])]).unwrap();
    assert_eq!(t.position_at(-1.0), [0.0, 0.0, 0.0]);
    assert_eq!(t.position_at(5.0), [5.0, 10.0, 0.0]);
    assert_eq!(t.position_at(99.0), [10.0, 20.0, 0.0]);
    assert!(Trajectory::new(vec![]).is_err());
    assert!(Trajectory::new(vec![(1.0, [0.0; 3]), (1.0, [1.0; 3])]).is_err());
}

#[test]
fn static_trajectories_reduce_to_class1() {
    let s = spec(
        vec![
            src(1, [0.0, 0.0, 0.0], 2e6),
            src(2, [0.0, 100.0, 0.0], 4e6),
            src(3, [0.0, -100.0, 0.0], 1e6),
            relay(10, [500.0, 0.0, 0.0], 1),
            relay(11, [500.0, 800.0, 0.0], 2),
        ],
        [1000.0, 0.0, 0.0],
        false,
    );
    let dm = DynamicMarket {
        trajectories: still(&s),
        spec: s.clone(),
    };
    let out = dynamic_match(&dm, 30.0, 1.0).unwrap();
    let plain = Market::build(&s).unwrap();
    assert_eq!(out.matching, match_class1(&plain));
    assert_eq!(out.market.source_prefs(), plain.source_prefs());
    assert_eq!(out.market.relay_prefs(), plain.relay_prefs());
    assert!(out.modes.values().all(|m| *m == LinkMode::Static));
}

#[test]
fn bad_horizon_is_a_configuration_error() {
    let s = spec(vec![src(1, [0.0; 3], 1e6)], [10.0, 0.0, 0.0], true);
    let dm = DynamicMarket {
        trajectories: still(&s),
        spec: s,
    };
    assert!(matches!(dynamic_match(&dm, 0.0, 1.0), Err(Error::Configuration(_))));
    assert!(matches!(dynamic_match(&dm, 30.0, -1.0), Err(Error::Configuration(_))));
}

/// Shannon rate written out independently of the model module.
fn rate(p: f64, a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let pl_db = 20.0 * d.log10() + 20.0 * 2.4e9f64.log10() - 147.55;
    1e6 * (1.0 + p * 10f64.powf(-pl_db / 10.0) / 1e-13).log2()
}

fn ferry_world() -> DynamicMarket {
    let s = spec(
        vec![
            src(1, [0.0, 0.0, 100.0], 20e6),
            relay(10, [20.0, 0.0, 100.0], 1),
            relay(11, [1500.0, 3000.0, 100.0], 1),
        ],
        [3000.0, 0.0, 100.0],
        false,
    );
    let mut trajectories = still(&s);
    trajectories.insert(
        id(10),
        Trajectory::new(vec![(0.0, [20.0, 0.0, 100.0]), (30.0, [2980.0, 0.0, 100.0])]).unwrap(),
    );
    DynamicMarket { spec: s, trajectories }
}

#[test]
fn ferry_beats_distant_static_relay() {
    let dm = ferry_world();
    let out = dynamic_match(&dm, 30.0, 1.0).unwrap();
    assert_eq!(out.matching.slot(id(1)).map(|s| s.relay), Some(id(10)));
    assert_eq!(out.modes[&id(1)], LinkMode::Ferry);

    // fine-grid integration: collect until the best split, deliver after
    let dt = 1e-3;
    let steps = (30.0 / dt) as usize;
    let pos = |t: f64| [20.0 + (2960.0 / 30.0) * t, 0.0, 100.0];
    let up: Vec<f64> = (0..steps).map(|i| rate(0.1, [0.0, 0.0, 100.0], pos(i as f64 * dt)) * dt).collect();
    let down: Vec<f64> = (0..steps).map(|i| rate(0.1, pos(i as f64 * dt), [3000.0, 0.0, 100.0]) * dt).collect();
    let total_down: f64 = down.iter().sum();
    let (mut c, mut before, mut best) = (0.0, 0.0, 0.0f64);
    for i in 0..steps {
        c += up[i];
        before += down[i];
        best = best.max(c.min(total_down - before));
    }
    let integrated = best / 30.0;
    let scored = out.scores[&(id(1), id(10))].ferry_bps;
    assert!((scored - integrated).abs() / integrated < 0.05, "{scored} vs {integrated}");

    let static_far = 0.5 * rate(0.1, [0.0, 0.0, 100.0], [1500.0, 3000.0, 100.0]).min(rate(0.1, [1500.0, 3000.0, 100.0], [3000.0, 0.0, 100.0]));
    assert!(integrated > static_far);
    assert!((out.scores[&(id(1), id(11))].static_bps - static_far).abs() < 1e-6);
}

#[test]
fn relay_flying_away_loses_to_static_twin() {
    let s = spec(
        vec![
            src(1, [0.0, 0.0, 0.0], 5e6),
            relay(10, [500.0, 300.0, 0.0], 1),
            relay(11, [500.0, 300.0, 10.0], 1),
        ],
        [1000.0, 0.0, 0.0],
        false,
    );
    let mut trajectories = still(&s);
    // relay 10 starts level with its twin and climbs away
    trajectories.insert(
        id(10),
        Trajectory::new(vec![(0.0, [500.0, 300.0, 10.0]), (30.0, [500.0, 3000.0, 10.0])]).unwrap(),
    );
    let out = dynamic_match(&DynamicMarket { spec: s, trajectories }, 30.0, 1.0).unwrap();
    let mobile = &out.scores[&(id(1), id(10))];
    let fixed = &out.scores[&(id(1), id(11))];
    assert_eq!(mobile.ferry_bps, 0.0);
    assert!(mobile.static_bps < fixed.static_bps);
    assert_eq!(out.matching.slot(id(1)).map(|s| s.relay), Some(id(11)));
    assert_eq!(out.modes[&id(1)], LinkMode::Static);
}

fn churn_spec() -> MarketSpec {
    spec(
        vec![
            src(1, [0.0, 0.0, 0.0], 3e6),
            src(2, [0.0, 100.0, 0.0], 3e6),
            src(3, [0.0, -100.0, 0.0], 3e6),
            src(4, [0.0, 200.0, 0.0], 3e6),
            relay(10, [500.0, 0.0, 0.0], 1),
            relay(11, [500.0, 300.0, 0.0], 2),
        ],
        [1000.0, 0.0, 0.0],
        false,
    )
}

fn arrival(n: u32, y: f64) -> Arrival {
    Arrival {
        drone: src(n, [0.0, y, 0.0], 3e6),
        destination: Some(id(DEST)),
    }
}

#[test]
fn empty_event_leaves_state_alone() {
    let mut st = DynamicState::new(churn_spec()).unwrap();
    rematch_incremental(&mut st, MatchingClass::Class3, EngineConfig::default()).unwrap();
    let before = st.matching.clone();
    let st = apply_perturbation(st, &PerturbationEvent::default()).unwrap();
    assert_eq!(st.matching, before);
    assert!(!st.departures_pending());
}

#[test]
fn unknown_departure_is_rejected() {
    let st = DynamicState::new(churn_spec()).unwrap();
    let ev = PerturbationEvent {
        departures: [id(77)].into(),
        ..Default::default()
    };
    assert!(matches!(apply_perturbation(st, &ev), Err(Error::UnknownDrone(DroneId(77)))));
}

#[test]
fn event_must_match_iteration() {
    let st = DynamicState::new(churn_spec()).unwrap();
    let ev = PerturbationEvent {
        at_iteration: 3,
        ..Default::default()
    };
    assert!(apply_perturbation(st, &ev).is_err());
}

#[test]
fn untouched_sources_keep_their_slots() {
    let mut st = DynamicState::new(churn_spec()).unwrap();
    rematch_incremental(&mut st, MatchingClass::Class3, EngineConfig::default()).unwrap();
    let before = st.matching.clone();
    let ev = PerturbationEvent {
        departures: [id(2)].into(),
        arrivals: vec![arrival(5, 50.0)],
        ..Default::default()
    };
    let st = apply_perturbation(st, &ev).unwrap();
    for (s, slot) in before.iter().filter(|(s, _)| *s != id(2)) {
        assert_eq!(st.matching.slot(s), slot);
    }
    assert!(!st.matching.contains(id(2)));
    assert!(!st.matching.contains(id(5)));
    assert!(st.market.source_idx(id(5)).is_some());
    validate(&st.market, &st.matching, MatchingClass::Class3).unwrap();
}

#[test]
fn rematch_without_change_costs_nothing() {
    let mut st = DynamicState::new(churn_spec()).unwrap();
    rematch_incremental(&mut st, MatchingClass::Class3, EngineConfig::default()).unwrap();
    let before = st.matching.clone();
    let (again, iters) = rematch_incremental(&mut st, MatchingClass::Class3, EngineConfig::default()).unwrap();
    assert_eq!(iters, 0);
    assert_eq!(again, before);
}

#[test]
fn class1_incremental_equals_cold() {
    let mut st = DynamicState::new(churn_spec()).unwrap();
    rematch_incremental(&mut st, MatchingClass::Class1, EngineConfig::default()).unwrap();
    let events = [
        PerturbationEvent {
            departures: [id(1)].into(),
            ..Default::default()
        },
        PerturbationEvent {
            arrivals: vec![arrival(6, 20.0), arrival(7, -20.0)],
            ..Default::default()
        },
    ];
    for ev in &events {
        st = apply_perturbation(st, ev).unwrap();
        let (warm, _) = rematch_incremental(&mut st, MatchingClass::Class1, EngineConfig::default()).unwrap();
        let cold = solve(&st.market, MatchingClass::Class1, EngineConfig::default()).unwrap().matching;
        assert_eq!(warm, cold);
    }
}

#[test]
fn cached_source_lists_match_a_fresh_build() {
    let mut st = DynamicState::new(churn_spec()).unwrap();
    let ev = PerturbationEvent {
        departures: [id(3)].into(),
        arrivals: vec![arrival(8, 60.0)],
        ..Default::default()
    };
    st = apply_perturbation(st, &ev).unwrap();
    let fresh = Market::build(&st.spec).unwrap();
    assert_eq!(st.market.source_prefs(), fresh.source_prefs());
    assert_eq!(st.market.relay_prefs(), fresh.relay_prefs());
}
