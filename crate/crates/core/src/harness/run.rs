//! A single experiment: one engine, one trace, optional oracle.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::rng;
use super::scenario::Scenario;
use crate::baselines::{brute_force_optimum, OracleResult};
use crate::dynamics::{apply_perturbation, DynamicState, PerturbationEvent};
use crate::error::{Error, Result};
use crate::matching::{
    global_satisfaction, solve, verify_stability, Engine, EngineConfig, Matching, MatchingClass,
};
use crate::preferences::Market;

/// One row of the satisfaction trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub global_satisfaction: f64,
    pub matched_count: usize,
    pub blocking_or_improving_count: usize,
    pub event: String,
}

/// What happened after one perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub iteration: usize,
    pub event: String,
    pub departures: usize,
    pub arrivals: usize,
    /// Search iterations the warm-started engine needed to converge.
    pub incremental_iterations: usize,
    /// Search iterations a cold run needs on the same post-event market.
    pub cold_iterations: usize,
    /// Iterations after the event until the trace first showed no blocking
    /// pair or improving move.
    pub stable_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub optimum: f64,
    pub enumerated: u64,
    /// Optimum minus final global satisfaction.
    pub gap: f64,
}

/// Machine-readable account of a run. Deliberately free of wall-clock
/// values so repeated runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub matching_class: MatchingClass,
    pub sources: usize,
    pub relays: usize,
    pub records: usize,
    /// Search iterations of the initial cold run.
    pub initial_iterations: usize,
    pub final_global_satisfaction: f64,
    pub final_matched_count: usize,
    pub final_blocking_or_improving_count: usize,
    pub events: Vec<EventSummary>,
    pub oracle: Option<OracleSummary>,
    pub final_matching: Matching,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub matching: Matching,
    pub market: Market,
    pub oracle: Option<OracleResult>,
    pub summary: RunSummary,
}

fn event_tag(event: &PerturbationEvent) -> String {
    let mut parts = Vec::new();
    if !event.departures.is_empty() {
        parts.push(format!("departure:{}", event.departures.len()));
    }
    if !event.arrivals.is_empty() {
        parts.push(format!("arrival:{}", event.arrivals.len()));
    }
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(";")
    }
}

fn record(market: &Market, class: MatchingClass, matching: &Matching, iteration: usize, event: String) -> Result<MetricsRecord> {
    let g = global_satisfaction(market, class, matching)?.value();
    let blocking = verify_stability(market, matching, class)?.len();
    if !(0.0..=1.0).contains(&g) {
        return Err(Error::validation(format!("satisfaction {g} out of bounds at iteration {iteration}")));
    }
    Ok(MetricsRecord {
        iteration,
        global_satisfaction: g,
        matched_count: matching.matched_count(),
        blocking_or_improving_count: blocking,
        event,
    })
}

/// Runs the scenario's engine, recording one row per search iteration.
///
/// Row 0 is the all-unmatched start. A perturbation replaces the search
/// round of its iteration: the row shows the market right after the churn,
/// and the warm-started engine resumes on the next iteration. If the engine
/// has not converged when the configured window ends, recording continues
/// until it does.
pub fn run_experiment(scenario: &Scenario) -> Result<RunOutput> {
    run_inner(scenario).map_err(|e| e.in_scenario(&scenario.name))
}

fn run_inner(scenario: &Scenario) -> Result<RunOutput> {
    scenario.validate()?;
    let class = scenario.matching_class;
    let config = EngineConfig {
        max_iterations: scenario.max_search_iterations,
    };
    let mut state = DynamicState::new(scenario.market_spec()?)?;
    let mut engine = Engine::cold(&state.market, class, config);
    let mut records = vec![record(&state.market, class, &state.matching, 0, "init".into())?];
    let mut events: Vec<EventSummary> = Vec::new();
    let mut initial_iterations = None;
    let mut perturb_rng = rng::stream(scenario.seed, rng::STREAM_PERTURBATION);
    let mut next_id = scenario.next_free_id();
    let mut schedule = scenario.perturbations.clone();
    schedule.sort_by_key(|p| p.at_iteration);
    let mut schedule = schedule.into_iter().peekable();

    let mut t = 0;
    loop {
        t += 1;
        if t > scenario.iterations && engine.is_converged() {
            break;
        }
        if let Some(p) = schedule.next_if(|p| p.at_iteration == t) {
            if initial_iterations.is_none() {
                initial_iterations = Some(engine.iterations());
            }
            if let Some(last) = events.last_mut() {
                last.incremental_iterations = engine.iterations();
            }
            state.matching = engine.matching(&state.market);
            state.iteration = t;
            let present: Vec<_> = state.market.sources().iter().map(|s| s.id).collect();
            let event = scenario.resolve_perturbation(&p, &present, &mut next_id, &mut perturb_rng)?;
            state = apply_perturbation(state, &event)?;
            engine = Engine::warm(&state.market, class, &state.matching, state.departures_pending(), config)?;
            let tag = event_tag(&event);
            records.push(record(&state.market, class, &state.matching, t, tag.clone())?);
            events.push(EventSummary {
                iteration: t,
                event: tag,
                departures: event.departures.len(),
                arrivals: event.arrivals.len(),
                incremental_iterations: 0,
                cold_iterations: solve(&state.market, class, config)?.iterations,
                stable_after: None,
            });
            continue;
        }
        engine.step(&state.market)?;
        let matching = engine.matching(&state.market);
        let rec = record(&state.market, class, &matching, t, String::new())?;
        if let Some(last) = events.last_mut() {
            if last.stable_after.is_none() && rec.blocking_or_improving_count == 0 {
                last.stable_after = Some(t - last.iteration);
            }
        }
        records.push(rec);
    }
    if initial_iterations.is_none() {
        initial_iterations = Some(engine.iterations());
    }
    if let Some(last) = events.last_mut() {
        last.incremental_iterations = engine.iterations();
    }
    let matching = engine.matching(&state.market);
    let market = state.market;
    let final_g = global_satisfaction(&market, class, &matching)?.value();
    let oracle = if scenario.oracle {
        Some(brute_force_optimum(&market, class, u128::from(scenario.oracle_cap))?)
    } else {
        None
    };
    let last = records.last().expect("row 0 always exists");
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        matching_class: class,
        sources: market.num_sources(),
        relays: market.num_relays(),
        records: records.len(),
        initial_iterations: initial_iterations.unwrap_or(0),
        final_global_satisfaction: final_g,
        final_matched_count: matching.matched_count(),
        final_blocking_or_improving_count: last.blocking_or_improving_count,
        events,
        oracle: oracle.as_ref().map(|o| OracleSummary {
            optimum: o.optimum,
            enumerated: o.enumerated,
            gap: o.optimum - final_g,
        }),
        final_matching: matching.clone(),
    };
    Ok(RunOutput {
        records,
        matching,
        market,
        oracle,
        summary,
    })
}

/// Fixed CSV layout: iteration, global_satisfaction, matched_count,
/// blocking_or_improving_count, event.
pub fn records_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from("iteration,global_satisfaction,matched_count,blocking_or_improving_count,event\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.12},{},{},{}",
            r.iteration, r.global_satisfaction, r.matched_count, r.blocking_or_improving_count, r.event
        );
    }
    out
}
