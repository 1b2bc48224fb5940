//! Reference algorithms the engines are measured against: the exhaustive
//! optimum, selfish best-response dynamics, and uniform random assignment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{from_dense, global_dense, validate_dense, Dense, Matching, MatchingClass};
use crate::model::DroneId;
use crate::preferences::Market;

/// Default ceiling on the number of assignments the oracle will enumerate.
pub const DEFAULT_ORACLE_CAP: u128 = 10_000_000;

/// Relative margin for a best-response move to count as an improvement.
const RATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best: Matching,
    pub optimum: f64,
    /// Feasible assignments evaluated.
    pub enumerated: u64,
}

/// Per-source choices the oracle enumerates, `None` (unmatched) first.
fn choices(market: &Market, class: MatchingClass, s: usize) -> Vec<Option<(usize, usize)>> {
    let mut out = vec![None];
    for r in 0..market.num_relays() {
        if !market.mutually_acceptable(s, r) {
            continue;
        }
        match class {
            MatchingClass::Class3 => out.extend((0..market.radios_at(r)).map(|k| Some((r, k)))),
            // radio index is assigned canonically after the relay is chosen
            _ => out.push(Some((r, 0))),
        }
    }
    out
}

/// Assigns radios in source order for classes where only the relay matters.
fn canonical_radios(market: &Market, class: MatchingClass, dense: &mut Dense) {
    if class != MatchingClass::Class1 {
        return;
    }
    let mut used = vec![0usize; market.num_relays()];
    for (r, k) in dense.iter_mut().flatten() {
        *k = used[*r];
        used[*r] += 1;
    }
}

fn feasible(market: &Market, class: MatchingClass, dense: &[Option<(usize, usize)>], load: &mut [u64]) -> bool {
    load.iter_mut().for_each(|l| *l = 0);
    for (s, slot) in dense.iter().enumerate() {
        if let Some((r, _)) = slot {
            load[*r] += match class {
                MatchingClass::Class2 => market.units_at(s),
                _ => 1,
            };
        }
    }
    (0..market.num_relays()).all(|r| match class {
        MatchingClass::Class1 => load[r] <= market.quota_at(r) as u64,
        MatchingClass::Class2 => market.capacity_at(r).is_none_or(|c| load[r] <= c),
        MatchingClass::Class3 => true,
    })
}

/// Size of the raw search space (product of per-source choice counts).
pub fn search_space(market: &Market, class: MatchingClass) -> u128 {
    (0..market.num_sources())
        .map(|s| choices(market, class, s).len() as u128)
        .try_fold(1u128, |acc, c| acc.checked_mul(c))
        .unwrap_or(u128::MAX)
}

/// Enumerates every feasible assignment and returns the one with the highest
/// global satisfaction. Ties go to the lexicographically first assignment
/// (source order, unmatched before relays, relays and radios ascending).
/// Refuses instances whose search space exceeds `cap`.
pub fn brute_force_optimum(market: &Market, class: MatchingClass, cap: u128) -> Result<OracleResult> {
    let size = search_space(market, class);
    if size > cap {
        return Err(Error::InstanceTooLarge { size, cap });
    }
    let n = market.num_sources();
    let opts: Vec<_> = (0..n).map(|s| choices(market, class, s)).collect();
    let mut idx = vec![0usize; n];
    let mut dense: Dense = vec![None; n];
    let mut load = vec![0u64; market.num_relays()];
    let mut best: Option<(f64, Dense)> = None;
    let mut enumerated = 0u64;
    loop {
        for s in 0..n {
            dense[s] = opts[s][idx[s]];
        }
        if feasible(market, class, &dense, &mut load) {
            enumerated += 1;
            let mut candidate = dense.clone();
            canonical_radios(market, class, &mut candidate);
            let value = global_dense(market, class, &candidate);
            if best.as_ref().is_none_or(|(b, _)| value > *b + 1e-12) {
                best = Some((value, candidate));
            }
        }
        // odometer, last source fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                let (optimum, dense) = best.expect("the all-unmatched assignment is always feasible");
                return Ok(OracleResult {
                    best: from_dense(market, &dense),
                    optimum,
                    enumerated,
                });
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < opts[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub matching: Matching,
    pub converged: bool,
    pub sweeps: usize,
}

/// Own rate of `s` at `slot` given everyone else in `dense` stays put, or
/// `None` when the slot is unavailable under the class's invariants.
fn option_rate(
    market: &Market,
    class: MatchingClass,
    dense: &[Option<(usize, usize)>],
    s: usize,
    slot: Option<(usize, usize)>,
) -> Option<f64> {
    let Some((r, k)) = slot else {
        return Some(market.direct_rate_at(s));
    };
    let others = dense.iter().enumerate().filter(|(o, _)| *o != s);
    match class {
        MatchingClass::Class1 => {
            let at_relay = others.clone().filter(|(_, d)| matches!(d, Some((rr, _)) if *rr == r)).count();
            let radio_taken = others.clone().any(|(_, d)| *d == Some((r, k)));
            if at_relay >= market.quota_at(r) || radio_taken || k >= market.quota_at(r) {
                return None;
            }
        }
        MatchingClass::Class2 => {
            let used: u64 = others
                .clone()
                .filter(|(_, d)| matches!(d, Some((rr, _)) if *rr == r))
                .map(|(o, _)| market.units_at(o))
                .sum();
            if market.capacity_at(r).is_some_and(|c| used + market.units_at(s) > c) {
                return None;
            }
        }
        MatchingClass::Class3 => {}
    }
    let sharers = 1 + others.filter(|(_, d)| **d == Some((r, k))).count() as u32;
    Some(crate::matching::achieved_rate(market, class, s, r, sharers))
}

fn br_options(market: &Market, class: MatchingClass, s: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..market.num_relays() {
        if !market.mutually_acceptable(s, r) {
            continue;
        }
        let radios = match class {
            MatchingClass::Class2 => 1,
            _ => market.radios_at(r),
        };
        out.extend((0..radios).map(|k| (r, k)));
    }
    out
}

/// Best option for `s` with others fixed; `None` when staying is best.
fn best_reply(
    market: &Market,
    class: MatchingClass,
    dense: &[Option<(usize, usize)>],
    s: usize,
) -> Option<Option<(usize, usize)>> {
    let current = option_rate(market, class, dense, s, dense[s]).unwrap_or(0.0);
    let mut best: Option<(Option<(usize, usize)>, f64)> = None;
    let candidates = std::iter::once(None).chain(br_options(market, class, s).into_iter().map(Some));
    for slot in candidates {
        if slot == dense[s] {
            continue;
        }
        if let Some(rate) = option_rate(market, class, dense, s, slot) {
            if best.is_none_or(|(_, b)| rate > b) {
                best = Some((slot, rate));
            }
        }
    }
    best.filter(|(_, rate)| *rate > current + RATE_TOLERANCE * current.abs().max(1.0))
        .map(|(slot, _)| slot)
}

/// Round-robin selfish dynamics from the empty matching: each source in id
/// order moves to the option maximizing its own rate with others fixed.
/// Stops at a fixed point or after `max_iters` sweeps.
pub fn best_response(market: &Market, class: MatchingClass, max_iters: usize) -> Result<BestResponse> {
    if max_iters == 0 {
        return Err(Error::Configuration("best response needs max_iters >= 1".into()));
    }
    let mut dense: Dense = vec![None; market.num_sources()];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_iters {
        sweeps += 1;
        let mut moved = false;
        for s in 0..dense.len() {
            if let Some(slot) = best_reply(market, class, &dense, s) {
                dense[s] = slot;
                moved = true;
            }
        }
        if !moved {
            converged = true;
            break;
        }
    }
    Ok(BestResponse {
        matching: from_dense(market, &dense),
        converged,
        sweeps,
    })
}

/// Sources that could strictly raise their own rate by a unilateral move.
pub fn unilateral_improvements(market: &Market, class: MatchingClass, matching: &Matching) -> Result<Vec<DroneId>> {
    let dense = validate_dense(market, matching, class)?;
    Ok((0..dense.len())
        .filter(|&s| best_reply(market, class, &dense, s).is_some())
        .map(|s| market.sources()[s].id)
        .collect())
}

/// Attempts at exact rejection sampling before falling back to sequential
/// sampling over currently feasible choices.
const REJECTION_ATTEMPTS: usize = 10_000;

/// A uniformly random feasible assignment, deterministic per seed.
///
/// Every source draws independently from its choices; draws violating the
/// class's capacity rules are rejected and redrawn. Class III never rejects.
/// If no feasible draw appears within a fixed budget, sources are instead
/// placed one at a time (random order) among the choices still feasible,
/// which is no longer exactly uniform.
pub fn random_assignment(market: &Market, class: MatchingClass, seed: u64) -> Matching {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = market.num_sources();
    let opts: Vec<_> = (0..n).map(|s| choices(market, class, s)).collect();
    let mut load = vec![0u64; market.num_relays()];
    for _ in 0..REJECTION_ATTEMPTS {
        let mut dense: Dense = opts.iter().map(|o| o[rng.random_range(0..o.len())]).collect();
        if feasible(market, class, &dense, &mut load) {
            canonical_radios(market, class, &mut dense);
            return from_dense(market, &dense);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut dense: Dense = vec![None; n];
    for s in order {
        let ok: Vec<_> = opts[s]
            .iter()
            .copied()
            .filter(|o| {
                let mut trial = dense.clone();
                trial[s] = *o;
                feasible(market, class, &trial, &mut load)
            })
            .collect();
        dense[s] = ok[rng.random_range(0..ok.len())];
    }
    canonical_radios(market, class, &mut dense);
    from_dense(market, &dense)
}
