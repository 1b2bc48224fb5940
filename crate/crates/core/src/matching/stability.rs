use serde::{Deserialize, Serialize};

use super::knapsack::{self, Item};
use super::local::{improvements, Improvement};
use super::{validate_dense, Matching, MatchingClass, Slot};
use crate::error::Result;
use crate::model::DroneId;
use crate::preferences::Market;

/// Evidence that a matching is not stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// Source and relay both strictly prefer each other to what they have.
    BlockingPair { source: DroneId, relay: DroneId },
    /// Moving one source raises global satisfaction.
    Move { source: DroneId, to: Option<Slot>, gain: f64 },
    /// Exchanging two sources' positions raises global satisfaction.
    Swap { first: DroneId, second: DroneId, gain: f64 },
}

/// Lists every blocking pair (Class I/II) or improving move and swap
/// (Class III). An empty list means the matching is stable.
pub fn verify_stability(market: &Market, matching: &Matching, class: MatchingClass) -> Result<Vec<Certificate>> {
    let dense = validate_dense(market, matching, class)?;
    let mut out = Vec::new();
    if class == MatchingClass::Class3 {
        for imp in improvements(market, &dense) {
            out.push(match imp {
                Improvement::Move { source, to, gain } => Certificate::Move {
                    source: market.sources()[source].id,
                    to: to.map(|(r, k)| Slot {
                        relay: market.relays()[r].id,
                        radio: k as u32,
                    }),
                    gain,
                },
                Improvement::Swap { first, second, gain } => Certificate::Swap {
                    first: market.sources()[first].id,
                    second: market.sources()[second].id,
                    gain,
                },
            });
        }
        return Ok(out);
    }

    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); market.num_relays()];
    for (s, slot) in dense.iter().enumerate() {
        if let Some((r, _)) = slot {
            holders[*r].push(s);
        }
    }
    for (s, slot) in dense.iter().enumerate() {
        let current = slot.map(|(r, _)| r);
        for (r, held) in holders.iter().enumerate() {
            if Some(r) == current || !market.mutually_acceptable(s, r) {
                continue;
            }
            let source_wants = match current {
                None => true,
                Some(c) => market.source_rank_at(s, r) < market.source_rank_at(s, c),
            };
            if !source_wants {
                continue;
            }
            let relay_wants = match class {
                MatchingClass::Class1 => relay_prefers_by_rank(market, r, s, held),
                MatchingClass::Class2 => relay_prefers_by_packing(market, r, s, held),
                MatchingClass::Class3 => unreachable!(),
            };
            if relay_wants {
                out.push(Certificate::BlockingPair {
                    source: market.sources()[s].id,
                    relay: market.relays()[r].id,
                });
            }
        }
    }
    Ok(out)
}

fn relay_prefers_by_rank(market: &Market, r: usize, s: usize, holders: &[usize]) -> bool {
    if holders.len() < market.quota_at(r) {
        return true;
    }
    let worst = holders.iter().filter_map(|&h| market.relay_rank_at(r, h)).max();
    match (market.relay_rank_at(r, s), worst) {
        (Some(rs), Some(w)) => rs < w,
        _ => false,
    }
}

/// `r` would take `s` if some subset of its holders plus `s` fits the
/// resource and scores strictly higher than the holders do now.
fn relay_prefers_by_packing(market: &Market, r: usize, s: usize, holders: &[usize]) -> bool {
    let cap = market.capacity_at(r).unwrap_or(u64::MAX);
    let need = market.units_at(s);
    if need > cap {
        return false;
    }
    let mut sorted = holders.to_vec();
    sorted.sort_by_key(|&h| market.relay_rank_at(r, h));
    let items: Vec<Item> = sorted
        .iter()
        .map(|&h| Item {
            value: market.relay_score_at(r, h),
            weight: market.units_at(h),
        })
        .collect();
    let current: f64 = items.iter().map(|i| i.value).sum();
    let with_s = market.relay_score_at(r, s) + knapsack::best_value(&items, cap - need);
    with_s > current + 1e-12 * current.abs().max(1.0)
}
