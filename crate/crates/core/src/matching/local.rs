//! Class III: radio sharing without substitutability.
//!
//! A cold start places every source on the radio that maximizes its own
//! shared rate. After that, a source only moves (or swaps with another
//! source) when global satisfaction rises by more than
//! [`IMPROVEMENT_TOLERANCE`]. Scan order is
//! fixed: sources by id, then swap pairs lexicographically.

use super::{source_satisfaction, total_satisfaction, Dense, Layout, MatchingClass};
use crate::preferences::Market;

/// Minimum gain in global satisfaction for a move or swap to count.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-9;

const CLASS: MatchingClass = MatchingClass::Class3;

#[derive(Debug, Clone)]
pub(crate) struct LocalSearch {
    assign: Dense,
    counts: Vec<u32>,
    layout: Layout,
    placed: bool,
    initial: Option<f64>,
    steps: Vec<(f64, f64)>,
}

/// An improving step found by a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Improvement {
    Move { source: usize, to: Option<(usize, usize)>, gain: f64 },
    Swap { first: usize, second: usize, gain: f64 },
}

impl LocalSearch {
    pub(crate) fn cold(market: &Market) -> Self {
        let layout = Layout::new(market);
        let n = market.num_sources();
        LocalSearch {
            assign: vec![None; n],
            counts: vec![0; layout.total],
            layout,
            placed: false,
            initial: None,
            steps: Vec::new(),
        }
    }

    pub(crate) fn warm(market: &Market, assign: Dense) -> Self {
        let layout = Layout::new(market);
        let counts = layout.counts(&assign);
        LocalSearch {
            placed: true,
            assign,
            counts,
            layout,
            initial: None,
            steps: Vec::new(),
        }
    }

    pub(crate) fn assignment(&self) -> &[Option<(usize, usize)>] {
        &self.assign
    }

    pub(crate) fn initial_value(&self) -> Option<f64> {
        self.initial
    }

    pub(crate) fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    /// One pass: greedy placement on the first pass of a cold start, best
    /// move per source otherwise, then swaps.
    pub(crate) fn sweep(&mut self, market: &Market) -> bool {
        let n = self.assign.len();
        let mut changed = false;
        if !self.placed {
            for s in 0..n {
                if let Some(slot) = greedy_slot(market, &self.layout, &self.counts, s) {
                    self.set(s, Some(slot));
                    changed = true;
                }
            }
            self.placed = true;
            self.initial = Some(self.global(market));
        } else {
            for s in 0..n {
                if let Some(Improvement::Move { to, .. }) = best_move(market, &self.layout, &self.assign, &mut self.counts, s) {
                    let before = self.global(market);
                    self.set(s, to);
                    self.steps.push((before, self.global(market)));
                    changed = true;
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if let Some(gain) = swap_gain(market, &self.layout, &self.assign, &self.counts, i, j) {
                    if gain > IMPROVEMENT_TOLERANCE {
                        let before = self.global(market);
                        self.assign.swap(i, j);
                        self.steps.push((before, self.global(market)));
                        changed = true;
                    }
                }
            }
        }
        changed
    }

    fn set(&mut self, s: usize, slot: Option<(usize, usize)>) {
        if let Some((r, k)) = self.assign[s] {
            self.counts[self.layout.flat(r, k)] -= 1;
        }
        if let Some((r, k)) = slot {
            self.counts[self.layout.flat(r, k)] += 1;
        }
        self.assign[s] = slot;
    }

    fn global(&self, market: &Market) -> f64 {
        mean(market, &self.assign, &self.counts, &self.layout)
    }
}

fn mean(market: &Market, assign: &[Option<(usize, usize)>], counts: &[u32], layout: &Layout) -> f64 {
    if assign.is_empty() {
        return 0.0;
    }
    total_satisfaction(market, CLASS, assign, counts, layout) / assign.len() as f64
}

/// Radios `s` may occupy, in relay-id then radio order.
fn options(market: &Market, s: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..market.num_relays())
        .filter(move |&r| market.mutually_acceptable(s, r))
        .flat_map(move |r| (0..market.radios_at(r)).map(move |k| (r, k)))
}

/// The radio maximizing `s`'s own shared rate, if it beats the direct link.
fn greedy_slot(market: &Market, layout: &Layout, counts: &[u32], s: usize) -> Option<(usize, usize)> {
    let mut best: Option<((usize, usize), f64)> = None;
    for (r, k) in options(market, s) {
        let rate = market.relay_rate_at(s, r) / f64::from(counts[layout.flat(r, k)] + 1);
        if best.is_none_or(|(_, b)| rate > b) {
            best = Some(((r, k), rate));
        }
    }
    best.filter(|(_, rate)| *rate > market.direct_rate_at(s)).map(|(slot, _)| slot)
}

fn best_move(
    market: &Market,
    layout: &Layout,
    assign: &[Option<(usize, usize)>],
    counts: &mut [u32],
    s: usize,
) -> Option<Improvement> {
    let mut scratch = assign.to_vec();
    let base = mean(market, assign, counts, layout);
    let current = assign[s];
    let mut best: Option<(Option<(usize, usize)>, f64)> = None;
    let candidates = std::iter::once(None).chain(options(market, s).map(Some));
    for target in candidates {
        if target == current {
            continue;
        }
        shift(layout, counts, current, target);
        scratch[s] = target;
        let gain = mean(market, &scratch, counts, layout) - base;
        shift(layout, counts, target, current);
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((target, gain));
        }
    }
    best.filter(|(_, g)| *g > IMPROVEMENT_TOLERANCE)
        .map(|(to, gain)| Improvement::Move { source: s, to, gain })
}

fn shift(layout: &Layout, counts: &mut [u32], from: Option<(usize, usize)>, to: Option<(usize, usize)>) {
    if let Some((r, k)) = from {
        counts[layout.flat(r, k)] -= 1;
    }
    if let Some((r, k)) = to {
        counts[layout.flat(r, k)] += 1;
    }
}

/// Gain from exchanging the positions of `i` and `j`, if the exchange is
/// allowed. Radio occupancy is unchanged by a swap.
fn swap_gain(
    market: &Market,
    layout: &Layout,
    assign: &[Option<(usize, usize)>],
    counts: &[u32],
    i: usize,
    j: usize,
) -> Option<f64> {
    let (pi, pj) = (assign[i], assign[j]);
    if pi == pj {
        return None;
    }
    let allowed = |s: usize, slot: Option<(usize, usize)>| slot.is_none_or(|(r, _)| market.mutually_acceptable(s, r));
    if !allowed(i, pj) || !allowed(j, pi) {
        return None;
    }
    let term = |s: usize, slot: Option<(usize, usize)>| {
        let sharers = slot.map_or(1, |(r, k)| counts[layout.flat(r, k)]);
        source_satisfaction(market, CLASS, s, slot, sharers)
    };
    let before = term(i, pi) + term(j, pj);
    let after = term(i, pj) + term(j, pi);
    Some((after - before) / assign.len() as f64)
}

/// Every improving single move and swap from `assign`.
pub(crate) fn improvements(market: &Market, assign: &[Option<(usize, usize)>]) -> Vec<Improvement> {
    let layout = Layout::new(market);
    let mut counts = layout.counts(assign);
    let base = mean(market, assign, &counts, &layout);
    let mut scratch = assign.to_vec();
    let mut out = Vec::new();
    for s in 0..assign.len() {
        let current = assign[s];
        for target in std::iter::once(None).chain(options(market, s).map(Some)) {
            if target == current {
                continue;
            }
            shift(&layout, &mut counts, current, target);
            scratch[s] = target;
            let gain = mean(market, &scratch, &counts, &layout) - base;
            shift(&layout, &mut counts, target, current);
            scratch[s] = current;
            if gain > IMPROVEMENT_TOLERANCE {
                out.push(Improvement::Move { source: s, to: target, gain });
            }
        }
    }
    for i in 0..assign.len() {
        for j in (i + 1)..assign.len() {
            if let Some(gain) = swap_gain(market, &layout, assign, &counts, i, j) {
                if gain > IMPROVEMENT_TOLERANCE {
                    out.push(Improvement::Swap { first: i, second: j, gain });
                }
            }
        }
    }
    out
}
