//! Exact 0/1 knapsack used by relays choosing which applicants to hold.

/// An applicant as seen by the relay: score to maximize, units it consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Item {
    pub value: f64,
    pub weight: u64,
}

/// Relative slack for treating two subset values as equal.
const VALUE_TOLERANCE: f64 = 1e-12;

/// Returns the indices of the value-maximizing subset with total weight at
/// most `capacity`, ascending. `items` must be ordered by preference: on ties
/// the subset that keeps earlier items wins.
pub fn best_subset(items: &[Item], capacity: u64) -> Vec<usize> {
    let total: u64 = items.iter().map(|i| i.weight).sum();
    if total <= capacity {
        return (0..items.len()).collect();
    }
    let cap = capacity as usize;
    let n = items.len();
    // best[i][w]: best value using items i.. with weight budget w
    let mut best = vec![vec![0.0f64; cap + 1]; n + 1];
    let mut take = vec![vec![false; cap + 1]; n];
    for i in (0..n).rev() {
        let Item { value, weight } = items[i];
        for w in 0..=cap {
            let skip = best[i + 1][w];
            let mut here = skip;
            if weight as usize <= w {
                let with = value + best[i + 1][w - weight as usize];
                if with >= skip - VALUE_TOLERANCE * skip.abs().max(1.0) {
                    here = with;
                    take[i][w] = true;
                }
            }
            best[i][w] = here;
        }
    }
    let mut chosen = Vec::new();
    let mut w = cap;
    for i in 0..n {
        if take[i][w] {
            chosen.push(i);
            w -= items[i].weight as usize;
        }
    }
    chosen
}

/// Value of the best subset under `capacity`.
pub fn best_value(items: &[Item], capacity: u64) -> f64 {
    best_subset(items, capacity).iter().map(|&i| items[i].value).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(items: &[Item], cap: u64) -> f64 {
        let mut best = 0.0f64;
        for mask in 0u32..(1 << items.len()) {
            let (mut v, mut w) = (0.0, 0);
            for (i, it) in items.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    v += it.value;
                    w += it.weight;
                }
            }
            if w <= cap {
                best = best.max(v);
            }
        }
        best
    }

    #[test]
    fn complementary_pair_beats_top_ranked() {
        // A (listed first) takes 7 units, B 6 and C 4; capacity 10.
        let items = [
            Item { value: 0.6, weight: 7 },
            Item { value: 1.0, weight: 6 },
            Item { value: 1.0, weight: 4 },
        ];
        assert_eq!(best_subset(&items, 10), vec![1, 2]);
        assert!((best_value(&items, 10) - brute(&items, 10)).abs() < 1e-12);
        // same outcome when values are per-unit score times units
        let scaled: Vec<Item> = items.iter().map(|i| Item { value: i.value * i.weight as f64, ..*i }).collect();
        assert_eq!(best_subset(&scaled, 10), vec![1, 2]);
    }

    #[test]
    fn ample_capacity_takes_everything() {
        let items = [Item { value: 1.0, weight: 3 }, Item { value: 2.0, weight: 5 }];
        assert_eq!(best_subset(&items, 8), vec![0, 1]);
        assert_eq!(best_subset(&items, 100), vec![0, 1]);
    }

    #[test]
    fn zero_capacity_takes_nothing() {
        let items = [Item { value: 1.0, weight: 1 }];
        assert!(best_subset(&items, 0).is_empty());
    }

    #[test]
    fn ties_keep_earlier_items() {
        let items = [Item { value: 2.0, weight: 2 }, Item { value: 2.0, weight: 2 }];
        assert_eq!(best_subset(&items, 2), vec![0]);
    }

    #[test]
    fn agrees_with_enumeration() {
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..300 {
            let n = (next() % 8) as usize;
            let items: Vec<Item> = (0..n)
                .map(|_| Item {
                    value: (next() % 1000) as f64 / 7.0,
                    weight: 1 + next() % 9,
                })
                .collect();
            let cap = next() % 25;
            let got = best_subset(&items, cap);
            let w: u64 = got.iter().map(|&i| items[i].weight).sum();
            assert!(w <= cap);
            assert!((best_value(&items, cap) - brute(&items, cap)).abs() < 1e-9);
        }
    }
}
