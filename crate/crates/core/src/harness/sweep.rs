//! Class II against fixed-quota Class I over a range of network sizes.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::derive_seed;
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::matching::{global_satisfaction, match_class1, match_class2, MatchingClass};
use crate::model::Role;
use crate::preferences::Market;

pub const SWEEP_ENGINES: [MatchingClass; 2] = [MatchingClass::Class1, MatchingClass::Class2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sources: usize,
    pub engine: MatchingClass,
    pub mean_satisfaction: f64,
    /// Sample standard deviation; zero for a single replication.
    pub std_satisfaction: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, sources: usize, engine: MatchingClass) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.sources == sources && r.engine == engine)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sources,engine,mean_satisfaction,std_satisfaction,replications\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.12},{:.12},{}",
                r.sources, r.engine, r.mean_satisfaction, r.std_satisfaction, r.replications
            );
        }
        out
    }
}

/// The template with `sources` generated sources and a per-cell seed.
pub fn sweep_instance(template: &Scenario, sources: usize, replication: usize) -> Result<Scenario> {
    let groups: Vec<usize> = (0..template.generate.len())
        .filter(|&i| template.generate[i].role == Role::Source)
        .collect();
    let [group] = groups[..] else {
        return Err(Error::Configuration(
            "a sweep template needs exactly one generated source group".into(),
        ));
    };
    let mut s = template.clone();
    s.generate[group].count = sources;
    s.seed = derive_seed(template.seed, sources as u64, replication as u64);
    s.name = format!("{}-n{sources}-r{replication}", template.name);
    Ok(s)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Global satisfaction of both engines on one replication's market.
pub fn sweep_cell(template: &Scenario, sources: usize, replication: usize) -> Result<[f64; 2]> {
    let scenario = sweep_instance(template, sources, replication)?;
    let market = Market::build(&scenario.market_spec()?)?;
    let one = global_satisfaction(&market, MatchingClass::Class1, &match_class1(&market))?.value();
    let two = global_satisfaction(&market, MatchingClass::Class2, &match_class2(&market))?.value();
    Ok([one, two])
}

/// Runs every (size, replication) cell, in parallel, and aggregates per
/// size and engine. Output order is (size as given, Class I, Class II).
pub fn sweep(template: &Scenario, sizes: &[usize], replications: usize) -> Result<SweepTable> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Configuration("sizes must be nonempty and positive".into()));
    }
    if replications == 0 {
        return Err(Error::Configuration("replications must be >= 1".into()));
    }
    template.validate()?;
    let cells: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&n| (0..replications).map(move |r| (n, r)))
        .collect();
    let results: Vec<[f64; 2]> = cells
        .par_iter()
        .map(|&(n, r)| sweep_cell(template, n, r).map_err(|e| e.in_scenario(&template.name)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        let chunk = &results[i * replications..(i + 1) * replications];
        for (e, engine) in SWEEP_ENGINES.iter().enumerate() {
            let xs: Vec<f64> = chunk.iter().map(|c| c[e]).collect();
            let (mean, std) = mean_std(&xs);
            rows.push(SweepRow {
                sources: n,
                engine: *engine,
                mean_satisfaction: mean,
                std_satisfaction: std,
                replications,
            });
        }
    }
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }
}
