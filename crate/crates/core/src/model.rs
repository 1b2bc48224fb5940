//! Physical layer and task metric.
//!
//! Log-distance path loss feeds a Shannon-rate link model. Two-hop relaying
//! is half-duplex and a relay radio's time is split equally among the sources
//! sharing it. Satisfaction is the capped ratio of achieved to demanded rate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Free-space constant for frequency in Hz and distance in meters.
const FSPL_CONSTANT_DB: f64 = -147.55;

pub type Position = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DroneId(pub u32);

impl fmt::Display for DroneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Relay,
    Destination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drone {
    pub id: DroneId,
    pub role: Role,
    pub position: Position,
    pub tx_power_w: f64,
    /// Radios available for relaying. Meaningful for relays only.
    pub radio_count: u32,
    /// Relay resource in abstract units; `None` means unconstrained.
    pub resource_capacity: Option<u64>,
    /// Required throughput of the drone's task. Meaningful for sources only.
    pub demand_bps: f64,
    pub priority: u32,
}

impl Drone {
    pub fn source(id: u32, position: Position, tx_power_w: f64, demand_bps: f64) -> Self {
        Drone {
            id: DroneId(id),
            role: Role::Source,
            position,
            tx_power_w,
            radio_count: 0,
            resource_capacity: None,
            demand_bps,
            priority: 1,
        }
    }

    pub fn relay(id: u32, position: Position, tx_power_w: f64, radio_count: u32) -> Self {
        Drone {
            id: DroneId(id),
            role: Role::Relay,
            position,
            tx_power_w,
            radio_count,
            resource_capacity: None,
            demand_bps: 0.0,
            priority: 1,
        }
    }

    pub fn destination(id: u32, position: Position, tx_power_w: f64) -> Self {
        Drone {
            id: DroneId(id),
            role: Role::Destination,
            position,
            tx_power_w,
            radio_count: 0,
            resource_capacity: None,
            demand_bps: 0.0,
            priority: 1,
        }
    }

    pub fn with_capacity(mut self, units: u64) -> Self {
        self.resource_capacity = Some(units);
        self
    }

    /// Lists every violated invariant; empty when the drone is well formed.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.position.iter().any(|c| !c.is_finite()) {
            out.push(format!("drone {}: position must be finite", self.id));
        } else if self.position[2] < 0.0 {
            out.push(format!("drone {}: altitude must be >= 0", self.id));
        }
        if !(self.tx_power_w > 0.0 && self.tx_power_w.is_finite()) {
            out.push(format!("drone {}: tx_power_w must be > 0", self.id));
        }
        if self.priority == 0 {
            out.push(format!("drone {}: priority must be >= 1", self.id));
        }
        match self.role {
            Role::Relay if self.radio_count == 0 => {
                out.push(format!("relay {}: radio_count must be >= 1", self.id));
            }
            Role::Source if !(self.demand_bps > 0.0 && self.demand_bps.is_finite()) => {
                out.push(format!("source {}: demand_bps must be > 0", self.id));
            }
            _ => {}
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModel {
    pub carrier_freq_hz: f64,
    /// Bandwidth of a single radio.
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    #[serde(default = "default_exponent")]
    pub path_loss_exponent: f64,
    #[serde(default = "default_half_duplex")]
    pub half_duplex_factor: f64,
}

fn default_exponent() -> f64 {
    2.0
}

fn default_half_duplex() -> f64 {
    0.5
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            carrier_freq_hz: 2.4e9,
            bandwidth_hz: 1.0e6,
            noise_power_w: 1.0e-13,
            path_loss_exponent: default_exponent(),
            half_duplex_factor: default_half_duplex(),
        }
    }
}

impl LinkModel {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_power_w", self.noise_power_w),
            ("path_loss_exponent", self.path_loss_exponent),
            ("half_duplex_factor", self.half_duplex_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("link.{name} must be > 0"));
            }
        }
        if self.half_duplex_factor > 1.0 {
            out.push("link.half_duplex_factor must be <= 1".to_string());
        }
        out
    }
}

/// A satisfaction level in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Satisfaction(f64);

impl Satisfaction {
    pub const ZERO: Satisfaction = Satisfaction(0.0);

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn distance(a: &Position, b: &Position) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Log-distance path loss in dB. Reduces to free-space loss at exponent 2.
pub fn path_loss(distance_m: f64, link: &LinkModel) -> Result<f64> {
    if distance_m.is_nan() || distance_m <= 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    Ok(10.0 * link.path_loss_exponent * distance_m.log10()
        + 20.0 * link.carrier_freq_hz.log10()
        + FSPL_CONSTANT_DB)
}

/// Received SNR (linear) for a given transmit power and distance.
pub fn snr(tx_power_w: f64, distance_m: f64, link: &LinkModel) -> Result<f64> {
    let loss = path_loss(distance_m, link)?;
    Ok(tx_power_w * 10f64.powf(-loss / 10.0) / link.noise_power_w)
}

/// Shannon capacity of one radio at a given SNR.
pub fn shannon_rate(snr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + snr).log2()
}

pub fn rate_between(tx_power_w: f64, from: &Position, to: &Position, link: &LinkModel) -> Result<f64> {
    let d = distance(from, to);
    Ok(shannon_rate(snr(tx_power_w, d, link)?, link.bandwidth_hz))
}

/// Point-to-point rate from `tx` to `rx` in bits/s.
pub fn link_rate(tx: &Drone, rx: &Drone, link: &LinkModel) -> Result<f64> {
    if tx.id == rx.id {
        return Err(Error::DegenerateGeometry(format!(
            "drone {} cannot link to itself",
            tx.id
        )));
    }
    rate_between(tx.tx_power_w, &tx.position, &rx.position, link).map_err(|_| {
        Error::DegenerateGeometry(format!("drones {} and {} coincide", tx.id, rx.id))
    })
}

/// Half-duplex decode-and-forward rate given both hop rates.
pub fn two_hop_rate(first_hop: f64, second_hop: f64, sharers: u32, link: &LinkModel) -> f64 {
    debug_assert!(sharers >= 1);
    link.half_duplex_factor * first_hop.min(second_hop) / f64::from(sharers)
}

/// End-to-end rate of `src -> relay -> dst` when `sharers` sources split the
/// relay radio's time equally.
pub fn relay_rate(src: &Drone, relay: &Drone, dst: &Drone, sharers: u32, link: &LinkModel) -> Result<f64> {
    if sharers == 0 {
        return Err(Error::Configuration("sharers must be >= 1".into()));
    }
    let up = link_rate(src, relay, link)?;
    let down = link_rate(relay, dst, link)?;
    Ok(two_hop_rate(up, down, sharers, link))
}

pub fn satisfaction(achieved_bps: f64, demanded_bps: f64) -> Result<Satisfaction> {
    if demanded_bps.is_nan() || demanded_bps <= 0.0 {
        return Err(Error::InvalidDemand(demanded_bps));
    }
    Ok(Satisfaction((achieved_bps.max(0.0) / demanded_bps).min(1.0)))
}

/// Shortcut for the inner loops, where demand was validated up front.
#[inline]
pub(crate) fn capped_ratio(achieved_bps: f64, demanded_bps: f64) -> f64 {
    (achieved_bps / demanded_bps).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm() -> LinkModel {
        LinkModel::default()
    }

    #[test]
    fn free_space_loss_at_one_meter() {
        // 20*log10(2.4e9) - 147.55 = 187.604225 - 147.55
        let pl = path_loss(1.0, &lm()).unwrap();
        assert!((pl - 40.054225).abs() < 1e-5, "{pl}");
        assert!((pl - 40.05).abs() < 0.005);
    }

    #[test]
    fn doubling_distance_adds_six_db() {
        let a = path_loss(100.0, &lm()).unwrap();
        let b = path_loss(200.0, &lm()).unwrap();
        assert!((b - a - 20.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn exponent_scales_distance_term() {
        let link = LinkModel {
            path_loss_exponent: 3.0,
            ..lm()
        };
        let a = path_loss(10.0, &link).unwrap();
        let b = path_loss(100.0, &link).unwrap();
        assert!((b - a - 30.0).abs() < 1e-12);
    }

    #[test]
    fn zero_distance_is_degenerate() {
        assert!(matches!(path_loss(0.0, &lm()), Err(Error::DegenerateGeometry(_))));
        assert!(path_loss(-3.0, &lm()).is_err());
    }

    #[test]
    fn shannon_rates() {
        assert!((shannon_rate(1.0, 1e6) - 1e6).abs() < 1e-6);
        assert!((shannon_rate(3.0, 1e6) - 2e6).abs() < 1e-6);
        assert!(shannon_rate(0.0, 1e6).abs() < 1e-12);
    }

    #[test]
    fn rate_vanishes_with_power() {
        let a = Drone::source(1, [0.0, 0.0, 10.0], 1e-30, 1.0);
        let b = Drone::destination(2, [100.0, 0.0, 10.0], 1.0);
        let r = link_rate(&a, &b, &lm()).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn coincident_drones_are_rejected() {
        let a = Drone::source(1, [5.0, 5.0, 5.0], 0.1, 1.0);
        let b = Drone::relay(2, [5.0, 5.0, 5.0], 0.1, 1);
        assert!(matches!(link_rate(&a, &b, &lm()), Err(Error::DegenerateGeometry(_))));
        assert!(link_rate(&a, &a, &lm()).is_err());
    }

    #[test]
    fn rate_decreases_with_distance() {
        let a = Drone::source(1, [0.0, 0.0, 0.0], 0.1, 1.0);
        let near = Drone::relay(2, [100.0, 0.0, 0.0], 0.1, 1);
        let far = Drone::relay(3, [200.0, 0.0, 0.0], 0.1, 1);
        assert!(link_rate(&a, &near, &lm()).unwrap() > link_rate(&a, &far, &lm()).unwrap());
    }

    #[test]
    fn two_hop_contract() {
        let link = lm();
        assert!((two_hop_rate(4e6, 6e6, 1, &link) - 2e6).abs() < 1e-9);
        assert!((two_hop_rate(4e6, 6e6, 2, &link) - 1e6).abs() < 1e-9);
    }

    #[test]
    fn relay_rate_symmetric_geometry() {
        let link = lm();
        let s = Drone::source(1, [0.0, 0.0, 50.0], 0.1, 1.0);
        let r = Drone::relay(2, [500.0, 0.0, 50.0], 0.1, 1);
        let d = Drone::destination(3, [1000.0, 0.0, 50.0], 0.1);
        let fwd = relay_rate(&s, &r, &d, 1, &link).unwrap();
        let rev = relay_rate(&d, &r, &s, 1, &link).unwrap();
        assert_eq!(fwd, rev);
        assert!(relay_rate(&s, &r, &d, 0, &link).is_err());
    }

    #[test]
    fn satisfaction_caps() {
        assert_eq!(satisfaction(5.0, 5.0).unwrap().value(), 1.0);
        assert_eq!(satisfaction(0.0, 5.0).unwrap().value(), 0.0);
        assert_eq!(satisfaction(10.0, 5.0).unwrap().value(), 1.0);
        assert!(matches!(satisfaction(1.0, 0.0), Err(Error::InvalidDemand(_))));
    }

    #[test]
    fn drone_invariants() {
        let mut r = Drone::relay(1, [0.0, 0.0, -1.0], 0.1, 0);
        assert_eq!(r.violations().len(), 2);
        r.position[2] = 1.0;
        r.radio_count = 1;
        assert!(r.violations().is_empty());
        let s = Drone::source(2, [0.0, 0.0, 0.0], 0.1, 0.0);
        assert_eq!(s.violations().len(), 1);
    }
}
