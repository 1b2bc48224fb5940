//! Relay selection for multi-UAV networks as a two-sided matching game.
//!
//! Source drones pick relay drones to reach their destinations. Depending on
//! how relay resources combine, the market falls into one of three classes,
//! each with its own engine in [`matching`]. [`multilevel`] chains matchings
//! across relay tiers, [`dynamics`] handles mobility and churn, [`baselines`]
//! provides the exhaustive optimum and selfish best-response for comparison,
//! and [`harness`] runs seeded experiments from scenario files.

pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod matching;
pub mod model;
pub mod multilevel;
pub mod preferences;

pub use error::{Error, Result};
pub use matching::{
    global_satisfaction, match_class1, match_class2, match_class3, solve, validate, verify_stability, Certificate,
    Engine, EngineConfig, Matching, MatchingClass, Slot,
};
pub use model::{Drone, DroneId, LinkModel, Role, Satisfaction};
pub use preferences::{Market, MarketSpec, PreferenceList};
