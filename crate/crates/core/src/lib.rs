//! Shared public-transport journey planning.
//!
//! The pipeline has three phases. Every traveller first gets a fastest route on
//! the relaxed stop graph ([`planner`]). Best-response dynamics then let
//! travellers re-route one at a time under a group-discount cost until nobody
//! can improve ([`best_response`]). Finally the shared routes are split into
//! independent groups and parts ([`groups`]) and matched to a one-day
//! timetable ([`scheduler`]). [`metrics`] and [`harness`] evaluate the result.
//!
//! Cost arithmetic is generic over a [`Scalar`]; the aliases below pick the
//! usual instantiations.

pub mod best_response;
pub mod config;
pub mod error;
pub mod groups;
pub mod harness;
pub mod metrics;
pub mod planner;
pub mod scalar;
pub mod scheduler;
pub mod transit;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Exact rational cost, used where the discount formula must hold without rounding.
pub type Rational = num_rational::Ratio<i64>;

pub type CostModel = best_response::SharedCostModel<f64>;
pub type ExactCostModel = best_response::SharedCostModel<Rational>;
pub type Plan = planner::Plan<f64>;
pub type ExactPlan = planner::Plan<Rational>;
pub type JointPlan = best_response::JointPlan<f64>;
pub type ExactJointPlan = best_response::JointPlan<Rational>;
pub type BrOutcome = best_response::BrOutcome<f64>;
