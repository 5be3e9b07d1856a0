//! Economic warehouse lot scheduling.
//!
//! Commodities share one warehouse of fixed capacity. Each commodity pays a
//! setup cost per order and a holding cost per unit time, and its inventory
//! occupies space. The crate evaluates cyclic replenishment policies exactly,
//! solves the stationary-interval relaxation, builds the pairwise
//! synchronization gadgets and power-of-two rounding used by the sub-2
//! construction, and glues everything into one pipeline.

pub mod eoq;
pub mod error;
pub mod generate;
pub mod gadget;
pub mod model;
pub mod pipeline;
pub mod po2sync;
pub mod rational;
pub mod relax;
pub mod rng;

pub use eoq::{capped_eoq, EoqParams};
pub use error::{Error, Result};
pub use model::{
    check_capacity_feasible, evaluate_policy, hyperperiod, sosi_to_cyclic, Commodity, CommodityId, CyclicPolicy,
    CyclicSchedule, Evaluator, Instance, Order, PolicyCertificate, SosiEntry, SosiVector,
};
pub use rational::Rational;
