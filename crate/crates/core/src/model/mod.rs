//! Instances, cyclic replenishment schedules and their exact evaluation.

mod evaluate;
mod io;
mod schedule;

pub use evaluate::{
    check_capacity_feasible, evaluate_policy, feasibility_of, hyperperiod, joint_peak, trace_policy, CommodityStats,
    Evaluator, FeasibilityReport, PeakBound, PeakWitness, PolicyCertificate, TraceRow,
};
pub use io::{write_trace_csv, InstanceFile, PolicyFile};
pub(crate) use schedule::sosi_schedule;
pub use schedule::{sosi_to_cyclic, CyclicPolicy, CyclicSchedule, Order, SosiEntry, SosiVector};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommodityId(pub u32);

impl fmt::Display for CommodityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One commodity: setup cost `K`, holding cost rate `H`, space per unit `gamma`.
///
/// Demand rates are normalized to one, so cycle lengths and order
/// quantities coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Commodity {
    pub id: CommodityId,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub gamma: f64,
}

impl Commodity {
    pub fn new(id: u32, k: f64, h: f64, gamma: f64) -> Self {
        Commodity { id: CommodityId(id), k, h, gamma }
    }

    pub fn eoq(&self) -> crate::eoq::EoqParams {
        crate::eoq::EoqParams { k: self.k, h: self.h }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub capacity: f64,
    pub commodities: Vec<Commodity>,
}

impl Instance {
    pub fn new(capacity: f64, commodities: Vec<Commodity>) -> Result<Self> {
        let inst = Instance { capacity, commodities };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(Error::InvalidInstance(format!("capacity must be positive, got {}", self.capacity)));
        }
        if self.commodities.is_empty() {
            return Err(Error::InvalidInstance("no commodities".into()));
        }
        let mut seen = BTreeSet::new();
        for c in &self.commodities {
            for (name, v) in [("K", c.k), ("H", c.h), ("gamma", c.gamma)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidInstance(format!("commodity {}: {name} must be positive, got {v}", c.id)));
                }
            }
            if !seen.insert(c.id) {
                return Err(Error::InvalidInstance(format!("duplicate commodity id {}", c.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.commodities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commodities.is_empty()
    }

    pub fn get(&self, id: CommodityId) -> Option<&Commodity> {
        self.commodities.iter().find(|c| c.id == id)
    }

    /// Sub-instance on the given ids, same capacity.
    pub fn restrict(&self, ids: &BTreeSet<CommodityId>) -> Instance {
        Instance {
            capacity: self.capacity,
            commodities: self.commodities.iter().filter(|c| ids.contains(&c.id)).copied().collect(),
        }
    }
}
