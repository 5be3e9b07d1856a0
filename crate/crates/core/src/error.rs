use thiserror::Error;

use crate::model::CommodityId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid schedule for commodity {id}: {reason}")]
    InvalidSchedule { id: CommodityId, reason: String },

    #[error("commodity {id} has negative inventory at t = {time}")]
    NegativeInventory { id: CommodityId, time: f64 },

    #[error("policy has no schedule for commodity {0}")]
    MissingSchedule(CommodityId),

    #[error("value {0} is not a finite number")]
    NonFinite(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("case {case} requires T_A/T_B = {expected}, got {got}")]
    GadgetCaseMismatch { case: u8, expected: String, got: String },

    #[error("gadget cannot be applied: {0}")]
    GadgetUnsupported(String),

    #[error("enumeration needs {predicted} options, over the cap of {cap}")]
    EnumerationTooLarge { predicted: f64, cap: f64 },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
