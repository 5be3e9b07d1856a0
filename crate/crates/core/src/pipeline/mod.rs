//! The sub-2 construction end to end.
//!
//! A benchmark policy (ideally near-optimal, otherwise the classical
//! 2-approximation) fixes volume classes. Depending on how its average space
//! splits between sparse and dense classes, one of three constructions is
//! run, and the glued policy is shrunk until it fits the warehouse.

mod bmatching;
mod classify;
mod enumerate;
mod mimic;
mod run;
mod suffix_dense;

pub use bmatching::{bmatching_brute_force, bmatching_min_cost, BMatching, BMatchingProblem};
pub use classify::{classify_volumes, round_up, ClassKind, ClassStats, VolumeClassification};
pub use enumerate::{enumerate_sub2, predicted_options, EnumerateOutcome, ENUMERATION_CAP};
pub use mimic::{class_cap, mimicking_partition, mimicking_partition_with, ClassTarget, MimickingPartition};
pub use run::{
    analytic_factor, run_sub2, scale_policy, BenchmarkSource, BenchmarkSummary, PartReport, PipelineReport,
    ScaleReport, Scenario,
};
pub use suffix_dense::{build_suffix_dense_policy, lemma5_space_factor, SuffixDenseOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Evaluator;
use crate::po2sync::Po2Config;

/// Threshold between the easy and difficult scenarios.
pub const DELTA: f64 = 17.0 / 10000.0;

/// Largest class size still counted as sparse: `100 ln(1/eps) / eps^4`.
pub fn default_sparse_threshold(eps: f64) -> f64 {
    100.0 * (1.0 / eps).ln() / eps.powi(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixSolver {
    /// Relaxation with twice the capacity, every interval halved.
    RelaxHalve,
    /// Search over commensurate intervals and phases; at most three commodities.
    Exhaustive,
}

#[derive(Debug, Clone)]
pub struct Sub2Config {
    pub eps: f64,
    pub delta: f64,
    /// `None` uses `default_sparse_threshold(eps)`.
    pub sparse_threshold: Option<f64>,
    /// Accept `eps >= 1/10`, with a warning in the report.
    pub allow_large_eps: bool,
    /// Group count and size overrides for the rounding step.
    pub q: Option<usize>,
    pub min_group: Option<usize>,
    pub prefix_solver: PrefixSolver,
    pub evaluator: Evaluator,
    pub seed: u64,
}

impl Sub2Config {
    pub fn analysis(eps: f64) -> Self {
        Sub2Config {
            eps,
            delta: DELTA,
            sparse_threshold: None,
            allow_large_eps: false,
            q: None,
            min_group: None,
            prefix_solver: PrefixSolver::RelaxHalve,
            evaluator: Evaluator::default(),
            seed: crate::rng::DEFAULT_SEED,
        }
    }

    /// `eps = 0.3` with dense classes from 1000 commodities up, so that a
    /// few thousand commodities exercise every branch.
    pub fn desk() -> Self {
        Sub2Config { sparse_threshold: Some(1000.0), allow_large_eps: true, ..Sub2Config::analysis(0.3) }
    }

    pub fn sparse_threshold(&self) -> f64 {
        self.sparse_threshold.unwrap_or_else(|| default_sparse_threshold(self.eps))
    }

    pub fn po2(&self) -> Po2Config {
        Po2Config { eps: self.eps, q: self.q, min_group: self.min_group }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {}", self.eps)));
        }
        if self.eps >= 0.1 && !self.allow_large_eps {
            return Err(Error::InvalidParameter(format!(
                "epsilon {} is outside (0, 1/10); pass the large-epsilon override to run anyway",
                self.eps
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1/4), got {}", self.delta)));
        }
        if let Some(t) = self.sparse_threshold {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidParameter(format!("sparse threshold must be nonnegative, got {t}")));
            }
        }
        Ok(())
    }
}

impl Sub2Config {
    pub fn with_eps(self, eps: f64) -> Self {
        Sub2Config { eps, ..self }
    }
}
