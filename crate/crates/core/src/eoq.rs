//! The single-commodity economic order quantity model `C(T) = K/T + H T`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EoqParams {
    pub k: f64,
    pub h: f64,
}

impl EoqParams {
    pub fn new(k: f64, h: f64) -> Self {
        EoqParams { k, h }
    }

    /// Long-run cost of ordering every `t` time units.
    pub fn cost(&self, t: f64) -> f64 {
        self.k / t + self.h * t
    }

    pub fn optimal_interval(&self) -> f64 {
        (self.k / self.h).sqrt()
    }

    pub fn optimal_cost(&self) -> f64 {
        2.0 * (self.k * self.h).sqrt()
    }

    /// Best interval not exceeding `cap`. The cost is convex with its
    /// minimum at the unconstrained optimum, so the answer is a clamp.
    pub fn capped(&self, cap: f64) -> f64 {
        self.optimal_interval().min(cap)
    }
}

pub fn capped_eoq(p: &EoqParams, cap: f64) -> f64 {
    p.capped(cap)
}

/// `C(a T) <= max(a, 1/a) C(T)`.
pub fn scaling_bound(alpha: f64) -> f64 {
    alpha.max(1.0 / alpha)
}

/// `C(a T) + C(T/a) = (a^2 + 1)/a * C(T)`.
pub fn symmetric_sum_factor(alpha: f64) -> f64 {
    (alpha * alpha + 1.0) / alpha
}
