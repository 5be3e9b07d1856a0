//! Synthetic instances, heavy classes and a capacity-feasible benchmark
//! policy to stand in for an unknown optimum.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{sosi_schedule, Commodity, CommodityId, CyclicPolicy, Evaluator, Instance};
use crate::po2sync::{ClassIndex, ClassMember, DenseClass};
use crate::relax::solve_relax_exact;
use crate::rng::Streams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Independent uniform parameters.
    Uniform,
    /// Thousands of near-identical commodities under a tight warehouse.
    DenseHeavy,
    /// Many tiny near-identical commodities next to a few large ones.
    TwoScale,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Profile::Uniform),
            "dense-heavy" => Ok(Profile::DenseHeavy),
            "two-scale" => Ok(Profile::TwoScale),
            other => Err(Error::InvalidParameter(format!("unknown profile {other:?}"))),
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Profile::Uniform => "uniform",
            Profile::DenseHeavy => "dense-heavy",
            Profile::TwoScale => "two-scale",
        })
    }
}

fn jitter<R: Rng>(rng: &mut R, x: f64, rel: f64) -> f64 {
    x * rng.random_range(1.0 - rel..=1.0 + rel)
}

/// Capacity as a fraction of the space the unconstrained optima would need.
fn with_tight_capacity(cs: Vec<Commodity>, fraction: f64) -> Result<Instance> {
    let free: f64 = cs.iter().map(|c| c.gamma * c.eoq().optimal_interval()).sum();
    Instance::new(fraction * free, cs)
}

pub fn generate(profile: Profile, n: usize, seed: u64) -> Result<Instance> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one commodity".into()));
    }
    let mut rng = Streams::new(seed).stream(profile as u64);
    let cs: Vec<Commodity> = match profile {
        Profile::Uniform => (0..n)
            .map(|i| {
                Commodity::new(i as u32, rng.random_range(1.0..100.0), rng.random_range(0.5..5.0), rng.random_range(0.5..2.0))
            })
            .collect(),
        Profile::DenseHeavy => (0..n)
            .map(|i| Commodity::new(i as u32, jitter(&mut rng, 10.0, 0.05), jitter(&mut rng, 1.0, 0.05), jitter(&mut rng, 1.0, 0.05)))
            .collect(),
        Profile::TwoScale => {
            let big = (n / 50).max(1);
            (0..n)
                .map(|i| {
                    if i < big {
                        Commodity::new(i as u32, rng.random_range(10.0..100.0), rng.random_range(0.5..2.0), rng.random_range(5.0..20.0))
                    } else {
                        Commodity::new(i as u32, jitter(&mut rng, 1.0, 0.05), jitter(&mut rng, 1.0, 0.05), jitter(&mut rng, 0.02, 0.05))
                    }
                })
                .collect()
        }
    };
    let fraction = match profile {
        Profile::Uniform => 0.3,
        Profile::DenseHeavy => 0.1,
        Profile::TwoScale => 0.25,
    };
    with_tight_capacity(cs, fraction)
}

/// A class with `cap` as its cap: heavy members have `gamma T_hat / 2` in
/// `[0.8, 1] cap`, light ones in `[0.2, 0.7] cap`. Space coefficients are
/// log-uniform over `[1, 32]`, so rounded intervals of near pairs differ by
/// up to about `2^6` and every gadget case occurs.
pub fn heavy_class(n_heavy: usize, n_light: usize, cap: f64, seed: u64) -> DenseClass {
    let mut rng = Streams::new(seed).stream(7);
    let members = (0..n_heavy + n_light)
        .map(|i| {
            let gamma = (rng.random_range(0.0..5.0f64)).exp2();
            let v: f64 = if i < n_heavy { rng.random_range(0.8..1.5) } else { rng.random_range(0.2..0.7) };
            let t_star = 2.0 * cap * v / gamma;
            let h = rng.random_range(0.5..2.0);
            let c = Commodity::new(i as u32, h * t_star * t_star, h, gamma);
            ClassMember { commodity: c, t_hat: c.eoq().capped(2.0 * cap / gamma) }
        })
        .collect();
    DenseClass { index: ClassIndex::Finite(1), cap, members }
}

/// Capacity-feasible cyclic policy with high average space use.
///
/// Relaxed intervals are rounded down onto one power-of-two ladder (at most
/// `2^max_levels` apart), so all cycles share a common period; phases are
/// spread evenly among commodities on the same rung, and the whole policy is
/// finally stretched or shrunk until its exact peak equals the capacity.
pub fn benchmark_policy(instance: &Instance, max_levels: u32) -> Result<CyclicPolicy> {
    let relax = solve_relax_exact(instance, 2.0 * instance.capacity)?;
    let ts: Vec<(CommodityId, f64)> =
        instance.commodities.iter().map(|c| (c.id, relax.intervals.entries[&c.id].interval)).collect();
    let t_max = ts.iter().map(|p| p.1).fold(0.0, f64::max);
    let t_min = ts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let levels = max_levels.min(40) as i32;
    let base = t_min.max(t_max * 2f64.powi(-levels));
    let mut rungs: BTreeMap<i32, Vec<CommodityId>> = BTreeMap::new();
    for &(id, t) in &ts {
        let k = if t <= base { 0 } else { (t / base).log2().floor() as i32 };
        rungs.entry(k.min(levels)).or_default().push(id);
    }
    let build = |scale: f64| -> Result<CyclicPolicy> {
        let mut p = CyclicPolicy::new();
        let b = base * scale;
        for (k, ids) in &rungs {
            let t = b * 2f64.powi(*k);
            for (j, id) in ids.iter().enumerate() {
                let phase = t * j as f64 / ids.len() as f64;
                p.insert(*id, sosi_schedule(*id, t, phase)?);
            }
        }
        Ok(p)
    };
    let ev = Evaluator { sample_grid: 0, event_budget: 50_000_000 };
    let first = build(1.0)?;
    let peak = ev.evaluate(instance, &first)?.peak_space();
    let scaled = build(instance.capacity / peak)?;
    // Rounding of the scaled base can nudge the peak up by an ulp.
    let again = ev.evaluate(instance, &scaled)?.peak_space();
    if again <= instance.capacity {
        Ok(scaled)
    } else {
        build(instance.capacity / peak * (instance.capacity / again) * (1.0 - 1e-12))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_capacity_feasible;

    #[test]
    fn profiles_parse_and_generate() {
        for p in ["uniform", "dense-heavy", "two-scale"] {
            let prof: Profile = p.parse().unwrap();
            assert_eq!(prof.to_string(), p);
            let inst = generate(prof, 200, 3).unwrap();
            assert_eq!(inst.len(), 200);
            assert_eq!(generate(prof, 200, 3).unwrap(), inst);
        }
        assert!("bogus".parse::<Profile>().is_err());
    }

    #[test]
    fn benchmark_is_feasible_and_uses_most_space() {
        for prof in [Profile::Uniform, Profile::DenseHeavy, Profile::TwoScale] {
            let inst = generate(prof, 300, 11).unwrap();
            let p = benchmark_policy(&inst, 12).unwrap();
            let r = check_capacity_feasible(&inst, &p, 0.0).unwrap();
            assert!(r.feasible, "{prof}: {r:?}");
            let cert = crate::model::evaluate_policy(&inst, &p, 0).unwrap();
            assert!(cert.avg_space > 0.6 * inst.capacity, "{prof}: {}", cert.avg_space / inst.capacity);
        }
    }

    #[test]
    fn heavy_class_bands() {
        let c = heavy_class(50, 50, 2.0, 1);
        let heavy = c.members.iter().filter(|m| m.commodity.gamma * m.t_hat / 2.0 > 0.75 * c.cap).count();
        assert_eq!(heavy, 50);
        for m in &c.members {
            assert!(m.commodity.gamma * m.t_hat / 2.0 <= c.cap * (1.0 + 1e-12));
        }
    }
}
