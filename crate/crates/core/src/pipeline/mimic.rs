use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::bmatching::{bmatching_min_cost, BMatchingProblem};
use super::classify::{ClassKind, VolumeClassification};
use crate::error::{Error, Result};
use crate::model::{CommodityId, Instance};
use crate::po2sync::{ClassIndex, ClassMember, DenseClass};

/// Bound on `gamma * T / 2` inside class `index`.
pub fn class_cap(capacity: f64, eps: f64, n: usize, index: ClassIndex) -> f64 {
    match index {
        ClassIndex::Finite(l) => capacity / (1.0 + eps).powi(l as i32 - 1),
        ClassIndex::Infinity => eps * capacity / n as f64,
    }
}

/// One class vertex of the matching with its degree bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassTarget {
    pub index: ClassIndex,
    pub kind: ClassKind,
    pub lower: usize,
    pub upper: usize,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimickingPartition {
    pub kinds: Vec<ClassKind>,
    /// Parallel to `kinds`; members carry their capped intervals.
    pub classes: Vec<DenseClass>,
    pub matching_cost: f64,
    /// The benchmark's own cost on the same commodities, when known.
    pub benchmark_cost: Option<f64>,
    pub certified: bool,
    pub flags: Vec<String>,
}

impl MimickingPartition {
    pub fn t_hat(&self) -> BTreeMap<CommodityId, f64> {
        self.classes.iter().flat_map(|c| c.members.iter().map(|m| (m.commodity.id, m.t_hat))).collect()
    }
}

/// Degree targets read off a classification: suffix classes keep their
/// exact size, dense classes get `[ceil(threshold), floor(N~)]`, the
/// negligible class `[ceil(threshold), |U|]`.
pub fn targets_from(classification: &VolumeClassification, u_len: usize) -> Vec<ClassTarget> {
    let c = classification;
    let cap = |i| class_cap(c.capacity, c.eps, c.n, i);
    let mut out = Vec::new();
    for &i in &c.suffix {
        let size = c.size(i);
        if size > 0 {
            out.push(ClassTarget { index: i, kind: ClassKind::Suffix, lower: size, upper: size, cap: cap(i) });
        }
    }
    let lower = c.sparse_threshold.ceil() as usize;
    for &i in &c.dense {
        let size = c.size(i);
        let upper = match c.classes.get(&i).and_then(|s| s.count_bound) {
            Some(nb) => ((nb * (1.0 + 1e-12)).floor() as usize).max(size),
            None => u_len,
        };
        out.push(ClassTarget { index: i, kind: ClassKind::Dense, lower: lower.min(size), upper, cap: cap(i) });
    }
    out
}

/// Reassigns the suffix and dense commodities to classes by a minimum-cost
/// b-matching on capped EOQ costs.
pub fn mimicking_partition(
    instance: &Instance,
    classification: &VolumeClassification,
    benchmark_costs: Option<&BTreeMap<CommodityId, f64>>,
) -> Result<MimickingPartition> {
    let mut u: Vec<CommodityId> = classification
        .classes
        .values()
        .filter(|c| c.kind != ClassKind::Prefix)
        .flat_map(|c| c.members.iter().copied())
        .collect();
    u.sort();
    let targets = targets_from(classification, u.len());
    let mut out = mimicking_partition_with(instance, &u, &targets)?;
    if let Some(costs) = benchmark_costs {
        let b: f64 = u.iter().map(|id| costs[id]).sum();
        out.benchmark_cost = Some(b);
        if out.matching_cost > b * (1.0 + 1e-9) {
            out.flags.push(format!("matching cost {} exceeds the benchmark's {} on the same commodities", out.matching_cost, b));
        }
    }
    Ok(out)
}

pub fn mimicking_partition_with(
    instance: &Instance,
    u: &[CommodityId],
    targets: &[ClassTarget],
) -> Result<MimickingPartition> {
    let commodities: Vec<_> =
        u.iter().map(|id| instance.get(*id).copied().ok_or(Error::MissingSchedule(*id))).collect::<Result<_>>()?;
    let t_of = |c: &crate::model::Commodity, t: &ClassTarget| c.eoq().capped(2.0 * t.cap / c.gamma);
    let weights: Vec<Vec<f64>> =
        commodities.iter().map(|c| targets.iter().map(|t| c.eoq().cost(t_of(c, t))).collect()).collect();
    let problem = BMatchingProblem {
        weights,
        lower: targets.iter().map(|t| t.lower).collect(),
        upper: targets.iter().map(|t| t.upper).collect(),
    };
    let m = bmatching_min_cost(&problem)?;
    let mut classes: Vec<DenseClass> =
        targets.iter().map(|t| DenseClass { index: t.index, cap: t.cap, members: Vec::new() }).collect();
    for (c, &j) in commodities.iter().zip(&m.assignment) {
        classes[j].members.push(ClassMember { commodity: *c, t_hat: t_of(c, &targets[j]) });
    }
    let mut flags = Vec::new();
    if !m.certified {
        flags.push("matching optimality could not be certified".into());
    }
    Ok(MimickingPartition {
        kinds: targets.iter().map(|t| t.kind).collect(),
        classes,
        matching_cost: m.cost,
        benchmark_cost: None,
        certified: m.certified,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Commodity;
    use crate::pipeline::bmatching_brute_force;
    use crate::rng::Streams;
    use rand::Rng;

    fn target(index: u32, lower: usize, upper: usize, cap: f64) -> ClassTarget {
        ClassTarget { index: ClassIndex::Finite(index), kind: ClassKind::Dense, lower, upper, cap }
    }

    #[test]
    fn single_class_takes_everything() {
        let cs: Vec<Commodity> = (0..5).map(|i| Commodity::new(i, 4.0 + i as f64, 1.0, 1.0)).collect();
        let inst = Instance::new(10.0, cs.clone()).unwrap();
        let ids: Vec<CommodityId> = cs.iter().map(|c| c.id).collect();
        let p = mimicking_partition_with(&inst, &ids, &[target(1, 0, 5, 1.0)]).unwrap();
        assert_eq!(p.classes[0].members.len(), 5);
        for m in &p.classes[0].members {
            assert_eq!(m.t_hat, m.commodity.eoq().capped(2.0));
        }
    }

    #[test]
    fn equals_enumeration_with_two_caps() {
        let mut rng = Streams::new(3).stream(0);
        for _ in 0..50 {
            let cs: Vec<Commodity> = (0..6)
                .map(|i| Commodity::new(i, rng.random_range(1.0..50.0), rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)))
                .collect();
            let inst = Instance::new(10.0, cs.clone()).unwrap();
            let ids: Vec<CommodityId> = cs.iter().map(|c| c.id).collect();
            let targets = [target(1, 2, 4, rng.random_range(0.5..3.0)), target(2, 2, 4, rng.random_range(0.1..1.0))];
            let p = mimicking_partition_with(&inst, &ids, &targets).unwrap();
            let weights = cs
                .iter()
                .map(|c| targets.iter().map(|t| c.eoq().cost(c.eoq().capped(2.0 * t.cap / c.gamma))).collect())
                .collect();
            let brute = bmatching_brute_force(&BMatchingProblem { weights, lower: vec![2, 2], upper: vec![4, 4] }).unwrap();
            assert!((brute.cost - p.matching_cost).abs() < 1e-9 * brute.cost);
        }
    }

    #[test]
    fn caps() {
        assert_eq!(class_cap(8.0, 1.0, 4, ClassIndex::Finite(1)), 8.0);
        assert_eq!(class_cap(8.0, 1.0, 4, ClassIndex::Finite(3)), 2.0);
        assert_eq!(class_cap(8.0, 0.5, 4, ClassIndex::Infinity), 1.0);
    }
}
