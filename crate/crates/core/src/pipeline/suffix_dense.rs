use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::classify::{ClassKind, VolumeClassification};
use super::mimic::MimickingPartition;
use super::Sub2Config;
use crate::error::Result;
use crate::model::{sosi_schedule, CommodityId, CyclicPolicy, Instance, PolicyCertificate};
use crate::po2sync::{build_class_policy, expected_ratio, lemma12_factor, ClassPolicyOutcome};
use crate::rng::Streams;

/// Peak factor on the dense volume for the suffix and dense policy.
pub fn lemma5_space_factor(eps: f64) -> f64 {
    (1.0 + 8.0 * eps) * 1.75 * expected_ratio()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffixDenseOutcome {
    #[serde(skip)]
    pub policy: CyclicPolicy,
    pub certificate: PolicyCertificate,
    pub class_outcomes: Vec<ClassPolicyOutcome>,
    pub suffix_commodities: usize,
    pub suffix_peak: f64,
    /// `4 eps V`.
    pub suffix_bound: f64,
    /// `lemma5_space_factor(eps) * V_D + 10 eps V`.
    pub space_bound: f64,
    /// `sum C(T_hat)` over the partition.
    pub sosi_cost: f64,
    pub cost_ratio: f64,
    pub cost_factor: f64,
    pub flags: Vec<String>,
}

/// Suffix classes order at their capped intervals; each dense class goes
/// through the rounding and pairing construction with its own streams.
pub fn build_suffix_dense_policy(
    instance: &Instance,
    classification: &VolumeClassification,
    partition: &MimickingPartition,
    cfg: &Sub2Config,
    streams: &Streams,
) -> Result<SuffixDenseOutcome> {
    build_with_volume(instance, classification.v_dense, partition, cfg, streams)
}

/// Same construction with the dense volume given directly, for guessed
/// classifications.
pub(super) fn build_with_volume(
    instance: &Instance,
    v_dense: f64,
    partition: &MimickingPartition,
    cfg: &Sub2Config,
    streams: &Streams,
) -> Result<SuffixDenseOutcome> {
    let eps = cfg.eps;
    let v = instance.capacity;
    let mut policy = CyclicPolicy::new();
    let mut suffix_policy = CyclicPolicy::new();
    let mut suffix_ids = BTreeSet::new();
    let mut dense = Vec::new();
    for (kind, class) in partition.kinds.iter().zip(&partition.classes) {
        match kind {
            ClassKind::Suffix => {
                for m in &class.members {
                    let id = m.commodity.id;
                    suffix_policy.insert(id, sosi_schedule(id, m.t_hat, 0.0)?);
                    suffix_ids.insert(id);
                }
            }
            _ if !class.members.is_empty() => dense.push(class),
            _ => {}
        }
    }
    let po2 = cfg.po2();
    let outcomes: Vec<ClassPolicyOutcome> = dense
        .par_iter()
        .map(|class| build_class_policy(class, &po2, &streams.child(class.index.key()), &cfg.evaluator))
        .collect::<Result<_>>()?;

    let mut flags = partition.flags.clone();
    let suffix_peak = if suffix_ids.is_empty() {
        0.0
    } else {
        cfg.evaluator.evaluate(&instance.restrict(&suffix_ids), &suffix_policy)?.peak_space()
    };
    let suffix_bound = 4.0 * eps * v;
    if suffix_peak > suffix_bound * (1.0 + 1e-9) {
        flags.push(format!("suffix peak {suffix_peak} exceeds 4 eps V = {suffix_bound}"));
    }
    policy.merge(suffix_policy)?;
    for o in &outcomes {
        policy.merge(o.policy.clone())?;
        flags.extend(o.flags.iter().map(|f| format!("class {}: {f}", o.index)));
    }
    let ids: BTreeSet<CommodityId> = policy.schedules.keys().copied().collect();
    let certificate = cfg.evaluator.evaluate(&instance.restrict(&ids), &policy)?;
    let space_bound = lemma5_space_factor(eps) * v_dense + 10.0 * eps * v;
    if certificate.peak_space() > space_bound * (1.0 + 1e-9) {
        flags.push(format!("suffix and dense peak {} exceeds its bound {space_bound}", certificate.peak_space()));
    }
    let sosi_cost: f64 = partition.classes.iter().map(|c| c.sosi_cost()).sum();
    Ok(SuffixDenseOutcome {
        cost_ratio: certificate.total_cost / sosi_cost,
        policy,
        certificate,
        class_outcomes: outcomes,
        suffix_commodities: suffix_ids.len(),
        suffix_peak,
        suffix_bound,
        space_bound,
        sosi_cost,
        cost_factor: lemma12_factor(eps),
        flags,
    })
}
