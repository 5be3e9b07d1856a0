use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use super::{check_event_a, draw_theta, expected_ratio, min_group_size, pair_near_far, partition_heavy, po2_round_group, q_default, RoundedGroup};
use crate::error::{Error, Result};
use crate::gadget::{build_pair, Sub1Couple};
use crate::model::{sosi_schedule, Commodity, CommodityId, CyclicPolicy, Evaluator, Instance, PolicyCertificate};
use crate::rng::Streams;

/// Volume class index: finite classes count down from the capacity in
/// powers of `1 + eps`, `Infinity` collects the negligible commodities.
/// Serialized as `"13"` or `"inf"` so it can key JSON maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ClassIndex {
    Finite(u32),
    Infinity,
}

impl fmt::Display for ClassIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassIndex::Finite(l) => write!(f, "{l}"),
            ClassIndex::Infinity => write!(f, "inf"),
        }
    }
}

impl From<ClassIndex> for String {
    fn from(c: ClassIndex) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for ClassIndex {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        if s == "inf" {
            return Ok(ClassIndex::Infinity);
        }
        s.parse().map(ClassIndex::Finite).map_err(|_| format!("bad class index {s:?}"))
    }
}

impl ClassIndex {
    pub fn key(&self) -> u64 {
        match self {
            ClassIndex::Finite(l) => *l as u64,
            ClassIndex::Infinity => u64::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMember {
    pub commodity: Commodity,
    /// Capped EOQ interval `min(T*, 2 cap / gamma)`.
    pub t_hat: f64,
}

/// One class of the mimicking partition. `cap` bounds `gamma * T_hat / 2`
/// for every member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseClass {
    pub index: ClassIndex,
    pub cap: f64,
    pub members: Vec<ClassMember>,
}

impl DenseClass {
    pub fn instance(&self) -> Result<Instance> {
        Instance::new(self.cap * self.members.len().max(1) as f64, self.members.iter().map(|m| m.commodity).collect())
    }

    pub fn sosi_cost(&self) -> f64 {
        self.members.iter().map(|m| m.commodity.eoq().cost(m.t_hat)).sum()
    }

    pub fn sosi_space(&self) -> f64 {
        self.members.iter().map(|m| m.commodity.gamma * m.t_hat).sum()
    }
}

/// Policy of one rounded group with its pair and gadget tallies.
type GroupPiece = (CyclicPolicy, usize, usize, usize, [usize; 6]);

/// Light commodities use at most this fraction of the class cap on average.
pub const LIGHT_FRACTION: f64 = 0.75;

/// Interval scaling of the fallback when the rounding overshoots.
pub const ALPHA_SCALE: f64 = 0.875 / (std::f64::consts::SQRT_2 * std::f64::consts::LN_2);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Po2Config {
    pub eps: f64,
    /// Group count; `None` uses `ceil(20 ln(1/eps) / eps^2)`.
    pub q: Option<usize>,
    /// Minimum group size; `None` uses `ceil(2 / eps^2)`.
    pub min_group: Option<usize>,
}

impl Po2Config {
    pub fn new(eps: f64) -> Self {
        Po2Config { eps, q: None, min_group: None }
    }

    pub fn q(&self) -> usize {
        self.q.unwrap_or_else(|| q_default(self.eps))
    }

    pub fn min_group(&self) -> usize {
        self.min_group.unwrap_or_else(|| min_group_size(self.eps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassBranch {
    /// Negligible class: SOSI at the capped intervals.
    Negligible,
    LightMajority,
    /// Heavy majority and the rounded space stayed in budget.
    HeavySynchronized,
    /// Heavy majority, rounding overshot: every interval scaled down.
    HeavyScaled,
    /// Heavy majority with too few heavy commodities to form groups.
    HeavyRefused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPolicyOutcome {
    pub index: ClassIndex,
    pub branch: ClassBranch,
    #[serde(skip)]
    pub policy: CyclicPolicy,
    pub certificate: PolicyCertificate,
    pub size: usize,
    pub heavy: usize,
    pub light: usize,
    pub groups: usize,
    pub q_used: usize,
    pub q_surrogate: bool,
    pub near_pairs: usize,
    pub far_pairs: usize,
    pub leftovers: usize,
    /// Near pairs per gadget case 1..=6.
    pub cases: [usize; 6],
    pub event_a: Option<bool>,
    /// `peak / (|class| cap)`.
    pub space_ratio: f64,
    pub space_bound: f64,
    /// `cost / sum C(T_hat)`.
    pub cost_ratio: f64,
    pub flags: Vec<String>,
}

/// Peak factor against `|class| cap` when heavy commodities dominate.
pub fn lemma11_factor(eps: f64) -> f64 {
    (1.0 + 6.0 * eps) * 1.75 * expected_ratio()
}

/// Bound on the expected cost factor against `sum C(T_hat)`.
pub fn lemma12_factor(eps: f64) -> f64 {
    (1.0 + 0.4 * eps) * (32.0 / 31.0) * expected_ratio()
}

fn sosi_policy(members: impl Iterator<Item = (CommodityId, f64)>) -> Result<CyclicPolicy> {
    let mut p = CyclicPolicy::new();
    for (id, t) in members {
        p.insert(id, sosi_schedule(id, t, 0.0)?);
    }
    Ok(p)
}

/// Builds the cyclic policy for one class of the partition.
///
/// `streams` must be specific to this class and draw; group `q` draws its
/// shift from stream `q`, the partition from stream `u64::MAX`.
pub fn build_class_policy(
    class: &DenseClass,
    cfg: &Po2Config,
    streams: &Streams,
    evaluator: &Evaluator,
) -> Result<ClassPolicyOutcome> {
    if class.members.is_empty() {
        return Err(Error::InvalidParameter(format!("class {} is empty", class.index)));
    }
    let eps = cfg.eps;
    let size = class.members.len();
    let bound_scale = size as f64 * class.cap;
    let is_light = |m: &ClassMember| m.commodity.gamma * m.t_hat / 2.0 <= LIGHT_FRACTION * class.cap;
    let light = class.members.iter().filter(|m| is_light(m)).count();
    let heavy = size - light;
    let mut flags = Vec::new();
    let mut out = ClassPolicyOutcome {
        index: class.index,
        branch: ClassBranch::LightMajority,
        policy: CyclicPolicy::new(),
        certificate: empty_certificate(),
        size,
        heavy,
        light,
        groups: 0,
        q_used: 0,
        q_surrogate: false,
        near_pairs: 0,
        far_pairs: 0,
        leftovers: 0,
        cases: [0; 6],
        event_a: None,
        space_ratio: 0.0,
        space_bound: 1.75,
        cost_ratio: 0.0,
        flags: Vec::new(),
    };

    let passthrough = || sosi_policy(class.members.iter().map(|m| (m.commodity.id, m.t_hat)));

    let policy = if class.index == ClassIndex::Infinity {
        out.branch = ClassBranch::Negligible;
        out.space_bound = 2.0;
        passthrough()?
    } else if 2 * light >= size {
        out.branch = ClassBranch::LightMajority;
        out.space_bound = 1.75;
        passthrough()?
    } else {
        let min_group = cfg.min_group();
        let mut q = cfg.q();
        if heavy / q < min_group {
            q = heavy / min_group;
            out.q_surrogate = true;
            flags.push(format!("group count lowered to {q} so groups keep at least {min_group} members"));
        }
        if q == 0 {
            out.branch = ClassBranch::HeavyRefused;
            out.space_bound = 2.0;
            flags.push(format!("only {heavy} heavy commodities; need {min_group} for one group"));
            passthrough()?
        } else {
            out.q_used = q;
            out.space_bound = lemma11_factor(eps);
            heavy_policy(class, q, cfg, streams, &mut out, &is_light)?
        }
    };

    let inst = class.instance()?;
    let cert = evaluator.evaluate(&inst, &policy)?;
    out.space_ratio = cert.peak_space() / bound_scale;
    out.cost_ratio = cert.total_cost / class.sosi_cost();
    out.certificate = cert;
    out.policy = policy;
    out.flags = flags;
    Ok(out)
}

fn heavy_policy(
    class: &DenseClass,
    q: usize,
    cfg: &Po2Config,
    streams: &Streams,
    out: &mut ClassPolicyOutcome,
    is_light: &dyn Fn(&ClassMember) -> bool,
) -> Result<CyclicPolicy> {
    let eps = cfg.eps;
    let by_id: BTreeMap<CommodityId, &ClassMember> = class.members.iter().map(|m| (m.commodity.id, m)).collect();
    let heavy_ids: Vec<CommodityId> =
        class.members.iter().filter(|m| !is_light(m)).map(|m| m.commodity.id).collect();
    let groups = partition_heavy(&heavy_ids, q, &mut streams.stream(u64::MAX))?;
    out.groups = groups.len();
    let rounded: Vec<RoundedGroup> = groups
        .iter()
        .enumerate()
        .map(|(g, ids)| {
            let theta = draw_theta(&mut streams.stream(g as u64));
            let input: Vec<(CommodityId, f64)> = ids.iter().map(|id| (*id, by_id[id].t_hat)).collect();
            po2_round_group(&input, theta)
        })
        .collect::<Result<_>>()?;
    let gamma = |id: CommodityId| by_id[&id].commodity.gamma;
    let event = check_event_a(&rounded, gamma, eps);
    out.event_a = Some(event.holds);

    if !event.holds {
        out.branch = ClassBranch::HeavyScaled;
        return sosi_policy(class.members.iter().map(|m| (m.commodity.id, ALPHA_SCALE * m.t_hat)));
    }
    out.branch = ClassBranch::HeavySynchronized;

    let pieces: Vec<Result<GroupPiece>> = rounded
        .par_iter()
        .map(|g| {
            let t_of: BTreeMap<CommodityId, f64> = g.members.iter().map(|m| (m.id, m.t_rounded)).collect();
            let spaces: Vec<(CommodityId, f64)> = g.members.iter().map(|m| (m.id, gamma(m.id) * m.t_rounded)).collect();
            let pairing = pair_near_far(&spaces, eps);
            let mut policy = CyclicPolicy::new();
            let mut cases = [0usize; 6];
            for &(x, y) in &pairing.near {
                let couple = Sub1Couple::new(by_id[&x].commodity, by_id[&y].commodity, t_of[&x], t_of[&y], eps)?;
                let gadget = build_pair(&couple)?;
                cases[gadget.case as usize - 1] += 1;
                policy.merge(gadget.policy)?;
            }
            let singles = pairing.far.iter().flat_map(|&(x, y)| [x, y]).chain(pairing.leftover);
            for id in singles {
                policy.insert(id, sosi_schedule(id, t_of[&id], 0.0)?);
            }
            Ok((policy, pairing.near.len(), pairing.far.len(), usize::from(pairing.leftover.is_some()), cases))
        })
        .collect();
    let mut policy = CyclicPolicy::new();
    for piece in pieces {
        let (p, near, far, left, cases) = piece?;
        policy.merge(p)?;
        out.near_pairs += near;
        out.far_pairs += far;
        out.leftovers += left;
        for (acc, c) in out.cases.iter_mut().zip(cases) {
            *acc += c;
        }
    }
    for m in class.members.iter().filter(|m| is_light(m)) {
        policy.insert(m.commodity.id, sosi_schedule(m.commodity.id, m.t_hat, 0.0)?);
    }
    Ok(policy)
}

fn empty_certificate() -> PolicyCertificate {
    PolicyCertificate {
        per_commodity: BTreeMap::new(),
        total_cost: 0.0,
        avg_space: 0.0,
        peak_space_exact: None,
        peak_space_upper: 0.0,
        peak_space_sampled_lower: 0.0,
        peak_epoch: None,
        hyperperiod: None,
        components: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_index_keys_json_maps() {
        let m: BTreeMap<ClassIndex, u8> = [(ClassIndex::Finite(13), 1), (ClassIndex::Infinity, 2)].into();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, r#"{"13":1,"inf":2}"#);
        assert_eq!(serde_json::from_str::<BTreeMap<ClassIndex, u8>>(&text).unwrap(), m);
        assert!(serde_json::from_str::<ClassIndex>(r#""x""#).is_err());
    }
    use crate::generate::heavy_class;

    fn fast_eval() -> Evaluator {
        Evaluator { sample_grid: 0, ..Evaluator::default() }
    }

    #[test]
    fn light_majority_passthrough() {
        let class = heavy_class(40, 60, 1.0, 3);
        let cfg = Po2Config::new(0.3);
        let out = build_class_policy(&class, &cfg, &Streams::new(1), &fast_eval()).unwrap();
        assert_eq!(out.branch, ClassBranch::LightMajority);
        assert!(out.space_ratio <= 1.75 + 1e-12);
        assert!((out.cost_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_heavy_class_uses_surrogate_groups() {
        let class = heavy_class(100, 10, 1.0, 4);
        let cfg = Po2Config::new(0.3);
        let out = build_class_policy(&class, &cfg, &Streams::new(2), &fast_eval()).unwrap();
        assert!(out.q_surrogate);
        assert_eq!(out.q_used, 100 / 23);
        assert!(matches!(out.branch, ClassBranch::HeavySynchronized | ClassBranch::HeavyScaled));
        assert!(out.space_ratio <= lemma11_factor(0.3));
        assert_eq!(out.certificate.per_commodity.len(), 110);
    }

    #[test]
    fn tiny_heavy_class_is_refused() {
        let class = heavy_class(10, 2, 1.0, 5);
        let out = build_class_policy(&class, &Po2Config::new(0.3), &Streams::new(2), &fast_eval()).unwrap();
        assert_eq!(out.branch, ClassBranch::HeavyRefused);
        assert!(!out.flags.is_empty());
    }

    #[test]
    fn same_seed_same_policy() {
        let class = heavy_class(300, 20, 1.0, 6);
        let cfg = Po2Config::new(0.3);
        let a = build_class_policy(&class, &cfg, &Streams::new(9), &fast_eval()).unwrap();
        let b = build_class_policy(&class, &cfg, &Streams::new(9), &fast_eval()).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.certificate, b.certificate);
    }
}
