use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{CommodityId, CyclicPolicy, Instance};
use crate::po2sync::ClassIndex;
use crate::rational::{self, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Prefix,
    Suffix,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub index: ClassIndex,
    pub kind: ClassKind,
    pub members: Vec<CommodityId>,
    /// `sum gamma_i I_i` over the benchmark.
    pub volume: f64,
    /// Dense classes only: volume rounded up to the dense unit.
    pub rounded_volume: Option<f64>,
    /// Finite dense classes only: `(1 + eps)^l * rounded_volume / V`.
    pub count_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeClassification {
    pub eps: f64,
    pub capacity: f64,
    pub n: usize,
    /// Number of finite classes.
    pub l: u32,
    /// Nonempty sparse classes allowed in the prefix.
    pub delta_count: u32,
    pub sparse_threshold: f64,
    pub class_of: BTreeMap<CommodityId, ClassIndex>,
    /// Nonempty classes.
    pub classes: BTreeMap<ClassIndex, ClassStats>,
    /// Every sparse index, empty ones included, in increasing order.
    pub sparse: Vec<ClassIndex>,
    pub dense: Vec<ClassIndex>,
    pub prefix: Vec<ClassIndex>,
    pub suffix: Vec<ClassIndex>,
    pub l_mid: Option<ClassIndex>,
    pub v_sparse: f64,
    pub v_dense: f64,
    pub v_prefix: f64,
    pub v_suffix: f64,
    /// Rounding unit for dense class volumes, `eps V / |D|`.
    pub dense_unit: f64,
    pub flags: Vec<String>,
}

impl VolumeClassification {
    pub fn members_of(&self, kind: ClassKind) -> BTreeSet<CommodityId> {
        self.classes.values().filter(|c| c.kind == kind).flat_map(|c| c.members.iter().copied()).collect()
    }

    pub fn kind_of(&self, index: ClassIndex) -> ClassKind {
        if self.dense.contains(&index) {
            ClassKind::Dense
        } else if self.suffix.contains(&index) {
            ClassKind::Suffix
        } else {
            ClassKind::Prefix
        }
    }

    pub fn size(&self, index: ClassIndex) -> usize {
        self.classes.get(&index).map_or(0, |c| c.members.len())
    }
}

/// Smallest multiple of `unit` that is at least `x`.
pub fn round_up(x: f64, unit: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = (x / unit).ceil();
    let r = k * unit;
    if r < x {
        (k + 1.0) * unit
    } else {
        r
    }
}

fn ceil_log(x: f64, base: f64) -> u32 {
    let v = x.ln() / base.ln();
    // Values within rounding noise of an integer are that integer.
    let r = v.round();
    let v = if (v - r).abs() < 1e-9 { r } else { v.ceil() };
    v.max(1.0) as u32
}

/// Number of finite volume classes for `n` commodities.
pub fn class_count(n: usize, eps: f64) -> u32 {
    ceil_log(n as f64 / eps, 1.0 + eps)
}

/// Number of nonempty sparse classes kept in the prefix.
pub fn prefix_budget(eps: f64) -> u32 {
    ceil_log(125.0 / eps.powi(7), 1.0 + eps)
}

/// Classifies commodities by the benchmark's average occupied space.
///
/// Band membership is decided on exact rationals: the benchmark's average
/// inventories, `gamma`, `V` and `1 + eps` are all taken at their exact
/// binary values.
pub fn classify_volumes(
    instance: &Instance,
    benchmark: &CyclicPolicy,
    eps: f64,
    sparse_threshold: f64,
) -> Result<VolumeClassification> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    let n = instance.len();
    let l = class_count(n, eps);
    let cap = rational::from_f64(instance.capacity)?;
    let base = Rational::one() + rational::from_f64(eps)?;
    // thresholds[j] = V (1 + eps)^-j for j = 0..=L.
    let mut thresholds = Vec::with_capacity(l as usize + 1);
    let mut t = cap.clone();
    for _ in 0..=l {
        thresholds.push(t.clone());
        t = &t / &base;
    }
    let mut flags = Vec::new();
    let mut class_of = BTreeMap::new();
    let mut exact: BTreeMap<ClassIndex, (Vec<CommodityId>, Rational)> = BTreeMap::new();
    let mut over = 0usize;
    for c in &instance.commodities {
        let s = benchmark.get(c.id).ok_or(Error::MissingSchedule(c.id))?;
        let x = rational::from_f64(c.gamma)? * s.average_inventory();
        let idx = if x <= thresholds[l as usize] {
            ClassIndex::Infinity
        } else {
            if x > thresholds[0] {
                over += 1;
            }
            // Smallest j >= 1 with x > thresholds[j].
            let (mut lo, mut hi) = (1usize, l as usize);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if x > thresholds[mid] {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            ClassIndex::Finite(lo as u32)
        };
        class_of.insert(c.id, idx);
        let e = exact.entry(idx).or_insert_with(|| (Vec::new(), Rational::zero()));
        e.0.push(c.id);
        e.1 += x;
    }
    if over > 0 {
        flags.push(format!("{over} commodities occupy more than the capacity on average in the benchmark"));
    }

    let all_indices = (1..=l).map(ClassIndex::Finite).chain([ClassIndex::Infinity]);
    let size = |i: &ClassIndex| exact.get(i).map_or(0, |e| e.0.len());
    let (sparse, dense): (Vec<ClassIndex>, Vec<ClassIndex>) =
        all_indices.partition(|i| size(i) as f64 <= sparse_threshold);
    let delta_count = prefix_budget(eps);
    let mut l_mid = sparse.last().copied();
    let mut seen = 0;
    for i in &sparse {
        if size(i) > 0 {
            seen += 1;
            if seen == delta_count {
                l_mid = Some(*i);
                break;
            }
        }
    }
    let (prefix, suffix): (Vec<ClassIndex>, Vec<ClassIndex>) =
        sparse.iter().partition(|i| l_mid.is_some_and(|m| **i <= m));

    let dense_unit = if dense.is_empty() { eps * instance.capacity } else { eps * instance.capacity / dense.len() as f64 };
    let mut classes = BTreeMap::new();
    let (mut v_prefix, mut v_suffix, mut v_dense) = (0.0, 0.0, 0.0);
    for (idx, (members, vol)) in exact {
        let volume = rational::to_f64(&vol);
        let kind = if dense.contains(&idx) {
            v_dense += volume;
            ClassKind::Dense
        } else if suffix.contains(&idx) {
            v_suffix += volume;
            ClassKind::Suffix
        } else {
            v_prefix += volume;
            ClassKind::Prefix
        };
        let (rounded_volume, count_bound) = if kind == ClassKind::Dense {
            let r = round_up(volume, dense_unit);
            let nb = match idx {
                ClassIndex::Finite(j) => {
                    let nb = (1.0 + eps).powi(j as i32) * r / instance.capacity;
                    if nb + 1e-9 * nb < members.len() as f64 {
                        flags.push(format!("class {idx}: count bound {nb} below its size {}", members.len()));
                    }
                    Some(nb)
                }
                ClassIndex::Infinity => None,
            };
            (Some(r), nb)
        } else {
            (None, None)
        };
        classes.insert(idx, ClassStats { index: idx, kind, members, volume, rounded_volume, count_bound });
    }
    Ok(VolumeClassification {
        eps,
        capacity: instance.capacity,
        n,
        l,
        delta_count,
        sparse_threshold,
        class_of,
        classes,
        sparse,
        dense,
        prefix,
        suffix,
        l_mid,
        v_sparse: v_prefix + v_suffix,
        v_dense,
        v_prefix,
        v_suffix,
        dense_unit,
        flags,
    })
}
