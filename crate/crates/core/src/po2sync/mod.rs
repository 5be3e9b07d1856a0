//! Randomized power-of-two rounding with one shift per group, near/far
//! pairing inside groups, and the class-level policy combining them with
//! the synchronization gadgets.

mod checks;
mod class_policy;

pub use checks::{
    check_claim3, check_claim4, check_lemma10, check_lemma12, heavy_band_group, CheckReport, Lemma12Options,
};
pub use class_policy::{
    build_class_policy, lemma11_factor, lemma12_factor, ClassBranch, ClassIndex, ClassMember, ClassPolicyOutcome,
    DenseClass, Po2Config, ALPHA_SCALE, LIGHT_FRACTION,
};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CommodityId;

/// `E[T^Theta] / T_hat = 1 / (sqrt(2) ln 2)`.
pub fn expected_ratio() -> f64 {
    1.0 / (std::f64::consts::SQRT_2 * std::f64::consts::LN_2)
}

/// Number of groups `ceil(20 ln(1/eps) / eps^2)`.
pub fn q_default(eps: f64) -> usize {
    (20.0 * (1.0 / eps).ln() / (eps * eps)).ceil() as usize
}

/// Smallest group size `ceil(2 / eps^2)`.
pub fn min_group_size(eps: f64) -> usize {
    (2.0 / (eps * eps) - 1e-9).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundedMember {
    pub id: CommodityId,
    pub t_hat: f64,
    pub alpha: i32,
    pub beta: f64,
    pub exponent: i32,
    pub t_rounded: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundedGroup {
    pub theta: f64,
    pub t_min: f64,
    /// `2^theta * t_min`; every rounded interval is this times a power of two.
    pub base: f64,
    pub members: Vec<RoundedMember>,
}

/// Exponent split `log2(t / t_min) = alpha + beta` with `beta` in `[0, 1)`.
fn split_log2(t: f64, t_min: f64) -> (i32, f64) {
    let r = (t / t_min).log2();
    let mut alpha = r.floor();
    let mut beta = r - alpha;
    if beta > 1.0 - 1e-12 {
        alpha += 1.0;
        beta = 0.0;
    } else if beta < 1e-12 {
        beta = 0.0;
    }
    (alpha as i32, beta)
}

/// Rounds every interval of a group with the shared shift `theta` in
/// `[-1/2, 1/2]`: exponent `alpha` when `theta >= beta - 1/2`, otherwise
/// `alpha + 1`, on the base `2^theta t_min`.
pub fn po2_round_group(t_hat: &[(CommodityId, f64)], theta: f64) -> Result<RoundedGroup> {
    if t_hat.is_empty() {
        return Err(Error::InvalidParameter("empty group".into()));
    }
    if !(-0.5..=0.5).contains(&theta) {
        return Err(Error::InvalidParameter(format!("shift {theta} outside [-1/2, 1/2]")));
    }
    let t_min = t_hat.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if !(t_min.is_finite() && t_min > 0.0) {
        return Err(Error::InvalidParameter("intervals must be positive".into()));
    }
    let base = t_min * theta.exp2();
    let members = t_hat
        .iter()
        .map(|&(id, t)| {
            let (alpha, beta) = split_log2(t, t_min);
            let exponent = if theta >= beta - 0.5 { alpha } else { alpha + 1 };
            RoundedMember { id, t_hat: t, alpha, beta, exponent, t_rounded: base * 2f64.powi(exponent) }
        })
        .collect();
    Ok(RoundedGroup { theta, t_min, base, members })
}

/// Draws the shift for one group.
pub fn draw_theta<R: Rng>(rng: &mut R) -> f64 {
    rng.random_range(-0.5..=0.5)
}

/// Random split of `ids` into `q` groups whose sizes differ by at most one.
pub fn partition_heavy<R: Rng>(ids: &[CommodityId], q: usize, rng: &mut R) -> Result<Vec<Vec<CommodityId>>> {
    if q == 0 || ids.len() < q {
        return Err(Error::InvalidParameter(format!("cannot split {} commodities into {q} groups", ids.len())));
    }
    let mut v = ids.to_vec();
    v.shuffle(rng);
    let base = v.len() / q;
    let extra = v.len() % q;
    let mut out = Vec::with_capacity(q);
    let mut it = v.into_iter();
    for g in 0..q {
        let size = base + usize::from(g < extra);
        out.push(it.by_ref().take(size).collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub near: Vec<(CommodityId, CommodityId)>,
    pub far: Vec<(CommodityId, CommodityId)>,
    pub leftover: Option<CommodityId>,
}

/// Sorts by peak space `gamma T` (descending, ties by smaller id) and pairs
/// neighbours; a pair is far when the larger space is at least `1 + eps`
/// times the smaller.
pub fn pair_near_far(spaces: &[(CommodityId, f64)], eps: f64) -> Pairing {
    let mut v = spaces.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut p = Pairing::default();
    let mut chunks = v.chunks_exact(2);
    for c in chunks.by_ref() {
        if c[0].1 >= (1.0 + eps) * c[1].1 {
            p.far.push((c[0].0, c[1].0));
        } else {
            p.near.push((c[0].0, c[1].0));
        }
    }
    p.leftover = chunks.remainder().first().map(|x| x.0);
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventA {
    pub holds: bool,
    pub rounded_space: f64,
    pub threshold: f64,
}

/// Whether `sum gamma T^Theta <= (1 + eps) / (sqrt 2 ln 2) * sum gamma T_hat`
/// over all members of `groups`.
pub fn check_event_a(groups: &[RoundedGroup], gamma: impl Fn(CommodityId) -> f64, eps: f64) -> EventA {
    let mut rounded = 0.0;
    let mut original = 0.0;
    for g in groups {
        for m in &g.members {
            let c = gamma(m.id);
            rounded += c * m.t_rounded;
            original += c * m.t_hat;
        }
    }
    let threshold = (1.0 + eps) * expected_ratio() * original;
    EventA { holds: rounded <= threshold, rounded_space: rounded, threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    fn ids(n: u32) -> Vec<CommodityId> {
        (0..n).map(CommodityId).collect()
    }

    #[test]
    fn rounding_example() {
        let g = po2_round_group(&[(CommodityId(1), 1.0), (CommodityId(2), 3.0)], 0.0).unwrap();
        assert_eq!(g.members[0].t_rounded, 1.0);
        // log2 3 = 1 + 0.585; theta = 0 < 0.085 so the exponent moves up.
        assert_eq!(g.members[1].alpha, 1);
        assert_eq!(g.members[1].t_rounded, 4.0);
    }

    #[test]
    fn q_at_desk_epsilon() {
        assert_eq!(q_default(0.3), 268);
        assert_eq!(min_group_size(0.3), 23);
        assert_eq!(min_group_size(0.1), 200);
    }

    #[test]
    fn partition_sizes() {
        let mut rng = Streams::new(1).stream(0);
        let g = partition_heavy(&ids(103), 10, &mut rng).unwrap();
        assert_eq!(g.len(), 10);
        assert!(g.iter().all(|x| x.len() == 10 || x.len() == 11));
        let mut all: Vec<_> = g.concat();
        all.sort();
        assert_eq!(all, ids(103));
        assert!(partition_heavy(&ids(5), 6, &mut rng).is_err());
    }

    #[test]
    fn pairing_rules() {
        let s = [(CommodityId(3), 1.0), (CommodityId(1), 1.0), (CommodityId(2), 2.0), (CommodityId(4), 1.2), (CommodityId(5), 0.1)];
        let p = pair_near_far(&s, 0.25);
        assert_eq!(p.far, vec![(CommodityId(2), CommodityId(4))]);
        assert_eq!(p.near, vec![(CommodityId(1), CommodityId(3))]);
        assert_eq!(p.leftover, Some(CommodityId(5)));
    }

    #[test]
    fn event_a_fails_when_every_interval_rounds_up() {
        // beta just below 1/2 and theta = 1/2 keep the exponent but inflate the base by sqrt 2.
        let g = po2_round_group(&[(CommodityId(0), 1.0), (CommodityId(1), 1.0)], 0.5).unwrap();
        let e = check_event_a(&[g], |_| 1.0, 0.3);
        assert!(!e.holds);
        let g = po2_round_group(&[(CommodityId(0), 1.0)], 0.0).unwrap();
        assert!(check_event_a(&[g], |_| 1.0, 0.3).holds);
    }

    proptest::proptest! {
        #[test]
        fn rounding_envelope_and_structure(ts in proptest::collection::vec(0.01f64..100.0, 1..20), theta in -0.5f64..=0.5) {
            let input: Vec<_> = ts.iter().enumerate().map(|(i, t)| (CommodityId(i as u32), *t)).collect();
            let g = po2_round_group(&input, theta).unwrap();
            for m in &g.members {
                let r = m.t_rounded / m.t_hat;
                proptest::prop_assert!(r >= std::f64::consts::FRAC_1_SQRT_2 * (1.0 - 1e-12));
                proptest::prop_assert!(r <= std::f64::consts::SQRT_2 * (1.0 + 1e-12));
                let k = crate::gadget::exact_log2(m.t_rounded / g.base);
                proptest::prop_assert_eq!(k, Some(m.exponent));
            }
        }
    }
}
