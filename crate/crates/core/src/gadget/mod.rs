//! Synchronization gadgets for pairs of commodities whose rounded intervals
//! differ by a power of two and whose SOSI peak spaces nearly agree.
//!
//! Working in time units where `T_A = 1`, each case places A's orders and a
//! staggered sequence of B's orders on a common cycle so that the joint peak
//! is at most `7/4` of the combined SOSI average space, while each
//! commodity's cost grows by at most a small constant.

mod cases;

pub use cases::{case_by_id, case_for, CaseSpec, Segment, CASES};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{LazyLock, Mutex};

use crate::error::{Error, Result};
use crate::model::{Commodity, CommodityId, CyclicPolicy, CyclicSchedule, Evaluator, Instance, Order};
use crate::rational::{self, Rational};

/// Two commodities with their rounded intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sub1Couple {
    pub a: Commodity,
    pub b: Commodity,
    pub t_a: f64,
    pub t_b: f64,
    pub eps: f64,
}

impl Sub1Couple {
    /// Orders the pair so that `t_a >= t_b` and checks both structural
    /// requirements.
    pub fn new(a: Commodity, b: Commodity, t_a: f64, t_b: f64, eps: f64) -> Result<Self> {
        let (a, b, t_a, t_b) = if t_a >= t_b { (a, b, t_a, t_b) } else { (b, a, t_b, t_a) };
        exact_log2(t_a / t_b)
            .filter(|k| *k >= 0)
            .ok_or_else(|| Error::GadgetUnsupported(format!("T_A/T_B = {} is not a power of two", t_a / t_b)))?;
        let (va, vb) = (a.gamma * t_a, b.gamma * t_b);
        let hi = va.max(vb);
        let lo = va.min(vb);
        if hi > (1.0 + eps) * lo * (1.0 + 1e-12) {
            return Err(Error::GadgetUnsupported(format!(
                "peak spaces {va} and {vb} differ by more than a factor 1 + {eps}"
            )));
        }
        Ok(Sub1Couple { a, b, t_a, t_b, eps })
    }

    pub fn log2_ratio(&self) -> u32 {
        exact_log2(self.t_a / self.t_b).unwrap_or(0) as u32
    }
}

/// `k` with `x == 2^k` exactly.
pub fn exact_log2(x: f64) -> Option<i32> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let mant = bits & ((1u64 << 52) - 1);
    if exp == 0 || mant != 0 {
        return None;
    }
    Some(exp - 1023)
}

/// Case number for `T_A / T_B`; both intervals must differ by a power of two.
pub fn classify_case(t_a: f64, t_b: f64) -> Result<u8> {
    let (hi, lo) = if t_a >= t_b { (t_a, t_b) } else { (t_b, t_a) };
    let k = exact_log2(hi / lo)
        .ok_or_else(|| Error::GadgetUnsupported(format!("T_A/T_B = {} is not a power of two", hi / lo)))?;
    Ok(case_for(k as u32).case)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GadgetSchedule {
    pub case: u8,
    pub log2_ratio: u32,
    pub a: CommodityId,
    pub b: CommodityId,
    pub policy: CyclicPolicy,
}

impl GadgetSchedule {
    pub fn spec(&self) -> &'static CaseSpec {
        case_by_id(self.case).expect("built from the table")
    }
}

/// Schedules for A and B on their common cycle, in normalized time.
pub fn normalized_pair(spec: &CaseSpec, k: u32, a: CommodityId, b: CommodityId) -> Result<(CyclicSchedule, CyclicSchedule)> {
    if !spec.matches(k) {
        return Err(Error::GadgetCaseMismatch {
            case: spec.case,
            expected: match spec.log2_ratio {
                Some(r) => format!("2^{r}"),
                None => format!("2^k with k >= {}", spec.min_log2_ratio),
            },
            got: format!("2^{k}"),
        });
    }
    let cycle = spec.a_scale.clone();
    let sa = CyclicSchedule::new(a, cycle.clone(), vec![Order { time: Rational::zero(), qty: cycle.clone() }], Rational::zero())?;
    let lengths = spec.b_lengths(k).map_err(Error::GadgetUnsupported)?;
    let sb = CyclicSchedule::back_to_back(b, cycle, &spec.b_start, &lengths)?;
    Ok((sa, sb))
}

/// Normalized schedules depend only on the exponent; keep them around.
fn cached_pair(k: u32) -> Result<(CyclicSchedule, CyclicSchedule)> {
    static CACHE: LazyLock<Mutex<BTreeMap<u32, (CyclicSchedule, CyclicSchedule)>>> =
        LazyLock::new(|| Mutex::new(BTreeMap::new()));
    if let Some(p) = CACHE.lock().expect("cache lock").get(&k) {
        return Ok(p.clone());
    }
    let pair = normalized_pair(case_for(k), k, CommodityId(0), CommodityId(1))?;
    CACHE.lock().expect("cache lock").insert(k, pair.clone());
    Ok(pair)
}

pub fn build_pair(couple: &Sub1Couple) -> Result<GadgetSchedule> {
    let k = couple.log2_ratio();
    let spec = case_for(k);
    let (sa, sb) = cached_pair(k)?;
    let scale = rational::from_f64(couple.t_a)?;
    let mut policy = CyclicPolicy::new();
    policy.insert(couple.a.id, sa.scaled(&scale));
    policy.insert(couple.b.id, sb.scaled(&scale));
    Ok(GadgetSchedule { case: spec.case, log2_ratio: k, a: couple.a.id, b: couple.b.id, policy })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Equal to the claim within the relative tolerance.
    Equal,
    Below,
    Above,
}

impl Comparison {
    fn of(measured: &Rational, claimed: &Rational, tol: f64) -> Comparison {
        let diff = rational::to_f64(&(measured - claimed));
        if diff.abs() <= tol * rational::to_f64(claimed).abs() {
            Comparison::Equal
        } else if diff < 0.0 {
            Comparison::Below
        } else {
            Comparison::Above
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub measured: f64,
    pub claimed: f64,
    pub measured_exact: String,
    pub claimed_exact: String,
    pub comparison: Comparison,
}

impl Measured {
    fn new(m: &Rational, c: &Rational, tol: f64) -> Measured {
        Measured {
            measured: rational::to_f64(m),
            claimed: rational::to_f64(c),
            measured_exact: m.to_string(),
            claimed_exact: c.to_string(),
            comparison: Comparison::of(m, c, tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetReport {
    pub case: u8,
    pub log2_ratio: u32,
    /// Peak over `gamma_A T_A / 2 + gamma_B T_B / 2` with A's space rescaled
    /// so both SOSI peaks agree.
    pub peak_ratio: Measured,
    pub peak_epoch: f64,
    pub blowup_a: Measured,
    pub blowup_b: Measured,
    pub blowup_tight: bool,
    /// Peak with the true space coefficients against
    /// `(1 + eps) * 7/8 * (gamma_A T_A + gamma_B T_B)`.
    pub actual_peak: f64,
    pub actual_peak_bound: f64,
    pub actual_peak_ok: bool,
    pub mass_balance_ok: bool,
    pub nonnegative_ok: bool,
    pub verified: bool,
    pub failures: Vec<String>,
}

pub const VERIFY_TOL: f64 = 1e-9;

/// Long-run cost of one schedule in exact arithmetic.
fn exact_cost(c: &Commodity, s: &CyclicSchedule) -> Result<Rational> {
    let k = rational::from_f64(c.k)?;
    let h = rational::from_f64(c.h)?;
    let m = Rational::from_integer((s.order_count() as i64).into());
    Ok((k * m + rational::int(2) * h * s.inventory_integral()) / s.cycle())
}

fn exact_eoq_cost(c: &Commodity, t: f64) -> Result<Rational> {
    let t = rational::from_f64(t)?;
    Ok(rational::from_f64(c.k)? / &t + rational::from_f64(c.h)? * t)
}

/// Recomputes peak and costs with the general evaluator and compares them
/// with the case constants.
pub fn verify_gadget(couple: &Sub1Couple, g: &GadgetSchedule) -> Result<GadgetReport> {
    let spec = g.spec();
    let sa = g.policy.get(couple.a.id).ok_or(Error::MissingSchedule(couple.a.id))?;
    let sb = g.policy.get(couple.b.id).ok_or(Error::MissingSchedule(couple.b.id))?;
    let ev = Evaluator { sample_grid: 0, ..Evaluator::default() };

    // Rescale A's space so that gamma_A T_A equals gamma_B T_B; exact since
    // the intervals differ by a power of two.
    let gamma_a_norm = couple.b.gamma * (couple.t_b / couple.t_a);
    let norm = Instance::new(1.0, vec![Commodity { gamma: gamma_a_norm, ..couple.a }, couple.b])?;
    let w = ev
        .joint_peak(&norm, &g.policy)?
        .ok_or_else(|| Error::GadgetUnsupported("joint peak could not be computed exactly".into()))?;
    let base = rational::from_f64(couple.b.gamma)? * rational::from_f64(couple.t_b)?;
    let ratio = &w.value / &base;
    let peak_ratio = Measured::new(&ratio, &spec.peak_ratio, VERIFY_TOL);

    let actual = Instance::new(1.0, vec![couple.a, couple.b])?;
    let actual_peak = ev
        .joint_peak(&actual, &g.policy)?
        .map(|w| rational::to_f64(&w.value))
        .unwrap_or(f64::INFINITY);
    let actual_peak_bound =
        (1.0 + couple.eps) * 0.875 * (couple.a.gamma * couple.t_a + couple.b.gamma * couple.t_b);

    let ba = exact_cost(&couple.a, sa)? / exact_eoq_cost(&couple.a, couple.t_a)?;
    let bb = exact_cost(&couple.b, sb)? / exact_eoq_cost(&couple.b, couple.t_b)?;
    let blowup_a = Measured::new(&ba, &spec.blowup_a, VERIFY_TOL);
    let blowup_b = Measured::new(&bb, &spec.blowup_b, VERIFY_TOL);

    let mass_balance_ok = [sa, sb].iter().all(|s| s.orders().iter().map(|o| &o.qty).sum::<Rational>() == *s.cycle());
    let nonnegative_ok = [sa, sb].iter().all(|s| !s.i0().is_negative());

    let mut failures = Vec::new();
    if peak_ratio.comparison != Comparison::Equal {
        failures.push(format!(
            "peak ratio {} ({}) differs from claimed {} ({})",
            peak_ratio.measured_exact, peak_ratio.measured, peak_ratio.claimed_exact, peak_ratio.claimed
        ));
    }
    for (name, m) in [("A", &blowup_a), ("B", &blowup_b)] {
        let ok = if spec.blowup_tight { m.comparison == Comparison::Equal } else { m.comparison != Comparison::Above };
        if !ok {
            failures.push(format!("cost blow-up of {name} is {} against claimed {}", m.measured_exact, m.claimed_exact));
        }
    }
    let actual_peak_ok = actual_peak <= actual_peak_bound * (1.0 + VERIFY_TOL);
    if !actual_peak_ok {
        failures.push(format!("peak {actual_peak} exceeds {actual_peak_bound}"));
    }
    Ok(GadgetReport {
        case: g.case,
        log2_ratio: g.log2_ratio,
        peak_ratio,
        peak_epoch: rational::to_f64(&w.epoch),
        blowup_a,
        blowup_b,
        blowup_tight: spec.blowup_tight,
        actual_peak,
        actual_peak_bound,
        actual_peak_ok,
        mass_balance_ok,
        nonnegative_ok,
        verified: failures.is_empty() && mass_balance_ok && nonnegative_ok,
        failures,
    })
}

/// Unit-parameter couple for case `case`: `T_A = 1`, `K = H = 1`, and
/// space coefficients making both SOSI peaks one. `k` picks the exponent
/// for the open-ended case.
pub fn unit_couple(case: u8, k_open: u32) -> Result<Sub1Couple> {
    let spec = case_by_id(case).ok_or_else(|| Error::InvalidParameter(format!("no gadget case {case}")))?;
    let k = spec.log2_ratio.unwrap_or(k_open.max(spec.min_log2_ratio));
    let t_b = (0.5f64).powi(k as i32);
    Sub1Couple::new(Commodity::new(0, 1.0, 1.0, 1.0), Commodity::new(1, 1.0, 1.0, 1.0 / t_b), 1.0, t_b, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use proptest::prelude::*;

    /// Joint peak over the breakpoints, computed directly from order epochs
    /// without the evaluator.
    fn brute_peak(sa: &CyclicSchedule, sb: &CyclicSchedule, ga: &Rational, gb: &Rational) -> Rational {
        let mut times = vec![Rational::zero()];
        times.extend(sa.orders().iter().map(|o| o.time.clone()));
        times.extend(sb.orders().iter().map(|o| o.time.clone()));
        times
            .iter()
            .map(|t| ga * sa.inventory_at(t) + gb * sb.inventory_at(t))
            .max()
            .unwrap()
    }

    #[test]
    fn peaks_in_normalized_units() {
        // Hand values: epochs listed in the construction for each case.
        let expected = [
            (1, 0, ratio(3, 2), ratio(0, 1)),
            (2, 1, ratio(5, 3), ratio(0, 1)),
            (3, 2, ratio(27, 16), ratio(5, 32)),
            (4, 3, ratio(2201, 1280), ratio(51, 256)),
            // A is scaled to 31/32, so at t = 0 the space is 31/32 + 3/4.
            (5, 4, ratio(55, 32), ratio(0, 1)),
            (6, 5, ratio(7, 4), ratio(3, 8)),
        ];
        for (case, k, peak, epoch) in expected {
            let spec = case_by_id(case).unwrap();
            let (sa, sb) = normalized_pair(spec, k, CommodityId(0), CommodityId(1)).unwrap();
            let ga = rational::one();
            let gb = rational::pow2(k as i32);
            assert_eq!(brute_peak(&sa, &sb, &ga, &gb), peak, "case {case}");
            let c = unit_couple(case, k).unwrap();
            let g = build_pair(&c).unwrap();
            let w = Evaluator::default()
                .joint_peak(&Instance::new(1.0, vec![c.a, c.b]).unwrap(), &g.policy)
                .unwrap()
                .unwrap();
            assert_eq!(w.value, peak, "case {case}");
            if case != 6 {
                assert_eq!(w.epoch, epoch, "case {case}");
            }
        }
    }

    #[test]
    fn case_four_epochs() {
        let spec = case_by_id(4).unwrap();
        let (_, sb) = normalized_pair(spec, 3, CommodityId(0), CommodityId(1)).unwrap();
        let times: Vec<Rational> = sb.orders().iter().map(|o| o.time.clone()).collect();
        let expected = [
            ratio(3, 32),
            ratio(51, 256),
            ratio(407, 1280),
            ratio(567, 1280),
            ratio(727, 1280),
            ratio(887, 1280),
            ratio(1047, 1280),
            ratio(15, 16),
        ];
        assert_eq!(times, expected);
    }

    #[test]
    fn verification_outcomes() {
        for case in 1..=6u8 {
            let c = unit_couple(case, 6).unwrap();
            let g = build_pair(&c).unwrap();
            let r = verify_gadget(&c, &g).unwrap();
            assert!(r.mass_balance_ok && r.nonnegative_ok && r.actual_peak_ok);
            assert_ne!(r.peak_ratio.comparison, Comparison::Above, "case {case}");
            assert_ne!(r.blowup_a.comparison, Comparison::Above);
            assert_ne!(r.blowup_b.comparison, Comparison::Above);
            if case == 5 {
                assert_eq!(r.peak_ratio.comparison, Comparison::Below);
                assert!(!r.verified);
            } else {
                assert!(r.verified, "case {case}: {:?}", r.failures);
            }
        }
    }

    #[test]
    fn case_six_blowup_is_exact() {
        let c = Sub1Couple::new(
            Commodity::new(3, 2.5, 0.75, 1.0),
            Commodity::new(4, 0.1, 9.0, 64.0),
            1.5,
            1.5 / 64.0,
            0.0,
        )
        .unwrap();
        let g = build_pair(&c).unwrap();
        assert_eq!(g.case, 6);
        let r = verify_gadget(&c, &g).unwrap();
        assert_eq!(r.blowup_b.measured_exact, "33/32");
        assert_eq!(r.blowup_a.measured_exact, "1");
    }

    #[test]
    fn case_five_cost_at_eoq_optimum() {
        let c = unit_couple(5, 4).unwrap();
        let c = Sub1Couple { b: Commodity { k: 1.0 / 256.0, ..c.b }, ..c };
        let g = build_pair(&c).unwrap();
        let r = verify_gadget(&c, &g).unwrap();
        assert_eq!(r.blowup_b.measured_exact, "761/744");
        assert_eq!(r.blowup_a.measured_exact, "1985/1984");
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(classify_case(1.0, 0.3).is_err());
        assert_eq!(classify_case(0.125, 1.0).unwrap(), 4);
        let a = Commodity::new(0, 1.0, 1.0, 1.0);
        assert!(Sub1Couple::new(a, a, 1.0, 0.3, 0.1).is_err());
        // Peak spaces 1 and 2 are not near for eps = 0.5.
        assert!(Sub1Couple::new(a, Commodity { gamma: 4.0, ..a }, 1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn exponent_detection() {
        assert_eq!(exact_log2(1.0), Some(0));
        assert_eq!(exact_log2(0.125), Some(-3));
        assert_eq!(exact_log2(1024.0), Some(10));
        assert_eq!(exact_log2(3.0), None);
    }

    proptest! {
        #[test]
        fn peak_ratio_is_scale_free(k in 0u32..8, ta in 0.01f64..100.0, gb in 0.1f64..10.0, ka in 0.1f64..10.0, hb in 0.1f64..10.0) {
            let tb = ta * (0.5f64).powi(k as i32);
            let ga = gb * tb / ta;
            let c = Sub1Couple::new(Commodity::new(0, ka, 1.0, ga), Commodity::new(1, 1.0, hb, gb), ta, tb, 0.0).unwrap();
            let g = build_pair(&c).unwrap();
            let r = verify_gadget(&c, &g).unwrap();
            let spec = g.spec();
            let (sa, sb) = normalized_pair(spec, k, CommodityId(0), CommodityId(1)).unwrap();
            let expect = brute_peak(&sa, &sb, &rational::one(), &rational::pow2(k as i32));
            prop_assert_eq!(r.peak_ratio.measured_exact, expect.to_string());
            prop_assert!(r.peak_ratio.comparison != Comparison::Above);
            prop_assert!(r.blowup_a.comparison != Comparison::Above);
            prop_assert!(r.blowup_b.comparison != Comparison::Above);
            prop_assert!(r.actual_peak_ok);
        }
    }
}
