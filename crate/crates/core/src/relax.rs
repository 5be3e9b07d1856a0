//! The stationary-interval relaxation `min sum C_i(T_i)` subject to
//! `sum gamma_i T_i <= budget`, the classical 2-approximation built on it,
//! and the equal-spacing transformation of zero-inventory schedules.

use serde::{Deserialize, Serialize};

use crate::eoq::EoqParams;
use crate::error::{Error, Result};
use crate::model::{
    sosi_to_cyclic, CommodityId, CyclicSchedule, Evaluator, Instance, Order, PolicyCertificate, SosiVector,
};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxSolution {
    pub intervals: SosiVector,
    pub objective: f64,
    /// Multiplier of the space constraint; absent for the discretized solver.
    pub dual: Option<f64>,
    pub budget: f64,
    pub budget_used: f64,
    /// Largest relative violation of stationarity over all commodities.
    pub kkt_residual: f64,
}

const MAX_BISECTION: usize = 200;

fn interval_at(c: &crate::model::Commodity, lambda: f64) -> f64 {
    (c.k / (c.h + lambda * c.gamma)).sqrt()
}

fn space_at(instance: &Instance, lambda: f64) -> f64 {
    instance.commodities.iter().map(|c| c.gamma * interval_at(c, lambda)).sum()
}

/// Exact optimum via the Lagrangian: `T_i(l) = sqrt(K_i / (H_i + l gamma_i))`
/// with `l` found by bisection so the space constraint is tight.
pub fn solve_relax_exact(instance: &Instance, budget: f64) -> Result<RelaxSolution> {
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::InvalidParameter(format!("budget must be positive, got {budget}")));
    }
    let lambda = if space_at(instance, 0.0) <= budget {
        0.0
    } else {
        let mut hi = 1.0f64;
        while space_at(instance, hi) > budget {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Infeasible("space budget too small to bracket the multiplier".into()));
            }
        }
        let mut lo = 0.0f64;
        for _ in 0..MAX_BISECTION {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if space_at(instance, mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let intervals =
        SosiVector::with_zero_phases(instance.commodities.iter().map(|c| (c.id, interval_at(c, lambda))));
    let kkt = instance
        .commodities
        .iter()
        .map(|c| {
            let t = interval_at(c, lambda);
            let g = c.h + lambda * c.gamma;
            (-c.k / (t * t) + g).abs() / g
        })
        .fold(0.0, f64::max);
    Ok(finish(instance, intervals, Some(lambda), budget, kkt))
}

fn finish(instance: &Instance, intervals: SosiVector, dual: Option<f64>, budget: f64, kkt: f64) -> RelaxSolution {
    let mut objective = 0.0;
    let mut used = 0.0;
    for c in &instance.commodities {
        let t = intervals.entries[&c.id].interval;
        objective += c.eoq().cost(t);
        used += c.gamma * t;
    }
    RelaxSolution { intervals, objective, dual, budget, budget_used: used, kkt_residual: kkt }
}

/// Optimum of the relaxation with twice the warehouse capacity, a lower
/// bound on the cost of every capacity-feasible cyclic policy.
pub fn lower_bound(instance: &Instance) -> Result<f64> {
    Ok(solve_relax_exact(instance, 2.0 * instance.capacity)?.objective)
}

/// Knapsack-style discretization: the budget is split into
/// `ceil(2n/eps)` equal units, every commodity receives a whole number of
/// units and orders at the capped EOQ interval its units allow. Its
/// objective is within a factor `1 + eps` of the exact optimum.
pub fn solve_relax_dp(instance: &Instance, budget: f64, eps: f64) -> Result<RelaxSolution> {
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::InvalidParameter(format!("budget must be positive, got {budget}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1], got {eps}")));
    }
    let n = instance.len();
    let units = (2.0 * n as f64 / eps).ceil() as usize;
    if (n as f64) * (units as f64) > 4e8 {
        return Err(Error::InvalidParameter(format!("table of {n} x {units} cells is too large")));
    }
    let unit = budget / units as f64;
    let alloc = allocate_units(instance, units, unit);
    let intervals = SosiVector::with_zero_phases(
        instance
            .commodities
            .iter()
            .zip(&alloc)
            .map(|(c, &b)| (c.id, c.eoq().capped(b as f64 * unit / c.gamma))),
    );
    Ok(finish(instance, intervals, None, budget, f64::NAN))
}

/// Cost of commodity `c` when granted `b >= 1` units.
fn unit_cost(c: &crate::model::Commodity, b: usize, unit: f64) -> f64 {
    let p = c.eoq();
    p.cost(p.capped(b as f64 * unit / c.gamma))
}

/// Table `best_j(b)` over commodities `1..=j` and units `b`, each commodity
/// taking at least one unit. Both the table rows and the per-commodity cost
/// sequences are convex in `b`, so each row is the min-plus convolution
/// obtained by merging increment sequences in increasing order.
fn allocate_units(instance: &Instance, units: usize, unit: f64) -> Vec<usize> {
    let n = instance.len();
    // Row j covers b in [j+1, units]; stored as first value plus increments.
    let mut row_incr: Vec<f64> = Vec::new();
    let mut splits: Vec<Vec<u32>> = Vec::with_capacity(n);
    for (j, c) in instance.commodities.iter().enumerate() {
        let span = units - n; // increments available to every row
        let own: Vec<f64> = (1..=span + 1).map(|b| unit_cost(c, b, unit)).collect();
        let own_incr: Vec<f64> = own.windows(2).map(|w| w[1] - w[0]).collect();
        let mut split = Vec::with_capacity(span + 1);
        split.push(1u32);
        if j == 0 {
            row_incr = own_incr;
            for k in 0..span {
                split.push(k as u32 + 2);
            }
        } else {
            let (mut a, mut b) = (0usize, 0usize);
            let mut merged = Vec::with_capacity(span);
            while merged.len() < span {
                let take_own = a >= row_incr.len() || (b < own_incr.len() && own_incr[b] < row_incr[a]);
                if take_own {
                    merged.push(own_incr[b]);
                    b += 1;
                } else {
                    merged.push(row_incr[a]);
                    a += 1;
                }
                split.push(b as u32 + 1);
            }
            row_incr = merged;
        }
        splits.push(split);
    }
    // Row j is indexed from b = j + 1; the last row uses all units.
    let mut alloc = vec![0usize; n];
    let mut extra = units - n;
    for j in (0..n).rev() {
        let take = splits[j][extra] as usize;
        alloc[j] = take;
        extra -= take - 1;
    }
    alloc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalOutcome {
    pub sosi: SosiVector,
    pub certificate: PolicyCertificate,
    pub relaxation: RelaxSolution,
}

/// Solve the relaxation with budget `2V`, halve every interval, align all
/// phases at zero. Peak space is then exactly half the relaxed budget use,
/// and cost is at most twice the relaxed optimum.
pub fn classical_two_approx(instance: &Instance) -> Result<ClassicalOutcome> {
    classical_two_approx_with(instance, &Evaluator { sample_grid: 256, ..Evaluator::default() })
}

pub fn classical_two_approx_with(instance: &Instance, evaluator: &Evaluator) -> Result<ClassicalOutcome> {
    let relaxation = solve_relax_exact(instance, 2.0 * instance.capacity)?;
    let sosi = relaxation.intervals.scaled(0.5);
    let certificate = evaluator.evaluate(instance, &sosi_to_cyclic(&sosi)?)?;
    Ok(ClassicalOutcome { sosi, certificate, relaxation })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sosified {
    pub schedule: CyclicSchedule,
    pub avg_inventory_before: f64,
    pub avg_inventory_after: f64,
    pub cost_before: f64,
    pub cost_after: f64,
}

/// Replaces a zero-inventory-ordering schedule by one with the same number
/// of orders, equally spaced. The order rate is unchanged and average
/// inventory can only drop, from `sum d^2 / (2 tau)` to `tau / (2m)`.
pub fn sosify(id: CommodityId, schedule: &CyclicSchedule, params: &EoqParams) -> Result<Sosified> {
    if !schedule.is_zio() {
        return Err(Error::InvalidSchedule { id, reason: "not a zero-inventory-ordering schedule".into() });
    }
    let m = schedule.order_count();
    let step = schedule.cycle() / Rational::from_integer((m as i64).into());
    let orders = (0..m)
        .map(|k| Order { time: &step * Rational::from_integer((k as i64).into()), qty: step.clone() })
        .collect();
    let out = CyclicSchedule::new(id, schedule.cycle().clone(), orders, rational::zero())?;
    let cost = |s: &CyclicSchedule| {
        let rate = s.order_count() as f64 / rational::to_f64(s.cycle());
        params.k * rate + 2.0 * params.h * rational::to_f64(&s.average_inventory())
    };
    Ok(Sosified {
        avg_inventory_before: rational::to_f64(&schedule.average_inventory()),
        avg_inventory_after: rational::to_f64(&out.average_inventory()),
        cost_before: cost(schedule),
        cost_after: cost(&out),
        schedule: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_capacity_feasible, Commodity};
    use crate::rational::{int, ratio};
    use proptest::prelude::*;

    fn random_instance(n: usize, seed: u64) -> Instance {
        use rand::Rng;
        let mut rng = crate::rng::Streams::new(seed).stream(0);
        let cs = (0..n)
            .map(|i| {
                Commodity::new(i as u32, rng.random_range(0.5..20.0), rng.random_range(0.1..5.0), rng.random_range(0.2..4.0))
            })
            .collect::<Vec<_>>();
        let free: f64 = cs.iter().map(|c| c.gamma * (c.k / c.h).sqrt()).sum();
        Instance::new(free * rng.random_range(0.1..0.6), cs).unwrap()
    }

    /// Straight O(n U^2) table over unit counts.
    fn naive_dp(instance: &Instance, budget: f64, eps: f64) -> f64 {
        let n = instance.len();
        let units = (2.0 * n as f64 / eps).ceil() as usize;
        let unit = budget / units as f64;
        let inf = f64::INFINITY;
        let mut best = vec![0.0; units + 1];
        for (j, c) in instance.commodities.iter().enumerate() {
            let mut next = vec![inf; units + 1];
            for b in (j + 1)..=units {
                for own in 1..=(b - j) {
                    let prev = if j == 0 {
                        if b == own { 0.0 } else { inf }
                    } else {
                        best[b - own]
                    };
                    let v = prev + unit_cost(c, own, unit);
                    if v < next[b] {
                        next[b] = v;
                    }
                }
            }
            best = next;
        }
        best.iter().copied().fold(inf, f64::min)
    }

    #[test]
    fn two_identical_commodities_match_grid() {
        let inst =
            Instance::new(0.5, vec![Commodity::new(1, 1.0, 1.0, 1.0), Commodity::new(2, 1.0, 1.0, 1.0)]).unwrap();
        let s = solve_relax_exact(&inst, 1.0).unwrap();
        assert!((s.objective - 5.0).abs() < 1e-9);
        for e in s.intervals.entries.values() {
            assert!((e.interval - 0.5).abs() < 1e-12);
        }
        // Grid oracle over T_1 at resolution 1e-4, with T_2 = 1 - T_1.
        let p = EoqParams::new(1.0, 1.0);
        let grid = (1..10_000).map(|i| {
            let t = i as f64 * 1e-4;
            p.cost(t) + p.cost(1.0 - t)
        });
        let best = grid.fold(f64::INFINITY, f64::min);
        assert!((best - s.objective).abs() < 1e-6);
        assert!(s.kkt_residual < 1e-12);
    }

    #[test]
    fn slack_budget_gives_eoq() {
        let inst = Instance::new(100.0, vec![Commodity::new(1, 4.0, 1.0, 1.0)]).unwrap();
        let s = solve_relax_exact(&inst, 200.0).unwrap();
        assert_eq!(s.dual, Some(0.0));
        assert_eq!(s.intervals.interval(CommodityId(1)), Some(2.0));
    }

    #[test]
    fn dp_on_two_identical() {
        let inst =
            Instance::new(0.5, vec![Commodity::new(1, 1.0, 1.0, 1.0), Commodity::new(2, 1.0, 1.0, 1.0)]).unwrap();
        let s = solve_relax_dp(&inst, 1.0, 0.01).unwrap();
        assert!(s.objective >= 5.0 - 1e-12 && s.objective <= 5.05, "{}", s.objective);
        assert!(s.budget_used <= 1.0 + 1e-12);
    }

    #[test]
    fn dp_single_commodity_is_exact() {
        for budget in [0.3, 1.7, 10.0] {
            let inst = Instance::new(1.0, vec![Commodity::new(1, 3.0, 0.5, 1.3)]).unwrap();
            let e = solve_relax_exact(&inst, budget).unwrap();
            let d = solve_relax_dp(&inst, budget, 0.37).unwrap();
            assert!((e.objective - d.objective).abs() <= 1e-12 * e.objective, "{budget}");
        }
    }

    #[test]
    fn merged_table_matches_naive_table() {
        for seed in 0..20 {
            let inst = random_instance(2 + (seed as usize % 5), seed);
            let budget = 2.0 * inst.capacity;
            for eps in [0.5, 0.2] {
                let fast = solve_relax_dp(&inst, budget, eps).unwrap().objective;
                let slow = naive_dp(&inst, budget, eps);
                assert!((fast - slow).abs() <= 1e-9 * slow, "seed {seed}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn dp_within_one_plus_eps() {
        for seed in 0..10 {
            let inst = random_instance(5, 100 + seed);
            let budget = 2.0 * inst.capacity;
            let e = solve_relax_exact(&inst, budget).unwrap();
            let d = solve_relax_dp(&inst, budget, 0.1).unwrap();
            assert!(d.objective <= 1.1 * e.objective);
            assert!(d.objective >= e.objective * (1.0 - 1e-12));
        }
    }

    #[test]
    fn classical_small_example() {
        let inst = Instance::new(0.5, vec![Commodity::new(1, 4.0, 1.0, 1.0)]).unwrap();
        let out = classical_two_approx(&inst).unwrap();
        assert_eq!(out.sosi.interval(CommodityId(1)), Some(0.5));
        assert!((out.certificate.total_cost - 8.5).abs() < 1e-12);
        assert_eq!(out.certificate.peak_space_exact, Some(0.5));
        assert!((out.relaxation.objective - 5.0).abs() < 1e-12);
    }

    #[test]
    fn classical_chain_on_random_instances() {
        for seed in 0..20 {
            let inst = random_instance(30, seed);
            let out = classical_two_approx(&inst).unwrap();
            let p = sosi_to_cyclic(&out.sosi).unwrap();
            assert!(check_capacity_feasible(&inst, &p, 1e-12).unwrap().feasible);
            assert!(out.certificate.total_cost <= 2.0 * out.relaxation.objective * (1.0 + 1e-12));
            assert!(out.certificate.total_cost >= out.relaxation.objective);
        }
    }

    #[test]
    fn sosify_examples() {
        let id = CommodityId(1);
        let p = EoqParams::new(1.0, 1.0);
        let s = CyclicSchedule::with_tight_i0(
            id,
            int(1),
            vec![Order { time: int(0), qty: ratio(1, 5) }, Order { time: ratio(1, 5), qty: ratio(4, 5) }],
        )
        .unwrap();
        let out = sosify(id, &s, &p).unwrap();
        assert!((out.avg_inventory_before - 0.34).abs() < 1e-15);
        assert_eq!(out.avg_inventory_after, 0.25);
        assert!(out.cost_after <= out.cost_before);

        let s = CyclicSchedule::back_to_back(id, int(2), &int(0), &[int(1), ratio(1, 2), ratio(1, 2)]).unwrap();
        let out = sosify(id, &s, &p).unwrap();
        assert_eq!(out.avg_inventory_before, 0.375);
        assert!((out.avg_inventory_after - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(out.schedule.orders()[1].time, ratio(2, 3));
    }

    #[test]
    fn sosify_rejects_non_zio() {
        let id = CommodityId(1);
        let s = CyclicSchedule::new(id, int(1), vec![Order { time: int(0), qty: int(1) }], ratio(1, 2)).unwrap();
        assert!(sosify(id, &s, &EoqParams::new(1.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn exact_solution_is_feasible_and_tight(seed in 0u64..1000, n in 1usize..12) {
            let inst = random_instance(n, seed);
            let budget = 2.0 * inst.capacity;
            let s = solve_relax_exact(&inst, budget).unwrap();
            prop_assert!(s.budget_used <= budget * (1.0 + 1e-12));
            if s.dual.unwrap() > 0.0 {
                prop_assert!((s.budget_used - budget).abs() <= 1e-12 * budget);
            }
            prop_assert!(s.kkt_residual < 1e-9);
        }

        #[test]
        fn sosify_never_hurts(lengths in proptest::collection::vec(1u32..20, 1..8), start in 0u32..50) {
            let id = CommodityId(0);
            let ls: Vec<Rational> = lengths.iter().map(|&l| ratio(l as i64, 7)).collect();
            let cycle: Rational = ls.iter().sum();
            let s = CyclicSchedule::back_to_back(id, cycle, &ratio(start as i64, 13), &ls).unwrap();
            let out = sosify(id, &s, &EoqParams::new(2.0, 0.5)).unwrap();
            prop_assert!(out.schedule.average_inventory() <= s.average_inventory());
            prop_assert!(out.cost_after <= out.cost_before + 1e-12);
        }
    }
}
