use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{CommodityId, CyclicPolicy, CyclicSchedule, Instance};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommodityStats {
    pub avg_inventory: f64,
    pub long_run_cost: f64,
    pub order_rate: f64,
    pub peak_inventory: f64,
}

/// Everything the evaluator can say about a policy.
///
/// `peak_space_exact` is present when the joint peak was computed exactly:
/// either the cycle lengths have a common multiple within the event budget,
/// or every group of equal cycle lengths peaks at time zero so the sum of
/// group peaks is attained. `peak_space_upper` is always a valid bound and
/// `peak_space_sampled_lower` is the best value seen on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCertificate {
    pub per_commodity: BTreeMap<CommodityId, CommodityStats>,
    pub total_cost: f64,
    pub avg_space: f64,
    pub peak_space_exact: Option<f64>,
    pub peak_space_upper: f64,
    pub peak_space_sampled_lower: f64,
    pub peak_epoch: Option<f64>,
    pub hyperperiod: Option<f64>,
    pub components: usize,
}

impl PolicyCertificate {
    /// The tightest sound upper bound on peak space.
    pub fn peak_space(&self) -> f64 {
        self.peak_space_exact.unwrap_or(self.peak_space_upper)
    }

    pub fn avg_inventory(&self, id: CommodityId) -> Option<f64> {
        self.per_commodity.get(&id).map(|s| s.avg_inventory)
    }

    pub fn cost(&self, id: CommodityId) -> Option<f64> {
        self.per_commodity.get(&id).map(|s| s.long_run_cost)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeakWitness {
    pub value: Rational,
    pub epoch: Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakBound {
    Exact,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub bound: PeakBound,
    pub peak_space: f64,
    pub capacity: f64,
    pub witness_epoch: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Evaluator {
    /// Largest number of order events a joint sweep may enumerate.
    pub event_budget: u64,
    /// Probe count for the sampled lower bound; zero skips sampling.
    pub sample_grid: usize,
}

impl Default for Evaluator {
    fn default() -> Self {
        Evaluator { event_budget: 1_000_000, sample_grid: 1000 }
    }
}

struct Member<'a> {
    gamma: Rational,
    schedule: &'a CyclicSchedule,
}

struct Component<'a> {
    cycle: Rational,
    members: Vec<Member<'a>>,
    orders: u64,
}

impl Evaluator {
    pub fn evaluate(&self, instance: &Instance, policy: &CyclicPolicy) -> Result<PolicyCertificate> {
        check_coverage(instance, policy)?;
        let mut per_commodity = BTreeMap::new();
        let mut total_cost = 0.0;
        let mut avg_space = 0.0;
        for c in &instance.commodities {
            let s = &policy.schedules[&c.id];
            let avg = rational::to_f64(&s.average_inventory());
            let rate = s.order_count() as f64 / rational::to_f64(s.cycle());
            let cost = c.k * rate + 2.0 * c.h * avg;
            total_cost += cost;
            avg_space += c.gamma * avg;
            per_commodity.insert(
                c.id,
                CommodityStats {
                    avg_inventory: avg,
                    long_run_cost: cost,
                    order_rate: rate,
                    peak_inventory: rational::to_f64(&s.peak().0),
                },
            );
        }
        let peaks = self.peaks(instance, policy)?;
        let horizon = match &peaks.hyperperiod {
            Some(p) => rational::to_f64(p),
            None => policy.schedules.values().map(|s| rational::to_f64(s.cycle())).fold(0.0, f64::max),
        };
        let sampled = sampled_peak(instance, policy, horizon, self.sample_grid);
        Ok(PolicyCertificate {
            per_commodity,
            total_cost,
            avg_space,
            peak_space_exact: peaks.exact.as_ref().map(|w| rational::to_f64(&w.value)),
            peak_space_upper: rational::to_f64(&peaks.upper),
            peak_space_sampled_lower: sampled,
            peak_epoch: peaks.exact.as_ref().map(|w| rational::to_f64(&w.epoch)),
            hyperperiod: peaks.hyperperiod.as_ref().map(rational::to_f64),
            components: peaks.components,
        })
    }

    /// Exact joint peak when one can be certified.
    pub fn joint_peak(&self, instance: &Instance, policy: &CyclicPolicy) -> Result<Option<PeakWitness>> {
        check_coverage(instance, policy)?;
        Ok(self.peaks(instance, policy)?.exact)
    }

    fn peaks(&self, instance: &Instance, policy: &CyclicPolicy) -> Result<Peaks> {
        let comps = components(instance, policy)?;
        let comp_peaks: Vec<(Rational, Rational)> = comps
            .par_iter()
            .map(|c| {
                let refs: Vec<&Member> = c.members.iter().collect();
                if c.orders <= self.event_budget {
                    sweep(&refs, &c.cycle)
                } else {
                    // Too many events even for one component: per-commodity peaks.
                    let v: Rational = c.members.iter().map(|m| &m.gamma * m.schedule.peak().0).sum();
                    (v, Rational::from_integer((-1).into()))
                }
            })
            .collect();
        let upper: Rational = comp_peaks.iter().map(|p| &p.0).sum();
        let hyper = hyperperiod_of(&comps, self.event_budget);
        let exact = if comps.len() == 1 && comp_peaks[0].1 >= Rational::zero() {
            Some(PeakWitness { value: comp_peaks[0].0.clone(), epoch: comp_peaks[0].1.clone() })
        } else if comp_peaks.iter().all(|p| p.1.is_zero()) {
            Some(PeakWitness { value: upper.clone(), epoch: Rational::zero() })
        } else if let Some(h) = &hyper {
            let all: Vec<&Member> = comps.iter().flat_map(|c| c.members.iter()).collect();
            let (v, t) = sweep(&all, h);
            Some(PeakWitness { value: v, epoch: t })
        } else {
            None
        };
        Ok(Peaks { exact, upper, hyperperiod: hyper, components: comps.len() })
    }
}

struct Peaks {
    exact: Option<PeakWitness>,
    upper: Rational,
    hyperperiod: Option<Rational>,
    components: usize,
}

fn check_coverage(instance: &Instance, policy: &CyclicPolicy) -> Result<()> {
    for c in &instance.commodities {
        if !policy.schedules.contains_key(&c.id) {
            return Err(Error::MissingSchedule(c.id));
        }
    }
    if policy.len() != instance.len() {
        let extra = policy.schedules.keys().find(|id| instance.get(**id).is_none()).copied();
        if let Some(id) = extra {
            return Err(Error::InvalidSchedule { id, reason: "not a commodity of the instance".into() });
        }
    }
    Ok(())
}

/// Groups schedules with identical cycle lengths.
fn components<'a>(instance: &Instance, policy: &'a CyclicPolicy) -> Result<Vec<Component<'a>>> {
    let mut by_cycle: BTreeMap<&Rational, Component<'a>> = BTreeMap::new();
    for c in &instance.commodities {
        let s = &policy.schedules[&c.id];
        let comp = by_cycle
            .entry(s.cycle())
            .or_insert_with(|| Component { cycle: s.cycle().clone(), members: Vec::new(), orders: 0 });
        comp.members.push(Member { gamma: rational::from_f64(c.gamma)?, schedule: s });
        comp.orders += s.order_count() as u64;
    }
    Ok(by_cycle.into_values().collect())
}

fn hyperperiod_of(comps: &[Component], budget: u64) -> Option<Rational> {
    let mut p: Option<Rational> = None;
    for c in comps {
        let next = match &p {
            None => c.cycle.clone(),
            Some(q) => rational::lcm(q, &c.cycle),
        };
        // Events over one hyperperiod, recomputed as the period grows.
        let mut events: u64 = 0;
        for d in comps {
            let reps = (&next / &d.cycle).to_integer().to_u64()?;
            events = events.checked_add(reps.checked_mul(d.orders)?)?;
            if events > budget {
                return None;
            }
        }
        p = Some(next);
    }
    p
}

/// Common period of all cycle lengths if one sweep over it stays within
/// `event_budget` order events.
pub fn hyperperiod(policy: &CyclicPolicy, event_budget: u64) -> Option<Rational> {
    let mut by_cycle: BTreeMap<&Rational, u64> = BTreeMap::new();
    for s in policy.schedules.values() {
        *by_cycle.entry(s.cycle()).or_default() += s.order_count() as u64;
    }
    let comps: Vec<Component> =
        by_cycle.into_iter().map(|(c, n)| Component { cycle: c.clone(), members: Vec::new(), orders: n }).collect();
    if comps.is_empty() {
        return None;
    }
    hyperperiod_of(&comps, event_budget)
}

/// Maximum of total space over `[0, horizon)`. Space only rises at order
/// epochs, so the maximum sits at time zero or right after some epoch.
/// Runs in integers over common denominators of times and coefficients.
fn sweep(members: &[&Member], horizon: &Rational) -> (Rational, Rational) {
    let dt = rational::common_denominator(
        std::iter::once(horizon).chain(members.iter().flat_map(|m| {
            let s = m.schedule;
            std::iter::once(s.cycle()).chain(std::iter::once(s.i0())).chain(s.orders().iter().flat_map(|o| [&o.time, &o.qty]))
        })),
    );
    let dg = rational::common_denominator(members.iter().map(|m| &m.gamma));
    let mut events: Vec<(BigInt, BigInt)> = Vec::new();
    let mut level = BigInt::zero();
    let mut rate = BigInt::zero();
    for m in members {
        let g = rational::over(&m.gamma, &dg);
        level += &g * rational::over(m.schedule.i0(), &dt);
        let cycle = rational::over(m.schedule.cycle(), &dt);
        let reps = (horizon / m.schedule.cycle()).to_integer().to_u64().unwrap_or(1).max(1);
        for r in 0..reps {
            let shift = &cycle * r;
            for o in m.schedule.orders() {
                events.push((rational::over(&o.time, &dt) + &shift, &g * rational::over(&o.qty, &dt)));
            }
        }
        rate += g;
    }
    events.sort_by(|a, b| a.0.cmp(&b.0));
    let mut best = (level.clone(), BigInt::zero());
    let mut last = BigInt::zero();
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0.clone();
        level -= &rate * (&t - &last);
        while i < events.len() && events[i].0 == t {
            level += &events[i].1;
            i += 1;
        }
        if level > best.0 {
            best = (level.clone(), t.clone());
        }
        last = t;
    }
    (Rational::new(best.0, &dt * &dg), Rational::new(best.1, dt))
}

struct FloatSchedule {
    gamma: f64,
    cycle: f64,
    i0: f64,
    times: Vec<f64>,
    cum: Vec<f64>,
}

impl FloatSchedule {
    fn level(&self, t: f64) -> f64 {
        let s = t.rem_euclid(self.cycle);
        let k = self.times.partition_point(|&x| x <= s);
        let got = if k == 0 { 0.0 } else { self.cum[k - 1] };
        self.i0 + got - s
    }
}

fn sampled_peak(instance: &Instance, policy: &CyclicPolicy, horizon: f64, grid: usize) -> f64 {
    if grid == 0 || horizon <= 0.0 {
        return 0.0;
    }
    let fs: Vec<FloatSchedule> = instance
        .commodities
        .iter()
        .map(|c| {
            let s = &policy.schedules[&c.id];
            let mut acc = 0.0;
            FloatSchedule {
                gamma: c.gamma,
                cycle: rational::to_f64(s.cycle()),
                i0: rational::to_f64(s.i0()),
                times: s.orders().iter().map(|o| rational::to_f64(&o.time)).collect(),
                cum: s
                    .orders()
                    .iter()
                    .map(|o| {
                        acc += rational::to_f64(&o.qty);
                        acc
                    })
                    .collect(),
            }
        })
        .collect();
    (0..grid)
        .into_par_iter()
        .map(|k| {
            let t = horizon * k as f64 / grid as f64;
            fs.iter().map(|f| f.gamma * f.level(t)).sum::<f64>()
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

pub fn evaluate_policy(instance: &Instance, policy: &CyclicPolicy, sample_grid: usize) -> Result<PolicyCertificate> {
    Evaluator { sample_grid, ..Evaluator::default() }.evaluate(instance, policy)
}

pub fn joint_peak(instance: &Instance, policy: &CyclicPolicy) -> Result<Option<PeakWitness>> {
    Evaluator::default().joint_peak(instance, policy)
}

/// Compares the tightest certified peak against capacity with relative
/// tolerance `tol`.
pub fn check_capacity_feasible(instance: &Instance, policy: &CyclicPolicy, tol: f64) -> Result<FeasibilityReport> {
    let cert = Evaluator { sample_grid: 0, ..Evaluator::default() }.evaluate(instance, policy)?;
    Ok(feasibility_of(&cert, instance.capacity, tol))
}

pub fn feasibility_of(cert: &PolicyCertificate, capacity: f64, tol: f64) -> FeasibilityReport {
    let (bound, peak) = match cert.peak_space_exact {
        Some(v) => (PeakBound::Exact, v),
        None => (PeakBound::Upper, cert.peak_space_upper),
    };
    FeasibilityReport {
        feasible: peak <= capacity * (1.0 + tol),
        bound,
        peak_space: peak,
        capacity,
        witness_epoch: cert.peak_epoch,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub commodity_id: CommodityId,
    pub inventory: f64,
    pub total_space: f64,
}

/// Inventory of every commodity at each breakpoint in `[0, horizon]`, left
/// limit first, then the value after the orders at that epoch.
pub fn trace_policy(instance: &Instance, policy: &CyclicPolicy, horizon: &Rational) -> Result<Vec<TraceRow>> {
    check_coverage(instance, policy)?;
    let mut times: Vec<Rational> = vec![Rational::zero(), horizon.clone()];
    for s in policy.schedules.values() {
        let reps = (horizon / s.cycle()).ceil().to_integer().to_u64().unwrap_or(0);
        for r in 0..=reps {
            for o in s.orders() {
                let t = &o.time + s.cycle() * Rational::from_integer(r.into());
                if &t <= horizon {
                    times.push(t);
                }
            }
        }
    }
    times.sort();
    times.dedup();
    let gammas: Vec<(CommodityId, f64)> = instance.commodities.iter().map(|c| (c.id, c.gamma)).collect();
    let mut rows = Vec::new();
    for t in &times {
        let mut sides = vec![];
        if !t.is_zero() {
            sides.push(true);
        }
        sides.push(false);
        for left in sides {
            let levels: Vec<f64> = gammas
                .iter()
                .map(|(id, _)| {
                    let s = &policy.schedules[id];
                    let v = s.inventory_at(t);
                    let jump: Rational = if left {
                        let local = rational::rem_euclid(t, s.cycle());
                        s.orders().iter().filter(|o| o.time == local).map(|o| o.qty.clone()).sum()
                    } else {
                        Rational::zero()
                    };
                    rational::to_f64(&(v - jump))
                })
                .collect();
            let total: f64 = levels.iter().zip(&gammas).map(|(l, (_, g))| l * g).sum();
            for ((id, _), l) in gammas.iter().zip(&levels) {
                rows.push(TraceRow { t: rational::to_f64(t), commodity_id: *id, inventory: *l, total_space: total });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sosi_to_cyclic, Commodity, SosiEntry, SosiVector};
    use crate::rational::{int, ratio};

    fn pair_instance() -> Instance {
        Instance::new(10.0, vec![Commodity::new(1, 1.0, 1.0, 1.0), Commodity::new(2, 1.0, 1.0, 3.0)]).unwrap()
    }

    fn sosi(entries: &[(u32, f64, f64)]) -> CyclicPolicy {
        let v = SosiVector {
            entries: entries
                .iter()
                .map(|&(id, t, p)| (CommodityId(id), SosiEntry { interval: t, phase: p }))
                .collect(),
        };
        sosi_to_cyclic(&v).unwrap()
    }

    /// Dense grid oracle evaluated directly from the SOSI formula.
    fn grid_peak(entries: &[(f64, f64, f64)], horizon: f64, n: usize) -> f64 {
        (0..n)
            .map(|k| {
                let t = horizon * k as f64 / n as f64;
                entries
                    .iter()
                    .map(|&(g, tt, phi)| {
                        let since = (t - phi).rem_euclid(tt);
                        g * (tt - since)
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn two_sosi_peak_at_zero() {
        let inst = pair_instance();
        let p = sosi(&[(1, 1.0, 0.0), (2, 1.0 / 3.0, 0.0)]);
        let w = joint_peak(&inst, &p).unwrap().unwrap();
        assert!((rational::to_f64(&w.value) - 2.0).abs() < 1e-15);
        assert!(w.epoch.is_zero());
        let oracle = grid_peak(&[(1.0, 1.0, 0.0), (3.0, 1.0 / 3.0, 0.0)], 1.0, 1_000_000);
        assert!((oracle - 2.0).abs() < 1e-5);
    }

    #[test]
    fn shifted_phases_match_grid() {
        let inst = pair_instance();
        let p = sosi(&[(1, 1.0, 0.0), (2, 0.5, 0.25)]);
        let cert = evaluate_policy(&inst, &p, 4000).unwrap();
        let oracle = grid_peak(&[(1.0, 1.0, 0.0), (3.0, 0.5, 0.25)], 1.0, 1_000_000);
        let exact = cert.peak_space_exact.unwrap();
        assert!((exact - oracle).abs() < 1e-5, "{exact} vs {oracle}");
        assert!(cert.peak_space_sampled_lower <= exact + 1e-12);
        assert!(exact <= cert.peak_space_upper + 1e-12);
        assert_eq!(cert.hyperperiod, Some(1.0));
    }

    #[test]
    fn hyperperiod_of_fractions() {
        let inst = pair_instance();
        let mut p = CyclicPolicy::new();
        for (id, c) in [(1, ratio(2, 3)), (2, ratio(3, 5))] {
            let s = CyclicSchedule::with_tight_i0(
                CommodityId(id),
                c.clone(),
                vec![super::super::Order { time: int(0), qty: c }],
            )
            .unwrap();
            p.insert(CommodityId(id), s);
        }
        assert_eq!(hyperperiod(&p, 1000), Some(int(6)));
        assert_eq!(hyperperiod(&p, 10), None);
        let cert = evaluate_policy(&inst, &p, 0).unwrap();
        assert_eq!(cert.hyperperiod, Some(6.0));
    }

    #[test]
    fn single_sosi_peak() {
        let inst = Instance::new(1.0, vec![Commodity::new(7, 1.0, 1.0, 4.0)]).unwrap();
        let p = sosi(&[(7, 0.25, 0.0)]);
        let r = check_capacity_feasible(&inst, &p, 0.0).unwrap();
        assert!(r.feasible);
        assert_eq!(r.peak_space, 1.0);
        assert_eq!(r.bound, PeakBound::Exact);
    }

    #[test]
    fn incommensurate_cycles_fall_back_to_upper_bound() {
        let inst = pair_instance();
        let p = sosi(&[(1, 1.0, 0.0), (2, std::f64::consts::FRAC_1_SQRT_2, 0.3)]);
        let e = Evaluator { event_budget: 1000, sample_grid: 500 };
        let cert = e.evaluate(&inst, &p).unwrap();
        assert!(cert.peak_space_exact.is_none());
        assert!((cert.peak_space_upper - (1.0 + 3.0 * std::f64::consts::FRAC_1_SQRT_2)).abs() < 1e-12);
        assert!(cert.peak_space_sampled_lower <= cert.peak_space_upper);
    }

    #[test]
    fn cost_matches_eoq_formula_for_sosi() {
        let inst = Instance::new(10.0, vec![Commodity::new(1, 3.0, 2.0, 1.0)]).unwrap();
        let p = sosi(&[(1, 0.75, 0.1)]);
        let cert = evaluate_policy(&inst, &p, 0).unwrap();
        assert!((cert.total_cost - (3.0 / 0.75 + 2.0 * 0.75)).abs() < 1e-12);
        assert!((cert.avg_space - 0.375).abs() < 1e-15);
    }

    #[test]
    fn missing_schedule_is_rejected() {
        let inst = pair_instance();
        let p = sosi(&[(1, 1.0, 0.0)]);
        assert!(matches!(evaluate_policy(&inst, &p, 0), Err(Error::MissingSchedule(_))));
    }

    #[test]
    fn trace_has_both_limits() {
        let inst = Instance::new(10.0, vec![Commodity::new(1, 1.0, 1.0, 2.0)]).unwrap();
        let p = sosi(&[(1, 1.0, 0.5)]);
        let rows = trace_policy(&inst, &p, &int(1)).unwrap();
        let at_half: Vec<f64> = rows.iter().filter(|r| r.t == 0.5).map(|r| r.inventory).collect();
        assert_eq!(at_half, vec![0.0, 1.0]);
        assert_eq!(rows[0].total_space, 1.0);
    }
}
