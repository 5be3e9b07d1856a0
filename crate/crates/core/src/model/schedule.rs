use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::CommodityId;
use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order {
    pub time: Rational,
    pub qty: Rational,
}

/// Replenishment pattern of one commodity repeated with period `cycle`.
///
/// `i0` is the inventory just before time 0, which by periodicity equals
/// the inventory just before `cycle`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CyclicSchedule {
    cycle: Rational,
    orders: Vec<Order>,
    i0: Rational,
}

impl CyclicSchedule {
    /// Builds and validates a schedule. Orders may come in any order; orders
    /// at the same epoch are merged.
    pub fn new(id: CommodityId, cycle: Rational, orders: Vec<Order>, i0: Rational) -> Result<Self> {
        let bad = |reason: String| Error::InvalidSchedule { id, reason };
        if !cycle.is_positive() {
            return Err(bad(format!("cycle length {cycle} is not positive")));
        }
        if orders.is_empty() {
            return Err(bad("no orders".into()));
        }
        if i0.is_negative() {
            return Err(bad(format!("initial inventory {i0} is negative")));
        }
        let mut orders = orders;
        orders.sort_by(|a, b| a.time.cmp(&b.time));
        let mut merged: Vec<Order> = Vec::with_capacity(orders.len());
        for o in orders {
            if o.time.is_negative() || o.time >= cycle {
                return Err(bad(format!("order time {} outside [0, {cycle})", o.time)));
            }
            if !o.qty.is_positive() {
                return Err(bad(format!("order quantity {} at {} is not positive", o.qty, o.time)));
            }
            match merged.last_mut() {
                Some(last) if last.time == o.time => last.qty += o.qty,
                _ => merged.push(o),
            }
        }
        let total: Rational = merged.iter().map(|o| &o.qty).sum();
        if total != cycle {
            return Err(bad(format!("ordered quantity {total} differs from demand {cycle} over one cycle")));
        }
        let s = CyclicSchedule { cycle, orders: merged, i0 };
        if let Some(t) = s.first_stockout() {
            return Err(Error::NegativeInventory { id, time: rational::to_f64(&t) });
        }
        Ok(s)
    }

    /// Builds a schedule whose initial inventory is the least value keeping
    /// inventory nonnegative. For zero-inventory-ordering patterns this is
    /// exactly the inventory carried over the cycle boundary.
    pub fn with_tight_i0(id: CommodityId, cycle: Rational, orders: Vec<Order>) -> Result<Self> {
        let mut sorted = orders.clone();
        sorted.sort_by(|a, b| a.time.cmp(&b.time));
        let mut cum = Rational::zero();
        let mut need = Rational::zero();
        for o in &sorted {
            let deficit = &o.time - &cum;
            if deficit > need {
                need = deficit;
            }
            cum += &o.qty;
        }
        Self::new(id, cycle, orders, need)
    }

    /// Consecutive orders covering `lengths` back to back, the first one at
    /// `start`, wrapped into `[0, cycle)`.
    pub fn back_to_back(id: CommodityId, cycle: Rational, start: &Rational, lengths: &[Rational]) -> Result<Self> {
        let mut t = start.clone();
        let mut orders = Vec::with_capacity(lengths.len());
        for l in lengths {
            orders.push(Order { time: rational::rem_euclid(&t, &cycle), qty: l.clone() });
            t += l;
        }
        Self::with_tight_i0(id, cycle, orders)
    }

    pub fn cycle(&self) -> &Rational {
        &self.cycle
    }

    pub fn orders(&self) -> &[Order] {
        &self.orders
    }

    pub fn i0(&self) -> &Rational {
        &self.i0
    }

    pub fn order_count(&self) -> usize {
        self.orders.len()
    }

    fn first_stockout(&self) -> Option<Rational> {
        let mut level = self.i0.clone();
        let mut last = Rational::zero();
        for o in &self.orders {
            level -= &o.time - &last;
            if level.is_negative() {
                return Some(o.time.clone());
            }
            level += &o.qty;
            last = o.time.clone();
        }
        None
    }

    /// Inventory right after time `t` (right-continuous).
    pub fn inventory_at(&self, t: &Rational) -> Rational {
        let s = rational::rem_euclid(t, &self.cycle);
        let mut level = &self.i0 - &s;
        for o in &self.orders {
            if o.time > s {
                break;
            }
            level += &o.qty;
        }
        level
    }

    /// Integral of inventory over one cycle.
    pub fn inventory_integral(&self) -> Rational {
        // Integer arithmetic over a common denominator d: twice the area
        // times d^2 is a sum of 2 L len - len^2 terms.
        let d = self.denominator();
        let mut twice = BigInt::zero();
        let mut level = rational::over(&self.i0, &d);
        let mut last = BigInt::zero();
        for o in &self.orders {
            let t = rational::over(&o.time, &d);
            let len = &t - &last;
            if len.is_positive() {
                twice += (&level * 2 - &len) * &len;
            }
            level -= &len;
            level += rational::over(&o.qty, &d);
            last = t;
        }
        let len = rational::over(&self.cycle, &d) - &last;
        if len.is_positive() {
            twice += (&level * 2 - &len) * &len;
        }
        Rational::new(twice, d.pow(2u32) * 2)
    }

    /// Common denominator of every quantity in the schedule.
    pub(crate) fn denominator(&self) -> BigInt {
        rational::common_denominator(
            std::iter::once(&self.cycle)
                .chain(std::iter::once(&self.i0))
                .chain(self.orders.iter().flat_map(|o| [&o.time, &o.qty])),
        )
    }

    pub fn average_inventory(&self) -> Rational {
        self.inventory_integral() / &self.cycle
    }

    /// Highest inventory level over the cycle with the epoch attaining it.
    pub fn peak(&self) -> (Rational, Rational) {
        let mut best = (self.i0.clone(), Rational::zero());
        let mut level = self.i0.clone();
        let mut last = Rational::zero();
        for o in &self.orders {
            level -= &o.time - &last;
            level += &o.qty;
            last = o.time.clone();
            if level > best.0 {
                best = (level.clone(), o.time.clone());
            }
        }
        best
    }

    /// True when every order arrives exactly as inventory runs out.
    pub fn is_zio(&self) -> bool {
        let mut level = self.i0.clone();
        let mut last = Rational::zero();
        for o in &self.orders {
            level -= &o.time - &last;
            if !level.is_zero() {
                return false;
            }
            level += &o.qty;
            last = o.time.clone();
        }
        true
    }

    /// Stretches time by `factor`: cycle, epochs, quantities and the initial
    /// inventory all scale together, which keeps the schedule feasible.
    pub fn scaled(&self, factor: &Rational) -> CyclicSchedule {
        CyclicSchedule {
            cycle: &self.cycle * factor,
            orders: self
                .orders
                .iter()
                .map(|o| Order { time: &o.time * factor, qty: &o.qty * factor })
                .collect(),
            i0: &self.i0 * factor,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CyclicPolicy {
    pub schedules: BTreeMap<CommodityId, CyclicSchedule>,
}

impl CyclicPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: CommodityId, s: CyclicSchedule) {
        self.schedules.insert(id, s);
    }

    pub fn get(&self, id: CommodityId) -> Option<&CyclicSchedule> {
        self.schedules.get(&id)
    }

    pub fn len(&self) -> usize {
        self.schedules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedules.is_empty()
    }

    /// Adds every schedule of `other`; fails when an id appears in both.
    pub fn merge(&mut self, other: CyclicPolicy) -> Result<()> {
        for (id, s) in other.schedules {
            if self.schedules.insert(id, s).is_some() {
                return Err(Error::InvalidSchedule { id, reason: "assigned twice while merging policies".into() });
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: &Rational) -> CyclicPolicy {
        CyclicPolicy { schedules: self.schedules.iter().map(|(id, s)| (*id, s.scaled(factor))).collect() }
    }
}

/// Stationary order size, stationary interval: one order of size `t` every
/// `t` time units, the first at `phase`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SosiEntry {
    pub interval: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SosiVector {
    pub entries: BTreeMap<CommodityId, SosiEntry>,
}

impl SosiVector {
    pub fn with_zero_phases(intervals: impl IntoIterator<Item = (CommodityId, f64)>) -> Self {
        SosiVector {
            entries: intervals.into_iter().map(|(id, t)| (id, SosiEntry { interval: t, phase: 0.0 })).collect(),
        }
    }

    pub fn interval(&self, id: CommodityId) -> Option<f64> {
        self.entries.get(&id).map(|e| e.interval)
    }

    /// Every interval multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> SosiVector {
        SosiVector {
            entries: self
                .entries
                .iter()
                .map(|(id, e)| (*id, SosiEntry { interval: e.interval * factor, phase: e.phase * factor }))
                .collect(),
        }
    }
}

/// Exact cyclic form of a SOSI vector.
pub fn sosi_to_cyclic(v: &SosiVector) -> Result<CyclicPolicy> {
    let mut p = CyclicPolicy::new();
    for (id, e) in &v.entries {
        p.insert(*id, sosi_schedule(*id, e.interval, e.phase)?);
    }
    Ok(p)
}

pub(crate) fn sosi_schedule(id: CommodityId, interval: f64, phase: f64) -> Result<CyclicSchedule> {
    if !(interval.is_finite() && interval > 0.0) {
        return Err(Error::InvalidSchedule { id, reason: format!("interval {interval} is not positive") });
    }
    let t = rational::from_f64(interval)?;
    let phi = rational::rem_euclid(&rational::from_f64(phase)?, &t);
    Ok(CyclicSchedule { i0: phi.clone(), orders: vec![Order { time: phi, qty: t.clone() }], cycle: t })
}
