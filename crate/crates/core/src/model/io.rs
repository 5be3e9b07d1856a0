//! JSON and CSV formats.

use serde::de::{self, Deserializer};
use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use std::collections::BTreeMap;
use std::io::Write;

use super::{CommodityId, CyclicPolicy, CyclicSchedule, Instance, Order, TraceRow};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// `{"capacity": .., "commodities": [{"id", "K", "H", "gamma"}]}`
pub type InstanceFile = Instance;

impl Instance {
    pub fn from_json(text: &str) -> Result<Instance> {
        let inst: Instance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScheduleFile {
    #[serde(with = "rational::pair")]
    cycle: Rational,
    orders: Vec<OrderQuad>,
    #[serde(with = "rational::pair")]
    i0: Rational,
}

/// `[t_num, t_den, q_num, q_den]`
#[derive(Debug, Clone)]
struct OrderQuad(Order);

impl Serialize for OrderQuad {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let o = &self.0;
        let mut t = s.serialize_tuple(4)?;
        for n in [o.time.numer(), o.time.denom(), o.qty.numer(), o.qty.denom()] {
            let raw = RawValue::from_string(n.to_string()).map_err(serde::ser::Error::custom)?;
            t.serialize_element(&raw)?;
        }
        t.end()
    }
}

impl<'de> Deserialize<'de> for OrderQuad {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw: Vec<Box<RawValue>> = Vec::deserialize(d)?;
        if raw.len() != 4 {
            return Err(de::Error::custom("order must be [t_num, t_den, q_num, q_den]"));
        }
        let n: Vec<_> = raw
            .iter()
            .map(|r| rational::parse_int(r.get()))
            .collect::<Result<_>>()
            .map_err(de::Error::custom)?;
        if n[1] == 0.into() || n[3] == 0.into() {
            return Err(de::Error::custom("zero denominator"));
        }
        Ok(OrderQuad(Order {
            time: Rational::new(n[0].clone(), n[1].clone()),
            qty: Rational::new(n[2].clone(), n[3].clone()),
        }))
    }
}

/// `{"schedules": {"<id>": {"cycle": [n, d], "orders": [[..4..]], "i0": [n, d]}}}`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    schedules: BTreeMap<String, ScheduleFile>,
}

impl PolicyFile {
    pub fn from_policy(p: &CyclicPolicy) -> PolicyFile {
        PolicyFile {
            schedules: p
                .schedules
                .iter()
                .map(|(id, s)| {
                    (
                        id.to_string(),
                        ScheduleFile {
                            cycle: s.cycle().clone(),
                            orders: s.orders().iter().cloned().map(OrderQuad).collect(),
                            i0: s.i0().clone(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn into_policy(self) -> Result<CyclicPolicy> {
        let mut p = CyclicPolicy::new();
        for (key, s) in self.schedules {
            let id = CommodityId(key.parse().map_err(|_| Error::Parse(format!("bad commodity id {key:?}")))?);
            let orders = s.orders.into_iter().map(|q| q.0).collect();
            p.insert(id, CyclicSchedule::new(id, s.cycle, orders, s.i0)?);
        }
        Ok(p)
    }
}

impl CyclicPolicy {
    pub fn from_json(text: &str) -> Result<CyclicPolicy> {
        serde_json::from_str::<PolicyFile>(text)?.into_policy()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&PolicyFile::from_policy(self))?)
    }
}

/// Writes `t,commodity_id,inventory,total_space` rows.
pub fn write_trace_csv<W: Write>(mut w: W, rows: &[TraceRow]) -> Result<()> {
    writeln!(w, "t,commodity_id,inventory,total_space")?;
    for r in rows {
        writeln!(w, "{:.17e},{},{:.17e},{:.17e}", r.t, r.commodity_id, r.inventory, r.total_space)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Commodity;
    use crate::rational::{int, ratio};

    #[test]
    fn instance_round_trip() {
        let text = r#"{"capacity": 2.5, "commodities": [{"id": 3, "K": 1.5, "H": 0.25, "gamma": 2}]}"#;
        let inst = Instance::from_json(text).unwrap();
        assert_eq!(inst.commodities[0], Commodity::new(3, 1.5, 0.25, 2.0));
        assert_eq!(Instance::from_json(&inst.to_json().unwrap()).unwrap(), inst);
        assert!(Instance::from_json(r#"{"capacity": -1, "commodities": []}"#).is_err());
    }

    #[test]
    fn policy_round_trip_is_bit_exact() {
        let id = CommodityId(4);
        let t = rational::from_f64(0.1).unwrap();
        let s = CyclicSchedule::back_to_back(id, &t * int(3), &ratio(1, 7), &[t.clone(), t.clone(), t.clone()]).unwrap();
        let mut p = CyclicPolicy::new();
        p.insert(id, s);
        let text = p.to_json().unwrap();
        assert!(text.starts_with(r#"{"schedules":{"4":{"cycle":["#));
        assert_eq!(CyclicPolicy::from_json(&text).unwrap(), p);
    }

    #[test]
    fn policy_json_is_validated() {
        let bad = r#"{"schedules": {"1": {"cycle": [1, 1], "orders": [[0, 1, 1, 2]], "i0": [0, 1]}}}"#;
        assert!(CyclicPolicy::from_json(bad).is_err());
        let good = r#"{"schedules": {"1": {"cycle": [1, 1], "orders": [[1, 2, 1, 1]], "i0": [1, 2]}}}"#;
        assert!(CyclicPolicy::from_json(good).is_ok());
    }
}
