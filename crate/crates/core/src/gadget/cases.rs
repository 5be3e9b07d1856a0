//! Case table for the pairwise synchronization gadgets, loaded from
//! `data/gadget_cases.json` and checked on first use.

use serde::Deserialize;
use std::sync::LazyLock;

use crate::rational::{self, Rational};

const TABLE: &str = include_str!("../../data/gadget_cases.json");

#[derive(Deserialize)]
struct RawTable {
    cases: Vec<RawCase>,
}

#[derive(Deserialize)]
struct RawCase {
    case: u8,
    log2_ratio: Option<u32>,
    min_log2_ratio: Option<u32>,
    a_scale: [i64; 2],
    b_start: [i64; 2],
    segments: Vec<RawSegment>,
    peak_ratio: [i64; 2],
    blowup_a: [i64; 2],
    blowup_b: [i64; 2],
    blowup_tight: bool,
}

#[derive(Deserialize)]
struct RawSegment {
    span: [i64; 2],
    order: [i64; 2],
}

/// A run of equal orders of B: `span` of normalized time (A's interval is
/// one) covered by orders of length `order * T_B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub span: Rational,
    pub order: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseSpec {
    pub case: u8,
    /// `log2(T_A / T_B)`; `None` for the open-ended last case.
    pub log2_ratio: Option<u32>,
    pub min_log2_ratio: u32,
    /// Common cycle of both schedules relative to `T_A`.
    pub a_scale: Rational,
    pub b_start: Rational,
    pub segments: Vec<Segment>,
    pub peak_ratio: Rational,
    pub blowup_a: Rational,
    pub blowup_b: Rational,
    /// Whether the blow-ups hold with equality for every K and H.
    pub blowup_tight: bool,
}

impl CaseSpec {
    pub fn matches(&self, k: u32) -> bool {
        match self.log2_ratio {
            Some(r) => r == k,
            None => k >= self.min_log2_ratio,
        }
    }

    /// Order lengths of B in normalized time for `T_B = 2^-k`.
    pub fn b_lengths(&self, k: u32) -> Result<Vec<Rational>, String> {
        let tb = rational::pow2(-(k as i32));
        let mut out = Vec::new();
        for s in &self.segments {
            let len = &s.order * &tb;
            let count = &s.span / &len;
            if !count.is_integer() {
                return Err(format!("case {}: span {} is not a whole number of orders of {}", self.case, s.span, len));
            }
            let n: usize = count.to_integer().try_into().map_err(|_| "order count overflow".to_string())?;
            out.extend(std::iter::repeat_n(len, n));
        }
        Ok(out)
    }
}

fn r(p: [i64; 2]) -> Rational {
    rational::ratio(p[0], p[1])
}

fn load() -> Vec<CaseSpec> {
    let raw: RawTable = serde_json::from_str(TABLE).expect("gadget table is valid JSON");
    let specs: Vec<CaseSpec> = raw
        .cases
        .into_iter()
        .map(|c| CaseSpec {
            case: c.case,
            log2_ratio: c.log2_ratio,
            min_log2_ratio: c.min_log2_ratio.or(c.log2_ratio).unwrap_or(0),
            a_scale: r(c.a_scale),
            b_start: r(c.b_start),
            segments: c.segments.iter().map(|s| Segment { span: r(s.span), order: r(s.order) }).collect(),
            peak_ratio: r(c.peak_ratio),
            blowup_a: r(c.blowup_a),
            blowup_b: r(c.blowup_b),
            blowup_tight: c.blowup_tight,
        })
        .collect();
    for s in &specs {
        let total: Rational = s.segments.iter().map(|g| &g.span).sum();
        assert_eq!(total, s.a_scale, "case {}: segments must cover the common cycle", s.case);
        let k = s.log2_ratio.unwrap_or(s.min_log2_ratio);
        if let Err(e) = s.b_lengths(k) {
            panic!("{e}");
        }
    }
    specs
}

pub static CASES: LazyLock<Vec<CaseSpec>> = LazyLock::new(load);

pub fn case_for(k: u32) -> &'static CaseSpec {
    CASES.iter().find(|c| c.matches(k)).expect("every ratio exponent has a case")
}

pub fn case_by_id(case: u8) -> Option<&'static CaseSpec> {
    CASES.iter().find(|c| c.case == case)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn table_loads_and_covers_all_exponents() {
        assert_eq!(CASES.len(), 6);
        for k in 0..12 {
            let c = case_for(k);
            assert_eq!(c.case as u32, (k + 1).min(6));
        }
    }

    #[test]
    fn order_counts() {
        let c5 = case_by_id(5).unwrap();
        let l = c5.b_lengths(4).unwrap();
        assert_eq!(l.len(), 16);
        assert_eq!(l.iter().filter(|x| **x == ratio(3, 64)).count(), 6);
        let c6 = case_by_id(6).unwrap();
        assert_eq!(c6.b_lengths(5).unwrap().len(), 16 + 8 + 9);
        assert_eq!(c6.b_lengths(7).unwrap().len(), 64 + 32 + 36);
    }
}
