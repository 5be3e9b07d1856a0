//! Literal guessing for toy instances.
//!
//! Every guess the construction would need (class types, prefix
//! memberships, suffix sizes, volume overestimates) is enumerated, each
//! guess is turned into policies for all three scenarios, and the cheapest
//! policy after shrinking to capacity wins. Only runs when the number of
//! options is small.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::classify::{class_count, prefix_budget, ClassKind};
use super::mimic::{class_cap, mimicking_partition_with, ClassTarget};
use super::run::{prefix_part, relax_part, shrink_to_fit};
use super::suffix_dense::build_with_volume;
use super::Sub2Config;
use crate::error::{Error, Result};
use crate::model::{CommodityId, CyclicPolicy, Instance};
use crate::po2sync::ClassIndex;
use crate::rng::Streams;

pub const ENUMERATION_CAP: f64 = 1e6;

const KINDS: [ClassKind; 3] = [ClassKind::Prefix, ClassKind::Suffix, ClassKind::Dense];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerateOutcome {
    pub predicted: f64,
    /// Guesses that produced a policy.
    pub evaluated: u64,
    /// Guesses rejected as inconsistent.
    pub rejected: u64,
    pub best_cost: f64,
    /// `easy_sparse`, `difficult_lowD` or `difficult_dense`.
    pub best_scenario: String,
    pub best_guess: String,
    #[serde(skip)]
    pub best_policy: CyclicPolicy,
}

fn grid_len(eps: f64) -> usize {
    (1.0 / eps).ceil() as usize + 1
}

fn dense_options(d: usize, eps: f64) -> usize {
    (2.0 * d as f64 / eps).ceil() as usize
}

fn kinds_of(code: usize, m: usize) -> Vec<ClassKind> {
    let mut c = code;
    (0..m)
        .map(|_| {
            let k = KINDS[c % 3];
            c /= 3;
            k
        })
        .collect()
}

fn indices(l: u32) -> Vec<ClassIndex> {
    (1..=l).map(ClassIndex::Finite).chain([ClassIndex::Infinity]).collect()
}

/// Number of options the literal guessing would try.
pub fn predicted_options(n: usize, eps: f64, sparse_threshold: f64) -> f64 {
    let l = class_count(n, eps);
    let m = l as usize + 1;
    if m >= 13 {
        return 3f64.powi(m as i32);
    }
    let sizes = sparse_threshold.floor() + 1.0;
    let g = grid_len(eps) as f64;
    (0..3usize.pow(m as u32))
        .map(|code| {
            let ks = kinds_of(code, m);
            let p = ks.iter().filter(|k| **k == ClassKind::Prefix).count();
            let s = ks.iter().filter(|k| **k == ClassKind::Suffix).count();
            let d = ks.iter().filter(|k| **k == ClassKind::Dense).count();
            // The negligible class needs no volume guess.
            let d_finite = d - usize::from(ks[m - 1] == ClassKind::Dense);
            (p as f64 + 1.0).powi(n as i32) * sizes.powi(s as i32) * g * (dense_options(d, eps) as f64).powi(d_finite as i32)
        })
        .sum()
}

#[derive(Debug, Clone)]
struct Best {
    cost: f64,
    scenario: &'static str,
    guess: String,
    policy: CyclicPolicy,
}

#[derive(Default)]
struct Tally {
    evaluated: u64,
    rejected: u64,
    best: Option<Best>,
}

impl Tally {
    fn offer(&mut self, cost: f64, scenario: &'static str, guess: impl FnOnce() -> String, policy: CyclicPolicy) {
        self.evaluated += 1;
        if self.best.as_ref().is_none_or(|b| cost < b.cost) {
            self.best = Some(Best { cost, scenario, guess: guess(), policy });
        }
    }

    fn absorb(&mut self, other: Tally) {
        self.evaluated += other.evaluated;
        self.rejected += other.rejected;
        if let Some(b) = other.best {
            if self.best.as_ref().is_none_or(|s| b.cost < s.cost) {
                self.best = Some(b);
            }
        }
    }
}

struct Ctx<'a> {
    instance: &'a Instance,
    cfg: &'a Sub2Config,
    eps_v: f64,
    grid: Vec<f64>,
    thr: f64,
}

impl Ctx<'_> {
    fn finish(&self, policy: &CyclicPolicy) -> Result<(f64, CyclicPolicy)> {
        let cert = self.cfg.evaluator.evaluate(self.instance, policy)?;
        let s = (cert.peak_space() / self.instance.capacity).max(1.0);
        let (p, _, c) = shrink_to_fit(self.instance, policy, s, &self.cfg.evaluator)?;
        Ok((c.total_cost, p))
    }
}

/// Enumerates every guess and returns the cheapest resulting policy.
pub fn enumerate_sub2(instance: &Instance, cfg: &Sub2Config) -> Result<EnumerateOutcome> {
    cfg.validate()?;
    instance.validate()?;
    let n = instance.len();
    let eps = cfg.eps;
    let thr = cfg.sparse_threshold();
    let predicted = predicted_options(n, eps, thr);
    if predicted > ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge { predicted, cap: ENUMERATION_CAP });
    }
    let eps_v = eps * instance.capacity;
    let ctx = Ctx {
        instance,
        cfg,
        eps_v,
        grid: (0..grid_len(eps)).map(|k| k as f64 * eps_v).collect(),
        thr,
    };
    let l = class_count(n, eps);
    let idx = indices(l);
    let m = idx.len();
    let all: BTreeSet<CommodityId> = instance.commodities.iter().map(|c| c.id).collect();

    let mut tally = Tally::default();
    // Whole instance under one relaxation: independent of the class guesses.
    for &g in ctx.grid.iter().filter(|g| **g > 0.0) {
        let (p, _) = relax_part(instance, &all, 2.0 * g, &cfg.evaluator, "all")?;
        let (cost, p) = ctx.finish(&p)?;
        tally.offer(cost, "difficult_lowD", || format!("total volume {g}"), p);
    }

    let per_type: Vec<Result<Tally>> =
        (0..3usize.pow(m as u32)).into_par_iter().map(|code| per_type_vector(&ctx, &idx, &kinds_of(code, m))).collect();
    for t in per_type {
        tally.absorb(t?);
    }
    let best = tally.best.ok_or_else(|| Error::Infeasible("no guess produced a policy".into()))?;
    Ok(EnumerateOutcome {
        predicted,
        evaluated: tally.evaluated,
        rejected: tally.rejected,
        best_cost: best.cost,
        best_scenario: best.scenario.into(),
        best_guess: best.guess,
        best_policy: best.policy,
    })
}

fn per_type_vector(ctx: &Ctx, idx: &[ClassIndex], kinds: &[ClassKind]) -> Result<Tally> {
    let instance = ctx.instance;
    let cfg = ctx.cfg;
    let n = instance.len();
    let pick = |k: ClassKind| -> Vec<ClassIndex> { idx.iter().zip(kinds).filter(|p| *p.1 == k).map(|p| *p.0).collect() };
    let prefix = pick(ClassKind::Prefix);
    let suffix = pick(ClassKind::Suffix);
    let dense = pick(ClassKind::Dense);
    let delta = prefix_budget(cfg.eps) as usize;
    let max_size = ctx.thr.floor() as usize;
    let mut tally = Tally::default();
    let describe = |members: &[usize]| format!("types {kinds:?}, prefix membership {members:?}");

    for code in 0..(prefix.len() + 1).pow(n as u32) {
        // members[i] = position in `prefix`, or prefix.len() for the rest.
        let mut c = code;
        let members: Vec<usize> = (0..n)
            .map(|_| {
                let v = c % (prefix.len() + 1);
                c /= prefix.len() + 1;
                v
            })
            .collect();
        let mut sizes = vec![0usize; prefix.len()];
        for &p in members.iter().filter(|p| **p < prefix.len()) {
            sizes[p] += 1;
        }
        if sizes.iter().any(|s| *s > max_size) || sizes.iter().filter(|s| **s > 0).count() > delta {
            tally.rejected += 1;
            continue;
        }
        let prefix_ids: BTreeSet<CommodityId> =
            instance.commodities.iter().zip(&members).filter(|p| *p.1 < prefix.len()).map(|p| p.0.id).collect();
        let u_ids: BTreeSet<CommodityId> =
            instance.commodities.iter().map(|c| c.id).filter(|id| !prefix_ids.contains(id)).collect();

        // Easy scenario: prefix solver plus one relaxation for the rest.
        let mut sink = Vec::new();
        let easy_prefix = if prefix_ids.is_empty() { None } else { Some(prefix_part(instance, &prefix_ids, cfg, &mut sink)?.0) };
        for &g in &ctx.grid {
            let mut p = easy_prefix.clone().unwrap_or_default();
            if !u_ids.is_empty() {
                p.merge(relax_part(instance, &u_ids, 2.0 * (g + ctx.eps_v), &cfg.evaluator, "suffix_dense")?.0)?;
            }
            let (cost, p) = ctx.finish(&p)?;
            tally.offer(cost, "easy_sparse", || format!("{}, dense volume {g}", describe(&members)), p);
        }

        // Difficult dense scenario: relaxed prefix plus the partition construction.
        let prefixes: Vec<(f64, CyclicPolicy)> = if prefix_ids.is_empty() {
            vec![(0.0, CyclicPolicy::new())]
        } else {
            ctx.grid
                .iter()
                .filter(|g| **g > 0.0)
                .map(|&g| Ok((g, relax_part(instance, &prefix_ids, 2.0 * g, &cfg.evaluator, "prefix")?.0)))
                .collect::<Result<_>>()?
        };
        if u_ids.is_empty() {
            for (g, p) in &prefixes {
                let (cost, p) = ctx.finish(p)?;
                tally.offer(cost, "difficult_dense", || format!("{}, prefix volume {g}", describe(&members)), p);
            }
            continue;
        }
        let u: Vec<CommodityId> = u_ids.iter().copied().collect();
        for_each_partition_guess(ctx, &suffix, &dense, u.len(), &mut |targets, v_dense, label| {
            let Ok(partition) = mimicking_partition_with(instance, &u, targets) else {
                tally.rejected += 1;
                return Ok(());
            };
            let sd = build_with_volume(instance, v_dense, &partition, cfg, &Streams::new(cfg.seed))?;
            for (g, pre) in &prefixes {
                let mut p = pre.clone();
                p.merge(sd.policy.clone())?;
                let (cost, p) = ctx.finish(&p)?;
                tally.offer(cost, "difficult_dense", || format!("{}, {label}, prefix volume {g}", describe(&members)), p);
            }
            Ok(())
        })?;
    }
    Ok(tally)
}

type GuessSink<'a> = dyn FnMut(&[ClassTarget], f64, String) -> Result<()> + 'a;

/// Calls `f` with degree targets for every suffix-size vector and every
/// vector of dense volume overestimates.
fn for_each_partition_guess(
    ctx: &Ctx,
    suffix: &[ClassIndex],
    dense: &[ClassIndex],
    u_len: usize,
    f: &mut GuessSink,
) -> Result<()> {
    let inst = ctx.instance;
    let (v, eps, n) = (inst.capacity, ctx.cfg.eps, inst.len());
    let max_size = ctx.thr.floor() as usize;
    let finite: Vec<ClassIndex> = dense.iter().copied().filter(|i| *i != ClassIndex::Infinity).collect();
    let unit = eps * v / dense.len().max(1) as f64;
    let opts = dense_options(dense.len(), eps);
    let lower = ctx.thr.ceil() as usize;
    for s_code in 0..(max_size + 1).pow(suffix.len() as u32) {
        let mut c = s_code;
        let sizes: Vec<usize> = suffix
            .iter()
            .map(|_| {
                let s = c % (max_size + 1);
                c /= max_size + 1;
                s
            })
            .collect();
        for v_code in 0..opts.pow(finite.len() as u32) {
            let mut c = v_code;
            let ks: Vec<usize> = finite
                .iter()
                .map(|_| {
                    let k = c % opts + 1;
                    c /= opts;
                    k
                })
                .collect();
            let vols: Vec<f64> = ks.iter().map(|&k| k as f64 * unit).collect();
            if vols.iter().sum::<f64>() > 2.0 * v {
                continue;
            }
            let mut targets = Vec::new();
            for (&i, &s) in suffix.iter().zip(&sizes) {
                if s > 0 {
                    targets.push(ClassTarget { index: i, kind: ClassKind::Suffix, lower: s, upper: s, cap: class_cap(v, eps, n, i) });
                }
            }
            for &i in dense {
                let upper = match finite.iter().position(|x| *x == i) {
                    Some(pos) => {
                        let ClassIndex::Finite(l) = i else { unreachable!() };
                        let nb = (1.0 + eps).powi(l as i32) * vols[pos] / v;
                        (nb * (1.0 + 1e-12)).floor() as usize
                    }
                    None => u_len,
                };
                targets.push(ClassTarget { index: i, kind: ClassKind::Dense, lower, upper, cap: class_cap(v, eps, n, i) });
            }
            f(&targets, vols.iter().sum(), format!("suffix sizes {sizes:?}, dense volumes {vols:?}"))?;
        }
    }
    Ok(())
}
