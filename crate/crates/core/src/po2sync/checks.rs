//! Monte Carlo checks of the rounding and synchronization guarantees.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{
    build_class_policy, check_event_a, draw_theta, expected_ratio, lemma11_factor, lemma12_factor, pair_near_far,
    partition_heavy, po2_round_group, ClassBranch, Po2Config,
};
use crate::error::Result;
use crate::generate::heavy_class;
use crate::model::{CommodityId, Evaluator};
use crate::rng::Streams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub lines: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
}

impl CheckReport {
    pub fn new(name: &str) -> Self {
        CheckReport { name: name.into(), passed: true, lines: Vec::new(), metrics: BTreeMap::new() }
    }

    /// Appends a PASS/FAIL line and folds `ok` into the verdict.
    pub fn record(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("{} {line}", if ok { "PASS" } else { "FAIL" }));
    }

    fn metric(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.into(), v);
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Unbiasedness of rounded intervals and their reciprocals, and the
/// `[T/sqrt 2, sqrt 2 T]` envelope.
pub fn check_claim3(samples: usize, envelope_draws: usize, seed: u64) -> Result<CheckReport> {
    let mut rep = CheckReport::new("claim3");
    let target = expected_ratio();
    let streams = Streams::new(seed);
    // Member 0 is the group minimum (beta = 0); member 1 sits 2^2.3 above it.
    let input = [(CommodityId(0), 1.0), (CommodityId(1), 2.3f64.exp2())];
    let draws: Vec<[f64; 2]> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let theta = draw_theta(&mut streams.stream(i as u64));
            let g = po2_round_group(&input, theta).expect("valid group");
            [g.members[0].t_rounded / input[0].1, g.members[1].t_rounded / input[1].1]
        })
        .collect();
    for (m, label) in [(0usize, "T_hat = 1"), (1, "beta = 0.3")] {
        let up: Vec<f64> = draws.iter().map(|d| d[m]).collect();
        let down: Vec<f64> = up.iter().map(|x| 1.0 / x).collect();
        for (xs, what) in [(&up, "E[T/T_hat]"), (&down, "E[T_hat/T]")] {
            let (mean, se) = mean_se(xs);
            let ok = (mean - target).abs() <= 3.0 * se;
            rep.record(ok, format!("{label}: {what} = {mean:.6} vs {target:.6} (3 SE = {:.2e})", 3.0 * se));
            rep.metric(&format!("{what} {label}"), mean);
        }
    }
    let env = streams.child(1);
    let violations: usize = (0..envelope_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = env.stream(i as u64);
            let r = rng.random_range(0.0..6.0f64).exp2();
            let theta = draw_theta(&mut rng);
            let g = po2_round_group(&[(CommodityId(0), 1.0), (CommodityId(1), r)], theta).expect("valid group");
            g.members
                .iter()
                .filter(|m| {
                    let q = m.t_rounded / m.t_hat;
                    !(std::f64::consts::FRAC_1_SQRT_2 * (1.0 - 1e-12)..=std::f64::consts::SQRT_2 * (1.0 + 1e-12)).contains(&q)
                })
                .count()
        })
        .sum();
    rep.record(violations == 0, format!("envelope violated {violations} times in {envelope_draws} draws"));
    rep.metric("envelope_violations", violations as f64);
    Ok(rep)
}

/// Heavy-band group: `gamma T_hat / 2` in `(3/4, 1]`, log-uniform `gamma`.
pub fn heavy_band_group<R: Rng>(n: usize, first_id: u32, rng: &mut R) -> Vec<(CommodityId, f64, f64)> {
    (0..n)
        .map(|i| {
            let gamma = rng.random_range(0.0..5.0f64).exp2();
            let u = 1.0 - 0.25 * rng.random::<f64>();
            (CommodityId(first_id + i as u32), gamma, 2.0 * u / gamma)
        })
        .collect()
}

/// Far pairs per heavy-band group never exceed `11 / (10 eps)`.
pub fn check_claim4(groups: usize, eps: f64, seed: u64) -> Result<CheckReport> {
    let mut rep = CheckReport::new("claim4");
    let limit = 11.0 / (10.0 * eps);
    let streams = Streams::new(seed);
    let counts: Vec<usize> = (0..groups)
        .into_par_iter()
        .map(|g| {
            let mut rng = streams.stream(g as u64);
            let size = rng.random_range(23..=120);
            let members = heavy_band_group(size, 0, &mut rng);
            let input: Vec<(CommodityId, f64)> = members.iter().map(|m| (m.0, m.2)).collect();
            let rounded = po2_round_group(&input, draw_theta(&mut rng)).expect("valid group");
            let spaces: Vec<(CommodityId, f64)> =
                rounded.members.iter().zip(&members).map(|(r, m)| (r.id, m.1 * r.t_rounded)).collect();
            pair_near_far(&spaces, eps).far.len()
        })
        .collect();
    let worst = counts.iter().copied().max().unwrap_or(0);
    let bad = counts.iter().filter(|&&c| c as f64 > limit).count();
    rep.record(bad == 0, format!("eps = {eps}: max far pairs {worst} over {groups} groups, limit {limit:.3}"));
    rep.metric("max_far_pairs", worst as f64);
    rep.metric("limit", limit);
    Ok(rep)
}

/// Probability that rounding inflates the heavy space beyond
/// `(1 + eps) / (sqrt 2 ln 2)` stays below `eps / 10`.
pub fn check_lemma10(trials: usize, eps: f64, q: usize, group_size: usize, seed: u64) -> Result<CheckReport> {
    let mut rep = CheckReport::new("lemma10");
    let streams = Streams::new(seed);
    let members = heavy_band_group(q * group_size, 0, &mut streams.stream(0));
    let ids: Vec<CommodityId> = members.iter().map(|m| m.0).collect();
    let gamma: Vec<f64> = members.iter().map(|m| m.1).collect();
    let t_hat: Vec<f64> = members.iter().map(|m| m.2).collect();
    let failures: usize = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<usize> {
            let trial = streams.child(t as u64 + 1);
            let groups = partition_heavy(&ids, q, &mut trial.stream(u64::MAX))?;
            let rounded = groups
                .iter()
                .enumerate()
                .map(|(g, ids)| {
                    let input: Vec<_> = ids.iter().map(|id| (*id, t_hat[id.0 as usize])).collect();
                    po2_round_group(&input, draw_theta(&mut trial.stream(g as u64)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(usize::from(!check_event_a(&rounded, |id| gamma[id.0 as usize], eps).holds))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let p = failures as f64 / trials as f64;
    let allowed = eps / 10.0 + 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
    rep.record(
        p <= allowed,
        format!("eps = {eps}, Q = {q}, group size {group_size}: failure rate {p:.5} ({failures}/{trials}), allowed {allowed:.5}"),
    );
    rep.metric("failure_rate", p);
    rep.metric("allowed", allowed);
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma12Options {
    pub eps: f64,
    pub n_heavy: usize,
    pub n_light: usize,
    pub draws: usize,
    pub seed: u64,
}

impl Lemma12Options {
    /// Heavy class of `268 * 23` heavy commodities plus a light fringe.
    pub fn desk() -> Self {
        Lemma12Options { eps: 0.3, n_heavy: 268 * 23, n_light: 136, draws: 500, seed: 12 }
    }
}

/// Space bound on every draw and the expected cost bound of the class
/// policy, with the mean cost split by whether the rounding stayed in
/// budget.
pub fn check_lemma12(opts: &Lemma12Options) -> Result<CheckReport> {
    let mut rep = CheckReport::new("lemma12");
    let class = heavy_class(opts.n_heavy, opts.n_light, 1.0, opts.seed);
    let cfg = Po2Config::new(opts.eps);
    let ev = Evaluator { sample_grid: 0, ..Evaluator::default() };
    let streams = Streams::new(opts.seed);
    let outcomes = (0..opts.draws)
        .into_par_iter()
        .map(|d| {
            build_class_policy(&class, &cfg, &streams.child(d as u64), &ev)
                .map(|o| (o.space_ratio, o.cost_ratio, o.branch, o.cases))
        })
        .collect::<Result<Vec<_>>>()?;
    let space_bound = lemma11_factor(opts.eps);
    let worst_space = outcomes.iter().map(|o| o.0).fold(0.0, f64::max);
    let over = outcomes.iter().filter(|o| o.0 > space_bound).count();
    rep.record(over == 0, format!("space ratio max {worst_space:.5} over {} draws, bound {space_bound:.5}", opts.draws));
    let costs: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    let (mean, se) = mean_se(&costs);
    let cost_bound = lemma12_factor(opts.eps);
    rep.record(mean <= cost_bound + 3.0 * se, format!("mean cost ratio {mean:.5} (SE {se:.1e}), bound {cost_bound:.5}"));
    let synced: Vec<f64> = outcomes.iter().filter(|o| o.2 == ClassBranch::HeavySynchronized).map(|o| o.1).collect();
    let scaled: Vec<f64> = outcomes.iter().filter(|o| o.2 == ClassBranch::HeavyScaled).map(|o| o.1).collect();
    let p_a = synced.len() as f64 / outcomes.len() as f64;
    let cond = |xs: &[f64]| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    rep.lines.push(format!(
        "INFO P(A) = {p_a:.4}; E[ratio | A] = {:.5}; E[ratio | not A] = {:.5}",
        cond(&synced),
        cond(&scaled)
    ));
    let mut cases = [0usize; 6];
    for o in &outcomes {
        for (a, c) in cases.iter_mut().zip(o.3) {
            *a += c;
        }
    }
    rep.lines.push(format!("INFO near pairs per gadget case: {cases:?}"));
    rep.metric("max_space_ratio", worst_space);
    rep.metric("mean_cost_ratio", mean);
    rep.metric("cost_ratio_se", se);
    rep.metric("p_event_a", p_a);
    Ok(rep)
}
