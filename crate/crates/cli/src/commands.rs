use anyhow::{bail, Context, Result};
use serde_json::json;
use std::fs;
use std::path::Path;

use wls_core::gadget::{build_pair, case_by_id, unit_couple, verify_gadget, GadgetReport, Sub1Couple};
use wls_core::generate::{benchmark_policy, generate, Profile};
use wls_core::model::{feasibility_of, trace_policy, write_trace_csv};
use wls_core::pipeline::{enumerate_sub2, run_sub2, PrefixSolver, Sub2Config};
use wls_core::po2sync::{
    check_claim3, check_claim4, check_lemma10, check_lemma12, min_group_size, q_default, CheckReport, Lemma12Options,
};
use wls_core::relax::{classical_two_approx_with, lower_bound, solve_relax_dp, solve_relax_exact};
use wls_core::{hyperperiod, rational, sosi_to_cyclic, Commodity, CyclicPolicy, Evaluator, Instance};

use crate::{Algorithm, Check, EvalArgs, GadgetArgs, GenArgs, Po2Args, PrefixArg, Preset, SolveArgs, VerifyAllArgs};

pub enum Outcome {
    Ok,
    /// A claimed bound did not hold.
    CheckFailed,
}

impl Outcome {
    fn from_pass(pass: bool) -> Outcome {
        if pass {
            Outcome::Ok
        } else {
            Outcome::CheckFailed
        }
    }
}

/// Infeasible constructions are verification failures; everything else
/// is bad input.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<wls_core::Error>() {
        Some(wls_core::Error::Infeasible(_)) => 2,
        _ => 1,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, format!("{text}\n")).with_context(|| format!("cannot write {}", path.display()))
}

fn load_instance(path: &Path) -> Result<Instance> {
    Instance::from_json(&read(path)?).with_context(|| format!("in instance file {}", path.display()))
}

fn load_policy(path: &Path) -> Result<CyclicPolicy> {
    CyclicPolicy::from_json(&read(path)?).with_context(|| format!("in policy file {}", path.display()))
}

pub fn gen(a: GenArgs) -> Result<Outcome> {
    let inst = generate(a.profile, a.n, a.seed.seed)?;
    write(&a.out, &inst.to_json()?)?;
    if let Some(path) = &a.benchmark_out {
        let p = benchmark_policy(&inst, a.levels)?;
        write(path, &p.to_json()?)?;
    }
    eprintln!("wrote {} commodities ({} profile), capacity {}", inst.len(), a.profile, inst.capacity);
    Ok(Outcome::Ok)
}

fn sub2_config(a: &SolveArgs) -> Sub2Config {
    let mut cfg = match a.preset {
        Preset::Desk => Sub2Config::desk(),
        Preset::Analysis => Sub2Config::analysis(a.epsilon.unwrap_or(0.05)),
    };
    if let Some(e) = a.epsilon {
        cfg.eps = e;
    }
    if let Some(d) = a.delta {
        cfg.delta = d;
    }
    if a.sparse_threshold.is_some() {
        cfg.sparse_threshold = a.sparse_threshold;
    }
    cfg.allow_large_eps |= a.allow_large_eps;
    cfg.prefix_solver = match a.prefix_solver {
        PrefixArg::RelaxHalve => PrefixSolver::RelaxHalve,
        PrefixArg::Exhaustive => PrefixSolver::Exhaustive,
    };
    cfg.seed = a.seed.seed;
    cfg
}

pub fn solve(a: SolveArgs) -> Result<Outcome> {
    let inst = load_instance(&a.instance)?;
    let ev = Evaluator::default();
    let budget = a.budget.unwrap_or(2.0 * inst.capacity);
    let (policy, report, outcome) = match a.algorithm {
        Algorithm::Classical2 => {
            let out = classical_two_approx_with(&inst, &ev)?;
            let lb = out.relaxation.objective;
            let ratio = out.certificate.total_cost / lb;
            let feas = feasibility_of(&out.certificate, inst.capacity, 1e-9);
            let pass = feas.feasible && ratio <= 2.0 * (1.0 + 1e-9);
            eprintln!(
                "classical2: cost {} / lower bound {} = {ratio:.6} (bound 2), peak {} of {}",
                out.certificate.total_cost, lb, feas.peak_space, inst.capacity
            );
            let report = json!({
                "algorithm": "classical2",
                "certificate": out.certificate,
                "feasibility": feas,
                "relaxation": out.relaxation,
                "lower_bound": lb,
                "ratio_vs_lower_bound": {"measured": ratio, "bound": 2.0},
                "passed": pass,
            });
            (sosi_to_cyclic(&out.sosi)?, report, Outcome::from_pass(pass))
        }
        Algorithm::RelaxExact | Algorithm::RelaxDp => {
            let cfg = sub2_config(&a);
            let sol = if a.algorithm == Algorithm::RelaxExact {
                solve_relax_exact(&inst, budget)?
            } else {
                solve_relax_dp(&inst, budget, cfg.eps)?
            };
            eprintln!("relaxation objective {} using {} of budget {budget}", sol.objective, sol.budget_used);
            let name = if a.algorithm == Algorithm::RelaxExact { "relax-exact" } else { "relax-dp" };
            let report = json!({ "algorithm": name, "epsilon": cfg.eps, "relaxation": sol });
            (sosi_to_cyclic(&sol.intervals)?, report, Outcome::Ok)
        }
        Algorithm::Sub2 => {
            let cfg = sub2_config(&a);
            if a.enumerate {
                let out = enumerate_sub2(&inst, &cfg)?;
                let lb = lower_bound(&inst)?;
                eprintln!(
                    "enumerated {} guesses ({} rejected, {} predicted): cost {} ({}), ratio {:.6} vs lower bound",
                    out.evaluated, out.rejected, out.predicted, out.best_cost, out.best_scenario, out.best_cost / lb
                );
                let report = json!({ "algorithm": "sub2-enumerate", "enumeration": out, "lower_bound": lb });
                (out.best_policy, report, Outcome::Ok)
            } else {
                let bench = a.benchmark.as_deref().map(load_policy).transpose()?;
                let r = run_sub2(&inst, &cfg, bench.as_ref())?;
                eprintln!(
                    "sub2: scenario {:?}, cost {} / lower bound {} = {:.6}, scale {:.6} (analytic {:.6}), {} flags",
                    r.scenario,
                    r.final_certificate.total_cost,
                    r.lower_bound,
                    r.ratio_vs_lower_bound,
                    r.scale.applied,
                    r.scale.analytic,
                    r.guarantee_flags.len()
                );
                for f in &r.guarantee_flags {
                    eprintln!("  flag: {f}");
                }
                let pass = r.feasibility.feasible;
                let report = serde_json::to_value(&r)?;
                (r.final_policy, report, Outcome::from_pass(pass))
            }
        }
    };
    if let Some(path) = &a.out {
        write(path, &policy.to_json()?)?;
    }
    if let Some(path) = &a.report {
        write(path, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(outcome)
}

pub fn eval(a: EvalArgs) -> Result<Outcome> {
    let inst = load_instance(&a.instance)?;
    let policy = load_policy(&a.policy)?;
    let ev = Evaluator { sample_grid: a.grid, ..Evaluator::default() };
    let cert = ev.evaluate(&inst, &policy)?;
    let feas = feasibility_of(&cert, inst.capacity, 1e-9);
    eprintln!(
        "cost {}, average space {}, peak {} ({:?}), capacity {}: {}",
        cert.total_cost,
        cert.avg_space,
        feas.peak_space,
        feas.bound,
        inst.capacity,
        if feas.feasible { "feasible" } else { "over capacity" }
    );
    if let Some(path) = &a.out {
        write(path, &serde_json::to_string_pretty(&json!({ "certificate": cert, "feasibility": feas }))?)?;
    }
    if let Some(path) = &a.trace {
        let horizon = hyperperiod(&policy, ev.event_budget).unwrap_or_else(|| {
            policy.schedules.values().map(|s| s.cycle().clone()).max().unwrap_or_else(rational::one)
        });
        let rows = trace_policy(&inst, &policy, &horizon)?;
        let f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        write_trace_csv(std::io::BufWriter::new(f), &rows)?;
    }
    Ok(Outcome::Ok)
}

fn print_gadget(r: &GadgetReport) {
    let status = if r.verified { "PASS" } else { "FAIL" };
    println!(
        "{status} case {}: peak ratio claimed {} measured {} ({:?}); blow-up A claimed {} measured {}; blow-up B claimed {} measured {}",
        r.case,
        r.peak_ratio.claimed_exact,
        r.peak_ratio.measured_exact,
        r.peak_ratio.comparison,
        r.blowup_a.claimed_exact,
        r.blowup_a.measured_exact,
        r.blowup_b.claimed_exact,
        r.blowup_b.measured_exact,
    );
    for f in &r.failures {
        println!("     {f}");
    }
}

pub fn gadget(a: GadgetArgs) -> Result<Outcome> {
    let spec = case_by_id(a.case).with_context(|| format!("no gadget case {}", a.case))?;
    let k = match (spec.log2_ratio, a.k) {
        (Some(fixed), Some(k)) if fixed != k => bail!("case {} needs T_A/T_B = 2^{fixed}, not 2^{k}", a.case),
        (Some(fixed), _) => fixed,
        (None, k) => k.unwrap_or(spec.min_log2_ratio),
    };
    let t_b = a.t_a * 0.5f64.powi(k as i32);
    let gamma_b = a.gamma_b.unwrap_or(a.gamma_a * a.t_a / t_b);
    let couple = Sub1Couple::new(
        Commodity::new(0, a.k_a, a.h_a, a.gamma_a),
        Commodity::new(1, a.k_b, a.h_b, gamma_b),
        a.t_a,
        t_b,
        a.epsilon,
    )?;
    let g = build_pair(&couple)?;
    let r = verify_gadget(&couple, &g)?;
    print_gadget(&r);
    if let Some(path) = &a.report {
        write(path, &serde_json::to_string_pretty(&r)?)?;
    }
    if let Some(path) = &a.emit_trace {
        let inst = Instance::new(r.actual_peak.max(1.0), vec![couple.a, couple.b])?;
        let horizon = hyperperiod(&g.policy, 1_000_000).unwrap_or(rational::from_f64(a.t_a)?);
        let rows = trace_policy(&inst, &g.policy, &horizon)?;
        let f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        write_trace_csv(std::io::BufWriter::new(f), &rows)?;
    }
    Ok(Outcome::from_pass(r.verified))
}

fn print_check(r: &CheckReport) {
    for l in &r.lines {
        println!("{}: {l}", r.name);
    }
}

fn run_check(check: Check, eps: f64, trials: Option<usize>, seed: u64) -> Result<CheckReport> {
    Ok(match check {
        Check::Claim3 => {
            let n = trials.unwrap_or(100_000);
            check_claim3(n, 10 * n, seed)?
        }
        Check::Claim4 => check_claim4(trials.unwrap_or(1000), eps, seed)?,
        Check::Lemma10 => check_lemma10(trials.unwrap_or(10_000), eps, q_default(eps), min_group_size(eps), seed)?,
        Check::Lemma12 => {
            let q = q_default(eps);
            let g = min_group_size(eps);
            check_lemma12(&Lemma12Options {
                eps,
                n_heavy: q * g,
                n_light: (q * g) / 45,
                draws: trials.unwrap_or(500),
                seed,
            })?
        }
    })
}

pub fn po2(a: Po2Args) -> Result<Outcome> {
    let r = run_check(a.check, a.epsilon, a.trials, a.seed.seed)?;
    print_check(&r);
    if let Some(path) = &a.report {
        write(path, &serde_json::to_string_pretty(&r)?)?;
    }
    Ok(Outcome::from_pass(r.passed))
}

pub fn verify_all(a: VerifyAllArgs) -> Result<Outcome> {
    let seed = a.seed.seed;
    let mut pass = true;
    let mut gadgets = Vec::new();
    for case in 1..=6u8 {
        let couple = unit_couple(case, 0)?;
        let r = verify_gadget(&couple, &build_pair(&couple)?)?;
        print_gadget(&r);
        pass &= r.verified;
        gadgets.push(r);
    }
    let mut checks = vec![
        run_check(Check::Claim3, 0.3, None, seed)?,
        run_check(Check::Claim4, 0.1, None, seed)?,
        run_check(Check::Claim4, 0.3, None, seed)?,
        run_check(Check::Lemma10, 0.3, Some(a.trials), seed)?,
        run_check(Check::Lemma12, 0.3, Some(a.draws), seed)?,
    ];
    checks.push(classical_chain(seed)?);
    for c in &checks {
        print_check(c);
        pass &= c.passed;
    }
    println!("{}", if pass { "ALL PASS" } else { "SOME CHECKS FAILED" });
    if let Some(path) = &a.report {
        write(path, &serde_json::to_string_pretty(&json!({ "gadgets": gadgets, "checks": checks, "passed": pass }))?)?;
    }
    Ok(Outcome::from_pass(pass))
}

/// Classical 2-approximation on a batch of generated instances.
fn classical_chain(seed: u64) -> Result<CheckReport> {
    let ev = Evaluator { sample_grid: 0, ..Evaluator::default() };
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in 0..20u64 {
        let inst = generate(Profile::Uniform, 5 + (i as usize * 7) % 46, seed.wrapping_add(i))?;
        let out = classical_two_approx_with(&inst, &ev)?;
        let ratio = out.certificate.total_cost / out.relaxation.objective;
        let feas = feasibility_of(&out.certificate, inst.capacity, 1e-9);
        ok &= feas.feasible && (1.0 - 1e-9..=2.0 + 1e-9).contains(&ratio);
        worst = worst.max(ratio);
    }
    let mut rep = CheckReport::new("classical2");
    rep.record(ok, format!("20 instances: all feasible, worst cost / lower bound {worst:.6} (bound 2)"));
    Ok(rep)
}
