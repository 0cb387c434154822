//! The five subcommands.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use cqreg::bootstrap::{bootstrap_ci, percentile_intervals, BootstrapConfig, TestEngine};
use cqreg::datagen::{gen_setting, SimSetting};
use cqreg::harness::{self, CellSummary, ExperimentPlan, Mode};
use cqreg::qr::{fit_constrained, QuantileSpec};
use cqreg::statistic::TestKind;
use cqreg::FitResult;

use crate::config::{GenConfig, RunConfig};
use crate::data::{load_problem, Problem};
use crate::error::{core, CliError, CliResult};
use crate::output::{num, OutputDir};

/// Feasibility tolerance when reporting active constraints.
const ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Serialize)]
struct Coefficient {
    name: String,
    estimate: f64,
}

#[derive(Debug, Serialize)]
struct ResidualSummary {
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    mean: f64,
}

#[derive(Debug, Serialize)]
struct FitReport {
    coefficients: Vec<Coefficient>,
    /// Indices of constraint rows holding with equality.
    active_constraints: Vec<usize>,
    loss: f64,
    n: usize,
    tau: f64,
    iterations: usize,
    residuals: ResidualSummary,
}

fn spec(cfg: &RunConfig) -> CliResult<QuantileSpec> {
    QuantileSpec::new(cfg.tau()).map_err(core("qr_solver"))
}

fn bootstrap_config(cfg: &RunConfig) -> BootstrapConfig {
    let mut b = BootstrapConfig::new(cfg.replicates(), cfg.seed_value(), cfg.alpha());
    b.m = cfg.m;
    b.h = cfg.h;
    b
}

fn residual_summary(r: &DVector<f64>) -> ResidualSummary {
    let mut s: Vec<f64> = r.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    let q = |p| cqreg::bootstrap::sample_quantile(&s, p);
    ResidualSummary {
        min: s[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: s[s.len() - 1],
        mean: r.mean(),
    }
}

/// Fit in canonical coordinates and report in original ones.
fn fit_report(problem: &Problem, fit: &FitResult) -> FitReport {
    let beta = problem.transform.from_canonical(&fit.beta);
    let active = match &problem.constraints {
        Some(c) => {
            let slack = c.matrix() * &beta - c.offset();
            (0..c.q())
                .filter(|&r| slack[r].abs() <= ACTIVE_TOL * (1.0 + c.offset()[r].abs()))
                .collect()
        }
        None => Vec::new(),
    };
    FitReport {
        coefficients: problem
            .names
            .iter()
            .zip(beta.iter())
            .map(|(name, &estimate)| Coefficient {
                name: name.clone(),
                estimate,
            })
            .collect(),
        active_constraints: active,
        loss: fit.loss,
        n: problem.data.n(),
        tau: fit.tau,
        iterations: fit.iterations,
        residuals: residual_summary(&fit.residuals),
    }
}

fn coefficient_rows(report: &FitReport) -> Vec<Vec<String>> {
    report
        .coefficients
        .iter()
        .map(|c| vec![c.name.clone(), num(c.estimate)])
        .collect()
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn finish<T: Serialize>(out: &OutputDir, command: &str, cfg: &RunConfig, body: T) -> CliResult<()> {
    out.write_json(
        "results.json",
        &Envelope {
            command,
            config: cfg,
            body,
        },
    )?;
    Ok(())
}

pub fn cmd_fit(cfg: &RunConfig) -> CliResult<PathBuf> {
    let problem = load_problem(cfg)?;
    let fit =
        fit_constrained(&problem.canonical, spec(cfg)?, problem.q()).map_err(core("qr_solver"))?;
    let report = fit_report(&problem, &fit);
    let out = OutputDir::create(cfg.output_dir(), cfg)?;
    out.write_csv(
        "summary.csv",
        &["coefficient", "estimate"],
        &coefficient_rows(&report),
    )?;
    finish(&out, "fit", cfg, serde_json::json!({ "fit": report }))?;
    Ok(out.path("results.json"))
}

#[derive(Debug, Serialize)]
struct Interval {
    name: String,
    estimate: f64,
    lower: f64,
    upper: f64,
}

/// Clip intervals to the single-coefficient constraint rows `a·β_j ≥ c`.
fn clip_intervals(problem: &Problem, lower: &mut DVector<f64>, upper: &mut DVector<f64>) {
    let Some(c) = &problem.constraints else {
        return;
    };
    for r in 0..c.q() {
        let row = c.matrix().row(r);
        let nz: Vec<usize> = (0..row.len()).filter(|&j| row[j] != 0.0).collect();
        if let [j] = nz[..] {
            let bound = c.offset()[r] / row[j];
            if row[j] > 0.0 {
                lower[j] = lower[j].max(bound);
            } else {
                upper[j] = upper[j].min(bound);
            }
        }
    }
}

pub fn cmd_ci(cfg: &RunConfig) -> CliResult<PathBuf> {
    let problem = load_problem(cfg)?;
    let bcfg = bootstrap_config(cfg);
    let ci = bootstrap_ci(&problem.canonical, spec(cfg)?, problem.q(), &bcfg)
        .map_err(core("bootstrap"))?;

    // Λ maps linearly: β-draws are T⁻¹Λ, stacked as rows.
    let draws: DMatrix<f64> = &ci.draws * problem.transform.inverse().transpose();
    let beta = problem.transform.from_canonical(&ci.beta_hat);
    let (mut lower, mut upper) =
        percentile_intervals(&beta, &draws, ci.n, ci.alpha).map_err(core("bootstrap"))?;
    if cfg.clip_ci {
        clip_intervals(&problem, &mut lower, &mut upper);
    }
    let intervals: Vec<Interval> = (0..beta.len())
        .map(|j| Interval {
            name: problem.names[j].clone(),
            estimate: beta[j],
            lower: lower[j],
            upper: upper[j],
        })
        .collect();

    let out = OutputDir::create(cfg.output_dir(), cfg)?;
    let rows: Vec<Vec<String>> = intervals
        .iter()
        .map(|i| vec![i.name.clone(), num(i.estimate), num(i.lower), num(i.upper)])
        .collect();
    out.write_csv(
        "intervals.csv",
        &["coefficient", "estimate", "lower", "upper"],
        &rows,
    )?;
    if cfg.dump_replicates {
        dump_draws(&out, &problem.names, &draws, &[])?;
    }
    let report = fit_report(&problem, &ci.fit);
    finish(
        &out,
        "ci",
        cfg,
        serde_json::json!({
            "intervals": intervals,
            "alpha": ci.alpha,
            "m": ci.m,
            "h": ci.h,
            "B": bcfg.b,
            "fit": report,
        }),
    )?;
    Ok(out.path("results.json"))
}

/// `replicates.csv`: one row per bootstrap replicate.
fn dump_draws(
    out: &OutputDir,
    names: &[String],
    draws: &DMatrix<f64>,
    stats: &[(&str, &[f64])],
) -> CliResult<()> {
    let mut header = vec!["replicate".to_string()];
    header.extend(stats.iter().map(|(s, _)| s.to_string()));
    header.extend(names.iter().map(|n| format!("lambda_{n}")));
    let rows: Vec<Vec<String>> = (0..draws.nrows())
        .map(|b| {
            let mut r = vec![b.to_string()];
            r.extend(stats.iter().map(|(_, v)| num(v[b])));
            r.extend(draws.row(b).iter().map(|&v| num(v)));
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_csv("replicates.csv", &header, &rows)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct TestSummary {
    kind: TestKind,
    statistic: f64,
    p_value: f64,
    exceed_fraction: f64,
    reject: bool,
}

pub fn cmd_test(cfg: &RunConfig) -> CliResult<PathBuf> {
    let problem = load_problem(cfg)?;
    let (_, tested) = problem.tested(&cfg.tested)?;
    let bcfg = bootstrap_config(cfg);
    bcfg.validate(problem.data.n()).map_err(core("bootstrap"))?;
    let engine = TestEngine::new(&problem.canonical, spec(cfg)?, &tested, problem.q(), bcfg.h)
        .map_err(core("stats_tests"))?;
    let m = engine.select_m(&bcfg).map_err(core("bootstrap"))?;
    let reps = engine
        .replicates(m, bcfg.b, bcfg.seed)
        .map_err(core("bootstrap"))?;

    let alpha = cfg.alpha();
    let summaries: Vec<TestSummary> = [(TestKind::Lr, &reps.lr), (TestKind::Rb, &reps.rb)]
        .into_iter()
        .map(|(kind, r)| {
            let res = engine.result(kind, r.clone(), m, bcfg.seed);
            TestSummary {
                kind,
                statistic: res.statistic,
                p_value: res.p_value,
                exceed_fraction: res.exceed_fraction,
                reject: res.p_value <= alpha,
            }
        })
        .collect();

    let out = OutputDir::create(cfg.output_dir(), cfg)?;
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            vec![
                s.kind.to_string(),
                num(s.statistic),
                num(s.p_value),
                num(s.exceed_fraction),
                s.reject.to_string(),
                m.to_string(),
                num(engine.h),
                bcfg.b.to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "summary.csv",
        &[
            "test",
            "statistic",
            "p_value",
            "exceed_fraction",
            "reject",
            "m",
            "h",
            "B",
        ],
        &rows,
    )?;
    if cfg.dump_replicates {
        let draws: DMatrix<f64> = &reps.lambda * problem.transform.inverse().transpose();
        dump_draws(
            &out,
            &problem.names,
            &draws,
            &[("lr", &reps.lr), ("rb", &reps.rb)],
        )?;
    }
    let report = fit_report(&problem, &engine.full.fit);
    finish(
        &out,
        "test",
        cfg,
        serde_json::json!({
            "tested": cfg.tested,
            "tests": summaries,
            "alpha": alpha,
            "m": m,
            "h": engine.h,
            "B": bcfg.b,
            "fit": report,
        }),
    )?;
    Ok(out.path("results.json"))
}

/// Scalar overrides from the top level apply to the plan.
pub fn resolve_plan(cfg: &RunConfig) -> CliResult<ExperimentPlan> {
    let mut plan = cfg
        .simulate
        .clone()
        .ok_or_else(|| CliError::Config("simulate needs a 'simulate' plan".into()))?;
    if let Some(t) = cfg.tau {
        plan.tau = vec![t];
    }
    if let Some(a) = cfg.alpha {
        plan.alpha = vec![a];
    }
    if let Some(b) = cfg.b {
        plan.b = b;
    }
    if let Some(s) = cfg.seed {
        plan.seed = s;
    }
    if cfg.m.is_some() {
        plan.m = cfg.m;
    }
    if cfg.h.is_some() {
        plan.h = cfg.h;
    }
    Ok(plan)
}

pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<PathBuf> {
    let plan = resolve_plan(cfg)?;
    let summary = harness::run(&plan).map_err(core("harness"))?;
    log::info!("simulation finished in {:.1}s", summary.runtime_secs);
    let out = OutputDir::create(cfg.output_dir(), &plan)?;
    let rows: Vec<Vec<String>> = summary.cells.iter().map(cell_row).collect();
    out.write_csv(
        "summary.csv",
        &[
            "method", "n", "tau", "alpha", "beta1", "rate", "mc_se", "reps", "failures", "m",
        ],
        &rows,
    )?;
    // Wall time varies between runs, so it stays out of the result files.
    finish(
        &out,
        "simulate",
        cfg,
        serde_json::json!({ "plan": plan, "mode": summary.mode, "cells": summary.cells }),
    )?;
    Ok(out.path("results.json"))
}

fn cell_row(c: &CellSummary) -> Vec<String> {
    vec![
        c.method.clone(),
        c.n.to_string(),
        num(c.tau),
        num(c.alpha),
        num(c.beta1),
        num(c.rate),
        num(c.mc_se),
        c.reps.to_string(),
        c.failures.to_string(),
        c.m.map(|m| m.to_string()).unwrap_or_default(),
    ]
}

pub fn cmd_gen(cfg: &RunConfig) -> CliResult<PathBuf> {
    let g: &GenConfig = cfg
        .gen
        .as_ref()
        .ok_or_else(|| CliError::Config("gen needs a 'gen' block or --setting/--n".into()))?;
    let setting = SimSetting {
        id: g.setting,
        n: g.n,
        beta0: g.beta0,
        beta1: g.beta1,
        tau: cfg.tau(),
        seed: cfg.seed_value(),
    };
    let sim = gen_setting(&setting).map_err(core("datagen"))?;
    let out = OutputDir::create(cfg.output_dir(), cfg)?;
    let rows: Vec<Vec<String>> = (0..g.n)
        .map(|i| vec![(i + 1).to_string(), num(sim.data.y()[i]), num(sim.x[i])])
        .collect();
    out.write_csv("data.csv", &["t", "y", "x"], &rows)?;
    finish(
        &out,
        "gen",
        cfg,
        serde_json::json!({ "setting": setting, "beta": sim.beta.as_slice(), "file": "data.csv" }),
    )?;
    Ok(out.path("data.csv"))
}

/// Default plan for `simulate` when only flags are given.
pub fn plan_from_flags(mode: Mode, setting: u8, n: usize, reps: usize) -> ExperimentPlan {
    ExperimentPlan::new(
        mode,
        setting,
        n,
        crate::config::DEFAULT_TAU,
        crate::config::DEFAULT_ALPHA,
        reps,
        crate::config::DEFAULT_B,
    )
}
