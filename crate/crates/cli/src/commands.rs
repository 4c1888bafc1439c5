//! Subcommand drivers. Each writes its table and summary, then returns the
//! process exit status.

use std::path::Path;

use anyhow::Result;
use guessd_core::{
    expected_moments, exponent_convergence_check, iid_strategy_exponent, mismatched_rd,
    oneshot_achievability, optimal_iid_exponent, rate_distortion, simulate_block, simulate_fixed,
    synchronous_exponent, verify_min_identity, Error, ExponentReport, MomentReport, SimReport,
    Strategy,
};
use serde_json::{json, Value};

use crate::config::{Problem, StrategySpec};
use crate::report::{emit, fmt12, fmt_opt, num, num_opt, nums, Table};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_INFINITE: u8 = 2;
pub const EXIT_NONCONVERGENCE: u8 = 3;
pub const EXIT_TOO_LARGE: u8 = 4;

/// Exit status for an error raised anywhere below a command.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::ZeroBallMass { .. } | Error::InfiniteExponent { .. } | Error::NoFeasibleChannel { .. } => {
                    EXIT_INFINITE
                }
                Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
                Error::InstanceTooLarge { .. } => EXIT_TOO_LARGE,
                _ => EXIT_CONFIG,
            };
        }
    }
    EXIT_CONFIG
}

/// Concrete reproduction law for one order `rho`.
fn resolve_strategy(problem: &Problem, rho: f64) -> Result<Vec<f64>> {
    let k = problem.model.repro_size();
    Ok(match &problem.strategy {
        StrategySpec::Uniform => vec![1.0 / k as f64; k],
        StrategySpec::Explicit(q) => q.clone(),
        StrategySpec::Tilted => oneshot_achievability(&problem.source, &problem.model, rho)?.strategy,
        StrategySpec::Optimize => optimal_iid_exponent(problem.source.pmf(), &problem.model, rho, &problem.controls)?
            .outer_witness
            .unwrap_or_else(|| vec![1.0 / k as f64; k]),
    })
}

fn strategy_name(spec: &StrategySpec) -> &'static str {
    match spec {
        StrategySpec::Tilted => "tilted",
        StrategySpec::Uniform => "uniform",
        StrategySpec::Optimize => "optimize",
        StrategySpec::Explicit(_) => "explicit",
    }
}

fn oneshot_report(problem: &Problem, rho: f64) -> Result<MomentReport> {
    match &problem.strategy {
        StrategySpec::Tilted | StrategySpec::Optimize => Ok(oneshot_achievability(&problem.source, &problem.model, rho)?),
        _ => {
            let q = resolve_strategy(problem, rho)?;
            let balls = problem.model.balls()?;
            Ok(expected_moments(&problem.source, &Strategy::new(q)?, &balls, rho)?)
        }
    }
}

/// Per-symbol and expected one-shot moments with the achievability bounds.
pub fn oneshot(problem: &Problem, out: &Path) -> Result<u8> {
    let mut table = Table::new(&[
        "rho", "row", "symbol", "p", "q", "log_v", "log_g", "v", "g", "log_bound_v", "log_bound_g",
    ]);
    let mut per_rho = Vec::new();
    let mut status = EXIT_OK;
    for &rho in &problem.rhos {
        let r = match oneshot_report(problem, rho) {
            Ok(r) => r,
            Err(e) if exit_code(&e) == EXIT_INFINITE => {
                let symbol = match e.downcast_ref::<Error>() {
                    Some(Error::ZeroBallMass { symbol: Some(s) }) => s.clone(),
                    _ => String::new(),
                };
                let inf = fmt12(f64::INFINITY);
                table.push(vec![
                    fmt12(rho), "infinite".into(), symbol.clone(), String::new(), "0".into(),
                    inf.clone(), inf.clone(), inf.clone(), inf, String::new(), String::new(),
                ]);
                per_rho.push(json!({ "rho": num(rho), "infinite_moment": symbol, "error": e.to_string() }));
                status = EXIT_INFINITE;
                continue;
            }
            Err(e) => return Err(e),
        };
        for s in &r.per_symbol {
            table.push(vec![
                fmt12(rho), "symbol".into(), s.label.clone(), fmt12(s.p), fmt12(s.q), fmt12(s.log_v),
                fmt12(s.log_g), fmt12(s.log_v.exp()), fmt12(s.log_g.exp()), String::new(), String::new(),
            ]);
        }
        table.push(vec![
            fmt12(rho), "expected".into(), String::new(), String::new(), String::new(),
            fmt12(r.log_expected_v), fmt12(r.log_expected_g), fmt12(r.expected_v()), fmt12(r.expected_g()),
            fmt_opt(r.bound_rhs_v), fmt_opt(r.bound_rhs_g),
        ]);
        let quantizer = r.quantizer.as_ref().map(|q| {
            q.map().iter().map(|&xh| Value::String(problem.model.repro_alphabet()[xh].clone())).collect::<Vec<_>>()
        });
        per_rho.push(json!({
            "rho": num(rho),
            "strategy": nums(&r.strategy),
            "log_expected_v": num(r.log_expected_v),
            "log_expected_g": num(r.log_expected_g),
            "log_g_upper": num_opt(r.log_g_upper),
            "log_bound_v": num_opt(r.bound_rhs_v),
            "log_bound_g": num_opt(r.bound_rhs_g),
            "quantizer": quantizer,
            "pushforward": r.pushforward.as_deref().map(nums),
        }));
    }
    let summary = json!({
        "command": "oneshot",
        "strategy": strategy_name(&problem.strategy),
        "delta": num(problem.model.delta()),
        "results": per_rho,
        "exit_code": status,
    });
    emit(out, "oneshot", &table, &summary)?;
    Ok(status)
}

fn certificate(r: &ExponentReport) -> (Option<f64>, Option<f64>) {
    r.diagnostics.certificate.map_or((None, None), |c| (Some(c.lower), Some(c.upper)))
}

/// i.i.d. and synchronous exponents with their gap and diagnostics.
pub fn exponent(problem: &Problem, out: &Path) -> Result<u8> {
    let p = problem.source.pmf();
    let mut table = Table::new(&[
        "rho", "e_iid", "e_sync", "penalty", "cert_lower", "cert_upper", "iid_converged",
        "sync_converged", "restart_spread",
    ]);
    let mut per_rho = Vec::new();
    let mut status = EXIT_OK;
    for &rho in &problem.rhos {
        let iid = match &problem.strategy {
            StrategySpec::Optimize => optimal_iid_exponent(p, &problem.model, rho, &problem.controls)?,
            _ => {
                let q = resolve_strategy(problem, rho)?;
                iid_strategy_exponent(p, &q, &problem.model, rho, &problem.controls)?
            }
        };
        let sync = synchronous_exponent(p, &problem.model, rho, &problem.controls)?;
        let (lo, hi) = certificate(&iid);
        let converged = iid.diagnostics.converged && sync.diagnostics.converged;
        if !converged {
            status = EXIT_NONCONVERGENCE;
        }
        table.push(vec![
            fmt12(rho), fmt12(iid.value), fmt12(sync.value), fmt12(iid.value - sync.value), fmt_opt(lo),
            fmt_opt(hi), iid.diagnostics.converged.to_string(), sync.diagnostics.converged.to_string(),
            fmt12(iid.diagnostics.restart_spread),
        ]);
        per_rho.push(json!({
            "rho": num(rho),
            "e_iid": num(iid.value),
            "e_sync": num(sync.value),
            "penalty": num(iid.value - sync.value),
            "certificate": { "lower": num_opt(lo), "upper": num_opt(hi) },
            "iid_source_witness": nums(&iid.inner_witness),
            "iid_strategy_witness": iid.outer_witness.as_deref().map(nums),
            "sync_source_witness": nums(&sync.inner_witness),
            "sync_repro_marginal": sync.outer_witness.as_deref().map(nums),
            "iid_diagnostics": {
                "evaluations": iid.diagnostics.evaluations,
                "iterations": iid.diagnostics.iterations,
                "restarts": iid.diagnostics.restarts,
                "converged": iid.diagnostics.converged,
            },
            "sync_diagnostics": {
                "evaluations": sync.diagnostics.evaluations,
                "iterations": sync.diagnostics.iterations,
                "converged": sync.diagnostics.converged,
                "restart_spread": num(sync.diagnostics.restart_spread),
            },
        }));
    }
    let summary = json!({
        "command": "exponent",
        "strategy": strategy_name(&problem.strategy),
        "results": per_rho,
        "exit_code": status,
    });
    emit(out, "exponent", &table, &summary)?;
    Ok(status)
}

/// Rate-distortion function, the mismatched function of the configured
/// strategy, and the minimization identity between them.
pub fn rd(problem: &Problem, out: &Path) -> Result<u8> {
    let p = problem.source.pmf();
    let c = &problem.controls;
    let mut table = Table::new(&["quantity", "rho", "value", "lambda", "distortion", "residual", "converged"]);
    let mut rows = Vec::new();
    let mut status = EXIT_OK;
    let rdf = rate_distortion(p, &problem.model, c)?;
    table.push(vec![
        "rate_distortion".into(), String::new(), fmt12(rdf.value), fmt12(rdf.lagrange_lambda),
        fmt12(rdf.achieved_distortion), fmt12(rdf.residual), rdf.converged.to_string(),
    ]);
    rows.push(json!({ "quantity": "rate_distortion", "value": num(rdf.value), "channel": rdf.witness_channel.rows().iter().map(|r| nums(r)).collect::<Vec<_>>() }));
    let id = verify_min_identity(p, &problem.model, c, 1e-6)?;
    table.push(vec![
        "min_mismatched".into(), String::new(), fmt12(id.mismatched_min), String::new(), String::new(),
        fmt12(id.gap), id.holds.to_string(),
    ]);
    rows.push(json!({ "quantity": "min_mismatched", "value": num(id.mismatched_min), "gap": num(id.gap), "holds": id.holds, "minimizing_repro": nums(&id.minimizing_repro) }));
    let strategies: Vec<(Option<f64>, Vec<f64>)> = match &problem.strategy {
        StrategySpec::Optimize => Vec::new(),
        StrategySpec::Tilted => problem
            .rhos
            .iter()
            .map(|&rho| Ok((Some(rho), resolve_strategy(problem, rho)?)))
            .collect::<Result<_>>()?,
        _ => vec![(None, resolve_strategy(problem, 1.0)?)],
    };
    for (rho, q) in strategies {
        match mismatched_rd(p, &q, &problem.model, c) {
            Ok(r) => {
                table.push(vec![
                    "mismatched".into(), fmt_opt(rho), fmt12(r.value), fmt12(r.lagrange_lambda),
                    fmt12(r.achieved_distortion), fmt12(r.residual), r.converged.to_string(),
                ]);
                rows.push(json!({ "quantity": "mismatched", "rho": num_opt(rho), "strategy": nums(&q), "value": num(r.value), "source_costs": nums(&r.source_costs) }));
            }
            Err(e @ Error::NoFeasibleChannel { .. }) => {
                table.push(vec![
                    "mismatched".into(), fmt_opt(rho), fmt12(f64::INFINITY), String::new(), String::new(),
                    String::new(), "false".into(),
                ]);
                rows.push(json!({ "quantity": "mismatched", "rho": num_opt(rho), "strategy": nums(&q), "value": "inf", "error": e.to_string() }));
                status = EXIT_INFINITE;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let summary = json!({
        "command": "rd",
        "delta": num(problem.model.delta()),
        "results": rows,
        "exit_code": status,
    });
    emit(out, "rd", &table, &summary)?;
    Ok(status)
}

/// Exact finite-n rates against the asymptotic i.i.d. exponent.
pub fn oracle(problem: &Problem, n_list: &[usize], out: &Path) -> Result<u8> {
    let p = problem.source.pmf();
    let mut table = Table::new(&["rho", "n", "v_rate", "g_rate", "limit", "gap"]);
    let mut per_rho = Vec::new();
    for &rho in &problem.rhos {
        let q = resolve_strategy(problem, rho)?;
        let t = exponent_convergence_check(p, &Strategy::new(q.clone())?, &problem.model, rho, n_list, &problem.controls)?;
        for r in &t.rows {
            table.push(vec![fmt12(rho), r.n.to_string(), fmt12(r.v_rate), fmt_opt(r.g_rate), fmt12(r.limit), fmt12(r.gap)]);
        }
        per_rho.push(json!({
            "rho": num(rho),
            "strategy": nums(&q),
            "limit": num(t.limit),
            "fitted_c": num(t.fitted_c),
            "gap_decreasing": t.gap_decreasing,
            "within_envelope": t.within_envelope,
            "final_gap": num(t.final_gap()),
        }));
    }
    let summary = json!({
        "command": "oracle",
        "strategy": strategy_name(&problem.strategy),
        "n_list": n_list,
        "results": per_rho,
        "exit_code": EXIT_OK,
    });
    emit(out, "oracle", &table, &summary)?;
    Ok(EXIT_OK)
}

/// Monte-Carlo moments; the guessing orders come from the problem's `rho`.
pub fn simulate(problem: &Problem, out: &Path) -> Result<u8> {
    let mut cfg = problem.sim.clone();
    cfg.rho_list = problem.rhos.clone();
    let (report, strategy): (SimReport, Option<Vec<f64>>) = match problem.fixed_q {
        Some(q) => (simulate_fixed(q, &cfg)?, None),
        None => {
            let q = resolve_strategy(problem, problem.rhos[0])?;
            (simulate_block(problem.source.pmf(), &Strategy::new(q.clone())?, &problem.model, &cfg)?, Some(q))
        }
    };
    let mut table = Table::new(&["rho", "mean", "std_error", "log_mean", "exact", "z_score"]);
    for e in &report.estimates {
        table.push(vec![
            fmt12(e.rho), fmt12(e.mean), fmt12(e.std_error), fmt12(e.log_mean), fmt_opt(e.exact), fmt_opt(e.z_score),
        ]);
    }
    let summary = json!({
        "command": "simulate",
        "mode": if problem.fixed_q.is_some() { "fixed" } else { match report.mode { guessd_core::SimMode::Literal => "literal", guessd_core::SimMode::Analytic => "analytic" } },
        "fixed_q": num_opt(problem.fixed_q),
        "strategy": strategy.as_deref().map(nums),
        "n": report.n,
        "trials": report.trials,
        "master_seed": report.master_seed,
        "censored": report.censored,
        "censoring_fraction": num(report.censoring_fraction),
        "cap_too_low": report.cap_too_low,
        "warnings": report.warnings,
        "exit_code": EXIT_OK,
    });
    emit(out, "simulate", &table, &summary)?;
    Ok(EXIT_OK)
}
