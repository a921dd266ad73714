use serde_json::{json, Value};

use super::{as_usage, Ctx, Outcome, RunConfig};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::pogorelov::{refinement_stability, suggest_parameters, write_report_csv, PogorelovParams};
use crate::solver::{
    continuation_solve, convergence_study, manufactured_quartic, manufactured_radial, write_solution_csv, Domain,
    DomainKind, ExactSolution, Grid, Preconditioner, ProblemSpec, Rhs, SolveOptions,
};
use crate::symfunc::SumOperator;

fn problem_defaults() -> Vec<(&'static str, Value)> {
    vec![
        ("problem.n", json!(2)),
        ("problem.k", json!(2)),
        ("problem.alpha", json!(1.0)),
        ("problem.domain", json!("ball")),
        ("problem.radius", json!(1.0)),
        ("problem.center", Value::Null),
        // Null: half the minimum of f(x, 0, 0) over interior nodes.
        ("problem.m", Value::Null),
        // constant | trig | radial | quartic | table
        ("rhs.kind", json!("radial")),
        ("rhs.value", json!(1.0)),
        ("rhs.c", json!(1.0)),
        ("rhs.d", json!(0.0)),
        ("rhs.base", json!(2.0)),
        ("rhs.amp", json!(0.5)),
        ("rhs.freq", json!(1.0)),
        ("rhs.c0", json!(1.0)),
        ("rhs.lin", Value::Null),
        ("rhs.quad", Value::Null),
        ("rhs.cu", json!(0.0)),
        ("rhs.cp", json!(0.0)),
        ("solver.steps", json!(2)),
        ("solver.tol", json!(1e-10)),
        ("solver.max_iter", json!(50)),
        ("solver.max_halvings", json!(30)),
        ("solver.linear_tol", json!(1e-9)),
        ("solver.linear_max_iter", json!(5000)),
        ("solver.preconditioner", json!("ilu0")),
    ]
}

pub(super) fn solve_defaults() -> Vec<(&'static str, Value)> {
    let mut d = problem_defaults();
    d.push(("grid.h", json!(0.0625)));
    d
}

pub(super) fn mms_defaults() -> Vec<(&'static str, Value)> {
    let mut d = problem_defaults();
    // Later entries win; the stencils are exact on the quadratic family.
    d.push(("rhs.kind", json!("quartic")));
    d.push(("rhs.d", json!(1.0)));
    d.push(("mms.h_list", json!([0.125, 0.0625, 0.03125])));
    d.push(("mms.order_floor", json!(1.7)));
    d
}

pub(super) fn pogorelov_defaults() -> Vec<(&'static str, Value)> {
    let mut d = problem_defaults();
    d.extend([
        ("grid.h_list", json!([0.125, 0.0625, 0.03125])),
        // Null falls back to 2, or to the recipe when `suggest` is set.
        ("pogorelov.beta", Value::Null),
        ("pogorelov.a", json!(10.0)),
        // Null means a³.
        ("pogorelov.A", Value::Null),
        ("pogorelov.suggest", json!(false)),
        ("pogorelov.spread_max", json!(0.1)),
    ]);
    d
}

struct Built {
    problem: ProblemSpec,
    exact: Option<ExactSolution>,
}

fn build_problem(cfg: &mut RunConfig, probe_h: f64) -> Result<Built> {
    let n = cfg.usize("problem.n")?;
    let op = SumOperator::new(n, cfg.usize("problem.k")?, cfg.f64("problem.alpha")?).map_err(as_usage)?;
    let kind = match cfg.str("problem.domain")? {
        "ball" => DomainKind::Ball,
        "box" => DomainKind::Box,
        other => return Err(Error::Usage(format!("problem.domain must be \"ball\" or \"box\", got {other:?}"))),
    };
    let center = cfg.opt_f64_list("problem.center")?.unwrap_or_else(|| vec![0.0; n]);
    let domain = Domain::new(kind, n, cfg.f64("problem.radius")?, center).map_err(as_usage)?;
    let radius = domain.radius;
    let (rhs, exact) = match cfg.str("rhs.kind")? {
        "constant" => (Rhs::Constant(cfg.f64("rhs.value")?), None),
        "trig" => (Rhs::Trig { base: cfg.f64("rhs.base")?, amp: cfg.f64("rhs.amp")?, freq: cfg.f64("rhs.freq")? }, None),
        "radial" => {
            let (e, f) = manufactured_radial(&op, radius, cfg.f64("rhs.c")?).map_err(as_usage)?;
            (Rhs::Constant(f), Some(e))
        }
        "quartic" => {
            let (e, r) = manufactured_quartic(radius, cfg.f64("rhs.c")?, cfg.f64("rhs.d")?).map_err(as_usage)?;
            (r, Some(e))
        }
        "table" => (
            Rhs::Table {
                c0: cfg.f64("rhs.c0")?,
                lin: cfg.opt_f64_list("rhs.lin")?.unwrap_or_else(|| vec![0.0; n]),
                quad: cfg.opt_f64_list("rhs.quad")?.unwrap_or_else(|| vec![0.0; n]),
                cu: cfg.f64("rhs.cu")?,
                cp: cfg.f64("rhs.cp")?,
            },
            None,
        ),
        other => return Err(Error::Usage(format!("unknown rhs.kind {other:?}"))),
    };
    if exact.is_some() && kind != DomainKind::Ball {
        return Err(Error::Usage("radial and quartic right-hand sides need a ball domain".into()));
    }
    let m = match cfg.opt_f64("problem.m")? {
        Some(m) => m,
        None => {
            // Probe f on the grid; a nonpositive minimum leaves the tiniest
            // admissible floor and the solve reports the failure.
            let probe = ProblemSpec::new(op, domain.clone(), rhs.clone(), 1.0).map_err(as_usage)?;
            let grid = Grid::new(domain.clone(), probe_h).map_err(as_usage)?;
            let zero = vec![0.0; n];
            let fmin = grid
                .interior()
                .iter()
                .map(|&i| probe.f(&grid.coords(i), 0.0, &zero))
                .fold(f64::INFINITY, f64::min);
            let m = if fmin > 0.0 { 0.5 * fmin } else { f64::MIN_POSITIVE };
            cfg.set("problem.m", json!(m));
            m
        }
    };
    let problem = ProblemSpec::new(op, domain, rhs, m).map_err(as_usage)?;
    Ok(Built { problem, exact })
}

fn solve_options(cfg: &RunConfig) -> Result<(usize, SolveOptions)> {
    let preconditioner = match cfg.str("solver.preconditioner")? {
        "ilu0" => Preconditioner::Ilu0,
        "jacobi" => Preconditioner::Jacobi,
        other => return Err(Error::Usage(format!("unknown solver.preconditioner {other:?}"))),
    };
    let opts = SolveOptions {
        tol: cfg.f64("solver.tol")?,
        max_iter: cfg.usize("solver.max_iter")?,
        max_halvings: cfg.usize("solver.max_halvings")?,
        linear_tol: cfg.f64("solver.linear_tol")?,
        linear_max_iter: cfg.usize("solver.linear_max_iter")?,
        preconditioner,
    };
    Ok((cfg.usize("solver.steps")?, opts))
}

fn h_list(cfg: &RunConfig, key: &str) -> Result<Vec<f64>> {
    let hs = cfg.f64_list(key)?;
    if hs.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::Usage(format!("{key} entries must be positive")));
    }
    Ok(hs)
}

fn finest(hs: &[f64]) -> f64 {
    hs.iter().copied().fold(f64::INFINITY, f64::min)
}

pub(super) fn run_solve(cfg: &mut RunConfig, ctx: &Ctx) -> Result<Outcome> {
    let h = cfg.f64("grid.h")?;
    let Built { problem, exact } = build_problem(cfg, h)?;
    let (steps, opts) = solve_options(cfg)?;
    let grid = Grid::new(problem.domain.clone(), h).map_err(as_usage)?;
    match continuation_solve(&problem, &grid, steps, &opts) {
        Ok((u, rep)) => {
            let mut buf = Vec::new();
            write_solution_csv(&grid, &u, &mut buf)?;
            ctx.write("solution.csv", &buf)?;
            let c = &grid.domain.center;
            let max_error = exact.map(|e| {
                grid.interior().iter().map(|&i| (u.values[i] - e.value(&grid.coords(i), c)).abs()).fold(0.0, f64::max)
            });
            ctx.write_json(
                "report.json",
                &json!({ "config": cfg.to_json(), "converged": true, "report": rep, "max_error": max_error }),
            )?;
            Ok(Outcome {
                pass: true,
                summary: format!(
                    "solve: converged in {} stages, final residual {}",
                    rep.stages,
                    fmt_f64(rep.final_residual)
                ),
            })
        }
        Err(Error::Solve(f)) => {
            let mut buf = Vec::new();
            write_solution_csv(&grid, &f.last, &mut buf)?;
            ctx.write("solution.csv", &buf)?;
            ctx.write_json(
                "report.json",
                &json!({
                    "config": cfg.to_json(),
                    "converged": false,
                    "failure": {
                        "kind": f.kind.label(),
                        "stage": f.stage,
                        "history": f.history,
                        "message": f.message,
                    },
                }),
            )?;
            Ok(Outcome { pass: false, summary: format!("solve: {f}") })
        }
        Err(e @ Error::Usage(_)) => Err(e),
        Err(e) => {
            ctx.write_json(
                "report.json",
                &json!({ "config": cfg.to_json(), "converged": false, "failure": { "message": e.to_string() } }),
            )?;
            Ok(Outcome { pass: false, summary: format!("solve: {e}") })
        }
    }
}

pub(super) fn run_mms(cfg: &mut RunConfig, ctx: &Ctx) -> Result<Outcome> {
    let hs = h_list(cfg, "mms.h_list")?;
    let floor = cfg.f64("mms.order_floor")?;
    let Built { problem, exact } = build_problem(cfg, finest(&hs))?;
    let exact = exact.ok_or_else(|| Error::Usage("mms needs rhs.kind \"radial\" or \"quartic\"".into()))?;
    let (steps, opts) = solve_options(cfg)?;
    let study = convergence_study(&problem, &exact, &hs, steps, &opts)?;
    let mut csv = String::from("h,max_error,interior_nodes,stages,newton_iterations\n");
    for r in &study.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(r.h),
            fmt_f64(r.max_error),
            r.interior_nodes,
            r.stages,
            r.newton_iterations
        ));
    }
    ctx.write("report.csv", csv.as_bytes())?;
    let pass = study.failure.is_none() && study.order.is_some_and(|p| p >= floor);
    ctx.write_json(
        "report.json",
        &json!({ "config": cfg.to_json(), "study": study, "order_floor": floor, "pass": pass }),
    )?;
    let order = study.order.map(fmt_f64).unwrap_or_else(|| "none".into());
    let summary = match &study.failure {
        Some(f) => format!("mms: solve failed: {f}"),
        None => format!("mms: fitted order {order} (floor {}), {}", fmt_f64(floor), if pass { "PASS" } else { "FAIL" }),
    };
    Ok(Outcome { pass, summary })
}

pub(super) fn run_pogorelov(cfg: &mut RunConfig, ctx: &Ctx) -> Result<Outcome> {
    let hs = h_list(cfg, "grid.h_list")?;
    if hs.len() < 3 {
        return Err(Error::Usage(format!("grid.h_list needs at least 3 spacings, got {}", hs.len())));
    }
    let Built { problem, .. } = build_problem(cfg, finest(&hs))?;
    let (steps, opts) = solve_options(cfg)?;
    let a = cfg.f64("pogorelov.a")?;
    let spread_max = cfg.f64("pogorelov.spread_max")?;
    let beta = cfg.opt_f64("pogorelov.beta")?;
    let cap_a = cfg.opt_f64("pogorelov.A")?;
    let params = match (beta, cfg.bool("pogorelov.suggest")?) {
        (None, true) => {
            // Gradient bound from a solve on the coarsest grid.
            let coarse = hs.iter().copied().fold(0.0, f64::max);
            let grid = Grid::new(problem.domain.clone(), coarse).map_err(as_usage)?;
            let (u, _) = match continuation_solve(&problem, &grid, steps, &opts) {
                Ok(r) => r,
                Err(e @ Error::Usage(_)) => return Err(e),
                Err(e) => return Ok(Outcome { pass: false, summary: format!("pogorelov: parameter solve failed: {e}") }),
            };
            let s = suggest_parameters(&problem, &grid, &u, a).map_err(as_usage)?;
            PogorelovParams::new(s.beta, a, cap_a.unwrap_or(s.cap_a)).map_err(as_usage)?
        }
        (b, _) => PogorelovParams::new(b.unwrap_or(2.0), a, cap_a.unwrap_or(a * a * a)).map_err(as_usage)?,
    };
    cfg.set("pogorelov.beta", json!(params.beta));
    cfg.set("pogorelov.A", json!(params.cap_a));

    let report = refinement_stability(&problem, &params, &hs, steps, &opts)?;
    let mut buf = Vec::new();
    write_report_csv(&report, &mut buf)?;
    ctx.write("report.csv", &buf)?;
    let pass = report.failure.is_none() && report.spread.is_some_and(|s| s <= spread_max);
    ctx.write_json("report.json", &json!({ "config": cfg.to_json(), "report": report, "pass": pass }))?;
    let finest_row = report.rows.iter().min_by(|x, y| x.h.total_cmp(&y.h));
    let summary = match (&report.failure, finest_row, report.spread) {
        (Some(f), _, _) => format!("pogorelov: solve failed: {f}"),
        (None, Some(r), Some(s)) => format!(
            "pogorelov: sup {} at h = {}, spread {} (max {}), {}",
            fmt_f64(r.sup_quantity),
            fmt_f64(r.h),
            fmt_f64(s),
            fmt_f64(spread_max),
            if pass { "PASS" } else { "FAIL" }
        ),
        _ => "pogorelov: no rows".into(),
    };
    Ok(Outcome { pass, summary })
}
