use rayon::prelude::*;
use serde::Serialize;

use crate::cones::in_gamma_tilde_values;
use crate::error::{precondition, Error, Result};
use crate::matrixcalc::{eigs, f_grad_from, SymMatrix};

use super::linalg::{bicgstab, Csr, Precond};
use super::problem::{Boundary, ProblemSpec};
use super::{DiscreteField, Grid, NodeClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    Jacobi,
    Ilu0,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Max-norm residual target.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Relative 2-norm target for each linear solve.
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 30,
            linear_tol: 1e-9,
            linear_max_iter: 5000,
            preconditioner: Preconditioner::Ilu0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    LeftCone,
    NoConvergence,
    MaximumPrinciple,
    RhsBelowFloor,
}

impl FailureKind {
    pub fn label(self) -> &'static str {
        match self {
            FailureKind::LeftCone => "left admissible cone",
            FailureKind::NoConvergence => "no convergence",
            FailureKind::MaximumPrinciple => "nonnegative interior value",
            FailureKind::RhsBelowFloor => "right-hand side below its lower bound",
        }
    }
}

/// Solver failure carrying the last iterate.
#[derive(Clone, Debug, thiserror::Error)]
#[error("solve failed ({}){}: {message}", kind.label(), stage.map(|s| format!(" at stage {s}")).unwrap_or_default())]
pub struct SolveFailure {
    pub kind: FailureKind,
    pub stage: Option<usize>,
    pub last: DiscreteField,
    /// Max-norm residual after each accepted iterate.
    pub history: Vec<f64>,
    pub message: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Max-norm residual, starting with the initial guess.
    pub history: Vec<f64>,
    /// Accepted damping factor per iteration.
    pub steps: Vec<f64>,
    pub linear_iterations: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationReport {
    pub mu: f64,
    pub stages: usize,
    pub stage_t: Vec<f64>,
    pub newton_iterations: Vec<usize>,
    pub rejected_stages: usize,
    pub final_residual: f64,
    pub f_min: f64,
    pub u_max_interior: f64,
}

/// Right-hand side `(1 − t) f₀ + t f` and boundary data for one homotopy stage.
struct Stage<'a> {
    problem: &'a ProblemSpec,
    t: f64,
    f0: Option<&'a [f64]>,
    boundary: Boundary,
}

struct NodeEval {
    res: f64,
    admissible: bool,
    grad: SymMatrix,
    fu: f64,
    fp: Vec<f64>,
}

fn eval_node(grid: &Grid, stage: &Stage, u: &[f64], slot: usize) -> NodeEval {
    let n = grid.dim();
    let st = grid.stencil(slot);
    let h = grid.h;
    let hess = st.hessian(n, u, &stage.boundary, h);
    let p = st.gradient(n, u, &stage.boundary, h);
    let op = &stage.problem.op;
    let (fval, admissible, grad) = match eigs(&hess) {
        Ok(e) => (
            op.s_of(&e.values, op.k as isize),
            in_gamma_tilde_values(op, &e.values),
            f_grad_from(op, &e),
        ),
        Err(_) => (f64::NAN, false, SymMatrix::zeros(n)),
    };
    let x = grid.coords(st.idx);
    let ev = stage.problem.eval(&x, u[st.idx], &p);
    let base = stage.f0.map(|f0| f0[slot]).unwrap_or(0.0);
    let target = (1.0 - stage.t) * base + stage.t * ev.f;
    let fp = ev.fp.iter().map(|v| stage.t * v).collect();
    NodeEval {
        res: fval - target,
        admissible: admissible && fval.is_finite(),
        grad,
        fu: stage.t * ev.fu,
        fp,
    }
}

fn eval_all(grid: &Grid, stage: &Stage, u: &[f64]) -> Vec<NodeEval> {
    (0..grid.interior().len())
        .into_par_iter()
        .map(|s| eval_node(grid, stage, u, s))
        .collect()
}

fn max_norm(evals: &[NodeEval]) -> f64 {
    evals.iter().map(|e| e.res.abs()).fold(0.0, f64::max)
}

fn jacobian_row(grid: &Grid, slot: usize, e: &NodeEval) -> Vec<(usize, f64)> {
    let n = grid.dim();
    let h = grid.h;
    let st = grid.stencil(slot);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(1 + 2 * st.arms.len());
    let mut center = -e.fu;
    let push = |arm: &super::stencil::Arm, w: f64, row: &mut Vec<(usize, f64)>| {
        if let Some(j) = arm.node {
            row.push((grid.slot(j).expect("interior neighbour"), w));
        }
    };
    let add_dir = |k: usize, coef: f64, row: &mut Vec<(usize, f64)>, center: &mut f64| {
        let (wp, wm, w0) = st.second_weights(k, h);
        push(&st.arms[k][0], coef * wp, row);
        push(&st.arms[k][1], coef * wm, row);
        *center += coef * w0;
    };
    for i in 0..n {
        add_dir(i, e.grad.get(i, i), &mut row, &mut center);
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let g = 0.5 * e.grad.get(i, j);
            add_dir(k, g, &mut row, &mut center);
            add_dir(k + 1, -g, &mut row, &mut center);
            k += 2;
        }
    }
    for i in 0..n {
        if e.fp[i] != 0.0 {
            let (wp, wm, w0) = st.first_weights(i, h);
            let c = -e.fp[i];
            if let Some(j) = st.arms[i][0].node {
                row.push((grid.slot(j).expect("interior neighbour"), c * wp));
            }
            if let Some(j) = st.arms[i][1].node {
                row.push((grid.slot(j).expect("interior neighbour"), c * wm));
            }
            center += c * w0;
        }
    }
    row.push((slot, center));
    row.sort_by_key(|&(c, _)| c);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (c, v) in row {
        match merged.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => merged.push((c, v)),
        }
    }
    merged
}

fn set_boundary_nodes(grid: &Grid, u: &mut [f64], bnd: &Boundary) {
    let c = &grid.domain.center;
    for (idx, v) in u.iter_mut().enumerate() {
        match grid.class(idx) {
            NodeClass::Boundary => *v = bnd.value(&grid.coords(idx), c),
            NodeClass::Exterior => *v = 0.0,
            NodeClass::Interior => {}
        }
    }
}

fn failure(kind: FailureKind, u: Vec<f64>, history: Vec<f64>, message: String) -> SolveFailure {
    SolveFailure { kind, stage: None, last: DiscreteField { values: u }, history, message }
}

fn newton_core(
    grid: &Grid,
    stage: &Stage,
    mut u: Vec<f64>,
    opts: &SolveOptions,
) -> std::result::Result<(DiscreteField, NewtonReport), SolveFailure> {
    let interior = grid.interior();
    let mut evals = eval_all(grid, stage, &u);
    let mut norm = max_norm(&evals);
    let mut report = NewtonReport { history: vec![norm], ..Default::default() };
    let mut delta = vec![0.0; interior.len()];
    let mut cand = u.clone();
    for _ in 0..opts.max_iter {
        if norm <= opts.tol {
            return Ok((DiscreteField { values: u }, report));
        }
        let rows: Vec<_> = (0..interior.len())
            .into_par_iter()
            .map(|s| jacobian_row(grid, s, &evals[s]))
            .collect();
        let a = Csr::from_rows(rows);
        let m = match opts.preconditioner {
            Preconditioner::Jacobi => Precond::jacobi(&a),
            Preconditioner::Ilu0 => Precond::ilu0(&a),
        };
        let rhs: Vec<f64> = evals.iter().map(|e| -e.res).collect();
        let out = bicgstab(&a, &m, &rhs, &mut delta, opts.linear_tol, opts.linear_max_iter);
        report.linear_iterations.push(out.iterations);

        let mut step = 1.0;
        let mut accepted = None;
        let mut any_admissible = false;
        for _ in 0..=opts.max_halvings {
            cand.copy_from_slice(&u);
            for (s, &idx) in interior.iter().enumerate() {
                cand[idx] += step * delta[s];
            }
            let ce = eval_all(grid, stage, &cand);
            let admissible = ce.iter().all(|e| e.admissible);
            any_admissible |= admissible;
            if admissible {
                let cn = max_norm(&ce);
                if cn < norm {
                    accepted = Some((ce, cn));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((ce, cn)) => {
                std::mem::swap(&mut u, &mut cand);
                evals = ce;
                norm = cn;
                report.iterations += 1;
                report.history.push(norm);
                report.steps.push(step);
            }
            None => {
                let (kind, why) = if any_admissible {
                    (FailureKind::NoConvergence, "line search found no residual decrease")
                } else {
                    (FailureKind::LeftCone, "every damped step left the admissible cone")
                };
                let msg = format!(
                    "{why} after {} halvings (residual {norm:e}, linear rel. residual {:e})",
                    opts.max_halvings, out.rel_residual
                );
                return Err(failure(kind, u, report.history, msg));
            }
        }
    }
    if norm <= opts.tol {
        return Ok((DiscreteField { values: u }, report));
    }
    let msg = format!("residual {norm:e} above tolerance after {} iterations", opts.max_iter);
    Err(failure(FailureKind::NoConvergence, u, report.history, msg))
}

fn check_options(opts: &SolveOptions) -> Result<()> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 || !(opts.linear_tol > 0.0) {
        return Err(Error::Usage("solver tolerances and iteration caps must be positive".into()));
    }
    Ok(())
}

/// Residual field: `F(D²u) − f(x, u, Du)` inside, `u − g` on boundary nodes.
pub fn residual(problem: &ProblemSpec, grid: &Grid, u: &DiscreteField) -> DiscreteField {
    let stage = Stage { problem, t: 1.0, f0: None, boundary: problem.boundary };
    let evals = eval_all(grid, &stage, &u.values);
    let mut out = vec![0.0; grid.len()];
    for (s, &idx) in grid.interior().iter().enumerate() {
        out[idx] = evals[s].res;
    }
    let c = &grid.domain.center;
    for (idx, v) in out.iter_mut().enumerate() {
        if grid.class(idx) == NodeClass::Boundary {
            *v = u.values[idx] - problem.boundary.value(&grid.coords(idx), c);
        }
    }
    DiscreteField { values: out }
}

/// Admissible-cone test of `λ(D²u)` at every interior node.
pub(crate) fn all_admissible(problem: &ProblemSpec, grid: &Grid, u: &DiscreteField) -> bool {
    let stage = Stage { problem, t: 1.0, f0: None, boundary: problem.boundary };
    eval_all(grid, &stage, &u.values).iter().all(|e| e.admissible)
}

/// Damped Newton from an admissible `u0` satisfying the boundary condition.
pub fn newton_solve(
    problem: &ProblemSpec,
    grid: &Grid,
    u0: &DiscreteField,
    opts: &SolveOptions,
) -> Result<(DiscreteField, NewtonReport)> {
    check_options(opts)?;
    if u0.values.len() != grid.len() {
        return precondition("initial field does not match the grid");
    }
    let c = &grid.domain.center;
    for idx in 0..grid.len() {
        if grid.class(idx) == NodeClass::Boundary {
            let g = problem.boundary.value(&grid.coords(idx), c);
            if (u0.values[idx] - g).abs() > 1e-12 * (1.0 + g.abs()) {
                return precondition(format!("initial field violates the boundary condition at node {idx}"));
            }
        }
    }
    if !all_admissible(problem, grid, u0) {
        return precondition("initial field is not admissible at every interior node");
    }
    let stage = Stage { problem, t: 1.0, f0: None, boundary: problem.boundary };
    newton_core(grid, &stage, u0.values.clone(), opts).map_err(Error::from)
}

const MIN_STAGE: f64 = 1.0 / 4096.0;

/// Homotopy from the quadratic seed `μ(|x − c|² − ρ²)/2`, `ρ` the outer radius.
pub fn continuation_solve(
    problem: &ProblemSpec,
    grid: &Grid,
    steps: usize,
    opts: &SolveOptions,
) -> Result<(DiscreteField, ContinuationReport)> {
    check_options(opts)?;
    if steps == 0 {
        return Err(Error::Usage("continuation needs at least one step".into()));
    }
    let interior = grid.interior();
    if interior.is_empty() {
        return precondition("grid has no interior nodes");
    }
    let op = &problem.op;
    let n = grid.dim();
    let zero_p = vec![0.0; n];
    let sup_f = interior
        .iter()
        .map(|&idx| problem.f(&grid.coords(idx), 0.0, &zero_p))
        .fold(f64::NEG_INFINITY, f64::max);
    let mu = (-40..=60)
        .map(|j| 2f64.powi(j))
        .find(|&mu| op.s_of(&vec![mu; n], op.k as isize) >= sup_f)
        .ok_or_else(|| Error::Domain(format!("no quadratic seed reaches sup f = {sup_f}")))?;
    let rho = grid.domain.outer_radius();
    let seed_bnd = Boundary::quadratic(mu, rho);
    let mut u = grid.sample(|x| seed_bnd.value(x, &grid.domain.center)).values;

    let seed_stage = Stage { problem, t: 0.0, f0: None, boundary: seed_bnd };
    let seed_eval = eval_all(grid, &seed_stage, &u);
    if !seed_eval.iter().all(|e| e.admissible) {
        return precondition("quadratic seed is not admissible on this grid");
    }
    let f0: Vec<f64> = seed_eval.iter().map(|e| e.res).collect();

    let mut t = 0.0;
    let mut dt = 1.0 / steps as f64;
    let mut report = ContinuationReport {
        mu,
        stages: 0,
        stage_t: Vec::new(),
        newton_iterations: Vec::new(),
        rejected_stages: 0,
        final_residual: 0.0,
        f_min: f64::NAN,
        u_max_interior: f64::NAN,
    };
    while t < 1.0 {
        let t_next = if 1.0 - t <= dt * (1.0 + 1e-12) { 1.0 } else { t + dt };
        let bnd = seed_bnd.lerp(&problem.boundary, t_next);
        let stage = Stage { problem, t: t_next, f0: Some(&f0), boundary: bnd };
        let mut start = u.clone();
        set_boundary_nodes(grid, &mut start, &bnd);
        match newton_core(grid, &stage, start, opts) {
            Ok((sol, nr)) => {
                u = sol.values;
                t = t_next;
                report.stages += 1;
                report.stage_t.push(t);
                report.newton_iterations.push(nr.iterations);
                report.final_residual = *nr.history.last().expect("history");
                dt = (2.0 * dt).min(1.0 / steps as f64);
            }
            Err(mut fail) => {
                report.rejected_stages += 1;
                dt *= 0.5;
                if dt < MIN_STAGE {
                    fail.stage = Some(report.stages + 1);
                    fail.message = format!("{} (homotopy parameter {t_next})", fail.message);
                    return Err(fail.into());
                }
            }
        }
    }

    let sol = DiscreteField { values: u };
    let mut f_min = f64::INFINITY;
    let mut u_max = f64::NEG_INFINITY;
    for &idx in interior {
        let s = grid.slot(idx).expect("interior");
        let p = grid.stencil(s).gradient(n, &sol.values, &problem.boundary, grid.h);
        f_min = f_min.min(problem.f(&grid.coords(idx), sol.values[idx], &p));
        u_max = u_max.max(sol.values[idx]);
    }
    report.f_min = f_min;
    report.u_max_interior = u_max;
    let stage_no = Some(report.stages);
    if f_min < problem.m {
        return Err(SolveFailure {
            kind: FailureKind::RhsBelowFloor,
            stage: stage_no,
            last: sol,
            history: vec![report.final_residual],
            message: format!("min f = {f_min} below m = {}", problem.m),
        }
        .into());
    }
    if problem.boundary.is_zero() && u_max >= 0.0 {
        return Err(SolveFailure {
            kind: FailureKind::MaximumPrinciple,
            stage: stage_no,
            last: sol,
            history: vec![report.final_residual],
            message: format!("interior maximum {u_max} is not negative"),
        }
        .into());
    }
    Ok((sol, report))
}
