//! Test functions of the second-derivative estimate evaluated on discrete
//! solutions, the first and second order conditions at the discrete
//! maximizer, and refinement tables of `sup (−u)^β Δu`.

use std::io::Write;

use serde::Serialize;

use crate::cones::sigma_k;
use crate::error::{domain, Error, Result};
use crate::matrixcalc::{eigs, perturb_b_frame, EigenDecomp, SymMatrix};
use crate::solver::{
    continuation_solve, node_hessian, DiscreteField, Grid, ProblemSpec, SolveOptions,
};
use crate::symfunc::s_grad_values;

/// Nodes with `−u` below this fraction of `sup(−u)` are left out of `P̃`.
const EXCLUDE_FRACTION: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PogorelovParams {
    pub beta: f64,
    pub a: f64,
    #[serde(rename = "A")]
    pub cap_a: f64,
}

impl PogorelovParams {
    pub fn new(beta: f64, a: f64, cap_a: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return domain(format!("beta = {beta} must be positive"));
        }
        if !(a > 0.0 && a.is_finite()) {
            return domain(format!("a = {a} must be positive"));
        }
        if !(cap_a >= 0.0 && cap_a.is_finite()) {
            return domain(format!("A = {cap_a} must be nonnegative"));
        }
        Ok(PogorelovParams { beta, a, cap_a })
    }

    /// `A = a³`, `C₁ = 3 sup|Du|²`, `C₂ = 3 diam²`, `β = 1.01·max{12, 2C₁a, 2C₂A}`.
    pub fn recipe(sup_grad: f64, diam: f64, a: f64) -> Result<Self> {
        let cap_a = a * a * a;
        let c1 = 3.0 * sup_grad * sup_grad;
        let c2 = 3.0 * diam * diam;
        let beta = 1.01 * 12f64.max(2.0 * c1 * a).max(2.0 * c2 * cap_a);
        Self::new(beta, a, cap_a)
    }
}

fn slot_of(grid: &Grid, idx: usize) -> usize {
    grid.slot(idx).expect("interior node")
}

fn gradient_at(problem: &ProblemSpec, grid: &Grid, u: &DiscreteField, idx: usize) -> Vec<f64> {
    crate::solver::gradient_stencil(u, grid, idx, &problem.boundary).expect("interior node")
}

fn hessian_at(problem: &ProblemSpec, grid: &Grid, u: &DiscreteField, idx: usize) -> SymMatrix {
    node_hessian(u, grid, slot_of(grid, idx), &problem.boundary)
}

/// The recipe applied with `sup|Du|` measured on the interior of `u`.
pub fn suggest_parameters(
    problem: &ProblemSpec,
    grid: &Grid,
    u: &DiscreteField,
    a: f64,
) -> Result<PogorelovParams> {
    let sup_grad = grid
        .interior()
        .iter()
        .map(|&idx| gradient_at(problem, grid, u, idx).iter().map(|p| p * p).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    PogorelovParams::recipe(sup_grad, problem.domain.diam(), a)
}

/// `P̃` on interior nodes; `NaN` marks excluded nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct TestField {
    /// Indexed like `grid.interior()`.
    pub values: Vec<f64>,
    pub excluded: usize,
    /// Grid index of the maximizer.
    pub argmax: usize,
    pub max: f64,
}

/// `ln λ_max + β ln(−u) + (a/2)|Du|² + (A/2)|x − c|²`, the last term dropped
/// for `k = n`. With `perturbed`, `λ_max` is replaced by the top eigenvalue of
/// `D²u − B`, `B = I − v vᵀ` in the node's own frame (`v` the top eigenvector).
pub fn test_function_field(
    problem: &ProblemSpec,
    grid: &Grid,
    u: &DiscreteField,
    params: &PogorelovParams,
    perturbed: bool,
) -> Result<TestField> {
    let interior = grid.interior();
    let sup_neg = interior.iter().map(|&i| -u.values[i]).fold(0.0, f64::max);
    let floor = EXCLUDE_FRACTION * sup_neg;
    let position = problem.op.k < problem.op.n;
    let c = &problem.domain.center;
    let mut values = Vec::with_capacity(interior.len());
    let mut excluded = 0;
    let mut best: Option<(usize, f64)> = None;
    for &idx in interior {
        let neg = -u.values[idx];
        let h = hessian_at(problem, grid, u, idx);
        let lam = top_eigenvalue(&h, perturbed)?;
        if !(neg > floor) || !(lam > 0.0) {
            values.push(f64::NAN);
            excluded += 1;
            continue;
        }
        let p = gradient_at(problem, grid, u, idx);
        let x = grid.coords(idx);
        let mut v = lam.ln() + params.beta * neg.ln() + 0.5 * params.a * p.iter().map(|t| t * t).sum::<f64>();
        if position {
            let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            v += 0.5 * params.cap_a * r2;
        }
        values.push(v);
        if best.map_or(true, |(_, m)| v > m) {
            best = Some((idx, v));
        }
    }
    let (argmax, max) = best.ok_or_else(|| Error::Numerical("every interior node was excluded from the test function".into()))?;
    Ok(TestField { values, excluded, argmax, max })
}

fn top_eigenvalue(h: &SymMatrix, perturbed: bool) -> Result<f64> {
    let e = eigs(h)?;
    if !perturbed {
        return Ok(e.values[0]);
    }
    let b = perturb_b_frame(&e.vector(0));
    Ok(eigs(&h.add(&b.scaled(-1.0)))?.values[0])
}

/// `max (−u)^β Δu` over interior nodes, `Δu` the stencil trace.
pub fn pogorelov_sup(problem: &ProblemSpec, grid: &Grid, u: &DiscreteField, beta: f64) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for &idx in grid.interior() {
        let lap = hessian_at(problem, grid, u, idx).trace();
        let q = (-u.values[idx]).max(0.0).powf(beta) * lap;
        if q > best.0 {
            best = (q, idx);
        }
    }
    best
}

/// `min σ_k(λ(D²u))` over interior nodes, the empirical `−G`.
pub fn sigma_lower_bound_monitor(problem: &ProblemSpec, grid: &Grid, u: &DiscreteField) -> Result<f64> {
    let mut m = f64::INFINITY;
    for &idx in grid.interior() {
        let e = eigs(&hessian_at(problem, grid, u, idx))?;
        m = m.min(sigma_k(&e.values, problem.op.k));
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FocSoc {
    /// Coordinates of the maximizer of `P̃`.
    pub x0: Vec<f64>,
    /// Rotated-frame components of the first order condition.
    pub foc: Vec<f64>,
    pub foc_max: f64,
    /// Left side of the second order condition contracted with `S_k^{ii}`;
    /// expected `≤ 0` up to discretization error.
    pub soc: f64,
    /// Some lattice neighbor needed for the difference quotients is not
    /// interior, or the maximizer's own stencil is cut by the boundary.
    pub boundary_adjacent: bool,
}

fn unit(n: usize, i: usize, s: i32) -> Vec<i32> {
    let mut d = vec![0; n];
    d[i] = s;
    d
}

/// First and second order conditions at the maximizer of `P̃`, in the
/// eigenframe of the Hessian there. Third derivatives come from central
/// differences of the frozen-frame Hessian at axis neighbours, fourth
/// derivatives of its `(1,1)` entry from second differences.
pub fn foc_soc_check(
    problem: &ProblemSpec,
    grid: &Grid,
    u: &DiscreteField,
    params: &PogorelovParams,
) -> Result<FocSoc> {
    let field = test_function_field(problem, grid, u, params, false)?;
    let x0 = field.argmax;
    let n = grid.dim();
    let h = grid.h;
    let e: EigenDecomp = eigs(&hessian_at(problem, grid, u, x0))?;
    let vt = |m: &SymMatrix| -> Vec<f64> {
        // VᵀMV, row-major
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += e.vectors[i * n + a] * m.get(i, j) * e.vectors[j * n + b];
                    }
                }
                out[a * n + b] = s;
            }
        }
        out
    };
    let rotate = |w: &[f64]| -> Vec<f64> {
        (0..n).map(|a| (0..n).map(|i| e.vectors[i * n + a] * w[i]).sum()).collect()
    };
    let interior_offset = |d: &[i32]| {
        grid.offset(x0, d).filter(|&j| grid.slot(j).is_some())
    };
    let truncated = crate::solver::node_is_truncated(grid, slot_of(grid, x0));
    let rotated_at = |d: &[i32]| interior_offset(d).map(|j| vt(&hessian_at(problem, grid, u, j)));

    let lam = &e.values;
    let l1 = lam[0];
    let mut boundary_adjacent = truncated;
    let c0 = vt(&hessian_at(problem, grid, u, x0));

    // t[i][a*n+b] = ∂_i (VᵀHV)_{ab} along lattice axis i.
    let mut t_axis = vec![vec![0.0; n * n]; n];
    for i in 0..n {
        match (rotated_at(&unit(n, i, 1)), rotated_at(&unit(n, i, -1))) {
            (Some(p), Some(m)) => {
                for ab in 0..n * n {
                    t_axis[i][ab] = (p[ab] - m[ab]) / (2.0 * h);
                }
            }
            _ => boundary_adjacent = true,
        }
    }
    // Rotated third derivatives T[a][b][c] = Σ_i V_{ic} t_axis[i][ab].
    let third = |a: usize, b: usize, c: usize| -> f64 {
        (0..n).map(|i| e.vectors[i * n + c] * t_axis[i][a * n + b]).sum()
    };

    // Lattice Hessian of g = (VᵀHV)_{11}, then rotated.
    let g = |d: &[i32]| rotated_at(d).map(|m| m[0]);
    let mut d2g = SymMatrix::zeros(n);
    for i in 0..n {
        match (g(&unit(n, i, 1)), g(&unit(n, i, -1))) {
            (Some(p), Some(m)) => d2g.set_sym(i, i, (p - 2.0 * c0[0] + m) / (h * h)),
            _ => boundary_adjacent = true,
        }
        for j in (i + 1)..n {
            let corner = |si: i32, sj: i32| {
                let mut d = vec![0; n];
                d[i] = si;
                d[j] = sj;
                g(&d)
            };
            match (corner(1, 1), corner(1, -1), corner(-1, 1), corner(-1, -1)) {
                (Some(a), Some(b), Some(c), Some(d)) => {
                    d2g.set_sym(i, j, (a - b - c + d) / (4.0 * h * h));
                }
                _ => boundary_adjacent = true,
            }
        }
    }
    let fourth = vt(&d2g);

    let uval = u.values[x0];
    let p = rotate(&gradient_at(problem, grid, u, x0));
    let x = grid.coords(x0);
    let xr: Vec<f64> = rotate(&x.iter().zip(&problem.domain.center).map(|(a, b)| a - b).collect::<Vec<_>>());
    let a = params.a;
    let beta = params.beta;
    let cap_a = if problem.op.k < problem.op.n { params.cap_a } else { 0.0 };

    let foc: Vec<f64> = (0..n)
        .map(|i| third(0, 0, i) / l1 + beta * p[i] / uval + a * p[i] * lam[i] + cap_a * xr[i])
        .collect();
    let foc_max = foc.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    // λ̃_p = λ_p − 1 for p > 1.
    let w = s_grad_values(&problem.op, lam);
    let mut soc = 0.0;
    for i in 0..n {
        let mut term = beta * lam[i] / uval - beta * p[i] * p[i] / (uval * uval) + fourth[i * n + i] / l1
            - third(0, 0, i).powi(2) / (l1 * l1)
            + a * lam[i] * lam[i]
            + cap_a;
        for q in 1..n {
            term += 2.0 * third(0, q, i).powi(2) / (l1 * (l1 - lam[q] + 1.0));
        }
        for j in 0..n {
            term += a * p[j] * third(j, i, i);
        }
        soc += w[i] * term;
    }
    Ok(FocSoc { x0: x, foc, foc_max, soc, boundary_adjacent })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementRow {
    pub h: f64,
    pub sup_quantity: f64,
    /// Coordinates where the sup is attained.
    pub sup_at: Vec<f64>,
    /// `min σ_k(D²u)`; absent for `k = n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_min: Option<f64>,
    pub foc: FocSoc,
    pub excluded: usize,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PogorelovReport {
    pub params: PogorelovParams,
    pub full_order: bool,
    pub rows: Vec<RefinementRow>,
    /// `|s₁ − s₂| / max(|s₁|, |s₂|)` over the two finest grids.
    pub spread: Option<f64>,
    /// Max of the sup over the two finest grids.
    pub empirical_c: Option<f64>,
    pub failure: Option<String>,
}

/// Solves on each spacing and tabulates the estimate's quantity.
pub fn refinement_stability(
    problem: &ProblemSpec,
    params: &PogorelovParams,
    h_list: &[f64],
    steps: usize,
    opts: &SolveOptions,
) -> Result<PogorelovReport> {
    if h_list.len() < 3 {
        return Err(Error::Usage(format!("refinement table needs at least 3 spacings, got {}", h_list.len())));
    }
    let full_order = problem.op.k == problem.op.n;
    let mut rows = Vec::new();
    let mut failure = None;
    for &h in h_list {
        let grid = Grid::new(problem.domain.clone(), h)?;
        let u = match continuation_solve(problem, &grid, steps, opts) {
            Ok((u, _)) => u,
            Err(e) => {
                failure = Some(format!("h = {h}: {e}"));
                break;
            }
        };
        rows.push(report_row(problem, &grid, &u, params, full_order)?);
    }
    let mut sorted: Vec<&RefinementRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.h.total_cmp(&b.h));
    let (spread, empirical_c) = if failure.is_none() && sorted.len() >= 2 {
        let (s1, s2) = (sorted[0].sup_quantity, sorted[1].sup_quantity);
        let den = s1.abs().max(s2.abs());
        (Some(if den > 0.0 { (s1 - s2).abs() / den } else { 0.0 }), Some(s1.max(s2)))
    } else {
        (None, None)
    };
    Ok(PogorelovReport { params: *params, full_order, rows, spread, empirical_c, failure })
}

pub fn report_row(
    problem: &ProblemSpec,
    grid: &Grid,
    u: &DiscreteField,
    params: &PogorelovParams,
    full_order: bool,
) -> Result<RefinementRow> {
    let (sup_quantity, at) = pogorelov_sup(problem, grid, u, params.beta);
    let field = test_function_field(problem, grid, u, params, false)?;
    let foc = foc_soc_check(problem, grid, u, params)?;
    let sigma_min = if full_order { None } else { Some(sigma_lower_bound_monitor(problem, grid, u)?) };
    let mut flags = Vec::new();
    if foc.boundary_adjacent {
        flags.push("boundary_adjacent".to_string());
    }
    if sup_quantity < 0.0 {
        flags.push("negative_laplacian".to_string());
    }
    if foc.soc > 0.0 {
        flags.push("soc_positive".to_string());
    }
    Ok(RefinementRow {
        h: grid.h,
        sup_quantity,
        sup_at: grid.coords(at),
        sigma_min,
        foc,
        excluded: field.excluded,
        flags,
    })
}

/// CSV with `h, beta, a, A, sup_quantity, [sigma_min,] foc_resid, soc, flags`;
/// the `sigma_min` column exists only for `k < n`.
pub fn write_report_csv(report: &PogorelovReport, out: &mut impl Write) -> Result<()> {
    let f = crate::fmt_f64;
    if report.full_order {
        writeln!(out, "h,beta,a,A,sup_quantity,foc_resid,soc,flags")?;
    } else {
        writeln!(out, "h,beta,a,A,sup_quantity,sigma_min,foc_resid,soc,flags")?;
    }
    let p = &report.params;
    for r in &report.rows {
        let mut cells = vec![f(r.h), f(p.beta), f(p.a), f(p.cap_a), f(r.sup_quantity)];
        if let Some(s) = r.sigma_min {
            cells.push(f(s));
        }
        cells.push(f(r.foc.foc_max));
        cells.push(f(r.foc.soc));
        cells.push(r.flags.join(";"));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{manufactured_radial, Domain, DomainKind, Rhs};
    use crate::symfunc::SumOperator;

    fn radial(n: usize, k: usize, h: f64) -> (ProblemSpec, Grid, DiscreteField) {
        let op = SumOperator::new(n, k, 1.0).unwrap();
        let dom = Domain::centered(DomainKind::Ball, n, 1.0).unwrap();
        let (exact, f) = manufactured_radial(&op, 1.0, 1.0).unwrap();
        let p = ProblemSpec::new(op, dom, Rhs::Constant(f), 0.5 * f).unwrap();
        let grid = Grid::new(p.domain.clone(), h).unwrap();
        let c = p.domain.center.clone();
        let u = grid.sample_interior(|x| exact.value(x, &c));
        (p, grid, u)
    }

    #[test]
    fn recipe_values() {
        let p = PogorelovParams::recipe(1.0, 2.0, 8.0).unwrap();
        assert_eq!(p.cap_a, 512.0);
        assert!((p.beta - 12410.88).abs() < 1e-9);
        let p = PogorelovParams::recipe(1.0, 2.0, 0.01).unwrap();
        assert!((p.beta - 12.12).abs() < 1e-12);
    }

    #[test]
    fn radial_sup_at_center() {
        let (p, g, u) = radial(2, 2, 1.0 / 16.0);
        let (s, at) = pogorelov_sup(&p, &g, &u, 2.0);
        assert!((s - 0.5).abs() < 1e-10, "{s}");
        assert!(g.coords(at).iter().all(|x| x.abs() < 1e-12));
        let (s0, _) = pogorelov_sup(&p, &g, &u, 0.0);
        assert!((s0 - 2.0).abs() < 1e-10);
        let (s5, _) = pogorelov_sup(&p, &g, &u, 5.0);
        assert!(s5 <= s);
    }

    #[test]
    fn radial_maximizer_near_critical_sphere() {
        // k = n drops the position term, so r*² = R² − 2β/(ac²).
        let params = PogorelovParams::new(2.0, 10.0, 8.0).unwrap();
        for h in [1.0 / 16.0, 1.0 / 32.0] {
            let (p, g, u) = radial(2, 2, h);
            let f = test_function_field(&p, &g, &u, &params, false).unwrap();
            let r = g.coords(f.argmax).iter().map(|x| x * x).sum::<f64>().sqrt();
            let rstar = (1.0f64 - 2.0 * 2.0 / 10.0).sqrt();
            assert!((r - rstar).abs() < 1.5 * h, "h={h} r={r} r*={rstar}");
        }
    }

    #[test]
    fn perturbed_field_matches_with_simple_top() {
        let params = PogorelovParams::new(2.0, 2.0, 8.0).unwrap();
        let (p, g, u) = radial(3, 2, 0.125);
        let a = test_function_field(&p, &g, &u, &params, false).unwrap();
        let b = test_function_field(&p, &g, &u, &params, true).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12 || (x.is_nan() && y.is_nan()));
        }
        assert_eq!(a.argmax, b.argmax);
    }

    #[test]
    fn foc_shrinks_on_radial_solution() {
        let params = PogorelovParams::new(2.0, 10.0, 0.0).unwrap();
        let mut last = f64::INFINITY;
        for h in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0] {
            let (p, g, u) = radial(2, 2, h);
            let r = foc_soc_check(&p, &g, &u, &params).unwrap();
            assert!(!r.boundary_adjacent);
            assert!(r.foc_max < last, "h={h} {r:?}");
            assert!(r.soc <= 1e-6, "{r:?}");
            last = r.foc_max;
        }
        // k < n with the position term: r*² = R² − 2β/(ac² + A).
        let params = PogorelovParams::new(2.0, 2.0, 8.0).unwrap();
        let (p, g, u) = radial(3, 2, 1.0 / 8.0);
        let r = foc_soc_check(&p, &g, &u, &params).unwrap();
        let rr = r.x0.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((rr - 0.6f64.sqrt()).abs() < 0.15, "{r:?}");
    }

    #[test]
    fn full_order_rows_have_no_sigma_bound() {
        let params = PogorelovParams::new(2.0, 2.0, 8.0).unwrap();
        let (p, g, u) = radial(2, 2, 0.125);
        let row = report_row(&p, &g, &u, &params, true).unwrap();
        assert!(row.sigma_min.is_none());
        let (p, g, u) = radial(3, 2, 0.25);
        let row = report_row(&p, &g, &u, &params, false).unwrap();
        assert!((row.sigma_min.unwrap() - 3.0).abs() < 1e-9);
    }
}
