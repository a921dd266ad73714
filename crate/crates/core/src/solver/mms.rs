use serde::Serialize;

use crate::error::{Error, Result};

use super::newton::{continuation_solve, SolveOptions};
use super::problem::{ExactSolution, ProblemSpec};
use super::Grid;

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub max_error: f64,
    pub interior_nodes: usize,
    pub stages: usize,
    pub newton_iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log h`; `None` when the
    /// table is incomplete or an error is exactly zero.
    pub order: Option<f64>,
    pub failure: Option<String>,
}

/// Max-norm errors against `exact` for each spacing, and the fitted order.
pub fn convergence_study(
    problem: &ProblemSpec,
    exact: &ExactSolution,
    h_list: &[f64],
    steps: usize,
    opts: &SolveOptions,
) -> Result<ConvergenceStudy> {
    if h_list.len() < 3 {
        return Err(Error::Usage(format!(
            "convergence study needs at least 3 spacings, got {}",
            h_list.len()
        )));
    }
    let mut rows = Vec::new();
    for &h in h_list {
        let grid = Grid::new(problem.domain.clone(), h)?;
        match continuation_solve(problem, &grid, steps, opts) {
            Ok((u, rep)) => {
                let c = &grid.domain.center;
                let max_error = grid
                    .interior()
                    .iter()
                    .map(|&idx| (u.values[idx] - exact.value(&grid.coords(idx), c)).abs())
                    .fold(0.0, f64::max);
                rows.push(ConvergenceRow {
                    h,
                    max_error,
                    interior_nodes: grid.interior().len(),
                    stages: rep.stages,
                    newton_iterations: rep.newton_iterations.iter().sum(),
                });
            }
            Err(e) => {
                return Ok(ConvergenceStudy { rows, order: None, failure: Some(e.to_string()) });
            }
        }
    }
    let order = fitted_order(&rows);
    Ok(ConvergenceStudy { rows, order, failure: None })
}

pub(crate) fn fitted_order(rows: &[ConvergenceRow]) -> Option<f64> {
    if rows.iter().any(|r| !(r.max_error > 0.0)) {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h.ln(), r.max_error.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(h: f64, e: f64) -> ConvergenceRow {
        ConvergenceRow { h, max_error: e, interior_nodes: 0, stages: 0, newton_iterations: 0 }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let rows: Vec<_> = [0.1, 0.05, 0.025].iter().map(|&h| row(h, 3.0 * h * h)).collect();
        assert!((fitted_order(&rows).unwrap() - 2.0).abs() < 1e-12);
        assert!(fitted_order(&[row(0.1, 0.0), row(0.05, 0.0)]).is_none());
    }
}
