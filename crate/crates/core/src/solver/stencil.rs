use crate::error::{Error, Result};
use crate::matrixcalc::SymMatrix;

use super::problem::Boundary;
use super::{DiscreteField, Grid, NodeClass};

/// Lattice directions: the axes `e_i`, then `e_i + e_j`, `e_i − e_j` for `i < j`.
pub(crate) fn directions(n: usize) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    for i in 0..n {
        let mut d = vec![0; n];
        d[i] = 1;
        out.push(d);
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut p = vec![0; n];
            p[i] = 1;
            p[j] = 1;
            out.push(p);
            let mut m = vec![0; n];
            m[i] = 1;
            m[j] = -1;
            out.push(m);
        }
    }
    out
}

/// One side of a three-point difference.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Arm {
    /// Arm length in units of `h·|d|`.
    pub t: f64,
    /// Interior neighbour, if the arm reaches a full lattice step inside.
    pub node: Option<usize>,
    /// Lattice neighbour outside the interior (for classification).
    pub outside: Option<usize>,
    /// `|y − c|²` at the arm end, to evaluate quadratic boundary data.
    pub r2: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct NodeStencil {
    pub idx: usize,
    /// `[forward, backward]` per direction.
    pub arms: Vec<[Arm; 2]>,
}

impl NodeStencil {
    pub fn build(grid: &Grid, idx: usize) -> Self {
        let n = grid.dim();
        let h = grid.h;
        let x = grid.coords(idx);
        let c = &grid.domain.center;
        let dirs = directions(n);
        let mut arms = Vec::with_capacity(dirs.len());
        let mut w = vec![0.0; n];
        for d in &dirs {
            let mut pair = [Arm { t: 1.0, node: None, outside: None, r2: 0.0 }; 2];
            for (side, sgn) in [1i32, -1].into_iter().enumerate() {
                let step: Vec<i32> = d.iter().map(|v| v * sgn).collect();
                let nb = grid.offset(idx, &step);
                let inside = nb.map(|j| grid.class(j) == NodeClass::Interior).unwrap_or(false);
                let arm = if inside {
                    Arm { t: 1.0, node: nb, outside: None, r2: 0.0 }
                } else {
                    for i in 0..n {
                        w[i] = h * step[i] as f64;
                    }
                    let t = grid.domain.crossing(&x, &w);
                    let r2 = (0..n).map(|i| (x[i] + t * w[i] - c[i]).powi(2)).sum();
                    Arm { t, node: None, outside: nb, r2 }
                };
                pair[side] = arm;
            }
            arms.push(pair);
        }
        NodeStencil { idx, arms }
    }

    pub fn outside_neighbours(&self) -> impl Iterator<Item = Option<usize>> + '_ {
        self.arms.iter().flat_map(|p| [p[0].outside, p[1].outside])
    }

    /// Whether any arm is shorter than a full lattice step.
    pub fn truncated(&self) -> bool {
        self.arms.iter().any(|p| p[0].node.is_none() || p[1].node.is_none())
    }

    fn arm_value(arm: &Arm, u: &[f64], bnd: &Boundary) -> f64 {
        match arm.node {
            Some(j) => u[j],
            None => bnd.value_r2(arm.r2),
        }
    }

    /// Weights `(forward, backward, center)` of the second difference along
    /// direction `k`, approximating `dᵀ D²u d`.
    pub fn second_weights(&self, k: usize, h: f64) -> (f64, f64, f64) {
        let tp = self.arms[k][0].t;
        let tm = self.arms[k][1].t;
        let s = 2.0 / (h * h * (tp + tm));
        (s / tp, s / tm, -s * (tp + tm) / (tp * tm))
    }

    /// Weights of the first difference along axis `i`.
    pub fn first_weights(&self, i: usize, h: f64) -> (f64, f64, f64) {
        let tp = self.arms[i][0].t;
        let tm = self.arms[i][1].t;
        let s = 1.0 / (h * tp * tm * (tp + tm));
        (s * tm * tm, -s * tp * tp, s * (tp * tp - tm * tm))
    }

    pub fn second_diff(&self, k: usize, u: &[f64], bnd: &Boundary, h: f64) -> f64 {
        let (wp, wm, w0) = self.second_weights(k, h);
        let up = Self::arm_value(&self.arms[k][0], u, bnd);
        let um = Self::arm_value(&self.arms[k][1], u, bnd);
        wp * up + wm * um + w0 * u[self.idx]
    }

    pub fn hessian(&self, n: usize, u: &[f64], bnd: &Boundary, h: f64) -> SymMatrix {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            m.set_sym(i, i, self.second_diff(i, u, bnd, h));
        }
        let mut k = n;
        for i in 0..n {
            for j in i + 1..n {
                let dp = self.second_diff(k, u, bnd, h);
                let dm = self.second_diff(k + 1, u, bnd, h);
                m.set_sym(i, j, 0.25 * (dp - dm));
                k += 2;
            }
        }
        m
    }

    pub fn gradient(&self, n: usize, u: &[f64], bnd: &Boundary, h: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let (wp, wm, w0) = self.first_weights(i, h);
                let up = Self::arm_value(&self.arms[i][0], u, bnd);
                let um = Self::arm_value(&self.arms[i][1], u, bnd);
                wp * up + wm * um + w0 * u[self.idx]
            })
            .collect()
    }
}

fn interior_slot(grid: &Grid, node: usize) -> Result<usize> {
    if node >= grid.len() {
        return Err(Error::Usage(format!("node {node} outside the grid")));
    }
    grid.slot(node)
        .ok_or_else(|| Error::Usage(format!("node {node} is not an interior node")))
}

/// Discrete Hessian at an interior node, with `bnd` supplying values at
/// boundary crossings.
pub fn hessian_stencil(
    u: &DiscreteField,
    grid: &Grid,
    node: usize,
    bnd: &Boundary,
) -> Result<SymMatrix> {
    let s = interior_slot(grid, node)?;
    Ok(grid.stencil(s).hessian(grid.dim(), &u.values, bnd, grid.h))
}

/// Discrete gradient at an interior node.
pub fn gradient_stencil(
    u: &DiscreteField,
    grid: &Grid,
    node: usize,
    bnd: &Boundary,
) -> Result<Vec<f64>> {
    let s = interior_slot(grid, node)?;
    Ok(grid.stencil(s).gradient(grid.dim(), &u.values, bnd, grid.h))
}

/// Hessian at interior slot `s` (no bounds checks).
pub fn node_hessian(u: &DiscreteField, grid: &Grid, slot: usize, bnd: &Boundary) -> SymMatrix {
    grid.stencil(slot).hessian(grid.dim(), &u.values, bnd, grid.h)
}

pub(crate) fn node_is_truncated(grid: &Grid, slot: usize) -> bool {
    grid.stencil(slot).truncated()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{Domain, DomainKind};

    fn ball(h: f64) -> Grid {
        Grid::new(Domain::centered(DomainKind::Ball, 2, 1.0).unwrap(), h).unwrap()
    }

    #[test]
    fn quadratics_are_exact_everywhere() {
        let g = ball(0.1);
        let q = |x: &[f64]| 1.5 * x[0] * x[0] - 0.5 * x[0] * x[1] + 2.0 * x[1] * x[1] + x[0] - 3.0;
        let u = g.sample(q);
        // Boundary data must match q on the circle; q is not radial, so
        // only check nodes whose arms all stay inside.
        let zero = Boundary::zero();
        for &node in g.interior() {
            let s = g.slot(node).unwrap();
            if g.stencil(s).truncated() {
                continue;
            }
            let hm = hessian_stencil(&u, &g, node, &zero).unwrap();
            assert!((hm.get(0, 0) - 3.0).abs() < 1e-9);
            assert!((hm.get(1, 1) - 4.0).abs() < 1e-9);
            assert!((hm.get(0, 1) + 0.5).abs() < 1e-9);
            let x = g.coords(node);
            let gr = gradient_stencil(&u, &g, node, &zero).unwrap();
            assert!((gr[0] - (3.0 * x[0] - 0.5 * x[1] + 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn radial_quadratic_exact_with_cut_arms() {
        let g = ball(0.1);
        let u = g.sample(|x| 0.5 * (x[0] * x[0] + x[1] * x[1] - 1.0));
        let zero = Boundary::zero();
        let mut cut = 0;
        for &node in g.interior() {
            let s = g.slot(node).unwrap();
            cut += g.stencil(s).truncated() as usize;
            let hm = hessian_stencil(&u, &g, node, &zero).unwrap();
            assert!((hm.get(0, 0) - 1.0).abs() < 1e-8, "{}", hm.get(0, 0));
            assert!((hm.get(1, 1) - 1.0).abs() < 1e-8);
            assert!(hm.get(0, 1).abs() < 1e-8);
            let x = g.coords(node);
            let gr = gradient_stencil(&u, &g, node, &zero).unwrap();
            assert!((gr[0] - x[0]).abs() < 1e-9 && (gr[1] - x[1]).abs() < 1e-9);
        }
        assert!(cut > 0);
    }

    #[test]
    fn cross_term_exact() {
        let g = ball(0.125);
        let u = g.sample(|x| x[0] * x[1]);
        let c = g.nearest(&[0.0, 0.0]);
        let hm = hessian_stencil(&u, &g, c, &Boundary::zero()).unwrap();
        assert_eq!(hm.get(0, 1), 1.0);
        assert_eq!(hm.get(0, 0), 0.0);
    }

    #[test]
    fn second_order_richardson() {
        // u = x⁴ at x = (0.5, 0): error in u_xx is h²·u''''/12 = 2h².
        let mut errs = Vec::new();
        for h in [0.05, 0.025] {
            let g = ball(h);
            let u = g.sample(|x| x[0].powi(4));
            let node = g.nearest(&[0.5, 0.0]);
            let hm = hessian_stencil(&u, &g, node, &Boundary::zero()).unwrap();
            errs.push((hm.get(0, 0) - 3.0).abs());
        }
        assert!((errs[0] / errs[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn non_interior_node_is_usage_error() {
        let g = ball(0.25);
        let u = g.zeros();
        assert!(matches!(
            hessian_stencil(&u, &g, 0, &Boundary::zero()),
            Err(Error::Usage(_))
        ));
    }
}
