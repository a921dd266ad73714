//! Dirichlet solver for `S_k(D²u) = f(x, u, Du)` on boxes and balls.
//!
//! The grid is a uniform lattice around the domain. Second differences along
//! the axis and face-diagonal directions use boundary-fitted arms: when a
//! neighbour lies outside the domain, the arm is shortened to the boundary
//! crossing and the boundary value is taken there. Every stencil is exact
//! on quadratics, including next to the boundary.

mod linalg;
mod mms;
mod newton;
mod problem;
mod stencil;

use std::io::Write;

use crate::error::{domain as domain_err, Result};

pub use mms::{convergence_study, ConvergenceRow, ConvergenceStudy};
pub use newton::{
    continuation_solve, newton_solve, residual, ContinuationReport, FailureKind, NewtonReport,
    Preconditioner, SolveFailure, SolveOptions,
};
pub use problem::{
    manufactured_quartic, manufactured_radial, Boundary, ExactSolution, ProblemSpec, Rhs,
};
pub use stencil::{gradient_stencil, hessian_stencil, node_hessian};
pub(crate) use stencil::node_is_truncated;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Box,
    Ball,
}

/// Box `c + [−R, R]ⁿ` or ball `|x − c| < R`.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub kind: DomainKind,
    pub radius: f64,
    pub center: Vec<f64>,
}

impl Domain {
    pub fn new(kind: DomainKind, n: usize, radius: f64, center: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return domain_err(format!("dimension must be 2 or 3, got {n}"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return domain_err(format!("radius must be positive, got {radius}"));
        }
        if center.len() != n || center.iter().any(|c| !c.is_finite()) {
            return domain_err(format!("center must be a finite point of dimension {n}"));
        }
        Ok(Domain { kind, radius, center })
    }

    pub fn centered(kind: DomainKind, n: usize, radius: f64) -> Result<Self> {
        Self::new(kind, n, radius, vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn diam(&self) -> f64 {
        match self.kind {
            DomainKind::Ball => 2.0 * self.radius,
            DomainKind::Box => 2.0 * self.radius * (self.dim() as f64).sqrt(),
        }
    }

    /// Radius of the smallest ball about the center containing the domain.
    pub fn outer_radius(&self) -> f64 {
        0.5 * self.diam()
    }

    /// Signed distance-like level set, negative inside.
    pub fn phi(&self, x: &[f64]) -> f64 {
        match self.kind {
            DomainKind::Ball => {
                let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
                r2.sqrt() - self.radius
            }
            DomainKind::Box => {
                let m = x
                    .iter()
                    .zip(&self.center)
                    .map(|(a, c)| (a - c).abs())
                    .fold(0.0, f64::max);
                m - self.radius
            }
        }
    }

    /// Fraction `t ∈ (0, 1]` at which `x + t·w` leaves the domain, for `x` inside.
    pub(crate) fn crossing(&self, x: &[f64], w: &[f64]) -> f64 {
        let t = match self.kind {
            DomainKind::Ball => {
                let mut yw = 0.0;
                let mut yy = 0.0;
                let mut ww = 0.0;
                for i in 0..x.len() {
                    let y = x[i] - self.center[i];
                    yw += y * w[i];
                    yy += y * y;
                    ww += w[i] * w[i];
                }
                let disc = (yw * yw - ww * (yy - self.radius * self.radius)).max(0.0);
                (-yw + disc.sqrt()) / ww
            }
            DomainKind::Box => {
                let mut t = f64::INFINITY;
                for i in 0..x.len() {
                    if w[i] != 0.0 {
                        let face = self.center[i] + self.radius * w[i].signum();
                        t = t.min((face - x[i]) / w[i]);
                    }
                }
                t
            }
        };
        t.clamp(1e-12, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

impl NodeClass {
    pub fn label(self) -> &'static str {
        match self {
            NodeClass::Interior => "interior",
            NodeClass::Boundary => "boundary",
            NodeClass::Exterior => "exterior",
        }
    }
}

/// Uniform lattice `x = c + h·(idx − m)` covering the domain, with `m` nodes
/// on each side of the center.
#[derive(Clone, Debug)]
pub struct Grid {
    pub h: f64,
    pub domain: Domain,
    half: usize,
    side: usize,
    classes: Vec<NodeClass>,
    interior: Vec<usize>,
    slot: Vec<usize>,
    stencils: Vec<stencil::NodeStencil>,
}

const NO_SLOT: usize = usize::MAX;

impl Grid {
    pub fn new(domain: Domain, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return domain_err(format!("grid spacing must be positive, got {h}"));
        }
        let n = domain.dim();
        let half = (domain.radius / h).ceil() as usize + 1;
        let side = 2 * half + 1;
        let total = side.pow(n as u32);
        if total > 20_000_000 {
            return domain_err(format!("grid with {total} nodes is too large"));
        }
        let mut grid = Grid {
            h,
            domain,
            half,
            side,
            classes: vec![NodeClass::Exterior; total],
            interior: Vec::new(),
            slot: vec![NO_SLOT; total],
            stencils: Vec::new(),
        };
        let tiny = 1e-6 * h;
        let mut x = vec![0.0; n];
        for idx in 0..total {
            grid.coords_into(idx, &mut x);
            if grid.domain.phi(&x) < -tiny {
                grid.classes[idx] = NodeClass::Interior;
                grid.slot[idx] = grid.interior.len();
                grid.interior.push(idx);
            }
        }
        let stencils: Vec<_> = grid
            .interior
            .iter()
            .map(|&idx| stencil::NodeStencil::build(&grid, idx))
            .collect();
        for st in &stencils {
            for nb in st.outside_neighbours() {
                if let Some(nb) = nb {
                    grid.classes[nb] = NodeClass::Boundary;
                }
            }
        }
        grid.stencils = stencils;
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Nodes per axis.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn class(&self, idx: usize) -> NodeClass {
        self.classes[idx]
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub(crate) fn slot(&self, idx: usize) -> Option<usize> {
        match self.slot[idx] {
            NO_SLOT => None,
            s => Some(s),
        }
    }

    pub(crate) fn stencil(&self, slot: usize) -> &stencil::NodeStencil {
        &self.stencils[slot]
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let n = self.dim();
        let mut out = vec![0; n];
        let mut r = idx;
        for i in (0..n).rev() {
            out[i] = r % self.side;
            r /= self.side;
        }
        out
    }

    pub(crate) fn offset(&self, idx: usize, d: &[i32]) -> Option<usize> {
        let n = self.dim();
        let mut r = idx;
        let mut out = 0usize;
        let mut stride = 1usize;
        for i in (0..n).rev() {
            let c = (r % self.side) as i64 + d[i] as i64;
            r /= self.side;
            if c < 0 || c >= self.side as i64 {
                return None;
            }
            out += c as usize * stride;
            stride *= self.side;
        }
        Some(out)
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.coords_into(idx, &mut x);
        x
    }

    pub(crate) fn coords_into(&self, idx: usize, x: &mut [f64]) {
        let n = self.dim();
        let mut r = idx;
        for i in (0..n).rev() {
            let c = r % self.side;
            r /= self.side;
            x[i] = self.domain.center[i] + self.h * (c as f64 - self.half as f64);
        }
    }

    /// Node nearest to `x` (clamped to the lattice).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut idx = 0usize;
        for i in 0..self.dim() {
            let c = ((x[i] - self.domain.center[i]) / self.h + self.half as f64).round();
            let c = c.clamp(0.0, (self.side - 1) as f64) as usize;
            idx = idx * self.side + c;
        }
        idx
    }

    pub fn zeros(&self) -> DiscreteField {
        DiscreteField { values: vec![0.0; self.len()] }
    }

    /// Field with `u(x)` at interior nodes and zero elsewhere.
    pub fn sample_interior(&self, u: impl Fn(&[f64]) -> f64) -> DiscreteField {
        let mut values = vec![0.0; self.len()];
        let mut x = vec![0.0; self.dim()];
        for &idx in &self.interior {
            self.coords_into(idx, &mut x);
            values[idx] = u(&x);
        }
        DiscreteField { values }
    }

    /// Field with `u(x)` at interior and boundary nodes and zero elsewhere.
    pub fn sample(&self, u: impl Fn(&[f64]) -> f64) -> DiscreteField {
        let mut values = vec![0.0; self.len()];
        let mut x = vec![0.0; self.dim()];
        for (idx, v) in values.iter_mut().enumerate() {
            if self.classes[idx] != NodeClass::Exterior {
                self.coords_into(idx, &mut x);
                *v = u(&x);
            }
        }
        DiscreteField { values }
    }
}

/// One value per lattice node.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField {
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn max_abs_over(&self, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&i| self.values[i].abs()).fold(0.0, f64::max)
    }
}

/// Writes `x1..xn,u,class` rows in lexicographic node order.
pub fn write_solution_csv(grid: &Grid, u: &DiscreteField, out: &mut impl Write) -> Result<()> {
    let n = grid.dim();
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.push("u".into());
    header.push("class".into());
    writeln!(out, "{}", header.join(","))?;
    let mut x = vec![0.0; n];
    for idx in 0..grid.len() {
        grid.coords_into(idx, &mut x);
        let mut row: Vec<String> = x.iter().map(|v| crate::fmt_f64(*v)).collect();
        row.push(crate::fmt_f64(u.values[idx]));
        row.push(grid.class(idx).label().into());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_classification() {
        let d = Domain::centered(DomainKind::Ball, 2, 1.0).unwrap();
        let g = Grid::new(d, 0.25).unwrap();
        let c = g.nearest(&[0.0, 0.0]);
        assert_eq!(g.class(c), NodeClass::Interior);
        assert_eq!(g.class(g.nearest(&[1.0, 0.0])), NodeClass::Boundary);
        assert_eq!(g.class(g.nearest(&[1.25, 1.25])), NodeClass::Exterior);
        assert_eq!(g.coords(c), vec![0.0, 0.0]);
    }

    #[test]
    fn crossings() {
        let d = Domain::centered(DomainKind::Ball, 2, 1.0).unwrap();
        let t = d.crossing(&[0.5, 0.0], &[1.0, 0.0]);
        assert!((t - 0.5).abs() < 1e-15);
        let b = Domain::centered(DomainKind::Box, 2, 1.0).unwrap();
        let t = b.crossing(&[0.5, 0.75], &[0.5, 0.5]);
        assert!((t - 0.5).abs() < 1e-15);
        assert!((b.diam() - 2.0 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn offsets_round_trip() {
        let d = Domain::centered(DomainKind::Box, 3, 1.0).unwrap();
        let g = Grid::new(d, 0.5).unwrap();
        let c = g.nearest(&[0.0, 0.5, -0.5]);
        let e = g.offset(c, &[1, 0, -1]).unwrap();
        assert_eq!(g.coords(e), vec![0.5, 0.5, -1.0]);
        assert_eq!(g.offset(0, &[-1, 0, 0]), None);
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(Domain::centered(DomainKind::Ball, 4, 1.0).is_err());
        assert!(Domain::centered(DomainKind::Ball, 2, 0.0).is_err());
        let d = Domain::centered(DomainKind::Ball, 2, 1.0).unwrap();
        assert!(Grid::new(d, -1.0).is_err());
    }
}
