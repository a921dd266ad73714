use crate::error::{domain as domain_err, Result};
use crate::symfunc::{binomial, SumOperator};

use super::Domain;

/// Dirichlet data `g(y) = (a|y − c|² − b)/2`, `c` the domain center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Boundary {
    pub a: f64,
    pub b: f64,
}

impl Boundary {
    pub fn zero() -> Self {
        Boundary { a: 0.0, b: 0.0 }
    }

    /// `μ(|y − c|² − ρ²)/2`.
    pub fn quadratic(mu: f64, rho: f64) -> Self {
        Boundary { a: mu, b: mu * rho * rho }
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.b == 0.0
    }

    pub fn value_r2(&self, r2: f64) -> f64 {
        0.5 * (self.a * r2 - self.b)
    }

    pub fn value(&self, x: &[f64], center: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
        self.value_r2(r2)
    }

    pub(crate) fn lerp(&self, other: &Boundary, t: f64) -> Boundary {
        Boundary {
            a: (1.0 - t) * self.a + t * other.a,
            b: (1.0 - t) * self.b + t * other.b,
        }
    }
}

/// Right-hand side catalog. Radial entries are measured from the domain center.
#[derive(Clone, Debug, PartialEq)]
pub enum Rhs {
    Constant(f64),
    /// `base + amp·sin(freq·x_1)`.
    Trig { base: f64, amp: f64, freq: f64 },
    /// `S_k` of `(c + 3d r², c + d r², …)`, the Hessian spectrum of
    /// `c(r² − R²)/2 + d(r⁴ − R⁴)/4`.
    RadialQuartic { c: f64, d: f64 },
    /// `c0 + Σ lin_i x_i + Σ quad_i x_i² + cu·u + cp·|p|²`.
    Table { c0: f64, lin: Vec<f64>, quad: Vec<f64>, cu: f64, cp: f64 },
}

#[derive(Clone, Debug)]
pub struct RhsEval {
    pub f: f64,
    pub fx: Vec<f64>,
    pub fu: f64,
    pub fp: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub op: SumOperator,
    pub domain: Domain,
    pub rhs: Rhs,
    pub boundary: Boundary,
    /// Positive lower bound `m ≤ f`.
    pub m: f64,
}

impl ProblemSpec {
    pub fn new(op: SumOperator, domain: Domain, rhs: Rhs, m: f64) -> Result<Self> {
        if op.n != domain.dim() {
            return domain_err(format!(
                "operator dimension {} does not match domain dimension {}",
                op.n,
                domain.dim()
            ));
        }
        if op.k < 2 {
            return domain_err("the solver needs k >= 2");
        }
        if !(m > 0.0) {
            return domain_err(format!("lower bound m must be positive, got {m}"));
        }
        match &rhs {
            Rhs::Table { lin, quad, .. } if lin.len() != op.n || quad.len() != op.n => {
                return domain_err("table coefficients must have one entry per dimension");
            }
            Rhs::RadialQuartic { c, d } if !(*c > 0.0 && *d >= 0.0) => {
                return domain_err("quartic family needs c > 0 and d >= 0");
            }
            _ => {}
        }
        Ok(ProblemSpec { op, domain, rhs, boundary: Boundary::zero(), m })
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn f(&self, x: &[f64], u: f64, p: &[f64]) -> f64 {
        let c = &self.domain.center;
        match &self.rhs {
            Rhs::Constant(v) => *v,
            Rhs::Trig { base, amp, freq } => base + amp * (freq * x[0]).sin(),
            Rhs::RadialQuartic { c: cc, d } => {
                let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                self.op.s_of(&quartic_spectrum(self.op.n, *cc, *d, r2), self.op.k as isize)
            }
            Rhs::Table { c0, lin, quad, cu, cp } => {
                let mut v = *c0 + cu * u;
                for i in 0..x.len() {
                    v += lin[i] * x[i] + quad[i] * x[i] * x[i];
                }
                v + cp * p.iter().map(|q| q * q).sum::<f64>()
            }
        }
    }

    pub fn eval(&self, x: &[f64], u: f64, p: &[f64]) -> RhsEval {
        let n = x.len();
        let f = self.f(x, u, p);
        let mut fx = vec![0.0; n];
        let mut fu = 0.0;
        let mut fp = vec![0.0; n];
        match &self.rhs {
            Rhs::Constant(_) => {}
            Rhs::Trig { amp, freq, .. } => fx[0] = amp * freq * (freq * x[0]).cos(),
            Rhs::RadialQuartic { c: cc, d } => {
                // f depends on r² through λ; df/d(r²) by the chain rule.
                let r2: f64 = x.iter().zip(&self.domain.center).map(|(a, b)| (a - b) * (a - b)).sum();
                let lam = quartic_spectrum(n, *cc, *d, r2);
                let g = crate::symfunc::s_grad_values(&self.op, &lam);
                let dr2 = 3.0 * d * g[0] + d * g[1..].iter().sum::<f64>();
                for i in 0..n {
                    fx[i] = 2.0 * (x[i] - self.domain.center[i]) * dr2;
                }
            }
            Rhs::Table { lin, quad, cu, cp, .. } => {
                for i in 0..n {
                    fx[i] = lin[i] + 2.0 * quad[i] * x[i];
                    fp[i] = 2.0 * cp * p[i];
                }
                fu = *cu;
            }
        }
        RhsEval { f, fx, fu, fp }
    }
}

pub(crate) fn quartic_spectrum(n: usize, c: f64, d: f64, r2: f64) -> Vec<f64> {
    let mut lam = vec![c + d * r2; n];
    lam[0] = c + 3.0 * d * r2;
    lam
}

/// Closed-form radial solutions vanishing on `|x − c| = R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExactSolution {
    /// `c(r² − R²)/2 + d(r⁴ − R⁴)/4`; `d = 0` is the quadratic family.
    Radial { c: f64, d: f64, radius: f64 },
}

impl ExactSolution {
    pub fn value(&self, x: &[f64], center: &[f64]) -> f64 {
        let ExactSolution::Radial { c, d, radius } = *self;
        let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        let rr2 = radius * radius;
        0.5 * c * (r2 - rr2) + 0.25 * d * (r2 * r2 - rr2 * rr2)
    }
}

/// `u = c(|x|² − R²)/2` with `D²u = cI`, so `f = c^{k-1}C(n,k-1) + αc^k C(n,k)`.
pub fn manufactured_radial(op: &SumOperator, radius: f64, c: f64) -> Result<(ExactSolution, f64)> {
    if !(c > 0.0) {
        return domain_err(format!("manufactured solution needs c > 0, got {c}"));
    }
    let (n, k) = (op.n, op.k);
    let f = c.powi(k as i32 - 1) * binomial(n, k - 1) + op.alpha * c.powi(k as i32) * binomial(n, k);
    Ok((ExactSolution::Radial { c, d: 0.0, radius }, f))
}

/// Quartic radial family; its right-hand side varies with `r`.
pub fn manufactured_quartic(radius: f64, c: f64, d: f64) -> Result<(ExactSolution, Rhs)> {
    if !(c > 0.0 && d >= 0.0) {
        return domain_err("quartic family needs c > 0 and d >= 0");
    }
    Ok((ExactSolution::Radial { c, d, radius }, Rhs::RadialQuartic { c, d }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::DomainKind;

    #[test]
    fn manufactured_values() {
        let op = SumOperator::new(2, 2, 1.0).unwrap();
        assert_eq!(manufactured_radial(&op, 1.0, 1.0).unwrap().1, 3.0);
        let op = SumOperator::new(4, 3, 0.0).unwrap();
        assert_eq!(manufactured_radial(&op, 1.0, 1.0).unwrap().1, 6.0);
        let op = SumOperator::new(3, 3, 2.0).unwrap();
        assert_eq!(manufactured_radial(&op, 1.0, 1.0).unwrap().1, 5.0);
        assert!(manufactured_radial(&op, 1.0, 0.0).is_err());
    }

    #[test]
    fn quartic_matches_quadratic_at_d_zero() {
        let op = SumOperator::new(3, 2, 1.0).unwrap();
        let dom = Domain::centered(DomainKind::Ball, 3, 1.0).unwrap();
        let p = ProblemSpec::new(op, dom, Rhs::RadialQuartic { c: 2.0, d: 0.0 }, 0.1).unwrap();
        let (_, f) = manufactured_radial(&op, 1.0, 2.0).unwrap();
        assert!((p.f(&[0.3, 0.1, 0.2], 0.0, &[0.0; 3]) - f).abs() < 1e-12);
    }

    #[test]
    fn quartic_gradient_matches_differences() {
        let op = SumOperator::new(3, 3, 1.0).unwrap();
        let dom = Domain::centered(DomainKind::Ball, 3, 1.0).unwrap();
        let p = ProblemSpec::new(op, dom, Rhs::RadialQuartic { c: 1.0, d: 0.7 }, 0.1).unwrap();
        let x = [0.3, -0.2, 0.5];
        let e = p.eval(&x, 0.0, &[0.0; 3]);
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (p.f(&xp, 0.0, &[0.0; 3]) - p.f(&xm, 0.0, &[0.0; 3])) / 2e-6;
            assert!((fd - e.fx[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn exact_value_vanishes_on_sphere() {
        let s = ExactSolution::Radial { c: 1.0, d: 0.5, radius: 1.0 };
        assert!(s.value(&[0.6, 0.8], &[0.0, 0.0]).abs() < 1e-15);
        assert_eq!(s.value(&[0.0, 0.0], &[0.0, 0.0]), -0.5 - 0.125);
    }
}
