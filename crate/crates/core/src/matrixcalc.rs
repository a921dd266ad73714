//! Symmetric matrices, a cyclic Jacobi eigensolver, and the calculus of
//! `F(A) = S_k(λ(A))`.

use crate::error::{domain, Error, Result};
use crate::symfunc::{s_grad_values, s_hess_values, SumOperator, Spectrum};

/// Dense symmetric matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds from row-major entries; rejects asymmetry beyond `1e-14` relative
    /// and stores the symmetrized matrix.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return domain(format!("expected {} entries, got {}", n * n, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return domain("matrix entry is not finite");
        }
        let norm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut m = SymMatrix { n, data };
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (m.get(i, j), m.get(j, i));
                if (a - b).abs() > 1e-14 * norm {
                    return domain(format!("matrix not symmetric at ({i},{j}): {a} vs {b}"));
                }
                let avg = 0.5 * (a + b);
                m.set_sym(i, j, avg);
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return domain("rows must form a square matrix");
        }
        Self::new(n, rows.concat())
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets `(i,j)` and `(j,i)`.
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMatrix { n: self.n, data: self.data.iter().map(|v| c * v).collect() }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.n, other.n);
        SymMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// `Qᵀ A Q` for a square (row-major) `Q`.
    pub fn congruence_t(&self, q: &[f64]) -> Self {
        let n = self.n;
        let mut tmp = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                tmp[i * n + j] = (0..n).map(|l| self.get(i, l) * q[l * n + j]).sum();
            }
        }
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = (0..n).map(|l| q[l * n + i] * tmp[l * n + j]).sum();
                out.set_sym(i, j, v);
            }
        }
        out
    }

    /// `Q A Qᵀ`.
    pub fn congruence(&self, q: &[f64]) -> Self {
        self.congruence_t(&transpose(q, self.n))
    }
}

pub(crate) fn transpose(q: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = q[i * n + j];
        }
    }
    t
}

/// Spectral decomposition `A = V diag(λ) Vᵀ` with `λ` descending and the
/// eigenvectors stored as the columns of `vectors` (row-major `n × n`).
#[derive(Clone, Debug)]
pub struct EigenDecomp {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl EigenDecomp {
    pub fn order(&self) -> usize {
        self.values.len()
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        Spectrum::from_slice(&self.values)
    }

    /// Eigenvector `j` (column `j` of `V`).
    pub fn vector(&self, j: usize) -> Vec<f64> {
        let n = self.order();
        (0..n).map(|i| self.vectors[i * n + j]).collect()
    }

    /// `Σ_p d_p v_p v_pᵀ`.
    pub fn reassemble(&self, d: &[f64]) -> SymMatrix {
        let n = self.order();
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = (0..n)
                    .map(|p| d[p] * self.vectors[i * n + p] * self.vectors[j * n + p])
                    .sum();
                out.set_sym(i, j, v);
            }
        }
        out
    }
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations until `off(A) ≤ 1e-14 ‖A‖_F`.
pub fn eigs(a: &SymMatrix) -> Result<EigenDecomp> {
    let n = a.order();
    let mut m = a.data.clone();
    let mut v = SymMatrix::identity(n).data;
    let norm = a.frobenius();
    let threshold = 1e-14 * norm;

    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = norm == 0.0 || off(&m) <= threshold;
    let mut sweep = 0;
    while !converged && sweep < MAX_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let mrp = m[r * n + p];
                    let mrq = m[r * n + q];
                    m[r * n + p] = c * mrp - s * mrq;
                    m[r * n + q] = s * mrp + c * mrq;
                }
                for r in 0..n {
                    let mpr = m[p * n + r];
                    let mqr = m[q * n + r];
                    m[p * n + r] = c * mpr - s * mqr;
                    m[q * n + r] = s * mpr + c * mqr;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
        sweep += 1;
        converged = off(&m) <= threshold;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi eigensolver did not converge after {MAX_SWEEPS} sweeps for matrix {:?}",
            a.as_slice()
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].partial_cmp(&m[i * n + i]).expect("finite"));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (newc, &oldc) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + newc] = v[r * n + oldc];
        }
    }
    Ok(EigenDecomp { values, vectors })
}

/// `F(A) = S_k(λ(A))`.
pub fn f_val(op: &SumOperator, a: &SymMatrix) -> Result<f64> {
    let e = eigs(a)?;
    Ok(op.s_of(&e.values, op.k as isize))
}

/// `F^{ij} = Σ_p S_k^{pp}(λ) v_p v_pᵀ`.
pub fn f_grad(op: &SumOperator, a: &SymMatrix) -> Result<SymMatrix> {
    let e = eigs(a)?;
    Ok(f_grad_from(op, &e))
}

pub fn f_grad_from(op: &SumOperator, e: &EigenDecomp) -> SymMatrix {
    e.reassemble(&s_grad_values(op, &e.values))
}

/// `d²/dt² F(A + tB)` at `t = 0`.
///
/// In the eigenbasis of `A` with `B̂ = VᵀBV` this is
/// `Σ_{j≠l} S^{jj,ll} B̂_jj B̂_ll + 2 Σ_{j<l} D_jl B̂_jl²` where the divided
/// difference `D_jl = (S^{jj} − S^{ll})/(λ_j − λ_l)` is evaluated as the exact
/// closed form `−S_{k-2}(λ|jl)`, continuous through repeated eigenvalues.
pub fn f_second_directional(op: &SumOperator, a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    let e = eigs(a)?;
    Ok(f_second_directional_from(op, &e, b))
}

pub fn f_second_directional_from(op: &SumOperator, e: &EigenDecomp, b: &SymMatrix) -> f64 {
    let n = e.order();
    let bh = b.congruence_t(&e.vectors);
    let hess = s_hess_values(op, &e.values);
    let mut total = 0.0;
    for j in 0..n {
        for l in 0..n {
            if j != l {
                total += hess[j][l] * bh.get(j, j) * bh.get(l, l);
            }
        }
    }
    for j in 0..n {
        for l in (j + 1)..n {
            let divided = -hess[j][l];
            total += 2.0 * divided * bh.get(j, l) * bh.get(j, l);
        }
    }
    total
}

/// `(S^{jj} − S^{ll})/(λ_j − λ_l)` evaluated literally; only meaningful for
/// well-separated eigenvalues.
pub fn divided_difference_literal(op: &SumOperator, values: &[f64], j: usize, l: usize) -> f64 {
    let g = s_grad_values(op, values);
    (g[j] - g[l]) / (values[j] - values[l])
}

/// The perturbation `B = diag(0, 1, …, 1)` in the frame where the top
/// eigenvector comes first.
pub fn perturb_b(n: usize) -> Result<SymMatrix> {
    if n < 2 {
        return domain(format!("perturbation needs n >= 2, got {n}"));
    }
    let mut d = vec![1.0; n];
    d[0] = 0.0;
    Ok(SymMatrix::diag(&d))
}

/// `B` expressed in the original coordinates: `I − v vᵀ` for the unit top
/// eigenvector `v`.
pub fn perturb_b_frame(top: &[f64]) -> SymMatrix {
    let n = top.len();
    let mut m = SymMatrix::identity(n);
    for i in 0..n {
        for j in i..n {
            let v = m.get(i, j) - top[i] * top[j];
            m.set_sym(i, j, v);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(n: usize, k: usize, a: f64) -> SumOperator {
        SumOperator::new(n, k, a).unwrap()
    }

    #[test]
    fn eigs_identity_and_swap() {
        let e = eigs(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let e = eigs(&SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15);
        assert!((e.values[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.1, 1.0]]).is_err());
        assert!(SymMatrix::new(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn f_val_examples() {
        let o = op(3, 2, 1.0);
        assert_eq!(f_val(&o, &SymMatrix::identity(3)).unwrap(), 6.0);
        let v = f_val(&o, &SymMatrix::diag(&[1.0, 2.0, 3.0])).unwrap();
        assert!((v - 17.0).abs() < 1e-13);
    }

    #[test]
    fn f_grad_diag() {
        // S_3 = σ_2 at α = 0, so F^{pp} = σ_1(λ|p).
        let g = f_grad(&op(3, 3, 0.0), &SymMatrix::diag(&[1.0, 2.0, 3.0])).unwrap();
        for (i, want) in [5.0, 4.0, 3.0].iter().enumerate() {
            assert!((g.get(i, i) - want).abs() < 1e-14);
        }
        let g = f_grad(&op(3, 2, 0.0), &SymMatrix::diag(&[1.0, 2.0, 3.0])).unwrap();
        for i in 0..3 {
            assert!((g.get(i, i) - 1.0).abs() < 1e-14);
        }
        assert!(g.get(0, 1).abs() < 1e-14);
        let gi = f_grad(&op(3, 2, 1.0), &SymMatrix::identity(3)).unwrap();
        assert!((gi.get(0, 0) - gi.get(2, 2)).abs() < 1e-14);
        assert_eq!(gi.get(0, 1), 0.0);
    }

    #[test]
    fn determinant_second_derivative() {
        // S_2 = σ_1 + σ_2 in n = 2; the linear part contributes nothing.
        let o = op(2, 2, 1.0);
        let a = SymMatrix::diag(&[2.0, 1.0]);
        let v = f_second_directional(&o, &a, &SymMatrix::identity(2)).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        let b = SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let v = f_second_directional(&o, &a, &b).unwrap();
        assert!(v.abs() < 1e-14);
        assert_eq!(f_second_directional(&o, &a, &SymMatrix::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn perturbation_matrix() {
        assert_eq!(perturb_b(2).unwrap(), SymMatrix::diag(&[0.0, 1.0]));
        assert_eq!(perturb_b(4).unwrap(), SymMatrix::diag(&[0.0, 1.0, 1.0, 1.0]));
        assert!(perturb_b(1).is_err());
        // λ_1 = λ_2 becomes a strict gap after subtracting B.
        let a = SymMatrix::diag(&[2.0, 2.0, 1.0]);
        let e = eigs(&a).unwrap();
        let b = perturb_b_frame(&e.vector(0));
        let shifted = eigs(&a.add(&b.scaled(-1.0))).unwrap();
        assert_eq!(shifted.values[0], 2.0);
        assert!(shifted.values[0] > shifted.values[1]);
        assert!((shifted.values[1] - 1.0).abs() < 1e-15);
    }
}
