//! Sparse row storage, ILU(0) / Jacobi preconditioning and BiCGSTAB.
//! Reductions run in a fixed order so results do not depend on threading.

use rayon::prelude::*;

pub(crate) struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Rows must have sorted, unique columns including the diagonal.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let nnz = rows.iter().map(|r| r.len()).sum();
        let mut col = Vec::with_capacity(nnz);
        let mut val = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for r in rows {
            for (c, v) in r {
                col.push(c);
                val.push(v);
            }
            row_ptr.push(col.len());
        }
        Csr { n, row_ptr, col, val }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[p] * x[self.col[p]];
            }
            *yi = s;
        });
    }

    fn diag_positions(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&p| self.col[p] == i)
                    .expect("diagonal entry present")
            })
            .collect()
    }
}

pub(crate) enum Precond {
    Jacobi(Vec<f64>),
    Ilu { lu: Vec<f64>, diag: Vec<usize> },
}

impl Precond {
    pub fn jacobi(a: &Csr) -> Self {
        let d = a.diag_positions();
        Precond::Jacobi(
            d.iter()
                .map(|&p| if a.val[p] != 0.0 { 1.0 / a.val[p] } else { 1.0 })
                .collect(),
        )
    }

    /// Incomplete LU with the sparsity pattern of `a`.
    pub fn ilu0(a: &Csr) -> Self {
        let diag = a.diag_positions();
        let mut lu = a.val.clone();
        let mut pos = vec![usize::MAX; a.n];
        for i in 0..a.n {
            let (lo, hi) = (a.row_ptr[i], a.row_ptr[i + 1]);
            for p in lo..hi {
                pos[a.col[p]] = p;
            }
            for p in lo..diag[i] {
                let k = a.col[p];
                let pivot = lu[diag[k]];
                let l = lu[p] / pivot;
                lu[p] = l;
                for q in diag[k] + 1..a.row_ptr[k + 1] {
                    let j = a.col[q];
                    let t = pos[j];
                    if t != usize::MAX {
                        lu[t] -= l * lu[q];
                    }
                }
            }
            for p in lo..hi {
                pos[a.col[p]] = usize::MAX;
            }
            if lu[diag[i]] == 0.0 {
                lu[diag[i]] = 1e-300;
            }
        }
        Precond::Ilu { lu, diag }
    }

    pub fn apply(&self, a: &Csr, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Jacobi(d) => {
                for i in 0..r.len() {
                    z[i] = d[i] * r[i];
                }
            }
            Precond::Ilu { lu, diag } => {
                for i in 0..a.n {
                    let mut s = r[i];
                    for p in a.row_ptr[i]..diag[i] {
                        s -= lu[p] * z[a.col[p]];
                    }
                    z[i] = s;
                }
                for i in (0..a.n).rev() {
                    let mut s = z[i];
                    for p in diag[i] + 1..a.row_ptr[i + 1] {
                        s -= lu[p] * z[a.col[p]];
                    }
                    z[i] = s / lu[diag[i]];
                }
            }
        }
    }
}

const CHUNK: usize = 4096;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    parts.iter().sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) struct KrylovOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Right-preconditioned BiCGSTAB from `x = 0`.
pub(crate) fn bicgstab(
    a: &Csr,
    m: &Precond,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let n = a.n;
    x.iter_mut().for_each(|v| *v = 0.0);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return KrylovOutcome { iterations: 0, rel_residual: 0.0 };
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut best = x.to_vec();
    let mut best_res = 1.0;
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        m.apply(a, &p, &mut y);
        a.matvec(&y, &mut v);
        let den = dot(&r0, &v);
        if den == 0.0 || !den.is_finite() {
            break;
        }
        alpha = rho / den;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = norm(&s) / bnorm;
        if snorm <= rtol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return KrylovOutcome { iterations: it, rel_residual: snorm };
        }
        m.apply(a, &s, &mut z);
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm(&r) / bnorm;
        if rel < best_res {
            best_res = rel;
            best.copy_from_slice(x);
        }
        if rel <= rtol {
            return KrylovOutcome { iterations: it, rel_residual: rel };
        }
        if omega == 0.0 || !omega.is_finite() {
            break;
        }
    }
    x.copy_from_slice(&best);
    KrylovOutcome { iterations: max_iter, rel_residual: best_res }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> Csr {
        let rows = (0..n)
            .map(|i| {
                let mut r = Vec::new();
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                r.push((i, 2.0 + 0.1 * i as f64));
                if i + 1 < n {
                    r.push((i + 1, -1.3));
                }
                r
            })
            .collect();
        Csr::from_rows(rows)
    }

    #[test]
    fn solves_nonsymmetric_tridiagonal() {
        let a = laplace_1d(200);
        let xt: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut b = vec![0.0; 200];
        a.matvec(&xt, &mut b);
        for m in [Precond::jacobi(&a), Precond::ilu0(&a)] {
            let mut x = vec![0.0; 200];
            let out = bicgstab(&a, &m, &b, &mut x, 1e-12, 2000);
            assert!(out.rel_residual <= 1e-12);
            let err = x.iter().zip(&xt).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{err}");
        }
    }

    #[test]
    fn ilu_is_exact_for_tridiagonal() {
        let a = laplace_1d(50);
        let m = Precond::ilu0(&a);
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        let out = bicgstab(&a, &m, &b, &mut x, 1e-13, 10);
        assert!(out.rel_residual <= 1e-13 && out.iterations <= 2);
    }
}
