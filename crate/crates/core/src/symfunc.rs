//! Elementary symmetric polynomials and the sum operator `S_k = σ_{k-1} + α σ_k`.
//!
//! All evaluations go through the coefficient recursion
//! `e_j ← e_j + λ_i e_{j-1}`, which needs no divisions and stays accurate for
//! mixed-sign spectra. Orders below zero evaluate to `0`, so `S_1 = 1 + α σ_1`
//! and `S_0 = α` are well formed.

use crate::error::{domain, Result};

/// Eigenvalue vector `λ ∈ ℝⁿ`, `n ≥ 2`, all entries finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return domain(format!("spectrum needs n >= 2, got {}", values.len()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return domain(format!("spectrum entry is not finite: {bad}"));
        }
        Ok(Spectrum { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Entries in descending order, `λ_1 ≥ ⋯ ≥ λ_n`.
    pub fn sorted_desc(&self) -> Spectrum {
        let mut values = self.values.clone();
        sort_desc(&mut values);
        Spectrum { values }
    }

    pub fn is_sorted_desc(&self) -> bool {
        self.values.windows(2).all(|w| w[0] >= w[1])
    }
}

pub(crate) fn sort_desc(values: &mut [f64]) {
    values.sort_by(|a, b| b.partial_cmp(a).expect("finite spectrum"));
}

/// Binomial coefficient as a float; `0` when `k > n`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// `σ_0, …, σ_kmax` of `values`. Orders above `values.len()` are zero.
pub fn elem_sym_all(values: &[f64], kmax: usize) -> Vec<f64> {
    let mut e = vec![0.0; kmax + 1];
    e[0] = 1.0;
    for (i, &x) in values.iter().enumerate() {
        let top = (i + 1).min(kmax);
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// Total version of `σ_j`: zero for `j < 0` and for `j > values.len()`.
pub fn sigma(values: &[f64], j: isize) -> f64 {
    if j < 0 || j as usize > values.len() {
        return 0.0;
    }
    elem_sym_all(values, j as usize)[j as usize]
}

/// `values` with the listed (0-based) positions removed.
pub(crate) fn without(values: &[f64], excl: &[usize]) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| !excl.contains(i))
        .map(|(_, &v)| v)
        .collect()
}

/// `σ_k(λ)`, `0 ≤ k ≤ n`.
pub fn elem_sym(lambda: &Spectrum, k: isize) -> Result<f64> {
    let n = lambda.len() as isize;
    if k < 0 || k > n {
        return domain(format!("elem_sym order {k} outside 0..={n}"));
    }
    Ok(sigma(lambda.values(), k))
}

/// `σ_k(λ|excl)`: `σ_k` of `λ` with the (0-based) indices in `excl` removed.
pub fn elem_sym_excl(lambda: &Spectrum, k: isize, excl: &[usize]) -> Result<f64> {
    let n = lambda.len();
    if let Some(&bad) = excl.iter().find(|&&i| i >= n) {
        return domain(format!("excluded index {bad} out of range for n = {n}"));
    }
    let mut set = excl.to_vec();
    set.sort_unstable();
    set.dedup();
    let remaining = (n - set.len()) as isize;
    if k < 0 || k > remaining {
        return domain(format!("elem_sym_excl order {k} outside 0..={remaining}"));
    }
    Ok(sigma(&without(lambda.values(), &set), k))
}

/// The operator `S_k = σ_{k-1} + α σ_k` on `ℝⁿ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SumOperator {
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
}

impl SumOperator {
    pub fn new(n: usize, k: usize, alpha: f64) -> Result<Self> {
        if n < 2 {
            return domain(format!("dimension n = {n} must be at least 2"));
        }
        if k < 1 || k > n {
            return domain(format!("order k = {k} outside 1..={n}"));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return domain(format!("alpha = {alpha} must be finite and nonnegative"));
        }
        Ok(SumOperator { n, k, alpha })
    }

    /// `ϑ = 1/(k-l)` for `l < k`.
    pub fn vartheta(&self, l: usize) -> Result<f64> {
        if l >= self.k {
            return domain(format!("vartheta needs l < k, got l = {l}, k = {}", self.k));
        }
        Ok(1.0 / (self.k - l) as f64)
    }

    /// `S_j(v) = σ_{j-1}(v) + α σ_j(v)` for an arbitrary vector and order.
    pub fn s_of(&self, values: &[f64], j: isize) -> f64 {
        s_with(self.alpha, values, j)
    }

    /// `S_j(λ|excl)`.
    pub fn s_excl(&self, values: &[f64], j: isize, excl: &[usize]) -> f64 {
        s_with(self.alpha, &without(values, excl), j)
    }
}

pub(crate) fn s_with(alpha: f64, values: &[f64], j: isize) -> f64 {
    if j < 0 {
        return 0.0;
    }
    let e = elem_sym_all(values, j as usize);
    let lower = if j >= 1 { e[j as usize - 1] } else { 0.0 };
    lower + alpha * e[j as usize]
}

/// `S_k(λ)`.
pub fn s_val(op: &SumOperator, lambda: &Spectrum) -> f64 {
    debug_assert_eq!(lambda.len(), op.n);
    op.s_of(lambda.values(), op.k as isize)
}

/// `S_k^{pp}(λ) = S_{k-1}(λ|p)` for every `p`.
pub fn s_grad(op: &SumOperator, lambda: &Spectrum) -> Vec<f64> {
    s_grad_values(op, lambda.values())
}

pub(crate) fn s_grad_values(op: &SumOperator, values: &[f64]) -> Vec<f64> {
    let k = op.k as isize;
    (0..values.len())
        .map(|p| op.s_excl(values, k - 1, &[p]))
        .collect()
}

/// `S_k^{pp,qq}(λ) = S_{k-2}(λ|pq)` off the diagonal; the diagonal vanishes.
pub fn s_hess(op: &SumOperator, lambda: &Spectrum) -> Vec<Vec<f64>> {
    s_hess_values(op, lambda.values())
}

pub(crate) fn s_hess_values(op: &SumOperator, values: &[f64]) -> Vec<Vec<f64>> {
    let n = values.len();
    let k = op.k as isize;
    let mut h = vec![vec![0.0; n]; n];
    for p in 0..n {
        for q in (p + 1)..n {
            let v = op.s_excl(values, k - 2, &[p, q]);
            h[p][q] = v;
            h[q][p] = v;
        }
    }
    h
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff.abs() / scale.max(1.0)
}

/// Relative residuals of the three algebraic identities
/// `S_k = λ_i S_{k-1}(λ|i) + S_k(λ|i)` (worst `i`),
/// `Σ_i S_k(λ|i) = (n-k) S_k + σ_{k-1}` and
/// `Σ_i λ_i S_{k-1}(λ|i) = k S_k − σ_{k-1}`.
///
/// Each residual is divided by `max(1, largest term magnitude)`.
pub fn identity_residuals(op: &SumOperator, lambda: &Spectrum) -> [f64; 3] {
    let v = lambda.values();
    let n = v.len();
    let k = op.k as isize;
    let sk = op.s_of(v, k);
    let sig_km1 = sigma(v, k - 1);

    let mut split = 0.0f64;
    let mut sum_excl = 0.0;
    let mut sum_excl_abs = 0.0;
    let mut euler = 0.0;
    let mut euler_abs = 0.0;
    for i in 0..n {
        let rest = without(v, &[i]);
        let lower = op.s_of(&rest, k - 1);
        let same = op.s_of(&rest, k);
        let term = v[i] * lower;
        split = split.max(rel(
            sk - term - same,
            sk.abs().max(term.abs()).max(same.abs()),
        ));
        sum_excl += same;
        sum_excl_abs += same.abs();
        euler += term;
        euler_abs += term.abs();
    }
    let rhs_iv = (n as f64 - k as f64) * sk + sig_km1;
    let iv = rel(
        sum_excl - rhs_iv,
        sum_excl_abs.max(((n as f64 - k as f64) * sk).abs()).max(sig_km1.abs()),
    );
    let rhs_v = k as f64 * sk - sig_km1;
    let v_res = rel(
        euler - rhs_v,
        euler_abs.max((k as f64 * sk).abs()).max(sig_km1.abs()),
    );
    [split, iv, v_res]
}

/// Residuals of the first- and second-derivative formulas checked through
/// exact unit differences: `S_k` is affine in every coordinate, so
/// `S(λ+e_p) − S(λ)` is exactly `S_k^{pp}` and the mixed unit difference is
/// exactly `S_k^{pp,qq}` (zero on the diagonal).
pub fn derivative_identity_residuals(op: &SumOperator, lambda: &Spectrum) -> [f64; 2] {
    let v = lambda.values();
    let n = v.len();
    let k = op.k as isize;
    let grad = s_grad_values(op, v);
    let hess = s_hess_values(op, v);
    let s = |w: &[f64]| op.s_of(w, k);
    let shifted = |d: &[(usize, f64)]| {
        let mut w = v.to_vec();
        for &(i, t) in d {
            w[i] += t;
        }
        w
    };
    let base = s(v);
    let mut first = 0.0f64;
    let mut second = 0.0f64;
    for p in 0..n {
        let sp = s(&shifted(&[(p, 1.0)]));
        first = first.max(rel(sp - base - grad[p], sp.abs().max(base.abs())));
        for q in 0..n {
            let (d2, scale) = if p == q {
                let spp = s(&shifted(&[(p, 2.0)]));
                (spp - 2.0 * sp + base, spp.abs().max(sp.abs()).max(base.abs()))
            } else {
                let sq = s(&shifted(&[(q, 1.0)]));
                let spq = s(&shifted(&[(p, 1.0), (q, 1.0)]));
                (
                    spq - sp - sq + base,
                    spq.abs().max(sp.abs()).max(sq.abs()).max(base.abs()),
                )
            };
            second = second.max(rel(d2 - hess[p][q], scale));
        }
    }
    [first, second]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(v: &[f64]) -> Spectrum {
        Spectrum::from_slice(v).unwrap()
    }

    #[test]
    fn elem_sym_examples() {
        assert_eq!(elem_sym(&sp(&[1.0, 1.0, 1.0]), 2).unwrap(), 3.0);
        assert_eq!(elem_sym(&sp(&[1.0, 2.0, 3.0]), 2).unwrap(), 11.0);
        assert_eq!(elem_sym(&sp(&[1.0, 2.0, 3.0]), 0).unwrap(), 1.0);
        assert!(elem_sym(&sp(&[1.0, 2.0, 3.0]), 4).is_err());
        assert!(elem_sym(&sp(&[1.0, 2.0, 3.0]), -1).is_err());
    }

    #[test]
    fn elem_sym_excl_examples() {
        let l = sp(&[1.0, 2.0, 3.0]);
        assert_eq!(elem_sym_excl(&l, 1, &[0]).unwrap(), 5.0);
        assert_eq!(elem_sym_excl(&l, 0, &[0, 1]).unwrap(), 1.0);
        assert_eq!(elem_sym_excl(&l, 2, &[1]).unwrap(), 3.0);
        assert!(elem_sym_excl(&l, 1, &[3]).is_err());
        assert!(elem_sym_excl(&l, 2, &[0, 1]).is_err());
    }

    #[test]
    fn s_val_examples() {
        let op = SumOperator::new(3, 2, 1.0).unwrap();
        assert_eq!(s_val(&op, &sp(&[1.0, 1.0, 1.0])), 6.0);
        assert_eq!(s_val(&op, &sp(&[1.0, 2.0, 3.0])), 17.0);
        let op0 = SumOperator::new(3, 2, 0.0).unwrap();
        assert_eq!(s_val(&op0, &sp(&[1.0, 2.0, 3.0])), 6.0);
    }

    #[test]
    fn s_grad_examples() {
        let op = SumOperator::new(3, 2, 0.5).unwrap();
        assert_eq!(s_grad(&op, &sp(&[1.0, 2.0, 3.0]))[0], 3.5);
        let op0 = SumOperator::new(3, 2, 0.0).unwrap();
        assert!(s_grad(&op0, &sp(&[1.0, 1.0, 1.0]))
            .iter()
            .all(|&g| g == 1.0));
    }

    #[test]
    fn s_hess_examples() {
        // S_0(λ|12) = σ_{-1} + α σ_0 = 1 at α = 1, confirmed by the mixed unit difference.
        let op = SumOperator::new(3, 2, 1.0).unwrap();
        let h = s_hess(&op, &sp(&[1.0, 2.0, 3.0]));
        assert_eq!(h[0][1], 1.0);
        for p in 0..3 {
            assert_eq!(h[p][p], 0.0);
        }
    }

    #[test]
    fn identity_examples() {
        let op = SumOperator::new(3, 2, 1.0).unwrap();
        // (iv): 11 + 7 + 5 = 1·17 + 6
        let l = sp(&[1.0, 2.0, 3.0]);
        let sums: f64 = (0..3).map(|i| op.s_excl(l.values(), 2, &[i])).sum();
        assert_eq!(sums, 23.0);
        assert!(identity_residuals(&op, &l).iter().all(|&r| r == 0.0));
        assert!(identity_residuals(&op, &sp(&[0.0, 0.0, 0.0]))
            .iter()
            .all(|&r| r == 0.0));
        // (v): 3·3 = 2·6 − 3
        let ones = sp(&[1.0, 1.0, 1.0]);
        let euler: f64 = (0..3).map(|i| op.s_excl(ones.values(), 1, &[i])).sum();
        assert_eq!(euler, 9.0);
        assert!(identity_residuals(&op, &ones)[2] == 0.0);
    }

    #[test]
    fn boundary_orders() {
        let op = SumOperator::new(3, 1, 2.0).unwrap();
        // S_1 = 1 + α σ_1
        assert_eq!(s_val(&op, &sp(&[1.0, 2.0, 3.0])), 13.0);
        assert_eq!(op.s_of(&[1.0, 2.0], 0), 2.0);
        assert_eq!(op.s_of(&[1.0, 2.0], -1), 0.0);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(10, 5), 252.0);
        assert_eq!(binomial(3, 4), 0.0);
        assert_eq!(binomial(4, 0), 1.0);
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![1.0]).is_err());
        assert!(Spectrum::new(vec![1.0, f64::NAN]).is_err());
        assert!(SumOperator::new(3, 0, 1.0).is_err());
        assert!(SumOperator::new(3, 4, 1.0).is_err());
        assert!(SumOperator::new(3, 2, -1.0).is_err());
        let s = sp(&[1.0, 3.0, 2.0]).sorted_desc();
        assert_eq!(s.values(), &[3.0, 2.0, 1.0]);
    }
}
