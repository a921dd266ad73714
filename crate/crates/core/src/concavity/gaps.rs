//! Pointwise evaluators. Every gap is `LHS − RHS` of an inequality that is
//! expected to be nonnegative, and is a quadratic form in the direction vector.
//! Indices are 0-based: entry `0` is the largest eigenvalue `λ_1`.

use crate::cones::in_gamma_tilde_values;
use crate::error::{domain, precondition, Result};
use crate::matrixcalc::SymMatrix;
use crate::symfunc::{s_with, sigma, without, Spectrum, SumOperator};

use super::ConcavityParams;

/// Gap value together with the sum of the magnitudes of the terms that
/// produced it, so that `value / scale` is a relative gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gap {
    pub value: f64,
    pub scale: f64,
}

impl Gap {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.value / self.scale
        } else {
            self.value
        }
    }
}

#[derive(Default)]
struct Acc {
    value: f64,
    scale: f64,
}

impl Acc {
    fn add(&mut self, t: f64) {
        self.value += t;
        self.scale += t.abs();
    }

    fn gap(self) -> Gap {
        Gap { value: self.value, scale: self.scale }
    }
}

/// Corruptions used by negative controls.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Corrupt(pub bool);

fn check_len(v: &[f64], xi: &[f64], expect: usize) -> Result<()> {
    if xi.len() != expect {
        return domain(format!("direction has length {}, expected {expect}", xi.len()));
    }
    if v.len() < 2 {
        return domain("spectrum needs n >= 2");
    }
    Ok(())
}

/// `S_j^{pp}` for every `p`.
fn grad(alpha: f64, v: &[f64], j: usize) -> Vec<f64> {
    (0..v.len())
        .map(|p| s_with(alpha, &without(v, &[p]), j as isize - 1))
        .collect()
}

/// `Σ_{p≠q} S_j^{pp,qq} ξ_p ξ_q`.
fn pair_form(alpha: f64, v: &[f64], j: usize, xi: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            s += 2.0 * s_with(alpha, &without(v, &[p, q]), j as isize - 2) * xi[p] * xi[q];
        }
    }
    s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Both gaps of the paired `S_k` / `S_l` inequality, `w` in the role of the
/// third derivatives `u_{pph}`.
pub fn lemma24_gaps(
    op: &SumOperator,
    l: usize,
    lambda: &Spectrum,
    w: &[f64],
    delta: f64,
) -> Result<(f64, f64)> {
    let (a, b) = pair_gaps(op, l, lambda.values(), w, delta, Corrupt::default())?;
    Ok((a.value, b.value))
}

pub(crate) fn pair_gaps(
    op: &SumOperator,
    l: usize,
    v: &[f64],
    w: &[f64],
    delta: f64,
    corrupt: Corrupt,
) -> Result<(Gap, Gap)> {
    check_len(v, w, op.n)?;
    let theta = op.vartheta(l)?;
    let k = op.k;
    let al = op.alpha;
    let sk = s_with(al, v, k as isize);
    let sl = s_with(al, v, l as isize);
    if sk == 0.0 || sl == 0.0 {
        return domain(format!("S_k = {sk} and S_l = {sl} must both be nonzero"));
    }
    let skh = dot(&grad(al, v, k), w);
    let slh = dot(&grad(al, v, l), w);
    let qk = pair_form(al, v, k, w);
    let ql = if l >= 2 { pair_form(al, v, l, w) } else { 0.0 };
    let (a, b) = (skh / sk, slh / sl);

    let c1 = if corrupt.0 { theta + 1.0 } else { theta - 1.0 };
    let mut g1 = Acc::default();
    g1.add(-qk / sk);
    g1.add(ql / sl);
    g1.add(-c1 * a * a);
    g1.add((c1 + theta + 1.0) * a * b);
    g1.add(-(theta + 1.0) * b * b);

    let mut coef = 1.0 - theta + theta / delta;
    if corrupt.0 {
        coef = -coef;
    }
    let mut g2 = Acc::default();
    g2.add(-qk);
    g2.add(coef * skh * skh / sk);
    g2.add(-sk * (theta + 1.0 - delta * theta) * b * b);
    g2.add(sk / sl * ql);
    Ok((g1.gap(), g2.gap()))
}

/// Cross-term estimate for `S_l`: the quadratic form
/// `Σ_{p≠q}(S_l^{pp}S_l^{qq} − S_l S_l^{pp,qq})ξ_pξ_q` plus the two weighted
/// diagonal sums.
pub fn claim32_gap(lambda: &Spectrum, l: usize, alpha: f64, xi: &[f64], epsilon: f64, c: f64) -> f64 {
    cross_gap(lambda.values(), l, alpha, xi, epsilon, c).value
}

pub(crate) fn cross_gap(v: &[f64], l: usize, alpha: f64, xi: &[f64], epsilon: f64, c: f64) -> Gap {
    let n = v.len();
    let sl = s_with(alpha, v, l as isize);
    let g = grad(alpha, v, l);
    let mut acc = Acc::default();
    for p in 0..n {
        for q in (p + 1)..n {
            let h = s_with(alpha, &without(v, &[p, q]), l as isize - 2);
            acc.add(2.0 * (g[p] * g[q] - sl * h) * xi[p] * xi[q]);
        }
    }
    for i in 0..n {
        let t = (g[i] * xi[i]).powi(2);
        if i < l {
            acc.add(0.5 * epsilon * t);
        } else {
            acc.add(c / epsilon * t);
        }
    }
    acc.gap()
}

/// Pinching hypothesis `λ_l ≥ δλ_1` and `λ_{l+1} ≤ δ′λ_1` on a sorted spectrum.
pub fn lemma34_hypothesis(params: &ConcavityParams, lambda: &Spectrum) -> bool {
    pinched(params, lambda.values())
}

pub(crate) fn pinched(params: &ConcavityParams, v: &[f64]) -> bool {
    let l = params.l;
    l >= 1
        && l < v.len()
        && v[l - 1] >= params.delta * v[0]
        && v[l] <= params.delta_prime * v[0]
}

/// Pinched concavity gap for `S_k`.
pub fn lemma34_gap(
    op: &SumOperator,
    params: &ConcavityParams,
    lambda: &Spectrum,
    xi: &[f64],
) -> Result<f64> {
    Ok(pinched_gap(op, params, lambda.values(), xi, Corrupt::default())?.value)
}

pub(crate) fn pinched_gap(
    op: &SumOperator,
    params: &ConcavityParams,
    v: &[f64],
    xi: &[f64],
    corrupt: Corrupt,
) -> Result<Gap> {
    check_len(v, xi, op.n)?;
    let l = params.l;
    let theta = op.vartheta(l)?;
    let k = op.k;
    let al = op.alpha;
    let sk = s_with(al, v, k as isize);
    if !(sk > 0.0) {
        return domain(format!("S_k = {sk} must be positive"));
    }
    let lam1 = v[0];
    if !(lam1 > 0.0) {
        return domain(format!("largest eigenvalue {lam1} must be positive"));
    }
    let g = grad(al, v, k);
    let d = &params;
    let delta0 = if corrupt.0 { -10.0 } else { d.delta0 };
    let mut acc = Acc::default();
    acc.add(-pair_form(al, v, k, xi) / sk);
    let sh = dot(&g, xi);
    acc.add((1.0 - theta + theta / d.delta) * sh * sh / (sk * sk));
    acc.add(-(1.0 + theta - d.delta * theta - d.epsilon) * xi[0] * xi[0] / (lam1 * lam1));
    for i in l..v.len() {
        acc.add(delta0 * g[i] * xi[i] * xi[i] / (lam1 * sk));
    }
    Ok(acc.gap())
}

fn op_n(alpha: f64, n: usize) -> Result<SumOperator> {
    SumOperator::new(n, n, alpha)
}

/// Residuals `LHS − RHS` of the three product identities for `S_n`, divided
/// by `max(1, largest term)`. `j, p, q ≥ 1` (0-based), `p ≠ q`; these are
/// polynomial identities and hold for every real `λ`.
pub fn lemma31_residuals(
    alpha: f64,
    lambda: &Spectrum,
    j: usize,
    p: usize,
    q: usize,
) -> Result<[f64; 3]> {
    let v = lambda.values();
    let n = v.len();
    op_n(alpha, n)?;
    if n < 3 {
        return domain(format!("product identities need n >= 3, got {n}"));
    }
    if j == 0 || p == 0 || q == 0 || j >= n || p >= n || q >= n || p == q {
        return precondition(format!("indices j = {j}, p = {p}, q = {q} must be in 1..{n} with p != q"));
    }
    let ni = n as isize;
    let s = |x: &[f64], o: isize| s_with(alpha, x, o);
    let ex = |e: &[usize], o: isize| s(&without(v, e), o);
    let sn = s(v, ni);
    let l1 = v[0];
    let d = |i: usize| ex(&[i], ni - 1);
    let dd = |a: usize, b: usize| ex(&[a, b], ni - 2);
    let sig3 = sigma(&without(v, &[0, p, q]), ni - 3);

    let rel = |lhs: &[f64], rhs: &[f64]| {
        let l: f64 = lhs.iter().sum();
        let r: f64 = rhs.iter().sum();
        let scale = lhs.iter().chain(rhs).fold(1.0f64, |m, t| m.max(t.abs()));
        (l - r) / scale
    };

    let (sjj, s11, s11jj) = (d(j), d(0), dd(0, j));
    let r1 = rel(
        &[-sjj * sjj, 2.0 * l1 * s11jj * sjj, s11 * sjj],
        &[l1 * l1 * s11jj * s11jj, sn * s11jj],
    );

    let (spp, sqq, s11pp, s11qq, sppqq) = (d(p), d(q), dd(0, p), dd(0, q), dd(p, q));
    let r2 = rel(
        &[l1 * spp * s11qq, l1 * sqq * s11pp, -l1 * s11 * sppqq, -spp * sqq],
        &[l1 * l1 * sig3 * sig3, -sn * sig3],
    );

    let s1 = ex(&[0], ni - 1);
    let r3 = rel(
        &[-l1 * l1 * s11pp * s11qq, l1 * s11 * sppqq],
        &[-l1 * l1 * sig3 * sig3, l1 * s1 * sig3],
    );
    Ok([r1, r2, r3])
}

fn sn_matrix_pre(alpha: f64, lambda: &Spectrum) -> Result<SumOperator> {
    let n = lambda.len();
    let op = op_n(alpha, n)?;
    if n < 3 {
        return domain(format!("matrix needs n >= 3, got {n}"));
    }
    if !lambda.is_sorted_desc() {
        return precondition("spectrum must be sorted in descending order");
    }
    if !in_gamma_tilde_values(&op, lambda.values()) {
        return precondition("spectrum is not in the admissible cone for S_n");
    }
    Ok(op)
}

pub(crate) fn sn_matrix_values(alpha: f64, v: &[f64], squared: bool) -> SymMatrix {
    let n = v.len();
    let m = n - 1;
    let mut q = SymMatrix::zeros(m);
    for a in 0..m {
        let d = s_with(alpha, &without(v, &[0, a + 1]), n as isize - 2);
        q.set_sym(a, a, if squared { d * d } else { d });
        for b in (a + 1)..m {
            let o = sigma(&without(v, &[0, a + 1, b + 1]), n as isize - 3);
            q.set_sym(a, b, if squared { o * o } else { -o });
        }
    }
    q
}

/// Matrix of the quadratic form in `ξ_2, …, ξ_n` with diagonal
/// `S_{n-2}(λ|1j)` and off-diagonal `−σ_{n-3}(λ|1pq)`.
pub fn lemma32_matrix(alpha: f64, lambda: &Spectrum) -> Result<SymMatrix> {
    sn_matrix_pre(alpha, lambda)?;
    Ok(sn_matrix_values(alpha, lambda.values(), false))
}

/// Entrywise-squared companion: diagonal `S_{n-2}²(λ|1j)`, off-diagonal
/// `+σ_{n-3}²(λ|1pq)`.
pub fn remark31_matrix(alpha: f64, lambda: &Spectrum) -> Result<SymMatrix> {
    sn_matrix_pre(alpha, lambda)?;
    Ok(sn_matrix_values(alpha, lambda.values(), true))
}

/// `ξᵀQξ` with scale `‖Q‖_F |ξ|²`.
pub(crate) fn quad_gap(q: &SymMatrix, xi: &[f64], corrupt: Corrupt) -> Gap {
    let m = q.order();
    let mut value = 0.0;
    for a in 0..m {
        for b in 0..m {
            if a == b && corrupt.0 {
                continue;
            }
            value += q.get(a, b) * xi[a] * xi[b];
        }
    }
    let norm2: f64 = xi.iter().map(|x| x * x).sum();
    Gap { value, scale: q.frobenius() * norm2 }
}

/// `λ_1[K(Σ_j S_n^{jj}ξ_j)² − Σ_{p≠q} S_n^{pp,qq}ξ_pξ_q] − S_n^{11}ξ_1² + (1+ε)Σ_{j>1} S_n^{jj}ξ_j²`.
pub fn lemma33_gap(alpha: f64, lambda: &Spectrum, xi: &[f64], k: f64, epsilon: f64) -> Result<f64> {
    let v = lambda.values();
    op_n(alpha, v.len())?;
    check_len(v, xi, v.len())?;
    Ok(sn_gap(alpha, v, xi, k, epsilon, Corrupt::default()).value)
}

pub(crate) fn sn_gap(alpha: f64, v: &[f64], xi: &[f64], k: f64, epsilon: f64, corrupt: Corrupt) -> Gap {
    let n = v.len();
    let g = grad(alpha, v, n);
    let kk = if corrupt.0 { -k } else { k };
    let l1 = v[0];
    let sh = dot(&g, xi);
    let mut acc = Acc::default();
    acc.add(l1 * kk * sh * sh);
    acc.add(-l1 * pair_form(alpha, v, n, xi));
    acc.add(-g[0] * xi[0] * xi[0]);
    for j in 1..n {
        acc.add((1.0 + epsilon) * g[j] * xi[j] * xi[j]);
    }
    acc.gap()
}

/// Third-order terms of the perturbed test function at a maximum point, with
/// `m` the multiplicity of `λ_1` and `w_i` in the role of `u_{11i}`.
pub fn lemma41_gap(op: &SumOperator, lambda: &Spectrum, m: usize, w: &[f64]) -> Result<f64> {
    let v = lambda.values();
    check_len(v, w, op.n)?;
    if !lambda.is_sorted_desc() {
        return precondition("spectrum must be sorted in descending order");
    }
    if !in_gamma_tilde_values(op, v) {
        return precondition("spectrum is not in the admissible cone");
    }
    let n = v.len();
    if v[0] < 5.0 * (1.0 - v[n - 1]) / 3.0 {
        return precondition(format!(
            "need λ_1 >= 5(1 − λ_n)/3, got λ_1 = {}, λ_n = {}",
            v[0],
            v[n - 1]
        ));
    }
    check_multiplicity(v, m)?;
    Ok(third_order_gap(op, v, m, w, Corrupt::default()).value)
}

pub(crate) fn check_multiplicity(v: &[f64], m: usize) -> Result<()> {
    if m == 0 || m > v.len() {
        return domain(format!("multiplicity {m} out of range"));
    }
    if v[..m].iter().any(|&x| x != v[0]) || v[m..].iter().any(|&x| x == v[0]) {
        return domain(format!("multiplicity {m} inconsistent with the spectrum"));
    }
    Ok(())
}

pub(crate) fn multiplicity(v: &[f64]) -> usize {
    v.iter().take_while(|&&x| x == v[0]).count()
}

pub(crate) fn third_order_gap(op: &SumOperator, v: &[f64], m: usize, w: &[f64], corrupt: Corrupt) -> Gap {
    let n = v.len();
    let k = op.k as isize;
    let al = op.alpha;
    let l1 = v[0];
    let g = grad(al, v, op.k);
    let c = if corrupt.0 { 5.0 } else { 1.25 };
    let mut acc = Acc::default();
    for i in m..n {
        // (S^{ii} − S^{11})/(λ_1 − λ_i) = S_{k-2}(λ|1i)
        let dd = s_with(al, &without(v, &[0, i]), k - 2);
        acc.add(2.0 * dd * w[i] * w[i] / l1);
    }
    for p in 1..n {
        acc.add(2.0 * g[0] * w[p] * w[p] / (l1 * (l1 - v[p] + 1.0)));
        acc.add(-c * g[p] * w[p] * w[p] / (l1 * l1));
    }
    acc.gap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(v: &[f64]) -> Spectrum {
        Spectrum::from_slice(v).unwrap()
    }

    fn params() -> ConcavityParams {
        ConcavityParams::new(1, 0.5, 0.5, 0.5, 0.1, 10.0).unwrap()
    }

    #[test]
    fn pair_gaps_vanish_at_zero_direction() {
        let op = SumOperator::new(4, 3, 1.0).unwrap();
        let (a, b) = lemma24_gaps(&op, 1, &sp(&[3.0, 2.0, 1.0, 1.0]), &[0.0; 4], 0.5).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
    }

    #[test]
    fn pair_gaps_example() {
        let op = SumOperator::new(4, 3, 1.0).unwrap();
        let (a, b) = lemma24_gaps(&op, 1, &sp(&[3.0, 2.0, 1.0, 1.0]), &[1.0, 0.0, 0.0, 0.0], 0.5).unwrap();
        // S_3 = 17 + 17, S_3^{11} = 4 + 5, S_1 = 8, S_1^{11} = 1; ϑ = 1/2.
        let (a0, b0) = (9.0 / 34.0, 1.0 / 8.0);
        let g1 = -(a0 - b0) * (-0.5 * a0 - 1.5 * b0);
        let g2 = 1.5 * 81.0 / 34.0 - 34.0 * 1.25 * b0 * b0;
        assert!((a - g1).abs() < 1e-14 && a >= 0.0, "{a} vs {g1}");
        assert!((b - g2).abs() < 1e-12 && b >= 0.0, "{b} vs {g2}");
    }

    #[test]
    fn pair_gaps_need_nonzero_lower_operator() {
        let op = SumOperator::new(3, 2, 0.0).unwrap();
        assert!(lemma24_gaps(&op, 0, &sp(&[1.0, 1.0, 1.0]), &[1.0; 3], 0.5).is_err());
    }

    #[test]
    fn cross_term_first_order_reduces_to_constant_form() {
        let lam = sp(&[4.0, 1.0, -0.5]);
        let xi = [1.0, -0.3, 0.7];
        let (eps, c) = (0.5, 3.0);
        let alpha = 1.5;
        let form = 2.0 * (xi[0] * xi[1] + xi[0] * xi[2] + xi[1] * xi[2])
            + 0.5 * eps * xi[0] * xi[0]
            + c / eps * (xi[1] * xi[1] + xi[2] * xi[2]);
        let v = claim32_gap(&lam, 1, alpha, &xi, eps, c);
        assert!((v - alpha * alpha * form).abs() < 1e-12);
        assert_eq!(claim32_gap(&lam, 1, alpha, &[0.0; 3], eps, c), 0.0);
    }

    #[test]
    fn pinched_gap_zero_direction_and_domain() {
        let op = SumOperator::new(4, 3, 1.0).unwrap();
        let lam = sp(&[50.0, 1.0, 0.5, 0.2]);
        assert_eq!(lemma34_gap(&op, &params(), &lam, &[0.0; 4]).unwrap(), 0.0);
        assert!(lemma34_hypothesis(&params(), &lam));
        assert!(lemma34_gap(&op, &params(), &sp(&[-1.0, -1.0, -1.0, -1.0]), &[1.0; 4]).is_err());
    }

    #[test]
    fn product_identity_hand_example() {
        let r = lemma31_residuals(1.0, &sp(&[1.0, 0.0, 0.0]), 1, 1, 2).unwrap();
        assert_eq!(r[0], 0.0);
        let r = lemma31_residuals(0.7, &sp(&[0.0; 4]), 1, 2, 3).unwrap();
        assert_eq!(r, [0.0; 3]);
        assert!(lemma31_residuals(1.0, &sp(&[1.0, 2.0, 3.0]), 0, 1, 2).is_err());
        assert!(lemma31_residuals(1.0, &sp(&[1.0, 2.0, 3.0]), 1, 2, 2).is_err());
    }

    #[test]
    fn product_identities_on_mixed_signs() {
        let lam = sp(&[2.5, -1.0, 0.0, 3.0, -0.25]);
        for j in 1..5 {
            for p in 1..5 {
                for q in 1..5 {
                    if p != q {
                        let r = lemma31_residuals(0.8, &lam, j, p, q).unwrap();
                        assert!(r.iter().all(|x| x.abs() < 1e-13), "{r:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn sn_matrices_example() {
        let lam = sp(&[2.0, 1.0, 1.0]);
        let q = lemma32_matrix(1.0, &lam).unwrap();
        assert_eq!(q, SymMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap());
        let r = remark31_matrix(1.0, &lam).unwrap();
        assert_eq!(r, SymMatrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 4.0]]).unwrap());
        assert!(lemma32_matrix(1.0, &sp(&[1.0, 2.0, 1.0])).is_err());
        assert!(lemma32_matrix(1.0, &sp(&[1.0, -3.0, -3.0])).is_err());
    }

    #[test]
    fn sn_gap_first_axis_reduction() {
        let lam = sp(&[3.0, 1.0, 0.5]);
        let s11 = 1.5 + 0.5;
        let kmin = 1.0 / (3.0 * s11);
        let e1 = [1.0, 0.0, 0.0];
        let at = |k| lemma33_gap(1.0, &lam, &e1, k, 0.5).unwrap();
        assert!(at(kmin).abs() < 1e-12);
        assert!(at(0.99 * kmin) < 0.0 && at(1.01 * kmin) > 0.0);
    }

    #[test]
    fn third_order_example_and_guards() {
        let op = SumOperator::new(3, 2, 1.0).unwrap();
        let lam = sp(&[10.0, 1.0, 0.5]);
        let v = lemma41_gap(&op, &lam, 1, &[0.0, 1.0, 0.0]).unwrap();
        assert!((v - 0.10625).abs() < 1e-14, "{v}");
        assert_eq!(lemma41_gap(&op, &lam, 1, &[0.0; 3]).unwrap(), 0.0);
        assert!(lemma41_gap(&op, &sp(&[10.0, 10.0, 0.5]), 1, &[0.0, 1.0, 0.0]).is_err());
        assert!(lemma41_gap(&op, &sp(&[0.5, 0.5, 0.2]), 2, &[0.0, 1.0, 0.0]).is_err());
        assert!(lemma41_gap(&op, &sp(&[4.0, 4.0, 0.5]), 2, &[0.0, 1.0, 0.0]).is_ok());
        let bad = third_order_gap(&op, lam.values(), 1, &[0.0, 1.0, 0.0], Corrupt(true));
        assert!(bad.value < 0.0);
    }
}
