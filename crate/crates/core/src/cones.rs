//! Gårding-cone membership, seeded cone samplers and the quantitative cone
//! bounds (Newton's inequality, product bounds, the `θ` lower bound and the
//! explicit lower bound on the smallest eigenvalue).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, precondition, Error, Result};
use crate::symfunc::{binomial, s_grad_values, sigma, SumOperator, Spectrum};

/// Bounds `S_k ≤ F` and `σ_k ≥ −G`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams {
    pub f: f64,
    pub g: f64,
}

impl BoundParams {
    pub fn new(f: f64, g: f64) -> Result<Self> {
        if !(f >= 0.0 && g >= 0.0) {
            return domain(format!("bounds must be nonnegative, got F = {f}, G = {g}"));
        }
        Ok(BoundParams { f, g })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeSampleConfig {
    pub scale: f64,
    pub seed: u64,
    pub max_rejects: usize,
}

impl ConeSampleConfig {
    pub fn new(scale: f64, seed: u64, max_rejects: usize) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return domain(format!("sampling scale must be positive, got {scale}"));
        }
        if max_rejects == 0 {
            return domain("max_rejects must be positive");
        }
        Ok(ConeSampleConfig { scale, seed, max_rejects })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeKind {
    /// `Γ_k = {σ_1 > 0, …, σ_k > 0}`.
    GammaK,
    /// `Γ̃_k = Γ_{k-1} ∩ {S_k > 0}`.
    GammaTildeK,
}

/// `σ_j(λ) > 0` for `j = 1..=k` (exact sign test).
pub fn in_gamma_k(lambda: &Spectrum, k: usize) -> bool {
    in_gamma_values(lambda.values(), k)
}

pub(crate) fn in_gamma_values(values: &[f64], k: usize) -> bool {
    let e = crate::symfunc::elem_sym_all(values, k);
    e[1..].iter().all(|&s| s > 0.0)
}

/// `λ ∈ Γ_{k-1}` and `S_k(λ) > 0`; for `k = 1` only `S_1 > 0` is required.
pub fn in_gamma_tilde_k(op: &SumOperator, lambda: &Spectrum) -> bool {
    in_gamma_tilde_values(op, lambda.values())
}

pub(crate) fn in_gamma_tilde_values(op: &SumOperator, values: &[f64]) -> bool {
    let k = op.k;
    in_gamma_values(values, k - 1) && op.s_of(values, k as isize) > 0.0
}

pub fn in_cone(op: &SumOperator, values: &[f64], which: ConeKind) -> bool {
    match which {
        ConeKind::GammaK => in_gamma_values(values, op.k),
        ConeKind::GammaTildeK => in_gamma_tilde_values(op, values),
    }
}

/// Seeded rejection sampler over `[−scale, scale]ⁿ` restricted to a cone.
pub struct ConeSampler {
    op: SumOperator,
    cfg: ConeSampleConfig,
    which: ConeKind,
    rng: ChaCha8Rng,
    fallbacks: usize,
}

impl ConeSampler {
    pub fn new(op: SumOperator, cfg: ConeSampleConfig, which: ConeKind) -> Self {
        ConeSampler {
            op,
            cfg,
            which,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            fallbacks: 0,
        }
    }

    /// Number of draws that fell back to the near-diagonal point.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn sample(&mut self) -> Spectrum {
        let n = self.op.n;
        let s = self.cfg.scale;
        let mut v = vec![0.0; n];
        for _ in 0..self.cfg.max_rejects {
            for x in v.iter_mut() {
                *x = self.rng.gen_range(-s..=s);
            }
            if in_cone(&self.op, &v, self.which) {
                return Spectrum::new(v).expect("finite sample");
            }
        }
        self.fallbacks += 1;
        let mu = 0.5 * s;
        for x in v.iter_mut() {
            *x = mu + self.rng.gen_range(-0.01 * mu..=0.01 * mu);
        }
        Spectrum::new(v).expect("finite sample")
    }

    pub fn sample_sorted(&mut self) -> Spectrum {
        self.sample().sorted_desc()
    }
}

/// One cone sample for `cfg.seed`.
pub fn sample_cone(op: &SumOperator, cfg: &ConeSampleConfig, which: ConeKind) -> Spectrum {
    ConeSampler::new(*op, *cfg, which).sample()
}

/// Newton's inequality at level `k`: returns
/// `(σ_k² − σ_{k-1}σ_{k+1} − Θσ_k², Θ)` with
/// `Θ = 1 − C(n,k-1)C(n,k+1)/C(n,k)²`.
pub fn newton_gap(lambda: &Spectrum, k: usize) -> Result<(f64, f64)> {
    let n = lambda.len();
    if k < 1 || k + 1 > n {
        return domain(format!("newton_gap needs 1 <= k <= n-1, got k = {k}, n = {n}"));
    }
    if !in_gamma_k(lambda, k) {
        return precondition(format!("spectrum {:?} is not in Gamma_{k}", lambda.values()));
    }
    let theta = newton_theta(n, k);
    let e = crate::symfunc::elem_sym_all(lambda.values(), k + 1);
    let gap = e[k] * e[k] - e[k - 1] * e[k + 1] - theta * e[k] * e[k];
    Ok((gap, theta))
}

pub fn newton_theta(n: usize, k: usize) -> f64 {
    1.0 - binomial(n, k - 1) * binomial(n, k + 1) / (binomial(n, k) * binomial(n, k))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lemma22Report {
    /// `σ_k ≤ C_{n,k} λ_1⋯λ_k`.
    pub product_upper: bool,
    /// `σ_l ≥ λ_1⋯λ_l` for `l ≤ k−1`.
    pub product_lower: bool,
    /// `−λ_i ≤ ((n−k)/k) λ_1` for every nonpositive `λ_i`.
    pub negative_entries: bool,
    /// `λ_k + ⋯ + λ_n > 0` and `|λ_i| ≤ n λ_k` for `i > k`.
    pub tail: bool,
}

impl Lemma22Report {
    pub fn all(&self) -> bool {
        self.product_upper && self.product_lower && self.negative_entries && self.tail
    }
}

/// Product and tail bounds on `Γ_k`. The spectrum is sorted internally.
pub fn lemma22_checks(lambda: &Spectrum, k: usize, c_nk: f64) -> Result<Lemma22Report> {
    let n = lambda.len();
    if k < 1 || k > n {
        return domain(format!("order k = {k} outside 1..={n}"));
    }
    if !in_gamma_k(lambda, k) {
        return precondition(format!("spectrum {:?} is not in Gamma_{k}", lambda.values()));
    }
    let s = lambda.sorted_desc();
    let v = s.values();
    let e = crate::symfunc::elem_sym_all(v, k);
    let prod = |m: usize| v[..m].iter().product::<f64>();

    let product_upper = e[k] <= c_nk * prod(k);
    let product_lower = (1..k).all(|l| e[l] >= prod(l));
    let ratio = (n - k) as f64 / k as f64;
    let negative_entries = v
        .iter()
        .filter(|&&x| x <= 0.0)
        .all(|&x| -x <= ratio * v[0]);
    let tail_sum: f64 = v[k - 1..].iter().sum();
    let tail = tail_sum > 0.0 && v[k..].iter().all(|&x| x.abs() <= n as f64 * v[k - 1]);
    Ok(Lemma22Report { product_upper, product_lower, negative_entries, tail })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma23Report {
    /// Part (i) per `l = 1..k-1`.
    pub lower_bounds: Vec<bool>,
    /// Smallest margin `S_l − ½(λ_1⋯λ_{l-1} + αλ_1⋯λ_l)` over `l`.
    pub lower_margin: f64,
    /// Part (ii): `S_k^{ii} ≥ θ S_k/λ_i` for `i ≤ k−1`.
    pub derivative_bound: bool,
}

impl Lemma23Report {
    pub fn all(&self) -> bool {
        self.lower_bounds.iter().all(|&b| b) && self.derivative_bound
    }
}

/// Lower bounds on `Γ̃_k`. The spectrum is sorted internally.
pub fn lemma23_checks(op: &SumOperator, lambda: &Spectrum, theta: f64) -> Result<Lemma23Report> {
    if !in_gamma_tilde_k(op, lambda) {
        return precondition(format!(
            "spectrum {:?} is not in the admissible cone for k = {}",
            lambda.values(),
            op.k
        ));
    }
    let s = lambda.sorted_desc();
    let v = s.values();
    let k = op.k;
    let prod = |m: usize| v[..m].iter().product::<f64>();

    let mut lower_bounds = Vec::with_capacity(k.saturating_sub(1));
    let mut lower_margin = f64::INFINITY;
    for l in 1..k {
        let margin = op.s_of(v, l as isize) - 0.5 * (prod(l - 1) + op.alpha * prod(l));
        lower_margin = lower_margin.min(margin);
        lower_bounds.push(margin > 0.0);
    }
    let sk = op.s_of(v, k as isize);
    let grad = s_grad_values(op, v);
    let derivative_bound = (0..k.saturating_sub(1)).all(|i| grad[i] >= theta * sk / v[i]);
    Ok(Lemma23Report { lower_bounds, lower_margin, derivative_bound })
}

/// `0.9 × min_{samples, i ≤ k−1} λ_i S_k^{ii} / S_k` over the given spectra.
pub fn calibrate_theta_on(op: &SumOperator, samples: &[Spectrum]) -> Result<f64> {
    if op.k < 2 {
        return domain("theta calibration needs k >= 2");
    }
    let mut best = f64::INFINITY;
    for s in samples {
        if !in_gamma_tilde_k(op, s) {
            return precondition(format!("calibration sample {:?} not admissible", s.values()));
        }
        let sorted = s.sorted_desc();
        let v = sorted.values();
        let sk = op.s_of(v, op.k as isize);
        let grad = s_grad_values(op, v);
        for i in 0..op.k - 1 {
            best = best.min(v[i] * grad[i] / sk);
        }
    }
    if !best.is_finite() {
        return domain("theta calibration needs at least one sample");
    }
    Ok(0.9 * best)
}

/// Empirical `θ` from `n_samples` seeded draws of the admissible cone.
pub fn calibrate_theta(op: &SumOperator, n_samples: usize, seed: u64) -> Result<f64> {
    let cfg = ConeSampleConfig::new(5.0, seed, 10_000)?;
    let mut sampler = ConeSampler::new(*op, cfg, ConeKind::GammaTildeK);
    let samples: Vec<_> = (0..n_samples).map(|_| sampler.sample()).collect();
    calibrate_theta_on(op, &samples)
}

/// Explicit `K` with `λ_n ≥ −K` whenever `λ ∈ Γ̃_k`, `S_k ≤ F`, `σ_k ≥ −G`.
///
/// `K = max(n+1−k, t*)` where `t*` is the positive root of
/// `Θ′t² − (F+Gα)t − G = 0` and `Θ′` is Newton's constant at level `k−1`
/// in `n−1` variables.
pub fn lemma26_bound(n: usize, k: usize, alpha: f64, bounds: BoundParams) -> Result<f64> {
    if k < 2 || k > n {
        return domain(format!("lemma26_bound needs 2 <= k <= n, got k = {k}, n = {n}"));
    }
    let theta = newton_theta(n - 1, k - 1);
    if !(theta > 0.0) {
        return Err(Error::Numerical(format!(
            "Newton constant {theta} is not positive for n = {n}, k = {k}"
        )));
    }
    let b = bounds.f + bounds.g * alpha;
    let t = (b + (b * b + 4.0 * theta * bounds.g).sqrt()) / (2.0 * theta);
    Ok(((n + 1 - k) as f64).max(t))
}

/// `σ_k(values)`, order-independent.
pub fn sigma_k(values: &[f64], k: usize) -> f64 {
    sigma(values, k as isize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(v: &[f64]) -> Spectrum {
        Spectrum::from_slice(v).unwrap()
    }

    #[test]
    fn gamma_membership() {
        assert!(in_gamma_k(&sp(&[1.0, 1.0, 1.0]), 3));
        assert!(!in_gamma_k(&sp(&[2.0, 1.0, -1.0]), 2));
        assert!(in_gamma_k(&sp(&[2.0, 1.0, -1.0]), 1));
    }

    #[test]
    fn gamma_tilde_membership() {
        let op = SumOperator::new(3, 2, 1.0).unwrap();
        assert!(in_gamma_tilde_k(&op, &sp(&[2.0, 1.0, -1.0])));
        assert!(in_gamma_tilde_k(&op, &sp(&[1.0, 1.0, 1.0])));
        assert!(!in_gamma_tilde_k(&op, &sp(&[-1.0, -1.0, -1.0])));
        // k = 1 only asks S_1 = 1 + ασ_1 > 0.
        let op1 = SumOperator::new(3, 1, 1.0).unwrap();
        assert!(in_gamma_tilde_k(&op1, &sp(&[-0.1, -0.1, -0.1])));
    }

    #[test]
    fn sampler_membership_and_determinism() {
        let op = SumOperator::new(4, 3, 1.0).unwrap();
        for which in [ConeKind::GammaK, ConeKind::GammaTildeK] {
            for seed in 0..20 {
                let cfg = ConeSampleConfig::new(5.0, seed, 1000).unwrap();
                let a = sample_cone(&op, &cfg, which);
                assert!(in_cone(&op, a.values(), which));
                assert_eq!(a, sample_cone(&op, &cfg, which));
            }
        }
    }

    #[test]
    fn sampler_fallback_is_member() {
        let op = SumOperator::new(6, 6, 0.0).unwrap();
        let cfg = ConeSampleConfig::new(1.0, 3, 1).unwrap();
        let mut s = ConeSampler::new(op, cfg, ConeKind::GammaK);
        for _ in 0..50 {
            assert!(in_gamma_k(&s.sample(), 6));
        }
        assert!(s.fallbacks() > 0);
    }

    #[test]
    fn newton_examples() {
        let (gap, theta) = newton_gap(&sp(&[1.0, 1.0, 1.0]), 2).unwrap();
        assert!((theta - 2.0 / 3.0).abs() < 1e-15);
        assert!(gap.abs() < 1e-12);
        assert!((newton_theta(4, 2) - 5.0 / 9.0).abs() < 1e-15);
        let (gap, _) = newton_gap(&sp(&[3.0, 2.0, 1.0]), 2).unwrap();
        assert!((gap - 13.0 / 3.0).abs() < 1e-12);
        assert!(newton_gap(&sp(&[2.0, 1.0, -1.0]), 2).is_err());
        assert!(newton_gap(&sp(&[1.0, 1.0, 1.0]), 3).is_err());
    }

    #[test]
    fn product_bound_examples() {
        let r = lemma22_checks(&sp(&[1.0, 1.0, 1.0]), 2, 3.0).unwrap();
        assert!(r.all());
        assert!(matches!(
            lemma22_checks(&sp(&[2.0, 1.0, -1.0]), 2, 3.0),
            Err(Error::Precondition(_))
        ));
        let r = lemma22_checks(&sp(&[3.0, 2.0, 1.0]), 3, 1.0).unwrap();
        assert!(r.product_lower);
    }

    #[test]
    fn admissible_lower_bound_examples() {
        let op = SumOperator::new(3, 2, 1.0).unwrap();
        let r = lemma23_checks(&op, &sp(&[1.0, 1.0, 1.0]), 0.0).unwrap();
        assert_eq!(r.lower_bounds, vec![true]);
        assert!((r.lower_margin - 3.0).abs() < 1e-15);
        assert!(r.derivative_bound);
        assert!(lemma23_checks(&op, &sp(&[-1.0, -1.0, -1.0]), 0.0).is_err());
    }

    #[test]
    fn theta_single_sample() {
        let op = SumOperator::new(3, 2, 1.0).unwrap();
        let t = calibrate_theta_on(&op, &[sp(&[1.0, 1.0, 1.0])]).unwrap();
        assert!((t - 0.45).abs() < 1e-15);
    }

    #[test]
    fn theta_positive_and_deterministic() {
        let op = SumOperator::new(3, 2, 1.0).unwrap();
        let a = calibrate_theta(&op, 10_000, 11).unwrap();
        assert!(a > 0.0);
        assert_eq!(a, calibrate_theta(&op, 10_000, 11).unwrap());
    }

    #[test]
    fn negative_entry_bound_examples() {
        let k = lemma26_bound(3, 2, 1.0, BoundParams::new(10.0, 0.0).unwrap()).unwrap();
        assert!((k - 40.0 / 3.0).abs() < 1e-12);
        let k = lemma26_bound(5, 3, 2.0, BoundParams::new(0.0, 0.0).unwrap()).unwrap();
        assert_eq!(k, 3.0);
        assert!(lemma26_bound(3, 1, 1.0, BoundParams::new(1.0, 1.0).unwrap()).is_err());
        assert!(BoundParams::new(-1.0, 0.0).is_err());
    }
}
