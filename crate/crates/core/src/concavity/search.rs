//! Seeded falsification campaigns and grid calibration.
//!
//! A round draws `λ` from the inequality's region, evaluates the gap at a
//! random unit direction and at the exact minimizing direction (the gaps are
//! quadratic forms in the direction, recovered by polarization), and keeps
//! the most negative relative gap. The worst round of each batch is then
//! refined by coordinate descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::cones::in_gamma_tilde_values;
use crate::error::{domain, Error, Result};
use crate::matrixcalc::{eigs, SymMatrix};
use crate::symfunc::{s_with, sort_desc, Spectrum, SumOperator};

use super::gaps::{
    cross_gap, multiplicity, pair_gaps, pinched, pinched_gap, quad_gap, sn_gap, sn_matrix_values,
    third_order_gap, Corrupt, Gap,
};
use super::{ConcavityParams, GapWitness, InequalityId};

const BATCH: usize = 1024;
const VERIFY_TOL: f64 = -1e-10;
const ESTIMATE_TOL: f64 = -1e-8;
const MAX_TRIES: usize = 100_000;
const HYP_MIN_TOP: f64 = 10.0;

/// Everything a campaign needs besides the operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FalsifyPack {
    pub params: ConcavityParams,
    /// Constant `C` of the cross-term estimate.
    pub cross_c: f64,
    /// Lower bound on `S_n` imposed on samples for the `K(ε)` inequality.
    pub s_min: f64,
    /// Half-width of the sampling cube.
    pub scale: f64,
    /// Upper end of `λ_1` for pinched samples; the lower end is 10.
    pub top_scale: f64,
    pub negative_control: bool,
    pub local_iters: usize,
}

impl FalsifyPack {
    pub fn new(params: ConcavityParams) -> Self {
        FalsifyPack {
            params,
            cross_c: 1.0,
            s_min: 0.1,
            scale: 5.0,
            top_scale: 1000.0,
            negative_control: false,
            local_iters: 200,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Target {
    id: InequalityId,
    op: SumOperator,
    pack: FalsifyPack,
}

impl Target {
    fn new(id: InequalityId, op: SumOperator, pack: FalsifyPack) -> Result<Self> {
        let p = &pack.params;
        if id.needs_full_order() && op.k != op.n {
            return domain(format!("{id} needs k = n, got k = {}, n = {}", op.k, op.n));
        }
        match id {
            InequalityId::SnPsd | InequalityId::SnPsdSquared if op.n < 3 => {
                return domain(format!("{id} needs n >= 3"));
            }
            InequalityId::PairFirst | InequalityId::PairSecond => {
                op.vartheta(p.l)?;
            }
            InequalityId::CrossTerm | InequalityId::PinchedConcavity => {
                p.check_against(&op)?;
                if !(pack.top_scale > HYP_MIN_TOP) {
                    return domain(format!("top_scale must exceed {HYP_MIN_TOP}"));
                }
            }
            InequalityId::PerturbedThirdOrder if op.k < 2 => {
                return domain("third-order inequality needs k >= 2");
            }
            _ => {}
        }
        if !(pack.scale > 0.0 && pack.scale.is_finite()) {
            return domain("sampling scale must be positive");
        }
        if id == InequalityId::SnConcavity && !(pack.s_min > 0.0) {
            return domain("s_min must be positive");
        }
        Ok(Target { id, op, pack })
    }

    fn xi_len(&self) -> usize {
        match self.id {
            InequalityId::SnPsd | InequalityId::SnPsdSquared => self.op.n - 1,
            _ => self.op.n,
        }
    }

    fn hypothesis_region(&self) -> bool {
        matches!(self.id, InequalityId::CrossTerm | InequalityId::PinchedConcavity)
    }

    fn admissible(&self, v: &[f64]) -> bool {
        if !in_gamma_tilde_values(&self.op, v) {
            return false;
        }
        let n = v.len();
        let p = &self.pack.params;
        match self.id {
            InequalityId::PairFirst | InequalityId::PairSecond => {
                s_with(self.op.alpha, v, p.l as isize) != 0.0
            }
            InequalityId::CrossTerm | InequalityId::PinchedConcavity => {
                pinched(p, v) && v[0] >= HYP_MIN_TOP && v[0] <= self.pack.top_scale
            }
            InequalityId::SnConcavity => s_with(self.op.alpha, v, n as isize) >= self.pack.s_min,
            InequalityId::PerturbedThirdOrder => v[0] >= 5.0 * (1.0 - v[n - 1]) / 3.0,
            InequalityId::SnPsd | InequalityId::SnPsdSquared => true,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let n = self.op.n;
        let mut v = vec![0.0; n];
        for _ in 0..MAX_TRIES {
            if self.hypothesis_region() {
                self.draw_pinched(rng, &mut v);
            } else {
                let s = self.pack.scale;
                for x in v.iter_mut() {
                    *x = rng.gen_range(-s..=s);
                }
            }
            sort_desc(&mut v);
            if self.id == InequalityId::PerturbedThirdOrder && rng.gen_bool(0.25) {
                v[1] = v[0];
            }
            if self.admissible(&v) {
                return Some(v);
            }
        }
        None
    }

    /// `λ_1 ∈ [10, top]`, `λ_i ∈ [δλ_1, λ_1]` for `i ≤ l`, and the rest in
    /// `[−min(δ′λ_1, 1/α), δ′λ_1]`.
    fn draw_pinched(&self, rng: &mut ChaCha8Rng, v: &mut [f64]) {
        let p = &self.pack.params;
        let top = rng.gen_range(HYP_MIN_TOP..=self.pack.top_scale);
        v[0] = top;
        for x in v[1..p.l].iter_mut() {
            *x = top * rng.gen_range(p.delta..=1.0);
        }
        let hi = p.delta_prime * top;
        let lo = if self.op.alpha > 0.0 { -hi.min(1.0 / self.op.alpha) } else { -hi };
        for x in v[p.l..].iter_mut() {
            *x = rng.gen_range(lo..=hi);
        }
    }

    fn eval(&self, v: &[f64], xi: &[f64]) -> Option<Gap> {
        let p = &self.pack.params;
        let c = Corrupt(self.pack.negative_control);
        let al = self.op.alpha;
        let g = match self.id {
            InequalityId::PairFirst => pair_gaps(&self.op, p.l, v, xi, p.delta, c).ok()?.0,
            InequalityId::PairSecond => pair_gaps(&self.op, p.l, v, xi, p.delta, c).ok()?.1,
            InequalityId::CrossTerm => {
                let cc = if c.0 { -self.pack.cross_c } else { self.pack.cross_c };
                cross_gap(v, p.l, al, xi, p.epsilon, cc)
            }
            InequalityId::PinchedConcavity => pinched_gap(&self.op, p, v, xi, c).ok()?,
            InequalityId::SnConcavity => sn_gap(al, v, xi, p.k_of_eps, p.epsilon, c),
            InequalityId::SnPsd => quad_gap(&sn_matrix_values(al, v, false), xi, c),
            InequalityId::SnPsdSquared => quad_gap(&sn_matrix_values(al, v, true), xi, c),
            InequalityId::PerturbedThirdOrder => third_order_gap(&self.op, v, multiplicity(v), xi, c),
        };
        (g.value.is_finite() && g.scale.is_finite()).then_some(g)
    }

    /// Minimizing unit direction of the quadratic form at `v`.
    fn xi_min(&self, v: &[f64]) -> Option<(Vec<f64>, Gap)> {
        let m = self.xi_len();
        let mut e = vec![0.0; m];
        let mut diag = vec![0.0; m];
        for i in 0..m {
            e[i] = 1.0;
            diag[i] = self.eval(v, &e)?.value;
            e[i] = 0.0;
        }
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            data[i * m + i] = diag[i];
            for j in (i + 1)..m {
                e[i] = 1.0;
                e[j] = 1.0;
                let b = 0.5 * (self.eval(v, &e)?.value - diag[i] - diag[j]);
                e[i] = 0.0;
                e[j] = 0.0;
                data[i * m + j] = b;
                data[j * m + i] = b;
            }
        }
        let d = eigs(&SymMatrix::new(m, data).ok()?).ok()?;
        let xi = d.vector(m - 1);
        let g = self.eval(v, &xi)?;
        Some((xi, g))
    }

    /// Relative gap at the better of `xi` and the exact minimizer.
    fn best_at(&self, v: &[f64], xi: &[f64]) -> Option<(Vec<f64>, Gap)> {
        let a = self.eval(v, xi).map(|g| (xi.to_vec(), g));
        let b = self.xi_min(v);
        match (a, b) {
            (Some(a), Some(b)) => Some(if b.1.relative() < a.1.relative() { b } else { a }),
            (a, b) => a.or(b),
        }
    }

    /// Derivative-free coordinate descent on `(λ, ξ)` with step halving.
    fn descend(&self, v0: &[f64], xi0: &[f64], iters: usize) -> (Vec<f64>, Vec<f64>, Gap) {
        let n = v0.len();
        let m = xi0.len();
        let mut v = v0.to_vec();
        let mut xi = normalized(xi0);
        let mut best = self.eval(&v, &xi).expect("descent starts from an evaluable point");
        let top = v.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-6);
        let mut step: Vec<f64> = v
            .iter()
            .map(|x| 0.1 * x.abs().max(0.01 * top))
            .chain(std::iter::repeat(0.1).take(m))
            .collect();
        for _ in 0..iters {
            let mut improved = false;
            for c in 0..(n + m) {
                for sgn in [1.0, -1.0] {
                    let (mut tv, mut tx) = (v.clone(), xi.clone());
                    if c < n {
                        tv[c] += sgn * step[c];
                        sort_desc(&mut tv);
                        if !self.admissible(&tv) {
                            continue;
                        }
                    } else {
                        tx[c - n] += sgn * step[c];
                        tx = normalized(&tx);
                    }
                    if let Some(g) = self.eval(&tv, &tx) {
                        if g.relative() < best.relative() {
                            v = tv;
                            xi = tx;
                            best = g;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if let Some((tx, g)) = self.xi_min(&v) {
                if g.relative() < best.relative() {
                    xi = tx;
                    best = g;
                    improved = true;
                }
            }
            if !improved {
                step.iter_mut().for_each(|s| *s *= 0.5);
            }
        }
        (v, xi, best)
    }
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let s = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if s > 0.0 {
        x.iter().map(|a| a / s).collect()
    } else {
        x.to_vec()
    }
}

fn unit_normal(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        if x.iter().any(|a| *a != 0.0) {
            return normalized(&x);
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Worst {
    v: Vec<f64>,
    xi: Vec<f64>,
    gap: Gap,
}

struct BatchOut {
    worst: Option<Worst>,
    rounds: usize,
    violations: usize,
}

fn run_batch(t: &Target, seed: u64, batch: usize, rounds: usize) -> BatchOut {
    let mut rng = stream_rng(seed, batch as u64);
    let mut worst: Option<Worst> = None;
    let mut done = 0;
    let mut violations = 0;
    for _ in 0..rounds {
        let Some(v) = t.draw(&mut rng) else { continue };
        let xi = unit_normal(&mut rng, t.xi_len());
        let Some((xi, gap)) = t.best_at(&v, &xi) else { continue };
        done += 1;
        if gap.relative() < VERIFY_TOL {
            violations += 1;
        }
        if worst.as_ref().map_or(true, |w| gap.relative() < w.gap.relative()) {
            worst = Some(Worst { v, xi, gap });
        }
    }
    BatchOut { worst, rounds: done, violations }
}

struct Campaign {
    best: Worst,
    rounds: usize,
    violations: usize,
}

fn campaign(t: &Target, budget: usize, seed: u64) -> Result<Campaign> {
    let nb = budget.div_ceil(BATCH);
    let outs: Vec<BatchOut> = (0..nb)
        .into_par_iter()
        .map(|b| run_batch(t, seed, b, BATCH.min(budget - b * BATCH)))
        .collect();
    let rounds = outs.iter().map(|o| o.rounds).sum();
    let violations = outs.iter().map(|o| o.violations).sum();
    let refined: Vec<Worst> = outs
        .par_iter()
        .filter_map(|o| o.worst.as_ref())
        .map(|w| {
            let (v, xi, gap) = t.descend(&w.v, &w.xi, t.pack.local_iters);
            if gap.relative() < w.gap.relative() {
                Worst { v, xi, gap }
            } else {
                Worst { v: w.v.clone(), xi: w.xi.clone(), gap: w.gap }
            }
        })
        .collect();
    let best = refined
        .into_iter()
        .reduce(|a, b| if b.gap.relative() < a.gap.relative() { b } else { a })
        .ok_or_else(|| Error::Numerical(format!("{}: sampler produced no admissible point", t.id)))?;
    Ok(Campaign { best, rounds, violations })
}

/// Runs `budget` rounds and returns the most negative relative gap found.
pub fn falsify(
    id: InequalityId,
    op: &SumOperator,
    pack: &FalsifyPack,
    budget: usize,
    seed: u64,
) -> Result<GapWitness> {
    if budget == 0 {
        return Err(Error::Usage("falsification budget must be at least 1".into()));
    }
    let t = Target::new(id, *op, *pack)?;
    let Campaign { best, rounds, violations } = campaign(&t, budget, seed)?;
    Ok(GapWitness {
        inequality_id: id,
        lambda: Spectrum::new(best.v)?,
        xi: best.xi,
        gap: best.gap.relative(),
        value: best.gap.value,
        scale: best.gap.scale,
        rounds,
        violations,
    })
}

/// Result of a grid calibration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    /// Selected grid value; the last grid value when `flagged`.
    pub value: f64,
    /// Every grid value showed a violation.
    pub flagged: bool,
    /// `(grid value, sampled points with relative gap below −1e−8)`.
    pub grid: Vec<(f64, usize)>,
    /// `(grid value, refined witness gap)` for each full campaign run.
    pub campaigns: Vec<(f64, f64)>,
}

fn sample_points(t: &Target, n_samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let pts: Vec<Option<Vec<f64>>> = (0..n_samples)
        .into_par_iter()
        .map(|i| t.draw(&mut stream_rng(seed, i as u64)))
        .collect();
    pts.into_iter().flatten().collect()
}

fn sampled_failures(t: &Target, pts: &[Vec<f64>]) -> usize {
    pts.par_iter()
        .filter(|v| t.xi_min(v).map_or(false, |(_, g)| g.relative() < ESTIMATE_TOL))
        .count()
}

/// Largest `δ′ = 2^{−j}` (`j = 0..=30`) with no relative gap below `−1e−8`
/// for the pinched inequality: a fixed sample set per grid value (common
/// random numbers, exact minimization over the direction), then a full
/// campaign with descent. `params.delta_prime` is ignored.
pub fn estimate_delta_prime(
    op: &SumOperator,
    params: &ConcavityParams,
    pack: &FalsifyPack,
    n_samples: usize,
    seed: u64,
) -> Result<Calibration> {
    let mut grid = Vec::new();
    let mut campaigns = Vec::new();
    let mut last = 1.0;
    for j in 0..=30 {
        let dp = 0.5f64.powi(j);
        last = dp;
        let mut pk = *pack;
        pk.params = ConcavityParams { delta_prime: dp, ..*params };
        pk.negative_control = false;
        let t = Target::new(InequalityId::PinchedConcavity, *op, pk)?;
        let pts = sample_points(&t, n_samples, seed);
        if pts.is_empty() {
            grid.push((dp, 0));
            continue;
        }
        let bad = sampled_failures(&t, &pts);
        grid.push((dp, bad));
        if bad == 0 {
            let c = campaign(&t, n_samples, seed)?;
            let g = c.best.gap.relative();
            campaigns.push((dp, g));
            if g >= ESTIMATE_TOL {
                return Ok(Calibration { value: dp, flagged: false, grid, campaigns });
            }
        }
    }
    Ok(Calibration { value: last, flagged: true, grid, campaigns })
}

/// Smallest `2^j` (`j = −20..=40`) for a parameter the gap is monotone
/// increasing in. The per-sample threshold is found by bisection on shared
/// samples; the candidate is then checked by a full campaign and raised to
/// the threshold of any witness the campaign finds.
fn calibrate_monotone(
    make: impl Fn(f64) -> Result<Target>,
    n_samples: usize,
    seed: u64,
) -> Result<Calibration> {
    let vals: Vec<f64> = (-20..=40).map(|j| 2f64.powi(j)).collect();
    let targets: Vec<Target> = vals.iter().map(|&g| make(g)).collect::<Result<_>>()?;
    let pts = sample_points(&targets[0], n_samples, seed);
    if pts.is_empty() {
        return Err(Error::Numerical("calibration sampler produced no admissible point".into()));
    }
    let need_at = |v: &[f64]| {
        let passes = |i: usize| targets[i].xi_min(v).map_or(true, |(_, g)| g.relative() >= ESTIMATE_TOL);
        let (mut lo, mut hi) = (0usize, vals.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if passes(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    };
    let need: Vec<usize> = pts.par_iter().map(|v| need_at(v)).collect();
    let grid: Vec<(f64, usize)> = vals
        .iter()
        .enumerate()
        .map(|(i, &g)| (g, need.iter().filter(|&&n| n > i).count()))
        .collect();
    let mut idx = need.iter().copied().max().unwrap_or(0);
    let mut campaigns = Vec::new();
    while idx < vals.len() {
        let c = campaign(&targets[idx], n_samples, seed)?;
        let g = c.best.gap.relative();
        campaigns.push((vals[idx], g));
        if g >= ESTIMATE_TOL {
            return Ok(Calibration { value: vals[idx], flagged: false, grid, campaigns });
        }
        idx = (idx + 1).max(need_at(&c.best.v));
    }
    Ok(Calibration { value: vals[vals.len() - 1], flagged: true, grid, campaigns })
}

/// Smallest `K = 2^j` for which the `S_n` inequality with `(1+ε)` shows no
/// violation over `Γ̃_n` samples with `S_n ≥ pack.s_min`.
pub fn estimate_min_k(
    alpha: f64,
    n: usize,
    epsilon: f64,
    pack: &FalsifyPack,
    n_samples: usize,
    seed: u64,
) -> Result<Calibration> {
    let op = SumOperator::new(n, n, alpha)?;
    if !(epsilon > 0.0) {
        return domain(format!("epsilon = {epsilon} must be positive"));
    }
    calibrate_monotone(
        |k| {
            let mut pk = *pack;
            pk.params.epsilon = epsilon;
            pk.params.k_of_eps = k;
            pk.negative_control = false;
            Target::new(InequalityId::SnConcavity, op, pk)
        },
        n_samples,
        seed,
    )
}

/// Smallest cross-term constant `C = 2^j` with no violation over pinched
/// samples drawn with `params.delta` and `params.delta_prime`.
pub fn estimate_min_c(
    op: &SumOperator,
    params: &ConcavityParams,
    pack: &FalsifyPack,
    n_samples: usize,
    seed: u64,
) -> Result<Calibration> {
    calibrate_monotone(
        |c| {
            let mut pk = *pack;
            pk.params = *params;
            pk.cross_c = c;
            pk.negative_control = false;
            Target::new(InequalityId::CrossTerm, *op, pk)
        },
        n_samples,
        seed,
    )
}

/// Cross-term calibration with its own pinching ratio.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossTermCalibration {
    pub delta_prime: f64,
    pub c: Calibration,
}

/// Halves `params.delta_prime` (at most 30 times) until a finite `C` exists
/// on the grid. For `l ≥ 2` the block of the first `l` directions is only
/// semidefinite once `λ_{l+1}/λ_1` is small, so `C` may not exist at the
/// pinched-concavity ratio.
pub fn estimate_cross_term(
    op: &SumOperator,
    params: &ConcavityParams,
    pack: &FalsifyPack,
    n_samples: usize,
    seed: u64,
) -> Result<CrossTermCalibration> {
    let mut p = *params;
    let mut out = None;
    for _ in 0..=30 {
        let c = estimate_min_c(op, &p, pack, n_samples, seed)?;
        let done = !c.flagged;
        out = Some(CrossTermCalibration { delta_prime: p.delta_prime, c });
        if done {
            break;
        }
        p.delta_prime *= 0.5;
    }
    Ok(out.expect("at least one round"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(n: usize, k: usize, a: f64) -> SumOperator {
        SumOperator::new(n, k, a).unwrap()
    }

    fn pack() -> FalsifyPack {
        FalsifyPack::new(ConcavityParams::new(1, 0.5, 0.5, 0.5, 0.05, 64.0).unwrap())
    }

    #[test]
    fn zero_budget_and_wrong_order_rejected() {
        assert!(falsify(InequalityId::PairFirst, &op(3, 2, 1.0), &pack(), 0, 1).is_err());
        assert!(falsify(InequalityId::SnPsd, &op(3, 2, 1.0), &pack(), 10, 1).is_err());
        assert!(falsify(InequalityId::PinchedConcavity, &op(3, 2, 1.0), &pack(), 10, 1).is_err());
    }

    #[test]
    fn psd_campaign_holds_and_control_fails() {
        let o = op(3, 3, 1.0);
        let w = falsify(InequalityId::SnPsd, &o, &pack(), 2000, 7).unwrap();
        assert!(w.gap >= -1e-10, "{w:?}");
        let mut bad = pack();
        bad.negative_control = true;
        let w = falsify(InequalityId::SnPsd, &o, &bad, 2000, 7).unwrap();
        assert!(w.gap < 0.0);
    }

    #[test]
    fn campaigns_are_deterministic() {
        let o = op(4, 3, 1.0);
        let a = falsify(InequalityId::PairFirst, &o, &pack(), 1500, 3).unwrap();
        let b = falsify(InequalityId::PairFirst, &o, &pack(), 1500, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rounds, 1500);
    }

    #[test]
    fn polarization_recovers_minimum() {
        let t = Target::new(InequalityId::SnPsd, op(3, 3, 1.0), pack()).unwrap();
        let (xi, g) = t.xi_min(&[2.0, 1.0, 1.0]).unwrap();
        assert!((g.value - 1.0).abs() < 1e-12);
        assert!((xi[0] - xi[1]).abs() < 1e-12);
    }
}
