use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{as_usage, Ctx, Outcome, RunConfig};
use crate::concavity::lemma31_residuals;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::symfunc::{derivative_identity_residuals, identity_residuals, Spectrum, SumOperator};

pub(super) fn defaults() -> Vec<(&'static str, Value)> {
    vec![
        ("identities.n_min", json!(3)),
        ("identities.n_max", json!(6)),
        ("identities.alphas", json!([0.0, 0.5, 1.0, 2.0])),
        ("identities.samples", json!(10000)),
        ("identities.scale", json!(5.0)),
        ("identities.tol", json!(1e-10)),
        // Test hook: flips the sign of the product term in the split identity.
        ("identities.fault_injection", json!(false)),
    ]
}

const SPLIT_NAMES: [&str; 3] = ["excluded_split", "excluded_sum", "weighted_sum"];
const PRODUCT_NAMES: [&str; 3] = ["product_first", "product_mixed", "product_top"];

#[derive(Clone, Copy, Debug)]
struct Worst {
    value: f64,
    n: usize,
    k: usize,
    alpha: f64,
}

impl Worst {
    fn none() -> Self {
        Worst { value: 0.0, n: 0, k: 0, alpha: 0.0 }
    }

    fn merge(self, o: Worst) -> Worst {
        if o.value > self.value {
            o
        } else {
            self
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Spectrum {
    let v = (0..n).map(|_| rng.gen_range(-scale..=scale)).collect();
    Spectrum::new(v).expect("finite")
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// `S_k − (−λ_1 S_{k-1}(λ|1)) − S_k(λ|1)`, relative.
fn faulted_split(op: &SumOperator, v: &[f64]) -> f64 {
    let k = op.k as isize;
    let sk = op.s_of(v, k);
    let term = v[0] * op.s_excl(v, k - 1, &[0]);
    let same = op.s_excl(v, k, &[0]);
    (sk + term - same).abs() / sk.abs().max(term.abs()).max(same.abs()).max(1.0)
}

pub(super) fn run(cfg: &mut RunConfig, ctx: &Ctx) -> Result<Outcome> {
    let n_min = cfg.usize("identities.n_min")?;
    let n_max = cfg.usize("identities.n_max")?;
    let alphas = cfg.f64_list("identities.alphas")?;
    let samples = cfg.usize("identities.samples")?;
    let scale = cfg.f64("identities.scale")?;
    let tol = cfg.f64("identities.tol")?;
    let fault = cfg.bool("identities.fault_injection")?;
    if n_min < 2 || n_min > n_max || n_max > 12 {
        return Err(Error::Usage(format!("need 2 <= n_min <= n_max <= 12, got {n_min}..{n_max}")));
    }
    if alphas.is_empty() || samples == 0 || !(scale > 0.0) {
        return Err(Error::Usage("alphas must be nonempty, samples and scale positive".into()));
    }

    let mut ops = Vec::new();
    for n in n_min..=n_max {
        for k in 1..=n {
            for &a in &alphas {
                ops.push(SumOperator::new(n, k, a).map_err(as_usage)?);
            }
        }
    }
    // Streams: split cases first, then the product cases.
    let split: Vec<[Worst; 5]> = ops
        .par_iter()
        .enumerate()
        .map(|(c, op)| {
            let mut rng = rng_for(ctx.seed, c as u64);
            let mut w = [Worst::none(); 5];
            let at = |value| Worst { value, n: op.n, k: op.k, alpha: op.alpha };
            for _ in 0..samples {
                let l = draw(&mut rng, op.n, scale);
                let mut r = identity_residuals(op, &l);
                if fault {
                    r[0] = faulted_split(op, l.values());
                }
                let d = derivative_identity_residuals(op, &l);
                for (slot, v) in w.iter_mut().zip(r.iter().chain(&d)) {
                    *slot = slot.merge(at(*v));
                }
            }
            w
        })
        .collect();
    let mut split_worst = [Worst::none(); 5];
    for w in &split {
        for i in 0..5 {
            split_worst[i] = split_worst[i].merge(w[i]);
        }
    }

    let product_cases: Vec<(usize, f64)> =
        (n_min.max(3)..=n_max).flat_map(|n| alphas.iter().map(move |&a| (n, a))).collect();
    let product: Vec<Result<[Worst; 3]>> = product_cases
        .par_iter()
        .enumerate()
        .map(|(c, &(n, alpha))| {
            let mut rng = rng_for(ctx.seed, (ops.len() + c) as u64);
            let mut w = [Worst::none(); 3];
            for _ in 0..samples {
                let l = draw(&mut rng, n, scale);
                let j = rng.gen_range(1..n);
                let p = rng.gen_range(1..n);
                let q = rng.gen_range(1..n - 1);
                let q = if q >= p { q + 1 } else { q };
                let r = lemma31_residuals(alpha, &l, j, p, q)?;
                for i in 0..3 {
                    w[i] = w[i].merge(Worst { value: r[i].abs(), n, k: n, alpha });
                }
            }
            Ok(w)
        })
        .collect();

    let mut csv = String::from("identity,scope,worst_residual,worst_n,worst_k,worst_alpha,samples,pass\n");
    let mut pass = true;
    let scope_all = format!("n={n_min}..{n_max}");
    let mut row = |name: &str, scope: &str, w: &Worst, count: usize| {
        let ok = w.value <= tol;
        pass &= ok;
        csv.push_str(&format!(
            "{name},{scope},{},{},{},{},{count},{ok}\n",
            fmt_f64(w.value),
            w.n,
            w.k,
            fmt_f64(w.alpha)
        ));
    };
    for i in 0..3 {
        row(SPLIT_NAMES[i], &scope_all, &split_worst[i], samples * ops.len());
    }
    let mut per_n: Vec<(usize, [Worst; 3])> = Vec::new();
    for (&(n, _), w) in product_cases.iter().zip(product) {
        let w = w?;
        match per_n.last_mut() {
            Some((m, acc)) if *m == n => {
                for i in 0..3 {
                    acc[i] = acc[i].merge(w[i]);
                }
            }
            _ => per_n.push((n, w)),
        }
    }
    for (n, w) in &per_n {
        for i in 0..3 {
            row(PRODUCT_NAMES[i], &format!("n={n}"), &w[i], samples * alphas.len());
        }
    }
    let deriv_ok = split_worst[3].value <= tol && split_worst[4].value <= tol;
    pass &= deriv_ok;
    ctx.write("report.csv", csv.as_bytes())?;
    let report = json!({
        "config": cfg.to_json(),
        "derivative_formulas": {
            "first_worst": split_worst[3].value,
            "second_worst": split_worst[4].value,
            "pass": deriv_ok,
        },
        "rows": 3 + 3 * per_n.len(),
        "pass": pass,
    });
    ctx.write_json("report.json", &report)?;
    let worst = split_worst.iter().map(|w| w.value).chain(per_n.iter().flat_map(|(_, w)| w.iter().map(|x| x.value))).fold(0.0, f64::max);
    Ok(Outcome { pass, summary: format!("identities: worst residual {} (tolerance {}), {}", fmt_f64(worst), fmt_f64(tol), if pass { "PASS" } else { "FAIL" }) })
}
