use serde_json::{json, Value};

use super::{as_usage, Ctx, Outcome, RunConfig};
use crate::concavity::{
    estimate_cross_term, estimate_delta_prime, estimate_min_k, falsify, ConcavityParams, FalsifyPack,
    GapWitness, InequalityId,
};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::symfunc::SumOperator;

pub(super) fn defaults() -> Vec<(&'static str, Value)> {
    let all: Vec<&str> = InequalityId::ALL.iter().map(|i| i.name()).collect();
    vec![
        ("falsify.inequalities", json!(all)),
        ("falsify.budget", json!(10000)),
        ("falsify.n", json!(4)),
        ("falsify.k", json!(3)),
        ("falsify.alpha", json!(1.0)),
        ("falsify.l", json!(1)),
        ("falsify.epsilon", json!(0.5)),
        ("falsify.delta", json!(0.5)),
        ("falsify.delta0", json!(0.5)),
        ("falsify.delta_prime", json!(0.05)),
        ("falsify.k_of_eps", json!(64.0)),
        ("falsify.cross_c", json!(1.0)),
        ("falsify.cross_delta_prime", Value::Null),
        ("falsify.s_min", json!(0.1)),
        ("falsify.scale", json!(5.0)),
        ("falsify.top_scale", json!(1000.0)),
        ("falsify.local_iters", json!(200)),
        ("falsify.negative_control", json!(false)),
        ("falsify.calibrate", json!(true)),
        ("falsify.calibration_samples", json!(10000)),
    ]
}

const PASS_TOL: f64 = -1e-10;

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ")
}

pub(super) fn run(cfg: &mut RunConfig, ctx: &Ctx) -> Result<Outcome> {
    let ids: Vec<InequalityId> = cfg
        .str_list("falsify.inequalities")?
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    if ids.is_empty() {
        return Err(Error::Usage("falsify.inequalities is empty".into()));
    }
    let budget = cfg.usize("falsify.budget")?;
    let n = cfg.usize("falsify.n")?;
    let alpha = cfg.f64("falsify.alpha")?;
    let op = SumOperator::new(n, cfg.usize("falsify.k")?, alpha).map_err(as_usage)?;
    let full = SumOperator::new(n, n, alpha).map_err(as_usage)?;
    let mut params = ConcavityParams::new(
        cfg.usize("falsify.l")?,
        cfg.f64("falsify.epsilon")?,
        cfg.f64("falsify.delta")?,
        cfg.f64("falsify.delta0")?,
        cfg.f64("falsify.delta_prime")?,
        cfg.f64("falsify.k_of_eps")?,
    )
    .map_err(as_usage)?;
    let mut pack = FalsifyPack::new(params);
    pack.cross_c = cfg.f64("falsify.cross_c")?;
    pack.s_min = cfg.f64("falsify.s_min")?;
    pack.scale = cfg.f64("falsify.scale")?;
    pack.top_scale = cfg.f64("falsify.top_scale")?;
    pack.local_iters = cfg.usize("falsify.local_iters")?;
    pack.negative_control = cfg.bool("falsify.negative_control")?;
    let mut cross_dp = cfg.opt_f64("falsify.cross_delta_prime")?.unwrap_or(params.delta_prime);
    let calibrate = cfg.bool("falsify.calibrate")?;
    let cal_samples = cfg.usize("falsify.calibration_samples")?;
    if budget == 0 || (calibrate && cal_samples == 0) {
        return Err(Error::Usage("budget and calibration_samples must be positive".into()));
    }

    // Calibration draws from its own stream so the campaigns stay fresh.
    let cal_seed = ctx.seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut calibration = serde_json::Map::new();
    if calibrate {
        if ids.contains(&InequalityId::PinchedConcavity) || ids.contains(&InequalityId::CrossTerm) {
            params.check_against(&op).map_err(as_usage)?;
            let d = estimate_delta_prime(&op, &params, &pack, cal_samples, cal_seed).map_err(as_usage)?;
            params.delta_prime = d.value;
            calibration.insert("delta_prime".into(), serde_json::to_value(&d)?);
            if ids.contains(&InequalityId::CrossTerm) {
                let c = estimate_cross_term(&op, &params, &pack, cal_samples, cal_seed).map_err(as_usage)?;
                cross_dp = c.delta_prime;
                pack.cross_c = c.c.value;
                calibration.insert("cross_term".into(), serde_json::to_value(&c)?);
            }
        }
        if ids.contains(&InequalityId::SnConcavity) {
            let k = estimate_min_k(alpha, n, params.epsilon, &pack, cal_samples, cal_seed).map_err(as_usage)?;
            params.k_of_eps = k.value;
            calibration.insert("k_of_eps".into(), serde_json::to_value(&k)?);
        }
        cfg.set("falsify.delta_prime", json!(params.delta_prime));
        cfg.set("falsify.k_of_eps", json!(params.k_of_eps));
        cfg.set("falsify.cross_c", json!(pack.cross_c));
        cfg.set("falsify.cross_delta_prime", json!(cross_dp));
    }
    pack.params = params;

    let mut csv = String::from("inequality_id,gap,value,scale,rounds,violations,lambda,xi,params\n");
    let mut witnesses: Vec<GapWitness> = Vec::new();
    let mut pass = true;
    for id in &ids {
        let mut pk = pack;
        if *id == InequalityId::CrossTerm {
            pk.params.delta_prime = cross_dp;
        }
        let the_op = if id.needs_full_order() { full } else { op };
        let w = falsify(*id, &the_op, &pk, budget, ctx.seed).map_err(as_usage)?;
        let ok = w.gap >= PASS_TOL;
        pass &= ok;
        let p = &pk.params;
        let desc = format!(
            "n={} k={} alpha={} l={} epsilon={} delta={} delta0={} delta_prime={} K={} C={} negative_control={}",
            the_op.n,
            the_op.k,
            fmt_f64(the_op.alpha),
            p.l,
            fmt_f64(p.epsilon),
            fmt_f64(p.delta),
            fmt_f64(p.delta0),
            fmt_f64(p.delta_prime),
            fmt_f64(p.k_of_eps),
            fmt_f64(pk.cross_c),
            pk.negative_control
        );
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            id,
            fmt_f64(w.gap),
            fmt_f64(w.value),
            fmt_f64(w.scale),
            w.rounds,
            w.violations,
            join(w.lambda.values()),
            join(&w.xi),
            desc
        ));
        witnesses.push(w);
    }
    ctx.write("witnesses.csv", csv.as_bytes())?;
    let min_gap = witnesses.iter().map(|w| w.gap).fold(f64::INFINITY, f64::min);
    let report = json!({
        "config": cfg.to_json(),
        "calibration": calibration,
        "witnesses": witnesses,
        "min_gap": min_gap,
        "pass": pass,
    });
    ctx.write_json("report.json", &report)?;
    let worst = witnesses.iter().min_by(|a, b| a.gap.total_cmp(&b.gap)).expect("nonempty");
    Ok(Outcome {
        pass,
        summary: format!(
            "falsify: {} campaigns, min relative gap {} ({}), {}",
            witnesses.len(),
            fmt_f64(min_gap),
            worst.inequality_id,
            if pass { "PASS" } else { "FAIL: violation witness in witnesses.csv" }
        ),
    })
}
