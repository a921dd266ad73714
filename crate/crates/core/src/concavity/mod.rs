//! Concavity inequalities for `S_k` and `S_n`: pointwise gap evaluators, a
//! seeded falsification search, and grid calibration of the existential
//! constants (`δ′`, `K(ε)`, the cross-term constant `C`).

mod gaps;
mod search;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::symfunc::{Spectrum, SumOperator};

pub use gaps::{
    claim32_gap, lemma24_gaps, lemma31_residuals, lemma32_matrix, lemma33_gap, lemma34_gap,
    lemma34_hypothesis, lemma41_gap, remark31_matrix, Gap,
};
pub use search::{
    estimate_cross_term, estimate_delta_prime, estimate_min_c, estimate_min_k, falsify, Calibration,
    CrossTermCalibration, FalsifyPack,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcavityParams {
    pub l: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub delta0: f64,
    pub delta_prime: f64,
    pub k_of_eps: f64,
}

impl ConcavityParams {
    pub fn new(l: usize, epsilon: f64, delta: f64, delta0: f64, delta_prime: f64, k_of_eps: f64) -> Result<Self> {
        for (name, v) in [("epsilon", epsilon), ("delta", delta), ("delta0", delta0)] {
            if !(v > 0.0 && v < 1.0) {
                return domain(format!("{name} = {v} must lie in (0, 1)"));
            }
        }
        if !(delta_prime > 0.0 && delta_prime.is_finite()) {
            return domain(format!("delta_prime = {delta_prime} must be positive"));
        }
        if !(k_of_eps > 0.0 && k_of_eps.is_finite()) {
            return domain(format!("K = {k_of_eps} must be positive"));
        }
        if l < 1 {
            return domain("l must be at least 1");
        }
        Ok(ConcavityParams { l, epsilon, delta, delta0, delta_prime, k_of_eps })
    }

    /// `1 ≤ l ≤ k − 2`, needed by the pinched inequality and the cross term.
    pub fn check_against(&self, op: &SumOperator) -> Result<()> {
        if self.l + 2 > op.k {
            return domain(format!("need 1 <= l <= k - 2, got l = {}, k = {}", self.l, op.k));
        }
        Ok(())
    }

    pub fn vartheta(&self, op: &SumOperator) -> Result<f64> {
        op.vartheta(self.l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityId {
    /// First display of the paired `S_k`/`S_l` inequality.
    PairFirst,
    /// Second display, with `δ`.
    PairSecond,
    /// Cross-term estimate for `S_l` with constant `C`.
    CrossTerm,
    /// Concavity of `S_k` under the pinching hypothesis.
    PinchedConcavity,
    /// Positive semidefiniteness of the `S_n` form with `σ_{n-3}` off-diagonal.
    SnPsd,
    /// The entrywise-squared companion form.
    SnPsdSquared,
    /// `S_n` concavity with the constant `K(ε)`.
    SnConcavity,
    /// Third-order terms of the perturbed test function.
    PerturbedThirdOrder,
}

impl InequalityId {
    pub const ALL: [InequalityId; 8] = [
        InequalityId::PairFirst,
        InequalityId::PairSecond,
        InequalityId::CrossTerm,
        InequalityId::PinchedConcavity,
        InequalityId::SnPsd,
        InequalityId::SnPsdSquared,
        InequalityId::SnConcavity,
        InequalityId::PerturbedThirdOrder,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InequalityId::PairFirst => "pair_first",
            InequalityId::PairSecond => "pair_second",
            InequalityId::CrossTerm => "cross_term",
            InequalityId::PinchedConcavity => "pinched_concavity",
            InequalityId::SnPsd => "sn_psd",
            InequalityId::SnPsdSquared => "sn_psd_squared",
            InequalityId::SnConcavity => "sn_concavity",
            InequalityId::PerturbedThirdOrder => "perturbed_third_order",
        }
    }

    /// The `S_n` inequalities need `k = n`.
    pub fn needs_full_order(&self) -> bool {
        matches!(self, InequalityId::SnPsd | InequalityId::SnPsdSquared | InequalityId::SnConcavity)
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InequalityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InequalityId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = InequalityId::ALL.iter().map(|i| i.name()).collect();
                Error::Usage(format!("unknown inequality id {s:?}; known: {}", known.join(", ")))
            })
    }
}

/// Most negative relative gap found by a campaign, with its witness.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapWitness {
    pub inequality_id: InequalityId,
    #[serde(serialize_with = "ser_spectrum")]
    pub lambda: Spectrum,
    pub xi: Vec<f64>,
    /// `value / scale`.
    pub gap: f64,
    pub value: f64,
    pub scale: f64,
    pub rounds: usize,
    /// Rounds whose sampled relative gap fell below `−1e−10`.
    pub violations: usize,
}

fn ser_spectrum<S: serde::Serializer>(s: &Spectrum, ser: S) -> std::result::Result<S::Ok, S::Error> {
    s.values().serialize(ser)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in InequalityId::ALL {
            assert_eq!(id.name().parse::<InequalityId>().unwrap(), id);
        }
        assert!(matches!("nope".parse::<InequalityId>(), Err(Error::Usage(_))));
    }

    #[test]
    fn params_ranges() {
        assert!(ConcavityParams::new(1, 0.5, 0.5, 0.5, 0.1, 1.0).is_ok());
        assert!(ConcavityParams::new(1, 1.0, 0.5, 0.5, 0.1, 1.0).is_err());
        assert!(ConcavityParams::new(0, 0.5, 0.5, 0.5, 0.1, 1.0).is_err());
        assert!(ConcavityParams::new(1, 0.5, 0.5, 0.5, 0.0, 1.0).is_err());
        let p = ConcavityParams::new(2, 0.5, 0.5, 0.5, 0.1, 1.0).unwrap();
        assert!(p.check_against(&SumOperator::new(5, 3, 1.0).unwrap()).is_err());
        assert!(p.check_against(&SumOperator::new(5, 4, 1.0).unwrap()).is_ok());
    }
}
