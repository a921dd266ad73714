use proptest::prelude::*;

use sumhess::concavity::{
    claim32_gap, lemma24_gaps, lemma31_residuals, lemma32_matrix, lemma33_gap, lemma34_gap, lemma41_gap,
    ConcavityParams,
};
use sumhess::cones::{in_gamma_k, in_gamma_tilde_k, newton_gap};
use sumhess::matrixcalc::{eigs, SymMatrix};
use sumhess::symfunc::{elem_sym, identity_residuals, Spectrum, SumOperator};

const ALPHAS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];

fn spectrum(n: std::ops::RangeInclusive<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    n.prop_flat_map(move |n| prop::collection::vec(lo..hi, n))
}

/// Strictly decreasing positive spectrum, which lies in every cone used here.
fn positive_sorted(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..1.0, n).prop_map(|steps| {
        let mut v: Vec<f64> = steps
            .iter()
            .rev()
            .scan(1.0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        v.reverse();
        v
    })
}

fn unit(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn doubled(xi: &[f64]) -> Vec<f64> {
    xi.iter().map(|x| 2.0 * x).collect()
}

fn assert_quadratic(g1: f64, g2: f64) -> Result<(), TestCaseError> {
    let err = (g2 - 4.0 * g1).abs() / g2.abs().max(1e-300);
    prop_assert!(g2 == 4.0 * g1 || err <= 1e-12, "gap(2xi) = {g2}, 4 gap(xi) = {}", 4.0 * g1);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn elem_sym_is_permutation_invariant(v in spectrum(2..=7, -3.0, 3.0), k in 0isize..8, rot in 0usize..7) {
        let k = k % (v.len() as isize + 1);
        let a = Spectrum::new(v.clone()).unwrap();
        let mut w = v.clone();
        w.rotate_left(rot % v.len());
        w.reverse();
        let b = Spectrum::new(w).unwrap();
        let (x, y) = (elem_sym(&a, k).unwrap(), elem_sym(&b, k).unwrap());
        prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn elem_sym_scales_with_degree(v in spectrum(2..=7, -3.0, 3.0), k in 0isize..8, c in 0.25f64..4.0) {
        let k = k % (v.len() as isize + 1);
        let a = Spectrum::new(v.clone()).unwrap();
        let b = Spectrum::new(v.iter().map(|x| c * x).collect()).unwrap();
        let want = c.powi(k as i32) * elem_sym(&a, k).unwrap();
        let got = elem_sym(&b, k).unwrap();
        let mag: f64 = v.iter().map(|x| (c * x).abs()).sum::<f64>().max(1.0).powi(k.max(0) as i32);
        prop_assert!((got - want).abs() <= 1e-12 * mag);
    }

    #[test]
    fn identities_hold_off_the_cone(v in spectrum(3..=6, -5.0, 5.0), ai in 0usize..4, kk in 0usize..6, zero in 0usize..6) {
        let mut v = v;
        let n = v.len();
        v[zero % n] = 0.0;
        let op = SumOperator::new(n, 1 + kk % n, ALPHAS[ai]).unwrap();
        let r = identity_residuals(&op, &Spectrum::new(v.clone()).unwrap());
        prop_assert!(r.iter().all(|x| *x <= 1e-10), "{r:?}");
        let l = Spectrum::new(v).unwrap();
        let r = lemma31_residuals(ALPHAS[ai], &l, 1, 1, n - 1).unwrap();
        prop_assert!(r.iter().all(|x| x.abs() <= 1e-10), "{r:?}");
    }

    #[test]
    fn cones_are_nested(v in spectrum(3..=6, -2.0, 5.0), ai in 0usize..4, kk in 1usize..6) {
        let n = v.len();
        let k = 1 + kk % n;
        let l = Spectrum::new(v).unwrap();
        let op = SumOperator::new(n, k, ALPHAS[ai]).unwrap();
        if in_gamma_k(&l, k) {
            prop_assert!(in_gamma_tilde_k(&op, &l));
        }
        if in_gamma_tilde_k(&op, &l) && k >= 2 {
            prop_assert!(in_gamma_k(&l, k - 1));
        }
        let scaled = Spectrum::new(l.values().iter().map(|x| 3.0 * x).collect()).unwrap();
        prop_assert_eq!(in_gamma_k(&l, k), in_gamma_k(&scaled, k));
    }

    #[test]
    fn newton_gap_nonnegative_on_cone(v in spectrum(3..=6, -1.0, 5.0), kk in 1usize..5) {
        let n = v.len();
        let k = 1 + kk % (n - 1);
        let l = Spectrum::new(v).unwrap();
        prop_assume!(in_gamma_k(&l, k));
        let (gap, _) = newton_gap(&l, k).unwrap();
        let sk = elem_sym(&l, k as isize).unwrap();
        prop_assert!(gap >= -1e-10 * sk * sk);
    }

    #[test]
    fn paired_gaps_are_quadratic(v in positive_sorted(4), w in unit(4), ai in 0usize..4) {
        let op = SumOperator::new(4, 3, ALPHAS[ai]).unwrap();
        let l = Spectrum::new(v).unwrap();
        let (a1, b1) = lemma24_gaps(&op, 1, &l, &w, 0.5).unwrap();
        let (a2, b2) = lemma24_gaps(&op, 1, &l, &doubled(&w), 0.5).unwrap();
        assert_quadratic(a1, a2)?;
        assert_quadratic(b1, b2)?;
    }

    #[test]
    fn cross_and_pinched_gaps_are_quadratic(v in positive_sorted(5), xi in unit(5), ai in 0usize..4) {
        let l = Spectrum::new(v).unwrap();
        let a = ALPHAS[ai];
        assert_quadratic(claim32_gap(&l, 2, a, &xi, 0.5, 1.0), claim32_gap(&l, 2, a, &doubled(&xi), 0.5, 1.0))?;
        let op = SumOperator::new(5, 4, a).unwrap();
        let p = ConcavityParams::new(2, 0.5, 0.5, 0.5, 0.05, 64.0).unwrap();
        assert_quadratic(lemma34_gap(&op, &p, &l, &xi).unwrap(), lemma34_gap(&op, &p, &l, &doubled(&xi)).unwrap())?;
    }

    #[test]
    fn full_order_gaps_are_quadratic(v in positive_sorted(4), xi in unit(4), ai in 0usize..4) {
        let l = Spectrum::new(v).unwrap();
        let a = ALPHAS[ai];
        assert_quadratic(
            lemma33_gap(a, &l, &xi, 64.0, 0.5).unwrap(),
            lemma33_gap(a, &l, &doubled(&xi), 64.0, 0.5).unwrap(),
        )?;
        let q = lemma32_matrix(a, &l).unwrap();
        let m = q.order();
        let form = |x: &[f64]| (0..m).map(|i| (0..m).map(|j| q.get(i, j) * x[i] * x[j]).sum::<f64>()).sum::<f64>();
        assert_quadratic(form(&xi[..m]), form(&doubled(&xi[..m])))?;
        let op = SumOperator::new(4, 3, a).unwrap();
        assert_quadratic(lemma41_gap(&op, &l, 1, &xi).unwrap(), lemma41_gap(&op, &l, 1, &doubled(&xi)).unwrap())?;
    }

    #[test]
    fn psd_survives_positive_scaling(v in positive_sorted(4), c in 0.2f64..5.0, ai in 0usize..4) {
        let a = ALPHAS[ai];
        let l = Spectrum::new(v.iter().map(|x| c * x).collect()).unwrap();
        let q = lemma32_matrix(a, &l).unwrap();
        let e = eigs(&q).unwrap();
        let min = e.spectrum().unwrap().values().iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-10 * q.frobenius());
    }

    #[test]
    fn eigs_reassembles(d in prop::collection::vec(-3.0f64..3.0, 10)) {
        let a = SymMatrix::from_rows(&[
            vec![d[0], d[1], d[2], d[3]],
            vec![d[1], d[4], d[5], d[6]],
            vec![d[2], d[5], d[7], d[8]],
            vec![d[3], d[6], d[8], d[9]],
        ]).unwrap();
        let e = eigs(&a).unwrap();
        let back = e.reassemble(e.spectrum().unwrap().values());
        let diff = back.add(&a.scaled(-1.0)).frobenius();
        prop_assert!(diff <= 1e-12 * a.frobenius().max(1.0));
    }
}
