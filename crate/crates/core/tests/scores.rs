use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use wxverify::mvscores::{energy_score, tw_energy_score, variogram_score, VariogramSpec};
use wxverify::uniscores::{crps, crps_ensemble, crps_normal, crps_numeric, owcrps, owcrps_bs, twcrps, vrcrps};
use wxverify::weight::weighted_cdf;
use wxverify::{ChainingFunction, Error, Forecast, MvEnsemble, WeightFunction};

/// Exact `∫ (F(z) - 1{y ≤ z})² 1{z > t} dz` for an ensemble: the integrand is
/// piecewise constant between the sorted members, `y` and `t`.
fn tw_integral(members: &[f64], y: f64, t: f64) -> f64 {
    let m = members.len() as f64;
    let mut knots: Vec<f64> = members.iter().copied().chain([y, t]).filter(|k| k.is_finite()).collect();
    knots.sort_by(f64::total_cmp);
    knots
        .windows(2)
        .map(|k| {
            let (a, b) = (k[0].max(t), k[1]);
            if b <= a {
                return 0.0;
            }
            let mid = 0.5 * (a + b);
            let f = members.iter().filter(|&&x| x <= mid).count() as f64 / m;
            let h = if y <= mid { 1.0 } else { 0.0 };
            (f - h).powi(2) * (b - a)
        })
        .sum()
}

fn members() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 2..25)
}

fn weights() -> impl Strategy<Value = WeightFunction> {
    let t = -3.0f64..3.0;
    let s = 0.3f64..3.0;
    prop_oneof![
        Just(WeightFunction::Constant),
        t.clone().prop_map(|threshold| WeightFunction::IndicatorAbove { threshold }),
        t.clone().prop_map(|threshold| WeightFunction::IndicatorBelow { threshold }),
        (t.clone(), s.clone()).prop_map(|(mu, sigma)| WeightFunction::GaussPdf { mu, sigma }),
        (t.clone(), s.clone()).prop_map(|(mu, sigma)| WeightFunction::OneMinusGaussPdfRatio { mu, sigma }),
        (t.clone(), s.clone()).prop_map(|(mu, sigma)| WeightFunction::GaussCdf { mu, sigma }),
        (t, s).prop_map(|(mu, sigma)| WeightFunction::OneMinusGaussCdf { mu, sigma }),
    ]
}

#[test]
fn crps_normal_matches_closed_form_and_quadrature() {
    assert_abs_diff_eq!(crps_normal(0.0, 1.0, 0.0).unwrap().value, 0.233_694_977_3, epsilon = 1e-10);
    for &(mu, sigma, y) in &[(0.0, 1.0, 1.3), (2.0, 0.5, -1.0), (-4.0, 3.0, -4.5)] {
        let f = Forecast::normal(mu, sigma * sigma).unwrap();
        assert_abs_diff_eq!(crps(&f, y).unwrap().value, crps_normal(mu, sigma, y).unwrap().value, epsilon = 1e-9);
        assert_abs_diff_eq!(crps_numeric(&f, y).unwrap().value, crps_normal(mu, sigma, y).unwrap().value, epsilon = 1e-8);
    }
}

#[test]
fn crps_logistic_golden() {
    let f = Forecast::logistic(0.0, 1.0).unwrap();
    assert_abs_diff_eq!(crps(&f, 0.0).unwrap().value, 2.0 * std::f64::consts::LN_2 - 1.0, epsilon = 1e-9);
}

#[test]
fn owcrps_needs_a_parametric_forecast() {
    let ens = Forecast::ensemble(vec![20.0, 26.0, 28.0]).unwrap();
    assert!(matches!(owcrps(&ens, 27.0, &WeightFunction::IndicatorAbove { threshold: 25.0 }), Err(Error::Unsupported(_))));
    assert!(matches!(owcrps_bs(&ens, 27.0, 25.0), Err(Error::Unsupported(_))));
}

#[test]
fn owcrps_with_constant_weight_is_crps() {
    let f = Forecast::student_t(5.0, 1.0, 2.0).unwrap();
    for y in [-3.0, 0.5, 4.0] {
        assert_abs_diff_eq!(owcrps(&f, y, &WeightFunction::Constant).unwrap().value, crps(&f, y).unwrap().value, epsilon = 1e-8);
    }
}

#[test]
fn univariate_energy_score_is_crps() {
    let x = [1.0, -0.5, 2.5, 0.3, 0.0];
    let ens = MvEnsemble::from_rows(&[x.to_vec()]).unwrap();
    assert_abs_diff_eq!(energy_score(&ens, &[0.7]).unwrap().value, crps_ensemble(&x, 0.7).unwrap().value, epsilon = 1e-12);
}

#[test]
fn perfect_degenerate_ensemble_scores_zero() {
    let y = [3.0, -1.0, 0.5];
    let ens = MvEnsemble::from_members(&[y.to_vec(), y.to_vec()]).unwrap();
    assert_eq!(energy_score(&ens, &y).unwrap().value, 0.0);
    assert_eq!(variogram_score(&ens, &y, &VariogramSpec::with_order(0.5)).unwrap().value, 0.0);
}

proptest! {
    #[test]
    fn ensemble_crps_equals_integral(x in members(), y in -12.0f64..12.0) {
        let got = crps_ensemble(&x, y).unwrap().value;
        prop_assert!((got - tw_integral(&x, y, f64::NEG_INFINITY)).abs() < 1e-9 * (1.0 + got));
    }

    #[test]
    fn censored_twcrps_equals_threshold_integral(x in members(), y in -12.0f64..12.0, t in -5.0f64..5.0) {
        let f = Forecast::ensemble(x.clone()).unwrap();
        let got = twcrps(&f, y, &ChainingFunction::CensorAbove { threshold: t }).unwrap().value;
        prop_assert!((got - tw_integral(&x, y, t)).abs() < 1e-9 * (1.0 + got), "{} vs {}", got, tw_integral(&x, y, t));
    }

    #[test]
    fn identity_chaining_and_unit_weight_recover_crps(x in members(), y in -12.0f64..12.0, x0 in -5.0f64..5.0) {
        let f = Forecast::ensemble(x.clone()).unwrap();
        let c = crps_ensemble(&x, y).unwrap().value;
        prop_assert!((twcrps(&f, y, &ChainingFunction::Identity).unwrap().value - c).abs() < 1e-9);
        prop_assert!((vrcrps(&f, y, &WeightFunction::Constant, x0).unwrap().value - c).abs() < 1e-9);
    }

    #[test]
    fn scores_are_nonnegative(x in members(), y in -12.0f64..12.0, w in weights()) {
        let f = Forecast::ensemble(x).unwrap();
        if let Some(v) = ChainingFunction::for_weight(&w) {
            prop_assert!(twcrps(&f, y, &v).unwrap().value >= 0.0);
        }
        prop_assert!(vrcrps(&f, y, &w, 0.0).unwrap().value >= 0.0);
    }

    #[test]
    fn weights_are_nonnegative_and_bounded(w in weights(), z in -20.0f64..20.0) {
        let v = w.at(z);
        let density = matches!(w, WeightFunction::GaussPdf { .. });
        prop_assert!(v >= 0.0);
        prop_assert!(density || v <= 1.0);
    }

    #[test]
    fn chaining_derivative_is_the_weight(w in weights(), z in -6.0f64..6.0) {
        let v = ChainingFunction::for_weight(&w).unwrap();
        if !w.is_binary() {
            let h = 1e-5;
            let slope = (v.apply(z + h) - v.apply(z - h)) / (2.0 * h);
            prop_assert!((slope - w.at(z)).abs() < 1e-6, "{} vs {}", slope, w.at(z));
        }
        prop_assert!(v.apply(z + 0.5) >= v.apply(z));
    }

    #[test]
    fn weighted_cdf_is_monotone(mu in -2.0f64..2.0, sd in 0.5f64..2.0, w in weights(), a in -4.0f64..4.0, step in 0.0f64..3.0) {
        let f = Forecast::normal(mu, sd * sd).unwrap();
        if let (Ok(lo), Ok(hi)) = (weighted_cdf(&f, &w, a), weighted_cdf(&f, &w, a + step)) {
            prop_assert!(lo <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&lo));
        }
    }

    #[test]
    fn twes_censoring_matches_chained_members(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 2), y in prop::collection::vec(-5.0f64..5.0, 2), t in -2.0f64..2.0) {
        let ens = MvEnsemble::from_rows(&rows).unwrap();
        let v = ChainingFunction::CensorAbove { threshold: t };
        let chained = ens.map_members(|m| m.iter().map(|z| z.max(t)).collect()).unwrap();
        let yc: Vec<f64> = y.iter().map(|z| z.max(t)).collect();
        let got = tw_energy_score(&ens, &y, &v).unwrap().value;
        prop_assert!((got - energy_score(&chained, &yc).unwrap().value).abs() < 1e-12);
    }
}
