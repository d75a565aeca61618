use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wxverify::calibration::{cpit, pit, rank, HistogramSummary};
use wxverify::heat::HeatThresholds;
use wxverify::postprocess::{
    ecc_levels, ecc_reorder, fit_climatology, fit_emos, lapse_rate_correct, predict_emos, smooth_ensemble, StationMeta,
    TrainingCase, TrainingWindow,
};
use wxverify::{Forecast, MvEnsemble};

#[test]
fn pit_of_normal_is_its_cdf() {
    let f = Forecast::normal(1.0, 4.0).unwrap();
    assert_abs_diff_eq!(pit(&f, 1.0).unwrap().u, 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(pit(&f, 1.0 + 2.0 * 1.959_963_984_540_054).unwrap().u, 0.975, epsilon = 1e-12);
}

#[test]
fn cpit_rescales_the_upper_tail() {
    let f = Forecast::normal(0.0, 1.0).unwrap();
    // F(1) = 0.841344746..., F(0) = 0.5, so (F(1) - F(0)) / (1 - F(0)).
    assert_abs_diff_eq!(cpit(&f, 1.0, 0.0).unwrap().unwrap().u, 0.682_689_492_137_086, epsilon = 1e-12);
    assert!(cpit(&f, -1.0, 0.0).unwrap().is_none());
}

#[test]
fn cpit_needs_ten_exceeding_members() {
    let few = Forecast::ensemble((0..20).map(f64::from).collect()).unwrap();
    assert!(cpit(&few, 15.0, 10.5).is_err());
    assert!(cpit(&few, 15.0, 9.5).unwrap().is_some());
}

#[test]
fn rank_ignores_seed_without_ties() {
    let x = [0.1, 0.5, 0.9];
    assert_eq!(rank(&x, -1.0, 1).unwrap(), 1);
    assert_eq!(rank(&x, 0.7, 2).unwrap(), 3);
    assert_eq!(rank(&x, 2.0, 3).unwrap(), 4);
}

#[test]
fn heat_levels_follow_day_counts() {
    let h = HeatThresholds::default();
    let level = |t: [f64; 3]| h.classify(&t).unwrap().get();
    assert_eq!(level([20.0, 24.9, 22.0]), 1);
    assert_eq!(level([25.0, 24.0, 26.0]), 2);
    assert_eq!(level([25.0, 26.0, 28.0]), 3);
    assert_eq!(level([27.0, 27.5, 30.0]), 4);
}

#[test]
fn lapse_rate_warms_a_high_model_surface() {
    assert_abs_diff_eq!(lapse_rate_correct(10.0, 600.0, 400.0).unwrap(), 11.2, epsilon = 1e-12);
}

#[test]
fn emos_recovers_a_known_model() {
    let meta = StationMeta::new("X", 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = Normal::new(0.0f64, 1.0).unwrap();
    let cases: Vec<TrainingCase> = (0..3000)
        .map(|_| {
            let mean = 20.0 + 4.0 * n.sample(&mut rng);
            let var = 0.5 + 2.0 * n.sample(&mut rng).abs();
            // Truth: N(1 + 0.9 mean, 0.4 + 0.8 var).
            let obs = 1.0 + 0.9 * mean + (0.4 + 0.8 * var).sqrt() * n.sample(&mut rng);
            TrainingCase::new(mean, var, &meta, obs)
        })
        .collect();
    let fit = fit_emos(&TrainingWindow::from_cases(cases), None).unwrap();
    let p = &fit.params;
    assert_abs_diff_eq!(p.beta[0], 1.0, epsilon = 0.3);
    assert_abs_diff_eq!(p.beta[1], 0.9, epsilon = 0.02);
    assert_abs_diff_eq!(p.sigma0, 0.4, epsilon = 0.2);
    assert_abs_diff_eq!(p.sigma1, 0.8, epsilon = 0.15);
    let f = predict_emos(p, 20.0, 1.0, &meta).unwrap();
    assert_abs_diff_eq!(f.mean().unwrap(), p.beta[0] + 20.0 * p.beta[1], epsilon = 1e-12);
}

#[test]
fn climatology_and_smoothing_use_sample_variance() {
    let h = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
    let f = fit_climatology(&h).unwrap();
    assert_abs_diff_eq!(f.mean().unwrap(), 5.5, epsilon = 1e-12);
    assert_abs_diff_eq!(f.variance().unwrap(), 55.0 / 6.0, epsilon = 1e-12);
    assert!(fit_climatology(&h[..9]).is_err());
    assert!(smooth_ensemble(&[1.0]).is_err());
    assert_abs_diff_eq!(smooth_ensemble(&[1.0, 3.0]).unwrap().variance().unwrap(), 2.0, epsilon = 1e-12);
}

proptest! {
    #[test]
    fn rank_is_in_range(x in prop::collection::vec(-3.0f64..3.0, 1..30), y in -4.0f64..4.0, seed in any::<u64>()) {
        let r = rank(&x, y, seed).unwrap();
        prop_assert!((1..=x.len() + 1).contains(&r));
        prop_assert!(r > x.iter().filter(|&&v| v < y).count());
        prop_assert!(r <= x.iter().filter(|&&v| v <= y).count() + 1);
    }

    #[test]
    fn histogram_frequencies_sum_to_one(u in prop::collection::vec(0.0f64..=1.0, 1..200), bins in 1usize..30) {
        let h = HistogramSummary::from_unit_values(u.iter().copied(), bins).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<u64>(), u.len() as u64);
        prop_assert!((h.frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(h.reliability_index >= 0.0);
    }

    #[test]
    fn ecc_keeps_marginals_and_raw_ranks(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 7), 1..4)) {
        let raw = MvEnsemble::from_rows(&rows).unwrap();
        let marginals: Vec<Forecast> = (0..raw.dim()).map(|k| Forecast::normal(k as f64, 1.0 + k as f64).unwrap()).collect();
        let out = ecc_reorder(&marginals, &raw).unwrap();
        for (k, f) in marginals.iter().enumerate() {
            let comp = out.component(k);
            let mut sorted = comp.clone();
            sorted.sort_by(f64::total_cmp);
            let expected: Vec<f64> = ecc_levels(7).iter().map(|&p| f.quantile(p).unwrap()).collect();
            prop_assert_eq!(sorted, expected);
            let r = raw.component(k);
            for i in 0..7 {
                for j in 0..7 {
                    if r[i] < r[j] {
                        prop_assert!(comp[i] < comp[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn training_window_keeps_the_latest_days(days in 1usize..10, pushes in 1usize..25) {
        let meta = StationMeta::new("X", 0.0, 0.0);
        let mut w = TrainingWindow::new(days);
        let d0 = chrono::NaiveDate::from_ymd_opt(2020, 6, 1).unwrap();
        for i in 0..pushes {
            w.push_day(d0 + chrono::Days::new(i as u64), vec![TrainingCase::new(i as f64, 1.0, &meta, 0.0)]).unwrap();
        }
        prop_assert_eq!(w.days(), pushes.min(days));
        let first = w.cases().next().unwrap().ens_mean;
        prop_assert_eq!(first, (pushes - pushes.min(days)) as f64);
    }
}
