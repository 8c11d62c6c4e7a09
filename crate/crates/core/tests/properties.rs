//! Property tests for invariants of the estimators.

mod common;

use kinkpanel::binscatter::{bin_points, equal_count_sizes};
use kinkpanel::dgp::{simulate_panel, DgpConfig};
use kinkpanel::event_study::{fit_distributed_lag, DistributedLagSpec};
use kinkpanel::panel::{columns, standard_variables, PanelBuilder, PanelDataset};
use kinkpanel::regression::{
    cluster_covariance, fit_panel_model, fwl_residualize, ols_fit, ClusterIds, DesignMatrix, Regressor,
};
use kinkpanel::threshold::{default_controls, fit_threshold, ThresholdSpec};
use kinkpanel::within::{complete_cases, FeGroups, FixedEffectsSpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn fe_strategy() -> impl Strategy<Value = FixedEffectsSpec> {
    prop_oneof![Just(FixedEffectsSpec::TWO_WAY), Just(FixedEffectsSpec::ENTITY)]
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn simulated(seed: u64, n_entities: usize, n_years: usize) -> PanelDataset {
    let cfg = DgpConfig {
        n_entities,
        n_years,
        seed,
        ..Default::default()
    };
    standard_variables(&simulate_panel(&cfg).unwrap().data).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn demeaning_is_idempotent_and_orthogonal(seed in any::<u64>(), n_e in 2usize..30, n_t in 2usize..12, fe in fe_strategy()) {
        let d = common::random_panel(seed, n_e, n_t, 0.2);
        let rows = complete_cases(&[d.column("x1").unwrap()], d.n_rows());
        let g = FeGroups::new(&d, &rows, fe);
        let mut once: Vec<f64> = rows.iter().map(|&r| d.column("x1").unwrap()[r]).collect();
        g.demean(&mut once).unwrap();
        let mut twice = once.clone();
        g.demean(&mut twice).unwrap();
        let scale = once.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-9 * scale);
        }
        prop_assert!(g.max_group_mean(&once) <= 1e-9 * scale);
    }

    #[test]
    fn partialled_regression_matches_full_fit(seed in any::<u64>(), n_e in 3usize..30, n_t in 3usize..10, fe in fe_strategy()) {
        let d = common::random_panel(seed, n_e, n_t, 0.1);
        let regs = [Regressor::from_column(&d, "x1").unwrap(), Regressor::from_column(&d, "x2").unwrap()];
        let full = fit_panel_model(&d, "y", &regs, fe, None).unwrap();
        let res = fwl_residualize(&d, &["y", "x1"], &["x2"], fe).unwrap();
        let x = DesignMatrix::new(vec!["x1".into()], vec![res.column("x1").unwrap().to_vec()]).unwrap();
        let partial = ols_fit(x, res.column("y").unwrap()).unwrap();
        let (a, b) = (full.coefficient("x1"), partial.coefficient("x1"));
        prop_assert_eq!(a.is_some(), b.is_some());
        if let (Some(a), Some(b)) = (a, b) {
            prop_assert!(rel_gap(a, b) < 1e-8, "{} vs {}", a, b);
        }
        prop_assert!(rel_gap(full.ssr, partial.ssr) < 1e-8);
    }

    #[test]
    fn estimates_ignore_entity_order(seed in any::<u64>(), n_e in 3usize..25, n_t in 3usize..10) {
        let d = common::random_panel(seed, n_e, n_t, 0.1);
        let mut order: Vec<usize> = (0..d.n_entities()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        let mut b = PanelBuilder::new(["y", "x1", "x2"]);
        for (k, &e) in order.iter().enumerate() {
            for r in d.entity_rows(e) {
                let v = ["y", "x1", "x2"].map(|c| d.column(c).unwrap()[r]).to_vec();
                b.push(&format!("p{k:03}"), d.years()[r], v);
            }
        }
        let shuffled = b.build().unwrap();
        let fit = |d: &PanelDataset, names: [&str; 2]| {
            let regs: Vec<Regressor> = names.iter().map(|n| Regressor::from_column(d, n).unwrap()).collect();
            fit_panel_model(d, "y", &regs, FixedEffectsSpec::TWO_WAY, None).unwrap()
        };
        let a = fit(&d, ["x1", "x2"]);
        let b = fit(&shuffled, ["x2", "x1"]);
        for name in ["x1", "x2"] {
            match (a.coefficient(name), b.coefficient(name)) {
                (Some(p), Some(q)) => prop_assert!(rel_gap(p, q) < 1e-9),
                (p, q) => prop_assert_eq!(p.is_some(), q.is_some()),
            }
        }
    }

    #[test]
    fn regime_form_spans_the_same_model(seed in 0u64..1000, gamma in 0.3f64..0.7) {
        let d = simulated(seed, 40, 12);
        let spec = ThresholdSpec::standard().with_gamma(gamma).with_controls(default_controls());
        let Ok(tf) = fit_threshold(&d, &spec) else { return Ok(()) };
        let s = d.column(columns::SHARE).unwrap();
        let above: Vec<f64> = s.iter().map(|v| if *v > gamma { 1.0 } else if v.is_nan() { f64::NAN } else { 0.0 }).collect();
        let mut regs = vec![
            Regressor::new("low", s.iter().zip(&above).map(|(v, a)| v * (1.0 - a)).collect()),
            Regressor::new("high", s.iter().zip(&above).map(|(v, a)| v * a).collect()),
            Regressor::new("jump", above.clone()),
        ];
        for c in default_controls() {
            regs.push(Regressor::from_column(&d, &c).unwrap());
        }
        let alt = fit_panel_model(&d, columns::LOG_SPEND, &regs, FixedEffectsSpec::TWO_WAY, None).unwrap();
        prop_assert_eq!(alt.n_obs, tf.fit.n_obs);
        let scale = tf.fit.residuals.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in alt.residuals.iter().zip(&tf.fit.residuals) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
        prop_assert!(rel_gap(alt.coefficient("high").unwrap(), tf.beta_nonagr.estimate) < 1e-7);
        prop_assert!(rel_gap(alt.coefficient("low").unwrap(), tf.beta_land.estimate) < 1e-7);
        prop_assert!(rel_gap(tf.beta_nonagr.estimate, tf.beta_land.estimate + tf.slope_change.estimate) < 1e-12);
    }

    #[test]
    fn response_is_continuous_without_jump(seed in 0u64..1000, gamma in 0.3f64..0.7) {
        let d = simulated(seed, 40, 12);
        let spec = ThresholdSpec::standard().with_gamma(gamma).without_jump();
        let Ok(tf) = fit_threshold(&d, &spec) else { return Ok(()) };
        prop_assert!(tf.jump.is_none());
        prop_assert!(tf.fit.index(&spec.jump_name()).is_none());
        let eps = 1e-9;
        prop_assert!((tf.share_response(gamma + eps) - tf.share_response(gamma - eps)).abs() < 1e-8);
    }

    #[test]
    fn rescaling_votes_leaves_share_effects_unchanged(seed in 0u64..1000, k in -6i32..6) {
        let raw = simulate_panel(&DgpConfig { n_entities: 40, n_years: 12, seed, ..Default::default() }).unwrap().data;
        let f = 2f64.powi(k);
        let mut scaled = raw.clone();
        for c in [columns::VOTES_NONAGR, columns::VOTES_LAND] {
            let v = raw.column(c).unwrap().iter().map(|x| x * f).collect();
            scaled = scaled.with_column(c, v, "scaled").unwrap();
        }
        let (a, b) = (standard_variables(&raw).unwrap().0, standard_variables(&scaled).unwrap().0);
        prop_assert_eq!(a.column(columns::SHARE).unwrap().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                        b.column(columns::SHARE).unwrap().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        let spec = ThresholdSpec::standard().with_controls(default_controls());
        let (Ok(fa), Ok(fb)) = (fit_threshold(&a, &spec), fit_threshold(&b, &spec)) else { return Ok(()) };
        prop_assert!(rel_gap(fa.beta_land.estimate, fb.beta_land.estimate) < 1e-9);
        prop_assert!(rel_gap(fa.beta_nonagr.estimate, fb.beta_nonagr.estimate) < 1e-9);
        prop_assert!(rel_gap(fa.beta_nonagr.se, fb.beta_nonagr.se) < 1e-8);
        let va = fa.fit.coefficient(columns::VOTES_NONAGR).unwrap();
        let vb = fb.fit.coefficient(columns::VOTES_NONAGR).unwrap();
        prop_assert!((va - vb * f).abs() <= 1e-8 * va.abs().max(1e-12));
    }

    #[test]
    fn bins_partition_the_sample(n in 2usize..500, k in 2usize..50, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let sizes = equal_count_sizes(n, k);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..20) as f64 / 20.0).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let bins = bin_points(&x, &y, k).unwrap();
        let weighted = |f: fn(&kinkpanel::binscatter::Bin) -> f64| {
            bins.iter().map(|b| f(b) * b.count as f64).sum::<f64>() / n as f64
        };
        prop_assert!((weighted(|b| b.x_mean) - x.iter().sum::<f64>() / n as f64).abs() < 1e-12);
        prop_assert!((weighted(|b| b.y_mean) - y.iter().sum::<f64>() / n as f64).abs() < 1e-12);
        prop_assert!(bins.windows(2).all(|w| w[0].x_mean <= w[1].x_mean + 1e-12));
    }

    #[test]
    fn cluster_covariance_matches_dense_formula(seed in any::<u64>(), g in 3usize..15, per in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = g * per;
        let ids: Vec<usize> = (0..n).map(|i| i % g).collect();
        let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|i| rng.sample::<f64, _>(StandardNormal) + ids[i] as f64 * 0.1).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.0 + x1[i] - x2[i] + rng.sample::<f64, _>(StandardNormal)).collect();
        let cols = vec![vec![1.0; n], x1.clone(), x2.clone()];
        let fit = ols_fit(DesignMatrix::new(vec!["c".into(), "x1".into(), "x2".into()], cols.clone()).unwrap(), &y).unwrap();
        let v = cluster_covariance(&fit, &ClusterIds::from_codes(&ids)).unwrap();

        let xm = DMatrix::from_fn(n, 3, |r, c| cols[c][r]);
        let yv = DVector::from_vec(y.clone());
        let bread = (xm.transpose() * &xm).try_inverse().unwrap();
        let beta = &bread * xm.transpose() * &yv;
        let u = &yv - &xm * &beta;
        let mut meat = DMatrix::<f64>::zeros(3, 3);
        for c in 0..g {
            let mut s = DVector::<f64>::zeros(3);
            for r in (0..n).filter(|&r| ids[r] == c) {
                s += xm.row(r).transpose() * u[r];
            }
            meat += &s * s.transpose();
        }
        let adj = (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / (n - 3) as f64);
        let oracle = &bread * meat * &bread * adj;
        for i in 0..3 {
            prop_assert!(rel_gap(fit.coefficients[i], beta[i]) < 1e-9);
            for j in 0..3 {
                let scale = oracle[(i, i)].max(oracle[(j, j)]);
                prop_assert!((v.matrix[i][j] - oracle[(i, j)]).abs() <= 1e-9 * scale.max(1e-300));
            }
        }
        prop_assert_eq!(v.cluster_count, Some(g));
    }

    #[test]
    fn lags_shrink_the_sample_to_complete_histories(seed in 0u64..1000, gap in 0.0f64..0.2) {
        let cfg = DgpConfig { n_entities: 30, n_years: 12, gap_rate: gap, seed, ..Default::default() };
        let d = standard_variables(&simulate_panel(&cfg).unwrap().data).unwrap().0;
        let share = d.column(columns::SHARE).unwrap();
        let y = d.column(columns::LOG_SPEND).unwrap();
        let mut last = usize::MAX;
        for lags in 0..4usize {
            let spec = DistributedLagSpec::new(columns::LOG_SPEND, columns::SHARE, 0, lags);
            let Ok(fit) = fit_distributed_lag(&d, &spec) else { break };
            let expected = (0..d.n_rows())
                .filter(|&r| {
                    let e = d.row_entities()[r];
                    !y[r].is_nan()
                        && (0..=lags).all(|j| {
                            d.row_of(e, d.years()[r] - j as i64).is_some_and(|q| !share[q].is_nan())
                        })
                })
                .count();
            prop_assert_eq!(fit.fit.n_obs, expected);
            prop_assert!(fit.fit.n_obs <= last);
            last = fit.fit.n_obs;
        }
    }
}
