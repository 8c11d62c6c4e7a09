//! Monte Carlo runs: simulate, estimate, aggregate.
//!
//! Replication `r` simulates from stream `r` of the run seed, so reports do
//! not depend on how replications are scheduled across threads.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{simulate_panel_stream, DgpConfig};
use crate::error::{Error, Result};
use crate::event_study::{
    cumulative_effects, fit_distributed_lag, fit_regime_distributed_lag, pretrend_test, DistributedLagSpec,
    Regime,
};
use crate::panel::{columns, standard_variables, PanelDataset};
use crate::regression::wald_test;
use crate::threshold::{
    bootstrap_linearity_test, default_controls, estimate_threshold, fit_threshold, regime_difference_test,
    GridSpec, ThresholdSpec, DEFAULT_TRIM,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub trim: f64,
    pub grid: GridSpec,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            trim: DEFAULT_TRIM,
            grid: GridSpec::default(),
        }
    }
}

fn default_true() -> bool {
    true
}

/// What each replication estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    /// Threshold model at a fixed split, optionally also searching for it.
    Threshold {
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default = "default_true")]
        include_jump: bool,
        #[serde(default = "default_controls")]
        controls: Vec<String>,
        #[serde(default)]
        search: Option<SearchSpec>,
        #[serde(default)]
        regime_test: bool,
    },
    /// Bootstrap sup-F test of linearity.
    Linearity {
        search: SearchSpec,
        replications: usize,
    },
    /// Linear distributed-lag model; tests all leads jointly.
    DistributedLag {
        n_leads: usize,
        n_lags: usize,
        #[serde(default)]
        controls: Vec<String>,
    },
    /// Regime distributed-lag model with a pretrend test.
    RegimeDistributedLag {
        gamma: f64,
        n_lags: usize,
        #[serde(default)]
        pretrend_leads: usize,
        #[serde(default)]
        controls: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Draw {
    pub name: String,
    pub truth: f64,
    pub estimate: f64,
    pub se: Option<f64>,
    /// Interval coverage when the interval is not `estimate ± 1.96 se`.
    pub covered: Option<bool>,
}

impl Draw {
    fn normal(name: &str, truth: f64, estimate: f64, se: f64) -> Self {
        Draw {
            name: name.into(),
            truth,
            estimate,
            se: Some(se),
            covered: None,
        }
    }

    fn covers(&self) -> Option<bool> {
        self.covered.or_else(|| {
            self.se
                .map(|s| (self.estimate - 1.96 * s) <= self.truth && self.truth <= self.estimate + 1.96 * s)
        })
    }
}

/// Everything one replication produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Replication {
    pub draws: Vec<Draw>,
    /// Test name and p-value.
    pub tests: Vec<(String, f64)>,
    pub metrics: Vec<(String, f64)>,
}

/// Seed for auxiliary randomness (bootstrap) in replication `r`.
pub fn replication_seed(seed: u64, r: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b007_5eed_b007);
    rng.set_stream(r);
    rng.next_u64()
}

fn prepare(cfg: &DgpConfig, stream: u64) -> Result<PanelDataset> {
    let sim = simulate_panel_stream(cfg, stream)?;
    Ok(standard_variables(&sim.data)?.0)
}

/// Runs `est` on one dataset whose truth is `cfg`.
pub fn estimate_once(d: &PanelDataset, cfg: &DgpConfig, est: &EstimatorSpec, aux_seed: u64) -> Result<Replication> {
    let mut out = Replication::default();
    match est {
        EstimatorSpec::Threshold {
            gamma,
            include_jump,
            controls,
            search,
            regime_test,
        } => {
            let mut spec = ThresholdSpec::standard().with_controls(controls.clone());
            spec.include_jump = *include_jump;
            let mut at = *gamma;
            if let Some(s) = search {
                let e = estimate_threshold(d, &spec, s.trim, s.grid)?;
                let step = e.grid_step_at(cfg.gamma);
                out.draws.push(Draw {
                    name: "gamma".into(),
                    truth: cfg.gamma,
                    estimate: e.gamma_hat,
                    se: None,
                    covered: Some(e.interval.lower <= cfg.gamma && cfg.gamma <= e.interval.upper),
                });
                out.metrics.push((
                    "gamma_within_one_step".into(),
                    f64::from(u8::from((e.gamma_hat - cfg.gamma).abs() <= step)),
                ));
                out.metrics.push(("grid_step_at_truth".into(), step));
                at = at.or(Some(e.gamma_hat));
            }
            let g = at.ok_or_else(|| Error::InvalidArgument("threshold estimator needs gamma or search".into()))?;
            let tf = fit_threshold(d, &spec.with_gamma(g))?;
            out.draws.push(Draw::normal("beta_land", cfg.beta_land, tf.beta_land.estimate, tf.beta_land.se));
            out.draws.push(Draw::normal(
                "beta_nonagr",
                cfg.beta_nonagr,
                tf.beta_nonagr.estimate,
                tf.beta_nonagr.se,
            ));
            if let Some(j) = tf.jump {
                out.draws.push(Draw::normal("jump", cfg.jump, j.estimate, j.se));
            }
            if *regime_test {
                let w = regime_difference_test(&tf)?;
                out.tests.push(("regime_difference".into(), w.p_value.unwrap_or(1.0)));
            }
        }
        EstimatorSpec::Linearity { search, replications } => {
            let spec = ThresholdSpec::standard();
            let t = bootstrap_linearity_test(d, &spec, search.trim, search.grid, *replications, aux_seed)?;
            out.tests.push(("linearity".into(), t.p_value));
            out.metrics.push(("sup_f".into(), t.sup_f));
        }
        EstimatorSpec::DistributedLag {
            n_leads,
            n_lags,
            controls,
        } => {
            let spec = DistributedLagSpec::new(columns::LOG_SPEND, columns::SHARE, *n_leads, *n_lags)
                .with_controls(controls.clone());
            let dl = fit_distributed_lag(d, &spec)?;
            for j in 0..=*n_lags {
                let name = spec.lag(j);
                let w = dl.fit.weights(&[(&name, 1.0)])?;
                let (e, v) = dl.fit.linear_combination(&w)?;
                out.draws.push(Draw::normal(&name, cfg.land_slope(j), e, v.sqrt()));
            }
            if *n_leads > 0 {
                let rows: Vec<Vec<f64>> = (1..=*n_leads)
                    .map(|k| dl.fit.weights(&[(&spec.lead(k), 1.0)]))
                    .collect::<Result<_>>()?;
                let w = wald_test(&dl.fit, &rows, &vec![0.0; rows.len()])?;
                out.tests.push(("leads_joint".into(), w.p_value.unwrap_or(1.0)));
            }
        }
        EstimatorSpec::RegimeDistributedLag {
            gamma,
            n_lags,
            pretrend_leads,
            controls,
        } => {
            let spec = DistributedLagSpec::new(columns::LOG_SPEND, columns::SHARE, 0, *n_lags)
                .with_regime(*gamma)
                .with_controls(controls.clone());
            let rf = fit_regime_distributed_lag(d, &spec)?;
            let h = *n_lags as i64;
            let truth_l: f64 = (0..=*n_lags).map(|j| cfg.land_slope(j)).sum();
            let truth_n: f64 = (0..=*n_lags).map(|j| cfg.nonagr_slope(j)).sum();
            for (regime, name, truth) in [
                (Regime::Landowner, "cumulative_land", truth_l),
                (Regime::Nonagrarian, "cumulative_nonagr", truth_n),
            ] {
                let p = cumulative_effects(&rf, regime)?;
                let e = p.at(h).expect("horizon in path");
                out.draws.push(Draw::normal(name, truth, e.estimate, e.se));
            }
            if *pretrend_leads > 0 {
                let p = pretrend_test(d, &spec, *pretrend_leads)?;
                if let Some(w) = p.wald {
                    out.tests.push(("pretrend".into(), w.p_value.unwrap_or(1.0)));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub sd: f64,
    pub mean_se: Option<f64>,
    pub coverage: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestSummary {
    pub name: String,
    pub alpha: f64,
    pub rejection_rate: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub failures: usize,
    pub failure_kinds: BTreeMap<String, usize>,
    pub parameters: Vec<ParameterSummary>,
    pub tests: Vec<TestSummary>,
    pub metrics: Vec<MetricSummary>,
}

impl MonteCarloReport {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn test(&self, name: &str) -> Option<&TestSummary> {
        self.tests.iter().find(|p| p.name == name)
    }

    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|p| p.name == name)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Aggregates replications in index order.
pub fn summarize(results: &[Result<Replication>], seed: u64, alpha: f64) -> MonteCarloReport {
    let mut failure_kinds = BTreeMap::new();
    let mut draws: Vec<(String, Vec<&Draw>)> = Vec::new();
    let mut tests: Vec<(String, Vec<f64>)> = Vec::new();
    let mut metrics: Vec<(String, Vec<f64>)> = Vec::new();
    fn slot<'a, T>(v: &'a mut Vec<(String, Vec<T>)>, name: &str) -> &'a mut Vec<T> {
        let i = match v.iter().position(|(n, _)| n == name) {
            Some(i) => i,
            None => {
                v.push((name.to_string(), Vec::new()));
                v.len() - 1
            }
        };
        &mut v[i].1
    }
    for r in results {
        match r {
            Err(e) => *failure_kinds.entry(e.kind().to_string()).or_insert(0) += 1,
            Ok(rep) => {
                for d in &rep.draws {
                    slot(&mut draws, &d.name).push(d);
                }
                for (n, p) in &rep.tests {
                    slot(&mut tests, n).push(*p);
                }
                for (n, m) in &rep.metrics {
                    slot(&mut metrics, n).push(*m);
                }
            }
        }
    }
    let parameters = draws
        .into_iter()
        .map(|(name, ds)| {
            let est: Vec<f64> = ds.iter().map(|d| d.estimate).collect();
            let m = mean(&est);
            let truth = ds[0].truth;
            let sd = if est.len() > 1 {
                (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let ses: Vec<f64> = ds.iter().filter_map(|d| d.se).collect();
            let cov: Vec<f64> = ds.iter().filter_map(|d| d.covers()).map(|c| f64::from(u8::from(c))).collect();
            ParameterSummary {
                name,
                truth,
                mean_estimate: m,
                bias: m - truth,
                sd,
                mean_se: (!ses.is_empty()).then(|| mean(&ses)),
                coverage: (!cov.is_empty()).then(|| mean(&cov)),
                n: est.len(),
            }
        })
        .collect();
    let tests = tests
        .into_iter()
        .map(|(name, ps)| TestSummary {
            name,
            alpha,
            rejection_rate: ps.iter().filter(|p| **p < alpha).count() as f64 / ps.len() as f64,
            n: ps.len(),
        })
        .collect();
    let metrics = metrics
        .into_iter()
        .map(|(name, v)| MetricSummary {
            name,
            mean: mean(&v),
            n: v.len(),
        })
        .collect();
    MonteCarloReport {
        reps: results.len(),
        seed,
        alpha,
        failures: failure_kinds.values().sum(),
        failure_kinds,
        parameters,
        tests,
        metrics,
    }
}

/// Runs `reps` replications of simulate-then-estimate.
///
/// A failing replication is counted, not fatal.
pub fn monte_carlo(cfg: &DgpConfig, est: &EstimatorSpec, reps: usize, seed: u64) -> Result<MonteCarloReport> {
    monte_carlo_with(cfg, reps, seed, |d, aux| estimate_once(d, cfg, est, aux))
}

/// Like [`monte_carlo`] with a caller-supplied estimator.
pub fn monte_carlo_with<F>(cfg: &DgpConfig, reps: usize, seed: u64, estimator: F) -> Result<MonteCarloReport>
where
    F: Fn(&PanelDataset, u64) -> Result<Replication> + Sync,
{
    if reps < 2 {
        return Err(Error::InvalidArgument("monte carlo needs at least 2 replications".into()));
    }
    let mut run_cfg = cfg.clone();
    run_cfg.seed = seed;
    run_cfg.validate()?;
    let results: Vec<Result<Replication>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let d = prepare(&run_cfg, r)?;
            estimator(&d, replication_seed(seed, r))
        })
        .collect();
    Ok(summarize(&results, seed, 0.05))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DgpConfig {
        DgpConfig {
            n_entities: 30,
            n_years: 8,
            ..Default::default()
        }
    }

    #[test]
    fn report_is_reproducible() {
        let est = EstimatorSpec::Threshold {
            gamma: Some(0.5),
            include_jump: true,
            controls: default_controls(),
            search: None,
            regime_test: true,
        };
        let a = monte_carlo(&small(), &est, 2, 9).unwrap();
        let b = monte_carlo(&small(), &est, 2, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failures, 0);
        assert_eq!(a.parameter("beta_nonagr").unwrap().n, 2);
        assert!(monte_carlo(&small(), &est, 1, 9).is_err());
    }

    #[test]
    fn failures_are_counted() {
        let est = EstimatorSpec::Threshold {
            gamma: Some(0.99),
            include_jump: true,
            controls: default_controls(),
            search: None,
            regime_test: false,
        };
        let r = monte_carlo(&small(), &est, 3, 1).unwrap();
        assert_eq!(r.failures, 3);
        assert_eq!(r.failure_kinds.get("EmptyRegime"), Some(&3));
    }

    #[test]
    fn estimator_spec_round_trips_json() {
        let est = EstimatorSpec::Linearity {
            search: SearchSpec::default(),
            replications: 99,
        };
        let s = serde_json::to_string(&est).unwrap();
        assert_eq!(serde_json::from_str::<EstimatorSpec>(&s).unwrap(), est);
    }
}
