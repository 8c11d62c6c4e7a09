//! Distributed-lag models in the vote share and their event-study paths.
//!
//! The linear model regresses the outcome on `n_leads` leads, the current
//! share and `n_lags` lags. Its coefficients map one-to-one onto an
//! event-study path normalized to zero one year before treatment. The regime
//! model gives each lag its own slope change above a threshold and yields
//! cumulative effect paths for each group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{lag_name, lead_name, shifted, PanelDataset};
use crate::plot;
use crate::regression::{fit_panel_model, wald_test, ClusterBy, FitResult, Regressor, WaldTest};
use crate::threshold::{jump_name, jump_values, kink_name, kink_values, Estimate};
use crate::within::{complete_cases, FixedEffectsSpec};

pub const NORMALIZATION_HORIZON: i64 = -1;
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributedLagSpec {
    pub outcome: String,
    pub share_var: String,
    pub n_leads: usize,
    pub n_lags: usize,
    pub regime_split: Option<f64>,
    /// Per-lag jump indicators in the regime model.
    pub include_jump: bool,
    pub controls: Vec<String>,
    pub fe: FixedEffectsSpec,
    pub cluster: ClusterBy,
}

impl DistributedLagSpec {
    pub fn new(outcome: &str, share_var: &str, n_leads: usize, n_lags: usize) -> Self {
        DistributedLagSpec {
            outcome: outcome.into(),
            share_var: share_var.into(),
            n_leads,
            n_lags,
            regime_split: None,
            include_jump: false,
            controls: Vec::new(),
            fe: FixedEffectsSpec::TWO_WAY,
            cluster: ClusterBy::Entity,
        }
    }

    pub fn with_regime(mut self, gamma: f64) -> Self {
        self.regime_split = Some(gamma);
        self
    }

    pub fn with_controls(mut self, controls: Vec<String>) -> Self {
        self.controls = controls;
        self
    }

    pub fn lag(&self, j: usize) -> String {
        lag_name(&self.share_var, j)
    }

    pub fn lead(&self, k: usize) -> String {
        lead_name(&self.share_var, k)
    }

    /// Slope-change term of lag `j` in the regime model.
    pub fn lag_kink(&self, j: usize) -> String {
        kink_name(&self.lag(j))
    }

    fn validate(&self, d: &PanelDataset) -> Result<()> {
        if let Some(g) = self.regime_split {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::InvalidArgument(format!("regime split {g} outside (0, 1)")));
            }
        }
        d.column(&self.outcome)?;
        d.column(&self.share_var)?;
        for c in &self.controls {
            d.column(c)?;
        }
        Ok(())
    }
}

/// Observations lost to the lead and lag window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SampleShrinkWarning {
    pub before: usize,
    pub after: usize,
}

#[derive(Debug, Clone)]
pub struct DistributedLagFit {
    pub fit: FitResult,
    pub spec: DistributedLagSpec,
    pub warning: Option<SampleShrinkWarning>,
}

fn base_sample(d: &PanelDataset, spec: &DistributedLagSpec) -> Result<usize> {
    let mut cols = vec![d.column(&spec.outcome)?, d.column(&spec.share_var)?];
    for c in &spec.controls {
        cols.push(d.column(c)?);
    }
    Ok(complete_cases(&cols, d.n_rows()).len())
}

fn shifted_share(d: &PanelDataset, spec: &DistributedLagSpec, offset: i64) -> Result<Vec<f64>> {
    shifted(d, &spec.share_var, offset)
}

fn finish(
    d: &PanelDataset,
    spec: &DistributedLagSpec,
    mut regressors: Vec<Regressor>,
) -> Result<DistributedLagFit> {
    for c in &spec.controls {
        regressors.push(Regressor::from_column(d, c)?);
    }
    let before = base_sample(d, spec)?;
    let fit = fit_panel_model(d, &spec.outcome, &regressors, spec.fe, Some(&spec.cluster))?;
    let warning = (fit.n_obs < before).then_some(SampleShrinkWarning {
        before,
        after: fit.n_obs,
    });
    Ok(DistributedLagFit {
        fit,
        spec: spec.clone(),
        warning,
    })
}

/// Linear distributed-lag model with leads `n_leads..1`, the current share
/// and lags `1..n_lags`.
pub fn fit_distributed_lag(d: &PanelDataset, spec: &DistributedLagSpec) -> Result<DistributedLagFit> {
    if spec.regime_split.is_some() {
        return Err(Error::InvalidArgument(
            "use the regime model for a spec with a regime split".into(),
        ));
    }
    spec.validate(d)?;
    let mut regs = Vec::with_capacity(spec.n_leads + spec.n_lags + 1);
    for k in (1..=spec.n_leads).rev() {
        regs.push(Regressor::new(spec.lead(k), shifted_share(d, spec, k as i64)?));
    }
    for j in 0..=spec.n_lags {
        regs.push(Regressor::new(spec.lag(j), shifted_share(d, spec, -(j as i64))?));
    }
    finish(d, spec, regs)
}

fn regime_regressors(d: &PanelDataset, spec: &DistributedLagSpec, extra_leads: usize) -> Result<Vec<Regressor>> {
    let gamma = spec
        .regime_split
        .ok_or_else(|| Error::InvalidArgument("regime model needs a regime split".into()))?;
    spec.validate(d)?;
    let mut regs = Vec::new();
    for k in (1..=extra_leads).rev() {
        regs.push(Regressor::new(spec.lead(k), shifted_share(d, spec, k as i64)?));
    }
    let shares: Vec<Vec<f64>> = (0..=spec.n_lags)
        .map(|j| shifted_share(d, spec, -(j as i64)))
        .collect::<Result<_>>()?;
    // slope terms first so aliasing falls on the regime terms
    for (j, s) in shares.iter().enumerate() {
        regs.push(Regressor::new(spec.lag(j), s.clone()));
    }
    for (j, s) in shares.iter().enumerate() {
        regs.push(Regressor::new(spec.lag_kink(j), kink_values(s, gamma)));
    }
    if spec.include_jump {
        for (j, s) in shares.iter().enumerate() {
            regs.push(Regressor::new(jump_name(&spec.lag(j)), jump_values(s, gamma)));
        }
    }
    Ok(regs)
}

/// Regime distributed-lag model: for each lag `j = 0..n_lags` the share and
/// its slope change above the split. No leads; jumps only on request.
pub fn fit_regime_distributed_lag(d: &PanelDataset, spec: &DistributedLagSpec) -> Result<DistributedLagFit> {
    let regs = regime_regressors(d, spec, 0)?;
    finish(d, spec, regs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Instantaneous,
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Landowner,
    Nonagrarian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStudyPath {
    pub horizons: Vec<i64>,
    pub estimates: Vec<f64>,
    pub variances: Vec<f64>,
    pub normalization_horizon: i64,
    pub kind: PathKind,
    /// Linear weights over the fit's coefficients for each horizon.
    #[serde(skip)]
    pub weights: Vec<Vec<f64>>,
}

impl EventStudyPath {
    fn from_weights(fit: &FitResult, horizons: Vec<i64>, weights: Vec<Vec<f64>>, kind: PathKind) -> Result<Self> {
        let mut estimates = Vec::with_capacity(horizons.len());
        let mut variances = Vec::with_capacity(horizons.len());
        for w in &weights {
            if w.iter().all(|v| *v == 0.0) {
                estimates.push(0.0);
                variances.push(0.0);
            } else {
                let (e, v) = fit.linear_combination(w)?;
                estimates.push(e);
                variances.push(v);
            }
        }
        Ok(EventStudyPath {
            horizons,
            estimates,
            variances,
            normalization_horizon: NORMALIZATION_HORIZON,
            kind,
            weights,
        })
    }

    pub fn at(&self, h: i64) -> Option<Estimate> {
        let i = self.horizons.iter().position(|x| *x == h)?;
        Some(Estimate {
            estimate: self.estimates[i],
            se: self.variances[i].sqrt(),
        })
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        self.variances.iter().map(|v| v.sqrt()).collect()
    }

    /// Inverts the partial-sum map: `(leads 1..K, lags 0..J)`.
    pub fn first_differences(&self) -> (Vec<f64>, Vec<f64>) {
        let val = |h: i64| self.at(h).map_or(0.0, |e| e.estimate);
        let min = *self.horizons.first().unwrap_or(&0);
        let max = *self.horizons.last().unwrap_or(&0);
        let leads = (1..=(-min - 1)).map(|k| val(-k) - val(-k - 1)).collect();
        let lags = (0..=max).map(|j| val(j) - val(j - 1)).collect();
        (leads, lags)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["horizon", "estimate", "se", "lo95", "hi95"])?;
        for (i, h) in self.horizons.iter().enumerate() {
            let (e, se) = (self.estimates[i], self.variances[i].sqrt());
            w.write_record([
                h.to_string(),
                e.to_string(),
                se.to_string(),
                (e - Z95 * se).to_string(),
                (e + Z95 * se).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_svg(&self, title: &str) -> String {
        let x: Vec<f64> = self.horizons.iter().map(|h| *h as f64).collect();
        let se = self.standard_errors();
        let lo: Vec<f64> = self.estimates.iter().zip(&se).map(|(e, s)| e - Z95 * s).collect();
        let hi: Vec<f64> = self.estimates.iter().zip(&se).map(|(e, s)| e + Z95 * s).collect();
        plot::path_plot(
            title,
            &x,
            &self.estimates,
            &lo,
            &hi,
            0.0,
            ("Years relative to treatment", "Effect on log spending"),
        )
    }
}

/// Event-study path from a linear distributed-lag fit over horizons
/// `−(n_leads+1)..n_lags`, normalized at −1.
///
/// `h ≥ 0` sums lag coefficients `0..h`; `h ≤ −2` is minus the sum of lead
/// coefficients `1..(−h−1)`.
pub fn to_event_study(dl: &FitResult, share_var: &str, n_leads: usize, n_lags: usize) -> Result<EventStudyPath> {
    let lo = -(n_leads as i64) - 1;
    let horizons: Vec<i64> = (lo..=n_lags as i64).collect();
    let mut weights = Vec::with_capacity(horizons.len());
    for &h in &horizons {
        let terms: Vec<(String, f64)> = if h >= 0 {
            (0..=h as usize).map(|j| (lag_name(share_var, j), 1.0)).collect()
        } else {
            (1..=(-h - 1) as usize).map(|k| (lead_name(share_var, k), -1.0)).collect()
        };
        let t: Vec<(&str, f64)> = terms.iter().map(|(n, w)| (n.as_str(), *w)).collect();
        weights.push(dl.weights(&t)?);
    }
    EventStudyPath::from_weights(dl, horizons, weights, PathKind::Instantaneous)
}

/// Cumulative effect of a share change for one group in the regime model:
/// landowner slopes, or full slopes above the split.
pub fn cumulative_effects(rf: &DistributedLagFit, regime: Regime) -> Result<EventStudyPath> {
    let spec = &rf.spec;
    let horizons: Vec<i64> = (NORMALIZATION_HORIZON..=spec.n_lags as i64).collect();
    let mut weights = Vec::with_capacity(horizons.len());
    for &h in &horizons {
        let mut terms = Vec::new();
        for j in 0..(h + 1).max(0) as usize {
            terms.push((spec.lag(j), 1.0));
            if regime == Regime::Nonagrarian {
                terms.push((spec.lag_kink(j), 1.0));
            }
        }
        let t: Vec<(&str, f64)> = terms.iter().map(|(n, w)| (n.as_str(), *w)).collect();
        weights.push(rf.fit.weights(&t)?);
    }
    EventStudyPath::from_weights(&rf.fit, horizons, weights, PathKind::Cumulative)
}

#[derive(Debug, Clone, Serialize)]
pub struct LeadEstimate {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct PretrendTest {
    pub leads: Vec<LeadEstimate>,
    /// `None` when there are no leads to test.
    pub wald: Option<WaldTest>,
    pub vacuous: bool,
    pub fit: DistributedLagFit,
}

/// Adds `extra_leads` linear lead terms to the regime model and tests them
/// jointly.
pub fn pretrend_test(d: &PanelDataset, spec: &DistributedLagSpec, extra_leads: usize) -> Result<PretrendTest> {
    let regs = regime_regressors(d, spec, extra_leads)?;
    let fit = finish(d, spec, regs)?;
    let mut leads = Vec::with_capacity(extra_leads);
    let mut rows = Vec::with_capacity(extra_leads);
    for k in 1..=extra_leads {
        let name = spec.lead(k);
        let w = fit.fit.weights(&[(&name, 1.0)])?;
        let (estimate, var) = fit.fit.linear_combination(&w)?;
        leads.push(LeadEstimate {
            name,
            estimate,
            se: var.sqrt(),
        });
        rows.push(w);
    }
    let wald = if rows.is_empty() {
        None
    } else {
        Some(wald_test(&fit.fit, &rows, &vec![0.0; rows.len()])?)
    };
    Ok(PretrendTest {
        vacuous: wald.is_none(),
        leads,
        wald,
        fit,
    })
}
