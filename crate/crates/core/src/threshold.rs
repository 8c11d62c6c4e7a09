//! Discontinuous threshold regression on the vote share.
//!
//! The share response is `β_L·s + (β_N − β_L)·(s − γ)·1[s > γ] + δ·1[s > γ]`
//! with two-way fixed effects and vote-count controls. The threshold can be
//! fixed or estimated by minimizing the SSR over a trimmed quantile grid.
//!
//! The grid search residualizes the outcome and the γ-invariant regressors
//! once; each candidate then only sweeps and projects its own regime columns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{vector_norm, Qr};
use crate::panel::{columns, PanelDataset};
use crate::regression::{
    cluster_ids_for, fit_panel_model, wald_test, ClusterBy, ClusterIds, FitResult, Regressor,
    WaldTest,
};
use crate::within::{complete_cases, FeGroups, FixedEffectsSpec};

pub const DEFAULT_TRIM: f64 = 0.10;
pub const DEFAULT_GRID_STEP: f64 = 0.005;
pub const MIN_GRID_POINTS: usize = 10;
/// Tie-break target in the SSR argmin.
pub const MAJORITY_POINT: f64 = 0.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub outcome: String,
    pub share_var: String,
    pub gamma: f64,
    pub include_jump: bool,
    pub controls: Vec<String>,
    pub fe: FixedEffectsSpec,
    pub cluster: ClusterBy,
}

/// Nonagrarian votes, inverse total votes and log population.
pub fn default_controls() -> Vec<String> {
    vec![
        columns::VOTES_NONAGR.to_string(),
        columns::INV_VOTES.to_string(),
        columns::LOG_POP.to_string(),
    ]
}

impl ThresholdSpec {
    pub fn new(outcome: &str, share_var: &str) -> Self {
        ThresholdSpec {
            outcome: outcome.into(),
            share_var: share_var.into(),
            gamma: MAJORITY_POINT,
            include_jump: true,
            controls: default_controls(),
            fe: FixedEffectsSpec::TWO_WAY,
            cluster: ClusterBy::Entity,
        }
    }

    /// Canonical outcome and share names with default controls.
    pub fn standard() -> Self {
        Self::new(columns::LOG_SPEND, columns::SHARE)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn without_jump(mut self) -> Self {
        self.include_jump = false;
        self
    }

    pub fn with_controls(mut self, controls: Vec<String>) -> Self {
        self.controls = controls;
        self
    }

    pub fn kink_name(&self) -> String {
        kink_name(&self.share_var)
    }

    pub fn jump_name(&self) -> String {
        jump_name(&self.share_var)
    }
}

pub fn kink_name(share: &str) -> String {
    format!("{share}.kink")
}

pub fn jump_name(share: &str) -> String {
    format!("{share}.jump")
}

/// `(s − γ)·1[s > γ]`, missing where `s` is.
pub fn kink_values(share: &[f64], gamma: f64) -> Vec<f64> {
    share.iter().map(|&s| if s.is_nan() { s } else { (s - gamma).max(0.0) }).collect()
}

/// `1[s > γ]`, missing where `s` is.
pub fn jump_values(share: &[f64], gamma: f64) -> Vec<f64> {
    share
        .iter()
        .map(|&s| if s.is_nan() { s } else if s > gamma { 1.0 } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_combination(fit: &FitResult, terms: &[(&str, f64)]) -> Result<Self> {
        let w = fit.weights(terms)?;
        let (estimate, var) = fit.linear_combination(&w)?;
        Ok(Estimate {
            estimate,
            se: var.sqrt(),
        })
    }

    pub fn ci95(&self) -> (f64, f64) {
        (self.estimate - 1.96 * self.se, self.estimate + 1.96 * self.se)
    }

    pub fn covers(&self, truth: f64) -> bool {
        let (lo, hi) = self.ci95();
        lo <= truth && truth <= hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub gamma: f64,
    pub ssr: f64,
}

#[derive(Debug, Clone)]
pub struct ThresholdFit {
    pub gamma: f64,
    pub beta_land: Estimate,
    pub beta_nonagr: Estimate,
    /// Coefficient on the kink term, `β_N − β_L`.
    pub slope_change: Estimate,
    pub jump: Option<Estimate>,
    pub ssr: f64,
    pub n_obs: usize,
    pub clusters: usize,
    pub spec: ThresholdSpec,
    pub fit: FitResult,
    pub profile: Option<Vec<ProfilePoint>>,
}

impl ThresholdFit {
    /// Fitted share response at `s` (excluding effects and controls).
    pub fn share_response(&self, s: f64) -> f64 {
        let jump = self.jump.map_or(0.0, |j| j.estimate);
        self.beta_land.estimate * s
            + self.slope_change.estimate * (s - self.gamma).max(0.0)
            + if s > self.gamma { jump } else { 0.0 }
    }
}

fn check_share(d: &PanelDataset, share_var: &str) -> Result<()> {
    if let Some(v) = d
        .column(share_var)?
        .iter()
        .find(|v| !v.is_nan() && !(0.0..=1.0).contains(*v))
    {
        return Err(Error::InvalidArgument(format!(
            "share variable `{share_var}` has value {v} outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("threshold {gamma} outside (0, 1)")))
    }
}

fn regime_clusters(share: &[f64], rows: &[usize], ids: &ClusterIds, gamma: f64) -> (usize, usize) {
    let mut below = vec![false; ids.count()];
    let mut above = vec![false; ids.count()];
    for (i, &r) in rows.iter().enumerate() {
        let g = ids.codes()[i];
        if share[r] > gamma {
            above[g] = true;
        } else {
            below[g] = true;
        }
    }
    let count = |v: &[bool]| v.iter().filter(|b| **b).count();
    (count(&below), count(&above))
}

/// Fits the threshold model at `spec.gamma`.
pub fn fit_threshold(d: &PanelDataset, spec: &ThresholdSpec) -> Result<ThresholdFit> {
    check_gamma(spec.gamma)?;
    check_share(d, &spec.share_var)?;
    let share = d.column(&spec.share_var)?;
    let mut regressors = vec![
        Regressor::new(spec.share_var.clone(), share.to_vec()),
        Regressor::new(spec.kink_name(), kink_values(share, spec.gamma)),
    ];
    if spec.include_jump {
        regressors.push(Regressor::new(spec.jump_name(), jump_values(share, spec.gamma)));
    }
    for c in &spec.controls {
        regressors.push(Regressor::from_column(d, c)?);
    }
    let fit = fit_panel_model(d, &spec.outcome, &regressors, spec.fe, Some(&spec.cluster))?;
    let ids = cluster_ids_for(d, &fit.rows, &spec.cluster)?;
    let (below, above) = regime_clusters(share, &fit.rows, &ids, spec.gamma);
    if below < 2 {
        return Err(Error::EmptyRegime {
            regime: "landowner",
            gamma: spec.gamma,
        });
    }
    if above < 2 {
        return Err(Error::EmptyRegime {
            regime: "nonagrarian",
            gamma: spec.gamma,
        });
    }
    let s = spec.share_var.as_str();
    let kink = spec.kink_name();
    let beta_land = Estimate::from_combination(&fit, &[(s, 1.0)])?;
    let slope_change = Estimate::from_combination(&fit, &[(&kink, 1.0)])?;
    let beta_nonagr = Estimate::from_combination(&fit, &[(s, 1.0), (&kink, 1.0)])?;
    let jump = spec
        .include_jump
        .then(|| Estimate::from_combination(&fit, &[(&spec.jump_name(), 1.0)]))
        .transpose()?;
    Ok(ThresholdFit {
        gamma: spec.gamma,
        beta_land,
        beta_nonagr,
        slope_change,
        jump,
        ssr: fit.ssr,
        n_obs: fit.n_obs,
        clusters: ids.count(),
        spec: spec.clone(),
        fit,
        profile: None,
    })
}

/// Joint test that the slope change and the jump are both zero.
pub fn regime_difference_test(tf: &ThresholdFit) -> Result<WaldTest> {
    if !tf.spec.include_jump {
        return Err(Error::InvalidArgument(
            "regime difference test needs the jump term".into(),
        ));
    }
    let r = vec![
        tf.fit.weights(&[(&tf.spec.kink_name(), 1.0)])?,
        tf.fit.weights(&[(&tf.spec.jump_name(), 1.0)])?,
    ];
    wald_test(&tf.fit, &r, &[0.0, 0.0])
}

/// Candidate thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    /// Empirical quantiles at every `step` between the trim points.
    Quantiles { step: f64 },
    /// Every distinct observed value between the trim points.
    AllObserved,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Quantiles {
            step: DEFAULT_GRID_STEP,
        }
    }
}

/// Unique inverse-CDF quantiles of `values` between `trim` and `1 − trim`.
pub fn threshold_grid(values: &[f64], trim: f64, grid: GridSpec) -> Result<Vec<f64>> {
    if !(trim > 0.0 && trim < 0.5) {
        return Err(Error::InvalidArgument(format!("trim {trim} outside (0, 0.5)")));
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    // 1-based order statistic for probability p
    let order = |p: f64| ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut out = match grid {
        GridSpec::AllObserved => sorted[order(trim) - 1..order(1.0 - trim)].to_vec(),
        GridSpec::Quantiles { step } => {
            if !(step > 0.0) {
                return Err(Error::InvalidArgument("grid step must be positive".into()));
            }
            let count = ((1.0 - 2.0 * trim) / step + 1e-9).floor() as usize;
            (0..=count)
                .map(|i| sorted[order(trim + i as f64 * step) - 1])
                .collect()
        }
    };
    out.dedup();
    // candidates must leave observations above them
    out.retain(|g| *g < sorted[n - 1] && *g > 0.0 && *g < 1.0);
    if out.len() < MIN_GRID_POINTS {
        return Err(Error::DegenerateGrid {
            found: out.len(),
            needed: MIN_GRID_POINTS,
        });
    }
    Ok(out)
}

/// Pre-residualized pieces shared by every grid candidate.
struct ProfileProblem {
    share: Vec<f64>,
    groups: Option<FeGroups>,
    base: Qr,
    y_tilde: Vec<f64>,
    include_jump: bool,
    n: usize,
    rows: Vec<usize>,
    absorbed: usize,
}

impl ProfileProblem {
    fn new(d: &PanelDataset, spec: &ThresholdSpec) -> Result<Self> {
        check_share(d, &spec.share_var)?;
        let share_full = d.column(&spec.share_var)?;
        let y_full = d.column(&spec.outcome)?;
        let ctrl: Vec<&[f64]> = spec
            .controls
            .iter()
            .map(|c| d.column(c))
            .collect::<Result<_>>()?;
        let mut req = vec![y_full, share_full];
        req.extend(ctrl.iter().copied());
        let rows = complete_cases(&req, d.n_rows());
        if rows.is_empty() {
            return Err(Error::EmptySample);
        }
        let take = |v: &[f64]| -> Vec<f64> { rows.iter().map(|&r| v[r]).collect() };
        let groups = spec.fe.any().then(|| FeGroups::new(d, &rows, spec.fe));
        let sweep = |mut v: Vec<f64>| -> Result<Vec<f64>> {
            if let Some(g) = &groups {
                g.demean(&mut v)?;
            }
            Ok(v)
        };
        let share = take(share_full);
        let mut base_cols = Vec::new();
        let mut norms = Vec::new();
        if groups.is_none() {
            base_cols.push(vec![1.0; rows.len()]);
            norms.push((rows.len() as f64).sqrt());
        }
        for raw in std::iter::once(share_full).chain(ctrl.iter().copied()) {
            let v = take(raw);
            norms.push(vector_norm(&v));
            base_cols.push(sweep(v)?);
        }
        let base = Qr::factor(&base_cols, Some(&norms));
        let y_tilde = base.residual(&sweep(take(y_full))?);
        let absorbed = groups.as_ref().map_or(0, FeGroups::absorbed_dof);
        Ok(ProfileProblem {
            n: rows.len(),
            share,
            groups,
            base,
            y_tilde,
            include_jump: spec.include_jump,
            rows,
            absorbed,
        })
    }

    /// Regime columns at `gamma`, swept and projected off the base design.
    fn regime_qr(&self, gamma: f64) -> Result<Qr> {
        let mut cols = vec![kink_values(&self.share, gamma)];
        if self.include_jump {
            cols.push(jump_values(&self.share, gamma));
        }
        let norms: Vec<f64> = cols.iter().map(|c| vector_norm(c)).collect();
        for c in cols.iter_mut() {
            if let Some(g) = &self.groups {
                g.demean(c)?;
            }
            *c = self.base.residual(c);
        }
        Ok(Qr::factor(&cols, Some(&norms)))
    }

    fn ssr(&self, gamma: f64) -> Result<f64> {
        let qr = self.regime_qr(gamma)?;
        Ok(sum_sq(&qr.residual(&self.y_tilde)))
    }

    fn df_unrestricted(&self, regime_rank: usize) -> f64 {
        (self.n - self.absorbed - self.base.rank() - regime_rank) as f64
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Index of the smallest SSR; exact ties go to the candidate nearest the
/// majority point, then to the smaller candidate.
fn argmin_profile(profile: &[ProfilePoint]) -> usize {
    let mut best = 0;
    for (i, p) in profile.iter().enumerate().skip(1) {
        let b = &profile[best];
        let closer = (p.gamma - MAJORITY_POINT).abs() < (b.gamma - MAJORITY_POINT).abs();
        if p.ssr < b.ssr || (p.ssr == b.ssr && closer) {
            best = i;
        }
    }
    best
}

/// SSR of the threshold model at each candidate, on a common sample.
pub fn ssr_profile(d: &PanelDataset, spec: &ThresholdSpec, grid: &[f64]) -> Result<Vec<ProfilePoint>> {
    let problem = ProfileProblem::new(d, spec)?;
    grid.par_iter()
        .map(|&gamma| {
            Ok(ProfilePoint {
                gamma,
                ssr: problem.ssr(gamma)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub critical_value: f64,
    pub accepted_points: usize,
}

/// Critical value of the likelihood-ratio statistic for the threshold,
/// `−2 ln(1 − √(1 − α))`.
pub fn lr_critical_value(alpha: f64) -> f64 {
    -2.0 * (1.0 - (1.0 - alpha).sqrt()).ln()
}

/// Inverts `LR(γ) = n (SSR(γ) − SSR(γ̂)) / SSR(γ̂)`; the interval is the
/// hull of accepted grid points.
pub fn threshold_confidence_interval(
    profile: &[ProfilePoint],
    n: usize,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    if profile.is_empty() {
        return Err(Error::EmptyProfile);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    let best = profile[argmin_profile(profile)].ssr;
    let crit = lr_critical_value(alpha);
    let accept = |p: &ProfilePoint| {
        if best > 0.0 {
            n as f64 * (p.ssr - best) / best <= crit
        } else {
            p.ssr <= best
        }
    };
    let accepted: Vec<f64> = profile.iter().filter(|p| accept(p)).map(|p| p.gamma).collect();
    let lower = accepted.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = accepted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ConfidenceInterval {
        lower,
        upper,
        level: 1.0 - alpha,
        critical_value: crit,
        accepted_points: accepted.len(),
    })
}

#[derive(Debug, Clone)]
pub struct ThresholdEstimate {
    pub gamma_hat: f64,
    pub profile: Vec<ProfilePoint>,
    pub interval: ConfidenceInterval,
    pub fit: ThresholdFit,
    pub trim: f64,
    pub grid: GridSpec,
}

impl ThresholdEstimate {
    /// Grid spacing around `gamma`: the larger gap to its neighbours.
    pub fn grid_step_at(&self, gamma: f64) -> f64 {
        let g: Vec<f64> = self.profile.iter().map(|p| p.gamma).collect();
        let i = g.partition_point(|x| *x < gamma).min(g.len() - 1);
        let left = if i > 0 { g[i] - g[i - 1] } else { 0.0 };
        let right = if i + 1 < g.len() { g[i + 1] - g[i] } else { 0.0 };
        left.max(right)
    }
}

/// Estimates the threshold by SSR minimization over the trimmed grid.
pub fn estimate_threshold(
    d: &PanelDataset,
    spec: &ThresholdSpec,
    trim: f64,
    grid: GridSpec,
) -> Result<ThresholdEstimate> {
    let problem = ProfileProblem::new(d, spec)?;
    let candidates = threshold_grid(&problem.share, trim, grid)?;
    let profile: Vec<ProfilePoint> = candidates
        .par_iter()
        .map(|&gamma| {
            Ok(ProfilePoint {
                gamma,
                ssr: problem.ssr(gamma)?,
            })
        })
        .collect::<Result<_>>()?;
    let best = argmin_profile(&profile);
    let gamma_hat = profile[best].gamma;
    assert!(
        profile.iter().all(|p| profile[best].ssr <= p.ssr),
        "argmin violates the SSR profile"
    );
    let interval = threshold_confidence_interval(&profile, problem.n, 0.05)?;
    let mut fit = fit_threshold(d, &spec.clone().with_gamma(gamma_hat))?;
    fit.profile = Some(profile.clone());
    Ok(ThresholdEstimate {
        gamma_hat,
        profile,
        interval,
        fit,
        trim,
        grid,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearityTest {
    pub sup_f: f64,
    pub gamma_at_sup: f64,
    pub p_value: f64,
    pub replications: usize,
    pub seed: u64,
    pub grid_points: usize,
}

/// Sup-F test of the linear model against the threshold alternative.
///
/// The null distribution comes from a wild cluster bootstrap (Rademacher
/// weights per cluster) of the linear-model residuals with the regressors
/// held fixed. Replication `b` draws from stream `b` of `seed`.
pub fn bootstrap_linearity_test(
    d: &PanelDataset,
    spec: &ThresholdSpec,
    trim: f64,
    grid: GridSpec,
    replications: usize,
    seed: u64,
) -> Result<LinearityTest> {
    if replications < 99 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least 99 replications".into(),
        ));
    }
    let problem = ProfileProblem::new(d, spec)?;
    let candidates = threshold_grid(&problem.share, trim, grid)?;
    let regime: Vec<Qr> = candidates
        .par_iter()
        .map(|&g| problem.regime_qr(g))
        .collect::<Result<_>>()?;
    let sup_f = |y: &[f64]| -> (f64, usize) {
        let s0 = sum_sq(y);
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, qr) in regime.iter().enumerate() {
            let q = qr.rank();
            if q == 0 {
                continue;
            }
            let s1 = sum_sq(&qr.residual(y));
            let f = ((s0 - s1) / q as f64) / (s1 / problem.df_unrestricted(q));
            if f > best.0 {
                best = (f, i);
            }
        }
        best
    };
    let (observed, at) = sup_f(&problem.y_tilde);
    if !observed.is_finite() {
        return Err(Error::DegenerateGrid {
            found: 0,
            needed: MIN_GRID_POINTS,
        });
    }
    let ids = cluster_ids_for(d, &problem.rows, &spec.cluster)?;
    let boot: Vec<f64> = (0..replications as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let signs: Vec<f64> = (0..ids.count())
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let mut e: Vec<f64> = problem
                .y_tilde
                .iter()
                .zip(ids.codes())
                .map(|(v, &g)| v * signs[g])
                .collect();
            if let Some(g) = &problem.groups {
                g.demean(&mut e)?;
            }
            let y = problem.base.residual(&e);
            Ok(sup_f(&y).0)
        })
        .collect::<Result<_>>()?;
    let exceed = boot.iter().filter(|f| **f >= observed).count();
    Ok(LinearityTest {
        sup_f: observed,
        gamma_at_sup: candidates[at],
        p_value: exceed as f64 / replications as f64,
        replications,
        seed,
        grid_points: candidates.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_value_at_five_percent() {
        let c = lr_critical_value(0.05);
        assert!((c - 7.352_3).abs() < 5e-5, "{c}");
    }

    #[test]
    fn interval_contains_argmin_and_handles_zero_ssr() {
        let profile = vec![
            ProfilePoint { gamma: 0.4, ssr: 10.5 },
            ProfilePoint { gamma: 0.45, ssr: 10.0 },
            ProfilePoint { gamma: 0.5, ssr: 10.02 },
            ProfilePoint { gamma: 0.55, ssr: 12.0 },
        ];
        let ci = threshold_confidence_interval(&profile, 100, 0.05).unwrap();
        assert!(ci.lower <= 0.45 && 0.45 <= ci.upper);
        assert_eq!((ci.lower, ci.upper), (0.4, 0.5));
        assert_eq!(ci.accepted_points, 3);

        let exact = vec![
            ProfilePoint { gamma: 0.4, ssr: 1.0 },
            ProfilePoint { gamma: 0.5, ssr: 0.0 },
        ];
        let ci = threshold_confidence_interval(&exact, 100, 0.05).unwrap();
        assert_eq!((ci.lower, ci.upper), (0.5, 0.5));
        assert!(matches!(
            threshold_confidence_interval(&[], 10, 0.05),
            Err(Error::EmptyProfile)
        ));
    }

    #[test]
    fn ties_break_toward_majority_point() {
        let profile = vec![
            ProfilePoint { gamma: 0.3, ssr: 1.0 },
            ProfilePoint { gamma: 0.48, ssr: 1.0 },
            ProfilePoint { gamma: 0.6, ssr: 1.0 },
        ];
        assert_eq!(argmin_profile(&profile), 1);
    }

    #[test]
    fn grid_is_sorted_unique_and_trimmed() {
        let values: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let g = threshold_grid(&values, 0.1, GridSpec::default()).unwrap();
        assert_eq!(g.len(), 161);
        assert!((g[0] - 0.099).abs() < 1e-12);
        assert!((g[160] - 0.899).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let all = threshold_grid(&values, 0.1, GridSpec::AllObserved).unwrap();
        assert_eq!(all.len(), 801);
        let few = [0.1, 0.2, 0.3, 0.3, 0.3];
        assert!(matches!(
            threshold_grid(&few, 0.1, GridSpec::default()),
            Err(Error::DegenerateGrid { .. })
        ));
        assert!(matches!(
            threshold_grid(&values, 0.6, GridSpec::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn noiseless(n_entities: usize) -> PanelDataset {
        let cfg = crate::dgp::DgpConfig {
            n_entities,
            n_years: 12,
            noise_sd: 0.0,
            seed: 11,
            ..Default::default()
        };
        let sim = crate::dgp::simulate_panel(&cfg).unwrap();
        crate::panel::standard_variables(&sim.data).unwrap().0
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let d = noiseless(60);
        let tf = fit_threshold(&d, &ThresholdSpec::standard()).unwrap();
        assert!((tf.beta_land.estimate - 0.04).abs() < 1e-7);
        assert!((tf.beta_nonagr.estimate - 0.41).abs() < 1e-7);
        assert!((tf.jump.unwrap().estimate - 0.02).abs() < 1e-7);
        assert!(tf.ssr < 1e-12);
    }

    #[test]
    fn noiseless_grid_search_lands_on_true_partition() {
        let d = noiseless(60);
        let spec = ThresholdSpec::standard();
        let est = estimate_threshold(&d, &spec, DEFAULT_TRIM, GridSpec::AllObserved).unwrap();
        let share = d.column(columns::SHARE).unwrap();
        let below = share.iter().copied().filter(|s| *s <= 0.5).fold(f64::MIN, f64::max);
        assert_eq!(est.gamma_hat, below);
        assert!(est.interval.lower <= est.gamma_hat && est.gamma_hat <= est.interval.upper);
    }

    #[test]
    fn profile_matches_full_refit() {
        let d = noiseless(30);
        let mut spec = ThresholdSpec::standard();
        spec.gamma = 0.35;
        let p = ssr_profile(&d, &spec, &[0.35]).unwrap();
        // add noise through a perturbed outcome so the SSR is not trivially zero
        let y: Vec<f64> = d
            .column(columns::LOG_SPEND)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, v)| v + ((i * 7919) % 13) as f64 * 0.01)
            .collect();
        let d2 = d.with_column("y_noisy", y, "test").unwrap();
        let mut spec2 = spec.clone();
        spec2.outcome = "y_noisy".into();
        let fast = ssr_profile(&d2, &spec2, &[0.35]).unwrap()[0].ssr;
        let full = fit_threshold(&d2, &spec2).unwrap().ssr;
        assert!((fast - full).abs() <= 1e-9 * full, "{fast} vs {full}");
        assert!(p[0].ssr >= 0.0);
    }
}
