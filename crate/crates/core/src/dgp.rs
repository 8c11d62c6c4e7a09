//! Synthetic weighted-voting economy.
//!
//! Landowner votes follow the assessed-value rule and nonagrarian votes the
//! taxable-income rule; both incomes evolve as log-normal random walks, the
//! nonagrarian one with occasional jumps so that entities cross the majority
//! threshold at staggered dates. The outcome is a two-way fixed-effects
//! panel with regime-specific distributed-lag responses to the vote share.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{columns, PanelBuilder, PanelDataset};
use crate::regression::{ols_fit, DesignMatrix, FitResult, INTERCEPT};
use crate::within::{complete_cases, FeGroups, FixedEffectsSpec};

/// Landowner votes: two votes per 0.10 krona of taxable income, where taxable
/// income is 3% of the assessed property value.
pub fn votes_landowner(assessed_value: f64) -> Result<f64> {
    if assessed_value < 0.0 {
        return Err(Error::NegativeValue(assessed_value));
    }
    Ok(2.0 * (assessed_value * 0.03) / 10.0)
}

/// Which multiplier the nonagrarian vote formula uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonagrVoteRule {
    /// `2 × income / 10`, as the formula is printed.
    #[default]
    Printed,
    /// One vote per 0.10 krona, as the accompanying text describes it.
    Prose,
}

pub fn votes_nonagrarian(taxable_income: f64, rule: NonagrVoteRule) -> Result<f64> {
    if taxable_income < 0.0 {
        return Err(Error::NegativeValue(taxable_income));
    }
    Ok(match rule {
        NonagrVoteRule::Printed => 2.0 * (taxable_income / 10.0),
        NonagrVoteRule::Prose => taxable_income / 10.0,
    })
}

/// Log-normal random walk with optional jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncomeProcess {
    /// Mean of the log level in the first simulated year.
    pub log_mean: f64,
    /// Cross-entity SD of the initial log level.
    pub log_sd: f64,
    pub drift: f64,
    pub innovation_sd: f64,
    pub jump_prob: f64,
    pub jump_sd: f64,
}

impl Default for IncomeProcess {
    fn default() -> Self {
        IncomeProcess {
            log_mean: 0.0,
            log_sd: 0.0,
            drift: 0.0,
            innovation_sd: 0.0,
            jump_prob: 0.0,
            jump_sd: 0.0,
        }
    }
}

/// Effects of the vote-count controls on the outcome.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlsChannel {
    /// Coefficient on nonagrarian votes (level).
    pub nonagr_votes: f64,
    /// Coefficient on one over total votes.
    pub inv_votes: f64,
    pub log_pop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n_entities: usize,
    pub n_years: usize,
    pub start_year: i64,
    /// Contemporaneous landowner slope.
    pub beta_land: f64,
    /// Contemporaneous slope above the threshold (full slope, not the change).
    pub beta_nonagr: f64,
    /// Level jump at the threshold.
    pub jump: f64,
    pub gamma: f64,
    /// Landowner slopes at lags 1, 2, …
    pub lag_effects_land: Vec<f64>,
    /// Full slopes above the threshold at lags 1, 2, …
    pub lag_effects_nonagr: Vec<f64>,
    /// Linear anticipation effects at leads 1, 2, …
    pub lead_effects: Vec<f64>,
    pub entity_effect_sd: f64,
    pub year_effect_sd: f64,
    pub noise_sd: f64,
    /// AR(1) coefficient of the idiosyncratic error within each entity.
    pub noise_ar1: f64,
    pub land_value: IncomeProcess,
    pub nonagr_income: IncomeProcess,
    pub population: IncomeProcess,
    pub controls: ControlsChannel,
    /// Probability that a school-spending or vote cell is missing.
    pub missing_rate: f64,
    /// Probability that a whole entity-year is unreported.
    pub gap_rate: f64,
    pub high_conc_prob: f64,
    pub vote_rule: NonagrVoteRule,
    pub round_votes: bool,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n_entities: 200,
            n_years: 29,
            start_year: 1881,
            beta_land: 0.04,
            beta_nonagr: 0.41,
            jump: 0.02,
            gamma: 0.5,
            lag_effects_land: Vec::new(),
            lag_effects_nonagr: Vec::new(),
            lead_effects: Vec::new(),
            entity_effect_sd: 0.5,
            year_effect_sd: 0.2,
            noise_sd: 0.3,
            noise_ar1: 0.0,
            land_value: IncomeProcess {
                log_mean: 13.55,
                log_sd: 0.7,
                drift: 0.01,
                innovation_sd: 0.05,
                jump_prob: 0.0,
                jump_sd: 0.0,
            },
            nonagr_income: IncomeProcess {
                log_mean: 8.85,
                log_sd: 1.0,
                drift: 0.025,
                innovation_sd: 0.12,
                jump_prob: 0.04,
                jump_sd: 0.6,
            },
            population: IncomeProcess {
                log_mean: 7.1,
                log_sd: 0.7,
                drift: 0.008,
                innovation_sd: 0.02,
                jump_prob: 0.0,
                jump_sd: 0.0,
            },
            controls: ControlsChannel {
                nonagr_votes: 1e-5,
                inv_votes: 200.0,
                log_pop: 0.1,
            },
            missing_rate: 0.0,
            gap_rate: 0.0,
            high_conc_prob: 1235.0 / 2193.0,
            vote_rule: NonagrVoteRule::Printed,
            round_votes: false,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if self.n_entities == 0 || self.n_years == 0 {
            return fail("n_entities and n_years must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must lie in (0, 1)");
        }
        let sds = [
            self.entity_effect_sd,
            self.year_effect_sd,
            self.noise_sd,
            self.land_value.log_sd,
            self.land_value.innovation_sd,
            self.land_value.jump_sd,
            self.nonagr_income.log_sd,
            self.nonagr_income.innovation_sd,
            self.nonagr_income.jump_sd,
            self.population.log_sd,
            self.population.innovation_sd,
            self.population.jump_sd,
        ];
        if sds.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return fail("standard deviations must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.missing_rate) || !(0.0..1.0).contains(&self.gap_rate) {
            return fail("missing_rate and gap_rate must lie in [0, 1)");
        }
        let probs = [
            self.high_conc_prob,
            self.land_value.jump_prob,
            self.nonagr_income.jump_prob,
            self.population.jump_prob,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return fail("probabilities must lie in [0, 1]");
        }
        if !(self.noise_ar1.abs() < 1.0) {
            return fail("noise_ar1 must lie in (-1, 1)");
        }
        Ok(())
    }

    pub fn max_lag(&self) -> usize {
        self.lag_effects_land.len().max(self.lag_effects_nonagr.len())
    }

    /// Landowner slope at lag `j` (0 = contemporaneous).
    pub fn land_slope(&self, j: usize) -> f64 {
        if j == 0 {
            self.beta_land
        } else {
            self.lag_effects_land.get(j - 1).copied().unwrap_or(0.0)
        }
    }

    /// Full slope above the threshold at lag `j`.
    pub fn nonagr_slope(&self, j: usize) -> f64 {
        if j == 0 {
            self.beta_nonagr
        } else {
            self.lag_effects_nonagr.get(j - 1).copied().unwrap_or(0.0)
        }
    }
}

/// A simulated panel together with its generating configuration.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub data: PanelDataset,
    pub truth: DgpConfig,
    /// Vote share in every simulated cell, before missingness.
    pub true_share: Vec<Vec<f64>>,
}

struct Walk<'a> {
    p: &'a IncomeProcess,
}

impl Walk<'_> {
    fn path<R: Rng>(&self, rng: &mut R, len: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(len);
        let z: f64 = rng.sample(StandardNormal);
        let mut x = self.p.log_mean + self.p.log_sd * z;
        for t in 0..len {
            if t > 0 {
                let e: f64 = rng.sample(StandardNormal);
                x += self.p.drift + self.p.innovation_sd * e;
                if self.p.jump_prob > 0.0 && rng.gen::<f64>() < self.p.jump_prob {
                    let j: f64 = rng.sample(StandardNormal);
                    x += self.p.jump_sd * j;
                }
            }
            out.push(x);
        }
        out
    }
}

/// Simulates with the random stream 0 of `cfg.seed`.
pub fn simulate_panel(cfg: &DgpConfig) -> Result<SimulatedPanel> {
    simulate_panel_stream(cfg, 0)
}

/// Simulates using stream `stream` of the generator seeded by `cfg.seed`.
pub fn simulate_panel_stream(cfg: &DgpConfig, stream: u64) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let pre = cfg.max_lag();
    let post = cfg.lead_effects.len();
    let span = pre + cfg.n_years + post;
    let normal = |sd: f64| Normal::new(0.0, sd).expect("validated sd");
    let year_effects: Vec<f64> = (0..cfg.n_years)
        .map(|_| normal(cfg.year_effect_sd).sample(&mut rng))
        .collect();

    let mut builder = PanelBuilder::new([
        columns::SCHOOL_SPEND,
        columns::POPULATION,
        columns::VOTES_NONAGR,
        columns::VOTES_LAND,
        columns::DEFLATOR,
        columns::HIGH_LAND_CONC,
    ]);
    let mut true_share = Vec::with_capacity(cfg.n_entities);
    let width = (cfg.n_entities.max(1) as f64).log10().floor() as usize + 1;
    for i in 0..cfg.n_entities {
        let alpha = normal(cfg.entity_effect_sd).sample(&mut rng);
        let high_conc = if rng.gen::<f64>() < cfg.high_conc_prob { 1.0 } else { 0.0 };
        let land = Walk { p: &cfg.land_value }.path(&mut rng, span);
        let income = Walk { p: &cfg.nonagr_income }.path(&mut rng, span);
        let pop = Walk { p: &cfg.population }.path(&mut rng, span);

        let mut vl = Vec::with_capacity(span);
        let mut vn = Vec::with_capacity(span);
        let mut share = Vec::with_capacity(span);
        for t in 0..span {
            let mut l = votes_landowner(land[t].exp())?;
            let mut n = votes_nonagrarian(income[t].exp(), cfg.vote_rule)?;
            if cfg.round_votes {
                l = l.round();
                n = n.round();
            }
            vl.push(l);
            vn.push(n);
            share.push(if l + n > 0.0 { n / (l + n) } else { f64::NAN });
        }

        let mut u = 0.0;
        let innov_sd = cfg.noise_sd * (1.0 - cfg.noise_ar1 * cfg.noise_ar1).sqrt();
        let label = format!("{:0width$}", i + 1);
        let mut shares_out = Vec::with_capacity(cfg.n_years);
        for (k, &lambda) in year_effects.iter().enumerate() {
            let t = pre + k;
            let e: f64 = rng.sample(StandardNormal);
            u = if k == 0 {
                cfg.noise_sd * e
            } else {
                cfg.noise_ar1 * u + innov_sd * e
            };
            let mut y = alpha + lambda + u;
            for j in 0..=pre {
                let s = share[t - j];
                let bl = cfg.land_slope(j);
                let bn = cfg.nonagr_slope(j);
                y += bl * s + (bn - bl) * (s - cfg.gamma).max(0.0);
            }
            if share[t] > cfg.gamma {
                y += cfg.jump;
            }
            for (m, lead) in cfg.lead_effects.iter().enumerate() {
                y += lead * share[t + m + 1];
            }
            let total = vl[t] + vn[t];
            y += cfg.controls.nonagr_votes * vn[t]
                + cfg.controls.inv_votes / total
                + cfg.controls.log_pop * pop[t];
            let population = pop[t].exp();
            let deflator = 1.0 + 0.01 * k as f64;
            let spend = population * deflator * y.exp();
            shares_out.push(share[t]);

            let gap = cfg.gap_rate > 0.0 && rng.gen::<f64>() < cfg.gap_rate;
            let mut miss = |v: f64| {
                if cfg.missing_rate > 0.0 && rng.gen::<f64>() < cfg.missing_rate {
                    f64::NAN
                } else {
                    v
                }
            };
            let row = vec![
                miss(spend),
                population,
                miss(vn[t]),
                miss(vl[t]),
                deflator,
                high_conc,
            ];
            if !gap {
                builder.push(&label, cfg.start_year + k as i64, row);
            }
        }
        true_share.push(shares_out);
    }
    Ok(SimulatedPanel {
        data: builder.build()?,
        truth: cfg.clone(),
        true_share,
    })
}

pub const ORACLE_MAX_ROWS: usize = 5_000;

/// Fits `outcome` on `regressors` with explicit entity and year indicator
/// columns (plus an intercept) by plain least squares.
///
/// Indicators come first so that a regressor collinear with the effects is
/// the column reported as aliased.
pub fn oracle_dummy_ols(
    d: &PanelDataset,
    outcome: &str,
    regressors: &[&str],
    fe: FixedEffectsSpec,
) -> Result<FitResult> {
    let y_full = d.column(outcome)?;
    let xs: Vec<&[f64]> = regressors.iter().map(|r| d.column(r)).collect::<Result<_>>()?;
    let mut all = vec![y_full];
    all.extend(xs.iter().copied());
    let rows = complete_cases(&all, d.n_rows());
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    if rows.len() > ORACLE_MAX_ROWS {
        return Err(Error::TooLargeForOracle {
            rows: rows.len(),
            limit: ORACLE_MAX_ROWS,
        });
    }
    let groups = FeGroups::new(d, &rows, FixedEffectsSpec::TWO_WAY);
    let n = rows.len();
    let mut names = vec![INTERCEPT.to_string()];
    let mut cols = vec![vec![1.0; n]];
    if fe.entity_effects {
        for e in 1..groups.n_entities() {
            names.push(format!("entity[{e}]"));
            cols.push(groups.entity_codes().iter().map(|&c| f64::from(u8::from(c == e))).collect());
        }
    }
    if fe.time_effects {
        for t in 1..groups.n_times() {
            names.push(format!("year[{t}]"));
            cols.push(groups.time_codes().iter().map(|&c| f64::from(u8::from(c == t))).collect());
        }
    }
    for (name, x) in regressors.iter().zip(&xs) {
        names.push(name.to_string());
        cols.push(rows.iter().map(|&r| x[r]).collect());
    }
    let y: Vec<f64> = rows.iter().map(|&r| y_full[r]).collect();
    let mut fit = ols_fit(DesignMatrix::new(names, cols)?, &y)?;
    fit.rows = rows;
    Ok(fit)
}
