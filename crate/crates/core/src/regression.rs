//! Least squares, cluster-robust covariance and Wald tests.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::linalg::{sandwich, vector_norm, Qr};
use crate::panel::PanelDataset;
use crate::within::{complete_cases, FeGroups, FixedEffectsSpec};

pub const INTERCEPT: &str = "(intercept)";

/// Named regressor columns over a common set of rows.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    reference_norms: Option<Vec<f64>>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidArgument(
                "design names and columns differ in length".into(),
            ));
        }
        let n = columns.first().map_or(0, Vec::len);
        if columns.is_empty() || n == 0 {
            return Err(Error::EmptyDesign);
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    rows: n,
                    columns: col.len(),
                });
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "column `{name}` has non-finite entries"
                )));
            }
        }
        let mut sorted = names.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate column names".into()));
        }
        Ok(DesignMatrix {
            names,
            columns,
            reference_norms: None,
        })
    }

    /// Scales used to judge aliasing, typically the norms of the columns
    /// before fixed effects were swept out.
    pub fn with_reference_norms(mut self, norms: Vec<f64>) -> Self {
        assert_eq!(norms.len(), self.columns.len());
        self.reference_norms = Some(norms);
        self
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CovarianceKind {
    Classical,
    Hc1,
    Cr1,
}

#[derive(Debug, Clone, Serialize)]
pub struct Covariance {
    pub kind: CovarianceKind,
    /// Full `k × k` over all design columns; aliased rows and columns are NaN.
    pub matrix: Vec<Vec<f64>>,
    pub cluster_count: Option<usize>,
    /// Denominator degrees of freedom for F tests.
    pub df: f64,
}

/// Outcome of a least-squares fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub names: Vec<String>,
    /// NaN where the column is aliased.
    pub coefficients: Vec<f64>,
    pub aliased: Vec<bool>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    pub n_obs: usize,
    pub rank: usize,
    /// Dataset row of each estimation row, when fitted from a panel.
    pub rows: Vec<usize>,
    pub covariance: Option<Covariance>,
    design: Arc<DesignMatrix>,
    kept: Vec<usize>,
    xtx_inv: Vec<Vec<f64>>,
    groups: Option<FeGroups>,
}

impl FitResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Estimate for `name`; `None` if absent or aliased.
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index(name)
            .filter(|&i| !self.aliased[i])
            .map(|i| self.coefficients[i])
    }

    pub fn is_aliased(&self, name: &str) -> bool {
        self.index(name).is_some_and(|i| self.aliased[i])
    }

    pub fn aliased_names(&self) -> Vec<&str> {
        self.names
            .iter()
            .zip(&self.aliased)
            .filter(|(_, a)| **a)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    /// Fixed-effect groups absorbed before the fit, if any.
    pub fn groups(&self) -> Option<&FeGroups> {
        self.groups.as_ref()
    }

    /// Degrees of freedom absorbed by fixed effects.
    pub fn absorbed_dof(&self) -> usize {
        self.groups.as_ref().map_or(0, FeGroups::absorbed_dof)
    }

    pub fn df_resid(&self) -> f64 {
        self.n_obs as f64 - (self.rank + self.absorbed_dof()) as f64
    }

    pub fn standard_error(&self, name: &str) -> Option<f64> {
        let cov = self.covariance.as_ref()?;
        let i = self.index(name)?;
        (!self.aliased[i]).then(|| cov.matrix[i][i].max(0.0).sqrt())
    }

    /// Weight vector over `names` with the given `(name, weight)` entries.
    pub fn weights(&self, terms: &[(&str, f64)]) -> Result<Vec<f64>> {
        let mut w = vec![0.0; self.names.len()];
        for (name, weight) in terms {
            let i = self
                .index(name)
                .ok_or_else(|| Error::MissingCoefficient(name.to_string()))?;
            w[i] += weight;
        }
        Ok(w)
    }

    /// `w'β` and `w'Vw`; fails if `w` loads on an aliased coefficient.
    pub fn linear_combination(&self, w: &[f64]) -> Result<(f64, f64)> {
        let cov = self.covariance.as_ref().ok_or(Error::MissingCovariance)?;
        let mut est = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            if wi != 0.0 {
                if self.aliased[i] {
                    return Err(Error::MissingCoefficient(self.names[i].clone()));
                }
                est += wi * self.coefficients[i];
            }
        }
        let mut var = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            for (j, &wj) in w.iter().enumerate() {
                if wj != 0.0 {
                    var += wi * wj * cov.matrix[i][j];
                }
            }
        }
        Ok((est, var.max(0.0)))
    }

    fn expand(&self, small: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let k = self.names.len();
        let mut full = vec![vec![f64::NAN; k]; k];
        for (a, &i) in self.kept.iter().enumerate() {
            for (b, &j) in self.kept.iter().enumerate() {
                full[i][j] = small[a][b];
            }
        }
        full
    }

    /// `σ² (X'X)^{-1}` with `σ² = SSR / df_resid`.
    pub fn classical_covariance(&self) -> Covariance {
        let df = self.df_resid();
        let s2 = if df > 0.0 { self.ssr / df } else { f64::NAN };
        let small: Vec<Vec<f64>> = self
            .xtx_inv
            .iter()
            .map(|row| row.iter().map(|v| v * s2).collect())
            .collect();
        Covariance {
            kind: CovarianceKind::Classical,
            matrix: self.expand(&small),
            cluster_count: None,
            df,
        }
    }

    /// Heteroskedasticity-robust covariance with the `n / (n − K)` factor.
    pub fn hc1_covariance(&self) -> Covariance {
        let k = self.kept.len();
        let cols: Vec<&[f64]> = self.kept.iter().map(|&j| &self.design.columns[j][..]).collect();
        let mut meat = vec![vec![0.0; k]; k];
        for (i, &e) in self.residuals.iter().enumerate() {
            let e2 = e * e;
            for a in 0..k {
                let xa = cols[a][i] * e2;
                for b in a..k {
                    meat[a][b] += xa * cols[b][i];
                }
            }
        }
        symmetrize(&mut meat);
        let n = self.n_obs as f64;
        let kk = (self.rank + self.absorbed_dof()) as f64;
        let scale = n / (n - kk);
        let mut v = sandwich(&self.xtx_inv, &meat);
        v.iter_mut().flatten().for_each(|x| *x *= scale);
        Covariance {
            kind: CovarianceKind::Hc1,
            matrix: self.expand(&v),
            cluster_count: None,
            df: n - kk,
        }
    }

    pub fn with_covariance(mut self, cov: Covariance) -> Self {
        self.covariance = Some(cov);
        self
    }
}

fn symmetrize(m: &mut [Vec<f64>]) {
    for a in 0..m.len() {
        for b in 0..a {
            m[a][b] = m[b][a];
        }
    }
}

/// Ordinary least squares with in-order aliasing of rank-deficient columns.
pub fn ols_fit(x: DesignMatrix, y: &[f64]) -> Result<FitResult> {
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            rows: y.len(),
            columns: x.n_rows(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("outcome has non-finite entries".into()));
    }
    let qr = Qr::factor(x.columns(), x.reference_norms.as_deref());
    if qr.rank() == 0 {
        return Err(Error::AllColumnsAliased);
    }
    if qr.rank() > y.len() {
        return Err(Error::EmptyDesign);
    }
    let beta_kept = qr.solve(y);
    let k = x.n_cols();
    let mut coefficients = vec![f64::NAN; k];
    let mut aliased = vec![true; k];
    for (b, &j) in beta_kept.iter().zip(qr.kept()) {
        coefficients[j] = *b;
        aliased[j] = false;
    }
    let mut residuals = y.to_vec();
    for (b, &j) in beta_kept.iter().zip(qr.kept()) {
        for (r, xv) in residuals.iter_mut().zip(&x.columns[j]) {
            *r -= b * xv;
        }
    }
    let ssr = residuals.iter().map(|e| e * e).sum();
    Ok(FitResult {
        names: x.names.clone(),
        coefficients,
        aliased,
        n_obs: y.len(),
        rank: qr.rank(),
        rows: (0..y.len()).collect(),
        residuals,
        ssr,
        covariance: None,
        kept: qr.kept().to_vec(),
        xtx_inv: qr.xtx_inverse(),
        design: Arc::new(x),
        groups: None,
    })
}

/// Cluster membership per estimation row, as dense codes.
#[derive(Debug, Clone)]
pub struct ClusterIds {
    codes: Vec<usize>,
    count: usize,
}

impl ClusterIds {
    pub fn from_codes<T: Ord + Copy>(ids: &[T]) -> Self {
        let mut levels = ids.to_vec();
        levels.sort_unstable();
        levels.dedup();
        let codes = ids
            .iter()
            .map(|k| levels.binary_search(k).expect("level present"))
            .collect();
        ClusterIds {
            codes,
            count: levels.len(),
        }
    }

    /// From a numeric column; NaN marks a missing id.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let mut bits = Vec::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            if v.is_nan() {
                return Err(Error::MissingClusterId(i));
            }
            // canonical ordering key for finite floats
            bits.push(ordered_bits(*v));
        }
        Ok(Self::from_codes(&bits))
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }
}

fn ordered_bits(v: f64) -> i64 {
    let v = if v == 0.0 { 0.0 } else { v };
    let b = v.to_bits() as i64;
    if b < 0 {
        b ^ i64::MAX
    } else {
        b
    }
}

/// Liang-Zeger sandwich with the CR1 factor `G/(G−1) · (N−1)/(N−K)`.
///
/// `K` counts the estimated slopes plus absorbed effects not nested within
/// clusters; entity effects nested in the clusters add nothing.
pub fn cluster_covariance(fit: &FitResult, clusters: &ClusterIds) -> Result<Covariance> {
    if clusters.codes.len() != fit.n_obs {
        return Err(Error::DimensionMismatch {
            rows: fit.n_obs,
            columns: clusters.codes.len(),
        });
    }
    if clusters.count < 2 {
        return Err(Error::SingleCluster);
    }
    let k = fit.kept.len();
    let cols: Vec<&[f64]> = fit.kept.iter().map(|&j| &fit.design.columns[j][..]).collect();
    let mut scores = vec![vec![0.0; k]; clusters.count];
    for (i, (&g, &e)) in clusters.codes.iter().zip(&fit.residuals).enumerate() {
        for (s, c) in scores[g].iter_mut().zip(&cols) {
            *s += c[i] * e;
        }
    }
    let mut meat = vec![vec![0.0; k]; k];
    for s in &scores {
        for a in 0..k {
            for b in a..k {
                meat[a][b] += s[a] * s[b];
            }
        }
    }
    symmetrize(&mut meat);
    let g = clusters.count as f64;
    let n = fit.n_obs as f64;
    let kk = (fit.rank + non_nested_absorbed(fit, clusters)) as f64;
    let scale = g / (g - 1.0) * (n - 1.0) / (n - kk);
    let mut v = sandwich(&fit.xtx_inv, &meat);
    v.iter_mut().flatten().for_each(|x| *x *= scale);
    Ok(Covariance {
        kind: CovarianceKind::Cr1,
        matrix: fit.expand(&v),
        cluster_count: Some(clusters.count),
        df: g - 1.0,
    })
}

fn non_nested_absorbed(fit: &FitResult, clusters: &ClusterIds) -> usize {
    let Some(groups) = fit.groups.as_ref() else {
        return 0;
    };
    let spec = groups.spec();
    let entity_nested = spec.entity_effects && {
        let mut owner = vec![usize::MAX; groups.n_entities()];
        groups
            .entity_codes()
            .iter()
            .zip(clusters.codes())
            .all(|(&e, &c)| {
                if owner[e] == usize::MAX {
                    owner[e] = c;
                }
                owner[e] == c
            })
    };
    match (spec.entity_effects, spec.time_effects) {
        (true, true) if entity_nested => groups.n_times() - 1,
        (true, false) if entity_nested => 0,
        _ => groups.absorbed_dof(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WaldTest {
    /// `None` when the restriction variance is identically zero.
    pub f: Option<f64>,
    pub df_num: usize,
    pub df_den: f64,
    pub p_value: Option<f64>,
    pub zero_variance: bool,
}

/// F test of `R β = r` using the attached covariance.
pub fn wald_test(fit: &FitResult, restrictions: &[Vec<f64>], values: &[f64]) -> Result<WaldTest> {
    let cov = fit.covariance.as_ref().ok_or(Error::MissingCovariance)?;
    let q = restrictions.len();
    if q == 0 || values.len() != q {
        return Err(Error::InvalidArgument(
            "restriction count must be positive and match values".into(),
        ));
    }
    if q > fit.rank {
        return Err(Error::SingularRestrictionVariance);
    }
    let k = fit.names.len();
    for row in restrictions {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                rows: k,
                columns: row.len(),
            });
        }
        if row.iter().zip(&fit.aliased).any(|(w, a)| *w != 0.0 && *a) {
            return Err(Error::SingularRestrictionVariance);
        }
    }
    let diff: Vec<f64> = restrictions
        .iter()
        .zip(values)
        .map(|(row, r)| {
            row.iter()
                .zip(&fit.coefficients)
                .filter(|(w, _)| **w != 0.0)
                .map(|(w, b)| w * b)
                .sum::<f64>()
                - r
        })
        .collect();
    let mut rvr = DMatrix::<f64>::zeros(q, q);
    for a in 0..q {
        for b in 0..q {
            let mut s = 0.0;
            for i in 0..k {
                if restrictions[a][i] == 0.0 {
                    continue;
                }
                for j in 0..k {
                    if restrictions[b][j] != 0.0 {
                        s += restrictions[a][i] * cov.matrix[i][j] * restrictions[b][j];
                    }
                }
            }
            rvr[(a, b)] = s;
        }
    }
    let df_den = cov.df;
    if rvr.iter().all(|v| *v == 0.0) {
        return Ok(WaldTest {
            f: None,
            df_num: q,
            df_den,
            p_value: None,
            zero_variance: true,
        });
    }
    // correlation scaling makes the singularity check scale-free
    let scale: Vec<f64> = (0..q).map(|a| rvr[(a, a)].sqrt()).collect();
    if scale.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::SingularRestrictionVariance);
    }
    let corr = DMatrix::from_fn(q, q, |a, b| rvr[(a, b)] / (scale[a] * scale[b]));
    let min_eig = corr.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < 1e-12 {
        return Err(Error::SingularRestrictionVariance);
    }
    let z = nalgebra::DVector::from_fn(q, |a, _| diff[a] / scale[a]);
    let chol = corr.cholesky().ok_or(Error::SingularRestrictionVariance)?;
    let f = z.dot(&chol.solve(&z)) / q as f64;
    let p = f_survival(f, q as f64, df_den);
    Ok(WaldTest {
        f: Some(f),
        df_num: q,
        df_den,
        p_value: Some(p),
        zero_variance: false,
    })
}

/// Upper tail of the F distribution.
pub fn f_survival(f: f64, df1: f64, df2: f64) -> f64 {
    if !f.is_finite() {
        return 0.0;
    }
    match FisherSnedecor::new(df1, df2) {
        Ok(dist) => dist.sf(f).clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}

/// How the estimation sample is clustered.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
pub enum ClusterBy {
    #[default]
    Entity,
    Column(String),
}

/// A regressor given as a full-length dataset column (NaN = missing).
#[derive(Debug, Clone)]
pub struct Regressor {
    pub name: String,
    pub values: Vec<f64>,
}

impl Regressor {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Regressor {
            name: name.into(),
            values,
        }
    }

    pub fn from_column(d: &PanelDataset, name: &str) -> Result<Self> {
        Ok(Regressor::new(name, d.column(name)?.to_vec()))
    }
}

fn cluster_source<'a>(d: &'a PanelDataset, by: &ClusterBy) -> Result<Option<&'a [f64]>> {
    match by {
        ClusterBy::Entity => Ok(None),
        ClusterBy::Column(c) => d.column(c).map(Some),
    }
}

/// Fixed-effects regression of `outcome` on `regressors` over their
/// complete-case sample, optionally with cluster-robust covariance.
///
/// Without fixed effects an intercept column is prepended.
pub fn fit_panel_model(
    d: &PanelDataset,
    outcome: &str,
    regressors: &[Regressor],
    fe: FixedEffectsSpec,
    cluster: Option<&ClusterBy>,
) -> Result<FitResult> {
    let y_full = d.column(outcome)?;
    let cluster_col = match cluster {
        Some(by) => cluster_source(d, by)?,
        None => None,
    };
    let mut required: Vec<&[f64]> = vec![y_full];
    required.extend(regressors.iter().map(|r| &r.values[..]));
    if let Some(c) = cluster_col {
        required.push(c);
    }
    let rows = complete_cases(&required, d.n_rows());
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let groups = fe.any().then(|| FeGroups::new(d, &rows, fe));
    let take = |v: &[f64]| -> Vec<f64> { rows.iter().map(|&r| v[r]).collect() };
    let mut y = take(y_full);
    let mut names = Vec::new();
    let mut cols = Vec::new();
    let mut norms = Vec::new();
    if groups.is_none() {
        names.push(INTERCEPT.to_string());
        cols.push(vec![1.0; rows.len()]);
        norms.push((rows.len() as f64).sqrt());
    }
    for r in regressors {
        let mut c = take(&r.values);
        norms.push(vector_norm(&c));
        if let Some(g) = &groups {
            g.demean(&mut c)?;
        }
        names.push(r.name.clone());
        cols.push(c);
    }
    if let Some(g) = &groups {
        g.demean(&mut y)?;
    }
    let design = DesignMatrix::new(names, cols)?.with_reference_norms(norms);
    let mut fit = ols_fit(design, &y)?;
    fit.rows = rows;
    fit.groups = groups;
    if let Some(by) = cluster {
        let ids = cluster_ids_for(d, &fit.rows, by)?;
        fit.covariance = Some(cluster_covariance(&fit, &ids)?);
    }
    Ok(fit)
}

/// Cluster ids of a fit's estimation rows.
pub fn cluster_ids_for(d: &PanelDataset, rows: &[usize], by: &ClusterBy) -> Result<ClusterIds> {
    match cluster_source(d, by)? {
        None => Ok(ClusterIds::from_codes(
            &rows.iter().map(|&r| d.row_entities()[r]).collect::<Vec<_>>(),
        )),
        Some(c) => ClusterIds::from_values(&rows.iter().map(|&r| c[r]).collect::<Vec<_>>()),
    }
}

/// Targets residualized on controls and fixed effects over their shared
/// complete-case sample.
#[derive(Debug, Clone)]
pub struct Residualized {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub rows: Vec<usize>,
}

impl Residualized {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i][..])
    }
}

/// Frisch-Waugh-Lovell residualization. Without fixed effects but with
/// controls, an intercept joins the controls; with neither, targets pass
/// through unchanged.
pub fn fwl_residualize(
    d: &PanelDataset,
    targets: &[&str],
    controls: &[&str],
    fe: FixedEffectsSpec,
) -> Result<Residualized> {
    let target_cols: Vec<&[f64]> = targets.iter().map(|t| d.column(t)).collect::<Result<_>>()?;
    let control_cols: Vec<&[f64]> = controls.iter().map(|t| d.column(t)).collect::<Result<_>>()?;
    let mut all = target_cols.clone();
    all.extend(control_cols.iter().copied());
    let rows = complete_cases(&all, d.n_rows());
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let take = |v: &[f64]| -> Vec<f64> { rows.iter().map(|&r| v[r]).collect() };
    let groups = fe.any().then(|| FeGroups::new(d, &rows, fe));
    let mut ctrl: Vec<Vec<f64>> = Vec::new();
    let mut norms = Vec::new();
    if groups.is_none() && !controls.is_empty() {
        ctrl.push(vec![1.0; rows.len()]);
        norms.push((rows.len() as f64).sqrt());
    }
    for c in &control_cols {
        let mut v = take(c);
        norms.push(vector_norm(&v));
        if let Some(g) = &groups {
            g.demean(&mut v)?;
        }
        ctrl.push(v);
    }
    let qr = (!ctrl.is_empty()).then(|| Qr::factor(&ctrl, Some(&norms)));
    let mut columns = Vec::with_capacity(targets.len());
    for t in &target_cols {
        let mut v = take(t);
        if let Some(g) = &groups {
            g.demean(&mut v)?;
        }
        if let Some(qr) = &qr {
            v = qr.residual(&v);
        }
        columns.push(v);
    }
    Ok(Residualized {
        names: targets.iter().map(|s| s.to_string()).collect(),
        columns,
        rows,
    })
}

/// Coefficient table keyed by name, for serialization.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub coefficients: BTreeMap<String, Option<f64>>,
    pub standard_errors: BTreeMap<String, Option<f64>>,
    pub aliased: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<Option<f64>>>>,
    pub covariance_kind: Option<CovarianceKind>,
    pub n_obs: usize,
    pub cluster_count: Option<usize>,
    pub ssr: f64,
}

impl FitResult {
    pub fn summary(&self, include_covariance: bool) -> FitSummary {
        let finite = |v: f64| v.is_finite().then_some(v);
        FitSummary {
            coefficients: self
                .names
                .iter()
                .zip(&self.coefficients)
                .map(|(n, b)| (n.clone(), finite(*b)))
                .collect(),
            standard_errors: self
                .names
                .iter()
                .map(|n| (n.clone(), self.standard_error(n)))
                .collect(),
            aliased: self.aliased_names().into_iter().map(String::from).collect(),
            covariance: include_covariance
                .then_some(self.covariance.as_ref())
                .flatten()
                .map(|c| {
                    c.matrix
                        .iter()
                        .map(|row| row.iter().map(|v| finite(*v)).collect())
                        .collect()
                }),
            covariance_kind: self.covariance.as_ref().map(|c| c.kind),
            n_obs: self.n_obs,
            cluster_count: self.covariance.as_ref().and_then(|c| c.cluster_count),
            ssr: self.ssr,
        }
    }
}
