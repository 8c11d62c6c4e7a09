//! Two-way fixed-effects within transformation for unbalanced panels.
//!
//! Entity and year means are removed by alternating projections until a full
//! sweep moves no value by more than the tolerance. Balanced panels converge
//! after the second sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

pub const DEMEAN_TOLERANCE: f64 = 1e-10;
pub const DEMEAN_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedEffectsSpec {
    pub entity_effects: bool,
    pub time_effects: bool,
}

impl FixedEffectsSpec {
    pub const TWO_WAY: Self = FixedEffectsSpec {
        entity_effects: true,
        time_effects: true,
    };
    pub const ENTITY: Self = FixedEffectsSpec {
        entity_effects: true,
        time_effects: false,
    };
    pub const NONE: Self = FixedEffectsSpec {
        entity_effects: false,
        time_effects: false,
    };

    pub fn any(&self) -> bool {
        self.entity_effects || self.time_effects
    }
}

impl Default for FixedEffectsSpec {
    fn default() -> Self {
        Self::TWO_WAY
    }
}

/// Group structure of an estimation sample: dense entity and year codes per
/// sample row.
#[derive(Debug, Clone)]
pub struct FeGroups {
    spec: FixedEffectsSpec,
    entity: Vec<usize>,
    time: Vec<usize>,
    entity_counts: Vec<f64>,
    time_counts: Vec<f64>,
}

fn dense_codes<T: Ord + Copy>(keys: &[T]) -> (Vec<usize>, usize) {
    let mut levels: Vec<T> = keys.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let codes = keys
        .iter()
        .map(|k| levels.binary_search(k).expect("level present"))
        .collect();
    (codes, levels.len())
}

impl FeGroups {
    /// Groups for the dataset rows listed in `rows`.
    pub fn new(d: &PanelDataset, rows: &[usize], spec: FixedEffectsSpec) -> Self {
        let entities: Vec<usize> = rows.iter().map(|&r| d.row_entities()[r]).collect();
        let years: Vec<i64> = rows.iter().map(|&r| d.years()[r]).collect();
        Self::from_keys(&entities, &years, spec)
    }

    pub fn from_keys<E: Ord + Copy, T: Ord + Copy>(
        entities: &[E],
        years: &[T],
        spec: FixedEffectsSpec,
    ) -> Self {
        assert_eq!(entities.len(), years.len());
        let (entity, n_e) = dense_codes(entities);
        let (time, n_t) = dense_codes(years);
        let mut entity_counts = vec![0.0; n_e];
        let mut time_counts = vec![0.0; n_t];
        for (&e, &t) in entity.iter().zip(&time) {
            entity_counts[e] += 1.0;
            time_counts[t] += 1.0;
        }
        FeGroups {
            spec,
            entity,
            time,
            entity_counts,
            time_counts,
        }
    }

    pub fn spec(&self) -> FixedEffectsSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.entity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entity.is_empty()
    }

    pub fn entity_codes(&self) -> &[usize] {
        &self.entity
    }

    pub fn time_codes(&self) -> &[usize] {
        &self.time
    }

    pub fn n_entities(&self) -> usize {
        self.entity_counts.len()
    }

    pub fn n_times(&self) -> usize {
        self.time_counts.len()
    }

    /// Degrees of freedom absorbed by the active effects, assuming a
    /// connected entity-year graph.
    pub fn absorbed_dof(&self) -> usize {
        match (self.spec.entity_effects, self.spec.time_effects) {
            (true, true) => self.n_entities() + self.n_times() - 1,
            (true, false) => self.n_entities(),
            (false, true) => self.n_times(),
            (false, false) => 0,
        }
    }

    fn sweep(codes: &[usize], counts: &[f64], col: &mut [f64], sums: &mut Vec<f64>) -> f64 {
        sums.clear();
        sums.resize(counts.len(), 0.0);
        for (&g, &v) in codes.iter().zip(col.iter()) {
            sums[g] += v;
        }
        let mut max_change: f64 = 0.0;
        for (s, &c) in sums.iter_mut().zip(counts) {
            *s /= c;
            max_change = max_change.max(s.abs());
        }
        for (&g, v) in codes.iter().zip(col.iter_mut()) {
            *v -= sums[g];
        }
        max_change
    }

    /// Removes the active effects from `col` in place; returns the number of
    /// sweeps used.
    ///
    /// Convergence is declared when a sweep changes no value by more than
    /// `DEMEAN_TOLERANCE` times the column scale (at least 1).
    pub fn demean(&self, col: &mut [f64]) -> Result<usize> {
        assert_eq!(col.len(), self.len());
        let mut sums = Vec::new();
        match (self.spec.entity_effects, self.spec.time_effects) {
            (false, false) => Ok(0),
            (true, false) => {
                Self::sweep(&self.entity, &self.entity_counts, col, &mut sums);
                Ok(1)
            }
            (false, true) => {
                Self::sweep(&self.time, &self.time_counts, col, &mut sums);
                Ok(1)
            }
            (true, true) => {
                let scale = col.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
                let tol = DEMEAN_TOLERANCE * scale;
                for sweep in 1..=DEMEAN_MAX_SWEEPS {
                    let a = Self::sweep(&self.entity, &self.entity_counts, col, &mut sums);
                    let b = Self::sweep(&self.time, &self.time_counts, col, &mut sums);
                    if sweep > 1 && a.max(b) < tol {
                        return Ok(sweep);
                    }
                }
                Err(Error::NoConvergence {
                    iterations: DEMEAN_MAX_SWEEPS,
                })
            }
        }
    }

    /// Largest absolute per-entity or per-year mean of `col`.
    pub fn max_group_mean(&self, col: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (codes, counts, active) in [
            (&self.entity, &self.entity_counts, self.spec.entity_effects),
            (&self.time, &self.time_counts, self.spec.time_effects),
        ] {
            if !active {
                continue;
            }
            let mut sums = vec![0.0; counts.len()];
            for (&g, &v) in codes.iter().zip(col) {
                sums[g] += v;
            }
            for (s, c) in sums.iter().zip(counts.iter()) {
                worst = worst.max((s / c).abs());
            }
        }
        worst
    }
}

/// Within-transformed columns on the complete-case sample.
#[derive(Debug, Clone)]
pub struct WithinTransformed {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    /// Dataset row of each sample row.
    pub rows: Vec<usize>,
    pub groups: FeGroups,
    pub sweeps: usize,
}

/// Rows where every listed column is non-missing.
pub fn complete_cases(columns: &[&[f64]], n_rows: usize) -> Vec<usize> {
    (0..n_rows)
        .filter(|&r| columns.iter().all(|c| !c[r].is_nan()))
        .collect()
}

/// Demeans `vars` on the rows where all of them are observed.
pub fn within_transform(
    d: &PanelDataset,
    vars: &[&str],
    fe: FixedEffectsSpec,
) -> Result<WithinTransformed> {
    if !fe.any() {
        return Err(Error::InvalidArgument(
            "within transform requires entity or time effects".into(),
        ));
    }
    let raw: Vec<&[f64]> = vars.iter().map(|v| d.column(v)).collect::<Result<_>>()?;
    let rows = complete_cases(&raw, d.n_rows());
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let groups = FeGroups::new(d, &rows, fe);
    let mut sweeps = 0;
    let mut columns = Vec::with_capacity(vars.len());
    for col in &raw {
        let mut v: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
        sweeps = sweeps.max(groups.demean(&mut v)?);
        columns.push(v);
    }
    Ok(WithinTransformed {
        names: vars.iter().map(|s| s.to_string()).collect(),
        columns,
        rows,
        groups,
        sweeps,
    })
}
