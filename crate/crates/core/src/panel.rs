//! Entity × year panel storage, CSV ingestion and derived variables.
//!
//! Rows are grouped by entity (in order of first appearance) and sorted by
//! year within each entity. Missing cells are stored as `NaN`; every column
//! carries a lineage tag naming the operation that produced it.

use std::collections::HashMap;
use std::io::Read;
use std::ops::Range;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Canonical column names used by the simulator and the command line.
pub mod columns {
    pub const ENTITY: &str = "entity_id";
    pub const YEAR: &str = "year";
    pub const SCHOOL_SPEND: &str = "school_spend";
    pub const POPULATION: &str = "population";
    pub const VOTES_NONAGR: &str = "votes_nonagr";
    pub const VOTES_LAND: &str = "votes_land";
    pub const DEFLATOR: &str = "deflator";
    pub const HIGH_LAND_CONC: &str = "high_land_conc";

    // derived
    pub const SHARE: &str = "share";
    pub const LOG_SPEND: &str = "log_spend_pc";
    pub const INV_VOTES: &str = "inv_votes";
    pub const LOG_POP: &str = "log_pop";
}

pub const LINEAGE_INPUT: &str = "input";

#[derive(Debug, Clone)]
struct Column {
    values: Arc<[f64]>,
    lineage: Arc<str>,
}

/// Rectangular entity × year observations with named numeric variables.
///
/// Immutable once built: every derivation returns a new dataset sharing the
/// unchanged columns.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    entity_labels: Arc<[String]>,
    entity_offsets: Arc<[usize]>,
    entity_of_row: Arc<[usize]>,
    years: Arc<[i64]>,
    columns: Vec<(String, Column)>,
}

/// Location of a single cell, used in derivation reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRef {
    pub entity: String,
    pub year: i64,
    pub column: String,
}

impl PanelDataset {
    pub fn n_rows(&self) -> usize {
        self.years.len()
    }

    pub fn n_entities(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn entity_label(&self, entity: usize) -> &str {
        &self.entity_labels[entity]
    }

    pub fn entity_rows(&self, entity: usize) -> Range<usize> {
        self.entity_offsets[entity]..self.entity_offsets[entity + 1]
    }

    /// Dense entity code of each row.
    pub fn row_entities(&self) -> &[usize] {
        &self.entity_of_row
    }

    pub fn years(&self) -> &[i64] {
        &self.years
    }

    pub fn variable_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|(n, _)| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| &c.values[..])
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn lineage(&self, name: &str) -> Result<&str> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| &*c.lineage)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Row index of `(entity, year)`, if observed.
    pub fn row_of(&self, entity: usize, year: i64) -> Option<usize> {
        let range = self.entity_rows(entity);
        let start = range.start;
        self.years[range]
            .binary_search(&year)
            .ok()
            .map(|offset| start + offset)
    }

    /// Number of calendar years missing between each entity's first and last
    /// observation.
    pub fn gap_counts(&self) -> Vec<usize> {
        (0..self.n_entities())
            .map(|e| {
                let ys = &self.years[self.entity_rows(e)];
                match (ys.first(), ys.last()) {
                    (Some(a), Some(b)) => (b - a + 1) as usize - ys.len(),
                    _ => 0,
                }
            })
            .collect()
    }

    pub fn cell_ref(&self, row: usize, column: &str) -> CellRef {
        CellRef {
            entity: self.entity_labels[self.entity_of_row[row]].clone(),
            year: self.years[row],
            column: column.to_string(),
        }
    }

    fn infinite(&self, row: usize, column: &str) -> Error {
        let cell = self.cell_ref(row, column);
        Error::InfiniteValue {
            column: cell.column,
            entity: cell.entity,
            year: cell.year,
        }
    }

    /// Returns a dataset with `name` added, or replaced if it already exists.
    /// Infinite values are rejected; missing values are NaN.
    pub fn with_column(&self, name: &str, values: Vec<f64>, lineage: &str) -> Result<Self> {
        if values.len() != self.n_rows() {
            return Err(Error::DimensionMismatch {
                rows: self.n_rows(),
                columns: values.len(),
            });
        }
        if let Some(r) = values.iter().position(|v| v.is_infinite()) {
            return Err(self.infinite(r, name));
        }
        let column = Column {
            values: values.into(),
            lineage: lineage.into(),
        };
        let mut out = self.clone();
        match out.columns.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = column,
            None => out.columns.push((name.to_string(), column)),
        }
        Ok(out)
    }

    /// Keeps the rows for which `keep` returns true. Entities left without
    /// rows are dropped.
    pub fn filter_rows(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let rows: Vec<usize> = (0..self.n_rows()).filter(|&r| keep(r)).collect();
        let mut labels = Vec::new();
        let mut offsets = vec![0];
        let mut entity_of_row = Vec::with_capacity(rows.len());
        let mut last = None;
        for &r in &rows {
            let e = self.entity_of_row[r];
            if last != Some(e) {
                if last.is_some() {
                    offsets.push(entity_of_row.len());
                }
                labels.push(self.entity_labels[e].clone());
                last = Some(e);
            }
            entity_of_row.push(labels.len() - 1);
        }
        if !rows.is_empty() {
            offsets.push(entity_of_row.len());
        }
        let years: Vec<i64> = rows.iter().map(|&r| self.years[r]).collect();
        let columns = self
            .columns
            .iter()
            .map(|(n, c)| {
                let values: Vec<f64> = rows.iter().map(|&r| c.values[r]).collect();
                (
                    n.clone(),
                    Column {
                        values: values.into(),
                        lineage: c.lineage.clone(),
                    },
                )
            })
            .collect();
        PanelDataset {
            entity_labels: labels.into(),
            entity_offsets: offsets.into(),
            entity_of_row: entity_of_row.into(),
            years: years.into(),
            columns,
        }
    }

    /// Writes the dataset as CSV with `entity_id` and `year` leading.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![columns::ENTITY.to_string(), columns::YEAR.to_string()];
        header.extend(self.columns.iter().map(|(n, _)| n.clone()));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for r in 0..self.n_rows() {
            record.clear();
            record.push(self.entity_labels[self.entity_of_row[r]].clone());
            record.push(self.years[r].to_string());
            for (_, c) in &self.columns {
                let v = c.values[r];
                record.push(if v.is_nan() {
                    "NA".to_string()
                } else {
                    format!("{v}")
                });
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Accumulates rows in arbitrary order and produces a sorted [`PanelDataset`].
#[derive(Debug)]
pub struct PanelBuilder {
    names: Vec<String>,
    entity_codes: HashMap<String, usize>,
    entity_labels: Vec<String>,
    rows: Vec<(usize, i64, Vec<f64>)>,
}

impl PanelBuilder {
    pub fn new<S: Into<String>>(variables: impl IntoIterator<Item = S>) -> Self {
        PanelBuilder {
            names: variables.into_iter().map(Into::into).collect(),
            entity_codes: HashMap::new(),
            entity_labels: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, entity: &str, year: i64, values: Vec<f64>) {
        assert_eq!(values.len(), self.names.len(), "row width mismatch");
        let next = self.entity_labels.len();
        let code = *self.entity_codes.entry(entity.to_string()).or_insert(next);
        if code == next {
            self.entity_labels.push(entity.to_string());
        }
        self.rows.push((code, year, values));
    }

    pub fn build(mut self) -> Result<PanelDataset> {
        if self.rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        self.rows.sort_by_key(|(e, y, _)| (*e, *y));
        for pair in self.rows.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::DuplicateKey {
                    entity: self.entity_labels[pair[0].0].clone(),
                    year: pair[0].1,
                });
            }
        }
        let n = self.rows.len();
        let mut offsets = vec![0; self.entity_labels.len() + 1];
        for (e, _, _) in &self.rows {
            offsets[e + 1] += 1;
        }
        for e in 0..self.entity_labels.len() {
            offsets[e + 1] += offsets[e];
        }
        let entity_of_row: Vec<usize> = self.rows.iter().map(|r| r.0).collect();
        let years: Vec<i64> = self.rows.iter().map(|r| r.1).collect();
        let columns = self
            .names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let values: Vec<f64> = self.rows.iter().map(|r| r.2[j]).collect();
                (
                    name.clone(),
                    Column {
                        values: values.into(),
                        lineage: LINEAGE_INPUT.into(),
                    },
                )
            })
            .collect();
        debug_assert_eq!(offsets[self.entity_labels.len()], n);
        let d = PanelDataset {
            entity_labels: self.entity_labels.into(),
            entity_offsets: offsets.into(),
            entity_of_row: entity_of_row.into(),
            years: years.into(),
            columns,
        };
        for (name, c) in &d.columns {
            if let Some(r) = c.values.iter().position(|v| v.is_infinite()) {
                return Err(d.infinite(r, name));
            }
        }
        Ok(d)
    }
}

/// Maps CSV headers onto the panel keys and variables.
#[derive(Debug, Clone)]
pub struct Schema {
    pub entity: String,
    pub year: String,
    /// `(variable name, CSV column)` pairs; `None` loads every other column
    /// under its header name.
    pub variables: Option<Vec<(String, String)>>,
}

impl Schema {
    /// Canonical key names, all remaining columns loaded as variables.
    pub fn canonical() -> Self {
        Schema {
            entity: columns::ENTITY.into(),
            year: columns::YEAR.into(),
            variables: None,
        }
    }

    pub fn with_variable(mut self, name: &str, column: &str) -> Self {
        self.variables
            .get_or_insert_with(Vec::new)
            .push((name.into(), column.into()));
        self
    }
}

fn parse_cell(raw: &str) -> f64 {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") {
        return f64::NAN;
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .unwrap_or(f64::NAN)
}

fn parse_year(raw: &str, field: &str, line: usize) -> Result<i64> {
    let s = raw.trim();
    s.parse::<i64>()
        .ok()
        .or_else(|| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0 && v.is_finite())
                .map(|v| v as i64)
        })
        .ok_or_else(|| Error::InvalidKey {
            field: field.into(),
            value: raw.into(),
            line,
        })
}

/// Reads a panel from CSV. Unparseable numeric cells become missing; a
/// repeated `(entity, year)` pair is an error.
pub fn load_panel<R: Read>(source: R, schema: &Schema) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyInput);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let entity_idx = find(&schema.entity)?;
    let year_idx = find(&schema.year)?;
    let variables: Vec<(String, usize)> = match &schema.variables {
        Some(list) => list
            .iter()
            .map(|(name, col)| Ok((name.clone(), find(col)?)))
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != entity_idx && *i != year_idx)
            .map(|(i, h)| (h.to_string(), i))
            .collect(),
    };
    if variables.is_empty() {
        return Err(Error::MissingColumn("<variable>".into()));
    }
    let mut builder = PanelBuilder::new(variables.iter().map(|(n, _)| n.clone()));
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let entity = record.get(entity_idx).unwrap_or("").trim();
        if entity.is_empty() {
            return Err(Error::InvalidKey {
                field: schema.entity.clone(),
                value: String::new(),
                line,
            });
        }
        let year = parse_year(record.get(year_idx).unwrap_or(""), &schema.year, line)?;
        let values = variables
            .iter()
            .map(|(_, idx)| parse_cell(record.get(*idx).unwrap_or("")))
            .collect();
        builder.push(entity, year, values);
    }
    builder.build()
}

/// Adds `out = nonagr / (nonagr + land)`; missing where the total is zero.
pub fn derive_vote_share(
    d: &PanelDataset,
    nonagr_col: &str,
    land_col: &str,
    out: &str,
) -> Result<PanelDataset> {
    let nonagr = d.column(nonagr_col)?;
    let land = d.column(land_col)?;
    let mut share = Vec::with_capacity(d.n_rows());
    for r in 0..d.n_rows() {
        let (n, l) = (nonagr[r], land[r]);
        if n < 0.0 || l < 0.0 {
            let cell = d.cell_ref(r, nonagr_col);
            return Err(Error::NegativeVotes {
                entity: cell.entity,
                year: cell.year,
            });
        }
        let total = n + l;
        share.push(if total > 0.0 { n / total } else { f64::NAN });
    }
    d.with_column(out, share, "derive_vote_share")
}

/// Adds `out = ln(spend / deflator / pop)`. Non-positive inputs and ratios
/// that overflow are set missing and reported rather than aborting.
pub fn derive_log_per_capita(
    d: &PanelDataset,
    spend_col: &str,
    pop_col: &str,
    deflator_col: Option<&str>,
    out: &str,
) -> Result<(PanelDataset, Vec<CellRef>)> {
    let spend = d.column(spend_col)?;
    let pop = d.column(pop_col)?;
    let deflator = deflator_col.map(|c| d.column(c)).transpose()?;
    let mut bad = Vec::new();
    let mut values = Vec::with_capacity(d.n_rows());
    for r in 0..d.n_rows() {
        let defl = deflator.map_or(1.0, |c| c[r]);
        let inputs = [(spend_col, spend[r]), (pop_col, pop[r])];
        let mut v = f64::NAN;
        if inputs.iter().all(|(_, x)| !x.is_nan()) && !defl.is_nan() {
            match inputs.iter().find(|(_, x)| *x <= 0.0) {
                Some((col, _)) => bad.push(d.cell_ref(r, col)),
                None if defl <= 0.0 => bad.push(d.cell_ref(r, deflator_col.unwrap_or(""))),
                None => {
                    v = (spend[r] / defl / pop[r]).ln();
                    if !v.is_finite() {
                        bad.push(d.cell_ref(r, spend_col));
                        v = f64::NAN;
                    }
                }
            }
        }
        values.push(v);
    }
    Ok((d.with_column(out, values, "derive_log_per_capita")?, bad))
}

/// Adds `f(x)` of an existing column under a new name, propagating missing.
pub fn derive_map(
    d: &PanelDataset,
    src: &str,
    out: &str,
    lineage: &str,
    f: impl Fn(f64) -> f64,
) -> Result<PanelDataset> {
    let values = d
        .column(src)?
        .iter()
        .map(|&x| if x.is_nan() { f64::NAN } else { f(x) })
        .collect();
    d.with_column(out, values, lineage)
}

pub fn lag_name(var: &str, k: usize) -> String {
    if k == 0 {
        var.to_string()
    } else {
        format!("{var}.lag{k}")
    }
}

pub fn lead_name(var: &str, k: usize) -> String {
    if k == 0 {
        var.to_string()
    } else {
        format!("{var}.lead{k}")
    }
}

/// Values of `var` shifted by `offset` calendar years within each entity
/// (negative offsets look back). Missing when the target year is absent.
pub fn shifted(d: &PanelDataset, var: &str, offset: i64) -> Result<Vec<f64>> {
    let src = d.column(var)?;
    let mut out = vec![f64::NAN; d.n_rows()];
    for e in 0..d.n_entities() {
        for r in d.entity_rows(e) {
            if let Some(t) = d.row_of(e, d.years[r] + offset) {
                out[r] = src[t];
            }
        }
    }
    Ok(out)
}

/// Adds `var.lead1..var.lead{n_leads}` and `var.lag1..var.lag{n_lags}`.
pub fn build_lags_leads(
    d: &PanelDataset,
    var: &str,
    n_leads: usize,
    n_lags: usize,
) -> Result<PanelDataset> {
    d.column(var)?;
    let mut out = d.clone();
    for k in 1..=n_lags {
        let values = shifted(d, var, -(k as i64))?;
        out = out.with_column(&lag_name(var, k), values, "build_lags_leads")?;
    }
    for k in 1..=n_leads {
        let values = shifted(d, var, k as i64)?;
        out = out.with_column(&lead_name(var, k), values, "build_lags_leads")?;
    }
    Ok(out)
}

/// Derives the analysis variables from the canonical input columns: vote
/// share, log real per-capita spending (deflated when a deflator column is
/// present), inverse total votes and log population.
///
/// Returns the cells dropped for non-positive spending inputs.
pub fn standard_variables(d: &PanelDataset) -> Result<(PanelDataset, Vec<CellRef>)> {
    use columns::*;
    let d = derive_vote_share(d, VOTES_NONAGR, VOTES_LAND, SHARE)?;
    let deflator = d.has_column(DEFLATOR).then_some(DEFLATOR);
    let (d, bad) = derive_log_per_capita(&d, SCHOOL_SPEND, POPULATION, deflator, LOG_SPEND)?;
    let nonagr = d.column(VOTES_NONAGR)?;
    let land = d.column(VOTES_LAND)?;
    let inv: Vec<f64> = nonagr
        .iter()
        .zip(land)
        .map(|(n, l)| {
            let total = n + l;
            if total > 0.0 {
                1.0 / total
            } else {
                f64::NAN
            }
        })
        .collect();
    let d = d.with_column(INV_VOTES, inv, "inverse_total_votes")?;
    let d = derive_map(&d, POPULATION, LOG_POP, "log_population", |p| {
        if p > 0.0 {
            p.ln()
        } else {
            f64::NAN
        }
    })?;
    Ok((d, bad))
}
