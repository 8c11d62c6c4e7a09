//! Command-line front end.
//!
//! Every subcommand collects its artifacts in memory and writes them only
//! after the whole run succeeded, together with a `run_meta.json`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::binscatter::{binscatter, BinscatterSpec};
use crate::dgp::{simulate_panel, DgpConfig};
use crate::error::{Error, ErrorCategory, Result};
use crate::event_study::{
    cumulative_effects, fit_distributed_lag, fit_regime_distributed_lag, pretrend_test, to_event_study,
    DistributedLagSpec, Regime,
};
use crate::montecarlo::{monte_carlo, EstimatorSpec};
use crate::panel::{columns, load_panel, standard_variables, PanelDataset, Schema};
use crate::regression::{wald_test, ClusterBy};
use crate::threshold::{
    bootstrap_linearity_test, default_controls, estimate_threshold, fit_threshold, regime_difference_test,
    Estimate, GridSpec, ThresholdFit, ThresholdSpec,
};
use crate::within::FixedEffectsSpec;

pub const SOFTWARE: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
pub const META_FILE: &str = "run_meta.json";

#[derive(Parser, Debug)]
#[command(
    name = "kinkpanel",
    version,
    about = "Threshold and event-study panel regressions",
    args_override_self = true
)]
pub struct Cli {
    /// Worker threads for grid, bootstrap and Monte Carlo loops.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON object whose keys supply flags for the subcommand.
    #[arg(long, global = true)]
    pub run_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Simulate a synthetic panel.
    Simulate(SimulateArgs),
    /// Summary statistics table.
    Summary(SummaryArgs),
    /// Threshold regression at a fixed or estimated split.
    Threshold(ThresholdArgs),
    /// Distributed-lag event study.
    EventStudy(EventStudyArgs),
    /// Covariate-adjusted binned scatterplot.
    Binscatter(BinscatterArgs),
    /// Monte Carlo evaluation of an estimator.
    Montecarlo(MonteCarloArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Summary(_) => "summary",
            Command::Threshold(_) => "threshold",
            Command::EventStudy(_) => "event-study",
            Command::Binscatter(_) => "binscatter",
            Command::Montecarlo(_) => "montecarlo",
        }
    }
}

const SUBCOMMANDS: [&str; 6] = ["simulate", "summary", "threshold", "event-study", "binscatter", "montecarlo"];

fn parse_pair(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once('=') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("expected KEY=VALUE, got `{s}`")),
    }
}

#[derive(Args, Debug, Serialize)]
pub struct DataArgs {
    /// Panel CSV with one row per entity-year.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = columns::ENTITY)]
    pub entity_col: String,
    #[arg(long, default_value = columns::YEAR)]
    pub year_col: String,
    /// Read variable NAME from CSV column COLUMN: `NAME=COLUMN`.
    #[arg(long = "map", value_parser = parse_pair)]
    pub map: Vec<(String, String)>,
    /// Keep rows whose 0/1 indicator equals the value: `COLUMN=VALUE`.
    #[arg(long, value_parser = parse_pair)]
    pub filter: Option<(String, String)>,
    /// Directory for output artifacts.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// DGP configuration JSON; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Output CSV path; `run_meta.json` goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SummaryArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value = columns::LOG_SPEND)]
    pub outcome: String,
    #[arg(long, default_value = columns::SHARE)]
    pub share: String,
    /// `entity` or the name of a cluster-id column.
    #[arg(long, default_value = "entity")]
    pub cluster: String,
}

impl ModelArgs {
    fn cluster(&self) -> ClusterBy {
        if self.cluster == "entity" {
            ClusterBy::Entity
        } else {
            ClusterBy::Column(self.cluster.clone())
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fixed threshold (default 0.5 unless `--estimate`).
    #[arg(long, conflicts_with = "estimate")]
    pub gamma: Option<f64>,
    /// Estimate the threshold by SSR minimization.
    #[arg(long)]
    pub estimate: bool,
    #[arg(long, default_value_t = crate::threshold::DEFAULT_TRIM)]
    pub trim: f64,
    /// Quantile spacing of the candidate grid.
    #[arg(long, default_value_t = crate::threshold::DEFAULT_GRID_STEP)]
    pub grid_step: f64,
    /// Use every observed share value as a candidate.
    #[arg(long)]
    pub all_points: bool,
    #[arg(long)]
    pub no_jump: bool,
    #[arg(long)]
    pub no_controls: bool,
    /// Bootstrap replications for the linearity test.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
pub struct EventStudyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 6)]
    pub leads: usize,
    #[arg(long, default_value_t = 6)]
    pub lags: usize,
    /// Regime split for group-specific dynamic effects.
    #[arg(long)]
    pub regime: Option<f64>,
    /// Include vote-count and population controls.
    #[arg(long)]
    pub controls: bool,
    /// Test leads jointly (added to the regime model).
    #[arg(long)]
    pub pretrend: bool,
    /// Per-lag jump indicators in the regime model.
    #[arg(long)]
    pub jump: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct BinscatterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = columns::LOG_SPEND)]
    pub outcome: String,
    #[arg(long, default_value = columns::SHARE)]
    pub x: String,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    #[arg(long)]
    pub no_controls: bool,
    #[arg(long)]
    pub no_fe: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct MonteCarloArgs {
    /// JSON with `dgp`, `estimator` and optional `reps`.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MonteCarloFile {
    #[serde(default)]
    dgp: DgpConfig,
    estimator: EstimatorSpec,
    #[serde(default)]
    reps: Option<usize>,
}

/// Row counts that reconcile the input with the estimation sample.
#[derive(Debug, Clone, Serialize)]
pub struct SampleCounts {
    pub input_rows: usize,
    pub dropped_by_filter: usize,
    pub dropped_by_missingness: usize,
    pub used: usize,
    pub input_entities: usize,
    pub entities_after_filter: usize,
}

#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    software: &'a str,
    command: &'a str,
    arguments: &'a Command,
    seed: Option<u64>,
    sample: Option<SampleCounts>,
    config: Option<Value>,
    notes: Vec<String>,
}

struct Output {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    sample: Option<SampleCounts>,
    seed: Option<u64>,
    config: Option<Value>,
    notes: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Self {
        Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            sample: None,
            seed: None,
            config: None,
            notes: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn commit(mut self, command: &Command) -> Result<()> {
        let meta = RunMeta {
            software: SOFTWARE,
            command: command.name(),
            arguments: command,
            seed: self.seed,
            sample: self.sample.take(),
            config: self.config.take(),
            notes: std::mem::take(&mut self.notes),
        };
        self.json(META_FILE, &meta)?;
        fs::create_dir_all(&self.dir)?;
        for (name, bytes) in &self.files {
            fs::write(self.dir.join(name), bytes)?;
        }
        Ok(())
    }
}

/// Rows whose 0/1 `indicator` equals `value`.
pub fn split_sample(d: &PanelDataset, indicator: &str, value: f64) -> Result<PanelDataset> {
    let col = d
        .column(indicator)
        .map_err(|_| Error::UnknownVariable(indicator.to_string()))?;
    if let Some(bad) = col.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::NonBinaryIndicator {
            column: indicator.to_string(),
            value: *bad,
        });
    }
    if value != 0.0 && value != 1.0 {
        return Err(Error::InvalidArgument(format!(
            "filter value {value} for `{indicator}` must be 0 or 1"
        )));
    }
    let col = col.to_vec();
    Ok(d.filter_rows(|r| col[r] == value))
}

struct Loaded {
    data: PanelDataset,
    input_rows: usize,
    input_entities: usize,
    notes: Vec<String>,
}

impl Loaded {
    fn counts(&self, used: usize) -> SampleCounts {
        let after = self.data.n_rows();
        SampleCounts {
            input_rows: self.input_rows,
            dropped_by_filter: self.input_rows - after,
            dropped_by_missingness: after - used,
            used,
            input_entities: self.input_entities,
            entities_after_filter: self.data.n_entities(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load(args: &DataArgs) -> Result<Loaded> {
    let bytes = read_file(&args.input)?;
    let mut schema = Schema {
        entity: args.entity_col.clone(),
        year: args.year_col.clone(),
        variables: None,
    };
    if !args.map.is_empty() {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(&bytes[..]);
        let headers = reader.headers()?.clone();
        let mapped: Vec<&str> = args.map.iter().map(|(_, c)| c.as_str()).collect();
        for (name, col) in &args.map {
            schema = schema.with_variable(name, col);
        }
        for h in headers.iter() {
            if h != schema.entity && h != schema.year && !mapped.contains(&h) {
                schema = schema.with_variable(h, h);
            }
        }
    }
    let raw = load_panel(&bytes[..], &schema)?;
    let (input_rows, input_entities) = (raw.n_rows(), raw.n_entities());
    let mut notes = Vec::new();
    let derivable = [columns::VOTES_NONAGR, columns::VOTES_LAND, columns::SCHOOL_SPEND, columns::POPULATION]
        .iter()
        .all(|c| raw.has_column(c));
    let mut data = if derivable {
        let (d, bad) = standard_variables(&raw)?;
        if !bad.is_empty() {
            notes.push(format!("{} cells with non-positive or overflowing spending inputs set missing", bad.len()));
        }
        d
    } else {
        raw
    };
    if let Some((col, value)) = &args.filter {
        let v: f64 = value
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("filter value `{value}` is not numeric")))?;
        data = split_sample(&data, col, v)?;
        notes.push(format!(
            "filter {col}={value}: {} of {} entities kept",
            data.n_entities(),
            input_entities
        ));
        if data.n_rows() == 0 {
            return Err(Error::EmptySample);
        }
    }
    Ok(Loaded {
        data,
        input_rows,
        input_entities,
        notes,
    })
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::InvalidArgument(format!("{what} needs --seed")))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))
}

fn run_simulate(a: &SimulateArgs, out: &mut Output) -> Result<()> {
    let mut cfg: DgpConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => DgpConfig::default(),
    };
    cfg.seed = a.seed;
    let sim = simulate_panel(&cfg)?;
    let mut csv = Vec::new();
    sim.data.write_csv(&mut csv)?;
    let name = a
        .out
        .file_name()
        .ok_or_else(|| Error::InvalidArgument("--out must name a file".into()))?
        .to_string_lossy()
        .into_owned();
    out.add(&name, csv);
    out.seed = Some(a.seed);
    out.config = Some(serde_json::to_value(&cfg)?);
    out.sample = Some(SampleCounts {
        input_rows: 0,
        dropped_by_filter: 0,
        dropped_by_missingness: 0,
        used: sim.data.n_rows(),
        input_entities: 0,
        entities_after_filter: sim.data.n_entities(),
    });
    out.notes.push("fractional votes; the printed nonagrarian vote rule unless configured".into());
    Ok(())
}

#[derive(Serialize)]
struct VariableSummary {
    variable: String,
    label: &'static str,
    mean: f64,
    sd: f64,
    min: f64,
    max: f64,
    observations: usize,
}

fn label(var: &str) -> &'static str {
    match var {
        columns::LOG_SPEND => "Log real school spending per capita",
        columns::SHARE => "Share of nonagrarian votes",
        columns::SCHOOL_SPEND => "School spending",
        columns::POPULATION => "Population",
        columns::VOTES_NONAGR => "Votes of nonagrarian interests",
        columns::VOTES_LAND => "Votes of landowners",
        columns::INV_VOTES => "One over total votes",
        columns::LOG_POP => "Log population",
        columns::HIGH_LAND_CONC => "High landownership concentration",
        columns::DEFLATOR => "Price deflator",
        _ => "",
    }
}

fn describe(name: &str, values: &[f64]) -> VariableSummary {
    let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    VariableSummary {
        variable: name.to_string(),
        label: label(name),
        mean,
        sd,
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        observations: n,
    }
}

fn run_summary(a: &SummaryArgs, out: &mut Output) -> Result<()> {
    let loaded = load(&a.data)?;
    let d = &loaded.data;
    let preferred = [
        columns::LOG_SPEND,
        columns::SHARE,
        columns::VOTES_NONAGR,
        columns::VOTES_LAND,
        columns::INV_VOTES,
        columns::LOG_POP,
    ];
    let mut names: Vec<String> = preferred.iter().filter(|c| d.has_column(c)).map(|c| c.to_string()).collect();
    for v in d.variable_names() {
        if !names.iter().any(|n| n == v) {
            names.push(v.to_string());
        }
    }
    let rows: Vec<VariableSummary> = names.iter().map(|n| Ok(describe(n, d.column(n)?))).collect::<Result<_>>()?;
    let years = d.years();
    let first = years.iter().min().copied().unwrap_or(0);
    let last = years.iter().max().copied().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["Variable", "Mean", "Std. Dev.", "Min", "Max", "Observations"])?;
    for r in &rows {
        let label = if r.label.is_empty() { r.variable.as_str() } else { r.label };
        w.write_record([
            label.to_string(),
            format!("{:.2}", r.mean),
            format!("{:.2}", r.sd),
            format!("{:.2}", r.min),
            format!("{:.2}", r.max),
            r.observations.to_string(),
        ])?;
    }
    out.add("summary_table.csv", w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    out.json(
        "summary.json",
        &json!({
            "title": format!("Summary statistics for the period {first}-{last}"),
            "entities": d.n_entities(),
            "variables": rows,
        }),
    )?;
    out.sample = Some(loaded.counts(d.n_rows()));
    out.notes.extend(loaded.notes);
    Ok(())
}

fn threshold_table(tf: &ThresholdFit) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "Threshold point",
        "Slope coefficient of landowners",
        "Slope coefficient of nonagrarian interests",
        "Difference in means at the threshold point",
        "Observations",
        "Clusters",
    ])?;
    let jump = tf.jump.unwrap_or(Estimate {
        estimate: f64::NAN,
        se: f64::NAN,
    });
    w.write_record([
        format!("{:.2}", tf.gamma),
        format!("{:.3}", tf.beta_land.estimate),
        format!("{:.3}", tf.beta_nonagr.estimate),
        format!("{:.3}", jump.estimate),
        tf.n_obs.to_string(),
        tf.clusters.to_string(),
    ])?;
    w.write_record([
        String::new(),
        format!("({:.3})", tf.beta_land.se),
        format!("({:.3})", tf.beta_nonagr.se),
        format!("({:.3})", jump.se),
        String::new(),
        String::new(),
    ])?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn run_threshold(a: &ThresholdArgs, out: &mut Output) -> Result<()> {
    if a.bootstrap.is_some() {
        out.seed = Some(require_seed(a.seed, "--bootstrap")?);
    }
    let loaded = load(&a.data)?;
    let d = &loaded.data;
    let mut spec = ThresholdSpec::new(&a.model.outcome, &a.model.share);
    spec.cluster = a.model.cluster();
    spec.include_jump = !a.no_jump;
    if a.no_controls {
        spec.controls.clear();
    }
    let grid = if a.all_points {
        GridSpec::AllObserved
    } else {
        GridSpec::Quantiles { step: a.grid_step }
    };
    let mut result = serde_json::Map::new();
    let tf = if a.estimate {
        let est = estimate_threshold(d, &spec, a.trim, grid)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["gamma", "ssr"])?;
        for p in &est.profile {
            w.write_record([p.gamma.to_string(), p.ssr.to_string()])?;
        }
        out.add("profile.csv", w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
        result.insert(
            "estimation".into(),
            json!({
                "gamma_hat": est.gamma_hat,
                "trim": est.trim,
                "grid": est.grid,
                "grid_points": est.profile.len(),
                "confidence_interval": est.interval,
            }),
        );
        out.notes.push("trim fraction and grid spacing are conventions; the estimated threshold can move with trimming".into());
        out.notes.push("likelihood-ratio interval uses homoskedastic scaling".into());
        est.fit
    } else {
        fit_threshold(d, &spec.clone().with_gamma(a.gamma.unwrap_or(0.5)))?
    };
    let se = |e: &Estimate| json!({"estimate": e.estimate, "se": e.se});
    result.insert("threshold_point".into(), json!(tf.gamma));
    result.insert("slope_coefficient_of_landowners".into(), se(&tf.beta_land));
    result.insert("slope_coefficient_of_nonagrarian_interests".into(), se(&tf.beta_nonagr));
    result.insert("slope_change".into(), se(&tf.slope_change));
    result.insert(
        "difference_in_means_at_the_threshold_point".into(),
        tf.jump.as_ref().map_or(Value::Null, se),
    );
    result.insert("observations".into(), json!(tf.n_obs));
    result.insert("clusters".into(), json!(tf.clusters));
    result.insert("controls".into(), json!(spec.controls));
    result.insert("ssr".into(), json!(tf.ssr));
    if spec.include_jump {
        let w = regime_difference_test(&tf)?;
        result.insert("regime_difference_test".into(), serde_json::to_value(&w)?);
    }
    if let Some(b) = a.bootstrap {
        let t = bootstrap_linearity_test(d, &spec, a.trim, grid, b, out.seed.expect("seed checked"))?;
        result.insert("linearity_test".into(), serde_json::to_value(&t)?);
    }
    result.insert("fit".into(), serde_json::to_value(tf.fit.summary(false))?);
    out.json("threshold.json", &Value::Object(result))?;
    out.add("threshold_table.csv", threshold_table(&tf)?);
    out.sample = Some(loaded.counts(tf.n_obs));
    out.notes.extend(loaded.notes);
    Ok(())
}

fn path_csv(p: &crate::event_study::EventStudyPath) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    p.write_csv(&mut buf)?;
    Ok(buf)
}

fn run_event_study(a: &EventStudyArgs, out: &mut Output) -> Result<()> {
    let loaded = load(&a.data)?;
    let d = &loaded.data;
    let mut spec = DistributedLagSpec::new(&a.model.outcome, &a.model.share, a.leads, a.lags);
    spec.cluster = a.model.cluster();
    spec.include_jump = a.jump;
    if a.controls {
        spec.controls = default_controls();
    }
    let mut result = serde_json::Map::new();
    let used;
    if let Some(gamma) = a.regime {
        spec = spec.with_regime(gamma);
        spec.n_leads = 0;
        let rf = fit_regime_distributed_lag(d, &spec)?;
        for (regime, name, title) in [
            (Regime::Landowner, "cumulative_landowner", "Cumulative effect, landowners"),
            (Regime::Nonagrarian, "cumulative_nonagrarian", "Cumulative effect, nonagrarian interests"),
        ] {
            let path = cumulative_effects(&rf, regime)?;
            out.add(&format!("{name}.csv"), path_csv(&path)?);
            out.add(&format!("{name}.svg"), path.to_svg(title).into_bytes());
            result.insert(name.into(), serde_json::to_value(&path)?);
        }
        if a.pretrend {
            let p = pretrend_test(d, &spec, a.leads)?;
            result.insert(
                "pretrend".into(),
                json!({"leads": p.leads, "wald": p.wald, "vacuous": p.vacuous, "observations": p.fit.fit.n_obs}),
            );
        }
        out.notes.push(format!(
            "regime model: share and slope change above {gamma} for each lag 0..{}; no leads{}",
            a.lags,
            if a.jump { "" } else { "; no jump terms" }
        ));
        used = rf.fit.n_obs;
        result.insert("sample_shrink".into(), serde_json::to_value(rf.warning)?);
        result.insert("fit".into(), serde_json::to_value(rf.fit.summary(false))?);
    } else {
        let dl = fit_distributed_lag(d, &spec)?;
        let path = to_event_study(&dl.fit, &spec.share_var, a.leads, a.lags)?;
        out.add("event_study.csv", path_csv(&path)?);
        out.add("event_study.svg", path.to_svg("Event study").into_bytes());
        result.insert("event_study".into(), serde_json::to_value(&path)?);
        if a.pretrend && a.leads > 0 {
            let rows: Vec<Vec<f64>> = (1..=a.leads)
                .map(|k| dl.fit.weights(&[(&spec.lead(k), 1.0)]))
                .collect::<Result<_>>()?;
            let w = wald_test(&dl.fit, &rows, &vec![0.0; rows.len()])?;
            result.insert("pretrend".into(), serde_json::to_value(&w)?);
        }
        used = dl.fit.n_obs;
        result.insert("sample_shrink".into(), serde_json::to_value(dl.warning)?);
        result.insert("fit".into(), serde_json::to_value(dl.fit.summary(false))?);
    }
    out.json("event_study.json", &Value::Object(result))?;
    out.sample = Some(loaded.counts(used));
    out.notes.push("95% cluster-robust pointwise intervals".into());
    out.notes.extend(loaded.notes);
    Ok(())
}

fn run_binscatter(a: &BinscatterArgs, out: &mut Output) -> Result<()> {
    let loaded = load(&a.data)?;
    let d = &loaded.data;
    let mut spec = BinscatterSpec::new(&a.outcome, &a.x, a.bins, a.split);
    if !a.no_controls {
        spec.controls = vec![columns::VOTES_NONAGR.into(), columns::INV_VOTES.into()];
    }
    if !a.no_fe {
        spec.fe = FixedEffectsSpec::TWO_WAY;
    }
    let bs = binscatter(d, &spec)?;
    let mut csv = Vec::new();
    bs.write_csv(&mut csv)?;
    out.add("bins.csv", csv);
    out.json(
        "lines.json",
        &json!({
            "split_point": bs.split_point,
            "line_below": bs.line_below,
            "line_above": bs.line_above,
            "empty_side": bs.empty_side,
            "n_bins": bs.n_bins,
            "observations": bs.n_obs,
            "controls": spec.controls,
            "fixed_effects": spec.fe,
            "line_fit": bs.line_fit,
        }),
    )?;
    out.add(
        "binscatter.svg",
        bs.to_svg("Binned scatterplot", (&a.x, &a.outcome)).into_bytes(),
    );
    out.sample = Some(loaded.counts(bs.n_obs));
    out.notes.push("sample means added back after residualization".into());
    out.notes.extend(loaded.notes);
    Ok(())
}

fn run_montecarlo(a: &MonteCarloArgs, out: &mut Output) -> Result<()> {
    let file: MonteCarloFile = read_json(&a.config)?;
    let reps = a.reps.or(file.reps).unwrap_or(100);
    let report = monte_carlo(&file.dgp, &file.estimator, reps, a.seed)?;
    out.json("montecarlo.json", &report)?;
    out.seed = Some(a.seed);
    out.config = Some(json!({"dgp": file.dgp, "estimator": file.estimator, "reps": reps}));
    Ok(())
}

fn dispatch(command: &Command) -> Result<()> {
    let mut out = match command {
        Command::Simulate(a) => Output::new(a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))),
        Command::Summary(a) => Output::new(&a.data.out_dir),
        Command::Threshold(a) => Output::new(&a.data.out_dir),
        Command::EventStudy(a) => Output::new(&a.data.out_dir),
        Command::Binscatter(a) => Output::new(&a.data.out_dir),
        Command::Montecarlo(a) => Output::new(&a.out_dir),
    };
    match command {
        Command::Simulate(a) => run_simulate(a, &mut out)?,
        Command::Summary(a) => run_summary(a, &mut out)?,
        Command::Threshold(a) => run_threshold(a, &mut out)?,
        Command::EventStudy(a) => run_event_study(a, &mut out)?,
        Command::Binscatter(a) => run_binscatter(a, &mut out)?,
        Command::Montecarlo(a) => run_montecarlo(a, &mut out)?,
    }
    out.commit(command)
}

/// Inserts flags from a `--run-config` JSON object right after the
/// subcommand, so flags given on the command line take precedence.
pub fn expand_run_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--run-config" {
            path = argv.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--run-config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let config: serde_json::Map<String, Value> = read_json(&path)?;
    let mut extra = Vec::new();
    for (key, value) in &config {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &Value| -> Result<String> {
            match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(Error::ConfigInvalid(format!("unsupported value for `{key}`"))),
            }
        };
        match value {
            Value::Bool(true) => extra.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                for v in items {
                    extra.push(flag.clone());
                    extra.push(scalar(v)?);
                }
            }
            v => {
                extra.push(flag);
                extra.push(scalar(v)?);
            }
        }
    }
    let at = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map_or(argv.len(), |i| i + 1);
    let mut out = argv[..at].to_vec();
    out.extend(extra.into_iter().map(OsString::from));
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

fn exit_code(c: ErrorCategory) -> i32 {
    match c {
        ErrorCategory::Usage => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numerical => 4,
    }
}

fn report_error(category: &str, kind: &str, message: &str, code: i32) -> i32 {
    let body = json!({"error": {"category": category, "kind": kind, "message": message}, "exit_code": code});
    eprintln!("{body}");
    code
}

fn report(e: &Error) -> i32 {
    let code = exit_code(e.category());
    let category = match e.category() {
        ErrorCategory::Usage => "usage",
        ErrorCategory::Data => "data",
        ErrorCategory::Numerical => "numerical",
    };
    report_error(category, e.kind(), &e.to_string(), code)
}

/// Parses `argv` and runs the subcommand; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_run_config(argv) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            return report_error("usage", "UsageError", first, 2);
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli.command))),
        None => dispatch(&cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}
