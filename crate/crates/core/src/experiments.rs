//! Experiment drivers behind `esn run`.
//!
//! Each driver returns CSV tables, a JSON summary with every measured value,
//! and an overall pass flag. Replications run on a rayon pool and are
//! collected in replication order, so tables do not depend on the number of
//! worker threads.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::analytic::{
    campbell_intensity, exceedance_mean, exceedance_mean_limit, extremal_coefficient, extremal_index, marginal_cdf,
    mixing_gap, CampbellConfig, CoefficientArg, Model,
};
use crate::config::{Experiment, LoadedConfig};
use crate::error::{EsnError, Result};
use crate::shape::ShapeSpec;
use crate::simulate::{bigball_sampler, extremal_points, pot_sampler, GridSpec, Simulator};
use crate::stats::{ecdf, ks_critical_01, ks_one_sample, ks_two_sample, ks_two_sample_p, mean_var};
use crate::validate::{suite, LogGridSpec, Status, ValidateParams};
use crate::weight::WeightSpec;

/// A CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            // 17 significant digits
            Cell::Float(v) => write!(f, "{v:.16e}"),
            Cell::Text(s) => write!(f, "{s}"),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File name, `*.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    fn with_header(name: &str, header: Vec<String>) -> Self {
        Table { name: name.into(), header, rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| c.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Column `name` as floats.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[i] {
                    Cell::Int(v) => *v as f64,
                    Cell::Float(v) => *v,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub experiment: String,
    pub scenario_digest: String,
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    pub pass: bool,
    pub seed: u64,
    pub wall_time: f64,
}

impl ExperimentResult {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn summary_json(&self) -> Value {
        json!({
            "experiment": self.experiment,
            "scenario_digest": self.scenario_digest,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "pass": self.pass,
            "criteria": Value::Object(self.summary.clone()),
        })
    }

    /// Write `summary.json` and every table into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in &self.tables {
            std::fs::write(dir.join(&t.name), t.to_csv())?;
        }
        let text = serde_json::to_string_pretty(&self.summary_json()).expect("summary serializes");
        std::fs::write(dir.join("summary.json"), text + "\n")
    }
}

struct Outcome {
    tables: Vec<Table>,
    summary: Map<String, Value>,
    pass: bool,
}

fn replicate<T, F>(reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..reps as u64).into_par_iter().map(f).collect()
}

/// Run the configured experiment on a pool of `threads` workers.
pub fn run(cfg: &LoadedConfig, threads: usize) -> Result<ExperimentResult> {
    run_as(cfg, cfg.config.experiment, threads)
}

/// Run the invariant suite on any config.
pub fn validate(cfg: &LoadedConfig, threads: usize) -> Result<ExperimentResult> {
    run_as(cfg, Experiment::Validate, threads)
}

fn run_as(cfg: &LoadedConfig, experiment: Experiment, threads: usize) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| EsnError::Numerical(e.to_string()))?;
    let start = Instant::now();
    let out = pool.install(|| match experiment {
        Experiment::MarginalKs => marginal_ks(cfg),
        Experiment::Converge => converge(cfg),
        Experiment::Pot => pot(cfg),
        Experiment::OrderStats => order_stats(cfg),
        Experiment::Bigball => bigball(cfg),
        Experiment::Coefficients => coefficients(cfg),
        Experiment::ExtremalIndex => extremal_index_run(cfg),
        Experiment::Campbell => campbell(cfg),
        Experiment::Mixing => mixing(cfg),
        Experiment::Validate => validate_run(cfg),
    })?;
    Ok(ExperimentResult {
        experiment: experiment.name().into(),
        scenario_digest: cfg.digest.clone(),
        tables: out.tables,
        summary: out.summary,
        pass: out.pass,
        seed: cfg.config.seed,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn summary(pairs: Vec<(&str, Value)>) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn node_index(grid: &GridSpec, node: &Option<Vec<usize>>) -> Result<usize> {
    match node {
        None => Ok(grid.center_index()),
        Some(k) => {
            if k.len() != grid.dim() || k.iter().zip(&grid.counts).any(|(i, c)| i >= c) {
                return Err(EsnError::Config { pointer: "/params/node".into(), message: "node index outside the grid".into() });
            }
            Ok(grid.flat_index(k))
        }
    }
}

/// KS distance of `xs` to a cdf that is continuous on `(0, inf)`; each
/// distinct value costs one cdf evaluation, plus one left limit at 0.
fn ks_to<F>(xs: &[f64], cdf: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let mut distinct = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let vals: Vec<(f64, f64)> = distinct
        .par_iter()
        .map(|x| -> Result<(f64, f64)> {
            let at = cdf(*x)?;
            let left = if *x <= 0.0 { cdf(x.next_down())? } else { at };
            Ok((at, left))
        })
        .collect::<Result<_>>()?;
    let mut table = HashMap::with_capacity(2 * distinct.len());
    for (x, (at, left)) in distinct.iter().zip(&vals) {
        table.insert(x.to_bits(), *at);
        table.entry(x.next_down().to_bits()).or_insert(*left);
    }
    Ok(ks_one_sample(xs, |u| table.get(&u.to_bits()).copied().unwrap_or(f64::NAN)))
}

/// Table of the empirical cdf against `cdf` at `n` sample quantiles.
fn cdf_table<F: Fn(f64) -> Result<f64>>(name: &str, xs: &[f64], n: usize, cdf: F) -> Result<Table> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut t = Table::new(name, &["u", "empirical", "analytic", "abs_diff"]);
    for i in 0..n {
        let q = (i as f64 + 0.5) / n as f64;
        let u = sorted[((q * sorted.len() as f64) as usize).min(sorted.len() - 1)];
        let e = ecdf(&sorted, u);
        let a = cdf(u)?;
        t.push(vec![u.into(), e.into(), a.into(), (e - a).abs().into()]);
    }
    Ok(t)
}

fn d_table_points() -> usize {
    64
}
fn d_ks_004() -> f64 {
    0.04
}
fn d_ks_005() -> f64 {
    0.05
}
fn d_ks_006() -> f64 {
    0.06
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MarginalParams {
    #[serde(default = "d_ks_004")]
    ks_max: f64,
    #[serde(default)]
    node: Option<Vec<usize>>,
    /// Second node for a two-sample stationarity check.
    #[serde(default)]
    compare_node: Option<Vec<usize>>,
    #[serde(default = "d_table_points")]
    table_points: usize,
}

fn marginal_ks(cfg: &LoadedConfig) -> Result<Outcome> {
    let p: MarginalParams = cfg.params()?;
    let scn = cfg.scenario()?;
    let sim = Simulator::new(&scn)?;
    let j = node_index(&scn.grid, &p.node)?;
    let k = match &p.compare_node {
        Some(_) => Some(node_index(&scn.grid, &p.compare_node)?),
        None => None,
    };
    let draws = replicate(scn.reps, |r| {
        let f = sim.sample_field(r)?;
        Ok((f.values[j], k.map(|k| f.values[k]), f.exact))
    })?;
    let xs: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let censored = draws.iter().filter(|d| !d.2).count();
    let model = cfg.model()?;
    let cdf = |u: f64| marginal_cdf(&model, u).map(|c| c.prob);
    let ks = ks_to(&xs, cdf)?;
    let crit = ks_critical_01(xs.len());
    let mut pass = ks < p.ks_max && censored == 0;
    let mut s = summary(vec![
        ("n_reps", json!(xs.len())),
        ("ks", json!(ks)),
        ("ks_max", json!(p.ks_max)),
        ("ks_critical_01", json!(crit)),
        ("censored_reps", json!(censored)),
    ]);
    if k.is_some() {
        let ys: Vec<f64> = draws.iter().map(|d| d.1.unwrap_or(f64::NAN)).collect();
        let d2 = ks_two_sample(&xs, &ys);
        let pv = ks_two_sample_p(d2, xs.len(), ys.len());
        s.insert("stationarity_ks".into(), json!(d2));
        s.insert("stationarity_p".into(), json!(pv));
        pass &= pv > 0.01;
    }
    let t = cdf_table("empirical_cdf.csv", &xs, p.table_points, cdf)?;
    Ok(Outcome { tables: vec![t, field_table(&sim, &scn.grid)?], summary: s, pass })
}

/// Replication 0 as `field.csv`: node index per axis, then the value.
fn field_table(sim: &Simulator, grid: &GridSpec) -> Result<Table> {
    let f = sim.sample_field(0)?;
    let header = (0..grid.dim()).map(|a| format!("node_index_{a}")).chain(["value".to_string()]).collect();
    let mut t = Table::with_header("field.csv", header);
    for (i, v) in f.values.iter().enumerate() {
        let mut row: Vec<Cell> = grid.multi_index(i).into_iter().map(Cell::from).collect();
        row.push((*v).into());
        t.push(row);
    }
    Ok(t)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvergeParams {
    lambdas: Vec<f64>,
    #[serde(default = "d_ks_005")]
    ks_max_final: f64,
    #[serde(default)]
    node: Option<Vec<usize>>,
}

fn rv_index(weight: &WeightSpec) -> Result<f64> {
    weight.rv_exponent().filter(|_| weight.is_probability()).ok_or_else(|| EsnError::Config {
        pointer: "/weight".into(),
        message: "experiment needs a regularly varying probability weight".into(),
    })
}

fn frechet_limit(shape: &ShapeSpec, xi: f64, tol: f64) -> Result<Model> {
    Ok(Model::new(shape.clone(), WeightSpec::PowerMeasure { xi }, 1.0)?.with_tol(tol))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn converge(cfg: &LoadedConfig) -> Result<Outcome> {
    let p: ConvergeParams = cfg.params()?;
    if p.lambdas.is_empty() || p.lambdas.iter().any(|l| !(*l > 1.0)) {
        return Err(EsnError::Config { pointer: "/params/lambdas".into(), message: "need lambdas > 1".into() });
    }
    let weight = cfg.config.weight.clone();
    let xi = rv_index(&weight)?;
    let limit = frechet_limit(&cfg.shape, xi, cfg.tol())?;
    let mut t = Table::new("ks_by_lambda.csv", &["lambda", "n_reps", "ks", "ks_critical_01"]);
    let mut kss = Vec::new();
    let mut censored = 0;
    for &l in &p.lambdas {
        let scn = cfg.scenario_with(weight.clone(), l)?;
        let sim = Simulator::new(&scn)?;
        let j = node_index(&scn.grid, &p.node)?;
        let a = weight.a_lambda(l)?;
        let draws = replicate(scn.reps, |r| sim.sample_field(r).map(|f| (f.values[j] / a, f.exact)))?;
        censored += draws.iter().filter(|d| !d.1).count();
        let xs: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let ks = ks_to(&xs, |u| marginal_cdf(&limit, u).map(|c| c.prob))?;
        t.push(vec![l.into(), xs.len().into(), ks.into(), ks_critical_01(xs.len()).into()]);
        kss.push(ks);
    }
    let last = *kss.last().expect("nonempty");
    let decreasing = strictly_decreasing(&kss);
    let pass = decreasing && last < p.ks_max_final && censored == 0;
    let s = summary(vec![
        ("lambdas", json!(p.lambdas)),
        ("ks", json!(kss)),
        ("strictly_decreasing", json!(decreasing)),
        ("ks_final", json!(last)),
        ("ks_max_final", json!(p.ks_max_final)),
        ("censored_reps", json!(censored)),
    ]);
    Ok(Outcome { tables: vec![t], summary: s, pass })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ThresholdFn {
    Constant(f64),
    Table(Vec<f64>),
}

fn d_sigma() -> f64 {
    3.0
}
fn d_dispersion() -> [f64; 2] {
    [0.8, 1.2]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PotParams {
    f: ThresholdFn,
    #[serde(default = "d_sigma")]
    sigma_max: f64,
    #[serde(default = "d_dispersion")]
    dispersion: [f64; 2],
}

fn pot(cfg: &LoadedConfig) -> Result<Outcome> {
    let p: PotParams = cfg.params()?;
    let mut scn = cfg.scenario_with(cfg.config.weight.clone(), cfg.config.lambda)?;
    scn.reps = cfg.config.reps;
    let n_nodes = scn.grid.len();
    let f = match p.f {
        ThresholdFn::Constant(c) => vec![c; n_nodes],
        ThresholdFn::Table(v) => v,
    };
    if f.len() != n_nodes {
        return Err(EsnError::Config { pointer: "/params/f".into(), message: format!("need {n_nodes} values") });
    }
    let (sim, thr) = pot_sampler(&scn, &f)?;
    let counts = replicate(scn.reps, |r| sim.count_dominating(&thr, r))?;
    let nodes = scn.grid.nodes();
    let a = scn.weight.a_lambda(scn.lambda)?;
    let exact = exceedance_mean(&cfg.model()?, &nodes, &f, a)?;
    let limit = match scn.weight.rv_exponent() {
        Some(xi) => Some(exceedance_mean_limit(&cfg.shape, xi, &nodes, &f, cfg.tol())?),
        None => None,
    };
    let xs: Vec<f64> = counts.iter().map(|c| *c as f64).collect();
    let (mean, var) = mean_var(&xs);
    let se = (var / xs.len() as f64).sqrt();
    let z = if se > 0.0 {
        (mean - exact).abs() / se
    } else if (mean - exact).abs() < 1e-6 {
        0.0
    } else {
        f64::INFINITY
    };
    let dispersion = if mean > 0.0 { var / mean } else { f64::NAN };
    let disp_ok = dispersion >= p.dispersion[0] && dispersion <= p.dispersion[1];
    let pass = z <= p.sigma_max && disp_ok;
    let mut t = Table::new("pot_counts.csv", &["rep", "count"]);
    for (i, c) in counts.iter().enumerate() {
        t.push(vec![i.into(), (*c).into()]);
    }
    let s = summary(vec![
        ("n_reps", json!(xs.len())),
        ("a_lambda", json!(a)),
        ("mean", json!(mean)),
        ("variance", json!(var)),
        ("std_error", json!(se)),
        ("exact_mean", json!(exact)),
        ("limit_mean", json!(limit)),
        ("z", json!(z)),
        ("sigma_max", json!(p.sigma_max)),
        ("dispersion", json!(dispersion)),
        ("dispersion_range", json!(p.dispersion)),
    ]);
    Ok(Outcome { tables: vec![t], summary: s, pass })
}

fn d_two() -> usize {
    2
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OrderParams {
    #[serde(default = "d_two")]
    r: usize,
    #[serde(default = "d_ks_004")]
    ks_max: f64,
    #[serde(default)]
    node: Option<Vec<usize>>,
    #[serde(default = "d_table_points")]
    table_points: usize,
}

/// `P(M^(r) <= u) = P(Poisson(I(u)) < r)`.
pub fn order_stat_cdf(model: &Model, r: usize, u: f64) -> Result<f64> {
    let c = marginal_cdf(model, u)?;
    if !c.exponent.is_finite() {
        return Ok(0.0);
    }
    let i = c.exponent;
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 0..r {
        if k > 0 {
            term *= i / k as f64;
        }
        sum += term;
    }
    Ok(c.prob * sum)
}

fn order_stats(cfg: &LoadedConfig) -> Result<Outcome> {
    let p: OrderParams = cfg.params()?;
    let scn = cfg.scenario()?;
    let sim = Simulator::new(&scn)?;
    let j = node_index(&scn.grid, &p.node)?;
    let draws = replicate(scn.reps, |rep| {
        let o = sim.sample_order_stats(p.r, rep)?;
        let mut violations = 0usize;
        for i in 1..p.r {
            violations += o.stats[i].iter().zip(&o.stats[i - 1]).filter(|(a, b)| a > b).count();
        }
        Ok((o.stats[p.r - 1][j], violations, o.exact))
    })?;
    let xs: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let violations: usize = draws.iter().map(|d| d.1).sum();
    let censored = draws.iter().filter(|d| !d.2).count();
    let model = cfg.model()?;
    let cdf = |u: f64| order_stat_cdf(&model, p.r, u);
    let ks = ks_to(&xs, cdf)?;
    let pass = violations == 0 && ks < p.ks_max && censored == 0;
    let t = cdf_table("order_stat_cdf.csv", &xs, p.table_points, cdf)?;
    let s = summary(vec![
        ("r", json!(p.r)),
        ("n_reps", json!(xs.len())),
        ("ordering_violations", json!(violations)),
        ("ks", json!(ks)),
        ("ks_max", json!(p.ks_max)),
        ("ks_critical_01", json!(ks_critical_01(xs.len()))),
        ("censored_reps", json!(censored)),
    ]);
    Ok(Outcome { tables: vec![t], summary: s, pass })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BigballParams {
    radii: Vec<f64>,
    #[serde(default = "d_ks_006")]
    ks_max_final: f64,
}

fn bigball(cfg: &LoadedConfig) -> Result<Outcome> {
    let p: BigballParams = cfg.params()?;
    let xi = rv_index(&cfg.config.weight)?;
    let scn = cfg.scenario()?;
    let mut ks_t = Table::new("bigball_ks.csv", &["radius", "n_reps", "ks", "n_r"]);
    let mut sup_t = Table::new("bigball_sup.csv", &["radius", "rep", "sup", "normalized"]);
    let mut kss = Vec::new();
    let mut inexact = 0;
    for &r in &p.radii {
        let (sim, n_r) = bigball_sampler(&scn, r)?;
        let sups = replicate(scn.reps, |rep| sim.sup_over_target(rep))?;
        inexact += sups.iter().filter(|s| !s.1).count();
        let normalized: Vec<f64> = sups.iter().map(|s| s.0 / n_r).collect();
        let ks = ks_one_sample(&normalized, |u| if u > 0.0 { (-u.powf(-xi)).exp() } else { 0.0 });
        ks_t.push(vec![r.into(), normalized.len().into(), ks.into(), n_r.into()]);
        for (i, (s, z)) in sups.iter().zip(&normalized).enumerate() {
            sup_t.push(vec![r.into(), i.into(), s.0.into(), (*z).into()]);
        }
        kss.push(ks);
    }
    let last = *kss.last().ok_or_else(|| EsnError::Config { pointer: "/params/radii".into(), message: "empty".into() })?;
    let decreasing = strictly_decreasing(&kss);
    let pass = decreasing && last < p.ks_max_final && inexact == 0;
    let s = summary(vec![
        ("radii", json!(p.radii)),
        ("ks", json!(kss)),
        ("strictly_decreasing", json!(decreasing)),
        ("ks_final", json!(last)),
        ("ks_max_final", json!(p.ks_max_final)),
        ("inexact_reps", json!(inexact)),
    ]);
    Ok(Outcome { tables: vec![ks_t, sup_t], summary: s, pass })
}

fn d_expected_tol() -> f64 {
    1e-6
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientParams {
    #[serde(default)]
    xi: Option<f64>,
    lags: Vec<Vec<f64>>,
    #[serde(default)]
    expected: Option<Vec<f64>>,
    #[serde(default = "d_expected_tol")]
    expected_tol: f64,
}

fn xi_param(cfg: &LoadedConfig, xi: Option<f64>) -> Result<f64> {
    xi.or(cfg.config.weight.rv_exponent()).ok_or_else(|| EsnError::Config {
        pointer: "/params/xi".into(),
        message: "no xi given and the weight has no index".into(),
    })
}

fn lag_header(d: usize, tail: &[&str]) -> Vec<String> {
    (0..d).map(|a| format!("lag_{a}")).chain(tail.iter().map(|s| s.to_string())).collect()
}

fn coefficients(cfg: &LoadedConfig) -> Result<Outcome> {
    let p: CoefficientParams = cfg.params()?;
    let xi = xi_param(cfg, p.xi)?;
    let d = cfg.shape.dim();
    let mut t = Table::with_header("extremal_coefficients.csv", lag_header(d, &["theta"]));
    let mut thetas = Vec::new();
    let mut normalized = true;
    for lag in &p.lags {
        let c = extremal_coefficient(&cfg.shape, xi, &CoefficientArg::Lag(lag.clone()), cfg.tol())?;
        normalized &= c.normalized;
        let mut row: Vec<Cell> = lag.iter().map(|v| Cell::Float(*v)).collect();
        row.push(c.theta.into());
        t.push(row);
        thetas.push(c.theta);
    }
    let in_bounds = thetas.iter().all(|t| *t >= 1.0 - 1e-8 && *t <= 2.0 + 1e-8);
    let mut pass = in_bounds;
    let mut s = summary(vec![
        ("xi", json!(xi)),
        ("theta", json!(thetas)),
        ("within_bounds", json!(in_bounds)),
        ("normalized", json!(normalized)),
    ]);
    if let Some(e) = &p.expected {
        let err = thetas.iter().zip(e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pass &= e.len() == thetas.len() && err <= p.expected_tol;
        s.insert("max_expected_error".into(), json!(err));
    }
    Ok(Outcome { tables: vec![t], summary: s, pass })
}

fn d_oracle_tol() -> f64 {
    1e-4
}
fn d_sub_tol() -> f64 {
    1e-6
}
fn d_gamma_tol() -> f64 {
    1e-8
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexParams {
    #[serde(default)]
    xi: Option<f64>,
    lag: Vec<f64>,
    n_max: usize,
    #[serde(default)]
    periodic_oracle: bool,
    #[serde(default = "d_oracle_tol")]
    oracle_tol: f64,
    #[serde(default = "d_sub_tol")]
    subadditivity_tol: f64,
    /// Closed form `gamma_n = (union length) / n` for boxes: compared when given.
    #[serde(default)]
    expected_gamma_n: Option<Vec<f64>>,
    #[serde(default = "d_gamma_tol")]
    expected_tol: f64,
}

/// `int_0^|v| max_{|k| <= 50} h^xi(x + k v) dx` by the midpoint rule, `d = 1`.
pub fn periodic_envelope(shape: &ShapeSpec, xi: f64, v: f64, n: usize) -> f64 {
    let step = v.abs() / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x = (i as f64 + 0.5) * step;
        let best = (-50..=50).map(|k| shape.value(&[x + k as f64 * v])).fold(0.0, f64::max);
        total += best.powf(xi);
    }
    total * step
}

fn extremal_index_run(cfg: &LoadedConfig) -> Result<Outcome> {
    let p: IndexParams = cfg.params()?;
    let xi = xi_param(cfg, p.xi)?;
    let e = extremal_index(&cfg.shape, xi, &p.lag, p.n_max, cfg.tol())?;
    let mut t = Table::new("extremal_index.csv", &["n", "gamma_n", "increment"]);
    for (i, (g, inc)) in e.gamma_n.iter().zip(&e.increments).enumerate() {
        t.push(vec![(i + 1).into(), (*g).into(), (*inc).into()]);
    }
    let sub_ok = e.max_subadditivity_excess <= p.subadditivity_tol;
    let mut pass = sub_ok;
    let mut s = summary(vec![
        ("xi", json!(xi)),
        ("gamma", json!(e.gamma)),
        ("gamma_min", json!(e.gamma_min)),
        ("max_subadditivity_excess", json!(e.max_subadditivity_excess)),
        ("normalized", json!(e.normalized)),
    ]);
    if p.periodic_oracle {
        if cfg.shape.dim() != 1 {
            return Err(EsnError::Config { pointer: "/params/periodic_oracle".into(), message: "oracle needs d = 1".into() });
        }
        let oracle = periodic_envelope(&cfg.shape, xi, p.lag[0], 200_000);
        let err = (e.gamma - oracle).abs();
        pass &= err <= p.oracle_tol;
        s.insert("oracle".into(), json!(oracle));
        s.insert("oracle_error".into(), json!(err));
    }
    if let Some(g) = &p.expected_gamma_n {
        let err = e.gamma_n.iter().zip(g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pass &= g.len() == e.gamma_n.len() && err <= p.expected_tol;
        s.insert("max_gamma_n_error".into(), json!(err));
    }
    Ok(Outcome { tables: vec![t], summary: s, pass })
}

fn d_rel_tol() -> f64 {
    0.15
}
fn d_guard() -> f64 {
    1e-3
}
fn d_refine_max() -> f64 {
    0.05
}
fn d_true() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CampbellParams {
    m_grid: LogGridSpec,
    #[serde(default = "d_rel_tol")]
    rel_tol: f64,
    #[serde(default = "d_guard")]
    guard_tol: f64,
    #[serde(default = "d_true")]
    refine_check: bool,
    #[serde(default = "d_refine_max")]
    refine_max: f64,
}

fn campbell(cfg: &LoadedConfig) -> Result<Outcome> {
    let p: CampbellParams = cfg.params()?;
    let WeightSpec::PowerMeasure { xi } = cfg.config.weight else {
        return Err(EsnError::Config { pointer: "/weight".into(), message: "campbell needs a power measure".into() });
    };
    let c = &cfg.config;
    let mut cc = CampbellConfig {
        reps: c.reps,
        m_grid: p.m_grid.points(),
        window: c.window.clone(),
        grid: c.grid.clone(),
        seed: c.seed,
        max_halvings: c.max_halvings,
        tol: p.guard_tol,
    };
    let est = campbell_intensity(&cfg.shape, xi, &cc)?;
    // independent replications for the direct count
    let mut scn = cfg.scenario()?;
    scn.seed = c.seed.wrapping_add(1);
    let sim = Simulator::new(&scn)?;
    let inner = est.inner.clone();
    let counts = replicate(c.reps, |r| {
        let f = sim.sample_field(r)?;
        let e = extremal_points(&f, &cfg.shape)?;
        Ok(e.iter().filter(|q| inner.contains(&q.x)).count() as u64)
    })?;
    let xs: Vec<f64> = counts.iter().map(|v| *v as f64).collect();
    let (mean, var) = mean_var(&xs);
    let rate = mean / inner.volume();
    let rate_se = (var / xs.len() as f64).sqrt() / inner.volume();
    let rel = (rate - est.lambda_tilde).abs() / est.lambda_tilde;
    let mut s = summary(vec![
        ("lambda_tilde", json!(est.lambda_tilde)),
        ("lambda_tilde_std_error", json!(est.std_error)),
        ("lambda_tilde_ci", json!([est.ci.0, est.ci.1])),
        ("extremal_rate", json!(rate)),
        ("extremal_rate_std_error", json!(rate_se)),
        ("rel_diff", json!(rel)),
        ("rel_tol", json!(p.rel_tol)),
        ("inner_window", json!({"lo": inner.lo, "hi": inner.hi})),
        ("censored_reps", json!(est.censored_reps)),
    ]);
    if p.refine_check {
        cc.grid = c.grid.refined(2);
        let fine = campbell_intensity(&cfg.shape, xi, &cc)?;
        let change = (fine.lambda_tilde - est.lambda_tilde).abs() / est.lambda_tilde;
        s.insert("refined_lambda_tilde".into(), json!(fine.lambda_tilde));
        s.insert("refinement_change".into(), json!(change));
        s.insert("refinement_flag".into(), json!(change >= p.refine_max));
    }
    let pass = rel <= p.rel_tol && est.censored_reps == 0;
    let mut curve = Table::new("campbell_curve.csv", &["m", "not_dominated", "nu_weight"]);
    for ((m, q), w) in est.m_grid.iter().zip(&est.not_dominated).zip(&est.nu_weights) {
        curve.push(vec![(*m).into(), (*q).into(), (*w).into()]);
    }
    let mut ct = Table::new("extremal_counts.csv", &["rep", "count"]);
    for (i, v) in counts.iter().enumerate() {
        ct.push(vec![i.into(), (*v).into()]);
    }
    Ok(Outcome { tables: vec![curve, ct], summary: s, pass })
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Expect {
    Zero,
    Decreasing,
}

fn d_zero_tol() -> f64 {
    1e-12
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MixingParams {
    u: f64,
    lags: Vec<Vec<f64>>,
    expect: Expect,
    #[serde(default = "d_zero_tol")]
    zero_tol: f64,
}

fn mixing(cfg: &LoadedConfig) -> Result<Outcome> {
    let p: MixingParams = cfg.params()?;
    let model = cfg.model()?;
    let d = cfg.shape.dim();
    let mut t = Table::with_header("mixing_gap.csv", lag_header(d, &["gap"]));
    let mut gaps = Vec::new();
    for lag in &p.lags {
        let g = mixing_gap(&model, p.u, lag)?;
        let mut row: Vec<Cell> = lag.iter().map(|v| Cell::Float(*v)).collect();
        row.push(g.into());
        t.push(row);
        gaps.push(g);
    }
    let pass = match p.expect {
        Expect::Zero => gaps.iter().all(|g| *g < p.zero_tol),
        Expect::Decreasing => strictly_decreasing(&gaps),
    };
    let s = summary(vec![("u", json!(p.u)), ("gap", json!(gaps))]);
    Ok(Outcome { tables: vec![t], summary: s, pass })
}

/// Validation parameters from the config, defaults unless this is a `validate` run.
pub fn validate_params(cfg: &LoadedConfig) -> Result<ValidateParams> {
    if cfg.config.experiment == Experiment::Validate {
        cfg.params()
    } else {
        Ok(ValidateParams::default())
    }
}

fn validate_run(cfg: &LoadedConfig) -> Result<Outcome> {
    let p = validate_params(cfg)?;
    let reports = suite(cfg, &p)?;
    let mut t = Table::new("invariants.csv", &["name", "status", "residual"]);
    let mut s = Map::new();
    for r in &reports {
        t.push(vec![
            r.name.as_str().into(),
            r.status.as_str().into(),
            r.residual.map_or(Cell::Text(String::new()), Cell::Float),
        ]);
        s.insert(r.name.clone(), json!({"status": r.status, "residual": r.residual, "detail": r.detail}));
    }
    let pass = reports.iter().all(|r| r.status != Status::Fail);
    Ok(Outcome { tables: vec![t], summary: s, pass })
}
