//! Sweeps over a geometric `n` grid, log-log rate fits and verdicts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{monotone_thresholds, MonotoneCoupling};
use crate::error::{Error, Result};
use crate::metrics::{
    ks_from_table, levy_with_bracket, minimal_lp_from_coupling, vector_linf_mc, DistanceReport, Metric,
};
use crate::rng::stream;
use crate::special::BetaParams;
use crate::tables::{build_tables, DiscreteLaw, ResidualTable};
use crate::urn::UrnParams;

/// Default slope tolerance for verdicts.
pub const DEFAULT_TOLERANCE: f64 = 0.07;
/// Default replicates for Monte Carlo metrics.
pub const DEFAULT_REPLICATES: usize = 10_000;
/// Default seed when none is configured.
pub const DEFAULT_SEED: u64 = 1;
/// Header of sweep tables.
pub const CSV_HEADER: &str = "metric,n,value,error_bound,status";

/// Powers of two from `2^8` to `2^14`.
pub fn default_grid() -> Vec<u64> {
    (8..=14).map(|e| 1_u64 << e).collect()
}

/// Metrics checked by `verify` unless told otherwise.
pub fn default_metrics() -> Vec<Metric> {
    vec![Metric::L1, Metric::L2, Metric::LINF, Metric::Ks, Metric::Levy]
}

/// Parse `lo:hi` (both powers of two) into every power of two between them,
/// or a comma list of sizes.
pub fn parse_grid(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let grid = if let Some((lo, hi)) = s.split_once(':') {
        let lo = parse_u64("grid", lo)?;
        let hi = parse_u64("grid", hi)?;
        if !lo.is_power_of_two() || !hi.is_power_of_two() {
            return Err(Error::param("grid", format!("`{s}`: both ends must be powers of two")));
        }
        if lo > hi {
            return Err(Error::param("grid", format!("`{s}`: empty range")));
        }
        (lo.trailing_zeros()..=hi.trailing_zeros()).map(|e| 1_u64 << e).collect()
    } else {
        s.split(',').map(|t| parse_u64("grid", t)).collect::<Result<Vec<_>>>()?
    };
    check_grid(&grid)?;
    Ok(grid)
}

fn check_grid(grid: &[u64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param("grid", "no sizes"));
    }
    if grid[0] == 0 {
        return Err(Error::param("grid", "sizes must be at least 1"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("grid", "sizes must be strictly increasing"));
    }
    Ok(())
}

fn parse_u64(field: &str, s: &str) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::param(field, format!("`{}` is not a nonnegative integer", s.trim())))
}

fn parse_f64(field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::param(field, format!("`{}` is not a number", s.trim())))
}

/// Comma-separated metric names. A bare `lp` takes its exponent from `p`.
pub fn parse_metrics(s: &str, p: Option<f64>) -> Result<Vec<Metric>> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let m = if tok.eq_ignore_ascii_case("lp") {
            let p = p.ok_or_else(|| Error::param("metrics", "`lp` needs an exponent (p)"))?;
            if p.is_infinite() {
                Metric::LINF
            } else {
                format!("lp{p}").parse()?
            }
        } else {
            tok.parse()?
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::param("metrics", "no metrics given"));
    }
    Ok(out)
}

/// Flat `key = value` text; `#` starts a comment. Later keys win.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().to_ascii_lowercase().replace('-', "_");
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

/// Everything a sweep needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub params: UrnParams,
    /// Tracked colour, 0-based.
    pub colour: usize,
    pub metrics: Vec<Metric>,
    pub n_grid: Vec<u64>,
    pub seed: u64,
    pub replicates: usize,
    pub out: Option<PathBuf>,
    pub tolerance: f64,
}

const CONFIG_KEYS: &[&str] = &[
    "alpha", "beta", "x0", "a", "colour", "color", "grid", "metrics", "p", "seed", "replicates", "out", "tolerance",
];

impl SweepConfig {
    /// Defaults around the given urn: colour 1, default metrics and grid.
    pub fn new(params: UrnParams) -> Self {
        Self {
            params,
            colour: 0,
            metrics: default_metrics(),
            n_grid: default_grid(),
            seed: DEFAULT_SEED,
            replicates: DEFAULT_REPLICATES,
            out: None,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    /// Build from `key = value` pairs. The urn is given either by `x0` (with
    /// optional `a`) or by `alpha` and `beta`; `colour` is 1-based.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(Error::Parse(format!("unknown config key `{k}`")));
        }
        let params = params_from_map(map)?;
        let mut c = Self::new(params);
        if let Some(v) = map.get("colour").or_else(|| map.get("color")) {
            let i = parse_u64("colour", v)? as usize;
            if i == 0 {
                return Err(Error::param("colour", "colours are numbered from 1"));
            }
            c.colour = i - 1;
        }
        let p = map.get("p").map(|v| parse_f64("p", v)).transpose()?;
        if let Some(v) = map.get("metrics") {
            c.metrics = parse_metrics(v, p)?;
        }
        if let Some(v) = map.get("grid") {
            c.n_grid = parse_grid(v)?;
        }
        if let Some(v) = map.get("seed") {
            c.seed = parse_u64("seed", v)?;
        }
        if let Some(v) = map.get("replicates") {
            c.replicates = parse_u64("replicates", v)? as usize;
        }
        if let Some(v) = map.get("out") {
            c.out = Some(PathBuf::from(v));
        }
        if let Some(v) = map.get("tolerance") {
            c.tolerance = parse_f64("tolerance", v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.colour >= self.params.q() {
            return Err(Error::param(
                "colour",
                format!("{} is out of range for {} colours", self.colour + 1, self.params.q()),
            ));
        }
        check_grid(&self.n_grid)?;
        if self.metrics.is_empty() {
            return Err(Error::param("metrics", "no metrics given"));
        }
        if self.replicates == 0 {
            return Err(Error::param("replicates", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        Ok(())
    }

    /// Beta limit of the tracked colour.
    pub fn limit(&self) -> Result<BetaParams> {
        self.params.marginal(self.colour)
    }
}

/// Urn parameters from `x0`/`a` or `alpha`/`beta`.
pub fn params_from_map(map: &BTreeMap<String, String>) -> Result<UrnParams> {
    let a = map.get("a").map(|v| parse_f64("a", v)).transpose()?.unwrap_or(1.0);
    if let Some(x0) = map.get("x0") {
        if map.contains_key("alpha") || map.contains_key("beta") {
            return Err(Error::param("x0", "give either x0 or alpha/beta, not both"));
        }
        let x0 = x0.split(',').map(|t| parse_f64("x0", t)).collect::<Result<Vec<_>>>()?;
        return UrnParams::new(a, x0);
    }
    match (map.get("alpha"), map.get("beta")) {
        (Some(al), Some(be)) => UrnParams::new(a, vec![a * parse_f64("alpha", al)?, a * parse_f64("beta", be)?]),
        _ => Err(Error::param("alpha", "need alpha and beta, or x0")),
    }
}

/// Outcome of one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

/// One `(metric, n)` cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub metric: Metric,
    pub n: u64,
    pub value: f64,
    pub error_bound: f64,
    pub status: RowStatus,
}

impl SweepRow {
    fn from_report(r: Result<DistanceReport>, metric: Metric, n: u64) -> Self {
        match r {
            Ok(r) => Self {
                metric,
                n,
                value: r.value,
                error_bound: r.error_bound,
                status: RowStatus::Ok,
            },
            Err(e) => Self::failed(metric, n, &e),
        }
    }

    fn failed(metric: Metric, n: u64, e: &Error) -> Self {
        Self {
            metric,
            n,
            value: f64::NAN,
            error_bound: f64::NAN,
            status: RowStatus::Failed(e.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }

    /// The CSV line, without newline.
    pub fn to_csv(&self) -> String {
        let status = match &self.status {
            RowStatus::Ok => "ok".to_string(),
            RowStatus::Failed(msg) => format!("failed: {}", msg.replace([',', '\n', '\r'], ";")),
        };
        format!("{},{},{},{},{}", self.metric, self.n, self.value, self.error_bound, status)
    }
}

/// Everything derived from the law at one `n`, built on demand.
struct Cell {
    n: u64,
    law: DiscreteLaw,
    table: ResidualTable,
    coupling: OnceLock<std::result::Result<MonotoneCoupling, String>>,
    ks: OnceLock<f64>,
}

impl Cell {
    fn coupling(&self, limit: &BetaParams) -> Result<&MonotoneCoupling> {
        self.coupling
            .get_or_init(|| monotone_thresholds(&self.law, limit).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::Contract(e.clone()))
    }

    fn ks(&self, limit: &BetaParams) -> f64 {
        *self.ks.get_or_init(|| ks_from_table(&self.table, limit).value)
    }
}

fn evaluate(cfg: &SweepConfig, limit: &BetaParams, cell: &Cell, metric: Metric) -> Result<DistanceReport> {
    match metric {
        Metric::Lp(p) => minimal_lp_from_coupling(cell.coupling(limit)?, p),
        Metric::Ks => Ok(ks_from_table(&cell.table, limit)),
        Metric::Levy => levy_with_bracket(&cell.law, limit, cell.ks(limit)),
        Metric::VectorLinf => {
            let mut g = stream(cfg.seed, cell.n);
            vector_linf_mc(&cfg.params, cell.n, cfg.replicates, &mut g)
        }
    }
}

/// Evaluate every `(metric, n)` cell, writing CSV rows to `sink` as each
/// metric completes.
///
/// Cells run in parallel, but rows come out ordered by metric (in config
/// order) and then `n`, and Monte Carlo cells draw from a stream keyed by
/// `(seed, n)`, so the output bytes depend only on the config. A cell that
/// fails numerically becomes a flagged row and the sweep carries on.
pub fn run_sweep<W: Write>(cfg: &SweepConfig, mut sink: W) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let limit = cfg.limit()?;
    let cells: Vec<std::result::Result<Cell, Error>> = cfg
        .n_grid
        .par_iter()
        .map(|&n| {
            let (law, table) = build_tables(&limit, n)?;
            Ok(Cell {
                n,
                law,
                table,
                coupling: OnceLock::new(),
                ks: OnceLock::new(),
            })
        })
        .collect();
    let io = |e: std::io::Error| Error::Io {
        path: cfg.out.clone().unwrap_or_else(|| PathBuf::from("<output>")),
        source: e,
    };
    writeln!(sink, "{CSV_HEADER}").map_err(io)?;
    let mut rows = Vec::with_capacity(cfg.metrics.len() * cfg.n_grid.len());
    for &metric in &cfg.metrics {
        let batch: Vec<SweepRow> = cells
            .par_iter()
            .zip(&cfg.n_grid)
            .map(|(cell, &n)| match cell {
                Ok(cell) => SweepRow::from_report(evaluate(cfg, &limit, cell, metric), metric, n),
                Err(e) => SweepRow::failed(metric, n, e),
            })
            .collect();
        for row in &batch {
            writeln!(sink, "{}", row.to_csv()).map_err(io)?;
        }
        sink.flush().map_err(io)?;
        rows.extend(batch);
    }
    Ok(rows)
}

/// [`run_sweep`] into `cfg.out` if set, otherwise into nothing.
pub fn run_sweep_to_configured(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    match &cfg.out {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            run_sweep(cfg, std::io::BufWriter::new(f))
        }
        None => run_sweep(cfg, std::io::sink()),
    }
}

/// Parse a sweep table as written by [`run_sweep`].
pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::Parse(format!("table must start with `{CSV_HEADER}`"))),
    }
    lines
        .map(|(i, line)| {
            let bad = |what: &str| Error::Parse(format!("table line {}: {what}", i + 1));
            let f: Vec<&str> = line.splitn(5, ',').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let status = match f[4].trim() {
                "ok" => RowStatus::Ok,
                s => RowStatus::Failed(s.strip_prefix("failed:").unwrap_or(s).trim().to_string()),
            };
            Ok(SweepRow {
                metric: f[0].parse().map_err(|_| bad("unknown metric"))?,
                n: f[1].trim().parse().map_err(|_| bad("bad n"))?,
                value: f[2].trim().parse().map_err(|_| bad("bad value"))?,
                error_bound: f[3].trim().parse().map_err(|_| bad("bad error bound"))?,
                status,
            })
        })
        .collect()
}

/// Read a sweep table from a file.
pub fn read_sweep_file(path: &Path) -> Result<Vec<SweepRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_sweep_csv(&text)
}

/// Rate exponent the theory predicts for `metric` against `limit`.
///
/// `-1` for minimal `L_p` and Lévy, `-min(alpha, beta, 1)` for
/// Kolmogorov-Smirnov, and `0` for the vector coupling witness.
pub fn expected_exponent(metric: Metric, limit: &BetaParams) -> f64 {
    match metric {
        Metric::Lp(_) | Metric::Levy => -1.0,
        Metric::Ks => -limit.rho(),
        Metric::VectorLinf => 0.0,
    }
}

/// Least-squares line through `(ln n, ln value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

/// Fit `value ≈ exp(intercept) n^slope`.
pub fn fit_power_law(ns: &[u64], values: &[f64]) -> Result<PowerLaw> {
    if ns.len() != values.len() {
        return Err(Error::Fit("sizes and values differ in length".into()));
    }
    if ns.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {}", ns.len())));
    }
    for (&n, &v) in ns.iter().zip(values) {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Fit(format!("value {v} at n = {n} is not positive")));
        }
        if n == 0 {
            return Err(Error::Fit("n = 0 has no logarithm".into()));
        }
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all sizes are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(PowerLaw {
        slope,
        intercept,
        max_residual,
    })
}

/// Fitted rate for one metric with its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub metric: Metric,
    pub points: usize,
    pub slope: f64,
    /// Informational only; no verdict depends on it.
    pub intercept: f64,
    pub max_residual: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub delta: f64,
    pub pass: bool,
}

impl RateFit {
    /// Re-judge against another expected exponent.
    pub fn judged(mut self, expected: f64, tolerance: f64) -> Self {
        self.expected = expected;
        self.tolerance = tolerance;
        self.delta = self.slope - expected;
        self.pass = self.delta.abs() <= tolerance;
        self
    }
}

/// Fit the rows of `metric` and judge the slope against
/// [`expected_exponent`].
pub fn fit_rate(rows: &[SweepRow], metric: Metric, limit: &BetaParams, tolerance: f64) -> Result<RateFit> {
    let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.metric == metric).collect();
    if let Some(r) = mine.iter().find(|r| !r.is_ok()) {
        return Err(Error::Fit(format!("{metric} row at n = {} is flagged as failed", r.n)));
    }
    let ns: Vec<u64> = mine.iter().map(|r| r.n).collect();
    let vs: Vec<f64> = mine.iter().map(|r| r.value).collect();
    let law = fit_power_law(&ns, &vs).map_err(|e| match e {
        Error::Fit(msg) => Error::Fit(format!("{metric}: {msg}")),
        other => other,
    })?;
    Ok(RateFit {
        metric,
        points: ns.len(),
        slope: law.slope,
        intercept: law.intercept,
        max_residual: law.max_residual,
        expected: 0.0,
        tolerance,
        delta: 0.0,
        pass: false,
    }
    .judged(expected_exponent(metric, limit), tolerance))
}

/// Verdicts for a set of fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub grid: Vec<u64>,
    pub fits: Vec<RateFit>,
    pub pass: bool,
}

/// Judge every fit against the exponent predicted for `limit`; the report
/// passes iff every fit does.
pub fn check_theorems(fits: Vec<RateFit>, limit: &BetaParams, tolerance: f64, grid: &[u64]) -> VerdictReport {
    let fits: Vec<RateFit> = fits
        .into_iter()
        .map(|f| {
            let e = expected_exponent(f.metric, limit);
            f.judged(e, tolerance)
        })
        .collect();
    let pass = !fits.is_empty() && fits.iter().all(|f| f.pass);
    VerdictReport {
        alpha: limit.alpha(),
        beta: limit.beta(),
        rho: limit.rho(),
        grid: grid.to_vec(),
        fits,
        pass,
    }
}

/// Sweep, fit every configured metric and judge the slopes.
pub fn verify(cfg: &SweepConfig) -> Result<VerdictReport> {
    let rows = run_sweep_to_configured(cfg)?;
    let limit = cfg.limit()?;
    let fits = cfg
        .metrics
        .iter()
        .map(|&m| fit_rate(&rows, m, &limit, cfg.tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(check_theorems(fits, &limit, cfg.tolerance, &cfg.n_grid))
}
