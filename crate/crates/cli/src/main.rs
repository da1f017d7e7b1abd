use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use polya::coupling::{write_samples_csv, MulticolourCoupler};
use polya::harness::{
    self, check_theorems, fit_rate, params_from_map, parse_config, read_sweep_csv, run_sweep, SweepConfig,
    DEFAULT_REPLICATES, DEFAULT_SEED, DEFAULT_TOLERANCE,
};
use polya::metrics::{
    ks_distance, levy_distance, minimal_lp, vector_linf_mc, wasserstein_l1_via_cdf, Metric,
};
use polya::rng::{seeded, stream};
use polya::tables::{build_tables, probe_lemma_l1, probe_lemma_l2};
use polya::urn::{exact_pmf_enumeration, exact_pmf_two_colour, marginal_law};
use polya::{Error, UrnParams};

#[derive(Parser)]
#[command(name = "polya", version, about = "Exact Pólya urn laws, limit distances and rate checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact law of the tracked colour's draw count: k,p,P
    Pmf {
        #[command(flatten)]
        urn: UrnArgs,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lattice tables k,p,P,Q,R,dR, or a JSON summary of the lemma probes
    Tables {
        #[command(flatten)]
        urn: UrnArgs,
        #[arg(long)]
        n: u64,
        /// Print min K and the lemma probe constants as JSON instead
        #[arg(long)]
        summary: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One distance as a JSON report
    Distance {
        #[command(flatten)]
        urn: UrnArgs,
        #[arg(long)]
        n: u64,
        /// l1, l2, linf, lp (with --p), ks, levy or vlinf
        #[arg(long, visible_alias = "metrics", default_value = "l1")]
        metric: String,
        #[arg(long)]
        p: Option<f64>,
        /// Compute l1 from the CDF difference instead of the coupling
        #[arg(long)]
        via_cdf: bool,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Coupled samples (Y, W) as CSV
    Couple {
        #[command(flatten)]
        urn: UrnArgs,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distances over an n grid as CSV
    Sweep {
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Fit log-log slopes to a sweep table and judge them
    Fit {
        /// Sweep table; read from stdin when absent
        table: Option<PathBuf>,
        #[command(flatten)]
        urn: UrnArgs,
        #[arg(long)]
        metrics: Option<String>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Sweep, fit and judge in one go; prints the verdict as JSON
    Verify {
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Enumerated composition law for small n
    Oracle {
        #[command(flatten)]
        urn: UrnArgs,
        #[arg(long)]
        n: u64,
    },
}

#[derive(Args, Clone, Default)]
struct UrnArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Initial weights, comma separated
    #[arg(long)]
    x0: Option<String>,
    /// Replacement weight
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    /// Tracked colour, numbered from 1
    #[arg(long, visible_alias = "color")]
    colour: Option<usize>,
    /// Defaults to the config file, then POLYA_SEED, then 1
    #[arg(long)]
    seed: Option<u64>,
    /// key = value file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    urn: UrnArgs,
    /// lo:hi (powers of two) or a comma list
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Numeric(String),
    /// Output already written; only the exit status remains.
    Verdict,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParam { .. } | Error::Parse(_) | Error::Domain { .. } | Error::TooLarge(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Numeric(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

impl UrnArgs {
    /// Config file entries overlaid with the flags that were given.
    fn settings(&self) -> CliResult<BTreeMap<String, String>> {
        let mut map = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        set("alpha", self.alpha.map(|v| v.to_string()));
        set("beta", self.beta.map(|v| v.to_string()));
        set("x0", self.x0.clone());
        set("a", self.a.map(|v| v.to_string()));
        set("colour", self.colour.map(|v| v.to_string()));
        set("seed", self.seed.map(|v| v.to_string()));
        if (self.alpha.is_some() || self.beta.is_some()) && self.x0.is_none() {
            map.remove("x0");
        }
        if self.x0.is_some() && self.alpha.is_none() && self.beta.is_none() {
            map.remove("alpha");
            map.remove("beta");
        }
        if let (false, Ok(seed)) = (map.contains_key("seed"), std::env::var("POLYA_SEED")) {
            map.insert("seed".into(), seed);
        }
        Ok(map)
    }
}

fn colour_of(map: &BTreeMap<String, String>, p: &UrnParams) -> CliResult<usize> {
    let Some(v) = map.get("colour").or_else(|| map.get("color")) else {
        return Ok(0);
    };
    let c: usize = v
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("colour `{v}` is not a positive integer")))?;
    if c == 0 || c > p.q() {
        return Err(Failure::Usage(format!("colour {c} is out of range 1..={}", p.q())));
    }
    Ok(c - 1)
}

fn seed_of(map: &BTreeMap<String, String>) -> CliResult<u64> {
    match map.get("seed") {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("seed `{v}` is not a 64-bit unsigned integer"))),
        None => Ok(DEFAULT_SEED),
    }
}

/// Writer for `--out`, or stdout.
fn sink(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| Failure::Numeric(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(v: &impl serde::Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Numeric(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn pmf(urn: &UrnArgs, n: u64, out: Option<&Path>) -> CliResult {
    let map = urn.settings()?;
    let p = params_from_map(&map)?;
    let law = marginal_law(&p, colour_of(&map, &p)?, n)?;
    let mut w = sink(out)?;
    writeln!(w, "k,p,P")?;
    for (k, (pk, ck)) in law.probs().iter().zip(law.cum()).enumerate() {
        writeln!(w, "{k},{pk},{ck}")?;
    }
    w.flush()?;
    Ok(())
}

fn tables(urn: &UrnArgs, n: u64, summary: bool, out: Option<&Path>) -> CliResult {
    let map = urn.settings()?;
    let p = params_from_map(&map)?;
    let limit = p.marginal(colour_of(&map, &p)?)?;
    let (law, table) = build_tables(&limit, n)?;
    if summary {
        let probe = |r: polya::Result<f64>| r.ok();
        return print_json(&json!({
            "n": n,
            "alpha": limit.alpha(),
            "beta": limit.beta(),
            "min_k": table.min_sandwich_k(&law),
            "lemma_l1": probe(probe_lemma_l1(&limit, n)),
            "lemma_l2": probe(probe_lemma_l2(&limit, n)),
        }));
    }
    let mut w = sink(out)?;
    table.write_csv(&law, &mut w)?;
    w.flush()?;
    Ok(())
}

fn distance(urn: &UrnArgs, n: u64, metric: &str, p: Option<f64>, via_cdf: bool, replicates: Option<usize>) -> CliResult {
    let map = urn.settings()?;
    let params = params_from_map(&map)?;
    let metrics = harness::parse_metrics(metric, p)?;
    let [metric] = metrics[..] else {
        return Err(Failure::Usage("distance takes exactly one metric".into()));
    };
    let limit = params.marginal(colour_of(&map, &params)?)?;
    let report = match metric {
        Metric::VectorLinf => {
            let reps = replicates.unwrap_or(DEFAULT_REPLICATES);
            vector_linf_mc(&params, n, reps, &mut seeded(seed_of(&map)?))?
        }
        _ => {
            let (law, _) = build_tables(&limit, n)?;
            match metric {
                Metric::L1 if via_cdf => wasserstein_l1_via_cdf(&law, &limit)?,
                Metric::Lp(q) => minimal_lp(&law, &limit, q)?,
                Metric::Ks => ks_distance(&law, &limit)?,
                Metric::Levy => levy_distance(&law, &limit)?,
                Metric::VectorLinf => unreachable!(),
            }
        }
    };
    print_json(&report)
}

fn couple(urn: &UrnArgs, n: u64, replicates: usize, out: Option<&Path>) -> CliResult {
    let map = urn.settings()?;
    let params = params_from_map(&map)?;
    let seed = seed_of(&map)?;
    let coupler = MulticolourCoupler::new(&params)?;
    let samples = (0..replicates as u64)
        .map(|r| coupler.sample(n, &mut stream(seed, r)))
        .collect::<polya::Result<Vec<_>>>()?;
    let mut w = sink(out)?;
    write_samples_csv(&samples, &mut w)?;
    w.flush()?;
    Ok(())
}

impl SweepArgs {
    fn config(&self) -> CliResult<SweepConfig> {
        let mut map = self.urn.settings()?;
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        set("grid", self.grid.clone());
        set("metrics", self.metrics.clone());
        set("p", self.p.map(|v| v.to_string()));
        set("replicates", self.replicates.map(|v| v.to_string()));
        set("tolerance", self.tolerance.map(|v| v.to_string()));
        set("out", self.out.as_ref().map(|v| v.display().to_string()));
        Ok(SweepConfig::from_map(&map)?)
    }
}

fn sweep(args: &SweepArgs) -> CliResult {
    let cfg = args.config()?;
    let rows = run_sweep(&cfg, sink(cfg.out.as_deref())?)?;
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.is_ok())
        .map(|r| format!("{} at n = {}", r.metric, r.n))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("failed cells: {}", failed.join(", "))))
    }
}

fn fit(table: Option<&Path>, urn: &UrnArgs, metrics: Option<&str>, p: Option<f64>, tolerance: Option<f64>) -> CliResult {
    let text = match table {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let rows = read_sweep_csv(&text)?;
    let map = urn.settings()?;
    let params = params_from_map(&map)?;
    let limit = params.marginal(colour_of(&map, &params)?)?;
    let metrics = match metrics {
        Some(m) => harness::parse_metrics(m, p)?,
        None => {
            let mut seen = Vec::new();
            for r in &rows {
                if !seen.contains(&r.metric) {
                    seen.push(r.metric);
                }
            }
            seen
        }
    };
    if metrics.is_empty() {
        return Err(Failure::Usage("the table has no rows".into()));
    }
    let tol = tolerance.unwrap_or(DEFAULT_TOLERANCE);
    let fits = metrics
        .iter()
        .map(|&m| fit_rate(&rows, m, &limit, tol))
        .collect::<polya::Result<Vec<_>>>()?;
    let grid: Vec<u64> = rows.iter().filter(|r| r.metric == metrics[0]).map(|r| r.n).collect();
    let report = check_theorems(fits, &limit, tol, &grid);
    print_json(&report)?;
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Verdict)
    }
}

fn verify(args: &SweepArgs) -> CliResult {
    let cfg = args.config()?;
    let report = harness::verify(&cfg)?;
    print_json(&report)?;
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Verdict)
    }
}

fn oracle(urn: &UrnArgs, n: u64) -> CliResult {
    let map = urn.settings()?;
    let params = params_from_map(&map)?;
    let table = exact_pmf_enumeration(&params, n)?;
    let total: f64 = table.values().sum();
    let closed_form_gap = if params.q() == 2 {
        let law = exact_pmf_two_colour(&params, n)?;
        Some(
            table
                .iter()
                .map(|(k, pr)| (law.probs()[k[0] as usize] - pr).abs())
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    let rows: Vec<_> = table
        .iter()
        .map(|(k, pr)| json!({ "counts": k, "probability": pr }))
        .collect();
    print_json(&json!({
        "n": n,
        "q": params.q(),
        "x0": params.normalized().x0(),
        "total_mass": total,
        "closed_form_max_diff": closed_form_gap,
        "compositions": rows,
    }))
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Pmf { urn, n, out } => pmf(urn, *n, out.as_deref()),
        Command::Tables { urn, n, summary, out } => tables(urn, *n, *summary, out.as_deref()),
        Command::Distance {
            urn,
            n,
            metric,
            p,
            via_cdf,
            replicates,
        } => distance(urn, *n, metric, *p, *via_cdf, *replicates),
        Command::Couple { urn, n, replicates, out } => couple(urn, *n, *replicates, out.as_deref()),
        Command::Sweep { sweep: s } => sweep(s),
        Command::Fit {
            table,
            urn,
            metrics,
            p,
            tolerance,
        } => fit(table.as_deref(), urn, metrics.as_deref(), *p, *tolerance),
        Command::Verify { sweep: s } => verify(s),
        Command::Oracle { urn, n } => oracle(urn, *n),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict) => ExitCode::from(1),
        Err(Failure::Numeric(msg)) => {
            eprintln!("polya: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("polya: {msg}");
            ExitCode::from(2)
        }
    }
}
