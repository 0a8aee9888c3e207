//! Command-line front end: `synth`, `ingest`, `solve`, `frontier`, `diagnose`.
//!
//! Every command writes its artifacts under `--out` together with a
//! `run.json` echo of the resolved configuration.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::baseline::{grid_search_simplex, ReferenceSolution, MAX_GRID_DIM};
use crate::config::RunConfig;
use crate::diagnostics::{check_params, decay_experiment, laplace_sweep, write_error_csv, write_laplace_csv, Verdict};
use crate::error::{Error, Result};
use crate::market::{
    cml, estimate_stats, log_returns, normalize_prices, parse_prices, sample_frontier, synthetic_market, FrontierCloud,
    CapitalMarketLine,
};
use crate::objective::{neg_sharpe, rastrigin, sharpe_components, sphere, MarketStats, Objective, DEFAULT_VAR_FLOOR};
use crate::projection::Projector;
use crate::solver::{init_ensemble, run, InitSpec, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "cbo", version, about = "Consensus-based optimization on convex sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic price history
    Synth(SynthArgs),
    /// Estimate market statistics from a price CSV
    Ingest(IngestArgs),
    /// Run the consensus solver
    Solve(SolveArgs),
    /// Sample the risk/return cloud and locate the tangency portfolio
    Frontier(FrontierArgs),
    /// Check parameter conditions and run the decay, Laplace and error experiments
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// key = value configuration file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Step size
    #[arg(long = "h")]
    h: Option<f64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Risk-free rate
    #[arg(long)]
    rf: Option<f64>,
    /// common | independent
    #[arg(long)]
    noise: Option<String>,
    /// Worker threads (does not affect results)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Market statistics JSON written by `ingest`
    #[arg(long)]
    stats: Option<String>,
    /// Price CSV, ingested on the fly when no stats file is given
    #[arg(long)]
    prices: Option<String>,
    /// sharpe | sphere:c1;..;cd | rastrigin:c1;..;cd[:scale]
    #[arg(long)]
    objective: Option<String>,
    /// simplex[:d] | box:lo;..,hi;.. | ball:c;..,r
    #[arg(long)]
    projector: Option<String>,
    /// Keep every n-th trace record
    #[arg(long)]
    stride: Option<usize>,
    /// Standard deviation of the Gaussian initialization
    #[arg(long)]
    init_std: Option<f64>,
    /// Lattice spacing of the grid reference (d <= 4)
    #[arg(long)]
    grid_step: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    assets: Option<usize>,
    /// Number of price rows
    #[arg(long)]
    periods: Option<usize>,
    /// Per-period mean log returns, comma separated
    #[arg(long)]
    mu: Option<String>,
    /// Per-period volatilities, comma separated
    #[arg(long)]
    vol: Option<String>,
    /// Constant pairwise correlation
    #[arg(long)]
    corr: Option<f64>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    prices: Option<String>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct FrontierArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    /// Number of random portfolios
    #[arg(long)]
    samples: Option<usize>,
    /// Also write frontier.svg
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Ascending inverse temperatures for the Laplace sweep, comma separated
    #[arg(long)]
    betas: Option<String>,
}

fn put<T: ToString>(m: &mut BTreeMap<String, String>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        m.insert(key.to_string(), v.to_string());
    }
}

impl Common {
    fn flags(&self, m: &mut BTreeMap<String, String>) {
        put(m, "seed", &self.seed);
        put(m, "out", &self.out);
        put(m, "lambda", &self.lambda);
        put(m, "sigma", &self.sigma);
        put(m, "beta", &self.beta);
        put(m, "h", &self.h);
        put(m, "particles", &self.particles);
        put(m, "max_iters", &self.max_iters);
        put(m, "tol", &self.tol);
        put(m, "rf", &self.rf);
        put(m, "noise", &self.noise);
    }
}

impl DataArgs {
    fn flags(&self, m: &mut BTreeMap<String, String>) {
        put(m, "stats", &self.stats);
        put(m, "prices", &self.prices);
        put(m, "objective", &self.objective);
        put(m, "projector", &self.projector);
        put(m, "stride", &self.stride);
        put(m, "init_std", &self.init_std);
        put(m, "grid_step", &self.grid_step);
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut flags = BTreeMap::new();
    let (common, name) = match &cli.command {
        Command::Synth(a) => {
            put(&mut flags, "assets", &a.assets);
            put(&mut flags, "periods", &a.periods);
            put(&mut flags, "mu", &a.mu);
            put(&mut flags, "vol", &a.vol);
            put(&mut flags, "corr", &a.corr);
            (&a.common, "synth")
        }
        Command::Ingest(a) => {
            put(&mut flags, "prices", &a.prices);
            (&a.common, "ingest")
        }
        Command::Solve(a) => {
            a.data.flags(&mut flags);
            (&a.common, "solve")
        }
        Command::Frontier(a) => {
            a.data.flags(&mut flags);
            put(&mut flags, "samples", &a.samples);
            if a.svg {
                flags.insert("svg".into(), "true".into());
            }
            (&a.common, "frontier")
        }
        Command::Diagnose(a) => {
            a.data.flags(&mut flags);
            put(&mut flags, "runs", &a.runs);
            put(&mut flags, "horizon", &a.horizon);
            put(&mut flags, "betas", &a.betas);
            (&a.common, "diagnose")
        }
    };
    common.flags(&mut flags);
    let cfg = RunConfig::resolve(common.config.as_deref(), &flags)?;

    let exec = || match name {
        "synth" => cmd_synth(&cfg),
        "ingest" => cmd_ingest(&cfg),
        "solve" => cmd_solve(&cfg),
        "frontier" => cmd_frontier(&cfg),
        _ => cmd_diagnose(&cfg),
    };
    match common.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config(format!("cannot start {n} workers: {e}")))?
            .install(exec),
        None => exec(),
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(out)?;
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(out, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_with(out: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(out, name)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_metadata(cfg: &RunConfig, command: &str) -> Result<()> {
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg.values(),
    });
    write_json(&cfg.out_dir(), "run.json", &meta)
}

/// Default synthetic market for `d` assets: returns and volatilities fall
/// linearly from the first asset to the last.
pub fn default_synth_spec(dim: usize) -> (Vec<f64>, Vec<f64>) {
    let frac = |l: usize| if dim > 1 { l as f64 / (dim - 1) as f64 } else { 0.0 };
    let mu = (0..dim).map(|l| 0.5 - 0.3 * frac(l)).collect();
    let vol = (0..dim).map(|l| 0.1 - 0.06 * frac(l)).collect();
    (mu, vol)
}

/// Covariance with the given volatilities and a constant correlation.
pub fn constant_correlation_cov(vol: &[f64], corr: f64) -> Vec<Vec<f64>> {
    (0..vol.len())
        .map(|i| {
            (0..vol.len())
                .map(|j| if i == j { vol[i] * vol[i] } else { corr * vol[i] * vol[j] })
                .collect()
        })
        .collect()
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let dim: usize = cfg.get("assets")?;
    let periods: usize = cfg.get("periods")?;
    let (default_mu, default_vol) = default_synth_spec(dim);
    let mu = Some(cfg.list("mu")?).filter(|v| !v.is_empty()).unwrap_or(default_mu);
    let vol = Some(cfg.list("vol")?).filter(|v| !v.is_empty()).unwrap_or(default_vol);
    if vol.len() != dim {
        return Err(Error::config(format!("vol has {} entries, expected {dim}", vol.len())));
    }
    let cov = constant_correlation_cov(&vol, cfg.get("corr")?);
    let prices = synthetic_market(cfg.get("seed")?, dim, periods, &mu, &cov)?;
    let out = cfg.out_dir();
    write_with(&out, "prices.csv", |w| prices.write_csv(w))?;
    write_metadata(cfg, "synth")?;
    println!("wrote {} assets x {} rows to {}", dim, periods, out.join("prices.csv").display());
    Ok(())
}

fn ingest_prices(path: &Path, rf: f64) -> Result<(MarketStats, usize)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let prices = normalize_prices(&parse_prices(&text)?, 100.0)?;
    let returns = log_returns(&prices);
    let rows = returns.returns.len();
    Ok((estimate_stats(&returns, rf)?, rows))
}

fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let path = cfg
        .path("prices")
        .ok_or_else(|| Error::config("ingest needs --prices"))?;
    let (stats, rows) = ingest_prices(&path, cfg.get("rf")?)?;
    let out = cfg.out_dir();
    write_json(&out, "stats.json", &stats)?;
    write_metadata(cfg, "ingest")?;
    println!("assets: {}, return rows: {}", stats.dim(), rows);
    Ok(())
}

/// Market statistics from `stats` or, failing that, `prices`. The configured
/// risk-free rate replaces the one stored in the file.
fn load_stats(cfg: &RunConfig) -> Result<Option<MarketStats>> {
    let rf: f64 = cfg.get("rf")?;
    if let Some(path) = cfg.path("stats") {
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut stats: MarketStats = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("invalid stats file {}: {e}", path.display())))?;
        stats.rf = rf;
        stats.validate()?;
        return Ok(Some(stats));
    }
    if let Some(path) = cfg.path("prices") {
        return Ok(Some(ingest_prices(&path, rf)?.0));
    }
    Ok(None)
}

struct Problem {
    objective: Box<dyn Objective>,
    projector: Projector,
    stats: Option<MarketStats>,
}

fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let spec = cfg.raw("objective").to_string();
    let (kind, rest) = spec.split_once(':').unwrap_or((spec.as_str(), ""));
    let (objective, stats): (Box<dyn Objective>, _) = match kind {
        "sharpe" => {
            let stats = load_stats(cfg)?
                .ok_or_else(|| Error::config("the sharpe objective needs --stats or --prices"))?;
            (Box::new(neg_sharpe(stats.clone(), DEFAULT_VAR_FLOOR)?), Some(stats))
        }
        "sphere" => {
            let center = crate::config::parse_list(rest).map_err(Error::Config)?;
            (Box::new(sphere(center)?), None)
        }
        "rastrigin" => {
            let (shift, scale) = rest.split_once(':').unwrap_or((rest, "1"));
            let shift = crate::config::parse_list(shift).map_err(Error::Config)?;
            let scale = scale
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("invalid rastrigin scale '{scale}'")))?;
            (Box::new(rastrigin(shift, scale)?), None)
        }
        other => return Err(Error::config(format!("unknown objective '{other}'"))),
    };
    let dim = match (&stats, kind) {
        (Some(s), _) => s.dim(),
        _ => crate::config::parse_list(rest).map_err(Error::Config)?.len(),
    };
    let projector = match cfg.raw("projector") {
        "" | "simplex" => Projector::simplex(dim)?,
        text => text.parse()?,
    };
    if projector.dim() != dim {
        return Err(Error::config(format!(
            "projector dimension {} does not match objective dimension {dim}",
            projector.dim()
        )));
    }
    Ok(Problem { objective, projector, stats })
}

/// Grid reference, available for simplex problems of dimension at most 4.
fn grid_reference(cfg: &RunConfig, problem: &Problem) -> Result<Option<ReferenceSolution>> {
    match problem.projector {
        Projector::Simplex { dim } if dim <= MAX_GRID_DIM => {
            Ok(Some(grid_search_simplex(&problem.objective, dim, cfg.get("grid_step")?)?))
        }
        _ => Ok(None),
    }
}

fn run_options(cfg: &RunConfig, reference: Option<&ReferenceSolution>) -> Result<RunOptions> {
    let stride: usize = cfg.get("stride")?;
    if stride == 0 {
        return Err(Error::config("stride must be at least 1"));
    }
    Ok(RunOptions {
        init: InitSpec { mean: None, std: cfg.get("init_std")? },
        stride,
        reference: reference.map(|r| r.weights.clone()),
    })
}

fn cmd_solve(cfg: &RunConfig) -> Result<()> {
    let params = cfg.cbo_params()?;
    let problem = build_problem(cfg)?;
    let report = check_params(&params);
    print!("{}", report.summary());
    let reference = match grid_reference(cfg, &problem) {
        Ok(r) => r,
        Err(e @ Error::Config(_)) => return Err(e),
        Err(e) => {
            eprintln!("warning: no grid reference: {e}");
            None
        }
    };
    let outcome = run(&problem.objective, &problem.projector, &params, &run_options(cfg, reference.as_ref())?)?;

    let out = cfg.out_dir();
    write_with(&out, "trace.csv", |w| outcome.trace.write_csv(w))?;
    if reference.is_some() {
        write_with(&out, "error.csv", |w| write_error_csv(&outcome.trace, w))?;
    }
    let components = match &problem.stats {
        Some(s) => Some(sharpe_components(s, &outcome.result)?),
        None => None,
    };
    let result = json!({
        "objective": problem.objective.descriptor(),
        "projector": problem.projector.to_string(),
        "weights": outcome.result,
        "value": problem.objective.eval(&outcome.result)?,
        "sharpe": components,
        "best_particle": outcome.best_point,
        "best_particle_value": outcome.best_value,
        "iterations": outcome.iterations,
        "stop": outcome.stop,
        "params": report,
        "reference": reference,
        "final_error": outcome.trace.records.last().and_then(|r| r.err_ref),
    });
    write_json(&out, "result.json", &result)?;
    write_metadata(cfg, "solve")?;
    println!(
        "stopped after {} iterations ({:?}); weights {:?}",
        outcome.iterations, outcome.stop, outcome.result
    );
    Ok(())
}

fn cmd_frontier(cfg: &RunConfig) -> Result<()> {
    let params = cfg.cbo_params()?;
    let stats = load_stats(cfg)?.ok_or_else(|| Error::config("frontier needs --stats or --prices"))?;
    let objective = neg_sharpe(stats.clone(), DEFAULT_VAR_FLOOR)?;
    let projector = Projector::simplex(stats.dim())?;
    let cloud = sample_frontier(&stats, cfg.get("samples")?, params.seed)?;
    let outcome = run(&objective, &projector, &params, &run_options(cfg, None)?)?;
    let tangency = sharpe_components(&stats, &outcome.result)?;
    let line = cml(stats.rf, tangency.risk, tangency.ret)?;

    let out = cfg.out_dir();
    write_with(&out, "frontier.csv", |w| cloud.write_csv(w))?;
    let doc = json!({
        "weights": outcome.result,
        "ret": tangency.ret,
        "risk": tangency.risk,
        "sharpe": tangency.sharpe,
        "cml": line,
        "max_sampled_sharpe": cloud.max_sharpe().map(|s| s.sharpe),
        "iterations": outcome.iterations,
    });
    write_json(&out, "tangency.json", &doc)?;
    if cfg.get::<bool>("svg")? {
        let svg = frontier_svg(&cloud, (tangency.risk, tangency.ret), &line);
        write_with(&out, "frontier.svg", |w| Ok(w.write_all(svg.as_bytes())?))?;
    }
    write_metadata(cfg, "frontier")?;
    println!(
        "tangency sharpe {} (best sampled {:?}); CML intercept {}, slope {}",
        tangency.sharpe,
        cloud.max_sharpe().map(|s| s.sharpe),
        line.intercept,
        line.slope
    );
    Ok(())
}

/// Scatter of the sampled portfolios with the CML and the tangency point.
pub fn frontier_svg(cloud: &FrontierCloud, tangency: (f64, f64), line: &CapitalMarketLine) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 40.0;
    let risks = cloud.samples.iter().map(|s| s.risk).chain([0.0, tangency.0]);
    let max_risk = risks.fold(0.0, f64::max) * 1.05;
    let rets: Vec<f64> = cloud
        .samples
        .iter()
        .map(|s| s.ret)
        .chain([tangency.1, line.intercept, line.at(max_risk)])
        .collect();
    let lo = rets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span_x = if max_risk > 0.0 { max_risk } else { 1.0 };
    let span_y = if hi > lo { hi - lo } else { 1.0 };
    let x = |r: f64| PAD + (W - 2.0 * PAD) * r / span_x;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / span_y;

    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\">\n");
    s.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n<g fill=\"steelblue\" fill-opacity=\"0.4\">\n"
    ));
    for p in &cloud.samples {
        s.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\"/>\n", x(p.risk), y(p.ret)));
    }
    s.push_str("</g>\n");
    s.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        x(0.0),
        y(line.intercept),
        x(max_risk),
        y(line.at(max_risk))
    ));
    s.push_str(&format!(
        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"crimson\"/>\n",
        x(tangency.0),
        y(tangency.1)
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">risk</text>\n<text x=\"4\" y=\"{}\" font-size=\"12\">return</text>\n</svg>\n",
        W / 2.0,
        H - 8.0,
        PAD / 2.0
    ));
    s
}

fn cmd_diagnose(cfg: &RunConfig) -> Result<()> {
    let params = cfg.cbo_params()?;
    let problem = build_problem(cfg)?;
    let betas = cfg.list("betas")?;
    let runs: usize = cfg.get("runs")?;
    let horizon: usize = cfg.get("horizon")?;
    let init = InitSpec { mean: None, std: cfg.get("init_std")? };
    let out = cfg.out_dir();

    let report = check_params(&params);
    let mut summary = report.summary();
    write_json(&out, "params.json", &report)?;

    // below here failures are reported, not fatal
    match decay_experiment(&problem.objective, &problem.projector, &params, &init, runs, horizon, params.seed) {
        Ok(decay) => {
            write_with(&out, "decay.csv", |w| decay.write_csv(w))?;
            summary.push_str(&decay.summary());
        }
        Err(e) => summary.push_str(&format!("decay experiment failed: {e}\n")),
    }

    let dim = problem.projector.dim();
    let laplace = init_ensemble(dim, &params, &problem.projector.anchor(), init.std, &problem.projector, &problem.objective, params.seed)
        .and_then(|ens| laplace_sweep(&ens, &betas));
    match laplace {
        Ok(rows) => {
            write_with(&out, "laplace.csv", |w| write_laplace_csv(&rows, dim, w))?;
            if let Some(last) = rows.last() {
                summary.push_str(&format!("laplace sweep: gap {} at beta {}\n", last.gap, last.beta));
            }
        }
        Err(e) => summary.push_str(&format!("laplace sweep failed: {e}\n")),
    }

    let error = grid_reference(cfg, &problem).and_then(|reference| match reference {
        Some(r) => {
            let outcome = run(&problem.objective, &problem.projector, &params, &run_options(cfg, Some(&r))?)?;
            Ok(Some(outcome.trace))
        }
        None => Ok(None),
    });
    match error {
        Ok(Some(trace)) => {
            write_with(&out, "error.csv", |w| write_error_csv(&trace, w))?;
            let errs: Vec<f64> = trace.records.iter().filter_map(|r| r.err_ref).collect();
            if let (Some(first), Some(last)) = (errs.first(), errs.last()) {
                summary.push_str(&format!("error to reference: initial {first}, final {last}\n"));
            }
        }
        Ok(None) => summary.push_str("error trace skipped: no grid reference for this problem\n"),
        Err(e) => summary.push_str(&format!("error trace failed: {e}\n")),
    }

    write_with(&out, "summary.txt", |w| Ok(w.write_all(summary.as_bytes())?))?;
    write_metadata(cfg, "diagnose")?;
    print!("{summary}");
    if report.verdict != Verdict::Satisfied {
        eprintln!("note: verdict {}", report.verdict);
    }
    Ok(())
}
