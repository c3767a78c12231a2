//! Command-line front end. Every subcommand writes CSV to a file under `--out`
//! or, without it, to standard output.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::asymptotics::{self, ExpansionTable};
use crate::error::{Error, Result};
use crate::montecarlo::{self, ErrorBars, McConfig, McReport, RngStream};
use crate::presets;
use crate::recursion::{self, NetworkConfig, Schedule, Tensor};
use crate::weingarten::{self, CycleType};

pub const TRAJECTORY_HEADER: &str = "ell,K,Theta,V4,D,F,A,B,P,Q,R,S,T,U,V6";
pub const NORMALIZED_HEADER: &str = "ell,V4,D,F,A,B,P,Q,R,S,T,U,V6";
pub const MC_HEADER: &str = "tensor,ell,mean,stderr,n_samples,c_w,seed";
pub const COMPARE_HEADER: &str = "tensor,ell,recursion,expansion,mc_mean,mc_stderr,z_score,rel_residual,flags";
pub const WEINGARTEN_HEADER: &str = "m,lambda,n,exact,series_order5";
pub const EXPAND_HEADER: &str = "ell,value";
pub const MOMENTS_HEADER: &str = "n,c_w,rows,cols,value,mc_mean,mc_stderr,z_score";

#[derive(Debug, Parser)]
#[command(name = "orthostat", version, about = "Finite-width statistics of orthogonally initialized tanh networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Iterate the layer recursions for one input.
    Solve(CommonArgs),
    /// Evaluate a large-depth series at ell = 1..=L.
    Expand(ExpandArgs),
    /// Monte-Carlo ensemble estimates.
    Mc(McArgs),
    /// Recursion, series and Monte Carlo side by side.
    Compare(CompareArgs),
    /// Weingarten values for all cycle types up to k.
    Weingarten(WeingartenArgs),
    /// One Haar-orthogonal moment, optionally against a sampled estimate.
    Moments(MomentsArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cw: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Bundled input vector: x0, x1, x2 or x3.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_net: Option<usize>,
    #[arg(long)]
    pub n_stats: Option<usize>,
    /// 600 networks and 10 repetitions.
    #[arg(long)]
    pub full_paper_scale: bool,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "K")]
    pub tensor: String,
    /// Alternative coefficient file in `tensor,p,i,j,coefficient` format.
    #[arg(long)]
    pub tables: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated weight variances; runs a K/Theta sweep instead.
    #[arg(long, value_delimiter = ',')]
    pub cw_sweep: Option<Vec<f64>>,
    /// Every standard error across repetitions.
    #[arg(long)]
    pub repetition_errors: bool,
    /// Exclude i = j from the F and B double sums.
    #[arg(long)]
    pub exclude_diagonal: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub tables: Option<PathBuf>,
    /// Skip the Monte-Carlo columns.
    #[arg(long)]
    pub no_mc: bool,
}

#[derive(Debug, Args)]
pub struct WeingartenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: usize,
    /// Shorthand for equal row and column indices.
    #[arg(long, value_delimiter = ',')]
    pub indices: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub rows: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub cols: Option<Vec<usize>>,
    /// Haar samples for the Monte-Carlo check; 0 disables it.
    #[arg(long, default_value_t = 0)]
    pub mc_samples: usize,
}

/// Either a bundled preset name or an explicit vector.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InputSpec {
    Preset(String),
    Vector(Vec<f64>),
}

/// The JSON configuration file. All fields are optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<usize>,
    #[serde(rename = "L")]
    pub depth: Option<usize>,
    pub c_w: Option<f64>,
    pub lambda_b: Option<Schedule>,
    pub lambda_w: Option<Schedule>,
    pub n_net: Option<usize>,
    pub n_stats: Option<usize>,
    pub seed: Option<u64>,
    pub inputs: Option<Vec<InputSpec>>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub inputs: Vec<Vec<f64>>,
    pub n_net: usize,
    pub n_stats: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

/// A failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn resolve_input(spec: &InputSpec) -> CliResult<Vec<f64>> {
    match spec {
        InputSpec::Preset(name) => presets::preset(name)
            .map(|x| x.to_vec())
            .ok_or_else(|| usage(format!("unknown preset {name:?}; expected one of {:?}", presets::NAMES))),
        InputSpec::Vector(v) => Ok(v.clone()),
    }
}

/// Merges defaults, the JSON file and flags, in increasing precedence.
pub fn resolve(args: &CommonArgs) -> CliResult<RunConfig> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let width = args.width.or(file.n).unwrap_or(50);
    let depth = args.depth.or(file.depth).unwrap_or(10);
    let c_w = args.cw.or(file.c_w).unwrap_or(1.0);
    let mut network = NetworkConfig::new(width, depth, c_w);
    if let Some(s) = file.lambda_b {
        network.lambda_b = s;
    }
    if let Some(s) = file.lambda_w {
        network.lambda_w = s;
    }
    network.validate().map_err(|e| usage(e.to_string()))?;

    let mut inputs = match &file.inputs {
        Some(specs) => specs.iter().map(resolve_input).collect::<CliResult<Vec<_>>>()?,
        None => vec![presets::X0.to_vec(), presets::X1.to_vec()],
    };
    if let Some(name) = &args.preset {
        inputs[0] = resolve_input(&InputSpec::Preset(name.clone()))?;
    }
    if inputs.is_empty() || inputs.len() > 2 {
        return Err(usage("config needs one or two inputs"));
    }
    if let Some(x) = inputs.iter().find(|x| x.len() != width) {
        return Err(usage(format!("input of length {} does not match width {width}", x.len())));
    }

    let (def_net, def_stats) = if args.full_paper_scale { (600, 10) } else { (200, 5) };
    let n_net = args.n_net.or(file.n_net).unwrap_or(def_net);
    let n_stats = args.n_stats.or(file.n_stats).unwrap_or(def_stats);
    if n_net < 2 {
        return Err(usage("n-net must be at least 2"));
    }
    if n_stats < 1 {
        return Err(usage("n-stats must be at least 1"));
    }
    Ok(RunConfig {
        network,
        inputs,
        n_net,
        n_stats,
        seed: args.seed.or(file.seed).unwrap_or(0),
        out: args.out.clone(),
    })
}

/// Entry point used by the binary; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("orthostat: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::Solve(a) => cmd_solve(&resolve(a)?),
        Command::Expand(a) => cmd_expand(&resolve(&a.common)?, &a.tensor, a.tables.as_deref()),
        Command::Mc(a) => {
            let cfg = resolve(&a.common)?;
            let bars = if a.repetition_errors { ErrorBars::Repetitions } else { ErrorBars::Paper };
            cmd_mc(&cfg, a.cw_sweep.as_deref(), bars, a.exclude_diagonal)
        }
        Command::Compare(a) => cmd_compare(&resolve(&a.common)?, a.tables.as_deref(), !a.no_mc),
        Command::Weingarten(a) => cmd_weingarten(a.n, a.k, a.common.out.as_deref()),
        Command::Moments(a) => {
            let cfg = resolve(&a.common)?;
            let (rows, cols) = match (&a.indices, &a.rows, &a.cols) {
                (Some(i), None, None) => (i.clone(), i.clone()),
                (None, Some(r), Some(c)) => (r.clone(), c.clone()),
                _ => return Err(usage("give either --indices or both --rows and --cols")),
            };
            cmd_moments(a.n, cfg.network.c_w, &rows, &cols, a.mc_samples, cfg.seed, cfg.out.as_deref())
        }
    }
}

fn emit(out: Option<&Path>, file: &str, body: &str) -> CliResult<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(Error::from)?;
            std::fs::write(dir.join(file), body).map_err(Error::from)?;
        }
        None => {
            std::io::stdout().write_all(body.as_bytes()).map_err(Error::from)?;
        }
    }
    Ok(())
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>, header: &str) -> CliResult<String> {
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv flush: {e}")))?;
    let body = String::from_utf8(bytes).expect("utf-8 csv");
    Ok(format!("{header}\n{body}"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Raw and normalized trajectory CSVs.
pub fn solve_csv(cfg: &RunConfig) -> CliResult<(String, String)> {
    let traj = recursion::run(&cfg.inputs[0], &cfg.network)?;
    let mut raw = csv_writer();
    for s in &traj.states {
        let mut rec = vec![s.ell.to_string()];
        rec.extend(Tensor::ALL.iter().map(|&t| s.get(t).to_string()));
        raw.write_record(&rec).map_err(Error::from)?;
    }
    let mut norm = csv_writer();
    for n in recursion::normalize(&traj)? {
        let mut rec = vec![n.ell.to_string()];
        rec.extend(recursion::NormalizedTensors::COLUMNS.iter().map(|&t| fmt_opt(n.get(t))));
        norm.write_record(&rec).map_err(Error::from)?;
    }
    Ok((finish(raw, TRAJECTORY_HEADER)?, finish(norm, NORMALIZED_HEADER)?))
}

pub fn cmd_solve(cfg: &RunConfig) -> CliResult<()> {
    let (raw, norm) = solve_csv(cfg)?;
    match cfg.out.as_deref() {
        Some(dir) => {
            emit(Some(dir), "trajectory.csv", &raw)?;
            emit(Some(dir), "normalized.csv", &norm)
        }
        None => emit(None, "", &raw),
    }
}

fn load_tables(path: Option<&Path>) -> CliResult<Vec<ExpansionTable>> {
    Ok(match path {
        Some(p) => asymptotics::load_tables_from_path(p)?,
        None => asymptotics::load_paper_tables()?,
    })
}

pub fn expand_csv(depth: usize, tensor: &str, tables: &[ExpansionTable]) -> CliResult<String> {
    let t = Tensor::parse(tensor).ok_or_else(|| usage(format!("unknown tensor {tensor:?}")))?;
    let table = asymptotics::find_table(tables, t)
        .ok_or_else(|| CliError::Runtime(Error::Config(format!("no expansion table for {t}"))))?;
    let mut w = csv_writer();
    for ell in 1..=depth {
        w.write_record([ell.to_string(), asymptotics::eval_expansion(table, ell as f64).to_string()])
            .map_err(Error::from)?;
    }
    finish(w, EXPAND_HEADER)
}

pub fn cmd_expand(cfg: &RunConfig, tensor: &str, tables: Option<&Path>) -> CliResult<()> {
    let body = expand_csv(cfg.network.depth, tensor, &load_tables(tables)?)?;
    emit(cfg.out.as_deref(), &format!("expand_{tensor}.csv"), &body)
}

pub fn mc_config(cfg: &RunConfig) -> McConfig {
    McConfig::new(cfg.network.clone(), cfg.n_net, cfg.n_stats, cfg.seed)
}

fn inputs_of(cfg: &RunConfig) -> Vec<&[f64]> {
    cfg.inputs.iter().map(|v| v.as_slice()).collect()
}

pub fn mc_csv(reports: &[McReport]) -> CliResult<String> {
    let mut w = csv_writer();
    for rep in reports {
        for r in &rep.rows {
            w.write_record([
                r.tensor.to_string(),
                r.ell.to_string(),
                r.estimate.mean.to_string(),
                r.estimate.stderr.to_string(),
                r.estimate.n_samples.to_string(),
                rep.c_w.to_string(),
                rep.seed.to_string(),
            ])
            .map_err(Error::from)?;
        }
    }
    finish(w, MC_HEADER)
}

pub fn run_mc(cfg: &RunConfig, sweep: Option<&[f64]>, bars: ErrorBars, exclude_diagonal: bool) -> CliResult<Vec<McReport>> {
    let mut mc = mc_config(cfg);
    mc.error_bars = bars;
    mc.exclude_diagonal = exclude_diagonal;
    let inputs = inputs_of(cfg);
    Ok(match sweep {
        Some(values) => montecarlo::sweep_cw(values, &mc, &inputs)?,
        None => vec![montecarlo::run_ensemble(&mc, &inputs, true)?],
    })
}

pub fn cmd_mc(cfg: &RunConfig, sweep: Option<&[f64]>, bars: ErrorBars, exclude_diagonal: bool) -> CliResult<()> {
    let body = mc_csv(&run_mc(cfg, sweep, bars, exclude_diagonal)?)?;
    emit(cfg.out.as_deref(), "mc.csv", &body)
}

/// Recursion names with a Monte-Carlo estimator.
fn mc_name(t: Tensor) -> Option<&'static str> {
    match t {
        Tensor::K => Some("K"),
        Tensor::Theta => Some("Theta"),
        Tensor::V4 => Some("V4"),
        Tensor::D => Some("D"),
        Tensor::F => Some("F"),
        Tensor::A => Some("A"),
        Tensor::B => Some("B"),
        _ => None,
    }
}

pub fn compare_csv(cfg: &RunConfig, tables: &[ExpansionTable], mc: Option<&McReport>) -> CliResult<String> {
    let traj = recursion::run(&cfg.inputs[0], &cfg.network)?;
    let mut w = csv_writer();
    for &t in &Tensor::ALL {
        let table = asymptotics::find_table(tables, t);
        for s in &traj.states {
            let rec = s.get(t);
            let mut flags = Vec::new();
            let expansion = table.map(|tb| asymptotics::eval_expansion(tb, s.ell as f64));
            if expansion.is_none() {
                flags.push("no_expansion");
            }
            let rel = expansion.map(|e| {
                if rec == 0.0 {
                    flags.push("absolute_residual");
                    (rec - e).abs()
                } else {
                    (rec - e).abs() / rec.abs()
                }
            });
            let est = mc.and_then(|r| mc_name(t).and_then(|name| r.get(name, s.ell)));
            if est.is_none() {
                flags.push("no_mc");
            }
            let z = est.and_then(|e| (e.stderr > 0.0).then(|| (e.mean - rec) / e.stderr));
            w.write_record([
                t.name().to_string(),
                s.ell.to_string(),
                rec.to_string(),
                fmt_opt(expansion),
                fmt_opt(est.map(|e| e.mean)),
                fmt_opt(est.map(|e| e.stderr)),
                fmt_opt(z),
                fmt_opt(rel),
                flags.join(";"),
            ])
            .map_err(Error::from)?;
        }
    }
    finish(w, COMPARE_HEADER)
}

pub fn cmd_compare(cfg: &RunConfig, tables: Option<&Path>, with_mc: bool) -> CliResult<()> {
    let tables = load_tables(tables)?;
    let report = if with_mc {
        Some(montecarlo::run_ensemble(&mc_config(cfg), &[&cfg.inputs[0]], true)?)
    } else {
        None
    };
    let body = compare_csv(cfg, &tables, report.as_ref())?;
    emit(cfg.out.as_deref(), "compare.csv", &body)
}

pub fn weingarten_csv(n: usize, k: usize) -> CliResult<String> {
    if k == 0 {
        return Err(usage("k must be at least 1"));
    }
    if k > 3 {
        return Err(CliError::Runtime(Error::Unsupported(format!(
            "Weingarten values are tabulated only for k <= 3, got {k}"
        ))));
    }
    let mut w = csv_writer();
    for m in 1..=k {
        for lambda in CycleType::all_of(m) {
            let exact = if m <= 2 {
                weingarten::weingarten_exact_k2(n, &lambda)?.to_string()
            } else {
                String::new()
            };
            let series = weingarten::weingarten_series(n, &lambda, 5)?;
            w.write_record([m.to_string(), lambda.to_string(), n.to_string(), exact, series.to_string()])
                .map_err(Error::from)?;
        }
    }
    finish(w, WEINGARTEN_HEADER)
}

pub fn cmd_weingarten(n: usize, k: usize, out: Option<&Path>) -> CliResult<()> {
    emit(out, "weingarten.csv", &weingarten_csv(n, k)?)
}

/// Sampled `E[Π W_{r_a c_a}]` with its standard error.
pub fn moment_mc(n: usize, c_w: f64, rows: &[usize], cols: &[usize], samples: usize, seed: u64) -> Result<(f64, f64)> {
    use rayon::prelude::*;
    let chunk = 4096;
    let nchunks = samples.div_ceil(chunk);
    let parts: Vec<(f64, f64)> = montecarlo::with_thread_cap(|| {
        (0..nchunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = RngStream::new(seed, c as u64).rng();
                let count = chunk.min(samples - c * chunk);
                let (mut s, mut s2) = (0.0, 0.0);
                for _ in 0..count {
                    let m = montecarlo::sample_orthogonal(n, c_w, &mut rng);
                    let v: f64 = rows.iter().zip(cols).map(|(&r, &c)| m[(r - 1, c - 1)]).product();
                    s += v;
                    s2 += v * v;
                }
                (s, s2)
            })
            .collect()
    });
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = samples as f64;
    let mean = s / nf;
    let var = (s2 / nf - mean * mean) * nf / (nf - 1.0);
    Ok((mean, (var.max(0.0) / nf).sqrt()))
}

pub fn moments_csv(n: usize, c_w: f64, rows: &[usize], cols: &[usize], samples: usize, seed: u64) -> CliResult<String> {
    if rows.len() > 6 {
        return Err(CliError::Runtime(Error::Unsupported(format!(
            "moments of order {} not supported",
            rows.len()
        ))));
    }
    let exact = weingarten::orthogonal_moment(n, c_w, rows, cols)?;
    let (mc_mean, mc_se, z) = if samples >= 2 {
        let (m, se) = moment_mc(n, c_w, rows, cols, samples, seed)?;
        (Some(m), Some(se), (se > 0.0).then(|| (m - exact) / se))
    } else {
        (None, None, None)
    };
    let join = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
    let mut w = csv_writer();
    w.write_record([
        n.to_string(),
        c_w.to_string(),
        join(rows),
        join(cols),
        exact.to_string(),
        fmt_opt(mc_mean),
        fmt_opt(mc_se),
        fmt_opt(z),
    ])
    .map_err(Error::from)?;
    finish(w, MOMENTS_HEADER)
}

pub fn cmd_moments(
    n: usize,
    c_w: f64,
    rows: &[usize],
    cols: &[usize],
    samples: usize,
    seed: u64,
    out: Option<&Path>,
) -> CliResult<()> {
    emit(out, "moments.csv", &moments_csv(n, c_w, rows, cols, samples, seed)?)
}
