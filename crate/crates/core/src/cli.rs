//! Command-line front end: one subcommand per experiment, each a pure
//! function of its config and seed.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{self, BoundPoint};
use crate::channels::{self, SystemDims};
use crate::config::{self, BoundsConfig, DecoderSpec, Experiment, Fig2Config, Loaded, RateConfig, SimulateConfig};
use crate::covertness::{self, CovertParams};
use crate::error::{Error, Result};
use crate::linksim::{self, Decoder, LinkOptions};
use crate::montecarlo::{self, BoundEstimate, Engine};

pub const TOOL: &str = "covert-bench";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn build_id() -> &'static str {
    option_env!("COVERT_BUILD_ID").unwrap_or(concat!("v", env!("CARGO_PKG_VERSION")))
}

#[derive(Debug, Parser)]
#[command(name = "covert-bench", version, about = "Covert finite-blocklength benchmarks for quasi-static MIMO fading")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral-norm ECDFs and tail thresholds.
    Fig2(CommonArgs),
    /// First-order covert rate over n, antenna and lambda0 grids.
    RateFirstOrder(CommonArgs),
    /// Achievability and converse bounds over an n grid.
    Bounds(CommonArgs),
    /// End-to-end link and warden simulation.
    Simulate(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config; defaults to the matching file under ./configs.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Overrides the config's trial count.
    #[arg(long)]
    pub trials: Option<usize>,
}

impl Command {
    fn parts(&self) -> (&'static str, &'static str, &CommonArgs) {
        match self {
            Command::Fig2(a) => ("fig2", "configs/fig2.json", a),
            Command::RateFirstOrder(a) => ("rate-first-order", "configs/fig4.json", a),
            Command::Bounds(a) => ("bounds", "configs/fig5.json", a),
            Command::Simulate(a) => ("simulate", "configs/simulate.json", a),
        }
    }
}

/// Seed, trial count and config digest recorded in every output header.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub build_id: &'static str,
    pub command: String,
    pub seed: u64,
    pub trials: usize,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, trials: usize, config_sha256: &str) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            build_id: build_id(),
            command: command.to_string(),
            seed,
            trials,
            config_sha256: config_sha256.to_string(),
        }
    }

    fn header_lines(&self) -> String {
        format!(
            "# tool: {} {}\n# build: {}\n# command: {}\n# seed: {}\n# trials: {}\n# config_sha256: {}\n",
            self.tool, self.version, self.build_id, self.command, self.seed, self.trials, self.config_sha256
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Text(String),
    Int(u64),
    Real(f64),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Text(s) => f.write_str(s),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Real(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn to_csv(&self, prov: &Provenance) -> String {
        let mut out = prov.header_lines();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self, prov: &Provenance) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            provenance: &'a Provenance,
            #[serde(flatten)]
            table: &'a Table,
        }
        pretty(&Doc { provenance: prov, table: self })
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn real(v: f64) -> Cell {
    Cell::Real(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Curve {
    pub name: String,
    pub threshold: f64,
    /// `(spectral_norm, ecdf)` at evenly spaced order statistics.
    pub ecdf: Vec<(f64, f64)>,
}

/// Stream used for the `index`-th model of a fig2 config.
pub fn fig2_stream(index: usize) -> u64 {
    0x30 + index as u64
}

pub fn fig2(cfg: &Fig2Config) -> Result<Vec<Fig2Curve>> {
    cfg.validate()?;
    let engine = Engine::new(cfg.seed, cfg.workers);
    cfg.models
        .iter()
        .enumerate()
        .map(|(i, named)| {
            let model = named.model.build(cfg.rows, cfg.cols)?;
            let mut norms = channels::spectral_norm_samples(&model, cfg.trials, &engine, fig2_stream(i))?;
            norms.sort_by(|a, b| a.total_cmp(b));
            let threshold = montecarlo::quantile_sorted(&norms, 1.0 - cfg.tail)?;
            let last = norms.len() - 1;
            let ecdf = (0..cfg.ecdf_points)
                .map(|k| {
                    let idx = (k * last + (cfg.ecdf_points - 1) / 2) / (cfg.ecdf_points - 1);
                    (norms[idx], (idx + 1) as f64 / norms.len() as f64)
                })
                .collect();
            Ok(Fig2Curve { name: named.name.clone(), threshold, ecdf })
        })
        .collect()
}

pub fn fig2_table(cfg: &Fig2Config, curves: &[Fig2Curve]) -> Table {
    let mut rows = Vec::new();
    for c in curves {
        for &(x, f) in &c.ecdf {
            rows.push(vec![Cell::Text("ecdf".into()), Cell::Text(c.name.clone()), real(x), real(f)]);
        }
        rows.push(vec![
            Cell::Text("tail_threshold".into()),
            Cell::Text(c.name.clone()),
            real(c.threshold),
            real(1.0 - cfg.tail),
        ]);
    }
    Table { columns: vec!["row", "model", "spectral_norm", "ecdf"], rows }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub antennas: usize,
    pub lambda0: f64,
    pub kappa: BoundEstimate,
    pub r1: BoundPoint,
}

pub fn rate_first_order(cfg: &RateConfig) -> Result<Vec<RateRow>> {
    cfg.validate()?;
    let engine = Engine::new(cfg.seed, cfg.workers);
    let mut rows = Vec::new();
    for &na in &cfg.antennas {
        let model = cfg.model.build(na, na)?;
        for &lambda0 in &cfg.lambda0 {
            let kappa = bounds::kappa_epsilon(&model, lambda0, cfg.epsilon, cfg.trials, &engine, cfg.convention)?;
            for &n in &cfg.n {
                let r1 = bounds::first_order_rate(n, cfg.epsilon, cfg.delta, &kappa)?;
                rows.push(RateRow { n, antennas: na, lambda0, kappa, r1 });
            }
        }
    }
    Ok(rows)
}

pub fn rate_table(rows: &[RateRow]) -> Table {
    Table {
        columns: vec!["n", "N_a", "lambda0", "kappa_eps", "R1", "sqrt_n_R1", "ci"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Int(r.n as u64),
                    Cell::Int(r.antennas as u64),
                    real(r.lambda0),
                    real(r.kappa.value),
                    real(r.r1.rate),
                    real(r.r1.sqrt_n_rate),
                    real(r.r1.estimate.ci_half_width),
                ]
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsRow {
    pub n: usize,
    pub ach: BoundPoint,
    pub con: BoundPoint,
    pub r1: BoundPoint,
}

pub fn bounds_params(cfg: &BoundsConfig, n: usize) -> Result<CovertParams> {
    CovertParams::new(n, cfg.epsilon, cfg.delta, cfg.lambda0, SystemDims::square(cfg.antennas)?)
}

pub fn bounds(cfg: &BoundsConfig) -> Result<Vec<BoundsRow>> {
    cfg.validate()?;
    let engine = Engine::new(cfg.seed, cfg.workers);
    let model = cfg.model.build(cfg.antennas, cfg.antennas)?;
    let kappa = bounds::kappa_epsilon(&model, cfg.lambda0, cfg.epsilon, cfg.trials, &engine, cfg.convention)?;
    cfg.n
        .iter()
        .map(|&n| {
            let p = bounds_params(cfg, n)?;
            Ok(BoundsRow {
                n,
                ach: bounds::ach_rate_bound(&p, &model, cfg.trials, &engine, cfg.ach_tail)?,
                con: bounds::con_rate_bound(&p, &model, cfg.trials, &engine)?,
                r1: bounds::first_order_rate(n, cfg.epsilon, cfg.delta, &kappa)?,
            })
        })
        .collect()
}

pub fn bounds_table(rows: &[BoundsRow]) -> Table {
    Table {
        columns: vec!["n", "ach_rate", "con_rate", "R1", "sqrt_n_ach", "sqrt_n_con", "sqrt_n_R1", "ci_ach", "ci_con"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Int(r.n as u64),
                    real(r.ach.rate),
                    real(r.con.rate),
                    real(r.r1.rate),
                    real(r.ach.sqrt_n_rate),
                    real(r.con.sqrt_n_rate),
                    real(r.r1.sqrt_n_rate),
                    real(r.ach.estimate.ci_half_width),
                    real(r.con.estimate.ci_half_width),
                ]
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WardenSummary {
    pub error_sum: BoundEstimate,
    pub alpha: f64,
    pub beta: f64,
    pub mean_kl: f64,
    /// `1 - sqrt(delta/2)`.
    pub pinsker_floor: f64,
    /// `1 - sqrt(mean_kl/2)` at the realized warden channels.
    pub pinsker_floor_realized: f64,
    pub resamples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub provenance: Provenance,
    pub n: usize,
    pub messages: usize,
    /// `ln(M)/n` in nats per channel use.
    pub rate: f64,
    pub psi: f64,
    pub decoder: String,
    pub gamma: Option<BoundEstimate>,
    pub ach_rate_bound: Option<f64>,
    pub error_rate: BoundEstimate,
    pub errors: usize,
    pub erasures: usize,
    pub link_warden_resamples: u64,
    pub mean_warden_llr: f64,
    pub median_sin_sq_true: f64,
    pub warden: WardenSummary,
}

pub fn simulate(cfg: &SimulateConfig, config_sha256: &str) -> Result<SimulateReport> {
    cfg.validate()?;
    let engine = Engine::new(cfg.seed, cfg.workers);
    let p = CovertParams::new(cfg.n, cfg.epsilon, cfg.delta, cfg.lambda0, cfg.dims)?;
    let model_b = cfg.model_b.build(cfg.dims.na, cfg.dims.nb)?;
    let model_w = cfg.model_w.build(cfg.dims.na, cfg.dims.nw)?;
    let psi = cfg.power_scale * covertness::power_ach(&p);
    let (decoder, gamma, ach_bound) = match cfg.decoder {
        DecoderSpec::Ml => (Decoder::Ml, None, None),
        DecoderSpec::Angle { gamma } => {
            let est = match gamma {
                Some(g) => BoundEstimate::exact(g, cfg.seed),
                None => bounds::ach_gamma(&p, &model_b, cfg.gamma_trials, &engine)?,
            };
            let ach = bounds::ach_rate_bound(&p, &model_b, cfg.gamma_trials, &engine, Default::default())?;
            (Decoder::Angle { gamma: est.value }, Some(est), Some(ach.rate))
        }
    };
    let opts = LinkOptions { reuse_codebook: cfg.reuse_codebook, power_scale: cfg.power_scale };
    let link = linksim::run_link_trials(&p, &model_b, &model_w, cfg.messages, decoder, cfg.trials, opts, &engine)?;
    let det = linksim::detection_error_sum_at(&p, psi, &model_w, cfg.detection_trials, &engine)?;
    let llrs = link.warden_llrs();
    let mut sin_sq = link.sin_sq_true();
    sin_sq.sort_by(|a, b| a.total_cmp(b));
    Ok(SimulateReport {
        provenance: Provenance::new("simulate", cfg.seed, cfg.trials, config_sha256),
        n: cfg.n,
        messages: cfg.messages,
        rate: (cfg.messages as f64).ln() / cfg.n as f64,
        psi,
        decoder: match decoder {
            Decoder::Ml => "ml".into(),
            Decoder::Angle { .. } => "angle".into(),
        },
        gamma,
        ach_rate_bound: ach_bound,
        error_rate: link.error_rate,
        errors: link.errors,
        erasures: link.erasures,
        link_warden_resamples: link.warden_resamples,
        mean_warden_llr: llrs.iter().sum::<f64>() / llrs.len() as f64,
        median_sin_sq_true: montecarlo::quantile_sorted(&sin_sq, 0.5)?,
        warden: WardenSummary {
            error_sum: det.error_sum,
            alpha: det.alpha,
            beta: det.beta,
            mean_kl: det.mean_kl,
            pinsker_floor: covertness::pinsker_floor(cfg.delta),
            pinsker_floor_realized: covertness::pinsker_floor(det.mean_kl),
            resamples: det.resamples,
        },
    })
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        serde_json::Value::Null => out.push((prefix.to_string(), String::new())),
        serde_json::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

pub fn simulate_render(report: &SimulateReport, format: Format) -> Result<String> {
    match format {
        Format::Json => pretty(report),
        Format::Csv => {
            let value = serde_json::to_value(report).map_err(|e| Error::Io(e.to_string()))?;
            let mut pairs = Vec::new();
            flatten("", &value, &mut pairs);
            let mut out = report.provenance.header_lines();
            out.push_str("key,value\n");
            for (k, v) in pairs.into_iter().filter(|(k, _)| !k.starts_with("provenance.")) {
                let _ = writeln!(out, "{k},{v}");
            }
            Ok(out)
        }
    }
}

fn load_with_overrides<T: Experiment>(path: &Path, args: &CommonArgs) -> Result<Loaded<T>> {
    let mut loaded = config::load::<T>(path)?;
    if let Some(s) = args.seed {
        *loaded.config.seed_mut() = s;
    }
    if let Some(w) = args.workers {
        *loaded.config.workers_mut() = w;
    }
    if let Some(t) = args.trials {
        *loaded.config.trials_mut() = t;
    }
    loaded.config.validate()?;
    Ok(loaded)
}

fn render_table(table: &Table, prov: &Provenance, format: Format) -> Result<String> {
    match format {
        Format::Csv => Ok(table.to_csv(prov)),
        Format::Json => table.to_json(prov),
    }
}

/// Runs one parsed command and returns the rendered output.
pub fn execute(command: &Command) -> Result<String> {
    let (name, default_path, args) = command.parts();
    let path = args.config.clone().unwrap_or_else(|| PathBuf::from(default_path));
    match command {
        Command::Fig2(_) => {
            let l = load_with_overrides::<Fig2Config>(&path, args)?;
            let curves = fig2(&l.config)?;
            let prov = Provenance::new(name, l.config.seed, l.config.trials, &l.sha256);
            render_table(&fig2_table(&l.config, &curves), &prov, args.format.unwrap_or(Format::Csv))
        }
        Command::RateFirstOrder(_) => {
            let l = load_with_overrides::<RateConfig>(&path, args)?;
            let rows = rate_first_order(&l.config)?;
            let prov = Provenance::new(name, l.config.seed, l.config.trials, &l.sha256);
            render_table(&rate_table(&rows), &prov, args.format.unwrap_or(Format::Csv))
        }
        Command::Bounds(_) => {
            let l = load_with_overrides::<BoundsConfig>(&path, args)?;
            let rows = bounds(&l.config)?;
            let prov = Provenance::new(name, l.config.seed, l.config.trials, &l.sha256);
            render_table(&bounds_table(&rows), &prov, args.format.unwrap_or(Format::Csv))
        }
        Command::Simulate(_) => {
            let l = load_with_overrides::<SimulateConfig>(&path, args)?;
            let report = simulate(&l.config, &l.sha256)?;
            simulate_render(&report, args.format.unwrap_or(Format::Json))
        }
    }
}

/// Parses `args`, runs the command, writes the output and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = execute(&cli.command).and_then(|text| {
        let (_, _, args) = cli.command.parts();
        match &args.out {
            Some(p) => std::fs::write(p, text).map_err(Error::from),
            None => {
                use std::io::Write;
                std::io::stdout().write_all(text.as_bytes()).map_err(Error::from)
            }
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
