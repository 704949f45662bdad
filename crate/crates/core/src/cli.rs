//! Command-line front end.
//!
//! Every invocation is first turned into a [`RunConfig`], either from flags
//! or from a JSON file passed with `--config`, and then executed by [`run`].

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{
    capacity_curve, capacity_estimate_with, channel_check, closed_form_capacity, write_capacity_csv, CapacityEntry,
    Estimator,
};
use crate::channel::{apply_channel, complementary_output, dephasing_channel, DensityMatrix};
use crate::closed_form::{aklt_spectrum, compare_multisets, mg_spectrum, FamilySpectrum, ZERO_FLOOR};
use crate::diag::{enumerate_distribution, shannon_entropy, spectrum_of, Spectrum, DEFAULT_GROUP_TOL, DEFAULT_PRUNE_TOL};
use crate::error::Error;
use crate::mps::{aklt_ground_theta, aklt_model, load_model, mg_model, MpsModel, MG_GROUND_G};
use crate::plot::{render_svg, PlotLabels, Series};
use crate::verify::run_verification;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MPSCAP_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const DEFAULT_N_AKLT: usize = 14;
pub const DEFAULT_N_MG: usize = 20;
pub const DEFAULT_N_CUSTOM: usize = 10;
pub const DEFAULT_VERIFY_N_MAX: usize = 8;
pub const DEFAULT_CHANNEL_N: usize = 2;
/// Tolerance for pruned-vs-full agreement in `oracle`.
pub const ORACLE_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Verification(_) => EXIT_VERIFY_FAILED,
            CliError::Lib(e) => match e {
                Error::Domain(_)
                | Error::Dimension(_)
                | Error::InvalidModel(_)
                | Error::Resource(_)
                | Error::Io { .. }
                | Error::Json(_) => EXIT_CONFIG,
                Error::Convergence { .. } | Error::Csv(_) => EXIT_VERIFY_FAILED,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Capacity,
    Sweep,
    Spectrum,
    Verify,
    Oracle,
    Channel,
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.to_possible_value().expect("no skipped variants");
        f.write_str(s.get_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Aklt,
    Mg,
    Custom,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
    Svg,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

/// A parameter value, an explicit list, or a `start:stop:step` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSpec {
    Value(f64),
    List(Vec<f64>),
    Text(String),
}

impl ParamSpec {
    pub fn values(&self) -> CliResult<Vec<f64>> {
        match self {
            ParamSpec::Value(v) => Ok(vec![*v]),
            ParamSpec::List(v) if v.is_empty() => Err(config_err("empty parameter list")),
            ParamSpec::List(v) => Ok(v.clone()),
            ParamSpec::Text(s) => parse_param_text(s),
        }
    }
}

fn parse_f64(s: &str) -> CliResult<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| config_err(format!("'{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(config_err(format!("'{s}' is not finite")));
    }
    Ok(v)
}

/// Parses `x`, `a,b,c`, or an inclusive `start:stop:step` grid.
pub fn parse_param_text(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [one] => one.split(',').map(parse_f64).collect(),
        [start, stop, step] => grid(parse_f64(start)?, parse_f64(stop)?, parse_f64(step)?),
        _ => Err(config_err(format!("cannot parse parameter '{s}'; use x, a,b,c or start:stop:step"))),
    }
}

/// Inclusive grid; values are rounded to 12 decimals so that `0:0.9:0.1`
/// prints as `0.3` rather than `0.30000000000000004`.
pub fn grid(start: f64, stop: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0) {
        return Err(config_err(format!("grid step must be > 0, got {step}")));
    }
    if stop < start {
        return Err(config_err(format!("grid stop {stop} is below start {start}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// The default sweep grid for a model family.
pub fn default_grid(model: ModelChoice) -> Vec<f64> {
    match model {
        ModelChoice::Aklt => {
            let mut v: Vec<f64> = (0..=15).map(|i| i as f64 / 10.0).collect();
            v.push(aklt_ground_theta());
            v.sort_by(f64::total_cmp);
            v
        }
        ModelChoice::Mg => (0..20).map(|i| i as f64 * 0.05).map(|g| (g * 1e12).round() / 1e12).collect(),
        ModelChoice::Custom => Vec::new(),
    }
}

pub fn default_n(model: ModelChoice) -> usize {
    match model {
        ModelChoice::Aklt => DEFAULT_N_AKLT,
        ModelChoice::Mg => DEFAULT_N_MG,
        ModelChoice::Custom => DEFAULT_N_CUSTOM,
    }
}

fn default_prune_tol() -> f64 {
    DEFAULT_PRUNE_TOL
}

fn default_estimator() -> Estimator {
    Estimator::Cond
}

/// A fully specified run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    /// `None` lets `verify` cover both built-in families; other commands
    /// default to AKLT.
    #[serde(default)]
    pub model: Option<ModelChoice>,
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub params: Option<ParamSpec>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    #[serde(default = "default_prune_tol")]
    pub prune_tol: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    /// `channel` only: evaluate at this density matrix (JSON) as well.
    #[serde(default)]
    pub input_state: Option<PathBuf>,
    /// `channel` only: write the channel output state here (JSON).
    #[serde(default)]
    pub state_out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: CommandKind) -> Self {
        RunConfig {
            command,
            model: None,
            model_file: None,
            params: None,
            n: None,
            n_max: None,
            estimator: Estimator::Cond,
            prune_tol: DEFAULT_PRUNE_TOL,
            output: None,
            out_dir: None,
            format: Format::Csv,
            input_state: None,
            state_out: None,
        }
    }

    pub fn from_json_str(s: &str) -> CliResult<Self> {
        serde_json::from_str(s).map_err(|e| config_err(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    fn model_choice(&self) -> ModelChoice {
        self.model.unwrap_or(ModelChoice::Aklt)
    }

    /// Structural checks that need no model construction.
    pub fn validate(&self) -> CliResult<()> {
        if self.n == Some(0) {
            return Err(config_err("--n must be at least 1"));
        }
        if self.n_max == Some(0) {
            return Err(config_err("--n-max must be at least 1"));
        }
        if !(self.prune_tol >= 0.0) || !self.prune_tol.is_finite() {
            return Err(config_err(format!("prune tolerance must be finite and >= 0, got {}", self.prune_tol)));
        }
        match (self.model, &self.model_file) {
            (Some(ModelChoice::Custom), None) => return Err(config_err("--model custom needs --model-file")),
            (Some(ModelChoice::Aklt | ModelChoice::Mg), Some(_)) => {
                return Err(config_err("--model-file is only valid with --model custom"))
            }
            (None, Some(_)) if self.command != CommandKind::Verify => {
                return Err(config_err("--model-file needs --model custom"))
            }
            _ => {}
        }
        if self.model == Some(ModelChoice::Custom) && self.params.is_some() {
            return Err(config_err("custom models take no --theta/--g parameter"));
        }
        if let Some(p) = &self.params {
            p.values()?;
        }
        if self.format == Format::Svg && !matches!(self.command, CommandKind::Capacity | CommandKind::Sweep) {
            return Err(config_err(format!("--format svg is not available for {}", self.command)));
        }
        if (self.input_state.is_some() || self.state_out.is_some()) && self.command != CommandKind::Channel {
            return Err(config_err("--input-state/--state-out only apply to the channel command"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// clap surface

#[derive(Debug, Parser)]
#[command(name = "mps-capacity", version, about = "Quantum capacities of MPS-correlated dephasing channels")]
pub struct Cli {
    /// Run from a JSON RunConfig instead of a subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form and numeric capacity estimates.
    Capacity(CommonArgs),
    /// Capacity over a parameter grid.
    Sweep(CommonArgs),
    /// Closed-form spectra next to the enumerated spectrum.
    Spectrum(CommonArgs),
    /// Run every invariant suite; exits 1 naming the first failure.
    Verify(CommonArgs),
    /// Compare pruned and full enumeration.
    Oracle(CommonArgs),
    /// Build the finite-n channel and compare the two entropy paths.
    Channel(ChannelArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// JSON model description for `--model custom`.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// AKLT angle in radians: a value, a list a,b,c, or start:stop:step.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["g", "g_ground", "theta_ground"])]
    pub theta: Option<String>,
    /// MG parameter: a value, a list a,b,c, or start:stop:step.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["theta", "theta_ground", "g_ground"])]
    pub g: Option<String>,
    /// Use the AKLT ground-state angle arccos(sqrt(2/3)).
    #[arg(long)]
    pub theta_ground: bool,
    /// Use the MG ground point g = 1/2.
    #[arg(long)]
    pub g_ground: bool,
    /// Block length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Largest block length (capacity: emit every n up to this).
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long, value_enum, default_value_t = Estimator::Cond)]
    pub estimator: Estimator,
    #[arg(long, default_value_t = DEFAULT_PRUNE_TOL)]
    pub prune_tol: f64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Directory for outputs without an explicit absolute path.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct ChannelArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Density matrix (JSON) at which to evaluate the channel as well.
    #[arg(long)]
    pub input_state: Option<PathBuf>,
    /// Write the channel output state at the given input as JSON.
    #[arg(long, requires = "input_state")]
    pub state_out: Option<PathBuf>,
}

impl CommonArgs {
    fn into_config(self, command: CommandKind) -> CliResult<RunConfig> {
        let model = self.model.or(if self.theta.is_some() || self.theta_ground {
            Some(ModelChoice::Aklt)
        } else if self.g.is_some() || self.g_ground {
            Some(ModelChoice::Mg)
        } else if self.model_file.is_some() {
            Some(ModelChoice::Custom)
        } else {
            None
        });
        let wrong = |flag: &str| config_err(format!("{flag} does not apply to --model {:?}", model.unwrap()).to_lowercase());
        let params = match (&self.theta, &self.g, self.theta_ground, self.g_ground) {
            (Some(t), ..) => {
                if model != Some(ModelChoice::Aklt) {
                    return Err(wrong("--theta"));
                }
                Some(ParamSpec::Text(t.clone()))
            }
            (_, Some(g), ..) => {
                if model != Some(ModelChoice::Mg) {
                    return Err(wrong("--g"));
                }
                Some(ParamSpec::Text(g.clone()))
            }
            (_, _, true, _) => {
                if model != Some(ModelChoice::Aklt) {
                    return Err(wrong("--theta-ground"));
                }
                Some(ParamSpec::Value(aklt_ground_theta()))
            }
            (_, _, _, true) => {
                if model != Some(ModelChoice::Mg) {
                    return Err(wrong("--g-ground"));
                }
                Some(ParamSpec::Value(MG_GROUND_G))
            }
            _ => None,
        };
        Ok(RunConfig {
            command,
            model,
            model_file: self.model_file,
            params,
            n: self.n,
            n_max: self.n_max,
            estimator: self.estimator,
            prune_tol: self.prune_tol,
            output: self.output,
            out_dir: self.out_dir,
            format: self.format,
            input_state: None,
            state_out: None,
        })
    }
}

impl Cli {
    /// Resolves flags or `--config` into a run configuration.
    pub fn into_config(self) -> CliResult<RunConfig> {
        match (self.config, self.command) {
            (Some(_), Some(_)) => Err(config_err("--config cannot be combined with a subcommand")),
            (None, None) => Err(config_err("a subcommand or --config is required")),
            (Some(path), None) => {
                let mut cfg = RunConfig::load(&path)?;
                if cfg.out_dir.is_none() {
                    cfg.out_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
                }
                Ok(cfg)
            }
            (None, Some(cmd)) => match cmd {
                Command::Capacity(a) => a.into_config(CommandKind::Capacity),
                Command::Sweep(a) => a.into_config(CommandKind::Sweep),
                Command::Spectrum(a) => a.into_config(CommandKind::Spectrum),
                Command::Verify(a) => a.into_config(CommandKind::Verify),
                Command::Oracle(a) => a.into_config(CommandKind::Oracle),
                Command::Channel(a) => {
                    let mut cfg = a.common.into_config(CommandKind::Channel)?;
                    cfg.input_state = a.input_state;
                    cfg.state_out = a.state_out;
                    Ok(cfg)
                }
            },
        }
    }
}

// ---------------------------------------------------------------------------
// execution

/// What a run produced.
#[derive(Debug)]
pub struct Outcome {
    /// Where the artifact went; `None` means standard output.
    pub path: Option<PathBuf>,
    /// Human-readable lines for standard error.
    pub notes: Vec<String>,
}

fn build_model(choice: ModelChoice, param: Option<f64>, file: Option<&Path>) -> CliResult<MpsModel> {
    let m = match choice {
        ModelChoice::Aklt => aklt_model(param.unwrap_or_else(aklt_ground_theta))?,
        ModelChoice::Mg => mg_model(param.unwrap_or(MG_GROUND_G))?,
        ModelChoice::Custom => load_model(file.ok_or_else(|| config_err("--model custom needs --model-file"))?)?,
    };
    Ok(m)
}

/// Models for every requested parameter value, in grid order.
fn models(cfg: &RunConfig, default_to_grid: bool) -> CliResult<Vec<MpsModel>> {
    let choice = cfg.model_choice();
    if choice == ModelChoice::Custom {
        return Ok(vec![build_model(choice, None, cfg.model_file.as_deref())?]);
    }
    let values = match &cfg.params {
        Some(p) => p.values()?,
        None if default_to_grid => default_grid(choice),
        None => vec![match choice {
            ModelChoice::Aklt => aklt_ground_theta(),
            _ => MG_GROUND_G,
        }],
    };
    values.into_iter().map(|v| build_model(choice, Some(v), None)).collect()
}

fn single_model(cfg: &RunConfig) -> CliResult<MpsModel> {
    let mut ms = models(cfg, false)?;
    if ms.len() != 1 {
        return Err(config_err(format!("{} takes a single parameter value, got {}", cfg.command, ms.len())));
    }
    Ok(ms.remove(0))
}

fn output_path(cfg: &RunConfig) -> Option<PathBuf> {
    match (&cfg.output, &cfg.out_dir) {
        (Some(p), Some(dir)) if p.is_relative() => Some(dir.join(p)),
        (Some(p), _) => Some(p.clone()),
        (None, Some(dir)) => Some(dir.join(format!("{}.{}", cfg.command, cfg.format.extension()))),
        (None, None) if cfg.format == Format::Svg => Some(PathBuf::from(format!("{}.svg", cfg.command))),
        (None, None) => None,
    }
}

fn write_artifact(cfg: &RunConfig, bytes: &[u8]) -> CliResult<Option<PathBuf>> {
    match output_path(cfg) {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            Ok(Some(path))
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes).map_err(|e| Error::io("<stdout>", e))?;
            out.flush().map_err(|e| Error::io("<stdout>", e))?;
            Ok(None)
        }
    }
}

fn json_bytes<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn capacity_bytes(cfg: &RunConfig, entries: &[CapacityEntry], x_label: &str, by_param: bool) -> CliResult<Vec<u8>> {
    match cfg.format {
        Format::Csv => {
            let rows: Vec<_> = entries.iter().flat_map(|e| e.rows(cfg.estimator)).collect();
            let mut buf = Vec::new();
            write_capacity_csv(&rows, &mut buf)?;
            Ok(buf)
        }
        Format::Json => json_bytes(&entries),
        Format::Svg => {
            let x = |e: &CapacityEntry| if by_param { e.param.unwrap_or(0.0) } else { e.n as f64 };
            let mut series = Vec::new();
            let estimators: &[Estimator] = match cfg.estimator {
                Estimator::Both => &[Estimator::Avg, Estimator::Cond],
                Estimator::Avg => &[Estimator::Avg],
                Estimator::Cond => &[Estimator::Cond],
            };
            for &est in estimators {
                series.push(Series::new(
                    format!("numeric ({est})"),
                    entries.iter().map(|e| (x(e), e.estimate(est))).collect(),
                ));
            }
            if entries.iter().all(|e| e.closed_form.is_some()) {
                series.push(Series::new(
                    "closed form",
                    entries.iter().map(|e| (x(e), e.closed_form.unwrap_or(0.0))).collect(),
                ));
            }
            let model = entries.first().map(|e| e.model.as_str()).unwrap_or("");
            let labels = PlotLabels {
                title: format!("{model} capacity"),
                x: x_label.to_string(),
                y: "capacity (bits per use)".to_string(),
            };
            Ok(render_svg(&series, &labels)?.into_bytes())
        }
    }
}

fn run_capacity(cfg: &RunConfig) -> CliResult<Outcome> {
    let ms = models(cfg, false)?;
    let choice = cfg.model_choice();
    let mut entries = Vec::new();
    let curve = cfg.n_max.is_some() && cfg.n.is_none();
    for m in &ms {
        if curve {
            entries.extend(capacity_curve(m, cfg.n_max.unwrap_or(1), cfg.prune_tol)?);
        } else {
            let n = cfg.n.or(cfg.n_max).unwrap_or_else(|| default_n(choice));
            entries.push(capacity_estimate_with(m, n, cfg.prune_tol)?);
        }
    }
    let bytes = capacity_bytes(cfg, &entries, "n", false)?;
    let notes = entries
        .iter()
        .filter_map(|e| e.channel.as_ref())
        .filter(|c| !c.paths_agree())
        .map(|c| format!("warning: channel path differs by {:.3e} at n={}", c.path_difference(), c.n))
        .collect();
    Ok(Outcome {
        path: write_artifact(cfg, &bytes)?,
        notes,
    })
}

fn run_sweep(cfg: &RunConfig) -> CliResult<Outcome> {
    if cfg.model_choice() == ModelChoice::Custom {
        return Err(config_err("sweep needs a parametrized model (aklt or mg)"));
    }
    let ms = models(cfg, true)?;
    let n = cfg.n.or(cfg.n_max).unwrap_or_else(|| default_n(cfg.model_choice()));
    // points are independent; collect keeps grid order
    let entries: Vec<CapacityEntry> = ms
        .par_iter()
        .map(|m| capacity_curve(m, n, cfg.prune_tol).map(|mut c| c.pop().expect("n >= 1")))
        .collect::<Result<_, Error>>()?;
    let x_label = match cfg.model_choice() {
        ModelChoice::Aklt => "theta (rad)",
        _ => "g",
    };
    let bytes = capacity_bytes(cfg, &entries, x_label, true)?;
    Ok(Outcome {
        path: write_artifact(cfg, &bytes)?,
        notes: Vec::new(),
    })
}

#[derive(Debug, Serialize)]
struct SpectrumReport {
    model: String,
    param: Option<f64>,
    n: usize,
    closed_form: Option<FamilySpectrum>,
    enumerated: Spectrum,
    max_abs_diff: Option<f64>,
}

fn run_spectrum(cfg: &RunConfig) -> CliResult<Outcome> {
    let m = single_model(cfg)?;
    let n = cfg.n.or(cfg.n_max).unwrap_or(6);
    let dist = enumerate_distribution(&m, n, cfg.prune_tol)?;
    let closed = match (cfg.model_choice(), m.primary_param()) {
        (ModelChoice::Aklt, Some(t)) => Some(aklt_spectrum(n as u32, t)?),
        (ModelChoice::Mg, Some(g)) if n >= 2 => Some(mg_spectrum(n as u32, g)?),
        _ => None,
    };
    let enumerated = spectrum_of(&dist, DEFAULT_GROUP_TOL);
    let max_abs_diff = closed
        .as_ref()
        .map(|fs| compare_multisets(&fs.expanded(), &dist.probabilities(), ZERO_FLOOR).max_abs_diff);
    let bytes = match cfg.format {
        Format::Json => json_bytes(&SpectrumReport {
            model: m.kind().to_string(),
            param: m.primary_param(),
            n,
            closed_form: closed,
            enumerated,
            max_abs_diff,
        })?,
        _ => {
            let mut wtr = csv::Writer::from_writer(Vec::new());
            wtr.write_record(["family", "value", "multiplicity", "source"]).map_err(Error::from)?;
            if let Some(fs) = &closed {
                fs.write_csv_rows(&mut wtr, "closed_form")?;
            }
            for e in &enumerated.entries {
                wtr.write_record(["enumerated".to_string(), e.value.to_string(), e.multiplicity.to_string(), "enumeration".to_string()])
                    .map_err(Error::from)?;
            }
            wtr.into_inner().map_err(|e| config_err(format!("csv buffer: {e}")))?
        }
    };
    let mut notes = Vec::new();
    if let Some(d) = max_abs_diff {
        notes.push(format!("closed form vs enumeration: max abs diff {d:.3e}"));
    }
    Ok(Outcome {
        path: write_artifact(cfg, &bytes)?,
        notes,
    })
}

fn run_verify(cfg: &RunConfig) -> CliResult<Outcome> {
    let ms = match (cfg.model, &cfg.model_file) {
        (None, None) => {
            let mut a = RunConfig::new(CommandKind::Verify);
            a.model = Some(ModelChoice::Aklt);
            let mut all = models(&a, true)?;
            a.model = Some(ModelChoice::Mg);
            all.extend(models(&a, true)?);
            all
        }
        (None, Some(f)) => vec![build_model(ModelChoice::Custom, None, Some(f))?],
        _ => models(cfg, true)?,
    };
    let n_max = cfg.n_max.or(cfg.n).unwrap_or(DEFAULT_VERIFY_N_MAX);
    let report = run_verification(&ms, n_max)?;
    let bytes = match cfg.format {
        Format::Json => json_bytes(&report)?,
        _ => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            buf
        }
    };
    let path = write_artifact(cfg, &bytes)?;
    let mut notes: Vec<String> = report.checks.iter().map(|c| c.to_string()).collect();
    if let Some(f) = report.first_failure() {
        notes.push(format!("first failure: {f}"));
        for n in &notes {
            eprintln!("{n}");
        }
        return Err(CliError::Verification(f.name.clone()));
    }
    notes.push(format!("{} checks passed", report.checks.len()));
    Ok(Outcome { path, notes })
}

#[derive(Debug, Serialize)]
struct OracleRow {
    n: usize,
    items_pruned: usize,
    items_full: usize,
    pruned_mass: f64,
    max_abs_diff: f64,
    entropy_pruned: f64,
    entropy_full: f64,
    agree: bool,
}

fn run_oracle(cfg: &RunConfig) -> CliResult<Outcome> {
    let m = single_model(cfg)?;
    let n_max = cfg.n_max.or(cfg.n).unwrap_or(8);
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let pruned = enumerate_distribution(&m, n, cfg.prune_tol)?;
        let full = enumerate_distribution(&m, n, 0.0)?;
        let pm = pruned.as_map();
        let mut diff = 0.0f64;
        for it in &full.items {
            diff = diff.max((it.probability - pm.get(&it.string).copied().unwrap_or(0.0)).abs());
        }
        let (hp, hf) = (shannon_entropy(&pruned), shannon_entropy(&full));
        rows.push(OracleRow {
            n,
            items_pruned: pruned.len(),
            items_full: full.len(),
            pruned_mass: pruned.pruned_mass,
            max_abs_diff: diff,
            entropy_pruned: hp,
            entropy_full: hf,
            agree: diff <= ORACLE_TOL && (hp - hf).abs() <= ORACLE_TOL,
        });
    }
    let bytes = match cfg.format {
        Format::Json => json_bytes(&rows)?,
        _ => {
            let mut wtr = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                wtr.serialize(r).map_err(Error::from)?;
            }
            wtr.into_inner().map_err(|e| config_err(format!("csv buffer: {e}")))?
        }
    };
    let path = write_artifact(cfg, &bytes)?;
    if let Some(bad) = rows.iter().find(|r| !r.agree) {
        return Err(CliError::Verification(format!(
            "pruned and full enumeration disagree at n={} (max diff {:.3e})",
            bad.n, bad.max_abs_diff
        )));
    }
    Ok(Outcome {
        path,
        notes: vec![format!("pruned and full enumeration agree for n <= {n_max}")],
    })
}

pub const CHANNEL_CSV_HEADER: [&str; 13] = [
    "model",
    "param",
    "n",
    "kraus_count",
    "trace_preservation_residual",
    "env_entropy",
    "output_entropy",
    "complementary_entropy",
    "path_difference",
    "coherent_info_per_use",
    "closed_form",
    "coherent_info_at_input",
    "phase_map",
];

#[derive(Debug, Serialize)]
struct ChannelReport {
    model: String,
    param: Option<f64>,
    closed_form: Option<f64>,
    check: crate::capacity::ChannelCheck,
    path_difference: f64,
    output_entropy_at_input: Option<f64>,
    complementary_entropy_at_input: Option<f64>,
    coherent_info_at_input: Option<f64>,
}

fn run_channel(cfg: &RunConfig) -> CliResult<Outcome> {
    let m = single_model(cfg)?;
    let n = cfg.n.or(cfg.n_max).unwrap_or(DEFAULT_CHANNEL_N);
    let check = channel_check(&m, n, cfg.prune_tol)?;
    let mut report = ChannelReport {
        model: m.kind().to_string(),
        param: m.primary_param(),
        closed_form: closed_form_capacity(&m),
        path_difference: check.path_difference(),
        check,
        output_entropy_at_input: None,
        complementary_entropy_at_input: None,
        coherent_info_at_input: None,
    };
    if let Some(p) = &cfg.input_state {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let rho = DensityMatrix::from_json(&text)?;
        let ch = dephasing_channel(&enumerate_distribution(&m, n, cfg.prune_tol)?)?;
        let out = apply_channel(&ch, &rho)?;
        let s_out = out.entropy()?;
        let s_env = complementary_output(&ch, &rho)?.entropy()?;
        report.output_entropy_at_input = Some(s_out);
        report.complementary_entropy_at_input = Some(s_env);
        report.coherent_info_at_input = Some(s_out - s_env);
        if let Some(sp) = &cfg.state_out {
            fs::write(sp, out.to_json()?).map_err(|e| Error::io(sp, e))?;
        }
    }
    let bytes = match cfg.format {
        Format::Json => json_bytes(&report)?,
        _ => {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let c = &report.check;
            let mut wtr = csv::Writer::from_writer(Vec::new());
            wtr.write_record(CHANNEL_CSV_HEADER).map_err(Error::from)?;
            wtr.write_record([
                report.model.clone(),
                opt(report.param),
                c.n.to_string(),
                c.kraus_count.to_string(),
                c.trace_preservation_residual.to_string(),
                c.env_entropy.to_string(),
                c.output_entropy.to_string(),
                c.complementary_entropy.to_string(),
                report.path_difference.to_string(),
                c.coherent_info_per_use.to_string(),
                opt(report.closed_form),
                opt(report.coherent_info_at_input),
                c.phase_map.to_string(),
            ])
            .map_err(Error::from)?;
            wtr.into_inner().map_err(|e| config_err(format!("csv buffer: {e}")))?
        }
    };
    let path = write_artifact(cfg, &bytes)?;
    if !report.check.paths_agree() {
        return Err(CliError::Verification(format!(
            "entropy paths differ by {:.3e} at n={n}",
            report.path_difference
        )));
    }
    Ok(Outcome {
        path,
        notes: vec![format!(
            "n={n}: {} Kraus operators, coherent information per use {:.12}, path difference {:.3e}",
            report.check.kraus_count, report.check.coherent_info_per_use, report.path_difference
        )],
    })
}

/// Executes a validated configuration.
pub fn run(cfg: &RunConfig) -> CliResult<Outcome> {
    cfg.validate()?;
    match cfg.command {
        CommandKind::Capacity => run_capacity(cfg),
        CommandKind::Sweep => run_sweep(cfg),
        CommandKind::Spectrum => run_spectrum(cfg),
        CommandKind::Verify => run_verify(cfg),
        CommandKind::Oracle => run_oracle(cfg),
        CommandKind::Channel => run_channel(cfg),
    }
}

/// Parses `args`, runs, reports, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = cli.into_config().and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            for n in &outcome.notes {
                eprintln!("{n}");
            }
            if let Some(p) = outcome.path {
                eprintln!("wrote {}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
