//! Run configuration: a TOML file with bracketed sections, overridden by flags.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use chemowave::constants::{c_star, ModelParams};
use chemowave::dynamics::Scheme;
use chemowave::spreading::InitialShape;

/// Configuration problems; the CLI exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Constants,
    Wave,
    Spread,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub chi: f64,
    pub a: f64,
    pub b: f64,
    pub dim: u32,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            chi: 0.2,
            a: 1.0,
            b: 1.0,
            dim: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub half_length: f64,
    pub intervals: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            half_length: 60.0,
            intervals: 12000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct StepperSection {
    pub scheme: Option<Scheme>,
    /// Defaults to 0.1 for waves and 0.01 for spreading runs.
    pub dt_max: Option<f64>,
    pub cfl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveSection {
    /// Defaults to `c*(chi)`.
    pub c: Option<f64>,
    pub tol_inner: f64,
    pub tol_outer: f64,
    pub max_outer: usize,
    pub t_cap: f64,
    pub relaxation: f64,
}

impl Default for WaveSection {
    fn default() -> Self {
        WaveSection {
            c: None,
            tol_inner: 1e-8,
            tol_outer: 1e-6,
            max_outer: 50,
            t_cap: 200.0,
            relaxation: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpreadSection {
    pub t_final: f64,
    pub snapshot_dt: f64,
    pub h: f64,
    pub half_length: Option<f64>,
    pub thresholds: Vec<f64>,
    pub shape: InitialShape,
    /// Also write every snapshot as CSV.
    pub snapshots: bool,
}

impl Default for SpreadSection {
    fn default() -> Self {
        SpreadSection {
            t_final: 40.0,
            snapshot_dt: 0.5,
            h: 0.01,
            half_length: None,
            thresholds: vec![0.01, 0.1, 0.5],
            shape: InitialShape::default(),
            snapshots: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub seed: u64,
    pub suites: Vec<String>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            seed: 20240601,
            suites: vec!["all".into()],
        }
    }
}

/// Contents of a configuration file. Every key is optional; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub stepper: StepperSection,
    pub wave: WaveSection,
    pub spread: SpreadSection,
    pub output: OutputSection,
    pub verify: VerifySection,
}

/// Fully resolved configuration, embedded in every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(flatten)]
    pub file: FileConfig,
}

#[derive(Debug, Parser)]
#[command(
    name = "chemowave",
    version,
    about = "Traveling waves and spreading speeds of a chemotaxis model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Critical decay rate, minimal wave speed and spreading-speed bounds.
    Constants(Flags),
    /// Construct a traveling wave profile.
    Wave(Flags),
    /// Simulate spreading from compactly supported data.
    Spread(Flags),
    /// Run the verification suites.
    Verify(Flags),
}

#[derive(Debug, Clone, Args, Default)]
pub struct Flags {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub chi: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub dim: Option<u32>,
    /// Half length `L` of the wave grid `[-L, L]`.
    #[arg(long = "half-length")]
    pub half_length: Option<f64>,
    #[arg(long)]
    pub intervals: Option<usize>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long = "dt-max")]
    pub dt_max: Option<f64>,
    #[arg(long)]
    pub cfl: Option<f64>,
    /// Wave speed; defaults to `c*(chi)`.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long = "tol-inner")]
    pub tol_inner: Option<f64>,
    #[arg(long = "tol-outer")]
    pub tol_outer: Option<f64>,
    #[arg(long = "max-outer")]
    pub max_outer: Option<usize>,
    #[arg(long = "t-cap")]
    pub t_cap: Option<f64>,
    #[arg(long)]
    pub relaxation: Option<f64>,
    #[arg(long = "t-final")]
    pub t_final: Option<f64>,
    #[arg(long = "snapshot-dt")]
    pub snapshot_dt: Option<f64>,
    /// Grid spacing of spreading runs.
    #[arg(long)]
    pub h: Option<f64>,
    /// Half length of the spreading domain; defaults to `upper T + 20`.
    #[arg(long = "spread-half-length")]
    pub spread_half_length: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub shape: Option<ShapeArg>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub height: Option<f64>,
    /// Write every spreading snapshot as CSV.
    #[arg(long)]
    pub snapshots: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated suites: all, elliptic, constants, envelopes, dynamics, wave, spreading.
    #[arg(long, value_delimiter = ',')]
    pub suite: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    ImexBe,
    ImexCn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    Parabola,
    Plateau,
    Cosine,
}

pub const SUITES: [&str; 6] = [
    "elliptic",
    "constants",
    "envelopes",
    "dynamics",
    "wave",
    "spreading",
];

/// Parses TOML text; errors carry the line number.
pub fn parse_file_text(text: &str, origin: &Path) -> Result<FileConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let msg = e.message().to_string();
        match line {
            Some(l) => ConfigError(format!("{}:{l}: {msg}", origin.display())),
            None => ConfigError(format!("{}: {msg}", origin.display())),
        }
    })
}

pub fn parse_config(command: Command, flags: &Flags) -> Result<RunConfig, ConfigError> {
    let mut file = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            parse_file_text(&text, path)?
        }
        None => FileConfig::default(),
    };
    apply_flags(&mut file, flags);
    let cfg = RunConfig { command, file };
    validate(&cfg)?;
    Ok(cfg)
}

fn apply_flags(f: &mut FileConfig, fl: &Flags) {
    macro_rules! set {
        ($src:expr => $dst:expr) => {
            if let Some(v) = $src.clone() {
                $dst = v;
            }
        };
    }
    set!(fl.chi => f.model.chi);
    set!(fl.a => f.model.a);
    set!(fl.b => f.model.b);
    set!(fl.dim => f.model.dim);
    set!(fl.half_length => f.grid.half_length);
    set!(fl.intervals => f.grid.intervals);
    if let Some(s) = fl.scheme {
        f.stepper.scheme = Some(match s {
            SchemeArg::ImexBe => Scheme::ImexBe,
            SchemeArg::ImexCn => Scheme::ImexCn,
        });
    }
    if fl.dt_max.is_some() {
        f.stepper.dt_max = fl.dt_max;
    }
    if fl.cfl.is_some() {
        f.stepper.cfl = fl.cfl;
    }
    if fl.c.is_some() {
        f.wave.c = fl.c;
    }
    set!(fl.tol_inner => f.wave.tol_inner);
    set!(fl.tol_outer => f.wave.tol_outer);
    set!(fl.max_outer => f.wave.max_outer);
    set!(fl.t_cap => f.wave.t_cap);
    set!(fl.relaxation => f.wave.relaxation);
    set!(fl.t_final => f.spread.t_final);
    set!(fl.snapshot_dt => f.spread.snapshot_dt);
    set!(fl.h => f.spread.h);
    if fl.spread_half_length.is_some() {
        f.spread.half_length = fl.spread_half_length;
    }
    set!(fl.thresholds => f.spread.thresholds);
    if fl.snapshots {
        f.spread.snapshots = true;
    }
    if fl.shape.is_some() || fl.radius.is_some() || fl.height.is_some() {
        let (r0, h0) = shape_parts(&f.spread.shape);
        let (radius, height) = (fl.radius.unwrap_or(r0), fl.height.unwrap_or(h0));
        f.spread.shape = match fl.shape {
            Some(ShapeArg::Parabola) => InitialShape::Parabola { radius, height },
            Some(ShapeArg::Plateau) => InitialShape::Plateau { radius, height },
            Some(ShapeArg::Cosine) => InitialShape::Cosine { radius, height },
            None => match f.spread.shape {
                InitialShape::Parabola { .. } => InitialShape::Parabola { radius, height },
                InitialShape::Plateau { .. } => InitialShape::Plateau { radius, height },
                InitialShape::Cosine { .. } => InitialShape::Cosine { radius, height },
            },
        };
    }
    set!(fl.out => f.output.dir);
    set!(fl.seed => f.verify.seed);
    set!(fl.suite => f.verify.suites);
}

fn shape_parts(s: &InitialShape) -> (f64, f64) {
    match *s {
        InitialShape::Parabola { radius, height }
        | InitialShape::Plateau { radius, height }
        | InitialShape::Cosine { radius, height } => (radius, height),
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        bad(format!("{name} must satisfy {name} > 0, got {v}"))
    }
}

impl RunConfig {
    pub fn model(&self) -> ModelParams {
        let m = &self.file.model;
        ModelParams {
            chi: m.chi,
            a: m.a,
            b: m.b,
            dim: m.dim,
        }
    }
}

/// Re-checks every parameter constraint relevant to the command.
pub fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    let f = &cfg.file;
    let params = cfg.model().validated().map_err(|e| match e {
        chemowave::Error::Domain(m) => ConfigError(m),
        other => ConfigError(other.to_string()),
    })?;
    if let Some(dt) = f.stepper.dt_max {
        positive("dt_max", dt)?;
    }
    if let Some(cfl) = f.stepper.cfl {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return bad(format!("cfl must satisfy 0 < cfl <= 1, got {cfl}"));
        }
    }
    match cfg.command {
        Command::Constants => {
            if params.chi == 0.0 {
                return bad("chi must satisfy 0 < chi < 1 for constants, got 0");
            }
        }
        Command::Wave => {
            if !(params.chi < 0.5) {
                return bad(format!(
                    "chi must satisfy chi < 1/2 for wave, got {}",
                    params.chi
                ));
            }
            if !params.is_standard_logistic() || params.dim != 1 {
                return bad("wave requires a = b = 1 and dim = 1");
            }
            positive("half_length", f.grid.half_length)?;
            if f.grid.intervals < 2 {
                return bad(format!(
                    "intervals must satisfy intervals >= 2, got {}",
                    f.grid.intervals
                ));
            }
            positive("tol_inner", f.wave.tol_inner)?;
            positive("tol_outer", f.wave.tol_outer)?;
            positive("t_cap", f.wave.t_cap)?;
            if f.wave.max_outer == 0 {
                return bad("max_outer must satisfy max_outer >= 1");
            }
            if !(f.wave.relaxation > 0.0 && f.wave.relaxation <= 1.0) {
                return bad(format!(
                    "relaxation must satisfy 0 < relaxation <= 1, got {}",
                    f.wave.relaxation
                ));
            }
            if let Some(c) = f.wave.c {
                let c_min = if params.chi == 0.0 {
                    2.0
                } else {
                    c_star(&params).map_err(|e| ConfigError(e.to_string()))?
                };
                if !(c >= c_min) {
                    return bad(format!("c must satisfy c >= c*(chi) = {c_min}, got {c}"));
                }
            }
        }
        Command::Spread => {
            if params.dim != 1 {
                return bad("spread runs are one-dimensional: dim must be 1");
            }
            positive("t_final", f.spread.t_final)?;
            positive("snapshot_dt", f.spread.snapshot_dt)?;
            positive("h", f.spread.h)?;
            if let Some(l) = f.spread.half_length {
                positive("half_length", l)?;
            }
            if f.spread.thresholds.is_empty() {
                return bad("thresholds must not be empty");
            }
            for &t in &f.spread.thresholds {
                if !(t > 0.0 && t < 1.0) {
                    return bad(format!("thresholds must satisfy 0 < theta < 1, got {t}"));
                }
            }
            f.spread
                .shape
                .validate()
                .map_err(|e| ConfigError(e.to_string()))?;
        }
        Command::Verify => {
            for s in &f.verify.suites {
                if s != "all" && !SUITES.contains(&s.as_str()) {
                    return bad(format!(
                        "unknown suite {s:?}; expected all or one of {}",
                        SUITES.join(", ")
                    ));
                }
            }
        }
    }
    Ok(())
}
