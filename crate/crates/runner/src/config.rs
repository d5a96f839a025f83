//! Run configuration.
//!
//! Grammar: one `key = value` (or `key: value`) per line, `#` starts a comment,
//! `[section]` prefixes the keys that follow with `section.`. Values are
//! numbers, bare words, or comma-separated lists (optionally in brackets).
//! Times are in units of `2π/ω_c`, energies in units of `ω_c`.
//!
//! Short aliases: `alpha`, `delta`, `epsilon`, `dt`, `t_max`, `eta`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ncamaps::bath::BathKind;
use ncamaps::dynmaps::Method;
use ncamaps::qops::Operator;
use thiserror::Error;

use crate::presets;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("{key}: expected {expected}, found {found:?}")]
    Type {
        key: String,
        expected: &'static str,
        found: String,
    },
    #[error("{key}: {message}")]
    Constraint { key: String, message: String },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    DownZ,
    UpZ,
    Mixed,
}

impl InitialState {
    pub fn as_str(self) -> &'static str {
        match self {
            InitialState::DownZ => "down_z",
            InitialState::UpZ => "up_z",
            InitialState::Mixed => "mixed",
        }
    }

    pub fn density_matrix(self) -> Operator {
        match self {
            InitialState::DownZ => Operator::ket_bra(2, 1, 1),
            InitialState::UpZ => Operator::ket_bra(2, 0, 0),
            InitialState::Mixed => Operator::identity(2).scale(0.5.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub delta: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathConfig {
    pub kind: BathKind,
    pub alpha: Vec<f64>,
    pub omega_c: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Step for the Born method in the dynamics and steady pipelines.
    pub born_dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    /// Also write binary propagator checkpoints from the dynamics pipeline.
    pub checkpoints: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaScale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub scale: OmegaScale,
}

impl FrequencyGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|k| {
                let f = k as f64 / last;
                match self.scale {
                    OmegaScale::Linear => self.min + f * (self.max - self.min),
                    OmegaScale::Log => self.min * (self.max / self.min).powf(f),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumConfig {
    pub eta: f64,
    /// Length of the regression run.
    pub t_max: f64,
    pub omega: FrequencyGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionConfig {
    pub epsilon: FrequencyGrid,
    pub omega: FrequencyGrid,
    pub n_coupling: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub dt_list: Vec<f64>,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub corrector_tol: f64,
    pub max_corrector_iters: usize,
    pub divergence_threshold: f64,
    pub nca_seed_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub model: ModelConfig,
    pub bath: BathConfig,
    pub methods: Vec<Method>,
    pub grid: GridConfig,
    pub initial_state: InitialState,
    pub output: OutputConfig,
    pub spectrum: SpectrumConfig,
    pub transmission: TransmissionConfig,
    pub convergence: ConvergenceConfig,
    pub solver: SolverConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                delta: 0.1,
                epsilon: 0.0,
            },
            bath: BathConfig {
                kind: BathKind::OhmicSharpCutoff,
                alpha: vec![0.1],
                omega_c: 1.0,
                temperature: 0.0,
            },
            methods: vec![Method::Nca],
            grid: GridConfig {
                dt: 0.1,
                t_max: 300.0,
                born_dt: None,
            },
            initial_state: InitialState::DownZ,
            output: OutputConfig {
                directory: None,
                checkpoints: false,
            },
            spectrum: SpectrumConfig {
                eta: 0.002,
                t_max: 4000.0,
                omega: FrequencyGrid {
                    min: 0.001,
                    max: 0.3,
                    points: 300,
                    scale: OmegaScale::Linear,
                },
            },
            transmission: TransmissionConfig {
                epsilon: FrequencyGrid {
                    min: -0.5,
                    max: 0.5,
                    points: 41,
                    scale: OmegaScale::Linear,
                },
                omega: FrequencyGrid {
                    min: 0.0,
                    max: 0.3,
                    points: 121,
                    scale: OmegaScale::Linear,
                },
                n_coupling: 1.0,
            },
            convergence: ConvergenceConfig {
                dt_list: vec![0.2, 0.1, 0.05, 0.025],
                t_max: 50.0,
            },
            solver: SolverConfig {
                corrector_tol: 1e-10,
                max_corrector_iters: 25,
                divergence_threshold: 1e6,
                nca_seed_time: None,
            },
        }
    }
}

fn resolve_alias(key: &str) -> &str {
    match key {
        "alpha" => "bath.alpha",
        "delta" => "model.delta",
        "epsilon" => "model.epsilon",
        "dt" => "grid.dt",
        "t_max" => "grid.t_max",
        "eta" => "spectrum.eta",
        "methods" => "method",
        other => other,
    }
}

/// One `key = value` line after section prefixing.
#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

fn tokenize(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section = String::new();
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(inner) = content.strip_prefix('{').and_then(|c| c.strip_suffix('}')) {
            for pair in inline_pairs(inner) {
                entries.extend(tokenize(&pair)?.into_iter().map(|e| Entry { line, ..e }));
            }
            continue;
        }
        if let Some(inner) = content.strip_prefix('[').filter(|c| c.ends_with(']') && !c.contains('=')) {
            section = inner[..inner.len() - 1].trim().to_string();
            if section.is_empty() || section.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("bad section header {content:?}"),
                });
            }
            continue;
        }
        let split = content.find(['=', ':']).ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, found {content:?}"),
        })?;
        let key = content[..split].trim();
        let value = content[split + 1..].trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("bad key {key:?}"),
            });
        }
        let key = if section.is_empty() || key.contains('.') {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        entries.push(Entry {
            key: resolve_alias(&key).to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(entries)
}

/// Splits `a: 1, b: 0.1, 0.2` into `a: 1` and `b: 0.1, 0.2`; a comma
/// only starts a new pair when the next piece has its own separator.
fn inline_pairs(inner: &str) -> Vec<String> {
    let mut pairs: Vec<String> = Vec::new();
    for piece in inner.split(',') {
        match pairs.last_mut() {
            Some(last) if !piece.contains([':', '=']) => {
                last.push(',');
                last.push_str(piece);
            }
            _ if piece.trim().is_empty() => {}
            _ => pairs.push(piece.trim().to_string()),
        }
    }
    pairs
}

fn list_items(value: &str) -> Vec<&str> {
    let v = value.trim();
    let v = v.strip_prefix('[').and_then(|v| v.strip_suffix(']')).unwrap_or(v);
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.trim().parse::<f64>().map_err(|_| ConfigError::Type {
        key: key.to_string(),
        expected: "number",
        found: value.to_string(),
    })
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    list_items(value).into_iter().map(|v| parse_f64(key, v)).collect()
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.trim().parse::<usize>().map_err(|_| ConfigError::Type {
        key: key.to_string(),
        expected: "non-negative integer",
        found: value.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        other => Err(ConfigError::Type {
            key: key.to_string(),
            expected: "boolean",
            found: other.to_string(),
        }),
    }
}

fn parse_optional_f64(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    match value.trim() {
        "none" | "" => Ok(None),
        v => parse_f64(key, v).map(Some),
    }
}

fn parse_scale(key: &str, value: &str) -> Result<OmegaScale, ConfigError> {
    match value.trim() {
        "linear" => Ok(OmegaScale::Linear),
        "log" => Ok(OmegaScale::Log),
        other => Err(ConfigError::Type {
            key: key.to_string(),
            expected: "linear or log",
            found: other.to_string(),
        }),
    }
}

pub fn parse_methods(key: &str, value: &str) -> Result<Vec<Method>, ConfigError> {
    let items = list_items(value);
    if items.is_empty() {
        return Err(ConfigError::Constraint {
            key: key.to_string(),
            message: "at least one method is required".into(),
        });
    }
    items
        .into_iter()
        .map(|m| {
            m.parse::<Method>().map_err(|_| ConfigError::Type {
                key: key.to_string(),
                expected: "nca, nca_markov, born or born_markov",
                found: m.to_string(),
            })
        })
        .collect()
}

fn grid_key(grid: &mut FrequencyGrid, field: &str, key: &str, value: &str) -> Result<(), ConfigError> {
    match field {
        "min" => grid.min = parse_f64(key, value)?,
        "max" => grid.max = parse_f64(key, value)?,
        "points" => grid.points = parse_usize(key, value)?,
        "scale" => grid.scale = parse_scale(key, value)?,
        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    Ok(())
}

impl SimulationConfig {
    /// Reads a configuration file.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Parses configuration text. A `preset` key selects the starting point;
    /// the remaining keys override it.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let entries = tokenize(text)?;
        let mut presets_seen = entries.iter().filter(|e| e.key == "preset");
        let mut config = match presets_seen.next() {
            Some(e) => {
                if let Some(dup) = presets_seen.next() {
                    return Err(ConfigError::Syntax {
                        line: dup.line,
                        message: "preset given twice".into(),
                    });
                }
                presets::preset(e.value.trim())?
            }
            None => SimulationConfig::default(),
        };
        for e in entries.iter().filter(|e| e.key != "preset") {
            config.set(&e.key, &e.value)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Sets one dotted key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = resolve_alias(key);
        match key {
            "model.delta" => self.model.delta = parse_f64(key, value)?,
            "model.epsilon" => self.model.epsilon = parse_f64(key, value)?,
            "bath.kind" => {
                self.bath.kind = value.trim().parse().map_err(|_| ConfigError::Type {
                    key: key.to_string(),
                    expected: "ohmic_sharp_cutoff",
                    found: value.to_string(),
                })?
            }
            "bath.alpha" => self.bath.alpha = parse_f64_list(key, value)?,
            "bath.omega_c" => self.bath.omega_c = parse_f64(key, value)?,
            "bath.temperature" => self.bath.temperature = parse_f64(key, value)?,
            "method" => self.methods = parse_methods(key, value)?,
            "grid.dt" => self.grid.dt = parse_f64(key, value)?,
            "grid.t_max" => self.grid.t_max = parse_f64(key, value)?,
            "grid.born_dt" => self.grid.born_dt = parse_optional_f64(key, value)?,
            "initial_state" => {
                self.initial_state = match value.trim() {
                    "down_z" => InitialState::DownZ,
                    "up_z" => InitialState::UpZ,
                    "mixed" => InitialState::Mixed,
                    other => {
                        return Err(ConfigError::Type {
                            key: key.to_string(),
                            expected: "down_z, up_z or mixed",
                            found: other.to_string(),
                        })
                    }
                }
            }
            "output.directory" => self.output.directory = Some(PathBuf::from(value.trim())),
            "output.checkpoints" => self.output.checkpoints = parse_bool(key, value)?,
            "spectrum.eta" => self.spectrum.eta = parse_f64(key, value)?,
            "spectrum.t_max" => self.spectrum.t_max = parse_f64(key, value)?,
            "transmission.n_coupling" => self.transmission.n_coupling = parse_f64(key, value)?,
            "convergence.dt_list" => self.convergence.dt_list = parse_f64_list(key, value)?,
            "convergence.t_max" => self.convergence.t_max = parse_f64(key, value)?,
            "solver.corrector_tol" => self.solver.corrector_tol = parse_f64(key, value)?,
            "solver.max_corrector_iters" => self.solver.max_corrector_iters = parse_usize(key, value)?,
            "solver.divergence_threshold" => self.solver.divergence_threshold = parse_f64(key, value)?,
            "solver.nca_seed_time" => self.solver.nca_seed_time = parse_optional_f64(key, value)?,
            other => {
                if let Some(field) = other.strip_prefix("spectrum.omega_") {
                    grid_key(&mut self.spectrum.omega, field, other, value)?
                } else if let Some(field) = other.strip_prefix("transmission.omega_") {
                    grid_key(&mut self.transmission.omega, field, other, value)?
                } else if let Some(field) = other.strip_prefix("transmission.epsilon_") {
                    grid_key(&mut self.transmission.epsilon, field, other, value)?
                } else {
                    return Err(ConfigError::UnknownKey(other.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn require(ok: bool, key: &str, message: &str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Constraint {
                    key: key.to_string(),
                    message: message.to_string(),
                })
            }
        }
        fn check_grid(g: &FrequencyGrid, prefix: &str) -> Result<(), ConfigError> {
            require(g.points >= 1, &format!("{prefix}_points"), "must be at least 1")?;
            require(
                g.min.is_finite() && g.max.is_finite() && g.max >= g.min,
                &format!("{prefix}_max"),
                "must be finite and not below the minimum",
            )?;
            if g.scale == OmegaScale::Log {
                require(g.min > 0.0, &format!("{prefix}_min"), "log grids need a positive minimum")?;
            }
            Ok(())
        }
        require(self.model.delta.is_finite(), "model.delta", "must be finite")?;
        require(self.model.epsilon.is_finite(), "model.epsilon", "must be finite")?;
        require(!self.bath.alpha.is_empty(), "bath.alpha", "alpha list must not be empty")?;
        require(
            self.bath.alpha.iter().all(|a| a.is_finite() && *a >= 0.0),
            "bath.alpha",
            "couplings must be non-negative",
        )?;
        require(self.bath.omega_c > 0.0, "bath.omega_c", "must be positive")?;
        require(self.bath.temperature >= 0.0, "bath.temperature", "must be non-negative")?;
        require(!self.methods.is_empty(), "method", "at least one method is required")?;
        require(self.grid.dt > 0.0 && self.grid.dt.is_finite(), "grid.dt", "must be positive")?;
        require(self.grid.t_max > self.grid.dt, "grid.t_max", "must exceed grid.dt")?;
        if let Some(b) = self.grid.born_dt {
            require(b > 0.0 && b < self.grid.t_max, "grid.born_dt", "must be positive and below t_max")?;
        }
        require(self.spectrum.eta > 0.0, "spectrum.eta", "must be positive")?;
        require(self.spectrum.t_max > self.grid.dt, "spectrum.t_max", "must exceed grid.dt")?;
        check_grid(&self.spectrum.omega, "spectrum.omega")?;
        check_grid(&self.transmission.omega, "transmission.omega")?;
        check_grid(&self.transmission.epsilon, "transmission.epsilon")?;
        require(
            self.convergence.dt_list.len() >= 2 && self.convergence.dt_list.windows(2).all(|w| w[0] > w[1] && w[1] > 0.0),
            "convergence.dt_list",
            "needs at least two positive, strictly descending steps",
        )?;
        require(
            self.convergence.t_max > self.convergence.dt_list[0],
            "convergence.t_max",
            "must exceed the coarsest step",
        )?;
        require(self.solver.corrector_tol > 0.0, "solver.corrector_tol", "must be positive")?;
        require(self.solver.max_corrector_iters >= 1, "solver.max_corrector_iters", "must be at least 1")?;
        require(self.solver.divergence_threshold > 1.0, "solver.divergence_threshold", "must exceed 1")?;
        Ok(())
    }

    /// Step in `2π/ω_c` used for `method` in the dynamics and steady pipelines.
    pub fn dt_for(&self, method: Method) -> f64 {
        match (method, self.grid.born_dt) {
            (Method::Born, Some(b)) => b,
            _ => self.grid.dt,
        }
    }

    /// Canonical `key = value` listing that parses back to the same config.
    pub fn to_text(&self) -> String {
        fn list(v: &[f64]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        }
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
        }
        fn scale(s: OmegaScale) -> &'static str {
            match s {
                OmegaScale::Linear => "linear",
                OmegaScale::Log => "log",
            }
        }
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model.delta", self.model.delta.to_string());
        kv("model.epsilon", self.model.epsilon.to_string());
        kv("bath.kind", "ohmic_sharp_cutoff".into());
        kv("bath.alpha", list(&self.bath.alpha));
        kv("bath.omega_c", self.bath.omega_c.to_string());
        kv("bath.temperature", self.bath.temperature.to_string());
        kv(
            "method",
            self.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", "),
        );
        kv("grid.dt", self.grid.dt.to_string());
        kv("grid.t_max", self.grid.t_max.to_string());
        kv("grid.born_dt", opt(self.grid.born_dt));
        kv("initial_state", self.initial_state.as_str().into());
        if let Some(d) = &self.output.directory {
            kv("output.directory", d.display().to_string());
        }
        kv("output.checkpoints", self.output.checkpoints.to_string());
        kv("spectrum.eta", self.spectrum.eta.to_string());
        kv("spectrum.t_max", self.spectrum.t_max.to_string());
        for (prefix, g) in [
            ("spectrum.omega", &self.spectrum.omega),
            ("transmission.omega", &self.transmission.omega),
            ("transmission.epsilon", &self.transmission.epsilon),
        ] {
            kv(&format!("{prefix}_min"), g.min.to_string());
            kv(&format!("{prefix}_max"), g.max.to_string());
            kv(&format!("{prefix}_points"), g.points.to_string());
            kv(&format!("{prefix}_scale"), scale(g.scale).into());
        }
        kv("transmission.n_coupling", self.transmission.n_coupling.to_string());
        kv("convergence.dt_list", list(&self.convergence.dt_list));
        kv("convergence.t_max", self.convergence.t_max.to_string());
        kv("solver.corrector_tol", self.solver.corrector_tol.to_string());
        kv("solver.max_corrector_iters", self.solver.max_corrector_iters.to_string());
        kv("solver.divergence_threshold", self.solver.divergence_threshold.to_string());
        kv("solver.nca_seed_time", opt(self.solver.nca_seed_time));
        s
    }
}
