use std::fmt::{self, Write as _};
use std::path::PathBuf;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::opf::{check_factor, EpochInit, OpfParams, DEFAULT_REFACTOR_PERIOD};
use crate::sysmodel::SystemModel;

use super::expr::{format_matrix, parse_matrix};

pub const DEFAULT_SEEDS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Kalman,
    Opf,
    Uniform,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Kalman => "kalman",
            Method::Opf => "opf",
            Method::Uniform => "uniform",
        }
    }

    fn factor_key(self) -> Option<&'static str> {
        match self {
            Method::Kalman => None,
            Method::Opf => Some("gamma"),
            Method::Uniform => Some("alpha"),
        }
    }
}

/// A forgetting factor, or `auto` for `γ = ρ(A − LC)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    Auto,
    Value(f64),
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Auto => f.write_str("auto"),
            Factor::Value(v) => write!(f, "{v}"),
        }
    }
}

/// One algorithm setting in the experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEntry {
    pub method: Method,
    /// `γ` for opf, `α` for uniform; defaults to 1.
    pub factor: Factor,
    /// Overrides the experiment-wide `β`.
    pub beta: Option<f64>,
    /// Overrides the experiment-wide `λ`.
    pub lambda: Option<f64>,
    pub init: EpochInit,
}

impl GridEntry {
    pub fn new(method: Method, factor: Factor) -> Self {
        Self { method, factor, beta: None, lambda: None, init: EpochInit::Iterative }
    }

    /// Stable label, unique within a grid, e.g. `opf:gamma=auto`.
    pub fn label(&self) -> String {
        let mut s = self.method.name().to_string();
        if let Some(key) = self.method.factor_key() {
            write!(s, ":{key}={}", self.factor).unwrap();
        }
        if let Some(b) = self.beta {
            write!(s, ",beta={b}").unwrap();
        }
        if let Some(l) = self.lambda {
            write!(s, ",lambda={l}").unwrap();
        }
        if self.init == EpochInit::Direct {
            s.push_str(",init=direct");
        }
        s
    }
}

/// A fully specified experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: SystemModel,
    pub t_init: usize,
    pub epochs: usize,
    pub beta: f64,
    pub lambda: f64,
    pub refactor_period: usize,
    pub grid: Vec<GridEntry>,
    pub seeds: usize,
    pub base_seed: u64,
    pub output: Option<PathBuf>,
    /// Compute the model-known error decomposition for opf runs.
    pub decomposition: bool,
}

impl ExperimentConfig {
    /// Validated config with the default algorithm settings.
    pub fn new(name: impl Into<String>, model: SystemModel, grid: Vec<GridEntry>) -> Result<Self> {
        let defaults = OpfParams::default();
        let cfg = Self {
            name: name.into(),
            model,
            t_init: defaults.t_init,
            epochs: defaults.epochs,
            beta: defaults.beta,
            lambda: defaults.lambda,
            refactor_period: DEFAULT_REFACTOR_PERIOD,
            grid,
            seeds: DEFAULT_SEEDS,
            base_seed: 0,
            output: None,
            decomposition: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Algorithm parameters for one grid entry with a resolved factor.
    pub fn params_for(&self, entry: &GridEntry, factor: f64) -> OpfParams {
        OpfParams {
            beta: entry.beta.unwrap_or(self.beta),
            lambda: entry.lambda.unwrap_or(self.lambda),
            gamma: if entry.method == Method::Opf { factor } else { 1.0 },
            t_init: self.t_init,
            epochs: self.epochs,
            refactor_period: self.refactor_period,
            init: entry.init,
        }
    }

    /// Final time step shared by all grid entries.
    pub fn final_step(&self) -> usize {
        self.params_for(&GridEntry::new(Method::Kalman, Factor::Value(1.0)), 1.0).final_step()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.check_dimensions()?;
        if self.grid.is_empty() {
            return Err(Error::Parameter("experiment grid is empty".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Parameter("at least one seed is required".into()));
        }
        let mut labels: Vec<String> = self.grid.iter().map(GridEntry::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Parameter(format!("duplicate grid entry {}", w[0])));
        }
        for entry in &self.grid {
            match (entry.method, entry.factor) {
                (Method::Uniform, Factor::Auto) => {
                    return Err(Error::Parameter("alpha does not accept auto".into()));
                }
                (Method::Kalman, _) | (_, Factor::Auto) => {}
                (m, Factor::Value(v)) => check_factor(m.factor_key().expect("opf or uniform"), v)?,
            }
            // `auto` resolves to a valid factor; check the rest with γ = 1
            self.params_for(entry, 1.0).validate()?;
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        writeln!(s, "name = {}", self.name).unwrap();
        writeln!(s, "A = {}", format_matrix(&self.model.a)).unwrap();
        writeln!(s, "C = {}", format_matrix(&self.model.c)).unwrap();
        writeln!(s, "Q = {}", format_matrix(&self.model.q)).unwrap();
        writeln!(s, "R = {}", format_matrix(&self.model.r)).unwrap();
        writeln!(s, "t_init = {}", self.t_init).unwrap();
        writeln!(s, "epochs = {}", self.epochs).unwrap();
        writeln!(s, "beta = {:?}", self.beta).unwrap();
        writeln!(s, "lambda = {:?}", self.lambda).unwrap();
        writeln!(s, "refactor_period = {}", self.refactor_period).unwrap();
        writeln!(s, "seeds = {}", self.seeds).unwrap();
        writeln!(s, "base_seed = {}", self.base_seed).unwrap();
        writeln!(s, "decomposition = {}", self.decomposition).unwrap();
        if let Some(out) = &self.output {
            writeln!(s, "output = {}", out.display()).unwrap();
        }
        for e in &self.grid {
            let mut line = format!("grid = {}", e.method.name());
            if let Some(key) = e.method.factor_key() {
                match e.factor {
                    Factor::Auto => write!(line, " {key}=auto").unwrap(),
                    Factor::Value(v) => write!(line, " {key}={v:?}").unwrap(),
                }
            }
            if let Some(b) = e.beta {
                write!(line, " beta={b:?}").unwrap();
            }
            if let Some(l) = e.lambda {
                write!(line, " lambda={l:?}").unwrap();
            }
            if e.init == EpochInit::Direct {
                line.push_str(" init=direct");
            }
            writeln!(s, "{line}").unwrap();
        }
        s
    }

    /// Short SHA-256 digest of everything that affects the results.
    pub fn hash(&self) -> String {
        let mut cfg = self.clone();
        cfg.output = None;
        let digest = Sha256::digest(cfg.canonical().as_bytes());
        hex::encode(&digest[..8])
    }
}

fn config_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Config { line, field: field.to_string(), message: message.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, field: &str, text: &str) -> Result<T> {
    text.trim().parse().map_err(|_| config_err(line, field, format!("cannot parse '{}'", text.trim())))
}

fn parse_grid(line: usize, text: &str) -> Result<GridEntry> {
    let mut tokens = text.split_whitespace();
    let method = match tokens.next() {
        Some("kalman") => Method::Kalman,
        Some("opf") => Method::Opf,
        Some("uniform") => Method::Uniform,
        Some(other) => return Err(config_err(line, "grid", format!("unknown method '{other}'"))),
        None => return Err(config_err(line, "grid", "missing method")),
    };
    let mut entry = GridEntry::new(method, Factor::Value(1.0));
    for tok in tokens {
        let (key, value) =
            tok.split_once('=').ok_or_else(|| config_err(line, "grid", format!("expected key=value, got '{tok}'")))?;
        let field = format!("grid.{key}");
        match key {
            k if Some(k) == method.factor_key() => {
                entry.factor = if value == "auto" {
                    Factor::Auto
                } else {
                    Factor::Value(parse_num(line, &field, value)?)
                };
            }
            "beta" if method != Method::Kalman => entry.beta = Some(parse_num(line, &field, value)?),
            "lambda" if method != Method::Kalman => entry.lambda = Some(parse_num(line, &field, value)?),
            "init" if method != Method::Kalman => {
                entry.init = match value {
                    "iterative" => EpochInit::Iterative,
                    "direct" => EpochInit::Direct,
                    _ => return Err(config_err(line, &field, format!("expected iterative or direct, got '{value}'"))),
                }
            }
            _ => return Err(config_err(line, &field, format!("not an option of {}", method.name()))),
        }
    }
    Ok(entry)
}

/// Parses the `key = value` experiment format.
///
/// `#` starts a comment; `grid` may repeat and every other key may not.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let defaults = OpfParams::default();
    let mut name = None;
    let mut mats: [Option<DMatrix<f64>>; 4] = Default::default();
    let mut t_init = defaults.t_init;
    let mut epochs = defaults.epochs;
    let mut beta = defaults.beta;
    let mut lambda = defaults.lambda;
    let mut refactor_period = DEFAULT_REFACTOR_PERIOD;
    let mut seeds = DEFAULT_SEEDS;
    let mut base_seed = 0u64;
    let mut output = None;
    let mut decomposition = false;
    let mut grid = Vec::new();
    let mut seen: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) =
            content.split_once('=').ok_or_else(|| config_err(line, content, "expected 'key = value'"))?;
        let (key, value) = (key.trim(), value.trim());
        if key != "grid" {
            if seen.iter().any(|k| k == key) {
                return Err(config_err(line, key, "duplicate key"));
            }
            seen.push(key.to_string());
        }
        match key {
            "name" => name = Some(value.to_string()),
            "A" | "C" | "Q" | "R" => {
                let slot = "ACQR".find(key).expect("matrix key");
                mats[slot] = Some(parse_matrix(value).map_err(|m| config_err(line, key, m))?);
            }
            "t_init" => t_init = parse_num(line, key, value)?,
            "epochs" => epochs = parse_num(line, key, value)?,
            "beta" => beta = parse_num(line, key, value)?,
            "lambda" => lambda = parse_num(line, key, value)?,
            "refactor_period" => refactor_period = parse_num(line, key, value)?,
            "seeds" => seeds = parse_num(line, key, value)?,
            "base_seed" => base_seed = parse_num(line, key, value)?,
            "output" => output = Some(PathBuf::from(value)),
            "decomposition" => decomposition = parse_num(line, key, value)?,
            "grid" => grid.push(parse_grid(line, value)?),
            _ => return Err(config_err(line, key, "unknown key")),
        }
    }

    let [a, c, q, r] = mats;
    let missing = |k: &str| config_err(0, k, "missing required key");
    let model = SystemModel::new(a.ok_or_else(|| missing("A"))?, c.ok_or_else(|| missing("C"))?, q.ok_or_else(|| missing("Q"))?, r.ok_or_else(|| missing("R"))?)
        .map_err(|e| config_err(0, "model", e.to_string()))?;
    if grid.is_empty() {
        return Err(missing("grid"));
    }
    let cfg = ExperimentConfig {
        name: name.ok_or_else(|| missing("name"))?,
        model,
        t_init,
        epochs,
        beta,
        lambda,
        refactor_period,
        grid,
        seeds,
        base_seed,
        output,
        decomposition,
    };
    cfg.validate().map_err(|e| config_err(0, "config", e.to_string()))?;
    Ok(cfg)
}
