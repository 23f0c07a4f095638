//! Experiment configuration, deterministic execution and artifact manifests.
//!
//! Config files are flat `key = value` text with `[section]` headers and `#`
//! comments:
//!
//! ```text
//! experiment = euler2d
//! subcommand = run
//! seed = 7
//! output = out/euler
//!
//! [euler2d]
//! nx = 64
//! t_end = 2.0
//! ```
//!
//! Top-level keys are `experiment` (required), `subcommand`, `seed` and
//! `output`. The only section allowed is the one named after the experiment.
//! Every key is checked against the module's schema; all problems are
//! collected before reporting.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::{csv_row, GflArray};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Module {
    Euler2d,
    Zeitlin,
    Pv,
    Sticky,
    Madelung,
    Filament,
    Topo3d,
    Entropy,
}

impl Module {
    pub const ALL: [Module; 8] = [
        Module::Euler2d,
        Module::Zeitlin,
        Module::Pv,
        Module::Sticky,
        Module::Madelung,
        Module::Filament,
        Module::Topo3d,
        Module::Entropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Module::Euler2d => "euler2d",
            Module::Zeitlin => "zeitlin",
            Module::Pv => "pv",
            Module::Sticky => "sticky",
            Module::Madelung => "madelung",
            Module::Filament => "filament",
            Module::Topo3d => "topo3d",
            Module::Entropy => "entropy",
        }
    }

    pub fn subcommands(self) -> &'static [&'static str] {
        match self {
            Module::Euler2d | Module::Zeitlin | Module::Pv | Module::Filament | Module::Entropy => &["run"],
            Module::Sticky => &["run", "minimize", "continuum"],
            Module::Madelung => &["verify"],
            Module::Topo3d => &["helicity", "beltrami"],
        }
    }

    pub fn default_subcommand(self) -> &'static str {
        self.subcommands()[0]
    }

    fn schema(self) -> &'static [(&'static str, Kind)] {
        use Kind::*;
        match self {
            Module::Euler2d => &[
                ("nx", Int),
                ("ny", Int),
                ("dt", Float),
                ("t_end", Float),
                ("nu_h", Float),
                ("hyper_order", Int),
                ("diag_every", Int),
                ("snapshot_every", Int),
                ("blob_threshold", Float),
                ("k0", Float),
                ("init", Str),
            ],
            Module::Zeitlin => &[
                ("n", Int),
                ("dt", Float),
                ("steps", Int),
                ("diag_every", Int),
                ("integrator", Str),
                ("k0", Float),
            ],
            Module::Pv => &[
                ("geometry", Str),
                ("n", Int),
                ("t_end", Float),
                ("tol", Float),
                ("output_dt", Float),
                ("section_component", Int),
                ("section_value", Float),
            ],
            Module::Sticky => &[("n", Int), ("t_end", Float), ("grid", Int)],
            Module::Madelung => &[
                ("n", Int),
                ("amplitude", Float),
                ("phase", Float),
                ("potential", Float),
                ("coupling", Float),
                ("t_end", Float),
                ("dts", FloatList),
            ],
            Module::Filament => &[
                ("shape", Str),
                ("m", Int),
                ("radius", Float),
                ("helix_a", Float),
                ("helix_b", Float),
                ("dt", Float),
                ("steps", Int),
                ("every", Int),
            ],
            Module::Topo3d => &[
                ("source", Str),
                ("input", Str),
                ("grid", Int),
                ("a", Float),
                ("b", Float),
                ("c", Float),
                ("lambda", Float),
                ("kmax", Float),
            ],
            Module::Entropy => &[
                ("grid", Int),
                ("members", Int),
                ("n_list", IntList),
                ("eps_list", FloatList),
                ("cells_per_axis", Int),
                ("dt", Float),
                ("t_end", Float),
                ("sample_every", Int),
                ("k0", Float),
                ("nu_h", Float),
                ("hyper_order", Int),
                ("frozen", Bool),
            ],
        }
    }

    fn kind_of(self, key: &str) -> Option<Kind> {
        self.schema().iter().find(|(k, _)| *k == key).map(|(_, t)| *t)
    }

    /// Whether the run draws random numbers, which makes `seed` mandatory.
    pub fn is_stochastic(self, params: &BTreeMap<String, Value>) -> bool {
        let s = |k: &str, d: &str| match params.get(k) {
            Some(Value::Str(v)) => v.clone(),
            _ => d.to_string(),
        };
        match self {
            Module::Euler2d => s("init", "random") == "random",
            Module::Zeitlin | Module::Pv | Module::Entropy => true,
            Module::Sticky => true,
            Module::Madelung => false,
            Module::Filament => s("shape", "circle") == "knot",
            Module::Topo3d => s("source", "abc") == "random",
        }
    }
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Module {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Module::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Module::ALL.iter().map(|m| m.name()).collect();
                format!("unknown module '{s}' (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Bool,
    Str,
    IntList,
    FloatList,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Int => "integer",
            Kind::Float => "number",
            Kind::Bool => "boolean",
            Kind::Str => "string",
            Kind::IntList => "list of integers",
            Kind::FloatList => "list of numbers",
        }
    }

    fn parse(self, raw: &str) -> Option<Value> {
        let list = |raw: &str| -> Vec<String> {
            raw.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
        };
        match self {
            Kind::Int => raw.parse().ok().map(Value::Int),
            Kind::Float => raw.parse::<f64>().ok().filter(|v| v.is_finite()).map(Value::Float),
            Kind::Bool => raw.parse().ok().map(Value::Bool),
            Kind::Str => (!raw.is_empty()).then(|| Value::Str(raw.to_string())),
            Kind::IntList => list(raw).iter().map(|s| s.parse().ok()).collect::<Option<Vec<i64>>>().map(Value::IntList),
            Kind::FloatList => list(raw)
                .iter()
                .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .map(Value::FloatList),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    IntList(Vec<i64>),
    FloatList(Vec<f64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: Vec<String>| v.join(", ");
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => f.write_str(v),
            Value::IntList(v) => f.write_str(&join(v.iter().map(|x| x.to_string()).collect())),
            Value::FloatList(v) => f.write_str(&join(v.iter().map(|x| format!("{x:?}")).collect())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line number, when the problem is tied to a line.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Parsed experiment description. `params` holds only the keys present in
/// the file; defaults are applied when the experiment runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Module,
    pub subcommand: String,
    pub seed: Option<u64>,
    pub output: PathBuf,
    pub params: BTreeMap<String, Value>,
}

impl ExperimentConfig {
    pub fn new(experiment: Module) -> Self {
        Self {
            experiment,
            subcommand: experiment.default_subcommand().to_string(),
            seed: None,
            output: PathBuf::from("out"),
            params: BTreeMap::new(),
        }
    }

    /// Sets a module parameter from its textual form, checking the schema.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let kind = self.experiment.kind_of(key).ok_or_else(|| ConfigError {
            line: None,
            message: format!("unknown key '{key}' for {}", self.experiment),
        })?;
        let v = kind.parse(raw.trim()).ok_or_else(|| ConfigError {
            line: None,
            message: format!("key '{key}' expects a {}, got '{raw}'", kind.name()),
        })?;
        self.params.insert(key.to_string(), v);
        Ok(())
    }

    /// Canonical text form; `parse_config(c.to_text()) == c`.
    pub fn to_text(&self) -> String {
        let mut s = format!("experiment = {}\nsubcommand = {}\n", self.experiment, self.subcommand);
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed = {seed}\n"));
        }
        s.push_str(&format!("output = {}\n", self.output.display()));
        if !self.params.is_empty() {
            s.push_str(&format!("\n[{}]\n", self.experiment));
            for (k, v) in &self.params {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }

    fn check_semantics(&self) -> Vec<ConfigError> {
        let mut errs = Vec::new();
        if !self.experiment.subcommands().contains(&self.subcommand.as_str()) {
            errs.push(ConfigError {
                line: None,
                message: format!(
                    "unknown subcommand '{}' for {} (expected one of {})",
                    self.subcommand,
                    self.experiment,
                    self.experiment.subcommands().join(", ")
                ),
            });
        }
        if self.seed.is_none() && self.experiment.is_stochastic(&self.params) {
            errs.push(ConfigError {
                line: None,
                message: format!("missing mandatory key 'seed' for stochastic experiment {}", self.experiment),
            });
        }
        errs
    }
}

/// Parses a config file, returning every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let mut errs = Vec::new();
    let mut top: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut section: Option<(usize, String)> = None;
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut seen: BTreeMap<(Option<String>, String), usize> = BTreeMap::new();
    let mut sections_seen: Vec<String> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            match name.strip_suffix(']') {
                Some(name) => {
                    let name = name.trim().to_string();
                    if sections_seen.contains(&name) {
                        errs.push(ConfigError { line: Some(lineno), message: format!("duplicate section [{name}]") });
                    } else if !sections_seen.is_empty() {
                        errs.push(ConfigError {
                            line: Some(lineno),
                            message: format!("only one module section allowed, found [{name}]"),
                        });
                    }
                    sections_seen.push(name.clone());
                    section = Some((lineno, name));
                }
                None => errs.push(ConfigError { line: Some(lineno), message: format!("malformed section header '{line}'") }),
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errs.push(ConfigError { line: Some(lineno), message: format!("expected 'key = value', got '{line}'") });
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            errs.push(ConfigError { line: Some(lineno), message: "empty key".into() });
            continue;
        }
        let scope = section.as_ref().map(|s| s.1.clone());
        if let Some(first) = seen.insert((scope.clone(), k.clone()), lineno) {
            errs.push(ConfigError {
                line: Some(lineno),
                message: format!("duplicate key '{k}' (first set on line {first})"),
            });
            continue;
        }
        match scope {
            None => {
                top.insert(k, (lineno, v));
            }
            Some(_) => entries.push((lineno, k, v)),
        }
    }

    for (k, (lineno, _)) in &top {
        if !["experiment", "subcommand", "seed", "output"].contains(&k.as_str()) {
            errs.push(ConfigError { line: Some(*lineno), message: format!("unknown top-level key '{k}'") });
        }
    }

    let experiment = match top.get("experiment") {
        None => {
            errs.push(ConfigError { line: None, message: "missing mandatory key 'experiment'".into() });
            None
        }
        Some((lineno, v)) => match v.parse::<Module>() {
            Ok(m) => Some(m),
            Err(e) => {
                errs.push(ConfigError { line: Some(*lineno), message: e });
                None
            }
        },
    };
    let seed = top.get("seed").and_then(|(lineno, v)| match v.parse::<u64>() {
        Ok(s) => Some(s),
        Err(_) => {
            errs.push(ConfigError {
                line: Some(*lineno),
                message: format!("key 'seed' expects a nonnegative 64-bit integer, got '{v}'"),
            });
            None
        }
    });

    let Some(experiment) = experiment else {
        return Err(errs);
    };
    if let Some((lineno, name)) = &section {
        if name != experiment.name() {
            errs.push(ConfigError {
                line: Some(*lineno),
                message: format!("section [{name}] does not match experiment '{experiment}'"),
            });
        }
    }
    let mut cfg = ExperimentConfig::new(experiment);
    cfg.seed = seed;
    if let Some((_, s)) = top.get("subcommand") {
        cfg.subcommand = s.clone();
    }
    if let Some((_, o)) = top.get("output") {
        cfg.output = PathBuf::from(o);
    }
    for (lineno, k, v) in entries {
        if let Err(mut e) = cfg.set(&k, &v) {
            e.line = Some(lineno);
            errs.push(e);
        }
    }
    errs.extend(cfg.check_semantics());
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(errs)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{module} failed: {message}")]
    Numeric { module: Module, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// Process exit status: 1 for numeric and io failures, 2 for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: Module,
    pub subcommand: String,
    pub seed: Option<u64>,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Re-hashes every listed file under `dir` and reports the first mismatch.
    pub fn verify(&self, dir: &Path) -> Result<(), String> {
        for f in &self.files {
            let bytes = fs::read(dir.join(&f.path)).map_err(|e| format!("{}: {e}", f.path))?;
            let h = hex::encode(Sha256::digest(&bytes));
            if h != f.sha256 || bytes.len() as u64 != f.bytes {
                return Err(format!("{}: hash mismatch", f.path));
            }
        }
        Ok(())
    }
}

/// Writes files under one directory and records their hashes.
struct Artifacts {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Artifacts {
    fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.push(ManifestEntry {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn csv(&mut self, rel: &str, header: &str, rows: impl IntoIterator<Item = String>) -> std::io::Result<()> {
        let mut s = String::from(header);
        s.push('\n');
        for r in rows {
            s.push_str(&r);
            s.push('\n');
        }
        self.write(rel, s.as_bytes())
    }

    fn json(&mut self, rel: &str, value: &impl Serialize) -> std::io::Result<()> {
        let s = serde_json::to_string_pretty(value).expect("serializable");
        self.write(rel, s.as_bytes())
    }

    fn gfl(&mut self, rel: &str, arr: &GflArray) -> Result<(), RunError> {
        let mut bytes = Vec::new();
        arr.write_to(&mut bytes).map_err(|e| RunError::Io(std::io::Error::other(e.to_string())))?;
        Ok(self.write(rel, &bytes)?)
    }
}

/// Typed parameter lookup with defaults.
struct Params<'a> {
    cfg: &'a ExperimentConfig,
}

impl Params<'_> {
    fn int(&self, k: &str, d: i64) -> i64 {
        match self.cfg.params.get(k) {
            Some(Value::Int(v)) => *v,
            _ => d,
        }
    }

    fn usize(&self, k: &str, d: usize) -> Result<usize, RunError> {
        let v = self.int(k, d as i64);
        usize::try_from(v).map_err(|_| RunError::Usage(format!("key '{k}' must be nonnegative, got {v}")))
    }

    fn float(&self, k: &str, d: f64) -> f64 {
        match self.cfg.params.get(k) {
            Some(Value::Float(v)) => *v,
            Some(Value::Int(v)) => *v as f64,
            _ => d,
        }
    }

    fn string(&self, k: &str, d: &str) -> String {
        match self.cfg.params.get(k) {
            Some(Value::Str(v)) => v.clone(),
            _ => d.to_string(),
        }
    }

    fn bool(&self, k: &str, d: bool) -> bool {
        match self.cfg.params.get(k) {
            Some(Value::Bool(v)) => *v,
            _ => d,
        }
    }

    fn floats(&self, k: &str, d: &[f64]) -> Vec<f64> {
        match self.cfg.params.get(k) {
            Some(Value::FloatList(v)) => v.clone(),
            _ => d.to_vec(),
        }
    }

    fn usizes(&self, k: &str, d: &[usize]) -> Result<Vec<usize>, RunError> {
        match self.cfg.params.get(k) {
            Some(Value::IntList(v)) => v
                .iter()
                .map(|&x| usize::try_from(x).map_err(|_| RunError::Usage(format!("key '{k}' entries must be nonnegative"))))
                .collect(),
            _ => Ok(d.to_vec()),
        }
    }
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    experiment: Module,
    subcommand: &'a str,
    seed: Option<u64>,
    config: String,
    version: &'static str,
}

fn numeric(module: Module) -> impl Fn(String) -> RunError {
    move |message| RunError::Numeric { module, message }
}

/// Runs an experiment into `config.output` and writes `manifest.json` there.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest, RunError> {
    if let Some(e) = config.check_semantics().first() {
        return Err(RunError::Usage(e.to_string()));
    }
    let mut art = Artifacts::new(&config.output)?;
    let p = Params { cfg: config };
    let seed = config.seed.unwrap_or(0);
    let fail = numeric(config.experiment);
    match config.experiment {
        Module::Euler2d => run_euler(&p, seed, &mut art, &fail)?,
        Module::Zeitlin => run_zeitlin(&p, seed, &mut art, &fail)?,
        Module::Pv => run_pv(&p, seed, &mut art, &fail)?,
        Module::Sticky => run_sticky(&p, seed, &config.subcommand, &mut art, &fail)?,
        Module::Madelung => run_madelung(&p, &mut art, &fail)?,
        Module::Filament => run_filament(&p, seed, &mut art, &fail)?,
        Module::Topo3d => run_topo(&p, seed, &config.subcommand, &mut art, &fail)?,
        Module::Entropy => run_entropy(&p, seed, &mut art, &fail)?,
    }
    art.json(
        "run.json",
        &RunMetadata {
            experiment: config.experiment,
            subcommand: &config.subcommand,
            seed: config.seed,
            config: config.to_text(),
            version: env!("CARGO_PKG_VERSION"),
        },
    )?;
    let manifest = Manifest {
        experiment: config.experiment,
        subcommand: config.subcommand.clone(),
        seed: config.seed,
        files: art.files,
    };
    fs::write(config.output.join(Manifest::FILE_NAME), manifest.to_json())?;
    Ok(manifest)
}

/// Runs one copy of `config` per seed, each into `<output>/seed_<s>`.
/// Experiments run in parallel; each is internally deterministic.
pub fn run_sweep(config: &ExperimentConfig, seeds: &[u64]) -> Vec<Result<Manifest, RunError>> {
    seeds
        .par_iter()
        .map(|&s| {
            let mut c = config.clone();
            c.seed = Some(s);
            c.output = config.output.join(format!("seed_{s}"));
            run_experiment(&c)
        })
        .collect()
}

type Fail<'a> = &'a dyn Fn(String) -> RunError;

fn run_euler(p: &Params, seed: u64, art: &mut Artifacts, fail: Fail) -> Result<(), RunError> {
    use crate::euler2d::{random_vorticity, run, DiagnosticRow, EulerConfig};
    use crate::spectral::VorticityField2D;
    let d = EulerConfig::default();
    let cfg = EulerConfig {
        nx: p.usize("nx", 64)?,
        ny: p.usize("ny", 64)?,
        dt: p.float("dt", 0.01),
        t_end: p.float("t_end", 1.0),
        nu_h: p.float("nu_h", d.nu_h),
        hyper_order: p.int("hyper_order", d.hyper_order as i64) as u32,
        diag_every: p.usize("diag_every", d.diag_every)?,
        snapshot_every: p.usize("snapshot_every", 0)?,
        blob_threshold: p.float("blob_threshold", d.blob_threshold),
        seed,
    };
    cfg.validate().map_err(|e| RunError::Usage(e.to_string()))?;
    let grid = cfg.grid().map_err(|e| RunError::Usage(e.to_string()))?;
    let w0 = match p.string("init", "random").as_str() {
        "random" => random_vorticity(grid, seed, p.float("k0", 4.0)),
        "shear" => VorticityField2D::from_stream_fn(grid, |_, y| y.cos()),
        other => return Err(RunError::Usage(format!("init must be random or shear, got '{other}'"))),
    };
    let out = run(&cfg, &w0).map_err(|e| fail(e.to_string()))?;
    art.csv("diagnostics.csv", DiagnosticRow::CSV_HEADER, out.series.iter().map(|r| r.csv()))?;
    for (k, s) in out.snapshots.iter().enumerate() {
        art.gfl(&format!("snapshots/omega_{k:04}.gfl"), &GflArray::from_vorticity(&s.field))?;
    }
    Ok(())
}

fn run_zeitlin(p: &Params, seed: u64, art: &mut Artifacts, fail: Fail) -> Result<(), RunError> {
    use crate::zeitlin::{random_state, run, Integrator, ZeitlinConfig, ZeitlinDiagnostic, ZeitlinModel};
    let integrator = match p.string("integrator", "isospectral").as_str() {
        "isospectral" => Integrator::Isospectral,
        "rk4" => Integrator::Rk4,
        other => return Err(RunError::Usage(format!("integrator must be isospectral or rk4, got '{other}'"))),
    };
    let cfg = ZeitlinConfig {
        n: p.usize("n", 33)?,
        dt: p.float("dt", 0.01),
        steps: p.usize("steps", 1000)?,
        diag_every: p.usize("diag_every", 10)?,
        integrator,
    };
    let model = ZeitlinModel::new(cfg.n).map_err(|e| RunError::Usage(e.to_string()))?;
    let w0 = random_state(&model, seed, p.float("k0", 3.0));
    let (series, last) = run(&cfg, &w0).map_err(|e| fail(e.to_string()))?;
    art.csv("diagnostics.csv", ZeitlinDiagnostic::CSV_HEADER, series.iter().map(|r| r.csv()))?;
    let entries: Vec<_> = last.w.iter().copied().collect();
    // nalgebra stores column-major; the GFL1 record is row-major
    let n = cfg.n;
    let row_major: Vec<_> = (0..n * n).map(|i| entries[(i % n) * n + i / n]).collect();
    art.gfl("w_final.gfl", &GflArray::from_complex_matrix(n, n, &row_major))?;
    Ok(())
}

fn run_pv(p: &Params, seed: u64, art: &mut Artifacts, fail: Fail) -> Result<(), RunError> {
    use crate::point_vortex::{integrate, poincare_section, random_system, Geometry, Section};
    let geometry: Geometry = p.string("geometry", "plane").parse().map_err(|e: crate::point_vortex::PvError| RunError::Usage(e.to_string()))?;
    let n = p.usize("n", 4)?;
    if n == 0 {
        return Err(RunError::Usage("n must be positive".into()));
    }
    let sys = random_system(geometry, n, seed);
    let traj = integrate(&sys, p.float("t_end", 20.0), p.float("tol", 1e-10), p.float("output_dt", 0.05)).map_err(|e| fail(e.to_string()))?;
    art.csv("trajectory.csv", &traj.csv_header(), traj.csv_rows())?;
    let component = p.usize("section_component", 1)?;
    if component >= traj.states[0].len() {
        return Err(RunError::Usage(format!("section_component {component} out of range")));
    }
    let section = Section { component, value: p.float("section_value", 0.0), direction: 1 };
    let crossings = poincare_section(&traj, &section);
    let dim = traj.states[0].len();
    let header: Vec<String> = std::iter::once("t".to_string()).chain((0..dim).map(|i| format!("s{i}"))).collect();
    art.csv(
        "poincare.csv",
        &header.join(","),
        crossings.iter().map(|c| {
            let mut v = vec![c.t];
            v.extend_from_slice(&c.state);
            csv_row(&v)
        }),
    )?;
    art.json(
        "summary.json",
        &serde_json::json!({ "geometry": geometry, "n": n, "conserved_drift": traj.conserved_drift(), "steps": traj.steps_taken }),
    )?;
    Ok(())
}

fn run_sticky(p: &Params, seed: u64, sub: &str, art: &mut Artifacts, fail: Fail) -> Result<(), RunError> {
    use crate::sticky::{continuum_evolve, embed_system, event_driven_run, oracle_endpoint, random_system, variational_minimize, OracleRun, StickySystem};
    let n = p.usize("n", 5)?;
    if n == 0 {
        return Err(RunError::Usage("n must be positive".into()));
    }
    let sys = random_system(n, seed);
    let t_end = p.float("t_end", 1.0);
    match sub {
        "run" => {
            let run = event_driven_run(&sys, t_end);
            art.csv("events.csv", OracleRun::EVENT_CSV_HEADER, run.event_csv_rows())?;
            art.csv(
                "final.csv",
                "particle,mass,position,velocity",
                (0..n).map(|i| {
                    format!(
                        "{i},{}",
                        csv_row(&[sys.masses[i], run.positions_at(t_end)[i], run.velocities_at(t_end)[i]])
                    )
                }),
            )?;
        }
        "minimize" => {
            let res = variational_minimize(&sys.masses, &sys.positions, &oracle_endpoint(&sys)).map_err(|e| fail(e.to_string()))?;
            art.csv(
                "history.csv",
                "t,first,last",
                res.history.events.iter().map(|e| format!("{:e},{},{}", e.t, e.first, e.last)),
            )?;
            art.json(
                "minimize.json",
                &serde_json::json!({ "action": res.action, "histories_examined": res.histories_examined, "n": n }),
            )?;
        }
        "continuum" => {
            // equal masses so that every particle fills a whole number of cells
            let eq = StickySystem::new(vec![1.0; n], sys.positions.clone(), sys.velocities.clone()).map_err(|e| fail(e.to_string()))?;
            let grid = p.usize("grid", 256)?.div_ceil(n) * n;
            let (f0, v0) = embed_system(&eq, grid).map_err(|e| fail(e.to_string()))?;
            let f = continuum_evolve(&f0, &v0, t_end).map_err(|e| fail(e.to_string()))?;
            art.gfl("profile_initial.gfl", &GflArray::from_profile(f0.samples()))?;
            art.gfl("profile_final.gfl", &GflArray::from_profile(f.samples()))?;
            let m = f.len() as f64;
            art.csv(
                "profile.csv",
                "m,f0,f_t",
                (0..f.len()).map(|i| csv_row(&[(i as f64 + 0.5) / m, f0.samples()[i], f.samples()[i]])),
            )?;
        }
        other => return Err(RunError::Usage(format!("unknown sticky subcommand '{other}'"))),
    }
    Ok(())
}

fn run_madelung(p: &Params, art: &mut Artifacts, fail: Fail) -> Result<(), RunError> {
    use crate::madelung::{observed_orders, residual_study, ResidualLevel, TestFamily};
    let d = TestFamily::default();
    let fam = TestFamily {
        n: p.usize("n", d.n)?,
        amplitude: p.float("amplitude", d.amplitude),
        phase: p.float("phase", d.phase),
        potential: p.float("potential", d.potential),
        coupling: p.float("coupling", d.coupling),
    };
    let levels = residual_study(&fam, p.float("t_end", 0.5), &p.floats("dts", &[0.004, 0.002, 0.001])).map_err(|e| fail(e.to_string()))?;
    art.csv("residuals.csv", ResidualLevel::CSV_HEADER, levels.iter().map(|l| l.csv()))?;
    art.csv(
        "orders.csv",
        "level,continuity_order,momentum_order",
        observed_orders(&levels).iter().enumerate().map(|(i, (a, b))| format!("{i},{a:e},{b:e}")),
    )?;
    Ok(())
}

fn run_filament(p: &Params, seed: u64, art: &mut Artifacts, fail: Fail) -> Result<(), RunError> {
    use crate::filament::{random_knot, run, Filament, FilamentDiagnostic};
    let m = p.usize("m", 128)?;
    let f = match p.string("shape", "circle").as_str() {
        "circle" => Filament::circle(p.float("radius", 1.0), m),
        "helix" => Filament::helix(p.float("helix_a", 1.0), p.float("helix_b", 0.5), m),
        "knot" => random_knot(m, seed),
        other => return Err(RunError::Usage(format!("shape must be circle, helix or knot, got '{other}'"))),
    }
    .map_err(|e| RunError::Usage(e.to_string()))?;
    let steps = p.usize("steps", 1000)?;
    let every = p.usize("every", 100)?.max(1);
    let (diags, snaps) = run(&f, p.float("dt", 1e-4), steps, every).map_err(|e| fail(e.to_string()))?;
    art.csv("diagnostics.csv", FilamentDiagnostic::CSV_HEADER, diags.iter().map(|d| d.csv()))?;
    let mut rows = Vec::new();
    for (t, g) in &snaps {
        for (j, q) in g.points.iter().enumerate() {
            rows.push(format!("{t:e},{j},{}", csv_row(&[q[0], q[1], q[2]])));
        }
    }
    art.csv("geometry.csv", "t,vertex,x,y,z", rows)?;
    Ok(())
}

fn run_topo(p: &Params, seed: u64, sub: &str, art: &mut Artifacts, fail: Fail) -> Result<(), RunError> {
    use crate::spectral::Grid3;
    use crate::topo3d::{abc_field, random_divfree_field, summarize};
    let n = p.usize("grid", 32)?;
    let usage = |e: String| RunError::Usage(e);
    let u = match p.string("source", "abc").as_str() {
        "abc" => abc_field(Grid3::new(n).map_err(|e| usage(e.to_string()))?, p.float("a", 1.0), p.float("b", 1.0), p.float("c", 1.0))
            .map_err(|e| usage(e.to_string()))?,
        "random" => random_divfree_field(Grid3::new(n).map_err(|e| usage(e.to_string()))?, seed, p.float("kmax", 4.0)),
        "file" => {
            let path = p.string("input", "");
            if path.is_empty() {
                return Err(usage("source = file needs an input path".into()));
            }
            GflArray::load(&path)
                .and_then(|a| a.to_velocity3d())
                .map_err(|e| usage(format!("{path}: {e}")))?
        }
        other => return Err(usage(format!("source must be abc, random or file, got '{other}'"))),
    };
    let s = summarize(&u, p.float("lambda", 1.0)).map_err(|e| fail(e.to_string()))?;
    let value = match sub {
        "helicity" => serde_json::json!({ "energy": s.energy, "helicity": s.helicity, "divergence": s.divergence }),
        _ => serde_json::json!({ "beltrami_residual": s.beltrami_residual, "lambda": p.float("lambda", 1.0), "energy": s.energy }),
    };
    art.json(&format!("{sub}.json"), &value)?;
    Ok(())
}

fn run_entropy(p: &Params, seed: u64, art: &mut Artifacts, fail: Fail) -> Result<(), RunError> {
    use crate::entropy::{entropy_decrease_experiment, EntropyError, EntropyExperimentConfig};
    let d = EntropyExperimentConfig::default();
    let cfg = EntropyExperimentConfig {
        grid: p.usize("grid", d.grid)?,
        members: p.usize("members", d.members)?,
        n_list: p.usizes("n_list", &d.n_list)?,
        eps_list: p.floats("eps_list", &d.eps_list),
        cells_per_axis: p.usize("cells_per_axis", d.cells_per_axis)?,
        dt: p.float("dt", d.dt),
        t_end: p.float("t_end", d.t_end),
        sample_every: p.usize("sample_every", d.sample_every)?,
        k0: p.float("k0", d.k0),
        nu_h: p.float("nu_h", d.nu_h),
        hyper_order: p.int("hyper_order", d.hyper_order as i64) as u32,
        seed,
        frozen: p.bool("frozen", false),
    };
    let series = entropy_decrease_experiment(&cfg).map_err(|e| match e {
        EntropyError::Euler(e) => fail(e.to_string()),
        other => RunError::Usage(other.to_string()),
    })?;
    art.write("entropy.csv", series.to_csv().as_bytes())?;
    Ok(())
}

/// Caps the global thread pool at `GEOFLOW_THREADS` when set. Call once,
/// before any parallel work.
pub fn init_thread_pool_from_env() -> Result<Option<usize>, String> {
    let Ok(v) = std::env::var("GEOFLOW_THREADS") else {
        return Ok(None);
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("GEOFLOW_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    Ok(Some(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER: &str = "\
experiment = euler2d
seed = 11
output = target/x   # trailing comment

[euler2d]
nx = 32
ny = 32
dt = 0.02
t_end = 0.2
diag_every = 2
k0 = 3
";

    #[test]
    fn empty_file_reports_missing_experiment() {
        let errs = parse_config("").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("experiment"));
    }

    #[test]
    fn valid_config_round_trips() {
        let cfg = parse_config(EULER).unwrap();
        assert_eq!(cfg.experiment, Module::Euler2d);
        assert_eq!(cfg.seed, Some(11));
        assert_eq!(cfg.params["nx"], Value::Int(32));
        assert_eq!(cfg.params["k0"], Value::Float(3.0));
        let again = parse_config(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), cfg.to_text());
    }

    #[test]
    fn float_lists_round_trip_exactly() {
        let text = "experiment = madelung\nsubcommand = verify\n[madelung]\ndts = 0.1, 0.030000000000000002, 1e-7\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.params["dts"], Value::FloatList(vec![0.1, 0.030000000000000002, 1e-7]));
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn duplicate_key_names_the_line() {
        let text = "experiment = euler2d\nseed = 1\n[euler2d]\nnx = 32\nnx = 64\n";
        let errs = parse_config(text).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, Some(5));
        assert!(errs[0].to_string().contains("line 5") && errs[0].message.contains("line 4"));
    }

    #[test]
    fn all_errors_are_collected() {
        let text = "experiment = euler2d\nbogus = 1\n[euler2d]\nnx = many\nwidth = 3\ndt = 0.1\n";
        let errs = parse_config(text).unwrap_err();
        let msgs: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
        assert!(msgs.iter().any(|m| m.contains("line 2") && m.contains("bogus")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("line 4") && m.contains("integer")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("line 5") && m.contains("width")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("seed")), "{msgs:?}");
        assert_eq!(errs.len(), 4);
    }

    #[test]
    fn module_and_section_checks() {
        assert!(parse_config("experiment = fluid\n").is_err());
        let errs = parse_config("experiment = madelung\n[zeitlin]\nn = 3\n").unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("does not match")));
        let errs = parse_config("experiment = topo3d\nsubcommand = spin\n").unwrap_err();
        assert!(errs[0].message.contains("subcommand"));
        // deterministic experiments need no seed
        assert!(parse_config("experiment = topo3d\nsubcommand = beltrami\n").is_ok());
        assert!(parse_config("experiment = filament\n[filament]\nshape = knot\n").is_err());
    }

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("geoflow-runner-{}-{name}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn same_seed_gives_identical_manifest() {
        let mut cfg = parse_config(EULER).unwrap();
        let dir_a = tmp("a");
        cfg.output = dir_a.clone();
        let a = run_experiment(&cfg).unwrap();
        cfg.output = tmp("b");
        let b = run_experiment(&cfg).unwrap();
        // run.json echoes the output path, so compare the data files
        let strip = |m: &Manifest| m.files.iter().filter(|f| f.path != "run.json").cloned().collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        a.verify(&dir_a).unwrap();
        assert!(a.files.iter().any(|f| f.path == "diagnostics.csv"));
    }

    #[test]
    fn seed_sweep_gives_distinct_outputs() {
        let mut cfg = parse_config(EULER).unwrap();
        cfg.output = tmp("sweep");
        let seeds: Vec<u64> = (0..8).collect();
        let manifests: Vec<Manifest> = run_sweep(&cfg, &seeds).into_iter().map(Result::unwrap).collect();
        assert_eq!(manifests.len(), 8);
        let hashes: std::collections::BTreeSet<String> = manifests
            .iter()
            .map(|m| m.files.iter().find(|f| f.path == "diagnostics.csv").unwrap().sha256.clone())
            .collect();
        assert_eq!(hashes.len(), 8);
        for (m, s) in manifests.iter().zip(&seeds) {
            m.verify(&cfg.output.join(format!("seed_{s}"))).unwrap();
        }
    }

    #[test]
    fn numeric_failure_maps_to_exit_code_one() {
        let text = "experiment = euler2d\nseed = 1\n[euler2d]\nnx = 32\nny = 32\ndt = 5.0\nt_end = 10\n";
        let mut cfg = parse_config(text).unwrap();
        cfg.output = tmp("cfl");
        let err = run_experiment(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 1, "{err}");
        let mut bad = cfg.clone();
        bad.subcommand = "nope".into();
        assert_eq!(run_experiment(&bad).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn every_module_runs_with_small_settings() {
        let cases = [
            "experiment = zeitlin\nseed = 2\n[zeitlin]\nn = 9\nsteps = 20\ndiag_every = 5\n",
            "experiment = pv\nseed = 2\n[pv]\ngeometry = sphere\nn = 3\nt_end = 1\n",
            "experiment = sticky\nseed = 2\n[sticky]\nn = 4\n",
            "experiment = sticky\nsubcommand = minimize\nseed = 2\n[sticky]\nn = 3\n",
            "experiment = sticky\nsubcommand = continuum\nseed = 2\n[sticky]\nn = 4\ngrid = 64\n",
            "experiment = madelung\nsubcommand = verify\n",
            "experiment = filament\n[filament]\nm = 64\nsteps = 20\nevery = 10\n",
            "experiment = topo3d\nsubcommand = beltrami\n[topo3d]\ngrid = 32\n",
            "experiment = topo3d\nsubcommand = helicity\nseed = 4\n[topo3d]\nsource = random\ngrid = 16\n",
            "experiment = entropy\nseed = 2\n[entropy]\ngrid = 32\nt_end = 0.1\ndt = 0.02\nsample_every = 5\nk0 = 3\n",
        ];
        for (i, text) in cases.iter().enumerate() {
            let mut cfg = parse_config(text).unwrap_or_else(|e| panic!("case {i}: {e:?}"));
            cfg.output = tmp(&format!("mod{i}"));
            let m = run_experiment(&cfg).unwrap_or_else(|e| panic!("case {i}: {e}"));
            m.verify(&cfg.output).unwrap();
            for f in m.files.iter().filter(|f| f.path.ends_with(".csv")) {
                let body = fs::read_to_string(cfg.output.join(&f.path)).unwrap();
                let header = body.lines().next().unwrap();
                assert!(header.split(',').all(|c| !c.is_empty() && c.parse::<f64>().is_err()), "case {i} {}: {header}", f.path);
            }
        }
    }
}
