//! Line-oriented `key = value` configuration with `[section]` headers.

use spiral_lattice::center_bundle::{Lift, SystemParams};
use spiral_lattice::lattice::Vec2;
use spiral_lattice::perturbation::{parse_expression, PerturbationSpec};
use spiral_lattice::rd_fhn::{GridSpec, InhomogeneityCoeffs, DEFAULT_DT};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Ode,
    Average,
    Predict,
    Pde,
    Analyze,
}

impl Mode {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "ode" => Some(Self::Ode),
            "average" => Some(Self::Average),
            "predict" => Some(Self::Predict),
            "pde" => Some(Self::Pde),
            "analyze" => Some(Self::Analyze),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ode => "ode",
            Self::Average => "average",
            Self::Predict => "predict",
            Self::Pde => "pde",
            Self::Analyze => "analyze",
        }
    }

    pub fn uses_system(self) -> bool {
        matches!(self, Self::Ode | Self::Average | Self::Predict)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSettings {
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub transient_fraction: f64,
    pub initial: Lift,
    /// Extra epsilon values to rerun for the surface-diagnostic sweep.
    pub epsilon_sweep: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSettings {
    pub grid: GridSpec,
    pub coeffs: InhomogeneityCoeffs,
    pub coeff_name: Option<String>,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub settle_time: f64,
    pub transient_fraction: f64,
    pub threshold: f64,
    /// Crossing point of the broken front used to spawn the spiral.
    pub spawn: Vec2,
    /// Number of quarter-turn images of the spawned state to run (1 to 4).
    pub conjugates: usize,
    /// Further, independently spawned initial conditions.
    pub extra_spawns: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSettings {
    pub tips: PathBuf,
    pub transient_fraction: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub preset: Option<String>,
    pub system: Option<SystemParams>,
    pub ode: Option<OdeSettings>,
    pub pde: Option<PdeSettings>,
    pub analyze: Option<AnalyzeSettings>,
    /// File-name prefix for all outputs.
    pub prefix: String,
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    column: usize,
}

/// Raw `section -> key -> entry` table. Top-level keys live in section `""`.
#[derive(Debug, Default)]
struct Table {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["mode", "preset"]),
    ("system", &["v", "omega", "epsilon"]),
    ("spec", &["fpsi1", "fpsi2", "fphi"]),
    ("integration", &["dt", "t_end", "sample_every", "transient_fraction", "psi0", "phi0", "epsilon_sweep"]),
    (
        "pde",
        &[
            "n", "coeffs", "a1", "b1", "c1", "a2", "b2", "c2", "dt", "t_end", "sample_every", "settle_time",
            "transient_fraction", "threshold", "spawn", "conjugates", "extra_spawns",
        ],
    ),
    ("analyze", &["tips", "transient_fraction", "threshold"]),
    ("output", &["prefix"]),
];

fn parse_table(text: &str) -> Result<Table, ConfigError> {
    let mut table = Table::default();
    let mut section = String::new();
    table.sections.insert(section.clone(), BTreeMap::new());
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let column = content.len() - content.trim_start().len() + 1;
        let err = |column: usize, message: String| ConfigError::Parse { line, column, message };
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(column, "unterminated section header".into()))?
                .trim();
            if !SCHEMA.iter().any(|(s, _)| *s == name) || name.is_empty() {
                return Err(err(column + 1, format!("unknown section `[{name}]`")));
            }
            if table.sections.contains_key(name) {
                return Err(err(column + 1, format!("duplicate section `[{name}]`")));
            }
            section = name.to_string();
            table.sections.insert(section.clone(), BTreeMap::new());
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| err(column, format!("expected `key = value`, got `{trimmed}`")))?;
        let key = key.trim();
        let value = value.trim();
        let allowed = SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            let place = if section.is_empty() { "top level".to_string() } else { format!("[{section}]") };
            return Err(err(column, format!("unknown key `{key}` in {place}")));
        }
        if value.is_empty() {
            return Err(err(column, format!("empty value for `{key}`")));
        }
        let eq = content.find('=').expect("checked above");
        let after = &content[eq + 1..];
        let value_column = eq + 2 + (after.len() - after.trim_start().len());
        let entries = table.sections.get_mut(&section).expect("section inserted");
        if entries.contains_key(key) {
            return Err(err(column, format!("duplicate key `{key}`")));
        }
        entries.insert(key.to_string(), Entry { value: value.to_string(), line, column: value_column });
    }
    Ok(table)
}

impl Table {
    fn has_section(&self, s: &str) -> bool {
        self.sections.contains_key(s)
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|m| m.get(key))
    }

    fn invalid(e: &Entry, message: String) -> ConfigError {
        ConfigError::Parse { line: e.line, column: e.column, message }
    }

    fn real(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some(e) = self.get(section, key) else { return Ok(None) };
        let v: f64 = e
            .value
            .parse()
            .map_err(|_| Self::invalid(e, format!("`{key}` must be a number, got `{}`", e.value)))?;
        if !v.is_finite() {
            return Err(Self::invalid(e, format!("`{key}` must be finite")));
        }
        Ok(Some(v))
    }

    fn real_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.real(section, key)?.unwrap_or(default))
    }

    fn positive(&self, section: &str, key: &str, default: Option<f64>) -> Result<f64, ConfigError> {
        let v = match (self.real(section, key)?, default) {
            (Some(v), _) => v,
            (None, Some(d)) => return Ok(d),
            (None, None) => return Err(ConfigError::Missing(format!("[{section}] {key}"))),
        };
        if v <= 0.0 {
            let e = self.get(section, key).expect("present");
            return Err(Self::invalid(e, format!("`{key}` must be positive, got {v}")));
        }
        Ok(v)
    }

    fn fraction(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.real_or(section, key, default)?;
        if !(0.0..1.0).contains(&v) {
            let e = self.get(section, key).expect("only explicit values can be out of range");
            return Err(Self::invalid(e, format!("`{key}` must lie in [0, 1), got {v}")));
        }
        Ok(v)
    }

    fn integer(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        let Some(e) = self.get(section, key) else { return Ok(default) };
        e.value
            .parse()
            .map_err(|_| Self::invalid(e, format!("`{key}` must be a non-negative integer, got `{}`", e.value)))
    }

    fn pair(&self, section: &str, key: &str) -> Result<Option<Vec2>, ConfigError> {
        let Some(e) = self.get(section, key) else { return Ok(None) };
        parse_pair(&e.value).map(Some).map_err(|m| Self::invalid(e, format!("`{key}`: {m}")))
    }

    fn pairs(&self, section: &str, key: &str) -> Result<Vec<Vec2>, ConfigError> {
        let Some(e) = self.get(section, key) else { return Ok(Vec::new()) };
        e.value
            .split(';')
            .map(|p| parse_pair(p).map_err(|m| Self::invalid(e, format!("`{key}`: {m}"))))
            .collect()
    }

    fn reals(&self, section: &str, key: &str) -> Result<Vec<f64>, ConfigError> {
        let Some(e) = self.get(section, key) else { return Ok(Vec::new()) };
        e.value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Self::invalid(e, format!("`{key}`: bad number `{}`", s.trim())))
            })
            .collect()
    }
}

fn parse_pair(s: &str) -> Result<Vec2, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected `x, y`, got `{}`", s.trim()));
    }
    let x: f64 = parts[0].parse().map_err(|_| format!("bad number `{}`", parts[0]))?;
    let y: f64 = parts[1].parse().map_err(|_| format!("bad number `{}`", parts[1]))?;
    if !(x.is_finite() && y.is_finite()) {
        return Err("components must be finite".into());
    }
    Ok(Vec2::new(x, y))
}

fn parse_spec(table: &Table) -> Result<PerturbationSpec, ConfigError> {
    let mut spec = PerturbationSpec::default();
    for (key, target) in [("fpsi1", 0), ("fpsi2", 1), ("fphi", 2)] {
        if let Some(e) = table.get("spec", key) {
            let terms = parse_expression(&e.value, e.line).map_err(|err| Table::invalid(e, err.to_string()))?;
            match target {
                0 => spec.f_psi_1 = terms,
                1 => spec.f_psi_2 = terms,
                _ => spec.f_phi = terms,
            }
        }
    }
    Ok(spec.canonical())
}

fn parse_system(table: &Table) -> Result<SystemParams, ConfigError> {
    if !table.has_section("system") {
        return Err(ConfigError::Missing("[system]".into()));
    }
    let v = table.pair("system", "v")?.ok_or_else(|| ConfigError::Missing("[system] v".into()))?;
    let omega = table.real("system", "omega")?.ok_or_else(|| ConfigError::Missing("[system] omega".into()))?;
    let epsilon = table.real("system", "epsilon")?.ok_or_else(|| ConfigError::Missing("[system] epsilon".into()))?;
    let spec = parse_spec(table)?;
    SystemParams::new(v, omega, epsilon, spec).map_err(|e| ConfigError::Invalid(e.to_string()))
}

fn parse_ode(table: &Table) -> Result<OdeSettings, ConfigError> {
    let s = "integration";
    let psi0 = table.pair(s, "psi0")?.unwrap_or(Vec2::new(1.0, 2.0));
    let phi0 = table.real_or(s, "phi0", 0.5)?;
    let sweep = table.reals(s, "epsilon_sweep")?;
    if let Some(bad) = sweep.iter().find(|e| **e < 0.0) {
        return Err(ConfigError::Invalid(format!("epsilon_sweep value {bad} < 0")));
    }
    Ok(OdeSettings {
        dt: table.positive(s, "dt", Some(1e-3))?,
        t_end: table.positive(s, "t_end", None)?,
        sample_every: table.integer(s, "sample_every", 1)?.max(1),
        transient_fraction: table.fraction(s, "transient_fraction", 0.5)?,
        initial: Lift { psi: psi0, phi: phi0 },
        epsilon_sweep: sweep,
    })
}

fn parse_pde(table: &Table) -> Result<PdeSettings, ConfigError> {
    let s = "pde";
    if !table.has_section(s) {
        return Err(ConfigError::Missing("[pde]".into()));
    }
    let n = table.integer(s, "n", 200)?;
    let grid = GridSpec::new(n).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let explicit = ["a1", "b1", "c1", "a2", "b2", "c2"].iter().any(|k| table.get(s, k).is_some());
    let (coeffs, coeff_name) = match table.get(s, "coeffs") {
        Some(e) => {
            if explicit {
                return Err(Table::invalid(e, "give either `coeffs` or explicit a1..c2, not both".into()));
            }
            let c = InhomogeneityCoeffs::preset(&e.value).ok_or_else(|| {
                Table::invalid(e, format!("unknown coefficient set `{}` (zero, firstexp, secondexp, thirdexp)", e.value))
            })?;
            (c, Some(e.value.clone()))
        }
        None => (
            InhomogeneityCoeffs {
                a1: table.real_or(s, "a1", 0.0)?,
                b1: table.real_or(s, "b1", 0.0)?,
                c1: table.real_or(s, "c1", 0.0)?,
                a2: table.real_or(s, "a2", 0.0)?,
                b2: table.real_or(s, "b2", 0.0)?,
                c2: table.real_or(s, "c2", 0.0)?,
            },
            None,
        ),
    };
    let dt = table.positive(s, "dt", Some(DEFAULT_DT))?;
    if dt > grid.dt_limit() {
        return Err(ConfigError::Invalid(format!("dt = {dt} exceeds the diffusion limit {}", grid.dt_limit())));
    }
    let conjugates = table.integer(s, "conjugates", 1)?;
    if !(1..=4).contains(&conjugates) {
        return Err(ConfigError::Invalid(format!("conjugates must be 1 to 4, got {conjugates}")));
    }
    let settle_time = table.real_or(s, "settle_time", 200.0)?;
    if settle_time < 0.0 {
        return Err(ConfigError::Invalid("settle_time must be non-negative".into()));
    }
    Ok(PdeSettings {
        grid,
        coeffs,
        coeff_name,
        dt,
        t_end: table.positive(s, "t_end", None)?,
        sample_every: table.integer(s, "sample_every", 10)?.max(1),
        settle_time,
        transient_fraction: table.fraction(s, "transient_fraction", 0.5)?,
        threshold: table.positive(s, "threshold", Some(0.05))?,
        spawn: table.pair(s, "spawn")?.unwrap_or(Vec2::ZERO),
        conjugates,
        extra_spawns: table.pairs(s, "extra_spawns")?,
    })
}

/// Parse configuration text. Relative `tips` paths are resolved against `base`.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<ExperimentConfig, ConfigError> {
    let table = parse_table(text)?;
    let mode_entry = table.get("", "mode").ok_or_else(|| ConfigError::Missing("mode".into()))?;
    let mode = Mode::parse(&mode_entry.value).ok_or_else(|| {
        Table::invalid(mode_entry, format!("unknown mode `{}` (ode, average, predict, pde, analyze)", mode_entry.value))
    })?;
    let preset = table.get("", "preset").map(|e| e.value.clone());

    let system = if mode.uses_system() || table.has_section("system") {
        Some(parse_system(&table)?)
    } else {
        None
    };
    if !mode.uses_system() && table.has_section("spec") && system.is_none() {
        return Err(ConfigError::Invalid("[spec] needs a [system] section".into()));
    }
    let ode = if mode == Mode::Ode || table.has_section("integration") {
        Some(parse_ode(&table)?)
    } else {
        None
    };
    let pde = if mode == Mode::Pde || table.has_section("pde") {
        Some(parse_pde(&table)?)
    } else {
        None
    };
    let analyze = if mode == Mode::Analyze || table.has_section("analyze") {
        let e = table.get("analyze", "tips").ok_or_else(|| ConfigError::Missing("[analyze] tips".into()))?;
        let mut tips = PathBuf::from(&e.value);
        if let (Some(b), true) = (base, tips.is_relative()) {
            tips = b.join(tips);
        }
        Some(AnalyzeSettings {
            tips,
            transient_fraction: table.fraction("analyze", "transient_fraction", 0.5)?,
            threshold: table.positive("analyze", "threshold", Some(0.05))?,
        })
    } else {
        None
    };
    let prefix = table
        .get("output", "prefix")
        .map(|e| e.value.clone())
        .or_else(|| preset.clone())
        .unwrap_or_else(|| mode.name().to_string());
    if prefix.contains(['/', '\\']) {
        return Err(ConfigError::Invalid(format!("output prefix `{prefix}` must be a bare name")));
    }
    Ok(ExperimentConfig { mode, preset, system, ode, pde, analyze, prefix })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text, path.parent())
}
