//! Layered run configuration: preset, then TOML file, then `--set` overrides.

use std::path::{Path, PathBuf};

use acfc_core::converter::{ConverterParams, SteadyStateOptions};
use acfc_core::transformer::{table1_preset, TransformerParams};
use serde_json::{Map, Value};
use toml::Table;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Coreless transformer equivalent circuit.
    Table1,
    /// 40 V, 2 MHz converter prototype.
    Prototype,
    /// Prototype with device and winding losses.
    PrototypeLossy,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "table1" => Ok(Preset::Table1),
            "prototype" => Ok(Preset::Prototype),
            "prototype-lossy" | "prototype_lossy" => Ok(Preset::PrototypeLossy),
            other => Err(CliError::Config(format!(
                "unknown preset `{other}` (expected table1, prototype or prototype-lossy)"
            ))),
        }
    }

    fn converter(self) -> ConverterParams {
        match self {
            Preset::PrototypeLossy => ConverterParams::prototype_lossy(),
            Preset::Table1 | Preset::Prototype => ConverterParams::prototype(),
        }
    }

    fn transformer(self) -> TransformerParams {
        table1_preset()
    }
}

/// The section a bare `--set key=value` lands in first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primary {
    Converter,
    Transformer,
}

const SECTIONS: [&str; 6] = [
    "converter",
    "transformer",
    "simulation",
    "sweep",
    "bode",
    "output",
];

const SIMULATION_KEYS: [&str; 5] = [
    "tolerance",
    "max_cycles",
    "warmup_cycles",
    "accelerate",
    "max_step",
];
const SWEEP_KEYS: [&str; 6] = ["param", "values", "from", "to", "points", "spacing"];
const BODE_KEYS: [&str; 4] = ["from", "to", "ppd", "load_ohms"];
const OUTPUT_KEYS: [&str; 1] = ["dir"];

fn field_names<T: serde::Serialize>(v: &T) -> Vec<String> {
    match serde_json::to_value(v) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn section_keys(section: &str) -> Vec<String> {
    match section {
        "converter" => field_names(&ConverterParams::prototype()),
        "transformer" => field_names(&table1_preset()),
        "simulation" => SIMULATION_KEYS.iter().map(|s| s.to_string()).collect(),
        "sweep" => SWEEP_KEYS.iter().map(|s| s.to_string()).collect(),
        "bode" => BODE_KEYS.iter().map(|s| s.to_string()).collect(),
        "output" => OUTPUT_KEYS.iter().map(|s| s.to_string()).collect(),
        _ => Vec::new(),
    }
}

/// Merged configuration before it is bound to a command.
#[derive(Debug, Clone)]
pub struct Settings {
    preset: Option<Preset>,
    table: Table,
}

fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<f64>() {
        return toml::Value::Float(v);
    }
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(t) = format!("v = {raw}").parse::<Table>() {
        if let Some(v) = t.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

fn section_mut<'a>(table: &'a mut Table, name: &str) -> Result<&'a mut Table, CliError> {
    let entry = table
        .entry(name.to_string())
        .or_insert_with(|| toml::Value::Table(Table::new()));
    entry
        .as_table_mut()
        .ok_or_else(|| CliError::Config(format!("`{name}` must be a table")))
}

/// Route a bare key to its section: the primary one if it knows the key,
/// otherwise the only section that does.
fn route(key: &str, primary: Primary) -> Result<String, CliError> {
    let first = match primary {
        Primary::Converter => "converter",
        Primary::Transformer => "transformer",
    };
    if section_keys(first).iter().any(|k| k == key) {
        return Ok(first.to_string());
    }
    let owners: Vec<&str> = SECTIONS
        .iter()
        .copied()
        .filter(|s| *s != first && section_keys(s).iter().any(|k| k == key))
        .collect();
    match owners.as_slice() {
        [one] => Ok(one.to_string()),
        [] => Err(CliError::Config(format!("unknown parameter `{key}`"))),
        many => Err(CliError::Config(format!(
            "parameter `{key}` is ambiguous; qualify it as one of {}",
            many.iter()
                .map(|s| format!("`{s}.{key}`"))
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

impl Settings {
    pub fn load(
        file: Option<&Path>,
        preset: Option<&str>,
        sets: &[String],
        primary: Primary,
    ) -> Result<Self, CliError> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => Table::new(),
        };

        let file_preset = match table.remove("preset") {
            Some(toml::Value::String(s)) => Some(s),
            Some(_) => return Err(CliError::Config("`preset` must be a string".into())),
            None => None,
        };
        let preset = preset
            .map(str::to_string)
            .or(file_preset)
            .map(|s| Preset::parse(&s))
            .transpose()?;

        for (name, value) in &table {
            if !SECTIONS.contains(&name.as_str()) {
                return Err(CliError::Config(format!("unknown section `{name}`")));
            }
            if !value.is_table() {
                return Err(CliError::Config(format!("`{name}` must be a table")));
            }
        }

        for s in sets {
            let (key, raw) = s.split_once('=').ok_or_else(|| {
                CliError::Config(format!("override `{s}` is not of the form key=value"))
            })?;
            let key = key.trim();
            let (section, field) = match key.split_once('.') {
                Some((sec, f)) => (sec.to_string(), f.to_string()),
                None => (route(key, primary)?, key.to_string()),
            };
            if !SECTIONS.contains(&section.as_str()) {
                return Err(CliError::Config(format!("unknown section `{section}`")));
            }
            section_mut(&mut table, &section)?.insert(field, parse_value(raw));
        }

        for name in SECTIONS {
            if let Some(sec) = table.get(name).and_then(|v| v.as_table()) {
                let known = section_keys(name);
                if let Some(bad) = sec.keys().find(|k| !known.contains(k)) {
                    return Err(CliError::Config(format!("unknown parameter `{name}.{bad}`")));
                }
            }
        }
        Ok(Self { preset, table })
    }

    fn section(&self, name: &str) -> Option<&Table> {
        self.table.get(name).and_then(|v| v.as_table())
    }

    fn get(&self, section: &str, key: &str) -> Option<&toml::Value> {
        self.section(section).and_then(|t| t.get(key))
    }

    pub fn number(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        self.get(section, key)
            .map(|v| as_f64(v, &format!("{section}.{key}")))
            .transpose()
    }

    pub fn count(&self, section: &str, key: &str) -> Result<Option<usize>, CliError> {
        match self.number(section, key)? {
            None => Ok(None),
            Some(v) if v >= 0.0 && v.fract() == 0.0 && v < usize::MAX as f64 => {
                Ok(Some(v as usize))
            }
            Some(v) => Err(CliError::Config(format!(
                "`{section}.{key}` must be a non-negative integer, got {v}"
            ))),
        }
    }

    pub fn string(&self, section: &str, key: &str) -> Result<Option<String>, CliError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(CliError::Config(format!(
                "`{section}.{key}` must be a string"
            ))),
        }
    }

    pub fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let name = format!("{section}.{key}");
        match self.get(section, key) {
            None => Ok(None),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| as_f64(v, &name))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(toml::Value::String(s)) => parse_list(s, &name).map(Some),
            Some(v) => Ok(Some(vec![as_f64(v, &name)?])),
        }
    }

    fn bind<T>(&self, section: &str, base: Option<T>) -> Result<T, CliError>
    where
        T: serde::Serialize + serde::de::DeserializeOwned,
    {
        let mut obj = match base.map(|b| serde_json::to_value(b)) {
            Some(Ok(Value::Object(m))) => m,
            _ => Map::new(),
        };
        if let Some(sec) = self.section(section) {
            for (k, v) in sec {
                let x = as_f64(v, &format!("{section}.{k}"))?;
                obj.insert(k.clone(), serde_json::json!(x));
            }
        }
        for k in section_keys(section) {
            if !obj.contains_key(&k) {
                return Err(CliError::Config(format!(
                    "missing required parameter `{section}.{k}` (give a preset or set it explicitly)"
                )));
            }
        }
        serde_json::from_value(Value::Object(obj))
            .map_err(|e| CliError::Config(format!("{section}: {e}")))
    }

    pub fn converter(&self) -> Result<ConverterParams, CliError> {
        let p: ConverterParams = self.bind("converter", self.preset.map(Preset::converter))?;
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn transformer(&self) -> Result<TransformerParams, CliError> {
        let p: TransformerParams = self.bind("transformer", self.preset.map(Preset::transformer))?;
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn steady_state_options(&self) -> Result<SteadyStateOptions, CliError> {
        let mut o = SteadyStateOptions::default();
        if let Some(t) = self.number("simulation", "tolerance")? {
            if !(t > 0.0) {
                return Err(CliError::Config(format!(
                    "`simulation.tolerance` must be positive, got {t}"
                )));
            }
            o.tolerance = t;
        }
        if let Some(n) = self.count("simulation", "max_cycles")? {
            if n == 0 {
                return Err(CliError::Config(
                    "`simulation.max_cycles` must be at least 1".into(),
                ));
            }
            o.max_cycles = n;
        }
        if let Some(n) = self.count("simulation", "warmup_cycles")? {
            o.warmup_cycles = n;
        }
        match self.get("simulation", "accelerate") {
            None => {}
            Some(toml::Value::Boolean(b)) => o.accelerate = *b,
            Some(_) => {
                return Err(CliError::Config(
                    "`simulation.accelerate` must be true or false".into(),
                ))
            }
        }
        if let Some(h) = self.number("simulation", "max_step")? {
            if !(h > 0.0) {
                return Err(CliError::Config(format!(
                    "`simulation.max_step` must be positive, got {h}"
                )));
            }
            o.step.max_step = Some(h);
        }
        Ok(o)
    }

    /// Output directory: config value, else `fallback`.
    pub fn out_dir(&self, fallback: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        Ok(self
            .string("output", "dir")?
            .map(PathBuf::from)
            .or(fallback))
    }
}

fn as_f64(v: &toml::Value, name: &str) -> Result<f64, CliError> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        toml::Value::String(s) => s
            .trim()
            .parse::<f64>()
            .map_err(|_| CliError::Config(format!("`{name}` must be a number, got `{s}`"))),
        other => Err(CliError::Config(format!(
            "`{name}` must be a number, got {other}"
        ))),
    }
}

pub fn parse_list(s: &str, name: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Config(format!("`{name}` entry `{t}` is not a number")))
        })
        .collect()
}

/// Converter copy with one named field replaced.
pub fn with_field(p: &ConverterParams, field: &str, value: f64) -> Result<ConverterParams, CliError> {
    let mut obj = match serde_json::to_value(p) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("converter parameters serialize to an object"),
    };
    if !obj.contains_key(field) {
        return Err(CliError::Config(format!(
            "unknown sweep parameter `{field}`"
        )));
    }
    obj.insert(field.to_string(), serde_json::json!(value));
    serde_json::from_value(Value::Object(obj)).map_err(|e| CliError::Config(e.to_string()))
}
