//! TOML run configuration.
//!
//! Sections: `[model]`, `[signal]`, `[penalty]`, `[grid]`, `[numerics]`,
//! `[simulation]`. Unknown sections or keys are rejected. Any key can be
//! overridden from the environment as `STACKELBERG_<SECTION>_<KEY>`
//! (upper-cased), e.g. `STACKELBERG_MODEL_ALPHA=50`; the value is parsed as a
//! TOML literal, so strings need quotes.

use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{ModelParams, PenaltySpec, SignalParams};
use crate::sim::VolumeBins;

pub const ENV_PREFIX: &str = "STACKELBERG";

const SCHEMA: &[(&str, &[&str])] = &[
    (
        "model",
        &[
            "lambda0", "lambda1", "kappa0", "kappa1", "alpha", "q0", "x0", "x1", "T",
        ],
    ),
    ("signal", &["m0", "beta", "sigma", "M0", "sigmaM"]),
    ("penalty", &["variant", "value", "c0", "c1", "tau"]),
    ("grid", &["n_points"]),
    ("numerics", &["rank", "method", "resolvent_terms"]),
    (
        "simulation",
        &[
            "n_paths",
            "seed",
            "store_paths",
            "checkpoints",
            "bin_minutes",
            "minutes_per_unit",
        ],
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MajorMethod {
    Degenerate,
    Resolvent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericsConfig {
    pub rank: usize,
    pub method: MajorMethod,
    pub resolvent_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSettings {
    pub n_paths: usize,
    pub seed: u64,
    pub store_paths: bool,
    pub checkpoints: Vec<f64>,
    pub bin_minutes: Option<f64>,
    /// Clock minutes per unit of model time, for volume bins.
    pub minutes_per_unit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelParams,
    pub signal: SignalParams,
    pub penalty: PenaltySpec,
    pub n_points: usize,
    pub numerics: NumericsConfig,
    pub simulation: SimulationSettings,
}

impl RunConfig {
    /// Parses `text` and applies overrides from the process environment.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_env(text, |k| std::env::var(k).ok())
    }

    pub fn parse_with_env(text: &str, env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut root: Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
            section: "<file>".into(),
            key: "<syntax>".into(),
            message: e.message().to_string(),
        })?;
        check_schema(&root)?;
        apply_env(&mut root, env)?;

        let model = Section::get(&root, "model")?;
        let model = ModelParams {
            lambda0: model.f64("lambda0")?,
            lambda1: model.f64("lambda1")?,
            kappa0: model.f64("kappa0")?,
            kappa1: model.f64("kappa1")?,
            alpha: model.f64("alpha")?,
            q0: model.f64("q0")?,
            x0: model.f64_or("x0", 0.0)?,
            x1: model.f64_or("x1", 0.0)?,
            horizon: model.f64("T")?,
        };
        model.validate().map_err(|e| reattach("model", e))?;

        let sig = Section::get(&root, "signal")?;
        let signal = SignalParams {
            m0: sig.f64("m0")?,
            beta: sig.f64("beta")?,
            sigma: sig.f64("sigma")?,
            price0: sig.f64("M0")?,
            sigma_m: sig.f64("sigmaM")?,
        };
        signal.validate().map_err(|e| reattach("signal", e))?;

        let pen = Section::get(&root, "penalty")?;
        let variant = pen.str("variant")?;
        let penalty = match variant.as_str() {
            "zero" => PenaltySpec::Zero,
            "constant" => PenaltySpec::Constant {
                value: pen.f64("value")?,
            },
            "periodic" => PenaltySpec::Periodic {
                c0: pen.f64("c0")?,
                c1: pen.f64("c1")?,
                tau: pen.f64("tau")?,
            },
            other => {
                return Err(pen.err(
                    "variant",
                    format!("unknown variant {other:?}; expected zero, constant or periodic"),
                ))
            }
        };
        penalty
            .validate(model.horizon)
            .map_err(|e| reattach("penalty", e))?;

        let grid = Section::get_or_empty(&root, "grid");
        let n_points = grid.usize_or("n_points", 2001)?;
        TimeGrid::new(model.horizon, n_points).map_err(|e| reattach("grid", e))?;

        let num = Section::get_or_empty(&root, "numerics");
        let method = match num.str_or("method", "degenerate")?.as_str() {
            "degenerate" => MajorMethod::Degenerate,
            "resolvent" => MajorMethod::Resolvent,
            other => {
                return Err(num.err(
                    "method",
                    format!("unknown method {other:?}; expected degenerate or resolvent"),
                ))
            }
        };
        if method == MajorMethod::Resolvent && !penalty.is_zero() {
            return Err(num.err(
                "method",
                "the resolvent path requires [penalty] variant = \"zero\"",
            ));
        }
        let numerics = NumericsConfig {
            rank: num.usize_or("rank", 300)?,
            method,
            resolvent_terms: num.usize_or("resolvent_terms", 200)?,
        };
        if numerics.rank == 0 {
            return Err(num.err("rank", "must be at least 1"));
        }

        let sim = Section::get_or_empty(&root, "simulation");
        let simulation = SimulationSettings {
            n_paths: sim.usize_or("n_paths", 1000)?,
            seed: sim.u64_or("seed", 0)?,
            store_paths: sim.bool_or("store_paths", false)?,
            checkpoints: sim.f64_list_or("checkpoints", Vec::new())?,
            bin_minutes: sim.opt_f64("bin_minutes")?,
            minutes_per_unit: sim.f64_or("minutes_per_unit", 60.0)?,
        };
        if simulation.n_paths == 0 {
            return Err(sim.err("n_paths", "must be at least 1"));
        }
        if let Some(&c) = simulation
            .checkpoints
            .iter()
            .find(|&&c| !(0.0..=model.horizon).contains(&c))
        {
            return Err(sim.err(
                "checkpoints",
                format!("checkpoint {c} lies outside [0, {}]", model.horizon),
            ));
        }

        Ok(RunConfig {
            model,
            signal,
            penalty,
            n_points,
            numerics,
            simulation,
        })
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.model.horizon, self.n_points)
    }

    /// Volume bins if `[simulation] bin_minutes` is set.
    pub fn volume_bins(&self, grid: &TimeGrid) -> Result<Option<VolumeBins>> {
        self.simulation
            .bin_minutes
            .map(|m| VolumeBins::new(grid, m, self.simulation.minutes_per_unit))
            .transpose()
            .map_err(|e| match e {
                Error::BinMisalignment(msg) => Error::Config {
                    section: "simulation".into(),
                    key: "bin_minutes".into(),
                    message: msg,
                },
                other => other,
            })
    }
}

fn check_schema(root: &Table) -> Result<()> {
    for (name, value) in root {
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == name) else {
            return Err(Error::Config {
                section: name.clone(),
                key: "*".into(),
                message: "unknown section".into(),
            });
        };
        let Value::Table(t) = value else {
            return Err(Error::Config {
                section: name.clone(),
                key: "*".into(),
                message: "expected a table".into(),
            });
        };
        if let Some(k) = t.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(Error::Config {
                section: name.clone(),
                key: k.clone(),
                message: "unknown key".into(),
            });
        }
    }
    Ok(())
}

fn apply_env(root: &mut Table, env: impl Fn(&str) -> Option<String>) -> Result<()> {
    for (section, keys) in SCHEMA {
        for key in *keys {
            let var = format!(
                "{ENV_PREFIX}_{}_{}",
                section.to_uppercase(),
                key.to_uppercase()
            );
            let Some(raw) = env(&var) else { continue };
            let value = parse_literal(&raw).ok_or_else(|| Error::Config {
                section: section.to_string(),
                key: key.to_string(),
                message: format!("{var}={raw:?} is not a TOML value"),
            })?;
            let entry = root
                .entry(section.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            if let Value::Table(t) = entry {
                t.insert(key.to_string(), value);
            }
        }
    }
    Ok(())
}

fn parse_literal(raw: &str) -> Option<Value> {
    let mut t: Table = format!("v = {raw}").parse().ok()?;
    t.remove("v")
}

/// Parameter validation errors carry the key; attach the section.
fn reattach(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => Error::Config {
            section: section.into(),
            key: name.into(),
            message: reason,
        },
        other => other,
    }
}

struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn get(root: &'a Table, name: &'static str) -> Result<Self> {
        match root.get(name) {
            Some(Value::Table(t)) => Ok(Section {
                name,
                table: Some(t),
            }),
            _ => Err(Error::Config {
                section: name.into(),
                key: "*".into(),
                message: "missing section".into(),
            }),
        }
    }

    fn get_or_empty(root: &'a Table, name: &'static str) -> Self {
        Section {
            name,
            table: root.get(name).and_then(Value::as_table),
        }
    }

    fn err(&self, key: &str, message: impl Into<String>) -> Error {
        Error::Config {
            section: self.name.into(),
            key: key.into(),
            message: message.into(),
        }
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(other) => {
                Err(self.err(key, format!("expected a number, got {}", other.type_str())))
            }
        }
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.opt_f64(key)?
            .ok_or_else(|| self.err(key, "missing key"))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Integer(v)) if *v >= 0 => Ok(*v as u64),
            Some(_) => Err(self.err(key, "expected a non-negative integer")),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        self.u64_or(key, default as u64).map(|v| v as usize)
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(self.err(key, "expected true or false")),
        }
    }

    fn str(&self, key: &str) -> Result<String> {
        match self.raw(key) {
            None => Err(self.err(key, "missing key")),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(self.err(key, "expected a string")),
        }
    }

    fn str_or(&self, key: &str, default: &str) -> Result<String> {
        match self.raw(key) {
            None => Ok(default.to_string()),
            Some(_) => self.str(key),
        }
    }

    fn f64_list_or(&self, key: &str, default: Vec<f64>) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(x) => Ok(*x as f64),
                    _ => Err(self.err(key, "expected an array of numbers")),
                })
                .collect(),
            Some(_) => Err(self.err(key, "expected an array of numbers")),
        }
    }
}
