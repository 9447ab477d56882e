//! Run configuration: defaults, then a `key=value` file, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use loadnet_core::community::ResolutionMode;
use loadnet_core::directory::{GammaGrid, Intervals};
use loadnet_core::dtw::{CostMode, DtwParams};
use loadnet_core::fmt::fmt_f64;
use loadnet_core::netbuild::{EdgeRule, GraphConfig};
use loadnet_core::validity::{IndexModes, SdbwMode, SfMode};

use crate::error::CliError;

/// Every configuration key with its default. Flags use the same names with
/// `-` in place of `_`.
pub const KEYS: &[(&str, &str)] = &[
    ("input", ""),
    ("out", "out"),
    ("window", "4"),
    ("cost", "absolute"),
    ("lambda", "0.5"),
    ("edge_rule", "union"),
    ("gamma", "1.0"),
    ("gamma_mode", "literal"),
    ("gamma_start", "1.0"),
    ("gamma_end", "0.7"),
    ("gamma_step", "0.01"),
    ("intervals", "1,10,100"),
    ("sf_mode", "corrected"),
    ("sdbw_mode", "corrected"),
    ("method", "both"),
    ("force_dba", "false"),
    ("k", ""),
    ("baseline_init", "greedy"),
    ("baseline_seed", "0"),
    ("synth_curves_per_template", "100"),
    ("synth_noise", "0.1"),
    ("synth_days_per_household", "10"),
    ("synth_seed", "0"),
    ("threads", "0"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cicd,
    Baseline,
    Both,
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cicd" => Ok(Method::Cicd),
            "baseline" => Ok(Method::Baseline),
            "both" => Ok(Method::Both),
            other => Err(format!("unknown method {other:?} (cicd|baseline|both)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineInit {
    Greedy,
    Random,
}

impl FromStr for BaselineInit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "greedy" => Ok(BaselineInit::Greedy),
            "random" => Ok(BaselineInit::Random),
            other => Err(format!("unknown baseline init {other:?} (greedy|random)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Resolved raw values, one per key.
    raw: BTreeMap<String, String>,
    pub input: Vec<PathBuf>,
    pub out: PathBuf,
    pub window: usize,
    pub cost: CostMode,
    pub lambda: f64,
    pub edge_rule: EdgeRule,
    pub gamma: f64,
    pub gamma_mode: ResolutionMode,
    pub grid: GammaGrid,
    pub intervals: Intervals,
    pub sf_mode: SfMode,
    pub sdbw_mode: SdbwMode,
    pub method: Method,
    pub force_dba: bool,
    pub k: Option<usize>,
    pub baseline_init: BaselineInit,
    pub baseline_seed: u64,
    pub synth_curves_per_template: usize,
    pub synth_noise: f64,
    pub synth_days_per_household: usize,
    pub synth_seed: u64,
    pub threads: usize,
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('-', "_")
}

/// Parse a flat `key=value` file; `#` starts a comment line.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("{}:{}: expected key=value", path.display(), n + 1)));
        };
        let key = normalize_key(k);
        if !KEYS.iter().any(|(name, _)| *name == key) {
            return Err(CliError::Usage(format!("{}:{}: unknown key {key:?}", path.display(), n + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn parse<T: FromStr>(raw: &BTreeMap<String, String>, key: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    let v = &raw[key];
    v.parse()
        .map_err(|e| CliError::Usage(format!("invalid value {v:?} for {key}: {e}")))
}

fn finite(key: &str, v: f64, ok: bool) -> Result<f64, CliError> {
    if v.is_finite() && ok {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{key} out of range: {v}")))
    }
}

impl RunConfig {
    /// Layer `file` over the defaults and `flags` over both.
    pub fn resolve(
        file: BTreeMap<String, String>,
        flags: BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let mut raw: BTreeMap<String, String> =
            KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        raw.extend(file);
        raw.extend(flags);

        let input = raw["input"]
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| PathBuf::from(s.trim()))
            .collect();
        let window: usize = parse(&raw, "window")?;
        if window == 0 {
            return Err(CliError::Usage("window must be at least 1".into()));
        }
        let lambda: f64 = parse(&raw, "lambda")?;
        let gamma: f64 = parse(&raw, "gamma")?;
        let grid = GammaGrid {
            start: parse(&raw, "gamma_start")?,
            end: parse(&raw, "gamma_end")?,
            step: parse(&raw, "gamma_step")?,
        };
        grid.values().map_err(|e| CliError::Usage(e.to_string()))?;
        let k = match raw["k"].as_str() {
            "" => None,
            _ => Some(parse::<usize>(&raw, "k")?),
        };
        let synth_noise: f64 = parse(&raw, "synth_noise")?;

        Ok(Self {
            input,
            out: PathBuf::from(&raw["out"]),
            window,
            cost: parse(&raw, "cost")?,
            lambda: finite("lambda", lambda, lambda > 0.0)?,
            edge_rule: parse(&raw, "edge_rule")?,
            gamma: finite("gamma", gamma, gamma >= 0.0)?,
            gamma_mode: parse(&raw, "gamma_mode")?,
            grid,
            intervals: parse(&raw, "intervals")?,
            sf_mode: parse(&raw, "sf_mode")?,
            sdbw_mode: parse(&raw, "sdbw_mode")?,
            method: parse(&raw, "method")?,
            force_dba: parse(&raw, "force_dba")?,
            k,
            baseline_init: parse(&raw, "baseline_init")?,
            baseline_seed: parse(&raw, "baseline_seed")?,
            synth_curves_per_template: parse(&raw, "synth_curves_per_template")?,
            synth_noise: finite("synth_noise", synth_noise, synth_noise >= 0.0)?,
            synth_days_per_household: parse(&raw, "synth_days_per_household")?,
            synth_seed: parse(&raw, "synth_seed")?,
            threads: parse(&raw, "threads")?,
            raw,
        })
    }

    pub fn dtw(&self) -> DtwParams {
        DtwParams::new(self.window, self.cost)
    }

    pub fn graph(&self) -> GraphConfig {
        GraphConfig {
            lambda: self.lambda,
            rule: self.edge_rule,
        }
    }

    pub fn index_modes(&self) -> IndexModes {
        IndexModes {
            sf: self.sf_mode,
            sdbw: self.sdbw_mode,
        }
    }

    /// The resolved raw value of `key`.
    pub fn raw(&self, key: &str) -> &str {
        &self.raw[key]
    }

    /// Canonical text of `key`, so `0.50` and `0.5` hash alike.
    pub fn canonical(&self, key: &str) -> String {
        match key {
            "window" => self.window.to_string(),
            "cost" => self.cost.to_string(),
            "lambda" => fmt_f64(self.lambda),
            "edge_rule" => self.edge_rule.to_string(),
            "gamma" => fmt_f64(self.gamma),
            "gamma_mode" => self.gamma_mode.to_string(),
            "gamma_start" => fmt_f64(self.grid.start),
            "gamma_end" => fmt_f64(self.grid.end),
            "gamma_step" => fmt_f64(self.grid.step),
            "intervals" => self.intervals.to_string(),
            "sf_mode" => self.sf_mode.to_string(),
            "sdbw_mode" => self.sdbw_mode.to_string(),
            "force_dba" => self.force_dba.to_string(),
            "k" => self.k.map_or_else(String::new, |k| k.to_string()),
            "baseline_init" => self.raw["baseline_init"].clone(),
            "baseline_seed" => self.baseline_seed.to_string(),
            "synth_curves_per_template" => self.synth_curves_per_template.to_string(),
            "synth_noise" => fmt_f64(self.synth_noise),
            "synth_days_per_household" => self.synth_days_per_household.to_string(),
            "synth_seed" => self.synth_seed.to_string(),
            "threads" => self.threads.to_string(),
            other => self.raw[other].clone(),
        }
    }
}
