//! Run configuration: JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use mdiqkd_core::optimizer::SearchConfig;
use mdiqkd_core::{
    validate_spec, ChannelParams, DeviceLine, FluctuationPolicy, RateMethod, RateSettings,
    SimulationMode, SourceSpec,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Device constants: a named line or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceConfig {
    Line(DeviceLine),
    Custom(CustomDevice),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomDevice {
    pub p_d: f64,
    pub eta_d: f64,
    pub e_d: f64,
    #[serde(default = "default_e0")]
    pub e0: f64,
    #[serde(default = "default_f")]
    pub f: f64,
    #[serde(default = "default_alpha")]
    pub alpha_db_per_km: f64,
}

fn default_e0() -> f64 {
    0.5
}

fn default_f() -> f64 {
    1.16
}

fn default_alpha() -> f64 {
    ChannelParams::DEFAULT_ALPHA_DB_PER_KM
}

impl DeviceConfig {
    pub fn at(&self, distance_km: f64) -> ChannelParams {
        match *self {
            DeviceConfig::Line(line) => ChannelParams::line(line, distance_km),
            DeviceConfig::Custom(c) => ChannelParams {
                p_d: c.p_d,
                eta_d: c.eta_d,
                e_d: c.e_d,
                e0: c.e0,
                f: c.f,
                alpha_db_per_km: c.alpha_db_per_km,
                distance_km,
            },
        }
    }
}

/// Fluctuation policy as written in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicyConfig {
    Normal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
    },
    Chernoff {
        epsilon: f64,
    },
    Exact,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig::Normal {
            gamma: Some(5.3),
            epsilon: Some(1e-7),
        }
    }
}

impl PolicyConfig {
    /// Parses `normal:GAMMA`, `chernoff:EPS` or `exact`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let (kind, value) = match text.split_once(':') {
            Some((k, v)) => (k, Some(v)),
            None => (text, None),
        };
        let number = |v: Option<&str>| -> Result<f64, String> {
            let v = v.ok_or_else(|| format!("policy '{text}' needs a value"))?;
            v.parse::<f64>()
                .map_err(|_| format!("policy value '{v}' is not a number"))
        };
        match kind {
            "normal" => Ok(PolicyConfig::Normal {
                gamma: Some(number(value)?),
                epsilon: None,
            }),
            "chernoff" => Ok(PolicyConfig::Chernoff {
                epsilon: number(value)?,
            }),
            "exact" if value.is_none() => Ok(PolicyConfig::Exact),
            _ => Err(format!(
                "unknown policy '{text}' (expected normal:GAMMA, chernoff:EPS or exact)"
            )),
        }
    }

    pub fn to_policy(self) -> mdiqkd_core::Result<FluctuationPolicy> {
        match self {
            PolicyConfig::Normal {
                gamma: Some(g),
                epsilon: Some(e),
            } => FluctuationPolicy::normal_with_epsilon(g, e),
            PolicyConfig::Normal {
                gamma: Some(g),
                epsilon: None,
            } => FluctuationPolicy::normal(g),
            PolicyConfig::Normal {
                gamma: None,
                epsilon: Some(e),
            } => FluctuationPolicy::normal_for_epsilon(e),
            PolicyConfig::Normal {
                gamma: None,
                epsilon: None,
            } => Ok(FluctuationPolicy::reference_normal()),
            PolicyConfig::Chernoff { epsilon } => FluctuationPolicy::chernoff(epsilon),
            PolicyConfig::Exact => Ok(FluctuationPolicy::Exact),
        }
    }
}

/// Either explicit source parameters or the string `"optimize"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceChoice {
    Explicit(SourceSpec),
    Directive(String),
}

impl Default for SourceChoice {
    fn default() -> Self {
        SourceChoice::Directive("optimize".into())
    }
}

impl SourceChoice {
    pub fn explicit(&self) -> Option<&SourceSpec> {
        match self {
            SourceChoice::Explicit(s) => Some(s),
            SourceChoice::Directive(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceScan {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl DistanceScan {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.to - self.from) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.from + self.step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceConfig,
    pub source: SourceChoice,
    pub policy: PolicyConfig,
    /// Total pulse pairs; a float so that `1e10` is accepted.
    pub n_total: f64,
    pub distance_km: f64,
    pub scan: Option<DistanceScan>,
    pub nt_list: Vec<f64>,
    pub methods: Vec<RateMethod>,
    pub mode: SimulationMode,
    pub repetition_rate_hz: f64,
    pub kappa_s: f64,
    pub kappa_e: f64,
    pub grid_points: usize,
    pub search: SearchConfig,
    pub seed: u64,
    pub stats: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            device: DeviceConfig::Line(DeviceLine::A),
            source: SourceChoice::default(),
            policy: PolicyConfig::default(),
            n_total: 1e10,
            distance_km: 0.0,
            scan: None,
            nt_list: Vec::new(),
            methods: vec![RateMethod::ThisWork],
            mode: SimulationMode::Expected,
            repetition_rate_hz: 1e9,
            kappa_s: 1.0,
            kappa_e: 1.0,
            grid_points: 201,
            search: SearchConfig::default(),
            seed: 0,
            stats: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("invalid config {}: {e}", path.display())))
    }

    /// Every problem with the configuration, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let SourceChoice::Directive(d) = &self.source {
            if d != "optimize" {
                out.push(format!(
                    "source must be a parameter object or \"optimize\", got \"{d}\""
                ));
            }
        }
        if let Some(spec) = self.source.explicit() {
            match validate_spec(spec) {
                Err(mdiqkd_core::Error::InvalidSpec(list)) => out.extend(list),
                Err(e) => out.push(e.to_string()),
                Ok(_) => {}
            }
        }
        if let Err(e) = self.device.at(self.distance_km).validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.policy.to_policy() {
            out.push(e.to_string());
        }
        if let Err(e) = n_total_from(self.n_total) {
            out.push(e);
        }
        for &nt in &self.nt_list {
            if let Err(e) = n_total_from(nt) {
                out.push(e);
            }
        }
        if let Some(scan) = self.scan {
            if !(scan.step > 0.0 && scan.from >= 0.0 && scan.from <= scan.to) {
                out.push("scan needs 0 <= from <= to and step > 0".into());
            }
        }
        if self.methods.is_empty() {
            out.push("at least one method is required".into());
        }
        if !(self.repetition_rate_hz > 0.0) {
            out.push("repetition_rate_hz must be positive".into());
        }
        if let Err(e) = self.rate_settings().validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.search.validate() {
            out.push(e.to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(problems))
        }
    }

    pub fn rate_settings(&self) -> RateSettings {
        RateSettings {
            kappa_s: self.kappa_s,
            kappa_e: self.kappa_e,
            grid_points: self.grid_points,
            refine: true,
        }
    }

    pub fn fluctuation(&self) -> Result<FluctuationPolicy, CliError> {
        self.policy.to_policy().map_err(CliError::from)
    }

    pub fn pulses(&self) -> Result<u64, CliError> {
        n_total_from(self.n_total).map_err(CliError::validation)
    }

    /// SHA-256 of the canonical JSON form, embedded in every output.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configuration serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn n_total_from(value: f64) -> Result<u64, String> {
    if value >= 1.0 && value.is_finite() && value.fract() == 0.0 && value < 1.8e19 {
        Ok(value as u64)
    } else {
        Err(format!("n_total must be a positive integer, got {value}"))
    }
}
