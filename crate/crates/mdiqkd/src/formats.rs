//! On-disk formats: observed statistics (JSON), key-rate reports (JSON) and curves (CSV).

use std::collections::BTreeMap;
use std::io::Write;

use mdiqkd_core::{
    ChannelParams, KeyRateResult, ObservedStats, PairSource, RateMethod, SimulationMode,
    SourceSpec, SourceStats,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::PolicyConfig;
use crate::CliError;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance stamped on every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub config_digest: String,
}

impl Meta {
    pub fn new(config_digest: String) -> Self {
        Meta {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_digest,
        }
    }
}

/// Writes observed statistics; counts are integers in sampled mode.
pub fn stats_to_json(stats: &ObservedStats, meta: &Meta) -> Value {
    let mut sources = serde_json::Map::new();
    for (source, s) in &stats.sources {
        let record = match stats.mode {
            SimulationMode::Sampled => {
                json!({"N": s.pulses, "k": s.detections as u64, "k_err": s.errors as u64})
            }
            SimulationMode::Expected => {
                json!({"N": s.pulses, "k": s.detections, "k_err": s.errors})
            }
        };
        sources.insert(source.label().to_string(), record);
    }
    json!({"meta": meta, "mode": stats.mode, "sources": sources})
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceRecord {
    #[serde(rename = "N")]
    n: f64,
    k: f64,
    k_err: f64,
}

#[derive(Debug, Deserialize)]
struct StatsFile {
    #[serde(default)]
    mode: SimulationMode,
    sources: BTreeMap<String, SourceRecord>,
}

/// Reads observed statistics, reporting every malformed entry.
pub fn stats_from_json(text: &str) -> Result<ObservedStats, CliError> {
    let file: StatsFile = serde_json::from_str(text)
        .map_err(|e| CliError::validation(format!("invalid stats file: {e}")))?;
    let mut problems = Vec::new();
    let mut sources = BTreeMap::new();
    for (label, r) in &file.sources {
        let Some(source) = PairSource::from_label(label) else {
            problems.push(format!("unknown pair source '{label}'"));
            continue;
        };
        if !(r.n >= 1.0 && r.n.fract() == 0.0) {
            problems.push(format!("{label}: N must be a positive integer"));
            continue;
        }
        if file.mode == SimulationMode::Sampled && (r.k.fract() != 0.0 || r.k_err.fract() != 0.0) {
            problems.push(format!("{label}: sampled counts must be integers"));
        }
        sources.insert(
            source,
            SourceStats {
                pulses: r.n as u64,
                detections: r.k,
                errors: r.k_err,
            },
        );
    }
    let stats = ObservedStats {
        mode: file.mode,
        sources,
    };
    if let Err(e) = stats.validate() {
        problems.push(e.to_string());
    }
    if problems.is_empty() {
        Ok(stats)
    } else {
        Err(CliError::Validation(problems))
    }
}

/// One analysed configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub distance_km: f64,
    pub n_total: u64,
    pub method: RateMethod,
    pub spec: SourceSpec,
    pub device: ChannelParams,
    pub policy: PolicyConfig,
    pub bits_per_second: f64,
    pub result: KeyRateResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub meta: Meta,
    pub reports: Vec<RateReport>,
}

/// One row of a curve file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub distance_km: f64,
    pub n_total: u64,
    pub method: RateMethod,
    pub rate_per_pair: f64,
    pub bps: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub mu_z: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
    pub h_star: Option<f64>,
    pub s11: f64,
    pub e11: f64,
    pub ledger_total: f64,
    pub config_digest: String,
    pub tool_version: String,
}

impl CurveRow {
    pub fn from_report(r: &RateReport, meta: &Meta) -> Self {
        CurveRow {
            distance_km: r.distance_km,
            n_total: r.n_total,
            method: r.method,
            rate_per_pair: r.result.rate_per_pair,
            bps: r.bits_per_second,
            mu_x: r.spec.mu_x,
            mu_y: r.spec.mu_y,
            mu_z: r.spec.mu_z,
            p_x: r.spec.p_x,
            p_y: r.spec.p_y,
            p_z: r.spec.p_z,
            h_star: r.result.h_star,
            s11: r.result.s11,
            e11: r.result.e11,
            ledger_total: r.result.ledger_total,
            config_digest: meta.config_digest.clone(),
            tool_version: format!("{} {}", meta.tool, meta.version),
        }
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[CurveRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn read_csv(text: &str) -> Result<Vec<CurveRow>, CliError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::validation(format!("invalid curve file: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdiqkd_core::{simulate_observed, DeviceLine};

    fn spec() -> SourceSpec {
        SourceSpec::new(0.071, 0.212, 0.280, 0.357, 0.121, 0.479)
    }

    #[test]
    fn stats_round_trip_in_both_modes() {
        let p = ChannelParams::line(DeviceLine::A, 40.0);
        for mode in [SimulationMode::Expected, SimulationMode::Sampled] {
            let stats = simulate_observed(&spec(), &p, 10_000_000_000, mode, 7).unwrap();
            let text = stats_to_json(&stats, &Meta::new("d".into())).to_string();
            let back = stats_from_json(&text).unwrap();
            assert_eq!(back, stats);
            assert_eq!(back.sources.len(), 8);
        }
    }

    #[test]
    fn sampled_counts_are_written_as_integers() {
        let p = ChannelParams::line(DeviceLine::A, 40.0);
        let stats =
            simulate_observed(&spec(), &p, 1_000_000_000, SimulationMode::Sampled, 1).unwrap();
        let v = stats_to_json(&stats, &Meta::new("d".into()));
        assert!(v["sources"]["xx"]["k"].is_u64());
    }

    #[test]
    fn malformed_stats_list_every_problem() {
        let text = r#"{"sources":{"qq":{"N":1,"k":0,"k_err":0},"xx":{"N":0.5,"k":1,"k_err":0}}}"#;
        match stats_from_json(text) {
            Err(CliError::Validation(p)) => assert!(p.len() >= 2, "{p:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
