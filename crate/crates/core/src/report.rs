//! Machine-readable verification report.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SuiteConfig;
use crate::poisson::Conventions;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub suite: String,
    pub check_id: String,
    /// Short statement of the identity being certified.
    pub anchor: String,
    /// Worst residual over all samples; `None` when the computation failed.
    pub max_residual: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Extra data attached to failures (for example a discrepancy tensor).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub environment: Environment,
    pub conventions: Conventions,
    pub records: Vec<CheckRecord>,
    pub notes: Vec<String>,
    pub pass: bool,
    pub timestamp: u64,
}

pub fn config_hash(cfg: &SuiteConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical_json().as_bytes()))
}

impl Report {
    pub fn new(cfg: &SuiteConfig, conventions: Conventions, records: Vec<CheckRecord>, notes: Vec<String>) -> Self {
        let pass = records.iter().all(|r| r.pass);
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            schema_version: SCHEMA_VERSION,
            environment: Environment {
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: cfg.seeds[0],
                seeds: cfg.seeds.clone(),
                config_hash: config_hash(cfg),
            },
            conventions,
            records,
            notes,
            pass,
            timestamp,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.pass)
    }
}

/// Structural validation of a serialized report.
pub fn validate_report_json(v: &serde_json::Value) -> Result<(), String> {
    let obj = v.as_object().ok_or("report is not an object")?;
    for key in ["schema_version", "environment", "conventions", "records", "notes", "pass", "timestamp"] {
        if !obj.contains_key(key) {
            return Err(format!("missing key `{key}`"));
        }
    }
    if obj["schema_version"].as_u64() != Some(SCHEMA_VERSION as u64) {
        return Err("unexpected schema_version".into());
    }
    let env = obj["environment"].as_object().ok_or("environment is not an object")?;
    for key in ["version", "seed", "seeds", "config_hash"] {
        if !env.contains_key(key) {
            return Err(format!("environment is missing `{key}`"));
        }
    }
    let conv = obj["conventions"].as_object().ok_or("conventions is not an object")?;
    if !conv.contains_key("bracket_sign") || !conv.contains_key("r_index_reading") {
        return Err("conventions block incomplete".into());
    }
    let records = obj["records"].as_array().ok_or("records is not an array")?;
    let mut all_pass = true;
    for r in records {
        let r = r.as_object().ok_or("record is not an object")?;
        for key in ["suite", "check_id", "anchor", "tolerance"] {
            if !r.contains_key(key) {
                return Err(format!("record is missing `{key}`"));
            }
        }
        if !(r.get("max_residual").is_some_and(|m| m.is_null() || m.is_f64() || m.is_u64())) {
            return Err("record max_residual must be a number or null".into());
        }
        all_pass &= r.get("pass").and_then(|p| p.as_bool()).ok_or("record pass must be boolean")?;
    }
    if obj["pass"].as_bool() != Some(all_pass) {
        return Err("overall pass disagrees with records".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(pass: bool) -> CheckRecord {
        CheckRecord {
            suite: "theta".into(),
            check_id: "theta_oddness".into(),
            anchor: "odd".into(),
            max_residual: Some(0.0),
            tolerance: 1e-12,
            pass,
            note: None,
            detail: None,
        }
    }

    #[test]
    fn overall_pass_is_conjunction() {
        let cfg = SuiteConfig::default();
        assert!(Report::new(&cfg, Conventions::default(), vec![record(true)], vec![]).pass);
        assert!(!Report::new(&cfg, Conventions::default(), vec![record(true), record(false)], vec![]).pass);
    }

    #[test]
    fn serialized_report_validates() {
        let cfg = SuiteConfig::default();
        let r = Report::new(&cfg, Conventions::default(), vec![record(true)], vec!["n".into()]);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        validate_report_json(&v).unwrap();
        let mut broken = v.clone();
        broken["pass"] = serde_json::Value::Bool(false);
        assert!(validate_report_json(&broken).is_err());
    }

    #[test]
    fn hash_tracks_config() {
        let a = SuiteConfig::default();
        let b = SuiteConfig { n: 3, ..Default::default() };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
