//! Suite configuration: a flat TOML document with one optional
//! `[tolerances]` table. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::C64;

pub const SUITES: [&str; 7] = ["theta", "lax", "rmatrix", "solver", "yang_baxter", "reduction", "dynamics"];

/// Tolerance keys and their defaults.
pub const DEFAULT_TOLERANCES: [(&str, f64); 20] = [
    ("theta", 1e-12),
    ("theta_derivative", 1e-8),
    ("lax_structure", 1e-8),
    ("residue_sum", 1e-9),
    ("periodicity", 1e-10),
    ("rescale", 1e-12),
    ("rmatrix", 1e-7),
    ("solver", 1e-9),
    ("yang_baxter", 1e-6),
    ("cross_chart", 1e-7),
    ("cross_check", 1e-6),
    ("derivative_exact", 1e-9),
    ("derivative_laurent", 1e-7),
    ("involution", 1e-6),
    ("gauge", 1e-9),
    ("dressed_yang_baxter", 1e-5),
    ("uniqueness", 1e-12),
    ("antisymmetry", 1e-9),
    ("unimodular", 1e-12),
    ("self_bracket", 1e-10),
];

/// Tolerances for the dynamics suite, kept in the same map.
pub const DEFAULT_FLOW_TOLERANCES: [(&str, f64); 5] = [
    ("energy_drift", 1e-9),
    ("invariant_drift", 1e-6),
    ("moment_drift", 1e-6),
    ("constraint_drift", 1e-6),
    ("time_reversal", 1e-7),
];

pub fn default_tolerance(key: &str) -> Option<f64> {
    DEFAULT_TOLERANCES.iter().chain(&DEFAULT_FLOW_TOLERANCES).find(|(k, _)| *k == key).map(|&(_, v)| v)
}

/// Parses `a+bi`, `a-bi`, `bi` or `a` (also `j` for the imaginary unit).
pub fn parse_complex(s: &str) -> Result<C64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().replace('j', "i");
    t.parse::<C64>().map_err(|_| Error::Config(format!("cannot parse complex number `{s}`")))
}

fn format_complex(z: C64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

mod complex_str {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_complex(*z))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<C64, D::Error> {
        let s = String::deserialize(d)?;
        parse_complex(&s).map_err(serde::de::Error::custom)
    }
}

mod complex_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&z| format_complex(z)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<C64>, D::Error> {
        Vec::<String>::deserialize(d)?.iter().map(|s| parse_complex(s).map_err(serde::de::Error::custom)).collect()
    }
}

mod complex_pairs {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[(C64, C64)], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&(a, b)| [format_complex(a), format_complex(b)]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(C64, C64)>, D::Error> {
        Vec::<[String; 2]>::deserialize(d)?
            .iter()
            .map(|[a, b]| Ok((parse_complex(a).map_err(serde::de::Error::custom)?, parse_complex(b).map_err(serde::de::Error::custom)?)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    #[serde(with = "complex_str")]
    pub tau: C64,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub tolerances: BTreeMap<String, f64>,
    /// (z, w) probe pairs for the bracket identities.
    #[serde(with = "complex_pairs")]
    pub probes: Vec<(C64, C64)>,
    pub suites: Vec<String>,
    /// Point defining the flow Hamiltonian.
    #[serde(with = "complex_str")]
    pub flow_z0: C64,
    pub flow_k: u32,
    pub flow_t_end: f64,
    pub flow_rel_tol: f64,
    /// Points w at which tr L(w)^2 and tr L(w)^3 are monitored.
    #[serde(with = "complex_list")]
    pub flow_probes: Vec<C64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let c = C64::new;
        Self {
            tau: c(0.0, 1.0),
            n: 2,
            seeds: vec![1, 2, 3],
            tolerances: BTreeMap::new(),
            probes: vec![
                (c(0.21, 0.33), c(-0.37, 0.12)),
                (c(-0.18, -0.41), c(0.29, 0.07)),
                (c(0.43, -0.08), c(-0.11, 0.36)),
                (c(0.07, 0.46), c(0.38, -0.27)),
                (c(-0.44, 0.19), c(0.16, -0.38)),
            ],
            suites: SUITES.iter().map(|s| s.to_string()).collect(),
            flow_z0: c(0.41, 0.13),
            flow_k: 2,
            flow_t_end: 1.0,
            flow_rel_tol: 1e-10,
            flow_probes: vec![c(0.17, -0.29), c(-0.33, 0.21)],
        }
    }
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.im > 0.0) {
            return Err(Error::Config(format!("tau must have positive imaginary part, got {}", format_complex(self.tau))));
        }
        if !(1..=8).contains(&self.n) {
            return Err(Error::Config(format!("n must be between 1 and 8, got {}", self.n)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        for (k, v) in &self.tolerances {
            if default_tolerance(k).is_none() {
                return Err(Error::Config(format!("unknown tolerance key `{k}`")));
            }
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerance `{k}` must be positive")));
            }
        }
        for s in &self.suites {
            if !SUITES.contains(&s.as_str()) {
                return Err(Error::Config(format!("unknown suite `{s}`")));
            }
        }
        if self.probes.is_empty() {
            return Err(Error::Config("at least one probe pair is required".into()));
        }
        if self.flow_k == 0 || !(self.flow_rel_tol > 0.0) || !self.flow_t_end.is_finite() {
            return Err(Error::Config("flow_k, flow_rel_tol and flow_t_end must be positive and finite".into()));
        }
        Ok(())
    }

    /// Configured tolerance, falling back to the default.
    pub fn tolerance(&self, key: &str) -> f64 {
        self.tolerances
            .get(key)
            .copied()
            .or_else(|| default_tolerance(key))
            .unwrap_or_else(|| panic!("tolerance key `{key}` has no default"))
    }

    /// Applies a `KEY=VAL` override.
    pub fn set_tolerance(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec.split_once('=').ok_or_else(|| Error::Config(format!("expected KEY=VAL, got `{spec}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("tolerance `{k}` is not a number")))?;
        self.tolerances.insert(k.trim().to_string(), v);
        self.validate()
    }

    /// Suites in dependency order.
    pub fn ordered_suites(&self) -> Vec<&'static str> {
        SUITES.iter().copied().filter(|s| self.suites.iter().any(|t| t == s)).collect()
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(SuiteConfig::from_toml("").unwrap(), SuiteConfig::default());
    }

    #[test]
    fn complex_parsing() {
        assert_eq!(parse_complex("0.41+0.13i").unwrap(), C64::new(0.41, 0.13));
        assert_eq!(parse_complex("2i").unwrap(), C64::new(0.0, 2.0));
        assert_eq!(parse_complex("0.3 + 1.1j").unwrap(), C64::new(0.3, 1.1));
        assert!(parse_complex("abc").is_err());
    }

    #[test]
    fn document_round_trip() {
        let text = r#"
tau = "0.3+1.1i"
n = 3
seeds = [4, 5]
probes = [["0.1+0.2i", "-0.3+0.1i"]]
suites = ["theta", "lax"]

[tolerances]
yang_baxter = 1e-7
"#;
        let cfg = SuiteConfig::from_toml(text).unwrap();
        assert_eq!(cfg.n, 3);
        assert_eq!(cfg.tolerance("yang_baxter"), 1e-7);
        assert_eq!(cfg.tolerance("rmatrix"), 1e-7);
        let again = SuiteConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(SuiteConfig::from_toml("colour = 3").is_err());
        assert!(SuiteConfig::from_toml("[tolerances]\nbogus = 1e-3").is_err());
        assert!(SuiteConfig::from_toml("tau = \"1.0\"").is_err());
        assert!(SuiteConfig::from_toml("suites = [\"nope\"]").is_err());
        let mut cfg = SuiteConfig::default();
        assert!(cfg.set_tolerance("yang_baxter=abc").is_err());
        assert!(cfg.set_tolerance("yang_baxter=1e-5").is_ok());
    }

    #[test]
    fn suites_follow_dependency_order() {
        let cfg = SuiteConfig { suites: vec!["dynamics".into(), "theta".into()], ..Default::default() };
        assert_eq!(cfg.ordered_suites(), vec!["theta", "dynamics"]);
    }
}
