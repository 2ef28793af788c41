//! JSON experiment configuration and the named presets that reproduce the
//! reference experiments.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dorfman::CostParams;
use crate::engine::{ModelSpec, ProtocolSpec, DEFAULT_EXPLOSION_THRESHOLD};
use crate::epidemic::SbmParams;
use crate::error::Error;
use crate::protocol::{BudgetRule, CcaConfig, QuarantinePolicy};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Community-structured model.
    Sbm {
        n: usize,
        community_size: usize,
        q1: f64,
        q2: f64,
        p_init: f64,
        r: f64,
    },
    /// Per-day i.i.d. infections.
    Iid { n: usize, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyConfig {
    None,
    Quarantine,
    CostAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    MuLog,
    PnLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolConfig {
    Dorfman {
        policy: PolicyConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
    Cca {
        budget: BudgetKind,
        c: f64,
        #[serde(default)]
        delta: f64,
    },
}

fn default_trajectories() -> u64 {
    100
}

fn default_seed() -> u64 {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_explosion_threshold() -> f64 {
    DEFAULT_EXPLOSION_THRESHOLD
}

/// A complete simulation experiment: one model, one protocol, one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub protocol: ProtocolConfig,
    pub horizon: u32,
    #[serde(default = "default_trajectories")]
    pub trajectories: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Write one CSV per trajectory instead of the day-wise aggregate.
    #[serde(default)]
    pub per_trajectory_csv: bool,
    #[serde(default = "default_explosion_threshold")]
    pub explosion_threshold: f64,
}

impl ExperimentConfig {
    /// Check every invariant and translate to the engine's types.
    pub fn validated(&self) -> Result<(ModelSpec, ProtocolSpec)> {
        let model = match &self.model {
            ModelConfig::Sbm { n, community_size, q1, q2, p_init, r } => ModelSpec::Sbm(
                SbmParams::new(*n, *community_size, *q1, *q2, *p_init, *r)?,
            ),
            ModelConfig::Iid { n, p } => {
                if *n == 0 {
                    return Err(Error::InvalidConfig("population must be positive".into()));
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidConfig(format!(
                        "infection probability must be in [0,1], got {p}"
                    )));
                }
                ModelSpec::Iid { population_size: *n, infection_prob: *p }
            }
        };
        let protocol = match &self.protocol {
            ProtocolConfig::Dorfman { policy, a, alpha } => {
                let policy = match policy {
                    PolicyConfig::None => QuarantinePolicy::NoQuarantine,
                    PolicyConfig::Quarantine => QuarantinePolicy::Quarantine,
                    PolicyConfig::CostAware => {
                        let (Some(a), Some(alpha)) = (a, alpha) else {
                            return Err(Error::InvalidConfig(
                                "cost_aware policy requires both `a` and `alpha`".into(),
                            ));
                        };
                        QuarantinePolicy::QuarantineCostAware(CostParams::new(*a, *alpha)?)
                    }
                };
                if !matches!(policy, QuarantinePolicy::QuarantineCostAware(_))
                    && (a.is_some() || alpha.is_some())
                {
                    return Err(Error::InvalidConfig(
                        "`a` and `alpha` only apply to the cost_aware policy".into(),
                    ));
                }
                ProtocolSpec::Dorfman(policy)
            }
            ProtocolConfig::Cca { budget, c, delta } => {
                let rule = match budget {
                    BudgetKind::MuLog => BudgetRule::MuLog { c: *c },
                    BudgetKind::PnLog => BudgetRule::PnLog { c: *c },
                };
                ProtocolSpec::Cca(CcaConfig::new(rule, *delta)?)
            }
        };
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least one day".into()));
        }
        if self.trajectories == 0 {
            return Err(Error::InvalidConfig("trajectory count must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.explosion_threshold) {
            return Err(Error::InvalidConfig(
                "explosion threshold must be in [0,1]".into(),
            ));
        }
        Ok((model, protocol))
    }
}

/// Parse a JSON config file, rejecting unknown keys, and validate it.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Parse a JSON config from a string (same validation as [`parse_config`]).
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_str(text)?;
    config.validated()?;
    Ok(config)
}

/// The static cost-table job (group-size and cost curves over a prevalence
/// grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsJob {
    pub p_min: f64,
    pub p_max: f64,
    pub points: usize,
    pub a: f64,
    pub alpha: f64,
    pub s_max: u32,
}

/// The dynamic-versus-static plan comparison job for the i.i.d. model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanJob {
    pub n: usize,
    pub p: f64,
    pub horizon: u32,
}

/// One unit of work an experiment runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentJob {
    Batch(ExperimentConfig),
    Costs(CostsJob),
    Plan(PlanJob),
}

/// A named experiment preset: one or more labeled jobs with parameters frozen
/// to the reference values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub jobs: Vec<(&'static str, ExperimentJob)>,
}

pub const PRESET_NAMES: [&str; 8] = [
    "fig1",
    "fig2",
    "fig3",
    "fig4",
    "fig5-sbm-costaware",
    "fig5-iid",
    "fig6",
    "fig7",
];

fn reference_sbm() -> ModelConfig {
    ModelConfig::Sbm {
        n: 1000,
        community_size: 50,
        q1: 0.012,
        q2: 0.0004,
        p_init: 0.02,
        r: 0.1,
    }
}

fn sbm_batch(protocol: ProtocolConfig, trajectories: u64, name: &str) -> ExperimentConfig {
    ExperimentConfig {
        model: reference_sbm(),
        protocol,
        horizon: 50,
        trajectories,
        seed: default_seed(),
        out_dir: PathBuf::from("out").join(name),
        per_trajectory_csv: false,
        explosion_threshold: DEFAULT_EXPLOSION_THRESHOLD,
    }
}

fn iid_batch(protocol: ProtocolConfig, name: &str) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelConfig::Iid { n: 1000, p: 0.035 },
        protocol,
        horizon: 50,
        trajectories: 100,
        seed: default_seed(),
        out_dir: PathBuf::from("out").join(name),
        per_trajectory_csv: false,
        explosion_threshold: DEFAULT_EXPLOSION_THRESHOLD,
    }
}

/// Look up a preset by name.
pub fn preset(name: &str) -> Result<Preset> {
    let jobs: Vec<(&'static str, ExperimentJob)> = match name {
        "fig1" => vec![(
            "",
            ExperimentJob::Costs(CostsJob {
                p_min: 1e-3,
                p_max: 1e-1,
                points: 50,
                a: 1.3,
                alpha: 2.0,
                s_max: 1000,
            }),
        )],
        "fig2" => vec![(
            "",
            ExperimentJob::Batch(sbm_batch(
                ProtocolConfig::Cca { budget: BudgetKind::MuLog, c: 1.6, delta: 0.0 },
                200,
                "fig2",
            )),
        )],
        "fig3" => vec![(
            "",
            ExperimentJob::Batch(sbm_batch(
                ProtocolConfig::Dorfman { policy: PolicyConfig::None, a: None, alpha: None },
                1000,
                "fig3",
            )),
        )],
        "fig4" => vec![(
            "",
            ExperimentJob::Batch(sbm_batch(
                ProtocolConfig::Dorfman {
                    policy: PolicyConfig::Quarantine,
                    a: None,
                    alpha: None,
                },
                1000,
                "fig4",
            )),
        )],
        "fig5-sbm-costaware" => vec![(
            "",
            ExperimentJob::Batch(sbm_batch(
                ProtocolConfig::Dorfman {
                    policy: PolicyConfig::CostAware,
                    a: Some(1.5),
                    alpha: Some(2.0),
                },
                1000,
                "fig5-sbm-costaware",
            )),
        )],
        "fig5-iid" => vec![(
            "",
            ExperimentJob::Plan(PlanJob { n: 1000, p: 0.12, horizon: 20 }),
        )],
        "fig6" => vec![
            (
                "cca",
                ExperimentJob::Batch(iid_batch(
                    ProtocolConfig::Cca { budget: BudgetKind::PnLog, c: 0.8, delta: 0.0 },
                    "fig6",
                )),
            ),
            (
                "dorfman",
                ExperimentJob::Batch(iid_batch(
                    ProtocolConfig::Dorfman { policy: PolicyConfig::None, a: None, alpha: None },
                    "fig6",
                )),
            ),
        ],
        "fig7" => vec![
            (
                "cca",
                ExperimentJob::Batch(iid_batch(
                    ProtocolConfig::Cca { budget: BudgetKind::PnLog, c: 0.7, delta: 0.0 },
                    "fig7",
                )),
            ),
            (
                "dorfman",
                ExperimentJob::Batch(iid_batch(
                    ProtocolConfig::Dorfman { policy: PolicyConfig::None, a: None, alpha: None },
                    "fig7",
                )),
            ),
        ],
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset `{other}` (expected one of {PRESET_NAMES:?})"
            )))
        }
    };
    let name = PRESET_NAMES
        .iter()
        .find(|&&n| n == name)
        .expect("name matched above");
    Ok(Preset { name, jobs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_iid_config_parses_with_defaults() {
        let cfg = parse_config_str(
            r#"{
                "model": {"type": "iid", "n": 1000, "p": 0.12},
                "protocol": {"type": "dorfman", "policy": "none"},
                "horizon": 20
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.trajectories, 100);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.explosion_threshold, 0.5);
        assert!(!cfg.per_trajectory_csv);
    }

    #[test]
    fn community_size_must_divide_population() {
        let err = parse_config_str(
            r#"{
                "model": {"type": "sbm", "n": 1000, "community_size": 30,
                          "q1": 0.012, "q2": 0.0004, "p_init": 0.02, "r": 0.1},
                "protocol": {"type": "dorfman", "policy": "none"},
                "horizon": 50
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("divide"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config_str(
            r#"{
                "model": {"type": "iid", "n": 1000, "p": 0.1},
                "protocol": {"type": "dorfman", "policy": "none"},
                "horizon": 20,
                "unexpected": true
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unexpected"), "{err}");
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_config_str("{\n  \"model\": oops\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn cost_aware_requires_parameters() {
        let err = parse_config_str(
            r#"{
                "model": {"type": "iid", "n": 100, "p": 0.1},
                "protocol": {"type": "dorfman", "policy": "cost_aware"},
                "horizon": 10
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
        // a <= 1 is out of domain.
        assert!(parse_config_str(
            r#"{
                "model": {"type": "iid", "n": 100, "p": 0.1},
                "protocol": {"type": "dorfman", "policy": "cost_aware", "a": 1.0, "alpha": 2.0},
                "horizon": 10
            }"#,
        )
        .is_err());
    }

    #[test]
    fn zero_trajectories_rejected() {
        let err = parse_config_str(
            r#"{
                "model": {"type": "iid", "n": 100, "p": 0.1},
                "protocol": {"type": "dorfman", "policy": "none"},
                "horizon": 10,
                "trajectories": 0
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("trajectory"), "{err}");
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = sbm_batch(
            ProtocolConfig::Dorfman {
                policy: PolicyConfig::CostAware,
                a: Some(1.5),
                alpha: Some(2.0),
            },
            1000,
            "roundtrip",
        );
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn fig3_preset_expands_to_reference_parameters() {
        let preset = preset("fig3").unwrap();
        let ExperimentJob::Batch(cfg) = &preset.jobs[0].1 else {
            panic!("fig3 is a batch job");
        };
        assert_eq!(
            cfg.model,
            ModelConfig::Sbm {
                n: 1000,
                community_size: 50,
                q1: 0.012,
                q2: 0.0004,
                p_init: 0.02,
                r: 0.1
            }
        );
        assert_eq!(cfg.horizon, 50);
        assert_eq!(cfg.trajectories, 1000);
        assert!(matches!(
            cfg.protocol,
            ProtocolConfig::Dorfman { policy: PolicyConfig::None, .. }
        ));
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(preset("fig9").is_err());
    }

    /// Frozen parameter blocks: any drift in a preset shows up as a changed
    /// serialization here.
    #[test]
    fn preset_parameter_checksums() {
        let expected = [
            ("fig1", r#"[["",{"kind":"costs","p_min":0.001,"p_max":0.1,"points":50,"a":1.3,"alpha":2.0,"s_max":1000}]]"#),
            ("fig2", r#"[["",{"kind":"batch","model":{"type":"sbm","n":1000,"community_size":50,"q1":0.012,"q2":0.0004,"p_init":0.02,"r":0.1},"protocol":{"type":"cca","budget":"mu_log","c":1.6,"delta":0.0},"horizon":50,"trajectories":200,"seed":1,"out_dir":"out/fig2","per_trajectory_csv":false,"explosion_threshold":0.5}]]"#),
            ("fig3", r#"[["",{"kind":"batch","model":{"type":"sbm","n":1000,"community_size":50,"q1":0.012,"q2":0.0004,"p_init":0.02,"r":0.1},"protocol":{"type":"dorfman","policy":"none"},"horizon":50,"trajectories":1000,"seed":1,"out_dir":"out/fig3","per_trajectory_csv":false,"explosion_threshold":0.5}]]"#),
            ("fig4", r#"[["",{"kind":"batch","model":{"type":"sbm","n":1000,"community_size":50,"q1":0.012,"q2":0.0004,"p_init":0.02,"r":0.1},"protocol":{"type":"dorfman","policy":"quarantine"},"horizon":50,"trajectories":1000,"seed":1,"out_dir":"out/fig4","per_trajectory_csv":false,"explosion_threshold":0.5}]]"#),
            ("fig5-sbm-costaware", r#"[["",{"kind":"batch","model":{"type":"sbm","n":1000,"community_size":50,"q1":0.012,"q2":0.0004,"p_init":0.02,"r":0.1},"protocol":{"type":"dorfman","policy":"cost_aware","a":1.5,"alpha":2.0},"horizon":50,"trajectories":1000,"seed":1,"out_dir":"out/fig5-sbm-costaware","per_trajectory_csv":false,"explosion_threshold":0.5}]]"#),
            ("fig5-iid", r#"[["",{"kind":"plan","n":1000,"p":0.12,"horizon":20}]]"#),
            ("fig6", r#"[["cca",{"kind":"batch","model":{"type":"iid","n":1000,"p":0.035},"protocol":{"type":"cca","budget":"pn_log","c":0.8,"delta":0.0},"horizon":50,"trajectories":100,"seed":1,"out_dir":"out/fig6","per_trajectory_csv":false,"explosion_threshold":0.5}],["dorfman",{"kind":"batch","model":{"type":"iid","n":1000,"p":0.035},"protocol":{"type":"dorfman","policy":"none"},"horizon":50,"trajectories":100,"seed":1,"out_dir":"out/fig6","per_trajectory_csv":false,"explosion_threshold":0.5}]]"#),
            ("fig7", r#"[["cca",{"kind":"batch","model":{"type":"iid","n":1000,"p":0.035},"protocol":{"type":"cca","budget":"pn_log","c":0.7,"delta":0.0},"horizon":50,"trajectories":100,"seed":1,"out_dir":"out/fig7","per_trajectory_csv":false,"explosion_threshold":0.5}],["dorfman",{"kind":"batch","model":{"type":"iid","n":1000,"p":0.035},"protocol":{"type":"dorfman","policy":"none"},"horizon":50,"trajectories":100,"seed":1,"out_dir":"out/fig7","per_trajectory_csv":false,"explosion_threshold":0.5}]]"#),
        ];
        for (name, frozen) in expected {
            let p = preset(name).unwrap();
            let serialized = serde_json::to_string(&p.jobs).unwrap();
            assert_eq!(serialized, frozen, "preset {name} drifted");
        }
        // Every advertised preset name resolves.
        for name in PRESET_NAMES {
            assert!(preset(name).is_ok());
        }
    }
}
