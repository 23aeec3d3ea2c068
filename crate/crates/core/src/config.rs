//! Experiment configuration files.
//!
//! One experiment per TOML file. A top-level `include = ["shared.toml"]`
//! pulls in other files (paths relative to the including file); tables are
//! merged recursively and keys of the including file win.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::distributions::{fit_phase_type, DistributionSpec};
use crate::error::{PollingError, Result};
use crate::model::{Discipline, ImbalanceParams, QueueSpec, SystemSpec, VisitOrder};
use crate::simulate::SimConfig;

const MAX_INCLUDE_DEPTH: usize = 16;

/// A distribution given either explicitly or as a two-moment phase-type fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistributionSource {
    Spec(DistributionSpec),
    Fit(MomentFit),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentFit {
    pub mean: f64,
    pub scv: f64,
}

impl DistributionSource {
    pub fn resolve(&self) -> Result<DistributionSpec> {
        match *self {
            DistributionSource::Spec(d) => {
                d.validate()?;
                Ok(d)
            }
            DistributionSource::Fit(MomentFit { mean, scv }) => fit_phase_type(mean, scv),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSource {
    #[serde(default)]
    pub interarrival: Option<DistributionSource>,
    pub service: DistributionSource,
    pub discipline: Discipline,
}

/// A polling system as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Explicit(ExplicitSystem),
    Imbalance(ImbalanceSystem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSystem {
    pub queues: Vec<QueueSource>,
    pub switchovers: Vec<DistributionSource>,
    #[serde(default)]
    pub visit_order: VisitOrder,
}

/// Exhaustive cyclic system built from imbalance ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImbalanceSystem {
    pub imbalance: ImbalanceParams,
    pub switchover: DistributionSource,
}

impl SystemSource {
    pub fn resolve(&self) -> Result<SystemSpec> {
        match self {
            SystemSource::Explicit(sys) => {
                let queues = sys
                    .queues
                    .iter()
                    .map(|q| {
                        Ok(QueueSpec {
                            interarrival: q.interarrival.map(|d| d.resolve()).transpose()?,
                            service: q.service.resolve()?,
                            discipline: q.discipline,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let switchovers = sys
                    .switchovers
                    .iter()
                    .map(DistributionSource::resolve)
                    .collect::<Result<Vec<_>>>()?;
                SystemSpec::new(queues, switchovers, sys.visit_order)
            }
            SystemSource::Imbalance(sys) => sys.imbalance.exhaustive_system(sys.switchover.resolve()?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Pretty,
}

/// Symmetric three-queue tables over switch-over times and interarrival scv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymmetricTable {
    pub queues: usize,
    pub mean_service: f64,
    pub switchovers: Vec<f64>,
    pub scvs: Vec<f64>,
    /// Switch-over times from this value upwards run `cycles / long_cycle_divisor`.
    pub long_switchover: f64,
    pub long_cycle_divisor: u64,
}

impl Default for SymmetricTable {
    fn default() -> Self {
        SymmetricTable {
            queues: 3,
            mean_service: 0.25,
            switchovers: vec![1.0, 10.0, 100.0],
            scvs: vec![0.25, 0.5, 1.0, 2.0],
            long_switchover: 100.0,
            long_cycle_divisor: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImbalanceTable {
    pub queues: usize,
    pub rho: f64,
    pub switchover: f64,
    pub scvs: Vec<f64>,
    /// `(I_A, I_B)` pairs.
    pub imbalances: Vec<[f64; 2]>,
    pub long_switchover: f64,
    pub long_cycle_divisor: u64,
}

impl Default for ImbalanceTable {
    fn default() -> Self {
        ImbalanceTable {
            queues: 3,
            rho: 0.75,
            switchover: 100.0,
            scvs: vec![0.25, 1.0, 2.0],
            imbalances: vec![[1.0, 1.0], [1.0, 3.0], [3.0, 1.0], [3.0, 3.0]],
            long_switchover: 100.0,
            long_cycle_divisor: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSweep {
    /// Base system; its switch-over laws must be deterministic.
    #[serde(default = "default_limit_system")]
    pub system: SystemSource,
    #[serde(default = "default_multipliers")]
    pub multipliers: Vec<f64>,
    /// Target number of kept waiting-time samples per replication.
    #[serde(default = "default_wait_samples")]
    pub wait_samples_per_replication: u64,
}

fn default_limit_system() -> SystemSource {
    symmetric_source(1.0, Discipline::Exhaustive)
}

fn default_multipliers() -> Vec<f64> {
    vec![1.0, 10.0, 100.0, 1000.0]
}

fn default_wait_samples() -> u64 {
    2_000
}

/// Symmetric Poisson system with three queues, exponential service of mean
/// 0.25 and deterministic switch-over times.
pub fn symmetric_source(switchover: f64, discipline: Discipline) -> SystemSource {
    let queue = QueueSource {
        interarrival: Some(DistributionSource::Spec(DistributionSpec::Exponential { rate: 1.0 })),
        service: DistributionSource::Spec(DistributionSpec::Exponential { rate: 4.0 }),
        discipline,
    };
    SystemSource::Explicit(ExplicitSystem {
        queues: vec![queue; 3],
        switchovers: vec![DistributionSource::Spec(DistributionSpec::Deterministic { value: switchover }); 3],
        visit_order: VisitOrder::Cyclic,
    })
}

/// Two-queue system with `lambda = (0.3, 0.2)`, exponential service of mean 1,
/// unit deterministic switch-over times and `Q_2` 1-limited.
pub fn two_queue_source(q1: Discipline) -> SystemSource {
    let queue = |rate: f64, discipline| QueueSource {
        interarrival: Some(DistributionSource::Spec(DistributionSpec::Exponential { rate })),
        service: DistributionSource::Spec(DistributionSpec::Exponential { rate: 1.0 }),
        discipline,
    };
    SystemSource::Explicit(ExplicitSystem {
        queues: vec![queue(0.3, q1), queue(0.2, Discipline::KLimited { k: 1 })],
        switchovers: vec![DistributionSource::Spec(DistributionSpec::Deterministic { value: 1.0 }); 2],
        visit_order: VisitOrder::Cyclic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PclCheck {
    #[serde(default = "gated_two_queue")]
    pub system: SystemSource,
}

fn gated_two_queue() -> SystemSource {
    two_queue_source(Discipline::Gated)
}

fn exhaustive_two_queue() -> SystemSource {
    two_queue_source(Discipline::Exhaustive)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E1lEval {
    #[serde(default = "exhaustive_two_queue")]
    pub system: SystemSource,
    /// Points per axis of the real grid on `[0,1]^2`.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Also simulate and compare the mean queue lengths.
    #[serde(default = "default_true")]
    pub simulate: bool,
}

fn default_grid() -> usize {
    20
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G1lResidual {
    #[serde(default = "gated_two_queue")]
    pub system: SystemSource,
    #[serde(default = "default_points")]
    pub points: Vec<[f64; 2]>,
}

fn default_points() -> Vec<[f64; 2]> {
    vec![[0.5, 0.5], [0.25, 0.75], [0.75, 0.25], [0.9, 0.9], [0.5, 0.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Custom {
    pub system: SystemSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Table1(SymmetricTable),
    Table2(ImbalanceTable),
    Table3(SymmetricTable),
    LimitSweep(LimitSweep),
    PclCheck(PclCheck),
    E1lEval(E1lEval),
    G1lResidual(G1lResidual),
    Custom(Custom),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Table1(_) => "table1",
            Experiment::Table2(_) => "table2",
            Experiment::Table3(_) => "table3",
            Experiment::LimitSweep(_) => "limit-sweep",
            Experiment::PclCheck(_) => "pcl-check",
            Experiment::E1lEval(_) => "e1l-eval",
            Experiment::G1lResidual(_) => "g1l-residual",
            Experiment::Custom(_) => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            sim: SimConfig::default(),
            output: None,
            format: OutputFormat::Csv,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| PollingError::Config(e.to_string()))?;
        if table.contains_key("include") {
            return Err(PollingError::Config("includes need a file path to resolve against".into()));
        }
        Self::from_table(table)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_table(load_with_includes(path, 0)?)
    }

    fn from_table(table: Table) -> Result<Self> {
        let cfg: ExperimentConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| PollingError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolves every referenced system so that bad parameters surface before
    /// any simulation starts.
    pub fn validate(&self) -> Result<()> {
        match &self.experiment {
            Experiment::Table1(t) | Experiment::Table3(t) => {
                if t.queues == 0 || t.switchovers.is_empty() || t.scvs.is_empty() {
                    return Err(PollingError::Config("table needs queues, switch-overs and scvs".into()));
                }
                if t.long_cycle_divisor == 0 {
                    return Err(PollingError::Config("long_cycle_divisor must be positive".into()));
                }
            }
            Experiment::Table2(t) => {
                if t.long_cycle_divisor == 0 {
                    return Err(PollingError::Config("long_cycle_divisor must be positive".into()));
                }
                for &scv in &t.scvs {
                    for &[ia, ib] in &t.imbalances {
                        ImbalanceParams {
                            n: t.queues,
                            rho: t.rho,
                            imbalance_arrival: ia,
                            imbalance_service: ib,
                            scv_arrival: scv,
                        }
                        .validate()?;
                    }
                }
            }
            Experiment::LimitSweep(s) => {
                let base = s.system.resolve()?;
                for &m in &s.multipliers {
                    base.with_scaled_switchovers(m)?;
                }
            }
            Experiment::PclCheck(p) => {
                p.system.resolve()?;
            }
            Experiment::E1lEval(e) => {
                e.system.resolve()?;
                if e.grid < 2 {
                    return Err(PollingError::Config("grid needs at least two points per axis".into()));
                }
            }
            Experiment::G1lResidual(g) => {
                g.system.resolve()?;
            }
            Experiment::Custom(c) => {
                c.system.resolve()?;
            }
        }
        Ok(())
    }
}

fn load_with_includes(path: &Path, depth: usize) -> Result<Table> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(PollingError::Config(format!(
            "include depth exceeds {MAX_INCLUDE_DEPTH} at {}",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| PollingError::Config(format!("{}: {e}", path.display())))?;
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| PollingError::Config(format!("{}: {e}", path.display())))?;
    let includes = match table.remove("include") {
        None => Vec::new(),
        Some(Value::String(s)) => vec![s],
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(PollingError::Config(format!("include entries must be strings, got {other}"))),
            })
            .collect::<Result<_>>()?,
        Some(other) => return Err(PollingError::Config(format!("include must be a string or array, got {other}"))),
    };
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut merged = Table::new();
    for inc in includes {
        merge(&mut merged, load_with_includes(&dir.join(inc), depth + 1)?);
    }
    merge(&mut merged, table);
    Ok(merged)
}

/// Recursive table merge; values in `over` replace those in `base`.
fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_table1() {
        let cfg = ExperimentConfig::from_toml_str("[experiment]\nkind = \"table1\"\n").unwrap();
        assert_eq!(cfg.experiment, Experiment::Table1(SymmetricTable::default()));
        assert_eq!(cfg.sim, SimConfig::default());
    }

    #[test]
    fn fit_and_explicit_distributions() {
        let text = r#"
            [experiment]
            kind = "custom"
            [experiment.system]
            switchovers = [{ kind = "deterministic", value = 2.0 }]
            [[experiment.system.queues]]
            interarrival = { mean = 2.0, scv = 0.5 }
            service = { kind = "exponential", rate = 2.0 }
            discipline = { kind = "gated" }
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let Experiment::Custom(c) = cfg.experiment else { panic!() };
        let spec = c.system.resolve().unwrap();
        let m = spec.queues()[0].interarrival.unwrap().moments();
        assert!((m.mean - 2.0).abs() < 1e-12 && (m.scv - 0.5).abs() < 1e-12);
    }

    #[test]
    fn imbalance_source() {
        let text = r#"
            [experiment]
            kind = "custom"
            [experiment.system]
            switchover = { kind = "deterministic", value = 100.0 }
            imbalance = { n = 3, rho = 0.75, imbalance_arrival = 3.0, imbalance_service = 3.0, scv_arrival = 1.0 }
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let Experiment::Custom(c) = cfg.experiment else { panic!() };
        let spec = c.system.resolve().unwrap();
        assert!((spec.loads().rho - 0.75).abs() < 1e-12);
        assert!((spec.queues()[0].arrival_rate() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = ExperimentConfig::from_toml_str("[experiment]\nkind = \"table1\"\n[sim]\nreplicas = 3\n");
        assert!(matches!(err, Err(PollingError::Config(_))));
        assert!(ExperimentConfig::from_toml_str("[experiment]\nkind = \"table9\"\n").is_err());
    }

    #[test]
    fn unstable_system_surfaces_as_instability() {
        let text = r#"
            [experiment]
            kind = "custom"
            [experiment.system]
            switchovers = [{ kind = "deterministic", value = 1.0 }]
            [[experiment.system.queues]]
            interarrival = { kind = "exponential", rate = 1.0 }
            service = { kind = "deterministic", value = 1.5 }
            discipline = { kind = "exhaustive" }
        "#;
        assert!(matches!(ExperimentConfig::from_toml_str(text), Err(PollingError::Unstable(_))));
    }

    #[test]
    fn zero_multiplier_is_rejected() {
        let text = "[experiment]\nkind = \"limit-sweep\"\nmultipliers = [0.0, 1.0]\n";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn includes_merge_with_local_precedence() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("base.toml"),
            "[sim]\nreplications = 7\nmaster_seed = 9\n[experiment]\nkind = \"table3\"\n",
        )
        .unwrap();
        let main = dir.path().join("main.toml");
        std::fs::write(&main, "include = [\"base.toml\"]\n[sim]\nmaster_seed = 11\n").unwrap();
        let cfg = ExperimentConfig::from_file(&main).unwrap();
        assert_eq!(cfg.sim.replications, 7);
        assert_eq!(cfg.sim.master_seed, 11);
        assert_eq!(cfg.experiment.name(), "table3");
    }

    #[test]
    fn include_cycles_are_caught() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.toml");
        std::fs::write(&a, "include = \"a.toml\"\n").unwrap();
        assert!(matches!(ExperimentConfig::from_file(&a), Err(PollingError::Config(_))));
    }
}
