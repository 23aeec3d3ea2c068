use std::path::PathBuf;

use polling_lab::config::{Experiment, ExperimentConfig};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_load_and_validate() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        // fragments meant only for include
        if name == "sim-defaults.toml" || name == "two-queue-gated.toml" {
            continue;
        }
        let cfg = ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        match &cfg.experiment {
            Experiment::Custom(c) => {
                c.system.resolve().unwrap();
            }
            Experiment::PclCheck(c) => {
                c.system.resolve().unwrap();
            }
            Experiment::G1lResidual(c) => {
                assert_eq!(c.points.len(), 4);
                c.system.resolve().unwrap();
            }
            _ => {}
        }
        assert!(cfg.sim.replications > 0);
        seen += 1;
    }
    assert_eq!(seen, 9);
}
