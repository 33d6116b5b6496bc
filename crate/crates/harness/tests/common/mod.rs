#![allow(dead_code)]

use std::path::Path;

use serde_json::{json, Value};

use infoplane_harness::config::{apply_override, RunConfig};

/// A config small enough to run in a couple of seconds.
pub fn tiny(experiment: &str, out: &Path) -> Value {
    json!({
        "experiment": experiment,
        "seed": 5,
        "output_dir": out,
        "dataset": {
            "source": {"kind": "synthetic", "n_per_class": 10, "side": 8, "noise": 0.3},
            "eval_size": 60
        },
        "teacher": {"config": {"latent_dim": 4, "hidden": [16], "epochs": 2, "batch_size": 20,
                               "optimizer": {"kind": "adam", "lr": 0.01}}},
        "student": {"bottleneck_dim": 3, "encoder_hidden": [16], "decoder_hidden": [8], "beta": 0.01,
                    "epochs": 3, "batch_size": 20, "optimizer": {"kind": "adam", "lr": 0.01}},
        "estimators": {"zy_samples": 2,
                       "teacher_bound": {"n_outer": 16, "mc_samples": 2, "opt_steps": 3, "hidden": [8],
                                         "optimizer": {"kind": "adam", "lr": 0.01}}},
        "sweep": {"betas": [0.001, 0.1]}
    })
}

pub fn config(mut v: Value, overrides: &[&str]) -> RunConfig {
    for o in overrides {
        apply_override(&mut v, o).unwrap();
    }
    RunConfig::from_value(v).unwrap()
}

pub fn write_config(dir: &Path, v: &Value) -> std::path::PathBuf {
    let path = dir.join("config-in.json");
    std::fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path
}
