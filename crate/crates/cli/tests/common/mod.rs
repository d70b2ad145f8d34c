#![allow(dead_code)]

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rationale_core::corpus::write_jsonl;
use rationale_core::synth::{planted_corpus, PlantedConfig};

pub fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rationale"));
    cmd.env_remove("RATIONALE_OUT")
        .env_remove("RATIONALE_WORKERS");
    cmd
}

pub fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed: {}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Writes planted train/test splits into `dir` and returns their paths.
pub fn write_planted(dir: &Path, cfg: &PlantedConfig) -> (PathBuf, PathBuf) {
    let (train, test) = planted_corpus(cfg);
    let train_path = dir.join("train.jsonl");
    let test_path = dir.join("test.jsonl");
    write_jsonl(
        BufWriter::new(File::create(&train_path).unwrap()),
        &train.instances,
    )
    .unwrap();
    write_jsonl(
        BufWriter::new(File::create(&test_path).unwrap()),
        &test.instances,
    )
    .unwrap();
    (train_path, test_path)
}

/// A small planted corpus that trains in well under a second per model.
pub fn small_planted() -> PlantedConfig {
    PlantedConfig {
        train_size: 300,
        test_size: 60,
        seed: 11,
        ..Default::default()
    }
}

pub fn manifest_text(extra: &str) -> String {
    format!(
        "seeds = 0, 1, 2\n\
         train.epochs = 4\n\
         bootstrap.iterations = 200\n\
         task.planted.train = train.jsonl\n\
         task.planted.test = test.jsonl\n\
         provider.attn.kind = toy_attention\n\
         {extra}"
    )
}
