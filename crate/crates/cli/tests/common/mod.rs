#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn model(name: &str) -> PathBuf {
    repo().join("models").join(name)
}

/// Copy a shipped scenario into `dir`, pointing it at the repo models and at
/// `dir/out`; `edits` are (old, new) substitutions applied to the text.
pub fn scenario(dir: &Path, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = std::fs::read_to_string(repo().join("scenarios").join(format!("{name}.toml"))).unwrap();
    let models = repo().join("models");
    text = text.replace("\"../models/", &format!("\"{}/", models.display()));
    text = text
        .lines()
        .map(|l| if l.starts_with("out_dir") { format!("out_dir = \"{}\"", dir.join("out").display()) } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    for (a, b) in edits {
        assert!(text.contains(a), "{name}: no '{a}' to replace");
        text = text.replace(a, b);
    }
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

pub fn trocar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trocar")).args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn summary_value(summary: &str, key: &str) -> f64 {
    summary
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in summary"))
        .parse()
        .unwrap()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
