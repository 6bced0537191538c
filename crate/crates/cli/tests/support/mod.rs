#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loads"))
        .args(args)
        .output()
        .expect("spawn loads")
}

/// Runs the tool and fails with its stderr unless it exits 0.
pub fn ok(args: &[&str]) -> Result<Output, String> {
    let out = run(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`loads {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

pub fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).expect("read report")).expect("parse report")
}

pub fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Every file in `dir`, sorted by name, with its bytes.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .expect("list output dir")
        .map(|e| {
            let e = e.expect("dir entry");
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).expect("read output"))
        })
        .collect();
    files.sort();
    files
}

/// First `n` lines of a JSONL dataset written to `dir`.
pub fn head_dataset(src: &str, n: usize, dir: &Path, name: &str) -> String {
    let text = fs::read_to_string(src).expect("read dataset");
    let lines: Vec<&str> = text.lines().take(n).collect();
    let p = dir.join(name);
    fs::write(&p, lines.join("\n") + "\n").expect("write dataset");
    path_str(&p)
}
