#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(name: &str) -> String {
    root().join("fixtures").join(name).display().to_string()
}

pub fn glexrsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glexrsm"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn json_out(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", stdout(o)))
}

const BASE: &str = "https://glexrsm.local/schemas/";

/// Validator for one of the shipped schemas, with the others registered for
/// cross-file references.
pub fn schema(name: &str) -> jsonschema::Validator {
    let dir = root().join("docs/schemas");
    let load =
        |p: &Path| -> Value { serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap() };
    let mut reg = jsonschema::Registry::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        let file = p.file_name().unwrap().to_str().unwrap().to_string();
        reg = reg.add(format!("{BASE}{file}"), load(&p)).unwrap();
    }
    let reg = Box::leak(Box::new(reg.prepare().unwrap()));
    jsonschema::options()
        .with_registry(reg)
        .with_base_uri(format!("{BASE}{name}"))
        .build(&load(&dir.join(name)))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn assert_valid(schema_name: &str, doc: &Value) {
    let v = schema(schema_name);
    let errors: Vec<String> = v
        .iter_errors(doc)
        .map(|e| format!("{e} at {}", e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:?}\n{doc}");
}
