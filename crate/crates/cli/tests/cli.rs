//! Exit codes and messages of the binary on bad input.

use std::path::PathBuf;
use std::process::{Command, Output};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadex"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn schema() -> String {
    data_dir().join("german.schema.toml").display().to_string()
}

fn data() -> String {
    data_dir().join("german.data").display().to_string()
}

fn train_model(dir: &std::path::Path) -> String {
    let model = dir.join("m.txt").display().to_string();
    let o = run(&[
        "train",
        "--schema",
        &schema(),
        "--data",
        &data(),
        "--out",
        &model,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    model
}

#[test]
fn missing_data_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.data").display().to_string();
    let out = dir.path().join("m.txt").display().to_string();
    let o = run(&[
        "train",
        "--schema",
        &schema(),
        "--data",
        &missing,
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nope.data"));
}

#[test]
fn unreadable_model_fails() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.txt");
    std::fs::write(&model, "not a model\n").unwrap();
    let o = run(&[
        "explain",
        "--schema",
        &schema(),
        "--data",
        &data(),
        "--model",
        model.to_str().unwrap(),
        "--row",
        "1",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bad.txt"));
}

#[test]
fn empty_validation_split_fails() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<&str> = include_str!("../../../data/german.data")
        .lines()
        .take(2)
        .collect();
    let small = dir.path().join("two.data");
    std::fs::write(&small, rows.join("\n")).unwrap();
    let out = dir.path().join("m.txt").display().to_string();
    let o = run(&[
        "train",
        "--schema",
        &schema(),
        "--data",
        small.to_str().unwrap(),
        "--train-fraction",
        "0.9",
        "--out",
        &out,
    ]);
    assert!(!o.status.success());
    assert!(!dir.path().join("m.txt").exists());
}

#[test]
fn bad_flag_values_are_config_errors() {
    let o = run(&[
        "train",
        "--schema",
        &schema(),
        "--data",
        &data(),
        "--t-flip",
        "2",
        "--out",
        "x",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn explain_exit_codes_and_record_input() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_model(dir.path());
    let base = [
        "--schema".to_string(),
        schema(),
        "--data".into(),
        data(),
        "--model".into(),
        model.clone(),
    ];
    let args = |extra: &[&str]| {
        let mut v: Vec<String> = vec!["explain".into()];
        v.extend(base.iter().map(|s| s.to_string()));
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let call = |a: Vec<String>| run(&a.iter().map(String::as_str).collect::<Vec<_>>());

    // Row 0 is approved by the trained model.
    let o = call(args(&["--row", "0"]));
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    let o = call(args(&["--row", "100000"]));
    assert_eq!(o.status.code(), Some(2));

    let line1 = include_str!("../../../data/german.data")
        .lines()
        .nth(1)
        .unwrap();
    let fields: Vec<&str> = line1.split_whitespace().take(20).collect();
    let record = fields.join(" ");
    let by_record = call(args(&["--record", &record, "--alternatives", "3"]));
    let by_row = call(args(&["--row", "1", "--alternatives", "3"]));
    assert!(by_record.status.success(), "{}", stderr(&by_record));
    // Same sample either way; only the reported id differs.
    let strip = |o: &Output| {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| !l.starts_with("sample ") && !l.starts_with(|c: char| c.is_ascii_digit()))
            .map(str::to_string)
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&by_record), strip(&by_row));

    let o = call(args(&["--record", "A11 6"]));
    assert_eq!(o.status.code(), Some(3));
}
