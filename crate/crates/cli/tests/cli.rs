use clap::CommandFactory;
use nlpsi_cli::args::{run_from, Cli};
use std::fs;
use std::path::Path;

fn run(args: &[&str]) -> i32 {
    run_from(std::iter::once("nlpsi").chain(args.iter().copied()))
}

fn manifest_config(dir: &Path) -> serde_json::Value {
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["config"].clone()
}

#[test]
fn clap_definition_is_consistent() {
    Cli::command().debug_assert();
}

#[test]
fn simulate_is_bit_identical_across_runs() {
    let root = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = root.path().join(name).display().to_string();
        assert_eq!(run(&["simulate", "--preset", "carrier", "--width", "48", "--height", "40", "-o", &out]), 0);
    }
    for f in ["stack/frame_000.f32", "stack/frame_004.f32", "stack/stack.json", "truth.f32", "manifest.json"] {
        assert_eq!(
            fs::read(root.path().join("a").join(f)).unwrap(),
            fs::read(root.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn flags_override_a_config_file() {
    let root = tempfile::tempdir().unwrap();
    let first = root.path().join("first");
    assert_eq!(run(&["simulate", "--preset", "carrier", "--width", "40", "--height", "32", "-o", &first.display().to_string()]), 0);
    let cfg = root.path().join("sim.json");
    fs::write(&cfg, manifest_config(&first).to_string()).unwrap();

    let second = root.path().join("second");
    let code = run(&[
        "simulate", "--config", &cfg.display().to_string(), "--height", "24", "-o", &second.display().to_string(),
    ]);
    assert_eq!(code, 0);
    let c = manifest_config(&second);
    assert_eq!(c["width"], 40);
    assert_eq!(c["height"], 24);
    assert_eq!(c["carrier"], manifest_config(&first)["carrier"]);
}

#[test]
fn usage_errors_exit_with_two() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("c.json").display().to_string();
    assert_eq!(run(&["simulate", "--preset", "flat", "--config", &cfg]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
}

#[test]
fn malformed_config_is_reported_not_panicked() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("bad.json");
    fs::write(&cfg, "{ not json").unwrap();
    let out = root.path().join("o").display().to_string();
    let code = run(&["simulate", "--config", &cfg.display().to_string(), "-o", &out]);
    assert_ne!(code, 0);
    assert_ne!(code, 2);
}
