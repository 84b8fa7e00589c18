//! The `ramsey-trees` binary: exit codes, worker determinism, provider tables.

use std::path::PathBuf;
use std::process::{Command, Output};

use ramsey_trees::constants::{evaluate, xi, Mode, StubProvider};
use ramsey_trees::rational::rat;
use serde_json::Value as Json;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ramsey-trees")).args(args).output().expect("binary runs")
}

fn doc(out: &Output) -> Json {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    dir.join(format!("{}-{name}", std::process::id()))
}

#[test]
fn success_exits_zero() {
    let out = bin(&["enumerate", "--height", "3", "--k", "2", "--count-only"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(doc(&out)["count"], 7);
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(bin(&["enumerate"]).status.code(), Some(2));
    let out = bin(&["constants", "--expr", "sigma", "--eps", "1/2", "--theta", "3/4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(doc(&out)["error"].is_string());
}

#[test]
fn failed_property_exits_one() {
    let out = bin(&["constants", "--expr", "deltas", "--r", "1/2"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(doc(&out)["all_hold"], false);
}

#[test]
fn budget_exits_three() {
    let out = bin(&["--budget", "1", "enumerate", "--height", "4", "--k", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(doc(&out)["error"].as_str().unwrap().contains("budget"));
}

#[test]
fn unresolved_bound_is_reported() {
    let out = bin(&["constants", "--expr", "xi", "--eps", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(doc(&out)["error"].as_str().unwrap().contains("UDHL((2)|2,1/2)"));
}

#[test]
fn output_is_independent_of_workers() {
    let fixture = scratch("fixture.json");
    let path = fixture.to_str().unwrap();
    let gen = bin(&["--seed", "11", "gen", "level-selection", "--height", "3", "--density", "1/2", "-o", path]);
    assert_eq!(gen.status.code(), Some(0));
    let runs: [&[&str]; 3] = [
        &["search", "correlated", "--input", path, "--theta", "1/4"],
        &["enumerate", "--b", "2,2", "--height", "3", "--k", "2"],
        &["--seed", "5", "verify", "--samples", "5", "--suite", "counting", "--suite", "dichotomy"],
    ];
    for args in runs {
        let one = bin(&[&["--workers", "1"], args].concat());
        let four = bin(&[&["--workers", "4"], args].concat());
        assert_eq!(one.status.code(), four.status.code(), "{args:?}");
        assert_eq!(one.stdout, four.stdout, "{args:?}");
    }
}

#[test]
fn brute_forced_table_feeds_the_provider() {
    let out = bin(&["bounds", "udhl", "--k", "2", "--eps", "1/2", "--max", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let d = doc(&out);
    assert_eq!(d["outcome"]["value"], 4);
    let table = scratch("table.json");
    std::fs::write(&table, d["table"].to_string()).unwrap();

    let out = bin(&["--provider", table.to_str().unwrap(), "constants", "--expr", "xi", "--eps", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let want = evaluate(&xi(&[2], &rat(1, 1)).unwrap(), &StubProvider::new(4, 1), Mode::Exact).unwrap();
    assert_eq!(doc(&out)["value"], want.to_string());
}

#[test]
fn invalid_table_is_rejected() {
    let table = scratch("bad-table.json");
    std::fs::write(&table, r#"{"udhl":[{"b":[1],"k":2,"eps":"1/2","value":4,"provenance":"x"}],"mil":[]}"#).unwrap();
    let out = bin(&["--provider", table.to_str().unwrap(), "constants", "--expr", "xi", "--eps", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
