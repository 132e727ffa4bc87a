use std::path::Path;
use std::process::{Command, Output};

use rlpomcp::harness::read_episode_csv;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlpomcp")).current_dir(dir).args(args).output().unwrap()
}

const TINY: &str = "[world]\ndims = [6, 6, 1]\nbudget_steps = 6\n[harness]\nseeds = 2\n";

#[test]
fn episode_then_eval_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), TINY).unwrap();
    let out = run(dir.path(), &["episode", "--config", "c.toml", "--seed", "3", "--out", "ep", "--policy", "random"]);
    assert!(out.status.success());
    let log = read_episode_csv(&dir.path().join("ep/episode.csv")).unwrap();
    assert_eq!(log.rows.len(), 6);
    assert_eq!(log.header.policy, "random");
    assert!(log.rows.iter().all(|r| (10..=300).contains(&r.rollouts) && (3..=15).contains(&r.depth)));

    assert!(run(dir.path(), &["eval", "--config", "c.toml", "--out", "ev"]).status.success());
    for f in ["cumulative_ei.svg", "parameters_ei.svg"] {
        std::fs::remove_file(dir.path().join("ev").join(f)).unwrap();
    }
    assert!(run(dir.path(), &["plot", "--out", "ev"]).status.success());
    let svg = std::fs::read_to_string(dir.path().join("ev/cumulative_ei.svg")).unwrap();
    roxmltree::Document::parse(&svg).unwrap();
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or_default().to_string()
}

#[test]
fn failures_print_a_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(error_line(&run(p, &["eval", "--config", "missing.toml"])).starts_with("error kind=io_error msg="));

    std::fs::write(p.join("bad.toml"), "[world]\nunknown_key = 1\n").unwrap();
    assert!(error_line(&run(p, &["train", "--config", "bad.toml"])).starts_with("error kind=parse_error"));

    std::fs::write(p.join("zero.toml"), "[agent]\nworkers = 0\n").unwrap();
    let line = error_line(&run(p, &["train", "--config", "zero.toml", "--out", "t"]));
    assert!(line.starts_with("error kind=config_error") && line.contains("agent.workers"), "{line}");
    assert!(!p.join("t").exists());

    std::fs::write(p.join("c.toml"), TINY).unwrap();
    let line = error_line(&run(p, &["episode", "--config", "c.toml", "--policy", "learned-metadata"]));
    assert!(line.starts_with("error kind=config_error") || line.starts_with("error kind=checkpoint_error"), "{line}");

    std::fs::create_dir(p.join("empty")).unwrap();
    std::fs::create_dir(p.join("empty/episodes")).unwrap();
    assert!(error_line(&run(p, &["plot", "--out", "empty"])).starts_with("error kind=no_data"));
}
