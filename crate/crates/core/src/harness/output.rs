//! CSV and SVG files of an experiment.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{cumulative_reward_svg, parameter_trajectory_svg, EpisodeHeader, EpisodeLog, ExperimentResults, StepRow};
use crate::error::{IppError, Result};

/// Paths written by [`emit_outputs`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputFiles {
    pub episodes: Vec<PathBuf>,
    pub results: PathBuf,
    pub aggregate: PathBuf,
    pub sign_tests: PathBuf,
    pub timings: PathBuf,
    pub plots: Vec<PathBuf>,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| IppError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| IppError::csv(path, e))?;
    }
    w.flush().map_err(|e| IppError::io(path, e))
}

/// `# seed=...,objective=...,world=...,policy=...` followed by the step rows.
pub fn write_episode_csv(log: &EpisodeLog, path: &Path) -> Result<()> {
    let h = &log.header;
    let mut file = std::fs::File::create(path).map_err(|e| IppError::io(path, e))?;
    writeln!(file, "# seed={},objective={},world={},policy={}", h.seed, h.objective, h.world, h.policy)
        .map_err(|e| IppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in &log.rows {
        w.serialize(r).map_err(|e| IppError::csv(path, e))?;
    }
    w.flush().map_err(|e| IppError::io(path, e))
}

pub fn read_episode_csv(path: &Path) -> Result<EpisodeLog> {
    let file = std::fs::File::open(path).map_err(|e| IppError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| IppError::io(path, e))?;
    let header = parse_header(first.trim_end()).ok_or_else(|| IppError::Parse { line: 1, msg: "bad episode header".into() })?;
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<StepRow>().enumerate() {
        rows.push(rec.map_err(|e| IppError::Parse { line: i + 3, msg: e.to_string() })?);
    }
    Ok(EpisodeLog { header, rows })
}

fn parse_header(line: &str) -> Option<EpisodeHeader> {
    let body = line.strip_prefix("# ")?;
    let mut seed = None;
    let (mut objective, mut world, mut policy) = (None, None, None);
    for kv in body.split(',') {
        let (k, v) = kv.split_once('=')?;
        match k {
            "seed" => seed = v.parse().ok(),
            "objective" => objective = Some(v.to_string()),
            "world" => world = Some(v.to_string()),
            "policy" => policy = Some(v.to_string()),
            _ => return None,
        }
    }
    Some(EpisodeHeader { seed: seed?, objective: objective?, world: world?, policy: policy? })
}

pub(crate) fn episode_file_name(h: &EpisodeHeader) -> String {
    format!("{}_{}_{}_{}.csv", h.objective, h.policy, h.world, h.seed)
}

/// Writes per-episode logs, the result tables and the plots into `out_dir`.
/// Nothing is written when there are no episode logs.
pub fn emit_outputs(results: &ExperimentResults, out_dir: &Path) -> Result<OutputFiles> {
    if results.logs.is_empty() {
        return Err(IppError::NoData);
    }
    let ep_dir = out_dir.join("episodes");
    std::fs::create_dir_all(&ep_dir).map_err(|e| IppError::io(&ep_dir, e))?;
    let mut files = OutputFiles::default();
    for log in &results.logs {
        let p = ep_dir.join(episode_file_name(&log.header));
        write_episode_csv(log, &p)?;
        files.episodes.push(p);
    }
    files.results = out_dir.join("results.csv");
    write_rows(&files.results, &results.rows)?;
    files.aggregate = out_dir.join("aggregate.csv");
    write_rows(&files.aggregate, &results.aggregates)?;
    files.sign_tests = out_dir.join("sign_tests.csv");
    write_rows(&files.sign_tests, &results.sign_tests)?;

    #[derive(Serialize)]
    struct Timing<'a> {
        world: &'a str,
        objective: &'a str,
        policy: &'a str,
        seed: u64,
        wall_ms: f64,
    }
    let timings: Vec<Timing> = results
        .rows
        .iter()
        .zip(&results.wall_ms)
        .map(|(r, &wall_ms)| Timing { world: &r.world, objective: &r.objective, policy: &r.policy, seed: r.seed, wall_ms })
        .collect();
    files.timings = out_dir.join("timings.csv");
    write_rows(&files.timings, &timings)?;

    files.plots = write_plots(&results.logs, out_dir)?;
    Ok(files)
}

/// One cumulative-reward and one parameter plot per objective.
pub fn write_plots(logs: &[EpisodeLog], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut objectives: Vec<&str> = logs.iter().map(|l| l.header.objective.as_str()).collect();
    objectives.dedup();
    objectives.sort_unstable();
    objectives.dedup();
    let mut out = Vec::new();
    for obj in objectives {
        let subset: Vec<&EpisodeLog> = logs.iter().filter(|l| l.header.objective == obj).collect();
        for (name, svg) in [
            (format!("cumulative_{obj}.svg"), cumulative_reward_svg(&subset, &format!("Cumulative reward ({obj})"))),
            (format!("parameters_{obj}.svg"), parameter_trajectory_svg(&subset, &format!("Chosen parameters ({obj})"))),
        ] {
            let p = out_dir.join(name);
            std::fs::write(&p, svg).map_err(|e| IppError::io(&p, e))?;
            out.push(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log() -> EpisodeLog {
        EpisodeLog {
            header: EpisodeHeader { seed: 42, objective: "ei".into(), world: "w".into(), policy: "naive".into() },
            rows: (0..3)
                .map(|i| StepRow {
                    step: i,
                    decision: i / 2,
                    chain_pos: i % 2,
                    action: "left".into(),
                    ix: i,
                    iy: 1,
                    iz: 0,
                    rollouts: 100,
                    gamma: 0.9,
                    ttest: 0.05 / 3.0,
                    depth: 8,
                    chain_len: 2,
                    samples_added: 4,
                    env_reward: 0.1 * i as f64 + 1.0 / 7.0,
                    shaped_reward: -1.0 / 3.0,
                    cumulative_reward: 1e-17 * i as f64,
                    generator_calls: 800,
                })
                .collect(),
        }
    }

    #[test]
    fn episode_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let l = log();
        write_episode_csv(&l, &p).unwrap();
        assert_eq!(read_episode_csv(&p).unwrap(), l);
    }

    #[test]
    fn header_parsing() {
        assert!(parse_header("# seed=1,objective=ei,world=w,policy=p").is_some());
        assert!(parse_header("seed=1,objective=ei,world=w,policy=p").is_none());
        assert!(parse_header("# seed=x,objective=ei,world=w,policy=p").is_none());
        assert!(parse_header("# seed=1,objective=ei,world=w").is_none());
    }

    #[test]
    fn empty_results_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let empty = ExperimentResults {
            rows: vec![],
            logs: vec![],
            aggregates: vec![],
            sign_tests: vec![],
            wall_ms: vec![],
        };
        assert!(matches!(emit_outputs(&empty, &out), Err(IppError::NoData)));
        assert!(!out.exists());
    }
}
