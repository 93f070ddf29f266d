use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use inertial_odometry::eval::{
    error_cdf, position_errors, resample_hold, MetricReport, TrackerReport, DEFAULT_CDF_RESOLUTION, DEFAULT_MARKS,
};
use inertial_odometry::io::{read_trajectory_csv, read_truth_csv, TRUTH_FILE};
use serde::{Deserialize, Serialize};

use crate::config;
use crate::error::{CliError, CliResult};
use crate::manifest::{seeds_near, value_hash, Manifest};
use crate::track::existing_tracks;

pub const REPORT_FILE: &str = "report.json";

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Truth CSV or a dataset directory containing truth.csv.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// `name=path` of a trajectory CSV. Repeatable.
    #[arg(long = "estimate", value_parser = parse_estimate)]
    pub estimates: Vec<(String, PathBuf)>,
    /// Directory written by `track`; every tracker CSV in it is evaluated.
    #[arg(long)]
    pub tracks: Option<PathBuf>,
    /// Common evaluation grid in Hz; 0 matches estimates at their own timestamps.
    #[arg(long)]
    pub grid_rate: Option<f64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

fn parse_estimate(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected name=path")?;
    if name.is_empty() || path.is_empty() {
        return Err("expected name=path".into());
    }
    Ok((name.into(), path.into()))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalConfig {
    truth: Option<PathBuf>,
    estimates: BTreeMap<String, PathBuf>,
    tracks: Option<PathBuf>,
    marks: Vec<f64>,
    cdf_resolution: f64,
    grid_rate: f64,
    seeds: Vec<u64>,
    output_dir: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            truth: None,
            estimates: BTreeMap::new(),
            tracks: None,
            marks: DEFAULT_MARKS.to_vec(),
            cdf_resolution: DEFAULT_CDF_RESOLUTION,
            grid_rate: 10.0,
            seeds: Vec::new(),
            output_dir: None,
        }
    }
}

fn csv_table(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut text = format!("{header}\n");
    for row in rows {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(text, "{}", cells.join(",")).unwrap();
    }
    text
}

pub fn run(args: EvalArgs) -> CliResult<()> {
    let (mut cfg, base) = config::load::<EvalConfig>(args.config.as_deref())?;
    cfg.truth = args.truth.or(cfg.truth.map(|p| config::rebase(&base, &p)));
    for p in cfg.estimates.values_mut() {
        *p = config::rebase(&base, p);
    }
    cfg.tracks = args.tracks.or(cfg.tracks.map(|p| config::rebase(&base, &p)));
    if let Some(dir) = &cfg.tracks {
        for (name, path) in existing_tracks(dir) {
            cfg.estimates.entry(name).or_insert(path);
        }
    }
    cfg.estimates.extend(args.estimates);
    cfg.grid_rate = args.grid_rate.unwrap_or(cfg.grid_rate);
    if !(cfg.grid_rate >= 0.0) {
        return Err(CliError::config(format!(
            "grid_rate must be >= 0, got {}",
            cfg.grid_rate
        )));
    }
    let truth_path = cfg
        .truth
        .clone()
        .ok_or_else(|| CliError::config("no truth: set `truth` in the config or pass --truth"))?;
    let truth_path = if truth_path.is_dir() {
        truth_path.join(TRUTH_FILE)
    } else {
        truth_path
    };
    if cfg.estimates.is_empty() {
        return Err(CliError::config(
            "nothing to evaluate: pass --estimate name=path or --tracks <dir>",
        ));
    }
    let out = config::output_dir(
        args.output_dir,
        cfg.output_dir.take().map(|p| config::rebase(&base, &p)),
    )?;

    let mut seeds = cfg.seeds.clone();
    for s in std::iter::once(&truth_path)
        .chain(cfg.estimates.values())
        .flat_map(|p| seeds_near(p))
    {
        if !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    let mut manifest = Manifest::new("eval", &cfg, seeds.clone());
    let truth = read_truth_csv::<f64>(&truth_path)?;
    manifest.input(&truth_path)?;
    let grid: Option<Vec<f64>> = (cfg.grid_rate > 0.0 && truth.len() > 1).then(|| {
        let dt = (truth[truth.len() - 1].t - truth[0].t) / (truth.len() - 1) as f64;
        let every = ((1.0 / (cfg.grid_rate * dt)).round() as usize).max(1);
        truth.iter().step_by(every).map(|p| p.t).collect()
    });

    let mut trackers = Vec::new();
    for (name, path) in &cfg.estimates {
        let est = read_trajectory_csv::<f64>(path)?;
        manifest.input(path)?;
        let est = match &grid {
            Some(times) => resample_hold(&est, times),
            None => est,
        };
        let series = position_errors(&est, &truth).map_err(|e| CliError::from(e).context(name))?;
        let report = TrackerReport::build(name, &series, &cfg.marks, cfg.cdf_resolution)?;
        let errors_name = format!("errors_{name}.csv");
        let cdf_name = format!("cdf_{name}.csv");
        let errors = csv_table(
            "t,distance,error",
            (0..series.len()).map(|k| vec![series.t[k], series.distance[k], series.error[k]]),
        );
        let cdf = csv_table(
            "error,fraction",
            error_cdf(&series, cfg.cdf_resolution)?
                .into_iter()
                .map(|(e, f)| vec![e, f]),
        );
        for (file, text) in [(&errors_name, errors), (&cdf_name, cdf)] {
            let p = out.join(file);
            fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
            manifest.output(&out, file)?;
        }
        eprintln!(
            "{name}: p90 {:.3} m, max {:.3} m over {:.1} m",
            report.p90_error, report.max_error, report.total_distance
        );
        trackers.push(report);
    }

    let report = MetricReport {
        config_hash: value_hash(&cfg),
        seeds,
        trackers,
    };
    let path = out.join(REPORT_FILE);
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    manifest.output(&out, REPORT_FILE)?;
    manifest.write(&out)
}
