use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use inertial_odometry::io::{read_imu_csv, read_truth_csv, resample_imu, write_trajectory_csv, IMU_FILE, TRUTH_FILE};
use inertial_odometry::neural::{load_params, predict_track};
use inertial_odometry::pdr::{detect_steps, pdr_track, PdrConfig};
use inertial_odometry::sim::TruthPose;
use inertial_odometry::so3::{yaw_of, RotationMatrix, Vec3};
use inertial_odometry::strapdown::{integrate_track, uniform_dt, GravityVector, ImuSample, NavState};
use inertial_odometry::window::{ChainMode, Pose2D, TrackPoint};
use serde::{Deserialize, Serialize};

use crate::config;
use crate::error::{CliError, CliResult};
use crate::manifest::{seeds_near, Manifest};

/// Below this many detected steps per minute PDR is reported as unusable.
const MIN_STEPS_PER_MINUTE: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Tracker {
    Sins,
    Pdr,
    Ionet,
}

impl Tracker {
    pub fn name(self) -> &'static str {
        match self {
            Tracker::Sins => "sins",
            Tracker::Pdr => "pdr",
            Tracker::Ionet => "ionet",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ChainFlag {
    NonOverlapping,
    Dense,
}

#[derive(Args, Debug)]
pub struct TrackArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory with imu.csv and, optionally, truth.csv for the start state.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub trackers: Vec<Tracker>,
    /// IONet weight file; takes precedence over `--model`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Selects one of the `[models]` weight files of the config, e.g. `walk` or `trolley`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum)]
    pub chain: Option<ChainFlag>,
    /// Window stride in samples for dense chaining.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrackConfig {
    dataset: Option<PathBuf>,
    trackers: Vec<Tracker>,
    weights: Option<PathBuf>,
    models: BTreeMap<String, PathBuf>,
    model: Option<String>,
    chain: ChainMode,
    /// `[x, y, psi]`; taken from the truth file when absent.
    start: Option<[f64; 3]>,
    /// Rate irregular streams are resampled to; the median input rate when absent.
    rate: Option<f64>,
    pdr: PdrConfig,
    output_dir: Option<PathBuf>,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            trackers: vec![Tracker::Sins, Tracker::Pdr],
            weights: None,
            models: BTreeMap::new(),
            model: None,
            chain: ChainMode::NonOverlapping,
            start: None,
            rate: None,
            pdr: PdrConfig::default(),
            output_dir: None,
        }
    }
}

fn median_rate(samples: &[ImuSample<f64>]) -> f64 {
    let mut dts: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    dts.sort_by(f64::total_cmp);
    1.0 / dts[dts.len() / 2]
}

fn sins(imu: &[ImuSample<f64>], init: &NavState<f64>, start: Pose2D<f64>) -> CliResult<Vec<TrackPoint<f64>>> {
    let dt = uniform_dt(imu)?;
    let states = integrate_track(imu, init, &GravityVector::standard())?;
    let mut out = vec![TrackPoint {
        t: imu[0].t,
        pose: start,
    }];
    let mut psi = start.psi;
    for (s, state) in imu.iter().zip(&states) {
        psi = yaw_of(&state.attitude).unwrap_or(psi);
        out.push(TrackPoint {
            t: s.t + dt,
            pose: Pose2D::new(state.position.x, state.position.y, psi),
        });
    }
    Ok(out)
}

fn weights_path(cfg: &TrackConfig) -> CliResult<PathBuf> {
    if let Some(w) = &cfg.weights {
        return Ok(w.clone());
    }
    match &cfg.model {
        Some(name) => cfg.models.get(name).cloned().ok_or_else(|| {
            let known: Vec<_> = cfg.models.keys().map(String::as_str).collect();
            CliError::config(format!(
                "no weights for model {name:?} (configured: {})",
                known.join(", ")
            ))
        }),
        None => Err(CliError::config(
            "tracker ionet needs weights: pass --weights or --model with a [models] table in the config",
        )),
    }
}

fn initial_state(cfg: &TrackConfig, truth: Option<&[TruthPose<f64>]>) -> (Pose2D<f64>, NavState<f64>) {
    let first = truth.and_then(|t| t.first());
    let start = match (cfg.start, first) {
        (Some([x, y, psi]), _) => Pose2D::new(x, y, psi),
        (None, Some(p)) => Pose2D::new(p.position.x, p.position.y, yaw_of(&p.attitude).unwrap_or(0.0)),
        (None, None) => Pose2D::origin(),
    };
    let init = match first {
        Some(p) => p.nav_state(),
        None => {
            eprintln!("warning: no truth file; SINS starts level and at rest");
            NavState::new(
                RotationMatrix::rot_z(start.psi),
                Vec3::zeros(),
                Vec3::new(start.x, start.y, 0.0),
            )
        }
    };
    (start, init)
}

pub fn run(args: TrackArgs) -> CliResult<()> {
    let (mut cfg, base) = config::load::<TrackConfig>(args.config.as_deref())?;
    cfg.dataset = cfg.dataset.map(|p| config::rebase(&base, &p));
    cfg.weights = cfg.weights.map(|p| config::rebase(&base, &p));
    for p in cfg.models.values_mut() {
        *p = config::rebase(&base, p);
    }
    cfg.dataset = args.dataset.or(cfg.dataset);
    if !args.trackers.is_empty() {
        cfg.trackers = args.trackers;
    }
    cfg.trackers.sort();
    cfg.trackers.dedup();
    cfg.weights = args.weights.or(cfg.weights);
    cfg.model = args.model.or(cfg.model);
    match (args.chain, args.stride) {
        (Some(ChainFlag::NonOverlapping), _) => cfg.chain = ChainMode::NonOverlapping,
        (Some(ChainFlag::Dense), stride) => {
            cfg.chain = ChainMode::Dense {
                stride: stride.unwrap_or(10),
            }
        }
        (None, Some(stride)) => cfg.chain = ChainMode::Dense { stride },
        (None, None) => {}
    }
    let dataset = cfg
        .dataset
        .clone()
        .ok_or_else(|| CliError::config("no input: set `dataset` in the config or pass --dataset"))?;
    let ionet_weights = if cfg.trackers.contains(&Tracker::Ionet) {
        Some(weights_path(&cfg)?)
    } else {
        None
    };
    let out = config::output_dir(
        args.output_dir,
        cfg.output_dir.take().map(|p| config::rebase(&base, &p)),
    )?;

    let imu_path = dataset.join(IMU_FILE);
    let truth_path = dataset.join(TRUTH_FILE);
    let mut manifest = Manifest::new("track", &cfg, seeds_near(&dataset));
    let mut imu = read_imu_csv::<f64>(&imu_path)?;
    manifest.input(&imu_path)?;
    if imu.len() < 2 {
        return Err(CliError::data(format!(
            "{} holds fewer than two samples",
            imu_path.display()
        )));
    }
    if uniform_dt(&imu).is_err() {
        let rate = cfg.rate.unwrap_or_else(|| median_rate(&imu));
        eprintln!("warning: irregular timestamps; resampling to {rate} Hz");
        imu = resample_imu(&imu, rate)?;
    }
    let truth = if truth_path.is_file() {
        manifest.input(&truth_path)?;
        Some(read_truth_csv::<f64>(&truth_path)?)
    } else {
        None
    };
    let (start, init) = initial_state(&cfg, truth.as_deref());

    for &tracker in &cfg.trackers {
        let track = match tracker {
            Tracker::Sins => sins(&imu, &init, start)?,
            Tracker::Pdr => {
                let steps = detect_steps(&imu, &cfg.pdr)?.len();
                let minutes = (imu[imu.len() - 1].t - imu[0].t) / 60.0;
                if (steps as f64) < MIN_STEPS_PER_MINUTE * minutes {
                    eprintln!(
                        "warning: pdr detected {steps} steps in {:.1} min; the motion is probably not walking",
                        minutes
                    );
                }
                pdr_track(&imu, start, &cfg.pdr)?
            }
            Tracker::Ionet => {
                let path = ionet_weights.as_deref().expect("checked above");
                let model = load_params::<f64>(path).map_err(|e| CliError::from(e).context("loading weights"))?;
                manifest.input(path)?;
                let mut track = vec![TrackPoint {
                    t: imu[0].t,
                    pose: start,
                }];
                track.extend(predict_track(&model, &imu, start, cfg.chain)?);
                track
            }
        };
        let name = format!("{}.csv", tracker.name());
        write_trajectory_csv(&out.join(&name), &track)?;
        manifest.output(&out, &name)?;
        eprintln!("{}: {} poses", tracker.name(), track.len());
    }
    manifest.write(&out)?;
    Ok(())
}

pub fn existing_tracks(dir: &Path) -> Vec<(String, PathBuf)> {
    [Tracker::Sins, Tracker::Pdr, Tracker::Ionet]
        .iter()
        .map(|t| (t.name().to_string(), dir.join(format!("{}.csv", t.name()))))
        .filter(|(_, p)| p.is_file())
        .collect()
}
