use std::path::PathBuf;

use clap::{Args, ValueEnum};
use inertial_odometry::io::{export_dataset, IMU_FILE, TRUTH_FILE};
use inertial_odometry::sim::{corrupt, inverse_imu, simulate, MotionProfile, NoiseModel};
use inertial_odometry::strapdown::GravityVector;
use serde::{Deserialize, Serialize};

use crate::config::{self, Source};
use crate::error::{CliError, CliResult};
use crate::manifest::{value_hash, Manifest};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Walk,
    Trolley,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Motion profile file (TOML or JSON).
    #[arg(long, conflicts_with = "kind")]
    pub profile: Option<PathBuf>,
    /// Built-in profile instead of a profile file.
    #[arg(long, value_enum)]
    pub kind: Option<Preset>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub rate: Option<f64>,
    /// `zero`, `consumer-mems` or a noise model file.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    profile: Option<Source<MotionProfile>>,
    noise: Option<Source<NoiseModel>>,
    seed: u64,
    noise_seed: Option<u64>,
    output_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct Resolved {
    profile: MotionProfile,
    noise: NoiseModel,
    seed: u64,
}

fn preset(kind: Preset, duration: f64) -> MotionProfile {
    match kind {
        Preset::Walk => MotionProfile::walk(1.2, duration),
        Preset::Trolley => MotionProfile::trolley(1.0, duration).with_speed_range(0.5, 1.5),
    }
}

const NOISE_PRESETS: [&str; 2] = ["zero", "consumer-mems"];

fn is_preset(source: &Source<NoiseModel>) -> bool {
    matches!(source, Source::Path(p) if NOISE_PRESETS.iter().any(|name| p.as_os_str() == *name))
}

/// Presets take the run seed; noise files keep their own unless overridden.
fn noise_from(source: Source<NoiseModel>, seed: u64) -> CliResult<NoiseModel> {
    match source {
        Source::Path(p) if p.as_os_str() == "zero" => Ok(NoiseModel::zero()),
        Source::Path(p) if p.as_os_str() == "consumer-mems" => Ok(NoiseModel::consumer_mems(seed)),
        other => other.resolve("noise model"),
    }
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let (mut cfg, base) = config::load::<SimulateConfig>(args.config.as_deref())?;
    if let Some(p) = cfg.profile.as_mut() {
        p.rebase(&base);
    }
    if let Some(n) = cfg.noise.as_mut().filter(|n| !is_preset(n)) {
        n.rebase(&base);
    }

    let mut profile = if let Some(p) = args.profile {
        Source::Path(p).resolve("motion profile")?
    } else if let Some(kind) = args.kind {
        preset(kind, args.duration.unwrap_or(60.0))
    } else {
        cfg.profile
            .ok_or_else(|| {
                CliError::config("no motion profile: set `profile` in the config or pass --profile or --kind")
            })?
            .resolve("motion profile")?
    };
    if let Some(d) = args.duration {
        profile.duration = d;
    }
    if let Some(r) = args.rate {
        profile.rate = r;
    }
    profile.validate()?;

    let seed = args.seed.unwrap_or(cfg.seed);
    let noise_source = args.noise.map(|s| Source::Path(PathBuf::from(s))).or(cfg.noise);
    let mut noise = match noise_source {
        Some(source) => noise_from(source, seed)?,
        None => NoiseModel::zero(),
    };
    if let Some(s) = args.noise_seed.or(cfg.noise_seed) {
        noise.seed = s;
    }
    noise.validate()?;

    let out = config::output_dir(args.output_dir, cfg.output_dir.map(|p| config::rebase(&base, &p)))?;
    let truth = simulate::<f64>(&profile, seed)?;
    let clean = inverse_imu(&truth, &GravityVector::standard())?;
    let imu = corrupt(&clean, &noise)?;
    export_dataset(&out, &imu, &truth)?;

    let resolved = Resolved { profile, noise, seed };
    let mut manifest = Manifest::new("simulate", &resolved, vec![seed, noise.seed]);
    manifest
        .hashes
        .insert("profile_sha256".into(), value_hash(&resolved.profile));
    manifest
        .hashes
        .insert("noise_sha256".into(), value_hash(&resolved.noise));
    manifest.output(&out, IMU_FILE)?;
    manifest.output(&out, TRUTH_FILE)?;
    manifest.write(&out)?;
    eprintln!(
        "simulated {:?} {} s: {} samples -> {}",
        resolved.profile.kind,
        resolved.profile.duration,
        imu.len(),
        out.display()
    );
    Ok(())
}
