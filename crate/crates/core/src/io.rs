//! CSV import and export of IMU streams, truth tracks and 2D trajectories.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::sim::TruthPose;
use crate::so3::{Mat3, RotationMatrix, Vec3};
use crate::strapdown::ImuSample;
use crate::window::{Pose2D, TrackPoint};

pub const IMU_HEADER: [&str; 7] = ["t", "ax", "ay", "az", "wx", "wy", "wz"];
pub const TRUTH_HEADER: [&str; 16] = [
    "t", "x", "y", "z", "vx", "vy", "vz", "c11", "c12", "c13", "c21", "c22", "c23", "c31", "c32", "c33",
];
pub const TRAJECTORY_HEADER: [&str; 4] = ["t", "x", "y", "psi"];

pub const IMU_FILE: &str = "imu.csv";
pub const TRUTH_FILE: &str = "truth.csv";

/// Tolerance on the orthogonality of rotation matrices read back from text.
const READ_ROTATION_TOLERANCE: f64 = 1e-6;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::corrupt(path, format!("{other:?}")),
    }
}

fn write_rows<const N: usize>(path: &Path, header: [&str; N], rows: impl Iterator<Item = [f64; N]>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<const N: usize>(path: &Path, header: [&str; N]) -> Result<Vec<[f64; N]>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let found = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(Error::corrupt(path, format!("expected header {}", header.join(","))));
    }
    r.records()
        .enumerate()
        .map(|(line, rec)| {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            if rec.len() != N {
                return Err(Error::corrupt(path, format!("row {}: expected {N} fields", line + 1)));
            }
            let mut row = [0.0; N];
            for (slot, field) in row.iter_mut().zip(rec.iter()) {
                *slot = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::corrupt(path, format!("row {}: bad number {field:?}", line + 1)))?;
            }
            Ok(row)
        })
        .collect()
}

pub fn write_imu_csv<T: Real>(path: &Path, samples: &[ImuSample<T>]) -> Result<()> {
    write_rows(
        path,
        IMU_HEADER,
        samples.iter().map(|s| {
            let c = s.channels().map(|v| v.to_f64_lossless());
            [s.t.to_f64_lossless(), c[0], c[1], c[2], c[3], c[4], c[5]]
        }),
    )
}

pub fn read_imu_csv<T: Real>(path: &Path) -> Result<Vec<ImuSample<T>>> {
    read_rows(path, IMU_HEADER)?
        .into_iter()
        .map(|r| {
            let s = ImuSample::new(
                T::lit(r[0]),
                Vec3::new(r[1], r[2], r[3]).cast(),
                Vec3::new(r[4], r[5], r[6]).cast(),
            );
            if s.is_finite() && s.t.is_finite() {
                Ok(s)
            } else {
                Err(Error::corrupt(path, format!("non-finite sample at t={}", r[0])))
            }
        })
        .collect()
}

/// Linear interpolation of an irregularly timestamped stream onto `t0 + k / rate`,
/// ending at or before the last input timestamp.
pub fn resample_imu<T: Real>(samples: &[ImuSample<T>], rate: f64) -> Result<Vec<ImuSample<T>>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidInput(format!("resampling rate must be > 0, got {rate}")));
    }
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::InvalidInput("timestamps must be strictly increasing".into()));
    }
    let t0 = samples[0].t.to_f64_lossless();
    let span = samples[samples.len() - 1].t.to_f64_lossless() - t0;
    let count = (span * rate + 1e-9).floor() as usize + 1;
    let mut j = 0;
    Ok((0..count)
        .map(|k| {
            let t = T::lit(t0 + k as f64 / rate);
            while j + 2 < samples.len() && samples[j + 1].t <= t {
                j += 1;
            }
            let (a, b) = (&samples[j], &samples[j + 1]);
            let f = ((t - a.t) / (b.t - a.t)).min(T::one()).max(T::zero());
            let lerp = |x: Vec3<T>, y: Vec3<T>| x + (y - x) * f;
            ImuSample::new(t, lerp(a.accel, b.accel), lerp(a.gyro, b.gyro))
        })
        .collect())
}

pub fn write_truth_csv<T: Real>(path: &Path, truth: &[TruthPose<T>]) -> Result<()> {
    write_rows(
        path,
        TRUTH_HEADER,
        truth.iter().map(|p| {
            let mut row = [0.0; 16];
            row[0] = p.t.to_f64_lossless();
            for i in 0..3 {
                row[1 + i] = p.position[i].to_f64_lossless();
                row[4 + i] = p.velocity[i].to_f64_lossless();
            }
            for (dst, v) in row[7..].iter_mut().zip(p.attitude.matrix().to_row_major()) {
                *dst = v.to_f64_lossless();
            }
            row
        }),
    )
}

pub fn read_truth_csv<T: Real>(path: &Path) -> Result<Vec<TruthPose<T>>> {
    read_rows(path, TRUTH_HEADER)?
        .into_iter()
        .map(|r| {
            let mut c = [0.0; 9];
            c.copy_from_slice(&r[7..]);
            let m = Mat3::from_row_major(c);
            if !(m.orthogonality_error() <= READ_ROTATION_TOLERANCE && m.determinant() > 0.0) {
                return Err(Error::corrupt(
                    path,
                    format!("attitude at t={} is not a rotation", r[0]),
                ));
            }
            Ok(TruthPose {
                t: T::lit(r[0]),
                position: Vec3::new(r[1], r[2], r[3]).cast(),
                velocity: Vec3::new(r[4], r[5], r[6]).cast(),
                attitude: RotationMatrix::from_matrix_unchecked(m.cast()),
            })
        })
        .collect()
}

pub fn write_trajectory_csv<T: Real>(path: &Path, track: &[TrackPoint<T>]) -> Result<()> {
    write_rows(
        path,
        TRAJECTORY_HEADER,
        track.iter().map(|p| {
            [
                p.t.to_f64_lossless(),
                p.pose.x.to_f64_lossless(),
                p.pose.y.to_f64_lossless(),
                p.pose.psi.to_f64_lossless(),
            ]
        }),
    )
}

pub fn read_trajectory_csv<T: Real>(path: &Path) -> Result<Vec<TrackPoint<T>>> {
    Ok(read_rows(path, TRAJECTORY_HEADER)?
        .into_iter()
        .map(|r| TrackPoint {
            t: T::lit(r[0]),
            pose: Pose2D::new(T::lit(r[1]), T::lit(r[2]), T::lit(r[3])),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPaths {
    pub imu: PathBuf,
    pub truth: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            imu: dir.join(IMU_FILE),
            truth: dir.join(TRUTH_FILE),
        }
    }
}

/// Writes `imu.csv` and `truth.csv` into `dir`, creating it if needed.
pub fn export_dataset<T: Real>(dir: &Path, samples: &[ImuSample<T>], truth: &[TruthPose<T>]) -> Result<DatasetPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DatasetPaths::in_dir(dir);
    write_imu_csv(&paths.imu, samples)?;
    write_truth_csv(&paths.truth, truth)?;
    Ok(paths)
}

pub fn load_dataset<T: Real>(dir: &Path) -> Result<(Vec<ImuSample<T>>, Vec<TruthPose<T>>)> {
    let paths = DatasetPaths::in_dir(dir);
    Ok((read_imu_csv(&paths.imu)?, read_truth_csv(&paths.truth)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{inverse_imu, synth_walk, MotionProfile};
    use crate::strapdown::GravityVector;

    #[test]
    fn dataset_round_trip_is_exact() {
        let truth = synth_walk::<f64>(&MotionProfile::walk(1.1, 3.0), 1).unwrap();
        let imu = inverse_imu(&truth, &GravityVector::standard()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = export_dataset(dir.path(), &imu, &truth).unwrap();
        let header = fs::read_to_string(&paths.imu).unwrap();
        assert!(header.starts_with("t,ax,ay,az,wx,wy,wz\n"));
        let (imu2, truth2) = load_dataset::<f64>(dir.path()).unwrap();
        assert_eq!(imu2, imu);
        assert_eq!(truth2, truth);
    }

    #[test]
    fn trajectory_round_trip() {
        let track = vec![
            TrackPoint {
                t: 2.0,
                pose: Pose2D::new(1.0, 0.5, 0.1),
            },
            TrackPoint {
                t: 4.0,
                pose: Pose2D::new(2.0, 1.0, -3.0),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        write_trajectory_csv(&p, &track).unwrap();
        assert_eq!(read_trajectory_csv::<f64>(&p).unwrap(), track);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("imu.csv");
        fs::write(&p, "t,ax,ay\n0,1,2\n").unwrap();
        assert!(matches!(read_imu_csv::<f64>(&p), Err(Error::CorruptFile { .. })));
        fs::write(&p, "t,ax,ay,az,wx,wy,wz\n0,1,2,x,4,5,6\n").unwrap();
        assert!(matches!(read_imu_csv::<f64>(&p), Err(Error::CorruptFile { .. })));
        assert!(matches!(
            read_imu_csv::<f64>(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn resampling_irregular_stream() {
        let times = [0.0, 0.004, 0.013, 0.02, 0.031, 0.04];
        let samples: Vec<ImuSample<f64>> = times
            .iter()
            .map(|&t| ImuSample::new(t, Vec3::new(t, 2.0 * t, 1.0), Vec3::new(-t, 0.0, 3.0)))
            .collect();
        let out = resample_imu(&samples, 100.0).unwrap();
        assert_eq!(out.len(), 5);
        for (k, s) in out.iter().enumerate() {
            let t = k as f64 * 0.01;
            assert!((s.t - t).abs() < 1e-12);
            assert!((s.accel - Vec3::new(t, 2.0 * t, 1.0)).max_abs() < 1e-12);
            assert!((s.gyro - Vec3::new(-t, 0.0, 3.0)).max_abs() < 1e-12);
        }
        assert!(resample_imu(&samples[..1], 100.0).is_err());
        assert!(resample_imu(&samples, 0.0).is_err());
    }
}
