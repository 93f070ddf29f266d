//! Trajectory error metrics: planar position error against truth, empirical
//! percentiles, CDF curves and errors at travelled-distance marks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::sim::TruthPose;
use crate::window::TrackPoint;

pub const DEFAULT_MARKS: [f64; 2] = [50.0, 100.0];
pub const DEFAULT_CDF_RESOLUTION: f64 = 0.1;

/// Horizontal error per matched timestamp plus the truth distance walked by then.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub t: Vec<f64>,
    pub error: Vec<f64>,
    pub distance: Vec<f64>,
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.error.len()
    }

    pub fn is_empty(&self) -> bool {
        self.error.is_empty()
    }
}

/// Matches every estimate to the nearest truth sample (within half a truth
/// period) and measures the planar distance. Unmatched estimates are skipped.
pub fn position_errors<T: Real>(est: &[TrackPoint<T>], truth: &[TruthPose<T>]) -> Result<ErrorSeries> {
    if truth.is_empty() || est.is_empty() {
        return Err(Error::Alignment("empty estimate or truth".into()));
    }
    let t0 = truth[0].t.to_f64_lossless();
    let dt = if truth.len() > 1 {
        (truth[truth.len() - 1].t.to_f64_lossless() - t0) / (truth.len() - 1) as f64
    } else {
        0.0
    };
    let mut distance = Vec::with_capacity(truth.len());
    let mut walked = 0.0;
    for (k, p) in truth.iter().enumerate() {
        if k > 0 {
            walked += (p.position - truth[k - 1].position).horizontal_norm().to_f64_lossless();
        }
        distance.push(walked);
    }

    let mut series = ErrorSeries::default();
    let tol = dt * 0.5 + 1e-9;
    for point in est {
        let t = point.t.to_f64_lossless();
        let idx = if dt > 0.0 { ((t - t0) / dt).round() } else { 0.0 };
        if idx < 0.0 || idx >= truth.len() as f64 {
            continue;
        }
        let k = idx as usize;
        if (truth[k].t.to_f64_lossless() - t).abs() > tol {
            continue;
        }
        let dx = point.pose.x.to_f64_lossless() - truth[k].position.x.to_f64_lossless();
        let dy = point.pose.y.to_f64_lossless() - truth[k].position.y.to_f64_lossless();
        series.t.push(t);
        series.error.push(dx.hypot(dy));
        series.distance.push(distance[k]);
    }
    if series.is_empty() {
        return Err(Error::Alignment(
            "no estimate timestamp matches the truth stream".into(),
        ));
    }
    Ok(series)
}

/// Zero-order hold onto `times`: each time takes the latest pose at or before
/// it, so trackers with different native rates can be compared on one grid.
/// Times before the first pose are dropped.
pub fn resample_hold<T: Real>(track: &[TrackPoint<T>], times: &[T]) -> Vec<TrackPoint<T>> {
    let mut out = Vec::with_capacity(times.len());
    let mut k = 0;
    for &t in times {
        while k + 1 < track.len() && track[k + 1].t <= t {
            k += 1;
        }
        match track.get(k) {
            Some(p) if p.t <= t => out.push(TrackPoint { t, pose: p.pose }),
            _ => {}
        }
    }
    out
}

/// Smallest recorded error `e` with at least `fraction` of the errors `<= e`.
pub fn percentile_error(series: &ErrorSeries, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    if series.is_empty() {
        return Err(Error::EmptyInput("error series is empty".into()));
    }
    let mut sorted = series.error.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = (fraction * sorted.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

/// Error at the first timestamp whose walked distance reaches each mark, then the endpoint error.
pub fn error_at_distance(series: &ErrorSeries, marks: &[f64]) -> Result<Vec<f64>> {
    let (Some(&end), Some(&total)) = (series.error.last(), series.distance.last()) else {
        return Err(Error::EmptyInput("error series is empty".into()));
    };
    let mut out = Vec::with_capacity(marks.len() + 1);
    for &mark in marks {
        let k = series
            .distance
            .iter()
            .position(|&d| d >= mark)
            .ok_or_else(|| Error::OutOfRange(format!("mark {mark} m is beyond the {total:.3} m track")))?;
        out.push(series.error[k]);
    }
    out.push(end);
    Ok(out)
}

/// Fraction of errors `<= e`.
pub fn cdf_at(series: &ErrorSeries, e: f64) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    series.error.iter().filter(|&&x| x <= e).count() as f64 / series.len() as f64
}

/// `(e, fraction <= e)` on the grid `0, r, 2r, ...` up to the first point reaching 1.
pub fn error_cdf(series: &ErrorSeries, resolution: f64) -> Result<Vec<(f64, f64)>> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidInput(format!("resolution must be > 0, got {resolution}")));
    }
    if series.is_empty() {
        return Ok(vec![(0.0, 1.0)]);
    }
    let mut sorted = series.error.clone();
    sorted.sort_by(f64::total_cmp);
    let max = *sorted.last().unwrap();
    let steps = (max / resolution).ceil() as usize;
    let n = sorted.len() as f64;
    let mut below = 0;
    Ok((0..=steps)
        .map(|i| {
            let e = i as f64 * resolution;
            while below < sorted.len() && sorted[below] <= e {
                below += 1;
            }
            let fraction = if i == steps { 1.0 } else { below as f64 / n };
            (e, fraction)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkError {
    pub distance: f64,
    pub error: f64,
}

/// Metrics of one tracker on one track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerReport {
    pub tracker: String,
    pub samples: usize,
    pub total_distance: f64,
    pub p50_error: f64,
    pub p90_error: f64,
    pub max_error: f64,
    pub endpoint_error: f64,
    /// Only marks within the walked distance are reported.
    pub distance_marks: Vec<MarkError>,
    pub cdf: Vec<[f64; 2]>,
}

impl TrackerReport {
    pub fn build(tracker: &str, series: &ErrorSeries, marks: &[f64], resolution: f64) -> Result<Self> {
        let total = *series
            .distance
            .last()
            .ok_or_else(|| Error::EmptyInput("error series is empty".into()))?;
        let reachable: Vec<f64> = marks.iter().copied().filter(|&m| m <= total).collect();
        let at = error_at_distance(series, &reachable)?;
        Ok(Self {
            tracker: tracker.into(),
            samples: series.len(),
            total_distance: total,
            p50_error: percentile_error(series, 0.5)?,
            p90_error: percentile_error(series, 0.9)?,
            max_error: percentile_error(series, 1.0)?,
            endpoint_error: *at.last().unwrap(),
            distance_marks: reachable
                .iter()
                .zip(&at)
                .map(|(&distance, &error)| MarkError { distance, error })
                .collect(),
            cdf: error_cdf(series, resolution)?
                .into_iter()
                .map(|(e, f)| [e, f])
                .collect(),
        })
    }
}

/// Report over several trackers with the provenance needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub trackers: Vec<TrackerReport>,
}
