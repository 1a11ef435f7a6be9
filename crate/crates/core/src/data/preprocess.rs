use serde::{Deserialize, Serialize};

use super::load::RawRecord;
use super::projection::ProjectionSpec;
use crate::error::Result;
use crate::trajectory::{distance, Point, DEFAULT_INTERVAL_S};

/// A projected trajectory, in kilometres, before windowing.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub id: String,
    pub points: Vec<Point>,
    /// Seconds, strictly increasing; absent means a fixed sampling interval.
    pub times: Option<Vec<f64>>,
}

impl Track {
    pub fn from_raw(record: &RawRecord, projection: &ProjectionSpec) -> Result<Self> {
        Ok(Self {
            id: record.id.clone(),
            points: projection.project_all(&record.points)?,
            times: record.timestamps.as_ref().map(|ts| ts.iter().map(|&t| t as f64).collect()),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn time(&self, i: usize, interval_s: f64) -> f64 {
        match &self.times {
            Some(ts) => ts[i],
            None => i as f64 * interval_s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub max_speed_kmh: f64,
    pub stay_radius_km: f64,
    pub stay_dwell_s: f64,
    /// Sampling interval assumed for tracks without timestamps.
    pub interval_s: f64,
    /// Tracks left with fewer points are dropped.
    pub min_points: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            max_speed_kmh: 180.0,
            stay_radius_km: 0.1,
            stay_dwell_s: 120.0,
            interval_s: DEFAULT_INTERVAL_S,
            min_points: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub noise_points: usize,
    pub stay_points: usize,
    pub merged_points: usize,
    pub short_tracks: usize,
}

/// Drops speed outliers, then collapses stay points into centroids.
pub fn preprocess(tracks: Vec<Track>, cfg: &PreprocessConfig) -> (Vec<Track>, PreprocessReport) {
    let mut report = PreprocessReport::default();
    let mut out = Vec::with_capacity(tracks.len());
    for track in tracks {
        let filtered = filter_noise(&track, cfg, &mut report);
        let merged = merge_stays(&filtered, cfg, &mut report);
        if merged.len() < cfg.min_points {
            report.short_tracks += 1;
        } else {
            out.push(merged);
        }
    }
    (out, report)
}

fn filter_noise(track: &Track, cfg: &PreprocessConfig, report: &mut PreprocessReport) -> Track {
    let mut keep: Vec<usize> = Vec::with_capacity(track.len());
    for i in 0..track.len() {
        if let Some(&last) = keep.last() {
            let dt = track.time(i, cfg.interval_s) - track.time(last, cfg.interval_s);
            let speed = distance(track.points[last], track.points[i]) / dt * 3600.0;
            if !(dt > 0.0) || speed > cfg.max_speed_kmh {
                report.noise_points += 1;
                continue;
            }
        }
        keep.push(i);
    }
    select(track, &keep)
}

fn select(track: &Track, idx: &[usize]) -> Track {
    Track {
        id: track.id.clone(),
        points: idx.iter().map(|&i| track.points[i]).collect(),
        times: track.times.as_ref().map(|ts| idx.iter().map(|&i| ts[i]).collect()),
    }
}

fn merge_stays(track: &Track, cfg: &PreprocessConfig, report: &mut PreprocessReport) -> Track {
    let n = track.len();
    let mut points = Vec::with_capacity(n);
    let mut times = track.times.as_ref().map(|_| Vec::with_capacity(n));
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && distance(track.points[i], track.points[j + 1]) <= cfg.stay_radius_km {
            j += 1;
        }
        let dwell = track.time(j, cfg.interval_s) - track.time(i, cfg.interval_s);
        let (point, next) = if j > i && dwell >= cfg.stay_dwell_s {
            let k = (j - i + 1) as f64;
            let (sx, sy) = track.points[i..=j].iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
            report.stay_points += 1;
            report.merged_points += j - i;
            ([sx / k, sy / k], j + 1)
        } else {
            (track.points[i], i + 1)
        };
        points.push(point);
        if let (Some(out), Some(ts)) = (times.as_mut(), track.times.as_ref()) {
            out.push(ts[i]);
        }
        i = next;
    }
    Track {
        id: track.id.clone(),
        points,
        times,
    }
}
