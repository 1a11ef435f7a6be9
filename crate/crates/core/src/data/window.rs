use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::CorpusRecord;
use super::preprocess::{PreprocessConfig, Track};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub seq_len: usize,
    /// Defaults to `seq_len`, so windows never overlap.
    pub stride: Option<usize>,
    pub train_ratio: f64,
    pub split_seed: u64,
    pub preprocess: PreprocessConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seq_len: 32,
            stride: None,
            train_ratio: 0.9,
            split_seed: 0,
            preprocess: PreprocessConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.seq_len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len < 3 {
            return Err(Error::Config(format!("window length {} is below 3", self.seq_len)));
        }
        if self.stride() == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config(format!("train ratio {} is outside (0, 1)", self.train_ratio)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub sources: usize,
    pub short_sources: usize,
    pub train_sources: usize,
    pub test_sources: usize,
    pub train_windows: usize,
    pub test_windows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<CorpusRecord>,
    pub test: Vec<CorpusRecord>,
    pub report: SplitReport,
}

/// Stable ordering key of a source under a split seed.
pub fn split_key(seed: u64, id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

/// Cuts each track into length-`seq_len` windows and assigns whole tracks
/// to train or test.
pub fn window_and_split(tracks: &[Track], cfg: &CorpusConfig) -> Result<Split> {
    cfg.validate()?;
    let (t_len, stride) = (cfg.seq_len, cfg.stride());
    let mut report = SplitReport {
        sources: tracks.len(),
        ..Default::default()
    };
    let mut sources: Vec<([u8; 32], &str, Vec<CorpusRecord>)> = Vec::new();
    for track in tracks {
        if track.len() < t_len {
            report.short_sources += 1;
            continue;
        }
        let windows = (0..=track.len() - t_len)
            .step_by(stride)
            .enumerate()
            .map(|(k, start)| CorpusRecord {
                id: format!("{}:{k}", track.id),
                points: track.points[start..start + t_len].to_vec(),
                label: None,
            })
            .collect();
        sources.push((split_key(cfg.split_seed, &track.id), &track.id, windows));
    }
    if sources.is_empty() {
        log::warn!(
            "no windows of length {t_len}: {} of {} tracks are too short",
            report.short_sources,
            report.sources
        );
    }
    sources.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let n_train = ((sources.len() as f64 * cfg.train_ratio).round() as usize).min(sources.len());
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, (_, _, windows)) in sources.into_iter().enumerate() {
        if i < n_train {
            report.train_sources += 1;
            train.extend(windows);
        } else {
            report.test_sources += 1;
            test.extend(windows);
        }
    }
    report.train_windows = train.len();
    report.test_windows = test.len();
    Ok(Split { train, test, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(id: &str, n: usize) -> Track {
        Track {
            id: id.into(),
            points: (0..n).map(|i| [i as f64 * 0.2, 0.0]).collect(),
            times: None,
        }
    }

    #[test]
    fn floor_window_count() {
        let cfg = CorpusConfig::default();
        let s = window_and_split(&[track("a", 70)], &cfg).unwrap();
        assert_eq!(s.train.len() + s.test.len(), 2);
        assert!(s.train.iter().chain(&s.test).all(|w| w.points.len() == 32));
    }

    #[test]
    fn short_track_discarded() {
        let cfg = CorpusConfig::default();
        let empty = window_and_split(&[track("a", 31)], &cfg).unwrap();
        assert!(empty.train.is_empty() && empty.test.is_empty());
        assert_eq!(empty.report.short_sources, 1);
        let s = window_and_split(&[track("a", 31), track("b", 40)], &cfg).unwrap();
        assert_eq!(s.report.short_sources, 1);
    }

    #[test]
    fn ratio_by_source() {
        let cfg = CorpusConfig {
            seq_len: 4,
            ..Default::default()
        };
        let tracks: Vec<Track> = (0..100).map(|i| track(&format!("s{i}"), 9)).collect();
        let s = window_and_split(&tracks, &cfg).unwrap();
        assert!(s.report.train_sources.abs_diff(90) <= 1);
        assert_eq!(s.report.train_sources + s.report.test_sources, 100);
        let source = |id: &str| id.split(':').next().unwrap().to_string();
        let train: std::collections::BTreeSet<_> = s.train.iter().map(|w| source(&w.id)).collect();
        assert!(s.test.iter().all(|w| !train.contains(&source(&w.id))));
    }

    #[test]
    fn overlapping_stride() {
        let cfg = CorpusConfig {
            seq_len: 4,
            stride: Some(1),
            ..Default::default()
        };
        let s = window_and_split(&[track("a", 6)], &cfg).unwrap();
        assert_eq!(s.train.len() + s.test.len(), 3);
    }
}
