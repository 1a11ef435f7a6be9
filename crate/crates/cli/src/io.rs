use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use stgen::constraints::ConstraintExpr;
use stgen::data::{read_corpus_file, CorpusRecord};
use stgen::{Error, Point, Trajectory};

/// Writes through a sibling temp file so a crash never leaves a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `out.jsonl` -> `out.config.json` in the same directory.
pub fn config_path_for(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.config.json"))
}

pub fn read_records(path: &Path) -> Result<Vec<CorpusRecord>> {
    read_corpus_file(path).with_context(|| format!("reading corpus {}", path.display()))
}

pub fn to_trajectories(records: &[CorpusRecord], interval_s: f64) -> Vec<Trajectory> {
    records.iter().map(|r| r.trajectory(interval_s)).collect()
}

pub fn read_constraint(path: &Path) -> Result<ConstraintExpr> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read constraint file {}: {e}", path.display())))?;
    let expr = ConstraintExpr::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    expr.validate()?;
    Ok(expr)
}

/// Overlays the keys of a JSON config file on `base`. Unknown keys are
/// rejected by the target type.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, file: Option<&Path>) -> Result<T> {
    let mut value = serde_json::to_value(base)?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let patch: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let Value::Object(patch) = patch else {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())).into());
        };
        let Value::Object(target) = &mut value else {
            unreachable!("config types serialize to objects")
        };
        for (k, v) in patch {
            target.insert(k, v);
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()).into())
}

pub fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [x, y] = parts.as_slice() else {
        return Err(format!("expected `x,y`, got `{s}`"));
    };
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok([num(x)?, num(y)?])
}

pub fn parse_bbox(s: &str) -> std::result::Result<[f64; 4], String> {
    let vals = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    vals.try_into().map_err(|_| format!("expected `lon_min,lat_min,lon_max,lat_max`, got `{s}`"))
}
