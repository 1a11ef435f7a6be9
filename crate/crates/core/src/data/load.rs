use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Point;

/// Supported raw input schemas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    /// One trip per row, `POLYLINE` column holding `[[lon,lat],...]`.
    PortoCsv,
    /// Lines `id,timestamp,lon,lat`.
    TdriveLog,
    /// Lines `user,timestamp,lat,lon,location-id`, comma or tab separated.
    GowallaCheckins,
}

impl SourceFormat {
    pub fn name(self) -> &'static str {
        match self {
            SourceFormat::PortoCsv => "porto-csv",
            SourceFormat::TdriveLog => "tdrive-log",
            SourceFormat::GowallaCheckins => "gowalla-checkins",
        }
    }
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SourceFormat::PortoCsv, SourceFormat::TdriveLog, SourceFormat::GowallaCheckins]
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown source format `{s}`")))
    }
}

/// One trip or one entity's time-ordered history, in degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub id: String,
    /// `[lon, lat]` pairs.
    pub points: Vec<Point>,
    /// Seconds since the epoch, strictly increasing when present.
    pub timestamps: Option<Vec<i64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// `[lon_min, lat_min, lon_max, lat_max]`; points outside are dropped.
    pub bbox: Option<[f64; 4]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows: usize,
    pub malformed: usize,
    pub outside_bbox: usize,
    pub duplicate_timestamps: usize,
    pub empty_records: usize,
    pub records: usize,
}

pub fn load(format: SourceFormat, path: &Path, opts: &LoadOptions) -> Result<(Vec<RawRecord>, LoadReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    load_reader(format, file, opts)
}

pub fn load_reader<R: Read>(format: SourceFormat, mut reader: R, opts: &LoadOptions) -> Result<(Vec<RawRecord>, LoadReport)> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut report = LoadReport::default();
    let records = match format {
        SourceFormat::PortoCsv => load_porto(&text, opts, &mut report)?,
        SourceFormat::TdriveLog => load_timed(&text, opts, &mut report, parse_tdrive_line)?,
        SourceFormat::GowallaCheckins => {
            // Check-ins have no fixed cadence; keep time only for ordering.
            let mut records = load_timed(&text, opts, &mut report, parse_gowalla_line)?;
            for r in &mut records {
                r.timestamps = None;
            }
            records
        }
    };
    if report.rows == 0 {
        log::warn!("{format} input holds no data rows");
    } else if report.malformed * 2 > report.rows {
        return Err(Error::Data(format!(
            "{} of {} {format} rows are malformed",
            report.malformed, report.rows
        )));
    } else if report.malformed > 0 {
        log::warn!("skipped {} malformed {format} rows", report.malformed);
    }
    report.records = records.len();
    Ok((records, report))
}

fn in_box(p: Point, opts: &LoadOptions) -> bool {
    match opts.bbox {
        None => true,
        Some([x0, y0, x1, y1]) => p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1,
    }
}

fn valid_lon_lat(p: Point) -> bool {
    p[0].abs() <= 180.0 && p[1].abs() <= 90.0
}

fn load_porto(text: &str, opts: &LoadOptions, report: &mut LoadReport) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Data(format!("porto header: {e}")))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let poly_col = find("POLYLINE").ok_or_else(|| Error::Data("porto input has no POLYLINE column".into()))?;
    let id_col = find("TRIP_ID");
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        report.rows += 1;
        let parsed = row.ok().and_then(|row| {
            let points: Vec<Point> = serde_json::from_str(row.get(poly_col)?).ok()?;
            if !points.iter().all(|&p| p[0].is_finite() && p[1].is_finite() && valid_lon_lat(p)) {
                return None;
            }
            let id = id_col.and_then(|c| row.get(c)).map_or_else(|| i.to_string(), |s| s.trim().to_string());
            Some((id, points))
        });
        let Some((id, points)) = parsed else {
            report.malformed += 1;
            continue;
        };
        let before = points.len();
        let points: Vec<Point> = points.into_iter().filter(|&p| in_box(p, opts)).collect();
        report.outside_bbox += before - points.len();
        if points.is_empty() {
            report.empty_records += 1;
            continue;
        }
        out.push(RawRecord {
            id,
            points,
            timestamps: None,
        });
    }
    Ok(out)
}

struct TimedRow {
    id: String,
    time: i64,
    point: Point,
}

fn split_fields(line: &str) -> Vec<&str> {
    let sep = if line.contains('\t') { '\t' } else { ',' };
    line.split(sep).map(str::trim).collect()
}

fn parse_time(s: &str) -> Option<i64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M:%SZ"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|t| t.and_utc().timestamp())
}

fn parse_tdrive_line(line: &str) -> Option<TimedRow> {
    let f = split_fields(line);
    if f.len() != 4 {
        return None;
    }
    Some(TimedRow {
        id: f[0].to_string(),
        time: parse_time(f[1])?,
        point: [f[2].parse().ok()?, f[3].parse().ok()?],
    })
}

fn parse_gowalla_line(line: &str) -> Option<TimedRow> {
    let f = split_fields(line);
    if f.len() != 5 {
        return None;
    }
    Some(TimedRow {
        id: f[0].to_string(),
        time: parse_time(f[1])?,
        point: [f[3].parse().ok()?, f[2].parse().ok()?],
    })
}

fn load_timed(text: &str, opts: &LoadOptions, report: &mut LoadReport, parse: fn(&str) -> Option<TimedRow>) -> Result<Vec<RawRecord>> {
    let mut groups: BTreeMap<String, Vec<(i64, Point)>> = BTreeMap::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        report.rows += 1;
        match parse(line) {
            Some(row) if row.point[0].is_finite() && row.point[1].is_finite() && valid_lon_lat(row.point) => {
                if in_box(row.point, opts) {
                    groups.entry(row.id).or_default().push((row.time, row.point));
                } else {
                    report.outside_bbox += 1;
                }
            }
            _ => report.malformed += 1,
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (id, mut rows) in groups {
        rows.sort_by_key(|r| r.0);
        let before = rows.len();
        rows.dedup_by_key(|r| r.0);
        report.duplicate_timestamps += before - rows.len();
        out.push(RawRecord {
            id,
            points: rows.iter().map(|r| r.1).collect(),
            timestamps: Some(rows.iter().map(|r| r.0).collect()),
        });
    }
    Ok(out)
}
