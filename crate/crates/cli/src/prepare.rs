use anyhow::{Context, Result};
use serde::Serialize;
use stgen::data::{
    load, preprocess, window_and_split, write_corpus_file, CorpusConfig, LoadOptions, LoadReport, PreprocessReport,
    ProjectionSpec, SplitReport, Track,
};

use crate::io::{overlay, read_records, write_json};
use crate::{Format, PrepareArgs};

#[derive(Serialize)]
struct Stats {
    format: String,
    /// Absent for corpora already in kilometres.
    projection: Option<ProjectionSpec>,
    load: Option<LoadReport>,
    preprocess: Option<PreprocessReport>,
    split: SplitReport,
    /// Points or tracks removed, keyed by the rule that removed them.
    dropped: Dropped,
}

#[derive(Serialize, Default)]
struct Dropped {
    malformed_rows: usize,
    outside_bbox_points: usize,
    duplicate_timestamps: usize,
    empty_records: usize,
    noise_points: usize,
    stay_points: usize,
    short_tracks: usize,
    short_sources: usize,
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'static str,
    format: &'a str,
    input: &'a std::path::Path,
    origin: Option<[f64; 2]>,
    bbox: Option<[f64; 4]>,
    corpus: &'a CorpusConfig,
    out: &'a std::path::Path,
}

pub fn run(args: &PrepareArgs) -> Result<()> {
    let mut cfg = overlay(&CorpusConfig::default(), args.config.as_deref())?;
    if let Some(t) = args.t_len {
        cfg.seq_len = t;
    }
    if args.stride.is_some() {
        cfg.stride = args.stride;
    }
    if let Some(s) = args.split_seed {
        cfg.split_seed = s;
    }
    if let Some(r) = args.train_ratio {
        cfg.train_ratio = r;
    }
    cfg.validate()?;

    let mut dropped = Dropped::default();
    let (format_name, tracks, projection, load_report, pre_report) = match args.format {
        Format::Synth => {
            let tracks = read_records(&args.input)?
                .into_iter()
                .map(|r| Track {
                    id: r.id,
                    points: r.points,
                    times: None,
                })
                .collect::<Vec<_>>();
            ("synth".to_string(), tracks, None, None, None)
        }
        Format::Source(format) => {
            let opts = LoadOptions { bbox: args.bbox };
            let (raw, report) =
                load(format, &args.input, &opts).with_context(|| format!("loading {}", args.input.display()))?;
            let projection = match args.origin {
                Some(o) => ProjectionSpec::new(o)?,
                None if raw.is_empty() => ProjectionSpec::new([0.0, 0.0])?,
                None => ProjectionSpec::centered(raw.iter().flat_map(|r| r.points.iter()))?,
            };
            let tracks = raw
                .iter()
                .map(|r| Track::from_raw(r, &projection))
                .collect::<stgen::Result<Vec<_>>>()?;
            let (tracks, pre) = preprocess(tracks, &cfg.preprocess);
            dropped.malformed_rows = report.malformed;
            dropped.outside_bbox_points = report.outside_bbox;
            dropped.duplicate_timestamps = report.duplicate_timestamps;
            dropped.empty_records = report.empty_records;
            dropped.noise_points = pre.noise_points;
            dropped.stay_points = pre.stay_points;
            dropped.short_tracks = pre.short_tracks;
            (format.name().to_string(), tracks, Some(projection), Some(report), Some(pre))
        }
    };
    let split = window_and_split(&tracks, &cfg)?;
    dropped.short_sources = split.report.short_sources;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_corpus_file(&args.out.join("train.jsonl"), &split.train)?;
    write_corpus_file(&args.out.join("test.jsonl"), &split.test)?;
    let stats = Stats {
        format: format_name.clone(),
        projection,
        load: load_report,
        preprocess: pre_report,
        split: split.report.clone(),
        dropped,
    };
    write_json(&args.out.join("stats.json"), &stats)?;
    write_json(
        &args.out.join("config.json"),
        &Resolved {
            command: "prepare",
            format: &format_name,
            input: &args.input,
            origin: projection.map(|p| p.origin),
            bbox: args.bbox,
            corpus: &cfg,
            out: &args.out,
        },
    )?;
    log::info!(
        "{} train and {} test windows from {} sources",
        split.report.train_windows,
        split.report.test_windows,
        split.report.sources
    );
    Ok(())
}
