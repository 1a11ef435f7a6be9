use anyhow::Result;
use serde::Serialize;
use stgen::metrics::{probe_stats, ProbeStats};
use stgen::model::Model;
use stgen::{Error, Point};

use crate::io::{config_path_for, write_json};
use crate::weights::load_model;
use crate::ProbeArgs;

#[derive(Serialize)]
struct ProbeReport {
    rows: usize,
    cols: usize,
    t_len: usize,
    seed: u64,
    /// Cell `[r][c]` pairs global draw `r` with step draw `c`.
    grid: Vec<Vec<Vec<Point>>>,
    stats: ProbeStats,
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'static str,
    weights: &'a std::path::Path,
    rows: usize,
    cols: usize,
    t_len: usize,
    seed: u64,
    out: &'a std::path::Path,
}

pub fn run(args: &ProbeArgs) -> Result<()> {
    let model = load_model(&args.weights)?;
    let Model::Latent(m) = &model else {
        return Err(Error::Variant {
            variant: model.config().variant.name(),
            action: "cross global and step latents",
        }
        .into());
    };
    let t_len = args.t_len.unwrap_or(m.config().seq_len);
    let grid = m.probe_grid(args.rows, args.cols, t_len, args.seed)?;
    let stats = probe_stats(&grid)?;
    let report = ProbeReport {
        rows: args.rows,
        cols: args.cols,
        t_len,
        seed: args.seed,
        grid: grid.into_iter().map(|row| row.into_iter().map(|t| t.points).collect()).collect(),
        stats,
    };
    write_json(&args.out, &report)?;
    write_json(
        &config_path_for(&args.out),
        &Resolved {
            command: "probe-disentangle",
            weights: &args.weights,
            rows: args.rows,
            cols: args.cols,
            t_len,
            seed: args.seed,
            out: &args.out,
        },
    )?;
    Ok(())
}
