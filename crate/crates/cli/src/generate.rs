use anyhow::Result;
use serde::Serialize;
use stgen::data::{write_corpus_file, CorpusRecord};
use stgen::model::Model;
use stgen::{Error, Point, Trajectory};

use crate::io::{config_path_for, read_records, to_trajectories, write_json};
use crate::weights::load_model;
use crate::GenerateArgs;

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'static str,
    weights: &'a std::path::Path,
    variant: &'a str,
    mode: &'static str,
    n: usize,
    t_len: usize,
    seed: u64,
    start: Option<Point>,
    start_from: Option<&'a std::path::Path>,
    reconstruct: Option<&'a std::path::Path>,
    out: &'a std::path::Path,
}

fn baseline_starts(args: &GenerateArgs) -> Result<Vec<Point>> {
    if let Some(p) = args.start {
        return Ok(vec![p]);
    }
    let Some(path) = &args.start_from else {
        return Err(Error::Config("lstm-baseline needs --start or --start-from".into()).into());
    };
    let starts: Vec<Point> = read_records(path)?.iter().filter_map(|r| r.points.first().copied()).collect();
    if starts.is_empty() {
        return Err(Error::Data(format!("{} has no start points", path.display())).into());
    }
    Ok(starts)
}

pub fn run(args: &GenerateArgs) -> Result<()> {
    let model = load_model(&args.weights)?;
    let cfg = model.config().clone();
    let t_len = args.t_len.unwrap_or(cfg.seq_len);
    if t_len == 0 {
        return Err(Error::Config("--T must be at least 1".into()).into());
    }
    let baseline_only = args.start.is_some() || args.start_from.is_some();
    let (mode, records) = match &model {
        Model::Baseline(m) => {
            if args.shared_f || args.reconstruct.is_some() {
                return Err(Error::Variant {
                    variant: cfg.variant.name(),
                    action: "share or infer latents",
                }
                .into());
            }
            let starts = baseline_starts(args)?;
            let trajs = (0..args.n)
                .map(|i| m.generate(starts[i % starts.len()], t_len))
                .collect::<stgen::Result<Vec<_>>>()?;
            ("rollout", named(trajs, |i| format!("gen-{i}")))
        }
        Model::Latent(_) if baseline_only => {
            return Err(Error::Config("--start and --start-from only apply to lstm-baseline".into()).into());
        }
        Model::Latent(m) => {
            if let Some(path) = &args.reconstruct {
                let source = read_records(path)?;
                let trajs = to_trajectories(&source, cfg.interval_s);
                let mut out = Vec::with_capacity(trajs.len());
                for chunk in trajs.chunks(256) {
                    let refs: Vec<&Trajectory> = chunk.iter().collect();
                    out.extend(m.reconstruct(&refs)?);
                }
                ("reconstruct", named(out, |i| source[i].id.clone()))
            } else if args.shared_f {
                let grid = if args.n == 0 { Vec::new() } else { m.probe_grid(1, args.n, t_len, args.seed)? };
                ("shared-f", named(grid.into_iter().flatten().collect(), |i| format!("gen-{i}")))
            } else {
                ("sample", named(m.synthesize(args.n, t_len, args.seed)?, |i| format!("gen-{i}")))
            }
        }
    };
    write_corpus_file(&args.out, &records)?;
    write_json(
        &config_path_for(&args.out),
        &Resolved {
            command: "generate",
            weights: &args.weights,
            variant: cfg.variant.name(),
            mode,
            n: records.len(),
            t_len,
            seed: args.seed,
            start: args.start,
            start_from: args.start_from.as_deref(),
            reconstruct: args.reconstruct.as_deref(),
            out: &args.out,
        },
    )?;
    log::info!("wrote {} trajectories to {}", records.len(), args.out.display());
    Ok(())
}

fn named(trajs: Vec<Trajectory>, id: impl Fn(usize) -> String) -> Vec<CorpusRecord> {
    trajs
        .into_iter()
        .enumerate()
        .map(|(i, t)| CorpusRecord {
            id: id(i),
            points: t.points,
            label: None,
        })
        .collect()
}
