use std::io::Write;

use anyhow::{Context, Result};
use serde::Serialize;
use stgen::constraints::ConstraintExpr;
use stgen::model::ModelConfig;
use stgen::objective::{initial_model, Trainer};

use crate::io::{overlay, read_constraint, read_records, to_trajectories, write_json};
use crate::weights::WeightsFile;
use crate::TrainArgs;

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'static str,
    data: &'a std::path::Path,
    preset: &'a str,
    model: &'a ModelConfig,
    constraint: Option<&'a ConstraintExpr>,
    out: &'a std::path::Path,
}

pub fn resolve_config(args: &TrainArgs) -> Result<ModelConfig> {
    let mut cfg = overlay(&ModelConfig::preset(&args.preset)?, args.config.as_deref())?;
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.constraints.is_some() {
        cfg.constrained = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let constraint = args.constraints.as_deref().map(read_constraint).transpose()?;
    let records = read_records(&args.data)?;
    let data = to_trajectories(&records, cfg.interval_s);

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_json(
        &args.out.join("config.json"),
        &Resolved {
            command: "train",
            data: &args.data,
            preset: &args.preset,
            model: &cfg,
            constraint: constraint.as_ref(),
            out: &args.out,
        },
    )?;

    let epochs = cfg.epochs;
    let label = cfg.label();
    let mut trainer = Trainer::new(initial_model(cfg, &data)?, constraint)?;
    let weights_path = args.out.join("weights.json");
    let log_path = args.out.join("epochs.jsonl");
    WeightsFile::from_model(trainer.model()).save(&weights_path)?;
    let mut log_file = std::fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;

    for _ in 0..epochs {
        // On divergence the previous epoch's weights stay on disk.
        let record = trainer.train_epoch(&data).with_context(|| {
            format!(
                "training {label} diverged in epoch {}; {} holds the last good weights",
                trainer.epochs_done() + 1,
                weights_path.display()
            )
        })?;
        log::info!("{label} epoch {} total {:.4}", record.epoch, record.loss.total);
        serde_json::to_writer(&mut log_file, &record)?;
        log_file.write_all(b"\n")?;
        log_file.flush()?;
        WeightsFile::from_model(trainer.model()).save(&weights_path)?;
    }
    Ok(())
}
