use anyhow::Result;
use serde::Serialize;
use stgen::data::{synth_corpus, write_corpus_file, SynthConfig};

use crate::io::{config_path_for, overlay, write_json};
use crate::SynthArgs;

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'static str,
    synth: &'a SynthConfig,
    out: &'a std::path::Path,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let mut cfg = overlay(&SynthConfig::default(), args.config.as_deref())?;
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(t) = args.t_len {
        cfg.seq_len = t;
    }
    if let Some(k) = args.archetypes {
        cfg.archetypes = k;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let records = synth_corpus(&cfg)?;
    write_corpus_file(&args.out, &records)?;
    write_json(
        &config_path_for(&args.out),
        &Resolved {
            command: "synth",
            synth: &cfg,
            out: &args.out,
        },
    )?;
    log::info!("wrote {} synthetic trajectories to {}", records.len(), args.out.display());
    Ok(())
}
