use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Point, Trajectory};

/// One line of a corpus file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

impl CorpusRecord {
    pub fn trajectory(&self, interval_s: f64) -> Trajectory {
        Trajectory::with_interval(self.points.clone(), interval_s)
    }
}

pub fn write_corpus<W: Write>(mut w: W, records: &[CorpusRecord]) -> Result<()> {
    for r in records {
        if !r.points.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::Data(format!("record `{}` has non-finite coordinates", r.id)));
        }
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus<R: Read>(r: R) -> Result<Vec<CorpusRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| Error::Data(format!("corpus line {}: {e}", i + 1)))?;
        if !rec.points.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::Data(format!("corpus line {}: non-finite coordinates", i + 1)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_corpus_file(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_corpus(std::io::BufWriter::new(file), records)
}

pub fn read_corpus_file(path: &Path) -> Result<Vec<CorpusRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_corpus(file)
}
