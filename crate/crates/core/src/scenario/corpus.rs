//! JSONL scenario corpus: one `Scenario` object per line. Numbers are
//! stored at full precision; quantization only happens in the codec.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::Scenario;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn read_scenarios<R: Read>(reader: R) -> Result<Vec<Scenario>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s = serde_json::from_str(&line).map_err(|source| CorpusError::Parse { line: i + 1, source })?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_scenarios<W: Write>(writer: W, scenarios: &[Scenario]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(writer);
    for s in scenarios {
        serde_json::to_writer(&mut w, s).map_err(|source| CorpusError::Parse { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Vec<Scenario>, CorpusError> {
    read_scenarios(File::open(path)?)
}

pub fn save_corpus(path: &Path, scenarios: &[Scenario]) -> Result<(), CorpusError> {
    write_scenarios(File::create(path)?, scenarios)
}
