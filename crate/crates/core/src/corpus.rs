//! Line-delimited JSON corpus files: one `{"tokens", "tags", "slot_type"}`
//! record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::LabeledUtterance;

pub fn parse_corpus<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<LabeledUtterance>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            message,
        };
        let utt: LabeledUtterance = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        utt.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(utt);
    }
    Ok(out)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<LabeledUtterance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), path)
}

pub fn write_records<W: Write>(mut writer: W, utterances: &[LabeledUtterance]) -> Result<()> {
    for utt in utterances {
        serde_json::to_writer(&mut writer, utt)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<corpus>", e))?;
    }
    Ok(())
}

pub fn write_corpus(path: impl AsRef<Path>, utterances: &[LabeledUtterance]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_records(&mut writer, utterances)?;
    writer.flush().map_err(|e| Error::io(path, e))
}
