//! CSV writing and reading shared by the stages. Every file starts with one
//! `#` line naming the tool version, config hash and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::{CliError, Result};

pub const TOOL: &str = concat!("insomnia-eeg ", env!("CARGO_PKG_VERSION"));

pub fn provenance(hash: &str, seed: u64) -> String {
    format!("{TOOL} config={hash} seed={seed}")
}

/// Writes `header` and `rows` to `path` behind a `# provenance` line.
pub fn write_csv<R, I>(path: &Path, provenance: &str, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# {provenance}").map_err(|e| CliError::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        wtr.write_record(row).map_err(|e| CliError::io(path, e))?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a CSV written by [`write_csv`], skipping comment lines.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    rdr.deserialize()
        .map(|r| r.map_err(|e| CliError::io(path, e)))
        .collect()
}

/// Shortest text that parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Metric cell: a number or the word `undefined`.
pub fn metric(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "undefined".to_string())
}
