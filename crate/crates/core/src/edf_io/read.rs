use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use super::header::{EdfHeader, FIXED_HEADER_LEN, SIGNAL_HEADER_LEN};
use super::{Channel, Recording};
use crate::error::{Error, Result};

/// Reads just the header of an EDF file.
pub fn read_edf_header(path: impl AsRef<Path>) -> Result<EdfHeader> {
    let path = path.as_ref();
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    read_header(&mut file, path)
}

fn read_header(file: &mut impl Read, path: &Path) -> Result<EdfHeader> {
    let mut fixed = vec![0u8; FIXED_HEADER_LEN];
    read_fully(file, &mut fixed, path, "fixed header")?;
    let ns: usize = std::str::from_utf8(&fixed[252..256])
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Parse("bad signal count".into()))?;
    let mut bytes = fixed;
    bytes.resize(FIXED_HEADER_LEN + SIGNAL_HEADER_LEN * ns, 0);
    read_fully(file, &mut bytes[FIXED_HEADER_LEN..], path, "signal headers")?;
    EdfHeader::parse(&bytes)
}

fn read_fully(file: &mut impl Read, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    file.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Parse(format!("{}: truncated {what}", path.display())),
        _ => Error::io(path, e),
    })
}

/// Reads one channel of an EDF file as a physically scaled [`Recording`].
///
/// `channel_label` is matched exactly first, then by electrode name so that
/// `"C4"` finds `"C4-A1"`. The subject id is the file stem.
pub fn read_edf(path: impl AsRef<Path>, channel_label: &str) -> Result<Recording> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut file = BufReader::new(file);
    let header = read_header(&mut file, path)?;

    let index = header.signal_index(channel_label).ok_or_else(|| Error::ChannelNotFound {
        wanted: channel_label.to_string(),
        available: header.signals.iter().map(|s| s.label.clone()).collect(),
    })?;
    header.validate_signal(index)?;
    let signal = &header.signals[index];

    let header_len = header.header_len() as u64;
    let record_len = header.record_len() as u64;
    let available_records = file_len.saturating_sub(header_len) / record_len;
    let num_records = if header.num_records < 0 {
        available_records
    } else {
        let declared = header.num_records as u64;
        if declared > available_records {
            return Err(Error::Parse(format!(
                "{}: header declares {declared} records but file holds {available_records}",
                path.display()
            )));
        }
        declared
    };

    let offset_in_record: u64 = header.signals[..index]
        .iter()
        .map(|s| s.samples_per_record as u64 * 2)
        .sum();
    let spr = signal.samples_per_record;
    let mut raw = vec![0u8; spr * 2];
    let mut samples = Vec::with_capacity(num_records as usize * spr);
    for r in 0..num_records {
        file.seek(SeekFrom::Start(header_len + r * record_len + offset_in_record))
            .map_err(|e| Error::io(path, e))?;
        read_fully(&mut file, &mut raw, path, "data record")?;
        samples.extend(
            raw.chunks_exact(2)
                .map(|b| signal.to_physical(i16::from_le_bytes([b[0], b[1]]))),
        );
    }
    if let Some(n) = signal.declared_samples() {
        if n <= samples.len() {
            samples.truncate(n);
        }
    }

    let channel = Channel::ALL
        .into_iter()
        .find(|c| c.matches_label(&signal.label) || c.label().eq_ignore_ascii_case(channel_label))
        .ok_or_else(|| Error::ChannelNotFound {
            wanted: channel_label.to_string(),
            available: vec![signal.label.clone()],
        })?;

    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Recording {
        subject_id,
        channel,
        fs: signal.sampling_rate(header.record_duration),
        samples,
        start_date: header.start_date,
        start_time: header.start_time,
    })
}
