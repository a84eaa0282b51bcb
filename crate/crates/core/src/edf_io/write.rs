use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::header::{format_bound, EdfHeader, SignalHeader};
use super::Recording;
use crate::error::{Error, Result};

const DIGITAL_MIN: i32 = i16::MIN as i32;
const DIGITAL_MAX: i32 = i16::MAX as i32;
const MAX_RECORD_SECONDS: u32 = 60;

/// Writes a single-channel EDF file that [`read_edf`](super::read_edf) reads
/// back within one quantization step.
pub fn write_edf(recording: &Recording, path: impl AsRef<Path>) -> Result<()> {
    write_edf_signals(&[recording], path)
}

/// Writes several channels of equal rate and length into one EDF file.
///
/// The physical range of each signal is its data range (widened to include 0
/// so the padding of the final record is representable). Records last the
/// shortest whole number of seconds holding an integral sample count.
pub fn write_edf_signals(recordings: &[&Recording], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let first = recordings
        .first()
        .ok_or_else(|| Error::InvalidSignal("no signals to write".into()))?;
    let n = first.samples.len();
    if n == 0 {
        return Err(Error::InvalidSignal("empty sample list".into()));
    }
    for r in recordings {
        if r.fs != first.fs || r.samples.len() != n {
            return Err(Error::InvalidSignal(
                "all signals in one file must share sampling rate and length".into(),
            ));
        }
        if let Some(i) = r.samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidSignal(format!(
                "{}: non-finite sample at index {i}",
                r.channel
            )));
        }
    }
    let (record_duration, spr) = record_layout(first.fs)?;
    let num_records = n.div_ceil(spr);

    let signals = recordings
        .iter()
        .map(|r| signal_header(r, spr, n))
        .collect::<Result<Vec<_>>>()?;
    let header = EdfHeader {
        version: "0".into(),
        patient_id: first.subject_id.clone(),
        recording_id: format!("Startdate {}", first.start_date.format("%d-%b-%Y").to_string().to_uppercase()),
        start_date: first.start_date,
        start_time: first.start_time,
        reserved: String::new(),
        num_records: num_records as i64,
        record_duration: record_duration as f64,
        signals,
    };

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    out.write_all(&header.to_bytes()?).map_err(io)?;
    let mut buf = Vec::with_capacity(header.record_len());
    for rec in 0..num_records {
        buf.clear();
        for (r, sig) in recordings.iter().zip(&header.signals) {
            for i in rec * spr..(rec + 1) * spr {
                let x = r.samples.get(i).copied().unwrap_or(0.0);
                buf.extend_from_slice(&sig.to_digital(x).to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn record_layout(fs: f64) -> Result<(u32, usize)> {
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::InvalidSignal(format!("sampling rate {fs} is not positive")));
    }
    (1..=MAX_RECORD_SECONDS)
        .find_map(|d| {
            let spr = fs * d as f64;
            ((spr - spr.round()).abs() < 1e-9 && spr >= 1.0).then(|| (d, spr.round() as usize))
        })
        .ok_or_else(|| {
            Error::InvalidSignal(format!(
                "sampling rate {fs} Hz gives no integral sample count within {MAX_RECORD_SECONDS} s records"
            ))
        })
}

fn signal_header(r: &Recording, spr: usize, n: usize) -> Result<SignalHeader> {
    let (lo, hi) = r
        .samples
        .iter()
        .fold((0.0f64, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let (lo, hi) = if lo == hi { (lo - 1.0, hi + 1.0) } else { (lo, hi) };
    let (_, physical_min) = format_bound(lo, false)?;
    let (_, physical_max) = format_bound(hi, true)?;
    Ok(SignalHeader {
        label: r.channel.label().to_string(),
        transducer: "EEG electrode".into(),
        physical_dim: "uV".into(),
        physical_min,
        physical_max,
        digital_min: DIGITAL_MIN,
        digital_max: DIGITAL_MAX,
        prefilter: String::new(),
        samples_per_record: spr,
        reserved: format!("nsamples={n}"),
    })
}
