use chrono::{Datelike, NaiveDate, NaiveTime, Timelike};

use crate::error::{Error, Result};

/// Fixed part of the EDF header.
pub(crate) const FIXED_HEADER_LEN: usize = 256;
/// Bytes per signal in the variable part of the header.
pub(crate) const SIGNAL_HEADER_LEN: usize = 256;

const SIGNAL_FIELD_WIDTHS: [usize; 10] = [16, 80, 8, 8, 8, 8, 8, 80, 8, 32];

#[derive(Debug, Clone, PartialEq)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dim: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefilter: String,
    pub samples_per_record: usize,
    pub reserved: String,
}

impl SignalHeader {
    /// Physical units per digital step.
    pub fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / (self.digital_max as f64 - self.digital_min as f64)
    }

    pub fn to_physical(&self, digital: i16) -> f64 {
        self.physical_min + (digital as f64 - self.digital_min as f64) * self.gain()
    }

    pub fn to_digital(&self, physical: f64) -> i16 {
        let d = ((physical - self.physical_min) / self.gain()).round() + self.digital_min as f64;
        d.clamp(self.digital_min as f64, self.digital_max as f64) as i16
    }

    pub fn sampling_rate(&self, record_duration: f64) -> f64 {
        self.samples_per_record as f64 / record_duration
    }

    /// Sample count stored by [`write_edf`](super::write_edf) in the reserved
    /// field, used to trim the zero padding of the final record.
    pub(crate) fn declared_samples(&self) -> Option<usize> {
        self.reserved.trim().strip_prefix("nsamples=")?.parse().ok()
    }

    fn validate(&self) -> Result<()> {
        if self.digital_min >= self.digital_max {
            return Err(Error::BadScaling {
                label: self.label.clone(),
                reason: format!("digital_min {} >= digital_max {}", self.digital_min, self.digital_max),
            });
        }
        if self.physical_min == self.physical_max {
            return Err(Error::BadScaling {
                label: self.label.clone(),
                reason: format!("physical_min = physical_max = {}", self.physical_min),
            });
        }
        let gain = self.gain();
        if !gain.is_finite() || gain == 0.0 {
            return Err(Error::BadScaling {
                label: self.label.clone(),
                reason: format!("gain {gain} is not finite and nonzero"),
            });
        }
        if self.samples_per_record == 0 {
            return Err(Error::Parse(format!("signal {:?} has 0 samples per record", self.label)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    pub start_date: NaiveDate,
    pub start_time: NaiveTime,
    pub reserved: String,
    /// `-1` while a recording is still being written.
    pub num_records: i64,
    /// Seconds per data record.
    pub record_duration: f64,
    pub signals: Vec<SignalHeader>,
}

impl EdfHeader {
    pub fn header_len(&self) -> usize {
        FIXED_HEADER_LEN + SIGNAL_HEADER_LEN * self.signals.len()
    }

    /// Bytes in one data record across all signals.
    pub fn record_len(&self) -> usize {
        self.signals.iter().map(|s| s.samples_per_record * 2).sum()
    }

    /// Recorded time span in seconds.
    pub fn duration(&self) -> f64 {
        self.num_records.max(0) as f64 * self.record_duration
    }

    /// Clock time at the end of the recording (wraps past midnight).
    pub fn end_time(&self) -> NaiveTime {
        let secs = self.duration().round() as i64;
        let start = self.start_time.num_seconds_from_midnight() as i64;
        let end = (start + secs).rem_euclid(86_400) as u32;
        NaiveTime::from_num_seconds_from_midnight_opt(end, 0).expect("seconds < 86400")
    }

    pub fn signal_index(&self, label: &str) -> Option<usize> {
        self.signals
            .iter()
            .position(|s| s.label.trim().eq_ignore_ascii_case(label.trim()))
            .or_else(|| {
                self.signals
                    .iter()
                    .position(|s| super::label_matches(&s.label, label))
            })
    }

    /// Parses a complete header. `bytes` must hold at least the full
    /// `256 + 256 * ns` header.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FIXED_HEADER_LEN {
            return Err(Error::Parse(format!(
                "header has {} bytes, need at least {FIXED_HEADER_LEN}",
                bytes.len()
            )));
        }
        let mut cur = Cursor { bytes, pos: 0 };
        let version = cur.text(8)?;
        if version.trim() != "0" {
            return Err(Error::Parse(format!("bad version field {version:?}, expected \"0\"")));
        }
        let patient_id = cur.text(80)?;
        let recording_id = cur.text(80)?;
        let start_date = parse_date(&cur.text(8)?)?;
        let start_time = parse_time(&cur.text(8)?)?;
        let header_bytes: usize = cur.number(8, "header byte count")?;
        let reserved = cur.text(44)?;
        let num_records: i64 = cur.number(8, "number of data records")?;
        let record_duration: f64 = cur.number(8, "data record duration")?;
        let ns: usize = cur.number(4, "signal count")?;

        if num_records < -1 {
            return Err(Error::Parse(format!("number of data records {num_records} < -1")));
        }
        if !(record_duration > 0.0 && record_duration.is_finite()) {
            return Err(Error::Parse(format!("record duration {record_duration} is not positive")));
        }
        if ns == 0 {
            return Err(Error::Parse("file declares no signals".into()));
        }
        let expected = FIXED_HEADER_LEN + SIGNAL_HEADER_LEN * ns;
        if header_bytes != expected {
            return Err(Error::Parse(format!(
                "header byte count {header_bytes} != 256 + 256 * {ns} = {expected}"
            )));
        }
        if bytes.len() < expected {
            return Err(Error::Parse(format!(
                "header truncated: {} of {expected} bytes",
                bytes.len()
            )));
        }

        // Signal fields are stored column-wise: all labels, then all
        // transducers, and so on.
        let mut columns: Vec<Vec<String>> = Vec::with_capacity(SIGNAL_FIELD_WIDTHS.len());
        for width in SIGNAL_FIELD_WIDTHS {
            columns.push((0..ns).map(|_| cur.text(width)).collect::<Result<_>>()?);
        }
        let mut signals = Vec::with_capacity(ns);
        for i in 0..ns {
            let field = |c: usize| columns[c][i].as_str();
            let label = field(0).trim().to_string();
            let num = |c: usize, what: &str| -> Result<f64> {
                field(c)
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("signal {label:?}: bad {what} {:?}", field(c))))
            };
            let int = |c: usize, what: &str| -> Result<i64> {
                let t = field(c).trim();
                t.parse::<i64>()
                    .or_else(|_| match t.parse::<f64>() {
                        Ok(v) if v.fract() == 0.0 => Ok(v as i64),
                        _ => Err(()),
                    })
                    .map_err(|_| Error::Parse(format!("signal {label:?}: bad {what} {t:?}")))
            };
            let digital_min = int(5, "digital minimum")?;
            let digital_max = int(6, "digital maximum")?;
            let range = i16::MIN as i64..=i16::MAX as i64;
            if !range.contains(&digital_min) || !range.contains(&digital_max) {
                return Err(Error::Parse(format!(
                    "signal {label:?}: digital range [{digital_min}, {digital_max}] exceeds 16 bits"
                )));
            }
            let spr = int(8, "samples per record")?;
            if spr <= 0 {
                return Err(Error::Parse(format!("signal {label:?}: samples per record {spr}")));
            }
            signals.push(SignalHeader {
                transducer: field(1).trim().to_string(),
                physical_dim: field(2).trim().to_string(),
                physical_min: num(3, "physical minimum")?,
                physical_max: num(4, "physical maximum")?,
                digital_min: digital_min as i32,
                digital_max: digital_max as i32,
                prefilter: field(7).trim().to_string(),
                samples_per_record: spr as usize,
                reserved: field(9).trim().to_string(),
                label,
            });
        }

        Ok(EdfHeader {
            version: version.trim().to_string(),
            patient_id: patient_id.trim().to_string(),
            recording_id: recording_id.trim().to_string(),
            start_date,
            start_time,
            reserved: reserved.trim().to_string(),
            num_records,
            record_duration,
            signals,
        })
    }

    /// Checks the scaling of one signal; called for the signal actually read.
    pub fn validate_signal(&self, index: usize) -> Result<()> {
        self.signals[index].validate()
    }

    /// Serializes the header. Numbers that do not fit their field are an error.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.header_len());
        put(&mut out, "0", 8)?;
        put(&mut out, &self.patient_id, 80)?;
        put(&mut out, &self.recording_id, 80)?;
        let d = self.start_date;
        put(&mut out, &format!("{:02}.{:02}.{:02}", d.day(), d.month(), d.year() % 100), 8)?;
        let t = self.start_time;
        put(&mut out, &format!("{:02}.{:02}.{:02}", t.hour(), t.minute(), t.second()), 8)?;
        put_num(&mut out, &self.header_len().to_string(), 8)?;
        put(&mut out, &self.reserved, 44)?;
        put_num(&mut out, &self.num_records.to_string(), 8)?;
        put_num(&mut out, &format_duration(self.record_duration), 8)?;
        put_num(&mut out, &self.signals.len().to_string(), 4)?;
        let s = &self.signals;
        for sig in s {
            put(&mut out, &sig.label, 16)?;
        }
        for sig in s {
            put(&mut out, &sig.transducer, 80)?;
        }
        for sig in s {
            put(&mut out, &sig.physical_dim, 8)?;
        }
        for sig in s {
            put_num(&mut out, &format_number(sig.physical_min), 8)?;
        }
        for sig in s {
            put_num(&mut out, &format_number(sig.physical_max), 8)?;
        }
        for sig in s {
            put_num(&mut out, &sig.digital_min.to_string(), 8)?;
        }
        for sig in s {
            put_num(&mut out, &sig.digital_max.to_string(), 8)?;
        }
        for sig in s {
            put(&mut out, &sig.prefilter, 80)?;
        }
        for sig in s {
            put_num(&mut out, &sig.samples_per_record.to_string(), 8)?;
        }
        for sig in s {
            put(&mut out, &sig.reserved, 32)?;
        }
        debug_assert_eq!(out.len(), self.header_len());
        Ok(out)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn text(&mut self, width: usize) -> Result<String> {
        let end = self.pos + width;
        let raw = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Parse(format!("header ends at byte {}", self.bytes.len())))?;
        self.pos = end;
        if let Some(b) = raw.iter().find(|b| !(32..=126).contains(*b)) {
            return Err(Error::Parse(format!(
                "non-printable byte 0x{b:02x} in header field ending at {end}"
            )));
        }
        Ok(String::from_utf8_lossy(raw).into_owned())
    }

    fn number<T: std::str::FromStr>(&mut self, width: usize, what: &str) -> Result<T> {
        let s = self.text(width)?;
        s.trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad {what} {s:?}")))
    }
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    let parts = split3(s).ok_or_else(|| Error::Parse(format!("bad start date {s:?}")))?;
    let (dd, mm, yy) = parts;
    // EDF clipping date: 85-99 means 1985-1999.
    let year = if yy >= 85 { 1900 + yy } else { 2000 + yy };
    NaiveDate::from_ymd_opt(year as i32, mm, dd).ok_or_else(|| Error::Parse(format!("bad start date {s:?}")))
}

fn parse_time(s: &str) -> Result<NaiveTime> {
    let (h, m, sec) = split3(s).ok_or_else(|| Error::Parse(format!("bad start time {s:?}")))?;
    NaiveTime::from_hms_opt(h, m, sec).ok_or_else(|| Error::Parse(format!("bad start time {s:?}")))
}

fn split3(s: &str) -> Option<(u32, u32, u32)> {
    let mut it = s.trim().split(['.', ':']).map(|p| p.trim().parse::<u32>());
    let a = it.next()?.ok()?;
    let b = it.next()?.ok()?;
    let c = it.next()?.ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((a, b, c))
}

fn put(out: &mut Vec<u8>, s: &str, width: usize) -> Result<()> {
    let mut field: Vec<u8> = s
        .chars()
        .map(|c| if c.is_ascii() && !c.is_ascii_control() { c as u8 } else { b'_' })
        .take(width)
        .collect();
    field.resize(width, b' ');
    out.extend_from_slice(&field);
    Ok(())
}

fn put_num(out: &mut Vec<u8>, s: &str, width: usize) -> Result<()> {
    if s.len() > width {
        return Err(Error::InvalidSignal(format!("value {s} does not fit an {width}-byte EDF field")));
    }
    put(out, s, width)
}

fn format_duration(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format_number(v)
    }
}

/// Shortest decimal rendering of `v` that fits 8 characters.
pub(crate) fn format_number(v: f64) -> String {
    let shortest = format!("{v}");
    if shortest.len() <= 8 {
        return shortest;
    }
    for decimals in (0..=7).rev() {
        let s = format!("{v:.decimals$}");
        if s.len() <= 8 {
            return s;
        }
    }
    shortest
}

/// Renders a physical bound into 8 characters, rounding away from the data so
/// the parsed value still bounds it. Returns the text and its parsed value.
pub(crate) fn format_bound(v: f64, round_up: bool) -> Result<(String, f64)> {
    if !v.is_finite() || v.abs() >= 1e7 {
        return Err(Error::InvalidSignal(format!("physical value {v} cannot be stored in EDF")));
    }
    for decimals in (0..=7usize).rev() {
        let scale = 10f64.powi(decimals as i32);
        let mut r = if round_up { (v * scale).ceil() } else { (v * scale).floor() } / scale;
        for _ in 0..2 {
            let s = format!("{r:.decimals$}");
            if s.len() > 8 {
                break;
            }
            let parsed: f64 = s.parse().expect("formatted float parses");
            let ok = if round_up { parsed >= v } else { parsed <= v };
            if ok {
                return Ok((s, parsed));
            }
            r += if round_up { 1.0 / scale } else { -1.0 / scale };
        }
    }
    Err(Error::InvalidSignal(format!("physical value {v} cannot be stored in EDF")))
}
