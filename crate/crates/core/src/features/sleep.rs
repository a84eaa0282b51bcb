//! Hypnograms and the recording-level sleep features.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scoring epoch length of a hypnogram, in seconds.
pub const STAGE_SECONDS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    W,
    S1,
    S2,
    S3,
    S4,
    #[serde(rename = "REM")]
    Rem,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::W, Stage::S1, Stage::S2, Stage::S3, Stage::S4, Stage::Rem];

    pub fn is_sleep(self) -> bool {
        self != Stage::W
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::W => "W",
            Stage::S1 => "S1",
            Stage::S2 => "S2",
            Stage::S3 => "S3",
            Stage::S4 => "S4",
            Stage::Rem => "REM",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    /// Accepts the six names plus the usual R&K spellings (`WAKE`, `S1`..`S4`,
    /// `NREM1`.., `R`, `REM`).
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        let stage = match up.as_str() {
            "W" | "WAKE" | "SLEEP-W" => Stage::W,
            "S1" | "N1" | "NREM1" | "1" | "SLEEP-S1" => Stage::S1,
            "S2" | "N2" | "NREM2" | "2" | "SLEEP-S2" => Stage::S2,
            "S3" | "N3" | "NREM3" | "3" | "SLEEP-S3" => Stage::S3,
            "S4" | "NREM4" | "4" | "SLEEP-S4" => Stage::S4,
            "R" | "REM" | "5" | "SLEEP-REM" => Stage::Rem,
            _ => return Err(Error::Format(format!("unknown sleep stage {s:?}"))),
        };
        Ok(stage)
    }
}

/// One stage per scoring epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypnogram {
    pub subject_id: String,
    pub epoch_seconds: f64,
    pub stages: Vec<Stage>,
}

impl Hypnogram {
    pub fn new(subject_id: impl Into<String>, stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::NoData("hypnogram has no epochs".into()));
        }
        Ok(Hypnogram {
            subject_id: subject_id.into(),
            epoch_seconds: STAGE_SECONDS,
            stages,
        })
    }

    pub fn duration(&self) -> f64 {
        self.stages.len() as f64 * self.epoch_seconds
    }

    pub fn stage_seconds(&self, stage: Stage) -> f64 {
        self.stages.iter().filter(|&&s| s == stage).count() as f64 * self.epoch_seconds
    }

    /// Reads `epoch_index,stage` lines. A header line and `#` comments are
    /// skipped; indices must run 0, 1, 2, ...
    pub fn read_csv(path: impl AsRef<Path>, subject_id: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, subject_id)
    }

    pub fn from_reader(reader: impl Read, subject_id: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut stages = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Format(format!("hypnogram CSV: {e}")))?;
            if rec.len() != 2 {
                return Err(Error::Format(format!("hypnogram row {line}: expected 2 fields, got {}", rec.len())));
            }
            let Ok(index) = rec[0].parse::<usize>() else {
                if line == 0 {
                    continue;
                }
                return Err(Error::Format(format!("hypnogram row {line}: bad epoch index {:?}", &rec[0])));
            };
            if index != stages.len() {
                return Err(Error::Format(format!(
                    "hypnogram row {line}: epoch index {index}, expected {}",
                    stages.len()
                )));
            }
            stages.push(rec[1].parse()?);
        }
        Self::new(subject_id, stages)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        self.to_writer(&mut out)?;
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn to_writer(&self, mut w: impl Write) -> Result<()> {
        let mut text = String::from("epoch_index,stage\n");
        for (i, s) in self.stages.iter().enumerate() {
            text.push_str(&format!("{i},{s}\n"));
        }
        w.write_all(text.as_bytes())
            .map_err(|e| Error::Format(format!("writing hypnogram: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SleepFeatures {
    /// Seconds spent in any stage other than W.
    pub total_sleep_time: f64,
    /// TST as a percentage of the scored time.
    pub sleep_efficiency: f64,
}

pub fn sleep_features(hypnogram: &Hypnogram) -> SleepFeatures {
    let asleep = hypnogram.stages.iter().filter(|s| s.is_sleep()).count() as f64;
    let tst = asleep * hypnogram.epoch_seconds;
    SleepFeatures {
        total_sleep_time: tst,
        sleep_efficiency: 100.0 * tst / hypnogram.duration(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Stage::*;

    fn hyp(stages: &[Stage]) -> Hypnogram {
        Hypnogram::new("s", stages.to_vec()).unwrap()
    }

    #[test]
    fn tst_and_se() {
        let f = sleep_features(&hyp(&[W, S1, S2, S2, W]));
        assert_eq!(f.total_sleep_time, 90.0);
        assert_eq!(f.sleep_efficiency, 60.0);

        let f = sleep_features(&hyp(&[W; 20]));
        assert_eq!((f.total_sleep_time, f.sleep_efficiency), (0.0, 0.0));

        let f = sleep_features(&hyp(&vec![S2; 960]));
        assert_eq!(f.total_sleep_time, 28_800.0);
        assert_eq!(f.sleep_efficiency, 100.0);
    }

    #[test]
    fn stage_seconds() {
        let h = hyp(&[W, S2, S2, Rem]);
        assert_eq!(h.stage_seconds(S2), 60.0);
        assert_eq!(h.stage_seconds(Rem), 30.0);
        assert_eq!(h.stage_seconds(S4), 0.0);
        let f = sleep_features(&h);
        assert_eq!((f.total_sleep_time, f.sleep_efficiency), (90.0, 75.0));
    }

    #[test]
    fn empty_is_rejected() {
        assert!(Hypnogram::new("s", vec![]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let h = hyp(&[W, S1, S2, S3, S4, Rem, W]);
        let mut buf = Vec::new();
        h.to_writer(&mut buf).unwrap();
        let back = Hypnogram::from_reader(&buf[..], "s").unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn csv_without_header_and_aliases() {
        let text = "# scored\n0,wake\n1,N2\n2,R\n";
        let h = Hypnogram::from_reader(text.as_bytes(), "x").unwrap();
        assert_eq!(h.stages, vec![W, S2, Rem]);
    }

    #[test]
    fn csv_errors() {
        assert!(Hypnogram::from_reader("0,W\n2,W\n".as_bytes(), "x").is_err());
        assert!(Hypnogram::from_reader("0,Q\n".as_bytes(), "x").is_err());
        assert!(Hypnogram::from_reader("epoch_index,stage\n".as_bytes(), "x").is_err());
    }
}
