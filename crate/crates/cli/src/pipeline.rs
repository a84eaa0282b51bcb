//! The stages and the files they exchange. Paths are relative to `out`:
//!
//! | stage      | reads                                  | writes |
//! |------------|----------------------------------------|--------|
//! | synth      |                                        | `cohort/` (EDF, hypnograms, `manifest.csv`) |
//! | ingest     | manifest                               | `ingest.csv` |
//! | preprocess | `ingest.csv`, EDF                      | `preprocessed/<id>_<ch>.edf`, `epochs_<ch>.csv` |
//! | features   | the above, hypnograms                  | `features_<ch>.csv` |
//! | select     | `features_<ch>.csv`                    | `split.csv`, `feature_stats.csv`, `selected.csv` |
//! | train      | features, `split.csv`, `selected.csv`  | `model.bin`, `zscore.csv`, `history.csv` |
//! | eval       | the above                              | `predictions.csv`, `subject_predictions.csv`, `metrics.csv` |
//! | report     | the above, `ingest.csv`                | `report/` |
//!
//! `<ch>` is `Fp2` or `C4`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use insomnia_eeg::edf_io::{read_edf, resample, write_edf, Channel};
use insomnia_eeg::features::{
    extract_all, read_feature_csv, write_feature_csv, Feature, FeatureVector, Hypnogram, NUM_FEATURES,
};
use insomnia_eeg::metrics::{ConfusionMatrix, Metrics};
use insomnia_eeg::model::{aggregate, load_model, save_model, split_by_subject, train, History, Sample};
use insomnia_eeg::preprocess::{filter_signal, normalize_epoch, reject_artifacts, segment, Preprocessed};
use insomnia_eeg::select::{apply_rules, feature_stats, ZScore};
use insomnia_eeg::synth::{cohort_plan, read_manifest, write_manifest, write_subject, ManifestEntry, ProfileTable};
use insomnia_eeg::Label;
use rayon::prelude::*;
use serde::Deserialize;

use crate::output::{metric, num, provenance, read_csv, write_csv};
use crate::sleepstats::sleep_stats;
use crate::{CliError, PipelineConfig, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    Preprocess,
    Features,
    Select,
    Train,
    Eval,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Preprocess => "preprocess",
            Stage::Features => "features",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

/// File names under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn cohort_dir(&self) -> PathBuf {
        self.out.join("cohort")
    }
    pub fn cohort_manifest(&self) -> PathBuf {
        self.cohort_dir().join("manifest.csv")
    }
    pub fn ingest(&self) -> PathBuf {
        self.out.join("ingest.csv")
    }
    pub fn preprocessed(&self, id: &str, ch: Channel) -> PathBuf {
        self.out.join("preprocessed").join(format!("{id}_{ch}.edf"))
    }
    pub fn epochs(&self, ch: Channel) -> PathBuf {
        self.out.join(format!("epochs_{ch}.csv"))
    }
    pub fn features(&self, ch: Channel) -> PathBuf {
        self.out.join(format!("features_{ch}.csv"))
    }
    pub fn split(&self) -> PathBuf {
        self.out.join("split.csv")
    }
    pub fn feature_stats(&self) -> PathBuf {
        self.out.join("feature_stats.csv")
    }
    pub fn selected(&self) -> PathBuf {
        self.out.join("selected.csv")
    }
    pub fn model(&self) -> PathBuf {
        self.out.join("model.bin")
    }
    pub fn zscore(&self) -> PathBuf {
        self.out.join("zscore.csv")
    }
    pub fn history(&self) -> PathBuf {
        self.out.join("history.csv")
    }
    pub fn predictions(&self) -> PathBuf {
        self.out.join("predictions.csv")
    }
    pub fn subject_predictions(&self) -> PathBuf {
        self.out.join("subject_predictions.csv")
    }
    pub fn metrics(&self) -> PathBuf {
        self.out.join("metrics.csv")
    }
    pub fn sleep_stats(&self) -> PathBuf {
        self.out.join("sleep_stats.csv")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct IngestRow {
    pub subject_id: String,
    pub class: Label,
    pub channel: Channel,
    pub edf_path: PathBuf,
    pub hypnogram_path: PathBuf,
    pub fs: f64,
    pub duration_s: f64,
    pub hypnogram_s: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EpochRow {
    pub subject_id: String,
    pub epoch_index: usize,
    pub offset_s: f64,
    pub peak_uv: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SplitRow {
    pub subject_id: String,
    pub epoch_index: usize,
    pub set: Part,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct SelectedRow {
    channel: Channel,
    feature: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct ZScoreRow {
    channel: Channel,
    feature: String,
    mean: f64,
    std: f64,
    constant: bool,
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    /// `epoch` or `subject`.
    pub level: &'static str,
    pub channel: String,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

/// Rows shared by all selected channels, in feature-file order.
struct Design {
    keys: Vec<(String, usize)>,
    labels: Vec<Label>,
    /// Per channel, the vector of each row.
    vectors: Vec<Vec<FeatureVector>>,
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub layout: Layout,
    provenance: String,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        if let Some(p) = &cfg.synth.profiles {
            if !p.exists() {
                return Err(CliError::Config(format!("profile table {} does not exist", p.display())));
            }
        }
        let layout = Layout { out: cfg.out.clone() };
        let provenance = provenance(&cfg.hash(), cfg.seed);
        Ok(Pipeline { cfg, layout, provenance })
    }

    fn require(&self, path: &Path, producer: Stage) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(CliError::StageOrder(format!(
                "{} is missing; run `{producer}` first",
                path.display()
            )))
        }
    }

    fn mkdir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
    }

    /// Runs `f` on every item with at most `jobs` threads, keeping input order.
    fn parallel<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.jobs)
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
        pool.install(|| items.par_iter().map(&f).collect())
    }

    fn profiles(&self) -> Result<ProfileTable> {
        match &self.cfg.synth.profiles {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                ProfileTable::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
            None => Ok(ProfileTable::default()),
        }
    }

    /// Generates the synthetic cohort; returns its manifest path.
    pub fn synth(&self) -> Result<PathBuf> {
        let cohort = self.cfg.cohort_config();
        let plan = cohort_plan(&cohort, &self.profiles()?)?;
        let dir = self.layout.cohort_dir();
        self.mkdir(&dir)?;
        let entries = self.parallel(&plan, |(id, profile)| Ok(write_subject(&dir, id, profile, &cohort)?))?;
        let manifest = self.layout.cohort_manifest();
        write_manifest(&manifest, &entries)?;
        Ok(manifest)
    }

    fn manifest_path(&self) -> Result<PathBuf> {
        match &self.cfg.manifest {
            Some(p) if p.exists() => Ok(p.clone()),
            Some(p) => Err(CliError::Config(format!("manifest {} does not exist", p.display()))),
            None => {
                let p = self.layout.cohort_manifest();
                self.require(&p, Stage::Synth)?;
                Ok(p)
            }
        }
    }

    /// Checks every subject's EDF and hypnogram and records what was found.
    pub fn ingest(&self) -> Result<Vec<IngestRow>> {
        let entries = read_manifest(self.manifest_path()?)?;
        let channels = self.cfg.channel.channels();
        let jobs: Vec<(&ManifestEntry, Channel)> =
            entries.iter().flat_map(|e| channels.iter().map(move |&c| (e, c))).collect();
        let rows = self.parallel(&jobs, |(e, ch)| {
            let rec = read_edf(&e.edf_path, ch.label())?;
            let hyp = Hypnogram::read_csv(&e.hypnogram_path, &e.subject_id)?;
            if (hyp.duration() - rec.duration()).abs() > hyp.epoch_seconds {
                return Err(insomnia_eeg::Error::Alignment {
                    hypnogram_s: hyp.duration(),
                    recording_s: rec.duration(),
                }
                .into());
            }
            Ok(IngestRow {
                subject_id: e.subject_id.clone(),
                class: e.class,
                channel: *ch,
                edf_path: e.edf_path.clone(),
                hypnogram_path: e.hypnogram_path.clone(),
                fs: rec.fs,
                duration_s: rec.duration(),
                hypnogram_s: hyp.duration(),
            })
        })?;
        self.mkdir(&self.layout.out)?;
        write_csv(
            &self.layout.ingest(),
            &self.provenance,
            &["subject_id", "class", "channel", "edf_path", "hypnogram_path", "fs", "duration_s", "hypnogram_s"],
            rows.iter().map(|r| {
                vec![
                    r.subject_id.clone(),
                    r.class.to_string(),
                    r.channel.to_string(),
                    r.edf_path.display().to_string(),
                    r.hypnogram_path.display().to_string(),
                    num(r.fs),
                    num(r.duration_s),
                    num(r.hypnogram_s),
                ]
            }),
        )?;
        Ok(rows)
    }

    fn ingested(&self, ch: Channel) -> Result<Vec<IngestRow>> {
        self.require(&self.layout.ingest(), Stage::Ingest)?;
        let rows: Vec<IngestRow> = read_csv(&self.layout.ingest())?;
        let rows: Vec<IngestRow> = rows.into_iter().filter(|r| r.channel == ch).collect();
        if rows.is_empty() {
            return Err(CliError::StageOrder(format!("ingest.csv has no {ch} rows; rerun `ingest`")));
        }
        Ok(rows)
    }

    /// Resamples and filters every recording, then segments it and flags
    /// artifact epochs. Returns (kept, rejected) epoch counts.
    pub fn preprocess(&self) -> Result<(usize, usize)> {
        let pc = &self.cfg.preprocess;
        let (mut kept, mut rejected) = (0, 0);
        for ch in self.cfg.channel.channels() {
            let rows = self.ingested(ch)?;
            self.mkdir(&self.layout.out.join("preprocessed"))?;
            let per_subject = self.parallel(&rows, |r| {
                let mut rec = read_edf(&r.edf_path, ch.label())?;
                rec.subject_id = r.subject_id.clone();
                rec.channel = ch;
                let filtered = filter_signal(&resample(&rec, pc.target_fs)?, &pc.filter)?;
                write_edf(&filtered, self.layout.preprocessed(&r.subject_id, ch))?;
                // rejection is decided here, on full-precision samples
                let mut epochs = segment(&filtered, pc.epoch_seconds, pc.overlap)?;
                reject_artifacts(&mut epochs, pc.clip_uv);
                Ok(epochs
                    .iter()
                    .map(|e| EpochRow {
                        subject_id: r.subject_id.clone(),
                        epoch_index: e.index,
                        offset_s: e.offset,
                        peak_uv: e.max_abs(),
                        rejected: e.rejected,
                    })
                    .collect::<Vec<_>>())
            })?;
            let all: Vec<EpochRow> = per_subject.into_iter().flatten().collect();
            rejected += all.iter().filter(|e| e.rejected).count();
            kept += all.iter().filter(|e| !e.rejected).count();
            write_csv(
                &self.layout.epochs(ch),
                &self.provenance,
                &["subject_id", "epoch_index", "offset_s", "peak_uv", "rejected"],
                all.iter().map(|e| {
                    vec![
                        e.subject_id.clone(),
                        e.epoch_index.to_string(),
                        num(e.offset_s),
                        num(e.peak_uv),
                        e.rejected.to_string(),
                    ]
                }),
            )?;
        }
        Ok((kept, rejected))
    }

    /// Extracts the feature table of every channel. Returns the number of
    /// vectors and of degenerate epochs skipped.
    pub fn features(&self) -> Result<(usize, usize)> {
        let pc = &self.cfg.preprocess;
        let (mut total, mut skipped) = (0, 0);
        for ch in self.cfg.channel.channels() {
            let rows = self.ingested(ch)?;
            self.require(&self.layout.epochs(ch), Stage::Preprocess)?;
            let epoch_rows: Vec<EpochRow> = read_csv(&self.layout.epochs(ch))?;
            let mut flags: HashMap<&str, Vec<&EpochRow>> = HashMap::new();
            for e in &epoch_rows {
                flags.entry(e.subject_id.as_str()).or_default().push(e);
            }
            let per_subject = self.parallel(&rows, |r| {
                let path = self.layout.preprocessed(&r.subject_id, ch);
                self.require(&path, Stage::Preprocess)?;
                let filtered = read_edf(&path, ch.label())?;
                let mut epochs = segment(&filtered, pc.epoch_seconds, pc.overlap)?;
                let marks = flags.get(r.subject_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
                if marks.len() != epochs.len() {
                    return Err(CliError::StageOrder(format!(
                        "{}: epochs_{ch}.csv lists {} epochs, signal has {}; rerun `preprocess`",
                        r.subject_id,
                        marks.len(),
                        epochs.len()
                    )));
                }
                for (e, m) in epochs.iter_mut().zip(marks) {
                    e.subject_id = r.subject_id.clone();
                    e.rejected = m.rejected;
                }
                let epochs = epochs
                    .into_iter()
                    .map(|e| if e.rejected { e } else { normalize_epoch(e) })
                    .collect();
                let pre = Preprocessed {
                    subject_id: r.subject_id.clone(),
                    channel: ch,
                    fs: filtered.fs,
                    duration: r.duration_s,
                    epochs,
                };
                let hyp = Hypnogram::read_csv(&r.hypnogram_path, &r.subject_id)?;
                Ok(extract_all(&pre, &hyp, Some(r.class), &self.cfg.features)?)
            })?;
            let mut vectors = Vec::new();
            for x in per_subject {
                skipped += x.degenerate.len();
                vectors.extend(x.vectors);
            }
            total += vectors.len();
            let path = self.layout.features(ch);
            let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            write_feature_csv(std::io::BufWriter::new(file), &vectors, &[self.provenance.clone()])?;
        }
        Ok((total, skipped))
    }

    fn read_features(&self, ch: Channel) -> Result<Vec<FeatureVector>> {
        let path = self.layout.features(ch);
        self.require(&path, Stage::Features)?;
        let file = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(read_feature_csv(std::io::BufReader::new(file))?)
    }

    /// Joins the channels' feature tables on (subject, epoch).
    fn design(&self) -> Result<Design> {
        let tables = self
            .cfg
            .channel
            .channels()
            .into_iter()
            .map(|ch| self.read_features(ch))
            .collect::<Result<Vec<_>>>()?;
        let index: Vec<HashMap<(String, usize), &FeatureVector>> = tables
            .iter()
            .map(|t| t.iter().map(|v| ((v.subject_id.clone(), v.epoch_index), v)).collect())
            .collect();
        let mut d = Design {
            keys: Vec::new(),
            labels: Vec::new(),
            vectors: vec![Vec::new(); tables.len()],
        };
        for v in &tables[0] {
            let key = (v.subject_id.clone(), v.epoch_index);
            let hits: Option<Vec<&FeatureVector>> = index.iter().map(|m| m.get(&key).copied()).collect();
            let Some(hits) = hits else { continue };
            let label = v
                .label
                .ok_or_else(|| CliError::Config(format!("{}: feature rows carry no class", v.subject_id)))?;
            d.keys.push(key);
            d.labels.push(label);
            for (col, h) in d.vectors.iter_mut().zip(hits) {
                col.push(h.clone());
            }
        }
        if d.keys.is_empty() {
            return Err(insomnia_eeg::Error::NoData("no epochs common to the selected channels".into()).into());
        }
        Ok(d)
    }

    fn read_split(&self) -> Result<HashMap<(String, usize), Part>> {
        self.require(&self.layout.split(), Stage::Select)?;
        let rows: Vec<SplitRow> = read_csv(&self.layout.split())?;
        Ok(rows.into_iter().map(|r| ((r.subject_id, r.epoch_index), r.set)).collect())
    }

    /// Splits the data, then scores and tiers every feature on the training
    /// part only. Returns the selected features per channel.
    pub fn select(&self) -> Result<Vec<(Channel, Vec<Feature>)>> {
        let d = self.design()?;
        let subjects: Vec<String> = d.keys.iter().map(|k| k.0.clone()).collect();
        let t = &self.cfg.train;
        let split = split_by_subject(&subjects, &d.labels, t.split, self.cfg.seed, t.epoch_split);
        let train_rows: HashSet<usize> = split.train.iter().copied().collect();
        write_csv(
            &self.layout.split(),
            &self.provenance,
            &["subject_id", "epoch_index", "set"],
            d.keys.iter().enumerate().map(|(i, (s, e))| {
                let set = if train_rows.contains(&i) { "train" } else { "test" };
                vec![s.clone(), e.to_string(), set.to_string()]
            }),
        )?;

        let mut stat_rows = Vec::new();
        let mut selected = Vec::new();
        for (ch, col) in self.cfg.channel.channels().into_iter().zip(&d.vectors) {
            let train: Vec<FeatureVector> = split.train.iter().map(|&i| col[i].clone()).collect();
            let (stats, constant) = feature_stats(&train, &self.cfg.selection)?;
            for s in &stats {
                stat_rows.push(vec![
                    ch.to_string(),
                    s.feature.to_string(),
                    num(s.t_stat),
                    num(s.dof),
                    num(s.p_value),
                    num(s.r_pb),
                    s.tier.to_string(),
                ]);
            }
            for f in constant {
                let blank = String::new;
                stat_rows.push(vec![ch.to_string(), f.to_string(), blank(), blank(), blank(), blank(), "constant".into()]);
            }
            selected.push((ch, apply_rules(&stats, &self.cfg.selection)?));
        }
        write_csv(
            &self.layout.feature_stats(),
            &self.provenance,
            &["channel", "feature", "t", "dof", "p", "r_pb", "tier"],
            stat_rows,
        )?;
        write_csv(
            &self.layout.selected(),
            &self.provenance,
            &["channel", "feature"],
            selected
                .iter()
                .flat_map(|(ch, fs)| fs.iter().map(move |f| vec![ch.to_string(), f.to_string()])),
        )?;
        Ok(selected)
    }

    fn read_selected(&self) -> Result<Vec<Vec<Feature>>> {
        self.require(&self.layout.selected(), Stage::Select)?;
        let rows: Vec<SelectedRow> = read_csv(&self.layout.selected())?;
        self.cfg
            .channel
            .channels()
            .into_iter()
            .map(|ch| {
                let fs = rows
                    .iter()
                    .filter(|r| r.channel == ch)
                    .map(|r| r.feature.parse::<Feature>().map_err(CliError::from))
                    .collect::<Result<Vec<_>>>()?;
                if fs.is_empty() {
                    return Err(CliError::StageOrder(format!("selected.csv has no {ch} features; rerun `select`")));
                }
                Ok(fs)
            })
            .collect()
    }

    fn samples(&self, d: &Design, z: &[ZScore], selected: &[Vec<Feature>], rows: &[usize]) -> Vec<Sample> {
        rows.iter()
            .map(|&i| {
                let mut x = Vec::new();
                for ((col, z), fs) in d.vectors.iter().zip(z).zip(selected) {
                    x.extend(z.apply(&col[i]).select(fs));
                }
                Sample {
                    subject_id: d.keys[i].0.clone(),
                    x,
                    label: d.labels[i],
                }
            })
            .collect()
    }

    fn partition(&self, d: &Design) -> Result<(Vec<usize>, Vec<usize>)> {
        let split = self.read_split()?;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, key) in d.keys.iter().enumerate() {
            match split.get(key) {
                Some(Part::Train) => train.push(i),
                Some(Part::Test) => test.push(i),
                None => {
                    return Err(CliError::StageOrder(format!(
                        "epoch {} of {} is not in split.csv; rerun `select`",
                        key.1, key.0
                    )))
                }
            }
        }
        Ok((train, test))
    }

    /// Fits the normalization on the training rows and trains the network,
    /// using the held-out rows for early stopping.
    pub fn train(&self) -> Result<History> {
        let d = self.design()?;
        let selected = self.read_selected()?;
        let (train_rows, test_rows) = self.partition(&d)?;
        let z = d
            .vectors
            .iter()
            .map(|col| {
                let rows: Vec<FeatureVector> = train_rows.iter().map(|&i| col[i].clone()).collect();
                ZScore::fit(&rows)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let train_set = self.samples(&d, &z, &selected, &train_rows);
        let test_set = self.samples(&d, &z, &selected, &test_rows);
        let (model, history) = train(&train_set, &test_set, &self.cfg.train_config())?;
        save_model(&model, self.layout.model())?;

        let mut zrows = Vec::new();
        for (ch, z) in self.cfg.channel.channels().into_iter().zip(&z) {
            for f in Feature::ALL {
                let i = f.index();
                zrows.push(vec![ch.to_string(), f.to_string(), num(z.mean[i]), num(z.std[i]), z.constant[i].to_string()]);
            }
        }
        write_csv(&self.layout.zscore(), &self.provenance, &["channel", "feature", "mean", "std", "constant"], zrows)?;
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        write_csv(
            &self.layout.history(),
            &self.provenance,
            &["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "best"],
            history.rows.iter().map(|r| {
                vec![
                    r.epoch.to_string(),
                    num(r.train_loss),
                    num(r.train_acc),
                    opt(r.val_loss),
                    opt(r.val_acc),
                    (r.epoch == history.best_epoch).to_string(),
                ]
            }),
        )?;
        Ok(history)
    }

    fn read_zscore(&self) -> Result<Vec<ZScore>> {
        self.require(&self.layout.zscore(), Stage::Train)?;
        let rows: Vec<ZScoreRow> = read_csv(&self.layout.zscore())?;
        self.cfg
            .channel
            .channels()
            .into_iter()
            .map(|ch| {
                let mut z = ZScore {
                    mean: [0.0; NUM_FEATURES],
                    std: [0.0; NUM_FEATURES],
                    constant: [false; NUM_FEATURES],
                };
                let mut seen = 0;
                for r in rows.iter().filter(|r| r.channel == ch) {
                    let i = r.feature.parse::<Feature>()?.index();
                    z.mean[i] = r.mean;
                    z.std[i] = r.std;
                    z.constant[i] = r.constant;
                    seen += 1;
                }
                if seen != NUM_FEATURES {
                    return Err(CliError::StageOrder(format!("zscore.csv lacks {ch} statistics; rerun `train`")));
                }
                Ok(z)
            })
            .collect()
    }

    /// Scores the held-out rows at epoch and subject level.
    pub fn eval(&self) -> Result<Vec<MetricRow>> {
        self.require(&self.layout.model(), Stage::Train)?;
        let d = self.design()?;
        let selected = self.read_selected()?;
        let z = self.read_zscore()?;
        let (_, test_rows) = self.partition(&d)?;
        if test_rows.is_empty() {
            return Err(insomnia_eeg::Error::InsufficientData("the split holds no test rows".into()).into());
        }
        let width: usize = selected.iter().map(Vec::len).sum();
        let model = load_model(self.layout.model(), Some(width))?;
        let samples = self.samples(&d, &z, &selected, &test_rows);

        let mut epoch_cm = ConfusionMatrix::default();
        let mut pred_rows = Vec::new();
        let mut by_subject: BTreeMap<&str, (Label, Vec<[f64; 2]>)> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for (s, &i) in samples.iter().zip(&test_rows) {
            let p = model.forward(&s.x)?;
            let (pred, p_ins) = aggregate(&[p]);
            epoch_cm.add(s.label, pred);
            pred_rows.push(vec![
                s.subject_id.clone(),
                d.keys[i].1.to_string(),
                s.label.to_string(),
                pred.to_string(),
                num(p_ins),
            ]);
            let entry = by_subject.entry(s.subject_id.as_str()).or_insert_with(|| {
                order.push(s.subject_id.as_str());
                (s.label, Vec::new())
            });
            entry.1.push(p);
        }
        let mut subject_cm = ConfusionMatrix::default();
        let mut subject_rows = Vec::new();
        for id in order {
            let (truth, probs) = &by_subject[id];
            let (pred, p_ins) = aggregate(probs);
            subject_cm.add(*truth, pred);
            subject_rows.push(vec![
                id.to_string(),
                truth.to_string(),
                pred.to_string(),
                num(p_ins),
                probs.len().to_string(),
            ]);
        }
        write_csv(
            &self.layout.predictions(),
            &self.provenance,
            &["subject_id", "epoch_index", "truth", "pred", "p_insomnia"],
            pred_rows,
        )?;
        write_csv(
            &self.layout.subject_predictions(),
            &self.provenance,
            &["subject_id", "truth", "pred", "p_insomnia", "n_epochs"],
            subject_rows,
        )?;
        let channel = self.cfg.channel.label().to_string();
        let rows: Vec<MetricRow> = [("epoch", epoch_cm), ("subject", subject_cm)]
            .into_iter()
            .map(|(level, cm)| MetricRow {
                level,
                channel: channel.clone(),
                confusion: cm,
                metrics: Metrics::of(&cm),
            })
            .collect();
        write_csv(
            &self.layout.metrics(),
            &self.provenance,
            &["level", "channel", "n", "accuracy", "precision", "recall", "f1", "kappa", "tp", "tn", "fp", "fn"],
            rows.iter().map(|r| {
                let (m, c) = (&r.metrics, &r.confusion);
                vec![
                    r.level.to_string(),
                    r.channel.clone(),
                    c.total().to_string(),
                    metric(m.accuracy),
                    metric(m.precision),
                    metric(m.recall),
                    metric(m.f1),
                    metric(m.kappa),
                    c.tp.to_string(),
                    c.tn.to_string(),
                    c.fp.to_string(),
                    c.fn_.to_string(),
                ]
            }),
        )?;
        Ok(rows)
    }

    /// Sleep-parameter statistics per class from a manifest's hypnograms.
    pub fn sleepstats(&self, manifest: &Path, dest: &Path) -> Result<()> {
        let entries = read_manifest(manifest)?;
        let subjects = entries
            .iter()
            .map(|e| Ok((e.class, Hypnogram::read_csv(&e.hypnogram_path, &e.subject_id)?)))
            .collect::<Result<Vec<_>>>()?;
        self.write_sleep_stats(&subjects, dest)
    }

    fn write_sleep_stats(&self, subjects: &[(Label, Hypnogram)], dest: &Path) -> Result<()> {
        let rows = sleep_stats(subjects)?;
        write_csv(
            dest,
            &self.provenance,
            &["class", "parameter", "n", "mean", "std", "min", "max"],
            rows.iter().map(|r| {
                vec![
                    r.class.to_string(),
                    r.parameter.clone(),
                    r.n.to_string(),
                    num(r.mean),
                    num(r.std),
                    num(r.min),
                    num(r.max),
                ]
            }),
        )
    }

    /// Collects metrics, training history, feature statistics and sleep
    /// statistics under `report/`.
    pub fn report(&self) -> Result<PathBuf> {
        self.require(&self.layout.metrics(), Stage::Eval)?;
        let dir = self.layout.report_dir();
        self.mkdir(&dir)?;
        for src in [self.layout.metrics(), self.layout.history(), self.layout.feature_stats()] {
            let name = src.file_name().expect("file name");
            std::fs::copy(&src, dir.join(name)).map_err(|e| CliError::io(&src, e))?;
        }
        let first = self.cfg.channel.channels()[0];
        let subjects = self
            .ingested(first)?
            .iter()
            .map(|r| Ok((r.class, Hypnogram::read_csv(&r.hypnogram_path, &r.subject_id)?)))
            .collect::<Result<Vec<_>>>()?;
        self.write_sleep_stats(&subjects, &dir.join("sleep_stats.csv"))?;
        Ok(dir)
    }

    /// Every stage in order, generating a synthetic cohort first when no
    /// manifest is configured.
    pub fn run(&self) -> Result<Vec<MetricRow>> {
        if self.cfg.manifest.is_none() {
            self.synth()?;
        }
        self.ingest()?;
        self.preprocess()?;
        self.features()?;
        self.select()?;
        self.train()?;
        let metrics = self.eval()?;
        self.report()?;
        Ok(metrics)
    }
}
