//! Synthetic labelled recordings.
//!
//! Each channel is a sum of one sinusoid per EEG band plus white noise. Every
//! 30 s block redraws each sinusoid's frequency from its band (phase stays
//! continuous), so band powers are known by construction. The hypnogram has
//! exactly the wake share implied by the target sleep efficiency, with stages
//! in random order; stages do not modulate the signal.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::edf_io::{write_edf_signals, Channel, Recording};
use crate::error::{Error, Result};
use crate::features::{Bands, Hypnogram, Stage, STAGE_SECONDS};
use crate::Label;

/// The profile table shipped with the crate.
pub const DEFAULT_PROFILES: &str = include_str!("profiles.toml");

/// Peak amplitude in µV of the sinusoid placed in each band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandAmplitudes {
    pub slow_wave: f64,
    pub delta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassProfile {
    #[serde(flatten)]
    pub amplitudes: BandAmplitudes,
    pub noise_sigma: f64,
    /// Target sleep efficiency in percent.
    pub sleep_efficiency: f64,
    /// Share of sleep epochs scored S3 or S4.
    pub slow_wave_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jitter {
    /// Each amplitude is scaled by a factor drawn from `1 ± amplitude`.
    pub amplitude: f64,
    /// Sleep efficiency target shifted by up to this many points.
    pub sleep_efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileTable {
    pub healthy: ClassProfile,
    pub insomnia: ClassProfile,
    pub jitter: Jitter,
}

impl Default for ProfileTable {
    fn default() -> Self {
        ProfileTable::parse(DEFAULT_PROFILES).expect("bundled profile table parses")
    }
}

impl ProfileTable {
    pub fn parse(text: &str) -> Result<Self> {
        let table: ProfileTable = toml::from_str(text).map_err(|e| Error::Format(format!("profile table: {e}")))?;
        for p in [&table.healthy, &table.insomnia] {
            p.validate()?;
        }
        Ok(table)
    }

    pub fn class(&self, label: Label) -> &ClassProfile {
        match label {
            Label::Healthy => &self.healthy,
            Label::Insomnia => &self.insomnia,
        }
    }
}

impl ClassProfile {
    fn validate(&self) -> Result<()> {
        let a = &self.amplitudes;
        let all = [a.slow_wave, a.delta, a.theta, a.alpha, a.sigma, a.beta, a.gamma, self.noise_sigma];
        if all.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidSpec("profile amplitudes must be >= 0".into()));
        }
        if !(0.0..=100.0).contains(&self.sleep_efficiency) || !(0.0..=1.0).contains(&self.slow_wave_fraction) {
            return Err(Error::InvalidSpec("profile sleep targets out of range".into()));
        }
        Ok(())
    }
}

/// Everything needed to generate one subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectProfile {
    pub class: Label,
    pub profile: ClassProfile,
    pub seed: u64,
}

impl SubjectProfile {
    /// The class defaults with this subject's jitter applied.
    pub fn draw(class: Label, table: &ProfileTable, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_0000_0000_0001);
        let mut p = *table.class(class);
        let j = table.jitter;
        let mut scale = |v: &mut f64| {
            if j.amplitude > 0.0 {
                *v *= rng.gen_range(1.0 - j.amplitude..=1.0 + j.amplitude);
            }
        };
        let a = &mut p.amplitudes;
        for v in [&mut a.slow_wave, &mut a.delta, &mut a.theta, &mut a.alpha, &mut a.sigma, &mut a.beta, &mut a.gamma] {
            scale(v);
        }
        if j.sleep_efficiency > 0.0 {
            let shift = rng.gen_range(-j.sleep_efficiency..=j.sleep_efficiency);
            p.sleep_efficiency = (p.sleep_efficiency + shift).clamp(0.0, 100.0);
        }
        SubjectProfile { class, profile: p, seed }
    }
}

/// The splitmix64 output function; spreads a cohort seed into per-subject seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn channel_stream(seed: u64, channel: Channel) -> u64 {
    splitmix64(seed ^ (channel as u64 + 1).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Hypnogram of `n` epochs with `round((1 - SE/100) n)` wake epochs.
pub fn synth_hypnogram(subject_id: &str, profile: &ClassProfile, n: usize, seed: u64) -> Result<Hypnogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x4859_504E));
    let wake = ((1.0 - profile.sleep_efficiency / 100.0) * n as f64).round() as usize;
    let sleep = n - wake.min(n);
    let deep = (profile.slow_wave_fraction * sleep as f64).round() as usize;
    let light = sleep - deep;
    let rem = (0.25 * light as f64).round() as usize;
    let s1 = (0.10 * light as f64).round() as usize;
    let mut stages = Vec::with_capacity(n);
    stages.extend(std::iter::repeat(Stage::W).take(n - sleep));
    stages.extend(std::iter::repeat(Stage::S3).take(deep.div_ceil(2)));
    stages.extend(std::iter::repeat(Stage::S4).take(deep / 2));
    stages.extend(std::iter::repeat(Stage::Rem).take(rem));
    stages.extend(std::iter::repeat(Stage::S1).take(s1));
    stages.extend(std::iter::repeat(Stage::S2).take(light - rem - s1));
    stages.shuffle(&mut rng);
    Hypnogram::new(subject_id, stages)
}

/// One channel of a subject and its hypnogram; both are fully determined by
/// the profile's seed.
pub fn generate_subject(
    subject_id: &str,
    profile: &SubjectProfile,
    channel: Channel,
    duration: f64,
    fs: f64,
) -> Result<(Recording, Hypnogram)> {
    if !(duration >= 60.0) {
        return Err(Error::InvalidSpec(format!("synthetic recordings need at least 60 s, got {duration}")));
    }
    if !(fs >= 100.0) {
        return Err(Error::InvalidSpec(format!("synthetic sampling rate {fs} Hz is below 100 Hz")));
    }
    let p = &profile.profile;
    let n_blocks = (duration / STAGE_SECONDS).round() as usize;
    let hypnogram = synth_hypnogram(subject_id, p, n_blocks, profile.seed)?;

    let bands = Bands::default();
    let a = &p.amplitudes;
    let components = [
        (a.slow_wave, bands.slow_wave),
        (a.delta, bands.delta),
        (a.theta, bands.theta),
        (a.alpha, bands.alpha),
        (a.sigma, bands.sigma),
        (a.beta, bands.beta),
        (a.gamma, bands.gamma),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(channel_stream(profile.seed, channel));
    let noise = Normal::new(0.0, p.noise_sigma.max(0.0)).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let n = (duration * fs).round() as usize;
    let block_len = (STAGE_SECONDS * fs).round() as usize;
    let mut phase: Vec<f64> = components.iter().map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let mut freq = vec![0.0; components.len()];
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        if i % block_len == 0 {
            for (f, (_, band)) in freq.iter_mut().zip(&components) {
                *f = rng.gen_range(band.lo..band.hi);
            }
        }
        let mut v = 0.0;
        for ((ph, &f), (amp, _)) in phase.iter_mut().zip(&freq).zip(&components) {
            v += amp * ph.sin();
            *ph = (*ph + 2.0 * PI * f / fs) % (2.0 * PI);
        }
        if p.noise_sigma > 0.0 {
            v += noise.sample(&mut rng);
        }
        samples.push(v);
    }
    let recording = Recording::new(subject_id, channel, fs, samples);
    Ok((recording, hypnogram))
}

/// One row of a cohort manifest. Relative paths are resolved against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub class: Label,
    pub edf_path: PathBuf,
    pub hypnogram_path: PathBuf,
    pub seed: u64,
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for e in entries {
        wtr.serialize(e).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Reads a manifest and resolves its paths. Lines starting with `#` are
/// comments; the `seed` column may be empty for recorded (non-synthetic) data.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    #[derive(Deserialize)]
    struct Row {
        subject_id: String,
        class: String,
        edf_path: PathBuf,
        hypnogram_path: PathBuf,
        #[serde(default)]
        seed: Option<u64>,
    }
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: Row = row.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        out.push(ManifestEntry {
            subject_id: row.subject_id,
            class: row.class.parse()?,
            edf_path: resolve(row.edf_path),
            hypnogram_path: resolve(row.hypnogram_path),
            seed: row.seed.unwrap_or(0),
        });
    }
    if out.is_empty() {
        return Err(Error::NoData(format!("manifest {} lists no subjects", path.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortConfig {
    pub n_healthy: usize,
    pub n_insomnia: usize,
    /// Recording length in seconds.
    pub duration: f64,
    /// Sampling rate written to the EDF files.
    pub fs: f64,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_healthy: 10,
            n_insomnia: 10,
            duration: 600.0,
            fs: 256.0,
            seed: 7,
        }
    }
}

/// Subject ids and profiles of a cohort, healthy subjects first.
pub fn cohort_plan(cfg: &CohortConfig, table: &ProfileTable) -> Result<Vec<(String, SubjectProfile)>> {
    if cfg.n_healthy == 0 || cfg.n_insomnia == 0 {
        return Err(Error::InvalidSpec(format!(
            "a cohort needs at least one subject per class, got {} healthy and {} insomnia",
            cfg.n_healthy, cfg.n_insomnia
        )));
    }
    let mut plan = Vec::with_capacity(cfg.n_healthy + cfg.n_insomnia);
    for (class, count) in [(Label::Healthy, cfg.n_healthy), (Label::Insomnia, cfg.n_insomnia)] {
        for k in 1..=count {
            let index = plan.len() as u64;
            let seed = splitmix64(cfg.seed.wrapping_add(index));
            plan.push((format!("{class}-{k:02}"), SubjectProfile::draw(class, table, seed)));
        }
    }
    Ok(plan)
}

/// Writes `<id>.edf` (Fp2 and C4) and `<id>.hyp.csv` into `dir`.
pub fn write_subject(dir: &Path, id: &str, profile: &SubjectProfile, cfg: &CohortConfig) -> Result<ManifestEntry> {
    let (fp2, hyp) = generate_subject(id, profile, Channel::Fp2, cfg.duration, cfg.fs)?;
    let (c4, _) = generate_subject(id, profile, Channel::C4, cfg.duration, cfg.fs)?;
    let edf = format!("{id}.edf");
    let hyp_name = format!("{id}.hyp.csv");
    write_edf_signals(&[&fp2, &c4], dir.join(&edf))?;
    hyp.write_csv(dir.join(&hyp_name))?;
    Ok(ManifestEntry {
        subject_id: id.to_string(),
        class: profile.class,
        edf_path: PathBuf::from(edf),
        hypnogram_path: PathBuf::from(hyp_name),
        seed: profile.seed,
    })
}

/// Generates a whole cohort into `dir` and writes `dir/manifest.csv`.
pub fn generate_cohort(dir: impl AsRef<Path>, cfg: &CohortConfig, table: &ProfileTable) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    let plan = cohort_plan(cfg, table)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries = plan
        .iter()
        .map(|(id, profile)| write_subject(dir, id, profile, cfg))
        .collect::<Result<Vec<_>>>()?;
    write_manifest(dir.join("manifest.csv"), &entries)?;
    Ok(entries)
}
