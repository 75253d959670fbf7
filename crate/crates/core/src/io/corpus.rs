//! Synthetic multi-speaker corpus with planted identity cues, and its
//! on-disk manifest.
//!
//! Pitch: a smooth prosodic contour drawn per utterance from a distribution
//! shared by all speakers, scaled around the speaker's base pitch, plus
//! AR(1) jitter whose amplitude is speaker-specific; unvoiced phones give
//! zero runs. Features: a phone prototype (shared) plus the speaker's
//! channel offset plus Gaussian observation noise, with aligned labels.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::binary::{read_features, to_f32_precision, write_features};
use super::text::{parse_key_values, read_pitch, write_pitch};
use crate::bn::{AcousticFrames, LabelledUtterance};
use crate::dp::NoiseRng;
use crate::error::{Error, Result};
use crate::eval::Split;
use crate::nn::Matrix;
use crate::pitch::PitchSequence;

pub const MANIFEST_HEADER: &str = "dpcorpus v1";
pub const LABEL_HEADER: &str = "dplab v1";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const MIN_BASE_PITCH: f64 = 60.0;
pub const MAX_BASE_PITCH: f64 = 400.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeakerSpec {
    pub base_pitch_hz: f64,
    /// Standard deviation of the local pitch perturbation, Hz.
    pub jitter_amplitude: f64,
    /// Added to every acoustic frame of this speaker.
    pub feature_offset: Vec<f64>,
    /// Phone classes this speaker draws from.
    pub phone_inventory: Vec<usize>,
}

impl SyntheticSpeakerSpec {
    fn validate(&self, config: &GeneratorConfig) -> Result<()> {
        if !(MIN_BASE_PITCH..=MAX_BASE_PITCH).contains(&self.base_pitch_hz) {
            return Err(Error::InvalidArgument(format!(
                "base pitch {} Hz outside [{MIN_BASE_PITCH}, {MAX_BASE_PITCH}]",
                self.base_pitch_hz
            )));
        }
        if !(self.jitter_amplitude >= 0.0 && self.jitter_amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!("jitter amplitude {}", self.jitter_amplitude)));
        }
        if self.feature_offset.len() != config.feature_dim {
            return Err(Error::shape(format!("{}-dim feature offset", config.feature_dim), self.feature_offset.len()));
        }
        if self.feature_offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("feature offset must be finite".into()));
        }
        if self.phone_inventory.is_empty() {
            return Err(Error::Empty("phone inventory"));
        }
        if let Some(p) = self.phone_inventory.iter().find(|p| **p >= config.phone_classes) {
            return Err(Error::InvalidArgument(format!("phone {p} outside [0, {})", config.phone_classes)));
        }
        if self.phone_inventory.iter().all(|p| *p < config.unvoiced_phones) {
            return Err(Error::InvalidArgument("phone inventory has no voiced phone".into()));
        }
        Ok(())
    }
}

/// Generator knobs. Phone prototypes depend only on `phone_seed`, so
/// corpora generated with different seeds share a phone set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub feature_dim: usize,
    pub phone_classes: usize,
    /// Phones `0..unvoiced_phones` carry no pitch.
    pub unvoiced_phones: usize,
    pub min_phone_frames: usize,
    pub max_phone_frames: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Label sequences are redrawn until at least this many frames are voiced.
    pub min_voiced_frames: usize,
    /// Relative depth of the prosodic contour around the base pitch.
    pub prosody_depth: f64,
    /// AR(1) coefficient of the jitter process.
    pub jitter_correlation: f64,
    pub prototype_scale: f64,
    pub observation_noise: f64,
    pub phone_seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            feature_dim: 20,
            phone_classes: 10,
            unvoiced_phones: 2,
            min_phone_frames: 3,
            max_phone_frames: 10,
            min_frames: 60,
            max_frames: 120,
            min_voiced_frames: 5,
            prosody_depth: 0.15,
            jitter_correlation: 0.3,
            prototype_scale: 1.0,
            observation_noise: 0.5,
            phone_seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("generator: {m}")));
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if self.phone_classes < 2 || self.unvoiced_phones >= self.phone_classes {
            return bad("need at least 2 phones and at least one voiced phone");
        }
        if self.min_phone_frames == 0 || self.min_phone_frames > self.max_phone_frames {
            return bad("phone duration range must be positive and ordered");
        }
        if self.min_frames < 2 || self.min_frames > self.max_frames {
            return bad("utterance length range must be at least 2 and ordered");
        }
        if self.min_voiced_frames > self.min_frames {
            return bad("min_voiced_frames cannot exceed min_frames");
        }
        if !(0.0..1.0).contains(&self.prosody_depth) {
            return bad("prosody_depth must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.jitter_correlation) {
            return bad("jitter_correlation must lie in [0, 1)");
        }
        if !(self.prototype_scale >= 0.0 && self.observation_noise >= 0.0) {
            return bad("scales must be non-negative");
        }
        Ok(())
    }

    pub fn to_params(&self) -> BTreeMap<String, String> {
        [
            ("feature_dim", self.feature_dim.to_string()),
            ("phone_classes", self.phone_classes.to_string()),
            ("unvoiced_phones", self.unvoiced_phones.to_string()),
            ("min_phone_frames", self.min_phone_frames.to_string()),
            ("max_phone_frames", self.max_phone_frames.to_string()),
            ("min_frames", self.min_frames.to_string()),
            ("max_frames", self.max_frames.to_string()),
            ("min_voiced_frames", self.min_voiced_frames.to_string()),
            ("prosody_depth", self.prosody_depth.to_string()),
            ("jitter_correlation", self.jitter_correlation.to_string()),
            ("prototype_scale", self.prototype_scale.to_string()),
            ("observation_noise", self.observation_noise.to_string()),
            ("phone_seed", self.phone_seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect()
    }

    /// Overrides defaults with whichever keys are present; unknown keys are ignored.
    pub fn from_params(params: &BTreeMap<String, String>) -> Result<Self> {
        fn get<T: std::str::FromStr>(p: &BTreeMap<String, String>, key: &str, slot: &mut T) -> Result<()> {
            if let Some(v) = p.get(key) {
                *slot = v
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("generator parameter {key}: cannot parse {v:?}")))?;
            }
            Ok(())
        }
        let mut c = Self::default();
        get(params, "feature_dim", &mut c.feature_dim)?;
        get(params, "phone_classes", &mut c.phone_classes)?;
        get(params, "unvoiced_phones", &mut c.unvoiced_phones)?;
        get(params, "min_phone_frames", &mut c.min_phone_frames)?;
        get(params, "max_phone_frames", &mut c.max_phone_frames)?;
        get(params, "min_frames", &mut c.min_frames)?;
        get(params, "max_frames", &mut c.max_frames)?;
        get(params, "min_voiced_frames", &mut c.min_voiced_frames)?;
        get(params, "prosody_depth", &mut c.prosody_depth)?;
        get(params, "jitter_correlation", &mut c.jitter_correlation)?;
        get(params, "prototype_scale", &mut c.prototype_scale)?;
        get(params, "observation_noise", &mut c.observation_noise)?;
        get(params, "phone_seed", &mut c.phone_seed)?;
        c.validate()?;
        Ok(c)
    }

    /// Per-phone mean feature vectors.
    pub fn prototypes(&self) -> Matrix {
        let mut rng = NoiseRng::stream(self.phone_seed, 0);
        Matrix::from_fn(self.phone_classes, self.feature_dim, |_, _| {
            self.prototype_scale * normal(&mut rng)
        })
    }
}

/// Ranges for [`random_speakers`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeakerDistribution {
    pub min_base_pitch: f64,
    pub max_base_pitch: f64,
    /// Jitter amplitude is drawn uniformly from this range, as a fraction of base pitch.
    pub min_relative_jitter: f64,
    pub max_relative_jitter: f64,
    /// Standard deviation of each feature-offset coordinate.
    pub offset_scale: f64,
}

impl Default for SpeakerDistribution {
    fn default() -> Self {
        Self {
            min_base_pitch: 90.0,
            max_base_pitch: 250.0,
            min_relative_jitter: 0.0,
            max_relative_jitter: 0.15,
            offset_scale: 0.5,
        }
    }
}

pub fn random_speakers<R: Rng + ?Sized>(
    count: usize,
    config: &GeneratorConfig,
    dist: &SpeakerDistribution,
    rng: &mut R,
) -> Result<Vec<SyntheticSpeakerSpec>> {
    if !(dist.min_base_pitch <= dist.max_base_pitch && dist.min_relative_jitter <= dist.max_relative_jitter) {
        return Err(Error::InvalidArgument("speaker distribution ranges must be ordered".into()));
    }
    let specs: Vec<SyntheticSpeakerSpec> = (0..count)
        .map(|_| {
            let base = rng.gen_range(dist.min_base_pitch..=dist.max_base_pitch);
            let rel = rng.gen_range(dist.min_relative_jitter..=dist.max_relative_jitter);
            SyntheticSpeakerSpec {
                base_pitch_hz: base,
                jitter_amplitude: rel * base,
                feature_offset: (0..config.feature_dim)
                    .map(|_| dist.offset_scale * normal(rng))
                    .collect(),
                phone_inventory: (0..config.phone_classes).collect(),
            }
        })
        .collect();
    for s in &specs {
        s.validate(config)?;
    }
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUtterance {
    pub id: String,
    pub speaker: usize,
    pub split: Split,
    pub pitch: PitchSequence,
    pub features: AcousticFrames,
    pub labels: Vec<usize>,
}

impl SyntheticUtterance {
    pub fn labelled(&self) -> LabelledUtterance {
        LabelledUtterance {
            frames: self.features.clone(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub config: GeneratorConfig,
    pub speakers: usize,
    pub utterances: Vec<SyntheticUtterance>,
}

impl SyntheticCorpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SyntheticUtterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }
}

/// Generates `utterances_per_speaker` utterances for every speaker, split
/// 80/10/10 by position.
pub fn gen_corpus<R: Rng + ?Sized>(
    specs: &[SyntheticSpeakerSpec],
    utterances_per_speaker: usize,
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<SyntheticCorpus> {
    config.validate()?;
    if specs.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 speakers, got {}", specs.len())));
    }
    if utterances_per_speaker == 0 {
        return Err(Error::InvalidArgument("need at least one utterance per speaker".into()));
    }
    for s in specs {
        s.validate(config)?;
    }
    let prototypes = config.prototypes();
    let mut utterances = Vec::with_capacity(specs.len() * utterances_per_speaker);
    for (speaker, spec) in specs.iter().enumerate() {
        for u in 0..utterances_per_speaker {
            let (pitch, features, labels) = utterance(spec, config, &prototypes, rng)?;
            utterances.push(SyntheticUtterance {
                id: format!("spk{speaker:03}_u{u:03}"),
                speaker,
                split: Split::for_position(u, utterances_per_speaker),
                pitch,
                features,
                labels,
            });
        }
    }
    Ok(SyntheticCorpus {
        config: *config,
        speakers: specs.len(),
        utterances,
    })
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn utterance<R: Rng + ?Sized>(
    spec: &SyntheticSpeakerSpec,
    config: &GeneratorConfig,
    prototypes: &Matrix,
    rng: &mut R,
) -> Result<(PitchSequence, AcousticFrames, Vec<usize>)> {
    let k = rng.gen_range(config.min_frames..=config.max_frames);
    let labels = loop {
        let mut labels = Vec::with_capacity(k);
        while labels.len() < k {
            let phone = spec.phone_inventory[rng.gen_range(0..spec.phone_inventory.len())];
            let dur = rng.gen_range(config.min_phone_frames..=config.max_phone_frames);
            labels.extend(std::iter::repeat(phone).take(dur.min(k - labels.len())));
        }
        if labels.iter().filter(|p| **p >= config.unvoiced_phones).count() >= config.min_voiced_frames {
            break labels;
        }
    };

    // Smooth contour: a random unit-length mix of a declination and two slow
    // oscillations, so its depth is the same for every utterance.
    let (a, b, c) = (normal(rng), normal(rng), normal(rng));
    let norm = (a * a + b * b + c * c).sqrt().max(1e-12);
    let (a, b, c) = (a / norm, b / norm, c / norm);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let rho = config.jitter_correlation;
    let innovation = (1.0 - rho * rho).sqrt();
    let mut jitter = normal(rng);
    let mut pitch = Vec::with_capacity(k);
    for (t, &phone) in labels.iter().enumerate() {
        let x = t as f64 / (k - 1) as f64;
        let template = a * 3f64.sqrt() * (2.0 * x - 1.0)
            + b * 2f64.sqrt() * (std::f64::consts::PI * x + phase).cos()
            + c * 2f64.sqrt() * (2.0 * std::f64::consts::PI * x + phase).sin();
        jitter = rho * jitter + innovation * normal(rng);
        let value = spec.base_pitch_hz * (1.0 + config.prosody_depth * template) + spec.jitter_amplitude * jitter;
        pitch.push(if phone < config.unvoiced_phones { 0.0 } else { value.max(MIN_BASE_PITCH / 2.0) });
    }

    let features = Matrix::from_fn(k, config.feature_dim, |t, d| {
        prototypes.get(labels[t], d) + spec.feature_offset[d] + config.observation_noise * normal(rng)
    });
    Ok((PitchSequence::new(pitch)?, AcousticFrames::new(features)?, labels))
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub pitch_file: String,
    pub feature_file: String,
    pub label_file: String,
    pub speaker: usize,
    pub split: Split,
}

/// `dpcorpus v1`: generator parameters then one line per utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub params: BTreeMap<String, String>,
    pub entries: Vec<ManifestEntry>,
}

impl fmt::Display for CorpusManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{MANIFEST_HEADER}")?;
        for (k, v) in &self.params {
            writeln!(f, "param {k}={v}")?;
        }
        for e in &self.entries {
            writeln!(
                f,
                "utt {} {} {} {} {} {}",
                e.id,
                e.pitch_file,
                e.feature_file,
                e.label_file,
                e.speaker,
                e.split.name()
            )?;
        }
        Ok(())
    }
}

impl std::str::FromStr for CorpusManifest {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        const FORMAT: &str = "dpcorpus";
        let mut offset = 0;
        let mut lines = text.split_inclusive('\n');
        let header = lines.next().unwrap_or("");
        if header.trim_end() != MANIFEST_HEADER {
            return Err(Error::parse(FORMAT, 0, format!("header {MANIFEST_HEADER:?}"), format!("{:?}", header.trim_end())));
        }
        offset += header.len();
        let mut param_text = String::new();
        let mut entries = Vec::new();
        for raw in lines {
            let line = raw.trim_end();
            if let Some(p) = line.strip_prefix("param ") {
                param_text.push_str(p);
                param_text.push('\n');
            } else if let Some(rest) = line.strip_prefix("utt ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 6 {
                    return Err(Error::parse(FORMAT, offset, "6 utterance fields", f.len()));
                }
                let speaker = f[4]
                    .parse()
                    .map_err(|_| Error::parse(FORMAT, offset, "integer speaker id", f[4]))?;
                let split = Split::from_name(f[5]).ok_or_else(|| Error::parse(FORMAT, offset, "train, validation or test", f[5]))?;
                entries.push(ManifestEntry {
                    id: f[0].to_owned(),
                    pitch_file: f[1].to_owned(),
                    feature_file: f[2].to_owned(),
                    label_file: f[3].to_owned(),
                    speaker,
                    split,
                });
            } else if !line.is_empty() {
                return Err(Error::parse(FORMAT, offset, "a param or utt line", format!("{line:?}")));
            }
            offset += raw.len();
        }
        Ok(Self {
            params: parse_key_values(FORMAT, &param_text)?,
            entries,
        })
    }
}

fn encode_labels(labels: &[usize]) -> String {
    let mut out = format!("{LABEL_HEADER}\n");
    for l in labels {
        out.push_str(&format!("{l}\n"));
    }
    out
}

fn decode_labels(text: &str) -> Result<Vec<usize>> {
    let mut lines = text.lines();
    if lines.next() != Some(LABEL_HEADER) {
        return Err(Error::parse("dplab", 0, format!("header {LABEL_HEADER:?}"), "something else"));
    }
    let mut offset = LABEL_HEADER.len() + 1;
    let mut out = Vec::new();
    for line in lines {
        out.push(line.trim().parse().map_err(|_| Error::parse("dplab", offset, "an integer label", format!("{line:?}")))?);
        offset += line.len() + 1;
    }
    Ok(out)
}

/// Writes every utterance plus `manifest.txt` into `dir`. Features are
/// stored at 32-bit precision.
pub fn write_corpus(dir: &Path, corpus: &SyntheticCorpus, extra_params: &BTreeMap<String, String>) -> Result<CorpusManifest> {
    std::fs::create_dir_all(dir)?;
    let mut params = corpus.config.to_params();
    params.extend(extra_params.iter().map(|(k, v)| (k.clone(), v.clone())));
    let mut entries = Vec::with_capacity(corpus.utterances.len());
    for u in &corpus.utterances {
        let entry = ManifestEntry {
            id: u.id.clone(),
            pitch_file: format!("{}.f0", u.id),
            feature_file: format!("{}.dpaf", u.id),
            label_file: format!("{}.lab", u.id),
            speaker: u.speaker,
            split: u.split,
        };
        write_pitch(&dir.join(&entry.pitch_file), &u.pitch)?;
        write_features(&dir.join(&entry.feature_file), u.features.matrix())?;
        std::fs::write(dir.join(&entry.label_file), encode_labels(&u.labels))?;
        entries.push(entry);
    }
    let manifest = CorpusManifest { params, entries };
    std::fs::write(dir.join(MANIFEST_FILE), manifest.to_string())?;
    Ok(manifest)
}

/// Loads a corpus written by [`write_corpus`], checking every referenced file.
pub fn read_corpus(dir: &Path) -> Result<SyntheticCorpus> {
    let manifest: CorpusManifest = std::fs::read_to_string(dir.join(MANIFEST_FILE))?.parse()?;
    let config = GeneratorConfig::from_params(&manifest.params)?;
    let path = |f: &str| -> PathBuf { dir.join(f) };
    let mut utterances = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let pitch = read_pitch(&path(&e.pitch_file))?;
        let features = AcousticFrames::new(read_features(&path(&e.feature_file))?)?;
        let labels = decode_labels(&std::fs::read_to_string(path(&e.label_file))?)?;
        if pitch.len() != features.frames() || labels.len() != features.frames() {
            return Err(Error::shape(
                format!("{} frames in {}", features.frames(), e.id),
                format!("{} pitch values and {} labels", pitch.len(), labels.len()),
            ));
        }
        utterances.push(SyntheticUtterance {
            id: e.id.clone(),
            speaker: e.speaker,
            split: e.split,
            pitch,
            features,
            labels,
        });
    }
    let speakers = utterances.iter().map(|u| u.speaker + 1).max().unwrap_or(0);
    Ok(SyntheticCorpus {
        config,
        speakers,
        utterances,
    })
}

/// The corpus as it reads back from disk (features rounded to f32).
pub fn at_storage_precision(corpus: &SyntheticCorpus) -> Result<SyntheticCorpus> {
    let mut out = corpus.clone();
    for u in &mut out.utterances {
        u.features = AcousticFrames::new(to_f32_precision(u.features.matrix()))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (GeneratorConfig, Vec<SyntheticSpeakerSpec>) {
        let config = GeneratorConfig {
            feature_dim: 6,
            min_frames: 30,
            max_frames: 50,
            ..Default::default()
        };
        let specs = random_speakers(4, &config, &SpeakerDistribution::default(), &mut NoiseRng::seeded(1)).unwrap();
        (config, specs)
    }

    #[test]
    fn counts_splits_and_alignment() {
        let (config, specs) = small();
        let c = gen_corpus(&specs, 20, &config, &mut NoiseRng::seeded(2)).unwrap();
        assert_eq!(c.utterances.len(), 80);
        for spk in 0..4 {
            let mine: Vec<_> = c.utterances.iter().filter(|u| u.speaker == spk).collect();
            assert_eq!(mine.len(), 20);
            assert_eq!(mine.iter().filter(|u| u.split == Split::Train).count(), 16);
        }
        for u in &c.utterances {
            assert!((30..=50).contains(&u.pitch.len()));
            assert_eq!(u.features.frames(), u.pitch.len());
            assert_eq!(u.labels.len(), u.pitch.len());
            for (p, l) in u.pitch.values().iter().zip(&u.labels) {
                assert_eq!(*p == 0.0, *l < config.unvoiced_phones);
            }
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let (config, specs) = small();
        let a = gen_corpus(&specs, 5, &config, &mut NoiseRng::seeded(3)).unwrap();
        let b = gen_corpus(&specs, 5, &config, &mut NoiseRng::seeded(3)).unwrap();
        assert_eq!(a, b);
        let c = gen_corpus(&specs, 5, &config, &mut NoiseRng::seeded(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn disjoint_base_pitches_separate_by_mean() {
        let (config, mut specs) = small();
        specs.truncate(2);
        specs[0].base_pitch_hz = 100.0;
        specs[1].base_pitch_hz = 220.0;
        let c = gen_corpus(&specs, 30, &config, &mut NoiseRng::seeded(5)).unwrap();
        for u in &c.utterances {
            let voiced: Vec<f64> = u.pitch.values().iter().copied().filter(|v| *v > 0.0).collect();
            let mean = voiced.iter().sum::<f64>() / voiced.len() as f64;
            assert_eq!(usize::from(mean > 160.0), u.speaker, "{}: {mean}", u.id);
        }
    }

    #[test]
    fn degenerate_specs_rejected() {
        let (config, specs) = small();
        let mut rng = NoiseRng::seeded(6);
        assert!(gen_corpus(&specs[..1], 5, &config, &mut rng).is_err());
        let mut bad = specs.clone();
        bad[0].base_pitch_hz = 500.0;
        assert!(gen_corpus(&bad, 5, &config, &mut rng).is_err());
        let mut bad = specs.clone();
        bad[1].feature_offset.pop();
        assert!(gen_corpus(&bad, 5, &config, &mut rng).is_err());
        let mut bad = specs;
        bad[2].phone_inventory = vec![0, 1];
        assert!(gen_corpus(&bad, 5, &config, &mut rng).is_err());
    }

    #[test]
    fn disk_round_trip() {
        let (config, specs) = small();
        let c = gen_corpus(&specs, 10, &config, &mut NoiseRng::seeded(7)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut extra = BTreeMap::new();
        extra.insert("seed".to_owned(), "7".to_owned());
        let manifest = write_corpus(dir.path(), &c, &extra).unwrap();
        assert_eq!(manifest.params["seed"], "7");
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(text.parse::<CorpusManifest>().unwrap(), manifest);
        let back = read_corpus(dir.path()).unwrap();
        assert_eq!(back, at_storage_precision(&c).unwrap());

        std::fs::remove_file(dir.path().join(&manifest.entries[3].label_file)).unwrap();
        assert!(read_corpus(dir.path()).is_err());
    }
}
