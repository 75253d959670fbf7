use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use dpanon::anonymizer::{anonymize_utterance, AssignmentMode, PipelineBudget, TargetSelector, VectorPool};
use dpanon::autoencoder::{self, anonymize_pitch, TrainingConfig, DEFAULT_CHANNELS};
use dpanon::bn::{train_bn, AcousticFrames, BnArchitecture, LabelledUtterance};
use dpanon::dp::{compose_advanced, floor_budget, pipeline_ledger, LaplaceNoise, NoiseRng};
use dpanon::eval::{
    asi_error, asr_utility, eer, linkage_scores, pooled_statistics, train_asi_attack, unlinkability, AttackConfig, LabeledFeatureCorpus,
    LabeledFeatures, Split, Trial,
};
use dpanon::io::corpus::{gen_corpus, random_speakers, write_corpus, GeneratorConfig, SpeakerDistribution, SyntheticCorpus};
use dpanon::io::text::read_words;
use dpanon::io::{
    logmel_features, read_bn_model, read_corpus, read_features, read_pitch, read_pitch_model, read_pool, read_scores,
    read_wav, write_bn_model, write_features, write_pitch, write_pitch_model, write_pool, write_scores, Config,
    MetricReport,
};
use dpanon::nn::Matrix;
use dpanon::pitch::{normalize, remove_zeros, PitchStats};
use dpanon::study::pitch_attack_features;

#[derive(Parser, Debug)]
#[command(
    name = "dpanon",
    version,
    about = "Differentially private speaker anonymization toolkit"
)]
struct Cli {
    /// Seed for every random draw of this invocation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Privacy budget (per utterance for pitch, per frame for BN features).
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Slack for advanced composition.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compose a per-invocation budget over K invocations.
    Account(AccountArgs),
    /// Write a synthetic speaker corpus.
    GenCorpus(GenCorpusArgs),
    /// Train a pitch autoencoder on a corpus's training split.
    TrainPitch(TrainPitchArgs),
    /// Anonymize one pitch file.
    AnonymizePitch(AnonymizePitchArgs),
    /// Train a BN acoustic model on a corpus's training split.
    TrainBn(TrainBnArgs),
    /// Extract (noisy) BN features from a feature file or a WAV file.
    ExtractBn(ExtractBnArgs),
    /// Pick a target speaker vector from a pool.
    SelectTarget(SelectTargetArgs),
    /// Run the full pipeline on one utterance.
    Anonymize(AnonymizeArgs),
    /// Train a speaker identification attack and report its error.
    AttackAsi(AttackArgs),
    /// Produce verification scores for a corpus.
    ScoreAsv(ScoreAsvArgs),
    /// Compute EER, unlinkability and ASR utility.
    Metrics(MetricsArgs),
}

#[derive(Args, Debug)]
struct AccountArgs {
    /// Number of invocations.
    #[arg(long)]
    k: Option<u64>,
    /// Add one pitch release at this budget to K BN-frame releases.
    #[arg(long)]
    epsilon_pitch: Option<f64>,
    /// Print unrounded totals.
    #[arg(long)]
    exact: bool,
}

#[derive(Args, Debug)]
struct GenCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    speakers: Option<usize>,
    #[arg(long)]
    utterances: Option<usize>,
    /// Also write the pooled feature statistics of every utterance as a DPXV
    /// target pool.
    #[arg(long)]
    pool: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainPitchArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args, Debug)]
struct AnonymizePitchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    target_mean: Option<f64>,
    #[arg(long)]
    target_std: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainBnArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    bn_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args, Debug)]
struct ExtractBnArgs {
    #[arg(long)]
    model: PathBuf,
    /// DPAF acoustic feature file.
    #[arg(long, conflicts_with = "wav")]
    input: Option<PathBuf>,
    /// Mono 16-bit WAV; log-mel features with as many bands as the model input.
    #[arg(long)]
    wav: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Utterance,
    Speaker,
}

impl From<Mode> for AssignmentMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Utterance => AssignmentMode::Utterance,
            Mode::Speaker => AssignmentMode::Speaker,
        }
    }
}

#[derive(Args, Debug)]
struct SelectTargetArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "utterance")]
    mode: Mode,
    #[arg(long)]
    speaker: Option<String>,
}

#[derive(Args, Debug)]
struct AnonymizeArgs {
    #[arg(long)]
    pitch_model: PathBuf,
    #[arg(long)]
    bn_model: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    /// Input pitch file.
    #[arg(long)]
    pitch: PathBuf,
    /// Input DPAF acoustic features, one row per pitch frame.
    #[arg(long)]
    features: PathBuf,
    /// Output directory for the bundle.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    target_mean: Option<f64>,
    #[arg(long)]
    target_std: Option<f64>,
    #[arg(long, value_enum, default_value = "utterance")]
    mode: Mode,
    #[arg(long)]
    speaker: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Stream {
    Pitch,
    Features,
}

#[derive(Args, Debug)]
struct ReleaseArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "features")]
    stream: Stream,
    /// Pass acoustic features through this BN model before attacking.
    #[arg(long)]
    bn_model: Option<PathBuf>,
    /// Anonymize pitch through this autoencoder before attacking.
    #[arg(long)]
    pitch_model: Option<PathBuf>,
    #[arg(long)]
    target_mean: Option<f64>,
    #[arg(long)]
    target_std: Option<f64>,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[command(flatten)]
    release: ReleaseArgs,
    #[arg(long)]
    hidden: Option<usize>,
    /// Write a metric report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreAsvArgs {
    #[command(flatten)]
    release: ReleaseArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, requires = "hypothesis")]
    reference: Option<PathBuf>,
    #[arg(long, requires = "reference")]
    hypothesis: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(dpanon::Error),
}

impl From<dpanon::Error> for Failure {
    fn from(e: dpanon::Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Flags layered over the optional config file.
struct Settings {
    config: Config,
}

impl Settings {
    fn value<T: FromStr>(&self, flag: Option<T>, key: &str) -> Outcome<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self
                .config
                .get(key)
                .map(|raw| {
                    raw.parse()
                        .map_err(|_| Failure::Usage(format!("config key {key}: cannot parse {raw:?}")))
                })
                .transpose(),
        }
    }

    fn required<T: FromStr>(&self, flag: Option<T>, key: &str) -> Outcome<T> {
        self.value(flag, key)?
            .ok_or_else(|| Failure::Usage(format!("--{} is required (flag or config key {key})", key.replace('_', "-"))))
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Outcome<T> {
        Ok(self.value(flag, key)?.unwrap_or(default))
    }

    fn seed(&self) -> Outcome<u64> {
        self.or(None, "seed", 0)
    }

    fn delta(&self) -> Outcome<f64> {
        self.or(None, "delta", 1e-5)
    }

    fn params(&self) -> BTreeMap<String, String> {
        self.config
            .keys()
            .map(|k| (k.to_owned(), self.config.get(k).unwrap_or_default().to_owned()))
            .collect()
    }
}

fn main() -> ExitCode {
    let command = Cli::command().mut_subcommands(|c| c.allow_negative_numbers(true));
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `dpanon --help` for usage.");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Outcome<()> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path).map_err(|e| match e {
            dpanon::Error::Io(io) => dpanon::Error::Io(std::io::Error::new(
                io.kind(),
                format!("config file {}: {io}", path.display()),
            )),
            other => other,
        })?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.set("seed", seed.to_string());
    }
    if let Some(eps) = cli.epsilon {
        config.set("epsilon", eps.to_string());
    }
    if let Some(delta) = cli.delta {
        config.set("delta", delta.to_string());
    }
    let s = Settings { config };
    match cli.command {
        Command::Account(a) => account(&s, a),
        Command::GenCorpus(a) => gen(&s, a),
        Command::TrainPitch(a) => train_pitch(&s, a),
        Command::AnonymizePitch(a) => anonymize_pitch_cmd(&s, a),
        Command::TrainBn(a) => train_bn_cmd(&s, a),
        Command::ExtractBn(a) => extract_bn(&s, a),
        Command::SelectTarget(a) => select_target(&s, a),
        Command::Anonymize(a) => anonymize(&s, a),
        Command::AttackAsi(a) => attack_asi(&s, a),
        Command::ScoreAsv(a) => score_asv(&s, a),
        Command::Metrics(a) => metrics(&s, a),
    }
}

fn account(s: &Settings, a: AccountArgs) -> Outcome<()> {
    let eps: f64 = s.required(None, "epsilon")?;
    let k: u64 = s.required(a.k, "k")?;
    let delta = s.delta()?;
    let (simple, advanced) = match s.value(a.epsilon_pitch, "epsilon_pitch")? {
        Some(eps_pitch) => {
            let ledger = pipeline_ledger(eps_pitch, eps, k, delta)?;
            (ledger.simple_total()?, ledger.advanced_total()?.epsilon())
        }
        None => {
            LaplaceNoise::calibrated(1.0, eps)?;
            (eps * k as f64, compose_advanced(eps, k, delta)?)
        }
    };
    if a.exact {
        println!("simple={simple} advanced={advanced}");
    } else {
        println!("simple={} advanced={}", floor_budget(simple), floor_budget(advanced));
    }
    Ok(())
}

fn gen(s: &Settings, a: GenCorpusArgs) -> Outcome<()> {
    let seed = s.seed()?;
    let generator = GeneratorConfig::from_params(&s.params())?;
    let d = SpeakerDistribution::default();
    let dist = SpeakerDistribution {
        min_base_pitch: s.or(None, "min_base_pitch", d.min_base_pitch)?,
        max_base_pitch: s.or(None, "max_base_pitch", d.max_base_pitch)?,
        min_relative_jitter: s.or(None, "min_relative_jitter", d.min_relative_jitter)?,
        max_relative_jitter: s.or(None, "max_relative_jitter", d.max_relative_jitter)?,
        offset_scale: s.or(None, "offset_scale", d.offset_scale)?,
    };
    let speakers = s.or(a.speakers, "speakers", 20)?;
    let utterances = s.or(a.utterances, "utterances", 50)?;
    let specs = random_speakers(speakers, &generator, &dist, &mut NoiseRng::stream(seed, 10))?;
    let corpus = gen_corpus(&specs, utterances, &generator, &mut NoiseRng::stream(seed, 12))?;
    let extra: BTreeMap<String, String> = [
        ("seed", seed.to_string()),
        ("speakers", speakers.to_string()),
        ("utterances", utterances.to_string()),
        ("min_base_pitch", dist.min_base_pitch.to_string()),
        ("max_base_pitch", dist.max_base_pitch.to_string()),
        ("min_relative_jitter", dist.min_relative_jitter.to_string()),
        ("max_relative_jitter", dist.max_relative_jitter.to_string()),
        ("offset_scale", dist.offset_scale.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect();
    let manifest = write_corpus(&a.out, &corpus, &extra)?;
    if let Some(path) = &a.pool {
        let rows: Vec<Vec<f64>> = corpus
            .utterances
            .iter()
            .map(|u| pooled_statistics(u.features.matrix()))
            .collect::<dpanon::Result<_>>()?;
        let dim = rows[0].len();
        write_pool(path, &Matrix::from_vec(rows.len(), dim, rows.concat())?)?;
    }
    println!("utterances={} speakers={speakers}", manifest.entries.len());
    Ok(())
}

fn training(s: &Settings, epochs: Option<usize>, lr: Option<f64>, default_epochs: usize) -> Outcome<TrainingConfig> {
    let d = TrainingConfig::default();
    Ok(TrainingConfig {
        learning_rate: s.or(lr, "learning_rate", 3e-3)?,
        weight_decay: s.or(None, "weight_decay", d.weight_decay)?,
        dropout: s.or(None, "dropout", d.dropout)?,
        epochs: s.or(epochs, "epochs", default_epochs)?,
        seed: s.seed()?,
        ..d
    })
}

fn train_pitch(s: &Settings, a: TrainPitchArgs) -> Outcome<()> {
    let eps: f64 = s.required(None, "epsilon")?;
    let channels = s.or(a.channels, "channels", DEFAULT_CHANNELS)?;
    let cfg = training(s, a.epochs, a.learning_rate, 10)?;
    let corpus = read_corpus(&a.corpus)?;
    let mut set = Vec::new();
    for u in corpus.split(Split::Train) {
        let voiced = remove_zeros(&u.pitch)?.voiced;
        if voiced.len() >= autoencoder::DEFAULT_KERNEL_WIDTH {
            set.push(normalize(&voiced)?.0);
        }
    }
    let (model, report) = autoencoder::train(&set, &cfg, channels, eps)?;
    write_pitch_model(&a.out, &model)?;
    println!("sequences={} final_loss={}", set.len(), report.epoch_losses.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn check_model_epsilon(s: &Settings, model_eps: f64) -> Outcome<()> {
    if let Some(eps) = s.value::<f64>(None, "epsilon")? {
        if eps != model_eps {
            return Err(Failure::Data(dpanon::Error::InvalidArgument(format!(
                "model is calibrated for epsilon {model_eps}, not {eps}"
            ))));
        }
    }
    Ok(())
}

fn target_stats(s: &Settings, mean: Option<f64>, std: Option<f64>) -> Outcome<PitchStats> {
    Ok(PitchStats::new(
        s.required(mean, "target_mean")?,
        s.required(std, "target_std")?,
    )?)
}

fn anonymize_pitch_cmd(s: &Settings, a: AnonymizePitchArgs) -> Outcome<()> {
    let model = read_pitch_model(&a.model)?;
    check_model_epsilon(s, model.epsilon())?;
    let target = target_stats(s, a.target_mean, a.target_std)?;
    let pitch = read_pitch(&a.input)?;
    let out = anonymize_pitch(&model, &pitch, target, &mut NoiseRng::stream(s.seed()?, 0))?;
    write_pitch(&a.out, &out)?;
    println!("frames={} epsilon={}", out.len(), model.epsilon());
    Ok(())
}

fn train_bn_cmd(s: &Settings, a: TrainBnArgs) -> Outcome<()> {
    let eps: f64 = s.required(None, "epsilon")?;
    let corpus = read_corpus(&a.corpus)?;
    let d = BnArchitecture::default();
    let hidden = s.or(a.hidden, "hidden", d.hidden)?;
    let arch = BnArchitecture {
        input_dim: corpus.config.feature_dim,
        hidden,
        bn_dim: s.or(a.bn_dim, "bn_dim", d.bn_dim)?,
        classifier_hidden: s.or(None, "classifier_hidden", hidden)?,
        classes: corpus.config.phone_classes,
        kernel_width: s.or(None, "kernel_width", d.kernel_width)?,
    };
    let cfg = training(s, a.epochs, a.learning_rate, 5)?;
    let set: Vec<LabelledUtterance> = corpus.split(Split::Train).map(|u| u.labelled()).collect();
    let (model, report) = train_bn(&set, &cfg, arch, eps)?;
    write_bn_model(&a.out, &model)?;
    println!("utterances={} final_loss={}", set.len(), report.epoch_losses.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn extract_bn(s: &Settings, a: ExtractBnArgs) -> Outcome<()> {
    let model = read_bn_model(&a.model)?;
    check_model_epsilon(s, model.epsilon())?;
    let frames = match (&a.input, &a.wav) {
        (Some(path), None) => AcousticFrames::new(read_features(path)?)?,
        (None, Some(path)) => logmel_features(&read_wav(path)?, model.architecture().input_dim)?,
        _ => return Err(Failure::Usage("exactly one of --input or --wav is required".into())),
    };
    let released = model.anonymize(&frames, &mut NoiseRng::stream(s.seed()?, 0))?;
    write_features(&a.out, &released)?;
    println!("frames={} dims={}", released.rows(), released.cols());
    Ok(())
}

fn selector(path: &Path, mode: Mode, speaker: Option<&str>) -> Outcome<TargetSelector> {
    if matches!(mode, Mode::Speaker) && speaker.is_none() {
        return Err(Failure::Usage("--mode speaker needs --speaker <id>".into()));
    }
    Ok(TargetSelector::new(VectorPool::new(read_pool(path)?)?, mode.into())?)
}

fn select_target(s: &Settings, a: SelectTargetArgs) -> Outcome<()> {
    let sel = selector(&a.pool, a.mode, a.speaker.as_deref())?;
    let choice = sel.select(a.speaker.as_deref(), &mut NoiseRng::stream(s.seed()?, 0))?;
    let dim = choice.vector.len();
    write_pool(&a.out, &Matrix::from_vec(1, dim, choice.vector)?)?;
    println!(
        "clusters={} cluster={} members={}",
        sel.clusters().cluster_count(),
        choice.cluster,
        choice.members.len()
    );
    Ok(())
}

fn anonymize(s: &Settings, a: AnonymizeArgs) -> Outcome<()> {
    let pitch_model = read_pitch_model(&a.pitch_model)?;
    let bn_model = read_bn_model(&a.bn_model)?;
    let sel = selector(&a.pool, a.mode, a.speaker.as_deref())?;
    let target = target_stats(s, a.target_mean, a.target_std)?;
    let pitch = read_pitch(&a.pitch)?;
    let frames = AcousticFrames::new(read_features(&a.features)?)?;
    let budget = PipelineBudget {
        epsilon_pitch: pitch_model.epsilon(),
        epsilon_bn: bn_model.epsilon(),
        delta: s.delta()?,
    };
    let bundle = anonymize_utterance(
        &pitch_model,
        &bn_model,
        &pitch,
        &frames,
        &sel,
        a.speaker.as_deref(),
        budget,
        target,
        &mut NoiseRng::stream(s.seed()?, 0),
    )?;
    std::fs::create_dir_all(&a.out).map_err(dpanon::Error::from)?;
    write_pitch(&a.out.join("pitch.f0"), &bundle.pitch)?;
    write_features(&a.out.join("bn.dpaf"), bundle.bn.matrix())?;
    let dim = bundle.target.len();
    write_pool(&a.out.join("target.dpxv"), &Matrix::from_vec(1, dim, bundle.target.clone())?)?;
    std::fs::write(a.out.join("ledger.txt"), bundle.ledger.to_text()).map_err(dpanon::Error::from)?;
    println!(
        "frames={} simple={} advanced={}",
        bundle.frames(),
        bundle.simple_budget()?,
        bundle.advanced_budget()?.epsilon()
    );
    Ok(())
}

/// Features of every utterance as the attacker would see them.
fn released_features(s: &Settings, r: &ReleaseArgs, corpus: &SyntheticCorpus) -> Outcome<Vec<Matrix>> {
    let mut rng = NoiseRng::stream(s.seed()?, 0);
    match r.stream {
        Stream::Features => {
            let model = r.bn_model.as_deref().map(read_bn_model).transpose()?;
            corpus
                .utterances
                .iter()
                .map(|u| match &model {
                    Some(m) => Ok(m.anonymize(&u.features, &mut rng)?),
                    None => Ok(u.features.matrix().clone()),
                })
                .collect()
        }
        Stream::Pitch => {
            let model = r.pitch_model.as_deref().map(read_pitch_model).transpose()?;
            let target = match &model {
                Some(_) => Some(target_stats(s, r.target_mean, r.target_std)?),
                None => None,
            };
            corpus
                .utterances
                .iter()
                .map(|u| {
                    let pitch = match (&model, target) {
                        (Some(m), Some(t)) => anonymize_pitch(m, &u.pitch, t, &mut rng)?,
                        _ => u.pitch.clone(),
                    };
                    Ok(pitch_attack_features(&pitch)?)
                })
                .collect()
        }
    }
}

fn attack_asi(s: &Settings, a: AttackArgs) -> Outcome<()> {
    let corpus = read_corpus(&a.release.corpus)?;
    let released = released_features(s, &a.release, &corpus)?;
    let items = corpus
        .utterances
        .iter()
        .zip(released)
        .map(|(u, features)| LabeledFeatures {
            features,
            speaker: u.speaker,
            split: u.split,
        })
        .collect();
    let labeled = LabeledFeatureCorpus::new(items)?;
    let d = AttackConfig::default();
    let cfg = AttackConfig {
        hidden: s.or(a.hidden, "attack_hidden", d.hidden)?,
        max_epochs: s.or(None, "attack_epochs", d.max_epochs)?,
        seed: s.seed()?,
        ..d
    };
    let model = train_asi_attack(&labeled, &cfg)?;
    let report = MetricReport {
        p_asi: Some(asi_error(&model, &labeled.split(Split::Test))?),
        ..Default::default()
    };
    print!("{report}");
    if let Some(path) = a.report {
        std::fs::write(path, report.to_string()).map_err(dpanon::Error::from)?;
    }
    Ok(())
}

fn score_asv(s: &Settings, a: ScoreAsvArgs) -> Outcome<()> {
    let corpus = read_corpus(&a.release.corpus)?;
    let released = released_features(s, &a.release, &corpus)?;
    let mut enroll: Vec<(usize, Vec<Matrix>)> = (0..corpus.speakers).map(|sp| (sp, Vec::new())).collect();
    let mut tests = Vec::new();
    for (u, features) in corpus.utterances.iter().zip(released) {
        match u.split {
            Split::Train => enroll[u.speaker].1.push(features),
            Split::Test => tests.push((u.speaker, features)),
            Split::Validation => {}
        }
    }
    let trials: Vec<Trial> = tests
        .into_iter()
        .flat_map(|(speaker, features)| {
            (0..corpus.speakers).map(move |claim| Trial {
                features: features.clone(),
                speaker,
                claim,
            })
        })
        .collect();
    let scores = linkage_scores(&enroll, &trials)?;
    write_scores(&a.out, &scores)?;
    println!("mated={} nonmated={}", scores.mated.len(), scores.nonmated.len());
    Ok(())
}

fn metrics(s: &Settings, a: MetricsArgs) -> Outcome<()> {
    if a.scores.is_none() && a.reference.is_none() {
        return Err(Failure::Usage("give --scores and/or --reference with --hypothesis".into()));
    }
    let mut report = MetricReport::default();
    if let Some(path) = &a.scores {
        let scores = read_scores(path)?;
        report.p_asv_eer = Some(100.0 * eer(&scores)?);
        report.p_asv_unlinkability = Some(unlinkability(&scores, s.or(a.bins, "bins", 50)?)?);
    }
    if let (Some(r), Some(h)) = (&a.reference, &a.hypothesis) {
        report.u_asr = Some(asr_utility(&read_words(r)?, &read_words(h)?)?);
    }
    print!("{report}");
    if let Some(path) = a.out {
        std::fs::write(path, report.to_string()).map_err(dpanon::Error::from)?;
    }
    Ok(())
}

