//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to the
//! uncaptured stderr stream before asserting.

use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use dpanon::anonymizer::{anonymize_utterance, AssignmentMode, PipelineBudget, TargetSelector, VectorPool};
use dpanon::autoencoder::{self, loss_at, loss_gradient, PitchAutoencoder, TrainingConfig};
use dpanon::bn::{bn_loss_at, bn_loss_gradient, AcousticFrames, AcousticModel, BnArchitecture};
use dpanon::dp::{compose_advanced, floor_budget, LaplaceNoise, NoiseRng};
use dpanon::eval::{eer, unlinkability, wer, ScoreSet};
use dpanon::io::binary::{
    decode_bn_model, decode_features, decode_pitch_model, decode_pool, encode_bn_model, encode_features,
    encode_pitch_model, encode_pool, to_f32_precision,
};
use dpanon::io::corpus::{at_storage_precision, gen_corpus, random_speakers, read_corpus, write_corpus};
use dpanon::io::corpus::{GeneratorConfig, SpeakerDistribution};
use dpanon::io::text::{decode_pitch, encode_pitch};
use dpanon::nn::Matrix;
use dpanon::pitch::{PitchSequence, PitchStats};
use dpanon::study::{run_trial, Condition, StudyConfig, TrialOutcome};

fn verdict(criterion: u32, title: &str, ok: bool, elapsed: Duration, detail: &str) {
    let line = format!(
        "criterion {criterion} ({title}): {} in {:.1}s; {detail}\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn criterion_1_advanced_composition_table() {
    let start = Instant::now();
    let expected = [(100u64, 50u64, 36u64), (500, 250, 114), (1000, 500, 198), (10000, 5000, 1464)];
    let mut failures = Vec::new();
    for (k, simple, advanced) in expected {
        let lib = (floor_budget(0.5 * k as f64), floor_budget(compose_advanced(0.5, k, 1e-5).unwrap()));
        let out = Command::new(env!("CARGO_BIN_EXE_dpanon"))
            .args(["account", "--epsilon", "0.5", "--k", &k.to_string(), "--delta", "1e-5"])
            .output()
            .unwrap();
        let printed = String::from_utf8(out.stdout).unwrap();
        let want = format!("simple={simple} advanced={advanced}");
        if lib != (simple, advanced) || printed.trim() != want || !out.status.success() {
            failures.push(format!("K={k}: lib {lib:?}, cli {:?}", printed.trim()));
        }
    }
    let ok = failures.is_empty();
    verdict(1, "composition table", ok, start.elapsed(), &format!("mismatches: {failures:?}"));
    assert!(ok);
}

#[test]
fn criterion_2_mechanism_calibration() {
    let start = Instant::now();
    let mut rng = NoiseRng::seeded(2);
    let mut notes = Vec::new();
    let mut ok = true;

    for eps in [0.5, 1.0, 10.0] {
        ok &= LaplaceNoise::calibrated(2.0, eps).unwrap().scale() == 2.0 / eps;
    }

    let arch = BnArchitecture {
        input_dim: 4,
        hidden: 4,
        bn_dim: 16,
        classifier_hidden: 4,
        classes: 3,
        kernel_width: 5,
    };
    let bn = AcousticModel::new(arch, 0.8, &mut rng).unwrap();
    let noise = bn.draw_noise(100_000 / 16, &mut rng).unwrap();
    let b = 2.0 / 0.8;
    let rel = (std_dev(noise.as_slice()) - b * 2f64.sqrt()).abs() / (b * 2f64.sqrt());
    notes.push(format!("bn std rel err {rel:.4}"));
    ok &= rel < 0.03;

    let ae = PitchAutoencoder::new(2, 5, 50.0, &mut rng).unwrap();
    let k = 50_000;
    let b = 2.0 * k as f64 / 50.0;
    ok &= ae.noise_scale(k).unwrap() == b;
    let noise = ae.draw_noise(k, &mut rng).unwrap();
    assert_eq!(noise.as_slice().len(), 100_000);
    let rel = (std_dev(noise.as_slice()) - b * 2f64.sqrt()).abs() / (b * 2f64.sqrt());
    notes.push(format!("pitch std rel err {rel:.4}"));
    ok &= rel < 0.03;

    verdict(2, "noise calibration", ok, start.elapsed(), &notes.join(", "));
    assert!(ok);
}

fn std_dev(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

#[test]
fn criterion_3_sensitivity_bounds() {
    let start = Instant::now();
    let mut rng = NoiseRng::seeded(3);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let m = rng.gen_range(1..300);
        let scale = 10f64.powf(rng.gen_range(-6.0..6.0));
        let a: Vec<f64> = (0..m).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let (na, nb) = (l1(&a), l1(&b));
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x / na - y / nb).abs()).sum();
        worst = worst.max(d);
    }
    let mut ok = worst <= 2.0 + 1e-12;

    let mut latent_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..50 {
        let c = rng.gen_range(1..6);
        let k = rng.gen_range(5..80);
        let model = PitchAutoencoder::new(c, 5, 1.0, &mut rng).unwrap();
        let spread = 10f64.powf(rng.gen_range(-1.0..3.0));
        let z1: Vec<f64> = (0..k).map(|_| spread * rng.gen_range(-1.0..1.0)).collect();
        let z2: Vec<f64> = (0..k).map(|_| spread * rng.gen_range(-1.0..1.0)).collect();
        let h1 = model.encode(&z1).unwrap();
        let h2 = model.encode(&z2).unwrap();
        for v in h1.matrix().as_slice().iter().chain(h2.matrix().as_slice()) {
            latent_range = (latent_range.0.min(*v), latent_range.1.max(*v));
        }
        let d: f64 = h1
            .matrix()
            .as_slice()
            .iter()
            .zip(h2.matrix().as_slice())
            .map(|(x, y)| (x - y).abs())
            .sum();
        worst_ratio = worst_ratio.max(d / (c * k) as f64);
    }
    ok &= latent_range.0 >= 0.0 && latent_range.1 <= 1.0 && worst_ratio <= 1.0;
    verdict(
        3,
        "sensitivity bounds",
        ok,
        start.elapsed(),
        &format!("max l1 distance {worst:.6}, latent range {latent_range:?}, max latent distance / CK {worst_ratio:.3}"),
    );
    assert!(ok);
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale.
const FD_FLOOR: f64 = 1e-6;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

#[test]
fn criterion_4_gradient_correctness() {
    let start = Instant::now();
    let mut rng = NoiseRng::seeded(4);
    let mut worst_ae: f64 = 0.0;
    let mut worst_bn: f64 = 0.0;
    let mut checked = (0usize, 0usize);

    for instance in 0..10 {
        let c = 1 + instance % 4;
        let eps = [f64::INFINITY, 5.0, 50.0][instance % 3];
        let k = rng.gen_range(12..30);
        let mut model = PitchAutoencoder::new(c, 5, eps, &mut rng).unwrap();
        let raw: Vec<f64> = (0..k).map(|t| (t as f64 * 0.3).sin() + 0.5 * rng.gen_range(-1.0..1.0)).collect();
        let z = dpanon::pitch::normalize(&raw).unwrap().0;
        // Small fixed noise keeps the latent inside the clipping box.
        let noise = Matrix::from_fn(c, k, |_, _| if eps.is_finite() { 0.01 * rng.gen_range(-1.0..1.0) } else { 0.0 });
        let (_, grad) = loss_gradient(&model, &z, &noise).unwrap();
        let params = model.params();
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] = params[i] + FD_STEP;
            model.set_params(&p).unwrap();
            let up = loss_at(&model, &z, &noise).unwrap();
            p[i] = params[i] - FD_STEP;
            model.set_params(&p).unwrap();
            let down = loss_at(&model, &z, &noise).unwrap();
            worst_ae = worst_ae.max(relative_error(grad[i], (up - down) / (2.0 * FD_STEP)));
        }
        model.set_params(&params).unwrap();
        checked.0 += params.len();
    }

    for instance in 0..10 {
        let arch = BnArchitecture {
            input_dim: 3,
            hidden: 4,
            bn_dim: 6,
            classifier_hidden: 5,
            classes: 4,
            kernel_width: 5,
        };
        let eps = [f64::INFINITY, 2.0, 20.0][instance % 3];
        let k = rng.gen_range(8..20);
        let mut model = AcousticModel::new(arch, eps, &mut rng).unwrap();
        let frames = AcousticFrames::new(random_matrix(k, 3, &mut rng)).unwrap();
        let labels: Vec<usize> = (0..k).map(|_| rng.gen_range(0..4)).collect();
        let noise = model.draw_noise(k, &mut rng).unwrap();
        let (_, grad) = bn_loss_gradient(&model, &frames, &labels, &noise).unwrap();
        let params = model.params();
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] = params[i] + FD_STEP;
            model.set_params(&p).unwrap();
            let up = bn_loss_at(&model, &frames, &labels, &noise).unwrap();
            p[i] = params[i] - FD_STEP;
            model.set_params(&p).unwrap();
            let down = bn_loss_at(&model, &frames, &labels, &noise).unwrap();
            worst_bn = worst_bn.max(relative_error(grad[i], (up - down) / (2.0 * FD_STEP)));
        }
        model.set_params(&params).unwrap();
        checked.1 += params.len();
    }

    let ok = worst_ae < FD_TOL && worst_bn < FD_TOL;
    verdict(
        4,
        "gradient correctness",
        ok,
        start.elapsed(),
        &format!(
            "worst relative error {worst_ae:.2e} over {} autoencoder and {worst_bn:.2e} over {} acoustic-model parameters",
            checked.0, checked.1
        ),
    );
    assert!(ok);
}

/// Accept when score >= threshold; thresholds are every observed score plus +inf.
fn eer_oracle(s: &ScoreSet) -> f64 {
    let mut thresholds: Vec<f64> = s.mated.iter().chain(&s.nonmated).copied().collect();
    thresholds.push(f64::INFINITY);
    let mut best = (f64::INFINITY, f64::INFINITY);
    for &t in &thresholds {
        let far = s.nonmated.iter().filter(|&&x| x >= t).count() as f64 / s.nonmated.len() as f64;
        let frr = s.mated.iter().filter(|&&x| x < t).count() as f64 / s.mated.len() as f64;
        let c = ((far - frr).abs(), (far + frr) / 2.0);
        if c.0 < best.0 || (c.0 == best.0 && c.1 < best.1) {
            best = c;
        }
    }
    best.1
}

fn edit_oracle(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = edit_oracle(ra, rb) + usize::from(x != y);
            sub.min(edit_oracle(ra, b) + 1).min(edit_oracle(a, rb) + 1)
        }
    }
}

#[test]
fn criterion_5_metric_oracles() {
    let start = Instant::now();
    let mut rng = NoiseRng::seeded(5);
    let mut eer_mismatch = 0;
    for _ in 0..100 {
        let nm = rng.gen_range(1..40);
        let nn = rng.gen_range(1..40);
        let shift = rng.gen_range(0.0..2.0);
        // Coarse values force ties.
        let mated: Vec<f64> = (0..nm).map(|_| (rng.gen_range(0.0..5.0f64) + shift).round()).collect();
        let nonmated: Vec<f64> = (0..nn).map(|_| rng.gen_range(0.0..5.0f64).round()).collect();
        let s = ScoreSet::new(mated, nonmated);
        if (eer(&s).unwrap() - eer_oracle(&s)).abs() > 1e-12 {
            eer_mismatch += 1;
        }
    }

    let same: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let identical = unlinkability(&ScoreSet::new(same.clone(), same), 50).unwrap();
    let disjoint = unlinkability(
        &ScoreSet::new(
            (0..300).map(|_| rng.gen_range(5.0..6.0)).collect(),
            (0..300).map(|_| rng.gen_range(-6.0..-5.0)).collect(),
        ),
        50,
    )
    .unwrap();

    let mut wer_mismatch = 0;
    for _ in 0..100 {
        let r: Vec<u8> = (0..rng.gen_range(1..7)).map(|_| rng.gen_range(0..4)).collect();
        let h: Vec<u8> = (0..rng.gen_range(0..7)).map(|_| rng.gen_range(0..4)).collect();
        let want = 100.0 * edit_oracle(&r, &h) as f64 / r.len() as f64;
        if (wer(&r, &h).unwrap() - want).abs() > 1e-9 {
            wer_mismatch += 1;
        }
    }

    let ok = eer_mismatch == 0 && (identical - 1.0).abs() <= 0.02 && disjoint == 0.0 && wer_mismatch == 0;
    verdict(
        5,
        "metric oracles",
        ok,
        start.elapsed(),
        &format!(
            "EER mismatches {eer_mismatch}/100, unlinkability identical {identical:.4} disjoint {disjoint}, WER mismatches {wer_mismatch}/100"
        ),
    );
    assert!(ok);
}

const STUDY_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Study {
    trials: Vec<TrialOutcome>,
    elapsed: Duration,
}

fn study() -> &'static Study {
    static CELL: OnceLock<Study> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let config = StudyConfig::default();
        let trials = STUDY_SEEDS.iter().map(|&s| run_trial(&config, s).unwrap()).collect();
        Study {
            trials,
            elapsed: start.elapsed(),
        }
    })
}

fn asi(list: &[dpanon::study::ConditionResult], c: Condition) -> f64 {
    list.iter().find(|r| r.condition == c).and_then(|r| r.asi_error).unwrap()
}

fn utility(list: &[dpanon::study::ConditionResult], c: Condition) -> f64 {
    list.iter().find(|r| r.condition == c).and_then(|r| r.utility).unwrap()
}

#[test]
fn criterion_6_privacy_trend() {
    let s = study();
    let mut ok = true;
    let mut rows = Vec::new();
    for t in &s.trials {
        for (name, list) in [("pitch", &t.pitch), ("bn", &t.bn)] {
            let (orig, p100, p1) = (
                asi(list, Condition::Original),
                asi(list, Condition::Private(100.0)),
                asi(list, Condition::Private(1.0)),
            );
            let good = p1 - p100 >= 5.0 && p100 - orig >= 5.0;
            ok &= good;
            rows.push(format!(
                "seed {} {name} {orig:.1}/{p100:.1}/{p1:.1}{}",
                t.seed,
                if good { "" } else { " (violated)" }
            ));
        }
    }
    verdict(
        6,
        "privacy trend, P_ASI non-DP/eps100/eps1",
        ok,
        s.elapsed,
        &rows.join("; "),
    );
    assert!(ok);
}

#[test]
fn criterion_7_utility_trend() {
    let s = study();
    let mut ok = true;
    let mut rows = Vec::new();
    for t in &s.trials {
        let p: Vec<f64> = [Condition::NoiseFree, Condition::Private(100.0), Condition::Private(10.0), Condition::Private(1.0)]
            .into_iter()
            .map(|c| utility(&t.pitch, c))
            .collect();
        let b: Vec<f64> = [Condition::Original, Condition::Private(100.0), Condition::Private(10.0), Condition::Private(1.0)]
            .into_iter()
            .map(|c| utility(&t.bn, c))
            .collect();
        // Each stream is compared where its private model is above chance.
        let pitch_naive = utility(&t.pitch, Condition::Naive(100.0));
        let bn_naive = utility(&t.bn, Condition::Naive(10.0));
        let good = p.windows(2).all(|w| w[0] >= w[1])
            && b.windows(2).all(|w| w[0] >= w[1])
            && p[1] - pitch_naive >= 0.1
            && 100.0 * (b[2] - bn_naive) >= 10.0;
        ok &= good;
        rows.push(format!(
            "seed {} pitch corr {:.3}/{:.3}/{:.3}/{:.3} naive@100 {pitch_naive:.3}, bn acc {:.1}/{:.1}/{:.1}/{:.1} naive@10 {:.1}{}",
            t.seed,
            p[0],
            p[1],
            p[2],
            p[3],
            100.0 * b[0],
            100.0 * b[1],
            100.0 * b[2],
            100.0 * b[3],
            100.0 * bn_naive,
            if good { "" } else { " (violated)" }
        ));
    }
    verdict(7, "utility trend, inf/eps100/eps10/eps1", ok, s.elapsed, &rows.join("; "));
    assert!(ok);
}

fn hand_advanced(eps: f64, k: f64, delta: f64) -> f64 {
    let e = std::f64::consts::E;
    let drift = k * eps * (eps.exp() - 1.0) / (eps.exp() + 1.0);
    let a = k * eps;
    let b = drift + eps * (2.0 * k * (e + (k * eps * eps).sqrt() / delta).ln()).sqrt();
    let c = drift + eps * (2.0 * k * (1.0 / delta).ln()).sqrt();
    a.min(b).min(c)
}

fn small_pipeline(rng: &mut NoiseRng) -> (PitchAutoencoder, AcousticModel, TargetSelector) {
    let pitch_model = PitchAutoencoder::new(2, 5, 1.0, rng).unwrap();
    let arch = BnArchitecture {
        input_dim: 5,
        hidden: 4,
        bn_dim: 6,
        classifier_hidden: 4,
        classes: 3,
        kernel_width: 5,
    };
    let bn_model = AcousticModel::new(arch, 0.5, rng).unwrap();
    let pool = VectorPool::new(random_matrix(30, 8, rng)).unwrap();
    let selector = TargetSelector::new(pool, AssignmentMode::Utterance).unwrap();
    (pitch_model, bn_model, selector)
}

fn utterance(k: usize, rng: &mut NoiseRng) -> (PitchSequence, AcousticFrames) {
    let pitch: Vec<f64> = (0..k)
        .map(|t| if t % 11 == 3 { 0.0 } else { 120.0 + 20.0 * (t as f64 * 0.2).sin() + rng.gen_range(-3.0..3.0) })
        .collect();
    (
        PitchSequence::new(pitch).unwrap(),
        AcousticFrames::new(random_matrix(k, 5, rng)).unwrap(),
    )
}

#[test]
fn criterion_8_pipeline_ledger() {
    let start = Instant::now();
    let mut rng = NoiseRng::seeded(8);
    let (pitch_model, bn_model, selector) = small_pipeline(&mut rng);
    let budget = PipelineBudget {
        epsilon_pitch: 1.0,
        epsilon_bn: 0.5,
        delta: 1e-5,
    };
    let mut ok = true;
    let mut rows = Vec::new();
    for k in [40usize, 250, 1200] {
        let (pitch, frames) = utterance(k, &mut rng);
        let target = PitchStats::new(180.0, 25.0).unwrap();
        let bundle =
            anonymize_utterance(&pitch_model, &bn_model, &pitch, &frames, &selector, None, budget, target, &mut rng)
                .unwrap();
        let simple = bundle.simple_budget().unwrap();
        let advanced = bundle.advanced_budget().unwrap();
        let want_simple = 1.0 + k as f64 * 0.5;
        let want_advanced = 1.0 + hand_advanced(0.5, k as f64, 1e-5);
        let good = simple == want_simple
            && (advanced.epsilon() - want_advanced).abs() <= 1e-12 * want_advanced
            && floor_budget(advanced.epsilon()) == floor_budget(want_advanced)
            && bundle.frames() == k;
        ok &= good;
        rows.push(format!("K={k} simple {simple} advanced {:.6}", advanced.epsilon()));
    }
    verdict(8, "pipeline ledger", ok, start.elapsed(), &rows.join(", "));
    assert!(ok);
}

#[test]
fn criterion_9_determinism_and_round_trips() {
    let start = Instant::now();
    let mut failures: Vec<&str> = Vec::new();

    let run = |seed: u64| {
        let mut rng = NoiseRng::seeded(seed);
        let (pitch_model, bn_model, selector) = small_pipeline(&mut rng);
        let (pitch, frames) = utterance(90, &mut rng);
        let budget = PipelineBudget {
            epsilon_pitch: 1.0,
            epsilon_bn: 0.5,
            delta: 1e-5,
        };
        let target = PitchStats::new(150.0, 20.0).unwrap();
        anonymize_utterance(&pitch_model, &bn_model, &pitch, &frames, &selector, None, budget, target, &mut rng)
            .unwrap()
    };
    if run(9) != run(9) {
        failures.push("pipeline");
    }

    let g = GeneratorConfig::default();
    let corpus = |seed| {
        let specs = random_speakers(3, &g, &SpeakerDistribution::default(), &mut NoiseRng::stream(seed, 0)).unwrap();
        gen_corpus(&specs, 10, &g, &mut NoiseRng::stream(seed, 1)).unwrap()
    };
    let c = corpus(4);
    if c != corpus(4) {
        failures.push("corpus generation");
    }

    let train = || {
        let seqs: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                let raw: Vec<f64> = (0..40).map(|t| ((t + i) as f64 * 0.3).sin() + 0.1 * (t % 3) as f64).collect();
                dpanon::pitch::normalize(&raw).unwrap().0
            })
            .collect();
        let cfg = TrainingConfig {
            epochs: 2,
            seed: 5,
            ..Default::default()
        };
        autoencoder::train(&seqs, &cfg, 2, 10.0).unwrap().0
    };
    let trained = train();
    if trained != train() {
        failures.push("training");
    }

    let mut rng = NoiseRng::seeded(90);
    let m = to_f32_precision(&random_matrix(37, 11, &mut rng));
    let bytes = encode_features(&m).unwrap();
    if decode_features(&bytes).unwrap() != m || encode_features(&decode_features(&bytes).unwrap()).unwrap() != bytes {
        failures.push("DPAF");
    }
    let bytes = encode_pool(&m).unwrap();
    if decode_pool(&bytes).unwrap() != m || encode_pool(&decode_pool(&bytes).unwrap()).unwrap() != bytes {
        failures.push("DPXV");
    }
    let bytes = encode_pitch_model(&trained).unwrap();
    if encode_pitch_model(&decode_pitch_model(&bytes).unwrap()).unwrap() != bytes {
        failures.push("DPAE");
    }
    let (_, bn_model, _) = small_pipeline(&mut rng);
    let bytes = encode_bn_model(&bn_model).unwrap();
    if encode_bn_model(&decode_bn_model(&bytes).unwrap()).unwrap() != bytes {
        failures.push("DPBN");
    }
    let mut values: Vec<f64> = (0..50).map(|_| rng.gen_range(60.0..400.0)).collect();
    values[..10].iter_mut().for_each(|v| *v = 0.0);
    values.shuffle(&mut rng);
    let pitch = PitchSequence::new(values).unwrap();
    if decode_pitch(&encode_pitch(&pitch)).unwrap() != pitch {
        failures.push("dpf0");
    }
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &c, &Default::default()).unwrap();
    if read_corpus(dir.path()).unwrap() != at_storage_precision(&c).unwrap() {
        failures.push("corpus directory");
    }

    let cli_dir = tempfile::tempdir().unwrap();
    let gen = |name: &str| {
        let out = cli_dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_dpanon"))
            .args(["gen-corpus", "--seed", "7", "--speakers", "3", "--utterances", "10", "--out"])
            .arg(&out)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        out
    };
    let (a, b) = (gen("a"), gen("b"));
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        if std::fs::read(a.join(&name)).unwrap() != std::fs::read(b.join(&name)).unwrap() {
            failures.push("cli --seed output");
            break;
        }
    }

    let ok = failures.is_empty();
    verdict(9, "determinism and round trips", ok, start.elapsed(), &format!("failures: {failures:?}"));
    assert!(ok);
}
