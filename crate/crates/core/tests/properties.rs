use proptest::prelude::*;

use dpanon::autoencoder::{clip_latent, PitchAutoencoder};
use dpanon::bn::frame_noise;
use dpanon::dp::{compose_advanced, pipeline_ledger, NoiseRng};
use dpanon::eval::{eer, unlinkability, ScoreSet};
use dpanon::io::binary::{decode_features, encode_features, to_f32_precision};
use dpanon::nn::Matrix;
use dpanon::pitch::{normalize, pitch_convert, reinsert_zeros, remove_zeros, PitchSequence, PitchStats};

fn scores() -> impl Strategy<Value = ScoreSet> {
    (
        prop::collection::vec(-5.0f64..5.0, 1..30),
        prop::collection::vec(-5.0f64..5.0, 1..30),
    )
        .prop_map(|(m, n)| ScoreSet::new(m, n))
}

proptest! {
    #[test]
    fn eer_invariant_under_increasing_maps(s in scores(), a in 0.1f64..10.0, b in -3.0f64..3.0) {
        let t = ScoreSet::new(
            s.mated.iter().map(|x| a * x + b).collect(),
            s.nonmated.iter().map(|x| a * x + b).collect(),
        );
        let cubed = ScoreSet::new(
            s.mated.iter().map(|x| x.powi(3)).collect(),
            s.nonmated.iter().map(|x| x.powi(3)).collect(),
        );
        let e = eer(&s).unwrap();
        prop_assert!((e - eer(&t).unwrap()).abs() < 1e-12);
        prop_assert!((e - eer(&cubed).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn unlinkability_in_unit_interval(s in scores(), bins in 2usize..80) {
        let u = unlinkability(&s, bins).unwrap();
        prop_assert!((0.0..=1.0).contains(&u));
    }

    #[test]
    fn clipping_is_idempotent(v in prop::collection::vec(-3.0f64..3.0, 1..60)) {
        let m = Matrix::from_vec(1, v.len(), v).unwrap();
        let once = clip_latent(&m);
        prop_assert!(once.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert_eq!(clip_latent(&once), once);
    }

    #[test]
    fn noisy_frames_have_unit_l1(b in prop::collection::vec(-10.0f64..10.0, 1..40), eps in 0.1f64..100.0, seed: u64) {
        prop_assume!(b.iter().any(|x| x.abs() > 1e-6));
        let out = frame_noise(&b, eps, &mut NoiseRng::seeded(seed)).unwrap();
        prop_assert_eq!(out.len(), b.len());
        prop_assert!((out.iter().map(|x| x.abs()).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zeros_survive_removal_and_reinsertion(v in prop::collection::vec(prop_oneof![Just(0.0), 60.0f64..400.0], 1..80)) {
        prop_assume!(v.iter().any(|x| *x > 0.0));
        let p = PitchSequence::new(v).unwrap();
        let view = remove_zeros(&p).unwrap();
        prop_assert_eq!(reinsert_zeros(&view).unwrap(), p);
    }

    #[test]
    fn conversion_hits_target_statistics(v in prop::collection::vec(60.0f64..400.0, 3..80), mean in 80.0f64..300.0, std in 1.0f64..50.0) {
        prop_assume!(v.iter().any(|x| (x - v[0]).abs() > 1e-3));
        let (z, _) = normalize(&v).unwrap();
        let out = pitch_convert(&z, PitchStats::new(mean, std).unwrap()).unwrap();
        let got = PitchStats::of(&out).unwrap();
        prop_assert!((got.mean - mean).abs() < 1e-8 * mean);
        prop_assert!((got.std - std).abs() < 1e-8 * std.max(1.0));
    }

    #[test]
    fn pipeline_budget_is_additive(e1 in 0.01f64..10.0, e2 in 0.01f64..2.0, k in 1u64..5000) {
        let ledger = pipeline_ledger(e1, e2, k, 1e-5).unwrap();
        prop_assert_eq!(ledger.simple_total().unwrap(), e1 + e2 * k as f64);
        let adv = ledger.advanced_total().unwrap().epsilon();
        prop_assert!(adv <= e1 + e2 * k as f64);
        prop_assert!(adv >= e1 + compose_advanced(e2, k, 1e-5).unwrap().min(e2 * k as f64) - 1e-9);
    }

    #[test]
    fn features_round_trip(rows in 1usize..20, cols in 1usize..20, seed: u64) {
        use rand::Rng;
        let mut rng = NoiseRng::seeded(seed);
        let m = to_f32_precision(&Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1e3..1e3)));
        let bytes = encode_features(&m).unwrap();
        prop_assert_eq!(decode_features(&bytes).unwrap(), m);
        for cut in [0, 4, 5, bytes.len() - 1] {
            prop_assert!(decode_features(&bytes[..cut]).is_err());
        }
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        prop_assert!(decode_features(&bad).is_err());
    }

    #[test]
    fn encoder_output_in_unit_box(k in 5usize..60, c in 1usize..5, seed: u64, spread in 0.1f64..100.0) {
        use rand::Rng;
        let mut rng = NoiseRng::seeded(seed);
        let model = PitchAutoencoder::new(c, 5, 1.0, &mut rng).unwrap();
        let z: Vec<f64> = (0..k).map(|_| spread * rng.gen_range(-1.0..1.0)).collect();
        let h = model.encode(&z).unwrap();
        prop_assert!(h.matrix().as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
    }
}
