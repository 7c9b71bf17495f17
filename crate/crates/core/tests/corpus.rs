use proptest::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use v2v_core::corpus::{
    active_mask, build_dataset, load_gv_stats, load_norm_stats, make_noise, masked_power,
    mix_at_snr, parse_wav, read_wav, save_gv_stats, save_norm_stats, scale_noise_for_snr,
    synth_clean, wav_bytes, write_wav, CorpusManifest, FeatureOptions, FeatureShard, NoiseKind,
    Split, UtteranceSource, TEST_SNRS, TRAIN_SNRS,
};
use v2v_core::dsp::{StftConfig, Waveform};
use v2v_core::numerics::SeededRng;
use v2v_core::Error;

#[test]
fn wav_sine_round_trip_within_one_lsb() {
    let dir = tempfile::tempdir().unwrap();
    for sr in [8000u32, 16000, 48000] {
        let x: Vec<f64> = (0..sr as usize)
            .map(|i| 0.9 * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / f64::from(sr)).sin())
            .collect();
        let w = Waveform::new(x, sr).unwrap();
        let path = dir.path().join(format!("sine_{sr}.wav"));
        write_wav(&path, &w).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), sr);
        assert_eq!(back.len(), w.len());
        let worst = back
            .samples()
            .iter()
            .zip(w.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1.0 / 32768.0, "{worst}");
    }
}

#[test]
fn wav_rejects_bad_files() {
    let w = Waveform::new(vec![0.25; 100], 8000).unwrap();
    let good = wav_bytes(&w).unwrap();
    assert_eq!(parse_wav(&good).unwrap().len(), 100);

    // Empty data chunk.
    let empty = wav_bytes(&Waveform::new(vec![0.0], 8000).unwrap()).unwrap();
    let mut empty = empty[..empty.len() - 2].to_vec();
    let n = empty.len();
    empty[n - 4..].copy_from_slice(&0u32.to_le_bytes());
    assert!(matches!(parse_wav(&empty), Err(Error::Parse { .. })));

    // IEEE float format tag.
    let mut float = good.clone();
    float[20..22].copy_from_slice(&3u16.to_le_bytes());
    assert!(matches!(parse_wav(&float), Err(Error::Unsupported(_))));

    assert!(matches!(parse_wav(&good[..30]), Err(Error::Parse { .. })));
    assert!(parse_wav(b"not a wav file at all, sorry").is_err());
}

fn fraction_below(w: &Waveform, hz: f64) -> f64 {
    let n = w.len().next_power_of_two();
    let mut buf: Vec<Complex64> = w
        .samples()
        .iter()
        .map(|v| Complex64::new(*v, 0.0))
        .collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = f64::from(w.sample_rate()) / n as f64;
    let (mut low, mut total) = (0.0, 0.0);
    for (k, z) in buf[..=n / 2].iter().enumerate() {
        let p = z.norm_sqr();
        total += p;
        if k as f64 * df < hz {
            low += p;
        }
    }
    low / total
}

#[test]
fn clean_synthesis_contract() {
    for seed in 0..10 {
        for sr in [8000, 16000] {
            let a = synth_clean(1.5, sr, seed).unwrap();
            assert_eq!(a, synth_clean(1.5, sr, seed).unwrap());
            let peak = a.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((peak - 0.5).abs() < 1e-9);
            assert!(fraction_below(&a, 2000.0) >= 0.9, "seed {seed} sr {sr}");
        }
    }
    assert!(synth_clean(0.1, 8000, 1).is_err());
}

fn measured_snr(clean: &Waveform, scaled: &[f64]) -> f64 {
    let mask = active_mask(clean.samples(), clean.sample_rate());
    10.0 * (masked_power(clean.samples(), &mask) / masked_power(scaled, &mask)).log10()
}

#[test]
fn snr_examples() {
    let clean = synth_clean(2.0, 8000, 4).unwrap();
    for (k, kind) in NoiseKind::synthetic().iter().enumerate() {
        let n = make_noise(kind, 5000, 8000, k as u64).unwrap();
        let peak = n.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let noise = Waveform::new(n.iter().map(|v| v / peak).collect(), 8000).unwrap();
        let zero = scale_noise_for_snr(&clean, &noise, 0.0).unwrap();
        let mask = active_mask(clean.samples(), 8000);
        let (pc, pn) = (
            masked_power(clean.samples(), &mask),
            masked_power(&zero, &mask),
        );
        assert!((pc - pn).abs() <= 1e-9 * pc);
        for snr in TRAIN_SNRS.iter().chain(&TEST_SNRS) {
            let s = scale_noise_for_snr(&clean, &noise, *snr).unwrap();
            assert!((measured_snr(&clean, &s) - snr).abs() <= 0.01);
        }
        // Relative error over the active region, where the SNR is defined.
        let quiet = mix_at_snr(&clean, &noise, 60.0).unwrap();
        let diff: Vec<f64> = quiet
            .samples()
            .iter()
            .zip(clean.samples())
            .map(|(a, b)| a - b)
            .collect();
        let rel = (masked_power(&diff, &mask) / pc).sqrt();
        assert!(rel <= 1e-3 * (1.0 + 1e-9), "{rel}");
    }
}

#[test]
fn dataset_dimensions_and_determinism() {
    let kinds = NoiseKind::synthetic();
    let m = CorpusManifest::synthetic(Split::Train, "desk", 1, &TRAIN_SNRS, &kinds, 7).unwrap();
    let mut opts = FeatureOptions::new(StftConfig::desk());
    let src = UtteranceSource::synthetic();
    let d = build_dataset(&m, &src, &opts, None).unwrap();
    assert_eq!((d.shard.d_in(), d.shard.d_out()), (387, 129));
    opts.nat = true;
    let d_nat = build_dataset(&m, &src, &opts, None).unwrap();
    assert_eq!(d_nat.shard.d_in(), 516);
    d_nat.shard.check_layout(3, 129, true).unwrap();
    assert!(d_nat.shard.check_layout(3, 129, false).is_err());

    let m4 = CorpusManifest::synthetic(Split::Train, "desk", 4, &TRAIN_SNRS, &kinds, 7).unwrap();
    opts.nat = false;
    let a = build_dataset(&m4, &src, &opts, None).unwrap();
    let b = build_dataset(&m4, &src, &opts, None).unwrap();
    assert_eq!(a.shard.provenance(), b.shard.provenance());
    assert_eq!(a.shard.to_bytes(), b.shard.to_bytes());
    let dir = tempfile::tempdir().unwrap();
    a.shard.save(dir.path().join("a.v2vf")).unwrap();
    b.shard.save(dir.path().join("b.v2vf")).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("a.v2vf")).unwrap(),
        std::fs::read(dir.path().join("b.v2vf")).unwrap()
    );
    let other = CorpusManifest::synthetic(Split::Train, "desk", 4, &TRAIN_SNRS, &kinds, 8).unwrap();
    let c = build_dataset(&other, &src, &opts, None).unwrap();
    assert_ne!(a.shard.provenance(), c.shard.provenance());

    save_norm_stats(dir.path().join("in.v2vs"), &a.stats.input).unwrap();
    assert_eq!(
        load_norm_stats(dir.path().join("in.v2vs")).unwrap(),
        a.stats.input
    );
    save_gv_stats(dir.path().join("gv.v2vs"), &a.stats.gv).unwrap();
    assert_eq!(
        load_gv_stats(dir.path().join("gv.v2vs")).unwrap(),
        a.stats.gv
    );
}

fn random_shard(rows: usize, d_in: usize, d_out: usize, seed: u64) -> FeatureShard {
    let mut rng = SeededRng::new(seed);
    let inputs = (0..rows * d_in)
        .map(|_| rng.standard_normal() as f32)
        .collect();
    let targets = (0..rows * d_out)
        .map(|_| rng.standard_normal() as f32)
        .collect();
    let mut digest = [0u8; 32];
    digest.iter_mut().for_each(|b| *b = rng.next_u64() as u8);
    FeatureShard::new(d_in, d_out, inputs, targets, digest).unwrap()
}

#[test]
fn shard_errors() {
    let s = random_shard(5, 6, 3, 1);
    let bytes = s.to_bytes();
    for cut in [0, 3, 20, 51, bytes.len() - 1] {
        assert!(
            matches!(
                FeatureShard::from_bytes(&bytes[..cut]),
                Err(Error::Parse { .. })
            ),
            "cut {cut}"
        );
    }
    let mut newer = bytes.clone();
    newer[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(
        FeatureShard::from_bytes(&newer),
        Err(Error::Version {
            found: 2,
            expected: 1,
            ..
        })
    ));
    let mut longer = bytes;
    longer.push(0);
    assert!(FeatureShard::from_bytes(&longer).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shard_round_trip_is_bit_identical(rows in 0usize..20, d_in in 1usize..12, d_out in 1usize..6, seed in any::<u64>()) {
        let s = random_shard(rows, d_in, d_out, seed);
        let back = FeatureShard::from_bytes(&s.to_bytes()).unwrap();
        prop_assert_eq!(back.to_bytes(), s.to_bytes());
        prop_assert_eq!(back, s);
    }

    #[test]
    fn snr_contract_over_range(snr in -10.0f64..30.0, seed in 0u64..1000, k in 0usize..3) {
        let clean = synth_clean(1.0, 8000, seed).unwrap();
        let kind = &NoiseKind::synthetic()[k];
        let n = make_noise(kind, 3000 + seed as usize, 8000, seed + 1).unwrap();
        let peak = n.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let noise = Waveform::new(n.iter().map(|v| v / peak).collect(), 8000).unwrap();
        let s = scale_noise_for_snr(&clean, &noise, snr).unwrap();
        prop_assert!((measured_snr(&clean, &s) - snr).abs() <= 0.01);
    }
}
