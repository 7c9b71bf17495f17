use v2v_core::corpus::{make_noise, mix_at_snr, synth_clean, FeatureShard, NoiseKind};
use v2v_core::dsp::Waveform;
use v2v_core::losses::{mae, mse, SampleBatch};
use v2v_core::metrics::{eval_features, seg_snr, stoi};
use v2v_core::network::{linear_layer, Mlp};
use v2v_core::numerics::{Matrix, SeededRng};

fn noise_wave(len: usize, seed: u64) -> Waveform {
    let n = make_noise(&NoiseKind::White, len, 8000, seed).unwrap();
    let peak = n.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Waveform::new(n.iter().map(|v| v / peak).collect(), 8000).unwrap()
}

#[test]
fn stoi_identity_and_gain_invariance() {
    let w = synth_clean(2.0, 8000, 11).unwrap();
    assert!((stoi(&w, &w, 8000).unwrap() - 1.0).abs() < 1e-9);
    let half = Waveform::new(w.samples().iter().map(|v| v * 0.5).collect(), 8000).unwrap();
    assert!((stoi(&w, &half, 8000).unwrap() - 1.0).abs() < 1e-6);
    let w16 = synth_clean(2.0, 16000, 11).unwrap();
    assert!((stoi(&w16, &w16, 16000).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn stoi_prefers_higher_snr() {
    let mut wins = 0;
    for seed in 0..20 {
        let w = synth_clean(2.0, 8000, 100 + seed).unwrap();
        let noise = noise_wave(w.len(), 500 + seed);
        let low = stoi(&w, &mix_at_snr(&w, &noise, -10.0).unwrap(), 8000).unwrap();
        let high = stoi(&w, &mix_at_snr(&w, &noise, 10.0).unwrap(), 8000).unwrap();
        assert!((0.0..=1.0).contains(&low) && (0.0..=1.0).contains(&high));
        if low < high {
            wins += 1;
        }
    }
    assert_eq!(wins, 20);
}

#[test]
fn stoi_monotone_in_snr_on_average() {
    let snrs = [-10.0, -5.0, 0.0, 5.0, 10.0, 20.0];
    let mut means = vec![0.0; snrs.len()];
    for seed in 0..20 {
        let w = synth_clean(1.5, 8000, 900 + seed).unwrap();
        let noise = noise_wave(w.len(), 700 + seed);
        for (k, snr) in snrs.iter().enumerate() {
            means[k] += stoi(&w, &mix_at_snr(&w, &noise, *snr).unwrap(), 8000).unwrap() / 20.0;
        }
    }
    let inversions: Vec<f64> = means
        .windows(2)
        .filter(|p| p[1] < p[0])
        .map(|p| p[0] - p[1])
        .collect();
    assert!(
        inversions.len() <= 1 && inversions.iter().all(|d| *d <= 0.005),
        "{means:?}"
    );
}

#[test]
fn seg_snr_oracles() {
    // 0 dB in every frame: the error has exactly the clean frame's energy.
    let frame = 128;
    let c: Vec<f64> = (0..frame * 8)
        .map(|i| 0.4 * ((i as f64) * 0.21).sin())
        .collect();
    let mut rng = SeededRng::new(3);
    let mut p = c.clone();
    for (cf, pf) in c.chunks(frame).zip(p.chunks_mut(frame)) {
        let e: Vec<f64> = (0..frame).map(|_| rng.standard_normal()).collect();
        let ce: f64 = cf.iter().map(|v| v * v).sum();
        let ee: f64 = e.iter().map(|v| v * v).sum();
        let g = (ce / ee).sqrt();
        pf.iter_mut().zip(&e).for_each(|(a, v)| *a += g * v);
    }
    let cw = Waveform::new(c.clone(), 8000).unwrap();
    let pw = Waveform::clipped(p, 8000).unwrap();
    assert!(seg_snr(&cw, &pw, frame).unwrap().abs() < 0.5);

    // Two frames, processed = 0: each frame is exactly 0 dB.
    let two = Waveform::new(
        vec![0.5; 128].into_iter().chain(vec![0.01; 128]).collect(),
        8000,
    )
    .unwrap();
    let zero = Waveform::new(vec![0.0; 256], 8000).unwrap();
    assert_eq!(seg_snr(&two, &zero, 128).unwrap(), 0.0);

    // Vanishing error reaches the upper clamp.
    let tiny = Waveform::new(c.iter().map(|v| v + 1e-12).collect(), 8000).unwrap();
    assert_eq!(seg_snr(&cw, &tiny, frame).unwrap(), 35.0);
}

fn shard_from(rows: &[Vec<f64>], targets: &[Vec<f64>]) -> FeatureShard {
    let d_in = rows[0].len();
    let d_out = targets[0].len();
    FeatureShard::new(
        d_in,
        d_out,
        rows.iter().flatten().map(|v| *v as f32).collect(),
        targets.iter().flatten().map(|v| *v as f32).collect(),
        [0; 32],
    )
    .unwrap()
}

#[test]
fn eval_features_oracles() {
    let mut rng = SeededRng::new(8);
    let n = 10_000;
    let d_out = 4;
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d_out).map(|_| rng.standard_normal()).collect())
        .collect();
    // Identity model reproduces targets equal to inputs.
    let shard = shard_from(&xs, &xs);
    let identity = linear_layer(Matrix::identity(d_out), vec![0.0; d_out]).unwrap();
    assert_eq!(eval_features(&identity, &shard).unwrap(), (0.0, 0.0));

    let zero: Mlp = linear_layer(Matrix::zeros(d_out, d_out), vec![0.0; d_out]).unwrap();
    let (m_abs, m_sq) = eval_features(&zero, &shard).unwrap();
    assert!((m_sq / d_out as f64 - 1.0).abs() < 0.05, "{m_sq}");
    assert!(m_abs <= (d_out as f64 * m_sq).sqrt());

    // Same numbers as the losses module on the f32-rounded data.
    let scaled = linear_layer(Matrix::diag(&[0.5, -1.0, 2.0, 0.0]), vec![0.1; d_out]).unwrap();
    let (a, b) = eval_features(&scaled, &shard).unwrap();
    let rounded: Vec<Vec<f64>> = (0..n)
        .map(|i| shard.input(i).iter().map(|v| f64::from(*v)).collect())
        .collect();
    let preds: Vec<Vec<f64>> = rounded
        .iter()
        .map(|x| scaled.forward(x).unwrap().into_inner())
        .collect();
    let batch = SampleBatch::from_slices(&preds, &rounded).unwrap();
    assert!((a - mae(&batch)).abs() <= 1e-12);
    assert!((b - mse(&batch)).abs() <= 1e-12);
    assert!(a <= (d_out as f64 * b).sqrt());

    let wrong = linear_layer(Matrix::identity(3), vec![0.0; 3]).unwrap();
    assert!(eval_features(&wrong, &shard).is_err());
}
