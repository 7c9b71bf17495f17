//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! straight to stdout so the verdicts show even when output is captured.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use v2v_core::corpus::{
    read_wav, write_wav, CorpusManifest, FeatureOptions, NoiseKind, Split, UtteranceSource,
};
use v2v_core::corpus::{TEST_SNRS, TRAIN_SNRS};
use v2v_core::dsp::{
    analyze, fit_norm, overlap_add, stft, synthesize, LpsSequence, StftConfig, Waveform,
};
use v2v_core::experiment::{
    evaluate_model, noisy_baseline, prepare, test_shard, train_on, Profile, TestSet, TrainedModel,
};
use v2v_core::losses::{LossKind, LossSpec};
use v2v_core::metrics::EvalReport;
use v2v_core::network::{init_mlp, train, LayerSpec, Mlp, TrainConfig};
use v2v_core::numerics::SeededRng;
use v2v_core::theory::rademacher_exact;
use v2v_core::theory::suites::{
    lemma1_suite, lemma2_suite, losses_equivalence_suite, rademacher_suite, theorem1_suite,
    SuiteOutcome,
};
use v2v_core::theory::{construct_mse_violation, FunctionFamily};

fn verdict(n: u32, ok: bool, detail: impl std::fmt::Display, started: Instant) {
    let line = format!(
        "criterion {n}: {} {detail} ({:.1}s)\n",
        if ok { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn summary(s: &SuiteOutcome) -> String {
    let mut text = format!("{} trials={} failures={}", s.claim, s.trials, s.failures);
    if let Some(w) = &s.worst {
        text.push_str(&format!(" worst_margin={:.3e}", w.margin));
    }
    if !s.note.is_empty() {
        text.push(' ');
        text.push_str(&s.note);
    }
    text
}

#[test]
fn criterion_01_mae_lipschitz_suite() {
    let t = Instant::now();
    let s = lemma1_suite(100_000, &[1, 2, 8, 64], 1e-12, 1).unwrap();
    let ok = s.failures == 0 && s.trials == 100_000 && t.elapsed().as_secs() < 10;
    verdict(1, ok, summary(&s), t);
    assert!(ok, "{s}");
}

#[test]
fn criterion_02_mse_violation_suite() {
    let t = Instant::now();
    let s = lemma2_suite(100_000, &[1, 2, 8, 64], 2).unwrap();
    let hand = construct_mse_violation(&[0.0], &[1.0]).unwrap();
    let hand_ok = hand.lhs == 3.0 && hand.rhs == 1.0 && hand.holds;
    let ok = s.failures == 0 && s.trials == 100_000 && hand_ok && t.elapsed().as_secs() < 10;
    verdict(
        2,
        ok,
        format!("{} hand=({}, {})", summary(&s), hand.lhs, hand.rhs),
        t,
    );
    assert!(ok, "{s}");
}

struct Comparison {
    mae_runs: Vec<(TrainedModel, EvalReport)>,
    mse_runs: Vec<(TrainedModel, EvalReport)>,
    test: TestSet,
    noisy_stoi: f64,
    seconds: f64,
}

const SEEDS: u64 = 5;

/// The desk-scale MAE-versus-MSE runs shared by criteria 3, 7 and 8.
fn comparison() -> &'static Comparison {
    static CELL: OnceLock<Comparison> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = Instant::now();
        let profile = Profile::Desk;
        let kinds = NoiseKind::synthetic();
        let train_m =
            CorpusManifest::synthetic(Split::Train, "desk", 200, &TRAIN_SNRS, &kinds, 1).unwrap();
        let test_m =
            CorpusManifest::synthetic(Split::Test, "desk", 40, &TEST_SNRS, &kinds, 1).unwrap();
        let features = FeatureOptions::new(profile.stft());
        let (dataset, test) =
            prepare(&train_m, test_m, &UtteranceSource::synthetic(), &features).unwrap();

        let runs = |kind: LossKind| -> Vec<(TrainedModel, EvalReport)> {
            (0..SEEDS)
                .map(|seed| {
                    let cfg = profile.train_config(LossSpec::new(kind, None).unwrap(), seed);
                    let trained = train_on(&dataset, &features, &cfg, true).unwrap();
                    let (report, _) =
                        evaluate_model(kind.as_str(), &trained.model, &test, &trained.setup, None)
                            .unwrap();
                    (trained, report)
                })
                .collect()
        };
        let mae_runs = runs(LossKind::Mae);
        let mse_runs = runs(LossKind::Mse);
        let (baseline, _) = noisy_baseline(&test, &mae_runs[0].0.setup).unwrap();
        Comparison {
            mae_runs,
            mse_runs,
            test,
            noisy_stoi: baseline.stoi,
            seconds: t.elapsed().as_secs_f64(),
        }
    })
}

fn seed_mean(runs: &[(TrainedModel, EvalReport)], f: impl Fn(&EvalReport) -> f64) -> f64 {
    runs.iter().map(|r| f(&r.1)).sum::<f64>() / runs.len() as f64
}

#[test]
fn criterion_03_noise_bound_on_trained_nets() {
    let c = comparison();
    let t = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    for (label, run) in [("mae", &c.mae_runs[0]), ("mse", &c.mse_runs[0])] {
        let shard = test_shard(&c.test, &run.0.setup).unwrap();
        let inputs = shard.inputs_f64();
        let s = theorem1_suite(&run.0.model, &inputs, 1000, 3).unwrap();
        ok &= s.passed() && s.failures == 0 && s.trials == 1000;
        notes.push(format!("{label}: {}", summary(&s)));
    }
    let ok = ok && t.elapsed().as_secs() < 300;
    verdict(3, ok, notes.join("; "), t);
    assert!(ok, "{notes:?}");
}

#[test]
fn criterion_04_rademacher_oracle() {
    let t = Instant::now();
    let s = rademacher_suite(200, 100_000, 4).unwrap();
    let closed = rademacher_exact(
        &[vec![1.0], vec![1.0]],
        &FunctionFamily::LinearBall {
            radius: 1.0,
            dim: 1,
        },
    )
    .unwrap()
    .value;
    let agree = (s.trials - s.failures) as f64 / s.trials as f64;
    let ok = s.passed() && agree >= 0.99 && closed == 0.5 && t.elapsed().as_secs() < 120;
    verdict(4, ok, format!("{} agreement={agree:.3}", summary(&s)), t);
    assert!(ok, "{s}");
}

fn random_net(rng: &mut SeededRng) -> Mlp {
    let depth = 1 + rng.below(4) as usize;
    let dims: Vec<usize> = (0..=depth).map(|_| 1 + rng.below(16) as usize).collect();
    let mut net = init_mlp(
        &LayerSpec::chain(dims[0], &dims[1..depth], dims[depth]),
        rng.next_u64(),
    )
    .unwrap();
    let params: Vec<f64> = net
        .parameters()
        .iter()
        .map(|p| p + 0.1 * rng.standard_normal())
        .collect();
    net.set_parameters(&params).unwrap();
    net
}

/// Smallest |pre-activation| of hidden units and, for MAE, smallest |residual|.
fn kink_distance(net: &Mlp, xs: &[Vec<f64>], ys: &[Vec<f64>], kind: LossKind) -> f64 {
    let mut best = f64::INFINITY;
    for (x, y) in xs.iter().zip(ys) {
        let mut h = x.clone();
        let layers = net.layers();
        for (k, layer) in layers.iter().enumerate() {
            let w = layer.weights();
            let z: Vec<f64> = (0..layer.out_dim())
                .map(|r| w.row(r).iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + layer.bias()[r])
                .collect();
            if k + 1 < layers.len() {
                best = z.iter().fold(best, |m, v| m.min(v.abs()));
                h = z.iter().map(|v| v.max(0.0)).collect();
            } else {
                h = z;
            }
        }
        if kind == LossKind::Mae {
            best = h.iter().zip(y).fold(best, |m, (p, t)| m.min((p - t).abs()));
        }
    }
    best
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn criterion_05_gradients_match_finite_differences() {
    let t = Instant::now();
    let mut rng = SeededRng::new(5);
    let h = 1e-5;
    let (mut nets, mut worst) = (0, 0.0f64);
    let mut ok = true;
    for kind in [LossKind::Mse, LossKind::Mae] {
        let loss = LossSpec::new(kind, None).unwrap();
        let mut checked = 0;
        while checked < 50 {
            let net = random_net(&mut rng);
            let n = 1 + rng.below(4) as usize;
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..net.input_dim())
                        .map(|_| rng.standard_normal())
                        .collect()
                })
                .collect();
            let ys: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..net.output_dim())
                        .map(|_| rng.standard_normal())
                        .collect()
                })
                .collect();
            if kink_distance(&net, &xs, &ys, kind) <= 1e-3 {
                continue;
            }
            let xr: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
            let yr: Vec<&[f64]> = ys.iter().map(|v| v.as_slice()).collect();
            let analytic = net.backward(&xr, &yr, &loss).unwrap().1.flatten();
            let base = net.parameters();
            let eval = |p: &[f64]| {
                let mut m = net.clone();
                m.set_parameters(p).unwrap();
                m.backward(&xr, &yr, &loss).unwrap().0
            };
            for (k, a) in analytic.iter().enumerate() {
                let mut p = base.clone();
                p[k] += h;
                let up = eval(&p);
                p[k] -= 2.0 * h;
                let fd = (up - eval(&p)) / (2.0 * h);
                ok &= close(*a, fd);
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
            }
            for x in &xs {
                let j = net.input_jacobian(x).unwrap();
                for c in 0..net.input_dim() {
                    let (mut up, mut dn) = (x.clone(), x.clone());
                    up[c] += h;
                    dn[c] -= h;
                    let (fu, fdn) = (net.forward(&up).unwrap(), net.forward(&dn).unwrap());
                    for r in 0..net.output_dim() {
                        let fd = (fu.as_slice()[r] - fdn.as_slice()[r]) / (2.0 * h);
                        ok &= close(j.get(r, c), fd);
                    }
                }
            }
            checked += 1;
            nets += 1;
        }
    }
    let ok = ok && t.elapsed().as_secs() < 60;
    verdict(5, ok, format!("nets={nets} worst_rel={worst:.2e}"), t);
    assert!(ok);
}

#[test]
fn criterion_06_dsp_round_trips() {
    let t = Instant::now();
    let mut rng = SeededRng::new(6);
    let mut stft_err = 0.0f64;
    for cfg in [StftConfig::desk(), StftConfig::full()] {
        let w = Waveform::new(
            (0..cfg.fft_size * 40 + 11)
                .map(|_| rng.uniform_range(-0.9, 0.9))
                .collect(),
            cfg.sample_rate,
        )
        .unwrap();
        let s = stft(&w, &cfg).unwrap();
        let y = overlap_add(&s, &s, &cfg).unwrap();
        let edge = cfg.fft_size / 2;
        for i in edge..y.len() - edge {
            stft_err = stft_err.max((y[i] - w.samples()[i]).abs());
        }
        let s = analyze(&w, &cfg).unwrap();
        let y = synthesize(&s, &s, &cfg, w.len()).unwrap();
        stft_err = y
            .iter()
            .zip(w.samples())
            .fold(stft_err, |m, (a, b)| m.max((a - b).abs()));
    }

    let dir = tempfile::tempdir().unwrap();
    let mut wav_err = 0.0f64;
    for sr in [8000u32, 16000] {
        let w = Waveform::new(
            (0..sr as usize)
                .map(|_| rng.uniform_range(-1.0, 1.0))
                .collect(),
            sr,
        )
        .unwrap();
        let path = dir.path().join(format!("{sr}.wav"));
        write_wav(&path, &w).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), w.len());
        wav_err = back
            .samples()
            .iter()
            .zip(w.samples())
            .fold(wav_err, |m, (a, b)| m.max((a - b).abs()));
    }

    let cfg = StftConfig::desk();
    let l = LpsSequence::new(
        200,
        (0..200 * 129)
            .map(|_| 4.0 * rng.standard_normal() - 6.0)
            .collect(),
        cfg,
    )
    .unwrap();
    let stats = fit_norm(std::slice::from_ref(&l)).unwrap();
    let back = stats.invert(&stats.apply(&l).unwrap()).unwrap();
    let norm_err = back
        .as_slice()
        .iter()
        .zip(l.as_slice())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let ok = stft_err <= 1e-10
        && wav_err <= 1.0 / 32768.0
        && norm_err <= 1e-12
        && t.elapsed().as_secs() < 30;
    verdict(
        6,
        ok,
        format!("stft={stft_err:.2e} wav={wav_err:.2e} norm={norm_err:.2e}"),
        t,
    );
    assert!(ok);
}

#[test]
fn criterion_07_feature_error_trend() {
    let c = comparison();
    let t = Instant::now();
    let mae_of_mae = seed_mean(&c.mae_runs, |r| r.mae);
    let mae_of_mse = seed_mean(&c.mse_runs, |r| r.mae);
    let mse_of_mae = seed_mean(&c.mae_runs, |r| r.mse);
    let mse_of_mse = seed_mean(&c.mse_runs, |r| r.mse);
    let ok = mae_of_mae < mae_of_mse
        && mae_of_mae < mse_of_mae
        && mae_of_mse < mse_of_mse
        && c.seconds < 1800.0;
    verdict(
        7,
        ok,
        format!(
            "MAE-trained mae={mae_of_mae:.4} mse={mse_of_mae:.4}; MSE-trained mae={mae_of_mse:.4} mse={mse_of_mse:.4}; runs {:.0}s",
            c.seconds
        ),
        t,
    );
    assert!(ok);
}

#[test]
fn criterion_08_intelligibility_trend() {
    let c = comparison();
    let t = Instant::now();
    let stoi_mae = seed_mean(&c.mae_runs, |r| r.stoi);
    let stoi_mse = seed_mean(&c.mse_runs, |r| r.stoi);
    let seg_mae = seed_mean(&c.mae_runs, |r| r.seg_snr_db);
    let seg_mse = seed_mean(&c.mse_runs, |r| r.seg_snr_db);
    let ordered = stoi_mae >= stoi_mse - 0.005;
    let improves = stoi_mae >= c.noisy_stoi + 0.01 && stoi_mse >= c.noisy_stoi + 0.01;
    let ok = ordered && improves;
    verdict(
        8,
        ok,
        format!(
            "stoi mae={stoi_mae:.4} mse={stoi_mse:.4} noisy={:.4} (ordering {}, improvement {}); segsnr mae={seg_mae:.2} mse={seg_mse:.2}",
            c.noisy_stoi,
            if ordered { "holds" } else { "fails" },
            if improves { "holds" } else { "fails" },
        ),
        t,
    );
    assert!(ok);
}

#[test]
fn criterion_09_scaled_losses_reduce_to_plain_ones() {
    let t = Instant::now();
    let s = losses_equivalence_suite(1000, 9).unwrap();
    let ok = s.failures == 0 && t.elapsed().as_secs() < 120;
    verdict(9, ok, summary(&s), t);
    assert!(ok, "{s}");
}

#[test]
fn criterion_10_median_and_mean_separation() {
    let t = Instant::now();
    let mut fits = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let mut rng = SeededRng::new(1000 + seed);
        let xs = vec![vec![1.0]; 2000];
        let ys: Vec<Vec<f64>> = (0..2000)
            .map(|_| vec![if rng.uniform() < 0.25 { 4.0 } else { 0.0 }])
            .collect();
        let mean = ys.iter().map(|y| y[0]).sum::<f64>() / ys.len() as f64;
        let fit = |kind| {
            let cfg = TrainConfig {
                loss: LossSpec::new(kind, None).unwrap(),
                learning_rate: 0.01,
                batch_size: 16,
                patience: 20,
                seed,
                ..TrainConfig::default()
            };
            let (net, _) = train(&xs, &ys, &cfg).unwrap();
            net.forward(&[1.0]).unwrap().as_slice()[0]
        };
        let (m1, m2) = (fit(LossKind::Mae), fit(LossKind::Mse));
        ok &= m1.abs() <= 0.2 && (m2 - mean).abs() <= 0.2;
        fits.push(format!("({m1:.3}, {m2:.3}/{mean:.3})"));
    }
    let ok = ok && t.elapsed().as_secs() < 60;
    verdict(10, ok, format!("median/mean fits {}", fits.join(" ")), t);
    assert!(ok, "{fits:?}");
}
