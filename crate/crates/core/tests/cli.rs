use std::path::Path;
use std::process::{Command, Output};

use v2v_core::corpus::{read_wav, save_gv_stats, save_norm_stats, CorpusManifest};
use v2v_core::dsp::{GvStats, NormStats};
use v2v_core::network::linear_layer;
use v2v_core::numerics::{Matrix, Vector};

fn v2v(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_v2v"))
        .args(args)
        .arg("--quiet")
        .env_remove("V2V_PROFILE")
        .output()
        .expect("v2v runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn wav_count(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "wav")
        })
        .count()
}

#[test]
fn synth_writes_counts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let small = ["--set", "data.n_train=8", "--set", "data.n_test=2"];
    let a = dir.path().join("a");
    let o = v2v(&[&["synth", "--out", a.to_str().unwrap()][..], &small].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(wav_count(&a.join("train/clean")), 8);
    assert_eq!(wav_count(&a.join("train/noisy")), 8);
    assert_eq!(wav_count(&a.join("test/noisy")), 2);
    let m = CorpusManifest::load(a.join("train/manifest.tsv")).unwrap();
    assert_eq!(m.len(), 8);
    assert!(!a.join("train/manifest.tsv.partial").exists());

    // Re-running from the echoed config reproduces every byte.
    let b = dir.path().join("b");
    let echoed = a.join("config.resolved");
    let o2 = v2v(&[
        "synth",
        "--config",
        echoed.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&o2), 0);
    assert_eq!(stdout(&o), stdout(&o2));
    for rel in [
        "train/manifest.tsv",
        "test/manifest.tsv",
        "train/noisy/train_00003.wav",
        "config.resolved",
    ] {
        assert_eq!(
            std::fs::read(a.join(rel)).unwrap(),
            std::fs::read(b.join(rel)).unwrap(),
            "{rel}"
        );
    }

    let c = dir.path().join("c");
    let o3 = v2v(&[
        &[
            "synth",
            "--out",
            c.to_str().unwrap(),
            "--set",
            "data.snr_list=0",
        ][..],
        &small,
    ]
    .concat());
    assert_eq!(code(&o3), 0);
    let m = CorpusManifest::load(c.join("train/manifest.tsv")).unwrap();
    assert!(m.entries().iter().all(|e| e.mix.snr_db == 0.0));
    assert_ne!(stdout(&o), stdout(&o3));

    let d = dir.path().join("d");
    let o4 = v2v(&[
        &["synth", "--seed", "9", "--out", d.to_str().unwrap()][..],
        &small,
    ]
    .concat());
    assert_eq!(code(&o4), 0);
    assert_ne!(stdout(&o), stdout(&o4));
    let echoed = std::fs::read_to_string(d.join("config.resolved")).unwrap();
    assert!(echoed.contains("data.seed = 9") && echoed.contains("train.seed = 9"));
}

#[test]
fn verify_claims() {
    for claim in ["lemma1", "lemma2"] {
        let o = v2v(&["verify", claim, "--set", "verify.trials=20000"]);
        assert_eq!(code(&o), 0);
        assert!(
            stdout(&o).starts_with(&format!("PASS {claim}")),
            "{}",
            stdout(&o)
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let o = v2v(&[
        "verify",
        "losses-equivalence",
        "--set",
        "verify.trials=50",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let record = std::fs::read_to_string(dir.path().join("verify_losses-equivalence.tsv")).unwrap();
    assert!(record.starts_with("# claim\t"));
    assert!(dir.path().join("config.resolved").exists());

    let o = v2v(&["verify", "lemma3"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("lemma1"));
}

#[test]
fn validation_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    for args in [
        vec!["synth", "--out", out, "--set", "train.nope=1"],
        vec!["synth", "--out", out, "--set", "features.context=2"],
        vec!["synth"],
        vec![
            "enhance", "--model", out, "--input", "in.wav", "--output", "o.wav",
        ],
        vec!["train", "--features", out, "--out", out],
        vec!["synth", "--config", "/nonexistent/run.cfg", "--out", out],
    ] {
        let o = v2v(&args);
        assert_eq!(code(&o), 1, "{args:?}");
    }
    assert!(!dir.path().join("x").exists());

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "train.loss = mae\ntrain.loss = mse\n").unwrap();
    assert_eq!(
        code(&v2v(&[
            "synth",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out
        ])),
        1
    );
}

#[test]
fn profile_comes_from_environment_without_config() {
    let o = Command::new(env!("CARGO_BIN_EXE_v2v"))
        .args(["verify", "lemma1", "--set", "verify.trials=10", "--quiet"])
        .env("V2V_PROFILE", "huge")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_v2v"))
        .args([
            "verify",
            "lemma1",
            "--set",
            "verify.trials=10",
            "--quiet",
            "--out",
        ])
        .arg(dir.path())
        .env("V2V_PROFILE", "paper")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let echoed = std::fs::read_to_string(dir.path().join("config.resolved")).unwrap();
    assert!(echoed.contains("stft.profile = paper"));
}

/// Model directory whose network copies the centre context frame and whose
/// statistics are all identities.
fn identity_model(dir: &Path) {
    let bins = 129;
    let mut data = vec![0.0; bins * 3 * bins];
    for b in 0..bins {
        data[b * 3 * bins + bins + b] = 1.0;
    }
    let w = Matrix::new(bins, 3 * bins, data).unwrap();
    let net = linear_layer(w, vec![0.0; bins]).unwrap();
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("model.v2vm"), net.to_bytes()).unwrap();
    let unit = NormStats::new(
        Vector::new(vec![0.0; bins]).unwrap(),
        Vector::new(vec![1.0; bins]).unwrap(),
    )
    .unwrap();
    save_norm_stats(dir.join("input.v2vs"), &unit).unwrap();
    save_norm_stats(dir.join("target.v2vs"), &unit).unwrap();
    let same = Vector::new(vec![2.0; bins]).unwrap();
    save_gv_stats(
        dir.join("gv.v2vs"),
        &GvStats::new(same.clone(), same).unwrap(),
    )
    .unwrap();
}

#[test]
fn identity_model_passes_audio_through() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = v2v(&[
        "synth",
        "--out",
        corpus.to_str().unwrap(),
        "--set",
        "data.n_train=1",
        "--set",
        "data.n_test=1",
    ]);
    assert_eq!(code(&o), 0);
    let model = dir.path().join("identity");
    identity_model(&model);

    let noisy = corpus.join("test/noisy/test_00000.wav");
    let run = |name: &str| {
        let out = dir.path().join("enh").join(name);
        let o = v2v(&[
            "enhance",
            "--model",
            model.to_str().unwrap(),
            "--input",
            noisy.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let first = run("a.wav");
    let second = run("b.wav");
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );
    assert!(dir.path().join("enh/config.resolved").exists());

    let x = read_wav(&noisy).unwrap();
    let y = read_wav(&first).unwrap();
    assert_eq!(x.len(), y.len());
    let worst = x
        .samples()
        .iter()
        .zip(y.samples())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1.0 / 32768.0, "{worst}");

    // The model file alone also works; a wrong feature layout does not.
    let o = v2v(&[
        "enhance",
        "--model",
        model.join("model.v2vm").to_str().unwrap(),
        "--input",
        noisy.to_str().unwrap(),
        "--output",
        dir.path().join("enh/c.wav").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let o = v2v(&[
        "enhance",
        "--model",
        model.to_str().unwrap(),
        "--input",
        noisy.to_str().unwrap(),
        "--output",
        dir.path().join("enh/d.wav").to_str().unwrap(),
        "--set",
        "features.nat=on",
    ]);
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("enh/d.wav").exists());
}

#[test]
fn pipeline_features_train_eval_and_noise_bound() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let small = [
        "--set",
        "data.n_train=4",
        "--set",
        "data.n_test=2",
        "--set",
        "train.max_epochs=2",
    ];
    let with = |args: &[&str]| -> Output { v2v(&[args, &small[..]].concat()) };

    assert_eq!(code(&with(&["synth", "--out", &p("corpus")])), 0);
    assert_eq!(
        code(&with(&[
            "features",
            "--corpus",
            &p("corpus"),
            "--out",
            &p("feats")
        ])),
        0
    );
    for f in [
        "train.v2vf",
        "test.v2vf",
        "input.v2vs",
        "target.v2vs",
        "gv.v2vs",
        "config.resolved",
    ] {
        assert!(dir.path().join("feats").join(f).exists(), "{f}");
    }
    assert_eq!(
        code(&with(&[
            "train",
            "--features",
            &p("feats"),
            "--out",
            &p("m1")
        ])),
        0
    );
    assert_eq!(
        code(&with(&[
            "train",
            "--features",
            &p("feats"),
            "--out",
            &p("m2")
        ])),
        0
    );
    assert_eq!(
        std::fs::read(dir.path().join("m1/model.v2vm")).unwrap(),
        std::fs::read(dir.path().join("m2/model.v2vm")).unwrap()
    );
    let log = std::fs::read_to_string(dir.path().join("m1/train_log.tsv")).unwrap();
    assert!(log.contains("# best_epoch"));

    let o = with(&[
        "eval",
        "--model",
        &p("m1"),
        "--corpus",
        &p("corpus"),
        "--out",
        &p("eval"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.path().join("eval/report.tsv")).unwrap();
    assert_eq!(report.lines().count(), 7);
    assert!(report.lines().nth(5).unwrap().starts_with("m1.stoi\t"));
    let details = std::fs::read_to_string(dir.path().join("eval/utterances_m1.tsv")).unwrap();
    assert_eq!(details.lines().count(), 3);

    let o = with(&[
        "verify",
        "theorem1",
        "--model",
        &p("m1"),
        "--features",
        &p("feats"),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("PASS theorem1"));
    let o = with(&["verify", "theorem1", "--model", &p("m1")]);
    assert_eq!(code(&o), 1);
}
