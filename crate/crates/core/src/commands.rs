//! The `v2v` subcommands.
//!
//! Directory layouts:
//!
//! * corpus: `<split>/manifest.tsv`, `<split>/clean/<id>.wav`, `<split>/noisy/<id>.wav`
//! * features: `train.v2vf`, `test.v2vf`, `input.v2vs`, `target.v2vs`, `gv.v2vs`
//! * model: `model.v2vm`, `train_log.tsv` and the statistics files above
//!
//! Every output directory also receives `config.resolved`.

use std::fmt;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::corpus::{
    build_dataset, load_gv_stats, load_norm_stats, load_utterance, read_wav, save_gv_stats,
    save_norm_stats, utterance_paths, wav_bytes, CorpusManifest, FeatureShard, FittedStats, Split,
    UtteranceSource,
};
use crate::digest::{hex, sha256_bytes};
use crate::error::{Error, Result};
use crate::experiment::{
    enhance, evaluate_model, noisy_baseline, produced_gv, EnhanceSetup, TestSet,
};
use crate::io::write_atomic;
use crate::metrics::DETAIL_HEADER;
use crate::network::{train, Mlp};
use crate::theory::suites::{
    lemma1_suite, lemma2_suite, losses_equivalence_suite, rademacher_suite, theorem1_suite,
    SuiteOutcome,
};
use crate::theory::RECORD_HEADER;

pub const CONFIG_ECHO: &str = "config.resolved";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const MODEL_FILE: &str = "model.v2vm";
pub const REPORT_HEADER: &str = "# metric\tdigest\tvalue\tbaseline\timproved\tgain";

/// Paths written by a command, and whether its checks passed.
#[derive(Debug, Clone, Default)]
pub struct CommandOutcome {
    pub artifacts: Vec<PathBuf>,
    pub passed: bool,
}

impl CommandOutcome {
    fn ok(artifacts: Vec<PathBuf>) -> Self {
        CommandOutcome {
            artifacts,
            passed: true,
        }
    }

    /// 0 when the command succeeded and its checks held, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

fn echo_config(cfg: &RunConfig, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(CONFIG_ECHO);
    write_atomic(&path, cfg.to_text().as_bytes())?;
    Ok(path)
}

fn write_text(path: PathBuf, text: &str, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    write_atomic(&path, text.as_bytes())?;
    artifacts.push(path);
    Ok(())
}

fn manifests(cfg: &RunConfig) -> Result<[CorpusManifest; 2]> {
    let profile = cfg.profile.as_str();
    Ok([
        CorpusManifest::synthetic(
            Split::Train,
            profile,
            cfg.n_train,
            &cfg.snr_list,
            &cfg.noise,
            cfg.data_seed,
        )?,
        CorpusManifest::synthetic(
            Split::Test,
            profile,
            cfg.n_test,
            &cfg.test_snr_list,
            &cfg.noise,
            cfg.data_seed,
        )?,
    ])
}

/// Synthesizes the train and test corpora: clean and noisy WAVs plus a
/// manifest per split. Also returns one `<split> <sha256>` line per manifest.
pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(CommandOutcome, String)> {
    let sr = cfg.profile.stft().sample_rate;
    let source = cfg.source();
    let mut artifacts = Vec::new();
    let mut digests = Vec::new();
    for manifest in manifests(cfg)? {
        let split = manifest.split.as_str();
        let written: Vec<PathBuf> = manifest
            .entries()
            .par_iter()
            .map(|e| {
                let u = load_utterance(e, split, &source, sr)?;
                let (clean_path, noisy_path) = utterance_paths(out, split, &e.id);
                write_atomic(&clean_path, &wav_bytes(&u.clean)?)?;
                write_atomic(&noisy_path, &wav_bytes(&u.noisy)?)?;
                Ok([clean_path, noisy_path])
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        artifacts.extend(written);
        let text = manifest.to_text();
        digests.push(format!("{split} {}", hex(&sha256_bytes(text.as_bytes()))));
        write_text(out.join(split).join(MANIFEST_FILE), &text, &mut artifacts)?;
        info!("{split}: {} utterances", manifest.len());
    }
    artifacts.push(echo_config(cfg, out)?);
    Ok((CommandOutcome::ok(artifacts), digests.join("\n")))
}

fn load_manifest(corpus: &Path, split: Split) -> Result<CorpusManifest> {
    let path = corpus.join(split.as_str()).join(MANIFEST_FILE);
    let m = CorpusManifest::load(&path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if m.split != split {
        return Err(Error::contract(format!(
            "{} is a {} manifest",
            path.display(),
            m.split
        )));
    }
    Ok(m)
}

fn save_stats(dir: &Path, stats: &FittedStats, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    for (name, s) in [("input.v2vs", &stats.input), ("target.v2vs", &stats.target)] {
        save_norm_stats(dir.join(name), s)?;
        artifacts.push(dir.join(name));
    }
    save_gv_stats(dir.join("gv.v2vs"), &stats.gv)?;
    artifacts.push(dir.join("gv.v2vs"));
    Ok(())
}

fn load_stats(dir: &Path) -> Result<FittedStats> {
    let load = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        if !p.is_file() {
            return Err(Error::contract(format!("missing {}", p.display())));
        }
        Ok(p)
    };
    Ok(FittedStats {
        input: load_norm_stats(load("input.v2vs")?)?,
        target: load_norm_stats(load("target.v2vs")?)?,
        gv: load_gv_stats(load("gv.v2vs")?)?,
    })
}

/// Builds the training shard (fitting the statistics) and the test shard
/// (reusing them) from a corpus directory.
pub fn features(cfg: &RunConfig, corpus: &Path, out: &Path) -> Result<CommandOutcome> {
    let opts = cfg.features();
    let source = UtteranceSource::Directory(corpus.to_path_buf());
    let train_set = build_dataset(&load_manifest(corpus, Split::Train)?, &source, &opts, None)?;
    let mut artifacts = Vec::new();
    train_set.shard.save(out.join("train.v2vf"))?;
    artifacts.push(out.join("train.v2vf"));
    let test_manifest = load_manifest(corpus, Split::Test)?;
    let test_set = build_dataset(&test_manifest, &source, &opts, Some(&train_set.stats))?;
    test_set.shard.save(out.join("test.v2vf"))?;
    artifacts.push(out.join("test.v2vf"));
    save_stats(out, &train_set.stats, &mut artifacts)?;
    artifacts.push(echo_config(cfg, out)?);
    info!(
        "{} train rows, {} test rows, input dim {}",
        train_set.shard.rows(),
        test_set.shard.rows(),
        train_set.shard.d_in()
    );
    Ok(CommandOutcome::ok(artifacts))
}

fn load_checked_shard(cfg: &RunConfig, path: &Path) -> Result<FeatureShard> {
    if !path.is_file() {
        return Err(Error::contract(format!("missing {}", path.display())));
    }
    let shard = FeatureShard::load(path)?;
    shard.check_layout(cfg.context, cfg.profile.stft().bins(), cfg.nat)?;
    Ok(shard)
}

/// Trains on `<features>/train.v2vf` and writes a self-contained model directory.
pub fn train_model(cfg: &RunConfig, features_dir: &Path, out: &Path) -> Result<CommandOutcome> {
    let shard = load_checked_shard(cfg, &features_dir.join("train.v2vf"))?;
    let mut stats = load_stats(features_dir)?;
    let train_cfg = cfg.train_config(stats.target.std())?;
    let inputs = shard.inputs_f64();
    let (model, log) = train(&inputs, &shard.targets_f64(), &train_cfg)?;
    info!(
        "{} epochs, best epoch {}, validation loss {}",
        log.epochs.len(),
        log.best_epoch + 1,
        log.best_validation_loss()
    );
    stats.gv = produced_gv(&model, &inputs, &stats, cfg.profile.stft())?;

    let mut artifacts = Vec::new();
    write_atomic(out.join(MODEL_FILE), &model.to_bytes())?;
    artifacts.push(out.join(MODEL_FILE));
    write_text(out.join("train_log.tsv"), &log.to_tsv(), &mut artifacts)?;
    save_stats(out, &stats, &mut artifacts)?;
    artifacts.push(echo_config(cfg, out)?);
    Ok(CommandOutcome::ok(artifacts))
}

/// Model directory, or a model file whose directory holds the statistics.
fn model_dir(path: &Path) -> Result<(PathBuf, PathBuf)> {
    let (dir, file) = if path.is_dir() {
        (path.to_path_buf(), path.join(MODEL_FILE))
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, path.to_path_buf())
    };
    if !file.is_file() {
        return Err(Error::contract(format!(
            "model file {} not found",
            file.display()
        )));
    }
    Ok((dir, file))
}

/// A model with its statistics, ready for the enhancement chain.
pub fn load_model(cfg: &RunConfig, path: &Path) -> Result<(Mlp, EnhanceSetup)> {
    let (dir, file) = model_dir(path)?;
    let model = Mlp::load(&file)?;
    let setup = EnhanceSetup {
        features: cfg.features(),
        stats: load_stats(&dir)?,
        gv: cfg.gv,
    };
    if model.input_dim() != setup.features.input_dim() {
        return Err(Error::contract(format!(
            "model input dim {} does not match the configured features ({})",
            model.input_dim(),
            setup.features.input_dim()
        )));
    }
    Ok((model, setup))
}

/// Enhances one noisy WAV.
pub fn enhance_file(
    cfg: &RunConfig,
    model_path: &Path,
    input: &Path,
    output: &Path,
) -> Result<CommandOutcome> {
    let (model, setup) = load_model(cfg, model_path)?;
    let noisy = read_wav(input)?;
    let enhanced = enhance(&model, &noisy, &setup)?;
    write_atomic(output, &wav_bytes(&enhanced)?)?;
    let dir = output
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    Ok(CommandOutcome::ok(vec![
        output.to_path_buf(),
        echo_config(cfg, dir)?,
    ]))
}

fn label_of(path: &Path, index: usize) -> String {
    let named = if path.is_dir() {
        path.file_name()
    } else {
        path.parent().and_then(Path::file_name)
    };
    named
        .map(|n| n.to_string_lossy().replace(['\t', ' ', '.'], "_"))
        .filter(|n| !n.is_empty())
        .unwrap_or_else(|| format!("model{index}"))
}

/// Scores models on the test split of a corpus against the noisy input.
/// Returns the report text as well.
pub fn eval(
    cfg: &RunConfig,
    models: &[PathBuf],
    corpus: &Path,
    out: &Path,
) -> Result<(CommandOutcome, String)> {
    if models.is_empty() {
        return Err(Error::contract("eval needs at least one model"));
    }
    let loaded = models
        .iter()
        .map(|m| load_model(cfg, m))
        .collect::<Result<Vec<_>>>()?;
    let source = UtteranceSource::Directory(corpus.to_path_buf());
    let test = TestSet::load(
        load_manifest(corpus, Split::Test)?,
        &source,
        &cfg.profile.stft(),
    )?;
    let baseline = noisy_baseline(&test, &loaded[0].1)?;

    let mut report = format!("{REPORT_HEADER}\n");
    let mut artifacts = Vec::new();
    for (i, ((model, setup), path)) in loaded.iter().zip(models).enumerate() {
        let label = label_of(path, i);
        let (r, details) = evaluate_model(&label, model, &test, setup, Some(&baseline))?;
        report.push_str(&r.to_records());
        let mut lines = format!("{DETAIL_HEADER}\n");
        for d in &details {
            lines.push_str(&d.to_line());
            lines.push('\n');
        }
        write_text(
            out.join(format!("utterances_{label}.tsv")),
            &lines,
            &mut artifacts,
        )?;
    }
    write_text(out.join("report.tsv"), &report, &mut artifacts)?;
    artifacts.push(echo_config(cfg, out)?);
    Ok((CommandOutcome::ok(artifacts), report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Claim {
    Lemma1,
    Lemma2,
    Theorem1,
    Rademacher,
    LossesEquivalence,
}

impl Claim {
    pub const ALL: [Claim; 5] = [
        Claim::Lemma1,
        Claim::Lemma2,
        Claim::Theorem1,
        Claim::Rademacher,
        Claim::LossesEquivalence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Claim::Lemma1 => "lemma1",
            Claim::Lemma2 => "lemma2",
            Claim::Theorem1 => "theorem1",
            Claim::Rademacher => "rademacher",
            Claim::LossesEquivalence => "losses-equivalence",
        }
    }

    fn default_trials(self) -> usize {
        match self {
            Claim::Lemma1 | Claim::Lemma2 => 100_000,
            Claim::Theorem1 | Claim::LossesEquivalence => 1000,
            Claim::Rademacher => 200,
        }
    }
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Claim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Claim::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown claim '{s}' (expected one of {})",
                    Claim::ALL.map(Claim::as_str).join(", ")
                ))
            })
    }
}

/// Model and inputs for the noise-bound suite: a given model with the rows of
/// `<features>/test.v2vf`, or a model freshly trained on a synthetic corpus.
fn theorem1_subject(
    cfg: &RunConfig,
    model: Option<&Path>,
    features_dir: Option<&Path>,
) -> Result<(Mlp, Vec<Vec<f64>>)> {
    match (model, features_dir) {
        (Some(m), Some(f)) => {
            let (net, _) = load_model(cfg, m)?;
            let shard = load_checked_shard(cfg, &f.join("test.v2vf"))?;
            Ok((net, shard.inputs_f64()))
        }
        (None, None) => {
            let [train_manifest, _] = manifests(cfg)?;
            let opts = cfg.features();
            let data = build_dataset(&train_manifest, &cfg.source(), &opts, None)?;
            let inputs = data.shard.inputs_f64();
            let train_cfg = cfg.train_config(data.stats.target.std())?;
            let (net, log) = train(&inputs, &data.shard.targets_f64(), &train_cfg)?;
            info!(
                "trained a fresh {} model on {} rows ({} epochs)",
                cfg.loss,
                inputs.len(),
                log.epochs.len()
            );
            Ok((net, inputs))
        }
        _ => Err(Error::Config(
            "theorem1 takes both --model and --features, or neither".into(),
        )),
    }
}

/// Runs one claim's randomized suite. The outcome passes iff the claim held.
pub fn verify(
    cfg: &RunConfig,
    claim: Claim,
    model: Option<&Path>,
    features_dir: Option<&Path>,
    out: Option<&Path>,
) -> Result<(CommandOutcome, SuiteOutcome)> {
    let trials = if cfg.verify_trials == 0 {
        claim.default_trials()
    } else {
        cfg.verify_trials
    };
    let seed = cfg.train_seed;
    let suite = match claim {
        Claim::Lemma1 => lemma1_suite(trials, &[1, 2, 8, 64], 1e-12, seed)?,
        Claim::Lemma2 => lemma2_suite(trials, &[1, 2, 8, 64], seed)?,
        Claim::Theorem1 => {
            let (net, inputs) = theorem1_subject(cfg, model, features_dir)?;
            theorem1_suite(&net, &inputs, trials, seed)?
        }
        Claim::Rademacher => rademacher_suite(trials, cfg.verify_draws, seed)?,
        Claim::LossesEquivalence => losses_equivalence_suite(trials, seed)?,
    };
    let mut outcome = CommandOutcome {
        artifacts: Vec::new(),
        passed: suite.passed(),
    };
    if let Some(dir) = out {
        let mut text = format!("{RECORD_HEADER}\n");
        if let Some(w) = &suite.worst {
            text.push_str(&w.to_record());
            text.push('\n');
        }
        text.push_str(&format!("# {suite}\n"));
        write_text(
            dir.join(format!("verify_{}.tsv", claim.as_str())),
            &text,
            &mut outcome.artifacts,
        )?;
        outcome.artifacts.push(echo_config(cfg, dir)?);
    }
    Ok((outcome, suite))
}
