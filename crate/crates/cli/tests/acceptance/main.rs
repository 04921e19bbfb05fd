//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Criteria 3 and 7 share one trained model.

#[path = "../../../core/tests/cases/mod.rs"]
mod cases;
#[path = "../../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use contact_sense::audio_io::{read_wav_from, write_wav_to, AudioClip};
use contact_sense::classify::{featurize_corpus, prediction_from_logits, scan_corpus, stratified_split, Classifier, FeatureSetup};
use contact_sense::features::{FeatureConfig, Featurizer};
use contact_sense::framing::{segment, window_count, FramingConfig};
use contact_sense::nn::{load_checkpoint, Checkpoint, CheckpointError, Cnn, ModelSpec, Tensor};
use contact_sense::stream::{run_stream, run_stream_with, DropPolicy, InputFormat, StreamConfig};
use contact_sense::synth::CorpusSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criterion 3 budget and thresholds.
const BENCH_SEED: &str = "7";
const BENCH_EPOCHS: &str = "200";
const BENCH_MIN_ACCURACY: f64 = 0.90;
const BENCH_MIN_BLANK: f64 = 0.99;
const BENCH_BUDGET: Duration = Duration::from_secs(15 * 60);

struct Shared {
    work: tempfile::TempDir,
    /// Corpus and checkpoint from the benchmark run, once it has produced them.
    bench: Option<(PathBuf, PathBuf)>,
}

fn cli(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_contact-sense")).env_remove("CONTACT_SENSE_CONFIG").args(args).output().unwrap();
    assert!(out.status.success(), "contact-sense {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dsp_oracle(_: &mut Shared) -> String {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let worst = (0..100).map(|_| cases::mel_case(&mut rng)).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    assert!(worst <= cases::MEL_TOL, "max abs deviation {worst:e} > {:e}", cases::MEL_TOL);
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    format!("100 clips, max abs deviation {worst:.2e} (limit 1e-6), {:.2} s (limit 60 s)", elapsed.as_secs_f64())
}

fn gradients(_: &mut Shared) -> String {
    let mut combos = 0;
    for (name, case, seeds) in cases::layer_suite() {
        for seed in seeds {
            catch_unwind(|| case(seed)).unwrap_or_else(|_| panic!("{name} seed {seed}"));
            combos += 1;
        }
    }
    assert!(combos >= 100, "only {combos} combinations");
    format!("{combos} layer/loss combinations within rel err 1e-4 at h = 1e-3 (float64)")
}

fn benchmark(shared: &mut Shared) -> String {
    let corpus = shared.work.path().join("bench_corpus");
    let ckpt = shared.work.path().join("bench.ckpt");
    let start = Instant::now();
    cli(&["synth", "--out", p(&corpus)]);
    let synth_s = start.elapsed().as_secs_f64();
    let windows_per_class = CorpusSpec::default().clips_per_cell * CorpusSpec::default().interactions.len();
    assert!(windows_per_class >= 40);
    cli(&["--seed", BENCH_SEED, "train", "--corpus", p(&corpus), "--out", p(&ckpt), "--epochs", BENCH_EPOCHS]);
    shared.bench = Some((corpus.clone(), ckpt.clone()));
    let out = cli(&["eval", "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--split", "val"]);
    let elapsed = start.elapsed();
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = report["class_names"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(names.len(), 10);
    let b = names.iter().position(|&n| n == "blank").unwrap();
    let accuracy = report["accuracy"].as_f64().unwrap();
    let blank = report["normalized"][b][b].as_f64().unwrap();
    let summary = format!(
        "holdout accuracy {accuracy:.4} (limit {BENCH_MIN_ACCURACY}), blank diagonal {blank:.4} (limit {BENCH_MIN_BLANK}), \
         {:.0} s total incl. {synth_s:.0} s synth (limit {} s), seed {BENCH_SEED}",
        elapsed.as_secs_f64(),
        BENCH_BUDGET.as_secs()
    );
    assert!(accuracy >= BENCH_MIN_ACCURACY && blank >= BENCH_MIN_BLANK && elapsed <= BENCH_BUDGET, "{summary}");
    summary
}

fn framing(_: &mut Shared) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    for _ in 0..1000 {
        let len = rng.gen_range(0..10 * 48_000);
        for (w, h) in [(48_000, 48_000), (9600, 1920)] {
            let closed = if len < w { 0 } else { (len - w) / h + 1 };
            assert_eq!(window_count(len, w, h), closed, "len {len}");
            assert_eq!(common::count_windows(len, w, h), closed, "len {len}");
        }
        for (cfg, (w, h)) in [(FramingConfig::CLASSIFICATION, (48_000, 48_000)), (FramingConfig::STREAMING, (9600, 1920))] {
            let s = cfg.in_samples(48_000).unwrap();
            assert_eq!((s.window, s.hop), (w, h));
        }
    }
    let s = FramingConfig::STREAMING.in_samples(48_000).unwrap();
    assert_eq!(5 * (s.window - s.hop), 4 * s.window, "overlap is not 4/5");
    let overlap = FramingConfig::STREAMING.overlap_fraction();
    assert!((overlap - 0.8).abs() < 1e-15);
    format!("1000 random lengths x 2 regimes exact; streaming overlap {overlap} (9600/1920 samples)")
}

fn stream_equivalence(_: &mut Shared) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC5);
    let mut worst = 0.0f64;
    let mut configs = 0;
    while configs < 20 {
        let fs = [16_000u32, 32_000, 44_100, 48_000][rng.gen_range(0..4)];
        let mut features = FeatureConfig::streaming();
        features.n_mels = [16, 32][rng.gen_range(0..2)];
        features.emphasis.enabled = rng.gen_bool(0.5);
        let framing = FramingConfig::new([0.2, 0.25][rng.gen_range(0..2)], [0.04, 0.05, 0.1][rng.gen_range(0..3)]).unwrap();
        if Featurizer::new(features, fs).is_err() {
            continue;
        }
        configs += 1;
        let cfg = StreamConfig {
            setup: FeatureSetup { framing, features },
            queue_capacity: rng.gen_range(1..16),
            drop_policy: DropPolicy::Block,
            ..StreamConfig::default()
        };
        let samples: Vec<f32> = (0..rng.gen_range(fs as usize / 2..2 * fs as usize)).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut file = Vec::new();
        write_wav_to(&AudioClip::new(samples, fs).unwrap(), &mut file).unwrap();
        let mut mels = Vec::new();
        run_stream_with(&file[..], InputFormat::Wav, &cfg, None, |ev| {
            mels.push(ev.mel.clone());
            Ok(())
        })
        .unwrap();
        let clip = read_wav_from(&file[..]).unwrap();
        let featurizer = Featurizer::new(features, fs).unwrap();
        let windows = segment(&clip, &framing).unwrap();
        assert_eq!(mels.len(), windows.len());
        for (m, w) in mels.iter().zip(&windows) {
            let want = featurizer.featurize(w.samples).unwrap().time_average();
            worst = m.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
    }
    assert!(worst <= 1e-6, "max deviation {worst:e}");

    // Throughput: 60 s of 48 kHz audio through featurization and a
    // stream-shaped classifier, with nothing dropped.
    let fs = 48_000;
    let seconds = 60.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<f32> = (0..(seconds * f64::from(fs)) as usize).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let mut file = Vec::new();
    write_wav_to(&AudioClip::new(samples, fs).unwrap(), &mut file).unwrap();
    let setup = FeatureSetup::streaming();
    let classifier = Classifier {
        model: Cnn::new(ModelSpec::compact(10), 1).unwrap(),
        class_names: std::iter::once("blank".to_string()).chain((1..10).map(|i| format!("m{i}"))).collect(),
        blank_id: 0,
        setup,
        featurizer: Featurizer::new(setup.features, fs).unwrap(),
    };
    let cfg = StreamConfig { drop_policy: DropPolicy::Block, ..StreamConfig::default() };
    let start = Instant::now();
    let stats = run_stream(&file[..], InputFormat::Wav, &cfg, Some(&classifier), &mut std::io::sink()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let fps = stats.frames_emitted as f64 / elapsed;
    let rtf = seconds / elapsed;
    assert_eq!(stats.frames_dropped, 0);
    assert!(fps >= 25.0 && rtf >= 5.0, "{fps:.1} frames/s, real-time factor {rtf:.1}");
    format!("20 configs, max deviation {worst:.2e} (limit 1e-6); {fps:.0} frames/s (limit 25), real-time factor {rtf:.1}x (limit 5x)")
}

fn determinism(shared: &mut Shared) -> String {
    let dir = shared.work.path().join("det");
    fs::create_dir_all(&dir).unwrap();
    let mut spec = CorpusSpec { fs: 16_000, clips_per_cell: 3, blank_clips: 6, ..CorpusSpec::default() };
    spec.profiles.retain(|p| ["ceramic_mug", "human_skin", "wooden_table"].contains(&p.name.as_str()));
    let spec_path = dir.join("spec.toml");
    fs::write(&spec_path, spec.to_toml()).unwrap();
    let corpus = dir.join("corpus");
    cli(&["synth", "--spec", p(&spec_path), "--out", p(&corpus)]);
    let (a, b) = (dir.join("a.ckpt"), dir.join("b.ckpt"));
    for out in [&a, &b] {
        cli(&["--seed", "11", "train", "--corpus", p(&corpus), "--out", p(out), "--epochs", "8"]);
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap(), "same seed, different checkpoints");

    let loaded = load_checkpoint(&a).unwrap();
    assert_eq!(loaded.to_bytes().unwrap(), bytes, "save/load is not bit-identical");
    let resaved = dir.join("resaved.ckpt");
    contact_sense::nn::save_checkpoint(&loaded, &resaved).unwrap();
    assert_eq!(fs::read(&resaved).unwrap(), bytes);

    let mut corrupt = bytes.clone();
    let mid = corrupt.len() / 2;
    corrupt[mid] ^= 0x01;
    let rejected = matches!(Checkpoint::from_bytes(&corrupt), Err(CheckpointError::ChecksumMismatch { .. }));
    assert!(rejected, "corrupted checkpoint accepted");
    format!("two seeded train runs byte-identical ({} bytes); round trip exact; flipped byte rejected by checksum", bytes.len())
}

fn blank_rejection(shared: &mut Shared) -> String {
    let (corpus_dir, ckpt_path) = shared.bench.clone().expect("benchmark produced no model");
    let ckpt = load_checkpoint(&ckpt_path).unwrap();
    let classifier = Classifier::from_checkpoint(&ckpt).unwrap();
    let info = Classifier::training_info(&ckpt).unwrap();
    let corpus = featurize_corpus(&scan_corpus(&corpus_dir).unwrap(), &classifier.setup).unwrap();
    let ds = &corpus.dataset;
    let split = stratified_split(&ds.labels(), ds.n_classes(), &ds.class_names, info.config.split_ratio, info.config.seed).unwrap();
    let holdout: Vec<(Vec<f64>, usize)> = split
        .val
        .iter()
        .map(|&i| {
            let (s, label) = &ds.items[i];
            let x = Tensor::from_vec(&[1, 1, s.n_mels, s.n_frames], s.data.iter().map(|&v| v as f32).collect()).unwrap();
            (classifier.model.infer(&x).unwrap().data().iter().map(|&v| f64::from(v)).collect(), *label)
        })
        .collect();
    let blank = classifier.blank_id;
    for (logits, _) in &holdout {
        let p = prediction_from_logits(logits, blank, 0.0);
        assert_eq!(p.is_contact, contact_sense::classify::argmax(logits) != blank);
    }
    let mut rates = Vec::new();
    let mut recalls = Vec::new();
    for step in 0..=20 {
        let tau = f64::from(step) / 20.0;
        let (mut blanks, mut false_contact, mut contacts, mut hits) = (0, 0, 0, 0);
        for (logits, label) in &holdout {
            let c = prediction_from_logits(logits, blank, tau).is_contact;
            if *label == blank {
                blanks += 1;
                false_contact += usize::from(c);
            } else {
                contacts += 1;
                hits += usize::from(c);
            }
        }
        rates.push(false_contact as f64 / blanks as f64);
        recalls.push(hits as f64 / contacts as f64);
    }
    assert!(rates.windows(2).all(|w| w[1] <= w[0]), "false-contact rate rises: {rates:?}");
    format!(
        "tau=0 matches argmax != blank on {} holdout windows; false-contact rate {:.3} -> {:.3}, contact recall {:.3} -> {:.3} over tau 0..1",
        holdout.len(),
        rates[0],
        rates[20],
        recalls[0],
        recalls[20]
    )
}

fn main() {
    let mut shared = Shared { work: tempfile::tempdir().unwrap(), bench: None };
    let criteria: [(&str, fn(&mut Shared) -> String); 7] = [
        ("DSP oracle equivalence", dsp_oracle),
        ("gradient suite", gradients),
        ("desk-scale benchmark", benchmark),
        ("framing arithmetic", framing),
        ("streaming/offline equivalence and throughput", stream_equivalence),
        ("determinism", determinism),
        ("blank rejection", blank_rejection),
    ];
    // Keep panic messages out of the report; they are repeated below.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match catch_unwind(AssertUnwindSafe(|| check(&mut shared))) {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("criterion {}: FAIL  {name}: {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
