use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use contact_sense::audio_io::read_wav;
use contact_sense::classify::{
    evaluate, featurize_corpus, scan_corpus, stratified_split, train_with, Classifier, FeatureSetup, TrainConfig,
};
use contact_sense::features::write_melf_record;
use contact_sense::framing::segment;
use contact_sense::nn::{load_checkpoint, save_checkpoint, ModelSpec};
use contact_sense::stream::{round_sig6, run_stream, InputFormat, StreamConfig};
use contact_sense::synth::{generate_corpus, CorpusSpec};
use serde_json::json;

use crate::{ClassifyArgs, EvalArgs, FeatureMode, FeaturizeArgs, Globals, SplitArg, StreamArgs, SynthArgs, TrainArgs};

fn setup_for(mode: FeatureMode, n_mels: Option<usize>) -> FeatureSetup {
    let mut setup = match mode {
        FeatureMode::Classify => FeatureSetup::classification(),
        FeatureMode::Stream => FeatureSetup::streaming(),
    };
    if let Some(n) = n_mels {
        setup.features.n_mels = n;
    }
    setup
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn synth(g: &Globals, a: SynthArgs) -> Result<()> {
    let spec_path = a.spec.or_else(|| g.file.synth.spec.clone());
    let mut spec = match &spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading corpus spec {}", p.display()))?;
            CorpusSpec::from_toml(&text).with_context(|| format!("corpus spec {}", p.display()))?
        }
        None => CorpusSpec::default(),
    };
    if let Some(seed) = g.seed {
        spec.master_seed = seed;
    }
    eprintln!(
        "synth: fs={} clip_duration_s={} clips_per_cell={} blank_clips={} master_seed={} interactions={:?} profiles={} jitter={:?}",
        spec.fs,
        spec.clip_duration_s,
        spec.clips_per_cell,
        spec.blank_clips,
        spec.master_seed,
        spec.interactions.iter().map(|k| k.name()).collect::<Vec<_>>(),
        spec.profiles.len(),
        spec.jitter
    );
    let manifest = generate_corpus(&spec, &a.out).with_context(|| format!("writing corpus to {}", a.out.display()))?;
    let mut per_class: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &manifest {
        *per_class.entry(e.class.as_str()).or_default() += 1;
    }
    print_json(&json!({
        "out_dir": a.out.display().to_string(),
        "files": manifest.len(),
        "classes": per_class,
    }))
}

pub fn featurize(g: &Globals, a: FeaturizeArgs) -> Result<()> {
    let setup = setup_for(a.features.unwrap_or(FeatureMode::Classify), a.n_mels);
    eprintln!("featurize: {}", serde_json::to_string(&setup)?);
    let entries = scan_corpus(&a.corpus).with_context(|| format!("scanning {}", a.corpus.display()))?;
    let corpus = featurize_corpus(&entries, &setup)?;
    let mut out = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    for (spec, _) in &corpus.dataset.items {
        write_melf_record(&mut out, spec, setup.features.eps_floor)?;
    }
    out.flush()?;
    let labels_path = sidecar(&a.out, "labels.csv");
    let mut labels = csv::Writer::from_path(&labels_path)?;
    labels.write_record(["index", "path", "start_sample", "class"])?;
    for (i, (origin, (_, c))) in corpus.origins.iter().zip(&corpus.dataset.items).enumerate() {
        labels.write_record([
            i.to_string(),
            origin.path.display().to_string(),
            origin.start_sample.to_string(),
            corpus.dataset.class_names[*c].clone(),
        ])?;
    }
    labels.flush()?;
    if g.verbose {
        eprintln!("featurize: wrote {} and {}", a.out.display(), labels_path.display());
    }
    let (n_mels, n_frames) = corpus.dataset.input_shape().unwrap_or((0, 0));
    print_json(&json!({
        "windows": corpus.dataset.len(),
        "n_mels": n_mels,
        "n_frames": n_frames,
        "sample_rate_hz": corpus.sample_rate_hz,
        "featurization_digest": corpus.digest,
        "class_names": corpus.dataset.class_names,
    }))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

pub fn train(g: &Globals, a: TrainArgs) -> Result<()> {
    let t = &g.file.train;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        lr: a.lr.or(t.lr).unwrap_or(defaults.lr),
        batch_size: a.batch_size.or(t.batch_size).unwrap_or(defaults.batch_size),
        epochs: a.epochs.or(t.epochs).unwrap_or(defaults.epochs),
        split_ratio: a.split_ratio.or(t.split_ratio).unwrap_or(defaults.split_ratio),
        seed: g.seed.unwrap_or(defaults.seed),
        shuffle_each_epoch: true,
    };
    cfg.validate()?;
    let mode = a.features.or(t.features).unwrap_or(FeatureMode::Classify);
    let setup = setup_for(mode, a.n_mels.or(t.n_mels));
    let f = &setup.features;
    eprintln!(
        "train: lr={} batch_size={} epochs={} split_ratio={} seed={} features={:?} n_mels={} n_fft={} hop_length={} f_min_hz={} emphasis={} window_s={} hop_s={}",
        cfg.lr,
        cfg.batch_size,
        cfg.epochs,
        cfg.split_ratio,
        cfg.seed,
        mode,
        f.n_mels,
        f.stft.n_fft,
        f.stft.hop_length,
        f.f_min_hz,
        f.emphasis.enabled,
        setup.framing.window_len_s,
        setup.framing.hop_s
    );

    let entries = scan_corpus(&a.corpus).with_context(|| format!("scanning {}", a.corpus.display()))?;
    let corpus = featurize_corpus(&entries, &setup)?;
    let ds = &corpus.dataset;
    if ds.n_classes() < 2 {
        bail!("corpus has {} class(es); training needs at least 2", ds.n_classes());
    }
    eprintln!(
        "train: {} windows, {} classes {:?}, input {:?}, digest {}",
        ds.len(),
        ds.n_classes(),
        ds.class_names,
        ds.input_shape().unwrap_or((0, 0)),
        corpus.digest
    );
    let spec = ModelSpec::compact(ds.n_classes());
    let verbose = g.verbose;
    let outcome = train_with(ds, spec, &cfg, |r| {
        if verbose {
            eprintln!("epoch {:>5}  loss {:.6}  val_acc {:.4}", r.epoch, r.train_loss, r.val_accuracy);
        }
    })?;

    let ckpt = Classifier::checkpoint(&outcome, &corpus, &setup, &cfg);
    save_checkpoint(&ckpt, &a.out).with_context(|| format!("writing checkpoint {}", a.out.display()))?;
    let history_path = a.history.unwrap_or_else(|| sidecar(&a.out, "history.json"));
    let history = json!({
        "train_config": cfg,
        "featurization_digest": corpus.digest,
        "best_epoch": outcome.best_epoch,
        "best_val_accuracy": outcome.best_val_accuracy,
        "history": outcome.history,
    });
    std::fs::write(&history_path, serde_json::to_string_pretty(&history)? + "\n")
        .with_context(|| format!("writing {}", history_path.display()))?;
    print_json(&json!({
        "checkpoint": a.out.display().to_string(),
        "history": history_path.display().to_string(),
        "epochs": outcome.history.len(),
        "best_epoch": outcome.best_epoch,
        "best_val_accuracy": outcome.best_val_accuracy,
        "train_windows": outcome.split.train.len(),
        "val_windows": outcome.split.val.len(),
    }))
}

fn load_classifier(path: &Path) -> Result<(Classifier, contact_sense::nn::Checkpoint)> {
    let ckpt = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let classifier = Classifier::from_checkpoint(&ckpt)?;
    Ok((classifier, ckpt))
}

pub fn eval(g: &Globals, a: EvalArgs) -> Result<()> {
    let (classifier, ckpt) = load_classifier(&a.checkpoint)?;
    let entries = scan_corpus(&a.corpus).with_context(|| format!("scanning {}", a.corpus.display()))?;
    let corpus = featurize_corpus(&entries, &classifier.setup)?;
    classifier.ensure_digest(&corpus.digest)?;
    if corpus.dataset.class_names != classifier.class_names {
        bail!("corpus classes {:?} differ from checkpoint classes {:?}", corpus.dataset.class_names, classifier.class_names);
    }
    let ds = match a.split {
        SplitArg::All => corpus.dataset.clone(),
        split => {
            let info = Classifier::training_info(&ckpt).context("checkpoint lacks training metadata; use --split all")?;
            let seed = g.seed.unwrap_or(info.config.seed);
            let s = stratified_split(&corpus.dataset.labels(), corpus.dataset.n_classes(), &corpus.dataset.class_names, info.config.split_ratio, seed)?;
            corpus.dataset.subset(if split == SplitArg::Train { &s.train } else { &s.val })
        }
    };
    let evaluation = evaluate(&classifier.model, &ds)?;
    let report = evaluation.report(&classifier.class_names);
    let text = serde_json::to_string(&report)?;
    if let Some(p) = &a.report {
        std::fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    println!("{text}");
    eprintln!("accuracy {:.4} over {} windows", evaluation.accuracy, ds.len());
    eprint!("{}", evaluation.confusion.render_table(&classifier.class_names));
    Ok(())
}

pub fn classify(g: &Globals, a: ClassifyArgs) -> Result<()> {
    let (classifier, _) = load_classifier(&a.checkpoint)?;
    let tau = a.tau.or(g.file.classify.tau).unwrap_or(0.5);
    let clip = read_wav(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    if clip.sample_rate_hz != classifier.featurizer.sample_rate() {
        bail!(
            "{} is at {} Hz but the checkpoint expects {} Hz",
            a.input.display(),
            clip.sample_rate_hz,
            classifier.featurizer.sample_rate()
        );
    }
    let mut out = io::stdout().lock();
    for (i, w) in segment(&clip, &classifier.setup.framing)?.into_iter().enumerate() {
        let spec = classifier.featurizer.featurize(w.samples)?;
        let p = classifier.predict(&spec, tau)?;
        let line = json!({
            "window": i,
            "start_s": round_sig6(w.start_sample as f64 / f64::from(clip.sample_rate_hz)),
            "class": classifier.class_names[p.class_id],
            "probs": p.probs.iter().map(|&v| round_sig6(v)).collect::<Vec<_>>(),
            "contact": p.is_contact,
        });
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn stream(g: &Globals, a: StreamArgs) -> Result<()> {
    let s = &g.file.stream;
    let mut cfg = StreamConfig::default();
    if let Some(n) = a.n_mels.or(s.n_mels) {
        cfg.setup.features.n_mels = n;
    }
    if a.no_emphasis || s.emphasis == Some(false) {
        cfg.setup.features.emphasis.enabled = false;
    }
    cfg.queue_capacity = a.queue_capacity.or(s.queue_capacity).unwrap_or(cfg.queue_capacity);
    cfg.drop_policy = a.drop_policy.map(Into::into).or(s.drop_policy).unwrap_or(cfg.drop_policy);
    cfg.tau = a.tau.or(s.tau).unwrap_or(cfg.tau);
    cfg.full_matrix = a.full_matrix || s.full_matrix.unwrap_or(false);
    let format = if a.raw {
        let rate = a.sample_rate.or(s.sample_rate).context("--raw input needs --sample-rate")?;
        InputFormat::Raw { sample_rate_hz: rate }
    } else {
        InputFormat::Wav
    };
    eprintln!("stream: {}", serde_json::to_string(&cfg)?);

    let classifier = match &a.checkpoint {
        Some(p) => Some(load_classifier(p)?.0),
        None => None,
    };
    let source: Box<dyn Read + Send> = if a.input == "-" {
        Box::new(io::stdin())
    } else {
        Box::new(File::open(&a.input).with_context(|| format!("opening {}", a.input))?)
    };
    let mut out = io::stdout().lock();
    let stats = run_stream(source, format, &cfg, classifier.as_ref(), &mut out)?;
    out.flush()?;
    eprintln!("{}", serde_json::to_string(&stats)?);
    Ok(())
}
