use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use motion_mask::dataset::{
    assign_holdout, read_recording, recording_files, split_sessions, synth_generate, synth_generate_with,
    write_corpus, write_recording, Dataset, Manifest, Recording, Split, SynthConfig,
};
use motion_mask::evaluation::{
    emit_report, run_scenarios, trajectory_deviation, AdversaryKind, AdversaryScenario, Defense, EvaluationReport,
    IdentifierKind,
};
use motion_mask::models::ModelBundle;
use motion_mask::motion::{resample, ShortPolicy, TARGET_FPS};
use motion_mask::persist::write_atomic;
use motion_mask::pipeline::{
    stage_action_similarity, stage_anonymizer, stage_identifier, stage_normalizer, stage_user_similarity,
};
use motion_mask::runtime::{anonymize_recording, benchmark_latency, stream_open, Resampler, StreamState};
use motion_mask::training::TrainReport;
use motion_mask::{dataset, Error, Result, Weight};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::CliConfig;
use crate::{
    AnonymizeArgs, BenchArgs, Cli, Command, DefenseChoice, EvaluateArgs, IdentifierChoice, KindChoice, IngestArgs, ReportArgs, StageKind,
    StreamArgs, SynthArgs, TrainArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = CliConfig::load(cli.config.as_deref())?.with_overrides(&cli.set)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.propagate_seed();
    match cli.command {
        Command::Synth(a) => synth(&cfg, a),
        Command::Ingest(a) => ingest(&cfg, a),
        Command::Train { stage } => {
            let (kind, args) = stage.split();
            train(cfg, kind, args)
        }
        Command::Anonymize(a) => anonymize(&cfg, a),
        Command::Stream(a) => stream(&cfg, a),
        Command::Evaluate(a) => evaluate(cfg, a),
        Command::Bench(a) => bench(&cfg, a),
        Command::Report(a) => report(a),
    }
}

fn required(p: Option<PathBuf>, fallback: Option<&PathBuf>, flag: &str) -> Result<PathBuf> {
    p.or_else(|| fallback.cloned())
        .ok_or_else(|| Error::Usage(format!("missing --{flag} (or set it under [paths] in the config)")))
}

fn must_exist(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{} does not exist", p.display())))
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| Error::io(d, e)),
        _ => Ok(()),
    }
}

fn synth(cfg: &CliConfig, a: SynthArgs) -> Result<()> {
    let defaults = SynthConfig::default();
    let sc = SynthConfig {
        users: a.users,
        activities: a.activities,
        recordings_per_user: a.recordings,
        seed: cfg.seed,
        world_seed: a.world_seed.unwrap_or(defaults.world_seed),
        duration_s: a.duration,
        fps: a.fps,
    };
    let corpus = synth_generate_with(&sc)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let m = write_corpus(&a.out, &corpus)?;
    println!("wrote {} recordings for {} users to {}", m.len(), m.users().len(), a.out.display());
    Ok(())
}

fn ingest(cfg: &CliConfig, a: IngestArgs) -> Result<()> {
    let dir = required(a.data, cfg.paths.data.as_ref(), "data")?;
    must_exist(&dir)?;
    let outcome = dataset::ingest(&dir)?;
    for i in &outcome.issues {
        eprintln!("rejected {i}");
    }
    let rejected = outcome.issues.len();
    let m = if a.strict { outcome.strict()? } else { outcome.manifest };
    if m.is_empty() {
        return Err(Error::InvalidInput(format!("no valid recordings in {}", dir.display())));
    }
    let m = assign_holdout(&m, a.validation, a.test, cfg.seed)?;
    ensure_parent(&a.out)?;
    m.save(&a.out)?;
    println!(
        "manifest {}: {} recordings, {} users, {rejected} rejected",
        a.out.display(),
        m.len(),
        m.users().len()
    );
    Ok(())
}

fn apply_train_flags(cfg: &mut CliConfig, kind: StageKind, a: &TrainArgs) {
    let p = &mut cfg.pipeline;
    let t = &mut p.train;
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.patience {
        t.early_stop_patience = v;
    }
    if let Some(v) = a.lr_patience {
        t.lr_patience = v;
    }
    if let Some(v) = a.lr_decay {
        t.lr_decay = v;
    }
    if let Some(v) = a.lr_floor {
        t.lr_floor = v;
    }
    if let Some(v) = a.clip_norm {
        t.clip_norm = (v > 0.0).then_some(v);
    }
    if let Some(v) = a.alpha {
        t.alpha_action = v;
    }
    if let Some(v) = a.beta {
        t.beta_user = v;
    }
    if let Some(v) = a.pretrain_epochs {
        t.pretrain_epochs = v;
    }
    if let Some(h) = a.hidden {
        for enc in [&mut p.similarity, &mut p.identifier.encoder] {
            enc.frame_state_dim = h;
            enc.embedding_dim = h;
        }
    }
    if let Some(h) = a.normalizer_state {
        p.normalizer.state_dim = h;
    }
    let e = &mut p.epochs;
    let slot = match kind {
        StageKind::Identifier => &mut e.identifier,
        StageKind::ActionSim => &mut e.action_similarity,
        StageKind::UserSim => &mut e.user_similarity,
        StageKind::Anonymizer => &mut e.anonymizer,
        StageKind::Normalizer => &mut e.normalizer,
    };
    if a.epochs.is_some() {
        *slot = a.epochs;
    }
    if let Some(n) = a.pairs {
        match kind {
            StageKind::ActionSim => p.action_pairs.train = n,
            StageKind::UserSim => p.user_pairs.train = n,
            StageKind::Anonymizer => p.anonymizer_pairs.train = n,
            _ => {}
        }
    }
}

fn stage_name(kind: StageKind) -> &'static str {
    match kind {
        StageKind::Identifier => "identifier",
        StageKind::ActionSim => "action-sim",
        StageKind::UserSim => "user-sim",
        StageKind::Anonymizer => "anonymizer",
        StageKind::Normalizer => "normalizer",
    }
}

fn train(mut cfg: CliConfig, kind: StageKind, a: &TrainArgs) -> Result<()> {
    apply_train_flags(&mut cfg, kind, a);
    cfg.pipeline.train.validate()?;
    let default_manifest = cfg.paths.data.as_ref().map(|d| d.join("manifest.json"));
    let manifest_path = required(a.manifest.clone(), default_manifest.as_ref(), "manifest")?;
    let bundle_path = required(a.bundle.clone(), cfg.paths.bundle.as_ref(), "bundle")?;
    must_exist(&manifest_path)?;
    let manifest = Manifest::load(&manifest_path)?;
    if manifest.indices_in(Split::Train).is_empty() {
        return Err(Error::Usage(format!(
            "{} has no training split; run `motionmask ingest` to assign one",
            manifest_path.display()
        )));
    }
    let existing = if bundle_path.exists() { Some(ModelBundle::<Weight>::load(&bundle_path)?) } else { None };
    let missing = |what: &str, cmd: &str| {
        Error::Config(format!("{what} not found in {}; run `motionmask train {cmd}` first", bundle_path.display()))
    };
    match kind {
        StageKind::Anonymizer => {
            let b = existing.as_ref().ok_or_else(|| missing("similarity models", "action-sim"))?;
            b.action_similarity()?;
            b.user_similarity()?;
        }
        StageKind::Normalizer => {
            existing.as_ref().ok_or_else(|| missing("anonymizer", "anonymizer"))?.anonymizer()?;
        }
        _ => {}
    }
    ensure_parent(&bundle_path)?;
    let ds = Dataset::load(&manifest, ShortPolicy::PadLastFrame)?;
    let mut bundle = match existing {
        Some(b) => b,
        None => ModelBundle::empty(ds.subset(Split::Train)?.fit_stats()?),
    };
    let z = ds.zscored(&bundle.input_stats)?;
    let p = &cfg.pipeline;
    let reports: Vec<TrainReport> = match kind {
        StageKind::Identifier => {
            let (m, r) = stage_identifier(&z, p)?;
            bundle.classifier = Some(m);
            vec![r]
        }
        StageKind::ActionSim => {
            let (m, r) = stage_action_similarity(&z, p)?;
            bundle.action_similarity = Some(m);
            vec![r]
        }
        StageKind::UserSim => {
            let (m, r) = stage_user_similarity(&z, p)?;
            bundle.user_similarity = Some(m);
            vec![r]
        }
        StageKind::Anonymizer => {
            let (m, r) = stage_anonymizer(&z, bundle.action_similarity()?, bundle.user_similarity()?, p)?;
            bundle.anonymizer = Some(m);
            r
        }
        StageKind::Normalizer => {
            let (shift, m, r) = stage_normalizer(&z, bundle.anonymizer()?, p)?;
            bundle.population_shift = shift;
            bundle.normalizer = Some(m);
            vec![r]
        }
    };
    bundle.save(&bundle_path)?;
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut s = bundle_path.clone().into_os_string();
        s.push(format!(".{}.json", stage_name(kind)));
        PathBuf::from(s)
    });
    ensure_parent(&report_path)?;
    write_atomic(&report_path, &serde_json::to_vec_pretty(&reports)?)?;
    for r in &reports {
        println!("{}", r.summary());
    }
    Ok(())
}

fn load_bundle(cfg: &CliConfig, p: Option<PathBuf>) -> Result<ModelBundle<Weight>> {
    let path = required(p, cfg.paths.bundle.as_ref(), "bundle")?;
    must_exist(&path)?;
    ModelBundle::load(&path)
}

fn read(path: &Path) -> Result<Recording> {
    read_recording(path).map_err(|i| Error::Ingest(vec![i]))
}

fn anonymize(cfg: &CliConfig, a: AnonymizeArgs) -> Result<()> {
    must_exist(&a.input)?;
    let bundle = load_bundle(cfg, a.bundle)?;
    bundle.anonymizer()?;
    bundle.normalizer()?;
    let jobs: Vec<(PathBuf, PathBuf)> = if a.input.is_dir() {
        std::fs::create_dir_all(&a.output).map_err(|e| Error::io(&a.output, e))?;
        recording_files(&a.input)?
            .into_iter()
            .map(|p| {
                let out = a.output.join(p.file_name().expect("file name"));
                (p, out)
            })
            .collect()
    } else {
        ensure_parent(&a.output)?;
        vec![(a.input.clone(), a.output.clone())]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for (src, dst) in &jobs {
        let r = read(src)?;
        let sequence = anonymize_recording(&r.sequence, &bundle, None, &mut rng)?;
        write_recording(dst, &Recording { meta: r.meta, sequence })?;
    }
    println!("anonymized {} recording(s)", jobs.len());
    Ok(())
}

fn stream(cfg: &CliConfig, a: StreamArgs) -> Result<()> {
    let bundle = Arc::new(load_bundle(cfg, a.bundle)?);
    bundle.anonymizer()?;
    bundle.normalizer()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut state: Option<StreamState> = None;
    let mut resampler = a.resample.then(Resampler::new);
    for (n, line) in stdin.lock().lines().enumerate() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = dataset::parse_frame(&line)
            .map_err(|e| Error::InvalidInput(format!("stdin line {}: {e}", n + 1)))?;
        let frames = match resampler.as_mut() {
            Some(r) => r.push(frame)?,
            None => vec![frame],
        };
        for f in frames {
            let st = match state.as_mut() {
                Some(s) => s,
                None => state.insert(stream_open(bundle.clone(), &f, None, &mut rng)?),
            };
            let y = st.step(&f)?;
            writeln!(out, "{}", dataset::format_frame(&y)).map_err(|e| Error::io("<stdout>", e))?;
            out.flush().map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    if let Some(s) = state.as_mut() {
        s.close();
    }
    Ok(())
}

fn evaluate(mut cfg: CliConfig, a: EvaluateArgs) -> Result<()> {
    let default_manifest = cfg.paths.data.as_ref().map(|d| d.join("manifest.json"));
    let manifest_path = required(a.manifest, default_manifest.as_ref(), "manifest")?;
    let out = required(a.out, cfg.paths.reports.as_ref(), "out")?;
    must_exist(&manifest_path)?;
    let scenarios: Vec<AdversaryScenario> = AdversaryScenario::grid()
        .into_iter()
        .filter(|s| match a.identifier {
            IdentifierChoice::Lstm => s.identifier == IdentifierKind::LstmFunnel,
            IdentifierChoice::Forest => s.identifier == IdentifierKind::SummaryStatsTabular,
            IdentifierChoice::All => true,
        })
        .filter(|s| match a.defense {
            DefenseChoice::None => s.defense == Defense::None,
            DefenseChoice::Masking => s.defense == Defense::DeepMotionMasking,
            DefenseChoice::All => true,
        })
        .filter(|s| match a.kind {
            _ if s.defense == Defense::None => true,
            KindChoice::Oblivious => s.kind == AdversaryKind::Oblivious,
            KindChoice::Adaptive => s.kind == AdversaryKind::Adaptive,
            KindChoice::All => true,
        })
        .collect();
    let bundle = load_bundle(&cfg, a.bundle)?;
    bundle.anonymizer()?;
    bundle.normalizer()?;
    let ev = &mut cfg.evaluation;
    if let Some(u) = a.users {
        ev.users = u;
    }
    if let Some(k) = a.per_session {
        ev.per_session = k;
    }
    if let Some(e) = a.epochs {
        ev.scenario.train.max_epochs = e;
    }
    if let Some(t) = a.trees {
        ev.scenario.forest.trees = t;
    }
    if let Some(h) = a.hidden {
        ev.scenario.classifier.encoder.frame_state_dim = h;
        ev.scenario.classifier.encoder.embedding_dim = h;
    }
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let manifest = Manifest::load(&manifest_path)?;
    let manifest = split_sessions(&manifest, ev.users, ev.per_session, cfg.seed)?;
    let ds = Dataset::load(&manifest, ShortPolicy::PadLastFrame)?;
    let reports = run_scenarios(&scenarios, &ds, Some(&bundle), &ev.scenario)?;
    let deviation = match manifest.indices_in(Split::Session2).first() {
        Some(&i) => {
            let r = read(&manifest.entries()[i].path)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let masked = anonymize_recording(&r.sequence, &bundle, None, &mut rng)?;
            let original = if r.sequence.len() >= 2 { resample(&r.sequence, TARGET_FPS)? } else { r.sequence };
            Some(trajectory_deviation(&original, &masked)?)
        }
        None => None,
    };
    let report = EvaluationReport { scenarios: reports, ablation: Vec::new(), deviation };
    let (json, md) = emit_report(&report, &out)?;
    print!("{}", report.to_markdown());
    println!("\nwrote {} and {}", json.display(), md.display());
    Ok(())
}

fn bench(cfg: &CliConfig, a: BenchArgs) -> Result<()> {
    let bundle = if a.default_architecture {
        let mut b = ModelBundle::default_architecture(cfg.seed)?;
        b.classifier = None;
        b
    } else {
        load_bundle(cfg, a.bundle)?
    };
    let source = match &a.source {
        Some(p) => read(p)?.sequence,
        None => synth_generate(1, 1, 1, cfg.seed)?.recordings.remove(0).sequence,
    };
    let frames = a.frames.unwrap_or(cfg.runtime.bench_frames);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = benchmark_latency(Arc::new(bundle), &source, frames, &mut rng)?;
    let text = serde_json::to_string_pretty(&r)?;
    println!("{text}");
    let ok = r.mean_ms <= cfg.runtime.mean_budget_ms && r.p99_ms <= cfg.runtime.p99_budget_ms;
    eprintln!(
        "mean {:.3} ms (budget {}), p99 {:.3} ms (budget {}): {}",
        r.mean_ms,
        cfg.runtime.mean_budget_ms,
        r.p99_ms,
        cfg.runtime.p99_budget_ms,
        if ok { "within budget" } else { "over budget" }
    );
    if let Some(p) = a.out {
        ensure_parent(&p)?;
        write_atomic(&p, text.as_bytes())?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    must_exist(&a.input)?;
    let text = std::fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let md = EvaluationReport::from_json(&text)?.to_markdown();
    match a.output {
        Some(p) => {
            ensure_parent(&p)?;
            write_atomic(&p, md.as_bytes())
        }
        None => {
            print!("{md}");
            Ok(())
        }
    }
}
