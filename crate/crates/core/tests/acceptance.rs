//! Acceptance suite. Every test prints one PASS/FAIL line to stderr and then
//! asserts the verdict. Tests share one CPU lock so the latency measurement
//! and the trained desk pipeline do not compete for cores.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use motion_mask::dataset::*;
use motion_mask::evaluation::*;
use motion_mask::models::*;
use motion_mask::motion::*;
use motion_mask::pipeline::*;
use motion_mask::runtime::*;
use motion_mask::training::{build_normalizer_pairs, normalizer_mse};
use motion_mask::{Frame, Sequence, Weight, Window};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static CPU: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    CPU.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: usize, name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance] criterion {n:>2} {name}: {tag} | {detail}");
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

/// Untrained full-width defense with input statistics from a synthetic corpus.
fn default_bundle() -> ModelBundle<Weight> {
    let corpus = synth_generate(4, 10, 4, 900).unwrap();
    let ds = Dataset::from_recordings(&corpus.manifest, &corpus.recordings, ShortPolicy::PadLastFrame).unwrap();
    let mut b = ModelBundle::default_architecture(7).unwrap();
    b.input_stats = ds.fit_stats().unwrap();
    b
}

fn recordings(n_per_rate: usize, duration_s: f64, seed: u64) -> Vec<Sequence> {
    let mut out = Vec::new();
    for (k, fps) in [30.0, 45.0, 60.0, 72.0].into_iter().enumerate() {
        let cfg = SynthConfig {
            users: n_per_rate,
            activities: 10,
            recordings_per_user: 1,
            seed: seed + k as u64,
            duration_s,
            fps,
            ..Default::default()
        };
        out.extend(synth_generate_with(&cfg).unwrap().recordings.into_iter().map(|r| r.sequence));
    }
    out
}

fn streamed(bundle: &Arc<ModelBundle<Weight>>, seq: &Sequence, noise: &NoiseVector<Weight>) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut resampler = Resampler::new();
    let mut state: Option<StreamState> = None;
    let mut out = Vec::new();
    for f in seq.frames() {
        for g in resampler.push(*f).unwrap() {
            let st = state.get_or_insert_with(|| stream_open(bundle.clone(), &g, Some(noise.clone()), &mut rng).unwrap());
            out.push(stream_step(st, &g).unwrap());
        }
    }
    out
}

fn max_unit_error(frames: &[Frame]) -> f64 {
    frames
        .iter()
        .flat_map(|f| (0..DEVICES).map(move |d| (f.device(d).orientation.norm() - 1.0).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn c01_streaming_matches_batch() {
    let _cpu = serial();
    let t0 = Instant::now();
    let bundle = Arc::new(default_bundle());
    let seqs = recordings(25, 5.0, 300);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst, mut frames, mut length_mismatch) = (0.0f64, 0usize, 0usize);
    for seq in &seqs {
        let noise = NoiseVector::sample(&mut rng, 32);
        let batch = anonymize_recording(seq, &bundle, Some(noise.clone()), &mut rng).unwrap();
        let live = streamed(&bundle, seq, &noise);
        if live.len() != batch.len() {
            length_mismatch += 1;
        }
        for (a, b) in live.iter().zip(batch.frames()) {
            worst = worst.max((a.t - b.t).abs());
            for (x, y) in a.to_row().iter().zip(b.to_row()) {
                worst = worst.max((x - y).abs());
            }
        }
        frames += batch.len();
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        1,
        "streaming/batch equivalence",
        seqs.len() == 100 && worst <= 1e-5 && length_mismatch == 0 && secs <= 120.0,
        format!("{} recordings, {frames} frames, max diff {worst:.2e}, length mismatches {length_mismatch}, {secs:.1}s", seqs.len()),
    );
}

#[test]
fn c02_causality() {
    let _cpu = serial();
    let t0 = Instant::now();
    let b = default_bundle();
    let (anon, norm) = (b.anonymizer().unwrap(), b.normalizer().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut pairs, mut violations) = (0, 0);
    for _ in 0..5 {
        let x = Array2::from_shape_fn((WINDOW_FRAMES, FRAME_DIM), |_| rng.random_range(-2.0f32..2.0));
        let noise = NoiseVector::sample(&mut rng, anon.noise_dim());
        let ya = anonymize_zscored(anon, &b.population_shift, &x.view(), &noise).unwrap();
        let yn = norm.infer(&ya.view()).unwrap();
        for _ in 0..10 {
            let cut = rng.random_range(1..WINDOW_FRAMES);
            let mut xp = x.clone();
            xp.slice_mut(s![cut.., ..]).mapv_inplace(|v| v + rng.random_range(-1.0f32..1.0));
            let mut yap = ya.clone();
            yap.slice_mut(s![cut.., ..]).mapv_inplace(|v| -v + 0.5);
            let pa = anonymize_zscored(anon, &b.population_shift, &xp.view(), &noise).unwrap();
            let pn = norm.infer(&yap.view()).unwrap();
            if pa.slice(s![..cut, ..]) != ya.slice(s![..cut, ..]) || pn.slice(s![..cut, ..]) != yn.slice(s![..cut, ..]) {
                violations += 1;
            }
            pairs += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        2,
        "causality",
        pairs == 50 && violations == 0 && secs <= 60.0,
        format!("{pairs} (window, cut) pairs, {violations} with changed earlier output, {secs:.1}s"),
    );
}

#[test]
fn c03_unit_quaternions() {
    let _cpu = serial();
    let desk = desk();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let untrained = Arc::new(default_bundle());
    let trained = Arc::new(desk.bundle.clone());
    let (mut worst, mut frames) = (0.0f64, 0usize);
    for bundle in [&untrained, &trained] {
        for seq in recordings(3, 4.0, 400) {
            let noise = NoiseVector::sample(&mut rng, 32);
            let batch = anonymize_recording(&seq, bundle, Some(noise.clone()), &mut rng).unwrap();
            let live = streamed(bundle, &seq, &noise);
            worst = worst.max(max_unit_error(batch.frames())).max(max_unit_error(&live));
            frames += batch.len() + live.len();
        }
        for w in desk.eval.windows().iter().take(10) {
            let out = mask_window(bundle, w, &NoiseVector::sample(&mut rng, 32)).unwrap();
            for row in out.view().rows() {
                for d in 0..DEVICES {
                    let q = row.slice(s![7 * d + 3..7 * d + 7]);
                    let n = q.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
                    worst = worst.max((n - 1.0).abs());
                }
                frames += 1;
            }
        }
    }
    verdict(
        3,
        "quaternion validity",
        worst <= 1e-6,
        format!("{frames} frames across batch, streaming and window paths, max |norm - 1| {worst:.2e}"),
    );
}

/// Defense trained on one synthetic corpus, evaluated on a disjoint cohort.
struct Desk {
    bundle: ModelBundle<Weight>,
    /// Motion-space evaluation cohort with session splits.
    eval: Dataset,
    /// Evaluation cohort z-scored with the bundle's statistics.
    eval_z: Dataset,
    train_secs: f64,
}

const HIDDEN: usize = 32;

fn encoder() -> EncoderConfig {
    EncoderConfig { frame_state_dim: HIDDEN, embedding_dim: HIDDEN, ..Default::default() }
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let t0 = Instant::now();
        let corpus = synth_generate(16, 10, 16, 101).unwrap();
        let ds = Dataset::from_recordings(&corpus.manifest, &corpus.recordings, ShortPolicy::PadLastFrame).unwrap();
        let ds = ds.with_manifest(assign_holdout(ds.manifest(), 3, 3, 5).unwrap()).unwrap();
        let stats = ds.subset(Split::Train).unwrap().fit_stats().unwrap();
        let z = ds.zscored(&stats).unwrap();
        let mut cfg = PipelineConfig {
            similarity: encoder(),
            normalizer: NormalizerConfig { state_dim: 64, ..Default::default() },
            action_pairs: PairCounts { train: 300, validation: 60, test: 60 },
            user_pairs: PairCounts { train: 300, validation: 60, test: 60 },
            anonymizer_pairs: PairCounts { train: 200, validation: 40, test: 0 },
            ..Default::default()
        };
        cfg.train.seed = 1;
        cfg.train.batch_size = 4;
        cfg.train.learning_rate = 2e-3;
        cfg.train.pretrain_epochs = 5;
        cfg.epochs = StageEpochs {
            identifier: None,
            action_similarity: Some(10),
            user_similarity: Some(10),
            anonymizer: Some(10),
            normalizer: Some(20),
        };
        let (action, _) = stage_action_similarity(&z, &cfg).unwrap();
        let (user, _) = stage_user_similarity(&z, &cfg).unwrap();
        let (anon, _) = stage_anonymizer(&z, &action, &user, &cfg).unwrap();
        let (shift, norm, _) = stage_normalizer(&z, &anon, &cfg).unwrap();
        let mut bundle = ModelBundle::empty(stats);
        bundle.action_similarity = Some(action);
        bundle.user_similarity = Some(user);
        bundle.anonymizer = Some(anon);
        bundle.population_shift = shift;
        bundle.normalizer = Some(norm);

        let cohort = synth_generate(20, 10, 20, 202).unwrap();
        let eval = Dataset::from_recordings(&cohort.manifest, &cohort.recordings, ShortPolicy::PadLastFrame).unwrap();
        let eval = eval.with_manifest(split_sessions(eval.manifest(), 20, 10, 9).unwrap()).unwrap();
        let eval_z = eval.zscored(&bundle.input_stats).unwrap();
        Desk { bundle, eval, eval_z, train_secs: t0.elapsed().as_secs_f64() }
    })
}

#[test]
fn c04_desk_unlinkability() {
    let _cpu = serial();
    let desk = desk();
    let t0 = Instant::now();
    let mut opts = ScenarioOptions::default();
    opts.classifier = ClassifierConfig { encoder: encoder(), hidden_dense_dims: vec![HIDDEN] };
    opts.train.max_epochs = 40;
    opts.train.early_stop_patience = 10;
    opts.train.batch_size = 4;
    opts.train.learning_rate = 2e-3;
    let grid: Vec<_> = AdversaryScenario::grid().into_iter().filter(|s| s.identifier == IdentifierKind::LstmFunnel).collect();
    let reports = run_scenarios(&grid, &desk.eval, Some(&desk.bundle), &opts).unwrap();
    let acc = |defense, kind| {
        reports
            .iter()
            .find(|r| r.scenario.is_some_and(|s| s.defense == defense && (defense == Defense::None || s.kind == kind)))
            .map(|r| r.per_sample_accuracy)
            .unwrap()
    };
    let unmodified = acc(Defense::None, AdversaryKind::Oblivious);
    let oblivious = acc(Defense::DeepMotionMasking, AdversaryKind::Oblivious);
    let adaptive = acc(Defense::DeepMotionMasking, AdversaryKind::Adaptive);
    verdict(
        4,
        "desk-scale unlinkability",
        unmodified >= 0.90 && oblivious <= 0.10 && adaptive <= 0.15,
        format!(
            "20 users x 10 activities, per-sample accuracy unmodified {:.1}% (>= 90), oblivious {:.1}% (<= 10), adaptive {:.1}% (<= 15), defense training {:.0}s, evaluation {:.0}s",
            100.0 * unmodified,
            100.0 * oblivious,
            100.0 * adaptive,
            desk.train_secs,
            t0.elapsed().as_secs_f64()
        ),
    );
}

fn held_out(desk: &Desk, n: usize) -> Vec<Arc<Window>> {
    desk.eval_z.windows().iter().step_by(desk.eval_z.len() / n).take(n).cloned().collect()
}

#[test]
fn c05_action_preservation() {
    let _cpu = serial();
    let desk = desk();
    let b = &desk.bundle;
    let (anon, norm, action) = (b.anonymizer().unwrap(), b.normalizer().unwrap(), b.action_similarity().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let windows = held_out(desk, 100);
    let (mut same, mut raw_same, mut reference) = (0, 0, 0);
    for w in &windows {
        reference += usize::from(action.score_arrays(&w.view(), &w.view()).unwrap() > 0.5);
        let noise = NoiseVector::sample(&mut rng, anon.noise_dim());
        let raw = anonymize_zscored(anon, &b.population_shift, &w.view(), &noise).unwrap();
        let out = norm.infer(&raw.view()).unwrap();
        same += usize::from(action.score_arrays(&w.view(), &out.view()).unwrap() > 0.5);
        raw_same += usize::from(action.score_arrays(&w.view(), &raw.view()).unwrap() > 0.5);
    }
    let n = windows.len() as f64;
    let rate = same as f64 / n;
    verdict(
        5,
        "action preservation",
        rate >= 0.95,
        format!(
            "{} held-out windows scored same action: deployed output {:.1}% (>= 95), anonymizer output {:.1}%, unmodified input {:.1}%",
            windows.len(),
            100.0 * rate,
            100.0 * raw_same as f64 / n,
            100.0 * reference as f64 / n
        ),
    );
}

#[test]
fn c06_noise_identity_contract() {
    let _cpu = serial();
    let desk = desk();
    let b = &desk.bundle;
    let (anon, user) = (b.anonymizer().unwrap(), b.user_similarity().unwrap());
    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in desk.eval_z.manifest().entries().iter().enumerate() {
        by_user.entry(e.meta.user_id.as_str()).or_default().push(i);
    }
    let users: Vec<&Vec<usize>> = by_user.values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let identity = PopulationShift::identity();
    let (n, mut agree) = (200, 0);
    for k in 0..n {
        let pool = users[rng.random_range(0..users.len())];
        let i = pool[rng.random_range(0..pool.len())];
        let j = loop {
            let j = pool[rng.random_range(0..pool.len())];
            if j != i {
                break j;
            }
        };
        let equal = k % 2 == 0;
        let na = NoiseVector::sample(&mut rng, anon.noise_dim());
        let nb = if equal { na.clone() } else { NoiseVector::sample(&mut rng, anon.noise_dim()) };
        let wa = &desk.eval_z.windows()[i];
        let wb = &desk.eval_z.windows()[j];
        let a = anonymize_zscored(anon, &identity, &wa.view(), &na).unwrap();
        let bb = anonymize_zscored(anon, &identity, &wb.view(), &nb).unwrap();
        let said_same = user.score_arrays(&a.view(), &bb.view()).unwrap() > 0.5;
        agree += usize::from(said_same == equal);
    }
    let rate = agree as f64 / n as f64;
    verdict(
        6,
        "noise-identity contract",
        rate >= 0.85,
        format!("{n} held-out same-user pairs, half with equal noise, agreement {:.1}% (>= 85)", 100.0 * rate),
    );
}

#[test]
fn c07_normalizer_benefit() {
    let _cpu = serial();
    let desk = desk();
    let b = &desk.bundle;
    let windows = held_out(desk, 100);
    let pairs = build_normalizer_pairs(b.anonymizer().unwrap(), &b.population_shift, &windows, 17).unwrap();
    let (before, after) = normalizer_mse(b.normalizer().unwrap(), &pairs).unwrap();
    let factor = before / after;
    verdict(
        7,
        "normalizer benefit",
        factor >= 2.0,
        format!("{} held-out windows, z-scored MSE {before:.4} -> {after:.4}, improvement {factor:.2}x (>= 2)", pairs.len()),
    );
}

fn axis_angle_slerp(q0: Quat<f64>, q1: Quat<f64>, u: f64) -> Quat<f64> {
    let q1 = if q0.dot(q1) < 0.0 { -q1 } else { q1 };
    let r = q0.conjugate() * q1;
    let v = (r.i * r.i + r.j * r.j + r.k * r.k).sqrt();
    if v < 1e-15 {
        return q0;
    }
    let angle = 2.0 * v.atan2(r.w);
    let axis = [r.i / v, r.j / v, r.k / v];
    q0 * Quat::from_axis_angle(axis, u * angle).unwrap()
}

fn random_quat(rng: &mut ChaCha8Rng) -> Quat<f64> {
    loop {
        let q = Quat::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if q.norm() > 0.1 {
            return q.normalized().unwrap();
        }
    }
}

fn chunk_stats_oracle(w: &Window) -> Array2<f64> {
    let mut out = Array2::zeros((WINDOW_FRAMES / 30, 105));
    for k in 0..WINDOW_FRAMES / 30 {
        for c in 0..FRAME_DIM {
            let mut v: Vec<f64> = (0..30).map(|r| w.view()[[30 * k + r, c]] as f64).collect();
            let mean = v.iter().sum::<f64>() / 30.0;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 30.0;
            v.sort_by(f64::total_cmp);
            let stats = [v[0], v[29], mean, var.sqrt(), 0.5 * (v[14] + v[15])];
            for (s, x) in stats.into_iter().enumerate() {
                out[[k, 5 * c + s]] = x;
            }
        }
    }
    out
}

#[test]
fn c08_oracles() {
    let _cpu = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(18);

    let mut slerp_err = 0.0f64;
    for _ in 0..10_000 {
        let (q0, q1, u) = (random_quat(&mut rng), random_quat(&mut rng), rng.random_range(0.0..=1.0));
        let got = slerp_orientation(q0, q1, u).unwrap();
        let want = axis_angle_slerp(q0, q1, u);
        let d = (got - want).norm().min((got + want).norm());
        slerp_err = slerp_err.max(d);
    }

    let mut feat_err = 0.0f64;
    for seed in 0..20 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((WINDOW_FRAMES, FRAME_DIM), |_| r.random_range(-3.0f32..3.0));
        let w = NormalizedWindow::from_zscored(data).unwrap();
        let got = featurize_summary_stats(&w);
        let want = chunk_stats_oracle(&w);
        feat_err = feat_err.max((&got - &want).mapv(f64::abs).fold(0.0, |a, &b| a.max(b)));
    }

    let mut agg_mismatch = 0;
    for _ in 0..200 {
        let (n, classes, users) = (rng.random_range(1..60), rng.random_range(2..8), rng.random_range(1..6));
        let lp: Vec<Vec<f64>> = (0..n).map(|_| (0..classes).map(|_| -rng.random_range(0.0..10.0)).collect()).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..users)).collect();
        let got = aggregate_per_user(&lp, &truth);
        let mut want = Vec::new();
        for u in 0..users {
            let rows: Vec<&Vec<f64>> = lp.iter().zip(&truth).filter(|(_, &t)| t == u).map(|(r, _)| r).collect();
            if rows.is_empty() {
                continue;
            }
            let sums: Vec<f64> = (0..classes).map(|c| rows.iter().fold(0.0, |a, r| a + r[c])).collect();
            let best = (0..classes).fold(0, |b, c| if sums[c] > sums[b] { c } else { b });
            want.push((u, best));
        }
        agg_mismatch += usize::from(got != want);
    }

    let corpus = synth_generate(3, 10, 3, 19).unwrap();
    let ds = Dataset::from_recordings(&corpus.manifest, &corpus.recordings, ShortPolicy::PadLastFrame).unwrap();
    let stats = ds.fit_stats().unwrap();
    let mut z_err = 0.0f64;
    for w in ds.windows() {
        let back = zscore_invert(&zscore_apply(w, &stats).unwrap(), &stats).unwrap();
        z_err = z_err.max((&back - w.data()).mapv(|v| (v as f64).abs()).fold(0.0, |a, &b| a.max(b)));
    }

    let secs = t0.elapsed().as_secs_f64();
    verdict(
        8,
        "oracle equivalences",
        slerp_err <= 1e-7 && feat_err <= 1e-9 && agg_mismatch == 0 && z_err <= 1e-6 && secs <= 60.0,
        format!(
            "slerp {slerp_err:.1e} (<= 1e-7), featurizer {feat_err:.1e} (<= 1e-9), aggregation mismatches {agg_mismatch} (exact), z-score round trip {z_err:.1e} (<= 1e-6), {secs:.1}s"
        ),
    );
}

#[test]
fn c09_latency() {
    let _cpu = serial();
    let bundle = Arc::new(default_bundle());
    let source = recordings(1, 10.0, 500).swap_remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let r = benchmark_latency(bundle, &source, 3000, &mut rng).unwrap();
    verdict(
        9,
        "stream_step latency",
        r.mean_ms <= 5.0 && r.p99_ms <= 15.0,
        format!("default bundle, {} frames, mean {:.3} ms (<= 5), p99 {:.3} ms (<= 15), max {:.3} ms", r.frames, r.mean_ms, r.p99_ms, r.max_ms),
    );
}

#[test]
fn c10_parameter_budget() {
    let _cpu = serial();
    let r = ModelBundle::<Weight>::default_architecture(0).unwrap().parameter_report();
    let within = |n: usize, target: f64| (n as f64 - target).abs() <= 0.2 * target;
    verdict(
        10,
        "architecture budget",
        within(r.system_total, 2.2e6) && within(r.anonymizer, 65e3) && within(r.normalizer, 290e3),
        format!(
            "total {} (2.2M +-20%), anonymizer {} (65k +-20%), normalizer {} (290k +-20%), similarity {} + {}",
            r.system_total, r.anonymizer, r.normalizer, r.action_similarity, r.user_similarity
        ),
    );
}
