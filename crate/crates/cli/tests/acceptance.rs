//! Acceptance criteria, one line of output each. Runs without the libtest
//! harness so the verdicts always reach stdout.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;
use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ahtn_core::action::{AnomalyKind, FeedbackEvent, ReferenceTrajectory, TrajectoryParams, TrajectoryTracker};
use ahtn_core::bundled::{fixture_dir, ALL, HYDROMETER};
use ahtn_core::engine::{aggregate, score_recording, EngineConfig, TaskStatus};
use ahtn_core::eval::{kendall, pearson, spearman, KendallVariant};
use ahtn_core::model::{
    parse_network, validate_network, CheckKind, CheckSpec, TaskNetwork, DEFAULT_COLLISION_PENALTY,
};
use ahtn_core::synth::{throughput_session, Body, FRAME_RATE};
use ahtn_core::task_assessment::{attachment_score, collision_score};
use ahtn_core::telemetry::{Event, Payload, SkeletonStats, TaskSlice};
use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn cli(args: &[&str], stdin: &[u8]) -> (i32, String, String) {
    let mut input = Cursor::new(stdin.to_vec());
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["ahtn"];
    argv.extend_from_slice(args);
    let code = ahtn_cli::run(argv, &mut input, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn self_replay() -> Outcome {
    let mut worst = Duration::ZERO;
    for f in ALL {
        let t = Instant::now();
        let report = score_recording(&f.task_network(), &f.references(), &EngineConfig::default(), &f.reference_recording())
            .map_err(|e| format!("{}: {e}", f.name))?;
        worst = worst.max(t.elapsed());
        for scope in &report.scopes {
            for task in &scope.tasks {
                ensure!(task.status == TaskStatus::Scored, "{} {}: {:?}", f.name, task.task, task.status);
                for m in &task.members {
                    if let Some(tl) = &m.task_level {
                        ensure!(tl.omega == 1.0, "{} {} task-level {}", f.name, task.task, tl.omega);
                    }
                    if let Some(tr) = &m.trajectory {
                        ensure!(tr.score == 1.0 && tr.missed == 0, "{} {} trajectory {} missed {}", f.name, task.task, tr.score, tr.missed);
                    }
                }
                ensure!(task.omega == 1.0, "{} {} omega {}", f.name, task.task, task.omega);
            }
            if scope.weight_total > 0.0 {
                ensure!(scope.delta == Some(1.0), "{} {} delta {:?}", f.name, scope.scope, scope.delta);
            }
        }
    }
    ensure!(worst < Duration::from_secs(5), "slowest fixture took {worst:?}");
    Ok(format!("both fixtures score 1.0, slowest {:.1} ms", worst.as_secs_f64() * 1e3))
}

fn aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max_err = 0.0f64;
    let mut max_scale_err = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=20);
        let mut w: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..10.0) }).collect();
        if w.iter().all(|&x| x == 0.0) {
            w[0] = 1.0;
        }
        let o: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let dot: f64 = w.iter().zip(&o).map(|(a, b)| a * b).sum();
        let oracle = dot / w.iter().sum::<f64>();
        let got = aggregate(&w, &o).map_err(|e| e.to_string())?;
        max_err = max_err.max((got - oracle).abs());
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
        let again = aggregate(&scaled, &o).map_err(|e| e.to_string())?;
        max_scale_err = max_scale_err.max((again - got).abs());
    }
    ensure!(max_err <= 1e-12, "max oracle error {max_err:e}");
    ensure!(max_scale_err <= 1e-12, "max scaling error {max_scale_err:e}");
    Ok(format!("10000 vectors, max error {max_err:.1e}, scaling {max_scale_err:.1e}"))
}

fn collisions() -> Outcome {
    let spec = CheckSpec::new(CheckKind::Collision, "hydrometer").with_reference("cylinder");
    ensure!(DEFAULT_COLLISION_PENALTY == 0.01, "default penalty {}", DEFAULT_COLLISION_PENALTY);
    for k in 0..=150usize {
        let events = (0..k)
            .map(|i| Event {
                t: 0.01 + i as f64 * 0.05,
                user: "u".into(),
                payload: Payload::Collision { object: "hydrometer".into(), other: "cylinder".into() },
            })
            .collect();
        let slice = TaskSlice::new("T", 0.0, 10.0, events);
        let got = collision_score(&slice, &spec).score;
        let want = (1.0 - 0.01 * k as f64).max(0.0);
        ensure!(got == want, "k={k}: {got} != {want}");
    }
    Ok("k = 0..150 exact".into())
}

fn attach_event(t: f64, on: bool) -> Event {
    Event { t, user: "u".into(), payload: Payload::Attach { object: "flask".into(), target: "hand-right".into(), attached: on } }
}

fn attachment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = CheckSpec::new(CheckKind::Attachment, "flask").with_reference("hand-right");
    let mut max_err = 0.0f64;
    for _ in 0..1000 {
        let duration: f64 = rng.random_range(10.0..60.0);
        let n = rng.random_range(0..=12);
        let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..duration)).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let starts_on = !times.is_empty() && rng.random_bool(0.5);
        let events: Vec<Event> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| attach_event(t, (i % 2 == 0) != starts_on))
            .collect();
        let slice = TaskSlice::new("T", 0.0, duration, events);
        let got = attachment_score(&slice, &spec).map_err(|e| e.to_string())?.score;

        let bins = (duration * 1000.0).ceil() as usize;
        let mut on = 0usize;
        for b in 0..bins {
            let t = (b as f64 + 0.5) / 1000.0;
            if t >= duration {
                break;
            }
            let flips = times.iter().filter(|&&x| x <= t).count();
            if (flips % 2 == 1) != starts_on {
                on += 1;
            }
        }
        let brute = on as f64 / (duration * 1000.0);
        max_err = max_err.max((got - brute).abs());
    }
    ensure!(max_err <= 1e-3, "max error {max_err:e}");
    Ok(format!("1000 streams, max error {max_err:.1e}"))
}

fn skeleton_event(t: f64, body: &Body) -> Event {
    Event { t, user: "u".into(), payload: Payload::Skeleton(body.frame()) }
}

/// A 4 s reference in which the head drifts sideways by 0.4 m.
fn head_reference(params: &TrajectoryParams) -> (ReferenceTrajectory, Option<SkeletonStats>) {
    let frames = (4.0 * FRAME_RATE) as usize;
    let events = (0..=frames)
        .map(|i| {
            let t = i as f64 / FRAME_RATE;
            skeleton_event(t, &Body::standing(Vector3::new(0.1 * t, 0.9, 0.0)))
        })
        .collect();
    let slice = TaskSlice::new("R", 0.0, 4.0, events);
    let reference = ReferenceTrajectory::from_slice(&slice, params, None).expect("reference frames");
    (reference, SkeletonStats::from_slice(&slice))
}

fn head_params() -> TrajectoryParams {
    TrajectoryParams { joints: vec!["head".into()], ..TrajectoryParams::default() }
}

fn skip_time() -> Outcome {
    let params = head_params();
    ensure!(params.skip_time == 5.0, "default skip time {}", params.skip_time);
    let (reference, stats) = head_reference(&params);
    let mut tracker = TrajectoryTracker::new(reference, params, stats);
    let far = Body::standing(Vector3::new(3.0, 0.9, 0.0)).frame();
    let period = 1.0 / FRAME_RATE;
    let end = 23.0;
    let mut misses = Vec::new();
    let mut first_t = None;
    let mut i = 0;
    while (i as f64) * period <= end {
        let t = i as f64 * period;
        first_t.get_or_insert(t);
        for (at, ev) in tracker.push(t, &far) {
            match ev {
                FeedbackEvent::Missed => misses.push(at),
                FeedbackEvent::Burst { .. } => return Err(format!("unexpected burst at {at}")),
                _ => {}
            }
        }
        i += 1;
    }
    ensure!(misses.len() == 4, "{} misses in {end} s", misses.len());
    let mut spawned_at = first_t.unwrap();
    for &m in &misses {
        let age = m - spawned_at;
        ensure!(age > 5.0 - 1e-9 && age <= 5.0 + period + 1e-9, "target retired at age {age}");
        spawned_at = m;
    }
    let outcome = tracker.finish(end);
    ensure!(outcome.burst == 0, "burst {}", outcome.burst);
    ensure!(outcome.burst + outcome.missed == outcome.spawned, "{} + {} != {}", outcome.burst, outcome.missed, outcome.spawned);
    Ok(format!("{} timed retirements, ages within one frame of 5 s, {} spawned", misses.len(), outcome.spawned))
}

/// Stands 2 s, lies down for `hold` seconds, stands 4 s more.
fn fall_run(hold: f64) -> (bool, usize, f64) {
    let params = head_params();
    let (reference, stats) = head_reference(&params);
    let mut tracker = TrajectoryTracker::new(reference, params, stats);
    let standing = Body::standing(Vector3::new(3.0, 0.9, 0.0)).frame();
    let fallen = Body::standing(Vector3::new(3.0, -0.5, 0.0)).frame();
    let end = 2.0 + hold + 4.0;
    let mut aborts = 0;
    let mut i = 0;
    loop {
        let t = i as f64 / FRAME_RATE;
        if t > end {
            break;
        }
        let frame = if t >= 2.0 && t < 2.0 + hold { &fallen } else { &standing };
        aborts += tracker
            .push(t, frame)
            .iter()
            .filter(|(_, e)| matches!(e, FeedbackEvent::Abort(AnomalyKind::Fall)))
            .count();
        i += 1;
    }
    let outcome = tracker.finish(end);
    (outcome.aborted, aborts, outcome.score)
}

fn anomaly_abort() -> Outcome {
    let wait = TrajectoryParams::default().anomaly_wait;
    ensure!(wait == 10.0, "default anomaly wait {wait}");
    let (aborted, aborts, score) = fall_run(11.0);
    ensure!(aborted && aborts == 1 && score == 0.0, "11 s fall: aborted={aborted} aborts={aborts} score={score}");
    let (aborted, aborts, _) = fall_run(9.0);
    ensure!(!aborted && aborts == 0, "9 s fall: aborted={aborted} aborts={aborts}");
    Ok("11 s fall aborts once with score 0, 9 s fall does not abort".into())
}

fn brute_ready(net: &TaskNetwork, done: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for node in net.nodes() {
        let Some(p) = node.primitive() else { continue };
        if done.contains(&node.id) {
            continue;
        }
        let mut blocked = false;
        for q in &p.predecessors {
            if !done.contains(q) {
                blocked = true;
            }
        }
        if !blocked {
            out.insert(node.id.clone());
        }
    }
    out
}

fn check_all_subsets(net: &TaskNetwork) -> Result<usize, String> {
    let prims: Vec<String> = net.primitives().map(|(n, _)| n.id.clone()).collect();
    for mask in 0u32..(1 << prims.len()) {
        let done: BTreeSet<String> =
            prims.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, id)| id.clone()).collect();
        let got = net.ready_tasks(&done).map_err(|e| e.to_string())?;
        let want = brute_ready(net, &done);
        ensure!(got == want, "completed {done:?}: {got:?} != {want:?}");
    }
    Ok(1 << prims.len())
}

fn dag_text(ids: &[String], preds: &[Vec<usize>]) -> String {
    let mut text = String::from("task ROOT\n  name root\n  kind abstract\n");
    for id in ids {
        text.push_str(&format!("  child {id}\n"));
    }
    text.push_str("end\n");
    for (i, id) in ids.iter().enumerate() {
        text.push_str(&format!(
            "task {id}\n  name {id}\n  kind primitive\n  desc step\n  user single u\n  weight 1\n  objects box\n  assess task-level\n  check position subject=box\n  feedback final\n"
        ));
        for &p in &preds[i] {
            text.push_str(&format!("  pred {}\n", ids[p]));
        }
        text.push_str("end\n");
    }
    text
}

fn readiness() -> Outcome {
    let mut subsets = 0;
    for f in ALL {
        subsets += check_all_subsets(&f.task_network()).map_err(|e| format!("{}: {e}", f.name))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cycles_rejected = 0;
    for trial in 0..100 {
        let n = rng.random_range(1..=10);
        let mut ids: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
        ids.shuffle(&mut rng);
        let preds: Vec<Vec<usize>> = (0..n).map(|i| (0..i).filter(|_| rng.random_bool(0.3)).collect()).collect();
        let net = parse_network(&dag_text(&ids, &preds)).map_err(|e| format!("dag {trial}: {e}"))?;
        let report = validate_network(&net);
        ensure!(report.ok, "dag {trial} rejected: {report}");
        subsets += check_all_subsets(&net).map_err(|e| format!("dag {trial}: {e}"))?;

        if n >= 2 {
            let mut cyclic = preds.clone();
            cyclic[0].push(n - 1);
            for (i, p) in cyclic.iter_mut().enumerate().skip(1) {
                if !p.contains(&(i - 1)) {
                    p.push(i - 1);
                }
            }
            let net = parse_network(&dag_text(&ids, &cyclic)).map_err(|e| format!("cyclic {trial}: {e}"))?;
            let report = validate_network(&net);
            ensure!(!report.ok && report.has_error("cycle"), "cyclic {trial} accepted: {report}");
            cycles_rejected += 1;
        }
    }
    Ok(format!("{subsets} subsets agree, {cycles_rejected} cyclic networks rejected"))
}

fn naive_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx.sqrt() * syy.sqrt()))
}

fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn naive_kendall(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mut c, mut d, mut tx, mut ty) = (0.0f64, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let a = (x[i] - x[j]).signum() * f64::from(x[i] != x[j]);
            let b = (y[i] - y[j]).signum() * f64::from(y[i] != y[j]);
            if a == 0.0 && b == 0.0 {
                continue;
            } else if a == 0.0 {
                tx += 1.0;
            } else if b == 0.0 {
                ty += 1.0;
            } else if a == b {
                c += 1.0;
            } else {
                d += 1.0;
            }
        }
    }
    let denom = ((c + d + tx) * (c + d + ty)).sqrt();
    (c + d + tx > 0.0 && c + d + ty > 0.0).then(|| (c - d) / denom)
}

fn compare(x: &[f64], y: &[f64], worst: &mut f64) -> Result<(), String> {
    let cases = [
        (pearson(x, y).ok(), naive_pearson(x, y), "pearson"),
        (spearman(x, y).ok(), naive_pearson(&naive_ranks(x), &naive_ranks(y)), "spearman"),
        (kendall(x, y, KendallVariant::TauB).ok(), naive_kendall(x, y), "kendall"),
    ];
    for (got, want, name) in cases {
        match (got, want) {
            (Some(g), Some(w)) => {
                *worst = worst.max((g - w).abs());
                ensure!((g - w).abs() <= 1e-9, "{name} {x:?} {y:?}: {g} vs {w}");
            }
            (None, None) => {}
            _ => return Err(format!("{name} {x:?} {y:?}: {got:?} vs {want:?}")),
        }
    }
    Ok(())
}

fn correlation() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    for n in 2..=6u32 {
        let vectors: Vec<Vec<f64>> = (0..4usize.pow(n))
            .map(|mut k| {
                (0..n)
                    .map(|_| {
                        let v = (k % 4 + 1) as f64;
                        k /= 4;
                        v
                    })
                    .collect()
            })
            .collect();
        // Every coefficient is invariant under a joint permutation of both
        // lists, so at length 6 sorted x covers all pairs up to relabeling.
        let xs: Vec<&Vec<f64>> = if n < 6 {
            vectors.iter().collect()
        } else {
            vectors.iter().filter(|x| x.windows(2).all(|w| w[0] <= w[1])).collect()
        };
        for x in xs {
            for y in &vectors {
                compare(x, y, &mut worst)?;
                cases += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let n = rng.random_range(2..=50);
        let tied = rng.random_bool(0.5);
        let draw = |rng: &mut ChaCha8Rng| {
            if tied {
                rng.random_range(0..5) as f64
            } else {
                rng.random_range(-100.0..100.0)
            }
        };
        let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        compare(&x, &y, &mut worst)?;
        cases += 1;
    }
    let x: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
    let rev: Vec<f64> = x.iter().rev().copied().collect();
    ensure!(pearson(&x, &x) == Ok(1.0), "pearson identical");
    ensure!(spearman(&x, &x) == Ok(1.0), "spearman identical");
    ensure!(kendall(&x, &x, KendallVariant::TauB) == Ok(1.0), "kendall identical");
    ensure!(spearman(&x, &rev) == Ok(-1.0), "spearman reversed");
    ensure!(kendall(&x, &rev, KendallVariant::TauB) == Ok(-1.0), "kendall reversed");
    Ok(format!("{cases} cases, max error {worst:.1e}"))
}

fn monotonicity() -> Outcome {
    let dir = fixture_dir();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = tmp.path().join("mono.csv");
    let t = Instant::now();
    let (code, _, err) = cli(
        &[
            "simulate",
            "--net",
            path_str(&dir.join(HYDROMETER.network_file)),
            "--refs",
            path_str(&dir.join(HYDROMETER.manifest_file)),
            "--magnitudes",
            "0,0.02,0.05,0.1,0.2",
            "--trials",
            "50",
            "--seed",
            "1",
            "--csv",
            path_str(&csv),
        ],
        b"",
    );
    let elapsed = t.elapsed();
    ensure!(code == 0, "simulate exited {code}: {err}");
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let means: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    ensure!(means.len() == 5, "{} rows", means.len());
    ensure!(means.windows(2).all(|w| w[1] <= w[0]), "not non-increasing: {means:?}");
    ensure!(means[0] >= 0.99, "magnitude 0 mean {}", means[0]);
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
    Ok(format!("mean delta {} in {:.2} s", shown.join(" > "), elapsed.as_secs_f64()))
}

fn mode_equivalence() -> Outcome {
    let dir = fixture_dir();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for f in ALL {
        let net = dir.join(f.network_file);
        let refs = dir.join(f.manifest_file);
        let session = dir.join(f.recording_file);
        let batch = tmp.path().join(format!("{}-batch.json", f.name));
        let piped = tmp.path().join(format!("{}-stream.json", f.name));
        let (code, _, err) = cli(
            &["score", "--net", path_str(&net), "--refs", path_str(&refs), "--session", path_str(&session), "--out", path_str(&batch)],
            b"",
        );
        ensure!(code == 0, "{} score exited {code}: {err}", f.name);
        let input = std::fs::read(&session).map_err(|e| e.to_string())?;
        let (code, _, err) =
            cli(&["stream", "--net", path_str(&net), "--refs", path_str(&refs), "--out", path_str(&piped)], &input);
        ensure!(code == 0, "{} stream exited {code}: {err}", f.name);
        let a = std::fs::read(&batch).map_err(|e| e.to_string())?;
        let b = std::fs::read(&piped).map_err(|e| e.to_string())?;
        ensure!(a == b, "{} reports differ", f.name);
    }
    Ok("score and stream reports byte-identical on both fixtures".into())
}

fn throughput() -> Outcome {
    let dir = fixture_dir();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rec = throughput_session(600.0);
    let events = rec.events.len();
    let session = tmp.path().join("long.rec");
    std::fs::write(&session, rec.to_string()).map_err(|e| e.to_string())?;
    let out = tmp.path().join("long.json");
    let t = Instant::now();
    let (code, stdout, err) = cli(
        &[
            "score",
            "--net",
            path_str(&dir.join(HYDROMETER.network_file)),
            "--refs",
            path_str(&dir.join(HYDROMETER.manifest_file)),
            "--session",
            path_str(&session),
            "--out",
            path_str(&out),
        ],
        b"",
    );
    let elapsed = t.elapsed();
    ensure!(code == 0, "score exited {code}: {err}");
    ensure!(stdout.contains("delta="), "no delta in output: {stdout}");
    ensure!(elapsed < Duration::from_secs(5), "{events} events took {elapsed:?}");
    Ok(format!("{events} events scored in {:.2} s", elapsed.as_secs_f64()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("self-replay identity", self_replay),
        ("aggregation oracle", aggregation),
        ("collision constant", collisions),
        ("attachment oracle", attachment),
        ("skip-time behavior", skip_time),
        ("anomaly abort", anomaly_abort),
        ("readiness oracle", readiness),
        ("correlation oracle", correlation),
        ("monotonicity", monotonicity),
        ("mode equivalence", mode_equivalence),
        ("throughput", throughput),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
