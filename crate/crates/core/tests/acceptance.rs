//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion reports a PASS/FAIL line even when an earlier one fails; the
//! process exits non-zero if any criterion fails.
//!
//! Run with `cargo test --release --test acceptance` for speed; the debug
//! build also finishes well inside the time budgets.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::{
    first_argmax, oracle_distribution, oracle_knn_normalized, oracle_normalize, oracle_stats,
    random_store,
};
use knn_lens::analysis::{fraction_to_reach, stored_label_losses};
use knn_lens::classifier::{accuracy, neighbor_weights};
use knn_lens::tuning::default_tau_grid;
use knn_lens::{
    compute_stats, detect_mislabeled, gen_synthetic, influence_ranking, inject_label_noise,
    knn_distribution, normalize_row, predict_store, read_store, tune, write_store, BackoffConfig,
    EmbeddingStore, Error, KnnIndex, MislabelMode, Neighbor, NeighborList, NormStats,
    SyntheticSpec, TuneGrid, DEFAULT_EPSILON,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Criterion 1
const ORACLE_INSTANCES: u64 = 200;
const ORACLE_MAX_N: usize = 2000;
const ORACLE_MAX_D: usize = 64;
const ORACLE_MAX_K: usize = 32;
const ORACLE_QUERIES: usize = 3;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
// Criterion 2
const NORM_MEAN_TOL: f64 = 1e-9;
const NORM_STD_TOL: f64 = 1e-6;
// Criterion 3
const DIST_DRAWS: usize = 10_000;
const DIST_SUM_TOL: f64 = 1e-12;
const DIST_LIMIT_TOL: f64 = 1e-9;
// Criterion 5
const MIN_BACKOFF_GAIN: f64 = 0.05;
const PINNED_BACKOFF_ACC: f64 = 1.0;
const PINNED_TOL: f64 = 0.01;
// Criterion 6
const MIN_MISLABEL_F1: f64 = 0.9;
const NOISE_FRACTION: f64 = 0.1;
const NOISE_SEEDS: [u64; 3] = [0, 1, 2];
// Criterion 7
const REMOVAL_PERCENTS: [f64; 2] = [10.0, 30.0];
// Criterion 8
const ROUND_TRIPS: u64 = 100;
// Criterion 9
const WORKER_COUNTS: [usize; 3] = [1, 4, 8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn synthetic(model_noise: f64) -> knn_lens::SyntheticSplits {
    gen_synthetic(&SyntheticSpec {
        n_train: 1500,
        n_val: 1500,
        n_test: 1500,
        dim: 32,
        num_labels: 3,
        cluster_separation: 10.0,
        model_noise,
        seed: 0,
    })
    .unwrap()
}

fn index_for(train: &EmbeddingStore) -> KnnIndex {
    let stats = compute_stats(train, None, 0, DEFAULT_EPSILON).unwrap();
    KnnIndex::build(train, &stats).unwrap()
}

fn pairs(list: &NeighborList) -> Vec<(usize, f64)> {
    list.iter().map(|n| (n.index, n.distance)).collect()
}

fn index_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    let mut queries = 0;
    for instance in 0..ORACLE_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let n = rng.random_range(1..=ORACLE_MAX_N);
        let d = rng.random_range(1..=ORACLE_MAX_D);
        let train = random_store(n, d, 3, false, rng.random());
        let stats = compute_stats(&train, None, 0, DEFAULT_EPSILON).unwrap();
        let reference = oracle_stats(&train, DEFAULT_EPSILON);
        if stats != reference {
            mismatches += 1;
            continue;
        }
        let index = KnnIndex::build(&train, &stats).unwrap();
        let rows: Vec<Vec<f32>> = train
            .rows()
            .map(|r| oracle_normalize(r, &reference))
            .collect();
        let probes = random_store(ORACLE_QUERIES, d, 3, false, rng.random());
        for q in 0..ORACLE_QUERIES {
            // Half of the queries are training rows with themselves excluded.
            let (raw, exclude) = if q % 2 == 1 && n > 1 {
                let i = rng.random_range(0..n);
                (train.row(i), Some(i))
            } else {
                (probes.row(q), None)
            };
            let available = n - usize::from(exclude.is_some());
            let k = rng.random_range(1..=available.min(ORACLE_MAX_K));
            let got = pairs(&index.query(raw, k, exclude).unwrap());
            let want = oracle_knn_normalized(&rows, &oracle_normalize(raw, &reference), k, exclude);
            queries += 1;
            if got != want {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < ORACLE_BUDGET,
        format!("{ORACLE_INSTANCES} instances, {queries} queries, {mismatches} mismatches, {elapsed:.2?} (budget {ORACLE_BUDGET:?})"),
    )
}

fn normalization_self_check() -> Outcome {
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    for seed in 0..5u64 {
        let (n, d) = (1000, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Mixed scales and offsets, plus one constant column.
        let vectors: Vec<f32> = (0..n * d)
            .map(|x| {
                let j = x % d;
                if j == d - 1 {
                    return 4.25;
                }
                let scale = 10f32.powi(j as i32 % 5 - 2);
                j as f32 * 3.0 + scale * rng.random_range(-1.0f32..1.0)
            })
            .collect();
        let labels = (0..n).map(|i| (i % 3) as u32).collect();
        let store = EmbeddingStore::new(d, 3, vectors, labels, None).unwrap();
        let stats = compute_stats(&store, None, 0, DEFAULT_EPSILON).unwrap();
        let normalized: Vec<Vec<f64>> = store
            .rows()
            .map(|r| normalize_row(r, &stats).unwrap())
            .collect();
        for j in 0..d {
            let mean = normalized.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = normalized
                .iter()
                .map(|r| (r[j] - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let target = stats.sigma[j] / (stats.sigma[j] + stats.epsilon);
            worst_mean = worst_mean.max(mean.abs());
            worst_std = worst_std.max((var.sqrt() - target).abs());
        }
    }
    outcome(
        worst_mean <= NORM_MEAN_TOL && worst_std <= NORM_STD_TOL,
        format!("max |mean| {worst_mean:.2e} (tol {NORM_MEAN_TOL:e}), max std error {worst_std:.2e} (tol {NORM_STD_TOL:e})"),
    )
}

fn distribution_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_sum = 0.0f64;
    let mut negative = 0;
    let mut worst_uniform = 0.0f64;
    let mut worst_concentrated = 0.0f64;
    for _ in 0..DIST_DRAWS {
        let k = rng.random_range(1..=64usize);
        let l = rng.random_range(2..=8u32);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let mut entries: Vec<Neighbor> = (0..k)
            .map(|index| Neighbor {
                index,
                distance: scale * rng.random::<f64>(),
            })
            .collect();
        entries.sort();
        let list = NeighborList { entries };
        let labels: Vec<u32> = (0..k).map(|_| rng.random_range(0..l)).collect();
        let t = 10f64.powf(rng.random_range(-3.0..3.0));

        let p = knn_distribution(&list, &labels, t, l as usize).unwrap();
        worst_sum = worst_sum.max((p.probs.iter().sum::<f64>() - 1.0).abs());
        negative += p.probs.iter().filter(|&&v| v < 0.0).count();

        let hot = neighbor_weights(&list, 1e12).unwrap();
        for w in &hot {
            worst_uniform = worst_uniform.max((w - 1.0 / k as f64).abs());
        }
        let cold = neighbor_weights(&list, 1e-12).unwrap();
        let closest = list.entries[0].distance;
        let ties = list.iter().filter(|n| n.distance == closest).count() as f64;
        for (n, w) in list.iter().zip(&cold) {
            let want = if n.distance == closest {
                1.0 / ties
            } else {
                0.0
            };
            worst_concentrated = worst_concentrated.max((w - want).abs());
        }
    }
    outcome(
        worst_sum <= DIST_SUM_TOL && negative == 0 && worst_uniform <= DIST_LIMIT_TOL && worst_concentrated <= DIST_LIMIT_TOL,
        format!(
            "{DIST_DRAWS} draws: max |sum-1| {worst_sum:.1e}, {negative} negative, T=1e12 max dev {worst_uniform:.1e}, T=1e-12 max dev {worst_concentrated:.1e}"
        ),
    )
}

fn backoff_endpoints() -> Outcome {
    let mut failures = Vec::new();
    let synth = synthetic(0.2);
    let cases = [
        (
            "random",
            random_store(600, 12, 3, false, 40),
            random_store(300, 12, 3, true, 41),
        ),
        ("synthetic", synth.train.clone(), synth.val.clone()),
    ];
    for (name, train, val) in cases {
        let index = index_for(&train);
        let model_acc = accuracy(
            (0..val.len()).map(|i| {
                first_argmax(
                    &val.prob_row(i)
                        .unwrap()
                        .iter()
                        .map(|&p| p as f64)
                        .collect::<Vec<_>>(),
                )
            }),
            val.labels(),
        );
        let grid = TuneGrid {
            k_candidates: vec![1, 4],
            temperatures: vec![0.1, 1.0, 10.0],
            taus: default_tau_grid(),
        };
        let report = tune(&index, &val, &grid, false).unwrap();
        if report.baseline_model_acc != model_acc {
            failures.push(format!("{name}: tune model baseline"));
        }
        for &k in &grid.k_candidates {
            for &t in &grid.temperatures {
                let at = |tau: f64| BackoffConfig::new(k, t, tau).unwrap();
                let knn_only = {
                    let lists = index.batch_query(val.vectors(), k, false).unwrap();
                    let pred = lists
                        .iter()
                        .map(|l| knn_distribution(l, index.labels(), t, 3).unwrap().argmax());
                    accuracy(pred, val.labels())
                };
                let low = predict_store(&index, &val, &at(0.0)).unwrap();
                let high = predict_store(&index, &val, &at(1.0)).unwrap();
                let low_acc = accuracy(low.iter().map(|p| p.label), val.labels());
                let high_acc = accuracy(high.iter().map(|p| p.label), val.labels());
                let cell = |tau: f64| {
                    report
                        .grid_results
                        .iter()
                        .find(|c| c.k == k && c.temperature == t && c.tau == tau)
                        .unwrap()
                        .accuracy
                };
                if low_acc != model_acc || cell(0.0) != model_acc {
                    failures.push(format!("{name} k={k} T={t}: tau=0"));
                }
                if high_acc != knn_only || cell(1.0) != knn_only {
                    failures.push(format!("{name} k={k} T={t}: tau=1"));
                }
            }
        }
    }
    let detail = if failures.is_empty() {
        "tau=0 equals model-only and tau=1 equals kNN-only on every (k, T) cell".to_string()
    } else {
        format!("mismatches: {}", failures.join("; "))
    };
    outcome(failures.is_empty(), detail)
}

/// Straight-line backoff prediction over pre-normalized training rows.
fn scalar_backoff(
    rows: &[Vec<f32>],
    train_labels: &[u32],
    stats: &NormStats,
    eval: &EmbeddingStore,
    c: &BackoffConfig,
) -> Vec<u32> {
    let l = eval.num_labels() as usize;
    (0..eval.len())
        .map(|i| {
            let model: Vec<f64> = eval
                .prob_row(i)
                .unwrap()
                .iter()
                .map(|&p| p as f64)
                .collect();
            if model.iter().cloned().fold(f64::MIN, f64::max) > c.tau {
                first_argmax(&model)
            } else {
                let nn =
                    oracle_knn_normalized(rows, &oracle_normalize(eval.row(i), stats), c.k, None);
                first_argmax(&oracle_distribution(&nn, train_labels, c.temperature, l))
            }
        })
        .collect()
}

fn synthetic_backoff_gain() -> Outcome {
    let s = synthetic(0.2);
    let stats = compute_stats(&s.train, None, 0, DEFAULT_EPSILON).unwrap();
    let index = KnnIndex::build(&s.train, &stats).unwrap();
    let report = tune(
        &index,
        &s.val,
        &TuneGrid::defaults_for(s.train.len()),
        false,
    )
    .unwrap();
    let preds = predict_store(&index, &s.test, &report.best).unwrap();
    let backoff = accuracy(preds.iter().map(|p| p.label), s.test.labels());
    let model = accuracy(preds.iter().map(|p| p.model_argmax), s.test.labels());

    let rows: Vec<Vec<f32>> = s
        .train
        .rows()
        .map(|r| oracle_normalize(r, &stats))
        .collect();
    let scalar = scalar_backoff(&rows, s.train.labels(), &stats, &s.test, &report.best);
    let scalar_acc = accuracy(scalar.iter().copied(), s.test.labels());

    let gain = backoff - model;
    let pass = gain >= MIN_BACKOFF_GAIN
        && (backoff - PINNED_BACKOFF_ACC).abs() <= PINNED_TOL
        && scalar_acc == backoff;
    let c = &report.best;
    outcome(
        pass,
        format!(
            "tuned k={} T={} tau={}: test backoff {backoff:.4} (scalar path {scalar_acc:.4}, pinned {PINNED_BACKOFF_ACC} +/- {PINNED_TOL}), model-only {model:.4}, gain {:.1} points (min {:.0})",
            c.k,
            c.temperature,
            c.tau,
            100.0 * gain,
            100.0 * MIN_BACKOFF_GAIN
        ),
    )
}

fn synthetic_mislabel_recovery() -> Outcome {
    let s = synthetic(0.0);
    let n = s.train.len() as f64;
    let mut f1_sum = 0.0;
    let mut gap_ok = true;
    let mut per_seed = Vec::new();
    for seed in NOISE_SEEDS {
        let (noisy, mask) = inject_label_noise(&s.train, NOISE_FRACTION, seed).unwrap();
        let index = index_for(&noisy);
        let report =
            detect_mislabeled(&index, &s.val, MislabelMode::ProbeSet, Some(&mask)).unwrap();

        // Independent recount of the scores from the candidate set.
        let truth: BTreeSet<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let tp = report.candidates.intersection(&truth).count() as f64;
        let precision = if report.candidates.is_empty() {
            0.0
        } else {
            tp / report.candidates.len() as f64
        };
        let recall = tp / truth.len() as f64;
        let f1 = if tp == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let scores = report.scores.unwrap();
        assert!(
            (scores.f1 - f1).abs() < 1e-12,
            "library F1 {} vs recount {f1}",
            scores.f1
        );
        f1_sum += f1;

        let candidate_fraction = report.candidates.len() as f64 / n;
        let losses = stored_label_losses(&noisy).unwrap();
        let loss_fraction = fraction_to_reach(&losses, &mask, recall)
            .unwrap()
            .unwrap_or(f64::INFINITY);
        gap_ok &= loss_fraction > candidate_fraction;
        per_seed.push(format!(
            "seed {seed}: P {precision:.3} R {recall:.3} F1 {f1:.3}, |c|/n {candidate_fraction:.4} vs loss {loss_fraction:.4}"
        ));
    }
    let mean_f1 = f1_sum / NOISE_SEEDS.len() as f64;
    outcome(
        mean_f1 >= MIN_MISLABEL_F1 && gap_ok,
        format!(
            "mean F1 {mean_f1:.3} (min {MIN_MISLABEL_F1}), loss baseline strictly larger: {gap_ok}; {}",
            per_seed.join("; ")
        ),
    )
}

fn influence_counting() -> Outcome {
    let mut failures = Vec::new();
    let mut runs = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..800usize);
        let m = rng.random_range(1..300usize);
        let k = rng.random_range(1..=16.min(n - 1));
        let train = random_store(n, 6, 3, false, rng.random());
        let probe = random_store(m, 6, 3, false, rng.random());
        let index = index_for(&train);
        for (probe, exclude_self, m) in [(&probe, false, m), (&train, true, n)] {
            runs += 1;
            let r = influence_ranking(&index, probe, k, exclude_self, &REMOVAL_PERCENTS).unwrap();
            let total: u64 = r.frequency.iter().sum();
            if total != (m * k) as u64 {
                failures.push(format!("seed {seed}: sum {total} != {}", m * k));
            }
            for list in &r.removal_lists {
                let want = (list.percent * n as f64 / 100.0).ceil() as usize;
                if list.indices.len() != want {
                    failures.push(format!(
                        "seed {seed}: {}% list has {} != {want}",
                        list.percent,
                        list.indices.len()
                    ));
                }
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("{runs} runs: sum of frequencies = m*k, removal lists sized ceil(p*n/100) for p in {REMOVAL_PERCENTS:?}")
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

type Check = fn(&Result<EmbeddingStore, Error>) -> bool;
type Mutant = (&'static str, Vec<u8>, Check);

fn corruption_mutants(base: &[u8], n: usize, d: usize) -> Vec<Mutant> {
    let set = |at: usize, bytes: &[u8]| {
        let mut b = base.to_vec();
        b[at..at + bytes.len()].copy_from_slice(bytes);
        b
    };
    let body = 32;
    let labels_at = body + 4 * n * d;
    let probs_at = labels_at + 4 * n;
    let magic: Check = |r| matches!(r, Err(Error::MagicMismatch { .. }));
    let version: Check = |r| matches!(r, Err(Error::VersionUnsupported(_)));
    let header: Check = |r| matches!(r, Err(Error::InvalidHeader(_)));
    let truncated: Check = |r| matches!(r, Err(Error::TruncatedFile { .. }));
    let trailing: Check = |r| matches!(r, Err(Error::TrailingBytes(_)));
    let non_finite: Check = |r| matches!(r, Err(Error::NonFiniteValue { .. }));
    let label: Check = |r| matches!(r, Err(Error::LabelOutOfRange { .. }));
    let probs: Check = |r| matches!(r, Err(Error::ProbRowNotNormalized { .. }));
    vec![
        ("magic byte 0", set(0, b"X"), magic),
        ("magic byte 3", set(3, b"X"), magic),
        ("index magic", set(0, b"KNNI"), magic),
        ("version 0", set(4, &0u16.to_le_bytes()), version),
        ("version 2", set(4, &2u16.to_le_bytes()), version),
        ("unknown flag", set(6, &3u16.to_le_bytes()), header),
        ("reserved byte", set(31, &[1]), header),
        ("zero dimension", set(16, &0u32.to_le_bytes()), header),
        ("one label", set(20, &1u32.to_le_bytes()), header),
        ("header cut", base[..20].to_vec(), truncated),
        ("body cut", base[..base.len() - 1].to_vec(), truncated),
        ("extra byte", [base, &[0]].concat(), trailing),
        (
            "row count + 1",
            set(8, &(n as u64 + 1).to_le_bytes()),
            truncated,
        ),
        (
            "row count - 1",
            set(8, &(n as u64 - 1).to_le_bytes()),
            trailing,
        ),
        ("probs flag cleared", set(6, &0u16.to_le_bytes()), trailing),
        (
            "NaN vector",
            set(body + 4, &f32::NAN.to_le_bytes()),
            non_finite,
        ),
        (
            "infinite vector",
            set(body + 4 * d, &f32::INFINITY.to_le_bytes()),
            non_finite,
        ),
        ("label = L", set(labels_at + 4, &3u32.to_le_bytes()), label),
        (
            "label = u32::MAX",
            set(labels_at, &u32::MAX.to_le_bytes()),
            label,
        ),
        ("prob row sum", set(probs_at, &0.9f32.to_le_bytes()), probs),
    ]
}

fn format_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut round_trip_failures = 0;
    for seed in 0..ROUND_TRIPS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = random_store(
            rng.random_range(0..200),
            rng.random_range(1..40),
            rng.random_range(2..10),
            rng.random_bool(0.5),
            seed,
        );
        let first = dir.path().join(format!("{seed}.knnc"));
        let second = dir.path().join(format!("{seed}.again.knnc"));
        write_store(&store, &first).unwrap();
        let back = read_store(&first).unwrap();
        write_store(&back, &second).unwrap();
        let (a, b) = (
            std::fs::read(&first).unwrap(),
            std::fs::read(&second).unwrap(),
        );
        if back != store || a != b || a != store.to_bytes() {
            round_trip_failures += 1;
        }
    }

    let (n, d) = (10, 4);
    let base_store = random_store(n, d, 3, true, 99);
    let base = base_store.to_bytes();
    let mutants = corruption_mutants(&base, n, d);
    let wrong: Vec<&str> = mutants
        .iter()
        .filter(|(_, bytes, check)| !check(&EmbeddingStore::from_bytes(bytes)))
        .map(|(name, _, _)| *name)
        .collect();
    outcome(
        round_trip_failures == 0 && wrong.is_empty() && mutants.len() == 20,
        format!(
            "{ROUND_TRIPS} round-trips ({round_trip_failures} failed), {} corruption mutants ({} without the expected error{})",
            mutants.len(),
            wrong.len(),
            if wrong.is_empty() { String::new() } else { format!(": {}", wrong.join(", ")) }
        ),
    )
}

fn parallel_determinism() -> Outcome {
    let s = synthetic(0.2);
    let index = index_for(&s.train);
    let grid = TuneGrid::defaults_for(s.train.len());
    type Json = Vec<u8>;
    let outputs: Vec<(Json, Json, Json)> = WORKER_COUNTS
        .iter()
        .map(|&threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let batch = index.batch_query(s.val.vectors(), 16, false).unwrap();
                let own = index.batch_query(s.train.vectors(), 8, true).unwrap();
                let report = tune(&index, &s.val, &grid, false).unwrap();
                (
                    serde_json::to_vec(&batch).unwrap(),
                    serde_json::to_vec(&own).unwrap(),
                    serde_json::to_vec(&report).unwrap(),
                )
            })
        })
        .collect();
    let same = outputs.iter().all(|o| *o == outputs[0]);
    outcome(
        same,
        format!(
            "batch_query and tune JSON at {WORKER_COUNTS:?} workers: {} ({} + {} + {} bytes)",
            if same { "identical" } else { "differ" },
            outputs[0].0.len(),
            outputs[0].1.len(),
            outputs[0].2.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("index oracle equivalence", index_oracle_equivalence),
        ("normalization self-check", normalization_self_check),
        ("distribution properties", distribution_properties),
        ("backoff endpoints", backoff_endpoints),
        ("synthetic backoff gain", synthetic_backoff_gain),
        ("synthetic mislabel recovery", synthetic_mislabel_recovery),
        ("influence counting identity", influence_counting),
        ("format round-trip and corruption", format_round_trip),
        ("parallel determinism", parallel_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let status = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {} {status} {name} [{:.2?}]: {}",
            i + 1,
            start.elapsed(),
            result.detail
        );
        if !result.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
