use std::collections::HashSet;

use proptest::prelude::*;
use rand::Rng;
use recbench::bench::{
    cold_start_eval, cold_start_split, latency_batch, measure_latency, measure_training,
    incremental_update_eval, scalability_sweep, Capabilities, CapabilityMatrix, IncrementalOutcome,
    SweepOptions,
};
use recbench::eval::{
    evaluate_model, evaluate_scorer, group_users_by_profile, map_at_k, map_per_group, ndcg_at_k,
    precision_at_k, recall_at_k, Metric,
};
use recbench::ingest::{holdout_split, seeded_rng, Dataset, EvalSplit};
use recbench::models::{fold_in_user, AlsConfig, ModelKind, ModelParams, ModelSpec, Scorer};
use recbench::synthetic::{synthetic_dataset, SyntheticConfig};
use recbench::{CsrMatrix, InteractionMatrix};

fn fixture(n: usize, seed: u64) -> Dataset {
    synthetic_dataset(&SyntheticConfig::with_interactions(n, seed)).unwrap()
}

/// Scores exactly the held-out items of each user.
struct Oracle<'a>(&'a EvalSplit);

impl Scorer for Oracle<'_> {
    fn n_items(&self) -> usize {
        self.0.n_items()
    }

    fn score_into(&self, _: &InteractionMatrix, user: usize, out: &mut [f64]) {
        for &i in &self.0.test_relevant[user] {
            out[i as usize] = 1.0;
        }
    }
}

/// Uniform random scores, seeded by user so calls are repeatable.
struct RandomScores(usize);

impl Scorer for RandomScores {
    fn n_items(&self) -> usize {
        self.0
    }

    fn score_into(&self, _: &InteractionMatrix, user: usize, out: &mut [f64]) {
        let mut rng = seeded_rng(user as u64);
        for v in out.iter_mut() {
            *v = rng.gen_range(0.01..1.0);
        }
    }
}

#[test]
fn oracle_scorer_reaches_the_upper_bound() {
    let d = fixture(10_000, 1);
    let split = holdout_split(&d, 0.8, 0).unwrap();
    let min_test = split
        .evaluated_users()
        .iter()
        .map(|&u| split.test_relevant[u].len())
        .min()
        .unwrap();
    let ks: Vec<usize> = (1..=min_test).collect();
    let report = evaluate_scorer(&Oracle(&split), &split, &ks).unwrap();
    for metric in Metric::ALL {
        for &k in &ks {
            let v = report.get(metric, k).unwrap();
            if metric == Metric::Recall {
                assert!(v <= 1.0);
            } else {
                assert!((v - 1.0).abs() < 1e-12, "{metric:?}@{k} = {v}");
            }
        }
    }
    let groups = group_users_by_profile(&split.train, 10).unwrap();
    let per_group = map_per_group(&Oracle(&split), &split, &groups, min_test).unwrap();
    assert!(per_group.iter().all(|g| g.is_none_or(|v| (v - 1.0).abs() < 1e-12)));
}

#[test]
fn random_scores_match_the_analytic_precision() {
    let d = fixture(40_000, 2);
    let split = holdout_split(&d, 0.8, 0).unwrap();
    let users = split.evaluated_users();
    let report = evaluate_scorer(&RandomScores(split.n_items()), &split, &[10]).unwrap();
    // Expected precision of a random ranking over each user's unseen items.
    let per_user: Vec<f64> = users
        .iter()
        .map(|&u| {
            let candidates = split.n_items() - split.train.row_len(u);
            split.test_relevant[u].len() as f64 / candidates as f64
        })
        .collect();
    let n = per_user.len() as f64;
    let expected = per_user.iter().sum::<f64>() / n;
    // Per-user variance of a hypergeometric draw of 10, divided by 100.
    let var: f64 = users
        .iter()
        .zip(&per_user)
        .map(|(&u, &p)| {
            let big_n = (split.n_items() - split.train.row_len(u)) as f64;
            p * (1.0 - p) * (big_n - 10.0) / (big_n - 1.0) / 10.0
        })
        .sum::<f64>()
        / (n * n);
    let got = report.get(Metric::Precision, 10).unwrap();
    assert!(
        (got - expected).abs() <= 3.0 * var.sqrt(),
        "precision {got} vs expected {expected} (se {})",
        var.sqrt()
    );
}

#[test]
fn single_user_report_equals_that_users_metrics() {
    let train = CsrMatrix::from_binary_rows(vec![vec![0, 1]], 6).unwrap();
    let split = EvalSplit {
        train,
        test_relevant: vec![vec![2, 5]],
        seed: 0,
    };
    let scorer = RandomScores(6);
    let report = evaluate_scorer(&scorer, &split, &[3]).unwrap();
    let rec = recbench::models::Recommender::new(&scorer, &split.train).unwrap();
    let ranked = rec.recommend(0, 3, true).unwrap();
    let rel = &split.test_relevant[0];
    assert_eq!(report.get(Metric::Precision, 3).unwrap(), precision_at_k(&ranked, rel, 3));
    assert_eq!(report.get(Metric::Recall, 3).unwrap(), recall_at_k(&ranked, rel, 3));
    assert_eq!(report.get(Metric::Ndcg, 3).unwrap(), ndcg_at_k(&ranked, rel, 3));
    assert_eq!(report.get(Metric::Map, 3).unwrap(), map_at_k(&ranked, rel, 3));
}

#[test]
fn one_group_equals_overall_map_and_popularity_favors_heavy_users() {
    let d = fixture(30_000, 3);
    let split = holdout_split(&d, 0.8, 0).unwrap();
    let top = ModelSpec::default_for(ModelKind::TopPop).fit(&split.train).unwrap();
    let report = evaluate_model(&top, &split, &[10]).unwrap();
    let one = group_users_by_profile(&split.train, 1).unwrap();
    let g = map_per_group(&top, &split, &one, 10).unwrap();
    assert!((g[0].unwrap() - report.get(Metric::Map, 10).unwrap()).abs() < 1e-12);

    let deciles = group_users_by_profile(&split.train, 10).unwrap();
    let g = map_per_group(&top, &split, &deciles, 10).unwrap();
    assert!(g[0].unwrap() <= g[9].unwrap(), "{g:?}");
}

#[test]
fn evaluation_is_independent_of_worker_count() {
    let d = fixture(20_000, 4);
    let split = holdout_split(&d, 0.8, 0).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let slim = ModelSpec::default_for(ModelKind::Slim).fit(&split.train).unwrap();
            let rp3 = ModelSpec::default_for(ModelKind::Rp3Beta).fit(&split.train).unwrap();
            let mut bytes = Vec::new();
            slim.write_to(&mut bytes).unwrap();
            rp3.write_to(&mut bytes).unwrap();
            (bytes, evaluate_model(&slim, &split, &[5, 10]).unwrap())
        })
    };
    let (a_bytes, a) = run(1);
    let (b_bytes, b) = run(4);
    assert_eq!(a_bytes, b_bytes);
    assert_eq!(a, b);
}

#[test]
fn dimension_mismatch_is_an_error() {
    let d = fixture(10_000, 5);
    let split = holdout_split(&d, 0.8, 0).unwrap();
    assert!(evaluate_scorer(&RandomScores(split.n_items() + 1), &split, &[10]).is_err());
}

#[test]
fn training_measurement_smoke_and_determinism() {
    let train = CsrMatrix::from_binary_rows(vec![vec![0, 1], vec![1, 2], vec![0, 2]], 3).unwrap();
    for kind in ModelKind::ALL {
        let spec = ModelSpec::default_for(kind);
        let (record, model) = measure_training(&spec, &train, 3).unwrap();
        assert!(record.fit_seconds > 0.0, "{kind}");
        assert!(record.peak_bytes > 0, "{kind}");
        assert_eq!(record.reps, 3);
        let again = spec.fit(&train).unwrap();
        assert_eq!(model, again, "{kind} differs across repetitions");
    }
    assert!(measure_training(&ModelSpec::default_for(ModelKind::EaseR), &train, 0).is_err());
}

#[test]
fn latency_batches_are_seeded() {
    assert_eq!(latency_batch(500, 100, 9), latency_batch(500, 100, 9));
    let (users, replaced) = latency_batch(500, 100, 9);
    assert!(!replaced);
    assert_eq!(users.iter().collect::<HashSet<_>>().len(), 100);
    let (users, replaced) = latency_batch(5, 20, 9);
    assert!(replaced && users.len() == 20 && users.iter().all(|&u| u < 5));

    let d = fixture(5_000, 6);
    let split = holdout_split(&d, 0.8, 0).unwrap();
    let model = ModelSpec::default_for(ModelKind::Rp3Beta).fit(&split.train).unwrap();
    let one = measure_latency(&model, &split.train, 1, 10, 0).unwrap();
    assert_eq!(one.mean_ms, one.total_ms);
    let big = measure_latency(&model, &split.train, split.n_users() + 10, 10, 0).unwrap();
    assert!(big.with_replacement);
}

#[test]
fn monitoring_does_not_change_results() {
    let d = fixture(5_000, 7);
    let split = holdout_split(&d, 0.8, 0).unwrap();
    let spec = ModelSpec::default_for(ModelKind::Als);
    let (_, monitored) = measure_training(&spec, &split.train, 1).unwrap();
    let plain = spec.fit(&split.train).unwrap();
    assert_eq!(
        evaluate_model(&monitored, &split, &[10]).unwrap(),
        evaluate_model(&plain, &split, &[10]).unwrap()
    );
}

#[test]
fn sweep_skips_oversized_requests() {
    let d = fixture(5_000, 8);
    let opts = SweepOptions {
        sizes: vec![d.len() + 1, d.len() * 2],
        seed: 0,
        repetitions: 1,
        allow_large: false,
    };
    let out = scalability_sweep(&[ModelSpec::default_for(ModelKind::TopPop)], &d, &opts).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.warnings.len(), 2);
}

#[test]
fn graph_fit_time_grows_at_most_linearly() {
    let d = fixture(100_000, 9);
    let opts = SweepOptions {
        sizes: vec![50_000, 90_000],
        seed: 0,
        repetitions: 5,
        allow_large: false,
    };
    let out = scalability_sweep(&[ModelSpec::default_for(ModelKind::Rp3Beta)], &d, &opts).unwrap();
    let (small, large) = (&out.records[0], &out.records[1]);
    let growth = large.fit_seconds / small.fit_seconds;
    let nnz = large.n_interactions as f64 / small.n_interactions as f64;
    assert!(growth <= 2.0 * nnz, "time grew {growth:.1}x for {nnz:.1}x interactions");
}

#[test]
fn cold_start_protocol() {
    let d = fixture(10_000, 10);
    let split = cold_start_split(&d, 2, 3).unwrap();
    let cold = split.evaluated_users();
    let expected = (d.n_users() as f64 * 0.1).round() as usize;
    assert_eq!(cold.len(), expected);
    assert!(cold.iter().all(|&u| split.train.row_len(u) <= 2));

    let top = ModelSpec::default_for(ModelKind::TopPop).fit(&split.train).unwrap();
    let rec = recbench::models::Recommender::new(&top, &split.train).unwrap();
    let lists: Vec<Vec<u32>> = cold.iter().map(|&u| rec.recommend(u, 10, false).unwrap()).collect();
    assert!(lists.windows(2).all(|w| w[0] == w[1]));

    // No truncation: every cold user keeps the usual 80% training share.
    let loose = cold_start_split(&d, usize::MAX, 3).unwrap();
    let holdout = holdout_split(&d, 0.8, 0).unwrap();
    for &u in &loose.evaluated_users() {
        assert_eq!(loose.train.row_len(u), holdout.train.row_len(u));
    }

    for kind in [ModelKind::Rp3Beta, ModelKind::Als] {
        let report = cold_start_eval(&ModelSpec::default_for(kind), &d, 2, 3).unwrap();
        assert_eq!(report.n_users_evaluated, expected);
        let v = report.get(Metric::Ndcg, 10).unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn incremental_updates() {
    let d = fixture(20_000, 11);
    match incremental_update_eval(&ModelSpec::default_for(ModelKind::FunkSvd), &d, 0.05, 0).unwrap() {
        IncrementalOutcome::NotSupported { model, .. } => assert_eq!(model, "funk-svd"),
        other => panic!("expected not-supported, got {other:?}"),
    }
    let IncrementalOutcome::Measured(slim) =
        incremental_update_eval(&ModelSpec::default_for(ModelKind::Slim), &d, 0.05, 0).unwrap()
    else {
        panic!("SLIM should be measured")
    };
    assert!(slim.retrain_seconds > 5.0 * slim.incorporate_seconds, "{slim:?}");
    let IncrementalOutcome::Measured(als) =
        incremental_update_eval(&ModelSpec::default_for(ModelKind::Als), &d, 0.05, 0).unwrap()
    else {
        panic!("ALS should be measured")
    };
    assert!(als.delta(Metric::Ndcg, 10).is_some());
    assert!(als.n_new_users > 0);
}

#[test]
fn capability_matrix_matches_the_models() {
    let train = CsrMatrix::from_binary_rows(vec![vec![0, 1], vec![1, 2], vec![0, 2], vec![]], 3).unwrap();
    let matrix = CapabilityMatrix::all();
    assert_eq!(matrix.rows.len(), ModelKind::ALL.len());
    for (kind, caps) in matrix.rows {
        assert!(caps.requires_full_refit_for_new_items);
        let model = ModelSpec::default_for(kind).fit(&train).unwrap();
        match &model.params {
            ModelParams::Latent(latent) => {
                // Fold-in exists exactly where the matrix says so.
                let folds = match &model.spec {
                    ModelSpec::Als(cfg) => fold_in_user(latent, cfg, &[0, 1]).is_ok(),
                    _ => false,
                };
                assert_eq!(folds, caps.supports_user_fold_in, "{kind}");
                assert!(!caps.supports_new_user_scoring_without_refit);
            }
            _ => {
                // Item and graph models score any profile directly.
                assert!(caps.supports_new_user_scoring_without_refit, "{kind}");
                let fresh = CsrMatrix::from_binary_rows(vec![vec![0]], 3).unwrap();
                let mut out = vec![0.0; 3];
                model.score_into(&fresh, 0, &mut out);
                assert!(out.iter().all(|v| v.is_finite()));
            }
        }
    }
    assert!(!Capabilities::of(ModelKind::FunkSvd).supports_incremental_users());
    let _ = AlsConfig::default();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_ignore_order_below_k(
        perm in Just((0u32..40).collect::<Vec<_>>()).prop_shuffle(),
        rel in proptest::collection::btree_set(0u32..40, 1..15),
        k in 1usize..20,
        tail_seed in any::<u64>(),
    ) {
        let relevant: Vec<u32> = rel.into_iter().collect();
        let mut shuffled = perm.clone();
        rand::seq::SliceRandom::shuffle(&mut shuffled[k..], &mut seeded_rng(tail_seed));
        for m in Metric::ALL {
            prop_assert_eq!(m.compute(&perm, &relevant, k), m.compute(&shuffled, &relevant, k));
        }
        let hits = perm.iter().take(k).filter(|i| relevant.contains(i)).count() as f64;
        prop_assert!((precision_at_k(&perm, &relevant, k) * k as f64 - hits).abs() < 1e-9);
        prop_assert!((recall_at_k(&perm, &relevant, k) * relevant.len() as f64 - hits).abs() < 1e-9);
        let need = relevant.len().min(k);
        let full = perm.iter().take(need).all(|i| relevant.contains(i));
        prop_assert_eq!((ndcg_at_k(&perm, &relevant, k) - 1.0).abs() < 1e-12, full);
        let ap = map_at_k(&perm, &relevant, k);
        prop_assert!(ap <= 1.0 + 1e-12);
        prop_assert_eq!((ap - 1.0).abs() < 1e-12, full);
    }
}
