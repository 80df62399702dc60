use std::collections::HashSet;

use proptest::prelude::*;

use omog::bank::ModelBank;
use omog::eval::{
    hits_at_k, leave_one_out_in_memory, pretrain_bank, sample_negatives, split_edges, support_set, sweep_in_memory,
    Ablation, ExperimentPlan, FoldContext, Mode, SweepPoint, Task, MIN_NEGATIVES,
};
use omog::fuse::{
    encode_nodes, fuse_models, predict_nc_zero, relevance_scores, sample_nodes, select_and_weight, Strategy,
};
use omog::pretrain::TrainConfig;
use omog::propagate::hop_stack;
use omog::synthetic::DomainSuiteSpec;
use omog::GraphDataset;

fn small_suite() -> (Vec<GraphDataset>, ModelBank) {
    let spec = DomainSuiteSpec {
        n: 150,
        d: 8,
        num_classes: 3,
        seed: 11,
        domain_offset_scale: 0.5,
        ..DomainSuiteSpec::default()
    };
    let datasets = spec.generate().unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 32,
        seed: 2,
        ..TrainConfig::default()
    };
    let bank = pretrain_bank(&datasets, &cfg).unwrap();
    (datasets, bank)
}

#[test]
fn leave_one_out_matches_manual_folds() {
    let (datasets, bank) = small_suite();
    let plan = ExperimentPlan {
        seeds: vec![0, 3],
        k: 2,
        temperature: 0.7,
        ..ExperimentPlan::default()
    };
    let report = leave_one_out_in_memory(&datasets, &bank, &plan).unwrap();
    assert_eq!(report.rows.len(), datasets.len() * 2);

    let mut means = Vec::new();
    for ds in &datasets {
        let fold = bank.without(&ds.name);
        assert!(fold.get(&ds.name).is_none());
        let hops = hop_stack(ds, fold.shape().unwrap().1).unwrap();
        let mut vals = Vec::new();
        for seed in [0, 3] {
            let sample = sample_nodes(ds.n(), 1024, seed);
            let scores = relevance_scores(&fold, &hops, Some(&sample)).unwrap();
            let w = select_and_weight(&scores, 2, Strategy::TopK, 0.7, seed).unwrap();
            let fused = fuse_models(&fold, &w).unwrap();
            let nodes: Vec<usize> = (0..ds.n()).filter(|&i| ds.label(i).is_some()).collect();
            let f = encode_nodes(&fused.source, &hops, &nodes).unwrap();
            let pred = predict_nc_zero(f.view(), ds.label_embeddings.as_ref().map(|e| e.view())).unwrap();
            let correct = nodes.iter().zip(&pred).filter(|(&i, &p)| ds.label(i) == Some(p)).count();
            let acc = correct as f64 / nodes.len() as f64;
            let row = report.rows.iter().find(|r| r.dataset == ds.name && r.seed == seed).unwrap();
            assert!((row.value - acc).abs() < 1e-12, "{} seed {seed}", ds.name);
            let names: Vec<&str> = row.selected.iter().map(|(n, _)| n.as_str()).collect();
            let want: Vec<&str> = w.indices.iter().map(|&i| fold.names()[i]).collect();
            assert_eq!(names, want);
            vals.push(acc);
        }
        means.push(vals.iter().sum::<f64>() / 2.0);
    }
    let overall = means.iter().sum::<f64>() / means.len() as f64;
    assert!((report.mean - overall).abs() < 1e-12);
}

#[test]
fn sweep_is_deterministic_and_covers_every_ablation_and_task() {
    let (datasets, bank) = small_suite();
    let points: Vec<SweepPoint> = Strategy::ALL
        .iter()
        .flat_map(|&s| (1..=3).map(move |k| SweepPoint { k, strategy: s }))
        .collect();
    let plan = ExperimentPlan {
        seeds: vec![1, 2],
        ..ExperimentPlan::default()
    };
    let a = sweep_in_memory(&datasets, &bank, &plan, &points).unwrap();
    let b = sweep_in_memory(&datasets, &bank, &plan, &points).unwrap();
    assert_eq!(a, b);

    for ablation in Ablation::ALL {
        for (task, mode) in [(Task::Nc, Mode::ZeroShot), (Task::Nc, Mode::FewShot), (Task::Lp, Mode::ZeroShot)] {
            let plan = ExperimentPlan {
                ablation,
                task,
                mode,
                shots: 3,
                ..ExperimentPlan::default()
            };
            let r = leave_one_out_in_memory(&datasets, &bank, &plan).unwrap();
            assert!(r.rows.iter().all(|row| (0.0..=1.0).contains(&row.value)), "{ablation} {task:?} {mode:?}");
            if ablation == Ablation::NoScore {
                assert!(r.rows.iter().all(|row| row.selected.len() == datasets.len() - 1));
            }
        }
    }
}

#[test]
fn held_out_entry_is_refused() {
    let (datasets, bank) = small_suite();
    let err = FoldContext::prepare(&bank, &datasets[0], &ExperimentPlan::default(), 0).unwrap_err();
    assert!(err.to_string().contains("leakage"));
}

#[test]
fn edge_split_and_negatives() {
    let (datasets, _) = small_suite();
    let adj = &datasets[0].adjacency;
    let (residual, pos) = split_edges(adj, 0.1, 4).unwrap();
    let expected = (adj.num_edges() as f64 * 0.1).round() as usize;
    assert_eq!(pos.len(), expected);
    assert_eq!(residual.num_edges() + pos.len(), adj.num_edges());
    for &(u, v) in &pos {
        assert!(adj.has_edge(u, v) && !residual.has_edge(u, v));
    }
    assert_eq!(split_edges(adj, 0.1, 4).unwrap().1, pos);

    let neg = sample_negatives(adj, pos.len(), 4).unwrap();
    assert_eq!(neg.len(), (10 * pos.len()).max(MIN_NEGATIVES));
    let distinct: HashSet<_> = neg.iter().collect();
    assert_eq!(distinct.len(), neg.len());
    assert!(neg.iter().all(|&(u, v)| u < v && !adj.has_edge(u, v)));
}

#[test]
fn support_sets_are_seeded_and_class_pure() {
    let (datasets, _) = small_suite();
    let ds = &datasets[1];
    let test: Vec<usize> = (0..50).collect();
    let s = support_set(ds, 4, &test, 9).unwrap();
    assert_eq!(s, support_set(ds, 4, &test, 9).unwrap());
    for (c, ids) in s.classes.iter().zip(&s.nodes) {
        assert!(!ids.is_empty() && ids.len() <= 4);
        assert!(ids.iter().all(|&i| ds.label(i) == Some(*c)));
    }
}

#[test]
fn hits_hand_case() {
    let mut neg: Vec<f64> = (0..150).map(|i| i as f64 / 1000.0).collect();
    neg[..99].iter_mut().for_each(|v| *v = 0.9);
    neg[99] = 0.7;
    // 100th largest negative is 0.7; only the 0.9 positive clears it.
    assert_eq!(hits_at_k(&[0.9, 0.5], &neg, 100).unwrap(), 0.5);
}

proptest! {
    #[test]
    fn hits_ignores_increasing_transforms(
        pos in proptest::collection::vec(-1.0f64..1.0, 1..40),
        neg in proptest::collection::vec(-1.0f64..1.0, 100..300),
        a in 0.1f64..4.0,
        b in -2.0f64..2.0,
    ) {
        let f = |x: &f64| (a * x + b).exp();
        let base = hits_at_k(&pos, &neg, 100).unwrap();
        let moved = hits_at_k(&pos.iter().map(f).collect::<Vec<_>>(), &neg.iter().map(f).collect::<Vec<_>>(), 100).unwrap();
        prop_assert_eq!(base, moved);
        prop_assert!((0.0..=1.0).contains(&base));
    }
}
