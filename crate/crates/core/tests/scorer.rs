mod common;

use frontier_nav::decide::{
    argmax, bce_loss, bce_loss_masked, decide_step, score, train, CandidateSet, DecideParams, DecisionKind,
    FeatureVector, FrontierCandidate, ObjectCandidate, OptimizerKind, ScorerModel, TrainParams, TrainingExample,
    FEATURE_DIM, PROB_CLAMP,
};
use frontier_nav::geom::{normalize, Box3};
use frontier_nav::mapping::FrontierQuery;
use frontier_nav::percept::ObjectQuery;
use frontier_nav::sim::AgentPose;
use rand::seq::SliceRandom;
use rand::Rng;

use common::rng;

fn random_unit(r: &mut impl Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    v
}

fn random_set(r: &mut impl Rng, objects: usize, frontiers: usize) -> CandidateSet {
    let objects = (0..objects)
        .map(|_| ObjectCandidate {
            query: ObjectQuery {
                bbox: Box3::new([r.random_range(0.0..10.0), r.random_range(0.0..10.0), 0.5], [0.5; 3]),
                mask: Default::default(),
                feature: random_unit(r, 4),
                vocab_embedding: random_unit(r, 4),
                score: r.random_range(0.05..1.0),
                merge_count: 1,
                source_id: None,
            },
            distance: if r.random_bool(0.8) { Some(r.random_range(0.0..12.0)) } else { None },
            approach: None,
        })
        .collect();
    let frontiers = (0..frontiers)
        .map(|_| FrontierCandidate {
            frontier: FrontierQuery {
                position: [r.random_range(0.0..10.0), r.random_range(0.0..10.0), 0.0],
                cluster_size: r.random_range(3..60),
                visited: false,
            },
            distance: r.random_range(0.0..12.0),
            neighbor_cos: r.random_range(-1.0..1.0),
        })
        .collect();
    CandidateSet {
        objects,
        frontiers,
        goal: random_unit(r, 4),
        pose: AgentPose::new(1.0, 1.0, 0.0),
        diameter: 15.0,
        params: DecideParams::default(),
    }
}

#[test]
fn scores_permute_with_candidates() {
    let mut r = rng(1);
    for _ in 0..200 {
        let (no, nf) = (r.random_range(0..6), r.random_range(0..6));
        let set = random_set(&mut r, no, nf);
        let model = ScorerModel::init(FEATURE_DIM, 8, r.random());
        let base = score(&set, &model);
        let d = decide_step(&set, &model);
        let chosen: Option<FeatureVector> = d.candidate_index(&set).map(|i| set.features()[i]);

        let mut shuffled = set.clone();
        let mut op: Vec<usize> = (0..set.objects.len()).collect();
        let mut fp: Vec<usize> = (0..set.frontiers.len()).collect();
        op.shuffle(&mut r);
        fp.shuffle(&mut r);
        shuffled.objects = op.iter().map(|&i| set.objects[i].clone()).collect();
        shuffled.frontiers = fp.iter().map(|&i| set.frontiers[i].clone()).collect();
        let s = score(&shuffled, &model);
        let perm: Vec<usize> = op.iter().copied().chain(fp.iter().map(|k| k + set.objects.len())).collect();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(s[j], base[i]);
        }
        let d2 = decide_step(&shuffled, &model);
        let chosen2 = d2.candidate_index(&shuffled).map(|i| shuffled.features()[i]);
        assert_eq!(chosen, chosen2, "different candidate chosen after reordering");
    }
}

#[test]
fn argmax_survives_shifts_and_monotone_maps() {
    let mut r = rng(2);
    for _ in 0..1000 {
        let n = r.random_range(1..20);
        let s: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let a = argmax(&s);
        let c = r.random_range(-100.0..100.0);
        assert_eq!(argmax(&s.iter().map(|v| v + c).collect::<Vec<_>>()), a);
        assert_eq!(argmax(&s.iter().map(|v| v.exp()).collect::<Vec<_>>()), a);
        assert_eq!(argmax(&s.iter().map(|v| 3.0 * v.powi(3)).collect::<Vec<_>>()), a);
    }
    assert_eq!(argmax(&[]), None);
    assert_eq!(argmax(&[1.0, 1.0]), Some(0));
}

#[test]
fn zero_weights_score_the_bias() {
    let mut r = rng(3);
    let mut model = ScorerModel::zeros(FEATURE_DIM, 16);
    model.b2 = 0.37;
    assert_eq!(model.param_count(), 129);
    let set = random_set(&mut r, 3, 4);
    assert!(score(&set, &model).iter().all(|&s| s == 0.37));
    // all tied: the first object is grounded
    assert_eq!(decide_step(&set, &model).kind, DecisionKind::Ground(0));
    let frontiers_only = random_set(&mut r, 0, 4);
    assert_eq!(decide_step(&frontiers_only, &model).kind, DecisionKind::Explore(0));
    assert_eq!(decide_step(&random_set(&mut r, 0, 0), &model).kind, DecisionKind::Terminate);
}

#[test]
fn cosine_weight_prefers_the_matching_object() {
    let mut model = ScorerModel::zeros(FEATURE_DIM, 1);
    model.w1[0] = 0.5;
    model.w2[0] = 1.0;
    let mut r = rng(4);
    for _ in 0..200 {
        let set = random_set(&mut r, 5, 0);
        let feats = set.features();
        let s = score(&set, &model);
        for i in 0..feats.len() {
            for j in 0..feats.len() {
                if feats[i][0] > feats[j][0] {
                    assert!(s[i] > s[j]);
                }
            }
        }
        let best = (0..feats.len()).max_by(|&a, &b| feats[a][0].total_cmp(&feats[b][0])).unwrap();
        assert_eq!(decide_step(&set, &model).kind, DecisionKind::Ground(best));
    }
}

fn separable(r: &mut impl Rng, n: usize) -> Vec<TrainingExample> {
    (0..n)
        .map(|_| {
            let k = r.random_range(2..8);
            let label = r.random_range(0..k);
            let features = (0..k)
                .map(|i| {
                    let mut f = [0.0; FEATURE_DIM];
                    f[0] = if i == label { r.random_range(0.7..1.0) } else { r.random_range(-0.5..0.4) };
                    f[2] = r.random_range(0.0..1.0);
                    f[3] = r.random_range(0.0..1.0);
                    f[4] = 1.0;
                    f
                })
                .collect();
            TrainingExample { features, label, ignore: vec![] }
        })
        .collect()
}

#[test]
fn separable_toy_set_is_learned() {
    let data = separable(&mut rng(5), 400);
    let p = TrainParams {
        learning_rate: 1e-2,
        epochs: 40,
        ..TrainParams::default()
    };
    let (_, log) = train(&data, &p, 1).unwrap();
    assert!(log.final_accuracy >= 0.99, "accuracy {}", log.final_accuracy);
    assert!(*log.epoch_losses.last().unwrap() < log.initial_loss);
}

#[test]
fn one_repeated_record_descends_monotonically() {
    let ex = separable(&mut rng(6), 1).remove(0);
    let data = vec![ex; 16];
    let p = TrainParams {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 0.05,
        epochs: 50,
        batch_size: 16,
        ..TrainParams::default()
    };
    let (_, log) = train(&data, &p, 2).unwrap();
    let mut last = log.initial_loss;
    for &l in &log.epoch_losses {
        assert!(l <= last + 1e-12, "loss rose from {last} to {l}");
        last = l;
    }
    assert!(last < log.initial_loss);
}

#[test]
fn training_is_deterministic() {
    let data = separable(&mut rng(7), 100);
    let p = TrainParams::default();
    let (a, la) = train(&data, &p, 3).unwrap();
    let (b, lb) = train(&data, &p, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    let (c, _) = train(&data, &p, 4).unwrap();
    assert_ne!(a, c);
    assert!(train(&[], &p, 3).is_err());
    let bad = TrainingExample {
        features: vec![[0.0; FEATURE_DIM]],
        label: 3,
        ignore: vec![],
    };
    assert!(train(&[bad], &p, 3).is_err());
}

#[test]
fn bce_analytic_values() {
    let ln2 = std::f64::consts::LN_2;
    let (l, g) = bce_loss(&[0.0], &[1.0]).unwrap();
    assert!((l - ln2).abs() < 1e-15 && (g[0] + 0.5).abs() < 1e-15);
    let (l, g) = bce_loss(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
    assert!((l - ln2).abs() < 1e-15);
    assert!((g[0] + 0.25).abs() < 1e-15 && (g[1] - 0.25).abs() < 1e-15);
    let z: f64 = 1.3;
    let p = 1.0 / (1.0 + (-z).exp());
    let (l, g) = bce_loss(&[z], &[0.0]).unwrap();
    assert!((l + (1.0 - p).ln()).abs() < 1e-12 && (g[0] - p).abs() < 1e-12);
    // saturated: the loss is capped and the gradient vanishes
    let (l, g) = bce_loss(&[100.0], &[0.0]).unwrap();
    assert!((l + PROB_CLAMP.ln()).abs() < 1e-6 && g[0] == 0.0);
    let (l, _) = bce_loss(&[-100.0], &[1.0]).unwrap();
    assert!((l + PROB_CLAMP.ln()).abs() < 1e-6);
    assert!(bce_loss(&[0.0], &[1.0, 0.0]).is_err());
    let (l, g) = bce_loss_masked(&[0.0, 5.0], &[1.0, 0.0], Some(&[true, false])).unwrap();
    assert!((l - ln2).abs() < 1e-15 && g[1] == 0.0);
    assert_eq!(bce_loss(&[], &[]).unwrap().0, 0.0);
}
