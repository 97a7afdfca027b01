mod common;

use frontier_nav::geom::normalize;
use frontier_nav::percept::{confidence, observe, NoiseParams, SCORE_FLOOR};
use frontier_nav::plan::footprint_cells;
use frontier_nav::rng::stream_indexed;
use frontier_nav::sim::{AgentPose, SimConfig, SimState, Simulator};
use rand_distr::{Distribution, StandardNormal};

use common::{object, scene};

fn frame_of(s: &frontier_nav::scene::SceneSpec, pose: AgentPose) -> frontier_nav::sim::SensorFrame {
    let cfg = SimConfig::default();
    Simulator::new(s, &cfg).sense(&SimState::new(pose))
}

#[test]
fn noise_follows_the_documented_draw_order() {
    let s = scene("p", [8.0, 4.0], vec![], vec![object(0, [4.0, 2.0], 1, false), object(1, [5.5, 3.0], 2, false)]);
    let f = frame_of(&s, AgentPose::new(1.125, 2.125, 0.0));
    assert_eq!(f.visible_object_ids.len(), 2);
    let noise = NoiseParams {
        sigma_center: 0.1,
        sigma_log_size: 0.1,
        sigma_vocab: 0.1,
        sigma_feature: 0.1,
    };
    let qs = observe(&f, &s, &noise, &s.geometry(), 77);
    for q in &qs {
        let o = s.object(q.source_id.unwrap()).unwrap();
        let mut r = stream_indexed(77, "percept/object", u64::from(o.id));
        let mut g = || -> f64 { StandardNormal.sample(&mut r) };
        let center: Vec<f64> = o.bbox.center.iter().map(|c| c + 0.1 * g()).collect();
        let size: Vec<f64> = o.bbox.size.iter().map(|s| s * (0.1 * g()).exp()).collect();
        let mut vocab: Vec<f64> = o.category_embedding.iter().map(|v| v + 0.1 * g()).collect();
        let mut feat: Vec<f64> = o.instance_embedding.iter().map(|v| v + 0.1 * g()).collect();
        normalize(&mut vocab);
        normalize(&mut feat);
        for k in 0..3 {
            assert!((q.bbox.center[k] - center[k]).abs() < 1e-9);
            assert!((q.bbox.size[k] - size[k]).abs() < 1e-9);
        }
        for (a, b) in q.vocab_embedding.iter().zip(&vocab) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in q.feature.iter().zip(&feat) {
            assert!((a - b).abs() < 1e-9);
        }
    }
    assert_eq!(qs, observe(&f, &s, &noise, &s.geometry(), 77));
    assert_ne!(qs, observe(&f, &s, &noise, &s.geometry(), 78));
}

#[test]
fn zero_noise_gives_the_true_box() {
    let s = scene("z", [8.0, 4.0], vec![], vec![object(3, [4.0, 2.0], 0, false)]);
    let f = frame_of(&s, AgentPose::new(1.125, 2.125, 0.0));
    let qs = observe(&f, &s, &NoiseParams::zero(), &s.geometry(), 1);
    assert_eq!(qs.len(), 1);
    let q = &qs[0];
    assert_eq!(q.bbox, s.objects[0].bbox);
    assert_eq!(q.vocab_embedding, s.objects[0].category_embedding);
    assert_eq!(q.feature, s.objects[0].instance_embedding);
    assert_eq!(q.merge_count, 1);
    let d = (4.0f64 - 1.125).hypot(2.0 - 2.125);
    assert!((q.score - (1.0 - d / 5.0)).abs() < 1e-12);
    // the mask is the face toward the viewer
    let geo = s.geometry();
    let fp: Vec<u32> = footprint_cells(&geo, &s.objects[0].bbox.footprint())
        .into_iter()
        .map(|c| geo.index(c) as u32)
        .collect();
    assert!(!q.mask.is_empty() && q.mask.iter().all(|m| fp.contains(m)));
    assert!(q.mask.len() < fp.len());
}

#[test]
fn confidence_decays_to_the_floor() {
    assert!((confidence(5.0, 5.0) - SCORE_FLOOR).abs() < 1e-15);
    assert!((confidence(9.0, 5.0) - SCORE_FLOOR).abs() < 1e-15);
    assert_eq!(confidence(0.0, 5.0), 1.0);
    let mut last = 1.0;
    for k in 0..100 {
        let c = confidence(k as f64 * 0.05, 5.0);
        assert!(c <= last && (SCORE_FLOOR..=1.0).contains(&c));
        last = c;
    }
}

#[test]
fn only_visible_objects_are_observed() {
    let s = scene("v", [8.0, 4.0], vec![], vec![object(0, [4.0, 2.0], 0, false), object(1, [6.5, 2.0], 1, true)]);
    let f = frame_of(&s, AgentPose::new(1.125, 2.125, 0.0));
    let qs = observe(&f, &s, &NoiseParams::default(), &s.geometry(), 1);
    let ids: Vec<u32> = qs.iter().filter_map(|q| q.source_id).collect();
    assert_eq!(ids, f.visible_object_ids);
    assert!(!ids.contains(&1));
}
