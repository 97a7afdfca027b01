//! Perception oracle: turns a sensor frame into noisy local object queries.

use std::collections::BTreeSet;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geom::{normalize, Box3};
use crate::mapping::GridGeometry;
use crate::plan::footprint_cells;
use crate::rng;
use crate::scene::SceneSpec;
use crate::sim::SensorFrame;

/// Object hypothesis: box `b`, mask `m`, feature `f`, vocabulary
/// embedding `v`, confidence `s`, plus the number of merged observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectQuery {
    #[serde(rename = "box")]
    pub bbox: Box3,
    /// Global grid-cell ids of the observed surface.
    pub mask: BTreeSet<u32>,
    pub feature: Vec<f64>,
    pub vocab_embedding: Vec<f64>,
    pub score: f64,
    pub merge_count: u32,
    /// Ground-truth id, kept for labeling and metrics only.
    pub source_id: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub sigma_center: f64,
    pub sigma_log_size: f64,
    pub sigma_vocab: f64,
    pub sigma_feature: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            sigma_center: 0.05,
            sigma_log_size: 0.05,
            sigma_vocab: 0.05,
            sigma_feature: 0.05,
        }
    }
}

impl NoiseParams {
    pub fn zero() -> Self {
        NoiseParams {
            sigma_center: 0.0,
            sigma_log_size: 0.0,
            sigma_vocab: 0.0,
            sigma_feature: 0.0,
        }
    }
}

pub const SCORE_FLOOR: f64 = 0.05;

/// Distance-decaying confidence `clamp(1 - d/R, 0.05, 1)`.
pub fn confidence(distance: f64, max_range: f64) -> f64 {
    (1.0 - distance / max_range).clamp(SCORE_FLOOR, 1.0)
}

fn gauss(rng: &mut rng::StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn jittered_unit(base: &[f64], sigma: f64, r: &mut rng::StreamRng) -> Vec<f64> {
    let mut v: Vec<f64> = base.iter().map(|b| b + sigma * gauss(r)).collect();
    normalize(&mut v);
    v
}

/// Footprint cells on the side(s) of the box facing the viewer.
fn visible_face(geo: &GridGeometry, bbox: &Box3, viewer: [f64; 2]) -> BTreeSet<u32> {
    let fp = bbox.footprint();
    let cells = footprint_cells(geo, &fp);
    if cells.is_empty() {
        return BTreeSet::new();
    }
    let min_x = cells.iter().map(|c| c.0).min().unwrap_or(0);
    let max_x = cells.iter().map(|c| c.0).max().unwrap_or(0);
    let min_y = cells.iter().map(|c| c.1).min().unwrap_or(0);
    let max_y = cells.iter().map(|c| c.1).max().unwrap_or(0);
    let face = |c: &(usize, usize)| {
        (viewer[0] < fp.min[0] && c.0 == min_x)
            || (viewer[0] > fp.max[0] && c.0 == max_x)
            || (viewer[1] < fp.min[1] && c.1 == min_y)
            || (viewer[1] > fp.max[1] && c.1 == max_y)
    };
    let mut out: BTreeSet<u32> = cells
        .iter()
        .filter(|c| face(c))
        .map(|&c| geo.index(c) as u32)
        .collect();
    if out.is_empty() {
        out = cells.iter().map(|&c| geo.index(c) as u32).collect();
    }
    out
}

/// One query per visible object.
///
/// Noise for object `id` is drawn from the stream `(seed, id)` in a fixed
/// order: center (x, y, z), log-size (x, y, z), vocabulary (C values),
/// feature (C values).
pub fn observe(
    frame: &SensorFrame,
    scene: &SceneSpec,
    noise: &NoiseParams,
    geometry: &GridGeometry,
    seed: u64,
) -> Vec<ObjectQuery> {
    let viewer = frame.pose.xy();
    frame
        .visible_object_ids
        .iter()
        .filter_map(|&id| scene.object(id))
        .map(|o| {
            let mut r = rng::stream_indexed(seed, "percept/object", u64::from(o.id));
            let mut center = o.bbox.center;
            for c in center.iter_mut() {
                *c += noise.sigma_center * gauss(&mut r);
            }
            let mut size = o.bbox.size;
            for s in size.iter_mut() {
                *s *= (noise.sigma_log_size * gauss(&mut r)).exp();
            }
            let bbox = Box3::new(center, size);
            let vocab_embedding = jittered_unit(&o.category_embedding, noise.sigma_vocab, &mut r);
            let feature = jittered_unit(&o.instance_embedding, noise.sigma_feature, &mut r);
            let d = (o.bbox.center[0] - viewer[0]).hypot(o.bbox.center[1] - viewer[1]);
            ObjectQuery {
                bbox,
                mask: visible_face(geometry, &o.bbox, viewer),
                feature,
                vocab_embedding,
                score: confidence(d, frame.max_range),
                merge_count: 1,
                source_id: Some(o.id),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{cosine, Rect};
    use crate::scene::GroundTruthObject;
    use crate::sim::{AgentPose, SimConfig, SimState, Simulator};

    fn scene_with(center: [f64; 2]) -> SceneSpec {
        SceneSpec {
            format_version: 1,
            id: "p".into(),
            seed: 0,
            bounds: Rect::new([0.0, 0.0], [12.0, 12.0]),
            resolution: 0.25,
            walls: vec![],
            rooms: vec![],
            objects: vec![GroundTruthObject {
                id: 0,
                bbox: Box3::new([center[0], center[1], 0.5], [0.5, 0.5, 1.0]),
                category: "c".into(),
                category_embedding: vec![0.6, 0.8, 0.0],
                instance_embedding: vec![0.0, 0.6, 0.8],
                hidden: false,
            }],
        }
    }

    #[test]
    fn zero_noise_identity_and_score_floor() {
        let scene = scene_with([6.0, 1.0]);
        let cfg = SimConfig::default();
        let sim = Simulator::new(&scene, &cfg);
        let f = sim.sense(&SimState::new(AgentPose::new(1.0, 1.0, 0.0)));
        assert_eq!(f.visible_object_ids, vec![0]);
        let q = observe(&f, &scene, &NoiseParams::zero(), &scene.geometry(), 3);
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].bbox, scene.objects[0].bbox);
        assert!((cosine(&q[0].vocab_embedding, &scene.objects[0].category_embedding) - 1.0).abs() < 1e-12);
        // distance == max range
        assert!((q[0].score - SCORE_FLOOR).abs() < 1e-12);
        assert_eq!(q[0].merge_count, 1);
        assert!(!q[0].mask.is_empty());
        assert!((confidence(0.0, 5.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn center_jitter_matches_reference_draw() {
        let scene = scene_with([3.0, 1.0]);
        let cfg = SimConfig::default();
        let sim = Simulator::new(&scene, &cfg);
        let f = sim.sense(&SimState::new(AgentPose::new(1.0, 1.0, 0.0)));
        let noise = NoiseParams {
            sigma_center: 0.1,
            ..NoiseParams::zero()
        };
        let q = observe(&f, &scene, &noise, &scene.geometry(), 42);
        let mut r = rng::stream_indexed(42, "percept/object", 0);
        let expect: Vec<f64> = scene.objects[0]
            .bbox
            .center
            .iter()
            .map(|c| c + 0.1 * gauss(&mut r))
            .collect();
        for k in 0..3 {
            assert!((q[0].bbox.center[k] - expect[k]).abs() < 1e-9);
        }
        assert_eq!(q, observe(&f, &scene, &noise, &scene.geometry(), 42));
    }
}
