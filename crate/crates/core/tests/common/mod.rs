#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use frontier_nav::geom::{Box3, Rect};
use frontier_nav::mapping::{Cell, CellIdx, GridGeometry, OccupancyGrid};
use frontier_nav::scene::{
    EpisodeDef, EpisodeSpec, GoalKind, GoalSpec, GoalStep, GroundTruthObject, SceneSpec, Wall,
    SCENE_FORMAT_VERSION,
};
use frontier_nav::sim::AgentPose;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RES: f64 = 0.25;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(dim: usize, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    v
}

pub fn wall(min: [f64; 2], max: [f64; 2], transparent: bool) -> Wall {
    Wall {
        rect: Rect::new(min, max),
        transparent,
    }
}

/// Four walls of thickness one cell along the inside of `min..max`.
pub fn enclosure(min: [f64; 2], max: [f64; 2], transparent: bool) -> Vec<Wall> {
    vec![
        wall(min, [min[0] + RES, max[1]], transparent),
        wall([max[0] - RES, min[1]], max, transparent),
        wall(min, [max[0], min[1] + RES], transparent),
        wall([min[0], max[1] - RES], max, transparent),
    ]
}

pub fn object(id: u32, center: [f64; 2], axis: usize, hidden: bool) -> GroundTruthObject {
    GroundTruthObject {
        id,
        bbox: Box3::new([center[0], center[1], 0.5], [0.5, 0.5, 1.0]),
        category: format!("thing{id}"),
        category_embedding: unit(8, axis),
        instance_embedding: unit(8, axis + 4),
        hidden,
    }
}

pub fn scene(id: &str, size: [f64; 2], mut walls: Vec<Wall>, objects: Vec<GroundTruthObject>) -> SceneSpec {
    let mut all = enclosure([0.0, 0.0], size, false);
    all.append(&mut walls);
    SceneSpec {
        format_version: SCENE_FORMAT_VERSION,
        id: id.into(),
        seed: 0,
        bounds: Rect::new([0.0, 0.0], size),
        resolution: RES,
        walls: all,
        rooms: Vec::new(),
        objects,
    }
}

/// Single image-goal episode for object `target`.
pub fn episode(scene: SceneSpec, start: [f64; 2], target: u32) -> EpisodeSpec {
    let o = scene.object(target).expect("target exists").clone();
    let def = EpisodeDef {
        id: format!("{}/0", scene.id),
        scene_id: scene.id.clone(),
        start_pose: AgentPose::new(start[0], start[1], 0.0),
        goals: vec![GoalSpec {
            kind: GoalKind::Image,
            steps: vec![GoalStep {
                embedding: o.instance_embedding.clone(),
                target_ids: vec![target],
            }],
        }],
        max_steps: 1000,
    };
    EpisodeSpec {
        scene: Arc::new(scene),
        def,
    }
}

/// One scene per terminal collector status.
///
/// - `success`: open room, target in plain view.
/// - `unreachable`: target inside a sealed glass box, seen but not enterable.
/// - `invisible`: hidden target in a small open room.
/// - `failure`: target inside a sealed opaque room.
pub fn end_type_suite() -> Vec<(&'static str, EpisodeSpec)> {
    let success = scene("success", [6.0, 4.0], vec![], vec![object(1, [4.5, 2.0], 0, false)]);
    let glass = scene(
        "unreachable",
        [8.0, 5.0],
        enclosure([4.5, 1.5], [6.5, 3.5], true),
        vec![object(1, [5.5, 2.5], 1, false)],
    );
    let hidden = scene("invisible", [5.0, 4.0], vec![], vec![object(1, [3.5, 2.0], 2, true)]);
    let sealed = scene(
        "failure",
        [8.0, 5.0],
        enclosure([4.5, 1.5], [6.5, 3.5], false),
        vec![object(1, [5.5, 2.5], 3, false)],
    );
    vec![
        ("success", episode(success, [1.625, 2.125], 1)),
        ("unreachable", episode(glass, [1.625, 2.625], 1)),
        ("invisible", episode(hidden, [1.625, 2.125], 1)),
        ("failure", episode(sealed, [1.625, 2.625], 1)),
    ]
}

/// Random three-state grid.
pub fn random_grid(r: &mut impl Rng, w: usize, h: usize, p_unknown: f64, p_occ: f64) -> OccupancyGrid {
    let geo = GridGeometry::covering([0.0, 0.0], [w as f64 * RES, h as f64 * RES], RES);
    let mut g = OccupancyGrid::new(geo, Cell::Free);
    for i in 0..geo.len() {
        let u: f64 = r.random();
        let v = if u < p_unknown {
            Cell::Unknown
        } else if u < p_unknown + p_occ {
            Cell::Occupied
        } else {
            Cell::Free
        };
        g.set(geo.cell_from_index(i), v);
    }
    g
}

/// Plain BFS step counts over Free cells, written without the library.
pub fn bfs_steps(g: &OccupancyGrid, a: CellIdx, b: CellIdx) -> Option<usize> {
    if a == b {
        return Some(0);
    }
    let (w, h) = (g.width(), g.height());
    let free = |c: CellIdx| g.get(c) == Cell::Free;
    if !free(a) || !free(b) {
        return None;
    }
    let mut dist = vec![usize::MAX; w * h];
    dist[a.1 * w + a.0] = 0;
    let mut q = VecDeque::from([a]);
    while let Some((x, y)) = q.pop_front() {
        let d = dist[y * w + x];
        let mut nb = Vec::new();
        if y + 1 < h {
            nb.push((x, y + 1));
        }
        if x + 1 < w {
            nb.push((x + 1, y));
        }
        if y > 0 {
            nb.push((x, y - 1));
        }
        if x > 0 {
            nb.push((x - 1, y));
        }
        for n in nb {
            if free(n) && dist[n.1 * w + n.0] == usize::MAX {
                dist[n.1 * w + n.0] = d + 1;
                if n == b {
                    return Some(d + 1);
                }
                q.push_back(n);
            }
        }
    }
    None
}

/// Frontier cells by the raw definition: Free with an Unknown 4-neighbor.
pub fn brute_frontier_cells(g: &OccupancyGrid) -> BTreeSet<CellIdx> {
    let (w, h) = (g.width() as i64, g.height() as i64);
    let mut out = BTreeSet::new();
    for y in 0..h {
        for x in 0..w {
            if g.get((x as usize, y as usize)) != Cell::Free {
                continue;
            }
            let unknown = [(0, 1), (1, 0), (0, -1), (-1, 0)].iter().any(|(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && g.get((nx as usize, ny as usize)) == Cell::Unknown
            });
            if unknown {
                out.insert((x as usize, y as usize));
            }
        }
    }
    out
}

/// Volume of the intersection over the union, counted on a voxel lattice
/// of pitch `h` and summed one z-column at a time.
pub fn voxel_iou(a: &Box3, b: &Box3, h: f64) -> f64 {
    let (amin, amax, bmin, bmax) = (a.min(), a.max(), b.min(), b.max());
    let lo: Vec<f64> = (0..3).map(|k| amin[k].min(bmin[k])).collect();
    let hi: Vec<f64> = (0..3).map(|k| amax[k].max(bmax[k])).collect();
    let n: Vec<usize> = (0..3).map(|k| ((hi[k] - lo[k]) / h).ceil() as usize).collect();
    let inside = |min: &[f64; 3], max: &[f64; 3], k: usize, c: f64| c >= min[k] && c < max[k];
    let (mut inter, mut uni) = (0u64, 0u64);
    // per-axis membership, so the z loop is counted rather than visited
    let zs: Vec<(bool, bool)> = (0..n[2])
        .map(|i| {
            let c = lo[2] + (i as f64 + 0.5) * h;
            (inside(&amin, &amax, 2, c), inside(&bmin, &bmax, 2, c))
        })
        .collect();
    let z_both = zs.iter().filter(|z| z.0 && z.1).count() as u64;
    let z_a = zs.iter().filter(|z| z.0).count() as u64;
    let z_b = zs.iter().filter(|z| z.1).count() as u64;
    for ix in 0..n[0] {
        let cx = lo[0] + (ix as f64 + 0.5) * h;
        let (xa, xb) = (inside(&amin, &amax, 0, cx), inside(&bmin, &bmax, 0, cx));
        if !xa && !xb {
            continue;
        }
        for iy in 0..n[1] {
            let cy = lo[1] + (iy as f64 + 0.5) * h;
            let ina = xa && inside(&amin, &amax, 1, cy);
            let inb = xb && inside(&bmin, &bmax, 1, cy);
            let (ca, cb) = (if ina { z_a } else { 0 }, if inb { z_b } else { 0 });
            let both = if ina && inb { z_both } else { 0 };
            inter += both;
            uni += ca + cb - both;
        }
    }
    if uni == 0 {
        0.0
    } else {
        inter as f64 / uni as f64
    }
}
