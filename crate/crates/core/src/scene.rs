//! Procedural scenes, goals and episodes.
//!
//! Scenes are 2.5D: a lattice of rooms separated by walls with doors, and
//! furniture-like boxes placed inside the rooms. All geometry is aligned to
//! the map lattice (`resolution`, default 0.25 m), so the ground-truth
//! rasterization is exact.
//!
//! Semantics come from room types. Each room type owns an orthonormal basis
//! vector; a category embedding is that vector plus a random offset, and an
//! instance embedding is its category embedding plus another offset. Objects
//! of the same room type therefore share a measurable cosine, which is what
//! lets a learned scorer infer "kitchen things are near other kitchen
//! things".

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{normalize, Box3, Rect};
use crate::mapping::{Cell, GridGeometry, OccupancyGrid, TruthGrid};
use crate::plan;
use crate::rng::{self, StreamRng};
use crate::sim::AgentPose;

pub const SCENE_FORMAT_VERSION: u32 = 1;
pub const EPISODES_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SUCCESS_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomTypeDef {
    pub name: String,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneGenParams {
    /// Inclusive room count range.
    pub rooms: [usize; 2],
    /// Inclusive room side length range (meters).
    pub room_size: [f64; 2],
    /// Inclusive object count range.
    pub objects: [usize; 2],
    pub embedding_dim: usize,
    pub vocabulary: Vec<RoomTypeDef>,
    pub category_spread: f64,
    pub instance_spread: f64,
    pub resolution: f64,
    pub door_width: f64,
    pub wall_height: f64,
}

impl Default for SceneGenParams {
    fn default() -> Self {
        let def = |name: &str, cats: &[&str]| RoomTypeDef {
            name: name.to_string(),
            categories: cats.iter().map(|s| s.to_string()).collect(),
        };
        SceneGenParams {
            rooms: [4, 6],
            room_size: [3.0, 5.0],
            objects: [12, 18],
            embedding_dim: 32,
            vocabulary: vec![
                def("kitchen", &["fridge", "oven", "sink", "dining_table"]),
                def("bedroom", &["bed", "wardrobe", "nightstand", "dresser"]),
                def("bathroom", &["toilet", "bathtub", "shower", "towel_rack"]),
                def("living_room", &["sofa", "tv_stand", "armchair", "coffee_table"]),
                def("office", &["desk", "bookshelf", "office_chair", "printer"]),
            ],
            category_spread: 1.0,
            instance_spread: 1.0,
            resolution: 0.25,
            door_width: 1.0,
            wall_height: 2.5,
        }
    }
}

impl SceneGenParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.vocabulary.is_empty() || self.vocabulary.iter().all(|t| t.categories.is_empty()) {
            return bad("vocabulary has zero categories");
        }
        if self.vocabulary.iter().any(|t| t.categories.is_empty()) {
            return bad("every room type needs at least one category");
        }
        if !(self.resolution > 0.0) || !(self.room_size[0] > 0.0) || !(self.door_width > 0.0) {
            return bad("extents must be positive");
        }
        if self.room_size[0] > self.room_size[1] {
            return bad("room_size range is inverted");
        }
        if self.rooms[0] == 0 || self.rooms[0] > self.rooms[1] {
            return bad("room count range must be non-empty and start at 1 or more");
        }
        if self.objects[0] > self.objects[1] {
            return bad("object count range is inverted");
        }
        if self.embedding_dim < self.vocabulary.len() {
            return bad("embedding_dim must be at least the number of room types");
        }
        if self.room_size[0] < 2.0 * self.door_width {
            return bad("rooms must be at least twice the door width");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub rect: Rect,
    /// Glass: blocks motion and depth, but not line of sight.
    #[serde(default)]
    pub transparent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub rect: Rect,
    pub room_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub id: u32,
    #[serde(rename = "box")]
    pub bbox: Box3,
    pub category: String,
    pub category_embedding: Vec<f64>,
    pub instance_embedding: Vec<f64>,
    /// Visibility mask: hidden objects never appear in sensor frames.
    #[serde(default)]
    pub hidden: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub format_version: u32,
    pub id: String,
    pub seed: u64,
    pub bounds: Rect,
    pub resolution: f64,
    pub walls: Vec<Wall>,
    pub rooms: Vec<Room>,
    pub objects: Vec<GroundTruthObject>,
}

impl SceneSpec {
    pub fn object(&self, id: u32) -> Option<&GroundTruthObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::covering(self.bounds.min, self.bounds.max, self.resolution)
    }

    pub fn diameter(&self) -> f64 {
        self.bounds.width().hypot(self.bounds.height())
    }

    /// Ground-truth occupancy: a cell is Occupied iff its interior overlaps
    /// a wall or an object footprint.
    pub fn rasterize(&self) -> TruthGrid {
        let geo = self.geometry();
        let mut grid = OccupancyGrid::new(geo, Cell::Free);
        let footprints = self
            .walls
            .iter()
            .map(|w| w.rect)
            .chain(self.objects.iter().map(|o| o.bbox.footprint()));
        for r in footprints {
            for c in plan::footprint_cells(&geo, &r) {
                grid.set(c, Cell::Occupied);
            }
        }
        TruthGrid::new(grid)
    }

    /// Ground-truth approach region of an object (Free cells within
    /// `radius` geodesic of its footprint).
    pub fn goal_region(
        &self,
        truth: &TruthGrid,
        id: u32,
        radius: f64,
    ) -> Option<Vec<crate::mapping::CellIdx>> {
        let o = self.object(id)?;
        Some(plan::approach_region(truth.grid(), &o.bbox.footprint(), radius))
    }
}

fn random_unit(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if crate::geom::norm(&v) > 1e-6 {
            normalize(&mut v);
            return v;
        }
    }
}

fn orthonormal_basis(rng: &mut StreamRng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = random_unit(rng, dim);
        for b in &basis {
            let d = crate::geom::dot(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        if crate::geom::norm(&v) > 1e-3 {
            normalize(&mut v);
            basis.push(v);
        }
    }
    basis
}

fn offset_unit(base: &[f64], spread: f64, rng: &mut StreamRng) -> Vec<f64> {
    let u = random_unit(rng, base.len());
    let mut v: Vec<f64> = base.iter().zip(&u).map(|(b, n)| b + spread * n).collect();
    normalize(&mut v);
    v
}

fn cell_rect(x: i64, y: i64, w: i64, h: i64, res: f64) -> Rect {
    Rect::new(
        [x as f64 * res, y as f64 * res],
        [(x + w) as f64 * res, (y + h) as f64 * res],
    )
}

/// Cell-unit rectangle used during layout.
#[derive(Debug, Clone, Copy)]
struct CellBox {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
}

impl CellBox {
    fn overlaps(&self, o: &CellBox) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    fn grown(&self, m: i64) -> CellBox {
        CellBox {
            x: self.x - m,
            y: self.y - m,
            w: self.w + 2 * m,
            h: self.h + 2 * m,
        }
    }
}

/// Wall run along one axis with a door gap; returns the remaining pieces.
fn wall_with_door(
    horizontal: bool,
    fixed: i64,
    start: i64,
    len: i64,
    door: Option<(i64, i64)>,
) -> Vec<CellBox> {
    let piece = |a: i64, l: i64| {
        if horizontal {
            CellBox { x: a, y: fixed, w: l, h: 1 }
        } else {
            CellBox { x: fixed, y: a, w: 1, h: l }
        }
    };
    match door {
        None => vec![piece(start, len)],
        Some((d0, dl)) => {
            let mut out = Vec::new();
            if d0 > start {
                out.push(piece(start, d0 - start));
            }
            let end = start + len;
            if d0 + dl < end {
                out.push(piece(d0 + dl, end - d0 - dl));
            }
            out
        }
    }
}

fn all_free_connected(grid: &OccupancyGrid) -> bool {
    let geo = grid.geometry;
    let Some(start) = (0..geo.len())
        .map(|i| geo.cell_from_index(i))
        .find(|&c| grid.is_free(c))
    else {
        return true;
    };
    let mut seen = vec![false; geo.len()];
    seen[geo.index(start)] = true;
    let mut queue = VecDeque::from([start]);
    let mut visited = 0usize;
    while let Some(c) = queue.pop_front() {
        visited += 1;
        for n in geo.neighbors4(c) {
            let ni = geo.index(n);
            if !seen[ni] && grid.is_free(n) {
                seen[ni] = true;
                queue.push_back(n);
            }
        }
    }
    visited == grid.count(Cell::Free)
}

/// Generates a scene; identical `(params, seed)` give identical scenes.
pub fn generate_scene(params: &SceneGenParams, seed: u64) -> Result<SceneSpec> {
    params.validate()?;
    let res = params.resolution;
    let mut layout_rng = rng::stream(seed, "scene/layout");
    let n_rooms = layout_rng.random_range(params.rooms[0]..=params.rooms[1]);
    let ncols = (n_rooms as f64).sqrt().ceil() as usize;
    let nrows = n_rooms.div_ceil(ncols);
    let last_row_rooms = n_rooms - ncols * (nrows - 1);
    let min_cells = (params.room_size[0] / res - 1e-9).ceil() as i64;
    let max_cells = ((params.room_size[1] / res + 1e-9).floor() as i64).max(min_cells);
    let door = ((params.door_width / res) - 1e-9).ceil() as i64;

    let col_w: Vec<i64> = (0..ncols)
        .map(|_| layout_rng.random_range(min_cells..=max_cells))
        .collect();
    let row_h: Vec<i64> = (0..nrows)
        .map(|_| layout_rng.random_range(min_cells..=max_cells))
        .collect();
    let col_x: Vec<i64> = (0..ncols)
        .map(|c| 1 + col_w[..c].iter().map(|w| w + 1).sum::<i64>())
        .collect();
    let row_y: Vec<i64> = (0..nrows)
        .map(|r| 1 + row_h[..r].iter().map(|h| h + 1).sum::<i64>())
        .collect();
    let total_w = 1 + col_w.iter().map(|w| w + 1).sum::<i64>();
    let total_h = 1 + row_h.iter().map(|h| h + 1).sum::<i64>();

    // rooms (the last row's final room absorbs any unused columns)
    let mut room_boxes = Vec::new();
    for r in 0..nrows {
        let k = if r + 1 == nrows { last_row_rooms } else { ncols };
        for c in 0..k {
            let w = if c + 1 == k {
                total_w - 1 - col_x[c]
            } else {
                col_w[c]
            };
            room_boxes.push(CellBox {
                x: col_x[c],
                y: row_y[r],
                w,
                h: row_h[r],
            });
        }
    }

    let mut door_rng = rng::stream(seed, "scene/doors");
    let mut wall_boxes = vec![
        CellBox { x: 0, y: 0, w: total_w, h: 1 },
        CellBox { x: 0, y: total_h - 1, w: total_w, h: 1 },
        CellBox { x: 0, y: 1, w: 1, h: total_h - 2 },
        CellBox { x: total_w - 1, y: 1, w: 1, h: total_h - 2 },
    ];
    let mut doors: Vec<CellBox> = Vec::new();
    // horizontal walls between rows, one door per column span
    for r in 1..nrows {
        let y = row_y[r] - 1;
        let mut pieces_start = 0;
        let mut cuts = Vec::new();
        for c in 0..ncols {
            let d0 = col_x[c] + door_rng.random_range(0..=(col_w[c] - door));
            cuts.push((d0, door));
            doors.push(CellBox { x: d0, y, w: door, h: 1 });
        }
        for (d0, dl) in cuts {
            wall_boxes.extend(wall_with_door(true, y, pieces_start, d0 + dl - pieces_start, Some((d0, dl))));
            pieces_start = d0 + dl;
        }
        wall_boxes.extend(wall_with_door(true, y, pieces_start, total_w - pieces_start, None));
    }
    // vertical walls between rooms of the same row
    for r in 0..nrows {
        let k = if r + 1 == nrows { last_row_rooms } else { ncols };
        for c in 1..k {
            let x = col_x[c] - 1;
            let d0 = row_y[r] + door_rng.random_range(0..=(row_h[r] - door));
            doors.push(CellBox { x, y: d0, w: 1, h: door });
            wall_boxes.extend(wall_with_door(false, x, row_y[r], row_h[r], Some((d0, door))));
        }
    }
    let walls: Vec<Wall> = wall_boxes
        .iter()
        .filter(|b| b.w > 0 && b.h > 0)
        .map(|b| Wall {
            rect: cell_rect(b.x, b.y, b.w, b.h, res),
            transparent: false,
        })
        .collect();

    // semantics
    let mut sem_rng = rng::stream(seed, "scene/semantics");
    let dim = params.embedding_dim;
    let basis = orthonormal_basis(&mut sem_rng, params.vocabulary.len(), dim);
    let mut category_table: Vec<(String, usize, Vec<f64>)> = Vec::new();
    for (t, def) in params.vocabulary.iter().enumerate() {
        for cat in &def.categories {
            let emb = offset_unit(&basis[t], params.category_spread, &mut sem_rng);
            category_table.push((cat.clone(), t, emb));
        }
    }
    let room_types: Vec<usize> = (0..room_boxes.len())
        .map(|_| sem_rng.random_range(0..params.vocabulary.len()))
        .collect();
    let rooms: Vec<Room> = room_boxes
        .iter()
        .zip(&room_types)
        .map(|(b, &t)| Room {
            rect: cell_rect(b.x, b.y, b.w, b.h, res),
            room_type: params.vocabulary[t].name.clone(),
        })
        .collect();

    let bounds = cell_rect(0, 0, total_w, total_h, res);
    let mut scene = SceneSpec {
        format_version: SCENE_FORMAT_VERSION,
        id: format!("scene-{seed}"),
        seed,
        bounds,
        resolution: res,
        walls,
        rooms,
        objects: Vec::new(),
    };

    // objects
    let mut obj_rng = rng::stream(seed, "scene/objects");
    let n_objects = obj_rng.random_range(params.objects[0]..=params.objects[1]);
    let size_choices = [2i64, 3, 4, 5];
    let keep_out: Vec<CellBox> = doors.iter().map(|d| d.grown(2)).collect();
    let mut placed: Vec<CellBox> = Vec::new();
    let mut grid = scene.rasterize().grid().clone();
    for _ in 0..n_objects {
        let room_idx = obj_rng.random_range(0..room_boxes.len());
        let room = room_boxes[room_idx];
        let t = room_types[room_idx];
        let choices: Vec<&(String, usize, Vec<f64>)> =
            category_table.iter().filter(|(_, ct, _)| *ct == t).collect();
        let &(ref category, _, ref cat_emb) = *choices.choose(&mut obj_rng).expect("non-empty");
        let height = obj_rng.random_range(0.4..1.8);
        let instance = offset_unit(cat_emb, params.instance_spread, &mut obj_rng);
        for _attempt in 0..40 {
            let w = *size_choices.choose(&mut obj_rng).expect("non-empty");
            let h = *size_choices.choose(&mut obj_rng).expect("non-empty");
            if room.w < w + 2 || room.h < h + 2 {
                continue;
            }
            let cand = CellBox {
                x: obj_rng.random_range(room.x + 1..=room.x + room.w - 1 - w),
                y: obj_rng.random_range(room.y + 1..=room.y + room.h - 1 - h),
                w,
                h,
            };
            if placed.iter().any(|p| p.grown(1).overlaps(&cand))
                || keep_out.iter().any(|k| k.overlaps(&cand))
            {
                continue;
            }
            let fp = cell_rect(cand.x, cand.y, cand.w, cand.h, res);
            let mut trial = grid.clone();
            for c in plan::footprint_cells(&trial.geometry, &fp) {
                trial.set(c, Cell::Occupied);
            }
            if !all_free_connected(&trial) {
                continue;
            }
            grid = trial;
            placed.push(cand);
            let center = fp.center();
            scene.objects.push(GroundTruthObject {
                id: scene.objects.len() as u32,
                bbox: Box3::new([center[0], center[1], 0.5 * height], [fp.width(), fp.height(), height]),
                category: category.clone(),
                category_embedding: cat_emb.clone(),
                instance_embedding: instance.clone(),
                hidden: false,
            });
            break;
        }
    }
    Ok(scene)
}

/// Checks the structural invariants of a scene.
pub fn validate_scene(scene: &SceneSpec) -> Vec<String> {
    let mut issues = Vec::new();
    for o in &scene.objects {
        let fp = o.bbox.footprint();
        if o.bbox.size.iter().any(|&s| s <= 0.0) {
            issues.push(format!("object {} has non-positive size", o.id));
        }
        if !scene.bounds.contains_rect(&fp) {
            issues.push(format!("object {} outside bounds", o.id));
        }
        if scene.walls.iter().any(|w| w.rect.overlaps(&fp)) {
            issues.push(format!("object {} intersects a wall", o.id));
        }
        for e in [&o.category_embedding, &o.instance_embedding] {
            if (crate::geom::norm(e) - 1.0).abs() > 1e-6 {
                issues.push(format!("object {} embedding not unit norm", o.id));
            }
        }
    }
    issues
}

/// Ground-truth free space is a single 4-connected component.
pub fn free_space_connected(scene: &SceneSpec) -> bool {
    all_free_connected(scene.rasterize().grid())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    Category,
    Description,
    Image,
    TaskStepSequence,
}

impl GoalKind {
    pub fn name(&self) -> &'static str {
        match self {
            GoalKind::Category => "category",
            GoalKind::Description => "description",
            GoalKind::Image => "image",
            GoalKind::TaskStepSequence => "task_step_sequence",
        }
    }
}

/// One target of a goal: an embedding and the object ids that satisfy it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalStep {
    pub embedding: Vec<f64>,
    pub target_ids: Vec<u32>,
}

/// A navigation goal. Every kind except `TaskStepSequence` has exactly one
/// step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub kind: GoalKind,
    pub steps: Vec<GoalStep>,
}

impl GoalSpec {
    pub fn embedding(&self) -> &[f64] {
        &self.steps[0].embedding
    }

    pub fn target_ids(&self) -> &[u32] {
        &self.steps[0].target_ids
    }

    pub fn all_target_ids(&self) -> BTreeSet<u32> {
        self.steps.iter().flat_map(|s| s.target_ids.iter().copied()).collect()
    }
}

fn noisy(base: &[f64], sigma: f64, rng: &mut StreamRng) -> Vec<f64> {
    let mut v: Vec<f64> = base
        .iter()
        .map(|b| {
            let n: f64 = StandardNormal.sample(rng);
            b + sigma * n
        })
        .collect();
    normalize(&mut v);
    v
}

fn same_category(scene: &SceneSpec, target: &GroundTruthObject) -> Vec<u32> {
    scene
        .objects
        .iter()
        .filter(|o| o.category == target.category)
        .map(|o| o.id)
        .collect()
}

fn goal_step(
    scene: &SceneSpec,
    kind: GoalKind,
    target: &GroundTruthObject,
    noise_sigma: f64,
    rng: &mut StreamRng,
) -> GoalStep {
    match kind {
        GoalKind::Category => GoalStep {
            embedding: target.category_embedding.clone(),
            target_ids: same_category(scene, target),
        },
        GoalKind::Image => GoalStep {
            embedding: target.instance_embedding.clone(),
            target_ids: vec![target.id],
        },
        GoalKind::Description | GoalKind::TaskStepSequence => GoalStep {
            embedding: noisy(&target.category_embedding, noise_sigma, rng),
            target_ids: same_category(scene, target),
        },
    }
}

/// Builds a goal for `target_id`.
///
/// Category goals use the category embedding, image goals the instance
/// embedding, and description goals the category embedding with Gaussian
/// noise (`noise_sigma` per component) renormalized. A task-step sequence
/// built here has a single description-like step; see
/// [`make_task_sequence`] for multi-step tasks.
pub fn make_goal(
    scene: &SceneSpec,
    kind: GoalKind,
    target_id: u32,
    noise_sigma: f64,
    seed: u64,
) -> Result<GoalSpec> {
    let target = scene.object(target_id).ok_or(Error::UnknownObject(target_id))?;
    let mut r = rng::stream_indexed(seed, "goal/noise", u64::from(target_id));
    Ok(GoalSpec {
        kind,
        steps: vec![goal_step(scene, kind, target, noise_sigma, &mut r)],
    })
}

pub fn make_task_sequence(
    scene: &SceneSpec,
    target_ids: &[u32],
    noise_sigma: f64,
    seed: u64,
) -> Result<GoalSpec> {
    let mut steps = Vec::with_capacity(target_ids.len());
    for (k, &id) in target_ids.iter().enumerate() {
        let target = scene.object(id).ok_or(Error::UnknownObject(id))?;
        let mut r = rng::stream_indexed(seed, "goal/step", k as u64);
        steps.push(goal_step(scene, GoalKind::TaskStepSequence, target, noise_sigma, &mut r));
    }
    if steps.is_empty() {
        return Err(Error::InvalidParams("task sequence needs at least one step".into()));
    }
    Ok(GoalSpec {
        kind: GoalKind::TaskStepSequence,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeGenParams {
    pub count: usize,
    pub goals_per_episode: usize,
    pub kinds: Vec<GoalKind>,
    pub description_noise: f64,
    pub max_steps: u32,
    /// Emit one task-step sequence per episode instead of independent goals.
    pub sequential: bool,
    pub success_radius: f64,
}

impl Default for EpisodeGenParams {
    fn default() -> Self {
        EpisodeGenParams {
            count: 10,
            goals_per_episode: 1,
            kinds: vec![GoalKind::Category, GoalKind::Description, GoalKind::Image],
            description_noise: 0.05,
            max_steps: 1500,
            sequential: false,
            success_radius: DEFAULT_SUCCESS_RADIUS,
        }
    }
}

/// Episode definition as stored on disk (the scene is referenced by id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeDef {
    pub id: String,
    pub scene_id: String,
    pub start_pose: AgentPose,
    pub goals: Vec<GoalSpec>,
    pub max_steps: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec {
    pub scene: Arc<SceneSpec>,
    pub def: EpisodeDef,
}

impl EpisodeSpec {
    pub fn id(&self) -> &str {
        &self.def.id
    }

    pub fn goals(&self) -> &[GoalSpec] {
        &self.def.goals
    }
}

fn random_start(
    scene: &SceneSpec,
    truth: &TruthGrid,
    rng: &mut StreamRng,
) -> Result<AgentPose> {
    let grid = truth.grid();
    let free: Vec<_> = (0..grid.geometry.len())
        .map(|i| grid.geometry.cell_from_index(i))
        .filter(|&c| grid.is_free(c))
        .collect();
    let Some(&cell) = free.choose(rng) else {
        return Err(Error::EpisodeGeneration(format!("{}: no free start cell", scene.id)));
    };
    let p = grid.center(cell);
    let turns = rng.random_range(0..12u32);
    Ok(AgentPose::new(p[0], p[1], f64::from(turns) * 30f64.to_radians()))
}

/// Samples episodes over `scene`. Goal targets within an episode have
/// disjoint target sets, every target is reachable from the start, and the
/// start is outside every goal's success region.
pub fn generate_episodes(
    scene: &Arc<SceneSpec>,
    params: &EpisodeGenParams,
    seed: u64,
) -> Result<Vec<EpisodeSpec>> {
    if params.count == 0 {
        return Ok(Vec::new());
    }
    if params.goals_per_episode == 0 || params.kinds.is_empty() {
        return Err(Error::InvalidParams("need at least one goal and one goal kind".into()));
    }
    if scene.objects.iter().filter(|o| !o.hidden).count() < params.goals_per_episode {
        return Err(Error::EpisodeGeneration(format!(
            "{}: fewer objects than goals per episode",
            scene.id
        )));
    }
    let truth = scene.rasterize();
    let regions: Vec<Vec<_>> = scene
        .objects
        .iter()
        .map(|o| plan::approach_region(truth.grid(), &o.bbox.footprint(), params.success_radius))
        .collect();
    let mut out = Vec::with_capacity(params.count);
    for e in 0..params.count {
        let mut ok = None;
        for attempt in 0..100u64 {
            let mut r = rng::stream_indexed(rng::derive_indexed(seed, "episode", e as u64), "attempt", attempt);
            let start = random_start(scene, &truth, &mut r)?;
            let sp = [start.x, start.y];
            let mut used: BTreeSet<u32> = BTreeSet::new();
            let mut targets = Vec::new();
            let mut kinds = Vec::new();
            let mut good = true;
            for _ in 0..params.goals_per_episode {
                let kind = *params.kinds.choose(&mut r).expect("non-empty kinds");
                let kind = if params.sequential { GoalKind::TaskStepSequence } else { kind };
                let options: Vec<&GroundTruthObject> = scene
                    .objects
                    .iter()
                    .filter(|o| !o.hidden && !used.contains(&o.id))
                    .filter(|o| match kind {
                        GoalKind::Image => true,
                        _ => same_category(scene, o).iter().all(|id| !used.contains(id)),
                    })
                    .collect();
                let Some(&target) = options.choose(&mut r) else {
                    good = false;
                    break;
                };
                let set: Vec<u32> = match kind {
                    GoalKind::Image => vec![target.id],
                    _ => same_category(scene, target),
                };
                used.extend(set.iter().copied());
                targets.push(target.id);
                kinds.push(kind);
            }
            if !good {
                continue;
            }
            let goals: Vec<GoalSpec> = if params.sequential {
                vec![make_task_sequence(scene, &targets, params.description_noise, r.random())?]
            } else {
                let mut gs = Vec::new();
                for (&t, &k) in targets.iter().zip(&kinds) {
                    gs.push(make_goal(scene, k, t, params.description_noise, r.random())?);
                }
                gs
            };
            let start_cell = truth.grid().cell_of(sp);
            let satisfiable = goals.iter().flat_map(|g| &g.steps).all(|step| {
                let cells: Vec<_> = step
                    .target_ids
                    .iter()
                    .flat_map(|&id| regions[id as usize].iter().copied())
                    .collect();
                let inside = start_cell.is_some_and(|c| cells.contains(&c));
                !inside && plan::geodesic_to_region(&truth, sp, &cells).is_some()
            });
            if satisfiable {
                ok = Some(EpisodeSpec {
                    scene: Arc::clone(scene),
                    def: EpisodeDef {
                        id: format!("{}/ep{:04}", scene.id, e),
                        scene_id: scene.id.clone(),
                        start_pose: start,
                        goals,
                        max_steps: params.max_steps,
                    },
                });
                break;
            }
        }
        match ok {
            Some(ep) => out.push(ep),
            None => {
                return Err(Error::EpisodeGeneration(format!(
                    "{}: episode {e} has an unreachable target after 100 attempts",
                    scene.id
                )))
            }
        }
    }
    Ok(out)
}
