//! Occupancy grid maintenance and frontier extraction.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::sim::SensorFrame;

/// Cell index as `(column, row)`.
pub type CellIdx = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Unknown,
    Free,
    Occupied,
}

/// Placement of a regular 2D lattice in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl GridGeometry {
    /// Smallest lattice covering `[min, max]` at `resolution`.
    pub fn covering(min: [f64; 2], max: [f64; 2], resolution: f64) -> Self {
        let width = (((max[0] - min[0]) / resolution) - 1e-9).ceil().max(1.0) as usize;
        let height = (((max[1] - min[1]) / resolution) - 1e-9).ceil().max(1.0) as usize;
        GridGeometry {
            origin: min,
            resolution,
            width,
            height,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, c: CellIdx) -> usize {
        c.1 * self.width + c.0
    }

    pub fn cell_from_index(&self, i: usize) -> CellIdx {
        (i % self.width, i / self.width)
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<CellIdx> {
        let fx = ((p[0] - self.origin[0]) / self.resolution).floor();
        let fy = ((p[1] - self.origin[1]) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn center(&self, c: CellIdx) -> [f64; 2] {
        [
            self.origin[0] + (c.0 as f64 + 0.5) * self.resolution,
            self.origin[1] + (c.1 as f64 + 0.5) * self.resolution,
        ]
    }

    /// 4-neighbors in N, E, S, W order (N = +y).
    pub fn neighbors4(&self, c: CellIdx) -> impl Iterator<Item = CellIdx> {
        let (w, h) = (self.width as isize, self.height as isize);
        let (x, y) = (c.0 as isize, c.1 as isize);
        [(0isize, 1isize), (1, 0), (0, -1), (-1, 0)]
            .into_iter()
            .filter_map(move |(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                (nx >= 0 && ny >= 0 && nx < w && ny < h).then_some((nx as usize, ny as usize))
            })
    }

    pub fn neighbors8(&self, c: CellIdx) -> impl Iterator<Item = CellIdx> {
        let (w, h) = (self.width as isize, self.height as isize);
        let (x, y) = (c.0 as isize, c.1 as isize);
        (-1isize..=1)
            .flat_map(|dy| (-1isize..=1).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx != 0 || dy != 0)
            .filter_map(move |(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                (nx >= 0 && ny >= 0 && nx < w && ny < h).then_some((nx as usize, ny as usize))
            })
    }

    /// Exact cell traversal of the segment `a -> b` (every cell whose
    /// interior the segment passes through, in order). Stops at the grid edge.
    pub fn traverse(&self, a: [f64; 2], b: [f64; 2]) -> Vec<CellIdx> {
        let mut out = Vec::new();
        let p0 = [
            (a[0] - self.origin[0]) / self.resolution,
            (a[1] - self.origin[1]) / self.resolution,
        ];
        let p1 = [
            (b[0] - self.origin[0]) / self.resolution,
            (b[1] - self.origin[1]) / self.resolution,
        ];
        let mut ix = p0[0].floor() as i64;
        let mut iy = p0[1].floor() as i64;
        let ex = p1[0].floor() as i64;
        let ey = p1[1].floor() as i64;
        let d = [p1[0] - p0[0], p1[1] - p0[1]];
        let step = |v: f64| if v > 0.0 { 1i64 } else { -1i64 };
        let (sx, sy) = (step(d[0]), step(d[1]));
        let t_next = |p: f64, i: i64, dv: f64| {
            if dv > 0.0 {
                ((i + 1) as f64 - p) / dv
            } else if dv < 0.0 {
                (p - i as f64) / -dv
            } else {
                f64::INFINITY
            }
        };
        let mut tmx = t_next(p0[0], ix, d[0]);
        let mut tmy = t_next(p0[1], iy, d[1]);
        let tdx = if d[0] != 0.0 { 1.0 / d[0].abs() } else { f64::INFINITY };
        let tdy = if d[1] != 0.0 { 1.0 / d[1].abs() } else { f64::INFINITY };
        let limit = (d[0].abs() + d[1].abs()).ceil() as usize + 2;
        for _ in 0..=limit {
            if ix < 0 || iy < 0 || ix >= self.width as i64 || iy >= self.height as i64 {
                break;
            }
            out.push((ix as usize, iy as usize));
            if ix == ex && iy == ey {
                break;
            }
            const TIE: f64 = 1e-12;
            if tmx < tmy - TIE {
                if tmx > 1.0 {
                    break;
                }
                ix += sx;
                tmx += tdx;
            } else if tmy < tmx - TIE {
                if tmy > 1.0 {
                    break;
                }
                iy += sy;
                tmy += tdy;
            } else {
                if tmx > 1.0 {
                    break;
                }
                ix += sx;
                iy += sy;
                tmx += tdx;
                tmy += tdy;
            }
        }
        out
    }
}

/// Three-state occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub geometry: GridGeometry,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn new(geometry: GridGeometry, fill: Cell) -> Self {
        OccupancyGrid {
            geometry,
            cells: vec![fill; geometry.len()],
        }
    }

    /// Builds a grid from rows of characters: `?` Unknown, `.` Free,
    /// `#` Occupied. The first string is the top row (highest y).
    pub fn from_ascii(rows: &[&str], resolution: f64) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let geometry = GridGeometry {
            origin: [0.0, 0.0],
            resolution,
            width,
            height,
        };
        let mut grid = OccupancyGrid::new(geometry, Cell::Unknown);
        for (r, row) in rows.iter().enumerate() {
            let y = height - 1 - r;
            for (x, ch) in row.chars().enumerate() {
                let cell = match ch {
                    '.' => Cell::Free,
                    '#' => Cell::Occupied,
                    _ => Cell::Unknown,
                };
                grid.set((x, y), cell);
            }
        }
        grid
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn resolution(&self) -> f64 {
        self.geometry.resolution
    }

    pub fn get(&self, c: CellIdx) -> Cell {
        self.cells[self.geometry.index(c)]
    }

    pub fn set(&mut self, c: CellIdx, v: Cell) {
        let i = self.geometry.index(c);
        self.cells[i] = v;
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn is_free(&self, c: CellIdx) -> bool {
        self.get(c) == Cell::Free
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<CellIdx> {
        self.geometry.cell_of(p)
    }

    pub fn center(&self, c: CellIdx) -> [f64; 2] {
        self.geometry.center(c)
    }

    pub fn count(&self, v: Cell) -> usize {
        self.cells.iter().filter(|&&c| c == v).count()
    }

    /// Marks a cell Occupied (used when a move is physically blocked).
    pub fn mark_occupied(&mut self, c: CellIdx) {
        self.set(c, Cell::Occupied);
    }

    /// Raycasts every depth reading of `frame` into the grid.
    ///
    /// Traversed cells become Free, the terminal cell of a ray that hit
    /// geometry becomes Occupied. Occupied is never downgraded.
    pub fn integrate(&mut self, frame: &SensorFrame) {
        let origin = [frame.pose.x, frame.pose.y];
        let hit_limit = frame.max_range - 1e-9;
        for ray in &frame.depth_rays {
            let dir = [ray.angle.cos(), ray.angle.sin()];
            let hit = ray.range < hit_limit;
            // a hit lies on the obstacle boundary; nudge into the obstacle cell
            let reach = if hit { ray.range + 1e-7 } else { ray.range };
            let end = [origin[0] + reach * dir[0], origin[1] + reach * dir[1]];
            let cells = self.geometry.traverse(origin, end);
            let n = cells.len();
            for (k, c) in cells.into_iter().enumerate() {
                let last = k + 1 == n;
                let target = if last && hit { Cell::Occupied } else { Cell::Free };
                if self.get(c) != Cell::Occupied {
                    self.set(c, target);
                }
            }
        }
    }

    /// Free cells with at least one Unknown 4-neighbor.
    pub fn frontier_cells(&self) -> Vec<CellIdx> {
        let geo = self.geometry;
        (0..geo.len())
            .map(|i| geo.cell_from_index(i))
            .filter(|&c| {
                self.get(c) == Cell::Free
                    && geo.neighbors4(c).any(|n| self.get(n) == Cell::Unknown)
            })
            .collect()
    }

    /// Groups frontier cells into 8-connected clusters and returns one
    /// waypoint per cluster at the member cell nearest the centroid.
    /// Clusters whose centroid lies within `visited_radius` of a visited
    /// frontier are flagged `visited`.
    pub fn extract_frontiers(
        &self,
        visited: &[FrontierQuery],
        visited_radius: f64,
    ) -> Vec<FrontierQuery> {
        let geo = self.geometry;
        let cells = self.frontier_cells();
        let mut is_frontier = vec![false; geo.len()];
        for &c in &cells {
            is_frontier[geo.index(c)] = true;
        }
        let mut seen = vec![false; geo.len()];
        let mut out = Vec::new();
        for &seed in &cells {
            if seen[geo.index(seed)] {
                continue;
            }
            let mut members = Vec::new();
            let mut queue = VecDeque::from([seed]);
            seen[geo.index(seed)] = true;
            while let Some(c) = queue.pop_front() {
                members.push(c);
                for n in geo.neighbors8(c) {
                    let ni = geo.index(n);
                    if is_frontier[ni] && !seen[ni] {
                        seen[ni] = true;
                        queue.push_back(n);
                    }
                }
            }
            members.sort_by_key(|&c| geo.index(c));
            let k = members.len() as f64;
            let mut centroid = [0.0, 0.0];
            for &c in &members {
                let p = geo.center(c);
                centroid[0] += p[0] / k;
                centroid[1] += p[1] / k;
            }
            let mut best = members[0];
            let mut best_d = f64::INFINITY;
            for &c in &members {
                let p = geo.center(c);
                let d = (p[0] - centroid[0]).hypot(p[1] - centroid[1]);
                if d < best_d - 1e-12 {
                    best_d = d;
                    best = c;
                }
            }
            let p = geo.center(best);
            let was_visited = visited.iter().any(|v| {
                (v.position[0] - centroid[0]).hypot(v.position[1] - centroid[1])
                    <= visited_radius + 1e-9
            });
            out.push(FrontierQuery {
                position: [p[0], p[1], 0.0],
                cluster_size: members.len(),
                visited: was_visited,
            });
        }
        out
    }

    /// True iff a 4-connected path of Free cells joins the two points.
    pub fn is_reachable(&self, from: [f64; 2], to: [f64; 2]) -> bool {
        let (Some(a), Some(b)) = (self.cell_of(from), self.cell_of(to)) else {
            return false;
        };
        if a == b {
            return true;
        }
        if !self.is_free(a) || !self.is_free(b) {
            return false;
        }
        let geo = self.geometry;
        let mut seen = vec![false; geo.len()];
        let mut queue = VecDeque::from([a]);
        seen[geo.index(a)] = true;
        while let Some(c) = queue.pop_front() {
            if c == b {
                return true;
            }
            for n in geo.neighbors4(c) {
                let ni = geo.index(n);
                if !seen[ni] && self.is_free(n) {
                    seen[ni] = true;
                    queue.push_back(n);
                }
            }
        }
        false
    }

    /// Binary PGM (P5): Unknown=128, Free=255, Occupied=0; top row first.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (w, h) = (self.width(), self.height());
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for y in (0..h).rev() {
            for x in 0..w {
                out.push(match self.get((x, y)) {
                    Cell::Unknown => 128,
                    Cell::Free => 255,
                    Cell::Occupied => 0,
                });
            }
        }
        out
    }
}

/// Ground-truth rasterization of a scene. Only metrics and data labeling
/// read it; policies see the agent's own [`OccupancyGrid`].
///
/// Every read through [`TruthGrid::grid`] is counted so tests can assert
/// that a policy step never touches ground truth.
#[derive(Debug)]
pub struct TruthGrid {
    grid: OccupancyGrid,
    reads: AtomicU64,
}

impl TruthGrid {
    pub fn new(grid: OccupancyGrid) -> Self {
        TruthGrid {
            grid,
            reads: AtomicU64::new(0),
        }
    }

    pub fn grid(&self) -> &OccupancyGrid {
        self.reads.fetch_add(1, Ordering::Relaxed);
        THREAD_TRUTH_READS.with(|c| c.set(c.get() + 1));
        &self.grid
    }

    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }
}

impl Clone for TruthGrid {
    fn clone(&self) -> Self {
        TruthGrid::new(self.grid.clone())
    }
}

impl PartialEq for TruthGrid {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
    }
}

thread_local! {
    static THREAD_TRUTH_READS: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

/// Ground-truth reads made on the calling thread, across every
/// [`TruthGrid`].
pub fn thread_truth_reads() -> u64 {
    THREAD_TRUTH_READS.with(|c| c.get())
}

/// Exploration target on the free/unknown boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierQuery {
    pub position: [f64; 3],
    pub cluster_size: usize,
    pub visited: bool,
}

impl FrontierQuery {
    pub fn xy(&self) -> [f64; 2] {
        [self.position[0], self.position[1]]
    }
}
