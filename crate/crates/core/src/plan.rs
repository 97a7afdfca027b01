//! Shortest paths over occupancy grids.
//!
//! Movement is 4-connected over Free cells only; Unknown is never
//! traversable. Policy-side callers pass the agent's own grid; metric-side
//! callers go through [`geodesic_distance`] with a [`TruthGrid`].

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geom::Rect;
use crate::mapping::{CellIdx, GridGeometry, OccupancyGrid, TruthGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub waypoints: Vec<[f64; 2]>,
    pub length_m: f64,
}

impl PlannedPath {
    fn from_cells(grid: &OccupancyGrid, cells: &[CellIdx]) -> Self {
        PlannedPath {
            waypoints: cells.iter().map(|&c| grid.center(c)).collect(),
            length_m: cells.len().saturating_sub(1) as f64 * grid.resolution(),
        }
    }
}

/// A* with a Manhattan heuristic. Returns `None` when no path exists.
///
/// Neighbors expand in N, E, S, W order and heap ties break on (f, h,
/// insertion order), so equal-length alternatives resolve deterministically.
pub fn shortest_path(grid: &OccupancyGrid, from: [f64; 2], to: [f64; 2]) -> Option<PlannedPath> {
    let a = grid.cell_of(from)?;
    let b = grid.cell_of(to)?;
    let cells = astar_cells(grid, a, b)?;
    Some(PlannedPath::from_cells(grid, &cells))
}

pub fn astar_cells(grid: &OccupancyGrid, a: CellIdx, b: CellIdx) -> Option<Vec<CellIdx>> {
    if a == b {
        return Some(vec![a]);
    }
    if !grid.is_free(a) || !grid.is_free(b) {
        return None;
    }
    let geo = grid.geometry;
    let h = |c: CellIdx| (c.0.abs_diff(b.0) + c.1.abs_diff(b.1)) as u32;
    let mut g = vec![u32::MAX; geo.len()];
    let mut parent = vec![usize::MAX; geo.len()];
    let mut closed = vec![false; geo.len()];
    let mut heap = BinaryHeap::new();
    let mut counter = 0u64;
    g[geo.index(a)] = 0;
    heap.push(Reverse((h(a), h(a), counter, geo.index(a))));
    while let Some(Reverse((_, _, _, ci))) = heap.pop() {
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        let c = geo.cell_from_index(ci);
        if c == b {
            let mut cells = vec![c];
            let mut cur = ci;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                cells.push(geo.cell_from_index(cur));
            }
            cells.reverse();
            return Some(cells);
        }
        let gc = g[ci];
        for n in geo.neighbors4(c) {
            let ni = geo.index(n);
            if closed[ni] || !grid.is_free(n) {
                continue;
            }
            let ng = gc + 1;
            if ng < g[ni] {
                g[ni] = ng;
                parent[ni] = ci;
                counter += 1;
                heap.push(Reverse((ng + h(n), h(n), counter, ni)));
            }
        }
    }
    None
}

/// Multi-source BFS over Free cells. Entry `i` is the step count from the
/// nearest source to cell `i`, or `None` when unreachable. Non-free sources
/// are ignored.
pub fn distance_field(grid: &OccupancyGrid, sources: &[CellIdx]) -> DistanceField {
    seeded_field(grid, sources.iter().map(|&c| (c, 0)))
}

fn seeded_field(
    grid: &OccupancyGrid,
    seeds: impl IntoIterator<Item = (CellIdx, u32)>,
) -> DistanceField {
    let geo = grid.geometry;
    let mut steps = vec![None; geo.len()];
    let mut seeds: Vec<(CellIdx, u32)> = seeds
        .into_iter()
        .filter(|&(c, _)| grid.is_free(c))
        .collect();
    seeds.sort_by_key(|&(c, d)| (d, geo.index(c)));
    let mut queue = VecDeque::new();
    for (c, d) in seeds {
        let i = geo.index(c);
        if steps[i].is_none() {
            steps[i] = Some(d);
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        let d = steps[geo.index(c)].unwrap_or(0);
        for n in geo.neighbors4(c) {
            let ni = geo.index(n);
            if steps[ni].is_none() && grid.is_free(n) {
                steps[ni] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    DistanceField { geometry: geo, steps }
}

#[derive(Debug, Clone)]
pub struct DistanceField {
    pub geometry: GridGeometry,
    steps: Vec<Option<u32>>,
}

impl DistanceField {
    pub fn steps(&self, c: CellIdx) -> Option<u32> {
        self.steps[self.geometry.index(c)]
    }

    pub fn meters(&self, c: CellIdx) -> Option<f64> {
        self.steps(c).map(|s| s as f64 * self.geometry.resolution)
    }

    pub fn meters_at(&self, p: [f64; 2]) -> Option<f64> {
        self.geometry.cell_of(p).and_then(|c| self.meters(c))
    }

    /// Nearest cell (fewest steps, then lowest index) among `cells`.
    pub fn nearest(&self, cells: &[CellIdx]) -> Option<(CellIdx, u32)> {
        cells
            .iter()
            .filter_map(|&c| self.steps(c).map(|s| (c, s)))
            .min_by_key(|&(c, s)| (s, self.geometry.index(c)))
    }
}

/// Cells whose interior overlaps `footprint`.
pub fn footprint_cells(geo: &GridGeometry, footprint: &Rect) -> Vec<CellIdx> {
    let mut out = Vec::new();
    if geo.is_empty() {
        return out;
    }
    let r = geo.resolution;
    let span = |lo: f64, hi: f64, origin: f64, n: usize| {
        let a = ((lo - origin) / r).floor().max(0.0) as usize;
        let b = (((hi - origin) / r).ceil().max(0.0) as usize).min(n);
        (a.min(n), b)
    };
    let (x0, x1) = span(footprint.min[0], footprint.max[0], geo.origin[0], geo.width);
    let (y0, y1) = span(footprint.min[1], footprint.max[1], geo.origin[1], geo.height);
    let half = 0.5 * r;
    for y in y0..y1 {
        for x in x0..x1 {
            let c = geo.center((x, y));
            let cell = Rect::new([c[0] - half, c[1] - half], [c[0] + half, c[1] + half]);
            if cell.overlaps(footprint) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Free cells within `radius` (geodesic, meters) of an object footprint.
///
/// Free cells sharing an edge with a footprint cell are one step (one
/// resolution) away; the region grows through Free cells from there.
pub fn approach_region(grid: &OccupancyGrid, footprint: &Rect, radius: f64) -> Vec<CellIdx> {
    let geo = grid.geometry;
    let fp = footprint_cells(&geo, footprint);
    let mut in_fp = vec![false; geo.len()];
    for &c in &fp {
        in_fp[geo.index(c)] = true;
    }
    let mut seeds = Vec::new();
    for &c in &fp {
        for n in geo.neighbors4(c) {
            if !in_fp[geo.index(n)] && grid.is_free(n) {
                seeds.push((n, 1));
            }
        }
    }
    let field = seeded_field(grid, seeds);
    let max_steps = (radius / geo.resolution + 1e-9).floor() as u32;
    (0..geo.len())
        .map(|i| geo.cell_from_index(i))
        .filter(|&c| !in_fp[geo.index(c)] && field.steps(c).is_some_and(|s| s <= max_steps))
        .collect()
}

/// Ground-truth shortest-path length in meters. Metrics only.
pub fn geodesic_distance(truth: &TruthGrid, from: [f64; 2], to: [f64; 2]) -> Option<f64> {
    shortest_path(truth.grid(), from, to).map(|p| p.length_m)
}

/// Ground-truth shortest-path length from `from` to the nearest cell of a
/// target region. Metrics and labeling only.
pub fn geodesic_to_region(truth: &TruthGrid, from: [f64; 2], region: &[CellIdx]) -> Option<f64> {
    let grid = truth.grid();
    let start = grid.cell_of(from)?;
    let field = distance_field(grid, &[start]);
    field
        .nearest(region)
        .map(|(_, s)| s as f64 * grid.resolution())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::Cell;

    #[test]
    fn trivial_and_corridor_paths() {
        let g = OccupancyGrid::from_ascii(&[".........."], 0.25);
        let p = shortest_path(&g, [0.125, 0.125], [0.125, 0.125]).unwrap();
        assert_eq!(p.waypoints.len(), 1);
        assert_eq!(p.length_m, 0.0);
        let p = shortest_path(&g, [0.125, 0.125], [2.375, 0.125]).unwrap();
        assert_eq!(p.waypoints.len(), 10);
        assert!((p.length_m - 2.25).abs() < 1e-12);
    }

    #[test]
    fn no_path_is_distinct_from_empty() {
        let g = OccupancyGrid::from_ascii(&["..#.."], 1.0);
        assert!(shortest_path(&g, [0.5, 0.5], [4.5, 0.5]).is_none());
        let u = OccupancyGrid::from_ascii(&["..?"], 1.0);
        assert!(shortest_path(&u, [0.5, 0.5], [2.5, 0.5]).is_none());
    }

    #[test]
    fn path_cells_are_adjacent_free() {
        let g = OccupancyGrid::from_ascii(
            &["......", ".####.", ".#..#.", ".####.", "......"],
            1.0,
        );
        let p = shortest_path(&g, [0.5, 0.5], [3.5, 2.5]);
        assert!(p.is_none());
        let p = shortest_path(&g, [0.5, 0.5], [5.5, 4.5]).unwrap();
        for w in p.waypoints.windows(2) {
            let d = (w[0][0] - w[1][0]).abs() + (w[0][1] - w[1][1]).abs();
            assert!((d - 1.0).abs() < 1e-12);
            assert_eq!(g.get(g.cell_of(w[1]).unwrap()), Cell::Free);
        }
        assert!((p.length_m - 9.0).abs() < 1e-12);
    }

    #[test]
    fn approach_region_radius() {
        let g = OccupancyGrid::from_ascii(&["........", "...##...", "........"], 0.25);
        let fp = Rect::new([0.75, 0.25], [1.25, 0.5]);
        let region = approach_region(&g, &fp, 0.5);
        // edge-adjacent cells at one step, their free neighbors at two
        assert!(region.contains(&(2, 1)));
        assert!(region.contains(&(1, 1)));
        assert!(!region.contains(&(0, 1)));
        assert!(!region.contains(&(3, 1)));
    }

    #[test]
    fn distance_field_matches_astar() {
        let g = OccupancyGrid::from_ascii(&[".....", ".###.", "....."], 1.0);
        let f = distance_field(&g, &[(0, 0)]);
        let p = astar_cells(&g, (0, 0), (4, 2)).unwrap();
        assert_eq!(f.steps((4, 2)), Some(p.len() as u32 - 1));
        assert_eq!(f.steps((2, 1)), None);
    }
}
