//! Episode runtime shared by the data collector and the evaluator.
//!
//! Holds one agent's simulator state, occupancy grid, memory bank and
//! visited-frontier list, and implements the movement primitives both
//! drivers are built from: spin-and-update, go-to with replanning, and
//! arrival (spin, then frontier recomputation).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::decide::DecideParams;
use crate::geom::heading_dir;
use crate::mapping::{Cell, CellIdx, FrontierQuery, OccupancyGrid, TruthGrid};
use crate::memory::{MemoryBank, DEFAULT_EPSILON};
use crate::percept::{observe, NoiseParams};
use crate::plan::{astar_cells, geodesic_to_region};
use crate::rng;
use crate::scene::{SceneSpec, DEFAULT_SUCCESS_RADIUS};
use crate::sim::{ActionCommand, AgentPose, FollowStatus, SensorFrame, SimConfig, SimState, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeParams {
    pub sim: SimConfig,
    pub noise: NoiseParams,
    pub epsilon: f64,
    pub decide: DecideParams,
    pub success_radius: f64,
    pub visited_radius: f64,
    /// Replans allowed per go-to after a blocked move.
    pub max_replans: usize,
}

impl Default for RuntimeParams {
    fn default() -> Self {
        RuntimeParams {
            sim: SimConfig::default(),
            noise: NoiseParams::default(),
            epsilon: DEFAULT_EPSILON,
            decide: DecideParams::default(),
            success_radius: DEFAULT_SUCCESS_RADIUS,
            visited_radius: 0.5,
            max_replans: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoStatus {
    Arrived,
    NoPath,
    Budget,
}

/// Mutable state of one agent in one scene.
#[derive(Debug, Clone)]
pub struct AgentRuntime<'a> {
    pub scene: &'a SceneSpec,
    pub params: &'a RuntimeParams,
    pub state: SimState,
    pub grid: OccupancyGrid,
    pub bank: MemoryBank,
    pub visited: Vec<FrontierQuery>,
    /// Every object id seen so far.
    pub visible_ids: BTreeSet<u32>,
    /// Frontiers from the most recent arrival.
    pub frontiers: Vec<FrontierQuery>,
    pub actions: u64,
    pub forward_moves: u64,
    frames: u64,
    percept_seed: u64,
    /// Number of frontier extractions and arrivals; equal by construction.
    pub frontier_calls: u64,
    pub arrivals: u64,
}

impl<'a> AgentRuntime<'a> {
    pub fn new(scene: &'a SceneSpec, params: &'a RuntimeParams, start: AgentPose, seed: u64) -> Self {
        AgentRuntime {
            scene,
            params,
            state: SimState::new(start),
            grid: OccupancyGrid::new(scene.geometry(), Cell::Unknown),
            bank: MemoryBank::new(params.epsilon),
            visited: Vec::new(),
            visible_ids: BTreeSet::new(),
            frontiers: Vec::new(),
            actions: 0,
            forward_moves: 0,
            frames: 0,
            percept_seed: rng::derive(seed, "agent/percept"),
            frontier_calls: 0,
            arrivals: 0,
        }
    }

    pub fn sim(&self) -> Simulator<'a> {
        Simulator::new(self.scene, &self.params.sim)
    }

    pub fn pose(&self) -> AgentPose {
        self.state.pose
    }

    /// Clears memory, map and exploration history; pose and counters stay.
    pub fn reset_memory(&mut self) {
        self.grid = OccupancyGrid::new(self.scene.geometry(), Cell::Unknown);
        self.bank.clear();
        self.visited.clear();
        self.visible_ids.clear();
        self.frontiers.clear();
    }

    /// Perception, memory ingestion and map integration for one frame.
    pub fn update(&mut self, frame: &SensorFrame) {
        let seed = rng::derive_indexed(self.percept_seed, "frame", self.frames);
        self.frames += 1;
        let locals = observe(frame, self.scene, &self.params.noise, &self.grid.geometry, seed);
        self.bank.ingest(&locals);
        self.grid.integrate(frame);
        self.visible_ids.extend(frame.visible_object_ids.iter().copied());
    }

    /// Senses the current state without acting.
    pub fn look(&mut self) {
        let frame = self.sim().sense(&self.state);
        self.update(&frame);
    }

    /// Full turn in place, sensing after every turn. Returns false when the
    /// budget ran out first.
    pub fn spin(&mut self, budget: u64) -> bool {
        let sim = self.sim();
        for _ in 0..self.params.sim.turns_per_revolution() {
            if self.actions >= budget {
                return false;
            }
            self.state = sim.step(&self.state, ActionCommand::TurnLeft);
            self.actions += 1;
            let frame = sim.sense(&self.state);
            self.update(&frame);
        }
        true
    }

    /// Spin, then recompute frontiers. The only place frontiers are
    /// extracted.
    pub fn arrive(&mut self, budget: u64) -> bool {
        let done = self.spin(budget);
        self.arrivals += 1;
        self.frontiers = self.grid.extract_frontiers(&self.visited, self.params.visited_radius);
        self.frontier_calls += 1;
        done
    }

    pub fn mark_visited(&mut self, f: FrontierQuery) {
        self.visited.push(FrontierQuery { visited: true, ..f });
    }

    pub fn cell(&self) -> Option<CellIdx> {
        self.grid.cell_of(self.state.pose.xy())
    }

    /// Drives to `target` over the agent's grid, replanning after blocked
    /// moves. Frames sensed along the way update memory and map.
    pub fn go_to(&mut self, target: CellIdx, budget: u64) -> GoStatus {
        let sim = self.sim();
        for _ in 0..=self.params.max_replans {
            let Some(start) = self.cell() else {
                return GoStatus::NoPath;
            };
            let Some(cells) = astar_cells(&self.grid, start, target) else {
                return GoStatus::NoPath;
            };
            let waypoints: Vec<[f64; 2]> = cells.iter().map(|&c| self.grid.center(c)).collect();
            let mut frames = Vec::new();
            let remaining = budget.saturating_sub(self.actions);
            let out = sim.follow_path(&self.state, &waypoints, remaining, |f| frames.push(f.clone()));
            self.state = out.state;
            self.actions += out.actions;
            self.forward_moves += out.forward_moves;
            for f in &frames {
                self.update(f);
            }
            match out.status {
                FollowStatus::Arrived => return GoStatus::Arrived,
                FollowStatus::BudgetExhausted => return GoStatus::Budget,
                FollowStatus::ReplanNeeded => {
                    self.state.blocked = false;
                    let d = heading_dir(self.state.pose.heading);
                    let s = self.params.sim.step_size;
                    let ahead = [self.state.pose.x + s * d[0], self.state.pose.y + s * d[1]];
                    match self.grid.cell_of(ahead) {
                        Some(c) if Some(c) != self.cell() => self.grid.mark_occupied(c),
                        _ => return GoStatus::NoPath,
                    }
                }
            }
        }
        GoStatus::NoPath
    }

    /// Path length so far: one step size per executed forward move.
    pub fn path_length(&self) -> f64 {
        self.forward_moves as f64 * self.params.sim.step_size
    }
}

/// Union of ground-truth success regions of `ids`.
pub fn success_region(scene: &SceneSpec, truth: &TruthGrid, ids: &[u32], radius: f64) -> Vec<CellIdx> {
    let mut cells: Vec<CellIdx> = ids
        .iter()
        .filter_map(|&id| scene.goal_region(truth, id, radius))
        .flatten()
        .collect();
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// Ground-truth geodesic distance from `from` to the nearest success cell.
pub fn distance_to_targets(
    scene: &SceneSpec,
    truth: &TruthGrid,
    from: [f64; 2],
    ids: &[u32],
    radius: f64,
) -> Option<f64> {
    geodesic_to_region(truth, from, &success_region(scene, truth, ids, radius))
}

/// Free cells on a lattice spaced `spacing` meters, used by scripted sweeps.
pub fn sweep_cells(truth: &TruthGrid, spacing: f64) -> Vec<CellIdx> {
    let grid = truth.grid();
    let stride = ((spacing / grid.resolution()).round() as usize).max(1);
    let mut out = Vec::new();
    for y in (stride / 2..grid.height()).step_by(stride) {
        for x in (stride / 2..grid.width()).step_by(stride) {
            if grid.is_free((x, y)) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Scripted full-scene sweep: the agent is placed at every lattice cell in
/// turn and spins there. Returns the final runtime.
pub fn scripted_sweep<'a>(
    scene: &'a SceneSpec,
    params: &'a RuntimeParams,
    spacing: f64,
    seed: u64,
) -> AgentRuntime<'a> {
    let truth = scene.rasterize();
    let cells = sweep_cells(&truth, spacing);
    let start = cells
        .first()
        .map(|&c| truth.grid().center(c))
        .unwrap_or(scene.bounds.center());
    let mut rt = AgentRuntime::new(scene, params, AgentPose::new(start[0], start[1], 0.0), seed);
    for c in cells {
        let p = truth.grid().center(c);
        rt.state = SimState::new(AgentPose::new(p[0], p[1], 0.0));
        rt.spin(u64::MAX);
    }
    rt
}
