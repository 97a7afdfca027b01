//! Discrete-time agent simulator: planar pose, the move/turn action set,
//! field-of-view sensing, and waypoint following.

use serde::{Deserialize, Serialize};

use crate::geom::{heading_dir, wrap_angle, wrap_diff};
use crate::scene::SceneSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: f64,
    pub y: f64,
    /// Radians in `[0, 2π)`.
    pub heading: f64,
}

impl AgentPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        AgentPose {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionCommand {
    MoveForward,
    TurnLeft,
    TurnRight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub step_size: f64,
    pub turn_degrees: f64,
    pub max_range: f64,
    pub fov_degrees: f64,
    pub ray_count: usize,
    /// Frames sensed per path leg, evenly subsampled over its actions.
    pub frames_per_leg: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            step_size: 0.25,
            turn_degrees: 30.0,
            max_range: 5.0,
            fov_degrees: 90.0,
            ray_count: 180,
            frames_per_leg: 18,
        }
    }
}

impl SimConfig {
    pub fn turn_increment(&self) -> f64 {
        self.turn_degrees.to_radians()
    }

    /// Turns in one full spin.
    pub fn turns_per_revolution(&self) -> usize {
        (360.0 / self.turn_degrees).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub pose: AgentPose,
    pub step: u64,
    pub blocked: bool,
}

impl SimState {
    pub fn new(pose: AgentPose) -> Self {
        SimState {
            pose,
            step: 0,
            blocked: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRay {
    /// World-frame angle (radians).
    pub angle: f64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub timestamp: u64,
    pub pose: AgentPose,
    pub visible_object_ids: Vec<u32>,
    pub depth_rays: Vec<DepthRay>,
    pub max_range: f64,
}

/// Read-only simulator over a scene. Every method is a pure function of its
/// arguments.
#[derive(Debug, Clone, Copy)]
pub struct Simulator<'a> {
    pub scene: &'a SceneSpec,
    pub config: &'a SimConfig,
}

impl<'a> Simulator<'a> {
    pub fn new(scene: &'a SceneSpec, config: &'a SimConfig) -> Self {
        Simulator { scene, config }
    }

    /// True when the closed segment `a -> b` touches no wall or object.
    pub fn segment_free(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        if !self.scene.bounds.contains(b) {
            return false;
        }
        let walls = self.scene.walls.iter().map(|w| w.rect);
        let objects = self.scene.objects.iter().map(|o| o.bbox.footprint());
        !walls.chain(objects).any(|r| r.intersects_segment(a, b))
    }

    pub fn point_free(&self, p: [f64; 2]) -> bool {
        self.segment_free(p, p)
    }

    pub fn step(&self, state: &SimState, action: ActionCommand) -> SimState {
        let mut next = *state;
        next.step += 1;
        next.blocked = false;
        let inc = self.config.turn_increment();
        match action {
            ActionCommand::MoveForward => {
                let d = heading_dir(state.pose.heading);
                let s = self.config.step_size;
                let from = state.pose.xy();
                let to = [from[0] + s * d[0], from[1] + s * d[1]];
                if self.segment_free(from, to) {
                    next.pose.x = to[0];
                    next.pose.y = to[1];
                } else {
                    next.blocked = true;
                }
            }
            ActionCommand::TurnLeft | ActionCommand::TurnRight => {
                let sign = if action == ActionCommand::TurnLeft { 1.0 } else { -1.0 };
                next.pose.heading = snap_heading(state.pose.heading + sign * inc, inc);
            }
        }
        next
    }

    /// Line of sight between two points; transparent walls do not occlude,
    /// and the footprint of `ignore` (the observed object) is skipped.
    pub fn line_of_sight(&self, from: [f64; 2], to: [f64; 2], ignore: Option<u32>) -> bool {
        let walls = self
            .scene
            .walls
            .iter()
            .filter(|w| !w.transparent)
            .any(|w| w.rect.segment_crosses_interior(from, to));
        if walls {
            return false;
        }
        !self
            .scene
            .objects
            .iter()
            .filter(|o| Some(o.id) != ignore)
            .any(|o| o.bbox.footprint().segment_crosses_interior(from, to))
    }

    /// Objects whose center is within range and field of view with a clear
    /// line of sight; hidden objects are never visible.
    pub fn visible_objects(&self, pose: &AgentPose) -> Vec<u32> {
        let half_fov = 0.5 * self.config.fov_degrees.to_radians();
        let p = pose.xy();
        self.scene
            .objects
            .iter()
            .filter(|o| !o.hidden)
            .filter(|o| {
                let c = [o.bbox.center[0], o.bbox.center[1]];
                let (dx, dy) = (c[0] - p[0], c[1] - p[1]);
                let d = dx.hypot(dy);
                if d > self.config.max_range {
                    return false;
                }
                if d > 1e-9 && wrap_diff(dy.atan2(dx) - pose.heading).abs() > half_fov + 1e-9 {
                    return false;
                }
                self.line_of_sight(p, c, Some(o.id))
            })
            .map(|o| o.id)
            .collect()
    }

    /// Range along one ray against walls (glass included) and object
    /// footprints, capped at the maximum range.
    pub fn cast_ray(&self, origin: [f64; 2], angle: f64) -> f64 {
        let dir = [angle.cos(), angle.sin()];
        let max = self.config.max_range;
        let walls = self.scene.walls.iter().map(|w| w.rect);
        let objects = self.scene.objects.iter().map(|o| o.bbox.footprint());
        walls
            .chain(objects)
            .filter_map(|r| r.ray_entry(origin, dir, max))
            .fold(max, f64::min)
    }

    pub fn ray_angles(&self, heading: f64) -> Vec<f64> {
        let n = self.config.ray_count;
        let fov = self.config.fov_degrees.to_radians();
        (0..n)
            .map(|i| wrap_angle(heading + fov * (i as f64 / n as f64 - 0.5)))
            .collect()
    }

    pub fn sense(&self, state: &SimState) -> SensorFrame {
        let p = state.pose.xy();
        let depth_rays = self
            .ray_angles(state.pose.heading)
            .into_iter()
            .map(|angle| DepthRay {
                angle,
                range: self.cast_ray(p, angle),
            })
            .collect();
        SensorFrame {
            timestamp: state.step,
            pose: state.pose,
            visible_object_ids: self.visible_objects(&state.pose),
            depth_rays,
            max_range: self.config.max_range,
        }
    }

    /// Greedy waypoint controller on pure kinematics: turn toward the next
    /// waypoint (shorter direction, left on ties) until within half a turn
    /// increment, then move forward.
    pub fn plan_actions(&self, pose: &AgentPose, waypoints: &[[f64; 2]]) -> Vec<ActionCommand> {
        let inc = self.config.turn_increment();
        let s = self.config.step_size;
        let mut pose = *pose;
        let mut out = Vec::new();
        for w in waypoints {
            let mut guard = 0;
            loop {
                let (dx, dy) = (w[0] - pose.x, w[1] - pose.y);
                if dx.hypot(dy) < 0.5 * s {
                    break;
                }
                guard += 1;
                if guard > 10_000 {
                    break;
                }
                let diff = wrap_diff(dy.atan2(dx) - pose.heading);
                if diff.abs() > 0.5 * inc + 1e-9 {
                    let a = if diff > 0.0 {
                        ActionCommand::TurnLeft
                    } else {
                        ActionCommand::TurnRight
                    };
                    let sign = if a == ActionCommand::TurnLeft { 1.0 } else { -1.0 };
                    pose.heading = snap_heading(pose.heading + sign * inc, inc);
                    out.push(a);
                } else {
                    let d = heading_dir(pose.heading);
                    pose.x += s * d[0];
                    pose.y += s * d[1];
                    out.push(ActionCommand::MoveForward);
                }
            }
        }
        out
    }

    /// Follows `waypoints`, sensing `frames_per_leg` frames evenly over the
    /// leg (every action when the leg is shorter). `on_frame` receives each
    /// frame. Stops early when a move is blocked or the budget runs out.
    pub fn follow_path(
        &self,
        state: &SimState,
        waypoints: &[[f64; 2]],
        budget: u64,
        mut on_frame: impl FnMut(&SensorFrame),
    ) -> FollowOutcome {
        let actions = self.plan_actions(&state.pose, waypoints);
        let schedule = sensing_schedule(actions.len(), self.config.frames_per_leg);
        let mut state = *state;
        let mut issued = 0u64;
        let mut forward = 0u64;
        for (k, &a) in actions.iter().enumerate() {
            if issued >= budget {
                return FollowOutcome {
                    state,
                    actions: issued,
                    forward_moves: forward,
                    status: FollowStatus::BudgetExhausted,
                };
            }
            state = self.step(&state, a);
            issued += 1;
            if state.blocked {
                return FollowOutcome {
                    state,
                    actions: issued,
                    forward_moves: forward,
                    status: FollowStatus::ReplanNeeded,
                };
            }
            if a == ActionCommand::MoveForward {
                forward += 1;
            }
            if schedule.binary_search(&k).is_ok() {
                on_frame(&self.sense(&state));
            }
        }
        FollowOutcome {
            state,
            actions: issued,
            forward_moves: forward,
            status: FollowStatus::Arrived,
        }
    }
}

/// Rounds a heading onto the turn lattice when it is within 1e-9 of it.
fn snap_heading(h: f64, inc: f64) -> f64 {
    let h = wrap_angle(h);
    let k = (h / inc).round();
    if (h - k * inc).abs() < 1e-9 {
        wrap_angle(k * inc)
    } else {
        h
    }
}

/// Action indices after which a frame is sensed.
pub fn sensing_schedule(actions: usize, frames: usize) -> Vec<usize> {
    if actions == 0 || frames == 0 {
        return Vec::new();
    }
    if actions <= frames {
        return (0..actions).collect();
    }
    let mut v: Vec<usize> = (0..frames)
        .map(|j| {
            if frames == 1 {
                actions - 1
            } else {
                ((j as f64) * (actions - 1) as f64 / (frames - 1) as f64).round() as usize
            }
        })
        .collect();
    v.dedup();
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FollowStatus {
    Arrived,
    ReplanNeeded,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowOutcome {
    pub state: SimState,
    pub actions: u64,
    pub forward_moves: u64,
    pub status: FollowStatus,
}
