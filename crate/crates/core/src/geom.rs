//! Axis-aligned geometry shared by the simulator, perception and memory.

use serde::{Deserialize, Serialize};

/// 3D axis-aligned box stored as center and size (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub center: [f64; 3],
    pub size: [f64; 3],
}

impl Box3 {
    pub fn new(center: [f64; 3], size: [f64; 3]) -> Self {
        Box3 { center, size }
    }

    pub fn from_min_max(min: [f64; 3], max: [f64; 3]) -> Self {
        let mut center = [0.0; 3];
        let mut size = [0.0; 3];
        for k in 0..3 {
            center[k] = 0.5 * (min[k] + max[k]);
            size[k] = max[k] - min[k];
        }
        Box3 { center, size }
    }

    pub fn min(&self) -> [f64; 3] {
        [
            self.center[0] - 0.5 * self.size[0],
            self.center[1] - 0.5 * self.size[1],
            self.center[2] - 0.5 * self.size[2],
        ]
    }

    pub fn max(&self) -> [f64; 3] {
        [
            self.center[0] + 0.5 * self.size[0],
            self.center[1] + 0.5 * self.size[1],
            self.center[2] + 0.5 * self.size[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        self.size[0] * self.size[1] * self.size[2]
    }

    /// Ground-plane footprint.
    pub fn footprint(&self) -> Rect {
        let (lo, hi) = (self.min(), self.max());
        Rect::new([lo[0], lo[1]], [hi[0], hi[1]])
    }

    /// Intersection-over-union of two boxes with positive sizes.
    pub fn iou(&self, other: &Box3) -> f64 {
        let (a0, a1) = (self.min(), self.max());
        let (b0, b1) = (other.min(), other.max());
        let mut inter = 1.0;
        for k in 0..3 {
            let overlap = a1[k].min(b1[k]) - a0[k].max(b0[k]);
            if overlap <= 0.0 {
                return 0.0;
            }
            inter *= overlap;
        }
        let union = self.volume() + other.volume() - inter;
        if union <= 0.0 {
            return 0.0;
        }
        (inter / union).clamp(0.0, 1.0)
    }
}

/// 2D axis-aligned rectangle (closed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Rect { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.min[0] >= self.min[0]
            && other.min[1] >= self.min[1]
            && other.max[0] <= self.max[0]
            && other.max[1] <= self.max[1]
    }

    /// True when the interiors overlap with positive area.
    pub fn overlaps(&self, other: &Rect) -> bool {
        const EPS: f64 = 1e-9;
        self.max[0].min(other.max[0]) - self.min[0].max(other.min[0]) > EPS
            && self.max[1].min(other.max[1]) - self.min[1].max(other.min[1]) > EPS
    }

    /// Closed-set intersection test (touching counts).
    pub fn intersects_closed(&self, other: &Rect) -> bool {
        self.max[0] >= other.min[0]
            && other.max[0] >= self.min[0]
            && self.max[1] >= other.min[1]
            && other.max[1] >= self.min[1]
    }

    pub fn expanded(&self, margin: f64) -> Rect {
        Rect::new(
            [self.min[0] - margin, self.min[1] - margin],
            [self.max[0] + margin, self.max[1] + margin],
        )
    }

    /// Euclidean distance from a point to the rectangle (0 inside).
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let dx = (self.min[0] - p[0]).max(0.0).max(p[0] - self.max[0]);
        let dy = (self.min[1] - p[1]).max(0.0).max(p[1] - self.max[1]);
        dx.hypot(dy)
    }

    /// Entry parameter of the ray `origin + t * dir` into the rectangle, for
    /// `t` in `[0, t_max]`. Returns `Some(0.0)` when the origin is inside.
    pub fn ray_entry(&self, origin: [f64; 2], dir: [f64; 2], t_max: f64) -> Option<f64> {
        let mut t0 = 0.0_f64;
        let mut t1 = t_max;
        for k in 0..2 {
            if dir[k].abs() < 1e-15 {
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
            } else {
                let inv = 1.0 / dir[k];
                let mut ta = (self.min[k] - origin[k]) * inv;
                let mut tb = (self.max[k] - origin[k]) * inv;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some(t0)
    }

    /// Closed segment/rectangle intersection.
    pub fn intersects_segment(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let dir = [b[0] - a[0], b[1] - a[1]];
        self.ray_entry(a, dir, 1.0).is_some()
    }

    /// Segment intersection against the open interior only; grazing an edge
    /// or corner does not count.
    pub fn segment_crosses_interior(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        const EPS: f64 = 1e-9;
        self.expanded(-EPS).intersects_segment(a, b)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scales `v` to unit norm in place; zero vectors are left as is.
pub fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut r = a.rem_euclid(tau);
    if r >= tau {
        r -= tau;
    }
    r
}

/// Wraps an angle difference into `(-π, π]`.
pub fn wrap_diff(a: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut r = (a + pi).rem_euclid(std::f64::consts::TAU) - pi;
    if r <= -pi {
        r += std::f64::consts::TAU;
    }
    r
}

/// Unit direction for a heading, with components snapped to exact 0/±1
/// on the axes so axis-aligned motion stays on the lattice.
pub fn heading_dir(heading: f64) -> [f64; 2] {
    let snap = |v: f64| {
        if v.abs() < 1e-12 {
            0.0
        } else if (v - 1.0).abs() < 1e-12 {
            1.0
        } else if (v + 1.0).abs() < 1e-12 {
            -1.0
        } else {
            v
        }
    };
    [snap(heading.cos()), snap(heading.sin())]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_analytic_cases() {
        let a = Box3::from_min_max([0.0, 0.0, 0.0], [2.0, 2.0, 2.0]);
        let b = Box3::from_min_max([1.0, 0.0, 0.0], [3.0, 2.0, 2.0]);
        assert!((a.iou(&a) - 1.0).abs() < 1e-12);
        assert!((a.iou(&b) - 4.0 / 12.0).abs() < 1e-12);
        let c = Box3::from_min_max([5.0, 5.0, 5.0], [6.0, 6.0, 6.0]);
        assert_eq!(a.iou(&c), 0.0);
        // touching faces have zero-volume intersection
        let d = Box3::from_min_max([2.0, 0.0, 0.0], [3.0, 2.0, 2.0]);
        assert_eq!(a.iou(&d), 0.0);
    }

    #[test]
    fn ray_entry_hits_box_face() {
        let r = Rect::new([2.0, -0.5], [3.0, 0.5]);
        let t = r.ray_entry([0.0, 0.0], [1.0, 0.0], 10.0).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert!(r.ray_entry([0.0, 0.0], [-1.0, 0.0], 10.0).is_none());
        assert!(r.ray_entry([0.0, 0.0], [1.0, 0.0], 1.5).is_none());
    }

    #[test]
    fn angle_wrapping() {
        assert!((wrap_angle(-0.1) - (std::f64::consts::TAU - 0.1)).abs() < 1e-12);
        assert!((wrap_diff(3.5 * std::f64::consts::PI) + 0.5 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(heading_dir(std::f64::consts::FRAC_PI_2), [0.0, 1.0]);
    }
}
