//! Spatial memory bank: box-IoU matching of local queries against global
//! queries, running-mean fusion of matched pairs, and registration of
//! unmatched locals.

use serde::{Deserialize, Serialize};

use crate::geom::{normalize, Box3};
use crate::percept::ObjectQuery;

pub const DEFAULT_EPSILON: f64 = 0.25;

pub fn box_iou(a: &Box3, b: &Box3) -> f64 {
    a.iou(b)
}

/// IoU between every local and global box; entries below `epsilon` are
/// `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct IouMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl IouMatrix {
    pub fn compute(locals: &[ObjectQuery], globals: &[ObjectQuery], epsilon: f64) -> Self {
        let mut values = Vec::with_capacity(locals.len() * globals.len());
        for l in locals {
            for g in globals {
                let v = box_iou(&l.bbox, &g.bbox);
                values.push(if v < epsilon { f64::NEG_INFINITY } else { v });
            }
        }
        IouMatrix {
            rows: locals.len(),
            cols: globals.len(),
            values,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    /// `(local index, global index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched: Vec<usize>,
}

/// Greedy assignment in descending IoU, ties broken by `(local, global)`.
pub fn greedy_assign(matrix: &IouMatrix) -> Matching {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..matrix.rows {
        for j in 0..matrix.cols {
            let v = matrix.get(i, j);
            if v.is_finite() {
                cand.push((v, i, j));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut local_used = vec![false; matrix.rows];
    let mut global_used = vec![false; matrix.cols];
    let mut pairs = Vec::new();
    for (_, i, j) in cand {
        if !local_used[i] && !global_used[j] {
            local_used[i] = true;
            global_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    let unmatched = (0..matrix.rows).filter(|&i| !local_used[i]).collect();
    Matching { pairs, unmatched }
}

fn blend(old: f64, new: f64, w_old: f64, w_new: f64) -> f64 {
    w_old * old + w_new * new
}

fn blend_vec(old: &[f64], new: &[f64], w_old: f64, w_new: f64) -> Vec<f64> {
    old.iter().zip(new).map(|(&a, &b)| blend(a, b, w_old, w_new)).collect()
}

/// Running-mean fusion: with `n = global.merge_count`, every continuous
/// field becomes `n/(n+1) * global + 1/(n+1) * local`; embeddings are
/// renormalized, masks are unioned, and the merge count increments.
pub fn fuse(local: &ObjectQuery, global: &ObjectQuery) -> ObjectQuery {
    let n = f64::from(global.merge_count);
    let (w_old, w_new) = (n / (n + 1.0), 1.0 / (n + 1.0));
    weighted_merge(global, local, w_old, w_new, global.merge_count + 1)
}

/// Merges two globals weighted by their merge counts.
fn merge_globals(a: &ObjectQuery, b: &ObjectQuery) -> ObjectQuery {
    let (na, nb) = (f64::from(a.merge_count), f64::from(b.merge_count));
    weighted_merge(a, b, na / (na + nb), nb / (na + nb), a.merge_count + b.merge_count)
}

fn weighted_merge(
    keep: &ObjectQuery,
    other: &ObjectQuery,
    w_keep: f64,
    w_other: f64,
    merge_count: u32,
) -> ObjectQuery {
    let mut center = [0.0; 3];
    let mut size = [0.0; 3];
    for k in 0..3 {
        center[k] = blend(keep.bbox.center[k], other.bbox.center[k], w_keep, w_other);
        size[k] = blend(keep.bbox.size[k], other.bbox.size[k], w_keep, w_other);
    }
    let mut feature = blend_vec(&keep.feature, &other.feature, w_keep, w_other);
    normalize(&mut feature);
    let mut vocab = blend_vec(&keep.vocab_embedding, &other.vocab_embedding, w_keep, w_other);
    normalize(&mut vocab);
    ObjectQuery {
        bbox: Box3::new(center, size),
        mask: keep.mask.union(&other.mask).copied().collect(),
        feature,
        vocab_embedding: vocab,
        score: blend(keep.score, other.score, w_keep, w_other),
        merge_count,
        source_id: keep.source_id.or(other.source_id),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryBank {
    pub globals: Vec<ObjectQuery>,
    pub epsilon: f64,
}

impl Default for MemoryBank {
    fn default() -> Self {
        MemoryBank::new(DEFAULT_EPSILON)
    }
}

impl MemoryBank {
    pub fn new(epsilon: f64) -> Self {
        MemoryBank {
            globals: Vec::new(),
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.globals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.globals.is_empty()
    }

    pub fn clear(&mut self) {
        self.globals.clear();
    }

    pub fn match_locals(&self, locals: &[ObjectQuery]) -> Matching {
        greedy_assign(&IouMatrix::compute(locals, &self.globals, self.epsilon))
    }

    /// Match, fuse matched pairs, register unmatched locals, then merge any
    /// globals that ended up overlapping at or above epsilon.
    pub fn ingest(&mut self, locals: &[ObjectQuery]) {
        let m = self.match_locals(locals);
        for &(i, j) in &m.pairs {
            self.globals[j] = fuse(&locals[i], &self.globals[j]);
        }
        for &i in &m.unmatched {
            self.globals.push(locals[i].clone());
        }
        self.consolidate();
    }

    fn consolidate(&mut self) {
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for a in 0..self.globals.len() {
                for b in (a + 1)..self.globals.len() {
                    let v = box_iou(&self.globals[a].bbox, &self.globals[b].bbox);
                    if v >= self.epsilon && best.is_none_or(|(bv, _, _)| v > bv) {
                        best = Some((v, a, b));
                    }
                }
            }
            let Some((_, a, b)) = best else { break };
            let merged = merge_globals(&self.globals[a], &self.globals[b]);
            self.globals[a] = merged;
            self.globals.remove(b);
        }
    }

    /// True when no two globals overlap at or above epsilon.
    pub fn is_separated(&self) -> bool {
        (0..self.globals.len()).all(|a| {
            ((a + 1)..self.globals.len())
                .all(|b| box_iou(&self.globals[a].bbox, &self.globals[b].bbox) < self.epsilon)
        })
    }
}
