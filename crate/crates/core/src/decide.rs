//! Unified grounding-or-exploration decisions.
//!
//! Every remembered object and every open frontier becomes a candidate with
//! a fixed six-entry feature vector. One scorer assigns each candidate a
//! score, and the argmax either grounds an object or explores a frontier.
//! Object features:   `[cos(vocab, goal), cos(feature, goal), confidence,
//! distance, 1, 0]`. Frontier features: `[0, 0, mean neighbor cosine,
//! distance, 0, cluster size]`. Distances are geodesic on the agent's own
//! grid, normalized by the scene diameter.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::cosine;
use crate::mapping::{CellIdx, FrontierQuery, OccupancyGrid};
use crate::memory::MemoryBank;
use crate::par;
use crate::percept::ObjectQuery;
use crate::plan::{approach_region, distance_field};
use crate::rng;
use crate::sim::AgentPose;

pub const FEATURE_DIM: usize = 6;
pub const FEATURE_VERSION: u32 = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub type FeatureVector = [f64; FEATURE_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecideParams {
    /// Grounding navigates to within this geodesic radius of the object's
    /// remembered footprint. Kept below the success radius to absorb box
    /// jitter.
    pub approach_radius: f64,
    /// Radius for the frontier's mean neighbor cosine (meters).
    pub neighbor_radius: f64,
    /// Objects below this confidence are dropped from the candidate set.
    pub confidence_floor: f64,
    pub cluster_normalizer: f64,
    /// Frontier clusters smaller than this are not offered.
    pub min_cluster_size: usize,
    /// Normalized distance feature for unreachable objects.
    pub unreachable_distance: f64,
    /// Grounding threshold of the nearest-frontier heuristic.
    pub tau_ground: f64,
}

impl Default for DecideParams {
    fn default() -> Self {
        DecideParams {
            approach_radius: 0.5,
            neighbor_radius: 2.0,
            confidence_floor: 0.0,
            cluster_normalizer: 40.0,
            min_cluster_size: 3,
            unreachable_distance: 2.0,
            tau_ground: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCandidate {
    pub query: ObjectQuery,
    /// Geodesic distance (agent grid) to the object's approach region.
    pub distance: Option<f64>,
    /// Nearest reachable approach cell.
    pub approach: Option<CellIdx>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierCandidate {
    pub frontier: FrontierQuery,
    pub distance: f64,
    pub neighbor_cos: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub objects: Vec<ObjectCandidate>,
    pub frontiers: Vec<FrontierCandidate>,
    pub goal: Vec<f64>,
    pub pose: AgentPose,
    pub diameter: f64,
    pub params: DecideParams,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.objects.len() + self.frontiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> Vec<FeatureVector> {
        let norm = |d: f64| (d / self.diameter).min(1.0);
        let p = &self.params;
        let objects = self.objects.iter().map(|o| {
            [
                cosine(&o.query.vocab_embedding, &self.goal),
                cosine(&o.query.feature, &self.goal),
                o.query.score,
                o.distance.map_or(p.unreachable_distance, norm),
                1.0,
                0.0,
            ]
        });
        let frontiers = self.frontiers.iter().map(|f| {
            [
                0.0,
                0.0,
                f.neighbor_cos,
                norm(f.distance),
                0.0,
                (f.frontier.cluster_size as f64 / p.cluster_normalizer).min(1.0),
            ]
        });
        objects.chain(frontiers).collect()
    }

    /// Candidate index of the first object, then of the first frontier.
    pub fn frontier_index(&self, k: usize) -> usize {
        self.objects.len() + k
    }
}

/// Builds the candidate set seen by a policy. Only the agent's own grid and
/// memory are read.
///
/// Visited, undersized or unreachable frontiers are dropped. Objects keep
/// bank order; frontiers are sorted by cluster size, largest first.
pub fn assemble_candidates(
    bank: &MemoryBank,
    frontiers: &[FrontierQuery],
    goal: &[f64],
    pose: &AgentPose,
    grid: &OccupancyGrid,
    diameter: f64,
    params: &DecideParams,
) -> CandidateSet {
    let field = grid
        .cell_of(pose.xy())
        .map(|c| distance_field(grid, &[c]));
    let objects = bank
        .globals
        .iter()
        .filter(|g| g.score >= params.confidence_floor)
        .map(|g| {
            let region = approach_region(grid, &g.bbox.footprint(), params.approach_radius);
            let nearest = field.as_ref().and_then(|f| f.nearest(&region));
            ObjectCandidate {
                query: g.clone(),
                distance: nearest.map(|(_, s)| f64::from(s) * grid.resolution()),
                approach: nearest.map(|(c, _)| c),
            }
        })
        .collect();
    let mut fr: Vec<FrontierCandidate> = frontiers
        .iter()
        .filter(|f| !f.visited && f.cluster_size >= params.min_cluster_size)
        .filter_map(|f| {
            let d = field.as_ref()?.meters_at(f.xy())?;
            let near: Vec<f64> = bank
                .globals
                .iter()
                .filter(|g| {
                    (g.bbox.center[0] - f.position[0]).hypot(g.bbox.center[1] - f.position[1])
                        <= params.neighbor_radius
                })
                .map(|g| cosine(&g.vocab_embedding, goal))
                .collect();
            let neighbor_cos = if near.is_empty() {
                0.0
            } else {
                near.iter().sum::<f64>() / near.len() as f64
            };
            Some(FrontierCandidate {
                frontier: *f,
                distance: d,
                neighbor_cos,
            })
        })
        .collect();
    fr.sort_by(|a, b| b.frontier.cluster_size.cmp(&a.frontier.cluster_size));
    CandidateSet {
        objects,
        frontiers: fr,
        goal: goal.to_vec(),
        pose: *pose,
        diameter,
        params: params.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum DecisionKind {
    Ground(usize),
    Explore(usize),
    Terminate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub kind: DecisionKind,
    pub scores: Vec<f64>,
}

impl Decision {
    pub fn terminate() -> Self {
        Decision {
            kind: DecisionKind::Terminate,
            scores: Vec::new(),
        }
    }

    /// Candidate index of the chosen entry, if any.
    pub fn candidate_index(&self, set: &CandidateSet) -> Option<usize> {
        match self.kind {
            DecisionKind::Ground(i) => Some(i),
            DecisionKind::Explore(k) => Some(set.frontier_index(k)),
            DecisionKind::Terminate => None,
        }
    }
}

/// Maps a candidate index to a decision.
pub fn decision_for_index(set: &CandidateSet, index: usize) -> DecisionKind {
    if index < set.objects.len() {
        DecisionKind::Ground(index)
    } else if index < set.len() {
        DecisionKind::Explore(index - set.objects.len())
    } else {
        DecisionKind::Terminate
    }
}

/// First index of the maximum; `None` for an empty slice.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Two-layer scorer `w2 · tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel {
    pub input_dim: usize,
    pub hidden: usize,
    /// Row-major `hidden x input_dim`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl ScorerModel {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        ScorerModel {
            input_dim,
            hidden,
            w1: vec![0.0; hidden * input_dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, "scorer/init");
        let mut m = ScorerModel::zeros(input_dim, hidden);
        let a1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        for w in m.w1.iter_mut() {
            *w = r.random_range(-a1..a1);
        }
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        for w in m.w2.iter_mut() {
            *w = r.random_range(-a2..a2);
        }
        m
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[h];
                z.tanh()
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let a = self.hidden_activations(x);
        a.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>() + self.b2
    }

    /// Adds `upstream * d(forward)/d(params)` at `x` into `grad`.
    pub fn accumulate_grad(&self, x: &[f64], upstream: f64, grad: &mut ScorerModel) {
        let a = self.hidden_activations(x);
        for h in 0..self.hidden {
            grad.w2[h] += upstream * a[h];
            let dz = upstream * self.w2[h] * (1.0 - a[h] * a[h]);
            grad.b1[h] += dz;
            for (k, v) in x.iter().enumerate() {
                grad.w1[h * self.input_dim + k] += dz * v;
            }
        }
        grad.b2 += upstream;
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let (n1, nh) = (self.w1.len(), self.hidden);
        self.w1.copy_from_slice(&flat[..n1]);
        self.b1.copy_from_slice(&flat[n1..n1 + nh]);
        self.w2.copy_from_slice(&flat[n1 + nh..n1 + 2 * nh]);
        self.b2 = flat[n1 + 2 * nh];
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// Scores every candidate of `set`.
pub fn score(set: &CandidateSet, model: &ScorerModel) -> Vec<f64> {
    set.features().iter().map(|f| model.forward(f)).collect()
}

/// Argmax decision; objects precede frontiers so ties ground.
pub fn decide_step(set: &CandidateSet, model: &ScorerModel) -> Decision {
    let scores = score(set, model);
    match argmax(&scores) {
        Some(i) => Decision {
            kind: decision_for_index(set, i),
            scores,
        },
        None => Decision::terminate(),
    }
}

/// Goal cosine used by the heuristic: the better of the two embeddings.
pub fn goal_cosine(query: &ObjectQuery, goal: &[f64]) -> f64 {
    cosine(&query.vocab_embedding, goal).max(cosine(&query.feature, goal))
}

/// Nearest-frontier baseline: ground the best reachable object whose goal
/// cosine clears `tau_ground`, otherwise explore the nearest frontier.
pub fn heuristic_nearest_frontier(set: &CandidateSet) -> Decision {
    let tau = set.params.tau_ground;
    let mut scores = Vec::with_capacity(set.len());
    let mut best_obj: Option<(usize, f64)> = None;
    for (i, o) in set.objects.iter().enumerate() {
        let c = goal_cosine(&o.query, &set.goal);
        scores.push(c);
        if c >= tau && o.distance.is_some() && best_obj.is_none_or(|(_, b)| c > b) {
            best_obj = Some((i, c));
        }
    }
    let mut best_fr: Option<(usize, f64)> = None;
    for (k, f) in set.frontiers.iter().enumerate() {
        scores.push(-f.distance);
        if best_fr.is_none_or(|(_, d)| f.distance < d) {
            best_fr = Some((k, f.distance));
        }
    }
    let kind = match (best_obj, best_fr) {
        (Some((i, _)), _) => DecisionKind::Ground(i),
        (None, Some((k, _))) => DecisionKind::Explore(k),
        (None, None) => DecisionKind::Terminate,
    };
    Decision { kind, scores }
}

pub const PROB_CLAMP: f64 = 1e-7;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of `sigmoid(scores)` against `labels`, with
/// probabilities clamped to `[1e-7, 1 - 1e-7]`. Returns the loss and its
/// exact gradient with respect to the raw scores (zero where clamped).
pub fn bce_loss(scores: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    bce_loss_masked(scores, labels, None)
}

/// As [`bce_loss`], averaging only over entries where `include` is true.
pub fn bce_loss_masked(
    scores: &[f64],
    labels: &[f64],
    include: Option<&[bool]>,
) -> Result<(f64, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(m) = include {
        if m.len() != scores.len() {
            return Err(Error::LengthMismatch(scores.len(), m.len()));
        }
    }
    let used = |i: usize| include.is_none_or(|m| m[i]);
    let n = (0..scores.len()).filter(|&i| used(i)).count();
    let mut grad = vec![0.0; scores.len()];
    if n == 0 {
        return Ok((0.0, grad));
    }
    let nf = n as f64;
    let mut loss = 0.0;
    for (i, (&z, &y)) in scores.iter().zip(labels).enumerate() {
        if !used(i) {
            continue;
        }
        let raw = sigmoid(z);
        let p = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        let clamped = raw < PROB_CLAMP || raw > 1.0 - PROB_CLAMP;
        if !clamped {
            // d/dz of -(y ln p + (1-y) ln(1-p)) with p = sigmoid(z)
            grad[i] = (p - y) / nf;
        }
    }
    Ok((loss / nf, grad))
}

/// One supervised decision in training form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub features: Vec<FeatureVector>,
    pub label: usize,
    /// Candidates excluded from the loss (other valid instances).
    pub ignore: Vec<usize>,
}

impl TrainingExample {
    fn labels_and_mask(&self) -> (Vec<f64>, Vec<bool>) {
        let n = self.features.len();
        let labels = (0..n).map(|i| if i == self.label { 1.0 } else { 0.0 }).collect();
        let mask = (0..n).map(|i| i == self.label || !self.ignore.contains(&i)).collect();
        (labels, mask)
    }
}

/// Loss of one example and its gradient with respect to the parameters.
pub fn example_loss_grad(model: &ScorerModel, ex: &TrainingExample) -> Result<(f64, ScorerModel)> {
    let scores: Vec<f64> = ex.features.iter().map(|f| model.forward(f)).collect();
    let (labels, mask) = ex.labels_and_mask();
    let (loss, dscores) = bce_loss_masked(&scores, &labels, Some(&mask))?;
    let mut grad = ScorerModel::zeros(model.input_dim, model.hidden);
    for (f, &g) in ex.features.iter().zip(&dscores) {
        if g != 0.0 {
            model.accumulate_grad(f, g, &mut grad);
        }
    }
    Ok((loss, grad))
}

/// Mean per-example loss over a batch and its parameter gradient.
pub fn batch_loss_grad(model: &ScorerModel, batch: &[TrainingExample]) -> Result<(f64, ScorerModel)> {
    let parts = par::map(batch, |ex| example_loss_grad(model, ex));
    let mut total = ScorerModel::zeros(model.input_dim, model.hidden);
    let mut loss = 0.0;
    let n = batch.len().max(1) as f64;
    for p in parts {
        let (l, g) = p?;
        loss += l / n;
        for (t, v) in total.w1.iter_mut().zip(&g.w1) {
            *t += v / n;
        }
        for (t, v) in total.b1.iter_mut().zip(&g.b1) {
            *t += v / n;
        }
        for (t, v) in total.w2.iter_mut().zip(&g.w2) {
            *t += v / n;
        }
        total.b2 += g.b2 / n;
    }
    Ok((loss, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            batch_size: 64,
            learning_rate: 1e-3,
            epochs: 10,
            hidden: 16,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub final_accuracy: f64,
}

pub fn dataset_loss(model: &ScorerModel, data: &[TrainingExample]) -> Result<f64> {
    let losses = par::map(data, |ex| example_loss_grad(model, ex).map(|(l, _)| l));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Fraction of examples whose argmax score hits the label.
pub fn argmax_accuracy(model: &ScorerModel, data: &[TrainingExample]) -> f64 {
    let hits = par::map(data, |ex| {
        let s: Vec<f64> = ex.features.iter().map(|f| model.forward(f)).collect();
        argmax(&s) == Some(ex.label)
    });
    hits.iter().filter(|&&h| h).count() as f64 / data.len().max(1) as f64
}

/// Minibatch training of the scorer; deterministic under `seed`.
pub fn train(
    data: &[TrainingExample],
    params: &TrainParams,
    seed: u64,
) -> Result<(ScorerModel, TrainLog)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if params.batch_size == 0 {
        return Err(Error::InvalidParams("batch_size must be positive".into()));
    }
    for ex in data {
        if ex.label >= ex.features.len() {
            return Err(Error::InvalidParams("label outside candidate set".into()));
        }
    }
    let mut model = ScorerModel::init(FEATURE_DIM, params.hidden, seed);
    let initial_loss = dataset_loss(&model, data)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = rng::stream(seed, "train/shuffle");
    let n = model.param_count();
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut t = 0i32;
    let mut epoch_losses = Vec::with_capacity(params.epochs);
    for _ in 0..params.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(params.batch_size) {
            let batch: Vec<TrainingExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (_, grad) = batch_loss_grad(&model, &batch)?;
            let g = grad.to_flat();
            let mut p = model.to_flat();
            t += 1;
            match params.optimizer {
                OptimizerKind::Sgd => {
                    for (pi, gi) in p.iter_mut().zip(&g) {
                        *pi -= params.learning_rate * gi;
                    }
                }
                OptimizerKind::Adam => {
                    let bc1 = 1.0 - params.beta1.powi(t);
                    let bc2 = 1.0 - params.beta2.powi(t);
                    for k in 0..n {
                        m1[k] = params.beta1 * m1[k] + (1.0 - params.beta1) * g[k];
                        m2[k] = params.beta2 * m2[k] + (1.0 - params.beta2) * g[k] * g[k];
                        let step = (m1[k] / bc1) / ((m2[k] / bc2).sqrt() + params.adam_eps);
                        p[k] -= params.learning_rate * (step + params.weight_decay * p[k]);
                    }
                }
            }
            model.set_flat(&p);
        }
        epoch_losses.push(dataset_loss(&model, data)?);
    }
    let final_accuracy = argmax_accuracy(&model, data);
    Ok((
        model,
        TrainLog {
            initial_loss,
            epoch_losses,
            final_accuracy,
        },
    ))
}

/// On-disk model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub artifact: String,
    pub format_version: u32,
    pub feature_version: u32,
    pub config_hash: String,
    pub model: ScorerModel,
    pub log: Option<TrainLog>,
}

impl ModelCheckpoint {
    pub fn new(model: ScorerModel, log: Option<TrainLog>, config_hash: String) -> Self {
        ModelCheckpoint {
            artifact: "model".into(),
            format_version: MODEL_FORMAT_VERSION,
            feature_version: FEATURE_VERSION,
            config_hash,
            model,
            log,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Box3;
    use std::collections::BTreeSet;

    fn obj(vocab: Vec<f64>) -> ObjectCandidate {
        ObjectCandidate {
            query: ObjectQuery {
                bbox: Box3::new([1.0, 1.0, 0.5], [0.5, 0.5, 1.0]),
                mask: BTreeSet::new(),
                feature: vocab.clone(),
                vocab_embedding: vocab,
                score: 0.8,
                merge_count: 1,
                source_id: None,
            },
            distance: Some(1.0),
            approach: None,
        }
    }

    fn fr(distance: f64, size: usize) -> FrontierCandidate {
        FrontierCandidate {
            frontier: FrontierQuery {
                position: [0.0, 0.0, 0.0],
                cluster_size: size,
                visited: false,
            },
            distance,
            neighbor_cos: 0.0,
        }
    }

    fn set(objects: Vec<ObjectCandidate>, frontiers: Vec<FrontierCandidate>) -> CandidateSet {
        CandidateSet {
            objects,
            frontiers,
            goal: vec![1.0, 0.0],
            pose: AgentPose::new(0.0, 0.0, 0.0),
            diameter: 10.0,
            params: DecideParams::default(),
        }
    }

    #[test]
    fn assemble_filters_and_orders() {
        let grid = OccupancyGrid::from_ascii(&["........", "........", "........"], 0.25);
        let fq = |x: f64, size: usize, visited: bool| FrontierQuery {
            position: [x, 0.375, 0.0],
            cluster_size: size,
            visited,
        };
        let bank = MemoryBank::new(0.25);
        let pose = AgentPose::new(0.125, 0.375, 0.0);
        let params = DecideParams::default();
        let frs = vec![fq(0.625, 4, false), fq(1.125, 9, false)];
        let s = assemble_candidates(&bank, &frs, &[1.0, 0.0], &pose, &grid, 3.0, &params);
        assert_eq!(s.len(), 2);
        assert_eq!(s.frontiers[0].frontier.cluster_size, 9);
        assert_eq!(s, assemble_candidates(&bank, &frs, &[1.0, 0.0], &pose, &grid, 3.0, &params));
        let all_visited = vec![fq(0.625, 4, true), fq(1.125, 9, true)];
        let s = assemble_candidates(&bank, &all_visited, &[1.0, 0.0], &pose, &grid, 3.0, &params);
        assert!(s.is_empty());
    }

    #[test]
    fn zero_model_scores_equal_bias() {
        let mut m = ScorerModel::zeros(FEATURE_DIM, 4);
        m.b2 = 0.3;
        let s = set(vec![obj(vec![1.0, 0.0]), obj(vec![0.0, 1.0])], vec![fr(1.0, 5)]);
        assert!(score(&s, &m).iter().all(|&v| v == 0.3));
        assert_eq!(m.param_count(), FEATURE_DIM * 4 + 4 + 4 + 1);
    }

    #[test]
    fn argmax_rules() {
        let objs = vec![obj(vec![0.0, 1.0]), obj(vec![1.0, 0.0])];
        let s = set(objs, vec![fr(1.0, 5)]);
        // a linear-ish model on the cosine feature
        let mut m = ScorerModel::zeros(FEATURE_DIM, 1);
        m.w1[0] = 1.0;
        m.w2[0] = 1.0;
        assert_eq!(decide_step(&s, &m).kind, DecisionKind::Ground(1));
        assert_eq!(argmax(&[0.9, 0.3]), Some(0));
        assert_eq!(argmax(&[0.2, 0.7]), Some(1));
        assert_eq!(argmax(&[0.5, 0.5]), Some(0));
        let empty = set(vec![], vec![]);
        assert_eq!(decide_step(&empty, &m).kind, DecisionKind::Terminate);
        let tie = set(vec![obj(vec![0.0, 1.0])], vec![fr(1.0, 5)]);
        let zero = ScorerModel::zeros(FEATURE_DIM, 2);
        assert_eq!(decide_step(&tie, &zero).kind, DecisionKind::Ground(0));
    }

    #[test]
    fn heuristic_rules() {
        let s = set(vec![obj(vec![0.99, (1.0f64 - 0.99 * 0.99).sqrt()])], vec![fr(1.0, 5)]);
        assert_eq!(heuristic_nearest_frontier(&s).kind, DecisionKind::Ground(0));
        let s = set(vec![], vec![fr(3.0, 5), fr(1.0, 5)]);
        assert_eq!(heuristic_nearest_frontier(&s).kind, DecisionKind::Explore(1));
        let s = set(vec![], vec![]);
        assert_eq!(heuristic_nearest_frontier(&s).kind, DecisionKind::Terminate);
    }

    #[test]
    fn bce_values() {
        let (l, g) = bce_loss(&[0.0], &[1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g[0] + 0.5).abs() < 1e-12);
        let (l, _) = bce_loss(&[20.0], &[1.0]).unwrap();
        assert!(l < 1e-6);
        assert!(matches!(bce_loss(&[0.0], &[1.0, 0.0]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn train_rejects_empty() {
        assert!(matches!(train(&[], &TrainParams::default(), 1), Err(Error::EmptyDataset)));
    }
}
