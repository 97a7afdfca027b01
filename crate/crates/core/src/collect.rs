//! Trajectory collection: the explore-an-episode loop with its four end
//! types, strategy mixing, and JSONL dataset shards.
//!
//! Every iteration spins in place, picks the geodesically closest target,
//! and then either grounds it (visible and reachable), explores a frontier
//! (when one is materially closer to the target than anything visited), or
//! ends as Unreachable, Invisible or Failure. Labels are always the optimal
//! choice; the strategy only decides which frontier the agent actually
//! visits.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{success_region, AgentRuntime, GoStatus, RuntimeParams};
use crate::decide::{assemble_candidates, CandidateSet, DecisionKind, FeatureVector, TrainingExample, FEATURE_VERSION};
use crate::error::{Error, Result};
use crate::io;
use crate::mapping::{CellIdx, TruthGrid};
use crate::par;
use crate::plan::distance_field;
use crate::rng;
use crate::scene::{EpisodeSpec, GoalKind, GoalStep, SceneSpec};
use crate::sim::AgentPose;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const SHARD_RECORDS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Optimal,
    Random,
    Hybrid { p_random: f64 },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Optimal => write!(f, "optimal"),
            Strategy::Random => write!(f, "random"),
            Strategy::Hybrid { p_random } => write!(f, "hybrid:{p_random}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "optimal" => Ok(Strategy::Optimal),
            "random" => Ok(Strategy::Random),
            other => {
                let p = other
                    .strip_prefix("hybrid:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidParams(format!("unknown strategy `{other}`")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParams(format!("hybrid p_random {p} outside [0, 1]")));
                }
                Ok(Strategy::Hybrid { p_random: p })
            }
        }
    }
}

/// Weighted strategy mix, e.g. `optimal=0.5,random=0.3,hybrid:0.5=0.2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMix(pub Vec<(Strategy, f64)>);

impl Default for StrategyMix {
    fn default() -> Self {
        StrategyMix(vec![(Strategy::Optimal, 1.0)])
    }
}

impl FromStr for StrategyMix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (name, w) = part
                .rsplit_once('=')
                .ok_or_else(|| Error::InvalidParams(format!("mix entry `{part}` lacks `=weight`")))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParams(format!("bad weight in `{part}`")))?;
            out.push((name.parse()?, w));
        }
        let mix = StrategyMix(out);
        mix.validate()?;
        Ok(mix)
    }
}

impl fmt::Display for StrategyMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(s, w)| format!("{s}={w}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl StrategyMix {
    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidParams("empty strategy mix".into()));
        }
        if self.0.iter().any(|(_, w)| !(*w >= 0.0)) {
            return Err(Error::InvalidParams("negative strategy weight".into()));
        }
        let total: f64 = self.0.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParams(format!("strategy weights sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Deterministic weighted draw for episode `index`.
    pub fn assign(&self, seed: u64, index: usize) -> Strategy {
        let u: f64 = rng::stream_indexed(seed, "collect/strategy", index as u64).random();
        let mut acc = 0.0;
        for (s, w) in &self.0 {
            acc += w;
            if u < acc {
                return *s;
            }
        }
        self.0.last().expect("validated mix").0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EndStatus {
    Success,
    Unreachable,
    Invisible,
    Failure,
}

impl EndStatus {
    pub fn name(&self) -> &'static str {
        match self {
            EndStatus::Success => "Success",
            EndStatus::Unreachable => "Unreachable",
            EndStatus::Invisible => "Invisible",
            EndStatus::Failure => "Failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Object,
    Frontier,
}

/// Labeling metadata; never read by a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMeta {
    pub position: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_id: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cluster_size: Option<usize>,
    /// Ground-truth geodesic distance to the selected target (frontiers).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub goal_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub kind: CandidateKind,
    pub features: FeatureVector,
    pub meta: CandidateMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRecord {
    pub kind: GoalKind,
    pub embedding: Vec<f64>,
    pub target_ids: Vec<u32>,
    /// Target the label was computed for.
    pub selected_target: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub episode_id: String,
    /// Position of the goal step in execution order.
    pub goal_index: usize,
    pub step: u64,
    pub strategy: String,
    pub pose: AgentPose,
    pub candidates: Vec<CandidateRecord>,
    pub label: usize,
    /// Other valid instances, excluded from the loss.
    pub ignore: Vec<usize>,
    /// Candidate the agent actually acted on.
    pub chosen: usize,
    pub goal: GoalRecord,
    pub feature_version: u32,
}

impl DecisionRecord {
    /// The decision the agent acted on, in policy terms.
    pub fn chosen_decision(&self) -> DecisionKind {
        let objects = self.candidates.iter().filter(|c| c.kind == CandidateKind::Object).count();
        if self.chosen < objects {
            DecisionKind::Ground(self.chosen)
        } else {
            DecisionKind::Explore(self.chosen - objects)
        }
    }

    pub fn to_example(&self) -> TrainingExample {
        TrainingExample {
            features: self.candidates.iter().map(|c| c.features).collect(),
            label: self.label,
            ignore: self.ignore.clone(),
        }
    }

    /// Invariant violations of this record, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let n = self.candidates.len();
        if self.label >= n {
            v.push(format!("label {} outside {} candidates", self.label, n));
        }
        if self.chosen >= n {
            v.push(format!("chosen {} outside {} candidates", self.chosen, n));
        }
        if self.ignore.contains(&self.label) {
            v.push("label is also ignored".into());
        }
        if self.ignore.iter().any(|&i| i >= n) {
            v.push("ignore index out of range".into());
        }
        if self.feature_version != FEATURE_VERSION {
            v.push(format!("feature_version {} != {}", self.feature_version, FEATURE_VERSION));
        }
        if self
            .candidates
            .iter()
            .any(|c| c.features.iter().any(|x| !x.is_finite()))
        {
            v.push("non-finite feature".into());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionOutcome {
    pub episode_id: String,
    pub strategy: Strategy,
    pub decisions: Vec<DecisionRecord>,
    pub status: EndStatus,
    /// One status per attempted goal step.
    pub goal_statuses: Vec<EndStatus>,
    pub final_pose: AgentPose,
    /// Seed of the agent runtime, so the run can be replayed.
    pub agent_seed: u64,
    /// Every object id seen during the run.
    pub seen_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectParams {
    pub runtime: RuntimeParams,
    /// Margin for the better-chance rule (meters).
    pub better_margin: f64,
    /// Start from a fully swept scene with prefilled memory (grounding
    /// records only).
    pub prefill: bool,
    pub prefill_spacing: f64,
}

impl Default for CollectParams {
    fn default() -> Self {
        CollectParams {
            runtime: RuntimeParams::default(),
            better_margin: 0.5,
            prefill: false,
            prefill_spacing: 1.0,
        }
    }
}

/// Goal steps of an episode in execution order.
pub fn goal_steps(ep: &EpisodeSpec) -> Vec<(usize, GoalKind, &GoalStep)> {
    ep.goals()
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| g.steps.iter().map(move |s| (gi, g.kind, s)))
        .collect()
}

/// Per-target ground-truth success regions plus their union.
struct TargetRegions {
    ids: Vec<u32>,
    regions: Vec<Vec<CellIdx>>,
    union: Vec<CellIdx>,
}

impl TargetRegions {
    fn new(scene: &SceneSpec, truth: &TruthGrid, ids: &[u32], radius: f64) -> Self {
        let regions = ids
            .iter()
            .map(|&id| success_region(scene, truth, &[id], radius))
            .collect();
        TargetRegions {
            ids: ids.to_vec(),
            regions,
            union: success_region(scene, truth, ids, radius),
        }
    }

    /// Target with the smallest ground-truth geodesic distance from `p`
    /// (lowest id on ties); falls back to the first id when none is
    /// reachable.
    fn closest(&self, truth: &TruthGrid, p: [f64; 2]) -> usize {
        let grid = truth.grid();
        let Some(start) = grid.cell_of(p) else { return 0 };
        let field = distance_field(grid, &[start]);
        let mut best: Option<(u32, u32, usize)> = None;
        for (k, region) in self.regions.iter().enumerate() {
            if let Some((_, s)) = field.nearest(region) {
                let key = (s, self.ids[k], k);
                if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                    best = Some(key);
                }
            }
        }
        best.map_or(0, |b| b.2)
    }
}

fn snapshot(
    set: &CandidateSet,
    goal_dist: &dyn Fn([f64; 2]) -> Option<f64>,
) -> Vec<CandidateRecord> {
    let features = set.features();
    let objects = set.objects.iter().map(|o| CandidateMeta {
        position: [o.query.bbox.center[0], o.query.bbox.center[1]],
        source_id: o.query.source_id,
        cluster_size: None,
        goal_distance: None,
    });
    let frontiers = set.frontiers.iter().map(|f| CandidateMeta {
        position: f.frontier.xy(),
        source_id: None,
        cluster_size: Some(f.frontier.cluster_size),
        goal_distance: goal_dist(f.frontier.xy()),
    });
    objects
        .chain(frontiers)
        .zip(features)
        .enumerate()
        .map(|(i, (meta, features))| CandidateRecord {
            kind: if i < set.objects.len() {
                CandidateKind::Object
            } else {
                CandidateKind::Frontier
            },
            features,
            meta,
        })
        .collect()
}

/// Runs the collection loop on one episode.
pub fn explore_episode(
    episode: &EpisodeSpec,
    strategy: Strategy,
    params: &CollectParams,
    seed: u64,
) -> CollectionOutcome {
    let scene: &SceneSpec = &episode.scene;
    let truth = scene.rasterize();
    let rp = &params.runtime;
    let agent_seed = rng::derive(seed, "collect/agent");
    let mut rt = AgentRuntime::new(scene, rp, episode.def.start_pose, agent_seed);
    if params.prefill {
        let swept = crate::agent::scripted_sweep(scene, rp, params.prefill_spacing, rng::derive(seed, "collect/prefill"));
        rt.grid = swept.grid;
        rt.bank = swept.bank;
        rt.visible_ids = swept.visible_ids;
    }
    let mut choice_rng = rng::stream(seed, "collect/choice");
    let diameter = scene.diameter();
    let mut decisions = Vec::new();
    let mut statuses = Vec::new();
    let steps = goal_steps(episode);

    for (gi, (_, kind, step)) in steps.into_iter().enumerate() {
        let budget = rt.actions + u64::from(episode.def.max_steps);
        let targets = TargetRegions::new(scene, &truth, &step.target_ids, rp.success_radius);
        let status = loop {
            if !rt.arrive(budget) {
                break EndStatus::Failure;
            }
            let k = targets.closest(&truth, rt.pose().xy());
            let target = targets.ids[k];
            let region = &targets.regions[k];
            let visible = rt.visible_ids.contains(&target)
                && rt.bank.globals.iter().any(|g| g.source_id == Some(target));
            let agent_field = rt.cell().map(|c| distance_field(&rt.grid, &[c]));
            let approach = agent_field.as_ref().and_then(|f| f.nearest(region)).map(|(c, _)| c);
            let reachable = approach.is_some();

            let set = assemble_candidates(
                &rt.bank,
                &rt.frontiers,
                &step.embedding,
                &rt.pose(),
                &rt.grid,
                diameter,
                &rp.decide,
            );
            let goal_field = distance_field(truth.grid(), region);
            let gd = |p: [f64; 2]| goal_field.meters_at(p);
            let fdist: Vec<Option<f64>> = set.frontiers.iter().map(|f| gd(f.frontier.xy())).collect();
            let best_unvisited = fdist
                .iter()
                .enumerate()
                .filter_map(|(i, d)| d.map(|d| (i, d)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let best_visited = rt
                .visited
                .iter()
                .filter_map(|f| gd(f.xy()))
                .min_by(f64::total_cmp);
            let better_chance = match (best_unvisited, best_visited) {
                (Some(_), None) => true,
                (Some((_, u)), Some(v)) => u < v - params.better_margin,
                (None, _) => false,
            };

            let record = |label: usize, ignore: Vec<usize>, chosen: usize, rt: &AgentRuntime| DecisionRecord {
                episode_id: episode.id().to_string(),
                goal_index: gi,
                step: rt.actions,
                strategy: strategy.to_string(),
                pose: rt.pose(),
                candidates: snapshot(&set, &gd),
                label,
                ignore,
                chosen,
                goal: GoalRecord {
                    kind,
                    embedding: step.embedding.clone(),
                    target_ids: step.target_ids.clone(),
                    selected_target: target,
                },
                feature_version: FEATURE_VERSION,
            };

            if visible && reachable {
                let label = set
                    .objects
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| o.query.source_id == Some(target))
                    .max_by(|a, b| a.1.query.merge_count.cmp(&b.1.query.merge_count).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .expect("visible target has a global");
                let ignore = set
                    .objects
                    .iter()
                    .enumerate()
                    .filter(|&(i, o)| i != label && o.query.source_id.is_some_and(|s| step.target_ids.contains(&s)))
                    .map(|(i, _)| i)
                    .collect();
                decisions.push(record(label, ignore, label, &rt));
                // walk where the policy would for this grounding, so replays match
                let cell = set.objects[label].approach.or(approach).expect("reachable");
                let go = rt.go_to(cell, budget);
                let inside = rt.cell().is_some_and(|c| targets.union.binary_search(&c).is_ok());
                break if go == GoStatus::Arrived && inside {
                    EndStatus::Success
                } else {
                    EndStatus::Failure
                };
            } else if better_chance {
                let (best, _) = best_unvisited.expect("better chance needs a frontier");
                let explore_random = match strategy {
                    Strategy::Optimal => false,
                    Strategy::Random => true,
                    Strategy::Hybrid { p_random } => choice_rng.random::<f64>() < p_random,
                };
                let pick = if explore_random {
                    choice_rng.random_range(0..set.frontiers.len())
                } else {
                    best
                };
                decisions.push(record(
                    set.frontier_index(best),
                    Vec::new(),
                    set.frontier_index(pick),
                    &rt,
                ));
                let f = set.frontiers[pick].frontier;
                rt.mark_visited(f);
                let target_cell = rt.grid.cell_of(f.xy());
                match target_cell.map(|c| rt.go_to(c, budget)) {
                    Some(GoStatus::Budget) => break EndStatus::Failure,
                    _ => continue,
                }
            } else if visible {
                break EndStatus::Unreachable;
            } else if reachable {
                break EndStatus::Invisible;
            } else {
                break EndStatus::Failure;
            }
        };
        statuses.push(status);
        if status != EndStatus::Success {
            break;
        }
    }
    let status = statuses.last().copied().unwrap_or(EndStatus::Failure);
    CollectionOutcome {
        episode_id: episode.id().to_string(),
        strategy,
        decisions,
        status,
        goal_statuses: statuses,
        final_pose: rt.pose(),
        agent_seed,
        seen_ids: rt.visible_ids.iter().copied().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub artifact: String,
    pub format_version: u32,
    pub feature_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub mix: String,
    pub episodes: usize,
    pub records: usize,
    pub shards: Vec<ShardInfo>,
    pub status_counts: BTreeMap<String, usize>,
    pub strategy_counts: BTreeMap<String, usize>,
}

/// Collects every episode (in parallel) under a strategy mix.
pub fn collect_outcomes(
    episodes: &[EpisodeSpec],
    mix: &StrategyMix,
    params: &CollectParams,
    seed: u64,
) -> Result<Vec<CollectionOutcome>> {
    mix.validate()?;
    let jobs: Vec<(usize, &EpisodeSpec)> = episodes.iter().enumerate().collect();
    Ok(par::map(&jobs, |&(i, ep)| {
        let strategy = mix.assign(seed, i);
        explore_episode(ep, strategy, params, rng::derive_indexed(seed, "collect/episode", i as u64))
    }))
}

pub fn manifest_for(
    outcomes: &[CollectionOutcome],
    mix: &StrategyMix,
    seed: u64,
    config_hash: &str,
) -> DatasetManifest {
    let mut status_counts = BTreeMap::new();
    let mut strategy_counts = BTreeMap::new();
    for s in [EndStatus::Success, EndStatus::Unreachable, EndStatus::Invisible, EndStatus::Failure] {
        status_counts.insert(s.name().to_string(), 0);
    }
    for o in outcomes {
        *status_counts.entry(o.status.name().to_string()).or_insert(0) += 1;
        *strategy_counts.entry(o.strategy.to_string()).or_insert(0) += 1;
    }
    let records: usize = outcomes.iter().map(|o| o.decisions.len()).sum();
    let shards = (0..records.div_ceil(SHARD_RECORDS))
        .map(|k| ShardInfo {
            file: format!("records-{k:05}.jsonl"),
            records: SHARD_RECORDS.min(records - k * SHARD_RECORDS),
        })
        .collect();
    DatasetManifest {
        artifact: "dataset".into(),
        format_version: DATASET_FORMAT_VERSION,
        feature_version: FEATURE_VERSION,
        config_hash: config_hash.to_string(),
        seed,
        mix: mix.to_string(),
        episodes: outcomes.len(),
        records,
        shards,
        status_counts,
        strategy_counts,
    }
}

/// Collects a dataset into `out`: `records-NNNNN.jsonl` shards plus
/// `manifest.json`.
pub fn collect_dataset(
    episodes: &[EpisodeSpec],
    mix: &StrategyMix,
    params: &CollectParams,
    seed: u64,
    config_hash: &str,
    out: &Path,
) -> Result<DatasetManifest> {
    let outcomes = collect_outcomes(episodes, mix, params, seed)?;
    let manifest = manifest_for(&outcomes, mix, seed, config_hash);
    io::ensure_dir(out)?;
    let records: Vec<&DecisionRecord> = outcomes.iter().flat_map(|o| &o.decisions).collect();
    for (k, shard) in manifest.shards.iter().enumerate() {
        let lo = k * SHARD_RECORDS;
        io::write_jsonl(&out.join(&shard.file), &records[lo..lo + shard.records])?;
    }
    io::write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Reads every shard listed in a dataset manifest.
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<DecisionRecord>)> {
    let manifest: DatasetManifest = io::read_json(&dir.join("manifest.json"), DATASET_FORMAT_VERSION)?;
    let mut records = Vec::with_capacity(manifest.records);
    for shard in &manifest.shards {
        let path = dir.join(&shard.file);
        let part: Vec<DecisionRecord> = io::read_jsonl(&path)?;
        if part.len() != shard.records {
            return Err(Error::artifact(
                &path,
                format!("{} records but manifest lists {}", part.len(), shard.records),
            ));
        }
        records.extend(part);
    }
    Ok((manifest, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_mix() {
        let m: StrategyMix = "optimal=0.5,random=0.3,hybrid:0.5=0.2".parse().unwrap();
        assert_eq!(m.0.len(), 3);
        assert_eq!(m.0[2].0, Strategy::Hybrid { p_random: 0.5 });
        assert_eq!(m.to_string().parse::<StrategyMix>().unwrap(), m);
        assert!("optimal=0.5".parse::<StrategyMix>().is_err());
        assert!("hybrid:1.5=1".parse::<StrategyMix>().is_err());
        assert!("greedy=1".parse::<StrategyMix>().is_err());
    }

    #[test]
    fn assignment_is_deterministic_and_weighted() {
        let m: StrategyMix = "optimal=0.7,random=0.3".parse().unwrap();
        let a: Vec<Strategy> = (0..1000).map(|i| m.assign(4, i)).collect();
        let b: Vec<Strategy> = (0..1000).map(|i| m.assign(4, i)).collect();
        assert_eq!(a, b);
        let opt = a.iter().filter(|s| **s == Strategy::Optimal).count();
        assert!((600..800).contains(&opt), "{opt}");
    }
}
