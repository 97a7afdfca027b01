//! Episode evaluation and navigation metrics.
//!
//! SR is the fraction of successful goals, SPL weights each success by
//! `l / max(p, l)` with `l` the ground-truth geodesic from the sub-episode
//! start and `p` the executed path length. s-SR counts goal steps, t-SR
//! whole episodes whose steps all succeeded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{distance_to_targets, success_region, AgentRuntime, GoStatus, RuntimeParams};
use crate::collect::{explore_episode, goal_steps, CollectParams, CollectionOutcome, EndStatus, Strategy};
use crate::decide::{
    assemble_candidates, decide_step, heuristic_nearest_frontier, Decision, DecisionKind,
    ScorerModel,
};
use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::scene::{make_goal, EpisodeDef, EpisodeSpec, GoalKind, GoalSpec, SceneSpec};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Which scorer drives the decisions.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Learned(&'a ScorerModel),
    Heuristic,
    /// Replays one decision list per goal step; terminates when exhausted.
    Scripted(&'a [Vec<DecisionKind>]),
}

impl Policy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Learned(_) => "learned",
            Policy::Heuristic => "heuristic",
            Policy::Scripted(_) => "scripted",
        }
    }

    fn decide(&self, set: &crate::decide::CandidateSet, goal: usize, k: usize) -> Decision {
        match self {
            Policy::Learned(m) => decide_step(set, m),
            Policy::Heuristic => heuristic_nearest_frontier(set),
            Policy::Scripted(trace) => Decision {
                kind: trace
                    .get(goal)
                    .and_then(|t| t.get(k))
                    .copied()
                    .unwrap_or(DecisionKind::Terminate),
                scores: Vec::new(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub runtime: RuntimeParams,
    /// Decisions allowed per goal step; `None` is unlimited.
    pub decision_budget: Option<usize>,
    pub reset_memory_per_goal: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            runtime: RuntimeParams::default(),
            decision_budget: None,
            reset_memory_per_goal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalResult {
    pub goal_index: usize,
    pub kind: GoalKind,
    /// False for task steps skipped after an earlier step failed.
    pub attempted: bool,
    pub success: bool,
    pub agent_path_length: f64,
    pub geodesic_length: f64,
    pub final_distance: Option<f64>,
    pub steps: u64,
    pub decisions: usize,
    pub trace: Vec<DecisionKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub success: bool,
    pub agent_path_length: f64,
    pub geodesic_length: f64,
    pub steps: u64,
    pub decisions: usize,
    pub agent_seed: u64,
    pub goals: Vec<GoalResult>,
}

impl EpisodeResult {
    /// Decision lists per goal step, for scripted replay.
    pub fn traces(&self) -> Vec<Vec<DecisionKind>> {
        self.goals.iter().map(|g| g.trace.clone()).collect()
    }
}

/// Runs the perception-decision-action loop until every goal step has
/// grounded, terminated or exhausted its budget.
pub fn run_episode(
    episode: &EpisodeSpec,
    policy: Policy<'_>,
    options: &EvalOptions,
    agent_seed: u64,
) -> EpisodeResult {
    let scene: &SceneSpec = &episode.scene;
    let truth = scene.rasterize();
    let rp = &options.runtime;
    let mut rt = AgentRuntime::new(scene, rp, episode.def.start_pose, agent_seed);
    let diameter = scene.diameter();
    let mut goals = Vec::new();
    let mut failed_task = BTreeSet::new();
    for (gi, (task, kind, step)) in goal_steps(episode).into_iter().enumerate() {
        let skip = kind == GoalKind::TaskStepSequence && failed_task.contains(&task);
        if gi > 0 && options.reset_memory_per_goal {
            rt.reset_memory();
        }
        let start = rt.pose().xy();
        let geodesic = distance_to_targets(scene, &truth, start, &step.target_ids, rp.success_radius).unwrap_or(0.0);
        let region = success_region(scene, &truth, &step.target_ids, rp.success_radius);
        let (a0, f0) = (rt.actions, rt.forward_moves);
        let budget = rt.actions + u64::from(episode.def.max_steps);
        let mut trace = Vec::new();
        let mut success = false;
        if !skip {
            let mut live = rt.arrive(budget);
            while live && options.decision_budget.is_none_or(|b| trace.len() < b) {
                let set = assemble_candidates(&rt.bank, &rt.frontiers, &step.embedding, &rt.pose(), &rt.grid, diameter, &rp.decide);
                let d = policy.decide(&set, gi, trace.len());
                trace.push(d.kind);
                match d.kind {
                    DecisionKind::Terminate => break,
                    DecisionKind::Ground(i) => {
                        if let Some(c) = set.objects.get(i).and_then(|o| o.approach) {
                            rt.go_to(c, budget);
                        }
                        success = rt.cell().is_some_and(|c| region.binary_search(&c).is_ok());
                        break;
                    }
                    DecisionKind::Explore(k) => {
                        let Some(f) = set.frontiers.get(k).map(|f| f.frontier) else { break };
                        rt.mark_visited(f);
                        if let Some(c) = rt.grid.cell_of(f.xy()) {
                            if rt.go_to(c, budget) == GoStatus::Budget {
                                break;
                            }
                        }
                        live = rt.arrive(budget);
                    }
                }
            }
        }
        if kind == GoalKind::TaskStepSequence && !success {
            failed_task.insert(task);
        }
        goals.push(GoalResult {
            goal_index: gi,
            kind,
            attempted: !skip,
            success,
            agent_path_length: (rt.forward_moves - f0) as f64 * rp.sim.step_size,
            geodesic_length: geodesic,
            final_distance: distance_to_targets(scene, &truth, rt.pose().xy(), &step.target_ids, rp.success_radius),
            steps: rt.actions - a0,
            decisions: trace.len(),
            trace,
        });
    }
    EpisodeResult {
        episode_id: episode.id().to_string(),
        success: goals.iter().all(|g| g.success),
        agent_path_length: goals.iter().map(|g| g.agent_path_length).sum(),
        geodesic_length: goals.iter().map(|g| g.geodesic_length).sum(),
        steps: goals.iter().map(|g| g.steps).sum(),
        decisions: goals.iter().map(|g| g.decisions).sum(),
        agent_seed,
        goals,
    }
}

/// Evaluates a suite in parallel; result order follows `episodes`.
pub fn evaluate_suite(
    episodes: &[EpisodeSpec],
    policy: Policy<'_>,
    options: &EvalOptions,
    seed: u64,
) -> Vec<EpisodeResult> {
    let jobs: Vec<(usize, &EpisodeSpec)> = episodes.iter().enumerate().collect();
    par::map(&jobs, |&(i, ep)| run_episode(ep, policy, options, episode_seed(seed, i)))
}

pub fn episode_seed(seed: u64, index: usize) -> u64 {
    rng::derive_indexed(seed, "eval/episode", index as u64)
}

/// Re-runs an episode with its recorded decisions.
pub fn replay(episode: &EpisodeSpec, result: &EpisodeResult, options: &EvalOptions) -> EpisodeResult {
    let traces = result.traces();
    run_episode(episode, Policy::Scripted(&traces), options, result.agent_seed)
}

/// Replays a collected trajectory through the evaluator.
pub fn replay_collected(episode: &EpisodeSpec, outcome: &CollectionOutcome, options: &EvalOptions) -> EpisodeResult {
    let steps = goal_steps(episode).len();
    let mut traces = vec![Vec::new(); steps];
    for r in &outcome.decisions {
        if let Some(t) = traces.get_mut(r.goal_index) {
            t.push(r.chosen_decision());
        }
    }
    run_episode(episode, Policy::Scripted(&traces), options, outcome.agent_seed)
}

/// One `(success, p, l)` term of the metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTerm {
    pub success: bool,
    pub path: f64,
    pub geodesic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub sr: f64,
    pub spl: f64,
    pub count: usize,
    /// Terms with `l <= 0`, left out of both SR and SPL.
    pub degenerate: usize,
}

/// SR and SPL over the non-degenerate terms. Both share a denominator so
/// SPL never exceeds SR.
pub fn summarize(terms: impl IntoIterator<Item = MetricTerm>) -> MetricSummary {
    let (mut n, mut bad, mut s, mut spl) = (0usize, 0usize, 0.0, 0.0);
    for t in terms {
        if !(t.geodesic > 0.0) {
            bad += 1;
            continue;
        }
        n += 1;
        if t.success {
            s += 1.0;
            spl += t.geodesic / t.path.max(t.geodesic);
        }
    }
    if bad > 0 {
        log::warn!("{bad} degenerate terms (geodesic length <= 0) excluded from SR/SPL");
    }
    let d = n.max(1) as f64;
    MetricSummary {
        sr: s / d,
        spl: spl / d,
        count: n,
        degenerate: bad,
    }
}

pub fn episode_terms(results: &[EpisodeResult]) -> Vec<MetricTerm> {
    results
        .iter()
        .map(|r| MetricTerm {
            success: r.success,
            path: r.agent_path_length,
            geodesic: r.geodesic_length,
        })
        .collect()
}

pub fn goal_terms<'a>(goals: impl IntoIterator<Item = &'a GoalResult>) -> Vec<MetricTerm> {
    goals
        .into_iter()
        .map(|g| MetricTerm {
            success: g.success,
            path: g.agent_path_length,
            geodesic: g.geodesic_length,
        })
        .collect()
}

/// Episode-level SPL; degenerate episodes are excluded with a warning.
pub fn compute_spl(results: &[EpisodeResult]) -> MetricSummary {
    summarize(episode_terms(results))
}

/// `(sSR, tSR)`: fraction of goal steps succeeded, and fraction of
/// episodes in which every step succeeded.
pub fn compute_task_metrics(results: &[EpisodeResult]) -> (f64, f64) {
    let steps: Vec<&GoalResult> = results.iter().flat_map(|r| &r.goals).collect();
    if steps.is_empty() {
        return (0.0, 0.0);
    }
    let s_sr = steps.iter().filter(|g| g.success).count() as f64 / steps.len() as f64;
    let t_sr = results
        .iter()
        .filter(|r| !r.goals.is_empty() && r.goals.iter().all(|g| g.success))
        .count() as f64
        / results.len() as f64;
    (s_sr, t_sr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget: usize,
    pub sr: f64,
    pub spl: f64,
}

/// Goal-level SR/SPL had each goal been limited to `budget` decisions.
/// Evaluation is deterministic, so a goal's run under a smaller budget is
/// a prefix of its unlimited run.
pub fn within_budget(goals: &[&GoalResult], budget: usize) -> MetricSummary {
    summarize(goals.iter().map(|g| MetricTerm {
        success: g.success && g.decisions <= budget,
        path: g.agent_path_length,
        geodesic: g.geodesic_length,
    }))
}

pub fn exploration_curve(results: &[EpisodeResult], budgets: &[usize]) -> Vec<CurvePoint> {
    let goals: Vec<&GoalResult> = results.iter().flat_map(|r| &r.goals).collect();
    budgets
        .iter()
        .map(|&b| {
            let m = within_budget(&goals, b);
            CurvePoint {
                budget: b,
                sr: m.sr,
                spl: m.spl,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub artifact: String,
    pub format_version: u32,
    pub config_hash: String,
    pub policy: String,
    pub episodes: usize,
    pub degenerate: usize,
    pub sr: f64,
    pub spl: f64,
    pub s_sr: f64,
    pub t_sr: f64,
    pub goal_sr: f64,
    pub goal_spl: f64,
    pub per_step_curve: Vec<CurvePoint>,
    pub results: Vec<EpisodeResult>,
}

pub fn build_report(policy: &str, results: Vec<EpisodeResult>, budgets: &[usize], config_hash: &str) -> BenchmarkReport {
    let ep = compute_spl(&results);
    let goal = summarize(goal_terms(results.iter().flat_map(|r| &r.goals)));
    let (s_sr, t_sr) = compute_task_metrics(&results);
    BenchmarkReport {
        artifact: "report".into(),
        format_version: REPORT_FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        policy: policy.to_string(),
        episodes: results.len(),
        degenerate: ep.degenerate,
        sr: ep.sr,
        spl: ep.spl,
        s_sr,
        t_sr,
        goal_sr: goal.sr,
        goal_spl: goal.spl,
        per_step_curve: exploration_curve(&results, budgets),
        results,
    }
}

impl BenchmarkReport {
    /// One row per episode.
    pub fn results_csv(&self) -> String {
        let mut s = String::from("episode_id,success,agent_path_length,geodesic_length,steps,decisions\n");
        for r in &self.results {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.episode_id, r.success as u8, r.agent_path_length, r.geodesic_length, r.steps, r.decisions
            );
        }
        s
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("budget,sr,spl\n");
        for p in &self.per_step_curve {
            let _ = writeln!(s, "{},{},{}", p.budget, p.sr, p.spl);
        }
        s
    }

    /// Invariant violations, empty when the report is consistent.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.spl > self.sr + 1e-12 {
            v.push(format!("SPL {} exceeds SR {}", self.spl, self.sr));
        }
        for (name, x) in [("SR", self.sr), ("SPL", self.spl), ("sSR", self.s_sr), ("tSR", self.t_sr)] {
            if !(0.0..=1.0).contains(&x) {
                v.push(format!("{name} {x} outside [0, 1]"));
            }
        }
        if self.results.len() != self.episodes {
            v.push("episode count mismatch".into());
        }
        for r in &self.results {
            if r.agent_path_length < 0.0 {
                v.push(format!("{}: negative path length", r.episode_id));
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos - pos.floor());
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + frac * (sorted[j] - sorted[i])
}

/// Percentile bootstrap 95% interval of the mean of each column, resampling
/// rows jointly so paired columns stay paired.
pub fn bootstrap_ci(columns: &[Vec<f64>], resamples: usize, seed: u64) -> Vec<Interval> {
    let n = columns.first().map_or(0, |c| c.len());
    let mut r = rng::stream(seed, "bootstrap");
    let mut means: Vec<Vec<f64>> = vec![Vec::with_capacity(resamples); columns.len()];
    if n == 0 {
        return vec![Interval { lo: 0.0, hi: 0.0 }; columns.len()];
    }
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        for i in idx.iter_mut() {
            *i = r.random_range(0..n);
        }
        for (c, col) in columns.iter().enumerate() {
            means[c].push(idx.iter().map(|&i| col[i]).sum::<f64>() / n as f64);
        }
    }
    means
        .into_iter()
        .map(|mut m| {
            m.sort_by(f64::total_cmp);
            Interval {
                lo: percentile(&m, 0.025),
                hi: percentile(&m, 0.975),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub budget: usize,
    pub a_sr: f64,
    pub a_sr_ci: Interval,
    pub a_spl: f64,
    pub b_sr: f64,
    pub b_sr_ci: Interval,
    pub b_spl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub artifact: String,
    pub format_version: u32,
    pub config_hash: String,
    pub policy_a: String,
    pub policy_b: String,
    pub goals: usize,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("budget,a_sr,a_sr_lo,a_sr_hi,a_spl,b_sr,b_sr_lo,b_sr_hi,b_spl\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.budget, r.a_sr, r.a_sr_ci.lo, r.a_sr_ci.hi, r.a_spl, r.b_sr, r.b_sr_ci.lo, r.b_sr_ci.hi, r.b_spl
            );
        }
        s
    }

    pub fn row(&self, budget: usize) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.budget == budget)
    }
}

/// Paired comparison of two evaluated suites at each decision budget, with
/// bootstrap 95% intervals on SR.
pub fn compare_results(
    a: (&str, &[EpisodeResult]),
    b: (&str, &[EpisodeResult]),
    budgets: &[usize],
    seed: u64,
    config_hash: &str,
) -> Result<CompareReport> {
    let ga: Vec<&GoalResult> = a.1.iter().flat_map(|r| &r.goals).collect();
    let gb: Vec<&GoalResult> = b.1.iter().flat_map(|r| &r.goals).collect();
    if ga.len() != gb.len() {
        return Err(Error::LengthMismatch(ga.len(), gb.len()));
    }
    // paired rows: drop goals degenerate in either arm
    let keep: Vec<usize> = (0..ga.len())
        .filter(|&i| ga[i].geodesic_length > 0.0 && gb[i].geodesic_length > 0.0)
        .collect();
    let ga: Vec<&GoalResult> = keep.iter().map(|&i| ga[i]).collect();
    let gb: Vec<&GoalResult> = keep.iter().map(|&i| gb[i]).collect();
    let rows = budgets
        .iter()
        .map(|&budget| {
            let col = |g: &[&GoalResult]| -> Vec<f64> {
                g.iter()
                    .map(|g| if g.success && g.decisions <= budget { 1.0 } else { 0.0 })
                    .collect()
            };
            let ci = bootstrap_ci(&[col(&ga), col(&gb)], BOOTSTRAP_RESAMPLES, rng::derive_indexed(seed, "compare", budget as u64));
            let (ma, mb) = (within_budget(&ga, budget), within_budget(&gb, budget));
            CompareRow {
                budget,
                a_sr: ma.sr,
                a_sr_ci: ci[0],
                a_spl: ma.spl,
                b_sr: mb.sr,
                b_sr_ci: ci[1],
                b_spl: mb.spl,
            }
        })
        .collect();
    Ok(CompareReport {
        artifact: "compare".into(),
        format_version: REPORT_FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        policy_a: a.0.to_string(),
        policy_b: b.0.to_string(),
        goals: ga.len(),
        rows,
    })
}

/// Evaluates both policies on the same episodes and compares them.
pub fn compare_scorers(
    episodes: &[EpisodeSpec],
    a: Policy<'_>,
    b: Policy<'_>,
    budgets: &[usize],
    options: &EvalOptions,
    seed: u64,
    config_hash: &str,
) -> Result<CompareReport> {
    let ra = evaluate_suite(episodes, a, options, seed);
    let rb = evaluate_suite(episodes, b, options, seed);
    compare_results((a.name(), &ra), (b.name(), &rb), budgets, seed, config_hash)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub kind: GoalKind,
    pub goals: usize,
    pub sr_with_memory: f64,
    pub sr_without_memory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub artifact: String,
    pub format_version: u32,
    pub config_hash: String,
    pub policy: String,
    pub episodes: usize,
    pub rows: Vec<AblationRow>,
    pub overall_with_memory: f64,
    pub overall_without_memory: f64,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,goals,sr_with_memory,sr_without_memory\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.kind.name(), r.goals, r.sr_with_memory, r.sr_without_memory);
        }
        let _ = writeln!(s, "all,,{},{}", self.overall_with_memory, self.overall_without_memory);
        s
    }
}

/// Runs every episode with memory preserved and with memory reset per goal
/// step, and reports SR per goal kind for both arms.
pub fn memory_ablation(
    episodes: &[EpisodeSpec],
    policy: Policy<'_>,
    options: &EvalOptions,
    seed: u64,
    config_hash: &str,
) -> AblationReport {
    let with = EvalOptions {
        reset_memory_per_goal: false,
        ..options.clone()
    };
    let without = EvalOptions {
        reset_memory_per_goal: true,
        ..options.clone()
    };
    let rw = evaluate_suite(episodes, policy, &with, seed);
    let ro = evaluate_suite(episodes, policy, &without, seed);
    let mut by_kind: BTreeMap<GoalKind, (Vec<&GoalResult>, Vec<&GoalResult>)> = BTreeMap::new();
    for (a, b) in rw.iter().zip(&ro) {
        for (ga, gb) in a.goals.iter().zip(&b.goals) {
            let e = by_kind.entry(ga.kind).or_default();
            e.0.push(ga);
            e.1.push(gb);
        }
    }
    let sr = |g: &[&GoalResult]| summarize(goal_terms(g.iter().copied())).sr;
    let rows = by_kind
        .iter()
        .map(|(&kind, (a, b))| AblationRow {
            kind,
            goals: a.len(),
            sr_with_memory: sr(a),
            sr_without_memory: sr(b),
        })
        .collect();
    AblationReport {
        artifact: "ablation".into(),
        format_version: REPORT_FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        policy: policy.name().into(),
        episodes: episodes.len(),
        rows,
        overall_with_memory: summarize(goal_terms(rw.iter().flat_map(|r| &r.goals))).sr,
        overall_without_memory: summarize(goal_terms(ro.iter().flat_map(|r| &r.goals))).sr,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RevisitParams {
    /// Goals per episode, the first included.
    pub goals: usize,
    pub kinds: Vec<GoalKind>,
    pub description_noise: f64,
    pub max_steps: u32,
}

impl Default for RevisitParams {
    fn default() -> Self {
        RevisitParams {
            goals: 3,
            kinds: vec![GoalKind::Category, GoalKind::Description, GoalKind::Image],
            description_noise: 0.05,
            max_steps: 1500,
        }
    }
}

/// Extends single-goal episodes into revisit-heavy multi-goal ones.
///
/// An optimal collector run on the first goal records every object seen on
/// the way; later goals are drawn from those objects, restricted to targets
/// whose whole target set was seen and whose success region does not
/// contain the first goal's end pose. Episodes without enough such objects
/// are dropped.
pub fn build_revisit_suite(
    seeds: &[EpisodeSpec],
    params: &RevisitParams,
    collect: &CollectParams,
    seed: u64,
) -> Vec<EpisodeSpec> {
    let jobs: Vec<(usize, &EpisodeSpec)> = seeds.iter().enumerate().collect();
    let built = par::map(&jobs, |&(i, ep)| {
        let first = EpisodeSpec {
            scene: Arc::clone(&ep.scene),
            def: EpisodeDef {
                goals: ep.def.goals[..1].to_vec(),
                ..ep.def.clone()
            },
        };
        let out = explore_episode(&first, Strategy::Optimal, collect, rng::derive_indexed(seed, "revisit/collect", i as u64));
        if out.status != EndStatus::Success {
            return None;
        }
        let scene = &ep.scene;
        let truth = scene.rasterize();
        let seen: BTreeSet<u32> = out.seen_ids.iter().copied().collect();
        let mut used: BTreeSet<u32> = first.def.goals[0].all_target_ids();
        let mut r = rng::stream_indexed(seed, "revisit/goals", i as u64);
        let mut goals: Vec<GoalSpec> = first.def.goals.clone();
        let pose = out.final_pose.xy();
        let radius = collect.runtime.success_radius;
        let mut order: Vec<u32> = seen.iter().copied().collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut r);
        for id in order {
            if goals.len() >= params.goals {
                break;
            }
            if used.contains(&id) {
                continue;
            }
            let kind = params.kinds[r.random_range(0..params.kinds.len())];
            let goal = make_goal(scene, kind, id, params.description_noise, r.random()).ok()?;
            let targets = goal.all_target_ids();
            if !targets.iter().all(|t| seen.contains(t) && !used.contains(t)) {
                continue;
            }
            let ids: Vec<u32> = targets.iter().copied().collect();
            match distance_to_targets(scene, &truth, pose, &ids, radius) {
                Some(d) if d > 0.0 => {}
                _ => continue,
            }
            used.extend(targets);
            goals.push(goal);
        }
        (goals.len() >= params.goals).then(|| EpisodeSpec {
            scene: Arc::clone(scene),
            def: EpisodeDef {
                id: format!("{}/revisit", ep.def.id),
                goals,
                max_steps: params.max_steps,
                ..ep.def.clone()
            },
        })
    });
    built.into_iter().flatten().collect()
}
