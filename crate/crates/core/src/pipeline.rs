//! Pipeline stages behind the command-line tool. Each stage reads and
//! writes self-describing artifacts (`format_version` plus config hash).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::collect::{collect_dataset, read_dataset, DatasetManifest, DecisionRecord, DATASET_FORMAT_VERSION};
use crate::config::RunConfig;
use crate::decide::{train, ModelCheckpoint, TrainingExample, FEATURE_DIM, FEATURE_VERSION, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::eval::{
    build_report, build_revisit_suite, compare_scorers, evaluate_suite, memory_ablation, replay,
    AblationReport, BenchmarkReport, CompareReport, EvalOptions, Policy, REPORT_FORMAT_VERSION,
};
use crate::io;
use crate::par;
use crate::rng;
use crate::scene::{
    generate_episodes, generate_scene, validate_scene, EpisodeDef, EpisodeGenParams, EpisodeSpec,
    SceneSpec, EPISODES_FORMAT_VERSION, SCENE_FORMAT_VERSION,
};

pub const SPLITS: [&str; 2] = ["train", "eval"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub artifact: String,
    pub format_version: u32,
    pub config_hash: String,
    pub scene: SceneSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSetFile {
    pub artifact: String,
    pub format_version: u32,
    pub config_hash: String,
    pub split: String,
    pub scene_ids: Vec<String>,
    pub episodes: Vec<EpisodeDef>,
}

#[derive(Debug, Clone)]
pub struct EpisodeSet {
    pub file: EpisodeSetFile,
    pub episodes: Vec<EpisodeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub splits: BTreeMap<String, (usize, usize)>,
}

fn scene_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("scenes").join(format!("{id}.json"))
}

/// Generates the train and eval splits under `out/<split>/`.
pub fn gen_scenes(cfg: &RunConfig, out: &Path) -> Result<GenSummary> {
    let hash = cfg.config_hash();
    let mut splits = BTreeMap::new();
    for split in SPLITS {
        let (count, per_scene) = if split == "train" {
            (cfg.split.train_scenes, cfg.split.train_episodes_per_scene)
        } else {
            (cfg.split.eval_scenes, cfg.split.eval_episodes_per_scene)
        };
        let label = format!("scene/{split}");
        let built = par::map_range(count, |i| -> Result<(SceneSpec, Vec<EpisodeDef>)> {
            let seed = rng::derive_indexed(cfg.seed, &label, i as u64);
            let scene = Arc::new(generate_scene(&cfg.scene, seed)?);
            let params = EpisodeGenParams {
                count: per_scene,
                ..cfg.episodes.clone()
            };
            let eps = generate_episodes(&scene, &params, rng::derive(seed, "episodes"))?;
            Ok(((*scene).clone(), eps.into_iter().map(|e| e.def).collect()))
        });
        let dir = out.join(split);
        io::ensure_dir(&dir.join("scenes"))?;
        let mut scene_ids = Vec::new();
        let mut episodes = Vec::new();
        for b in built {
            let (scene, eps) = b?;
            let file = SceneFile {
                artifact: "scene".into(),
                format_version: SCENE_FORMAT_VERSION,
                config_hash: hash.clone(),
                scene,
            };
            io::write_json(&scene_path(&dir, &file.scene.id), &file)?;
            scene_ids.push(file.scene.id.clone());
            episodes.extend(eps);
        }
        splits.insert(split.to_string(), (scene_ids.len(), episodes.len()));
        let set = EpisodeSetFile {
            artifact: "episodes".into(),
            format_version: EPISODES_FORMAT_VERSION,
            config_hash: hash.clone(),
            split: split.to_string(),
            scene_ids,
            episodes,
        };
        io::write_json(&dir.join("episodes.json"), &set)?;
    }
    Ok(GenSummary { splits })
}

pub fn read_scene(path: &Path) -> Result<SceneSpec> {
    let file: SceneFile = io::read_json(path, SCENE_FORMAT_VERSION)?;
    Ok(file.scene)
}

/// Loads `dir/episodes.json` and the scenes it references. `dir` may also
/// be a generated root, in which case its eval split is used.
pub fn load_episode_set(dir: &Path) -> Result<EpisodeSet> {
    let dir = if !dir.join("episodes.json").exists() && dir.join("eval/episodes.json").exists() {
        dir.join("eval")
    } else {
        dir.to_path_buf()
    };
    let file: EpisodeSetFile = io::read_json(&dir.join("episodes.json"), EPISODES_FORMAT_VERSION)?;
    let mut scenes = BTreeMap::new();
    for id in &file.scene_ids {
        scenes.insert(id.clone(), Arc::new(read_scene(&scene_path(&dir, id))?));
    }
    let mut episodes = Vec::with_capacity(file.episodes.len());
    for def in &file.episodes {
        let scene = scenes
            .get(&def.scene_id)
            .ok_or_else(|| Error::artifact(dir.join("episodes.json"), format!("unknown scene {}", def.scene_id)))?;
        episodes.push(EpisodeSpec {
            scene: Arc::clone(scene),
            def: def.clone(),
        });
    }
    Ok(EpisodeSet { file, episodes })
}

pub fn collect_stage(cfg: &RunConfig, scenes: &Path, out: &Path) -> Result<DatasetManifest> {
    let set = load_episode_set(scenes)?;
    collect_dataset(
        &set.episodes,
        &cfg.mix()?,
        &cfg.collect_params(),
        rng::derive(cfg.seed, "collect"),
        &cfg.config_hash(),
        out,
    )
}

pub fn train_stage(cfg: &RunConfig, data: &Path, out: &Path) -> Result<ModelCheckpoint> {
    let (manifest, records) = read_dataset(data)?;
    if manifest.feature_version != FEATURE_VERSION {
        return Err(Error::artifact(
            data.join("manifest.json"),
            format!("feature_version {} (expected {FEATURE_VERSION})", manifest.feature_version),
        ));
    }
    let examples: Vec<TrainingExample> = records.iter().map(DecisionRecord::to_example).collect();
    let (model, log) = train(&examples, &cfg.train, rng::derive(cfg.seed, "train"))?;
    let ckpt = ModelCheckpoint::new(model, Some(log), cfg.config_hash());
    io::write_json(out, &ckpt)?;
    Ok(ckpt)
}

pub fn read_model(path: &Path) -> Result<ModelCheckpoint> {
    let ckpt: ModelCheckpoint = io::read_json(path, MODEL_FORMAT_VERSION)?;
    if ckpt.feature_version != FEATURE_VERSION || ckpt.model.input_dim != FEATURE_DIM {
        return Err(Error::artifact(path, "model was trained on a different feature layout"));
    }
    if ckpt.model.to_flat().len() != ckpt.model.param_count() || ckpt.model.w1.len() != ckpt.model.hidden * ckpt.model.input_dim {
        return Err(Error::artifact(path, "parameter shapes do not match dims"));
    }
    Ok(ckpt)
}

/// A policy argument: a model file, or the literal `heuristic`.
pub enum PolicySource {
    Heuristic,
    Model(ModelCheckpoint),
}

impl PolicySource {
    pub fn load(spec: &str) -> Result<Self> {
        if spec == "heuristic" {
            Ok(PolicySource::Heuristic)
        } else {
            Ok(PolicySource::Model(read_model(Path::new(spec))?))
        }
    }

    pub fn policy(&self) -> Policy<'_> {
        match self {
            PolicySource::Heuristic => Policy::Heuristic,
            PolicySource::Model(m) => Policy::Learned(&m.model),
        }
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    out.with_file_name(format!("{stem}{suffix}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(p) = path.parent() {
        io::ensure_dir(p)?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn eval_seed(cfg: &RunConfig) -> u64 {
    rng::derive(cfg.seed, "eval")
}

/// Evaluates a policy; writes `out` (per-episode CSV), the JSON report
/// alongside it, and `<stem>.curve.csv`.
pub fn eval_stage(cfg: &RunConfig, policy: &PolicySource, episodes: &Path, out: &Path) -> Result<BenchmarkReport> {
    let set = load_episode_set(episodes)?;
    let p = policy.policy();
    let results = evaluate_suite(&set.episodes, p, &cfg.eval_options(), eval_seed(cfg));
    let report = build_report(p.name(), results, &cfg.eval.budgets, &cfg.config_hash());
    write_text(out, &report.results_csv())?;
    io::write_json(&out.with_extension("json"), &report)?;
    write_text(&sibling(out, ".curve.csv"), &report.curve_csv())?;
    Ok(report)
}

pub fn compare_stage(
    cfg: &RunConfig,
    a: &PolicySource,
    b: &PolicySource,
    episodes: &Path,
    out: &Path,
) -> Result<CompareReport> {
    let set = load_episode_set(episodes)?;
    let report = compare_scorers(
        &set.episodes,
        a.policy(),
        b.policy(),
        &cfg.eval.budgets,
        &cfg.eval_options(),
        eval_seed(cfg),
        &cfg.config_hash(),
    )?;
    write_text(out, &report.to_csv())?;
    io::write_json(&out.with_extension("json"), &report)?;
    Ok(report)
}

pub fn ablation_options(cfg: &RunConfig) -> EvalOptions {
    EvalOptions {
        decision_budget: cfg.eval.ablation_budget,
        ..cfg.eval_options()
    }
}

/// Builds the revisit-heavy suite from an episode set and runs the memory
/// ablation on it.
pub fn ablate_stage(cfg: &RunConfig, policy: &PolicySource, episodes: &Path, out: &Path) -> Result<AblationReport> {
    let set = load_episode_set(episodes)?;
    let suite = build_revisit_suite(&set.episodes, &cfg.eval.revisit, &cfg.collect_params(), rng::derive(cfg.seed, "revisit"));
    let report = memory_ablation(&suite, policy.policy(), &ablation_options(cfg), eval_seed(cfg), &cfg.config_hash());
    write_text(out, &report.to_csv())?;
    io::write_json(&out.with_extension("json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub episodes: usize,
    pub mismatches: Vec<String>,
}

/// Re-runs every episode of a report from its recorded decisions and
/// checks the results are identical.
pub fn replay_stage(cfg: &RunConfig, report: &Path, episodes: &Path) -> Result<ReplaySummary> {
    let report: BenchmarkReport = io::read_json(report, REPORT_FORMAT_VERSION)?;
    let set = load_episode_set(episodes)?;
    let by_id: BTreeMap<&str, &EpisodeSpec> = set.episodes.iter().map(|e| (e.id(), e)).collect();
    let opts = cfg.eval_options();
    let checks = par::map(&report.results, |r| match by_id.get(r.episode_id.as_str()) {
        None => Some(format!("{}: episode not found", r.episode_id)),
        Some(ep) => (replay(ep, r, &opts) != *r).then(|| format!("{}: replay differs", r.episode_id)),
    });
    Ok(ReplaySummary {
        episodes: report.results.len(),
        mismatches: checks.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inspection {
    pub kind: String,
    pub format_version: Option<u32>,
    pub config_hash: Option<String>,
    pub facts: Vec<(String, String)>,
    pub violations: Vec<String>,
}

impl Inspection {
    fn new(kind: &str, version: Option<u32>, hash: Option<String>) -> Self {
        Inspection {
            kind: kind.into(),
            format_version: version,
            config_hash: hash,
            facts: Vec::new(),
            violations: Vec::new(),
        }
    }

    fn fact(&mut self, k: &str, v: impl ToString) {
        self.facts.push((k.into(), v.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = format!("kind: {}\n", self.kind);
        if let Some(v) = self.format_version {
            s.push_str(&format!("format_version: {v}\n"));
        }
        if let Some(h) = &self.config_hash {
            s.push_str(&format!("config_hash: {h}\n"));
        }
        for (k, v) in &self.facts {
            s.push_str(&format!("{k}: {v}\n"));
        }
        if self.violations.is_empty() {
            s.push_str("violations: none\n");
        } else {
            s.push_str(&format!("violations: {}\n", self.violations.len()));
            for v in &self.violations {
                s.push_str(&format!("  - {v}\n"));
            }
        }
        s
    }
}

fn inspect_records(ins: &mut Inspection, records: &[DecisionRecord]) {
    ins.fact("records", records.len());
    for (i, r) in records.iter().enumerate() {
        for v in r.violations() {
            ins.violations.push(format!("record {i} ({} step {}): {v}", r.episode_id, r.step));
        }
    }
}

fn inspect_shard(path: &Path) -> Result<Inspection> {
    let records: Vec<DecisionRecord> = io::read_jsonl(path)?;
    let manifest_path = path.with_file_name("manifest.json");
    let manifest: Option<DatasetManifest> = if manifest_path.exists() {
        Some(io::read_json(&manifest_path, DATASET_FORMAT_VERSION)?)
    } else {
        None
    };
    let mut ins = Inspection::new(
        "dataset shard",
        manifest.as_ref().map(|m| m.format_version),
        manifest.as_ref().map(|m| m.config_hash.clone()),
    );
    inspect_records(&mut ins, &records);
    if let Some(m) = &manifest {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        match m.shards.iter().find(|s| s.file == name) {
            Some(s) if s.records != records.len() => ins
                .violations
                .push(format!("manifest lists {} records, shard has {}", s.records, records.len())),
            Some(s) => ins.fact("manifest_records", s.records),
            None => ins.violations.push("shard not listed in manifest".into()),
        }
    }
    Ok(ins)
}

fn inspect_dataset(dir: &Path) -> Result<Inspection> {
    let (m, records) = read_dataset(dir)?;
    let mut ins = Inspection::new("dataset", Some(m.format_version), Some(m.config_hash.clone()));
    ins.fact("episodes", m.episodes);
    ins.fact("shards", m.shards.len());
    for (k, v) in &m.status_counts {
        ins.fact(&format!("status.{k}"), v);
    }
    for (k, v) in &m.strategy_counts {
        ins.fact(&format!("strategy.{k}"), v);
    }
    if m.status_counts.values().sum::<usize>() != m.episodes {
        ins.violations.push("status counts do not sum to episode count".into());
    }
    if m.records != records.len() {
        ins.violations.push(format!("manifest lists {} records, shards hold {}", m.records, records.len()));
    }
    inspect_records(&mut ins, &records);
    Ok(ins)
}

/// Summarizes any artifact and lists invariant violations.
pub fn inspect(path: &Path) -> Result<Inspection> {
    if path.is_dir() {
        if path.join("manifest.json").exists() {
            return inspect_dataset(path);
        }
        if path.join("episodes.json").exists() {
            return inspect(&path.join("episodes.json"));
        }
        return Err(Error::artifact(path, "directory holds no known artifact"));
    }
    if path.extension().is_some_and(|e| e == "jsonl") {
        return inspect_shard(path);
    }
    let text = io::read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let artifact = value.get("artifact").and_then(|a| a.as_str()).unwrap_or_default().to_string();
    let version = value.get("format_version").and_then(|v| v.as_u64()).map(|v| v as u32);
    let hash = value.get("config_hash").and_then(|v| v.as_str()).map(String::from);
    let mut ins = Inspection::new(&artifact, version, hash);
    match artifact.as_str() {
        "scene" => {
            let s = read_scene(path)?;
            ins.fact("id", &s.id);
            ins.fact("rooms", s.rooms.len());
            ins.fact("walls", s.walls.len());
            ins.fact("objects", s.objects.len());
            ins.violations = validate_scene(&s);
        }
        "episodes" => {
            let f: EpisodeSetFile = io::read_json(path, EPISODES_FORMAT_VERSION)?;
            ins.fact("split", &f.split);
            ins.fact("scenes", f.scene_ids.len());
            ins.fact("episodes", f.episodes.len());
            for e in &f.episodes {
                if e.goals.is_empty() || e.goals.iter().any(|g| g.steps.iter().any(|s| s.target_ids.is_empty())) {
                    ins.violations.push(format!("{}: goal without targets", e.id));
                }
                if e.max_steps == 0 {
                    ins.violations.push(format!("{}: max_steps is 0", e.id));
                }
            }
        }
        "dataset" => return inspect_dataset(path.parent().unwrap_or(Path::new("."))),
        "model" => {
            let ckpt = read_model(path)?;
            let m = &ckpt.model;
            ins.fact("input_dim", m.input_dim);
            ins.fact("hidden", m.hidden);
            ins.fact("parameters", m.param_count());
            ins.fact("feature_version", ckpt.feature_version);
            if m.param_count() != m.input_dim * m.hidden + 2 * m.hidden + 1 {
                ins.violations.push("parameter count does not match F*H + 2H + 1".into());
            }
            if !m.is_finite() {
                ins.violations.push("non-finite parameters".into());
            }
        }
        "report" => {
            let r: BenchmarkReport = io::read_json(path, REPORT_FORMAT_VERSION)?;
            ins.fact("policy", &r.policy);
            ins.fact("episodes", r.episodes);
            ins.fact("SR", r.sr);
            ins.fact("SPL", r.spl);
            ins.fact("sSR", r.s_sr);
            ins.fact("tSR", r.t_sr);
            ins.violations = r.violations();
        }
        "compare" => {
            let r: CompareReport = io::read_json(path, REPORT_FORMAT_VERSION)?;
            ins.fact("policies", format!("{} vs {}", r.policy_a, r.policy_b));
            ins.fact("goals", r.goals);
            ins.fact("budgets", r.rows.len());
        }
        "ablation" => {
            let r: AblationReport = io::read_json(path, REPORT_FORMAT_VERSION)?;
            ins.fact("episodes", r.episodes);
            ins.fact("kinds", r.rows.len());
            ins.fact("SR with memory", r.overall_with_memory);
            ins.fact("SR without memory", r.overall_without_memory);
        }
        _ => return Err(Error::artifact(path, "unrecognized artifact")),
    }
    Ok(ins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeSummary {
    pub gen: GenSummary,
    pub records: usize,
    pub final_loss: Option<f64>,
    pub sr: f64,
    pub spl: f64,
}

/// `gen-scenes -> collect -> train -> eval` under `root`.
pub fn run_smoke(cfg: &RunConfig, root: &Path) -> Result<SmokeSummary> {
    let scenes = root.join("scenes");
    let gen = gen_scenes(cfg, &scenes)?;
    let manifest = collect_stage(cfg, &scenes.join("train"), &root.join("data"))?;
    let ckpt = train_stage(cfg, &root.join("data"), &root.join("model.json"))?;
    let final_loss = ckpt.log.as_ref().and_then(|l| l.epoch_losses.last().copied());
    let report = eval_stage(cfg, &PolicySource::Model(ckpt), &scenes.join("eval"), &root.join("report.csv"))?;
    Ok(SmokeSummary {
        gen,
        records: manifest.records,
        final_loss,
        sr: report.sr,
        spl: report.spl,
    })
}
