//! Trial runner, stage scoring and report tables.

mod config;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{build_backend, Backend, BackendConfig, BackendError};
use crate::marking::{MarkStyle, MarkerId};
use crate::orchestrator::{
    read_jsonl, run_episode, write_jsonl_file, Components, EpisodeConfig, EpisodeLabels, EpisodeOutcome, EpisodeRecord,
    ImageSink, PpmDir, SkillSummary,
};
use crate::parser::Skill;
use crate::prompting::{PromptError, PromptTemplate};
use crate::skills::{rollout_policy, MonolithicPolicy, NominalLayout, PolicyNames, PolicyRegistry, PolicySet, SkillConfig, SkillStatus};
use crate::world::{spawn_world, ObjectId, ScenarioConfig, WorldError, WorldState};

pub use config::{BackendKind, ResolvedRun, RunConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("scenario error: {0}")]
    Scenario(#[from] WorldError),
    #[error("template error: {0}")]
    Template(#[from] PromptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Per-chunk xy noise of the scripted policies, meters.
    pub noise_sigma_m: f64,
    pub names: PolicyNames,
    /// Replace the decision loop with one open-loop scripted policy.
    pub no_vlm: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { noise_sigma_m: 0.0, names: PolicyNames::default(), no_vlm: false }
    }
}

impl PolicyConfig {
    pub fn policy_set(&self) -> Result<PolicySet, HarnessError> {
        if !(self.noise_sigma_m.is_finite() && self.noise_sigma_m >= 0.0) {
            return Err(HarnessError::Config(format!("policy noise {} must be non-negative", self.noise_sigma_m)));
        }
        PolicySet::from_names(&PolicyRegistry::with_scripted(self.noise_sigma_m), &self.names).map_err(HarnessError::Config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialScore {
    pub pick_correct: bool,
    pub insert_correct: bool,
    pub completed: bool,
    pub assembly_complete: bool,
}

/// Judge the first pick and the first insert against ground truth.
///
/// A pick is correct when it names the gear of a goal pair that is
/// eligible in `world_truth`. An insert is correct when it names the goal
/// shaft of the gear held at that moment. A stage never attempted counts as
/// incorrect.
pub fn score_trial(record: &EpisodeRecord, world_truth: &WorldState) -> TrialScore {
    let marker_of = |id: ObjectId| world_truth.object(id).map(MarkerId::for_object);
    let first_pick = record.steps.iter().find_map(|s| match s.skill() {
        Some(Skill::Pick { object_marker }) => Some(object_marker),
        _ => None,
    });
    let pick_correct = first_pick.is_some_and(|m| world_truth.eligible_pairs().iter().any(|&(g, _)| marker_of(g) == Some(m)));
    let first_insert = record.steps.iter().find_map(|s| match s.skill() {
        Some(Skill::Insert { target_marker }) => Some((target_marker, s.held_before)),
        _ => None,
    });
    let insert_correct = first_insert.is_some_and(|(m, held)| {
        held.and_then(|g| world_truth.goal.required_shaft_for(g)).and_then(marker_of) == Some(m)
    });
    TrialScore {
        pick_correct,
        insert_correct,
        completed: record.outcome == EpisodeOutcome::Completed,
        assembly_complete: record.assembly_complete,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub environment: String,
    pub backend: String,
    pub trials: usize,
    pub pick_successes: usize,
    pub insert_successes: usize,
    pub assembled: usize,
    pub scores: Vec<TrialScore>,
}

impl EvalReport {
    pub fn from_scores(environment: &str, backend: &str, scores: Vec<TrialScore>) -> Self {
        EvalReport {
            environment: environment.to_string(),
            backend: backend.to_string(),
            trials: scores.len(),
            pick_successes: scores.iter().filter(|s| s.pick_correct).count(),
            insert_successes: scores.iter().filter(|s| s.insert_correct).count(),
            assembled: scores.iter().filter(|s| s.assembly_complete).count(),
            scores,
        }
    }

    pub fn pick_cell(&self) -> String {
        format_cell(self.pick_successes, self.trials)
    }

    pub fn insert_cell(&self) -> String {
        format_cell(self.insert_successes, self.trials)
    }
}

/// `"s/n (p%)"` with `p` rounded to the nearest integer.
pub fn format_cell(successes: usize, trials: usize) -> String {
    let pct = if trials == 0 { 0.0 } else { (100.0 * successes as f64 / trials as f64).round() };
    format!("{successes}/{trials} ({pct:.0}%)")
}

/// Markdown table with one row per report.
pub fn format_report(reports: &[EvalReport]) -> String {
    let mut out = String::from("| Environment | Backend | Pick | Insert | Assembled |\n|---|---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            r.environment,
            r.backend,
            r.pick_cell(),
            r.insert_cell(),
            format_cell(r.assembled, r.trials)
        ));
    }
    out
}

/// Everything needed to run a batch of trials.
#[derive(Clone)]
pub struct RunSpec {
    pub scenario: ScenarioConfig,
    pub backend: BackendConfig,
    pub policy: PolicyConfig,
    pub episode: EpisodeConfig,
    pub template: PromptTemplate,
    pub n_trials: usize,
    pub seed: u64,
    /// Side-car directory for marked images.
    pub image_dir: Option<PathBuf>,
}

impl RunSpec {
    pub fn new(scenario: ScenarioConfig, backend: BackendConfig, n_trials: usize, seed: u64) -> Self {
        RunSpec {
            scenario,
            backend,
            policy: PolicyConfig::default(),
            episode: EpisodeConfig::default(),
            template: PromptTemplate::default(),
            n_trials,
            seed,
            image_dir: None,
        }
    }
}

pub struct TrialsOutput {
    pub report: EvalReport,
    pub records: Vec<EpisodeRecord>,
}

impl TrialsOutput {
    /// True when some episode ended on a backend failure.
    pub fn has_fatal_backend_error(&self) -> bool {
        self.records.iter().any(|r| crate::orchestrator::is_fatal_backend(&r.outcome))
    }
}

/// Goal pairs in an order that respects the ordering constraints.
fn ordered_pairs(world: &WorldState) -> Vec<(ObjectId, ObjectId)> {
    let mut done: Vec<ObjectId> = Vec::new();
    let mut left = world.goal.required_insertions.clone();
    let mut out = Vec::new();
    while !left.is_empty() {
        let i = left
            .iter()
            .position(|&(g, _)| world.goal.prerequisites(g).all(|p| done.contains(&p)))
            .unwrap_or(0);
        let (g, s) = left.remove(i);
        done.push(g);
        out.push((g, s));
    }
    out
}

/// Object positions of the scenario spawned with seed 0.
pub fn nominal_layout(scenario: &ScenarioConfig) -> Result<NominalLayout, WorldError> {
    let w = spawn_world(scenario, 0)?;
    let xy = |id: ObjectId| w.object(id).map(|o| (o.pose.x, o.pose.y)).unwrap_or_default();
    Ok(NominalLayout { pairs: ordered_pairs(&w).into_iter().map(|(g, s)| (g, xy(g), xy(s))).collect() })
}

/// Attempt the whole task with a single open-loop policy.
pub fn run_monolithic(world: &WorldState, layout: &NominalLayout, config: &EpisodeConfig) -> EpisodeRecord {
    let mut policy = MonolithicPolicy::new(&world.robot.tool_pose, layout);
    let chunk = config.skill.chunk_length.max(1);
    let budget = policy.plan_len().div_ceil(chunk).max(1) * chunk + chunk;
    let cfg = SkillConfig { step_budget: budget, ..config.skill };
    let (status, steps, queries, after) = match rollout_policy(world, &mut policy, world.home, &cfg, None) {
        Ok(r) => {
            let status = if r.completed { SkillStatus::Succeeded } else { SkillStatus::Failed { reason: "step budget exhausted".into() } };
            (status, r.steps_used, r.queries, r.world)
        }
        Err(e) => (SkillStatus::Aborted { error: e }, 0, 0, world.clone()),
    };
    EpisodeRecord {
        config: config.clone(),
        initial_world: world.clone(),
        init: Some(SkillSummary { skill: Skill::Init, status, steps_used: steps, approach_steps: 0, policy_queries: queries }),
        steps: Vec::new(),
        outcome: EpisodeOutcome::Completed,
        assembly_complete: after.assembly_complete(),
        final_world: after,
    }
}

fn run_one(
    spec: &RunSpec,
    backend: &Arc<dyn Backend>,
    policies: &PolicySet,
    layout: Option<&NominalLayout>,
    i: usize,
) -> Result<EpisodeRecord, HarnessError> {
    let seed = spec.seed.wrapping_add(i as u64);
    let world = spawn_world(&spec.scenario, seed)?;
    let config = EpisodeConfig { seed, episode_index: i as u64, ..spec.episode.clone() };
    if let Some(layout) = layout {
        return Ok(run_monolithic(&world, layout, &config));
    }
    let style = MarkStyle::default();
    let sink = spec.image_dir.clone().map(PpmDir);
    let components = Components {
        recognizer: backend.as_ref(),
        reasoner: backend.as_ref(),
        policies,
        template: &spec.template,
        style: &style,
        images: sink.as_ref().map(|s| s as &dyn ImageSink),
    };
    Ok(run_episode(&world, components, &config))
}

/// Run trials with world seeds `seed + i` against an already built backend.
/// Trials run in parallel unless `sequential` is set; results are ordered
/// by trial index either way.
pub fn run_trials_on(spec: &RunSpec, backend: Arc<dyn Backend>, sequential: bool) -> Result<TrialsOutput, HarnessError> {
    if spec.n_trials == 0 {
        return Err(HarnessError::Config("at least one trial is required".into()));
    }
    spec.template.validate()?;
    let policies = spec.policy.policy_set()?;
    let layout = if spec.policy.no_vlm { Some(nominal_layout(&spec.scenario)?) } else { None };
    if let Some(dir) = &spec.image_dir {
        std::fs::create_dir_all(dir)?;
    }
    let run = |i| run_one(spec, &backend, &policies, layout.as_ref(), i);
    let records: Vec<EpisodeRecord> = if sequential {
        (0..spec.n_trials).map(run).collect::<Result<_, _>>()?
    } else {
        (0..spec.n_trials).into_par_iter().map(run).collect::<Result<_, _>>()?
    };
    let scores = records.iter().map(|r| score_trial(r, &r.initial_world)).collect();
    let backend_name = if spec.policy.no_vlm { "no-vlm".to_string() } else { spec.backend.display_name() };
    Ok(TrialsOutput { report: EvalReport::from_scores(&spec.scenario.display_name, &backend_name, scores), records })
}

/// Build the configured backend and run the trials.
pub fn run_trials_with(spec: &RunSpec) -> Result<TrialsOutput, HarnessError> {
    let backend = build_backend(&spec.backend)?;
    // a replay log is consumed in order, so its episodes cannot interleave
    let sequential = matches!(spec.backend, BackendConfig::Replay { .. });
    run_trials_on(spec, backend, sequential)
}

pub fn run_trials(
    scenario: &ScenarioConfig,
    backend: &BackendConfig,
    policy: &PolicyConfig,
    n_trials: usize,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    let spec = RunSpec { policy: policy.clone(), ..RunSpec::new(scenario.clone(), backend.clone(), n_trials, seed) };
    Ok(run_trials_with(&spec)?.report)
}

/// Write `report.md`, `episodes/*.jsonl` and make sure `images/` exists.
pub fn write_outputs(dir: &Path, output: &TrialsOutput) -> Result<(), HarnessError> {
    let episodes = dir.join("episodes");
    std::fs::create_dir_all(&episodes)?;
    std::fs::create_dir_all(dir.join("images"))?;
    let r = &output.report;
    for (i, rec) in output.records.iter().enumerate() {
        let labels = EpisodeLabels { scenario: r.environment.clone(), backend: r.backend.clone(), trial: i as u64 };
        write_jsonl_file(rec, &labels, &episodes.join(format!("trial_{i:05}.jsonl")))?;
    }
    std::fs::write(dir.join("report.md"), format_report(std::slice::from_ref(r)))?;
    Ok(())
}

/// Rescore every episode file under `dir/episodes`, one report per
/// (environment, backend) pair in first-seen order.
pub fn report_from_dir(dir: &Path) -> Result<Vec<EvalReport>, HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir.join("episodes"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut groups: Vec<((String, String), Vec<TrialScore>)> = Vec::new();
    for p in paths {
        let (rec, labels) = read_jsonl(std::io::BufReader::new(std::fs::File::open(&p)?))
            .map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
        let score = score_trial(&rec, &rec.initial_world);
        let key = (labels.scenario, labels.backend);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(score),
            None => groups.push((key, vec![score])),
        }
    }
    if groups.is_empty() {
        return Err(HarnessError::Config(format!("no episode files under {}", dir.join("episodes").display())));
    }
    Ok(groups.into_iter().map(|((env, backend), s)| EvalReport::from_scores(&env, &backend, s)).collect())
}
