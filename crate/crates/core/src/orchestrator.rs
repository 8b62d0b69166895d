//! The episode loop: render, recognize, mark, reason, parse, execute.
//!
//! Every failure mode ends the episode through its outcome; `run_episode`
//! itself never errors.

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{ReasoningBackend, ReasoningRequest, RecognitionBackend, RecognitionRequest, SceneContext};
use crate::canonical::{canonical_hash, derive_seed};
use crate::marking::{mark_triplet, render_triplet, MarkStyle, TripletAnnotations, TripletCameras};
use crate::parser::{parse_decision, ParseError, Skill, SkillDecision};
use crate::prompting::{build_reasoning_prompt, build_recognition_prompt, PromptTemplate, ReasoningContext};
use crate::skills::{execute_skill, PolicySet, SkillConfig, SkillResult, SkillStatus};
use crate::world::{GoalSpec, ObjectId, ObjectKind, RasterImage, WorldState};

pub const DEFAULT_PARSE_RETRIES: usize = 2;

/// Iteration cap used when a config leaves it unset.
pub fn default_max_iterations(goal: &GoalSpec) -> usize {
    4 * goal.required_insertions.len() + 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// `None` means [`default_max_iterations`] of the world's goal.
    pub max_iterations: Option<usize>,
    pub parse_retries: usize,
    pub skill: SkillConfig,
    pub seed: u64,
    /// Distinguishes episodes sharing a backend.
    pub episode_index: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_iterations: None,
            parse_retries: DEFAULT_PARSE_RETRIES,
            skill: SkillConfig::default(),
            seed: 0,
            episode_index: 0,
        }
    }
}

/// Skill result without the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSummary {
    pub skill: Skill,
    #[serde(flatten)]
    pub status: SkillStatus,
    pub steps_used: usize,
    pub approach_steps: usize,
    pub policy_queries: usize,
}

impl SkillSummary {
    fn of(skill: Skill, r: &SkillResult) -> Self {
        SkillSummary {
            skill,
            status: r.status.clone(),
            steps_used: r.steps_used,
            approach_steps: r.approach_steps,
            policy_queries: r.policy_queries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StepDecision {
    Decision(SkillDecision),
    ParseError(ParseError),
    BackendError { stage: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub iteration: usize,
    /// Content hashes of the marked object, current and goal images.
    pub image_hashes: Vec<String>,
    pub annotations: TripletAnnotations,
    /// Object held when the decision was made.
    pub held_before: Option<ObjectId>,
    pub reasoning_calls: usize,
    pub decision: StepDecision,
    pub skill_result: Option<SkillSummary>,
    pub world_snapshot_hash: String,
}

impl EpisodeStep {
    pub fn hash(&self) -> String {
        canonical_hash(self)
    }

    pub fn skill(&self) -> Option<Skill> {
        match &self.decision {
            StepDecision::Decision(d) => Some(d.skill),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FatalKind {
    UnparseableReply,
    Backend,
    Scene,
    Marking,
    Prompt,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome")]
pub enum EpisodeOutcome {
    Completed,
    MaxIterations,
    FatalError { kind: FatalKind, detail: String },
}

impl EpisodeOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            EpisodeOutcome::Completed => "Completed",
            EpisodeOutcome::MaxIterations => "MaxIterations",
            EpisodeOutcome::FatalError { .. } => "FatalError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub config: EpisodeConfig,
    /// World after the initial init skill, before the first decision.
    pub initial_world: WorldState,
    pub init: Option<SkillSummary>,
    pub steps: Vec<EpisodeStep>,
    pub outcome: EpisodeOutcome,
    pub assembly_complete: bool,
    pub final_world: WorldState,
}

impl EpisodeRecord {
    /// Decisions that parsed, in order.
    pub fn decisions(&self) -> Vec<Skill> {
        self.steps.iter().filter_map(EpisodeStep::skill).collect()
    }

    pub fn step_hashes(&self) -> Vec<String> {
        self.steps.iter().map(EpisodeStep::hash).collect()
    }
}

/// Receives every marked image, keyed by content hash.
pub trait ImageSink: Sync {
    fn put(&self, hash: &str, image: &RasterImage) -> io::Result<()>;
}

/// Writes `<dir>/<hash>.ppm`, skipping files that already exist.
#[derive(Debug, Clone)]
pub struct PpmDir(pub PathBuf);

impl ImageSink for PpmDir {
    fn put(&self, hash: &str, image: &RasterImage) -> io::Result<()> {
        let path = self.0.join(format!("{hash}.ppm"));
        if path.exists() {
            return Ok(());
        }
        image.write_ppm(&path).map_err(io::Error::other)
    }
}

/// The pluggable pieces an episode runs against.
#[derive(Clone, Copy)]
pub struct Components<'a> {
    pub recognizer: &'a dyn RecognitionBackend,
    pub reasoner: &'a dyn ReasoningBackend,
    pub policies: &'a PolicySet,
    pub template: &'a PromptTemplate,
    pub style: &'a MarkStyle,
    pub images: Option<&'a dyn ImageSink>,
}

fn fatal(kind: FatalKind, detail: impl ToString) -> EpisodeOutcome {
    EpisodeOutcome::FatalError { kind, detail: detail.to_string() }
}

fn labels_of(world: &WorldState, keep: fn(&ObjectKind) -> bool) -> Vec<String> {
    world.objects.iter().filter(|o| keep(&o.kind)).map(|o| o.label.clone()).collect()
}

/// Called with each step as it is recorded and the world after it.
pub type StepObserver<'a> = &'a mut dyn FnMut(&EpisodeStep, &WorldState);

struct Episode<'a, 'o> {
    c: Components<'a>,
    config: &'a EpisodeConfig,
    world: WorldState,
    steps: Vec<EpisodeStep>,
    observer: Option<StepObserver<'o>>,
    history: Vec<Skill>,
    recognize_calls: u64,
    decide_calls: u64,
}

enum Flow {
    Continue,
    Stop(EpisodeOutcome),
}

impl Episode<'_, '_> {
    fn ctx<'s>(&'s self, cameras: &'s TripletCameras, call_index: u64) -> SceneContext<'s> {
        SceneContext { world: &self.world, cameras, episode_index: self.config.episode_index, call_index }
    }

    fn record(&mut self, step: EpisodeStep) {
        if let Some(obs) = self.observer.as_mut() {
            obs(&step, &self.world);
        }
        self.steps.push(step);
    }

    fn push(&mut self, iteration: usize, decision: StepDecision, reasoning_calls: usize) {
        self.record(EpisodeStep {
            iteration,
            image_hashes: Vec::new(),
            annotations: TripletAnnotations::default(),
            held_before: self.world.robot.holding,
            reasoning_calls,
            decision,
            skill_result: None,
            world_snapshot_hash: self.world.snapshot_hash(),
        });
    }

    fn iterate(&mut self, iteration: usize) -> Flow {
        let cameras = TripletCameras::for_world(&self.world);
        let triplet = match render_triplet(&self.world, &cameras) {
            Ok(t) => t,
            Err(e) => return Flow::Stop(fatal(FatalKind::Scene, e)),
        };
        let object_labels = labels_of(&self.world, ObjectKind::is_gear);
        let location_labels = labels_of(&self.world, ObjectKind::is_shaft);
        let recognition_prompt = match build_recognition_prompt(
            &object_labels.iter().chain(&location_labels).cloned().collect::<Vec<_>>(),
        ) {
            Ok(p) => p,
            Err(e) => return Flow::Stop(fatal(FatalKind::Prompt, e)),
        };
        let req = RecognitionRequest { triplet, object_labels, location_labels, recognition_prompt };
        let call = self.recognize_calls;
        self.recognize_calls += 1;
        let annotations = match self.c.recognizer.recognize(&req, &self.ctx(&cameras, call)) {
            Ok(a) => a,
            Err(e) => {
                let message = e.to_string();
                self.push(iteration, StepDecision::BackendError { stage: "recognize".into(), message: message.clone() }, 0);
                return Flow::Stop(fatal(FatalKind::Backend, message));
            }
        };
        let marked = match annotations.check_shared_namespace().and_then(|_| mark_triplet(&req.triplet, &annotations, self.c.style)) {
            Ok(m) => m,
            Err(e) => return Flow::Stop(fatal(FatalKind::Marking, e)),
        };
        let image_hashes: Vec<String> = marked.images.hashes().to_vec();
        if let Some(sink) = self.c.images {
            let imgs = [&marked.images.object_img, &marked.images.current_img, &marked.images.goal_img];
            for (h, img) in image_hashes.iter().zip(imgs) {
                if let Err(e) = sink.put(h, img) {
                    return Flow::Stop(fatal(FatalKind::Output, e));
                }
            }
        }
        let ctx = ReasoningContext { history: &self.history, holding: self.world.robot.holding.is_some() };
        let prompt = match build_reasoning_prompt(self.c.template, &marked, ctx) {
            Ok(p) => p,
            Err(e) => return Flow::Stop(fatal(FatalKind::Prompt, e)),
        };
        let known = annotations.marker_ids();
        let reasoning = ReasoningRequest { marked, prompt };

        let mut calls = 0;
        let decided: Result<SkillDecision, StepDecision> = loop {
            let call = self.decide_calls;
            self.decide_calls += 1;
            calls += 1;
            let reply = match self.c.reasoner.decide(&reasoning, &self.ctx(&cameras, call)) {
                Ok(r) => r,
                Err(e) => break Err(StepDecision::BackendError { stage: "decide".into(), message: e.to_string() }),
            };
            match parse_decision(&reply, &known) {
                Ok(d) => break Ok(d),
                Err(e) if calls > self.config.parse_retries => break Err(StepDecision::ParseError(e)),
                Err(_) => continue,
            }
        };
        let held_before = self.world.robot.holding;
        let mut step = EpisodeStep {
            iteration,
            image_hashes,
            annotations,
            held_before,
            reasoning_calls: calls,
            decision: StepDecision::ParseError(ParseError {
                kind: crate::parser::ParseErrorKind::NoDecisionFound,
                span: None,
                detail: String::new(),
            }),
            skill_result: None,
            world_snapshot_hash: String::new(),
        };
        let decision = match decided {
            Ok(d) => d,
            Err(e) => {
                let outcome = match &e {
                    StepDecision::ParseError(p) => fatal(FatalKind::UnparseableReply, p),
                    StepDecision::BackendError { message, .. } => fatal(FatalKind::Backend, message),
                    StepDecision::Decision(_) => unreachable!(),
                };
                step.decision = e;
                step.world_snapshot_hash = self.world.snapshot_hash();
                self.record(step);
                return Flow::Stop(outcome);
            }
        };
        let skill = decision.skill;
        step.decision = StepDecision::Decision(decision);
        self.history.push(skill);
        if skill == Skill::Done {
            step.skill_result = Some(SkillSummary {
                skill,
                status: SkillStatus::Succeeded,
                steps_used: 0,
                approach_steps: 0,
                policy_queries: 0,
            });
            step.world_snapshot_hash = self.world.snapshot_hash();
            self.record(step);
            return Flow::Stop(EpisodeOutcome::Completed);
        }
        let seed = derive_seed(&[self.config.seed, self.config.episode_index, iteration as u64]);
        let result = execute_skill(
            &self.world,
            &skill,
            &step.annotations.current,
            &cameras.current,
            self.c.policies,
            &self.config.skill,
            seed,
            None,
        );
        step.skill_result = Some(SkillSummary::of(skill, &result));
        self.world = result.world_after;
        step.world_snapshot_hash = self.world.snapshot_hash();
        self.record(step);
        Flow::Continue
    }
}

/// Run one episode to termination.
pub fn run_episode(world: &WorldState, components: Components<'_>, config: &EpisodeConfig) -> EpisodeRecord {
    run_episode_observed(world, components, config, None)
}

/// [`run_episode`] with a hook invoked on every recorded step.
pub fn run_episode_observed(
    world: &WorldState,
    components: Components<'_>,
    config: &EpisodeConfig,
    observer: Option<StepObserver<'_>>,
) -> EpisodeRecord {
    let max_iterations = config.max_iterations.unwrap_or_else(|| default_max_iterations(&world.goal));
    let init_seed = derive_seed(&[config.seed, config.episode_index, u64::MAX]);
    let cams = TripletCameras::for_world(world);
    let init = execute_skill(world, &Skill::Init, &[], &cams.current, components.policies, &config.skill, init_seed, None);
    let init_summary = SkillSummary::of(Skill::Init, &init);
    let mut ep = Episode {
        c: components,
        config,
        world: init.world_after,
        steps: Vec::new(),
        observer,
        history: Vec::new(),
        recognize_calls: 0,
        decide_calls: 0,
    };
    let initial_world = ep.world.clone();
    let mut outcome = EpisodeOutcome::MaxIterations;
    for iteration in 0..max_iterations {
        if let Flow::Stop(o) = ep.iterate(iteration) {
            outcome = o;
            break;
        }
    }
    EpisodeRecord {
        config: config.clone(),
        initial_world,
        init: Some(init_summary),
        steps: ep.steps,
        outcome,
        assembly_complete: ep.world.assembly_complete(),
        final_world: ep.world,
    }
}

/// Header line of an episode file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub scenario: String,
    pub backend: String,
    pub trial: u64,
    pub config: EpisodeConfig,
    #[serde(flatten)]
    pub outcome: EpisodeOutcome,
    pub assembly_complete: bool,
    pub init: Option<SkillSummary>,
    pub num_steps: usize,
    pub initial_world: WorldState,
    pub final_world: WorldState,
}

/// Names attached to an episode file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EpisodeLabels {
    pub scenario: String,
    pub backend: String,
    pub trial: u64,
}

/// Serialize as one header line followed by one line per step.
pub fn write_jsonl<W: Write>(record: &EpisodeRecord, labels: &EpisodeLabels, mut out: W) -> io::Result<()> {
    let header = EpisodeHeader {
        scenario: labels.scenario.clone(),
        backend: labels.backend.clone(),
        trial: labels.trial,
        config: record.config.clone(),
        outcome: record.outcome.clone(),
        assembly_complete: record.assembly_complete,
        init: record.init.clone(),
        num_steps: record.steps.len(),
        initial_world: record.initial_world.clone(),
        final_world: record.final_world.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&header).map_err(io::Error::other)?)?;
    for s in &record.steps {
        writeln!(out, "{}", serde_json::to_string(s).map_err(io::Error::other)?)?;
    }
    out.flush()
}

pub fn write_jsonl_file(record: &EpisodeRecord, labels: &EpisodeLabels, path: &Path) -> io::Result<()> {
    write_jsonl(record, labels, io::BufWriter::new(std::fs::File::create(path)?))
}

/// Inverse of [`write_jsonl`].
pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<(EpisodeRecord, EpisodeLabels)> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty episode file"))??;
    let header: EpisodeHeader = serde_json::from_str(&first).map_err(io::Error::other)?;
    let mut steps = Vec::with_capacity(header.num_steps);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        steps.push(serde_json::from_str(&line).map_err(io::Error::other)?);
    }
    if steps.len() != header.num_steps {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("header announces {} steps, found {}", header.num_steps, steps.len()),
        ));
    }
    let labels = EpisodeLabels { scenario: header.scenario, backend: header.backend, trial: header.trial };
    Ok((
        EpisodeRecord {
            config: header.config,
            initial_world: header.initial_world,
            init: header.init,
            steps,
            outcome: header.outcome,
            assembly_complete: header.assembly_complete,
            final_world: header.final_world,
        },
        labels,
    ))
}

/// Backend errors that end an episode as fatal rather than as a stage failure.
pub fn is_fatal_backend(outcome: &EpisodeOutcome) -> bool {
    matches!(outcome, EpisodeOutcome::FatalError { kind: FatalKind::Backend, .. })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, OracleBackend};
    use crate::marking::MarkerId;
    use crate::world::tests::{gear, shaft, world};
    use crate::world::{ObjectId, Pose};

    fn one_pair() -> WorldState {
        let mut w = world(
            vec![gear(1, -0.05, 0.02, 0.005), shaft(2, 0.1, -0.03, 0.0049)],
            GoalSpec { required_insertions: vec![(ObjectId(1), ObjectId(2))], ordering_constraints: vec![] },
        );
        w.home = Pose::new(0.0, 0.15, 0.1, 0.0);
        w
    }

    struct Canned(&'static str);
    impl ReasoningBackend for Canned {
        fn decide(&self, _: &ReasoningRequest, _: &SceneContext<'_>) -> Result<String, BackendError> {
            Ok(self.0.to_string())
        }
    }

    fn run(reasoner: &dyn ReasoningBackend, config: &EpisodeConfig) -> EpisodeRecord {
        let policies = PolicySet::scripted(0.0);
        let template = PromptTemplate::default();
        let style = MarkStyle::default();
        let c = Components {
            recognizer: &OracleBackend,
            reasoner,
            policies: &policies,
            template: &template,
            style: &style,
            images: None,
        };
        run_episode(&one_pair(), c, config)
    }

    #[test]
    fn default_cap() {
        assert_eq!(default_max_iterations(&GoalSpec::default()), 2);
        let g = GoalSpec {
            required_insertions: (1..=3).map(|i| (ObjectId(i), ObjectId(i + 10))).collect(),
            ordering_constraints: vec![],
        };
        assert_eq!(default_max_iterations(&g), 14);
    }

    #[test]
    fn oracle_one_gear_takes_three_decisions() {
        let r = run(&OracleBackend, &EpisodeConfig::default());
        assert_eq!(r.outcome, EpisodeOutcome::Completed);
        assert!(r.assembly_complete);
        assert_eq!(
            r.decisions(),
            vec![
                Skill::Pick { object_marker: MarkerId(1) },
                Skill::Insert { target_marker: MarkerId(102) },
                Skill::Done
            ]
        );
        for s in &r.steps {
            assert_eq!(s.image_hashes.len(), 3);
            assert_eq!(s.reasoning_calls, 1);
        }
    }

    #[test]
    fn garbage_is_fatal_after_retries() {
        let cfg = EpisodeConfig { parse_retries: 2, ..EpisodeConfig::default() };
        let r = run(&Canned("no idea"), &cfg);
        assert!(matches!(r.outcome, EpisodeOutcome::FatalError { kind: FatalKind::UnparseableReply, .. }));
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.steps[0].reasoning_calls, 3);
        assert_eq!(r.steps[0].iteration, 0);
    }

    #[test]
    fn endless_picking_hits_the_cap() {
        let r = run(&Canned("DECISION: pick(1)"), &EpisodeConfig::default());
        assert_eq!(r.outcome, EpisodeOutcome::MaxIterations);
        assert_eq!(r.steps.len(), default_max_iterations(&one_pair().goal));
        for s in &r.steps[1..] {
            let res = s.skill_result.as_ref().unwrap();
            assert!(matches!(res.status, SkillStatus::Aborted { .. }));
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let r = run(&OracleBackend, &EpisodeConfig::default());
        let labels = EpisodeLabels { scenario: "t".into(), backend: "oracle".into(), trial: 4 };
        let mut buf = Vec::new();
        write_jsonl(&r, &labels, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1 + r.steps.len());
        let (back, l) = read_jsonl(io::Cursor::new(buf)).unwrap();
        assert_eq!(l, labels);
        assert_eq!(back.step_hashes(), r.step_hashes());
        assert_eq!(back, r);
    }

    #[test]
    fn images_go_to_the_sink() {
        let dir = tempfile::tempdir().unwrap();
        let sink = PpmDir(dir.path().to_path_buf());
        let policies = PolicySet::scripted(0.0);
        let template = PromptTemplate::default();
        let style = MarkStyle::default();
        let c = Components {
            recognizer: &OracleBackend,
            reasoner: &OracleBackend,
            policies: &policies,
            template: &template,
            style: &style,
            images: Some(&sink),
        };
        let r = run_episode(&one_pair(), c, &EpisodeConfig::default());
        for h in r.steps.iter().flat_map(|s| &s.image_hashes) {
            let bytes = std::fs::read(dir.path().join(format!("{h}.ppm"))).unwrap();
            assert_eq!(RasterImage::from_ppm(&bytes).unwrap().content_hash(), *h);
        }
    }
}
