//! Primitive skill execution: marker deprojection, the approach move, and
//! chunked policy rollout.
//!
//! A policy maps a wrist-camera image and the robot state to a fixed-length
//! chunk of commands. The rollout applies each chunk in full before asking
//! the policy again with a freshly rendered image.

mod monolithic;
mod scripted;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marking::{MarkerId, PointAnnotation};
use crate::parser::Skill;
use crate::world::{
    render, Camera, Command, ObjectStatus, Pose, RasterImage, RobotState, WorldError, WorldState, STEP_LIMIT_M,
};

pub use monolithic::{MonolithicPolicy, NominalLayout};
pub use scripted::{localize_target, ScriptedInit, ScriptedInsert, ScriptedKind, ScriptedPick, ScriptedPlace, ScriptedPolicyFactory};

pub const CHUNK_LENGTH: usize = 16;
pub const DEFAULT_STEP_BUDGET: usize = 12 * CHUNK_LENGTH;
pub const DEFAULT_Z_OFFSET_M: f64 = 0.05;
/// Height of the plane that marker pixels deproject onto.
pub const APPROACH_PLANE_Z: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum SkillError {
    #[error("marker {0} is not in the annotation set")]
    UnknownMarker(MarkerId),
    #[error("target ({x:.4}, {y:.4}, {z:.4}) is outside the workspace")]
    UnreachableTarget { x: f64, y: f64, z: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("policy failure: {0}")]
    PolicyFailure(String),
    #[error("approach blocked: {0}")]
    ApproachBlocked(String),
}

/// Commands produced by one policy query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    commands: Vec<Command>,
}

impl Trajectory {
    pub fn new(commands: Vec<Command>) -> Self {
        Trajectory { commands }
    }

    /// Pad with hold commands (or truncate) to exactly `len` commands.
    pub fn padded(mut commands: Vec<Command>, len: usize) -> Self {
        commands.resize(len, Command::HOLD);
        Trajectory { commands }
    }

    pub fn commands(&self) -> &[Command] {
        &self.commands
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PolicyInput {
    pub camera_image: RasterImage,
    pub camera: Camera,
    pub robot_state: RobotState,
    pub target_pose: Pose,
    pub chunk_length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyOutput {
    Chunk(Trajectory),
    Complete,
}

/// A closed-loop skill policy; one instance per skill execution.
pub trait Policy: Send {
    fn act(&mut self, input: &PolicyInput) -> Result<PolicyOutput, String>;
}

/// Builds policies; the seed drives any internal noise.
pub trait PolicyFactory: Send + Sync {
    fn create(&self, seed: u64) -> Box<dyn Policy>;
}

/// Policy factories registered by name.
#[derive(Clone, Default)]
pub struct PolicyRegistry {
    factories: BTreeMap<String, Arc<dyn PolicyFactory>>,
}

impl PolicyRegistry {
    /// Registry holding `scripted-pick`, `scripted-place`, `scripted-insert`
    /// and `scripted-init` at the given noise level.
    pub fn with_scripted(noise_sigma_m: f64) -> Self {
        let mut r = PolicyRegistry::default();
        for kind in [ScriptedKind::Pick, ScriptedKind::Place, ScriptedKind::Insert, ScriptedKind::Init] {
            r.register(kind.registry_name(), Arc::new(ScriptedPolicyFactory { kind, noise_sigma_m }));
        }
        r
    }

    pub fn register(&mut self, name: &str, factory: Arc<dyn PolicyFactory>) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn PolicyFactory>> {
        self.factories.get(name).cloned()
    }
}

/// Policy names per skill, as given in configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyNames {
    pub pick: String,
    pub place: String,
    pub insert: String,
    pub init: String,
}

impl Default for PolicyNames {
    fn default() -> Self {
        PolicyNames {
            pick: ScriptedKind::Pick.registry_name().into(),
            place: ScriptedKind::Place.registry_name().into(),
            insert: ScriptedKind::Insert.registry_name().into(),
            init: ScriptedKind::Init.registry_name().into(),
        }
    }
}

/// The policy used for each skill.
#[derive(Clone)]
pub struct PolicySet {
    pub pick: Arc<dyn PolicyFactory>,
    pub place: Arc<dyn PolicyFactory>,
    pub insert: Arc<dyn PolicyFactory>,
    pub init: Arc<dyn PolicyFactory>,
}

impl PolicySet {
    pub fn scripted(noise_sigma_m: f64) -> Self {
        Self::from_names(&PolicyRegistry::with_scripted(noise_sigma_m), &PolicyNames::default())
            .expect("scripted policies are registered")
    }

    pub fn from_names(registry: &PolicyRegistry, names: &PolicyNames) -> Result<Self, String> {
        let get = |n: &str| registry.get(n).ok_or_else(|| format!("no policy registered as {n:?}"));
        Ok(PolicySet { pick: get(&names.pick)?, place: get(&names.place)?, insert: get(&names.insert)?, init: get(&names.init)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillConfig {
    pub chunk_length: usize,
    pub step_budget: usize,
    pub z_offset: f64,
}

impl Default for SkillConfig {
    fn default() -> Self {
        SkillConfig { chunk_length: CHUNK_LENGTH, step_budget: DEFAULT_STEP_BUDGET, z_offset: DEFAULT_Z_OFFSET_M }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum SkillStatus {
    Succeeded,
    Failed { reason: String },
    Aborted { error: SkillError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillResult {
    pub status: SkillStatus,
    /// Commands applied by the policy rollout.
    pub steps_used: usize,
    /// Commands applied by the approach move.
    pub approach_steps: usize,
    pub policy_queries: usize,
    pub world_after: WorldState,
}

/// One policy query as seen by a rollout observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkEvent {
    pub query_index: usize,
    /// World steps elapsed while the chunk was applied.
    pub commands_applied: u64,
}

/// Receives one event per applied chunk.
pub type Observer<'a> = &'a mut dyn FnMut(ChunkEvent);

/// Outcome of a rollout before the skill postcondition is checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub completed: bool,
    pub steps_used: usize,
    pub queries: usize,
    pub world: WorldState,
}

/// World pose (on the approach plane) of a marker's annotation pixel.
pub fn marker_to_workspace(marker: MarkerId, annotations: &[PointAnnotation], camera: &Camera) -> Result<Pose, SkillError> {
    let a = annotations.iter().find(|a| a.marker_id == marker).ok_or(SkillError::UnknownMarker(marker))?;
    let (x, y) = camera.unproject(a.pixel.x as f64, a.pixel.y as f64);
    Ok(Pose::new(x, y, APPROACH_PLANE_Z, 0.0))
}

fn split_move(d: f64) -> usize {
    (d.abs() / STEP_LIMIT_M - 1e-9).ceil().max(0.0) as usize
}

fn straight_segment(dx: f64, dy: f64, dz: f64) -> Vec<Command> {
    let n = split_move(dx.hypot(dy).hypot(dz));
    (0..n).map(|_| Command::translate(dx / n as f64, dy / n as f64, dz / n as f64)).collect()
}

/// In-limit commands taking the tool from `from` to `to`. Rising moves go
/// up first; descending moves go across first.
pub fn plan_approach(from: &Pose, to: (f64, f64, f64)) -> Vec<Command> {
    let (dx, dy, dz) = (to.0 - from.x, to.1 - from.y, to.2 - from.z);
    let mut out = Vec::new();
    if dz > 0.0 {
        out.extend(straight_segment(0.0, 0.0, dz));
        out.extend(straight_segment(dx, dy, 0.0));
    } else {
        out.extend(straight_segment(dx, dy, 0.0));
        out.extend(straight_segment(0.0, 0.0, dz));
    }
    out
}

/// Move the tool to `z_offset` above `target`. Returns the new world and the
/// number of commands applied.
pub fn approach_move(world: &WorldState, target: &Pose, z_offset: f64) -> Result<(WorldState, usize), SkillError> {
    let goal = (target.x, target.y, target.z + z_offset);
    let ws = &world.workspace;
    if !(goal.2 >= 0.0 && ws.contains(goal.0, goal.1, goal.2)) {
        return Err(SkillError::UnreachableTarget { x: goal.0, y: goal.1, z: goal.2 });
    }
    let mut w = world.clone();
    let plan = plan_approach(&w.robot.tool_pose, goal);
    for cmd in &plan {
        w.apply_command(cmd).map_err(|e: WorldError| SkillError::ApproachBlocked(e.to_string()))?;
    }
    Ok((w, plan.len()))
}

/// Query `policy` for chunks until it reports completion or the budget runs
/// out. Every chunk is applied in full; rejected motions still use a step.
pub fn rollout_policy(
    world: &WorldState,
    policy: &mut dyn Policy,
    target: Pose,
    config: &SkillConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<Rollout, SkillError> {
    if config.chunk_length == 0 || config.step_budget < config.chunk_length {
        return Err(SkillError::PolicyFailure("step budget smaller than one chunk".into()));
    }
    let mut w = world.clone();
    let mut steps = 0;
    let mut queries = 0;
    loop {
        let camera = Camera::wrist(&w.robot.tool_pose);
        let image = render(&w, &camera).map_err(|e| SkillError::PolicyFailure(e.to_string()))?;
        let input = PolicyInput {
            camera_image: image,
            camera,
            robot_state: w.robot.clone(),
            target_pose: target,
            chunk_length: config.chunk_length,
        };
        let out = policy.act(&input).map_err(SkillError::PolicyFailure)?;
        queries += 1;
        let traj = match out {
            PolicyOutput::Complete => return Ok(Rollout { completed: true, steps_used: steps, queries, world: w }),
            PolicyOutput::Chunk(t) => t,
        };
        if traj.len() != config.chunk_length {
            return Err(SkillError::PolicyFailure(format!(
                "chunk has {} commands, expected {}",
                traj.len(),
                config.chunk_length
            )));
        }
        if steps + traj.len() > config.step_budget {
            return Ok(Rollout { completed: false, steps_used: steps, queries, world: w });
        }
        let before = w.step_count;
        for cmd in traj.commands() {
            match w.apply_command(cmd) {
                Ok(()) | Err(WorldError::CollisionRejected(_)) => {}
                Err(e) => return Err(SkillError::PolicyFailure(e.to_string())),
            }
        }
        steps += traj.len();
        if let Some(obs) = observer.as_mut() {
            obs(ChunkEvent { query_index: queries - 1, commands_applied: w.step_count - before });
        }
    }
}

fn aborted(world: &WorldState, error: SkillError) -> SkillResult {
    SkillResult {
        status: SkillStatus::Aborted { error },
        steps_used: 0,
        approach_steps: 0,
        policy_queries: 0,
        world_after: world.clone(),
    }
}

/// Run one skill against the world.
///
/// `annotations` is the current-image annotation set and `camera` the
/// camera that produced it. Precondition failures leave the world untouched.
#[allow(clippy::too_many_arguments)]
pub fn execute_skill(
    world: &WorldState,
    skill: &Skill,
    annotations: &[PointAnnotation],
    camera: &Camera,
    policies: &PolicySet,
    config: &SkillConfig,
    seed: u64,
    observer: Option<Observer<'_>>,
) -> SkillResult {
    let holding = world.robot.holding;
    let (factory, target, z_offset) = match *skill {
        Skill::Done => {
            return SkillResult {
                status: SkillStatus::Succeeded,
                steps_used: 0,
                approach_steps: 0,
                policy_queries: 0,
                world_after: world.clone(),
            }
        }
        Skill::Init => (&policies.init, world.home, None),
        Skill::Pick { object_marker } => {
            if let Some(h) = holding {
                return aborted(world, SkillError::PreconditionViolated(format!("pick while holding object {h}")));
            }
            match marker_to_workspace(object_marker, annotations, camera) {
                Ok(p) => (&policies.pick, p, Some(config.z_offset)),
                Err(e) => return aborted(world, e),
            }
        }
        Skill::Place { target_marker } | Skill::Insert { target_marker } => {
            if holding.is_none() {
                return aborted(world, SkillError::PreconditionViolated(format!("{} with an empty gripper", skill.name())));
            }
            let factory = if matches!(skill, Skill::Place { .. }) { &policies.place } else { &policies.insert };
            match marker_to_workspace(target_marker, annotations, camera) {
                Ok(p) => (factory, p, Some(config.z_offset)),
                Err(e) => return aborted(world, e),
            }
        }
    };

    let (start, approach_steps) = match z_offset {
        Some(off) => match approach_move(world, &target, off) {
            Ok(r) => r,
            Err(e) => return aborted(world, e),
        },
        None => (world.clone(), 0),
    };
    let mut policy = factory.create(seed);
    let rollout = match rollout_policy(&start, policy.as_mut(), target, config, observer) {
        Ok(r) => r,
        Err(e) => {
            return SkillResult {
                status: SkillStatus::Aborted { error: e },
                steps_used: 0,
                approach_steps,
                policy_queries: 0,
                world_after: start,
            }
        }
    };
    let status = if !rollout.completed {
        SkillStatus::Failed { reason: "step budget exhausted".into() }
    } else {
        match postcondition(skill, holding, &rollout.world) {
            Ok(()) => SkillStatus::Succeeded,
            Err(reason) => SkillStatus::Failed { reason },
        }
    };
    SkillResult {
        status,
        steps_used: rollout.steps_used,
        approach_steps,
        policy_queries: rollout.queries,
        world_after: rollout.world,
    }
}

fn postcondition(skill: &Skill, held_before: Option<crate::world::ObjectId>, after: &WorldState) -> Result<(), String> {
    match skill {
        Skill::Pick { .. } => after.robot.holding.map(|_| ()).ok_or_else(|| "nothing grasped".to_string()),
        Skill::Place { .. } => match after.robot.holding {
            None => Ok(()),
            Some(_) => Err("object still held".into()),
        },
        Skill::Insert { .. } => {
            let gear = held_before.expect("insert precondition checked");
            match after.object(gear).map(|o| o.status) {
                Some(ObjectStatus::Inserted { .. }) => Ok(()),
                _ => Err(format!("object {gear} is not on a shaft")),
            }
        }
        Skill::Init => {
            let at_home = after.robot.tool_pose.planar_distance(&after.home) < 1e-6
                && (after.robot.tool_pose.z - after.home.z).abs() < 1e-6;
            if at_home && after.robot.holding.is_none() {
                Ok(())
            } else {
                Err("robot not at home with an open gripper".into())
            }
        }
        Skill::Done => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::tests::{gear, shaft, world};
    use crate::world::{CameraView, GoalSpec, ObjectId, PixelCoord, GEAR_THICKNESS_M};

    fn one_pair() -> WorldState {
        world(
            vec![gear(1, -0.05, 0.02, 0.005), shaft(2, 0.1, -0.03, 0.0049)],
            GoalSpec { required_insertions: vec![(ObjectId(1), ObjectId(2))], ordering_constraints: vec![] },
        )
    }

    fn annotations(w: &WorldState, cam: &Camera) -> Vec<PointAnnotation> {
        crate::world::ground_truth_points(w, cam, &["gear 1".into(), "shaft 2".into()]).unwrap()
    }

    #[test]
    fn marker_deprojects_near_true_center() {
        let w = one_pair();
        let cam = Camera::top(CameraView::TopCurrent);
        let p = marker_to_workspace(MarkerId(1), &annotations(&w, &cam), &cam).unwrap();
        assert!(p.planar_distance(&w.objects[0].pose) < cam.meters_per_pixel);
        assert_eq!(p.z, APPROACH_PLANE_Z);
        assert_eq!(
            marker_to_workspace(MarkerId(42), &annotations(&w, &cam), &cam),
            Err(SkillError::UnknownMarker(MarkerId(42)))
        );
    }

    #[test]
    fn approach_straight_down_is_vertical_only() {
        let from = Pose::new(0.1, 0.1, 0.1, 0.0);
        let plan = plan_approach(&from, (0.1, 0.1, 0.03));
        assert_eq!(plan.len(), 14);
        assert!(plan.iter().all(|c| c.dx == 0.0 && c.dy == 0.0 && c.dz < 0.0 && c.within_limits()));
    }

    #[test]
    fn approach_reaches_offset_height() {
        let w = one_pair();
        let target = Pose::new(0.02, -0.04, 0.0, 0.0);
        let (after, n) = approach_move(&w, &target, 0.05).unwrap();
        let t = after.robot.tool_pose;
        assert!((t.z - 0.05).abs() < 1e-9 && t.planar_distance(&target) < 1e-9);
        assert_eq!(after.step_count, n as u64);
        assert_eq!(after.robot.gripper_aperture, w.robot.gripper_aperture);
    }

    #[test]
    fn unreachable_target() {
        let w = one_pair();
        let err = approach_move(&w, &Pose::new(2.0, 0.0, 0.0, 0.0), 0.05).unwrap_err();
        assert!(matches!(err, SkillError::UnreachableTarget { .. }));
    }

    #[test]
    fn done_is_a_no_op() {
        let w = one_pair();
        let cam = Camera::top(CameraView::TopCurrent);
        let r = execute_skill(&w, &Skill::Done, &[], &cam, &PolicySet::scripted(0.0), &SkillConfig::default(), 0, None);
        assert_eq!(r.status, SkillStatus::Succeeded);
        assert_eq!(r.world_after, w);
    }

    #[test]
    fn pick_while_holding_is_rejected() {
        let mut w = one_pair();
        w.objects[0].status = ObjectStatus::Grasped;
        w.robot.holding = Some(ObjectId(1));
        let cam = Camera::top(CameraView::TopCurrent);
        let anns = annotations(&w, &cam);
        let r = execute_skill(&w, &Skill::Pick { object_marker: MarkerId(1) }, &anns, &cam, &PolicySet::scripted(0.0), &SkillConfig::default(), 0, None);
        assert!(matches!(r.status, SkillStatus::Aborted { error: SkillError::PreconditionViolated(_) }));
        assert_eq!(r.world_after, w);
        let empty = one_pair();
        let r = execute_skill(&empty, &Skill::Insert { target_marker: MarkerId(102) }, &anns, &cam, &PolicySet::scripted(0.0), &SkillConfig::default(), 0, None);
        assert!(matches!(r.status, SkillStatus::Aborted { error: SkillError::PreconditionViolated(_) }));
    }

    #[test]
    fn pick_then_insert_completes_one_pair() {
        let w = one_pair();
        let cam = Camera::top(CameraView::TopCurrent);
        let policies = PolicySet::scripted(0.0);
        let cfg = SkillConfig::default();
        let pick = execute_skill(&w, &Skill::Pick { object_marker: MarkerId(1) }, &annotations(&w, &cam), &cam, &policies, &cfg, 1, None);
        assert_eq!(pick.status, SkillStatus::Succeeded, "{pick:?}");
        assert_eq!(pick.world_after.robot.holding, Some(ObjectId(1)));
        assert!(pick.steps_used <= 4 * CHUNK_LENGTH);
        let w = pick.world_after;
        let ins = execute_skill(&w, &Skill::Insert { target_marker: MarkerId(102) }, &annotations(&w, &cam), &cam, &policies, &cfg, 2, None);
        assert_eq!(ins.status, SkillStatus::Succeeded, "{ins:?}");
        assert!(ins.steps_used <= 4 * CHUNK_LENGTH);
        assert!(ins.world_after.assembly_complete());
        ins.world_after.check_invariants().unwrap();
    }

    #[test]
    fn init_returns_home_and_drops() {
        let mut w = one_pair();
        w.objects[0].status = ObjectStatus::Grasped;
        w.objects[0].pose.z = 0.02;
        w.robot.tool_pose = Pose::new(-0.05, 0.02, 0.02 + GEAR_THICKNESS_M, 0.0);
        w.robot.holding = Some(ObjectId(1));
        w.robot.gripper_aperture = 0.0;
        let cam = Camera::top(CameraView::TopCurrent);
        let r = execute_skill(&w, &Skill::Init, &[], &cam, &PolicySet::scripted(0.0), &SkillConfig::default(), 0, None);
        assert_eq!(r.status, SkillStatus::Succeeded, "{r:?}");
        assert_eq!(r.world_after.objects[0].status, ObjectStatus::Free);
        r.world_after.check_invariants().unwrap();
    }

    #[test]
    fn observer_sees_full_chunks() {
        let w = one_pair();
        let cam = Camera::top(CameraView::TopCurrent);
        let mut events = Vec::new();
        let mut obs = |e: ChunkEvent| events.push(e);
        let r = execute_skill(&w, &Skill::Pick { object_marker: MarkerId(1) }, &annotations(&w, &cam), &cam, &PolicySet::scripted(0.0), &SkillConfig::default(), 1, Some(&mut obs));
        assert_eq!(r.status, SkillStatus::Succeeded);
        assert!(!events.is_empty());
        assert!(events.iter().all(|e| e.commands_applied == CHUNK_LENGTH as u64));
        assert_eq!(r.policy_queries, events.len() + 1);
    }

    struct Stubborn;
    impl Policy for Stubborn {
        fn act(&mut self, input: &PolicyInput) -> Result<PolicyOutput, String> {
            Ok(PolicyOutput::Chunk(Trajectory::padded(vec![], input.chunk_length)))
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let w = one_pair();
        let cfg = SkillConfig { step_budget: 40, ..SkillConfig::default() };
        let r = rollout_policy(&w, &mut Stubborn, w.home, &cfg, None).unwrap();
        assert!(!r.completed);
        assert_eq!(r.steps_used, 32);
    }

    struct Short;
    impl Policy for Short {
        fn act(&mut self, _: &PolicyInput) -> Result<PolicyOutput, String> {
            Ok(PolicyOutput::Chunk(Trajectory::new(vec![Command::HOLD; 3])))
        }
    }

    #[test]
    fn wrong_chunk_length_is_a_policy_failure() {
        let w = one_pair();
        let err = rollout_policy(&w, &mut Short, w.home, &SkillConfig::default(), None).unwrap_err();
        assert!(matches!(err, SkillError::PolicyFailure(_)));
    }

    #[test]
    fn annotation_pixel_is_unprojected_exactly() {
        let cam = Camera::top(CameraView::TopCurrent);
        let a = PointAnnotation { marker_id: MarkerId(5), pixel: PixelCoord { x: 100, y: 50 }, label: "x".into() };
        let p = marker_to_workspace(MarkerId(5), &[a], &cam).unwrap();
        assert_eq!(cam.pixel_of(p.x, p.y), PixelCoord { x: 100, y: 50 });
    }
}

#[cfg(test)]
mod noise_regression {
    use super::*;
    use crate::world::tests::{gear, shaft, world};
    use crate::world::{CameraView, GoalSpec, ObjectId};

    /// Inserts with a noisy policy from a fixed held-gear start; returns the
    /// number of trials that seat the gear.
    fn noisy_insert_successes(sigma: f64, trials: u64) -> usize {
        let mut w = world(
            vec![gear(1, -0.05, 0.02, 0.005), shaft(2, 0.1, -0.03, 0.0049)],
            GoalSpec { required_insertions: vec![(ObjectId(1), ObjectId(2))], ordering_constraints: vec![] },
        );
        let cam = Camera::top(CameraView::TopCurrent);
        let anns = crate::world::ground_truth_points(&w, &cam, &["gear 1".into(), "shaft 2".into()]).unwrap();
        let exact = PolicySet::scripted(0.0);
        let cfg = SkillConfig::default();
        w = execute_skill(&w, &Skill::Pick { object_marker: MarkerId(1) }, &anns, &cam, &exact, &cfg, 0, None).world_after;
        assert_eq!(w.robot.holding, Some(ObjectId(1)));
        let noisy = PolicySet::scripted(sigma);
        (0..trials)
            .filter(|&seed| {
                let r = execute_skill(&w, &Skill::Insert { target_marker: MarkerId(102) }, &anns, &cam, &noisy, &cfg, seed, None);
                r.status == SkillStatus::Succeeded
            })
            .count()
    }

    #[test]
    fn half_millimeter_noise_insert_rate_is_frozen() {
        let n = noisy_insert_successes(0.0005, 200);
        assert!(n > 0 && n < 200);
        assert_eq!(n, FROZEN);
    }

    // Monte Carlo baseline recorded on the first run with this seed range.
    const FROZEN: usize = 6;
}
