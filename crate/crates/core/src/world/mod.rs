//! Kinematic tabletop world: gears, shafts and a base plate, a point-tool
//! gripper, and the grasp / release / insert rules that the skill policies
//! operate against.
//!
//! Coordinates are meters in a right-handed frame with the table surface at
//! `z = 0`. An object's `pose.z` is the height of its underside.

mod camera;
mod image;
mod render;
mod scenario;

pub use camera::{Camera, CameraView, PixelCoord};
pub use image::{ImageError, RasterImage, Rgb};
pub use render::{
    ground_truth_points, object_color, render, goal_world, palette_color, PLATE_COLOR,
    TABLE_COLOR,
};
pub use scenario::{
    builtin_scenario, builtin_scenario_names, spawn_world, ObjectSpec, Placement, Region,
    ScenarioConfig,
};

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;

/// Largest translation a single command may request on any axis.
pub const STEP_LIMIT_M: f64 = 0.005;
/// Largest yaw change a single command may request.
pub const STEP_LIMIT_YAW: f64 = 0.1;
/// Tool tip must be this close to a gear's grasp point for a close to grasp it.
pub const GRASP_RADIUS_M: f64 = 0.010;
pub const GEAR_THICKNESS_M: f64 = 0.008;
pub const MAX_APERTURE_M: f64 = 0.08;

const LIMIT_EPS: f64 = 1e-12;
const HEIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Wrap an angle into `[-pi, pi)`.
pub fn normalize_yaw(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r -= 2.0 * PI;
    }
    if r < -PI {
        r = -PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Pose { x, y, z, yaw: normalize_yaw(yaw) }
    }

    pub fn planar_distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ObjectKind {
    Gear { outer_radius_m: f64, bore_radius_m: f64, tooth_count: u32 },
    Shaft { radius_m: f64, height_m: f64 },
    BasePlate { width_m: f64, depth_m: f64 },
}

impl ObjectKind {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            ObjectKind::Gear { outer_radius_m, bore_radius_m, tooth_count } => {
                if !(bore_radius_m > 0.0 && bore_radius_m < outer_radius_m) {
                    return Err(format!(
                        "gear needs 0 < bore ({bore_radius_m}) < outer ({outer_radius_m})"
                    ));
                }
                if tooth_count < 3 {
                    return Err(format!("gear needs at least 3 teeth, got {tooth_count}"));
                }
            }
            ObjectKind::Shaft { radius_m, height_m } => {
                if !(radius_m > 0.0 && height_m > 0.0) {
                    return Err("shaft radius and height must be positive".into());
                }
            }
            ObjectKind::BasePlate { width_m, depth_m } => {
                if !(width_m > 0.0 && depth_m > 0.0) {
                    return Err("base plate dimensions must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Radius of the planar disc used for overlap checks. Base plates have none.
    pub fn footprint_radius(&self) -> Option<f64> {
        match *self {
            ObjectKind::Gear { outer_radius_m, .. } => Some(outer_radius_m),
            ObjectKind::Shaft { radius_m, .. } => Some(radius_m),
            ObjectKind::BasePlate { .. } => None,
        }
    }

    pub fn height(&self) -> f64 {
        match *self {
            ObjectKind::Gear { .. } => GEAR_THICKNESS_M,
            ObjectKind::Shaft { height_m, .. } => height_m,
            ObjectKind::BasePlate { .. } => 0.0,
        }
    }

    pub fn is_gear(&self) -> bool {
        matches!(self, ObjectKind::Gear { .. })
    }

    pub fn is_shaft(&self) -> bool {
        matches!(self, ObjectKind::Shaft { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObjectKind::Gear { .. } => "gear",
            ObjectKind::Shaft { .. } => "shaft",
            ObjectKind::BasePlate { .. } => "base plate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state")]
pub enum ObjectStatus {
    Free,
    Grasped,
    Inserted { shaft_id: ObjectId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: ObjectId,
    pub label: String,
    pub kind: ObjectKind,
    pub pose: Pose,
    pub status: ObjectStatus,
}

impl SceneObject {
    pub fn top(&self) -> f64 {
        self.pose.z + self.kind.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grip {
    Hold,
    Open,
    Close,
}

/// One low-level robot command: per-step tool displacement plus a gripper channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub dyaw: f64,
    pub grip: Grip,
}

impl Command {
    pub const HOLD: Command = Command { dx: 0.0, dy: 0.0, dz: 0.0, dyaw: 0.0, grip: Grip::Hold };

    pub fn translate(dx: f64, dy: f64, dz: f64) -> Self {
        Command { dx, dy, dz, dyaw: 0.0, grip: Grip::Hold }
    }

    pub fn grip(grip: Grip) -> Self {
        Command { grip, ..Command::HOLD }
    }

    pub fn within_limits(&self) -> bool {
        let lim = STEP_LIMIT_M + LIMIT_EPS;
        self.dx.is_finite()
            && self.dy.is_finite()
            && self.dz.is_finite()
            && self.dyaw.is_finite()
            && self.dx.abs() <= lim
            && self.dy.abs() <= lim
            && self.dz.abs() <= lim
            && self.dyaw.abs() <= STEP_LIMIT_YAW + LIMIT_EPS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub tool_pose: Pose,
    pub gripper_aperture: f64,
    pub holding: Option<ObjectId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub required_insertions: Vec<(ObjectId, ObjectId)>,
    pub ordering_constraints: Vec<(ObjectId, ObjectId)>,
}

impl GoalSpec {
    pub fn required_shaft_for(&self, gear: ObjectId) -> Option<ObjectId> {
        self.required_insertions.iter().find(|(g, _)| *g == gear).map(|(_, s)| *s)
    }

    /// Gears that must be inserted before `gear`.
    pub fn prerequisites(&self, gear: ObjectId) -> impl Iterator<Item = ObjectId> + '_ {
        self.ordering_constraints.iter().filter(move |(_, after)| *after == gear).map(|(b, _)| *b)
    }

    /// True when the ordering constraints contain no cycle.
    pub fn ordering_is_acyclic(&self) -> bool {
        let mut indegree: BTreeMap<ObjectId, usize> = BTreeMap::new();
        let mut edges: BTreeMap<ObjectId, Vec<ObjectId>> = BTreeMap::new();
        for &(a, b) in &self.ordering_constraints {
            indegree.entry(a).or_insert(0);
            *indegree.entry(b).or_insert(0) += 1;
            edges.entry(a).or_default().push(b);
        }
        let mut ready: Vec<ObjectId> =
            indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
        let mut seen = 0;
        while let Some(n) = ready.pop() {
            seen += 1;
            for m in edges.get(&n).into_iter().flatten() {
                let d = indegree.get_mut(m).expect("edge target registered");
                *d -= 1;
                if *d == 0 {
                    ready.push(*m);
                }
            }
        }
        seen == indegree.len()
    }
}

/// Axis-aligned reachable region for the tool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_max: f64,
}

impl Workspace {
    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        x >= self.x_min - LIMIT_EPS
            && x <= self.x_max + LIMIT_EPS
            && y >= self.y_min - LIMIT_EPS
            && y <= self.y_max + LIMIT_EPS
            && z <= self.z_max + LIMIT_EPS
    }
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace { x_min: -0.30, x_max: 0.30, y_min: -0.22, y_max: 0.22, z_max: 0.20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsertionEvent {
    pub gear_id: ObjectId,
    pub shaft_id: ObjectId,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: Vec<SceneObject>,
    pub robot: RobotState,
    pub goal: GoalSpec,
    pub rng_seed: u64,
    pub step_count: u64,
    pub workspace: Workspace,
    pub home: Pose,
    pub insertion_history: Vec<InsertionEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Obstacle {
    Table,
    WorkspaceBoundary,
    Object(ObjectId),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("object {0} projects outside the image")]
    ObjectOutOfFrame(ObjectId),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("command exceeds per-step limits: {0:?}")]
    CommandOutOfRange(Command),
    #[error("motion rejected by collision with {0:?}")]
    CollisionRejected(Obstacle),
    #[error("object {id} is a {actual}, expected a {expected}")]
    WrongKind { id: ObjectId, expected: &'static str, actual: &'static str },
    #[error("no object with id {0}")]
    UnknownObject(ObjectId),
}

/// Whether a gear bore centered `offset_m` from a shaft axis clears the shaft.
pub fn bore_clears_shaft(offset_m: f64, bore_radius_m: f64, shaft_radius_m: f64) -> bool {
    offset_m <= bore_radius_m - shaft_radius_m
}

impl WorldState {
    pub fn object(&self, id: ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    fn index_of(&self, id: ObjectId) -> Option<usize> {
        self.objects.iter().position(|o| o.object_id == id)
    }

    pub fn to_canonical_json(&self) -> String {
        canonical::to_canonical_json(self)
    }

    pub fn snapshot_hash(&self) -> String {
        canonical::sha256_hex(self.to_canonical_json().as_bytes())
    }

    /// Apply one command. A collision rejects the whole command but still
    /// consumes a step; an out-of-range command is refused outright.
    pub fn apply_command(&mut self, cmd: &Command) -> Result<(), WorldError> {
        if !cmd.within_limits() {
            return Err(WorldError::CommandOutOfRange(*cmd));
        }
        self.step_count += 1;

        let old = self.robot.tool_pose;
        let tool = Pose::new(old.x + cmd.dx, old.y + cmd.dy, old.z + cmd.dz, old.yaw + cmd.dyaw);
        let moved = cmd.dx != 0.0 || cmd.dy != 0.0 || cmd.dz != 0.0 || cmd.dyaw != 0.0;
        if moved {
            if !self.workspace.contains(tool.x, tool.y, tool.z) {
                return Err(WorldError::CollisionRejected(Obstacle::WorkspaceBoundary));
            }
            let held_pose = self.robot.holding.map(|id| {
                let gear = self.object(id).expect("held object exists");
                Pose::new(
                    gear.pose.x + cmd.dx,
                    gear.pose.y + cmd.dy,
                    gear.pose.z + cmd.dz,
                    gear.pose.yaw + cmd.dyaw,
                )
            });
            if let Some(obstacle) = self.collision_at(&tool, held_pose.as_ref()) {
                return Err(WorldError::CollisionRejected(obstacle));
            }
            self.robot.tool_pose = tool;
            if let (Some(id), Some(pose)) = (self.robot.holding, held_pose) {
                let i = self.index_of(id).expect("held object exists");
                self.objects[i].pose = pose;
            }
        }

        match cmd.grip {
            Grip::Hold => {}
            Grip::Close => self.close_gripper(),
            Grip::Open => self.open_gripper(),
        }
        Ok(())
    }

    fn collision_at(&self, tool: &Pose, held: Option<&Pose>) -> Option<Obstacle> {
        let held_id = self.robot.holding;
        match (held_id, held) {
            (Some(hid), Some(hp)) => {
                let gear = self.object(hid).expect("held object exists");
                let (ro, rb) = match gear.kind {
                    ObjectKind::Gear { outer_radius_m, bore_radius_m, .. } => {
                        (outer_radius_m, bore_radius_m)
                    }
                    _ => unreachable!("only gears can be grasped"),
                };
                if hp.z < -HEIGHT_EPS {
                    return Some(Obstacle::Table);
                }
                let bottom = hp.z;
                let top = hp.z + GEAR_THICKNESS_M;
                for o in self.objects.iter().filter(|o| o.object_id != hid) {
                    let d = hp.planar_distance(&o.pose);
                    match o.kind {
                        ObjectKind::Shaft { radius_m, height_m } => {
                            let vertical = bottom < height_m - HEIGHT_EPS;
                            let exits_bore = !bore_clears_shaft(d, rb, radius_m);
                            if vertical && exits_bore && d < ro + radius_m {
                                return Some(Obstacle::Object(o.object_id));
                            }
                        }
                        ObjectKind::Gear { outer_radius_m, .. } => {
                            let vertical = bottom < o.top() - HEIGHT_EPS && top > o.pose.z + HEIGHT_EPS;
                            if vertical && d < ro + outer_radius_m {
                                return Some(Obstacle::Object(o.object_id));
                            }
                        }
                        ObjectKind::BasePlate { .. } => {}
                    }
                }
                None
            }
            _ => {
                if tool.z < -HEIGHT_EPS {
                    return Some(Obstacle::Table);
                }
                for o in &self.objects {
                    let d = tool.planar_distance(&o.pose);
                    let inside_height = tool.z < o.top() - HEIGHT_EPS && tool.z > o.pose.z - HEIGHT_EPS;
                    let inside = match o.kind {
                        ObjectKind::Gear { outer_radius_m, bore_radius_m, .. } => {
                            inside_height && d >= bore_radius_m && d <= outer_radius_m
                        }
                        // open jaws straddle a shaft, so an empty tool can reach
                        // gears seated on one
                        ObjectKind::Shaft { .. } | ObjectKind::BasePlate { .. } => false,
                    };
                    if inside {
                        return Some(Obstacle::Object(o.object_id));
                    }
                }
                None
            }
        }
    }

    fn close_gripper(&mut self) {
        self.robot.gripper_aperture = 0.0;
        if self.robot.holding.is_some() {
            return;
        }
        let tool = self.robot.tool_pose;
        let mut best: Option<(f64, usize)> = None;
        for (i, o) in self.objects.iter().enumerate() {
            let graspable = match o.status {
                ObjectStatus::Free => true,
                ObjectStatus::Inserted { shaft_id } => !self.objects.iter().any(|other| {
                    other.status == (ObjectStatus::Inserted { shaft_id }) && other.pose.z > o.pose.z
                }),
                ObjectStatus::Grasped => false,
            };
            if !o.kind.is_gear() || !graspable {
                continue;
            }
            let grasp_z = o.top();
            let d = ((tool.x - o.pose.x).powi(2)
                + (tool.y - o.pose.y).powi(2)
                + (tool.z - grasp_z).powi(2))
            .sqrt();
            if d <= GRASP_RADIUS_M && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        if let Some((_, i)) = best {
            // Self-centering jaws: the tool settles over the gear axis.
            let obj = &mut self.objects[i];
            obj.status = ObjectStatus::Grasped;
            self.robot.tool_pose.x = obj.pose.x;
            self.robot.tool_pose.y = obj.pose.y;
            self.robot.holding = Some(obj.object_id);
        }
    }

    fn open_gripper(&mut self) {
        self.robot.gripper_aperture = MAX_APERTURE_M;
        let Some(id) = self.robot.holding.take() else {
            return;
        };
        let i = self.index_of(id).expect("held object exists");
        let (ro, rb) = match self.objects[i].kind {
            ObjectKind::Gear { outer_radius_m, bore_radius_m, .. } => (outer_radius_m, bore_radius_m),
            _ => unreachable!("only gears can be grasped"),
        };
        let pose = self.objects[i].pose;
        let tool_z = self.robot.tool_pose.z;

        let shaft = self
            .objects
            .iter()
            .filter_map(|o| match o.kind {
                ObjectKind::Shaft { radius_m, height_m } => {
                    let d = pose.planar_distance(&o.pose);
                    (bore_clears_shaft(d, rb, radius_m) && tool_z < height_m).then_some(o.object_id)
                }
                _ => None,
            })
            .min();

        let rest_z = self.support_height(id, &pose, ro, shaft);
        let obj = &mut self.objects[i];
        obj.pose.z = rest_z;
        match shaft {
            Some(shaft_id) => {
                obj.status = ObjectStatus::Inserted { shaft_id };
                self.insertion_history.push(InsertionEvent {
                    gear_id: id,
                    shaft_id,
                    step: self.step_count,
                });
            }
            None => obj.status = ObjectStatus::Free,
        }
    }

    /// Height a released gear comes to rest at: the highest surface under
    /// its footprint that is not above its current underside. The shaft the
    /// gear was inserted on passes through the bore and supports nothing.
    fn support_height(&self, id: ObjectId, pose: &Pose, ro: f64, through: Option<ObjectId>) -> f64 {
        let mut z: f64 = 0.0;
        for o in self.objects.iter().filter(|o| o.object_id != id) {
            let d = pose.planar_distance(&o.pose);
            let top = o.top();
            if top > pose.z + HEIGHT_EPS {
                continue;
            }
            let under = match o.kind {
                ObjectKind::Shaft { radius_m, .. } => {
                    Some(o.object_id) != through && d < ro + radius_m
                }
                ObjectKind::Gear { outer_radius_m, .. } => {
                    o.status != ObjectStatus::Grasped && d < ro + outer_radius_m
                }
                ObjectKind::BasePlate { .. } => false,
            };
            if under {
                z = z.max(top);
            }
        }
        z
    }

    pub fn check_insertion(&self, gear_id: ObjectId, shaft_id: ObjectId) -> Result<bool, WorldError> {
        let gear = self.object(gear_id).ok_or(WorldError::UnknownObject(gear_id))?;
        let shaft = self.object(shaft_id).ok_or(WorldError::UnknownObject(shaft_id))?;
        if !gear.kind.is_gear() {
            return Err(WorldError::WrongKind { id: gear_id, expected: "gear", actual: gear.kind.name() });
        }
        if !shaft.kind.is_shaft() {
            return Err(WorldError::WrongKind { id: shaft_id, expected: "shaft", actual: shaft.kind.name() });
        }
        Ok(gear.status == ObjectStatus::Inserted { shaft_id })
    }

    /// Whether the required pair `(gear, shaft)` currently holds.
    pub fn pair_satisfied(&self, gear: ObjectId, shaft: ObjectId) -> bool {
        self.object(gear).is_some_and(|g| g.status == ObjectStatus::Inserted { shaft_id: shaft })
    }

    /// Every required insertion holds and the insertion history respects
    /// every ordering constraint.
    pub fn assembly_complete(&self) -> bool {
        let all_pairs = self.goal.required_insertions.iter().all(|&(g, s)| self.pair_satisfied(g, s));
        if !all_pairs {
            return false;
        }
        let position = |gear: ObjectId| self.insertion_history.iter().rposition(|e| e.gear_id == gear);
        self.goal.ordering_constraints.iter().all(|&(before, after)| {
            match (position(before), position(after)) {
                (Some(a), Some(b)) => a < b,
                _ => false,
            }
        })
    }

    /// Unsatisfied goal pairs whose ordering prerequisites are all satisfied,
    /// in goal order.
    pub fn eligible_pairs(&self) -> Vec<(ObjectId, ObjectId)> {
        self.goal
            .required_insertions
            .iter()
            .copied()
            .filter(|&(g, s)| !self.pair_satisfied(g, s))
            .filter(|&(g, _)| {
                self.goal.prerequisites(g).all(|p| {
                    self.goal.required_shaft_for(p).is_some_and(|ps| self.pair_satisfied(p, ps))
                })
            })
            .collect()
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let grasped: Vec<ObjectId> = self
            .objects
            .iter()
            .filter(|o| o.status == ObjectStatus::Grasped)
            .map(|o| o.object_id)
            .collect();
        if grasped.len() > 1 {
            return Err(format!("more than one grasped object: {grasped:?}"));
        }
        if grasped.first().copied() != self.robot.holding {
            return Err(format!(
                "robot holding {:?} disagrees with grasped objects {grasped:?}",
                self.robot.holding
            ));
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.object_id) {
                return Err(format!("duplicate object id {}", o.object_id));
            }
            if o.pose.z < -HEIGHT_EPS {
                return Err(format!("object {} below the table", o.object_id));
            }
            if !(-PI..PI).contains(&o.pose.yaw) {
                return Err(format!("object {} yaw not normalized", o.object_id));
            }
            if let ObjectStatus::Inserted { shaft_id } = o.status {
                if !self.object(shaft_id).is_some_and(|s| s.kind.is_shaft()) {
                    return Err(format!("object {} inserted into non-shaft {shaft_id}", o.object_id));
                }
            }
        }
        let free_gears: Vec<&SceneObject> = self
            .objects
            .iter()
            .filter(|o| o.kind.is_gear() && o.status == ObjectStatus::Free)
            .collect();
        for (i, a) in free_gears.iter().enumerate() {
            for b in &free_gears[i + 1..] {
                let vertical = a.pose.z < b.top() - HEIGHT_EPS && b.pose.z < a.top() - HEIGHT_EPS;
                let ra = a.kind.footprint_radius().unwrap_or(0.0);
                let rb = b.kind.footprint_radius().unwrap_or(0.0);
                if vertical && a.pose.planar_distance(&b.pose) < ra + rb {
                    return Err(format!("free gears {} and {} overlap", a.object_id, b.object_id));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn gear(id: u32, x: f64, y: f64, bore: f64) -> SceneObject {
        SceneObject {
            object_id: ObjectId(id),
            label: format!("gear {id}"),
            kind: ObjectKind::Gear { outer_radius_m: 0.02, bore_radius_m: bore, tooth_count: 12 },
            pose: Pose::new(x, y, 0.0, 0.0),
            status: ObjectStatus::Free,
        }
    }

    pub(crate) fn shaft(id: u32, x: f64, y: f64, radius: f64) -> SceneObject {
        SceneObject {
            object_id: ObjectId(id),
            label: format!("shaft {id}"),
            kind: ObjectKind::Shaft { radius_m: radius, height_m: 0.03 },
            pose: Pose::new(x, y, 0.0, 0.0),
            status: ObjectStatus::Free,
        }
    }

    pub(crate) fn world(objects: Vec<SceneObject>, goal: GoalSpec) -> WorldState {
        WorldState {
            objects,
            robot: RobotState {
                tool_pose: Pose::new(0.0, 0.0, 0.1, 0.0),
                gripper_aperture: MAX_APERTURE_M,
                holding: None,
            },
            goal,
            rng_seed: 0,
            step_count: 0,
            workspace: Workspace::default(),
            home: Pose::new(0.0, 0.2, 0.1, 0.0),
            insertion_history: vec![],
        }
    }

    /// Gear 1 grasped with its axis `offset` from shaft 2, tool below the shaft top.
    fn held_over_shaft(offset: f64) -> WorldState {
        let mut g = gear(1, 0.1 + offset, 0.0, 0.005);
        g.status = ObjectStatus::Grasped;
        g.pose.z = 0.01;
        let mut w = world(
            vec![g, shaft(2, 0.1, 0.0, 0.0049)],
            GoalSpec { required_insertions: vec![(ObjectId(1), ObjectId(2))], ordering_constraints: vec![] },
        );
        w.robot.holding = Some(ObjectId(1));
        w.robot.gripper_aperture = 0.0;
        w.robot.tool_pose = Pose::new(0.1 + offset, 0.0, 0.018, 0.0);
        w
    }

    #[test]
    fn yaw_wraps_into_half_open_interval() {
        assert_eq!(normalize_yaw(PI), -PI);
        assert!((normalize_yaw(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((normalize_yaw(-0.25) + 0.25).abs() < 1e-15);
        for k in -50..50 {
            let a = normalize_yaw(k as f64 * 0.37);
            assert!((-PI..PI).contains(&a));
        }
    }

    #[test]
    fn zero_command_only_advances_step_count() {
        let mut w = world(vec![gear(1, 0.05, 0.05, 0.005)], GoalSpec::default());
        let before = w.clone();
        w.apply_command(&Command::HOLD).unwrap();
        assert_eq!(w.step_count, before.step_count + 1);
        w.step_count = before.step_count;
        assert_eq!(w, before);
    }

    #[test]
    fn out_of_range_command_is_refused_untouched() {
        let mut w = world(vec![], GoalSpec::default());
        let before = w.clone();
        let err = w.apply_command(&Command::translate(0.006, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, WorldError::CommandOutOfRange(_)));
        assert_eq!(w, before);
        let err = w.apply_command(&Command { dyaw: 0.11, ..Command::HOLD }).unwrap_err();
        assert!(matches!(err, WorldError::CommandOutOfRange(_)));
        assert!(w.apply_command(&Command::translate(f64::NAN, 0.0, 0.0)).is_err());
    }

    #[test]
    fn close_near_grasp_point_grasps_gear() {
        let mut w = world(vec![gear(1, 0.05, 0.05, 0.005)], GoalSpec::default());
        w.robot.tool_pose = Pose::new(0.05, 0.05, GEAR_THICKNESS_M + 0.001, 0.0);
        w.apply_command(&Command::grip(Grip::Close)).unwrap();
        assert_eq!(w.robot.holding, Some(ObjectId(1)));
        assert_eq!(w.objects[0].status, ObjectStatus::Grasped);
        w.check_invariants().unwrap();

        w.apply_command(&Command::translate(0.0, 0.0, 0.005)).unwrap();
        assert!((w.objects[0].pose.z - 0.005).abs() < 1e-12);
    }

    #[test]
    fn grasp_centers_tool_over_gear() {
        let mut w = world(vec![gear(1, 0.05, 0.05, 0.005)], GoalSpec::default());
        w.robot.tool_pose = Pose::new(0.053, 0.046, GEAR_THICKNESS_M, 0.0);
        w.apply_command(&Command::grip(Grip::Close)).unwrap();
        assert_eq!((w.robot.tool_pose.x, w.robot.tool_pose.y), (0.05, 0.05));
        assert_eq!((w.objects[0].pose.x, w.objects[0].pose.y), (0.05, 0.05));
    }

    #[test]
    fn inserted_gear_can_be_lifted_off() {
        let mut w = held_over_shaft(0.00005);
        w.apply_command(&Command::grip(Grip::Open)).unwrap();
        w.robot.tool_pose.z = GEAR_THICKNESS_M;
        w.apply_command(&Command::grip(Grip::Close)).unwrap();
        assert_eq!(w.robot.holding, Some(ObjectId(1)));
        for _ in 0..8 {
            w.apply_command(&Command::translate(0.0, 0.0, 0.005)).unwrap();
        }
        assert!(w.objects[0].pose.z > 0.03);
        w.check_invariants().unwrap();
    }

    #[test]
    fn lower_gear_on_a_stack_is_not_graspable() {
        let mut w = world(vec![gear(1, 0.1, 0.0, 0.005), gear(3, 0.1, 0.0, 0.005), shaft(2, 0.1, 0.0, 0.0049)], GoalSpec::default());
        w.objects[0].status = ObjectStatus::Inserted { shaft_id: ObjectId(2) };
        w.objects[1].status = ObjectStatus::Inserted { shaft_id: ObjectId(2) };
        w.objects[1].pose.z = GEAR_THICKNESS_M;
        w.robot.tool_pose = Pose::new(0.1, 0.0, GEAR_THICKNESS_M, 0.0);
        w.apply_command(&Command::grip(Grip::Close)).unwrap();
        assert_eq!(w.robot.holding, Some(ObjectId(3)));
    }

    #[test]
    fn close_far_from_gear_grasps_nothing() {
        let mut w = world(vec![gear(1, 0.05, 0.05, 0.005)], GoalSpec::default());
        w.robot.tool_pose = Pose::new(0.05, 0.07, GEAR_THICKNESS_M, 0.0);
        w.apply_command(&Command::grip(Grip::Close)).unwrap();
        assert_eq!(w.robot.holding, None);
    }

    #[test]
    fn release_within_clearance_inserts() {
        let mut w = held_over_shaft(0.00005);
        w.apply_command(&Command::grip(Grip::Open)).unwrap();
        assert_eq!(w.objects[0].status, ObjectStatus::Inserted { shaft_id: ObjectId(2) });
        assert!(w.check_insertion(ObjectId(1), ObjectId(2)).unwrap());
        assert!(w.assembly_complete());
        assert_eq!(w.objects[0].pose.z, 0.0);
    }

    #[test]
    fn release_outside_clearance_lands_free_on_table() {
        let mut w = held_over_shaft(0.0002);
        w.apply_command(&Command::grip(Grip::Open)).unwrap();
        assert_eq!(w.objects[0].status, ObjectStatus::Free);
        assert_eq!(w.objects[0].pose.z, 0.0);
        assert!(!w.check_insertion(ObjectId(1), ObjectId(2)).unwrap());
        assert!(!w.assembly_complete());
    }

    #[test]
    fn release_above_shaft_top_rests_on_it() {
        let mut w = held_over_shaft(0.00005);
        w.objects[0].pose.z = 0.035;
        w.robot.tool_pose.z = 0.043;
        w.apply_command(&Command::grip(Grip::Open)).unwrap();
        // Not inserted when released above the top: it stays on the shaft.
        assert_eq!(w.objects[0].status, ObjectStatus::Free);
        assert!((w.objects[0].pose.z - 0.03).abs() < 1e-12);

        let mut w = held_over_shaft(0.003);
        w.objects[0].pose.z = 0.035;
        w.robot.tool_pose.z = 0.043;
        w.apply_command(&Command::grip(Grip::Open)).unwrap();
        assert_eq!(w.objects[0].status, ObjectStatus::Free);
        assert!((w.objects[0].pose.z - 0.03).abs() < 1e-12);
    }

    #[test]
    fn misaligned_descent_onto_shaft_is_rejected() {
        let mut w = held_over_shaft(0.001);
        w.objects[0].pose.z = 0.032;
        w.robot.tool_pose.z = 0.04;
        let before = w.clone();
        let err = w.apply_command(&Command::translate(0.0, 0.0, -0.005)).unwrap_err();
        assert_eq!(err, WorldError::CollisionRejected(Obstacle::Object(ObjectId(2))));
        assert_eq!(w.step_count, before.step_count + 1);
        assert_eq!(w.objects, before.objects);
        assert_eq!(w.robot, before.robot);
    }

    #[test]
    fn aligned_descent_passes_over_shaft() {
        let mut w = held_over_shaft(0.00002);
        w.objects[0].pose.z = 0.032;
        w.robot.tool_pose.z = 0.04;
        w.apply_command(&Command::translate(0.0, 0.0, -0.005)).unwrap();
        assert!((w.objects[0].pose.z - 0.027).abs() < 1e-12);
    }

    #[test]
    fn tool_cannot_enter_table() {
        let mut w = world(vec![], GoalSpec::default());
        w.robot.tool_pose.z = 0.002;
        let err = w.apply_command(&Command::translate(0.0, 0.0, -0.004)).unwrap_err();
        assert_eq!(err, WorldError::CollisionRejected(Obstacle::Table));
    }

    #[test]
    fn check_insertion_rejects_wrong_kinds() {
        let w = world(vec![gear(1, 0.0, 0.0, 0.005), shaft(2, 0.1, 0.0, 0.0049)], GoalSpec::default());
        assert!(!w.check_insertion(ObjectId(1), ObjectId(2)).unwrap());
        assert!(matches!(w.check_insertion(ObjectId(2), ObjectId(1)), Err(WorldError::WrongKind { .. })));
    }

    #[test]
    fn empty_goal_is_vacuously_complete() {
        assert!(world(vec![], GoalSpec::default()).assembly_complete());
    }

    #[test]
    fn half_satisfied_goal_is_incomplete() {
        let mut w = world(
            vec![gear(1, 0.1, 0.0, 0.005), gear(2, -0.1, 0.0, 0.005), shaft(3, 0.1, 0.0, 0.0049), shaft(4, 0.1, 0.1, 0.0049)],
            GoalSpec {
                required_insertions: vec![(ObjectId(1), ObjectId(3)), (ObjectId(2), ObjectId(4))],
                ordering_constraints: vec![],
            },
        );
        w.objects[0].status = ObjectStatus::Inserted { shaft_id: ObjectId(3) };
        w.insertion_history.push(InsertionEvent { gear_id: ObjectId(1), shaft_id: ObjectId(3), step: 1 });
        assert!(!w.assembly_complete());
    }

    #[test]
    fn cyclic_ordering_detected() {
        let goal = GoalSpec {
            required_insertions: vec![],
            ordering_constraints: vec![(ObjectId(1), ObjectId(2)), (ObjectId(2), ObjectId(1))],
        };
        assert!(!goal.ordering_is_acyclic());
        let goal = GoalSpec {
            required_insertions: vec![],
            ordering_constraints: vec![(ObjectId(1), ObjectId(2)), (ObjectId(2), ObjectId(3))],
        };
        assert!(goal.ordering_is_acyclic());
    }
}
