use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::{Camera, CameraView};
use super::{
    GoalSpec, ObjectId, ObjectKind, ObjectStatus, Pose, RobotState, SceneObject, WorldError, WorldState,
    Workspace, GRASP_RADIUS_M, MAX_APERTURE_M,
};

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Placement {
    Fixed { x: f64, y: f64, yaw: f64 },
    Random { region: Region },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub object_id: ObjectId,
    pub label: String,
    pub kind: ObjectKind,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Row label used in reports.
    pub display_name: String,
    pub objects: Vec<ObjectSpec>,
    pub goal: GoalSpec,
    #[serde(default)]
    pub workspace: Workspace,
    pub home: Pose,
    /// Extra clearance between sampled footprints, on top of the radii.
    #[serde(default = "default_margin")]
    pub spawn_margin_m: f64,
}

fn default_margin() -> f64 {
    GRASP_RADIUS_M
}

impl ScenarioConfig {
    /// Labels the recognition stage is asked to find: every gear and shaft.
    pub fn task_labels(&self) -> Vec<String> {
        self.objects
            .iter()
            .filter(|o| !matches!(o.kind, ObjectKind::BasePlate { .. }))
            .map(|o| o.label.clone())
            .collect()
    }

    fn validate(&self) -> Result<(), WorldError> {
        let invalid = |m: String| Err(WorldError::InvalidScenario(m));
        let mut ids = BTreeSet::new();
        let mut labels = BTreeSet::new();
        for o in &self.objects {
            if !(1..=99).contains(&o.object_id.0) {
                return invalid(format!("object id {} outside 1..=99", o.object_id));
            }
            if !ids.insert(o.object_id) {
                return invalid(format!("duplicate object id {}", o.object_id));
            }
            if o.label.trim().is_empty() || !labels.insert(o.label.clone()) {
                return invalid(format!("label {:?} empty or duplicated", o.label));
            }
            o.kind.validate().map_err(|e| WorldError::InvalidScenario(format!("object {}: {e}", o.object_id)))?;
            if let Placement::Random { region } = o.placement {
                if !(region.x_min < region.x_max && region.y_min < region.y_max) {
                    return invalid(format!("object {}: empty placement region", o.object_id));
                }
            }
        }
        let kind_of = |id: ObjectId| self.objects.iter().find(|o| o.object_id == id).map(|o| o.kind);
        let mut goal_gears = BTreeSet::new();
        for &(g, s) in &self.goal.required_insertions {
            match (kind_of(g), kind_of(s)) {
                (Some(gk), Some(sk)) if gk.is_gear() && sk.is_shaft() => {}
                (None, _) => return invalid(format!("goal references missing gear {g}")),
                (_, None) => return invalid(format!("goal references missing shaft {s}")),
                _ => return invalid(format!("goal pair ({g}, {s}) is not (gear, shaft)")),
            }
            if !goal_gears.insert(g) {
                return invalid(format!("gear {g} appears in more than one goal pair"));
            }
        }
        for &(a, b) in &self.goal.ordering_constraints {
            if !goal_gears.contains(&a) || !goal_gears.contains(&b) {
                return invalid(format!("ordering ({a}, {b}) references a gear outside the goal"));
            }
        }
        if !self.goal.ordering_is_acyclic() {
            return invalid("ordering constraints contain a cycle".into());
        }
        Ok(())
    }
}

fn overlaps(placed: &[SceneObject], x: f64, y: f64, r: f64, margin: f64) -> Option<ObjectId> {
    placed.iter().find_map(|p| {
        let pr = p.kind.footprint_radius()?;
        ((p.pose.x - x).hypot(p.pose.y - y) <= pr + r + margin).then_some(p.object_id)
    })
}

/// Build the initial world. Fixed placements are taken as given; random
/// ones are rejection-sampled in declaration order from a ChaCha stream
/// seeded with `seed`, so equal inputs give bit-identical worlds.
pub fn spawn_world(config: &ScenarioConfig, seed: u64) -> Result<WorldState, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = Camera::top(CameraView::TopCurrent);
    let mut placed: Vec<SceneObject> = Vec::new();

    let mut ordered: Vec<&ObjectSpec> = config.objects.iter().collect();
    // fixed objects first so samples avoid them
    ordered.sort_by_key(|o| matches!(o.placement, Placement::Random { .. }));

    for spec in ordered {
        let r = spec.kind.footprint_radius();
        let pose = match spec.placement {
            Placement::Fixed { x, y, yaw } => {
                if let Some(r) = r {
                    if let Some(other) = overlaps(&placed, x, y, r, 0.0) {
                        return Err(WorldError::InvalidScenario(format!(
                            "fixed object {} overlaps object {other}",
                            spec.object_id
                        )));
                    }
                }
                Pose::new(x, y, 0.0, yaw)
            }
            Placement::Random { region } => {
                let r = r.unwrap_or(0.0);
                let mut found = None;
                for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                    let x = rng.random_range(region.x_min..region.x_max);
                    let y = rng.random_range(region.y_min..region.y_max);
                    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    if overlaps(&placed, x, y, r, config.spawn_margin_m).is_none() {
                        found = Some(Pose::new(x, y, 0.0, yaw));
                        break;
                    }
                }
                found.ok_or_else(|| {
                    WorldError::InvalidScenario(format!("could not place object {} without overlap", spec.object_id))
                })?
            }
        };
        if !frame.contains(frame.pixel_of(pose.x, pose.y)) {
            return Err(WorldError::InvalidScenario(format!("object {} outside the camera frame", spec.object_id)));
        }
        placed.push(SceneObject {
            object_id: spec.object_id,
            label: spec.label.clone(),
            kind: spec.kind,
            pose,
            status: ObjectStatus::Free,
        });
    }
    placed.sort_by_key(|o| o.object_id);

    Ok(WorldState {
        objects: placed,
        robot: RobotState { tool_pose: config.home, gripper_aperture: MAX_APERTURE_M, holding: None },
        goal: config.goal.clone(),
        rng_seed: seed,
        step_count: 0,
        workspace: config.workspace,
        home: config.home,
        insertion_history: Vec::new(),
    })
}

pub fn builtin_scenario_names() -> &'static [&'static str] {
    &["sim", "real1", "real2"]
}

fn gear(id: u32, label: &str, outer: f64, teeth: u32, region: Region) -> ObjectSpec {
    ObjectSpec {
        object_id: ObjectId(id),
        label: label.into(),
        kind: ObjectKind::Gear { outer_radius_m: outer, bore_radius_m: 0.005, tooth_count: teeth },
        placement: Placement::Random { region },
    }
}

fn shaft(id: u32, label: &str, x: f64, y: f64) -> ObjectSpec {
    ObjectSpec {
        object_id: ObjectId(id),
        label: label.into(),
        kind: ObjectKind::Shaft { radius_m: 0.0049, height_m: 0.03 },
        placement: Placement::Fixed { x, y, yaw: 0.0 },
    }
}

fn plate(id: u32) -> ObjectSpec {
    ObjectSpec {
        object_id: ObjectId(id),
        label: "base plate".into(),
        kind: ObjectKind::BasePlate { width_m: 0.5, depth_m: 0.36 },
        placement: Placement::Fixed { x: 0.0, y: 0.0, yaw: 0.0 },
    }
}

fn pairs(p: &[(u32, u32)]) -> Vec<(ObjectId, ObjectId)> {
    p.iter().map(|&(a, b)| (ObjectId(a), ObjectId(b))).collect()
}

/// The three shipped scenarios: `sim`, `real1`, `real2`.
pub fn builtin_scenario(name: &str) -> Option<ScenarioConfig> {
    let home = Pose::new(0.0, 0.20, 0.10, 0.0);
    let cfg = match name {
        "sim" => {
            let region = Region { x_min: -0.22, x_max: 0.06, y_min: -0.14, y_max: 0.14 };
            ScenarioConfig {
                name: "sim".into(),
                display_name: "Sim.".into(),
                objects: vec![
                    gear(1, "red gear", 0.028, 18, region),
                    gear(2, "green gear", 0.024, 15, region),
                    gear(3, "blue gear", 0.020, 12, region),
                    shaft(4, "shaft A", 0.16, -0.09),
                    shaft(5, "shaft B", 0.16, 0.0),
                    shaft(6, "shaft C", 0.16, 0.09),
                    plate(7),
                ],
                goal: GoalSpec {
                    required_insertions: pairs(&[(1, 4), (2, 5), (3, 6)]),
                    ordering_constraints: pairs(&[(1, 2)]),
                },
                workspace: Workspace::default(),
                home,
                spawn_margin_m: default_margin(),
            }
        }
        "real1" => {
            let region = Region { x_min: -0.20, x_max: 0.02, y_min: -0.13, y_max: 0.13 };
            ScenarioConfig {
                name: "real1".into(),
                display_name: "Real 1".into(),
                objects: vec![
                    gear(1, "large gear", 0.030, 20, region),
                    gear(2, "small gear", 0.020, 12, region),
                    shaft(3, "left shaft", 0.12, -0.06),
                    shaft(4, "right shaft", 0.12, 0.06),
                    plate(5),
                ],
                goal: GoalSpec { required_insertions: pairs(&[(1, 3), (2, 4)]), ordering_constraints: vec![] },
                workspace: Workspace::default(),
                home,
                spawn_margin_m: default_margin(),
            }
        }
        "real2" => {
            let region = Region { x_min: -0.22, x_max: 0.04, y_min: -0.14, y_max: 0.14 };
            ScenarioConfig {
                name: "real2".into(),
                display_name: "Real 2".into(),
                objects: vec![
                    gear(1, "blue gear", 0.026, 16, region),
                    gear(2, "orange gear", 0.022, 14, region),
                    gear(3, "gray gear", 0.024, 15, region),
                    shaft(4, "front shaft", 0.14, -0.05),
                    shaft(5, "rear shaft", 0.14, 0.05),
                    plate(6),
                ],
                goal: GoalSpec {
                    required_insertions: pairs(&[(1, 4), (2, 5)]),
                    ordering_constraints: pairs(&[(2, 1)]),
                },
                workspace: Workspace::default(),
                home,
                spawn_margin_m: default_margin(),
            }
        }
        _ => return None,
    };
    Some(cfg)
}
