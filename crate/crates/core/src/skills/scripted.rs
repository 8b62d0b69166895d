//! Scripted closed-loop policies used in place of learned ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::world::{Camera, Command, Grip, Pose, RasterImage, GEAR_THICKNESS_M, MAX_APERTURE_M};

use super::{plan_approach, Policy, PolicyFactory, PolicyInput, PolicyOutput, Trajectory};

/// Tool height a skill retreats to before reporting completion.
pub const LIFT_Z_M: f64 = 0.05;
/// Lowest tool height the pick policy descends to.
const PICK_FLOOR_M: f64 = 0.001;
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptedKind {
    Pick,
    Place,
    Insert,
    Init,
}

impl ScriptedKind {
    pub fn registry_name(self) -> &'static str {
        match self {
            ScriptedKind::Pick => "scripted-pick",
            ScriptedKind::Place => "scripted-place",
            ScriptedKind::Insert => "scripted-insert",
            ScriptedKind::Init => "scripted-init",
        }
    }
}

pub struct ScriptedPolicyFactory {
    pub kind: ScriptedKind,
    /// Standard deviation of the per-chunk xy offset on the target estimate.
    pub noise_sigma_m: f64,
}

impl PolicyFactory for ScriptedPolicyFactory {
    fn create(&self, seed: u64) -> Box<dyn Policy> {
        let noise = Noise::new(self.noise_sigma_m, seed);
        match self.kind {
            ScriptedKind::Pick => Box::new(ScriptedPick { noise, closed: false, planned_z: None }),
            ScriptedKind::Place => Box::new(ScriptedPlace(Release::new(noise, false))),
            ScriptedKind::Insert => Box::new(ScriptedInsert(Release::new(noise, true))),
            ScriptedKind::Init => Box::new(ScriptedInit),
        }
    }
}

struct Noise {
    dist: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Noise {
    fn new(sigma: f64, seed: u64) -> Self {
        let dist = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
        Noise { dist, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn perturb(&mut self, x: f64, y: f64) -> (f64, f64) {
        match &self.dist {
            Some(d) => (x + d.sample(&mut self.rng), y + d.sample(&mut self.rng)),
            None => (x, y),
        }
    }
}

/// Estimate the world xy of whatever lies under the wrist camera's center.
///
/// Flood-fills the uniformly colored region under the center pixel; when
/// that region is enclosed (a shaft top, or the bore of a gear) its
/// centroid is the object axis. A region touching the frame edge gives no
/// estimate, as does plain table or plate under the center.
pub fn localize_target(image: &RasterImage, camera: &Camera) -> Option<(f64, f64)> {
    let (w, h) = (image.width(), image.height());
    if w == 0 || h == 0 {
        return None;
    }
    let (cx, cy) = (w / 2, h / 2);
    let color = image.get(cx, cy);
    let mut seen = vec![false; (w * h) as usize];
    let mut stack = vec![(cx, cy)];
    seen[(cy * w + cx) as usize] = true;
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0u64);
    let mut enclosed = true;
    while let Some((x, y)) = stack.pop() {
        su += x as f64;
        sv += y as f64;
        n += 1;
        if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
            enclosed = false;
        }
        let neighbors = [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ];
        for (nx, ny) in neighbors {
            if nx >= w || ny >= h || seen[(ny * w + nx) as usize] || image.get(nx, ny) != color {
                continue;
            }
            seen[(ny * w + nx) as usize] = true;
            stack.push((nx, ny));
        }
    }
    if !enclosed {
        return None;
    }
    Some(camera.unproject(su / n as f64, sv / n as f64))
}

fn in_limit_moves(dx: f64, dy: f64, dz: f64) -> Vec<Command> {
    plan_approach(&Pose::new(0.0, 0.0, 0.0, 0.0), (dx, dy, dz))
}

/// Commands lifting the tool straight up to `z`, at most `max` of them.
fn lift_to(tool: &Pose, z: f64, max: usize) -> Vec<Command> {
    let mut c = in_limit_moves(0.0, 0.0, (z - tool.z).max(0.0));
    c.truncate(max);
    c
}

/// Planar alignment over `(x, y)` followed by a descent to `z`, cut to
/// `max` commands. Returns the commands and the tool z they end at.
fn align_and_descend(tool: &Pose, (x, y): (f64, f64), z: f64, max: usize) -> (Vec<Command>, f64) {
    let mut c = in_limit_moves(x - tool.x, y - tool.y, 0.0);
    c.extend(in_limit_moves(0.0, 0.0, (z - tool.z).min(0.0)));
    c.truncate(max);
    let end = tool.z + c.iter().map(|m| m.dz).sum::<f64>();
    (c, end)
}

fn chunk(commands: Vec<Command>, len: usize) -> Result<PolicyOutput, String> {
    if commands.len() > len {
        return Err(format!("planned {} commands for a chunk of {len}", commands.len()));
    }
    Ok(PolicyOutput::Chunk(Trajectory::padded(commands, len)))
}

/// Descend over the target gear, close, and lift it clear.
pub struct ScriptedPick {
    noise: Noise,
    closed: bool,
    planned_z: Option<f64>,
}

impl Policy for ScriptedPick {
    fn act(&mut self, input: &PolicyInput) -> Result<PolicyOutput, String> {
        let tool = input.robot_state.tool_pose;
        let n = input.chunk_length;
        if self.closed {
            if input.robot_state.holding.is_some() && tool.z < LIFT_Z_M - EPS {
                return chunk(lift_to(&tool, LIFT_Z_M, n), n);
            }
            return Ok(PolicyOutput::Complete);
        }
        let blocked = self.planned_z.is_some_and(|z| tool.z > z + EPS);
        if blocked || tool.z <= PICK_FLOOR_M + EPS {
            self.closed = true;
            let mut c = vec![Command::grip(Grip::Close)];
            c.extend(lift_to(&tool, LIFT_Z_M, n - 1));
            return chunk(c, n);
        }
        let seen = localize_target(&input.camera_image, &input.camera)
            .unwrap_or((input.target_pose.x, input.target_pose.y));
        let goal = self.noise.perturb(seen.0, seen.1);
        let mut c = Vec::new();
        if input.robot_state.gripper_aperture < MAX_APERTURE_M {
            c.push(Command::grip(Grip::Open));
        }
        let (moves, end) = align_and_descend(&tool, goal, PICK_FLOOR_M, n - c.len());
        c.extend(moves);
        self.planned_z = Some(end);
        chunk(c, n)
    }
}

/// Shared body of place and insert: lower the held gear over the target,
/// release when it bottoms out or stops, then back away.
struct Release {
    noise: Noise,
    vision: bool,
    planned_z: Option<f64>,
}

impl Release {
    fn new(noise: Noise, vision: bool) -> Self {
        Release { noise, vision, planned_z: None }
    }

    fn act(&mut self, input: &PolicyInput) -> Result<PolicyOutput, String> {
        let tool = input.robot_state.tool_pose;
        let n = input.chunk_length;
        if input.robot_state.holding.is_none() {
            if tool.z < LIFT_Z_M - EPS {
                return chunk(lift_to(&tool, LIFT_Z_M, n), n);
            }
            return Ok(PolicyOutput::Complete);
        }
        let release_z = input.target_pose.z + GEAR_THICKNESS_M;
        let blocked = self.planned_z.is_some_and(|z| tool.z > z + EPS);
        if blocked || tool.z <= release_z + EPS {
            let mut c = vec![Command::grip(Grip::Open)];
            c.extend(lift_to(&tool, LIFT_Z_M, n - 1));
            return chunk(c, n);
        }
        let seen = if self.vision { localize_target(&input.camera_image, &input.camera) } else { None }
            .unwrap_or((input.target_pose.x, input.target_pose.y));
        let goal = self.noise.perturb(seen.0, seen.1);
        let (c, end) = align_and_descend(&tool, goal, release_z, n);
        self.planned_z = Some(end);
        chunk(c, n)
    }
}

/// Lower the held gear at the target and release it on whatever is below.
pub struct ScriptedPlace(Release);

impl Policy for ScriptedPlace {
    fn act(&mut self, input: &PolicyInput) -> Result<PolicyOutput, String> {
        self.0.act(input)
    }
}

/// Center the held gear on the shaft seen by the wrist camera and slide
/// it down the shaft axis before releasing.
pub struct ScriptedInsert(Release);

impl Policy for ScriptedInsert {
    fn act(&mut self, input: &PolicyInput) -> Result<PolicyOutput, String> {
        self.0.act(input)
    }
}

/// Return to the home pose and open the gripper.
pub struct ScriptedInit;

impl Policy for ScriptedInit {
    fn act(&mut self, input: &PolicyInput) -> Result<PolicyOutput, String> {
        let tool = input.robot_state.tool_pose;
        let home = input.target_pose;
        let n = input.chunk_length;
        let at_home = tool.planar_distance(&home) < 1e-6 && (tool.z - home.z).abs() < 1e-6;
        if !at_home {
            let mut c = plan_approach(&tool, (home.x, home.y, home.z));
            c.truncate(n);
            return chunk(c, n);
        }
        if input.robot_state.holding.is_some() || input.robot_state.gripper_aperture < MAX_APERTURE_M {
            return chunk(vec![Command::grip(Grip::Open)], n);
        }
        Ok(PolicyOutput::Complete)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::render;
    use crate::world::tests::{gear, shaft, world};
    use crate::world::GoalSpec;

    #[test]
    fn localizes_shaft_axis_within_a_tenth_of_a_millimeter() {
        for (i, (dx, dy)) in [(0.0, 0.0), (0.0013, -0.0007), (-0.0021, 0.0018), (0.00031, 0.00077)].into_iter().enumerate() {
            let w = world(vec![shaft(2, 0.1, -0.03, 0.0049)], GoalSpec::default());
            let cam = Camera::wrist(&Pose::new(0.1 + dx, -0.03 + dy, 0.05, 0.0));
            let img = render(&w, &cam).unwrap();
            let (x, y) = localize_target(&img, &cam).expect("shaft in view");
            let err = (x - 0.1).hypot(y + 0.03);
            assert!(err < 0.0001, "case {i}: {err}");
        }
    }

    #[test]
    fn localizes_gear_bore() {
        let w = world(vec![gear(1, -0.05, 0.02, 0.005)], GoalSpec::default());
        let cam = Camera::wrist(&Pose::new(-0.0488, 0.0213, 0.05, 0.0));
        let img = render(&w, &cam).unwrap();
        let (x, y) = localize_target(&img, &cam).unwrap();
        assert!((x + 0.05).hypot(y - 0.02) < 0.0002);
    }

    #[test]
    fn open_table_gives_no_estimate() {
        let w = world(vec![], GoalSpec::default());
        let cam = Camera::wrist(&Pose::new(0.0, 0.0, 0.05, 0.0));
        assert_eq!(localize_target(&render(&w, &cam).unwrap(), &cam), None);
    }

    #[test]
    fn align_and_descend_respects_limit_and_reports_end() {
        let tool = Pose::new(0.0, 0.0, 0.05, 0.0);
        let (c, end) = align_and_descend(&tool, (0.003, -0.002), 0.008, 16);
        assert!(c.iter().all(|m| m.within_limits()));
        assert!((end - 0.008).abs() < 1e-12);
        let (c, end) = align_and_descend(&tool, (0.0, 0.0), 0.0, 4);
        assert_eq!(c.len(), 4);
        assert!((end - 0.03).abs() < 1e-12);
    }
}
