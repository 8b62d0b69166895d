//! Orthographic flat-shaded renderer. No anti-aliasing: every pixel is
//! decided by a point-in-shape test at its center, so output bytes depend
//! only on the world and the camera.

use std::f64::consts::PI;

use super::camera::{Camera, CameraView};
use super::image::{RasterImage, Rgb};
use super::{ObjectId, ObjectKind, ObjectStatus, SceneObject, WorldError, WorldState};
use crate::marking::{MarkerId, PointAnnotation};

pub const TABLE_COLOR: Rgb = [236, 236, 232];
pub const PLATE_COLOR: Rgb = [178, 168, 150];

const PALETTE: [Rgb; 12] = [
    [214, 48, 49],
    [46, 160, 67],
    [38, 98, 214],
    [232, 160, 20],
    [142, 68, 173],
    [22, 160, 160],
    [120, 120, 128],
    [200, 90, 150],
    [110, 80, 40],
    [90, 150, 230],
    [170, 200, 40],
    [60, 60, 70],
];

/// Depth of the tooth tick band inside a gear's outer rim.
const TICK_DEPTH_M: f64 = 0.002;

pub fn palette_color(object_id: ObjectId) -> Rgb {
    PALETTE[(object_id.0 as usize).wrapping_sub(1) % PALETTE.len()]
}

/// Body color of an object; tooth ticks are drawn in a darker shade.
pub fn object_color(obj: &SceneObject) -> Rgb {
    match obj.kind {
        ObjectKind::BasePlate { .. } => PLATE_COLOR,
        _ => palette_color(obj.object_id),
    }
}

fn darker(c: Rgb) -> Rgb {
    [c[0] / 2 + c[0] / 8, c[1] / 2 + c[1] / 8, c[2] / 2 + c[2] / 8]
}

/// The world with every required insertion satisfied and nothing held.
pub fn goal_world(world: &WorldState) -> WorldState {
    let mut goal = world.clone();
    if let Some(id) = goal.robot.holding.take() {
        if let Some(o) = goal.objects.iter_mut().find(|o| o.object_id == id) {
            o.status = ObjectStatus::Free;
        }
    }
    for &(gear_id, shaft_id) in &world.goal.required_insertions {
        if goal.pair_satisfied(gear_id, shaft_id) {
            continue;
        }
        let Some(shaft) = goal.object(shaft_id).map(|s| s.pose) else { continue };
        let stack_top = goal
            .objects
            .iter()
            .filter(|o| o.object_id != gear_id && o.status == ObjectStatus::Inserted { shaft_id })
            .map(|o| o.top())
            .fold(0.0, f64::max);
        if let Some(g) = goal.objects.iter_mut().find(|o| o.object_id == gear_id) {
            g.pose.x = shaft.x;
            g.pose.y = shaft.y;
            g.pose.z = stack_top;
            g.status = ObjectStatus::Inserted { shaft_id };
        }
    }
    goal
}

/// Objects a camera sees, in back-to-front paint order.
fn visible_objects(world: &WorldState, camera: &Camera) -> Result<(Vec<SceneObject>, bool), WorldError> {
    let (mut objs, check_frame): (Vec<SceneObject>, bool) = match camera.view {
        CameraView::TopCurrent => (world.objects.clone(), true),
        CameraView::TopGoal => (goal_world(world).objects, true),
        CameraView::ObjectCloseup { object_id } => {
            let o = world.object(object_id).ok_or(WorldError::UnknownObject(object_id))?;
            (vec![o.clone()], true)
        }
        CameraView::Wrist => (
            world.objects.iter().filter(|o| Some(o.object_id) != world.robot.holding).cloned().collect(),
            false,
        ),
    };
    objs.sort_by(|a, b| {
        let plate_a = matches!(a.kind, ObjectKind::BasePlate { .. });
        let plate_b = matches!(b.kind, ObjectKind::BasePlate { .. });
        plate_b
            .cmp(&plate_a)
            .then(a.top().total_cmp(&b.top()))
            .then(a.object_id.cmp(&b.object_id))
    });
    Ok((objs, check_frame))
}

pub fn render(world: &WorldState, camera: &Camera) -> Result<RasterImage, WorldError> {
    let (objs, check_frame) = visible_objects(world, camera)?;
    if check_frame {
        for o in objs.iter().filter(|o| o.status != ObjectStatus::Grasped) {
            if !camera.contains(camera.pixel_of(o.pose.x, o.pose.y)) {
                return Err(WorldError::ObjectOutOfFrame(o.object_id));
            }
        }
    }
    let mut img = RasterImage::filled(camera.width_px, camera.height_px, TABLE_COLOR);
    for o in &objs {
        draw_object(&mut img, camera, o);
    }
    Ok(img)
}

fn pixel_range(camera: &Camera, cx: f64, cy: f64, reach: f64) -> Option<(u32, u32, u32, u32)> {
    let (u, v) = camera.project(cx, cy);
    let r = reach / camera.meters_per_pixel + 1.0;
    let x0 = (u - r).floor().max(0.0);
    let y0 = (v - r).floor().max(0.0);
    let x1 = (u + r).ceil().min(camera.width_px as f64 - 1.0);
    let y1 = (v + r).ceil().min(camera.height_px as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

fn draw_object(img: &mut RasterImage, camera: &Camera, o: &SceneObject) {
    let color = object_color(o);
    let (cx, cy) = (o.pose.x, o.pose.y);
    match o.kind {
        ObjectKind::BasePlate { width_m, depth_m } => {
            let reach = 0.5 * width_m.hypot(depth_m);
            let Some((x0, y0, x1, y1)) = pixel_range(camera, cx, cy, reach) else { return };
            let (s, c) = o.pose.yaw.sin_cos();
            for j in y0..=y1 {
                for i in x0..=x1 {
                    let (wx, wy) = camera.unproject(i as f64, j as f64);
                    let (dx, dy) = (wx - cx, wy - cy);
                    let lx = c * dx + s * dy;
                    let ly = -s * dx + c * dy;
                    if lx.abs() <= width_m / 2.0 && ly.abs() <= depth_m / 2.0 {
                        img.set(i, j, color);
                    }
                }
            }
        }
        ObjectKind::Shaft { radius_m, .. } => {
            let Some((x0, y0, x1, y1)) = pixel_range(camera, cx, cy, radius_m) else { return };
            let r2 = radius_m * radius_m;
            for j in y0..=y1 {
                for i in x0..=x1 {
                    let (wx, wy) = camera.unproject(i as f64, j as f64);
                    if (wx - cx).powi(2) + (wy - cy).powi(2) <= r2 {
                        img.set(i, j, color);
                    }
                }
            }
        }
        ObjectKind::Gear { outer_radius_m, bore_radius_m, tooth_count } => {
            let Some((x0, y0, x1, y1)) = pixel_range(camera, cx, cy, outer_radius_m) else { return };
            let tick = darker(color);
            let pitch = 2.0 * PI / tooth_count as f64;
            let tick_inner = (outer_radius_m - TICK_DEPTH_M).max(bore_radius_m);
            for j in y0..=y1 {
                for i in x0..=x1 {
                    let (wx, wy) = camera.unproject(i as f64, j as f64);
                    let (dx, dy) = (wx - cx, wy - cy);
                    let d = dx.hypot(dy);
                    if d < bore_radius_m || d > outer_radius_m {
                        continue;
                    }
                    let mut c = color;
                    if d >= tick_inner {
                        let phase = (dy.atan2(dx) - o.pose.yaw).rem_euclid(pitch);
                        let off = phase.min(pitch - phase);
                        if off <= pitch / 4.0 {
                            c = tick;
                        }
                    }
                    img.set(i, j, c);
                }
            }
        }
    }
}

/// Ground-truth point annotations: one per visible object whose label is
/// requested, at its projected center, in ascending `object_id` order.
pub fn ground_truth_points(
    world: &WorldState,
    camera: &Camera,
    labels: &[String],
) -> Result<Vec<PointAnnotation>, WorldError> {
    for label in labels {
        if !world.objects.iter().any(|o| &o.label == label) {
            return Err(WorldError::UnknownLabel(label.clone()));
        }
    }
    let (mut objs, _) = visible_objects(world, camera)?;
    objs.sort_by_key(|o| o.object_id);
    let mut out = Vec::new();
    for o in objs.iter().filter(|o| labels.contains(&o.label)) {
        let pixel = camera.pixel_of(o.pose.x, o.pose.y);
        if !camera.contains(pixel) {
            continue;
        }
        out.push(PointAnnotation { marker_id: MarkerId::for_object(o), pixel, label: o.label.clone() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{builtin_scenario, spawn_world, Pose, RobotState, GoalSpec, Workspace, MAX_APERTURE_M};

    fn empty_world() -> WorldState {
        WorldState {
            objects: vec![],
            robot: RobotState { tool_pose: Pose::new(0.0, 0.0, 0.1, 0.0), gripper_aperture: MAX_APERTURE_M, holding: None },
            goal: GoalSpec::default(),
            rng_seed: 0,
            step_count: 0,
            workspace: Workspace::default(),
            home: Pose::new(0.0, 0.2, 0.1, 0.0),
            insertion_history: vec![],
        }
    }

    #[test]
    fn empty_world_renders_uniform_background() {
        let img = render(&empty_world(), &Camera::top(CameraView::TopCurrent)).unwrap();
        assert!(img.pixels().chunks(3).all(|p| p == TABLE_COLOR));
    }

    #[test]
    fn render_is_deterministic() {
        let w = spawn_world(&builtin_scenario("sim").unwrap(), 7).unwrap();
        let cam = Camera::top(CameraView::TopCurrent);
        assert_eq!(render(&w, &cam).unwrap().pixels(), render(&w, &cam).unwrap().pixels());
    }

    #[test]
    fn object_center_out_of_frame_is_an_error() {
        let mut w = spawn_world(&builtin_scenario("sim").unwrap(), 7).unwrap();
        w.objects[1].pose.x = 5.0;
        let err = render(&w, &Camera::top(CameraView::TopCurrent)).unwrap_err();
        assert!(matches!(err, WorldError::ObjectOutOfFrame(_)));
    }

    #[test]
    fn goal_view_differs_from_current_until_assembled() {
        let w = spawn_world(&builtin_scenario("sim").unwrap(), 3).unwrap();
        let cur = render(&w, &Camera::top(CameraView::TopCurrent)).unwrap();
        let goal = render(&w, &Camera::top(CameraView::TopGoal)).unwrap();
        assert_ne!(cur, goal);
        let gw = goal_world(&w);
        for &(g, s) in &w.goal.required_insertions {
            assert!(gw.pair_satisfied(g, s));
        }
    }

    #[test]
    fn unknown_label_rejected() {
        let w = spawn_world(&builtin_scenario("sim").unwrap(), 1).unwrap();
        let err = ground_truth_points(&w, &Camera::top(CameraView::TopCurrent), &["unicorn".to_string()]).unwrap_err();
        assert_eq!(err, WorldError::UnknownLabel("unicorn".into()));
    }

    #[test]
    fn single_label_single_point_at_projected_center() {
        let w = spawn_world(&builtin_scenario("sim").unwrap(), 1).unwrap();
        let cam = Camera::top(CameraView::TopCurrent);
        let red = w.objects.iter().find(|o| o.label == "red gear").unwrap();
        let pts = ground_truth_points(&w, &cam, &["red gear".to_string()]).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].pixel, cam.pixel_of(red.pose.x, red.pose.y));
        assert_eq!(pts[0].marker_id, MarkerId(red.object_id.0));
    }

    #[test]
    fn wrist_view_hides_held_gear() {
        let mut w = spawn_world(&builtin_scenario("sim").unwrap(), 1).unwrap();
        let gear = w.objects.iter().position(|o| o.kind.is_gear()).unwrap();
        let p = w.objects[gear].pose;
        w.robot.tool_pose = Pose::new(p.x, p.y, 0.05, 0.0);
        let with = render(&w, &Camera::wrist(&w.robot.tool_pose)).unwrap();
        w.objects[gear].status = ObjectStatus::Grasped;
        w.robot.holding = Some(w.objects[gear].object_id);
        let without = render(&w, &Camera::wrist(&w.robot.tool_pose)).unwrap();
        assert_ne!(with, without);
        assert!(!without.pixels().chunks(3).any(|px| px == palette_color(w.objects[gear].object_id)));
    }
}
