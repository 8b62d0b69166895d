#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlm_assembly::backends::{BackendError, ReasoningBackend, ReasoningRequest, SceneContext};
use vlm_assembly::canonical::derive_seed;
use vlm_assembly::parser::{format_decision, Skill};
use vlm_assembly::world::{GoalSpec, ObjectId, ObjectKind, ObjectSpec, Placement, Pose, Region, ScenarioConfig, Workspace};

fn call_rng(ctx: &SceneContext<'_>, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(&[salt, ctx.episode_index, ctx.call_index]))
}

/// Replies with random text that rarely parses.
pub struct Garbage;

impl ReasoningBackend for Garbage {
    fn decide(&self, _: &ReasoningRequest, ctx: &SceneContext<'_>) -> Result<String, BackendError> {
        let mut rng = call_rng(ctx, 1);
        let n = rng.random_range(0..80);
        Ok((0..n).map(|_| char::from(rng.random_range(0x20u8..0x7f))).collect())
    }
}

/// Always picks the lowest object marker it was shown.
pub struct RepeatPick;

impl ReasoningBackend for RepeatPick {
    fn decide(&self, req: &ReasoningRequest, _: &SceneContext<'_>) -> Result<String, BackendError> {
        let id = req.marked.annotations.marker_ids().into_iter().find(|m| m.is_object());
        Ok(match id {
            Some(object_marker) => format_decision(&Skill::Pick { object_marker }),
            None => "DECISION: done".into(),
        })
    }
}

/// Well-formed decisions over the shown markers, chosen at random.
pub struct RandomValid;

impl ReasoningBackend for RandomValid {
    fn decide(&self, req: &ReasoningRequest, ctx: &SceneContext<'_>) -> Result<String, BackendError> {
        let mut rng = call_rng(ctx, 2);
        let ids: Vec<_> = req.marked.annotations.marker_ids().into_iter().collect();
        let objects: Vec<_> = ids.iter().copied().filter(|m| m.is_object()).collect();
        let locations: Vec<_> = ids.iter().copied().filter(|m| m.is_location()).collect();
        let skill = match rng.random_range(0..10) {
            0 => Skill::Done,
            1 => Skill::Init,
            2..=4 if !objects.is_empty() => Skill::Pick { object_marker: objects[rng.random_range(0..objects.len())] },
            5..=6 if !locations.is_empty() => {
                Skill::Place { target_marker: locations[rng.random_range(0..locations.len())] }
            }
            _ if !locations.is_empty() => Skill::Insert { target_marker: locations[rng.random_range(0..locations.len())] },
            _ => Skill::Init,
        };
        Ok(format!("thinking...\n{}", format_decision(&skill)))
    }
}

/// A scenario with 1 to 3 gears of random size placed at random, one
/// shaft per gear and an optional ordering constraint.
pub fn random_scenario(rng: &mut impl Rng) -> ScenarioConfig {
    let n = rng.random_range(1..=3u32);
    let region = Region { x_min: -0.22, x_max: 0.06, y_min: -0.14, y_max: 0.14 };
    let mut objects = Vec::new();
    let mut pairs = Vec::new();
    for i in 1..=n {
        objects.push(ObjectSpec {
            object_id: ObjectId(i),
            label: format!("gear {i}"),
            kind: ObjectKind::Gear {
                outer_radius_m: rng.random_range(0.015..0.03),
                bore_radius_m: 0.005,
                tooth_count: rng.random_range(8..24),
            },
            placement: Placement::Random { region },
        });
    }
    for i in 1..=n {
        let id = n + i;
        let y = -0.09 + 0.09 * (i - 1) as f64 + rng.random_range(-0.01..0.01);
        objects.push(ObjectSpec {
            object_id: ObjectId(id),
            label: format!("shaft {i}"),
            kind: ObjectKind::Shaft { radius_m: 0.0049, height_m: rng.random_range(0.02..0.04) },
            placement: Placement::Fixed { x: rng.random_range(0.12..0.18), y, yaw: 0.0 },
        });
        pairs.push((ObjectId(i), ObjectId(id)));
    }
    let ordering = if n >= 2 && rng.random_bool(0.5) { vec![(ObjectId(1), ObjectId(2))] } else { vec![] };
    ScenarioConfig {
        name: "random".into(),
        display_name: "Random".into(),
        objects,
        goal: GoalSpec { required_insertions: pairs, ordering_constraints: ordering },
        workspace: Workspace::default(),
        home: Pose::new(0.0, 0.20, 0.10, 0.0),
        spawn_margin_m: 0.01,
    }
}
