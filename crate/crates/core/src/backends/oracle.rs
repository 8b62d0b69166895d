use crate::marking::{MarkerId, TripletAnnotations};
use crate::parser::{format_decision, Skill};
use crate::world::{ground_truth_points, ObjectStatus, WorldState};

use super::{BackendError, ReasoningBackend, ReasoningRequest, RecognitionBackend, RecognitionRequest, SceneContext};

/// Reads simulator ground truth to produce perfect answers.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleBackend;

impl RecognitionBackend for OracleBackend {
    fn recognize(&self, req: &RecognitionRequest, ctx: &SceneContext<'_>) -> Result<TripletAnnotations, BackendError> {
        req.validate()?;
        let labels = req.all_labels();
        let cams = ctx.cameras;
        Ok(TripletAnnotations {
            object: ground_truth_points(ctx.world, &cams.object, &labels)?,
            current: ground_truth_points(ctx.world, &cams.current, &labels)?,
            goal: ground_truth_points(ctx.world, &cams.goal, &labels)?,
        })
    }
}

impl ReasoningBackend for OracleBackend {
    fn decide(&self, req: &ReasoningRequest, ctx: &SceneContext<'_>) -> Result<String, BackendError> {
        req.validate()?;
        Ok(format_decision(&oracle_skill(ctx.world)))
    }
}

/// The correct next skill for `world`.
///
/// Holding the gear of an eligible pair inserts it; holding anything else
/// returns to init. With an empty gripper the first eligible pair's gear
/// is picked, unless the assembly is already complete.
pub fn oracle_skill(world: &WorldState) -> Skill {
    if world.assembly_complete() {
        return Skill::Done;
    }
    let eligible = world.eligible_pairs();
    let marker = |id| world.object(id).map(MarkerId::for_object);
    if let Some(held) = world.robot.holding {
        return match eligible.iter().find(|(g, _)| *g == held).and_then(|&(_, s)| marker(s)) {
            Some(target_marker) => Skill::Insert { target_marker },
            None => Skill::Init,
        };
    }
    let pickable = eligible.iter().find(|(g, _)| {
        world.object(*g).is_some_and(|o| !matches!(o.status, ObjectStatus::Grasped))
    });
    match pickable.and_then(|&(g, _)| marker(g)) {
        Some(object_marker) => Skill::Pick { object_marker },
        None => Skill::Done,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::tests::{gear, shaft, world};
    use crate::world::{GoalSpec, ObjectId};

    fn one_pair() -> WorldState {
        world(
            vec![gear(1, 0.0, 0.0, 0.005), shaft(2, 0.1, 0.0, 0.0049)],
            GoalSpec { required_insertions: vec![(ObjectId(1), ObjectId(2))], ordering_constraints: vec![] },
        )
    }

    #[test]
    fn fresh_world_picks_the_gear() {
        assert_eq!(oracle_skill(&one_pair()), Skill::Pick { object_marker: MarkerId(1) });
    }

    #[test]
    fn holding_goal_gear_inserts_at_its_shaft() {
        let mut w = one_pair();
        w.objects[0].status = ObjectStatus::Grasped;
        w.robot.holding = Some(ObjectId(1));
        assert_eq!(oracle_skill(&w), Skill::Insert { target_marker: MarkerId(102) });
    }

    #[test]
    fn complete_world_is_done() {
        let mut w = one_pair();
        w.objects[0].status = ObjectStatus::Inserted { shaft_id: ObjectId(2) };
        w.insertion_history.push(crate::world::InsertionEvent { gear_id: ObjectId(1), shaft_id: ObjectId(2), step: 1 });
        assert_eq!(oracle_skill(&w), Skill::Done);
    }

    #[test]
    fn respects_ordering() {
        let w = world(
            vec![gear(1, 0.0, 0.0, 0.005), gear(2, -0.1, 0.0, 0.005), shaft(3, 0.1, 0.0, 0.0049), shaft(4, 0.1, 0.1, 0.0049)],
            GoalSpec {
                required_insertions: vec![(ObjectId(1), ObjectId(3)), (ObjectId(2), ObjectId(4))],
                ordering_constraints: vec![(ObjectId(2), ObjectId(1))],
            },
        );
        assert_eq!(oracle_skill(&w), Skill::Pick { object_marker: MarkerId(2) });
    }

    #[test]
    fn holding_wrong_gear_returns_to_init() {
        let mut w = one_pair();
        w.objects.push(gear(5, -0.1, -0.1, 0.005));
        w.objects[2].status = ObjectStatus::Grasped;
        w.robot.holding = Some(ObjectId(5));
        assert_eq!(oracle_skill(&w), Skill::Init);
    }
}
