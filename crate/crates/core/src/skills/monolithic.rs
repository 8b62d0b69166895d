//! A single scripted policy that attempts the whole assembly open loop,
//! for comparison against the decomposed pipeline.

use crate::world::{Command, Grip, ObjectId, Pose, GEAR_THICKNESS_M};

use super::scripted::LIFT_Z_M;
use super::{plan_approach, Policy, PolicyInput, PolicyOutput, Trajectory};

/// Planar `(x, y)` position in meters.
pub type Xy = (f64, f64);

/// Gear and shaft positions the monolithic policy assumes.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalLayout {
    /// `(gear, gear xy, shaft xy)` in insertion order.
    pub pairs: Vec<(ObjectId, Xy, Xy)>,
}

/// Replays a fixed pick-and-insert script for every goal pair, built from a
/// nominal layout rather than from observations.
pub struct MonolithicPolicy {
    plan: Vec<Command>,
    cursor: usize,
}

impl MonolithicPolicy {
    pub fn new(start: &Pose, layout: &NominalLayout) -> Self {
        let mut plan = Vec::new();
        let mut at = *start;
        let go = |plan: &mut Vec<Command>, at: &mut Pose, to: (f64, f64, f64)| {
            plan.extend(plan_approach(at, to));
            *at = Pose::new(to.0, to.1, to.2, at.yaw);
        };
        for &(_, gear, shaft) in &layout.pairs {
            go(&mut plan, &mut at, (gear.0, gear.1, LIFT_Z_M));
            go(&mut plan, &mut at, (gear.0, gear.1, 0.001));
            plan.push(Command::grip(Grip::Close));
            go(&mut plan, &mut at, (gear.0, gear.1, LIFT_Z_M));
            go(&mut plan, &mut at, (shaft.0, shaft.1, LIFT_Z_M));
            go(&mut plan, &mut at, (shaft.0, shaft.1, GEAR_THICKNESS_M));
            plan.push(Command::grip(Grip::Open));
            go(&mut plan, &mut at, (shaft.0, shaft.1, LIFT_Z_M));
        }
        MonolithicPolicy { plan, cursor: 0 }
    }

    /// Total commands in the script.
    pub fn plan_len(&self) -> usize {
        self.plan.len()
    }
}

impl Policy for MonolithicPolicy {
    fn act(&mut self, input: &PolicyInput) -> Result<PolicyOutput, String> {
        if self.cursor >= self.plan.len() {
            return Ok(PolicyOutput::Complete);
        }
        let end = (self.cursor + input.chunk_length).min(self.plan.len());
        let c = self.plan[self.cursor..end].to_vec();
        self.cursor = end;
        Ok(PolicyOutput::Chunk(Trajectory::padded(c, input.chunk_length)))
    }
}
