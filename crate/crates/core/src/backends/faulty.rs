use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canonical::derive_seed;
use crate::marking::{MarkerId, TripletAnnotations};
use crate::parser::{format_decision, parse_decision, Skill};

use super::{Backend, BackendError, ReasoningBackend, ReasoningRequest, RecognitionBackend, RecognitionRequest, SceneContext};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    pub pick_error_rate: f64,
    pub insert_error_rate: f64,
    pub seed: u64,
}

/// Replace the decision's marker with a different one of the same range
/// drawn from `annotations`, with the configured probability.
///
/// Place shares the insert error rate. A decision with no alternative
/// marker available passes through unchanged.
pub fn inject_faults<R: Rng>(config: &FaultConfig, decision: Skill, annotations: &TripletAnnotations, rng: &mut R) -> Skill {
    let (rate, current, is_location) = match decision {
        Skill::Pick { object_marker } => (config.pick_error_rate, object_marker, false),
        Skill::Place { target_marker } | Skill::Insert { target_marker } => (config.insert_error_rate, target_marker, true),
        Skill::Done | Skill::Init => return decision,
    };
    // always draw, so the stream position does not depend on the outcome
    let corrupt = rng.random::<f64>() < rate;
    let others: Vec<MarkerId> = annotations
        .marker_ids()
        .into_iter()
        .filter(|m| *m != current && if is_location { m.is_location() } else { m.is_object() })
        .collect();
    if !corrupt {
        return decision;
    }
    let Some(&replacement) = others.choose(rng) else {
        return decision;
    };
    match decision {
        Skill::Pick { .. } => Skill::Pick { object_marker: replacement },
        Skill::Place { .. } => Skill::Place { target_marker: replacement },
        Skill::Insert { .. } => Skill::Insert { target_marker: replacement },
        Skill::Done | Skill::Init => unreachable!(),
    }
}

/// Wraps another backend and corrupts its reasoning decisions at fixed
/// rates. Recognition passes through untouched.
pub struct FaultyBackend {
    inner: Arc<dyn Backend>,
    config: FaultConfig,
}

impl FaultyBackend {
    pub fn new(inner: Arc<dyn Backend>, config: FaultConfig) -> Self {
        FaultyBackend { inner, config }
    }

    /// The RNG for one call; depends only on the seed, episode and call index.
    fn rng_for(&self, ctx: &SceneContext<'_>) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(&[self.config.seed, ctx.episode_index, ctx.call_index]))
    }
}

impl RecognitionBackend for FaultyBackend {
    fn recognize(&self, req: &RecognitionRequest, ctx: &SceneContext<'_>) -> Result<TripletAnnotations, BackendError> {
        self.inner.recognize(req, ctx)
    }
}

impl ReasoningBackend for FaultyBackend {
    fn decide(&self, req: &ReasoningRequest, ctx: &SceneContext<'_>) -> Result<String, BackendError> {
        let raw = self.inner.decide(req, ctx)?;
        let annotations = &req.marked.annotations;
        let known: BTreeSet<MarkerId> = annotations.marker_ids();
        let Ok(decision) = parse_decision(&raw, &known) else {
            return Ok(raw);
        };
        let skill = inject_faults(&self.config, decision.skill, annotations, &mut self.rng_for(ctx));
        Ok(if skill == decision.skill { raw } else { format_decision(&skill) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marking::PointAnnotation;
    use crate::world::PixelCoord;

    fn anns() -> TripletAnnotations {
        let a = |id: u32| PointAnnotation { marker_id: MarkerId(id), pixel: PixelCoord { x: 0, y: 0 }, label: format!("m{id}") };
        TripletAnnotations { object: vec![a(1)], current: vec![a(1), a(2), a(3), a(101), a(102)], goal: vec![a(101), a(102)] }
    }

    fn cfg(pick: f64, insert: f64) -> FaultConfig {
        FaultConfig { pick_error_rate: pick, insert_error_rate: insert, seed: 9 }
    }

    #[test]
    fn zero_rates_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let s = Skill::Pick { object_marker: MarkerId(2) };
            assert_eq!(inject_faults(&cfg(0.0, 0.0), s, &anns(), &mut rng), s);
        }
    }

    #[test]
    fn certain_insert_error_picks_the_other_shaft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = Skill::Insert { target_marker: MarkerId(101) };
            assert_eq!(inject_faults(&cfg(0.0, 1.0), s, &anns(), &mut rng), Skill::Insert { target_marker: MarkerId(102) });
        }
    }

    #[test]
    fn corrupted_picks_stay_in_object_range_and_known() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let known = anns().marker_ids();
        for _ in 0..200 {
            let out = inject_faults(&cfg(1.0, 0.0), Skill::Pick { object_marker: MarkerId(1) }, &anns(), &mut rng);
            let m = out.marker().unwrap();
            assert!(m.is_object() && m != MarkerId(1) && known.contains(&m));
        }
    }

    #[test]
    fn corruption_fraction_matches_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Skill::Insert { target_marker: MarkerId(101) };
        let n = (0..1000).filter(|_| inject_faults(&cfg(0.0, 0.7), s, &anns(), &mut rng) != s).count();
        assert!((n as f64 / 1000.0 - 0.7).abs() <= 0.04, "{n}");
    }
}
