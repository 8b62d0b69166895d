use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendConfig, HttpConfig};
use crate::orchestrator::{EpisodeConfig, DEFAULT_PARSE_RETRIES};
use crate::prompting::PromptTemplate;
use crate::skills::{PolicyNames, SkillConfig};
use crate::world::{builtin_scenario, builtin_scenario_names, ScenarioConfig};

use super::{HarnessError, PolicyConfig, RunSpec};

pub const DEFAULT_TRIALS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Oracle,
    Faulty,
    Replay,
    Http,
}

/// Run settings as read from a JSON file or the command line. Every field
/// is optional; [`RunConfig::overlay`] lets command-line values win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<String>,
    /// JSON scenario file, used instead of a built-in scenario name.
    pub scenario_file: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub pick_error: Option<f64>,
    pub insert_error: Option<f64>,
    pub policy_noise: Option<f64>,
    pub no_vlm: Option<bool>,
    pub replay_file: Option<PathBuf>,
    pub http: Option<HttpConfig>,
    pub template: Option<PathBuf>,
    pub max_iterations: Option<usize>,
    pub parse_retries: Option<usize>,
    pub step_budget: Option<usize>,
    pub z_offset: Option<f64>,
    pub policies: Option<PolicyNames>,
}

/// A fully resolved run: the trial spec plus where to write it.
#[derive(Clone)]
pub struct ResolvedRun {
    pub spec: RunSpec,
    pub out: Option<PathBuf>,
}

fn pick<T>(over: Option<T>, base: Option<T>) -> Option<T> {
    over.or(base)
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// `over`'s set fields replace this config's.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        RunConfig {
            scenario: pick(over.scenario, self.scenario),
            scenario_file: pick(over.scenario_file, self.scenario_file),
            backend: pick(over.backend, self.backend),
            trials: pick(over.trials, self.trials),
            seed: pick(over.seed, self.seed),
            out: pick(over.out, self.out),
            pick_error: pick(over.pick_error, self.pick_error),
            insert_error: pick(over.insert_error, self.insert_error),
            policy_noise: pick(over.policy_noise, self.policy_noise),
            no_vlm: pick(over.no_vlm, self.no_vlm),
            replay_file: pick(over.replay_file, self.replay_file),
            http: pick(over.http, self.http),
            template: pick(over.template, self.template),
            max_iterations: pick(over.max_iterations, self.max_iterations),
            parse_retries: pick(over.parse_retries, self.parse_retries),
            step_budget: pick(over.step_budget, self.step_budget),
            z_offset: pick(over.z_offset, self.z_offset),
            policies: pick(over.policies, self.policies),
        }
    }

    fn scenario_config(&self) -> Result<ScenarioConfig, HarnessError> {
        if let Some(path) = &self.scenario_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            return serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())));
        }
        let name = self.scenario.as_deref().unwrap_or("sim");
        builtin_scenario(name).ok_or_else(|| {
            HarnessError::Config(format!("unknown scenario {name:?}; expected one of {}", builtin_scenario_names().join(", ")))
        })
    }

    fn backend_config(&self, seed: u64) -> Result<BackendConfig, HarnessError> {
        let kind = self.backend.unwrap_or(BackendKind::Oracle);
        let rates_given = self.pick_error.is_some() || self.insert_error.is_some();
        if rates_given && kind != BackendKind::Faulty {
            return Err(HarnessError::Config("--pick-error and --insert-error need --backend faulty".into()));
        }
        let cfg = match kind {
            BackendKind::Oracle => BackendConfig::Oracle,
            BackendKind::Faulty => BackendConfig::Faulty {
                wrapped: Box::new(BackendConfig::Oracle),
                pick_error_rate: self.pick_error.unwrap_or(0.0),
                insert_error_rate: self.insert_error.unwrap_or(0.0),
                seed,
            },
            BackendKind::Replay => BackendConfig::Replay {
                path: self
                    .replay_file
                    .clone()
                    .ok_or_else(|| HarnessError::Config("--backend replay needs --replay-file".into()))?,
            },
            BackendKind::Http => BackendConfig::Http(
                self.http.clone().ok_or_else(|| HarnessError::Config("--backend http needs an http section or --base-url/--model".into()))?,
            ),
        };
        cfg.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn resolve(&self) -> Result<ResolvedRun, HarnessError> {
        let seed = self.seed.unwrap_or(0);
        let trials = self.trials.unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(HarnessError::Config("--trials must be at least 1".into()));
        }
        let scenario = self.scenario_config()?;
        let backend = self.backend_config(seed)?;
        let template = match &self.template {
            Some(p) => PromptTemplate::load(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?,
            None => PromptTemplate::default(),
        };
        let defaults = SkillConfig::default();
        let skill = SkillConfig {
            chunk_length: defaults.chunk_length,
            step_budget: self.step_budget.unwrap_or(defaults.step_budget),
            z_offset: self.z_offset.unwrap_or(defaults.z_offset),
        };
        if skill.step_budget < skill.chunk_length {
            return Err(HarnessError::Config(format!("step budget must be at least {}", skill.chunk_length)));
        }
        if !(skill.z_offset.is_finite() && skill.z_offset >= 0.0) {
            return Err(HarnessError::Config("z offset must be non-negative".into()));
        }
        if self.max_iterations == Some(0) {
            return Err(HarnessError::Config("max iterations must be at least 1".into()));
        }
        let policy = PolicyConfig {
            noise_sigma_m: self.policy_noise.unwrap_or(0.0),
            names: self.policies.clone().unwrap_or_default(),
            no_vlm: self.no_vlm.unwrap_or(false),
        };
        policy.policy_set()?;
        let episode = EpisodeConfig {
            max_iterations: self.max_iterations,
            parse_retries: self.parse_retries.unwrap_or(DEFAULT_PARSE_RETRIES),
            skill,
            seed,
            episode_index: 0,
        };
        let image_dir = self.out.as_ref().map(|o| o.join("images"));
        Ok(ResolvedRun {
            spec: RunSpec { scenario, backend, policy, episode, template, n_trials: trials, seed, image_dir },
            out: self.out.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: RunConfig =
            serde_json::from_str(r#"{"scenario":"real1","trials":5,"seed":9,"backend":"faulty","insert_error":0.5}"#).unwrap();
        let flags = RunConfig { trials: Some(7), ..RunConfig::default() };
        let merged = file.overlay(flags);
        assert_eq!(merged.trials, Some(7));
        assert_eq!(merged.seed, Some(9));
        let run = merged.resolve().unwrap();
        assert_eq!(run.spec.n_trials, 7);
        assert_eq!(run.spec.scenario.name, "real1");
        assert!(matches!(run.spec.backend, BackendConfig::Faulty { insert_error_rate, seed: 9, .. } if insert_error_rate == 0.5));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"trails":3}"#).is_err());
        let bad = [
            RunConfig { trials: Some(0), ..RunConfig::default() },
            RunConfig { scenario: Some("mars".into()), ..RunConfig::default() },
            RunConfig { backend: Some(BackendKind::Faulty), insert_error: Some(1.5), ..RunConfig::default() },
            RunConfig { pick_error: Some(0.1), ..RunConfig::default() },
            RunConfig { backend: Some(BackendKind::Replay), ..RunConfig::default() },
            RunConfig { policy_noise: Some(-1.0), ..RunConfig::default() },
        ];
        for c in bad {
            assert!(matches!(c.resolve(), Err(HarnessError::Config(_))), "{c:?}");
        }
    }
}
