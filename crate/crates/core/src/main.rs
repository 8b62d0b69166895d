use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use vlm_assembly::backends::{build_backend, BackendConfig, BackendError, HttpConfig, RecordingBackend};
use vlm_assembly::harness::{
    format_report, report_from_dir, run_trials_on, run_trials_with, write_outputs, BackendKind, HarnessError, RunConfig,
    TrialsOutput,
};
use vlm_assembly::orchestrator::read_jsonl;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BACKEND: u8 = 3;

#[derive(Parser)]
#[command(name = "vlm-assembly", version, about = "Marker-prompted VLM planning for simulated gear assembly")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials and write report.md, episodes/ and images/.
    Run(RunArgs),
    /// Rescore the episode files of an earlier run.
    Report {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
    },
    /// Record backend traffic for a run, or play a recording back.
    Replay {
        #[arg(long, value_name = "DIR", conflicts_with = "playback", required_unless_present = "playback")]
        record: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        playback: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    scenario: Option<String>,
    /// Scenario JSON file instead of a built-in name.
    #[arg(long, value_name = "FILE")]
    scenario_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "P")]
    pick_error: Option<f64>,
    #[arg(long, value_name = "P")]
    insert_error: Option<f64>,
    /// Standard deviation of scripted policy noise, meters.
    #[arg(long, value_name = "SIGMA")]
    policy_noise: Option<f64>,
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Skip the VLM loop and run one open-loop scripted policy.
    #[arg(long)]
    no_vlm: bool,
    /// Recorded call log for --backend replay.
    #[arg(long, value_name = "FILE")]
    replay_file: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    template: Option<PathBuf>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    parse_retries: Option<usize>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 60.0)]
    timeout_s: f64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, HarnessError> {
        let file = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let http = match (&self.base_url, &self.model) {
            (Some(base_url), Some(model_name)) => Some(HttpConfig {
                base_url: base_url.clone(),
                model_name: model_name.clone(),
                api_key_env_var: self.api_key_env.clone(),
                timeout_s: self.timeout_s,
                max_retries: self.max_retries,
                backoff_base_ms: 500,
            }),
            (None, None) => None,
            _ => return Err(HarnessError::Config("--base-url and --model go together".into())),
        };
        let flags = RunConfig {
            scenario: self.scenario.clone(),
            scenario_file: self.scenario_file.clone(),
            backend: self.backend,
            trials: self.trials,
            seed: self.seed,
            out: self.out.clone(),
            pick_error: self.pick_error,
            insert_error: self.insert_error,
            policy_noise: self.policy_noise,
            no_vlm: self.no_vlm.then_some(true),
            replay_file: self.replay_file.clone(),
            http,
            template: self.template.clone(),
            max_iterations: self.max_iterations,
            parse_retries: self.parse_retries,
            ..RunConfig::default()
        };
        Ok(file.overlay(flags))
    }
}

fn exit_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Config(_) | HarnessError::Scenario(_) | HarnessError::Template(_) => EXIT_CONFIG,
        HarnessError::Backend(BackendError::InvalidConfig(_)) => EXIT_CONFIG,
        HarnessError::Backend(_) => EXIT_BACKEND,
        HarnessError::Io(_) => EXIT_FAILURE,
    }
}

fn finish(output: &TrialsOutput) -> u8 {
    print!("{}", format_report(std::slice::from_ref(&output.report)));
    if output.has_fatal_backend_error() {
        eprintln!("error: at least one episode ended on a backend failure");
        return EXIT_BACKEND;
    }
    0
}

fn cmd_run(args: &RunArgs) -> Result<u8, HarnessError> {
    let run = args.to_config()?.resolve()?;
    let output = run_trials_with(&run.spec)?;
    if let Some(out) = &run.out {
        write_outputs(out, &output)?;
    }
    Ok(finish(&output))
}

fn cmd_report(dir: &Path) -> Result<u8, HarnessError> {
    let reports = report_from_dir(dir)?;
    print!("{}", format_report(&reports));
    Ok(0)
}

const CALL_LOG: &str = "replay.jsonl";
const RUN_CONFIG: &str = "run.json";

fn cmd_record(dir: &Path, args: &RunArgs) -> Result<u8, HarnessError> {
    let mut config = args.to_config()?;
    config.out = Some(dir.to_path_buf());
    let run = config.resolve()?;
    let recorder = Arc::new(RecordingBackend::new(build_backend(&run.spec.backend)?));
    let output = run_trials_on(&run.spec, recorder.clone(), true)?;
    write_outputs(dir, &output)?;
    recorder.write(&dir.join(CALL_LOG))?;
    let text = serde_json::to_string_pretty(&config).map_err(|e| HarnessError::Config(e.to_string()))?;
    std::fs::write(dir.join(RUN_CONFIG), text)?;
    println!("recorded {} backend calls to {}", recorder.records().len(), dir.join(CALL_LOG).display());
    Ok(finish(&output))
}

fn cmd_playback(file: &Path) -> Result<u8, HarnessError> {
    let dir = file.parent().unwrap_or(Path::new("."));
    let mut config = RunConfig::load(&dir.join(RUN_CONFIG))?;
    config.out = None;
    let mut run = config.resolve()?;
    run.spec.image_dir = None;
    run.spec.backend = BackendConfig::Replay { path: file.to_path_buf() };
    let output = run_trials_with(&run.spec)?;
    if output.has_fatal_backend_error() {
        eprintln!("error: playback diverged from the recording");
        return Ok(EXIT_BACKEND);
    }
    let mut steps = 0;
    for (i, rec) in output.records.iter().enumerate() {
        let path = dir.join("episodes").join(format!("trial_{i:05}.jsonl"));
        let (orig, _) = read_jsonl(std::io::BufReader::new(std::fs::File::open(&path)?))?;
        if orig.step_hashes() != rec.step_hashes() {
            eprintln!("error: trial {i} step hashes differ from {}", path.display());
            return Ok(EXIT_FAILURE);
        }
        steps += rec.steps.len();
    }
    println!("playback reproduced {} episodes, {steps} steps with identical hashes", output.records.len());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Report { input } => cmd_report(input),
        Command::Replay { record: Some(dir), run, .. } => cmd_record(dir, run),
        Command::Replay { playback: Some(file), .. } => cmd_playback(file),
        Command::Replay { .. } => Err(HarnessError::Config("replay needs --record or --playback".into())),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
