//! Argument handling for the `tsgf` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tsgf::config::{PipelineConfig, Preset};
use tsgf::datasets::InitMethod;
use tsgf::eval::AblationSuite;
use tsgf::pipeline::Pipeline;
use tsgf::saliency::EpsilonRule;
use tsgf::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "tsgf", version, about = "Saliency-guided video dataset distillation on toy data")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,

    /// Log at debug level (repeat for trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

/// Settings that override the config file, which overrides the preset.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Pipeline config file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Built-in defaults used for anything the config file leaves out.
    #[arg(long, global = true, default_value = "default")]
    pub preset: String,

    /// Run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Global seed; every stage seed derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Disable saliency-masked updates during distillation.
    #[arg(long, global = true)]
    pub no_tsgf_o: bool,

    /// Disable saliency-gated augmentation.
    #[arg(long, global = true)]
    pub no_tsgf_a: bool,

    /// Synthetic initialization: real or noise.
    #[arg(long, global = true)]
    pub init: Option<String>,

    /// Synthetic videos per class.
    #[arg(long, global = true)]
    pub ipc: Option<usize>,

    /// Saliency threshold quantile.
    #[arg(long, global = true)]
    pub epsilon_q: Option<f64>,

    /// Saliency window length (past frames).
    #[arg(long, global = true)]
    pub window_k: Option<usize>,

    /// Distillation iterations.
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the toy dataset splits.
    GenData,
    /// Train the teacher on the real train split.
    TrainTeacher,
    /// Distill a synthetic set against the teacher.
    Distill,
    /// Train students on the distilled set and score them on the test split.
    Evaluate {
        /// Also evaluate a random real selection of the same size.
        #[arg(long)]
        baseline: bool,
    },
    /// Run ablation suites (all configured suites when none are named).
    Ablate {
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
    /// Print frame_index,d,s,M rows and the threshold for selected videos.
    InspectSaliency {
        /// A tensor file holding one [T, C, H, W] video.
        #[arg(long)]
        video: Option<PathBuf>,
        /// Sample ids from the distilled set or the splits.
        #[arg(long = "id")]
        ids: Vec<String>,
    },
    /// gen-data, train-teacher, distill and evaluate in one go.
    RunAll,
    /// Print the effective configuration.
    ShowConfig,
}

impl Overrides {
    /// Preset, then config file, then flags.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let preset: Preset = self.preset.parse()?;
        let mut cfg = match &self.config {
            Some(path) => {
                let base = serde_json::to_value(PipelineConfig::preset(preset)).expect("config serializes");
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let file: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
                serde_json::from_value(merge(base, file)).map_err(|e| Error::json(path, e))?
            }
            None => PipelineConfig::preset(preset),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.no_tsgf_o {
            cfg.distill.tsgf_o = false;
        }
        if self.no_tsgf_a {
            cfg.distill.tsgf_a = false;
            cfg.eval.augment = tsgf::eval::StudentAugment::None;
        }
        if let Some(init) = &self.init {
            cfg.distill.init = init.parse::<InitMethod>()?;
        }
        if let Some(ipc) = self.ipc {
            cfg.distill.ipc = ipc;
        }
        if let Some(q) = self.epsilon_q {
            cfg.distill.epsilon = EpsilonRule::Quantile(q);
            cfg.eval.epsilon = EpsilonRule::Quantile(q);
        }
        if let Some(k) = self.window_k {
            cfg.distill.window.k = k;
            cfg.eval.window.k = k;
        }
        if let Some(k) = self.iterations {
            cfg.distill.iterations = k;
        }
        Ok(cfg)
    }
}

/// Recursively overlays `top` onto `base`: objects merge key by key,
/// anything else in `top` replaces `base`.
fn merge(base: serde_json::Value, top: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match (base, top) {
        (Value::Object(mut b), Value::Object(t)) => {
            for (k, v) in t {
                let merged = match b.remove(&k) {
                    Some(old) => merge(old, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            Value::Object(b)
        }
        (_, top) => top,
    }
}

/// Exit status for a failed command: 2 for internal invariant violations,
/// 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_user_error() {
        1
    } else {
        2
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.overrides.resolve()?;
    if let Command::ShowConfig = cli.command {
        println!("{}", serde_json::to_string_pretty(&cfg.resolved()).expect("config serializes"));
        return Ok(());
    }
    let p = Pipeline::new(&cfg)?;
    match &cli.command {
        Command::GenData => {
            p.gen_data()?;
        }
        Command::TrainTeacher => {
            let (_, report) = p.train_teacher()?;
            println!("teacher test accuracy {:.4}", report.test_accuracy);
        }
        Command::Distill => {
            let out = p.distill()?;
            println!("distilled {} videos into {}", out.dataset.len(), p.layout.distilled().display());
        }
        Command::Evaluate { baseline } => {
            for r in p.evaluate(*baseline)? {
                println!("{}", r.summary());
            }
        }
        Command::Ablate { suites } => {
            let suites: Vec<AblationSuite> = if suites.is_empty() {
                p.cfg.ablation.suites.clone()
            } else {
                suites.iter().map(|s| s.parse()).collect::<Result<_>>()?
            };
            for t in p.ablate(&suites)? {
                print!("{}", t.summary());
            }
        }
        Command::InspectSaliency { video, ids } => {
            for (id, profile) in p.inspect_saliency(video.as_deref(), ids)? {
                println!("# {id}");
                print!("{}", profile.to_csv());
            }
        }
        Command::RunAll => {
            for r in p.run_all()? {
                println!("{}", r.summary());
            }
        }
        Command::ShowConfig => unreachable!(),
    }
    Ok(())
}
