use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use planesweep::config::{self, PipelineConfig};
use planesweep::fusion::FilterMode;
use planesweep::pipeline::{self, SceneDir};
use planesweep::scheduler::Variant;
use planesweep::Result;

#[derive(Parser)]
#[command(name = "planesweep", version, about = "Multi-view plane-sweep depth estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Pipeline config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-stage softmax temperatures, e.g. `5,2.5,1.5,1` or `inf,inf,inf,inf`.
    #[arg(long)]
    temps: Option<String>,
    /// Consistency filter mode.
    #[arg(long)]
    mode: Option<FilterMode>,
}

impl Overrides {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(t) = &self.temps {
            cfg.temperatures = config::parse_temperatures(t)?;
        }
        if let Some(m) = self.mode {
            cfg.filter.mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Estimate depth and confidence maps for one or all reference views.
    Depth {
        #[arg(long)]
        scene: PathBuf,
        /// Reference view id; every listed view when omitted.
        #[arg(long = "ref")]
        reference: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Fuse per-view depth maps into a point cloud.
    Fuse {
        #[arg(long)]
        scene: PathBuf,
        /// Output PLY, default `<scene>/cloud.ply`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print "e2 e4 e8 acc comp overall".
    Eval {
        /// Scene directory holding depth/, gt/, cloud.ply and gt/cloud.ply.
        #[arg(long, conflicts_with_all = ["pred", "gt"])]
        scene: Option<PathBuf>,
        /// Predicted depth PFMs, paired in order with --gt.
        #[arg(long, num_args = 1.., requires_all = ["gt", "pred_cloud", "gt_cloud"])]
        pred: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        gt: Vec<PathBuf>,
        #[arg(long)]
        pred_cloud: Option<PathBuf>,
        #[arg(long)]
        gt_cloud: Option<PathBuf>,
    },
    /// Render a scene spec into a dataset directory.
    Render {
        /// Scene spec file.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit a multi-resolution epoch plan.
    Plan {
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value = "P")]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn eval_scene(dir: &Path) -> Result<planesweep::metrics::MetricsReport> {
    let scene = SceneDir::open(dir)?;
    let pred: Vec<PathBuf> = scene.ids().iter().map(|id| scene.depth_path(id)).collect();
    let gt: Vec<PathBuf> = scene.ids().iter().map(|id| scene.gt_path(id)).collect();
    pipeline::cmd_eval(&pred, &gt, &scene.cloud_path(), &dir.join("gt").join("cloud.ply"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Depth { scene, reference, overrides } => {
            let cfg = overrides.resolve()?;
            match reference {
                Some(id) => pipeline::cmd_depth(&cfg, &scene, &id).map(drop),
                None => pipeline::cmd_depth_all(&cfg, &scene),
            }
        }
        Command::Fuse { scene, out, overrides } => {
            let cfg = overrides.resolve()?;
            let cloud = pipeline::cmd_fuse(&cfg, &scene, out.as_deref())?;
            eprintln!("fused {} points", cloud.len());
            Ok(())
        }
        Command::Eval { scene, pred, gt, pred_cloud, gt_cloud } => {
            let report = match (scene, pred_cloud, gt_cloud) {
                (Some(dir), _, _) => eval_scene(&dir)?,
                (None, Some(pc), Some(gc)) => pipeline::cmd_eval(&pred, &gt, &pc, &gc)?,
                _ => {
                    return Err(planesweep::Error::Config(
                        "eval needs --scene or --pred/--gt/--pred-cloud/--gt-cloud".into(),
                    ))
                }
            };
            println!("{report}");
            Ok(())
        }
        Command::Render { scene, out } => pipeline::cmd_render(&scene, &out),
        Command::Plan { samples, variant, seed, out } => {
            let text = pipeline::cmd_plan(samples, variant, seed)?;
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| planesweep::Error::file(&path, e)),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("planesweep: {e}");
            ExitCode::FAILURE
        }
    }
}
