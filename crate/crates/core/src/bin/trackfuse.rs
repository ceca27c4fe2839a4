use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trackfuse::backend::serve;
use trackfuse::commands::{cmd_eval, cmd_overlay, cmd_run, cmd_simulate, demo_specs};
use trackfuse::io::{read_json, read_warps, write_json, RunManifest};
use trackfuse::metrics::Aggregation;
use trackfuse::propagation::SyntheticPropagator;
use trackfuse::simulator::NoiseSpec;
use trackfuse::warp::WarpChain;
use trackfuse::{schema, Error, Result};

/// Track-by-detect video instance segmentation: associates per-frame
/// detections into temporally consistent instance masks.
#[derive(Parser)]
#[command(name = "trackfuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Associate detections over a video and write tracked results.
    Run(RunArgs),
    /// Generate a synthetic scenario: ground truth, noisy detections, warps.
    Simulate(SimulateArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Draw predicted instance boundaries over PNG frames.
    Overlay(OverlayArgs),
    /// Answer propagation requests on stdin/stdout using known warps.
    ServeSynthetic(ServeArgs),
    /// Print a JSON schema, or list them.
    Schema { name: Option<String> },
}

#[derive(Args)]
struct RunArgs {
    /// JSON manifest holding all inputs; excludes the other flags.
    #[arg(long, conflicts_with_all = ["detections", "warps", "backend", "config", "gt", "frames", "out", "seed"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Warps JSON Lines file (synthetic propagation).
    #[arg(long)]
    warps: Option<PathBuf>,
    /// Shell command starting a propagation backend.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ground truth; enables metrics.json.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// PNG frames; enables the overlay/ output.
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Recorded in meta.json.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn manifest(self) -> Result<RunManifest> {
        if let Some(p) = self.manifest {
            return RunManifest::load(p);
        }
        let need = |v: Option<PathBuf>, flag: &str| v.ok_or_else(|| Error::Usage(format!("--{flag} is required")));
        Ok(RunManifest {
            detections: need(self.detections, "detections")?,
            out: need(self.out, "out")?,
            warps: self.warps,
            backend: self.backend,
            frames: self.frames,
            config: self.config,
            gt: self.gt,
            seed: self.seed,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, required_unless_present = "demo", conflicts_with = "demo")]
    scenario: Option<PathBuf>,
    /// Noise model; no corruption when absent.
    #[arg(long, conflicts_with = "demo")]
    noise: Option<PathBuf>,
    /// Use the bundled demo scenario and noise model.
    #[arg(long)]
    demo: bool,
    /// Also render PNG frames.
    #[arg(long)]
    frames: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Needed for temporal consistency.
    #[arg(long)]
    warps: Option<PathBuf>,
    /// Average over every frame instead of frames with ground truth.
    #[arg(long)]
    all_frames: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OverlayArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Warps JSON Lines file; identity motion when absent.
    #[arg(long)]
    warps: Option<PathBuf>,
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let out = cmd_run(&args.manifest()?)?;
            eprintln!("trackfuse: {} frames processed", out.result.frames.len());
        }
        Command::Simulate(args) => {
            let (scenario, noise) = if args.demo {
                demo_specs()
            } else {
                let scenario = read_json(args.scenario.as_ref().expect("required by clap"))?;
                let noise = match &args.noise {
                    Some(p) => read_json(p)?,
                    None => NoiseSpec::default(),
                };
                (scenario, noise)
            };
            cmd_simulate(&scenario, &noise, &args.out, args.frames)?;
        }
        Command::Eval(args) => {
            let aggregation = if args.all_frames {
                Aggregation::AllFrames
            } else {
                Aggregation::PositivesOnly
            };
            let report = cmd_eval(&args.pred, &args.gt, args.warps.as_deref(), aggregation)?;
            match &args.out {
                Some(p) => write_json(p, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
            }
        }
        Command::Overlay(args) => {
            let n = cmd_overlay(&args.frames, &args.pred, &args.out)?;
            eprintln!("trackfuse: {n} frames written");
        }
        Command::ServeSynthetic(args) => {
            let chain = match &args.warps {
                Some(p) => read_warps(p)?,
                None => WarpChain::new(),
            };
            let mut p = SyntheticPropagator::new(chain);
            serve(&mut p, std::io::stdin().lock(), std::io::stdout().lock())?;
        }
        Command::Schema { name: None } => {
            for n in schema::names() {
                println!("{n}");
            }
        }
        Command::Schema { name: Some(name) } => {
            let text = schema::get(&name).ok_or_else(|| Error::Usage(format!("unknown schema {name:?}")))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn report(e: &Error) {
    let mut msg = format!("trackfuse: error: {e}");
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(&format!("\n  caused by: {text}"));
        }
        source = s.source();
    }
    eprintln!("{msg}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| execute(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            report(&e);
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(4),
    }
}
