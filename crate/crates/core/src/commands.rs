//! The operations behind each CLI subcommand, usable as a library.

use std::path::Path;

use image::{Rgba, RgbaImage};

use crate::backend::ExternalPropagator;
use crate::error::{Error, Result};
use crate::io::{
    read_json, read_segment_sets, read_warps, video_dims, write_json, write_segment_sets, write_warps, RunManifest,
};
use crate::mask::SegmentSet;
use crate::metrics::{evaluate, Aggregation, EvalReport};
use crate::pipeline::{run_video, Config, VideoResult};
use crate::propagation::{Propagator, SyntheticPropagator};
use crate::simulator::{corrupt, generate_ground_truth, NoiseSpec, ScenarioSpec};
use crate::warp::WarpChain;

pub const RESULTS_FILE: &str = "results.jsonl";
pub const META_FILE: &str = "meta.json";
pub const BANK_FILE: &str = "bank.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const OVERLAY_DIR: &str = "overlay";

pub const GT_FILE: &str = "gt.jsonl";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const WARPS_FILE: &str = "warps.jsonl";
pub const FRAMES_DIR: &str = "frames";

pub const DEMO_SCENARIO: &str = include_str!("../data/demo_scenario.json");
pub const DEMO_NOISE: &str = include_str!("../data/demo_noise.json");

pub struct RunOutput {
    pub result: VideoResult,
    pub metrics: Option<EvalReport>,
}

/// Runs the engine on a manifest and writes `results.jsonl`, `meta.json`,
/// `bank.json`, plus `metrics.json` when ground truth is given and an
/// `overlay/` directory when frames are given.
pub fn cmd_run(manifest: &RunManifest) -> Result<RunOutput> {
    manifest.validate()?;
    let config: Config = match &manifest.config {
        Some(p) => read_json(p)?,
        None => Config::default(),
    };
    config.validate()?;
    let detections = read_segment_sets(&manifest.detections)?;
    let chain = manifest.warps.as_ref().map(read_warps).transpose()?;
    let propagator: Box<dyn Propagator> = match (&chain, &manifest.backend) {
        (Some(c), _) => Box::new(SyntheticPropagator::new(c.clone())),
        (None, Some(cmd)) => Box::new(ExternalPropagator::spawn(cmd)?),
        (None, None) => unreachable!("validated"),
    };
    let result = run_video(&detections, propagator, &config, manifest.seed)?;

    let out = &manifest.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_segment_sets(out.join(RESULTS_FILE), &result.frames)?;
    write_json(out.join(META_FILE), &result.meta)?;
    write_json(out.join(BANK_FILE), &result.bank.snapshot())?;

    let metrics = match &manifest.gt {
        None => None,
        Some(gt_path) => {
            let gt = read_segment_sets(gt_path)?;
            let mut report = evaluate_sets(&result.frames, &gt, chain.as_ref(), Aggregation::PositivesOnly)?;
            report.config = Some(config.clone());
            write_json(out.join(METRICS_FILE), &report)?;
            Some(report)
        }
    };
    if let Some(frames) = &manifest.frames {
        crate::overlay::render(frames, &result.frames, out.join(OVERLAY_DIR))?;
    }
    Ok(RunOutput { result, metrics })
}

fn evaluate_sets(
    pred: &[SegmentSet],
    gt: &[SegmentSet],
    warps: Option<&WarpChain>,
    aggregation: Aggregation,
) -> Result<EvalReport> {
    let (w, h) = match (video_dims(pred), video_dims(gt)) {
        (Some(p), Some(g)) if p != g => {
            return Err(Error::DimensionMismatch(p.0, p.1, g.0, g.1));
        }
        (Some(d), _) | (None, Some(d)) => d,
        (None, None) => (1, 1),
    };
    evaluate(pred, gt, warps, w, h, aggregation)
}

/// Scores a prediction file against a ground-truth file. Without warps the
/// temporal consistency is left out.
pub fn cmd_eval(pred: &Path, gt: &Path, warps: Option<&Path>, aggregation: Aggregation) -> Result<EvalReport> {
    let pred = read_segment_sets(pred)?;
    let gt = read_segment_sets(gt)?;
    let chain = warps.map(read_warps).transpose()?;
    evaluate_sets(&pred, &gt, chain.as_ref(), aggregation)
}

/// Writes `gt.jsonl`, `detections.jsonl` and `warps.jsonl`; with
/// `render_frames`, also one PNG per frame under `frames/`.
pub fn cmd_simulate(scenario: &ScenarioSpec, noise: &NoiseSpec, out: &Path, render_frames: bool) -> Result<()> {
    noise.validate()?;
    let gt = generate_ground_truth(scenario)?;
    let detections = corrupt(&gt.frames, noise, scenario.width, scenario.height)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_segment_sets(out.join(GT_FILE), &gt.frames)?;
    write_segment_sets(out.join(DETECTIONS_FILE), &detections)?;
    write_warps(out.join(WARPS_FILE), &WarpChain::from_warps(gt.warps.iter().copied())?)?;
    if render_frames {
        let dir = out.join(FRAMES_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for set in &gt.frames {
            let mut img = RgbaImage::from_pixel(scenario.width, scenario.height, Rgba([40, 32, 30, 255]));
            for m in set.masks() {
                let b = m.decode();
                for (i, _) in b.as_slice().iter().enumerate().filter(|(_, v)| **v) {
                    let (x, y) = (i as u32 % scenario.width, i as u32 / scenario.width);
                    img.put_pixel(x, y, Rgba([190, 110, 100, 255]));
                }
            }
            let p = dir.join(format!("frame_{:05}.png", set.frame));
            img.save_with_format(&p, image::ImageFormat::Png)
                .map_err(|e| Error::Image(format!("{}: {e}", p.display())))?;
        }
    }
    Ok(())
}

pub fn demo_specs() -> (ScenarioSpec, NoiseSpec) {
    (
        serde_json::from_str(DEMO_SCENARIO).expect("bundled scenario parses"),
        serde_json::from_str(DEMO_NOISE).expect("bundled noise parses"),
    )
}

pub fn cmd_overlay(frames: &Path, pred: &Path, out: &Path) -> Result<usize> {
    let preds = read_segment_sets(pred)?;
    crate::overlay::render(frames, &preds, out)
}
