//! Segmentation and detection scores.
//!
//! Segmentation scores flatten all instances of a frame into one foreground
//! mask. Detection scores work per instance on tightest bounding boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{BBox, Mask, SegmentSet};
use crate::warp::WarpChain;

/// Dice coefficient; two empty masks score 1.
pub fn frame_dice(pred: &Mask, gt: &Mask) -> Result<f64> {
    let inter = pred.intersection_area(gt)?;
    let total = pred.area() + gt.area();
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    })
}

/// Foreground IoU for semantic scoring; two empty masks score 1.
pub fn frame_iou(pred: &Mask, gt: &Mask) -> Result<f64> {
    if pred.is_empty() && gt.is_empty() {
        pred.check_dims(gt)?;
        return Ok(1.0);
    }
    pred.iou(gt)
}

/// Fraction of pixels where the two binary maps disagree.
pub fn mae(pred: &Mask, gt: &Mask) -> Result<f64> {
    let inter = pred.intersection_area(gt)?;
    let diff = pred.area() + gt.area() - 2 * inter;
    Ok(diff as f64 / (pred.width() as f64 * pred.height() as f64))
}

/// Mean Dice between each prediction warped onto the next frame and that
/// frame's prediction. `None` for fewer than two frames.
pub fn temporal_consistency(preds: &[Mask], warps: &WarpChain, first_frame: usize) -> Result<Option<f64>> {
    if preds.len() < 2 {
        return Ok(None);
    }
    let mut sum = 0.0;
    for (k, pair) in preds.windows(2).enumerate() {
        let f = first_frame + k;
        let moved = warps.warp_mask(&pair[0], f, f + 1)?;
        sum += frame_dice(&moved, &pair[1])?;
    }
    Ok(Some(sum / (preds.len() - 1) as f64))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Average only over frames whose ground truth is non-empty.
    #[default]
    PositivesOnly,
    AllFrames,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub dice: f64,
    pub iou: f64,
    pub mae: f64,
    pub tc: Option<f64>,
    pub frames_evaluated: usize,
}

/// Semantic scores of a predicted video against ground truth.
///
/// With [`Aggregation::PositivesOnly`] and no positive frame at all, every
/// frame is averaged instead. TC covers every consecutive pair and needs
/// the warps; it is `None` without them.
pub fn segmentation_scores(
    pred: &[SegmentSet],
    gt: &[SegmentSet],
    warps: Option<&WarpChain>,
    width: u32,
    height: u32,
    aggregation: Aggregation,
) -> Result<SegScores> {
    check_lengths(pred, gt)?;
    let p: Vec<Mask> = pred.iter().map(|s| s.semantic(width, height)).collect::<Result<_>>()?;
    let g: Vec<Mask> = gt.iter().map(|s| s.semantic(width, height)).collect::<Result<_>>()?;
    let mut picked: Vec<usize> = match aggregation {
        Aggregation::PositivesOnly => (0..g.len()).filter(|&i| !g[i].is_empty()).collect(),
        Aggregation::AllFrames => (0..g.len()).collect(),
    };
    if picked.is_empty() {
        picked = (0..g.len()).collect();
    }
    let n = picked.len().max(1) as f64;
    let (mut dice, mut iou, mut err) = (0.0, 0.0, 0.0);
    for &i in &picked {
        dice += frame_dice(&p[i], &g[i])?;
        iou += frame_iou(&p[i], &g[i])?;
        err += mae(&p[i], &g[i])?;
    }
    let first = pred.first().map_or(0, |s| s.frame);
    Ok(SegScores {
        dice: dice / n,
        iou: iou / n,
        mae: err / n,
        tc: match warps {
            Some(w) => temporal_consistency(&p, w, first)?,
            None => None,
        },
        frames_evaluated: picked.len(),
    })
}

fn check_lengths(pred: &[SegmentSet], gt: &[SegmentSet]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidConfig(format!(
            "{} predicted frames vs {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    if let Some((p, g)) = pred.iter().zip(gt).find(|(p, g)| p.frame != g.frame) {
        return Err(Error::InvalidConfig(format!(
            "frame index mismatch: prediction {} vs ground truth {}",
            p.frame, g.frame
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetScores {
    pub f1_50: f64,
    pub ap_50: f64,
    pub ap_50_95: f64,
}

struct Candidate {
    frame: usize,
    index: usize,
    score: f64,
    best_iou: f64,
    bbox: BBox,
}

/// Per-rank true-positive flags at IoU threshold `tau`, in ranking order.
fn rank_hits(ranked: &[Candidate], gt_boxes: &[Vec<BBox>], tau: f64) -> Vec<bool> {
    let mut taken: Vec<Vec<bool>> = gt_boxes.iter().map(|g| vec![false; g.len()]).collect();
    ranked
        .iter()
        .map(|c| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gt_boxes[c.frame].iter().enumerate() {
                let v = c.bbox.iou(g);
                if !taken[c.frame][j] && v >= tau && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                taken[c.frame][j] = true;
                true
            } else {
                false
            }
        })
        .collect()
}

/// All-point interpolated average precision.
fn average_precision(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return if hits.is_empty() { 1.0 } else { 0.0 };
    }
    let mut tp = 0usize;
    let precision: Vec<f64> = hits
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            tp += h as usize;
            tp as f64 / (k + 1) as f64
        })
        .collect();
    let mut envelope = precision.clone();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    // Divide once: summing many p/n terms can overshoot 1.
    let total: f64 = hits.iter().zip(&envelope).filter(|(h, _)| **h).map(|(_, p)| p).sum();
    total / num_gt as f64
}

fn f1(hits: &[bool], num_gt: usize) -> f64 {
    let tp = hits.iter().filter(|h| **h).count();
    let fp = hits.len() - tp;
    let fn_ = num_gt - tp;
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Box-level F1 at IoU 0.5 and AP at 0.5 and averaged over 0.50:0.05:0.95.
///
/// Predictions are ranked by score (descending), then by their best IoU with
/// any ground-truth box of their frame (descending). Each prediction in turn
/// claims the unclaimed ground-truth box it overlaps most at IoU >= the threshold.
pub fn detection_scores(pred: &[SegmentSet], gt: &[SegmentSet]) -> Result<DetScores> {
    check_lengths(pred, gt)?;
    let gt_boxes: Vec<Vec<BBox>> = gt
        .iter()
        .map(|s| s.masks().filter_map(Mask::tightest_bbox).collect())
        .collect();
    let num_gt: usize = gt_boxes.iter().map(Vec::len).sum();
    let mut ranked: Vec<Candidate> = Vec::new();
    for (f, set) in pred.iter().enumerate() {
        for (i, seg) in set.segments.iter().enumerate() {
            let Some(bbox) = seg.mask.tightest_bbox() else { continue };
            let best_iou = gt_boxes[f].iter().map(|g| bbox.iou(g)).fold(0.0, f64::max);
            ranked.push(Candidate {
                frame: f,
                index: i,
                score: seg.score(),
                best_iou,
                bbox,
            });
        }
    }
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.best_iou.total_cmp(&a.best_iou))
            .then(a.frame.cmp(&b.frame))
            .then(a.index.cmp(&b.index))
    });
    let hits50 = rank_hits(&ranked, &gt_boxes, 0.5);
    let ap_50 = average_precision(&hits50, num_gt);
    let ap_50_95 = (0..10)
        .map(|i| {
            let tau = (50 + 5 * i) as f64 / 100.0;
            average_precision(&rank_hits(&ranked, &gt_boxes, tau), num_gt)
        })
        .sum::<f64>()
        / 10.0;
    Ok(DetScores {
        f1_50: f1(&hits50, num_gt),
        ap_50,
        ap_50_95,
    })
}

/// Predicted instances whose best mask IoU with any ground-truth instance of
/// the same frame is below `min_iou`.
pub fn false_positive_instances(pred: &[SegmentSet], gt: &[SegmentSet], min_iou: f64) -> Result<usize> {
    check_lengths(pred, gt)?;
    let mut count = 0;
    for (p, g) in pred.iter().zip(gt) {
        for m in p.masks() {
            let mut best = 0.0f64;
            for t in g.masks() {
                best = best.max(m.iou(t)?);
            }
            if best < min_iou {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Instance-IoU threshold below which a predicted instance counts as spurious.
pub const FALSE_POSITIVE_IOU: f64 = 0.5;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Flat evaluation report written by `trackfuse eval` and `trackfuse run`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub aggregation: Aggregation,
    pub num_frames: usize,
    pub segmentation: SegScores,
    pub detection: DetScores,
    pub false_positive_instances: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<crate::pipeline::Config>,
}

pub fn evaluate(
    pred: &[SegmentSet],
    gt: &[SegmentSet],
    warps: Option<&WarpChain>,
    width: u32,
    height: u32,
    aggregation: Aggregation,
) -> Result<EvalReport> {
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        aggregation,
        num_frames: gt.len(),
        segmentation: segmentation_scores(pred, gt, warps, width, height, aggregation)?,
        detection: detection_scores(pred, gt)?,
        false_positive_instances: false_positive_instances(pred, gt, FALSE_POSITIVE_IOU)?,
        config: None,
    })
}
