//! Window scheduling and the end-to-end video driver.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::assignment::match_track_seg;
use crate::error::{Error, Result};
use crate::iaf::{run_iaf, IafParams};
use crate::mask::{Mask, Segment, SegmentSet};
use crate::memory::{refine, track_reference, track_window_remainder, MemoryBank, RefineInput, RefineParams};
use crate::propagation::{MemoryEntry, Propagator, TrackId};

/// Engine configuration. JSON keys match the field names, with `T` for the
/// window length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    #[serde(rename = "T")]
    pub window: usize,
    pub theta: f64,
    pub lambda1: u32,
    pub lambda2: u32,
    pub matched_iou_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_frames: Option<usize>,
    pub render_missed: bool,
    /// Ablation: feed raw reference-frame detections to the refinement stage.
    pub disable_iaf: bool,
    /// Ablation: emit each window's filtered detections with no memory across windows.
    pub disable_iar: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            window: 3,
            theta: 0.5,
            lambda1: 1,
            lambda2: 3,
            matched_iou_min: 0.0,
            min_frames: None,
            render_missed: false,
            disable_iaf: false,
            disable_iar: false,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.window < 1 {
            return bad("T must be at least 1".into());
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta must lie in (0,1), got {}", self.theta));
        }
        if self.lambda1 < 1 || self.lambda2 < 1 {
            return bad("lambda1 and lambda2 must be at least 1".into());
        }
        if !(self.matched_iou_min >= 0.0 && self.matched_iou_min.is_finite()) {
            return bad(format!("matched_iou_min must be >= 0, got {}", self.matched_iou_min));
        }
        if let Some(m) = self.min_frames {
            if m < 1 || m > self.window {
                return bad(format!("min_frames must lie in [1, T], got {m}"));
            }
        }
        Ok(())
    }

    fn iaf(&self) -> IafParams {
        IafParams {
            theta: self.theta,
            min_frames: self.min_frames,
        }
    }

    fn refine(&self) -> RefineParams {
        RefineParams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            theta: self.theta,
            render_missed: self.render_missed,
        }
    }
}

/// Consecutive, disjoint windows of length `window`; the last holds the remainder.
pub fn schedule_windows(num_frames: usize, window: usize) -> Vec<Range<usize>> {
    let window = window.max(1);
    (0..num_frames)
        .step_by(window)
        .map(|s| s..(s + window).min(num_frames))
        .collect()
}

/// Streaming driver for one video. Frames are pushed in order; each completed
/// window yields its per-frame results.
pub struct Tracker<P> {
    config: Config,
    propagator: P,
    bank: MemoryBank,
    pending: Vec<SegmentSet>,
    next_frame: usize,
    window_index: usize,
    // ids handed out when memory is disabled
    ablation_next_id: TrackId,
}

impl<P: Propagator> Tracker<P> {
    pub fn new(config: Config, propagator: P) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            propagator,
            bank: MemoryBank::new(),
            pending: Vec::new(),
            next_frame: 0,
            window_index: 0,
            ablation_next_id: 0,
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    pub fn propagator_mut(&mut self) -> &mut P {
        &mut self.propagator
    }

    pub fn into_parts(self) -> (MemoryBank, P) {
        (self.bank, self.propagator)
    }

    /// Frames consumed so far.
    pub fn frames_seen(&self) -> usize {
        self.next_frame
    }

    /// Adds the detections of the next frame. Returns the finished window's
    /// results once the window is full, otherwise an empty list.
    pub fn push(&mut self, detections: SegmentSet) -> Result<Vec<SegmentSet>> {
        if detections.frame != self.next_frame {
            return Err(Error::InvalidConfig(format!(
                "expected detections for frame {}, got frame {}",
                self.next_frame, detections.frame
            )));
        }
        detections.validate()?;
        self.next_frame += 1;
        self.pending.push(detections);
        if self.pending.len() == self.config.window {
            self.flush()
        } else {
            Ok(Vec::new())
        }
    }

    /// Processes a partially filled final window.
    pub fn finish(&mut self) -> Result<Vec<SegmentSet>> {
        self.flush()
    }

    fn flush(&mut self) -> Result<Vec<SegmentSet>> {
        if self.pending.is_empty() {
            return Ok(Vec::new());
        }
        let dets = std::mem::take(&mut self.pending);
        let ref_frame = dets[0].frame;
        let out = self.process_window(&dets).map_err(|e| Error::Window {
            frame: ref_frame,
            source: Box::new(e),
        })?;
        self.window_index += 1;
        Ok(out)
    }

    fn process_window(&mut self, dets: &[SegmentSet]) -> Result<Vec<SegmentSet>> {
        let frames: Vec<usize> = dets.iter().map(|d| d.frame).collect();
        let ref_frame = frames[0];
        let segs = if self.config.disable_iaf {
            dets[0].clone()
        } else {
            run_iaf(&frames, dets, &mut self.propagator, &self.config.iaf())?
        };
        if self.config.disable_iar {
            return self.emit_without_memory(&frames, segs);
        }

        let tracks = track_reference(&self.bank, ref_frame, &mut self.propagator)?;
        let track_masks: Vec<Mask> = tracks.values().cloned().collect();
        let seg_masks: Vec<Mask> = segs.masks().cloned().collect();
        let matching = match_track_seg(&track_masks, &seg_masks, self.config.matched_iou_min)?;
        let (refined, bank) = refine(
            &self.bank,
            RefineInput {
                tracks: &tracks,
                segs: &segs,
                matching: &matching,
                window: self.window_index,
                ref_frame,
            },
            &mut self.propagator,
            &self.config.refine(),
        )?;
        self.bank = bank;
        let ids = refined.keys().copied().collect();
        let rest = track_window_remainder(&self.bank, &ids, &frames[1..], &mut self.propagator)?;

        let mut out = vec![to_segment_set(ref_frame, refined)];
        out.extend(frames[1..].iter().zip(rest).map(|(&f, m)| to_segment_set(f, m)));
        Ok(out)
    }

    fn emit_without_memory(&mut self, frames: &[usize], segs: SegmentSet) -> Result<Vec<SegmentSet>> {
        let ref_frame = frames[0];
        let mut by_id = BTreeMap::new();
        for m in segs.masks() {
            by_id.insert(self.ablation_next_id, m.clone());
            self.ablation_next_id += 1;
        }
        let entries: Vec<MemoryEntry> = by_id
            .iter()
            .map(|(&id, m)| MemoryEntry {
                frame: ref_frame,
                id,
                mask: m.clone(),
            })
            .collect();
        let mut out = vec![to_segment_set(ref_frame, by_id)];
        for &f in &frames[1..] {
            let masks = if entries.is_empty() {
                BTreeMap::new()
            } else {
                let raw = self.propagator.propagate(&entries, f)?;
                let (ids, masks): (Vec<_>, Vec<_>) = raw.into_iter().unzip();
                let ranks: Vec<usize> = (0..masks.len()).collect();
                ids.into_iter()
                    .zip(crate::mask::enforce_nonoverlap(&masks, &ranks)?)
                    .collect()
            };
            out.push(to_segment_set(f, masks));
        }
        Ok(out)
    }
}

fn to_segment_set(frame: usize, masks: BTreeMap<TrackId, Mask>) -> SegmentSet {
    SegmentSet {
        frame,
        segments: masks
            .into_iter()
            .filter(|(_, m)| !m.is_empty())
            .map(|(id, m)| Segment::with_id(m, id))
            .collect(),
    }
}

/// Provenance recorded next to every result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: Config,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: String,
    pub num_frames: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoResult {
    pub frames: Vec<SegmentSet>,
    pub bank: MemoryBank,
    pub meta: RunMeta,
}

/// Runs the whole video. `detections[i]` must describe frame `i`.
pub fn run_video<P: Propagator>(
    detections: &[SegmentSet],
    propagator: P,
    config: &Config,
    seed: Option<u64>,
) -> Result<VideoResult> {
    let mut tracker = Tracker::new(config.clone(), propagator)?;
    let mut frames = Vec::with_capacity(detections.len());
    for d in detections {
        frames.extend(tracker.push(d.clone())?);
    }
    frames.extend(tracker.finish()?);
    let (bank, _) = tracker.into_parts();
    Ok(VideoResult {
        meta: RunMeta {
            config: config.clone(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            num_frames: frames.len(),
        },
        frames,
        bank,
    })
}
