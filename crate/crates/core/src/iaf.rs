//! Intra-window association filtering.
//!
//! Detections of every frame in a window are aligned onto the window's first
//! frame, grouped into tracklets of mutually overlapping segments (one per
//! frame), and each tracklet is reduced to its most agreed-upon member.
//! Segments that do not recur across the window are discarded.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::mask::{enforce_nonoverlap, Mask, Segment, SegmentSet};
use crate::propagation::{alignment_error, Propagator};

/// A detection expressed in reference-frame coordinates, with its sort keys.
#[derive(Clone, Debug, PartialEq)]
pub struct SortedSegment {
    pub mask: Mask,
    pub source_frame: usize,
    pub frame_distance: usize,
    pub area: u64,
    pub original_index: usize,
    pub score: Option<f64>,
}

/// Sort positions of the members of one tracklet, ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tracklet {
    pub members: Vec<usize>,
}

impl Tracklet {
    pub fn member_frames(&self, segments: &[SortedSegment]) -> BTreeSet<usize> {
        self.members.iter().map(|&m| segments[m].source_frame).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IafParams {
    /// Pairing threshold; a pair needs IoU strictly above it.
    pub theta: f64,
    /// Frames a tracklet must span. `None` means the whole window.
    pub min_frames: Option<usize>,
}

impl Default for IafParams {
    fn default() -> Self {
        Self {
            theta: 0.5,
            min_frames: None,
        }
    }
}

/// Orders by temporal proximity to `ref_frame`, then by area (largest first),
/// then by `(source_frame, original_index)`.
pub fn sort_segments(aligned_sets: &[SegmentSet], ref_frame: usize) -> Vec<SortedSegment> {
    let mut out: Vec<SortedSegment> = aligned_sets
        .iter()
        .flat_map(|set| {
            set.segments.iter().enumerate().map(move |(i, s)| SortedSegment {
                area: s.mask.area(),
                mask: s.mask.clone(),
                source_frame: set.frame,
                frame_distance: set.frame.abs_diff(ref_frame),
                original_index: i,
                score: s.score,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        a.frame_distance
            .cmp(&b.frame_distance)
            .then(b.area.cmp(&a.area))
            .then(a.source_frame.cmp(&b.source_frame))
            .then(a.original_index.cmp(&b.original_index))
    });
    out
}

/// Symmetric pairwise IoU matrix.
pub fn pair_matrix(segments: &[SortedSegment]) -> Result<Vec<Vec<f64>>> {
    let n = segments.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = segments[i].mask.iou(&segments[i].mask)?;
        for j in i + 1..n {
            let v = segments[i].mask.iou(&segments[j].mask)?;
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    Ok(a)
}

/// Greedy tracklet construction in sort order.
///
/// Each unconsumed candidate takes, from every other window frame, the
/// unconsumed segment it overlaps most (IoU strictly above `theta`, ties to the
/// earlier sort position). The group becomes a tracklet only if it covers at
/// least `required` frames; its members are then consumed.
pub fn build_tracklets(
    segments: &[SortedSegment],
    a: &[Vec<f64>],
    theta: f64,
    window_frames: &[usize],
    required: usize,
) -> Vec<Tracklet> {
    let mut consumed = vec![false; segments.len()];
    let mut tracklets = Vec::new();
    for i in 0..segments.len() {
        if consumed[i] {
            continue;
        }
        let own = segments[i].source_frame;
        let mut members = vec![i];
        for &f in window_frames.iter().filter(|&&f| f != own) {
            let mut best: Option<usize> = None;
            for j in 0..segments.len() {
                if j == i || consumed[j] || segments[j].source_frame != f || a[i][j] <= theta {
                    continue;
                }
                if best.is_none_or(|b| a[i][j] > a[i][b]) {
                    best = Some(j);
                }
            }
            members.extend(best);
        }
        if members.len() >= required {
            members.sort_unstable();
            for &m in &members {
                consumed[m] = true;
            }
            tracklets.push(Tracklet { members });
        }
    }
    tracklets
}

/// Member with the largest summed IoU to the other members; ties go to the
/// earliest sort position.
pub fn vote(tracklet: &Tracklet, a: &[Vec<f64>]) -> usize {
    let mut best = tracklet.members[0];
    let mut best_sum = f64::NEG_INFINITY;
    for &k in &tracklet.members {
        let sum: f64 = tracklet.members.iter().filter(|&&l| l != k).map(|&l| a[k][l]).sum();
        if sum > best_sum {
            best = k;
            best_sum = sum;
        }
    }
    best
}

/// Filters a window of detections down to the segments that recur across it,
/// expressed on the window's first (reference) frame.
pub fn run_iaf<P: Propagator + ?Sized>(
    window_frames: &[usize],
    detections: &[SegmentSet],
    propagator: &mut P,
    params: &IafParams,
) -> Result<SegmentSet> {
    if window_frames.is_empty() || window_frames.len() != detections.len() {
        return Err(Error::InvalidConfig(format!(
            "{} window frames but {} detection sets",
            window_frames.len(),
            detections.len()
        )));
    }
    for (f, d) in window_frames.iter().zip(detections) {
        if *f != d.frame {
            return Err(Error::InvalidConfig(format!(
                "detections for frame {} supplied at window frame {f}",
                d.frame
            )));
        }
    }
    let ref_frame = window_frames[0];
    if window_frames.len() == 1 {
        return Ok(detections[0].clone());
    }

    let mut aligned = Vec::with_capacity(detections.len());
    aligned.push(detections[0].clone());
    for d in &detections[1..] {
        let masks: Vec<Mask> = d.masks().cloned().collect();
        let warped = if masks.is_empty() {
            Vec::new()
        } else {
            propagator
                .align(&masks, d.frame, ref_frame)
                .map_err(|e| alignment_error(d.frame, ref_frame, e))?
        };
        if warped.len() != masks.len() {
            return Err(alignment_error(
                d.frame,
                ref_frame,
                Error::Backend(format!("{} masks aligned from {} inputs", warped.len(), masks.len())),
            ));
        }
        aligned.push(SegmentSet {
            frame: d.frame,
            segments: d
                .segments
                .iter()
                .zip(warped)
                .map(|(s, mask)| Segment {
                    id: None,
                    score: s.score,
                    mask,
                })
                .collect(),
        });
    }

    let sorted = sort_segments(&aligned, ref_frame);
    let a = pair_matrix(&sorted)?;
    let required = params
        .min_frames
        .unwrap_or(window_frames.len())
        .clamp(1, window_frames.len());
    let tracklets = build_tracklets(&sorted, &a, params.theta, window_frames, required);

    let voted: Vec<&SortedSegment> = tracklets.iter().map(|t| &sorted[vote(t, &a)]).collect();
    let masks: Vec<Mask> = voted.iter().map(|s| s.mask.clone()).collect();
    let priority: Vec<usize> = (0..masks.len()).collect();
    let disjoint = enforce_nonoverlap(&masks, &priority)?;
    Ok(SegmentSet {
        frame: ref_frame,
        segments: disjoint
            .into_iter()
            .zip(voted)
            .filter(|(m, _)| !m.is_empty())
            .map(|(mask, s)| Segment {
                id: None,
                score: s.score,
                mask,
            })
            .collect(),
    })
}
