//! Cross-window refinement of tracked masks and the memory-bank lifecycle.
//!
//! On each window's reference frame the tracked masks are matched against the
//! filtered detections. Matched pairs are merged, unmatched detections become
//! candidates that must recur for `lambda1` consecutive windows before they
//! receive an identity, and trajectories that go unmatched for `lambda2`
//! consecutive windows are removed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment::Matching;
use crate::error::{Error, Result};
use crate::mask::{enforce_nonoverlap, Mask, SegmentSet};
use crate::propagation::{MemoryEntry, Propagator, TrackId};

pub const BANK_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: TrackId,
    pub latest_mask: Mask,
    pub latest_frame: usize,
    /// Consecutive windows without a match.
    pub miss_count: u32,
}

impl Trajectory {
    fn entry(&self) -> MemoryEntry {
        MemoryEntry {
            frame: self.latest_frame,
            id: self.id,
            mask: self.latest_mask.clone(),
        }
    }
}

/// An unconfirmed detection waiting to recur.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewCandidate {
    pub mask: Mask,
    pub frame: usize,
    pub first_window: usize,
    /// Consecutive windows it has been observed in.
    pub hit_count: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MemoryBank {
    trajectories: BTreeMap<TrackId, Trajectory>,
    candidates: Vec<NewCandidate>,
    next_id: TrackId,
}

/// Versioned JSON form of a [`MemoryBank`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankSnapshot {
    pub schema_version: u32,
    pub next_id: TrackId,
    pub trajectories: Vec<Trajectory>,
    pub candidates: Vec<NewCandidate>,
}

impl MemoryBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.values()
    }

    pub fn trajectory(&self, id: TrackId) -> Option<&Trajectory> {
        self.trajectories.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = TrackId> + '_ {
        self.trajectories.keys().copied()
    }

    pub fn candidates(&self) -> &[NewCandidate] {
        &self.candidates
    }

    pub fn next_id(&self) -> TrackId {
        self.next_id
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn snapshot(&self) -> BankSnapshot {
        BankSnapshot {
            schema_version: BANK_SCHEMA_VERSION,
            next_id: self.next_id,
            trajectories: self.trajectories.values().cloned().collect(),
            candidates: self.candidates.clone(),
        }
    }

    pub fn from_snapshot(s: BankSnapshot) -> Result<Self> {
        if s.schema_version != BANK_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "bank schema version {} is not supported",
                s.schema_version
            )));
        }
        let mut trajectories = BTreeMap::new();
        for t in s.trajectories {
            if t.id >= s.next_id {
                return Err(Error::InvalidConfig(format!(
                    "trajectory id {} not below next_id {}",
                    t.id, s.next_id
                )));
            }
            trajectories.insert(t.id, t);
        }
        Ok(Self {
            trajectories,
            candidates: s.candidates,
            next_id: s.next_id,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineParams {
    /// Consecutive windows a new instance must appear in before admission.
    pub lambda1: u32,
    /// Consecutive unmatched windows after which a trajectory is removed.
    pub lambda2: u32,
    /// Re-identification threshold for candidates across windows.
    pub theta: f64,
    /// Whether unmatched, retained trajectories still contribute a mask.
    pub render_missed: bool,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            lambda1: 1,
            lambda2: 3,
            theta: 0.5,
            render_missed: false,
        }
    }
}

/// Tracks every stored trajectory onto the reference frame.
pub fn track_reference<P: Propagator + ?Sized>(
    bank: &MemoryBank,
    ref_frame: usize,
    propagator: &mut P,
) -> Result<BTreeMap<TrackId, Mask>> {
    if bank.is_empty() {
        return Ok(BTreeMap::new());
    }
    let entries: Vec<MemoryEntry> = bank.trajectories().map(Trajectory::entry).collect();
    let out = propagator.propagate(&entries, ref_frame)?;
    check_ids(&out, bank.ids())?;
    Ok(out)
}

fn check_ids(out: &BTreeMap<TrackId, Mask>, expected: impl Iterator<Item = TrackId>) -> Result<()> {
    let expected: BTreeSet<TrackId> = expected.collect();
    let got: BTreeSet<TrackId> = out.keys().copied().collect();
    if expected != got {
        return Err(Error::Backend(format!(
            "propagator returned ids {got:?}, expected {expected:?}"
        )));
    }
    Ok(())
}

/// Window-level inputs to [`refine`].
pub struct RefineInput<'a> {
    /// Tracked masks on the reference frame, in id order (the matching's track slots).
    pub tracks: &'a BTreeMap<TrackId, Mask>,
    pub segs: &'a SegmentSet,
    pub matching: &'a Matching,
    pub window: usize,
    pub ref_frame: usize,
}

/// Merges tracked and detected masks on the reference frame and returns the
/// refined per-identity masks together with the updated bank.
pub fn refine<P: Propagator + ?Sized>(
    bank: &MemoryBank,
    input: RefineInput<'_>,
    propagator: &mut P,
    params: &RefineParams,
) -> Result<(BTreeMap<TrackId, Mask>, MemoryBank)> {
    let RefineInput {
        tracks,
        segs,
        matching,
        window,
        ref_frame,
    } = input;
    let track_ids: Vec<TrackId> = tracks.keys().copied().collect();
    let seg_masks: Vec<&Mask> = segs.masks().collect();
    validate_matching(matching, track_ids.len(), seg_masks.len())?;
    for id in &track_ids {
        if bank.trajectory(*id).is_none() {
            return Err(Error::InvalidMatching(format!("track id {id} is not in the bank")));
        }
    }

    let mut next = bank.clone();
    // (id, mask, rank key); rank key orders the non-overlap priority.
    let mut matched: Vec<(TrackId, Mask, f64)> = Vec::new();
    for (q, p, iou) in matching.matched() {
        let id = track_ids[q];
        let merged = tracks[&id].union(seg_masks[p])?;
        next.trajectories.get_mut(&id).expect("checked above").miss_count = 0;
        matched.push((id, merged, iou));
    }

    let mut missed: Vec<TrackId> = Vec::new();
    for q in matching.unmatched_tracks() {
        let id = track_ids[q];
        let t = next.trajectories.get_mut(&id).expect("checked above");
        t.miss_count += 1;
        if t.miss_count >= params.lambda2 {
            next.trajectories.remove(&id);
        } else {
            missed.push(id);
        }
    }

    // Carry surviving candidates onto this reference frame.
    let carried: Vec<Mask> = if next.candidates.is_empty() {
        Vec::new()
    } else {
        let entries: Vec<MemoryEntry> = next
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| MemoryEntry {
                frame: c.frame,
                id: i as TrackId,
                mask: c.mask.clone(),
            })
            .collect();
        let out = propagator.propagate(&entries, ref_frame)?;
        check_ids(&out, 0..entries.len() as TrackId)?;
        out.into_values().collect()
    };
    let previous = std::mem::take(&mut next.candidates);
    let mut claimed = vec![false; previous.len()];
    let mut promoted: Vec<(TrackId, Mask)> = Vec::new();
    for p in matching.unmatched_segs() {
        let seg = seg_masks[p];
        let mut best: Option<(usize, f64)> = None;
        for (c, m) in carried.iter().enumerate() {
            if claimed[c] {
                continue;
            }
            let v = seg.iou(m)?;
            if v > params.theta && best.is_none_or(|(_, b)| v > b) {
                best = Some((c, v));
            }
        }
        let candidate = match best {
            Some((c, _)) => {
                claimed[c] = true;
                NewCandidate {
                    mask: seg.clone(),
                    frame: ref_frame,
                    first_window: previous[c].first_window,
                    hit_count: previous[c].hit_count + 1,
                }
            }
            None => NewCandidate {
                mask: seg.clone(),
                frame: ref_frame,
                first_window: window,
                hit_count: 1,
            },
        };
        if candidate.hit_count >= params.lambda1 {
            let id = next.next_id;
            next.next_id += 1;
            promoted.push((id, candidate.mask));
        } else {
            next.candidates.push(candidate);
        }
    }

    matched.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let mut ordered: Vec<(TrackId, Mask)> = matched.into_iter().map(|(id, m, _)| (id, m)).collect();
    ordered.extend(promoted.iter().cloned());
    if params.render_missed {
        ordered.extend(missed.iter().map(|id| (*id, tracks[id].clone())));
    }
    let masks: Vec<Mask> = ordered.iter().map(|(_, m)| m.clone()).collect();
    let ranks: Vec<usize> = (0..masks.len()).collect();
    let disjoint = enforce_nonoverlap(&masks, &ranks)?;

    let mut refined = BTreeMap::new();
    for ((id, _), mask) in ordered.into_iter().zip(disjoint) {
        let t = next.trajectories.entry(id).or_insert_with(|| Trajectory {
            id,
            latest_mask: mask.clone(),
            latest_frame: ref_frame,
            miss_count: 0,
        });
        t.latest_mask = mask.clone();
        t.latest_frame = ref_frame;
        refined.insert(id, mask);
    }
    Ok((refined, next))
}

fn validate_matching(m: &Matching, tracks: usize, segs: usize) -> Result<()> {
    let n = tracks.max(segs);
    if m.pairs.len() != n {
        return Err(Error::InvalidMatching(format!(
            "{} pairs for {tracks} tracks and {segs} segments",
            m.pairs.len()
        )));
    }
    let mut seen_t = vec![false; tracks];
    let mut seen_s = vec![false; segs];
    for p in &m.pairs {
        if let Some(t) = p.track {
            if t >= tracks || std::mem::replace(&mut seen_t[t], true) {
                return Err(Error::InvalidMatching(format!(
                    "track slot {t} out of range or repeated"
                )));
            }
        }
        if let Some(s) = p.seg {
            if s >= segs || std::mem::replace(&mut seen_s[s], true) {
                return Err(Error::InvalidMatching(format!(
                    "segment slot {s} out of range or repeated"
                )));
            }
        }
        if p.matched && (p.track.is_none() || p.seg.is_none()) {
            return Err(Error::InvalidMatching("padding slot flagged as matched".into()));
        }
    }
    Ok(())
}

/// Propagates the trajectories in `ids` onto each of `frames`. Per-frame
/// masks are made disjoint with lower ids taking precedence.
pub fn track_window_remainder<P: Propagator + ?Sized>(
    bank: &MemoryBank,
    ids: &BTreeSet<TrackId>,
    frames: &[usize],
    propagator: &mut P,
) -> Result<Vec<BTreeMap<TrackId, Mask>>> {
    let entries: Vec<MemoryEntry> = bank
        .trajectories()
        .filter(|t| ids.contains(&t.id))
        .map(Trajectory::entry)
        .collect();
    frames
        .iter()
        .map(|&f| {
            if entries.is_empty() {
                return Ok(BTreeMap::new());
            }
            let out = propagator.propagate(&entries, f)?;
            check_ids(&out, entries.iter().map(|e| e.id))?;
            let (keys, masks): (Vec<TrackId>, Vec<Mask>) = out.into_iter().unzip();
            let ranks: Vec<usize> = (0..masks.len()).collect();
            let disjoint = enforce_nonoverlap(&masks, &ranks)?;
            Ok(keys.into_iter().zip(disjoint).collect())
        })
        .collect()
}
