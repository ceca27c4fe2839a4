//! The propagator contract: carry stored instance masks to a query frame,
//! and express detections of one frame in another frame's coordinates.
//!
//! [`SyntheticPropagator`] realizes the contract with known affine warps.
//! The stdio backend client in [`crate::backend`] realizes it over a
//! subprocess. Both are checked by [`conformance`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::warp::{WarpChain, WarpField};

pub type TrackId = u64;

/// A stored image-mask pair for one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub frame: usize,
    pub id: TrackId,
    pub mask: Mask,
}

pub trait Propagator {
    /// One mask per distinct trajectory in `entries`, at `query_frame`.
    /// A trajectory may come back empty when its object left the view.
    fn propagate(&mut self, entries: &[MemoryEntry], query_frame: usize) -> Result<BTreeMap<TrackId, Mask>>;

    /// Expresses masks observed on `from_frame` in `ref_frame` coordinates.
    /// Output order matches input order.
    fn align(&mut self, masks: &[Mask], from_frame: usize, ref_frame: usize) -> Result<Vec<Mask>>;
}

impl<P: Propagator + ?Sized> Propagator for &mut P {
    fn propagate(&mut self, entries: &[MemoryEntry], query_frame: usize) -> Result<BTreeMap<TrackId, Mask>> {
        (**self).propagate(entries, query_frame)
    }

    fn align(&mut self, masks: &[Mask], from_frame: usize, ref_frame: usize) -> Result<Vec<Mask>> {
        (**self).align(masks, from_frame, ref_frame)
    }
}

impl<P: Propagator + ?Sized> Propagator for Box<P> {
    fn propagate(&mut self, entries: &[MemoryEntry], query_frame: usize) -> Result<BTreeMap<TrackId, Mask>> {
        (**self).propagate(entries, query_frame)
    }

    fn align(&mut self, masks: &[Mask], from_frame: usize, ref_frame: usize) -> Result<Vec<Mask>> {
        (**self).align(masks, from_frame, ref_frame)
    }
}

/// Warp-driven propagator. Uses only the most recent entry of each
/// trajectory; the scene motion is Markov so older entries add nothing.
#[derive(Clone, Debug, Default)]
pub struct SyntheticPropagator {
    chain: WarpChain,
}

impl SyntheticPropagator {
    pub fn new(chain: WarpChain) -> Self {
        Self { chain }
    }

    pub fn chain(&self) -> &WarpChain {
        &self.chain
    }

    pub fn add_warp(&mut self, warp: WarpField) -> Result<()> {
        self.chain.insert(warp)
    }

    pub fn align_to_reference(&self, mask: &Mask, from_frame: usize, ref_frame: usize) -> Result<Mask> {
        self.chain.warp_mask(mask, from_frame, ref_frame)
    }
}

impl Propagator for SyntheticPropagator {
    fn propagate(&mut self, entries: &[MemoryEntry], query_frame: usize) -> Result<BTreeMap<TrackId, Mask>> {
        let mut latest: BTreeMap<TrackId, &MemoryEntry> = BTreeMap::new();
        for e in entries {
            match latest.get(&e.id) {
                Some(prev) if prev.frame > e.frame => {}
                _ => {
                    latest.insert(e.id, e);
                }
            }
        }
        latest
            .into_iter()
            .map(|(id, e)| Ok((id, self.chain.warp_mask(&e.mask, e.frame, query_frame)?)))
            .collect()
    }

    fn align(&mut self, masks: &[Mask], from_frame: usize, ref_frame: usize) -> Result<Vec<Mask>> {
        let t = self.chain.transform(from_frame, ref_frame)?;
        masks.iter().map(|m| t.transform.warp_mask(m)).collect()
    }
}

/// Contract checks shared by every propagator implementation.
///
/// Each check takes a fixture mask and frame indices for which the backend
/// is known to answer; it returns a description of the first violation.
pub mod conformance {
    use super::*;

    pub type Outcome = std::result::Result<(), String>;

    /// Propagating to the entry's own frame, and aligning a frame to itself,
    /// both return the stored mask.
    pub fn identity(p: &mut dyn Propagator, mask: &Mask, frame: usize) -> Outcome {
        let entry = MemoryEntry {
            frame,
            id: 7,
            mask: mask.clone(),
        };
        let out = p.propagate(&[entry], frame).map_err(|e| e.to_string())?;
        if out.get(&7) != Some(mask) {
            return Err(format!("identity propagate changed the mask: {out:?}"));
        }
        let aligned = p
            .align(std::slice::from_ref(mask), frame, frame)
            .map_err(|e| e.to_string())?;
        if aligned.as_slice() != std::slice::from_ref(mask) {
            return Err("identity align changed the mask".into());
        }
        Ok(())
    }

    /// Distinct trajectories produce exactly one mask each, with matching dims.
    pub fn cardinality(p: &mut dyn Propagator, a: &Mask, b: &Mask, from: usize, query: usize) -> Outcome {
        let entries = [
            MemoryEntry {
                frame: from,
                id: 1,
                mask: a.clone(),
            },
            MemoryEntry {
                frame: from,
                id: 2,
                mask: b.clone(),
            },
        ];
        let out = p.propagate(&entries, query).map_err(|e| e.to_string())?;
        let keys: Vec<_> = out.keys().copied().collect();
        if keys != [1, 2] {
            return Err(format!("expected ids [1, 2], got {keys:?}"));
        }
        if out.values().any(|m| !m.same_dims(a)) {
            return Err("propagated mask changed dimensions".into());
        }
        let aligned = p
            .align(&[a.clone(), b.clone()], from, query)
            .map_err(|e| e.to_string())?;
        if aligned.len() != 2 {
            return Err(format!("align returned {} masks for 2 inputs", aligned.len()));
        }
        Ok(())
    }

    /// The empty mask stays empty.
    pub fn empty_stays_empty(p: &mut dyn Propagator, width: u32, height: u32, from: usize, query: usize) -> Outcome {
        let e = Mask::empty(width, height).map_err(|e| e.to_string())?;
        let aligned = p
            .align(std::slice::from_ref(&e), from, query)
            .map_err(|e| e.to_string())?;
        if aligned.first().is_none_or(|m| !m.is_empty()) {
            return Err("empty mask aligned to non-empty".into());
        }
        Ok(())
    }

    /// Identical requests give identical answers.
    pub fn deterministic(p: &mut dyn Propagator, mask: &Mask, from: usize, query: usize) -> Outcome {
        let entry = [MemoryEntry {
            frame: from,
            id: 3,
            mask: mask.clone(),
        }];
        let a = p.propagate(&entry, query).map_err(|e| e.to_string())?;
        let b = p.propagate(&entry, query).map_err(|e| e.to_string())?;
        if a != b {
            return Err("propagate is not deterministic".into());
        }
        Ok(())
    }

    /// Runs every check; returns all violations.
    pub fn run_all(p: &mut dyn Propagator, a: &Mask, b: &Mask, from: usize, query: usize) -> Vec<String> {
        [
            identity(p, a, from),
            cardinality(p, a, b, from, query),
            empty_stays_empty(p, a.width(), a.height(), from, query),
            deterministic(p, a, from, query),
        ]
        .into_iter()
        .filter_map(|r| r.err())
        .collect()
    }
}

/// Wraps a propagation error with the frame pair it concerned.
pub(crate) fn alignment_error(from: usize, to: usize, e: Error) -> Error {
    Error::Alignment {
        from,
        to,
        source: Box::new(e),
    }
}
