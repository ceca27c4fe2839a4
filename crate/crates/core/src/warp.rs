//! Affine frame-to-frame warps and nearest-neighbour mask resampling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{Bitmap, Mask};

const MIN_DET: f64 = 1e-9;

/// 2x3 affine map `(x, y) -> (a x + b y + tx, c x + d y + ty)` in pixel
/// coordinates, stored row-major as `[a, b, tx, c, d, ty]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Affine(pub [f64; 6]);

impl Affine {
    pub const IDENTITY: Affine = Affine([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn translation(dx: f64, dy: f64) -> Self {
        Affine([1.0, 0.0, dx, 0.0, 1.0, dy])
    }

    pub fn scale(s: f64) -> Self {
        Affine([s, 0.0, 0.0, 0.0, s, 0.0])
    }

    /// Rotation by `angle` radians about `(cx, cy)`.
    pub fn rotation_about(angle: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Affine([c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy])
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, tx, c, d, ty] = self.0;
        (a * x + b * y + tx, c * x + d * y + ty)
    }

    pub fn det(&self) -> f64 {
        self.0[0] * self.0[4] - self.0[1] * self.0[3]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_invertible(&self) -> bool {
        self.is_finite() && self.det().abs() > MIN_DET
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Affine) -> Affine {
        let [a2, b2, t2, c2, d2, u2] = self.0;
        let [a1, b1, t1, c1, d1, u1] = first.0;
        Affine([
            a2 * a1 + b2 * c1,
            a2 * b1 + b2 * d1,
            a2 * t1 + b2 * u1 + t2,
            c2 * a1 + d2 * c1,
            c2 * b1 + d2 * d1,
            c2 * t1 + d2 * u1 + u2,
        ])
    }

    pub fn inverse(&self) -> Option<Affine> {
        if !self.is_invertible() {
            return None;
        }
        let [a, b, tx, c, d, ty] = self.0;
        let det = self.det();
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Some(Affine([ia, ib, -(ia * tx + ib * ty), ic, id, -(ic * tx + id * ty)]))
    }

    pub fn is_identity(&self) -> bool {
        *self == Affine::IDENTITY
    }

    /// Resamples `mask` under this map. A target pixel is set iff its
    /// inverse-mapped centre rounds to a set source pixel; pixels whose
    /// source lies outside the frame stay clear.
    pub fn warp_mask(&self, mask: &Mask) -> Result<Mask> {
        if self.is_identity() || mask.is_empty() {
            return Ok(mask.clone());
        }
        let inv = self.inverse().ok_or_else(|| Error::InvalidWarp {
            from: 0,
            to: 0,
            reason: format!("singular affine {:?}", self.0),
        })?;
        let src = mask.decode();
        let (w, h) = (mask.width(), mask.height());
        let mut out = Bitmap::new(w, h)?;
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = inv.apply(x as f64, y as f64);
                let (sx, sy) = (sx.round(), sy.round());
                if sx >= 0.0 && sy >= 0.0 && sx < w as f64 && sy < h as f64 && src.get(sx as u32, sy as u32) {
                    out.set(x, y, true);
                }
            }
        }
        Ok(Mask::encode(&out))
    }
}

/// Geometric transform taking frame `from` coordinates to frame `to`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpField {
    #[serde(rename = "from")]
    pub from_frame: usize,
    #[serde(rename = "to")]
    pub to_frame: usize,
    #[serde(rename = "affine")]
    pub transform: Affine,
}

impl WarpField {
    pub fn new(from_frame: usize, to_frame: usize, transform: Affine) -> Result<Self> {
        let w = Self {
            from_frame,
            to_frame,
            transform,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn identity(frame: usize) -> Self {
        Self {
            from_frame: frame,
            to_frame: frame,
            transform: Affine::IDENTITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.transform.is_invertible() {
            return Err(Error::InvalidWarp {
                from: self.from_frame,
                to: self.to_frame,
                reason: format!("not invertible (det {})", self.transform.det()),
            });
        }
        Ok(())
    }

    pub fn inverse(&self) -> WarpField {
        WarpField {
            from_frame: self.to_frame,
            to_frame: self.from_frame,
            transform: self.transform.inverse().expect("validated warp is invertible"),
        }
    }
}

/// `b ∘ a`: warp from `a.from_frame` to `b.to_frame`.
pub fn compose_warps(a: &WarpField, b: &WarpField) -> Result<WarpField> {
    if a.to_frame != b.from_frame {
        return Err(Error::InvalidWarp {
            from: a.to_frame,
            to: b.from_frame,
            reason: "frames do not chain".into(),
        });
    }
    Ok(WarpField {
        from_frame: a.from_frame,
        to_frame: b.to_frame,
        transform: b.transform.after(&a.transform),
    })
}

/// Consecutive-pair warps of one video.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WarpChain {
    steps: BTreeMap<usize, Affine>,
}

impl WarpChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_warps(warps: impl IntoIterator<Item = WarpField>) -> Result<Self> {
        let mut chain = Self::new();
        for w in warps {
            chain.insert(w)?;
        }
        Ok(chain)
    }

    /// Static scene of `num_frames` frames.
    pub fn identity(num_frames: usize) -> Self {
        Self {
            steps: (0..num_frames.saturating_sub(1))
                .map(|i| (i, Affine::IDENTITY))
                .collect(),
        }
    }

    /// Adds the warp `i -> i+1`; a repeated pair must carry the same transform.
    pub fn insert(&mut self, warp: WarpField) -> Result<()> {
        if warp.to_frame != warp.from_frame + 1 {
            return Err(Error::InvalidWarp {
                from: warp.from_frame,
                to: warp.to_frame,
                reason: "warps must join consecutive frames".into(),
            });
        }
        warp.validate()?;
        match self.steps.get(&warp.from_frame) {
            Some(existing) if *existing != warp.transform => Err(Error::InvalidWarp {
                from: warp.from_frame,
                to: warp.to_frame,
                reason: "conflicting duplicate warp".into(),
            }),
            _ => {
                self.steps.insert(warp.from_frame, warp.transform);
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn warps(&self) -> impl Iterator<Item = WarpField> + '_ {
        self.steps.iter().map(|(&i, &t)| WarpField {
            from_frame: i,
            to_frame: i + 1,
            transform: t,
        })
    }

    /// Composite transform from frame `from` to frame `to`.
    pub fn transform(&self, from: usize, to: usize) -> Result<WarpField> {
        if from == to {
            return Ok(WarpField::identity(from));
        }
        let (lo, hi) = (from.min(to), from.max(to));
        let mut acc = WarpField::identity(lo);
        for i in lo..hi {
            let step = self.steps.get(&i).ok_or(Error::MissingWarp { from, to })?;
            acc = compose_warps(
                &acc,
                &WarpField {
                    from_frame: i,
                    to_frame: i + 1,
                    transform: *step,
                },
            )?;
        }
        Ok(if from < to { acc } else { acc.inverse() })
    }

    pub fn warp_mask(&self, mask: &Mask, from: usize, to: usize) -> Result<Mask> {
        self.transform(from, to)?.transform.warp_mask(mask)
    }
}
