//! Synthetic benchmark videos: elliptical instances under a global camera
//! motion, and a noisy detector that corrupts the ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{enforce_nonoverlap, Bitmap, Mask, Segment, SegmentSet};
use crate::warp::{Affine, WarpChain, WarpField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    /// Rotation in radians.
    #[serde(default)]
    pub angle: f64,
}

impl Ellipse {
    pub fn circle(cx: f64, cy: f64, r: f64) -> Self {
        Self {
            cx,
            cy,
            rx: r,
            ry: r,
            angle: 0.0,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.rx).powi(2) + (v / self.ry).powi(2) <= 1.0
    }

    /// Half extents of the axis-aligned bounding box.
    fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        (
            ((self.rx * c).powi(2) + (self.ry * s).powi(2)).sqrt(),
            ((self.rx * s).powi(2) + (self.ry * c).powi(2)).sqrt(),
        )
    }

    fn validate(&self) -> Result<()> {
        let vals = [self.cx, self.cy, self.rx, self.ry, self.angle];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScenario("ellipse has non-finite parameters".into()));
        }
        if self.rx <= 0.0 || self.ry <= 0.0 {
            return Err(Error::InvalidScenario(format!(
                "ellipse axes must be positive, got ({}, {})",
                self.rx, self.ry
            )));
        }
        Ok(())
    }

    fn inside_frame(&self, width: u32, height: u32) -> bool {
        let (hw, hh) = self.half_extents();
        self.cx - hw >= -0.5
            && self.cy - hh >= -0.5
            && self.cx + hw <= width as f64 - 0.5
            && self.cy + hh <= height as f64 - 0.5
    }

    /// Rasterizes the ellipse as seen through `to_shape`, which maps frame
    /// pixel coordinates into the ellipse's own coordinates.
    pub fn rasterize(&self, width: u32, height: u32, to_shape: &Affine) -> Result<Mask> {
        let mut bm = Bitmap::new(width, height)?;
        let from_shape = to_shape.inverse().ok_or_else(|| Error::InvalidWarp {
            from: 0,
            to: 0,
            reason: "singular shape transform".into(),
        })?;
        let (hw, hh) = self.half_extents();
        let corners =
            [(-hw, -hh), (hw, -hh), (-hw, hh), (hw, hh)].map(|(dx, dy)| from_shape.apply(self.cx + dx, self.cy + dy));
        let lo_x = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min).floor() - 1.0;
        let hi_x = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max).ceil() + 1.0;
        let lo_y = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min).floor() - 1.0;
        let hi_y = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max).ceil() + 1.0;
        let clamp = |v: f64, max: u32| v.clamp(0.0, max as f64 - 1.0) as u32;
        if hi_x < 0.0 || hi_y < 0.0 || lo_x > width as f64 || lo_y > height as f64 {
            return Ok(Mask::encode(&bm));
        }
        for y in clamp(lo_y, height)..=clamp(hi_y, height) {
            for x in clamp(lo_x, width)..=clamp(hi_x, width) {
                let (sx, sy) = to_shape.apply(x as f64, y as f64);
                if self.contains(sx, sy) {
                    bm.set(x, y, true);
                }
            }
        }
        Ok(Mask::encode(&bm))
    }
}

/// Global camera motion shared by all instances.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionSpec {
    #[default]
    Static,
    /// Constant per-frame translation.
    Translate { dx: f64, dy: f64 },
    /// Integer random walk whose cumulative offset stays within `max_offset`.
    RandomWalk { max_step: i32, max_offset: i32 },
    /// One affine per consecutive frame pair.
    Explicit { affines: Vec<Affine> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub birth_frame: usize,
    /// First frame the instance is gone.
    pub death_frame: usize,
    /// Shape in the coordinates of the birth frame.
    pub shape: Ellipse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub width: u32,
    pub height: u32,
    pub num_frames: usize,
    #[serde(default)]
    pub instances: Vec<InstanceSpec>,
    #[serde(default)]
    pub motion: MotionSpec,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.num_frames == 0 {
            return Err(Error::InvalidScenario("frame size and count must be non-zero".into()));
        }
        for (i, inst) in self.instances.iter().enumerate() {
            inst.shape.validate()?;
            if inst.birth_frame >= inst.death_frame || inst.death_frame > self.num_frames {
                return Err(Error::InvalidScenario(format!(
                    "instance {i}: need birth < death <= num_frames, got {} / {}",
                    inst.birth_frame, inst.death_frame
                )));
            }
            if !inst.shape.inside_frame(self.width, self.height) {
                return Err(Error::InvalidScenario(format!(
                    "instance {i} leaves the frame at birth"
                )));
            }
        }
        if let MotionSpec::Explicit { affines } = &self.motion {
            if affines.len() + 1 != self.num_frames {
                return Err(Error::InvalidScenario(format!(
                    "{} explicit affines for {} frames",
                    affines.len(),
                    self.num_frames
                )));
            }
        }
        Ok(())
    }

    fn warps(&self) -> Result<Vec<WarpField>> {
        let n = self.num_frames.saturating_sub(1);
        let affines: Vec<Affine> = match &self.motion {
            MotionSpec::Static => vec![Affine::IDENTITY; n],
            MotionSpec::Translate { dx, dy } => vec![Affine::translation(*dx, *dy); n],
            MotionSpec::Explicit { affines } => affines.clone(),
            MotionSpec::RandomWalk { max_step, max_offset } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let (step, bound) = ((*max_step).max(0), (*max_offset).max(0));
                let (mut ox, mut oy) = (0i32, 0i32);
                (0..n)
                    .map(|_| {
                        let nx = (ox + rng.random_range(-step..=step)).clamp(-bound, bound);
                        let ny = (oy + rng.random_range(-step..=step)).clamp(-bound, bound);
                        let a = Affine::translation((nx - ox) as f64, (ny - oy) as f64);
                        (ox, oy) = (nx, ny);
                        a
                    })
                    .collect()
            }
        };
        affines
            .into_iter()
            .enumerate()
            .map(|(i, a)| WarpField::new(i, i + 1, a))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// One set per frame; segment ids are instance indices.
    pub frames: Vec<SegmentSet>,
    pub warps: Vec<WarpField>,
}

/// Rasterizes every instance on every frame it is alive.
pub fn generate_ground_truth(spec: &ScenarioSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let warps = spec.warps()?;
    let chain = WarpChain::from_warps(warps.iter().copied())?;
    let mut frames = Vec::with_capacity(spec.num_frames);
    for k in 0..spec.num_frames {
        let mut ids = Vec::new();
        let mut masks = Vec::new();
        for (i, inst) in spec.instances.iter().enumerate() {
            if k < inst.birth_frame || k >= inst.death_frame {
                continue;
            }
            let to_birth = chain.transform(k, inst.birth_frame)?.transform;
            let m = inst.shape.rasterize(spec.width, spec.height, &to_birth)?;
            if !m.is_empty() {
                ids.push(i as u64);
                masks.push(m);
            }
        }
        let ranks: Vec<usize> = (0..masks.len()).collect();
        let segments = enforce_nonoverlap(&masks, &ranks)?
            .into_iter()
            .zip(ids)
            .filter(|(m, _)| !m.is_empty())
            .map(|(m, id)| Segment::with_id(m, id))
            .collect();
        frames.push(SegmentSet { frame: k, segments });
    }
    Ok(GroundTruth { frames, warps })
}

/// A spurious detection that persists over several frames at a fixed place.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistentFp {
    pub start_frame: usize,
    pub duration: usize,
    pub shape: Ellipse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Probability of one spurious single-frame blob per frame.
    #[serde(default)]
    pub fp_rate: f64,
    /// Probability of dropping each true instance per frame.
    #[serde(default)]
    pub fn_rate: f64,
    /// Boundary jitter: each kept instance is dilated or eroded by a radius
    /// drawn uniformly from `-jitter..=jitter`.
    #[serde(default)]
    pub jitter: u32,
    /// Radius range of spurious blobs.
    #[serde(default = "default_fp_radius")]
    pub fp_radius: [f64; 2],
    #[serde(default)]
    pub persistent_fp: Option<PersistentFp>,
    #[serde(default)]
    pub seed: u64,
}

fn default_fp_radius() -> [f64; 2] {
    [3.0, 7.0]
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            fp_rate: 0.0,
            fn_rate: 0.0,
            jitter: 0,
            fp_radius: default_fp_radius(),
            persistent_fp: None,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("fp_rate", self.fp_rate), ("fn_rate", self.fn_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidScenario(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        let [lo, hi] = self.fp_radius;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidScenario(format!("bad fp_radius [{lo}, {hi}]")));
        }
        if let Some(p) = &self.persistent_fp {
            p.shape.validate()?;
        }
        Ok(())
    }
}

const FP_PLACEMENT_TRIES: usize = 200;

/// Applies missed detections, boundary jitter and spurious blobs.
pub fn corrupt(gt: &[SegmentSet], noise: &NoiseSpec, width: u32, height: u32) -> Result<Vec<SegmentSet>> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let jitter = noise.jitter as i64;
    let mut out = Vec::with_capacity(gt.len());
    for set in gt {
        let mut kept: Vec<Segment> = Vec::new();
        for seg in &set.segments {
            let drop = rng.random::<f64>() < noise.fn_rate;
            let r = if jitter > 0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0
            };
            if drop {
                continue;
            }
            let mask = match r {
                0 => seg.mask.clone(),
                r if r > 0 => Mask::encode(&seg.mask.decode().dilate(r as u32)),
                r => Mask::encode(&seg.mask.decode().erode((-r) as u32)),
            };
            kept.push(Segment { mask, ..seg.clone() });
        }
        let masks: Vec<Mask> = kept.iter().map(|s| s.mask.clone()).collect();
        let ranks: Vec<usize> = (0..masks.len()).collect();
        let mut segments: Vec<Segment> = enforce_nonoverlap(&masks, &ranks)?
            .into_iter()
            .zip(kept)
            .filter(|(m, _)| !m.is_empty())
            .map(|(mask, s)| Segment { mask, ..s })
            .collect();

        let mut occupied = Mask::empty(width, height)?;
        for s in &segments {
            occupied = occupied.union(&s.mask)?;
        }

        if let Some(p) = &noise.persistent_fp {
            if set.frame >= p.start_frame && set.frame < p.start_frame + p.duration {
                let blob = p
                    .shape
                    .rasterize(width, height, &Affine::IDENTITY)?
                    .difference(&occupied)?;
                if !blob.is_empty() {
                    occupied = occupied.union(&blob)?;
                    segments.push(Segment::new(blob));
                }
            }
        }

        if rng.random::<f64>() < noise.fp_rate {
            let [lo, hi] = noise.fp_radius;
            for _ in 0..FP_PLACEMENT_TRIES {
                let r = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                let (cx, cy) = (
                    rng.random_range(r..=(width as f64 - 1.0 - r).max(r)),
                    rng.random_range(r..=(height as f64 - 1.0 - r).max(r)),
                );
                let blob = Ellipse::circle(cx, cy, r).rasterize(width, height, &Affine::IDENTITY)?;
                if !blob.is_empty() && blob.disjoint(&occupied)? {
                    segments.push(Segment::new(blob));
                    break;
                }
            }
        }
        out.push(SegmentSet {
            frame: set.frame,
            segments,
        });
    }
    Ok(out)
}
