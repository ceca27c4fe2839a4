//! Binary instance masks stored as row-major run-length encodings.
//!
//! A [`Mask`] holds alternating run lengths of background and foreground
//! pixels, starting with a (possibly empty) background run. Set operations
//! work directly on the foreground spans without decoding to a bitmap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense boolean grid, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitmap {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        })
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidMask(format!(
                "bitmap has {} pixels, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Morphological dilation with a Euclidean disk of the given radius.
    pub fn dilate(&self, radius: u32) -> Bitmap {
        self.morph(radius, true)
    }

    /// Morphological erosion with a Euclidean disk of the given radius.
    pub fn erode(&self, radius: u32) -> Bitmap {
        self.morph(radius, false)
    }

    // Erosion treats out-of-frame pixels as background.
    fn morph(&self, radius: u32, dilate: bool) -> Bitmap {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        let offsets: Vec<(i64, i64)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        let (w, h) = (self.width as i64, self.height as i64);
        let mut out = vec![false; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let hit = |&(dx, dy): &(i64, i64)| {
                    let (sx, sy) = (x + dx, y + dy);
                    sx >= 0 && sy >= 0 && sx < w && sy < h && self.data[(sy * w + sx) as usize]
                };
                out[(y * w + x) as usize] = if dilate {
                    offsets.iter().any(hit)
                } else {
                    offsets.iter().all(hit)
                };
            }
        }
        Bitmap {
            width: self.width,
            height: self.height,
            data: out,
        }
    }
}

/// Run-length encoded binary mask over a fixed frame grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "MaskRepr", into = "MaskRepr")]
pub struct Mask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    w: u32,
    h: u32,
    runs: Vec<u32>,
}

impl TryFrom<MaskRepr> for Mask {
    type Error = Error;

    fn try_from(r: MaskRepr) -> Result<Self> {
        Mask::from_runs(r.w, r.h, r.runs)
    }
}

impl From<Mask> for MaskRepr {
    fn from(m: Mask) -> Self {
        MaskRepr {
            w: m.width,
            h: m.height,
            runs: m.runs,
        }
    }
}

fn check_dims(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimensions { width, height });
    }
    Ok(())
}

/// Half-open span `[start, end)` of foreground pixels in row-major order.
type Span = (usize, usize);

impl Mask {
    pub fn empty(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            runs: vec![width * height],
        })
    }

    pub fn full(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            runs: vec![0, width * height],
        })
    }

    /// Validates and wraps raw runs.
    pub fn from_runs(width: u32, height: u32, runs: Vec<u32>) -> Result<Self> {
        check_dims(width, height)?;
        if runs.is_empty() {
            return Err(Error::InvalidMask("runs must not be empty".into()));
        }
        if let Some(pos) = runs.iter().skip(1).position(|&r| r == 0) {
            return Err(Error::InvalidMask(format!(
                "run {} is zero; only the first run may be zero",
                pos + 1
            )));
        }
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        let expected = width as u64 * height as u64;
        if total != expected {
            return Err(Error::InvalidMask(format!("runs sum to {total}, expected {expected}")));
        }
        Ok(Self { width, height, runs })
    }

    /// Row-major run-length encoding of a bitmap.
    pub fn encode(bitmap: &Bitmap) -> Self {
        let mut runs = Vec::new();
        let mut current = false;
        let mut count = 0u32;
        for &px in &bitmap.data {
            if px != current {
                runs.push(count);
                count = 0;
                current = px;
            }
            count += 1;
        }
        runs.push(count);
        Self {
            width: bitmap.width,
            height: bitmap.height,
            runs,
        }
    }

    pub fn decode(&self) -> Bitmap {
        let mut data = vec![false; self.len()];
        for (start, end) in self.spans() {
            data[start..end].fill(true);
        }
        Bitmap {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: &[(u32, u32)]) -> Result<Self> {
        let mut bm = Bitmap::new(width, height)?;
        for &(x, y) in pixels {
            if x >= width || y >= height {
                return Err(Error::InvalidMask(format!("pixel ({x},{y}) outside {width}x{height}")));
            }
            bm.set(x, y, true);
        }
        Ok(Mask::encode(&bm))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn same_dims(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_dims(&self, other: &Mask) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ))
        }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        let idx = y as usize * self.width as usize + x as usize;
        self.spans().any(|(s, e)| s <= idx && idx < e)
    }

    fn spans(&self) -> impl Iterator<Item = Span> + '_ {
        let mut pos = 0usize;
        self.runs.iter().enumerate().filter_map(move |(i, &r)| {
            let start = pos;
            pos += r as usize;
            (i % 2 == 1).then_some((start, pos))
        })
    }

    fn from_spans(width: u32, height: u32, spans: impl IntoIterator<Item = Span>) -> Self {
        let total = width as usize * height as usize;
        let mut runs: Vec<u32> = Vec::new();
        let mut prev_end = 0usize;
        for (s, e) in spans {
            if s >= e {
                continue;
            }
            if !runs.is_empty() && s == prev_end {
                *runs.last_mut().unwrap() += (e - s) as u32;
            } else {
                runs.push((s - prev_end) as u32);
                runs.push((e - s) as u32);
            }
            prev_end = e;
        }
        if runs.is_empty() || prev_end < total {
            runs.push((total - prev_end) as u32);
        }
        Self { width, height, runs }
    }

    pub fn intersection_area(&self, other: &Mask) -> Result<u64> {
        self.check_dims(other)?;
        Ok(intersect_spans(self.spans(), other.spans())
            .map(|(s, e)| (e - s) as u64)
            .sum())
    }

    /// Intersection over union; zero when both masks are empty.
    pub fn iou(&self, other: &Mask) -> Result<f64> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check_dims(other)?;
        let mut all: Vec<Span> = self.spans().chain(other.spans()).collect();
        all.sort_unstable();
        let mut merged: Vec<Span> = Vec::with_capacity(all.len());
        for (s, e) in all {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        Ok(Mask::from_spans(self.width, self.height, merged))
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask> {
        self.check_dims(other)?;
        let spans: Vec<Span> = intersect_spans(self.spans(), other.spans()).collect();
        Ok(Mask::from_spans(self.width, self.height, spans))
    }

    /// Pixels of `self` not in `other`.
    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.check_dims(other)?;
        let cut: Vec<Span> = other.spans().collect();
        let mut out = Vec::new();
        let mut j = 0usize;
        for (mut s, e) in self.spans() {
            while j < cut.len() && cut[j].1 <= s {
                j += 1;
            }
            let mut k = j;
            while s < e {
                match cut.get(k) {
                    Some(&(cs, ce)) if cs < e => {
                        if cs > s {
                            out.push((s, cs));
                        }
                        s = s.max(ce);
                        k += 1;
                    }
                    _ => {
                        out.push((s, e));
                        s = e;
                    }
                }
            }
        }
        Ok(Mask::from_spans(self.width, self.height, out))
    }

    pub fn complement(&self) -> Mask {
        let full = Mask::full(self.width, self.height).expect("dims already validated");
        full.difference(self).expect("same dims")
    }

    pub fn disjoint(&self, other: &Mask) -> Result<bool> {
        Ok(self.intersection_area(other)? == 0)
    }

    /// Smallest axis-aligned box covering every set pixel.
    pub fn tightest_bbox(&self) -> Option<BBox> {
        let w = self.width as usize;
        let mut bb: Option<BBox> = None;
        for (s, e) in self.spans() {
            let (y0, y1) = (s / w, (e - 1) / w);
            // A span that wraps a row reaches both the last and the first column.
            let (x0, x1) = if y0 == y1 { (s % w, (e - 1) % w) } else { (0, w - 1) };
            let span_box = BBox {
                x_min: x0 as u32,
                y_min: y0 as u32,
                x_max: x1 as u32,
                y_max: y1 as u32,
            };
            bb = Some(match bb {
                None => span_box,
                Some(b) => b.cover(&span_box),
            });
        }
        bb
    }
}

fn intersect_spans(a: impl Iterator<Item = Span>, b: impl Iterator<Item = Span>) -> impl Iterator<Item = Span> {
    let a: Vec<Span> = a.collect();
    let b: Vec<Span> = b.collect();
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let s = a[i].0.max(b[j].0);
        let e = a[i].1.min(b[j].1);
        if s < e {
            out.push((s, e));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out.into_iter()
}

/// Inclusive pixel-coordinate box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub fn area(&self) -> u64 {
        (self.x_max - self.x_min + 1) as u64 * (self.y_max - self.y_min + 1) as u64
    }

    fn cover(&self, o: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(o.x_min),
            y_min: self.y_min.min(o.y_min),
            x_max: self.x_max.max(o.x_max),
            y_max: self.y_max.max(o.y_max),
        }
    }

    pub fn iou(&self, o: &BBox) -> f64 {
        let x0 = self.x_min.max(o.x_min);
        let y0 = self.y_min.max(o.y_min);
        let x1 = self.x_max.min(o.x_max);
        let y1 = self.y_max.min(o.y_max);
        if x0 > x1 || y0 > y1 {
            return 0.0;
        }
        let inter = (x1 - x0 + 1) as u64 * (y1 - y0 + 1) as u64;
        inter as f64 / (self.area() + o.area() - inter) as f64
    }
}

/// Makes masks pairwise disjoint. A contested pixel goes to the covering mask
/// with the lowest rank; equal ranks resolve by list position.
pub fn enforce_nonoverlap(masks: &[Mask], priority: &[usize]) -> Result<Vec<Mask>> {
    if masks.len() != priority.len() {
        return Err(Error::InvalidMask(format!(
            "{} masks but {} priorities",
            masks.len(),
            priority.len()
        )));
    }
    let Some(first) = masks.first() else {
        return Ok(Vec::new());
    };
    for m in masks {
        first.check_dims(m)?;
    }
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by_key(|&i| (priority[i], i));
    let mut taken = Mask::empty(first.width, first.height)?;
    let mut out = masks.to_vec();
    for i in order {
        out[i] = masks[i].difference(&taken)?;
        taken = taken.union(&masks[i])?;
    }
    Ok(out)
}

/// One instance mask within a frame, with optional identity and confidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub mask: Mask,
}

impl Segment {
    pub fn new(mask: Mask) -> Self {
        Self {
            id: None,
            score: None,
            mask,
        }
    }

    pub fn with_id(mask: Mask, id: u64) -> Self {
        Self {
            id: Some(id),
            score: None,
            mask,
        }
    }

    /// Confidence, 1.0 when absent.
    pub fn score(&self) -> f64 {
        self.score.unwrap_or(1.0)
    }
}

/// Non-overlapping instance masks of one frame. No detection is the empty list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub frame: usize,
    #[serde(default)]
    pub segments: Vec<Segment>,
}

impl SegmentSet {
    pub fn empty(frame: usize) -> Self {
        Self {
            frame,
            segments: Vec::new(),
        }
    }

    pub fn from_masks(frame: usize, masks: impl IntoIterator<Item = Mask>) -> Result<Self> {
        let set = Self {
            frame,
            segments: masks.into_iter().map(Segment::new).collect(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn masks(&self) -> impl Iterator<Item = &Mask> {
        self.segments.iter().map(|s| &s.mask)
    }

    /// Checks shared dimensions, score range and pairwise disjointness.
    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.segments.iter().enumerate() {
            if let Some(s) = a.score {
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::InvalidMask(format!(
                        "segment {i} of frame {} has score {s} outside [0,1]",
                        self.frame
                    )));
                }
            }
            for (j, b) in self.segments.iter().enumerate().skip(i + 1) {
                if !a.mask.disjoint(&b.mask)? {
                    return Err(Error::OverlappingSegments {
                        frame: self.frame,
                        first: i,
                        second: j,
                    });
                }
            }
        }
        Ok(())
    }

    /// Union of all instances, the per-frame foreground used for semantic scoring.
    pub fn semantic(&self, width: u32, height: u32) -> Result<Mask> {
        let mut acc = Mask::empty(width, height)?;
        for m in self.masks() {
            acc = acc.union(m)?;
        }
        Ok(acc)
    }
}
