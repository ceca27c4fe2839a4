//! Instance boundaries drawn over PNG frames for visual inspection.

use std::path::{Path, PathBuf};

use image::{ImageFormat, Rgba, RgbaImage};

use crate::error::{Error, Result};
use crate::mask::{Bitmap, Mask, SegmentSet};

/// PNG files of a directory in file-name order; the i-th is frame i.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Colour for a trajectory id. Depends only on the id.
pub fn id_color(id: u64) -> [u8; 3] {
    // splitmix64 finalizer
    let mut z = id.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    let hue = (z % 360) as f64;
    hsv_to_rgb(hue, 0.9, 1.0)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let q = |t: f64| ((t + m) * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

/// Foreground pixels with at least one 4-neighbour outside the mask or frame.
pub fn boundary(mask: &Mask) -> Bitmap {
    let b = mask.decode();
    let (w, h) = (mask.width(), mask.height());
    let mut out = Bitmap::new(w, h).expect("mask dims are non-zero");
    for y in 0..h {
        for x in 0..w {
            if !b.get(x, y) {
                continue;
            }
            let edge = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !b.get(x - 1, y)
                || !b.get(x + 1, y)
                || !b.get(x, y - 1)
                || !b.get(x, y + 1);
            if edge {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Draws every segment's boundary in its id colour. Segments without an id
/// are drawn in white.
pub fn draw(image: &mut RgbaImage, set: &SegmentSet) -> Result<()> {
    for seg in &set.segments {
        let (w, h) = (seg.mask.width(), seg.mask.height());
        if image.dimensions() != (w, h) {
            return Err(Error::Image(format!(
                "frame {} is {}x{} but its masks are {w}x{h}",
                set.frame,
                image.width(),
                image.height()
            )));
        }
        let [r, g, b] = seg.id.map_or([255, 255, 255], id_color);
        let edge = boundary(&seg.mask);
        for y in 0..h {
            for x in 0..w {
                if edge.get(x, y) {
                    image.put_pixel(x, y, Rgba([r, g, b, 255]));
                }
            }
        }
    }
    Ok(())
}

/// Writes one PNG per input frame into `out_dir`, under the input file name.
/// Frames without predicted segments are copied byte for byte.
pub fn render(frames_dir: impl AsRef<Path>, preds: &[SegmentSet], out_dir: impl AsRef<Path>) -> Result<usize> {
    let out_dir = out_dir.as_ref();
    let frames = list_frames(frames_dir)?;
    if preds.len() > frames.len() {
        return Err(Error::Image(format!(
            "{} predicted frames but only {} images",
            preds.len(),
            frames.len()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (i, src) in frames.iter().enumerate() {
        let dst = out_dir.join(src.file_name().expect("listed files have names"));
        match preds.get(i).filter(|s| !s.is_empty()) {
            None => {
                std::fs::copy(src, &dst).map_err(|e| Error::io(&dst, e))?;
            }
            Some(set) => {
                let mut img = image::open(src)
                    .map_err(|e| Error::Image(format!("{}: {e}", src.display())))?
                    .to_rgba8();
                draw(&mut img, set)?;
                img.save_with_format(&dst, ImageFormat::Png)
                    .map_err(|e| Error::Image(format!("{}: {e}", dst.display())))?;
            }
        }
    }
    Ok(frames.len())
}
