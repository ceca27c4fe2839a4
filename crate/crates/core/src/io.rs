//! JSON Lines and JSON file formats.
//!
//! Detections, results and ground truth are JSON Lines with one
//! `{"frame": i, "segments": [...]}` object per frame, frames numbered densely
//! from 0. Warps are JSON Lines of `{"from", "to", "affine"}` objects. Every
//! parse error names the file and the 1-based line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::SegmentSet;
use crate::warp::{WarpChain, WarpField};

fn format_error(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

/// Streaming JSON Lines reader. Blank lines are skipped.
pub struct JsonlReader<R, T> {
    path: PathBuf,
    lines: std::io::Lines<R>,
    line: usize,
    _item: PhantomData<T>,
}

impl<T: DeserializeOwned> JsonlReader<BufReader<File>, T> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(path, BufReader::new(file)))
    }
}

impl<R: BufRead, T: DeserializeOwned> JsonlReader<R, T> {
    /// `path` is only used in error messages.
    pub fn new(path: impl Into<PathBuf>, reader: R) -> Self {
        Self {
            path: path.into(),
            lines: reader.lines(),
            line: 0,
            _item: PhantomData,
        }
    }

    /// 1-based number of the line last read.
    pub fn line(&self) -> usize {
        self.line
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<R: BufRead, T: DeserializeOwned> Iterator for JsonlReader<R, T> {
    type Item = Result<(usize, T)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(
                serde_json::from_str(&text)
                    .map(|v| (self.line, v))
                    .map_err(|e| format_error(&self.path, self.line, e)),
            );
        }
    }
}

/// Checks one decoded frame record against its predecessors: dense frame
/// numbering, a single frame size for the whole video, valid segments.
pub struct FrameChecker {
    next_frame: usize,
    dims: Option<(u32, u32)>,
}

impl Default for FrameChecker {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameChecker {
    pub fn new() -> Self {
        Self {
            next_frame: 0,
            dims: None,
        }
    }

    pub fn with_dims(width: u32, height: u32) -> Self {
        Self {
            next_frame: 0,
            dims: Some((width, height)),
        }
    }

    pub fn dims(&self) -> Option<(u32, u32)> {
        self.dims
    }

    pub fn check(&mut self, set: &SegmentSet, path: &Path, line: usize) -> Result<()> {
        if set.frame != self.next_frame {
            return Err(format_error(
                path,
                line,
                format!("expected frame {}, found frame {}", self.next_frame, set.frame),
            ));
        }
        for m in set.masks() {
            let d = (m.width(), m.height());
            match self.dims {
                None => self.dims = Some(d),
                Some(expected) if expected != d => {
                    return Err(format_error(
                        path,
                        line,
                        format!("mask is {}x{}, video is {}x{}", d.0, d.1, expected.0, expected.1),
                    ))
                }
                Some(_) => {}
            }
        }
        set.validate().map_err(|e| format_error(path, line, e))?;
        self.next_frame += 1;
        Ok(())
    }
}

/// Reads a whole detections, results or ground-truth file.
pub fn read_segment_sets(path: impl AsRef<Path>) -> Result<Vec<SegmentSet>> {
    let path = path.as_ref();
    let mut checker = FrameChecker::new();
    let mut out = Vec::new();
    for item in JsonlReader::<_, SegmentSet>::open(path)? {
        let (line, set) = item?;
        checker.check(&set, path, line)?;
        out.push(set);
    }
    Ok(out)
}

/// Frame size shared by every mask of the given frames, if any mask exists.
pub fn video_dims(sets: &[SegmentSet]) -> Option<(u32, u32)> {
    sets.iter()
        .flat_map(SegmentSet::masks)
        .map(|m| (m.width(), m.height()))
        .next()
}

pub fn segment_set_line(set: &SegmentSet) -> String {
    serde_json::to_string(set).expect("segment sets always serialize")
}

pub fn write_segment_sets(path: impl AsRef<Path>, sets: &[SegmentSet]) -> Result<()> {
    write_lines(path.as_ref(), sets.iter().map(segment_set_line))
}

pub fn read_warps(path: impl AsRef<Path>) -> Result<WarpChain> {
    let path = path.as_ref();
    let mut chain = WarpChain::new();
    for item in JsonlReader::<_, WarpField>::open(path)? {
        let (line, warp) = item?;
        warp.validate()
            .and_then(|_| chain.insert(warp))
            .map_err(|e| format_error(path, line, e))?;
    }
    Ok(chain)
}

pub fn write_warps(path: impl AsRef<Path>, chain: &WarpChain) -> Result<()> {
    write_lines(
        path.as_ref(),
        chain
            .warps()
            .map(|w| serde_json::to_string(&w).expect("warps always serialize")),
    )
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in lines {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads one JSON document; syntax and schema errors carry the line number.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| format_error(path, e.line(), e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Inputs and outputs of one `run`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub detections: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warps: Option<PathBuf>,
    /// Shell command that starts a propagation backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn validate(&self) -> Result<()> {
        match (&self.warps, &self.backend) {
            (Some(_), Some(_)) => Err(Error::Usage(
                "give either a warps file or a backend command, not both".into(),
            )),
            (None, None) => Err(Error::Usage("a warps file or a backend command is required".into())),
            _ => Ok(()),
        }
    }

    /// Loads a manifest file; relative paths are taken relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: RunManifest = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut m.detections);
        fix(&mut m.out);
        for p in [&mut m.warps, &mut m.frames, &mut m.config, &mut m.gt]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        Ok(m)
    }
}
