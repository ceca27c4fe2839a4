#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use trackfuse::mask::{Bitmap, Mask};
use trackfuse::simulator::{Ellipse, InstanceSpec, MotionSpec, NoiseSpec, ScenarioSpec};

/// Random bitmap with roughly `density` foreground.
pub fn random_bitmap(rng: &mut ChaCha8Rng, w: u32, h: u32, density: f64) -> Bitmap {
    let data = (0..w * h).map(|_| rng.random::<f64>() < density).collect();
    Bitmap::from_vec(w, h, data).unwrap()
}

/// Axis-aligned rectangle, inclusive corners, clipped to the frame.
pub fn rect(w: u32, h: u32, x0: i64, y0: i64, x1: i64, y1: i64) -> Mask {
    let mut px = Vec::new();
    for y in y0.max(0)..=y1.min(h as i64 - 1) {
        for x in x0.max(0)..=x1.min(w as i64 - 1) {
            px.push((x as u32, y as u32));
        }
    }
    Mask::from_pixels(w, h, &px).unwrap()
}

/// Pixel-count IoU computed on decoded bitmaps; 0 when both are empty.
pub fn oracle_iou(a: &Mask, b: &Mask) -> f64 {
    let (a, b) = (a.decode(), b.decode());
    let (mut inter, mut uni) = (0usize, 0usize);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        inter += (*x && *y) as usize;
        uni += (*x || *y) as usize;
    }
    if uni == 0 {
        0.0
    } else {
        inter as f64 / uni as f64
    }
}

/// Minimum total cost over all permutations; among permutations within
/// `tol` of it, the lexicographically smallest.
pub fn brute_force_assignment(cost: &[Vec<f64>], tol: f64) -> (Vec<usize>, f64) {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut all = Vec::new();
    permute(&mut perm, 0, &mut all);
    all.sort();
    let total = |p: &[usize]| p.iter().enumerate().map(|(r, &c)| cost[r][c]).sum::<f64>();
    let best = all.iter().map(|p| total(p)).fold(f64::INFINITY, f64::min);
    let pick = all.into_iter().find(|p| total(p) <= best + tol).unwrap();
    (pick, best)
}

fn permute(p: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == p.len() {
        out.push(p.clone());
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, out);
        p.swap(k, i);
    }
}

pub const A3_WIDTH: u32 = 160;
pub const A3_HEIGHT: u32 = 120;

/// Two large instances present for the whole video under a bounded random walk.
pub fn a3_scenario(num_frames: usize) -> ScenarioSpec {
    ScenarioSpec {
        width: A3_WIDTH,
        height: A3_HEIGHT,
        num_frames,
        instances: vec![
            InstanceSpec {
                birth_frame: 0,
                death_frame: num_frames,
                shape: Ellipse {
                    cx: 50.0,
                    cy: 60.0,
                    rx: 20.0,
                    ry: 16.0,
                    angle: 0.4,
                },
            },
            InstanceSpec {
                birth_frame: 0,
                death_frame: num_frames,
                shape: Ellipse::circle(115.0, 58.0, 16.0),
            },
        ],
        motion: MotionSpec::RandomWalk {
            max_step: 1,
            max_offset: 10,
        },
        seed: 11,
    }
}

/// Single-frame spurious blobs at rate 0.2 and boundary jitter of up to 2 px.
pub fn a3_noise(seed: u64) -> NoiseSpec {
    NoiseSpec {
        fp_rate: 0.2,
        jitter: 2,
        seed,
        ..NoiseSpec::default()
    }
}

/// Validates `instance` against one of the bundled schemas.
pub fn schema_check(name: &str, instance: &serde_json::Value) -> Result<(), String> {
    let schema: serde_json::Value = serde_json::from_str(trackfuse::schema::get(name).expect("known schema")).unwrap();
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    let errors: Vec<String> = validator
        .iter_errors(instance)
        .map(|e| format!("{e} at {}", e.instance_path()))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(format!("{name}: {}", errors.join("; ")))
    }
}

/// Validates every line of a JSON Lines file.
pub fn schema_check_lines(name: &str, path: &std::path::Path) -> Result<usize, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut n = 0;
    for (i, line) in text.lines().enumerate() {
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        schema_check(name, &v).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        n += 1;
    }
    Ok(n)
}

pub fn schema_check_file(name: &str, path: &std::path::Path) -> Result<(), String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    schema_check(name, &v).map_err(|e| format!("{}: {e}", path.display()))
}
