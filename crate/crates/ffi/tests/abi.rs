use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use trackfuse::io::segment_set_line;
use trackfuse::mask::{Mask, SegmentSet};
use trackfuse::pipeline::{run_video, Config};
use trackfuse::propagation::SyntheticPropagator;
use trackfuse::simulator::{
    corrupt, generate_ground_truth, Ellipse, InstanceSpec, MotionSpec, NoiseSpec, ScenarioSpec,
};
use trackfuse::warp::WarpChain;
use trackfuse_ffi::*;

fn last_error() -> String {
    let p = tf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    tf_string_free(s);
    out
}

fn mask(w: u32, h: u32, px: &[u8]) -> *mut TfMask {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tf_mask_from_bitmap(w, h, px.as_ptr(), &mut m) }, TfStatus::Ok);
    m
}

#[test]
fn mask_handles() {
    // 2 of the 4 foreground pixels shared: IoU 2/6
    let a = mask(4, 3, &[0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0]);
    let b = mask(4, 3, &[0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0]);
    unsafe {
        assert_eq!(tf_mask_area(a), 4);
        assert_eq!(tf_mask_area(ptr::null()), 0);
        let mut iou = 0.0;
        assert_eq!(tf_mask_iou(a, b, &mut iou), TfStatus::Ok);
        assert!((iou - 2.0 / 6.0).abs() < 1e-12);

        let mut buf = [7u8; 12];
        assert_eq!(tf_mask_to_bitmap(a, buf.as_mut_ptr(), 12), TfStatus::Ok);
        assert_eq!(buf, [0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0]);
        assert_eq!(tf_mask_to_bitmap(a, buf.as_mut_ptr(), 11), TfStatus::InvalidArgument);

        let c = mask(2, 2, &[1, 0, 0, 0]);
        assert_eq!(tf_mask_iou(a, c, &mut iou), TfStatus::Format);
        assert!(last_error().contains("4x3"), "{}", last_error());
        tf_mask_free(a);
        tf_mask_free(b);
        tf_mask_free(c);
        tf_mask_free(ptr::null_mut());
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(tf_mask_from_bitmap(2, 2, ptr::null(), &mut m), TfStatus::NullPointer);
        assert!(m.is_null());
        assert_eq!(last_error(), "data is null");
        let mut out = ptr::null_mut();
        assert_eq!(tf_tracker_finish(ptr::null_mut(), &mut out), TfStatus::NullPointer);
        assert_eq!(
            tf_run_video_json(ptr::null(), ptr::null(), ptr::null(), &mut out),
            TfStatus::NullPointer
        );
        tf_string_free(ptr::null_mut());
    }
}

#[test]
fn zero_sized_mask_is_invalid() {
    let mut m = ptr::null_mut();
    let px = [0u8; 1];
    assert_eq!(
        unsafe { tf_mask_from_bitmap(0, 3, px.as_ptr(), &mut m) },
        TfStatus::Format
    );
    assert!(m.is_null());
}

#[test]
fn hungarian_through_the_abi() {
    let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
    let mut perm = [9usize; 3];
    assert_eq!(
        unsafe { tf_hungarian(cost.as_ptr(), 3, perm.as_mut_ptr()) },
        TfStatus::Ok
    );
    // enumerated: 1+2+2 = 5; the next best permutations cost 6
    assert_eq!(perm, [1, 0, 2]);

    let ties = [0.0; 4];
    let mut perm = [9usize; 2];
    assert_eq!(
        unsafe { tf_hungarian(ties.as_ptr(), 2, perm.as_mut_ptr()) },
        TfStatus::Ok
    );
    assert_eq!(perm, [0, 1]);

    let nan = [0.0, f64::NAN, 0.0, 0.0];
    assert_eq!(
        unsafe { tf_hungarian(nan.as_ptr(), 2, perm.as_mut_ptr()) },
        TfStatus::InvalidArgument
    );
    assert!(last_error().contains("not finite"));
    assert_eq!(unsafe { tf_hungarian(ptr::null(), 0, ptr::null_mut()) }, TfStatus::Ok);
}

struct Video {
    detections: Vec<SegmentSet>,
    chain: WarpChain,
}

fn video() -> Video {
    let spec = ScenarioSpec {
        width: 64,
        height: 48,
        num_frames: 14,
        instances: vec![
            InstanceSpec {
                birth_frame: 0,
                death_frame: 14,
                shape: Ellipse::circle(18.0, 24.0, 8.0),
            },
            InstanceSpec {
                birth_frame: 4,
                death_frame: 11,
                shape: Ellipse::circle(44.0, 22.0, 7.0),
            },
        ],
        motion: MotionSpec::RandomWalk {
            max_step: 1,
            max_offset: 4,
        },
        seed: 3,
    };
    let gt = generate_ground_truth(&spec).unwrap();
    let noise = NoiseSpec {
        fp_rate: 0.3,
        jitter: 1,
        seed: 9,
        ..NoiseSpec::default()
    };
    Video {
        detections: corrupt(&gt.frames, &noise, 64, 48).unwrap(),
        chain: WarpChain::from_warps(gt.warps).unwrap(),
    }
}

fn expected(v: &Video, config: &Config) -> String {
    let out = run_video(&v.detections, SyntheticPropagator::new(v.chain.clone()), config, None).unwrap();
    out.frames.iter().map(|s| segment_set_line(s) + "\n").collect()
}

#[test]
fn run_video_json_matches_the_library() {
    let v = video();
    let det: String = v.detections.iter().map(|s| segment_set_line(s) + "\n").collect();
    let warps: String = v
        .chain
        .warps()
        .map(|w| serde_json::to_string(&w).unwrap() + "\n")
        .collect();
    let (det, warps) = (CString::new(det).unwrap(), CString::new(warps).unwrap());
    let config = CString::new(r#"{"T":2,"lambda2":2}"#).unwrap();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(
            tf_run_video_json(det.as_ptr(), warps.as_ptr(), ptr::null(), &mut out),
            TfStatus::Ok
        );
        assert_eq!(take(out), expected(&v, &Config::default()));
        assert_eq!(
            tf_run_video_json(det.as_ptr(), warps.as_ptr(), config.as_ptr(), &mut out),
            TfStatus::Ok
        );
        let want = expected(
            &v,
            &Config {
                window: 2,
                lambda2: 2,
                ..Config::default()
            },
        );
        assert_eq!(take(out), want);
    }
}

#[test]
fn streaming_tracker_matches_batch() {
    let v = video();
    let mut t = ptr::null_mut();
    let mut got = String::new();
    unsafe {
        assert_eq!(tf_tracker_new(ptr::null(), &mut t), TfStatus::Ok);
        for w in v.chain.warps() {
            let a = w.transform.0;
            assert_eq!(
                tf_tracker_add_warp(t, w.from_frame, w.to_frame, a.as_ptr()),
                TfStatus::Ok
            );
        }
        for (i, d) in v.detections.iter().enumerate() {
            let line = CString::new(segment_set_line(d)).unwrap();
            let mut out = ptr::null_mut();
            assert_eq!(tf_tracker_push_frame_json(t, line.as_ptr(), &mut out), TfStatus::Ok);
            let chunk = take(out);
            // default window of 3: results arrive after every third frame
            assert_eq!(chunk.lines().count(), if i % 3 == 2 { 3 } else { 0 }, "frame {i}");
            got.push_str(&chunk);
        }
        let mut out = ptr::null_mut();
        assert_eq!(tf_tracker_finish(t, &mut out), TfStatus::Ok);
        got.push_str(&take(out));
        tf_tracker_free(t);
    }
    assert_eq!(got, expected(&v, &Config::default()));
}

#[test]
fn tracker_errors() {
    let mut t = ptr::null_mut();
    unsafe {
        let bad = CString::new(r#"{"T":0}"#).unwrap();
        assert_eq!(tf_tracker_new(bad.as_ptr(), &mut t), TfStatus::InvalidArgument);
        assert!(t.is_null());
        let unknown = CString::new(r#"{"windw":3}"#).unwrap();
        assert_eq!(tf_tracker_new(unknown.as_ptr(), &mut t), TfStatus::Format);

        assert_eq!(tf_tracker_new(ptr::null(), &mut t), TfStatus::Ok);
        let mut out = ptr::null_mut();
        let broken = CString::new(r#"{"frame":0"#).unwrap();
        assert_eq!(
            tf_tracker_push_frame_json(t, broken.as_ptr(), &mut out),
            TfStatus::Format
        );
        assert!(out.is_null());
        let m = Mask::from_pixels(4, 4, &[(1, 1)]).unwrap();
        let skipped = SegmentSet::from_masks(1, [m]).unwrap();
        let line = CString::new(segment_set_line(&skipped)).unwrap();
        assert_eq!(
            tf_tracker_push_frame_json(t, line.as_ptr(), &mut out),
            TfStatus::InvalidArgument
        );
        assert!(last_error().contains("expected detections for frame 0"));

        let singular = [0.0; 6];
        assert_eq!(tf_tracker_add_warp(t, 0, 1, singular.as_ptr()), TfStatus::Format);
        assert_eq!(
            tf_tracker_add_warp(t, 0, 2, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0].as_ptr()),
            TfStatus::Format
        );
        tf_tracker_free(t);
    }
}

#[test]
fn errors_are_per_thread() {
    let p = [0u8; 1];
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { tf_mask_from_bitmap(0, 0, p.as_ptr(), &mut m) },
        TfStatus::Format
    );
    std::thread::spawn(|| assert!(tf_last_error_message().is_null()))
        .join()
        .unwrap();
    assert!(!tf_last_error_message().is_null());
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(tf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/trackfuse.h")).unwrap()
}

#[test]
fn header_declares_every_export() {
    let h = header();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14, "{exports:?}");
    for name in exports {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(h.contains("typedef struct TfMask TfMask;"));
    assert!(h.contains("TF_STATUS_INTERNAL = 5"));
}

/// `target/<profile>`, where cargo leaves the static library.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = profile_dir().join("libtrackfuse_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        format!("ok {}\n", env!("CARGO_PKG_VERSION"))
    );
}
