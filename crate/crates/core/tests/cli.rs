mod common;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::{schema_check, schema_check_file, schema_check_lines};
use trackfuse::io::{read_segment_sets, write_segment_sets, write_warps};
use trackfuse::mask::{Mask, Segment, SegmentSet};
use trackfuse::warp::WarpChain;

fn trackfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trackfuse"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate_demo(dir: &Path) -> PathBuf {
    let out = dir.join("sim");
    let o = trackfuse(&["simulate", "--demo", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn demo_simulation_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_demo(dir.path());
    let mut names: Vec<String> = std::fs::read_dir(&sim)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["detections.jsonl", "gt.jsonl", "warps.jsonl"]);
    assert_eq!(schema_check_lines("segment_set", &sim.join("gt.jsonl")).unwrap(), 120);
    schema_check_lines("segment_set", &sim.join("detections.jsonl")).unwrap();
    assert_eq!(schema_check_lines("warp", &sim.join("warps.jsonl")).unwrap(), 119);
}

#[test]
fn noise_seed_changes_detections_only() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    std::fs::write(&scenario, trackfuse::commands::DEMO_SCENARIO).unwrap();
    let mut outs = Vec::new();
    for (i, noise) in [r#"{"fp_rate":0.5,"seed":1}"#, r#"{"fp_rate":0.5,"seed":2}"#, "{}"]
        .iter()
        .enumerate()
    {
        let n = dir.path().join(format!("n{i}.json"));
        std::fs::write(&n, noise).unwrap();
        let out = dir.path().join(format!("o{i}"));
        assert!(trackfuse(&[
            "simulate",
            "--scenario",
            s(&scenario),
            "--noise",
            s(&n),
            "--out",
            s(&out)
        ])
        .status
        .success());
        outs.push(out);
    }
    let read = |p: PathBuf| std::fs::read(p).unwrap();
    assert_eq!(read(outs[0].join("gt.jsonl")), read(outs[1].join("gt.jsonl")));
    assert_ne!(
        read(outs[0].join("detections.jsonl")),
        read(outs[1].join("detections.jsonl"))
    );
    assert_eq!(read(outs[2].join("detections.jsonl")), read(outs[2].join("gt.jsonl")));
}

#[test]
fn run_outputs_validate_and_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_demo(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = trackfuse(&[
            "run",
            "--detections",
            s(&sim.join("detections.jsonl")),
            "--warps",
            s(&sim.join("warps.jsonl")),
            "--gt",
            s(&sim.join("gt.jsonl")),
            "--seed",
            "7",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(schema_check_lines("results", &a.join("results.jsonl")).unwrap(), 120);
    schema_check_file("meta", &a.join("meta.json")).unwrap();
    schema_check_file("bank", &a.join("bank.json")).unwrap();
    schema_check_file("metrics", &a.join("metrics.json")).unwrap();
    for f in ["results.jsonl", "meta.json", "bank.json", "metrics.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn manifest_run_matches_flag_run() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_demo(dir.path());
    let manifest = dir.path().join("m.json");
    std::fs::write(
        &manifest,
        r#"{"detections":"sim/detections.jsonl","warps":"sim/warps.jsonl","out":"via_manifest"}"#,
    )
    .unwrap();
    schema_check_file("manifest", &manifest).unwrap();
    assert!(trackfuse(&["run", "--manifest", s(&manifest)]).status.success());
    let flags = dir.path().join("via_flags");
    let o = trackfuse(&[
        "run",
        "--detections",
        s(&sim.join("detections.jsonl")),
        "--warps",
        s(&sim.join("warps.jsonl")),
        "--out",
        s(&flags),
    ]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("via_manifest/results.jsonl")).unwrap(),
        std::fs::read(flags.join("results.jsonl")).unwrap()
    );
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("d.jsonl");
    std::fs::write(&det, "{\"frame\":0,\"segments\":[]}\n").unwrap();
    let out = dir.path().join("o");
    let o = trackfuse(&["run", "--detections", s(&det), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warps"));
    let o = trackfuse(&[
        "run",
        "--detections",
        s(&det),
        "--out",
        s(&out),
        "--warps",
        "w",
        "--backend",
        "b",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(trackfuse(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(trackfuse(&["schema", "nope"]).status.code(), Some(1));
    assert_eq!(trackfuse(&["--help"]).status.code(), Some(0));

    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"theta": 1.5}"#).unwrap();
    let warps = dir.path().join("w.jsonl");
    std::fs::write(&warps, "").unwrap();
    let o = trackfuse(&[
        "run",
        "--detections",
        s(&det),
        "--warps",
        s(&warps),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_input_exits_2_naming_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("det.jsonl");
    std::fs::write(
        &det,
        "{\"frame\":0,\"segments\":[]}\n{\"frame\":1,\"segments\":[{\"mask\":{\"w\":2}}]}\n",
    )
    .unwrap();
    let warps = dir.path().join("w.jsonl");
    std::fs::write(&warps, "").unwrap();
    let o = trackfuse(&[
        "run",
        "--detections",
        s(&det),
        "--warps",
        s(&warps),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("det.jsonl:2"), "{err}");
}

#[test]
fn missing_warp_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let m = Mask::from_pixels(6, 4, &[(1, 1), (2, 1)]).unwrap();
    let det = dir.path().join("d.jsonl");
    let sets: Vec<SegmentSet> = (0..3)
        .map(|f| SegmentSet::from_masks(f, [m.clone()]).unwrap())
        .collect();
    write_segment_sets(&det, &sets).unwrap();
    let warps = dir.path().join("w.jsonl");
    write_warps(&warps, &WarpChain::identity(2)).unwrap();
    let o = trackfuse(&[
        "run",
        "--detections",
        s(&det),
        "--warps",
        s(&warps),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

fn eval(dir: &Path, pred: &[SegmentSet], gt: &[SegmentSet], extra: &[&str]) -> serde_json::Value {
    let (p, g) = (dir.join("p.jsonl"), dir.join("g.jsonl"));
    write_segment_sets(&p, pred).unwrap();
    write_segment_sets(&g, gt).unwrap();
    let mut args = vec!["eval", "--pred", s(&p), "--gt", s(&g)];
    args.extend_from_slice(extra);
    let o = trackfuse(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    schema_check("metrics", &v).unwrap();
    v
}

#[test]
fn eval_identity_and_empty_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let gt = read_segment_sets(simulate_demo(dir.path()).join("gt.jsonl")).unwrap();
    let v = eval(dir.path(), &gt, &gt, &[]);
    assert_eq!(v["segmentation"]["dice"], 1.0);
    assert_eq!(v["segmentation"]["mae"], 0.0);
    assert_eq!(v["segmentation"]["tc"], serde_json::Value::Null);
    let empty: Vec<SegmentSet> = (0..gt.len()).map(SegmentSet::empty).collect();
    let v = eval(dir.path(), &empty, &gt, &[]);
    assert_eq!(v["segmentation"]["dice"], 0.0);
}

#[test]
fn eval_two_frame_toy_matches_pixel_counts() {
    let (w, h) = (10u32, 10u32);
    let gt_px = [(2, 2), (3, 2), (2, 3), (3, 3)];
    let pred0_px = [(2, 2), (3, 2), (7, 7)];
    let pred1_px = [(0, 0)];
    let mk = |px: &[(u32, u32)]| Mask::from_pixels(w, h, px).unwrap();
    let gt = vec![SegmentSet::from_masks(0, [mk(&gt_px)]).unwrap(), SegmentSet::empty(1)];
    let pred = vec![
        SegmentSet {
            frame: 0,
            segments: vec![Segment::new(mk(&pred0_px))],
        },
        SegmentSet {
            frame: 1,
            segments: vec![Segment::new(mk(&pred1_px))],
        },
    ];

    // Oracle on explicit pixel sets.
    let set = |px: &[(u32, u32)]| px.iter().copied().collect::<HashSet<_>>();
    let scores = |p: &HashSet<(u32, u32)>, g: &HashSet<(u32, u32)>| {
        let inter = p.intersection(g).count() as f64;
        let union = p.union(g).count() as f64;
        let dice = if p.len() + g.len() == 0 {
            1.0
        } else {
            2.0 * inter / (p.len() + g.len()) as f64
        };
        let iou = if union == 0.0 { 1.0 } else { inter / union };
        let mae = p.symmetric_difference(g).count() as f64 / (w * h) as f64;
        (dice, iou, mae)
    };
    let f0 = scores(&set(&pred0_px), &set(&gt_px));
    let f1 = scores(&set(&pred1_px), &HashSet::new());

    let dir = tempfile::tempdir().unwrap();
    let close = |v: &serde_json::Value, x: f64| (v.as_f64().unwrap() - x).abs() < 1e-12;
    let pos = eval(dir.path(), &pred, &gt, &[]);
    assert!(close(&pos["segmentation"]["dice"], f0.0));
    assert!(close(&pos["segmentation"]["iou"], f0.1));
    assert!(close(&pos["segmentation"]["mae"], f0.2));
    let all = eval(dir.path(), &pred, &gt, &["--all-frames"]);
    assert!(close(&all["segmentation"]["dice"], (f0.0 + f1.0) / 2.0));
    assert!(close(&all["segmentation"]["mae"], (f0.2 + f1.2) / 2.0));
    assert_eq!(all["segmentation"]["frames_evaluated"], 2);

    // Frame 0: box of the prediction spans (2,2)-(7,7), IoU 4/36 with the
    // ground-truth box, so no detection match at 0.5. Frame 1 adds one more
    // unmatched prediction.
    assert_eq!(all["detection"]["f1_50"], 0.0);
    assert_eq!(all["false_positive_instances"], 2);
}

#[test]
fn overlay_colours_follow_ids() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames).unwrap();
    for i in 0..3 {
        image::RgbaImage::from_pixel(12, 8, image::Rgba([0, 0, 0, 255]))
            .save(frames.join(format!("f{i}.png")))
            .unwrap();
    }
    let px: Vec<(u32, u32)> = (2..6).flat_map(|y| (3..8).map(move |x| (x, y))).collect();
    let m = Mask::from_pixels(12, 8, &px).unwrap();
    let preds = vec![
        SegmentSet {
            frame: 0,
            segments: vec![Segment::with_id(m.clone(), 5)],
        },
        SegmentSet {
            frame: 1,
            segments: vec![Segment::with_id(m.clone(), 5)],
        },
        SegmentSet::empty(2),
    ];
    let pred = dir.path().join("p.jsonl");
    write_segment_sets(&pred, &preds).unwrap();
    let out = dir.path().join("out");
    assert!(
        trackfuse(&["overlay", "--frames", s(&frames), "--pred", s(&pred), "--out", s(&out)])
            .status
            .success()
    );
    let colours = |name: &str| -> HashSet<[u8; 4]> {
        image::open(out.join(name))
            .unwrap()
            .to_rgba8()
            .pixels()
            .map(|p| p.0)
            .collect()
    };
    let c0 = colours("f0.png");
    assert_eq!(c0.len(), 2, "background plus one contour colour");
    assert_eq!(c0, colours("f1.png"));
    assert_eq!(
        std::fs::read(out.join("f2.png")).unwrap(),
        std::fs::read(frames.join("f2.png")).unwrap()
    );
}

#[test]
fn schema_subcommand_lists_and_prints() {
    let o = trackfuse(&["schema"]);
    let names = String::from_utf8(o.stdout).unwrap();
    assert!(names.lines().any(|l| l == "results"));
    let o = trackfuse(&["schema", "mask"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["$id"], "urn:trackfuse:schema:mask:v1");
}
