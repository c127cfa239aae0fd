use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use surfcode::formats::{load_codebook, load_codemap};
use surfcode::harness::{Builtin, MeshSpec};
use surfcode::{CameraIntrinsics, PoseSE3};

fn surfcode(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surfcode"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn encode_reports_leaves_and_matches_across_radices() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let bin = ok_json(&surfcode(d, &["encode", "--digits", "8", "--seed", "3", "--output", "bin"]));
    let r = &bin["result"];
    assert_eq!(r["leaves"], 256);
    assert!(r["vertices"].as_u64().unwrap() >= 256);
    assert!(r["max_leaf_diameter_mm"].as_f64().unwrap() > 0.0);
    let hist_total: u64 = r["leaf_size_histogram"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["leaves"].as_u64().unwrap())
        .sum();
    assert_eq!(hist_total, 256);
    assert_eq!(bin["config"]["encoding"]["seed"], 3);

    ok_json(&surfcode(d, &["encode", "--radix", "16", "--digits", "2", "--seed", "3", "--output", "hex"]));
    let a = load_codebook(d.join("bin/codebook.zbcb")).unwrap();
    let b = load_codebook(d.join("hex/codebook.zbcb")).unwrap();
    assert_eq!(a.convert_radix(16).unwrap().table(), b.table());
}

#[test]
fn encode_without_upsampling_rejects_long_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = surfcode(tmp.path(), &["encode", "--builtin", "tetrahedron", "--digits", "6", "--no-upsample"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("classes"));
}

fn inside(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let cross = |o: [f64; 2], u: [f64; 2], v: [f64; 2]| (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0]);
    let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
    (d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0) || (d1 <= 0.0 && d2 <= 0.0 && d3 <= 0.0)
}

#[test]
fn render_mask_matches_silhouette_area() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(
        d,
        "scene.toml",
        "[mesh]\nbuiltin = \"cube\"\nscale = 50.0\nupsample = false\n\n[encoding]\ndigits = 3\n\n\
         [camera]\nfx = 300.0\nfy = 300.0\ncx = 32.0\ncy = 32.0\nwidth = 64\nheight = 64\n",
    );
    write(d, "pose.json", r#"{"R": [1,0,0, 0,1,0, 0,0,1], "t": [0, 0, 500]}"#);
    let s = ok_json(&surfcode(d, &["render", "--config", "scene.toml", "--pose", "pose.json", "--output", "r"]));

    let mesh = MeshSpec {
        path: None,
        builtin: Some(Builtin::Cube),
        scale: 50.0,
        upsample: false,
    }
    .load()
    .unwrap();
    let cam = CameraIntrinsics::new(300.0, 300.0, 32.0, 32.0, 64, 64).unwrap();
    let pose = PoseSE3::from_row_major(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 500.0]).unwrap();
    let proj: Vec<[f64; 2]> = mesh
        .vertices()
        .iter()
        .map(|v| {
            let q = cam.project(&pose.transform(v)).unwrap();
            [q.x, q.y]
        })
        .collect();
    let mut area = 0;
    for v in 0..64 {
        for u in 0..64 {
            let p = [u as f64 + 0.5, v as f64 + 0.5];
            if mesh
                .faces()
                .iter()
                .any(|f| inside(p, proj[f[0] as usize], proj[f[1] as usize], proj[f[2] as usize]))
            {
                area += 1;
            }
        }
    }
    let map = load_codemap(d.join("r/codemap.zbcm")).unwrap();
    assert_eq!(map.masked_count(), area);
    assert_eq!(s["result"]["masked_pixels"], area);
    assert!(area > 0);
}

#[test]
fn render_match_solve_eval_chain_recovers_the_pose() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let run = |args: &[&str]| ok_json(&surfcode(d, &[args, &["--output", "o"][..]].concat()));
    let enc = run(&["encode", "--digits", "10"]);
    let leaf_mm = enc["result"]["max_leaf_diameter_mm"].as_f64().unwrap();
    let r = run(&["render", "--digits", "10", "--pose-index", "2"]);
    let m = run(&["match", "--codemap", "o/codemap.zbcm", "--codebook", "o/codebook.zbcb"]);
    assert_eq!(m["result"]["correspondences"], r["result"]["masked_pixels"]);
    assert_eq!(m["result"]["unknown_codes"], 0);
    let csv = fs::read_to_string(d.join("o/correspondences.csv")).unwrap();
    assert!(csv.starts_with("u,v,x,y,z,code_hex"));

    let s = run(&["solve-pose", "--correspondences", "o/correspondences.csv"]);
    assert!(s["result"]["pose"]["inlier_count"].as_u64().unwrap() >= 6);
    let pose: Value = serde_json::from_str(&fs::read_to_string(d.join("o/pose.json")).unwrap()).unwrap();
    assert_eq!(pose["R"].as_array().unwrap().len(), 9);

    let e = run(&["eval", "--pred", "o/pose.json", "--gt", "o/pose_gt.json"]);
    let add = e["result"]["add"]["mean_error_mm"].as_f64().unwrap();
    assert!(add < leaf_mm, "ADD {add} mm, leaf diameter {leaf_mm} mm");
    assert_eq!(e["result"]["add"]["recall_add"], 1.0);
}

#[test]
fn eval_of_identical_poses_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let poses = r#"[{"R": [1,0,0, 0,1,0, 0,0,1], "t": [0, 0, 500]},
                    {"R": [0,-1,0, 1,0,0, 0,0,1], "t": [10, -5, 450], "inlier_count": 3}]"#;
    write(d, "p.json", poses);
    let e = ok_json(&surfcode(d, &["eval", "--pred", "p.json", "--gt", "p.json", "--output", "e"]));
    for key in ["add", "add_s"] {
        assert_eq!(e["result"][key]["recall_add"], 1.0);
        assert_eq!(e["result"][key]["auc_add_allpoints"], 1.0);
        assert_eq!(e["result"][key]["auc_add_11pt"], 1.0);
        assert_eq!(e["result"][key]["n"], 2);
    }
    write(d, "one.json", r#"{"R": [1,0,0, 0,1,0, 0,0,1], "t": [0, 0, 500]}"#);
    let out = surfcode(d, &["eval", "--pred", "one.json", "--gt", "p.json", "--output", "e"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn loss_check_single_pixel() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(
        d,
        "pred.json",
        r#"{"width": 1, "height": 1, "digits": 2, "bits": [0.8, 0.3], "mask": [0.9], "gt": [2]}"#,
    );
    let l = ok_json(&surfcode(d, &["loss-check", "--input", "pred.json", "--output", "l"]));
    let total = l["result"]["total"].as_f64().unwrap();
    assert!((total - 0.969_727_742_879_413_2).abs() < 1e-9, "{total}");
    assert_eq!(l["result"]["gated_pixels"], 1);
    assert!(d.join("l/loss.json").exists());

    write(d, "bad.json", r#"{"width": 1, "height": 1, "digits": 2, "bits": [0.8, 1.3], "mask": [0.9], "gt": [2]}"#);
    let out = surfcode(d, &["loss-check", "--input", "bad.json", "--output", "l"]);
    assert_eq!(out.status.code(), Some(2));
}

const SMALL: &str = "[encoding]\ndigits = 8\n\n[poses]\ncount = 3\n\n[ablation]\ntruncation = [4, 8]\nradices = [2, 16]\n";

#[test]
fn bench_is_reproducible_and_self_describing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "small.toml", SMALL);
    let args = [
        "bench-bitflip", "--config", "small.toml", "--seed", "5", "--flip-bits", "1", "--flip-p", "0.1", "--output", "b",
    ];
    let s = ok_json(&surfcode(d, &args));
    let a = fs::read(d.join("b/report.json")).unwrap();
    let rows = fs::read(d.join("b/poses.csv")).unwrap();
    ok_json(&surfcode(d, &args));
    assert_eq!(a, fs::read(d.join("b/report.json")).unwrap());
    assert_eq!(rows, fs::read(d.join("b/poses.csv")).unwrap());

    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["codebook_fingerprint"].as_str().unwrap().len(), 64);
    assert_eq!(report["config"]["poses"]["seed"], 5);
    assert_eq!(report["config"]["corruption"]["bit_flip"][0], 0.1);
    assert_eq!(report["codebook_fingerprint"], s["result"]["codebook_fingerprint"]);
    assert_eq!(s["config"]["solver"]["seed"], 5);
}

#[test]
fn bad_input_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "unknown.toml", "[mesh]\ncolour = \"red\"\n");
    write(d, "invalid.toml", "[poses]\ncount = 0\n");
    write(d, "blocker", "");
    let code = |args: &[&str]| surfcode(d, args).status.code();
    assert_eq!(code(&["encode", "--config", "unknown.toml"]), Some(2));
    assert_eq!(code(&["encode", "--config", "missing.toml"]), Some(2));
    assert_eq!(code(&["bench-bitflip", "--config", "invalid.toml"]), Some(2));
    assert_eq!(code(&["bench-bitflip", "--digits", "8", "--flip-bits", "9"]), Some(2));
    assert_eq!(code(&["match", "--codemap", "none.zbcm", "--codebook", "none.zbcb"]), Some(2));
    assert_eq!(code(&["encode", "--radix", "1"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    // an output path below a regular file cannot be created
    assert_eq!(code(&["encode", "--digits", "4", "--output", "blocker/sub"]), Some(3));
    write(d, "few.csv", "u,v,x,y,z,code_hex\n");
    assert_eq!(code(&["solve-pose", "--correspondences", "few.csv", "--output", "s"]), Some(3));
}
