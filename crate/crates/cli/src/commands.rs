use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};
use surfcode::encoder::{build_hierarchy, Codebook};
use surfcode::formats::{
    load_codebook, load_codemap, read_correspondences, save_codebook, save_codemap, write_correspondences,
    write_json, PoseRecord,
};
use surfcode::harness::{run_bench, sample_poses, upsample_for, write_outputs, CorruptionSpec, ScenarioConfig};
use surfcode::losses::{total_loss, ErrorHistogram, LossParams, PredictionMap};
use surfcode::matcher::{coherence_filter, match_codes};
use surfcode::metrics::{
    add_error, adds_error, diameter, subsample_points, EvalConfig, ObjectEval, ADDS_MAX_POINTS, ADDS_SUBSAMPLE_SEED,
};
use surfcode::mesh::fingerprint_hex;
use surfcode::pnp::ransac_pnp;
use surfcode::render::CodeRenderer;
use surfcode::{CodeLayout, CodeMap, PoseSE3, RoiTransform, TriangleMesh};

use crate::fail::{Fail, Tag};
use crate::{Cli, Command, Global, ObjectArgs};

pub fn run(cli: Cli) -> Result<Value, Fail> {
    set_threads(cli.global.threads)?;
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Encode(a) => {
            apply_object(&mut cfg, &a.object);
            let dir = output_dir(&cli.global, &mut cfg)?;
            encode(&cfg, &dir)
        }
        Command::Render(a) => {
            apply_object(&mut cfg, &a.object);
            let dir = output_dir(&cli.global, &mut cfg)?;
            render(&cfg, &dir, a.pose.as_deref(), a.pose_index)
        }
        Command::Match(a) => {
            let dir = output_dir(&cli.global, &mut cfg)?;
            matching(&cfg, &dir, &a)
        }
        Command::SolvePose(a) => {
            let dir = output_dir(&cli.global, &mut cfg)?;
            solve(&cfg, &dir, &a.correspondences)
        }
        Command::Eval(a) => {
            apply_object(&mut cfg, &a.object);
            let dir = output_dir(&cli.global, &mut cfg)?;
            eval(&cfg, &dir, &a.pred, &a.gt)
        }
        Command::BenchBitflip(a) => {
            apply_object(&mut cfg, &a.object);
            if let Some(n) = a.poses {
                cfg.poses.count = n;
            }
            if !a.flip_bits.is_empty() {
                let bits = cfg.code_bits();
                if let Some(b) = a.flip_bits.iter().find(|&&b| b < 1 || b > bits) {
                    return Err(Fail::config(anyhow::anyhow!("flip bit {b} outside [1, {bits}]")));
                }
                let seed = cfg.corruption.seed;
                cfg.corruption = CorruptionSpec {
                    seed,
                    ..CorruptionSpec::flips_on(bits, a.flip_bits.iter().copied(), a.flip_p)
                };
            }
            if let Some(f) = a.filter {
                cfg.filter.mode = f.into();
            }
            let dir = output_dir(&cli.global, &mut cfg)?;
            bench(&cfg, &dir)
        }
        Command::LossCheck(a) => {
            let dir = output_dir(&cli.global, &mut cfg)?;
            loss_check(&cfg, &dir, &a.input)
        }
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<(), Fail> {
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().or_pipeline()?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_n: usize) -> Result<(), Fail> {
    Ok(())
}

fn load_config(g: &Global) -> Result<ScenarioConfig, Fail> {
    let cfg = match &g.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Fail::config(anyhow::anyhow!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Fail::config(anyhow::anyhow!("{}: {e}", p.display())))?
        }
        None => ScenarioConfig::default(),
    };
    Ok(match g.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn apply_object(cfg: &mut ScenarioConfig, m: &ObjectArgs) {
    if let Some(p) = &m.mesh {
        cfg.mesh.path = Some(p.clone());
        cfg.mesh.builtin = None;
    }
    if let Some(b) = m.builtin {
        cfg.mesh.builtin = Some(b.into());
        cfg.mesh.path = None;
    }
    if let Some(s) = m.scale {
        cfg.mesh.scale = s;
    }
    if m.no_upsample {
        cfg.mesh.upsample = false;
    }
    if let Some(r) = m.radix {
        cfg.encoding.radix = r;
    }
    if let Some(d) = m.digits {
        cfg.encoding.digits = d;
    }
}

/// Resolves and creates the output directory, recording it in the config.
fn output_dir(g: &Global, cfg: &mut ScenarioConfig) -> Result<PathBuf, Fail> {
    let dir = g
        .output
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Fail::pipeline(anyhow::anyhow!("output directory {}: {e}", dir.display())))?;
    cfg.output = Some(dir.clone());
    Ok(dir)
}

fn summary(command: &str, cfg: &ScenarioConfig, outputs: &[PathBuf], result: Value) -> Value {
    json!({
        "command": command,
        "config": cfg,
        "outputs": outputs,
        "result": result,
    })
}

fn validate_object(cfg: &ScenarioConfig) -> Result<(), Fail> {
    if cfg.mesh.path.is_some() == cfg.mesh.builtin.is_some() {
        return Err(Fail::config(anyhow::anyhow!("mesh needs exactly one of path or builtin")));
    }
    if !(cfg.mesh.scale > 0.0 && cfg.mesh.scale.is_finite()) {
        return Err(Fail::config(anyhow::anyhow!("mesh scale {} must be positive", cfg.mesh.scale)));
    }
    cfg.encoding.layout().or_config()?;
    Ok(())
}

/// Mesh as loaded, and the mesh the codes are built on.
fn object_meshes(cfg: &ScenarioConfig) -> Result<(TriangleMesh, TriangleMesh), Fail> {
    validate_object(cfg)?;
    let base = cfg.mesh.load()?;
    let mesh = if cfg.mesh.upsample {
        upsample_for(&base, &cfg.encoding)?
    } else {
        base.clone()
    };
    Ok((base, mesh))
}

fn build_book(cfg: &ScenarioConfig, mesh: &TriangleMesh) -> Result<Codebook, Fail> {
    let h = build_hierarchy(mesh, &cfg.encoding).map_err(|e| Fail::from(surfcode::harness::HarnessError::from(e)))?;
    Codebook::build(mesh, &h).or_pipeline()
}

fn encode(cfg: &ScenarioConfig, dir: &Path) -> Result<Value, Fail> {
    let (base, mesh) = object_meshes(cfg)?;
    let book = build_book(cfg, &mesh)?;
    let stats = book.leaf_stats(&mesh);
    let path = dir.join("codebook.zbcb");
    save_codebook(&path, &book).or_pipeline()?;
    let histogram: Vec<Value> = stats
        .size_histogram
        .iter()
        .map(|(size, count)| json!({"size": size, "leaves": count}))
        .collect();
    Ok(summary(
        "encode",
        cfg,
        &[path],
        json!({
            "base_vertices": base.vertex_count(),
            "vertices": mesh.vertex_count(),
            "leaves": stats.leaf_count,
            "leaf_size_histogram": histogram,
            "max_leaf_diameter_mm": stats.max_diameter_mm,
            "fingerprint": fingerprint_hex(book.fingerprint()),
        }),
    ))
}

/// Pose file contents; extra fields such as `inlier_count` are ignored.
#[derive(Debug, Deserialize)]
struct PoseIn {
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

impl PoseIn {
    fn pose(&self) -> Result<PoseSE3, Fail> {
        PoseSE3::from_row_major(&self.r, self.t).or_config()
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PoseList {
    One(PoseIn),
    Many(Vec<PoseIn>),
}

fn read_poses(path: &Path) -> Result<Vec<PoseSE3>, Fail> {
    let file = File::open(path).map_err(|e| Fail::config(anyhow::anyhow!("{}: {e}", path.display())))?;
    let list: PoseList = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Fail::config(anyhow::anyhow!("{}: {e}", path.display())))?;
    match list {
        PoseList::One(p) => Ok(vec![p.pose()?]),
        PoseList::Many(v) => v.iter().map(PoseIn::pose).collect(),
    }
}

fn render(cfg: &ScenarioConfig, dir: &Path, pose_file: Option<&Path>, index: usize) -> Result<Value, Fail> {
    cfg.camera.validate().or_config()?;
    let (base, mesh) = object_meshes(cfg)?;
    let pose = match pose_file {
        Some(p) => {
            let mut v = read_poses(p)?;
            if v.len() != 1 {
                return Err(Fail::config(anyhow::anyhow!("{} holds {} poses, expected 1", p.display(), v.len())));
            }
            v.remove(0)
        }
        None => {
            let spec = surfcode::harness::PoseSamplerSpec {
                count: index + 1,
                ..cfg.poses.clone()
            };
            sample_poses(&spec, &cfg.camera, base.vertices())?[index]
        }
    };
    let book = build_book(cfg, &mesh)?;
    let map = CodeRenderer::new(&mesh, &book)
        .and_then(|r| r.render(&pose, &cfg.camera))
        .or_pipeline()?;
    let map_path = dir.join("codemap.zbcm");
    let pose_path = dir.join("pose_gt.json");
    save_codemap(&map_path, &map).or_pipeline()?;
    write_json(&pose_path, &PoseRecord::new(&pose, 0, 0)).or_pipeline()?;
    Ok(summary(
        "render",
        cfg,
        &[map_path, pose_path],
        json!({
            "width": map.width(),
            "height": map.height(),
            "masked_pixels": map.masked_count(),
            "pose": PoseRecord::new(&pose, 0, 0),
            "fingerprint": fingerprint_hex(book.fingerprint()),
        }),
    ))
}

fn matching(cfg: &ScenarioConfig, dir: &Path, a: &crate::MatchArgs) -> Result<Value, Fail> {
    let map = load_codemap(&a.codemap).or_config()?;
    let book = load_codebook(&a.codebook).or_config()?;
    let roi = match &a.roi {
        Some(r) => RoiTransform::new(
            [r[0], r[1]],
            [r[2], r[3]],
            [map.width() as f64, map.height() as f64],
        )
        .or_config()?,
        None => RoiTransform::identity(map.width(), map.height()),
    };
    let m = match_codes(&map, &book, &roi).or_config()?;
    let mut corrs = m.correspondences;
    let before = corrs.len();
    if a.filter {
        let Some(spread) = cfg.filter.max_spread_mm else {
            return Err(Fail::config(anyhow::anyhow!(
                "--filter needs filter.max_spread_mm in the scenario"
            )));
        };
        if !(cfg.filter.radius_px > 0.0 && spread > 0.0) {
            return Err(Fail::config(anyhow::anyhow!("filter radius and spread must be positive")));
        }
        corrs = coherence_filter(&corrs, cfg.filter.radius_px, spread);
    }
    let path = dir.join("correspondences.csv");
    let file = File::create(&path).or_pipeline()?;
    write_correspondences(file, &corrs, &book.layout()).or_pipeline()?;
    Ok(summary(
        "match",
        cfg,
        &[path],
        json!({
            "masked_pixels": map.masked_count(),
            "unknown_codes": m.unknown,
            "matched": before,
            "filtered_out": before - corrs.len(),
            "correspondences": corrs.len(),
        }),
    ))
}

fn solve(cfg: &ScenarioConfig, dir: &Path, csv: &Path) -> Result<Value, Fail> {
    cfg.camera.validate().or_config()?;
    cfg.solver.validate().or_config()?;
    let file = File::open(csv).map_err(|e| Fail::config(anyhow::anyhow!("{}: {e}", csv.display())))?;
    let corrs = read_correspondences(file).or_config()?;
    let res = ransac_pnp(&corrs, &cfg.camera, &cfg.solver).or_pipeline()?;
    let rec = PoseRecord::new(&res.pose, res.inlier_count, res.iterations_used);
    let path = dir.join("pose.json");
    write_json(&path, &rec).or_pipeline()?;
    Ok(summary(
        "solve-pose",
        cfg,
        &[path],
        json!({"correspondences": corrs.len(), "pose": rec}),
    ))
}

fn eval(cfg: &ScenarioConfig, dir: &Path, pred: &Path, gt: &Path) -> Result<Value, Fail> {
    validate_object(cfg)?;
    let pred = read_poses(pred)?;
    let gt = read_poses(gt)?;
    if pred.len() != gt.len() {
        return Err(Fail::config(anyhow::anyhow!("{} predicted poses but {} ground-truth poses", pred.len(), gt.len())));
    }
    let base = cfg.mesh.load()?;
    let points = subsample_points(base.vertices(), ADDS_MAX_POINTS, ADDS_SUBSAMPLE_SEED);
    let d = diameter(base.vertices()).or_pipeline()?;
    let ecfg = EvalConfig::new(d).or_config()?;
    let mut add = Vec::with_capacity(pred.len());
    let mut adds = Vec::with_capacity(pred.len());
    for (p, g) in pred.iter().zip(&gt) {
        add.push(add_error(p, g, &points).or_pipeline()?);
        adds.push(adds_error(p, g, &points).or_pipeline()?);
    }
    let result = json!({
        "diameter_mm": d,
        "threshold_mm": ecfg.threshold_mm(),
        "add": ObjectEval::from_errors(&add, &ecfg),
        "add_s": ObjectEval::from_errors(&adds, &ecfg),
        "per_pose": add.iter().zip(&adds).map(|(a, s)| json!({"add_mm": a, "add_s_mm": s})).collect::<Vec<_>>(),
    });
    let path = dir.join("eval.json");
    write_json(&path, &result).or_pipeline()?;
    Ok(summary("eval", cfg, &[path], result))
}

fn bench(cfg: &ScenarioConfig, dir: &Path) -> Result<Value, Fail> {
    cfg.validate()?;
    let out = run_bench(cfg)?;
    write_outputs(dir, &out)?;
    let conditions = |v: &[surfcode::harness::ConditionSummary]| -> Vec<Value> {
        v.iter()
            .map(|c| {
                json!({
                    "radix": c.radix,
                    "digits": c.digits,
                    "filter": c.filter,
                    "recall_add": c.recall_add,
                    "auc_add_allpoints": c.auc_add_allpoints,
                    "mean_add_mm": c.mean_add_mm,
                })
            })
            .collect()
    };
    Ok(summary(
        "bench-bitflip",
        cfg,
        &[dir.join("report.json"), dir.join("poses.csv"), dir.join("timings.json")],
        json!({
            "codebook_fingerprint": out.report.codebook_fingerprint,
            "truncation": conditions(&out.report.truncation),
            "per_radix": conditions(&out.report.per_radix),
            "total_s": out.timings.total_s,
        }),
    ))
}

/// Prediction file for `loss-check`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossInput {
    width: u32,
    height: u32,
    /// Code bits per pixel.
    digits: u32,
    /// Bit probabilities, `digits` per pixel, row-major.
    bits: Vec<f64>,
    mask: Vec<f64>,
    /// Ground-truth code per pixel; `null` is background.
    gt: Vec<Option<u64>>,
    /// Error histogram before this batch; zeros when absent.
    #[serde(default)]
    histogram: Option<Vec<f64>>,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    params: LossParams,
}

fn loss_check(cfg: &ScenarioConfig, dir: &Path, input: &Path) -> Result<Value, Fail> {
    let file = File::open(input).map_err(|e| Fail::config(anyhow::anyhow!("{}: {e}", input.display())))?;
    let inp: LossInput = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Fail::config(anyhow::anyhow!("{}: {e}", input.display())))?;
    let pred = PredictionMap::new(inp.width, inp.height, inp.digits, inp.bits, inp.mask).or_config()?;
    let layout = CodeLayout::binary(inp.digits).or_config()?;
    if inp.gt.len() != pred.pixel_count() {
        return Err(Fail::config(anyhow::anyhow!("gt has {} pixels, expected {}", inp.gt.len(), pred.pixel_count())));
    }
    if let Some(c) = inp.gt.iter().flatten().find(|&&c| !layout.is_valid(c)) {
        return Err(Fail::config(anyhow::anyhow!("gt code {c} does not fit in {} bits", inp.digits)));
    }
    let gt = CodeMap::from_parts(inp.width, inp.height, layout, inp.gt, None);
    let mut hist = ErrorHistogram::new(inp.digits as usize, inp.lambda.unwrap_or(ErrorHistogram::DEFAULT_LAMBDA));
    if let Some(h) = inp.histogram {
        hist.values = h;
    }
    let loss = total_loss(&pred, &gt, &hist, &inp.params).or_config()?;
    let path = dir.join("loss.json");
    write_json(&path, &loss).or_pipeline()?;
    Ok(summary(
        "loss-check",
        cfg,
        &[path],
        serde_json::to_value(&loss).or_pipeline()?,
    ))
}
