//! The corruption benchmark: truncation curves, per-bit error table and
//! per-radix solver comparison over one set of sampled poses.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::camera::PoseSE3;
use crate::encoder::{build_hierarchy, Codebook, EncodingParams};
use crate::formats::write_json;
use crate::matcher::{calibrate_spread, coherence_filter, match_codes, Correspondence, RoiTransform};
use crate::mesh::{fingerprint_hex, upsample_until, TriangleMesh};
use crate::metrics::{
    add_error, auc_add, diameter, recall_add, subsample_points, EvalConfig, Interpolation, ADDS_MAX_POINTS,
    ADDS_SUBSAMPLE_SEED,
};
use crate::par;
use crate::pnp::ransac_pnp;
use crate::render::{CodeMap, CodeRenderer};

use super::config::ScenarioConfig;
use super::sample::{corrupt, erode, sample_poses, stream_rng};
use super::HarnessError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Largest class count the harness will subdivide a mesh for.
const MAX_UPSAMPLE_CLASSES: u64 = 1 << 22;

/// Mesh, codebooks and evaluation points shared by every pose.
#[derive(Debug, Clone)]
pub struct PreparedObject {
    /// Mesh as loaded, before subdivision.
    pub base: TriangleMesh,
    pub mesh: TriangleMesh,
    /// Codebook in the configured radix.
    pub codebook: Codebook,
    /// The same partition read as binary codes.
    pub binary: Codebook,
    /// ADD evaluation points: vertices of the mesh as loaded, capped by
    /// seeded subsampling.
    pub model_points: Vec<Point3<f64>>,
    pub diameter_mm: f64,
}

impl PreparedObject {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, HarnessError> {
        let base = cfg.mesh.load()?;
        let mesh = if cfg.mesh.upsample {
            upsample_for(&base, &cfg.encoding)?
        } else {
            base.clone()
        };
        let hierarchy = build_hierarchy(&mesh, &cfg.encoding)?;
        let codebook = Codebook::build(&mesh, &hierarchy)?;
        let binary = codebook.convert_radix(2)?;
        let model_points = subsample_points(base.vertices(), ADDS_MAX_POINTS, ADDS_SUBSAMPLE_SEED);
        // subdivision stays inside the convex hull, so the base vertices
        // give the exact diameter at a fraction of the cost
        let diameter_mm = diameter(base.vertices())?;
        Ok(Self {
            base,
            mesh,
            codebook,
            binary,
            model_points,
            diameter_mm,
        })
    }
}

/// Midpoint-subdivides `mesh` until it has at least `r^d` vertices, so
/// every leaf group can be non-empty. Returns the mesh unchanged when it is
/// already large enough.
pub fn upsample_for(mesh: &TriangleMesh, params: &EncodingParams) -> Result<TriangleMesh, HarnessError> {
    match params.total_classes() {
        Some(k) if k <= MAX_UPSAMPLE_CLASSES => Ok(if k > mesh.vertex_count() as u64 {
            upsample_until(mesh, k as usize - 1)
        } else {
            mesh.clone()
        }),
        _ => Err(HarnessError::Config(format!(
            "{}^{} classes is too many to upsample for",
            params.radix, params.digits
        ))),
    }
}

/// Keeps the first `j` digits of every code.
pub fn truncate_map(map: &CodeMap, j: u32) -> Result<CodeMap, HarnessError> {
    let layout = map.layout();
    let short = layout.truncated(j)?;
    let codes = map.codes().iter().map(|c| c.map(|c| layout.prefix(c, j))).collect();
    Ok(CodeMap::from_parts(
        map.width(),
        map.height(),
        short,
        codes,
        map.depth().map(<[f32]>::to_vec),
    ))
}

/// One solve of one pose under one condition. Columns of `poses.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRow {
    pub pose: usize,
    /// `truncation` or `radix`.
    pub ablation: String,
    pub radix: u32,
    pub digits: u32,
    pub filter: bool,
    pub correspondences: usize,
    pub kept: usize,
    pub unknown: usize,
    pub inlier_count: usize,
    pub iterations_used: usize,
    pub add_mm: Option<f64>,
    /// `ok` or the solver error.
    pub status: String,
}

/// Accuracy of one condition over all poses. Failed solves count as
/// incorrect at every threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub radix: u32,
    pub digits: u32,
    pub bits: u32,
    pub filter: bool,
    pub solver_path: String,
    pub n: usize,
    pub solved: usize,
    pub recall_add: f64,
    pub auc_add_allpoints: f64,
    pub auc_add_11pt: f64,
    /// Mean ADD over solved poses.
    pub mean_add_mm: Option<f64>,
}

/// Observed corruption of one code bit (1 = most significant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitStats {
    pub bit: u32,
    pub flip_prob: f64,
    pub pixels: u64,
    pub flipped: u64,
    pub empirical_rate: f64,
    /// Pixels whose most significant flipped bit is this one.
    pub leading_flips: u64,
    /// Mean 3D displacement of those pixels' decoded points.
    pub mean_shift_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInfo {
    pub base_vertex_count: usize,
    pub vertex_count: usize,
    pub face_count: usize,
    pub leaf_count: usize,
    pub diameter_mm: f64,
    pub threshold_mm: f64,
    pub model_points: usize,
}

/// Deterministic benchmark summary (`report.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub codebook_fingerprint: String,
    pub config: ScenarioConfig,
    pub object: ObjectInfo,
    /// Calibrated or configured filter threshold per binary code length.
    pub filter_spread_mm: BTreeMap<u32, Option<f64>>,
    pub truncation: Vec<ConditionSummary>,
    pub per_bit: Vec<BitStats>,
    pub per_radix: Vec<ConditionSummary>,
}

impl BenchReport {
    /// Summary of the truncation condition with `bits` binary digits.
    pub fn truncation_at(&self, bits: u32, filter: bool) -> Option<&ConditionSummary> {
        self.truncation.iter().find(|c| c.digits == bits && c.filter == filter)
    }

    pub fn radix(&self, radix: u32, filter: bool) -> Option<&ConditionSummary> {
        self.per_radix.iter().find(|c| c.radix == radix && c.filter == filter)
    }
}

/// Wall-clock seconds per stage (`timings.json`). Stage times are summed
/// over poses, so with several threads they exceed `total_s`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub parallel: bool,
    pub threads: usize,
    pub total_s: f64,
    pub prepare_s: f64,
    pub render_s: f64,
    pub calibrate_s: f64,
    pub corrupt_s: f64,
    pub match_s: f64,
    pub filter_s: f64,
    pub solve_s: f64,
    pub eval_s: f64,
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub report: BenchReport,
    pub rows: Vec<PoseRow>,
    pub timings: Timings,
}

#[derive(Default)]
struct StageTimes {
    corrupt: Duration,
    matching: Duration,
    filter: Duration,
    solve: Duration,
    eval: Duration,
}

#[derive(Clone)]
struct BitCounts {
    pixels: u64,
    flipped: Vec<u64>,
    leading: Vec<u64>,
    shift_sum: Vec<f64>,
}

impl BitCounts {
    fn new(bits: usize) -> Self {
        Self {
            pixels: 0,
            flipped: vec![0; bits],
            leading: vec![0; bits],
            shift_sum: vec![0.0; bits],
        }
    }

    fn record(&mut self, clean: &CodeMap, corrupted: &CodeMap, book: &Codebook) {
        let bits = self.flipped.len() as u32;
        for (a, b) in clean.codes().iter().zip(corrupted.codes()) {
            let (Some(a), Some(b)) = (a, b) else { continue };
            self.pixels += 1;
            let diff = a ^ b;
            if diff == 0 {
                continue;
            }
            for k in 0..bits {
                if diff >> (bits - 1 - k) & 1 == 1 {
                    self.flipped[k as usize] += 1;
                }
            }
            let lead = (diff.leading_zeros() - (64 - bits)) as usize;
            if let (Some(p), Some(q)) = (book.decode(*a), book.decode(*b)) {
                self.leading[lead] += 1;
                self.shift_sum[lead] += (p - q).norm();
            }
        }
    }

    fn merge(&mut self, o: &BitCounts) {
        self.pixels += o.pixels;
        for k in 0..self.flipped.len() {
            self.flipped[k] += o.flipped[k];
            self.leading[k] += o.leading[k];
            self.shift_sum[k] += o.shift_sum[k];
        }
    }
}

fn solver_path(filter: bool) -> String {
    if filter { "coherence-filter+ransac-epnp" } else { "ransac-epnp" }.to_string()
}

struct Condition<'a> {
    ablation: &'static str,
    book: &'a Codebook,
    filter: bool,
    spread: f64,
}

struct PoseContext<'a> {
    cfg: &'a ScenarioConfig,
    obj: &'a PreparedObject,
    roi: RoiTransform,
}

impl PoseContext<'_> {
    fn solve(
        &self,
        i: usize,
        gt: &PoseSE3,
        map: &CodeMap,
        cond: &Condition,
        times: &mut StageTimes,
    ) -> Result<PoseRow, HarnessError> {
        let t = Instant::now();
        let matched = match_codes(map, cond.book, &self.roi)?;
        times.matching += t.elapsed();
        let t = Instant::now();
        let corrs: Vec<Correspondence> = if cond.filter {
            coherence_filter(&matched.correspondences, self.cfg.filter.radius_px, cond.spread)
        } else {
            matched.correspondences.clone()
        };
        times.filter += t.elapsed();
        let t = Instant::now();
        let result = ransac_pnp(&corrs, &self.cfg.camera, &self.cfg.solver);
        times.solve += t.elapsed();
        let layout = cond.book.layout();
        let mut row = PoseRow {
            pose: i,
            ablation: cond.ablation.to_string(),
            radix: layout.radix(),
            digits: layout.digits(),
            filter: cond.filter,
            correspondences: matched.correspondences.len(),
            kept: corrs.len(),
            unknown: matched.unknown,
            inlier_count: 0,
            iterations_used: 0,
            add_mm: None,
            status: "ok".into(),
        };
        match result {
            Ok(res) => {
                let t = Instant::now();
                row.add_mm = Some(add_error(&res.pose, gt, &self.obj.model_points)?);
                times.eval += t.elapsed();
                row.inlier_count = res.inlier_count;
                row.iterations_used = res.iterations_used;
            }
            Err(e) => row.status = e.to_string(),
        }
        Ok(row)
    }
}

fn summarize<'a>(
    rows: impl Iterator<Item = &'a PoseRow>,
    radix: u32,
    digits: u32,
    filter: bool,
    eval: &EvalConfig,
) -> ConditionSummary {
    let adds: Vec<Option<f64>> = rows
        .filter(|r| r.radix == radix && r.digits == digits && r.filter == filter)
        .map(|r| r.add_mm)
        .collect();
    let errors: Vec<f64> = adds.iter().map(|a| a.unwrap_or(f64::INFINITY)).collect();
    let solved: Vec<f64> = adds.iter().flatten().copied().collect();
    ConditionSummary {
        radix,
        digits,
        bits: digits * radix.trailing_zeros(),
        filter,
        solver_path: solver_path(filter),
        n: errors.len(),
        solved: solved.len(),
        recall_add: recall_add(&errors, eval),
        auc_add_allpoints: auc_add(&errors, eval, Interpolation::AllPoints),
        auc_add_11pt: auc_add(&errors, eval, Interpolation::ElevenPoint),
        mean_add_mm: (!solved.is_empty()).then(|| solved.iter().sum::<f64>() / solved.len() as f64),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Runs the benchmark. Poses are processed in parallel and gathered in
/// index order, so the report depends only on the scenario.
pub fn run_bench(cfg: &ScenarioConfig) -> Result<BenchOutput, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let obj = PreparedObject::new(cfg)?;
    let prepare_s = secs(start.elapsed());
    let eval = EvalConfig::new(obj.diameter_mm)?;
    let cam = cfg.camera;
    let bits = cfg.code_bits();
    let levels = cfg.truncation_levels();
    let settings = cfg.filter.mode.settings();

    let poses = sample_poses(&cfg.poses, &cam, obj.base.vertices())?;
    let t = Instant::now();
    let renderer = CodeRenderer::new(&obj.mesh, &obj.binary)?;
    let erosion = cfg.corruption.erosion_px;
    let clean: Vec<CodeMap> = par::map_slice(&poses, |p| renderer.render(p, &cam).map(|m| erode(&m, erosion)))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let render_s = secs(t.elapsed());

    let mut books: BTreeMap<u32, Codebook> = BTreeMap::new();
    for &j in levels.iter().chain(std::iter::once(&bits)) {
        books.insert(j, obj.binary.truncate(j)?);
    }
    let radix_books: Vec<Codebook> = cfg
        .radices()
        .iter()
        .map(|&r| obj.binary.convert_radix(r))
        .collect::<Result<_, _>>()?;

    let roi = RoiTransform::identity(cam.width, cam.height);
    let t = Instant::now();
    let mut spreads: BTreeMap<u32, Option<f64>> = BTreeMap::new();
    if settings.contains(&true) {
        for (&j, book) in &books {
            let s = match cfg.filter.max_spread_mm {
                Some(s) => Some(s),
                None => {
                    let sets: Vec<Vec<Correspondence>> = par::map_slice(&clean, |m| {
                        truncate_map(m, j)
                            .and_then(|m| Ok(match_codes(&m, book, &roi)?.correspondences))
                    })
                    .into_iter()
                    .collect::<Result<_, _>>()?;
                    calibrate_spread(sets.iter().map(Vec::as_slice), cfg.filter.radius_px)
                }
            };
            spreads.insert(j, s);
        }
    }
    let calibrate_s = secs(t.elapsed());
    let spread = |j: u32| spreads.get(&j).copied().flatten().unwrap_or(f64::INFINITY);

    let ctx = PoseContext { cfg, obj: &obj, roi };
    let bit_p = cfg.corruption.probabilities(bits);
    let per_pose = par::map_range(poses.len(), |i| -> Result<_, HarnessError> {
        let mut times = StageTimes::default();
        let mut counts = BitCounts::new(bits as usize);
        let mut rows = Vec::new();
        let gt = &poses[i];

        let t = Instant::now();
        let mut rng = stream_rng(cfg.corruption.seed, 1, i);
        let corrupted = corrupt(&clean[i], &obj.binary, &bit_p, cfg.corruption.unknown_rate, &mut rng);
        counts.record(&clean[i], &corrupted, &obj.binary);
        times.corrupt += t.elapsed();

        for &j in &levels {
            let map = truncate_map(&corrupted, j)?;
            for &filter in settings {
                let cond = Condition {
                    ablation: "truncation",
                    book: &books[&j],
                    filter,
                    spread: spread(j),
                };
                rows.push(ctx.solve(i, gt, &map, &cond, &mut times)?);
            }
        }
        for book in &radix_books {
            let layout = book.layout();
            let t = Instant::now();
            let mut rng = stream_rng(cfg.corruption.seed, layout.bits_per_digit(), i);
            let source = clean[i].clone().with_layout(layout);
            let map = corrupt(&source, book, &bit_p, cfg.corruption.unknown_rate, &mut rng);
            times.corrupt += t.elapsed();
            for &filter in settings {
                let cond = Condition {
                    ablation: "radix",
                    book,
                    filter,
                    spread: spread(bits),
                };
                rows.push(ctx.solve(i, gt, &map, &cond, &mut times)?);
            }
        }
        Ok((rows, counts, times))
    });

    let mut rows = Vec::new();
    let mut counts = BitCounts::new(bits as usize);
    let mut times = StageTimes::default();
    for r in per_pose {
        let (r, c, t) = r?;
        rows.extend(r);
        counts.merge(&c);
        times.corrupt += t.corrupt;
        times.matching += t.matching;
        times.filter += t.filter;
        times.solve += t.solve;
        times.eval += t.eval;
    }

    let trunc_rows = || rows.iter().filter(|r| r.ablation == "truncation");
    let radix_rows = || rows.iter().filter(|r| r.ablation == "radix");
    let truncation = levels
        .iter()
        .flat_map(|&j| settings.iter().map(move |&f| (j, f)))
        .map(|(j, f)| summarize(trunc_rows(), 2, j, f, &eval))
        .collect();
    let per_radix = radix_books
        .iter()
        .flat_map(|b| settings.iter().map(move |&f| (b.layout(), f)))
        .map(|(l, f)| summarize(radix_rows(), l.radix(), l.digits(), f, &eval))
        .collect();
    let per_bit = (0..bits as usize)
        .map(|k| BitStats {
            bit: k as u32 + 1,
            flip_prob: bit_p[k],
            pixels: counts.pixels,
            flipped: counts.flipped[k],
            empirical_rate: if counts.pixels == 0 {
                0.0
            } else {
                counts.flipped[k] as f64 / counts.pixels as f64
            },
            leading_flips: counts.leading[k],
            mean_shift_mm: (counts.leading[k] > 0).then(|| counts.shift_sum[k] / counts.leading[k] as f64),
        })
        .collect();

    let report = BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        codebook_fingerprint: fingerprint_hex(obj.codebook.fingerprint()),
        config: cfg.clone(),
        object: ObjectInfo {
            base_vertex_count: obj.base.vertex_count(),
            vertex_count: obj.mesh.vertex_count(),
            face_count: obj.mesh.face_count(),
            leaf_count: obj.codebook.table().len(),
            diameter_mm: obj.diameter_mm,
            threshold_mm: eval.threshold_mm(),
            model_points: obj.model_points.len(),
        },
        filter_spread_mm: spreads,
        truncation,
        per_bit,
        per_radix,
    };
    let timings = Timings {
        parallel: par::is_parallel(),
        threads: par::thread_count(),
        total_s: secs(start.elapsed()),
        prepare_s,
        render_s,
        calibrate_s,
        corrupt_s: secs(times.corrupt),
        match_s: secs(times.matching),
        filter_s: secs(times.filter),
        solve_s: secs(times.solve),
        eval_s: secs(times.eval),
    };
    Ok(BenchOutput { report, rows, timings })
}

/// Writes `report.json`, `poses.csv` and `timings.json` into `dir`.
pub fn write_outputs(dir: &Path, out: &BenchOutput) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    write_json(dir.join("report.json"), &out.report)?;
    write_json(dir.join("timings.json"), &out.timings)?;
    let mut w = csv::Writer::from_path(dir.join("poses.csv")).map_err(crate::formats::FormatError::from)?;
    for r in &out.rows {
        w.serialize(r).map_err(crate::formats::FormatError::from)?;
    }
    w.flush()?;
    Ok(())
}
