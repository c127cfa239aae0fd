//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Point2, Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use surfcode::encoder::{build_hierarchy, Codebook, EncodingParams};
use surfcode::formats::{codebook_from_bytes, codebook_to_bytes, codemap_from_bytes, codemap_to_bytes};
use surfcode::harness::{run_bench, AblationSpec, CorruptionSpec, FilterMode, ScenarioConfig};
use surfcode::losses::{
    compute_weights, hamming_bce, hamming_bce_grad, mask_loss, total_loss, update_histogram, ErrorHistogram,
    LossParams, PredictionMap, WeightVector,
};
use surfcode::metrics::{add_error, adds_error, diameter};
use surfcode::mesh::{primitives, subdivide_midpoint, upsample_until};
use surfcode::pnp::{epnp, PnpError};
use surfcode::{CameraIntrinsics, CodeLayout, CodeMap, Correspondence, PoseSE3};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{what}: got {got:.17}, want {want:.17}"))
}

// ---------------------------------------------------------------- encoding

fn encoding_soundness(enc: &mut Option<Codebook>) -> Check {
    let start = Instant::now();
    let mesh = upsample_until(&primitives::icosahedron(50.0), (1 << 16) - 1);
    ensure(mesh.vertex_count() >= 1 << 16, || format!("only {} vertices", mesh.vertex_count()))?;
    let params = EncodingParams::new(2, 16, 7);
    let h = build_hierarchy(&mesh, &params).map_err(|e| e.to_string())?;
    let book = Codebook::build(&mesh, &h).map_err(|e| e.to_string())?;
    let build_time = start.elapsed();

    // balanced splits at every level
    for j in 0..16 {
        let parents = h.groups(j);
        let children = h.groups(j + 1);
        for (&p, members) in &parents {
            let a = children.get(&(p << 1)).map_or(0, Vec::len);
            let b = children.get(&(p << 1 | 1)).map_or(0, Vec::len);
            ensure(a + b == members.len() && a.abs_diff(b) <= 1 && a > 0 && b > 0, || {
                format!("level {j} group {p:#x}: split {a}/{b} of {}", members.len())
            })?;
        }
    }
    // prefix property: every level-(j+1) group lies inside one level-j group
    let codes = h.codes();
    for j in 1..=16u32 {
        let mut parent_of: BTreeMap<u64, u64> = BTreeMap::new();
        for &c in codes {
            let child = c >> (16 - j);
            let parent = c >> (17 - j);
            let seen = *parent_of.entry(child).or_insert(parent);
            ensure(seen == parent, || format!("level {j} group {child:#x} has two parents"))?;
        }
    }
    // bijection between codes and leaves, centroids recomputed
    ensure(book.table().len() == 1 << 16 && book.is_complete(), || {
        format!("{} table entries", book.table().len())
    })?;
    let mut sums: BTreeMap<u64, (Vector3<f64>, usize)> = BTreeMap::new();
    for (v, &c) in codes.iter().enumerate() {
        ensure(book.encode(v) == c, || format!("vertex {v} encodes differently"))?;
        let e = sums.entry(c).or_insert((Vector3::zeros(), 0));
        e.0 += mesh.vertices()[v].coords;
        e.1 += 1;
    }
    ensure(sums.len() == 1 << 16, || format!("{} distinct leaves", sums.len()))?;
    for (c, (s, n)) in &sums {
        let want = s / *n as f64;
        let got = book.decode(*c).ok_or_else(|| format!("leaf {c:#x} missing"))?;
        ensure((got.coords - want).norm() < 1e-9, || format!("leaf {c:#x} centroid off"))?;
    }
    // determinism, including under a different thread count
    let again = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| build_hierarchy(&mesh, &params))
        .map_err(|e| e.to_string())?;
    ensure(again == h, || "rebuild produced a different hierarchy".into())?;

    let total = start.elapsed();
    ensure(build_time < Duration::from_secs(60), || format!("build took {build_time:?}"))?;
    let detail = format!(
        "{} vertices, 65536 leaves; build {:.1}s, with checks {:.1}s",
        mesh.vertex_count(),
        build_time.as_secs_f64(),
        total.as_secs_f64()
    );
    *enc = Some(book);
    Ok(detail)
}

// ---------------------------------------------------------------- pipeline

fn clean_scenario() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.filter.mode = FilterMode::Off;
    c.ablation = AblationSpec {
        truncation: vec![10, 16],
        radices: vec![2],
    };
    c
}

fn round_trip_and_plateau() -> (Check, Check) {
    let start = Instant::now();
    let out = match run_bench(&clean_scenario()) {
        Ok(o) => o,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let elapsed = start.elapsed();
    let r = &out.report;
    let bound = 0.02 * r.object.diameter_mm;
    let full: Vec<_> = out
        .rows
        .iter()
        .filter(|row| row.ablation == "truncation" && row.digits == 16)
        .collect();
    let good = full.iter().filter(|row| row.add_mm.is_some_and(|a| a < bound)).count();
    let worst = full.iter().map(|row| row.add_mm.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    let c2 = ensure(full.len() == 100 && good == 100, || {
        format!("{good}/{} poses with ADD < {bound:.3} mm (worst {worst:.3})", full.len())
    })
    .and_then(|_| ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}")))
    .map(|_| {
        format!(
            "100/100 poses with ADD < {bound:.3} mm, worst {worst:.3} mm; {:.1}s",
            elapsed.as_secs_f64()
        )
    });
    let r10 = r.truncation_at(10, false).map_or(-1.0, |c| c.recall_add);
    let r16 = r.truncation_at(16, false).map_or(-1.0, |c| c.recall_add);
    let c3 = ensure(r10 == 1.0 && r16 == 1.0, || format!("recall j=10 {r10}, j=16 {r16}"))
        .map(|_| format!("recall 1.0 at j=10 and j=16 over {} poses", full.len()));
    (c2, c3)
}

fn outlier_filter() -> Check {
    let mut c = ScenarioConfig::default();
    c.corruption = CorruptionSpec {
        seed: 11,
        ..CorruptionSpec::flips_on(16, [1, 2, 3], 0.05)
    };
    c.filter.mode = FilterMode::Both;
    c.ablation = AblationSpec {
        truncation: vec![16],
        radices: vec![2],
    };
    let out = run_bench(&c).map_err(|e| e.to_string())?;
    let off = out.report.truncation_at(16, false).unwrap();
    let on = out.report.truncation_at(16, true).unwrap();
    let detail = format!(
        "recall filter+RANSAC {:.2} vs RANSAC-only {:.2}; mean ADD {:.3} vs {:.3} mm",
        on.recall_add,
        off.recall_add,
        on.mean_add_mm.unwrap_or(f64::NAN),
        off.mean_add_mm.unwrap_or(f64::NAN)
    );
    ensure(on.recall_add > off.recall_add, || format!("no strict improvement: {detail}"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- radix

fn radix_equivalence(bin: Option<&Codebook>) -> Check {
    let bin = bin.ok_or("needs the criterion 1 codebook")?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<u64> = (0..10_000).map(|_| rng.gen_range(0..1u64 << 16)).collect();
    let leaves = |codes: &[u64]| {
        let mut m: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (v, &c) in codes.iter().enumerate() {
            m.entry(c).or_default().push(v);
        }
        m.into_values().collect::<BTreeSet<_>>()
    };
    let reference = leaves(bin.vertex_codes());
    for r in [4u32, 16, 256] {
        let k = r.trailing_zeros();
        let conv = bin.convert_radix(r).map_err(|e| e.to_string())?;
        let layout = conv.layout();
        ensure(layout.digits() == 16 / k, || format!("radix {r}: {} digits", layout.digits()))?;
        ensure(leaves(conv.vertex_codes()) == reference, || format!("radix {r}: partition differs"))?;
        for &c in &samples {
            // regroup the 16 bits, most significant first, into base-r digits
            let digits: Vec<u32> = (0..16 / k)
                .map(|i| ((c >> (16 - k * (i + 1))) & ((1 << k) - 1)) as u32)
                .collect();
            let rc = layout.from_digits(&digits).map_err(|e| e.to_string())?;
            ensure(conv.decode(rc) == bin.decode(c), || format!("radix {r}: code {c:#x} decodes differently"))?;
            ensure(layout.to_digits(rc) == digits, || format!("radix {r}: digit read-back of {c:#x}"))?;
        }
    }
    Ok("radices 4, 16, 256: same partition, 10^4 codes decode identically".into())
}

// ---------------------------------------------------------------- losses

fn loss_oracles() -> Check {
    let eps = 1e-7;
    let u2 = WeightVector::uniform(2);
    let bce = |b: &[bool], p: &[f64], w: &WeightVector| hamming_bce(b, p, w, eps).unwrap();

    // reference values from 50-digit decimal arithmetic
    close(bce(&[true, false], &[0.8, 0.3], &u2), 0.289_909_247_626_471_067_339_466_900_775_5, 1e-9, "bce")?;
    close(
        bce(&[true, false, true], &[1.0, 0.0, 1.0], &WeightVector::uniform(3)),
        1.000_000_050_000_003_333_333_583e-7,
        1e-9,
        "bce at clamp",
    )?;
    close(
        bce(&[true; 16], &[0.5; 16], &WeightVector::uniform(16)),
        std::f64::consts::LN_2,
        1e-9,
        "bce at 0.5",
    )?;
    close(
        bce(
            &[true, true, false, false],
            &[0.9, 0.35, 0.2, 0.61],
            &WeightVector(vec![0.1, 0.2, 0.3, 0.4]),
        ),
        0.664_086_957_803_159_070_753_512_884_069,
        1e-9,
        "weighted bce",
    )?;

    let h0 = ErrorHistogram::new(1, 0.05);
    let batch_gt = [0u64, 0, 0, 0];
    let batch_pred = [1u64, 0, 0, 0];
    close(update_histogram(&h0, &batch_gt, &batch_pred).unwrap().values[0], 0.0125, 1e-12, "histogram")?;
    let h4 = ErrorHistogram {
        values: vec![0.1, 0.3, 0.0, 1.0],
        lambda: 0.05,
    };
    // per-bit error counts (2, 8, 0, 4) over 8 pixels
    let gt: Vec<u64> = vec![0b0000; 8];
    let pred: Vec<u64> = vec![0b1101, 0b1101, 0b0101, 0b0101, 0b0100, 0b0100, 0b0100, 0b0100];
    let got = update_histogram(&h4, &gt, &pred).unwrap().values;
    for (g, w) in got.iter().zip([0.1075, 0.335, 0.0, 0.975]) {
        close(*g, w, 1e-12, "4-bit histogram")?;
    }

    let w = compute_weights(
        &ErrorHistogram {
            values: vec![0.0, 0.25],
            lambda: 0.05,
        },
        0.5,
    );
    close(w.0[0], 0.468_790_626_626_243_742_754_928_554_4, 1e-9, "w1")?;
    close(w.0[1], 0.531_209_373_373_756_257_245_071_445_6, 1e-9, "w2")?;
    let w = compute_weights(
        &ErrorHistogram {
            values: vec![0.05, 0.2, 0.45, 0.9],
            lambda: 0.05,
        },
        0.5,
    );
    for (g, want) in w.0.iter().zip([
        0.257_971_288_990_418_594_420_088_773_6,
        0.278_063_163_786_051_242_335_797_694_4,
        0.257_971_288_990_418_594_420_088_773_6,
        0.205_994_258_233_111_568_824_024_758_4,
    ]) {
        close(*g, want, 1e-9, "4-bit weights")?;
    }

    close(
        mask_loss(&[0.9, 0.2, 0.7, 0.0], &[true, false, true, false]).unwrap(),
        0.15,
        1e-12,
        "mask loss",
    )?;
    close(mask_loss(&[0.5; 4], &[true, false, false, true]).unwrap(), 0.5, 1e-12, "mask at 0.5")?;

    let params = LossParams::default();
    let l2 = CodeLayout::binary(2).unwrap();
    let one = PredictionMap::new(1, 1, 2, vec![0.8, 0.3], vec![0.9]).unwrap();
    let gt1 = CodeMap::from_parts(1, 1, l2, vec![Some(0b10)], None);
    let t = total_loss(&one, &gt1, &ErrorHistogram::new(2, 0.05), &params).unwrap();
    close(t.total, 0.969_727_742_879_413_202_018_400_702_3, 1e-9, "single-pixel total")?;

    let pred = PredictionMap::new(
        2,
        2,
        2,
        vec![0.8, 0.3, 0.6, 0.7, 0.1, 0.1, 0.9, 0.9],
        vec![0.9, 0.8, 0.3, 0.4],
    )
    .unwrap();
    let gt = CodeMap::from_parts(2, 2, l2, vec![Some(0b10), Some(0b01), None, Some(0b11)], None);
    let hist = ErrorHistogram {
        values: vec![0.2, 0.1],
        lambda: 0.05,
    };
    let t = total_loss(&pred, &gt, &hist, &params).unwrap();
    close(t.histogram.values[0], 0.215, 1e-12, "gated histogram")?;
    close(t.histogram.values[1], 0.095, 1e-12, "gated histogram")?;
    close(t.mask, 0.3, 1e-12, "2x2 mask term")?;
    close(t.total, 1.699_172_152_159_207_129_046_186_343_0, 1e-9, "2x2 total")?;

    let bg = PredictionMap::new(1, 1, 2, vec![0.2, 0.9], vec![0.1]).unwrap();
    let t = total_loss(&bg, &gt1, &ErrorHistogram::new(2, 0.05), &params).unwrap();
    close(t.total, 0.9, 1e-12, "background-gated total")?;

    // gradients against central differences
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let d = rng.gen_range(1..=16);
        let b: Vec<bool> = (0..d).map(|_| rng.gen()).collect();
        let p: Vec<f64> = (0..d).map(|_| rng.gen_range(0.01..0.99)).collect();
        let w = compute_weights(
            &ErrorHistogram {
                values: (0..d).map(|_| rng.gen()).collect(),
                lambda: 0.05,
            },
            0.5,
        );
        let g = hamming_bce_grad(&b, &p, &w, eps).unwrap();
        for j in 0..d {
            let (mut lo, mut hi) = (p.clone(), p.clone());
            lo[j] -= h;
            hi[j] += h;
            let fd = (bce(&b, &hi, &w) - bce(&b, &lo, &w)) / (2.0 * h);
            let rel = (g[j] - fd).abs() / g[j].abs().max(1e-12);
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-5, || format!("gradient relative error {worst:e}"))?;

    let mut worst_sum = 0.0f64;
    for _ in 0..10_000 {
        let d = rng.gen_range(1..=64);
        let hist = ErrorHistogram {
            values: (0..d).map(|_| rng.gen()).collect(),
            lambda: 0.05,
        };
        let w = compute_weights(&hist, 0.5);
        ensure(w.0.iter().all(|&x| x >= 0.0), || "negative weight".into())?;
        worst_sum = worst_sum.max((w.0.iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst_sum <= 1e-12, || format!("weight sum off by {worst_sum:e}"))?;
    Ok(format!(
        "tabulated values within 1e-9; gradient rel. err {worst:.1e}; weight sums within {worst_sum:.1e}"
    ))
}

// ---------------------------------------------------------------- metrics

fn random_pose(rng: &mut ChaCha8Rng, t_scale: f64) -> PoseSE3 {
    let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let q = UnitQuaternion::from_scaled_axis(axis * std::f64::consts::PI / 3f64.sqrt());
    let t = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * t_scale;
    PoseSE3::from_quaternion(&q, t)
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..50 {
        let n = rng.gen_range(10..400);
        let pts: Vec<Point3<f64>> = (0..n)
            .map(|_| Point3::new(rng.gen_range(-80.0..80.0), rng.gen_range(-40.0..40.0), rng.gen_range(-20.0..20.0)))
            .collect();
        let gt = random_pose(&mut rng, 200.0);
        let small = UnitQuaternion::from_scaled_axis(Vector3::new(0.02, -0.01, 0.03) * rng.gen_range(0.0..2.0));
        let pred = PoseSE3::new(small.to_rotation_matrix().into_inner() * gt.rotation, gt.translation + Vector3::new(1.0, -2.0, 0.5)).unwrap();
        let pred = if case % 2 == 0 { pred } else { random_pose(&mut rng, 200.0) };

        let mut add = 0.0;
        let mut adds = 0.0;
        for p in &pts {
            let a = pred.rotation * p.coords + pred.translation;
            add += (a - (gt.rotation * p.coords + gt.translation)).norm();
            let mut best = f64::INFINITY;
            for q in &pts {
                best = best.min((a - (gt.rotation * q.coords + gt.translation)).norm());
            }
            adds += best;
        }
        add /= n as f64;
        adds /= n as f64;
        let got_add = add_error(&pred, &gt, &pts).unwrap();
        let got_adds = adds_error(&pred, &gt, &pts).unwrap();
        close(got_add, add, 1e-9, &format!("case {case} ADD"))?;
        close(got_adds, adds, 1e-9, &format!("case {case} ADD-S"))?;
        ensure(got_adds <= got_add, || format!("case {case}: ADD-S {got_adds} > ADD {got_add}"))?;
    }

    // 360-point ring, prediction rotated by one symmetry step plus half a step
    let r = 40.0;
    let ring: Vec<Point3<f64>> = (0..360)
        .map(|k| {
            let a = (k as f64).to_radians();
            Point3::new(r * a.cos(), r * a.sin(), 0.0)
        })
        .collect();
    let gt = PoseSE3::from_translation(Vector3::new(0.0, 0.0, 500.0));
    let bound = 2.0 * r * (0.5f64.to_radians()).sin();
    for step in [1.0, 7.3, 90.0, 181.5] {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), f64::to_radians(step));
        let pred = PoseSE3::from_quaternion(&q, gt.translation);
        let e = adds_error(&pred, &gt, &ring).unwrap();
        ensure(e <= bound + 1e-12, || format!("ring ADD-S {e} above chord bound {bound}"))?;
    }

    for case in 0..20 {
        let pts: Vec<Point3<f64>> = (0..200)
            .map(|_| Point3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)))
            .collect();
        let mut best = 0.0f64;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.max((pts[i] - pts[j]).norm());
            }
        }
        let d = diameter(&pts).unwrap();
        ensure(d == best, || format!("diameter case {case}: {d} vs {best}"))?;
    }
    Ok("50 ADD/ADD-S cases within 1e-9, ring within chord bound, 20 diameters exact".into())
}

// ---------------------------------------------------------------- EPnP

fn epnp_correctness() -> Check {
    let cam = CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0, 640, 480).unwrap();
    let project = |pose: &PoseSE3, pts: &[Point3<f64>]| -> Vec<Correspondence> {
        pts.iter()
            .map(|p| Correspondence {
                pixel: cam.project(&pose.transform(p)).expect("in front"),
                point: *p,
                code: 0,
            })
            .collect()
    };
    let mut worst_r = 0.0f64;
    let mut worst_t = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.gen_range(6..=20);
        let pts: Vec<Point3<f64>> = (0..n)
            .map(|_| Point3::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)))
            .collect();
        let mut gt = random_pose(&mut rng, 60.0);
        gt.translation.z += 1000.0;
        let pose = epnp(&project(&gt, &pts), &cam).map_err(|e| format!("seed {seed}: {e}"))?;
        worst_r = worst_r.max(pose.rotation_angle_to(&gt));
        worst_t = worst_t.max((pose.translation - gt.translation).norm());
    }
    ensure(worst_r < 1e-6 && worst_t < 1e-6, || {
        format!("worst rotation {worst_r:e} rad, translation {worst_t:e} mm")
    })?;

    let square = [
        Point3::new(-50.0, -50.0, 0.0),
        Point3::new(50.0, -50.0, 0.0),
        Point3::new(50.0, 50.0, 0.0),
        Point3::new(-50.0, 50.0, 0.0),
        Point3::new(0.0, 0.0, 0.0),
    ];
    let gt = PoseSE3::from_translation(Vector3::new(0.0, 0.0, 1000.0));
    let pose = epnp(&project(&gt, &square), &cam).map_err(|e| format!("square: {e}"))?;
    ensure(pose.rotation_angle_to(&gt) < 1e-6 && (pose.translation - gt.translation).norm() < 1e-6, || {
        "square + center not recovered".into()
    })?;

    let line: Vec<Correspondence> = (0..4)
        .map(|k| Correspondence {
            pixel: Point2::new(300.0 + 10.0 * k as f64, 240.0),
            point: Point3::new(10.0 * k as f64, 0.0, 0.0),
            code: 0,
        })
        .collect();
    match epnp(&line, &cam) {
        Err(PnpError::Degenerate(_)) => {}
        other => return Err(format!("collinear points gave {other:?}")),
    }
    Ok(format!(
        "100 seeds: worst rotation {worst_r:.1e} rad, translation {worst_t:.1e} mm; collinear rejected"
    ))
}

// ---------------------------------------------------------------- formats

fn format_round_trips() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let bases = [primitives::icosahedron(30.0), primitives::cube(20.0), primitives::tetrahedron()];
    for k in 0..10 {
        let mut mesh = bases[k % 3].clone();
        for _ in 0..rng.gen_range(1..=3) {
            mesh = subdivide_midpoint(&mesh);
        }
        let radix = [2u32, 3, 4, 5, 16][rng.gen_range(0..5)];
        let mut digits = 1;
        while (radix as usize).pow(digits + 1) <= mesh.vertex_count() && digits < 6 {
            digits += 1;
        }
        let params = EncodingParams::new(radix, rng.gen_range(1..=digits), rng.gen());
        let h = build_hierarchy(&mesh, &params).map_err(|e| e.to_string())?;
        let book = Codebook::build(&mesh, &h).map_err(|e| e.to_string())?;
        let bytes = codebook_to_bytes(&book);
        let back = codebook_from_bytes(&bytes).map_err(|e| format!("codebook {k}: {e}"))?;
        ensure(codebook_to_bytes(&back) == bytes, || format!("codebook {k} bytes differ"))?;
        ensure(back.table() == book.table() && back.vertex_codes() == book.vertex_codes(), || {
            format!("codebook {k} content differs")
        })?;
    }
    for k in 0..10 {
        let radix = [2u32, 3, 4, 10, 16, 256][rng.gen_range(0..6)];
        let bits_per_digit = radix.next_power_of_two().trailing_zeros();
        let layout = CodeLayout::new(radix, rng.gen_range(1..=(64 / bits_per_digit).min(16))).unwrap();
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let codes = (0..w * h)
            .map(|_| {
                rng.gen_bool(0.6).then(|| {
                    let digits: Vec<u32> = (0..layout.digits()).map(|_| rng.gen_range(0..radix)).collect();
                    layout.from_digits(&digits).unwrap()
                })
            })
            .collect();
        let depth = (k % 3 != 0).then(|| (0..w * h).map(|_| rng.gen_range(0.0f32..2000.0)).collect());
        let map = CodeMap::from_parts(w, h, layout, codes, depth);
        let bytes = codemap_to_bytes(&map);
        let back = codemap_from_bytes(&bytes).map_err(|e| format!("code map {k}: {e}"))?;
        ensure(codemap_to_bytes(&back) == bytes, || format!("code map {k} bytes differ"))?;
        ensure(back == map, || format!("code map {k} content differs"))?;
    }
    Ok("10 codebooks and 10 code maps byte-identical after write/read/write".into())
}

// ---------------------------------------------------------------- driver

fn guarded(f: impl FnOnce() -> Check) -> Check {
    panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() -> ExitCode {
    let mut enc = None;
    let mut results: Vec<(u32, &str, Check)> = Vec::new();
    results.push((1, "encoding soundness", guarded(|| encoding_soundness(&mut enc))));
    let (c2, c3) = panic::catch_unwind(round_trip_and_plateau)
        .unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
    results.push((2, "clean round-trip pose recovery", c2));
    results.push((3, "truncation plateau", c3));
    results.push((4, "coherence filter beats RANSAC-only", guarded(outlier_filter)));
    results.push((5, "radix partition equivalence", guarded(|| radix_equivalence(enc.as_ref()))));
    results.push((6, "loss oracles", guarded(loss_oracles)));
    results.push((7, "metric oracles", guarded(metric_oracles)));
    results.push((8, "EPnP correctness", guarded(epnp_correctness)));
    results.push((9, "file format round trips", guarded(format_round_trips)));

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(d) => println!("criterion {n} ({name}): PASS - {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL - {d}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
