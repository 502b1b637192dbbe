//! Acceptance criteria 1 to 10, one `criterion N pass|FAIL ...` line each.
//! Heavy scenarios are run once in process and shared between criteria.

use std::path::PathBuf;
use std::process::Command;

use immersa::atlas::{calibrate_c, delta_net, immersion_a_lp, max_graph_radius, net_size_bound, radius_bound, RadiusSample};
use immersa::config::PipelineConfig;
use immersa::grid::GridBall;
use immersa::limit::{drop_z_pair, injectable_pairs, limit_from_system};
use immersa::linalg::EuclideanIsometry;
use immersa::measures::{default_probes, tail_range};
use immersa::patch::{estimate_report, fundamental_forms, GraphPatch};
use immersa::pipeline::{run_pipeline, PipelineRun, Stage};
use immersa::projector::{build_frame, frame_vertical};
use immersa::scenario::{circle, icosphere, SCENARIOS};
use immersa::system::{system_distance, GraphSystem, SystemEntry};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20240611;
// criterion 1
const ESTIMATE_PATCHES: usize = 120;
const ESTIMATE_MIN_SLACK: f64 = -0.02;
const ESTIMATE_SHRINK: f64 = 4.0;
// criterion 2
const RADIUS_ORACLE_TOL: f64 = 0.01;
const BISECTION_MARGIN: f64 = 1e-3;
// criterion 4
const METRIC_PAIRS: usize = 200;
const TRIANGLE_SLACK: f64 = 1e-12;
// criterion 5
const FAULTS: usize = 10;
// criterion 6
const CONTRACTION_EXTRA: f64 = 1e-6;
const RESIDUAL_MAX: f64 = 1e-10;
const FRAME_TOL: f64 = 1e-14;
const A_OP_MAX: f64 = 0.5;
// criterion 7
const SUP_T_REL: f64 = 0.2;
const SUP_T_FROM: usize = 8;
const CIRCLE_I_MAX: usize = 32;
const C2_FLOOR: f64 = 0.5;
// criterion 9
const PROBE_FACTOR: f64 = 3.0;

struct Line {
    n: usize,
    pass: bool,
    detail: String,
}

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_immersa"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("immersa_acceptance_{}_{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn run(name: &str, upto: Stage, edit: impl Fn(&mut PipelineConfig)) -> PipelineRun {
    let mut cfg = PipelineConfig::for_scenario(name).unwrap();
    edit(&mut cfg);
    run_pipeline(&cfg, name, upto).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn analytic_patch(rng: &mut ChaCha8Rng, m: usize, k: usize, r: f64, h: f64, scale: f64) -> GraphPatch {
    // quadratic, cubic and 1 - cos terms: centered, with bounded slope
    let coef: Vec<(Vec<f64>, Vec<f64>, f64, Vec<f64>)> = (0..k)
        .map(|_| {
            let q: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let c: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let s = rng.gen_range(-0.3..0.3);
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
            (q, c, s, w)
        })
        .collect();
    let grid = GridBall::new(m, r, h).unwrap();
    GraphPatch::from_fn(grid, k, true, |x| {
        coef.iter()
            .map(|(q, c, s, w)| {
                let mut v = 0.0;
                for a in 0..m {
                    for b in 0..m {
                        v += q[a * m + b] * x[a] * x[b];
                    }
                    // x³ − h²x has a zero central difference at 0
                    v += c[a] * (x[a].powi(3) - h * h * x[a]);
                }
                let wx: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
                scale * (v + s * (1.0 - wx.cos()))
            })
            .collect()
    })
    .unwrap()
}

fn criterion_1() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let r = 0.4;
    let (mut min_slack, mut def_h, mut def_h2) = (f64::INFINITY, 0.0f64, 0.0f64);
    let mut count = 0;
    for case in 0..ESTIMATE_PATCHES {
        let (m, k) = [(1, 1), (1, 2), (2, 1), (2, 2)][case % 4];
        let h = r / if m == 1 { 64.0 } else { 16.0 };
        let state: u64 = rng.gen();
        let mut scale = 1.0;
        // certified at α = 1: shrink the generator until the slope bound holds
        let reports = loop {
            let mut local = ChaCha8Rng::seed_from_u64(state);
            let p = analytic_patch(&mut local, m, k, r, h, scale);
            let mut local = ChaCha8Rng::seed_from_u64(state);
            let p2 = analytic_patch(&mut local, m, k, r, h / 2.0, scale);
            let rep = |p: &GraphPatch| {
                let (g, d) = fundamental_forms(p).unwrap();
                estimate_report(p, &g, &d, 4.0).unwrap()
            };
            let (a, b) = (rep(&p), rep(&p2));
            if a.du_sup <= 1.0 {
                break (a, b);
            }
            scale *= 0.5;
        };
        count += 1;
        min_slack = min_slack.min(reports.0.hessian_slack).min(reports.1.hessian_slack);
        def_h = def_h.max(-reports.0.hessian_slack);
        def_h2 = def_h2.max(-reports.1.hessian_slack);
    }
    let (def_h, def_h2) = (def_h.max(0.0), def_h2.max(0.0));
    let shrink_ok = def_h == 0.0 || def_h2 <= def_h / ESTIMATE_SHRINK;
    Line {
        n: 1,
        pass: count >= 100 && min_slack >= ESTIMATE_MIN_SLACK && shrink_ok,
        detail: format!("patches={count} min_slack={min_slack:.4} deficit_h={def_h:.2e} deficit_h/2={def_h2:.2e}"),
    }
}

fn criterion_2() -> Line {
    let p = 4.0;
    let segs = 720;
    let measure = |radius: f64, alpha: f64| {
        let c = circle([0.0, 0.0], radius, segs).unwrap();
        let r = max_graph_radius(&c, 0, alpha, 1e-4 * radius).unwrap();
        (r, immersion_a_lp(&c, p).unwrap())
    };
    let (unit, _) = measure(1.0, 1.0);
    let oracle = (unit - 0.5f64.sqrt()).abs() <= RADIUS_ORACLE_TOL;
    let alphas = [0.25, 0.5, 1.0];
    let calib: Vec<RadiusSample> = alphas
        .iter()
        .map(|&alpha| {
            let (measured, a_lp) = measure(1.0, alpha);
            RadiusSample { m: 1, p_exp: p, alpha, a_lp, measured }
        })
        .collect();
    let c = calibrate_c(&calib) * (1.0 - BISECTION_MARGIN);
    let mut worst: f64 = 0.0;
    for radius in [0.5, 1.0, 2.0, 4.0] {
        for &alpha in &alphas {
            let (measured, a_lp) = measure(radius, alpha);
            let bound = radius_bound(1, p, alpha, a_lp, c).unwrap();
            worst = worst.max(bound / measured);
        }
    }
    Line {
        n: 2,
        pass: oracle && worst <= 1.0,
        detail: format!("unit_radius={unit:.4} c={c:.4} max_bound_over_measured={worst:.4}"),
    }
}

fn criterion_3() -> Line {
    let mut bad = Vec::new();
    for s in SCENARIOS {
        let dir = scratch(&format!("net_{s}"));
        let out = Command::new(bin()).args(["net", "--scenario", s, "--out"]).arg(&dir).output().unwrap();
        let summary = std::fs::read_to_string(dir.join("summary.txt")).unwrap_or_default();
        let net = std::fs::read_to_string(dir.join("net.txt")).unwrap_or_default();
        let ceiling_ok = !net.contains("ceiling=") || net.contains("within=1");
        if out.status.code() != Some(0) || !summary.contains("net_bound=1") || !ceiling_ok {
            bad.push(s.to_string());
        }
        let _ = std::fs::remove_dir_all(&dir);
    }
    // several δ on closed curves and surfaces
    let c = circle([0.0, 0.0], 1.0, 720).unwrap();
    let s = icosphere(1.0, 3).unwrap();
    for delta in [0.05, 0.1, 0.2, 0.4] {
        let net = delta_net(&c, delta, delta, 0.5, 1.0).unwrap();
        if net.points.len() > net_size_bound(1, delta, c.total_volume()) {
            bad.push(format!("circle δ={delta}"));
        }
    }
    for delta in [0.2, 0.4] {
        let net = delta_net(&s, delta, delta, 0.45, 1.0).unwrap();
        if net.points.len() > net_size_bound(2, delta, s.total_volume()) {
            bad.push(format!("sphere δ={delta}"));
        }
    }
    Line { n: 3, pass: bad.is_empty(), detail: format!("scenarios={} failures=[{}]", SCENARIOS.len(), bad.join(",")) }
}

fn random_system(rng: &mut ChaCha8Rng) -> GraphSystem {
    let entries = (0..4)
        .map(|_| {
            let grid = GridBall::new(1, 0.3, 0.03).unwrap();
            let (a, b) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let patch = GraphPatch::from_fn(grid, 1, false, |x| vec![a * x[0] * x[0] + b * x[0].powi(3)]).unwrap();
            let rot = EuclideanIsometry::planar_rotation(rng.gen_range(-3.0..3.0));
            let t = DVector::from_vec(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            SystemEntry::new(EuclideanIsometry::new(rot, t, 1e-12).unwrap(), patch)
        })
        .collect();
    GraphSystem::new(entries, None, Some(vec![0, 1, 3, 4])).unwrap()
}

fn monotone_truncations(a: &GraphSystem, b: &GraphSystem) -> bool {
    let mut prev = 0.0;
    for l in 1..=a.levels() {
        let d = system_distance(a, b, Some(l)).unwrap();
        if d + 1e-12 < prev {
            return false;
        }
        prev = d;
    }
    true
}

fn criterion_4(subdivided: &[&PipelineRun]) -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let (mut tri, mut sym, mut zero_ok, mut mono) = (f64::NEG_INFINITY, 0.0f64, true, true);
    for _ in 0..METRIC_PAIRS {
        let (a, b, c) = (random_system(&mut rng), random_system(&mut rng), random_system(&mut rng));
        let d = |x: &GraphSystem, y: &GraphSystem| system_distance(x, y, None).unwrap();
        tri = tri.max(d(&a, &b) - d(&a, &c) - d(&c, &b));
        sym = sym.max((d(&a, &b) - d(&b, &a)).abs());
        zero_ok &= d(&a, &a) == 0.0 && d(&a, &b) >= 0.0;
        mono &= monotone_truncations(&a, &b);
    }
    let mut pipeline_pairs = 0;
    for run in subdivided {
        let lim = run.limit_system.as_ref().unwrap();
        for m in run.member_systems.iter().flatten() {
            mono &= monotone_truncations(m, lim);
            pipeline_pairs += 1;
        }
    }
    Line {
        n: 4,
        pass: tri <= TRIANGLE_SLACK && sym <= TRIANGLE_SLACK && zero_ok && mono,
        detail: format!("pairs={METRIC_PAIRS} triangle_excess={tri:.2e} asymmetry={sym:.2e} subdivided_pairs={pipeline_pairs} monotone={mono}"),
    }
}

fn criterion_5(dumbbell: &PipelineRun, circle_run: &PipelineRun, others: &[&PipelineRun]) -> Line {
    let dl = dumbbell.limit.as_ref().unwrap();
    let cl = circle_run.limit.as_ref().unwrap();
    let comps = dl.components == 2 && cl.components == 1 && cl.all_closed();
    let trans = [dumbbell, circle_run].iter().chain(others).all(|r| r.limit.as_ref().unwrap().audit.transitivity_pass());
    // fault injection: drop one Z pair at a time on the circle limit
    let net = circle_run.net.as_ref().unwrap();
    let sys = circle_run.limit_system.as_ref().unwrap();
    let radii = vec![circle_run.config.delta_at(1); sys.len()];
    let cands = injectable_pairs(cl);
    let step = (cands.len() / FAULTS).max(1);
    let mut caught = 0;
    let mut tried = 0;
    for &(j, l) in cands.iter().step_by(step).take(FAULTS) {
        tried += 1;
        let bad = drop_z_pair(&net.z, j, l);
        let lim = limit_from_system(sys, &radii, &bad, circle_run.tol_glue, circle_run.config.tol_geom).unwrap();
        if lim.audit.transitivity.is_some() {
            caught += 1;
        }
    }
    Line {
        n: 5,
        pass: comps && trans && tried == FAULTS && caught == FAULTS,
        detail: format!(
            "dumbbell_components={} circle_components={} circle_closed={} transitivity={trans} faults_caught={caught}/{tried}",
            dl.components,
            cl.components,
            cl.all_closed()
        ),
    }
}

fn criterion_6(circle_run: &PipelineRun) -> Line {
    let alpha = circle_run.config.alpha;
    let rows: Vec<_> = circle_run.projections.iter().filter_map(|p| p.row.as_ref()).collect();
    let contraction = rows.iter().map(|r| r.max_contraction).fold(0.0, f64::max);
    let residual = rows.iter().map(|r| r.max_residual).fold(0.0, f64::max);
    let a_op = rows.iter().map(|r| r.max_a_op).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let mut frame_err: f64 = 0.0;
    for _ in 0..1000 {
        let (m, k) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let nx = DMatrix::from_fn(m, k, |_, _| rng.gen_range(-2.0 * alpha..2.0 * alpha));
        let t: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let back = frame_vertical(&build_frame(&nx), &t);
        frame_err = back.iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(frame_err, f64::max);
    }
    let quarter = alpha <= 0.25 + 1e-15;
    Line {
        n: 6,
        pass: !rows.is_empty()
            && contraction <= 4.0 * alpha * alpha + CONTRACTION_EXTRA
            && residual <= RESIDUAL_MAX
            && frame_err <= FRAME_TOL
            && (!quarter || a_op <= A_OP_MAX),
        detail: format!("rows={} contraction={contraction:.3e} residual={residual:.1e} frame_err={frame_err:.1e} a_op={a_op:.3}", rows.len()),
    }
}

fn monotone_down(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn criterion_7(circle_run: &PipelineRun, shrinking: &PipelineRun) -> Line {
    let rows: Vec<_> = circle_run.projections.iter().filter_map(|p| p.row.as_ref()).collect();
    let mut worst: f64 = 0.0;
    for r in rows.iter().filter(|r| r.index >= SUP_T_FROM) {
        let i = r.index as f64;
        worst = worst.max((r.sup_t - 1.0 / i).abs() * i);
    }
    let tail = tail_range(rows.len());
    let c0: Vec<f64> = rows[tail.clone()].iter().map(|r| r.c[0]).collect();
    let c1: Vec<f64> = rows[tail].iter().map(|r| r.c[1]).collect();
    let circle_ok = rows.iter().any(|r| r.index == CIRCLE_I_MAX) && worst <= SUP_T_REL && monotone_down(&c0) && monotone_down(&c1);
    let srows: Vec<_> = shrinking.projections.iter().filter_map(|p| p.row.as_ref()).collect();
    let s1: Vec<f64> = srows.iter().map(|r| r.c[1]).collect();
    let c2_min = srows.iter().map(|r| r.c[2]).fold(f64::INFINITY, f64::min);
    let shrink_ok = srows.len() >= 3 && monotone_down(&s1) && s1[s1.len() - 1] <= 0.5 * s1[0] && c2_min >= C2_FLOOR;
    Line {
        n: 7,
        pass: circle_ok && shrink_ok,
        detail: format!(
            "circle_rows={} sup_t_rel_err={worst:.3} c0_tail_monotone={} c1_tail_monotone={} shrinking_c1={:.3}->{:.3} shrinking_c2_min={c2_min:.3}",
            rows.len(),
            monotone_down(&c0),
            monotone_down(&c1),
            s1.first().copied().unwrap_or(f64::NAN),
            s1.last().copied().unwrap_or(f64::NAN)
        ),
    }
}

fn criterion_8(spiral: &PipelineRun) -> Line {
    let rows = &spiral.projections;
    let none_bijective = !rows.is_empty() && rows.iter().all(|p| !p.diffeomorphic());
    let witnessed = rows.iter().filter(|p| p.failures.iter().any(|f| f.starts_with("surjective") || f.starts_with("well_defined"))).count();
    let first = rows.iter().flat_map(|p| p.failures.first()).next().cloned().unwrap_or_default();
    Line {
        n: 8,
        pass: none_bijective && witnessed == rows.len(),
        detail: format!("members={} witnessed={witnessed} first=\"{first}\"", rows.len()),
    }
}

fn criterion_9(circle_run: &PipelineRun, shrinking: &PipelineRun) -> Line {
    let weak = circle_run.weak.as_ref().unwrap();
    let probes = default_probes(&circle_run.scenario.limit, circle_run.config.probe_width);
    let mut worst: f64 = 0.0;
    for row in &weak.probes {
        let norm = probes[row.probe].c1_norm();
        for (t, gap) in row.gaps.iter().enumerate() {
            let i = circle_run.scenario.indices[t] as f64;
            worst = worst.max(gap / (PROBE_FACTOR * norm / i));
        }
    }
    let cb = circle_run.bound.as_ref().unwrap();
    let sb = shrinking.bound.as_ref().unwrap();
    let strict = sb.gap > sb.slack;
    Line {
        n: 9,
        pass: weak.probes.len() == 8 && worst <= 1.0 && cb.semicontinuity_pass && strict,
        detail: format!(
            "probes={} max_gap_over_bound={worst:.3} circle_limit={:.4} circle_tail_min={:.4} circle_slack={:.2e} shrinking_gap={:.4} shrinking_slack={:.2e}",
            weak.probes.len(),
            cb.limit_a_lp,
            cb.tail_min_a_lp,
            cb.slack,
            sb.gap,
            sb.slack
        ),
    }
}

fn criterion_10() -> Line {
    let cases: [(&str, &[&str]); 3] = [
        ("p<=m", &["run", "--scenario", "circle_family", "--set", "p_exp=1"]),
        ("alpha^2>=1/3", &["run", "--scenario", "circle_family", "--set", "alpha=0.6"]),
        ("ladder", &["run", "--scenario", "two_lines_dumbbell", "--set", "delta=0.1"]),
    ];
    let mut codes = Vec::new();
    let mut ok = true;
    for (name, args) in cases {
        let dir = scratch(&format!("gate_{}", codes.len()));
        let out = Command::new(bin()).args(args).arg("--out").arg(&dir).output().unwrap();
        let code = out.status.code();
        // rejected before anything is computed or written
        ok &= code == Some(2) && !dir.exists();
        codes.push(format!("{name}:{}", code.map_or("none".into(), |c| c.to_string())));
    }
    Line { n: 10, pass: ok, detail: format!("exit_codes=[{}]", codes.join(",")) }
}

#[test]
fn acceptance_criteria() {
    let mut lines = vec![criterion_1(), criterion_2(), criterion_3(), criterion_10()];

    let circle_run = run("circle_family", Stage::Measure, |c| c.i_max = CIRCLE_I_MAX);
    let dumbbell = run("two_lines_dumbbell", Stage::Limit, |_| {});
    let spiral = run("spiral_vs_circle", Stage::Project, |_| {});
    let shrinking = run("shrinking_perturbation", Stage::Measure, |c| {
        c.levels = 1;
        c.i_max = 8;
    });

    lines.push(criterion_4(&[&dumbbell, &shrinking]));
    lines.push(criterion_5(&dumbbell, &circle_run, &[&spiral, &shrinking]));
    lines.push(criterion_6(&circle_run));
    lines.push(criterion_7(&circle_run, &shrinking));
    lines.push(criterion_8(&spiral));
    lines.push(criterion_9(&circle_run, &shrinking));

    lines.sort_by_key(|l| l.n);
    for l in &lines {
        println!("criterion {} {} {}", l.n, if l.pass { "pass" } else { "FAIL" }, l.detail);
    }
    let failed: Vec<usize> = lines.iter().filter(|l| !l.pass).map(|l| l.n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
