//! Stage runner: certify → net → extract → converge → glue/limit → project → measure, with
//! line-oriented `key=value` reports stamped with the config hash.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::atlas::{
    default_spacing, delta_net, delta_net_subdivided, net_size_bound, GraphOptions, NetResult, RadiusSequence, SubdividedParams,
};
use crate::config::{scenario_dims, PipelineConfig};
use crate::error::{GeomError, Result};
use crate::limit::{default_tol_glue, limit_from_system, structure_checks, CheckReport, LimitManifold};
use crate::measures::{
    default_probes, limit_bound_check, member_stats, tail_range, weak_convergence_check, BoundProfile, BoundReport, MeasureHandle, MemberStats,
    WeakReport,
};
use crate::projector::{convergence_row, reparametrize, smooth_normal_field, target_patches, ConvergenceRow, ReparamOptions};
use crate::scenario::{generate, GenParams, Scenario};
use crate::system::{detect_convergence, extract_at, nearest_vertices, system_distance, ConvergenceReport, GraphSystem};

/// Last stage to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Certify,
    Net,
    Converge,
    Limit,
    Project,
    Measure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateRow {
    pub index: usize,
    /// Mean per-entry system distance to the limit system.
    pub distance: Option<f64>,
    pub admitted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub index: usize,
    pub row: Option<ConvergenceRow>,
    pub failures: Vec<String>,
    pub error: Option<String>,
}

impl ProjectionRow {
    pub fn diffeomorphic(&self) -> bool {
        self.row.as_ref().is_some_and(|r| r.diffeomorphic)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Everything a run produced; fields past the requested stage stay empty.
pub struct PipelineRun {
    pub config: PipelineConfig,
    pub hash: String,
    pub scenario: Scenario,
    pub h: f64,
    pub tol_glue: f64,
    pub net: Option<NetResult>,
    pub limit_system: Option<GraphSystem>,
    pub member_systems: Vec<std::result::Result<GraphSystem, String>>,
    pub convergence: Option<ConvergenceReport>,
    pub limit: Option<LimitManifold>,
    pub checks: Option<CheckReport>,
    pub gate: Vec<GateRow>,
    pub projections: Vec<ProjectionRow>,
    pub normal_max_op: Option<f64>,
    pub weak: Option<WeakReport>,
    pub bound: Option<BoundReport>,
    pub verdicts: Vec<Verdict>,
    pub reports: BTreeMap<String, String>,
}

impl PipelineRun {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// Exit status: 0 when every verdict matches the annotations, 1 otherwise. Measure rows are
    /// reports and do not enter the status.
    pub fn status(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }

    fn emit(&mut self, file: &str, line: String) {
        let s = self.reports.entry(file.to_string()).or_default();
        let _ = writeln!(s, "hash={} {line}", self.hash);
    }
}

/// Validates the config against the scenario's dimensions; nothing is generated before this.
pub fn check_config(cfg: &PipelineConfig, scenario: &str) -> Result<()> {
    let (m, n) = scenario_dims(scenario)?;
    cfg.validate(m, n - m)
}

fn radii_for(cfg: &PipelineConfig, net: &NetResult) -> Vec<f64> {
    match &net.subdivision {
        Some(nu) => (0..net.points.len()).map(|j| cfg.delta_at(crate::atlas::annulus_of(nu, j))).collect(),
        None => vec![cfg.delta_at(1); net.points.len()],
    }
}

fn fmt_list<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn run_pipeline(cfg: &PipelineConfig, scenario: &str, upto: Stage) -> Result<PipelineRun> {
    check_config(cfg, scenario)?;
    let sc = generate(scenario, GenParams { i_min: cfg.i_min, i_max: cfg.i_max, resolution: cfg.resolution })?;
    let lim_mesh = &sc.limit;
    let m = lim_mesh.m;
    let all: Vec<usize> = (0..lim_mesh.num_vertices()).collect();
    let h = if cfg.h > 0.0 { cfg.h } else { default_spacing(lim_mesh, &all) };
    let tol_glue = if cfg.tol_glue > 0.0 { cfg.tol_glue } else { default_tol_glue(h, cfg.alpha, m) };
    let hash = cfg.hash();
    let mut run = PipelineRun {
        config: cfg.clone(),
        hash,
        scenario: sc,
        h,
        tol_glue,
        net: None,
        limit_system: None,
        member_systems: Vec::new(),
        convergence: None,
        limit: None,
        checks: None,
        gate: Vec::new(),
        projections: Vec::new(),
        normal_max_op: None,
        weak: None,
        bound: None,
        verdicts: Vec::new(),
        reports: BTreeMap::new(),
    };
    for line in cfg.to_text().lines() {
        run.emit("config.txt", line.to_string());
    }
    run.emit("config.txt", format!("scenario={scenario} h={h:e} tol_glue={tol_glue:e}"));

    // certify + net on the reference limit mesh
    let levels = cfg.level_count();
    let members_mass: Vec<MeasureHandle> = run.scenario.members.iter().map(MeasureHandle::from_immersion).collect();
    let limit_mass = MeasureHandle::from_immersion(&run.scenario.limit);
    let mass_bound = |r: f64| -> f64 {
        let mx = members_mass.iter().chain(std::iter::once(&limit_mass)).map(|mu| mu.ball_mass_at(&vec![0.0; mu.cells[0].vertices[0].len()], r)).fold(0.0, f64::max);
        1.5 * mx
    };
    let net = match &cfg.exhaustion {
        None => delta_net(&run.scenario.limit, cfg.delta_at(1) / cfg.net_shrink, cfg.delta_at(1), cfg.r_at(1), cfg.alpha)?,
        Some(ex) => {
            let radii = RadiusSequence::new((1..=levels).map(|j| cfg.r_at(j)).collect(), cfg.alpha)?;
            let p = SubdividedParams {
                radii: &radii,
                net_delta: (1..=levels).map(|j| cfg.delta_at(j) / cfg.net_shrink).collect(),
                z_delta: (1..=levels).map(|j| cfg.delta_at(j)).collect(),
                levels,
                exhaustion: *ex,
                mass_bound: &mass_bound,
            };
            delta_net_subdivided(&run.scenario.limit, &p)?
        }
    };
    let vol = run.scenario.limit.total_volume();
    let mut rows = Vec::new();
    for (j, &q) in net.points.iter().enumerate() {
        rows.push(format!("certify point={j} vertex={q} r={:e} alpha={:e} ok=1", net.r[j], cfg.alpha));
    }
    for r in rows {
        run.emit("certify.txt", r);
    }
    let mut rows = vec![format!("net points={} vertices={} covers={}", net.points.len(), run.scenario.limit.num_vertices(), net.covers(run.scenario.limit.num_vertices(), 0..run.scenario.limit.num_vertices()) as u8)];
    match (&net.subdivision, &net.nu_ceiling) {
        (Some(nu), Some(ceil)) => {
            rows.push(format!("net subdivision={} ceiling={} within={}", fmt_list(nu), fmt_list(ceil), nu.iter().zip(ceil).all(|(a, b)| a <= b) as u8));
        }
        _ => {
            let bound = net_size_bound(m, cfg.delta_at(1) / cfg.net_shrink, vol);
            rows.push(format!("net bound={bound} within={}", (net.points.len() <= bound) as u8));
        }
    }
    for (j, z) in net.z.iter().enumerate() {
        rows.push(format!("net point={j} vertex={} z={} z_tilde={}", net.points[j], fmt_list(z), fmt_list(&net.z_tilde[j])));
    }
    for r in rows {
        run.emit("net.txt", r);
    }
    let net_ok = match (&net.subdivision, &net.nu_ceiling) {
        (Some(nu), Some(ceil)) => nu.iter().zip(ceil).all(|(a, b)| a <= b),
        _ => net.points.len() <= net_size_bound(m, cfg.delta_at(1) / cfg.net_shrink, vol),
    };
    run.verdicts.push(Verdict { name: "net_bound", pass: net_ok, detail: format!("points={}", net.points.len()) });
    run.net = Some(net);
    if upto == Stage::Certify || upto == Stage::Net {
        run.emit("summary.txt", summary_line(&run));
        return Ok(run);
    }

    // extract
    let net = run.net.as_ref().unwrap();
    let opts = GraphOptions { h: Some(h) };
    let limit_system = extract_at(&run.scenario.limit, &net.points, &net.r, cfg.alpha, opts, net.subdivision.clone())?;
    let positions: Vec<Vec<f64>> = net.points.iter().map(|&q| run.scenario.limit.pos(q).to_vec()).collect();
    let member_systems: Vec<std::result::Result<GraphSystem, String>> = run
        .scenario
        .members
        .iter()
        .map(|mem| {
            let pts = nearest_vertices(mem, &positions);
            extract_at(mem, &pts, &net.r, cfg.alpha, opts, net.subdivision.clone())
                .and_then(|s| s.aligned_to(&limit_system))
                .map_err(|e| e.to_string())
        })
        .collect();
    let level_list: Vec<Option<usize>> = if cfg.exhaustion.is_some() { (1..=levels).map(Some).collect() } else { vec![None] };
    let deepest = *level_list.last().unwrap();
    let ok_idx: Vec<usize> = (0..member_systems.len()).filter(|&i| member_systems[i].is_ok()).collect();
    let ok_sys: Vec<GraphSystem> = ok_idx.iter().map(|&i| member_systems[i].clone().unwrap()).collect();
    let mut rows = Vec::new();
    for (i, s) in member_systems.iter().enumerate() {
        let idx = run.scenario.indices[i];
        match s {
            Ok(g) => rows.push(format!("extract i={idx} entries={} ok=1", g.len())),
            Err(e) => rows.push(format!("extract i={idx} ok=0 error=\"{e}\"")),
        }
    }
    let convergence = if ok_sys.len() >= 2 {
        let rep = detect_convergence(&ok_sys, cfg.conv_tol, &level_list)?;
        for line in rep.to_text("").lines() {
            rows.push(line.to_string());
        }
        Some(rep)
    } else {
        None
    };
    // gate: distance of each member system to the limit system at the deepest level
    let gate: Vec<GateRow> = member_systems
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let index = run.scenario.indices[i];
            match s {
                Ok(g) => {
                    let d = system_distance(g, &limit_system, deepest).ok().map(|d| d / limit_system.truncated_len(deepest) as f64);
                    GateRow { index, distance: d, admitted: d.is_some_and(|d| d <= cfg.gate_tol) }
                }
                Err(_) => GateRow { index, distance: None, admitted: false },
            }
        })
        .collect();
    for g in &gate {
        rows.push(format!(
            "gate i={} distance={} admitted={}",
            g.index,
            g.distance.map_or("none".to_string(), |d| format!("{d:e}")),
            g.admitted as u8
        ));
    }
    for r in rows {
        run.emit("converge.txt", r);
    }
    run.limit_system = Some(limit_system);
    run.member_systems = member_systems;
    run.convergence = convergence;
    run.gate = gate;
    if upto == Stage::Converge {
        run.emit("summary.txt", summary_line(&run));
        return Ok(run);
    }

    // glue + limit
    let net = run.net.as_ref().unwrap();
    let radii = radii_for(cfg, net);
    let lim = limit_from_system(run.limit_system.as_ref().unwrap(), &radii, &net.z, tol_glue, cfg.tol_geom)?;
    let proper = match (&cfg.exhaustion, &net.subdivision) {
        (Some(ex), Some(nu)) => Some((ex, nu.as_slice())),
        _ => None,
    };
    let checks = structure_checks(&lim, &net.z_tilde, proper);
    let ann = run.scenario.annotations.clone();
    let mut rows = Vec::new();
    rows.push(format!(
        "limit charts={} classes={} components={} expected_components={} closed={}",
        lim.charts.len(),
        lim.classes.len(),
        lim.components,
        ann.components,
        fmt_list(&lim.closed.iter().map(|&c| c as u8).collect::<Vec<_>>())
    ));
    let a = &lim.audit;
    rows.push(format!(
        "audit class_spread={:e} consistency={} triples={} transitivity={} z_warnings={} round_trip={:e} min_det={:e}",
        a.class_spread,
        a.consistency_pass as u8,
        a.triples_checked,
        a.transitivity_pass() as u8,
        a.z_warnings.len(),
        a.max_round_trip,
        a.min_transition_det
    ));
    if let Some(w) = &a.transitivity {
        rows.push(format!("audit witness=\"{w:?}\""));
    }
    for it in &checks.items {
        rows.push(format!("check name={} pass={} witness=\"{}\"", it.name, it.pass as u8, it.witness.clone().unwrap_or_default()));
    }
    for r in rows {
        run.emit("limit.txt", r);
    }
    run.reports.insert("limit_export.txt".into(), lim.export());
    run.verdicts.push(Verdict { name: "components", pass: lim.components == ann.components, detail: format!("{} vs {}", lim.components, ann.components) });
    if ann.compact {
        run.verdicts.push(Verdict { name: "closed", pass: lim.all_closed(), detail: String::new() });
    }
    run.verdicts.push(Verdict { name: "consistency", pass: a.consistency_pass, detail: format!("spread={:e}", a.class_spread) });
    run.verdicts.push(Verdict { name: "transitivity", pass: a.transitivity_pass(), detail: format!("triples={}", a.triples_checked) });
    run.verdicts.push(Verdict {
        name: "structure",
        pass: checks.all_pass(),
        detail: checks.items.iter().filter(|i| !i.pass).map(|i| i.name).collect::<Vec<_>>().join(","),
    });
    run.limit = Some(lim);
    run.checks = Some(checks);
    if upto == Stage::Limit {
        run.emit("summary.txt", summary_line(&run));
        return Ok(run);
    }

    // project
    if cfg.project {
        let lim = run.limit.as_ref().unwrap();
        let smoothing = if cfg.smoothing > 0.0 { cfg.smoothing } else { 2.0 * h };
        let nf = smooth_normal_field(lim, smoothing, cfg.alpha, cfg.cond_max)?;
        let target_r = cfg.delta_prime_at(1).unwrap_or_else(|| (2.0 * cfg.delta.iter().cloned().fold(0.0, f64::max)).min(cfg.r_at(1)));
        let surj = cfg.exhaustion.map(|ex| (ex, levels.saturating_sub(1)));
        let ropts = ReparamOptions { tol_fix: cfg.tol_fix, max_steps: 500, collision: 0.25 * h, surjectivity_region: surj };
        let mut projections = Vec::new();
        for (i, g) in run.gate.iter().enumerate() {
            if !g.admitted {
                continue;
            }
            let target = &run.scenario.members[i];
            let out = target_patches(lim, target, target_r).and_then(|tg| {
                let res = reparametrize(lim, &nf, &tg, target, &ropts)?;
                let row = convergence_row(lim, &nf, &tg, &res, g.index, cfg.max_order)?;
                Ok((row, res.failures().iter().map(|f| format!("{}: {}", f.kind, f.witness)).collect::<Vec<_>>()))
            });
            projections.push(match out {
                Ok((row, failures)) => ProjectionRow { index: g.index, row: Some(row), failures, error: None },
                Err(e) => ProjectionRow { index: g.index, row: None, failures: Vec::new(), error: Some(e.to_string()) },
            });
        }
        let mut rows = vec![format!("normal smoothing={smoothing:e} max_op={:e} max_cond={:e} target_radius={target_r:e}", nf.max_op, nf.max_cond)];
        for g in &run.gate {
            if !g.admitted {
                rows.push(format!("project i={} gated=1", g.index));
            }
        }
        for p in &projections {
            match &p.row {
                Some(r) => {
                    let cs: Vec<String> = r.c.iter().enumerate().map(|(l, v)| format!("c{l}={v:e}")).collect();
                    rows.push(format!(
                        "project i={} sup_t={:e} {} a_op={:e} contraction={:e} residual={:e} diffeomorphic={}",
                        p.index,
                        r.sup_t,
                        cs.join(" "),
                        r.max_a_op,
                        r.max_contraction,
                        r.max_residual,
                        r.diffeomorphic as u8
                    ));
                }
                None => rows.push(format!("project i={} error=\"{}\"", p.index, p.error.clone().unwrap_or_default())),
            }
            for f in &p.failures {
                rows.push(format!("project i={} failure=\"{f}\"", p.index));
            }
        }
        for r in rows {
            run.emit("project.txt", r);
        }
        // annotation verdict over the admitted members
        let admitted: Vec<&ProjectionRow> = projections.iter().collect();
        if ann.diffeomorphic {
            let tail = &admitted[tail_range(admitted.len()).start.min(admitted.len())..];
            let ok = !tail.is_empty() && tail.iter().all(|p| p.diffeomorphic());
            run.verdicts.push(Verdict { name: "diffeomorphic", pass: ok, detail: format!("tail={}", tail.len()) });
        } else {
            let ok = !admitted.is_empty() && admitted.iter().all(|p| !p.diffeomorphic());
            let detail = if ok { "non-diffeomorphic correctly detected".to_string() } else { "a bijective map was reported".to_string() };
            run.verdicts.push(Verdict { name: "non_diffeomorphic", pass: ok, detail });
        }
        let alpha = cfg.alpha;
        let inv_ok = admitted
            .iter()
            .filter_map(|p| p.row.as_ref())
            .all(|r| r.max_contraction <= 4.0 * alpha * alpha + 1e-6 && r.max_residual <= cfg.tol_fix);
        run.verdicts.push(Verdict { name: "projection_invariants", pass: inv_ok, detail: String::new() });
        run.normal_max_op = Some(nf.max_op);
        run.projections = projections;
    }
    if upto == Stage::Project {
        run.emit("summary.txt", summary_line(&run));
        return Ok(run);
    }

    // measure
    let probes = default_probes(&run.scenario.limit, cfg.probe_width);
    let scale = cfg.exhaustion.map_or(1.0, |e| e.scale);
    let compact_r: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|x| x * scale).collect();
    let open_r: Vec<f64> = [1.5, 3.0].iter().map(|x| x * scale).collect();
    let weak = weak_convergence_check(&members_mass, &limit_mass, &probes, &compact_r, &open_r)?;
    let p_meas = 2.0;
    let ball_r: Vec<f64> = if cfg.exhaustion.is_some() { (1..=levels).map(|j| j as f64 * scale).collect() } else { Vec::new() };
    let order = if cfg.exhaustion.is_some() { cfg.max_order } else { 0 };
    let stats: Vec<MemberStats> = run
        .scenario
        .members
        .iter()
        .zip(&run.member_systems)
        .map(|(mem, sys)| member_stats(mem, sys.as_ref().ok().map(|g| g.entries.as_slice()), p_meas, &ball_r, order))
        .collect::<Result<Vec<_>>>()?;
    let lstats = member_stats(&run.scenario.limit, run.limit_system.as_ref().map(|g| g.entries.as_slice()), p_meas, &ball_r, order)?;
    let vbound = stats.iter().map(|s| s.volume).fold(0.0, f64::max);
    let mass_table: Vec<(f64, f64)> = ball_r.iter().map(|&r| (r, mass_bound(r))).collect();
    let deriv_table: Vec<(f64, Vec<f64>)> = ball_r
        .iter()
        .enumerate()
        .map(|(ri, &r)| {
            let mut v = vec![0.0; order + 1];
            for s in &stats {
                if let Some((_, d)) = s.derivative_sups.get(ri) {
                    for (a, b) in v.iter_mut().zip(d) {
                        *a = f64::max(*a, 1.5 * b);
                    }
                }
            }
            (r, v)
        })
        .collect();
    let profile = BoundProfile {
        mass: Box::new(move |r| mass_table.iter().find(|(x, _)| *x == r).map_or(f64::INFINITY, |(_, c)| *c)),
        derivative: Box::new(move |l, r| deriv_table.iter().find(|(x, _)| *x == r).and_then(|(_, v)| v.get(l).copied()).unwrap_or(f64::INFINITY)),
    };
    let bound = limit_bound_check(&stats, &lstats, vbound, &profile);
    let mut rows = Vec::new();
    for p in &weak.probes {
        let pr = &probes[p.probe];
        rows.push(format!(
            "probe id={} center={} half_width={:e} norm={:e} limit={:e} gaps={} decreasing={}",
            p.probe,
            fmt_list(&pr.center.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>()),
            pr.half_width[0],
            pr.c1_norm(),
            p.limit_value,
            fmt_list(&p.gaps.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>()),
            p.decreasing as u8
        ));
    }
    for r in &weak.regions {
        rows.push(format!(
            "region radius={:e} kind={} limit={:e} tail={:e} slack={:e} pass={}",
            r.radius,
            if r.compact { "compact" } else { "open" },
            r.limit_value,
            r.tail,
            r.slack,
            r.pass as u8
        ));
    }
    rows.push(format!(
        "semicontinuity p={p_meas} limit={:e} tail_min={:e} slack={:e} gap={:e} pass={} volume_pass={} mass_violations={} derivative_violations={}",
        bound.limit_a_lp,
        bound.tail_min_a_lp,
        bound.slack,
        bound.gap,
        bound.semicontinuity_pass as u8,
        bound.volume_pass as u8,
        bound.mass_violations.len(),
        bound.derivative_violations.len()
    ));
    for (i, s) in stats.iter().enumerate() {
        rows.push(format!("member i={} a_lp={:e} volume={:e}", run.scenario.indices[i], s.a_lp, s.volume));
    }
    for r in rows {
        run.emit("measure.txt", r);
    }
    run.weak = Some(weak);
    run.bound = Some(bound);
    run.emit("summary.txt", summary_line(&run));
    Ok(run)
}

fn summary_line(run: &PipelineRun) -> String {
    let mut s = format!("scenario={} status={}", run.scenario.name, run.status());
    for v in &run.verdicts {
        let _ = write!(s, " {}={}", v.name, v.pass as u8);
    }
    s
}

/// Maps an error to the CLI exit status: 2 for input and configuration problems, 1 otherwise.
pub fn error_status(e: &GeomError) -> i32 {
    match e {
        GeomError::Config(_)
        | GeomError::Parse { .. }
        | GeomError::UnknownScenario(_)
        | GeomError::Io(_)
        | GeomError::InvalidArgument(_)
        | GeomError::InvalidMesh(_)
        | GeomError::ExponentTooSmall { .. }
        | GeomError::DimensionMismatch { .. } => 2,
        _ => 1,
    }
}
