//! `immersa` command-line driver.
//!
//! Exit codes: 0 success (expected failures included), 1 audit mismatch, 2 input or config error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use immersa::atlas::{certify, delta_net, max_graph_radius, refined_frame};
use immersa::config::PipelineConfig;
use immersa::mesh::SampledImmersion;
use immersa::pipeline::{error_status, run_pipeline, PipelineRun, Stage};
use immersa::scenario::{generate, GenParams};
use immersa::system::{system_distance, GraphSystem};
use immersa::GeomError;

#[derive(Parser)]
#[command(name = "immersa", about = "Graph-system compactness pipeline for sampled immersions")]
struct Cli {
    /// Worker thread cap (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// Scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after every other source.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Directory receiving the report files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    p_exp: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    delta_prime: Option<String>,
    #[arg(long)]
    net_shrink: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    tol_ortho: Option<String>,
    #[arg(long)]
    tol_geom: Option<String>,
    #[arg(long)]
    tol_glue: Option<String>,
    #[arg(long)]
    tol_fix: Option<String>,
    #[arg(long)]
    gate_tol: Option<String>,
    #[arg(long)]
    conv_tol: Option<String>,
    #[arg(long)]
    max_order: Option<String>,
    #[arg(long)]
    exhaustion: Option<String>,
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    project: Option<String>,
    #[arg(long)]
    smoothing: Option<String>,
    #[arg(long)]
    cond_max: Option<String>,
    #[arg(long)]
    probe_width: Option<String>,
    #[arg(long)]
    i_min: Option<String>,
    #[arg(long)]
    i_max: Option<String>,
    #[arg(long)]
    resolution: Option<String>,
}

impl ConfigArgs {
    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("alpha", &self.alpha),
            ("p_exp", &self.p_exp),
            ("c", &self.c),
            ("r", &self.r),
            ("delta", &self.delta),
            ("delta_prime", &self.delta_prime),
            ("net_shrink", &self.net_shrink),
            ("h", &self.h),
            ("tol_ortho", &self.tol_ortho),
            ("tol_geom", &self.tol_geom),
            ("tol_glue", &self.tol_glue),
            ("tol_fix", &self.tol_fix),
            ("gate_tol", &self.gate_tol),
            ("conv_tol", &self.conv_tol),
            ("max_order", &self.max_order),
            ("exhaustion", &self.exhaustion),
            ("levels", &self.levels),
            ("project", &self.project),
            ("smoothing", &self.smoothing),
            ("cond_max", &self.cond_max),
            ("probe_width", &self.probe_width),
            ("i_min", &self.i_min),
            ("i_max", &self.i_max),
            ("resolution", &self.resolution),
        ]
    }

    /// Scenario defaults, then the config file, then flags, then `--set`.
    fn resolve(&self) -> Result<(String, PipelineConfig), GeomError> {
        let file_text = match &self.config {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| GeomError::Io(format!("{}: {e}", p.display())))?),
            None => None,
        };
        let mut scenario = self.scenario.clone();
        if scenario.is_none() {
            if let Some(t) = &file_text {
                let mut probe = PipelineConfig::default();
                for (k, v) in probe.apply_text(t)? {
                    if k == "scenario" {
                        scenario = Some(v);
                    }
                }
            }
        }
        let scenario = scenario.ok_or_else(|| GeomError::Config("no scenario given (--scenario or scenario= in the config file)".into()))?;
        let mut cfg = PipelineConfig::for_scenario(&scenario)?;
        if let Some(t) = &file_text {
            cfg.apply_text(t)?;
        }
        for (k, v) in self.flags() {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| GeomError::Config(format!("--set expects key=value, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok((scenario, cfg))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Write scenario meshes and annotations.
    Gen {
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        i_min: usize,
        #[arg(long, default_value_t = 0)]
        i_max: usize,
        #[arg(long, default_value_t = 0)]
        resolution: usize,
    },
    /// Certify graph radii: on a mesh file at one vertex, or the net points of a scenario.
    Certify {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        vertex: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Greedy δ-net with intersection sets.
    Net {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// System distance between two system files.
    Distance {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        level: Option<usize>,
    },
    /// Member systems, pairwise distances, subsequence selection and the projection gate.
    Converge {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Glue the limit system and run the structure audits.
    Limit {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Reparametrize members over the limit.
    Project {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Measure convergence and bound checks.
    Measure {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Full pipeline.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn read_mesh(p: &Path) -> Result<SampledImmersion, GeomError> {
    let t = std::fs::read_to_string(p).map_err(|e| GeomError::Io(format!("{}: {e}", p.display())))?;
    SampledImmersion::from_text(&t)
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), GeomError> {
    std::fs::create_dir_all(dir).map_err(|e| GeomError::Io(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| GeomError::Io(format!("{}: {e}", p.display())))
}

fn print_reports(run: &PipelineRun, files: &[&str], out: &Option<PathBuf>) -> Result<(), GeomError> {
    for f in files {
        if let Some(t) = run.reports.get(*f) {
            print!("{t}");
        }
    }
    if let Some(dir) = out {
        for (name, text) in &run.reports {
            write_file(dir, name, text)?;
        }
    }
    Ok(())
}

fn stage(cfg: &ConfigArgs, upto: Stage, files: &[&str]) -> Result<i32, GeomError> {
    let (scenario, c) = cfg.resolve()?;
    let run = run_pipeline(&c, &scenario, upto)?;
    print_reports(&run, files, &cfg.out)?;
    Ok(run.status())
}

fn execute(cmd: Cmd) -> Result<i32, GeomError> {
    match cmd {
        Cmd::Gen { name, out, i_min, i_max, resolution } => {
            let sc = generate(&name, GenParams { i_min, i_max, resolution })?;
            for (i, m) in sc.indices.iter().zip(&sc.members) {
                write_file(&out, &format!("member_{i:03}.mesh"), &m.to_text())?;
            }
            write_file(&out, "limit.mesh", &sc.limit.to_text())?;
            let a = &sc.annotations;
            let ann = format!(
                "scenario={} members={} components={} compact={} diffeomorphic={} limit_curvature={}\n",
                sc.name,
                sc.members.len(),
                a.components,
                a.compact,
                a.diffeomorphic,
                a.limit_curvature.map_or("none".into(), |v| v.to_string())
            );
            write_file(&out, "annotations.txt", &ann)?;
            print!("{ann}");
            Ok(0)
        }
        Cmd::Certify { mesh: Some(p), vertex, cfg } => {
            let imm = read_mesh(&p)?;
            if vertex >= imm.num_vertices() {
                return Err(GeomError::InvalidArgument(format!("vertex {vertex} out of range")));
            }
            let (alpha, r) = mesh_params(&cfg)?;
            let frame = refined_frame(&imm, vertex)?;
            let verdict = certify(&imm, &frame, vertex, r, alpha);
            let max_r = max_graph_radius(&imm, vertex, alpha, 1e-3)?;
            match verdict {
                Ok(region) => println!("certify vertex={vertex} r={r:e} alpha={alpha:e} ok=1 inner={} max_radius={max_r:e}", region.inner.len()),
                Err(kind) => println!("certify vertex={vertex} r={r:e} alpha={alpha:e} ok=0 failure={kind:?} max_radius={max_r:e}"),
            }
            Ok(0)
        }
        Cmd::Certify { mesh: None, cfg, .. } => stage(&cfg, Stage::Certify, &["certify.txt"]),
        Cmd::Net { mesh: Some(p), cfg } => {
            let imm = read_mesh(&p)?;
            let (alpha, r) = mesh_params(&cfg)?;
            let delta = cfg.delta.as_deref().unwrap_or("0.05").parse::<f64>().map_err(|e| GeomError::Config(format!("delta: {e}")))?;
            let shrink = cfg.net_shrink.as_deref().unwrap_or("10").parse::<f64>().map_err(|e| GeomError::Config(format!("net_shrink: {e}")))?;
            let net = delta_net(&imm, delta / shrink, delta, r, alpha)?;
            print!("{}", net.to_text());
            Ok(0)
        }
        Cmd::Net { mesh: None, cfg } => stage(&cfg, Stage::Net, &["net.txt"]),
        Cmd::Distance { a, b, level } => {
            let read = |p: &Path| -> Result<GraphSystem, GeomError> {
                let t = std::fs::read_to_string(p).map_err(|e| GeomError::Io(format!("{}: {e}", p.display())))?;
                GraphSystem::from_text(&t)
            };
            let d = system_distance(&read(&a)?, &read(&b)?, level)?;
            println!("distance level={} value={d:e}", level.map_or("all".into(), |l| l.to_string()));
            Ok(0)
        }
        Cmd::Converge { cfg } => stage(&cfg, Stage::Converge, &["converge.txt"]),
        Cmd::Limit { cfg } => stage(&cfg, Stage::Limit, &["limit.txt"]),
        Cmd::Project { cfg } => stage(&cfg, Stage::Project, &["project.txt"]),
        Cmd::Measure { cfg } => stage(&cfg, Stage::Measure, &["measure.txt"]),
        Cmd::Run { cfg } => stage(
            &cfg,
            Stage::Measure,
            &["config.txt", "certify.txt", "net.txt", "converge.txt", "limit.txt", "project.txt", "measure.txt", "summary.txt"],
        ),
    }
}

/// `alpha` and `r` for the mesh-file commands, from flags or defaults.
fn mesh_params(cfg: &ConfigArgs) -> Result<(f64, f64), GeomError> {
    let base = PipelineConfig::default();
    let mut c = base.clone();
    if let Some(p) = &cfg.config {
        let t = std::fs::read_to_string(p).map_err(|e| GeomError::Io(format!("{}: {e}", p.display())))?;
        c.apply_text(&t)?;
    }
    for (k, v) in cfg.flags() {
        if let Some(v) = v {
            c.set(k, v)?;
        }
    }
    if !(c.alpha > 0.0 && c.alpha * c.alpha < 1.0 / 3.0) {
        return Err(GeomError::Config(format!("alpha={} must satisfy 0 < α² < 1/3", c.alpha)));
    }
    Ok((c.alpha, c.r_at(1)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_status(&e) as u8)
        }
    }
}
