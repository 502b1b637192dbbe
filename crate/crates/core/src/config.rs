//! Flat `key=value` pipeline configuration, per-scenario defaults, hypothesis checks, and the
//! config hash stamped on every report row.

use sha2::{Digest, Sha256};

use crate::atlas::{Exhaustion, OmegaSpec};
use crate::error::{GeomError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub p_exp: f64,
    /// Radius constant in `r = (cα/‖A‖_{L^p})^{p/(p−m)}`.
    pub c: f64,
    /// Certification radius per exhaustion level (last value repeats).
    pub r: Vec<f64>,
    /// Chart and intersection-set radius per level.
    pub delta: Vec<f64>,
    /// Target patch radius per level; when set, the ladder `δ′_i ≤ r_{i+1}/4`, `δ_i ≤ δ′_{i+1}/4` is enforced.
    pub delta_prime: Vec<f64>,
    /// Net cover radius is `δ/net_shrink`.
    pub net_shrink: f64,
    /// Grid spacing; 0 takes half the shortest edge of the reference mesh.
    pub h: f64,
    pub tol_ortho: f64,
    pub tol_geom: f64,
    /// 0 takes `max(3hα, 2h√m)`.
    pub tol_glue: f64,
    pub tol_fix: f64,
    /// Mean per-entry system distance admitting a target to projection.
    pub gate_tol: f64,
    /// Cauchy tolerance for subsequence selection (sum over entries); `inf` reports without selecting.
    pub conv_tol: f64,
    pub max_order: usize,
    pub exhaustion: Option<Exhaustion>,
    pub levels: usize,
    pub project: bool,
    /// 0 takes `2h`.
    pub smoothing: f64,
    pub cond_max: f64,
    pub probe_width: f64,
    pub i_min: usize,
    pub i_max: usize,
    pub resolution: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 0.25,
            p_exp: 4.0,
            c: 1.0,
            r: vec![0.2],
            delta: vec![0.05],
            delta_prime: Vec::new(),
            net_shrink: 10.0,
            h: 0.0,
            tol_ortho: 1e-10,
            tol_geom: 1e-9,
            tol_glue: 0.0,
            tol_fix: 1e-10,
            gate_tol: 0.5,
            conv_tol: f64::INFINITY,
            max_order: 2,
            exhaustion: None,
            levels: 1,
            project: true,
            smoothing: 0.0,
            cond_max: 10.0,
            probe_width: 0.5,
            i_min: 0,
            i_max: 0,
            resolution: 0,
        }
    }
}

/// `(m, n)` of every built-in scenario, known without generating meshes.
pub fn scenario_dims(name: &str) -> Result<(usize, usize)> {
    match name {
        "circle_family" | "spiral_vs_circle" | "two_lines_dumbbell" | "line_family" | "shrinking_perturbation" => Ok((1, 2)),
        "sphere_family" | "annulus_graphs" => Ok((2, 3)),
        other => Err(GeomError::UnknownScenario(other.to_string())),
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s}: {e}"))).collect()
}

fn exhaustion_text(e: &Option<Exhaustion>) -> String {
    match e {
        None => "none".into(),
        Some(Exhaustion { scale, omega: OmegaSpec::Whole }) => format!("balls:{scale}"),
        Some(Exhaustion { scale, omega: OmegaSpec::OutsideCylinder { radius } }) => format!("cylinder:{scale}:{radius}"),
    }
}

fn parse_exhaustion(v: &str) -> std::result::Result<Option<Exhaustion>, String> {
    let parts: Vec<&str> = v.split(':').collect();
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{s}: {e}"));
    match parts.as_slice() {
        ["none"] => Ok(None),
        ["balls", s] => Ok(Some(Exhaustion::balls(num(s)?))),
        ["cylinder", s, r] => Ok(Some(Exhaustion { scale: num(s)?, omega: OmegaSpec::OutsideCylinder { radius: num(r)? } })),
        _ => Err(format!("exhaustion '{v}' is not none, balls:<scale> or cylinder:<scale>:<radius>")),
    }
}

impl PipelineConfig {
    /// Defaults tuned per built-in scenario.
    pub fn for_scenario(name: &str) -> Result<Self> {
        let base = PipelineConfig::default();
        let cfg = match name {
            "circle_family" | "spiral_vs_circle" => base,
            "sphere_family" => PipelineConfig {
                alpha: 0.5,
                r: vec![0.4],
                delta: vec![0.38],
                net_shrink: 7.0,
                h: 0.1,
                project: false,
                i_max: 4,
                ..base
            },
            "two_lines_dumbbell" => PipelineConfig {
                r: vec![0.8],
                delta_prime: vec![0.2],
                delta: vec![0.05],
                exhaustion: Some(Exhaustion::balls(1.0)),
                levels: 3,
                resolution: 100,
                ..base
            },
            "line_family" => PipelineConfig {
                r: vec![0.8],
                delta_prime: vec![0.2],
                delta: vec![0.05],
                exhaustion: Some(Exhaustion::balls(1.0)),
                levels: 3,
                resolution: 100,
                ..base
            },
            "shrinking_perturbation" => PipelineConfig {
                r: vec![0.2],
                delta_prime: vec![0.05],
                delta: vec![0.0125],
                exhaustion: Some(Exhaustion::balls(1.0)),
                levels: 2,
                resolution: 400,
                gate_tol: 1.0,
                max_order: 2,
                ..base
            },
            "annulus_graphs" => PipelineConfig {
                r: vec![0.3],
                delta: vec![0.2],
                exhaustion: Some(Exhaustion { scale: 1.0, omega: OmegaSpec::OutsideCylinder { radius: 0.4 } }),
                levels: 2,
                resolution: 96,
                net_shrink: 7.0,
                h: 0.03,
                ..base
            },
            other => return Err(GeomError::UnknownScenario(other.to_string())),
        };
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |msg: String| GeomError::Config(format!("{key}: {msg}"));
        let f = |v: &str| v.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
        let u = |v: &str| v.trim().parse::<usize>().map_err(|e| bad(e.to_string()));
        match key {
            "alpha" => self.alpha = f(value)?,
            "p_exp" => self.p_exp = f(value)?,
            "c" => self.c = f(value)?,
            "r" => self.r = parse_list(value).map_err(bad)?,
            "delta" => self.delta = parse_list(value).map_err(bad)?,
            "delta_prime" => self.delta_prime = parse_list(value).map_err(bad)?,
            "net_shrink" => self.net_shrink = f(value)?,
            "h" => self.h = f(value)?,
            "tol_ortho" => self.tol_ortho = f(value)?,
            "tol_geom" => self.tol_geom = f(value)?,
            "tol_glue" => self.tol_glue = f(value)?,
            "tol_fix" => self.tol_fix = f(value)?,
            "gate_tol" => self.gate_tol = f(value)?,
            "conv_tol" => self.conv_tol = f(value)?,
            "max_order" => self.max_order = u(value)?,
            "exhaustion" => self.exhaustion = parse_exhaustion(value.trim()).map_err(bad)?,
            "levels" => self.levels = u(value)?,
            "project" => {
                self.project = match value.trim() {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    v => return Err(bad(format!("'{v}' is not a boolean"))),
                }
            }
            "smoothing" => self.smoothing = f(value)?,
            "cond_max" => self.cond_max = f(value)?,
            "probe_width" => self.probe_width = f(value)?,
            "i_min" => self.i_min = u(value)?,
            "i_max" => self.i_max = u(value)?,
            "resolution" => self.resolution = u(value)?,
            _ => return Err(GeomError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment. Keys outside the config (`scenario`,
    /// `threads`) are returned for the caller.
    pub fn apply_text(&mut self, text: &str) -> Result<Vec<(String, String)>> {
        let mut extra = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(GeomError::Parse { line: i + 1, msg: format!("expected key=value, got '{line}'") })?;
            let (k, v) = (k.trim(), v.trim());
            if k == "scenario" || k == "threads" {
                extra.push((k.to_string(), v.to_string()));
                continue;
            }
            self.set(k, v).map_err(|e| GeomError::Parse { line: i + 1, msg: e.to_string() })?;
        }
        Ok(extra)
    }

    /// Canonical text: every key in a fixed order.
    pub fn to_text(&self) -> String {
        let lines = [
            format!("alpha={}", self.alpha),
            format!("p_exp={}", self.p_exp),
            format!("c={}", self.c),
            format!("r={}", list(&self.r)),
            format!("delta={}", list(&self.delta)),
            format!("delta_prime={}", list(&self.delta_prime)),
            format!("net_shrink={}", self.net_shrink),
            format!("h={}", self.h),
            format!("tol_ortho={}", self.tol_ortho),
            format!("tol_geom={}", self.tol_geom),
            format!("tol_glue={}", self.tol_glue),
            format!("tol_fix={}", self.tol_fix),
            format!("gate_tol={}", self.gate_tol),
            format!("conv_tol={}", self.conv_tol),
            format!("max_order={}", self.max_order),
            format!("exhaustion={}", exhaustion_text(&self.exhaustion)),
            format!("levels={}", self.levels),
            format!("project={}", self.project),
            format!("smoothing={}", self.smoothing),
            format!("cond_max={}", self.cond_max),
            format!("probe_width={}", self.probe_width),
            format!("i_min={}", self.i_min),
            format!("i_max={}", self.i_max),
            format!("resolution={}", self.resolution),
        ];
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }

    /// First 16 hex digits of SHA-256 over the canonical text.
    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.to_text().as_bytes());
        d.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn r_at(&self, j: usize) -> f64 {
        at(&self.r, j)
    }

    pub fn delta_at(&self, j: usize) -> f64 {
        at(&self.delta, j)
    }

    pub fn delta_prime_at(&self, j: usize) -> Option<f64> {
        (!self.delta_prime.is_empty()).then(|| at(&self.delta_prime, j))
    }

    /// Number of exhaustion levels in use (1 for compact runs).
    pub fn level_count(&self) -> usize {
        if self.exhaustion.is_some() {
            self.levels.max(1)
        } else {
            1
        }
    }

    /// Every violated hypothesis, in a fixed order; empty when the config is admissible
    /// for an `m`-manifold in codimension `k`.
    pub fn violations(&self, m: usize, k: usize) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.p_exp > m as f64) {
            v.push(format!("p_exp={} must exceed m={m}", self.p_exp));
        }
        if !(self.alpha > 0.0 && self.alpha * self.alpha < 1.0 / 3.0) {
            v.push(format!("alpha={} must satisfy 0 < α² < 1/3", self.alpha));
        }
        if self.project && self.alpha > 1.0 / (4.0 * (k as f64).sqrt()) + 1e-12 {
            v.push(format!("alpha={} exceeds 1/(4√k)={} with projection enabled", self.alpha, 1.0 / (4.0 * (k as f64).sqrt())));
        }
        if self.r.is_empty() || self.delta.is_empty() {
            v.push("r and delta need at least one value".into());
            return v;
        }
        if self.r.iter().chain(&self.delta).chain(&self.delta_prime).any(|x| !(*x > 0.0)) {
            v.push("radii must be positive".into());
        }
        if self.r.windows(2).any(|w| w[1] > w[0]) {
            v.push("r must be non-increasing".into());
        }
        let levels = self.level_count();
        for j in 1..=levels {
            if !(self.delta_at(j) < self.r_at(j)) {
                v.push(format!("delta_{j}={} must be below r_{j}={}", self.delta_at(j), self.r_at(j)));
            }
            if let (Some(dp), Some(dp_next)) = (self.delta_prime_at(j), self.delta_prime_at(j + 1)) {
                if dp > self.r_at(j + 1) / 4.0 + 1e-12 {
                    v.push(format!("delta_prime_{j}={dp} exceeds r_{}/4={}", j + 1, self.r_at(j + 1) / 4.0));
                }
                if self.delta_at(j) > dp_next / 4.0 + 1e-12 {
                    v.push(format!("delta_{j}={} exceeds delta_prime_{}/4={}", self.delta_at(j), j + 1, dp_next / 4.0));
                }
            }
        }
        if !(self.net_shrink >= 1.0) {
            v.push(format!("net_shrink={} must be at least 1", self.net_shrink));
        }
        for (name, x) in [("tol_ortho", self.tol_ortho), ("tol_geom", self.tol_geom), ("tol_fix", self.tol_fix), ("gate_tol", self.gate_tol), ("conv_tol", self.conv_tol), ("cond_max", self.cond_max), ("probe_width", self.probe_width)] {
            if !(x > 0.0) {
                v.push(format!("{name}={x} must be positive"));
            }
        }
        for (name, x) in [("h", self.h), ("tol_glue", self.tol_glue), ("smoothing", self.smoothing)] {
            if !(x >= 0.0) {
                v.push(format!("{name}={x} must be non-negative"));
            }
        }
        if self.i_min > 0 && self.i_max > 0 && self.i_max <= self.i_min {
            v.push(format!("i_max={} must exceed i_min={}", self.i_max, self.i_min));
        }
        v
    }

    pub fn validate(&self, m: usize, k: usize) -> Result<()> {
        let v = self.violations(m, k);
        if v.is_empty() {
            Ok(())
        } else {
            Err(GeomError::Config(v.join("; ")))
        }
    }
}

fn at(v: &[f64], j: usize) -> f64 {
    v[(j.max(1) - 1).min(v.len() - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::SCENARIOS;

    #[test]
    fn defaults_are_admissible() {
        for name in SCENARIOS {
            let (m, n) = scenario_dims(name).unwrap();
            let c = PipelineConfig::for_scenario(name).unwrap();
            assert!(c.violations(m, n - m).is_empty(), "{name}: {:?}", c.violations(m, n - m));
        }
    }

    #[test]
    fn text_round_trip_and_hash() {
        let c = PipelineConfig::for_scenario("two_lines_dumbbell").unwrap();
        let mut d = PipelineConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
        assert_eq!(c.hash(), d.hash());
        assert_eq!(c.hash().len(), 16);
        d.set("alpha", "0.2").unwrap();
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn gate_rejections() {
        let mut c = PipelineConfig::default();
        c.p_exp = 1.0;
        assert!(c.validate(1, 1).is_err());
        let mut c = PipelineConfig::default();
        c.project = false;
        c.alpha = 0.6;
        assert!(c.validate(1, 1).is_err());
        let mut c = PipelineConfig::for_scenario("line_family").unwrap();
        c.delta_prime = vec![0.3];
        assert!(c.validate(1, 1).is_err());
        let mut c = PipelineConfig::default();
        c.alpha = 0.3;
        assert!(c.validate(1, 1).is_err());
        c.project = false;
        assert!(c.validate(1, 1).is_ok());
    }

    #[test]
    fn parse_errors_carry_lines() {
        let mut c = PipelineConfig::default();
        let e = c.apply_text("alpha=0.2\n\nbogus\n").unwrap_err();
        assert!(matches!(e, GeomError::Parse { line: 3, .. }));
        let extra = c.apply_text("scenario=circle_family # name\nexhaustion=cylinder:1:0.4\n").unwrap();
        assert_eq!(extra, vec![("scenario".to_string(), "circle_family".to_string())]);
        assert_eq!(c.exhaustion, Some(Exhaustion { scale: 1.0, omega: OmegaSpec::OutsideCylinder { radius: 0.4 } }));
    }
}
