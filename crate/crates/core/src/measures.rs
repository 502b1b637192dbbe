//! Pushforward measures, ball masses, weak-* convergence against bump probes, and the
//! semicontinuity and growth-bound checks on the limit.

use rayon::prelude::*;

use crate::atlas::immersion_a_lp;
use crate::error::{GeomError, Result};
use crate::grid::derivatives;
use crate::limit::LimitManifold;
use crate::mesh::{norm, SampledImmersion};
use crate::patch::fundamental_forms_from;
use crate::system::SystemEntry;

/// One mass cell: its vertex positions (a simplex, or a single node point) and its mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub vertices: Vec<Vec<f64>>,
    pub mass: f64,
}

impl Cell {
    pub fn centroid(&self) -> Vec<f64> {
        let n = self.vertices[0].len();
        let mut c = vec![0.0; n];
        for v in &self.vertices {
            for (a, x) in c.iter_mut().zip(v) {
                *a += x / self.vertices.len() as f64;
            }
        }
        c
    }

    /// Equal-mass subsample points: `s` per edge on segments, `s²` sub-triangle centroids on
    /// triangles, the centroid otherwise.
    fn subsamples(&self, s: usize) -> Vec<Vec<f64>> {
        let lerp = |w: &[f64]| -> Vec<f64> {
            let n = self.vertices[0].len();
            (0..n).map(|a| w.iter().zip(&self.vertices).map(|(wi, v)| wi * v[a]).sum()).collect()
        };
        match self.vertices.len() {
            2 => (0..s).map(|i| {
                let t = (i as f64 + 0.5) / s as f64;
                lerp(&[1.0 - t, t])
            })
            .collect(),
            3 => {
                let mut out = Vec::with_capacity(s * s);
                let sf = s as f64;
                for i in 0..s {
                    for j in 0..s - i {
                        // upright sub-triangle
                        let (a, b) = ((i as f64 + 1.0 / 3.0) / sf, (j as f64 + 1.0 / 3.0) / sf);
                        out.push(lerp(&[1.0 - a - b, a, b]));
                        if i + j + 1 < s {
                            let (a, b) = ((i as f64 + 2.0 / 3.0) / sf, (j as f64 + 2.0 / 3.0) / sf);
                            out.push(lerp(&[1.0 - a - b, a, b]));
                        }
                    }
                }
                out
            }
            _ => vec![self.centroid()],
        }
    }

    /// Quadrature nodes and weights (fractions of the mass).
    fn quadrature(&self) -> Vec<(Vec<f64>, f64)> {
        let n = self.vertices[0].len();
        let lerp = |w: &[f64]| -> Vec<f64> { (0..n).map(|a| w.iter().zip(&self.vertices).map(|(wi, v)| wi * v[a]).sum()).collect() };
        match self.vertices.len() {
            2 => {
                let g = (0.6f64).sqrt() / 2.0;
                vec![(lerp(&[0.5 + g, 0.5 - g]), 5.0 / 18.0), (lerp(&[0.5, 0.5]), 8.0 / 18.0), (lerp(&[0.5 - g, 0.5 + g]), 5.0 / 18.0)]
            }
            3 => {
                // six-point rule, exact to degree 4
                let (a1, w1) = (0.445948490915965, 0.223381589678011);
                let (a2, w2) = (0.091576213509771, 0.109951743655322);
                let mut q = Vec::new();
                for (a, w) in [(a1, w1), (a2, w2)] {
                    let b = 1.0 - 2.0 * a;
                    for bary in [[b, a, a], [a, b, a], [a, a, b]] {
                        q.push((lerp(&bary), w));
                    }
                }
                q
            }
            _ => vec![(self.centroid(), 1.0)],
        }
    }
}

/// `μ = f(μ_g)` as a list of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureHandle {
    pub cells: Vec<Cell>,
    pub total: f64,
}

const BOUNDARY_SUBSAMPLES: usize = 16;

impl MeasureHandle {
    pub fn from_immersion(imm: &SampledImmersion) -> Self {
        let cells: Vec<Cell> = (0..imm.num_simplices())
            .map(|s| Cell { vertices: imm.simplex(s).iter().map(|&v| imm.pos(v).to_vec()).collect(), mass: imm.simplex_volume(s) })
            .collect();
        let total = cells.iter().map(|c| c.mass).sum();
        MeasureHandle { cells, total }
    }

    /// Point masses at chart nodes; a node counts only in the lowest-index chart that contains
    /// its gluing class.
    pub fn from_limit(lim: &LimitManifold) -> Result<Self> {
        let mut cells = Vec::new();
        for (j, c) in lim.charts.iter().enumerate() {
            let d = c.entry.derivatives()?;
            let geom = fundamental_forms_from(d)?;
            let w = c.entry.patch.grid.weights();
            for (x, &node) in c.nodes.iter().enumerate() {
                if lim.relation.of(j, x).any(|p| p.k < j) {
                    continue;
                }
                cells.push(Cell { vertices: vec![c.image(x).as_slice().to_vec()], mass: w[node] * geom.nodes[node].vol_density });
            }
        }
        let total = cells.iter().map(|c| c.mass).sum();
        Ok(MeasureHandle { cells, total })
    }

    /// `μ(B̂_R(center))`, with cells meeting the sphere split by subsampling.
    pub fn ball_mass_at(&self, center: &[f64], r: f64) -> f64 {
        let parts: Vec<f64> = self
            .cells
            .par_iter()
            .map(|c| {
                let d: Vec<f64> = c.vertices.iter().map(|v| dist_to(v, center)).collect();
                let dmax = d.iter().cloned().fold(0.0, f64::max);
                let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
                let diam = cell_diameter(c);
                if dmax < r {
                    c.mass
                } else if dmin - diam >= r {
                    0.0
                } else {
                    let sub = c.subsamples(BOUNDARY_SUBSAMPLES);
                    let inside = sub.iter().filter(|p| dist_to(p, center) < r).count();
                    c.mass * inside as f64 / sub.len() as f64
                }
            })
            .collect();
        parts.iter().sum()
    }

    /// Mass of cells within `band` of the sphere `|x − center| = r`.
    pub fn band_mass(&self, center: &[f64], r: f64, band: f64) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.vertices.iter().any(|v| (dist_to(v, center) - r).abs() <= band + cell_diameter(c)))
            .map(|c| c.mass)
            .sum::<f64>()
            + 0.0
    }

    pub fn max_cell_diameter(&self) -> f64 {
        self.cells.iter().map(cell_diameter).fold(0.0, f64::max)
    }

    pub fn ball_mass(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(GeomError::InvalidArgument(format!("ball radius {r} must be positive")));
        }
        let n = self.cells.first().map_or(0, |c| c.vertices[0].len());
        Ok(self.ball_mass_at(&vec![0.0; n], r))
    }

    pub fn integrate(&self, probe: &Probe) -> f64 {
        let parts: Vec<f64> = self.cells.par_iter().map(|c| c.quadrature().iter().map(|(p, w)| w * probe.eval(p)).sum::<f64>() * c.mass).collect();
        parts.iter().sum()
    }
}

fn dist_to(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn cell_diameter(c: &Cell) -> f64 {
    let mut d: f64 = 0.0;
    for a in &c.vertices {
        for b in &c.vertices {
            d = d.max(dist_to(a, b));
        }
    }
    d
}

/// `b(t) = (1 − |t|)²(1 + 2|t|)` on `|t| < 1`: `C¹`, cubic on each side, `b(0) = 1`.
fn bump(t: f64) -> f64 {
    let a = t.abs();
    if a >= 1.0 {
        0.0
    } else {
        (1.0 - a).powi(2) * (1.0 + 2.0 * a)
    }
}

/// Separable cubic bump `∏ b((x_a − c_a)/w_a)` on an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
}

impl Probe {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.center.iter().zip(&self.half_width).zip(x).map(|((c, w), xa)| bump((xa - c) / w)).product()
    }

    /// `sup|φ| + sup|∇φ|`; `sup|b'| = 3/2`.
    pub fn c1_norm(&self) -> f64 {
        1.0 + 1.5 * self.half_width.iter().map(|w| 1.0 / (w * w)).sum::<f64>().sqrt()
    }
}

/// Eight probes centred on limit vertices spread by index, half-width `width` on every axis.
pub fn default_probes(limit: &SampledImmersion, width: f64) -> Vec<Probe> {
    let nv = limit.num_vertices();
    (0..8)
        .map(|p| {
            let v = (p * nv) / 8;
            Probe { center: limit.pos(v).to_vec(), half_width: vec![width; limit.n] }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub probe: usize,
    pub limit_value: f64,
    pub values: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Last gap no larger than the first.
    pub decreasing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionRow {
    pub radius: f64,
    pub compact: bool,
    pub limit_value: f64,
    pub values: Vec<f64>,
    /// Tail max for compact `K`, tail min for open `U`.
    pub tail: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakReport {
    pub probes: Vec<ProbeRow>,
    pub regions: Vec<RegionRow>,
}

/// Indices of the last third of a sequence of length `n` (at least one).
pub fn tail_range(n: usize) -> std::ops::Range<usize> {
    let len = n.div_ceil(3).max(1).min(n);
    n - len..n
}

/// Probe gaps and the finite-tail surrogates `max μ^i(K) ≤ μ(K) + slack`, `min μ^i(U) ≥ μ(U) − slack`
/// on balls centred at the origin. The slack is three times the limit mass within one cell of
/// the sphere, the uncertainty left by boundary splitting.
pub fn weak_convergence_check(
    seq: &[MeasureHandle],
    limit: &MeasureHandle,
    probes: &[Probe],
    compact_radii: &[f64],
    open_radii: &[f64],
) -> Result<WeakReport> {
    let band = seq.iter().map(|m| m.max_cell_diameter()).fold(limit.max_cell_diameter(), f64::max);
    let probes: Vec<ProbeRow> = probes
        .iter()
        .enumerate()
        .map(|(p, probe)| {
            let lv = limit.integrate(probe);
            let values: Vec<f64> = seq.iter().map(|m| m.integrate(probe)).collect();
            let gaps: Vec<f64> = values.iter().map(|v| (v - lv).abs()).collect();
            let decreasing = match (gaps.first(), gaps.last()) {
                (Some(a), Some(b)) => b <= a,
                _ => true,
            };
            ProbeRow { probe: p, limit_value: lv, values, gaps, decreasing }
        })
        .collect();
    let tail = tail_range(seq.len());
    let mut regions = Vec::new();
    for (&r, compact) in compact_radii.iter().map(|r| (r, true)).chain(open_radii.iter().map(|r| (r, false))) {
        let lv = limit.ball_mass(r)?;
        let n = limit.cells.first().map_or(0, |c| c.vertices[0].len());
        let slack = 3.0 * limit.band_mass(&vec![0.0; n], r, band);
        let values = seq.iter().map(|m| m.ball_mass(r)).collect::<Result<Vec<f64>>>()?;
        let t = &values[tail.clone()];
        let (tv, pass) = if compact {
            let mx = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (mx, mx <= lv + slack)
        } else {
            let mn = t.iter().cloned().fold(f64::INFINITY, f64::min);
            (mn, lv - slack <= mn)
        };
        regions.push(RegionRow { radius: r, compact, limit_value: lv, values, tail: tv, slack, pass });
    }
    Ok(WeakReport { probes, regions })
}

/// `R ↦ C(R)` and `(K, R) ↦ C_K(R)`.
pub struct BoundProfile {
    pub mass: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub derivative: Box<dyn Fn(usize, f64) -> f64 + Send + Sync>,
}

impl BoundProfile {
    /// `C(R) = c_mass · max(R, 1)^m`, `C_K(R) = c_deriv`.
    pub fn polynomial(c_mass: f64, m: usize, c_deriv: f64) -> Self {
        BoundProfile { mass: Box::new(move |r| c_mass * r.max(1.0).powi(m as i32)), derivative: Box::new(move |_, _| c_deriv) }
    }
}

/// Measured quantities of one immersion entering the bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberStats {
    pub a_lp: f64,
    /// `‖A‖_{L^p} · max edge · sup|A|`, a first-order discretization estimate.
    pub discretization: f64,
    pub volume: f64,
    /// `(R, μ(B_R))`.
    pub ball_masses: Vec<(f64, f64)>,
    /// `(R, [sup_{B_R}|∇^l A|, l = 0..=K])` from chart grids.
    pub derivative_sups: Vec<(f64, Vec<f64>)>,
}

pub fn member_stats(
    imm: &SampledImmersion,
    entries: Option<&[SystemEntry]>,
    p_exp: f64,
    radii: &[f64],
    order: usize,
) -> Result<MemberStats> {
    let a_lp = immersion_a_lp(imm, p_exp)?;
    let mu = MeasureHandle::from_immersion(imm);
    let max_edge = (0..imm.num_vertices()).map(|v| imm.max_edge_at(v)).fold(0.0, f64::max);
    let a_sup = match entries {
        Some(e) => a_derivative_sups(e, &[f64::INFINITY], 0)?[0][0],
        None => 0.0,
    };
    let ball_masses = radii.iter().map(|&r| Ok((r, mu.ball_mass(r)?))).collect::<Result<Vec<_>>>()?;
    let derivative_sups = match entries {
        Some(e) => radii.iter().cloned().zip(a_derivative_sups(e, radii, order)?).collect(),
        None => Vec::new(),
    };
    Ok(MemberStats { a_lp, discretization: a_lp * max_edge * a_sup.max(1.0), volume: mu.total, ball_masses, derivative_sups })
}

/// `sup |∇^l A|` over chart nodes whose image lies in `B_R`, by repeated grid differences of the
/// `A` entries in chart coordinates. Returns `[R][l]`.
pub fn a_derivative_sups(entries: &[SystemEntry], radii: &[f64], order: usize) -> Result<Vec<Vec<f64>>> {
    let per: Result<Vec<Vec<Vec<f64>>>> = entries
        .par_iter()
        .map(|e| {
            let d = e.derivatives()?;
            let geom = fundamental_forms_from(d)?;
            let grid = &e.patch.grid;
            let mut field: Vec<f64> = geom.nodes.iter().flat_map(|g| g.a.iter().flat_map(|v| v.iter().copied()).collect::<Vec<_>>()).collect();
            let mut comps = field.len() / grid.len();
            let norms: Vec<f64> = (0..grid.len()).map(|node| norm(e.ambient_node(node).as_slice())).collect();
            let mut out = vec![vec![0.0; order + 1]; radii.len()];
            for l in 0..=order {
                if l > 0 {
                    let (g, _) = derivatives(grid, &field, comps)?;
                    comps *= grid.m;
                    field = g;
                }
                for node in 0..grid.len() {
                    let v = field[node * comps..(node + 1) * comps].iter().map(|x| x * x).sum::<f64>().sqrt();
                    for (ri, &r) in radii.iter().enumerate() {
                        if norms[node] < r {
                            out[ri][l] = f64::max(out[ri][l], v);
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut acc = vec![vec![0.0; order + 1]; radii.len()];
    for o in per? {
        for (a, b) in acc.iter_mut().zip(o) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = f64::max(*x, y);
            }
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub limit_a_lp: f64,
    pub tail_min_a_lp: f64,
    pub slack: f64,
    /// `tail_min − limit`; positive when the inequality is strict.
    pub gap: f64,
    pub semicontinuity_pass: bool,
    pub volume_pass: bool,
    pub mass_violations: Vec<(usize, f64, f64)>,
    pub derivative_violations: Vec<(usize, f64, usize, f64)>,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.semicontinuity_pass && self.volume_pass && self.mass_violations.is_empty() && self.derivative_violations.is_empty()
    }
}

/// `‖A(f)‖_{L^p} ≤ min_tail ‖A(f^i)‖_{L^p} + slack` with
/// `slack = 3 (discretization + tail spread)`, `vol ≤ 𝒱 + slack`, and the profile bounds.
pub fn limit_bound_check(members: &[MemberStats], limit: &MemberStats, volume_bound: f64, profile: &BoundProfile) -> BoundReport {
    let tail = &members[tail_range(members.len())];
    let tmin = tail.iter().map(|s| s.a_lp).fold(f64::INFINITY, f64::min);
    let tmax = tail.iter().map(|s| s.a_lp).fold(f64::NEG_INFINITY, f64::max);
    let disc = tail.iter().map(|s| s.discretization).fold(limit.discretization, f64::max);
    let slack = 3.0 * (disc + (tmax - tmin));
    let vol_slack = 3.0 * tail.iter().map(|s| (s.volume - limit.volume).abs()).fold(0.0, f64::max).max(1e-9 * volume_bound);
    let mut mass_violations = Vec::new();
    let mut derivative_violations = Vec::new();
    for (i, s) in members.iter().chain(std::iter::once(limit)).enumerate() {
        for &(r, mass) in &s.ball_masses {
            if mass > (profile.mass)(r) {
                mass_violations.push((i, r, mass));
            }
        }
        for (r, sups) in &s.derivative_sups {
            for (l, &v) in sups.iter().enumerate() {
                if v > (profile.derivative)(l, *r) {
                    derivative_violations.push((i, *r, l, v));
                }
            }
        }
    }
    BoundReport {
        limit_a_lp: limit.a_lp,
        tail_min_a_lp: tmin,
        slack,
        gap: tmin - limit.a_lp,
        semicontinuity_pass: limit.a_lp <= tmin + slack,
        volume_pass: limit.volume <= volume_bound + vol_slack,
        mass_violations,
        derivative_violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{circle, parametric_curve};
    use std::f64::consts::PI;

    #[test]
    fn circle_ball_masses() {
        let mu = MeasureHandle::from_immersion(&circle([0.0, 0.0], 1.0, 720).unwrap());
        assert!((mu.ball_mass(2.0).unwrap() - 2.0 * PI).abs() < 1e-2);
        assert_eq!(mu.ball_mass(0.5).unwrap(), 0.0);
    }

    #[test]
    fn line_chord() {
        let line = parametric_curve(|t| vec![t, 0.0], -4.0, 4.0, 801).unwrap();
        let mu = MeasureHandle::from_immersion(&line);
        let h = 0.01;
        for r in [0.5, 1.234, 3.0] {
            assert!((mu.ball_mass(r).unwrap() - 2.0 * r).abs() <= h, "{r}");
        }
    }

    #[test]
    fn bump_integral_on_line() {
        // ∫ b(t/w) dt = w (∫_{-1}^{1} b = 1)
        let line = parametric_curve(|t| vec![t, 0.0], -4.0, 4.0, 161).unwrap();
        let mu = MeasureHandle::from_immersion(&line);
        let p = Probe { center: vec![0.3, 0.0], half_width: vec![0.7, 0.5] };
        assert!((mu.integrate(&p) - 0.7).abs() < 1e-4);
    }

    #[test]
    fn triangle_rule_exact_on_quartic() {
        let c = Cell { vertices: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], mass: 0.5 };
        // ∫_T x⁴ = 4!·0!·2!/6! ·... = 1/30
        let s: f64 = c.quadrature().iter().map(|(p, w)| w * p[0].powi(4)).sum::<f64>() * c.mass;
        assert!((s - 1.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn tail_is_last_third() {
        assert_eq!(tail_range(15), 10..15);
        assert_eq!(tail_range(1), 0..1);
        assert_eq!(tail_range(4), 2..4);
    }

    #[test]
    fn constant_sequence_gaps_vanish() {
        let c = circle([0.0, 0.0], 1.0, 360).unwrap();
        let mu = MeasureHandle::from_immersion(&c);
        let probes = default_probes(&c, 0.5);
        let r = weak_convergence_check(&[mu.clone(), mu.clone()], &mu, &probes, &[1.5], &[1.5]).unwrap();
        assert!(r.probes.iter().all(|p| p.gaps.iter().all(|g| *g == 0.0)));
        assert!(r.regions.iter().all(|g| g.pass));
    }
}
