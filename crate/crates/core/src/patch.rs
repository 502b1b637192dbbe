//! Graph patches `u: B_r -> R^k`, their fundamental forms and the local estimates
//! relating `D²u` to the second fundamental form.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{GeomError, Result};
use crate::grid::{apply_weights, derivatives, GridBall};
use crate::linalg::{col_norm, min_singular};

/// Tolerance for `u(0) = 0`, `Du(0) = 0` on centered patches.
pub const TOL_CENTER: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphPatch {
    pub grid: GridBall,
    pub k: usize,
    /// Node-major values, `k` per node.
    pub values: Vec<f64>,
    pub centered: bool,
}

/// Finite-difference derivatives of a patch.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub m: usize,
    pub k: usize,
    /// `du[node][ι][a]`
    pub du: Vec<f64>,
    /// `d2u[node][ι][a][b]`
    pub d2u: Vec<f64>,
}

impl Derivatives {
    pub fn du_at(&self, node: usize) -> DMatrix<f64> {
        let (m, k) = (self.m, self.k);
        DMatrix::from_row_slice(k, m, &self.du[node * k * m..(node + 1) * k * m])
    }

    /// `∂_a ∂_b u` as a vector in `R^k`.
    pub fn d2u_at(&self, node: usize, a: usize, b: usize) -> DVector<f64> {
        let (m, k) = (self.m, self.k);
        DVector::from_iterator(k, (0..k).map(|c| self.d2u[((node * k + c) * m + a) * m + b]))
    }

    /// Column norm of the full Hessian tensor at a node.
    pub fn d2u_norm(&self, node: usize) -> f64 {
        let s = self.k * self.m * self.m;
        self.d2u[node * s..(node + 1) * s].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn du_norm(&self, node: usize) -> f64 {
        let s = self.k * self.m;
        self.du[node * s..(node + 1) * s].iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl GraphPatch {
    pub fn new(grid: GridBall, k: usize, values: Vec<f64>, centered: bool) -> Result<Self> {
        if k == 0 {
            return Err(GeomError::InvalidArgument("codimension must be positive".into()));
        }
        if values.len() != grid.len() * k {
            return Err(GeomError::DimensionMismatch { expected: grid.len() * k, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::InvalidArgument("non-finite patch value".into()));
        }
        let p = GraphPatch { grid, k, values, centered };
        if centered {
            p.check_centered(TOL_CENTER)?;
        }
        Ok(p)
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: GridBall, k: usize, centered: bool, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len() * k);
        for node in 0..grid.len() {
            let v = f(&grid.point_vec(node));
            if v.len() != k {
                return Err(GeomError::DimensionMismatch { expected: k, got: v.len() });
            }
            values.extend(v);
        }
        GraphPatch::new(grid, k, values, centered)
    }

    pub fn m(&self) -> usize {
        self.grid.m
    }

    pub fn n(&self) -> usize {
        self.grid.m + self.k
    }

    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node * self.k..(node + 1) * self.k]
    }

    pub fn check_centered(&self, tol: f64) -> Result<()> {
        let o = self.grid.origin();
        let u0 = self.value(o).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let d = self.differentiate()?;
        let du0 = d.du_norm(o);
        if u0 > tol || du0 > tol {
            return Err(GeomError::InvalidArgument(format!(
                "patch not centered: |u(0)|={u0:e}, |Du(0)|={du0:e}"
            )));
        }
        Ok(())
    }

    pub fn differentiate(&self) -> Result<Derivatives> {
        let (du, d2u) = derivatives(&self.grid, &self.values, self.k)?;
        Ok(Derivatives { m: self.grid.m, k: self.k, du, d2u })
    }

    /// Value at an arbitrary point via local Lagrange interpolation.
    pub fn eval(&self, x: &[f64]) -> Option<Vec<f64>> {
        let w = self.grid.interp_weights(x, None)?;
        Some(apply_weights(&w, &self.values, self.k))
    }

    /// `eval`, falling back to a local quadratic fit near the rim.
    pub fn eval_extended(&self, x: &[f64]) -> Option<Vec<f64>> {
        let w = self.grid.interp_weights(x, None).or_else(|| self.grid.fit_weights(x))?;
        Some(apply_weights(&w, &self.values, self.k))
    }

    /// Plain text record: header line then one row of `k` values per node.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "patch m={} k={} r={:?} h={:?} centered={} nodes={}\n",
            self.grid.m,
            self.k,
            self.grid.r,
            self.grid.h,
            self.centered as u8,
            self.grid.len()
        );
        for node in 0..self.grid.len() {
            let row: Vec<String> = self.value(node).iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(GeomError::Parse { line: 1, msg: "empty".into() })?;
        let patch = parse_patch_record(header, &mut lines, 1)?;
        if lines.next().is_some() {
            return Err(GeomError::Parse { line: 0, msg: "trailing data".into() });
        }
        Ok(patch)
    }
}

/// Parses one patch record whose header has already been read.
pub fn parse_patch_record<'a, I: Iterator<Item = &'a str>>(
    header: &str,
    lines: &mut I,
    line0: usize,
) -> Result<GraphPatch> {
    let perr = |line: usize, msg: &str| GeomError::Parse { line, msg: msg.to_string() };
    let mut toks = header.split_whitespace();
    if toks.next() != Some("patch") {
        return Err(perr(line0, "expected 'patch' header"));
    }
    let mut kv = std::collections::HashMap::new();
    for t in toks {
        let (k, v) = t.split_once('=').ok_or_else(|| perr(line0, "malformed key=value"))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| perr(line0, &format!("missing {k}")));
    let m: usize = get("m")?.parse().map_err(|_| perr(line0, "bad m"))?;
    let k: usize = get("k")?.parse().map_err(|_| perr(line0, "bad k"))?;
    let r: f64 = get("r")?.parse().map_err(|_| perr(line0, "bad r"))?;
    let h: f64 = get("h")?.parse().map_err(|_| perr(line0, "bad h"))?;
    let centered = get("centered")? == "1";
    let nodes: usize = get("nodes")?.parse().map_err(|_| perr(line0, "bad nodes"))?;
    let grid = GridBall::new(m, r, h)?;
    if grid.len() != nodes {
        return Err(perr(line0, "node count does not match grid"));
    }
    let mut values = Vec::with_capacity(nodes * k);
    for i in 0..nodes {
        let line = lines.next().ok_or_else(|| perr(line0 + i + 1, "missing node row"))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| perr(line0 + i + 1, "bad float"))?;
        if row.len() != k || row.iter().any(|v| !v.is_finite()) {
            return Err(perr(line0 + i + 1, "bad node row"));
        }
        values.extend(row);
    }
    Ok(GraphPatch { grid, k, values, centered })
}

/// Per-node geometry of the graph `x -> (x, u(x))`.
#[derive(Debug, Clone)]
pub struct NodeGeometry {
    pub df: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub p_normal: DMatrix<f64>,
    /// `A_ij` stored row-major in `i, j`.
    pub a: Vec<DVector<f64>>,
    pub a_norm: f64,
    pub vol_density: f64,
}

impl NodeGeometry {
    pub fn p_tangent(&self) -> DMatrix<f64> {
        let n = self.p_normal.nrows();
        DMatrix::identity(n, n) - &self.p_normal
    }

    /// `‖A‖` evaluated entrywise in a `g`-orthonormal tangent frame.
    pub fn a_norm_frame(&self) -> f64 {
        let m = self.g.nrows();
        let chol = self.g_inv.clone().cholesky().expect("metric inverse is positive definite");
        let p = chol.l();
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                let mut v = DVector::zeros(self.a[0].len());
                for i in 0..m {
                    for j in 0..m {
                        v += &self.a[i * m + j] * (p[(i, a)] * p[(j, b)]);
                    }
                }
                s += v.norm_squared();
            }
        }
        s.sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct PatchGeometry {
    pub nodes: Vec<NodeGeometry>,
}

/// Geometry of a graph at one point from `Du` (k×m) and the Hessian entries.
pub fn node_geometry(du: &DMatrix<f64>, d2: &dyn Fn(usize, usize) -> DVector<f64>) -> Result<NodeGeometry> {
    let k = du.nrows();
    let m = du.ncols();
    let n = m + k;
    let mut df = DMatrix::<f64>::zeros(n, m);
    for a in 0..m {
        df[(a, a)] = 1.0;
    }
    df.view_mut((m, 0), (k, m)).copy_from(du);
    let g = df.transpose() * &df;
    let g_inv = g.clone().try_inverse().ok_or(GeomError::SingularMetric(0))?;
    let pt = &df * &g_inv * df.transpose();
    let p_normal = DMatrix::identity(n, n) - pt;
    let mut a = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let mut d2f = DVector::zeros(n);
            d2f.rows_mut(m, k).copy_from(&d2(i, j));
            a.push(&p_normal * d2f);
        }
    }
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            for kk in 0..m {
                for l in 0..m {
                    s += a[i * m + j].dot(&a[kk * m + l]) * g_inv[(i, kk)] * g_inv[(j, l)];
                }
            }
        }
    }
    let vol_density = g.determinant().sqrt();
    Ok(NodeGeometry { df, g, g_inv, p_normal, a, a_norm: s.max(0.0).sqrt(), vol_density })
}

pub fn fundamental_forms(p: &GraphPatch) -> Result<(PatchGeometry, Derivatives)> {
    let d = p.differentiate()?;
    let geom = fundamental_forms_from(&d)?;
    Ok((geom, d))
}

pub fn fundamental_forms_from(d: &Derivatives) -> Result<PatchGeometry> {
    let n_nodes = d.du.len() / (d.k * d.m);
    let nodes: Result<Vec<NodeGeometry>> = (0..n_nodes)
        .into_par_iter()
        .map(|node| {
            node_geometry(&d.du_at(node), &|i, j| d.d2u_at(node, i, j))
                .map_err(|_| GeomError::SingularMetric(node))
        })
        .collect();
    Ok(PatchGeometry { nodes: nodes? })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpNorms {
    pub a_lp: f64,
    pub volume: f64,
    pub a_sup: f64,
}

/// Midpoint-rule `‖A‖_{L^p}`, volume and `sup ‖A‖` of a patch.
pub fn lp_norms(p: &GraphPatch, geom: &PatchGeometry, p_exp: f64) -> Result<LpNorms> {
    if !(p_exp >= 1.0) {
        return Err(GeomError::InvalidArgument(format!("p_exp={p_exp} < 1")));
    }
    let w = p.grid.weights();
    let mut acc = 0.0;
    let mut vol = 0.0;
    let mut sup = 0.0f64;
    for (node, g) in geom.nodes.iter().enumerate() {
        acc += w[node] * g.a_norm.powf(p_exp) * g.vol_density;
        vol += w[node] * g.vol_density;
        sup = sup.max(g.a_norm);
    }
    Ok(LpNorms { a_lp: acc.powf(1.0 / p_exp), volume: vol, a_sup: sup })
}

/// Measured sides of the local graph estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub p_exp: f64,
    pub du_sup: f64,
    pub d2u_lp: f64,
    pub a_lp: f64,
    /// `‖D²u‖_{L^p}` and `(1+‖Du‖²)^{3/2} ‖A‖_{L^p}`
    pub hessian_lhs: f64,
    pub hessian_rhs: f64,
    /// `(rhs - lhs) / rhs`
    pub hessian_slack: f64,
    pub hessian_pass: bool,
    /// `max |u(x)| / (‖Du‖ |x|)` over nodes `x ≠ 0`; `None` for uncentered patches.
    pub growth_ratio: Option<f64>,
    pub growth_pass: Option<bool>,
    /// `min |π^⊤(y,0)| sqrt(1+‖Du‖²) / |y|`
    pub tangent_ratio: f64,
    /// `min |π^⊥(0,z)| sqrt(1+‖Du‖²) / |z|`
    pub normal_ratio: f64,
    pub projection_pass: bool,
    pub morrey_ratio: f64,
    /// Asserted only for `m = 1`, where the constant is 1.
    pub morrey_pass: Option<bool>,
}

pub fn estimate_report(p: &GraphPatch, geom: &PatchGeometry, d: &Derivatives, p_exp: f64) -> Result<EstimateReport> {
    let m = p.m();
    if !(p_exp > m as f64) {
        return Err(GeomError::ExponentTooSmall { p: p_exp, m });
    }
    let w = p.grid.weights();
    let nn = p.grid.len();
    let du_sup = (0..nn).map(|i| d.du_norm(i)).fold(0.0, f64::max);
    let d2_sup = (0..nn).map(|i| d.d2u_norm(i)).fold(0.0, f64::max);
    let d2u_lp = (0..nn).map(|i| w[i] * d.d2u_norm(i).powf(p_exp)).sum::<f64>().powf(1.0 / p_exp);
    let norms = lp_norms(p, geom, p_exp)?;
    let lhs = d2u_lp;
    let rhs = (1.0 + du_sup * du_sup).powf(1.5) * norms.a_lp;
    let slack = if rhs > 0.0 { (rhs - lhs) / rhs } else if lhs > 0.0 { -1.0 } else { 0.0 };
    let hessian_pass = lhs <= rhs * (1.0 + 1e-12) + 1e-300;

    let (growth_ratio, growth_pass) = if p.centered {
        let mut worst = 0.0f64;
        let mut pass = true;
        for i in 0..nn {
            let x = p.grid.norm_of(i);
            if x == 0.0 {
                continue;
            }
            let u = p.value(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            let bound = du_sup * x;
            // node samples can undershoot the true sup of |Du| by at most h·sqrt(m)/2 · sup|D²u|
            let tol = x * 0.5 * p.grid.h * (m as f64).sqrt() * d2_sup + 1e-12;
            if u > bound + tol {
                pass = false;
            }
            if bound > 0.0 {
                worst = worst.max(u / bound);
            } else if u > 0.0 {
                worst = f64::INFINITY;
            }
        }
        (Some(worst), Some(pass))
    } else {
        (None, None)
    };

    let mut tangent_ratio = f64::INFINITY;
    let mut normal_ratio = f64::INFINITY;
    for (i, g) in geom.nodes.iter().enumerate() {
        let s = (1.0 + d.du_norm(i).powi(2)).sqrt();
        let pt = g.p_tangent();
        let n = pt.nrows();
        let k = n - m;
        tangent_ratio = tangent_ratio.min(min_singular(&pt.columns(0, m).into_owned()) * s);
        normal_ratio = normal_ratio.min(min_singular(&g.p_normal.columns(m, k).into_owned()) * s);
    }
    let projection_pass = tangent_ratio >= 1.0 - 1e-10 && normal_ratio >= 1.0 - 1e-10;

    let o = p.grid.origin();
    let du0 = d.du_at(o);
    let osc = (0..nn).map(|i| col_norm(&(d.du_at(i) - &du0))).fold(0.0, f64::max);
    let denom = p.grid.r.powf(1.0 - m as f64 / p_exp) * d2u_lp;
    let morrey_ratio = if denom > 0.0 { osc / denom } else { 0.0 };
    let morrey_pass = (m == 1).then_some(morrey_ratio <= 1.0 + 1e-3);

    Ok(EstimateReport {
        p_exp,
        du_sup,
        d2u_lp,
        a_lp: norms.a_lp,
        hessian_lhs: lhs,
        hessian_rhs: rhs,
        hessian_slack: slack,
        hessian_pass,
        growth_ratio,
        growth_pass,
        tangent_ratio,
        normal_ratio,
        projection_pass,
        morrey_ratio,
        morrey_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch1(r: f64, h: f64, centered: bool, f: impl Fn(f64) -> f64) -> GraphPatch {
        GraphPatch::from_fn(GridBall::new(1, r, h).unwrap(), 1, centered, |x| vec![f(x[0])]).unwrap()
    }

    #[test]
    fn flat_patch_has_zero_derivatives() {
        let p = GraphPatch::from_fn(GridBall::new(2, 1.0, 0.1).unwrap(), 2, true, |_| vec![0.0, 0.0]).unwrap();
        let (geom, d) = fundamental_forms(&p).unwrap();
        assert!(d.du.iter().chain(&d.d2u).all(|v| *v == 0.0));
        let g = &geom.nodes[p.grid.origin()];
        assert_eq!(g.g, DMatrix::identity(2, 2));
        let mut expect = DMatrix::zeros(4, 4);
        expect[(2, 2)] = 1.0;
        expect[(3, 3)] = 1.0;
        assert_eq!(g.p_normal, expect);
        assert_eq!(g.a_norm, 0.0);
        let norms = lp_norms(&p, &geom, 3.0).unwrap();
        assert_eq!(norms.a_lp, 0.0);
        assert!((norms.volume - std::f64::consts::PI).abs() < 0.02);
    }

    #[test]
    fn parabola_derivatives() {
        let p = patch1(1.0, 0.01, true, |x| x * x / 2.0);
        let d = p.differentiate().unwrap();
        let node = p.grid.lookup(&[50]).unwrap();
        assert!((d.du_at(node)[(0, 0)] - 0.5).abs() < 1e-4);
        for i in 0..p.grid.len() {
            assert!((d.d2u_at(i, 0, 0)[0] - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn mixed_derivative_of_product() {
        let p = GraphPatch::from_fn(GridBall::new(2, 1.0, 0.05).unwrap(), 1, true, |x| vec![x[0] * x[1]]).unwrap();
        let d = p.differentiate().unwrap();
        for i in 0..p.grid.len() {
            assert!((d.d2u_at(i, 0, 1)[0] - 1.0).abs() < 1e-4, "node {i}");
        }
    }

    #[test]
    fn circle_and_sphere_curvature() {
        let rr = 2.0;
        let p = patch1(1.0, 0.005, true, |x| rr - (rr * rr - x * x).sqrt());
        let (geom, _) = fundamental_forms(&p).unwrap();
        assert!((geom.nodes[p.grid.origin()].a_norm - 0.5).abs() < 1e-3);
        let s = GraphPatch::from_fn(GridBall::new(2, 0.5, 0.01).unwrap(), 1, true, |x| {
            vec![1.0 - (1.0 - x[0] * x[0] - x[1] * x[1]).sqrt()]
        })
        .unwrap();
        let (geom, _) = fundamental_forms(&s).unwrap();
        assert!((geom.nodes[s.grid.origin()].a_norm.powi(2) - 2.0).abs() < 1e-2);
    }

    #[test]
    fn two_formula_cross_check() {
        let s = GraphPatch::from_fn(GridBall::new(2, 0.5, 0.05).unwrap(), 2, false, |x| {
            vec![0.3 * x[0] * x[0] + 0.1 * x[1], (x[0] * x[1]).sin()]
        })
        .unwrap();
        let (geom, _) = fundamental_forms(&s).unwrap();
        for g in &geom.nodes {
            let a = g.a_norm;
            let b = g.a_norm_frame();
            assert!((a - b).abs() <= 1e-10 * a.max(1e-300) + 1e-15);
            for v in &g.a {
                assert!((g.p_tangent() * v).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn estimates_on_parabola_and_arc() {
        let p = patch1(1.0, 0.01, true, |x| x * x / 2.0);
        let (geom, d) = fundamental_forms(&p).unwrap();
        let rep = estimate_report(&p, &geom, &d, 2.0).unwrap();
        assert!(rep.morrey_ratio <= 1.0);
        assert_eq!(rep.morrey_pass, Some(true));
        assert!(rep.hessian_pass && rep.projection_pass && rep.growth_pass == Some(true));
        let r = 0.3f64.atan().sin();
        let arc = patch1(r, 0.002, true, |x| 1.0 - (1.0 - x * x).sqrt());
        let (geom, d) = fundamental_forms(&arc).unwrap();
        let rep = estimate_report(&arc, &geom, &d, 2.0).unwrap();
        assert!(rep.hessian_slack >= 0.0);
        assert!(matches!(estimate_report(&arc, &geom, &d, 1.0), Err(GeomError::ExponentTooSmall { .. })));
    }

    #[test]
    fn flat_estimates() {
        let p = patch1(1.0, 0.1, true, |_| 0.0);
        let (geom, d) = fundamental_forms(&p).unwrap();
        let rep = estimate_report(&p, &geom, &d, 2.0).unwrap();
        assert_eq!(rep.morrey_ratio, 0.0);
        assert!(rep.hessian_pass && rep.projection_pass);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let p = GraphPatch::from_fn(GridBall::new(2, 0.3, 0.07).unwrap(), 2, false, |x| {
            vec![(x[0] * 1e3).sin() / 7.0, x[1] * std::f64::consts::PI]
        })
        .unwrap();
        let q = GraphPatch::from_text(&p.to_text()).unwrap();
        assert_eq!(p.values.len(), q.values.len());
        assert!(p.values.iter().zip(&q.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(p.grid, q.grid);
    }
}
