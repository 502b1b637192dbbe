//! Reparametrization of target immersions over the limit: smoothed normal field,
//! the frame `e^ν`, the maps `F`, `G_x`, `H_x` with Banach iteration, the maps
//! `φ`, and the audits and convergence rows built on them.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::atlas::{graph_in_frame, Exhaustion, PartialGraph};
use crate::error::{GeomError, Result};
use crate::grid::{derivatives, GridBall};
use crate::limit::{Chart, LimitManifold};
use crate::linalg::{col_norm, op_norm};
use crate::mesh::{dist, SampledImmersion};
use crate::system::nearest_vertices;

/// `N_x : R^k → R^m` per chart node, with `ν(x) = {(N_x z, z)}` in chart coordinates.
#[derive(Debug, Clone)]
pub struct NormalField {
    pub n: Vec<Vec<DMatrix<f64>>>,
    pub alpha: f64,
    pub smoothing_radius: f64,
    pub max_op: f64,
    pub max_cond: f64,
}

impl NormalField {
    /// Orthonormal basis of the fiber at a node, in chart coordinates.
    pub fn fiber_basis(&self, j: usize, x: usize) -> DMatrix<f64> {
        let nx = &self.n[j][x];
        let (m, k) = nx.shape();
        let mut b = DMatrix::zeros(m + k, k);
        b.view_mut((0, 0), (m, k)).copy_from(nx);
        b.view_mut((m, 0), (k, k)).copy_from(&DMatrix::identity(k, k));
        let qr = b.qr();
        qr.q()
    }

    /// `N` at an arbitrary chart point by the same local linear smoothing used for the nodes.
    pub fn at_point(&self, lim: &LimitManifold, j: usize, x: &[f64]) -> DMatrix<f64> {
        let c = &lim.charts[j];
        let sigma = self.smoothing_radius.max(c.entry.patch.grid.h);
        local_linear(c, &self.n[j], x, sigma)
    }
}

/// Gaussian-weighted local linear fit of a matrix field over the nodes within `3σ` of `x`.
/// Reproduces affine fields exactly, so chart rims are not biased.
fn local_linear(chart: &Chart, vals: &[DMatrix<f64>], x: &[f64], sigma: f64) -> DMatrix<f64> {
    let m = x.len();
    let (r, c) = vals[0].shape();
    let mut rows = Vec::new();
    let mut ws = Vec::new();
    let mut picked = Vec::new();
    for i in chart.nodes_within(x, 3.0 * sigma) {
        let p = chart.point(i);
        let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
        let w = (-d2 / (2.0 * sigma * sigma)).exp().sqrt();
        let mut row = vec![w];
        row.extend(p.iter().zip(x).map(|(a, b)| w * (a - b) / sigma));
        rows.extend(row);
        ws.push(w);
        picked.push(i);
    }
    if picked.len() < m + 2 {
        return picked.first().map(|&i| vals[i].clone()).unwrap_or_else(|| DMatrix::zeros(r, c));
    }
    let a = DMatrix::from_row_slice(picked.len(), m + 1, &rows);
    let rhs = DMatrix::from_fn(picked.len(), r * c, |l, e| ws[l] * vals[picked[l]][(e % r, e / r)]);
    let svd = a.svd(true, true);
    match svd.solve(&rhs, 1e-12) {
        Ok(sol) => DMatrix::from_fn(r, c, |a, b| sol[(0, a + b * r)]),
        Err(_) => vals[picked[0]].clone(),
    }
}

fn graph_normal_raw(lim: &LimitManifold) -> Result<Vec<Vec<DMatrix<f64>>>> {
    lim.charts
        .iter()
        .map(|c| {
            let d = c.entry.derivatives()?;
            Ok(c.nodes.iter().map(|&node| -d.du_at(node).transpose()).collect())
        })
        .collect()
}

fn mollify(lim: &LimitManifold, raw: &[Vec<DMatrix<f64>>], radius: f64) -> Vec<Vec<DMatrix<f64>>> {
    lim.charts
        .par_iter()
        .enumerate()
        .map(|(j, c)| {
            if radius <= 0.0 {
                return raw[j].clone();
            }
            (0..c.nodes.len()).map(|i| local_linear(c, &raw[j], &c.point(i), radius)).collect()
        })
        .collect()
}

/// Condition number of the combined (tangent, fiber) basis at a node.
fn transversality(du: &DMatrix<f64>, nx: &DMatrix<f64>) -> f64 {
    let (k, m) = du.shape();
    let mut b = DMatrix::zeros(m + k, m + k);
    for a in 0..m {
        b[(a, a)] = 1.0;
        for c in 0..k {
            b[(m + c, a)] = du[(c, a)];
        }
    }
    for c in 0..k {
        for a in 0..m {
            b[(a, m + c)] = nx[(a, c)];
        }
        b[(m + c, m + c)] = 1.0;
    }
    let sv = b.singular_values();
    sv.max() / sv.min()
}

/// Graph normals `N_x = −Du(x)ᵀ`, mollified at `smoothing_radius` (halved up to three times
/// until `‖N_x‖_op ≤ 2α` and the transversality bound hold).
pub fn smooth_normal_field(lim: &LimitManifold, smoothing_radius: f64, alpha: f64, cond_max: f64) -> Result<NormalField> {
    let raw = graph_normal_raw(lim)?;
    let mut radius = smoothing_radius;
    for attempt in 0..4 {
        let n = mollify(lim, &raw, radius);
        let mut max_op: f64 = 0.0;
        let mut max_cond: f64 = 0.0;
        for (j, c) in lim.charts.iter().enumerate() {
            let d = c.entry.derivatives()?;
            for (i, nx) in n[j].iter().enumerate() {
                max_op = max_op.max(op_norm(nx));
                max_cond = max_cond.max(transversality(&d.du_at(c.nodes[i]), nx));
            }
        }
        if max_op <= 2.0 * alpha && max_cond <= cond_max {
            return Ok(NormalField { n, alpha, smoothing_radius: radius, max_op, max_cond });
        }
        if attempt == 3 {
            return Err(GeomError::NormalBound(format!("‖N‖_op = {max_op} > 2α = {} or condition {max_cond} > {cond_max}", 2.0 * alpha)));
        }
        radius /= 2.0;
    }
    unreachable!()
}

/// `e^ν(x) = (N_x ẑ_ν, ẑ_ν)` as the columns of an `n×k` matrix.
pub fn build_frame(nx: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = nx.shape();
    let mut e = DMatrix::zeros(m + k, k);
    e.view_mut((0, 0), (m, k)).copy_from(nx);
    for c in 0..k {
        e[(m + c, c)] = 1.0;
    }
    e
}

/// `π^v(∑ t_ν e^ν)`.
pub fn frame_vertical(e: &DMatrix<f64>, t: &[f64]) -> Vec<f64> {
    let k = e.ncols();
    let m = e.nrows() - k;
    let v = e * DVector::from_column_slice(t);
    v.as_slice()[m..].to_vec()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub t: Vec<f64>,
    pub x_foot: Vec<f64>,
    pub residual: f64,
    pub steps: usize,
    pub contraction: f64,
}

/// Solves `y = H_x(y) = N_x ũ(y) + F(x)`, `F(x) = x − N_x u(x)`, by iteration from `y₀ = x`;
/// `T = ũ(X) − u(x)`.
pub fn project_point(
    u_x: &[f64],
    target: &dyn Fn(&[f64]) -> Option<Vec<f64>>,
    nx: &DMatrix<f64>,
    x: &[f64],
    tol_fix: f64,
    max_steps: usize,
) -> std::result::Result<Projection, GeomError> {
    let (m, k) = nx.shape();
    let nu = nx * DVector::from_column_slice(u_x);
    let f: Vec<f64> = (0..m).map(|a| x[a] - nu[a]).collect();
    let h = |y: &[f64]| -> Option<Vec<f64>> {
        let ut = target(y)?;
        let v = nx * DVector::from_vec(ut);
        Some((0..m).map(|a| v[a] + f[a]).collect())
    };
    let mut y = x.to_vec();
    let mut prev_step = f64::NAN;
    let mut contraction: f64 = 0.0;
    let mut steps = 0;
    loop {
        let next = h(&y).ok_or(GeomError::LeftPatch { chart: usize::MAX, node: usize::MAX })?;
        let step = dist(&next, &y);
        steps += 1;
        if prev_step.is_finite() && step > 1e-9 {
            contraction = contraction.max(step / prev_step);
        }
        y = next;
        if step <= tol_fix {
            break;
        }
        if steps >= max_steps {
            return Err(GeomError::NonContraction(contraction.max(step / prev_step.max(1e-300))));
        }
        prev_step = step;
    }
    let ut = target(&y).ok_or(GeomError::LeftPatch { chart: usize::MAX, node: usize::MAX })?;
    let t: Vec<f64> = (0..k).map(|c| ut[c] - u_x[c]).collect();
    // defining equation 0 = ũ(x + N T) − u − T
    let foot = nx * DVector::from_column_slice(&t);
    let xt: Vec<f64> = (0..m).map(|a| x[a] + foot[a]).collect();
    let ue = target(&xt).ok_or(GeomError::LeftPatch { chart: usize::MAX, node: usize::MAX })?;
    let residual = (0..k).map(|c| (ue[c] - u_x[c] - t[c]).powi(2)).sum::<f64>().sqrt();
    Ok(Projection { t, x_foot: y, residual, steps, contraction })
}

/// Upper bound on iteration count for a contraction of factor `q`.
pub fn step_bound(initial_gap: f64, tol_fix: f64, q: f64) -> usize {
    if initial_gap <= tol_fix {
        return 1;
    }
    ((initial_gap / tol_fix).ln() / (1.0 / q).ln()).ceil() as usize + 1
}

/// Target patches `ũ_j` of `f^i` over `B_{radius}` in each limit chart frame, anchored at the
/// target vertex nearest to `A_j(0)`.
pub fn target_patches(lim: &LimitManifold, target: &SampledImmersion, radius: f64) -> Result<Vec<PartialGraph>> {
    let origins: Vec<Vec<f64>> = lim.charts.iter().map(|c| c.entry.iso.translation.as_slice().to_vec()).collect();
    let anchors = nearest_vertices(target, &origins);
    lim.charts
        .par_iter()
        .zip(anchors.par_iter())
        .map(|(c, &a)| graph_in_frame(target, &c.entry.iso, a, radius, c.entry.patch.grid.h))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditFailure {
    pub kind: &'static str,
    pub witness: String,
}

#[derive(Debug, Clone)]
pub struct ReparamResult {
    /// Per chart, per node.
    pub proj: Vec<Vec<Projection>>,
    /// `f^i ∘ φ^i` at each node.
    pub image: Vec<Vec<DVector<f64>>>,
    /// Target simplex under each node.
    pub phi: Vec<Vec<Option<(usize, Vec<f64>)>>>,
    pub max_contraction: f64,
    pub max_residual: f64,
    pub max_steps: usize,
    pub well_defined: Option<AuditFailure>,
    pub injective: Option<AuditFailure>,
    pub surjective: Option<AuditFailure>,
    pub immersion: Option<AuditFailure>,
    pub folds: usize,
}

impl ReparamResult {
    /// Whether the node map is a bijection onto the target with full-rank composition.
    pub fn diffeomorphic(&self) -> bool {
        self.well_defined.is_none() && self.injective.is_none() && self.surjective.is_none() && self.immersion.is_none()
    }

    pub fn failures(&self) -> Vec<&AuditFailure> {
        [&self.well_defined, &self.injective, &self.surjective, &self.immersion].into_iter().flatten().collect()
    }
}

pub struct ReparamOptions {
    pub tol_fix: f64,
    pub max_steps: usize,
    /// Collision distance for the injectivity hash.
    pub collision: f64,
    /// Region whose target vertices must be hit; `None` checks every vertex.
    pub surjectivity_region: Option<(Exhaustion, usize)>,
}

fn chart_grid(lim: &LimitManifold, j: usize) -> Result<GridBall> {
    let c = &lim.charts[j];
    let g = GridBall::new(c.m(), c.radius, c.entry.patch.grid.h)?;
    if g.len() != c.nodes.len() {
        return Err(GeomError::ShapeMismatch(format!("chart {j} grid does not match its node set")));
    }
    Ok(g)
}

/// Projects every limit chart node onto the target and audits the resulting map.
pub fn reparametrize(
    lim: &LimitManifold,
    nf: &NormalField,
    targets: &[PartialGraph],
    target: &SampledImmersion,
    opts: &ReparamOptions,
) -> Result<ReparamResult> {
    let charts = &lim.charts;
    let per_chart: Result<Vec<(Vec<Projection>, Vec<DVector<f64>>, Vec<Option<(usize, Vec<f64>)>>)>> = (0..charts.len())
        .into_par_iter()
        .map(|j| {
            let c = &charts[j];
            let tg = &targets[j];
            let f = |y: &[f64]| tg.eval(y);
            let mut ps = Vec::with_capacity(c.nodes.len());
            let mut imgs = Vec::with_capacity(c.nodes.len());
            let mut phis = Vec::with_capacity(c.nodes.len());
            for x in 0..c.nodes.len() {
                let pt = c.point(x);
                let u = c.entry.patch.value(c.nodes[x]).to_vec();
                let p = project_point(&u, &f, &nf.n[j][x], &pt, opts.tol_fix, opts.max_steps).map_err(|e| match e {
                    GeomError::LeftPatch { .. } => GeomError::LeftPatch { chart: j, node: x },
                    other => other,
                })?;
                let ut = tg.eval(&p.x_foot).ok_or(GeomError::LeftPatch { chart: j, node: x })?;
                let mut y = p.x_foot.clone();
                y.extend(ut);
                imgs.push(c.entry.iso.apply(&DVector::from_vec(y)));
                phis.push(tg.locate(&p.x_foot));
                ps.push(p);
            }
            Ok((ps, imgs, phis))
        })
        .collect();
    let per_chart = per_chart?;
    let mut proj = Vec::new();
    let mut image = Vec::new();
    let mut phi = Vec::new();
    for (p, i, f) in per_chart {
        proj.push(p);
        image.push(i);
        phi.push(f);
    }
    let all = proj.iter().flatten();
    let max_contraction = all.clone().map(|p| p.contraction).fold(0.0, f64::max);
    let max_residual = all.clone().map(|p| p.residual).fold(0.0, f64::max);
    let max_steps = all.map(|p| p.steps).max().unwrap_or(0);
    let folds = targets.iter().filter(|t| t.fold).count();

    // well-definedness: the same limit point seen from two charts lands on the same target point
    let tol = lim.relation.tol_glue;
    let well_defined = lim
        .relation
        .pairs
        .par_iter()
        .find_map_first(|p| {
            let ck = &charts[p.k];
            let u = ck.entry.patch.eval(&p.psi)?;
            let nk = nf.at_point(lim, p.k, &p.psi);
            let tg = &targets[p.k];
            let f = |y: &[f64]| tg.eval(y);
            let witness = |what: String| AuditFailure { kind: "well_defined", witness: format!("chart {} node {} vs chart {}: {what}", p.j, p.x, p.k) };
            match project_point(&u, &f, &nk, &p.psi, opts.tol_fix, opts.max_steps) {
                Ok(q) => {
                    let mut y = q.x_foot.clone();
                    y.extend(tg.eval(&q.x_foot)?);
                    let other = ck.entry.iso.apply(&DVector::from_vec(y));
                    let gap = (&other - &image[p.j][p.x]).norm();
                    (gap > tol).then(|| witness(format!("images differ by {gap:e}")))
                }
                Err(e) => Some(witness(e.to_string())),
            }
        });

    // injectivity: distinct limit points with coincident images
    let mut cells: std::collections::HashMap<Vec<i64>, Vec<(usize, usize)>> = std::collections::HashMap::new();
    let cell = opts.collision.max(1e-12);
    for (j, imgs) in image.iter().enumerate() {
        for (x, q) in imgs.iter().enumerate() {
            let key: Vec<i64> = q.iter().map(|v| (v / cell).floor() as i64).collect();
            cells.entry(key).or_default().push((j, x));
        }
    }
    let mut injective = None;
    let mut keys: Vec<&Vec<i64>> = cells.keys().collect();
    keys.sort();
    'inj: for key in keys {
        let n = key.len();
        for flat in 0..3usize.pow(n as u32) {
            let mut rem = flat;
            let mut nb = key.clone();
            for a in nb.iter_mut() {
                *a += (rem % 3) as i64 - 1;
                rem /= 3;
            }
            let Some(others) = cells.get(&nb) else { continue };
            for &(j, x) in &cells[key] {
                for &(k, y) in others {
                    if (j, x) >= (k, y) {
                        continue;
                    }
                    if (&image[j][x] - &image[k][y]).norm() > opts.collision {
                        continue;
                    }
                    let same = if j == k {
                        false
                    } else {
                        let h = charts[k].entry.patch.grid.h;
                        lim.relation.of(j, x).any(|p| p.k == k && dist(&p.psi, &charts[k].point(y)) <= 2.0 * h)
                            || lim.class_of[lim.global(j, x)] == lim.class_of[lim.global(k, y)]
                            // both seen from a common third chart at the same place
                            || lim.relation.of(j, x).any(|p| {
                                let hl = charts[p.k].entry.patch.grid.h;
                                lim.relation.of(k, y).any(|q| q.k == p.k && dist(&p.psi, &q.psi) <= 2.0 * hl)
                            })
                    };
                    if !same {
                        injective = Some(AuditFailure {
                            kind: "injective",
                            witness: format!("chart {j} node {x} and chart {k} node {y} share an image"),
                        });
                        break 'inj;
                    }
                }
            }
        }
    }

    // surjectivity: every target vertex in the region lies within one cell of an image
    let mut icells: std::collections::HashMap<Vec<i64>, Vec<(usize, usize)>> = std::collections::HashMap::new();
    let reach = (0..target.num_vertices()).map(|v| target.max_edge_at(v)).fold(0.0, f64::max).max(1e-12);
    for (j, imgs) in image.iter().enumerate() {
        for (x, q) in imgs.iter().enumerate() {
            icells.entry(q.iter().map(|v| (v / reach).floor() as i64).collect()).or_default().push((j, x));
        }
    }
    let surjective = (0..target.num_vertices()).into_par_iter().find_map_first(|v| {
        let p = target.pos(v);
        if let Some((ex, level)) = &opts.surjectivity_region {
            if !ex.contains(*level, p) {
                return None;
            }
        }
        let cellv = target.max_edge_at(v);
        let key: Vec<i64> = p.iter().map(|x| (x / reach).floor() as i64).collect();
        let n = key.len();
        for flat in 0..3usize.pow(n as u32) {
            let mut rem = flat;
            let mut nb = key.clone();
            for a in nb.iter_mut() {
                *a += (rem % 3) as i64 - 1;
                rem /= 3;
            }
            if let Some(list) = icells.get(&nb) {
                if list.iter().any(|&(j, x)| dist(image[j][x].as_slice(), p) <= cellv) {
                    return None;
                }
            }
        }
        Some(AuditFailure { kind: "surjective", witness: format!("target vertex {v} is not hit") })
    });

    // immersion: full-rank Jacobian of f^i ∘ φ^i in chart coordinates
    let immersion = (0..charts.len()).into_par_iter().find_map_first(|j| {
        let grid = chart_grid(lim, j).ok()?;
        let n = charts[j].entry.iso.n();
        let m = grid.m;
        let field: Vec<f64> = image[j].iter().flat_map(|q| q.iter().copied()).collect();
        let (grad, _) = derivatives(&grid, &field, n).ok()?;
        for node in 0..grid.len() {
            let jac = DMatrix::from_row_slice(n, m, &grad[node * n * m..(node + 1) * n * m]);
            let sv = jac.singular_values();
            if sv.min() < 1e-3 * sv.max().max(1e-300) {
                return Some(AuditFailure { kind: "immersion", witness: format!("chart {j} node {node} rank deficient") });
            }
        }
        None
    });

    Ok(ReparamResult {
        proj,
        image,
        phi,
        max_contraction,
        max_residual,
        max_steps,
        well_defined,
        injective,
        surjective,
        immersion,
        folds,
    })
}

/// Sup norms of `D^l V`, `V(x) = (N_x T(x), T(x))`, for `l = 0..=order`, and of `A^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub index: usize,
    pub sup_t: f64,
    /// `c[l]` is the sup of the `l`-th derivative of `V` (`c[0]` is the C⁰ distance).
    pub c: Vec<f64>,
    pub max_a_op: f64,
    pub max_contraction: f64,
    pub max_residual: f64,
    pub diffeomorphic: bool,
}

fn sup_norm(field: &[f64], comps: usize) -> f64 {
    field.chunks(comps).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

pub fn convergence_row(
    lim: &LimitManifold,
    nf: &NormalField,
    targets: &[PartialGraph],
    res: &ReparamResult,
    index: usize,
    order: usize,
) -> Result<ConvergenceRow> {
    let rows: Result<Vec<(f64, Vec<f64>, f64)>> = (0..lim.charts.len())
        .into_par_iter()
        .map(|j| {
            let grid = chart_grid(lim, j)?;
            let m = grid.m;
            let mut sup_t: f64 = 0.0;
            let mut a_op: f64 = 0.0;
            let mut field = Vec::new();
            let mut comps = 0;
            for (x, p) in res.proj[j].iter().enumerate() {
                let nx = &nf.n[j][x];
                let t = DVector::from_column_slice(&p.t);
                let nt = nx * &t;
                field.extend(nt.iter());
                field.extend(t.iter());
                comps = nt.len() + t.len();
                sup_t = sup_t.max(t.norm());
                if let Some(dut) = targets[j].eval_grad(&p.x_foot) {
                    a_op = a_op.max(op_norm(&(dut * nx).transpose()));
                }
            }
            let mut c = vec![sup_norm(&field, comps)];
            let mut cur = field;
            let mut cur_comps = comps;
            for _ in 0..order {
                let (grad, _) = derivatives(&grid, &cur, cur_comps)?;
                cur_comps *= m;
                c.push(sup_norm(&grad, cur_comps));
                cur = grad;
            }
            Ok((sup_t, c, a_op))
        })
        .collect();
    let rows = rows?;
    let mut c = vec![0.0; order + 1];
    let mut sup_t: f64 = 0.0;
    let mut a_op: f64 = 0.0;
    for (s, cj, a) in rows {
        sup_t = sup_t.max(s);
        a_op = a_op.max(a);
        for (l, v) in cj.iter().enumerate() {
            c[l] = f64::max(c[l], *v);
        }
    }
    Ok(ConvergenceRow {
        index,
        sup_t,
        c,
        max_a_op: a_op,
        max_contraction: res.max_contraction,
        max_residual: res.max_residual,
        diffeomorphic: res.diffeomorphic(),
    })
}

/// Sup of the C¹ column norm of `Du` over all limit charts.
pub fn limit_slope(lim: &LimitManifold) -> Result<f64> {
    let mut s: f64 = 0.0;
    for c in &lim.charts {
        let d = c.entry.derivatives()?;
        for &node in &c.nodes {
            s = s.max(col_norm(&d.du_at(node)));
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridBall;
    use crate::limit::limit_from_system;
    use crate::linalg::EuclideanIsometry;
    use crate::patch::GraphPatch;
    use crate::scenario::{circle, spiral};
    use crate::system::{GraphSystem, SystemEntry};

    fn circle_limit(n: usize, rho: f64, h: f64) -> LimitManifold {
        let grid = GridBall::new(1, rho, h).unwrap();
        let patch = GraphPatch::from_fn(grid, 1, true, |x| vec![1.0 - (1.0 - x[0] * x[0]).sqrt()]).unwrap();
        let entries = (0..n)
            .map(|j| {
                let (s, c) = (2.0 * std::f64::consts::PI * j as f64 / n as f64).sin_cos();
                let rot = DMatrix::from_row_slice(2, 2, &[-s, -c, c, -s]);
                SystemEntry::new(EuclideanIsometry::new(rot, DVector::from_vec(vec![c, s]), 1e-12).unwrap(), patch.clone())
            })
            .collect();
        let g = GraphSystem::new(entries, None, None).unwrap();
        let z: Vec<Vec<usize>> = (0..n)
            .map(|j| {
                let mut v: Vec<usize> = (0..5).map(|d| (j + n + d - 2) % n).collect();
                v.sort_unstable();
                v
            })
            .collect();
        limit_from_system(&g, &vec![rho; n], &z, 0.01, 1e-9).unwrap()
    }

    fn opts() -> ReparamOptions {
        ReparamOptions { tol_fix: 1e-12, max_steps: 200, collision: 1e-4, surjectivity_region: None }
    }

    #[test]
    fn circle_normal_is_radial() {
        let lim = circle_limit(48, 0.2, 0.005);
        let nf = smooth_normal_field(&lim, 0.01, 0.25, 10.0).unwrap();
        assert!(nf.max_op <= 0.5);
        // radial direction in chart coordinates at x is (-x, 1 - u) up to scale; slope -x/√(1-x²)
        for (i, nx) in nf.n[3].iter().enumerate() {
            let x = lim.charts[3].point(i)[0];
            let exact = -x / (1.0 - x * x).sqrt();
            assert!((nx[(0, 0)] - exact).abs() < 1e-3, "{} vs {exact}", nx[(0, 0)]);
        }
    }

    #[test]
    fn target_equal_to_limit() {
        let lim = circle_limit(48, 0.2, 0.005);
        let nf = smooth_normal_field(&lim, 0.01, 0.25, 10.0).unwrap();
        let target = circle([0.0, 0.0], 1.0, 2880).unwrap();
        let tg = target_patches(&lim, &target, 0.4).unwrap();
        let res = reparametrize(&lim, &nf, &tg, &target, &opts()).unwrap();
        let row = convergence_row(&lim, &nf, &tg, &res, 0, 1).unwrap();
        assert!(row.sup_t < 1e-5, "{}", row.sup_t);
        assert!(res.diffeomorphic(), "{:?}", res.failures());
    }

    #[test]
    fn concentric_circle() {
        let lim = circle_limit(48, 0.2, 0.005);
        let nf = smooth_normal_field(&lim, 0.01, 0.25, 10.0).unwrap();
        let target = circle([0.0, 0.0], 1.0 + 1.0 / 16.0, 2880).unwrap();
        let tg = target_patches(&lim, &target, 0.4).unwrap();
        let res = reparametrize(&lim, &nf, &tg, &target, &opts()).unwrap();
        assert!(res.diffeomorphic(), "{:?}", res.failures());
        assert!(res.max_residual <= 1e-10);
        assert!(res.max_contraction <= 4.0 * 0.25 * 0.25 + 1e-6);
        let row = convergence_row(&lim, &nf, &tg, &res, 16, 2).unwrap();
        assert!((row.sup_t - 1.0 / 16.0).abs() < 1e-3, "{}", row.sup_t);
        assert!(row.max_a_op <= 0.5, "{}", row.max_a_op);
    }

    #[test]
    fn spiral_is_not_diffeomorphic() {
        let lim = circle_limit(48, 0.2, 0.005);
        let nf = smooth_normal_field(&lim, 0.01, 0.25, 10.0).unwrap();
        let target = spiral(1.0 / 16.0, 3.0, 2880).unwrap();
        let tg = target_patches(&lim, &target, 0.4).unwrap();
        let res = reparametrize(&lim, &nf, &tg, &target, &opts()).unwrap();
        assert!(!res.diffeomorphic());
        assert!(res.well_defined.is_some() || res.surjective.is_some());
    }

    fn id_target(v: f64) -> impl Fn(&[f64]) -> Option<Vec<f64>> {
        move |_y: &[f64]| Some(vec![v])
    }

    #[test]
    fn coincident_graphs() {
        let u = |y: &[f64]| Some(vec![y[0] * y[0]]);
        let n = DMatrix::from_element(1, 1, 0.3);
        let p = project_point(&[0.25], &u, &n, &[0.5], 1e-12, 50).unwrap();
        assert!(p.t[0].abs() < 1e-12);
        assert!((p.x_foot[0] - 0.5).abs() < 1e-12);
        assert!(p.steps <= 2);
    }

    #[test]
    fn vertical_shift() {
        let n = DMatrix::zeros(1, 1);
        let p = project_point(&[0.0], &id_target(0.3), &n, &[0.2], 1e-12, 50).unwrap();
        assert_eq!(p.x_foot, vec![0.2]);
        assert!((p.t[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn linear_fixed_point_oracle() {
        // y = x + s ε y  ⇒  X = x/(1 − sε), T = εX
        let (s, eps, x) = (0.2, 0.3, 0.4);
        let u = move |y: &[f64]| Some(vec![eps * y[0]]);
        let n = DMatrix::from_element(1, 1, s);
        let p = project_point(&[0.0], &u, &n, &[x], 1e-14, 100).unwrap();
        let xf = x / (1.0 - s * eps);
        assert!((p.x_foot[0] - xf).abs() < 1e-13);
        assert!((p.t[0] - eps * xf).abs() < 1e-13);
        assert!(p.contraction <= s * eps + 1e-6, "{}", p.contraction);
        assert!(p.steps <= step_bound(x, 1e-14, s * eps) + 1);
    }

    #[test]
    fn frame_identities() {
        let n0 = DMatrix::zeros(2, 1);
        assert_eq!(build_frame(&n0), DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]));
        let s = DMatrix::from_column_slice(1, 1, &[0.4]);
        assert_eq!(build_frame(&s), DMatrix::from_column_slice(2, 1, &[0.4, 1.0]));
        let n = DMatrix::from_row_slice(2, 2, &[0.1, -0.2, 0.05, 0.3]);
        let e = build_frame(&n);
        let t = [0.7, -1.3];
        assert_eq!(frame_vertical(&e, &t), t.to_vec());
    }
}
