//! Tangent frames, q-component graph neighbourhoods, radius certification,
//! δ-nets (plain and subdivided) and intersection sets of a sampled immersion.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{GeomError, GraphFailure, Result};
use crate::grid::{monomials, GridBall};
use crate::linalg::{col_norm, EuclideanIsometry};
use crate::mesh::{dist, norm, SampledImmersion};
use crate::patch::{node_geometry, GraphPatch, TOL_CENTER};

/// Chart coordinates of vertices under a frame: horizontal part and vertical part.
fn chart_coords(imm: &SampledImmersion, frame: &EuclideanIsometry, v: usize) -> (Vec<f64>, Vec<f64>) {
    let y = frame.apply_inverse(&DVector::from_column_slice(imm.pos(v)));
    let m = imm.m;
    (y.as_slice()[..m].to_vec(), y.as_slice()[m..].to_vec())
}

fn orthonormal_completion(tangent: &[DVector<f64>], n: usize) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = tangent.to_vec();
    for a in 0..n {
        if basis.len() == n {
            break;
        }
        let mut e = DVector::zeros(n);
        e[a] = 1.0;
        for b in &basis {
            let c = b.dot(&e);
            e -= b * c;
        }
        let ne = e.norm();
        if ne > 0.3 {
            basis.push(e / ne);
        }
    }
    basis
}

/// Rotation whose first `m` columns span the given tangent plane, with tangent basis
/// chosen from projected ambient axes (or oriented along `orient` for curves).
fn frame_from_tangent(tangent: &DMatrix<f64>, origin: &[f64], orient: Option<&[f64]>) -> EuclideanIsometry {
    let n = tangent.nrows();
    let m = tangent.ncols();
    let proj = tangent * tangent.transpose();
    let mut t: Vec<DVector<f64>> = Vec::new();
    if m == 1 {
        let mut v = tangent.column(0).into_owned();
        if let Some(o) = orient {
            if v.dot(&DVector::from_column_slice(o)) < 0.0 {
                v = -v;
            }
        }
        t.push(v.normalize());
    } else {
        let mut cands: Vec<(f64, DVector<f64>)> = (0..n)
            .map(|a| {
                let mut e = DVector::zeros(n);
                e[a] = 1.0;
                let p = &proj * e;
                (p.norm(), p)
            })
            .collect();
        for (_, p) in cands.iter_mut() {
            let mut v = p.clone();
            for b in &t {
                let c = b.dot(&v);
                v -= b * c;
            }
            if t.len() < m && v.norm() > 0.3 {
                t.push(v.normalize());
            }
        }
        if t.len() < m {
            // degenerate axis alignment; fall back to the raw tangent basis
            t = (0..m).map(|a| tangent.column(a).into_owned()).collect();
            t = orthonormal_completion(&[], n).into_iter().take(0).chain(t).collect();
        }
    }
    let basis = orthonormal_completion(&t, n);
    let mut r = DMatrix::from_columns(&basis);
    if r.determinant() < 0.0 {
        let last = n - 1;
        let col = -r.column(last).into_owned();
        r.set_column(last, &col);
    }
    EuclideanIsometry { rotation: r, translation: DVector::from_column_slice(origin) }
}

/// Direction of traversal of a curve at `q` (next minus previous vertex).
fn curve_direction(imm: &SampledImmersion, q: usize) -> Option<Vec<f64>> {
    let mut next = None;
    let mut prev = None;
    for &s in imm.simplices_of(q) {
        let sv = imm.simplex(s);
        if sv[0] == q {
            next = Some(sv[1]);
        } else {
            prev = Some(sv[0]);
        }
    }
    let a = prev.map(|p| imm.pos(p).to_vec()).unwrap_or_else(|| imm.pos(q).to_vec());
    let b = next.map(|p| imm.pos(p).to_vec()).unwrap_or_else(|| imm.pos(q).to_vec());
    let d: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
    (norm(&d) > 0.0).then_some(d)
}

fn ring(imm: &SampledImmersion, q: usize, depth: usize) -> Vec<usize> {
    let mut seen = vec![q];
    let mut frontier = vec![q];
    for _ in 0..depth {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in imm.neighbors(v) {
                if !seen.contains(&w) {
                    seen.push(w);
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    seen.retain(|&v| v != q);
    seen
}

/// `A_q`: maps 0 to `f(q)` and `R^m × {0}` onto the estimated tangent plane.
/// The plane is a Gaussian-weighted least-squares fit over the 1-ring (2-ring if needed).
pub fn tangent_frame_at(imm: &SampledImmersion, q: usize) -> Result<EuclideanIsometry> {
    let (m, n) = (imm.m, imm.n);
    let p0 = imm.pos(q);
    for depth in [1usize, 2] {
        let nb = ring(imm, q, depth);
        if nb.len() < m {
            continue;
        }
        let ell = nb.iter().map(|&w| dist(p0, imm.pos(w))).sum::<f64>() / nb.len() as f64;
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for &w in &nb {
            let d = DVector::from_iterator(n, imm.pos(w).iter().zip(p0).map(|(a, b)| a - b));
            let wt = (-(d.norm_squared()) / (ell * ell)).exp();
            cov += &d * d.transpose() * wt;
        }
        let eig = cov.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let trace = eig.eigenvalues.iter().sum::<f64>();
        if !(eig.eigenvalues[order[m - 1]] > 1e-10 * trace) {
            continue;
        }
        let tangent = DMatrix::from_columns(&order[..m].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
        let dir = if m == 1 { curve_direction(imm, q) } else { None };
        return Ok(frame_from_tangent(&tangent, p0, dir.as_deref()));
    }
    Err(GeomError::RankDeficient(q))
}

/// Weighted least-squares polynomial fit of the vertical coordinates around `x0`.
/// Returns value, gradient (k×m) and Hessian entries.
pub struct LocalFit {
    pub value: Vec<f64>,
    pub grad: DMatrix<f64>,
    pub hess: Vec<DVector<f64>>,
}

struct VertexIndex {
    cell: f64,
    m: usize,
    map: HashMap<Vec<i64>, Vec<usize>>,
}

impl VertexIndex {
    fn new(points: &[(usize, Vec<f64>)], cell: f64, m: usize) -> Self {
        let mut map: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, (_, x)) in points.iter().enumerate() {
            map.entry(key(x, cell)).or_default().push(i);
        }
        VertexIndex { cell, m, map }
    }

    fn near(&self, x: &[f64], radius: f64) -> Vec<usize> {
        let reach = (radius / self.cell).ceil() as i64;
        let base = key(x, self.cell);
        let span = (2 * reach + 1) as usize;
        let total = span.pow(self.m as u32);
        let mut out = Vec::new();
        for flat in 0..total {
            let mut rem = flat;
            let mut k = base.clone();
            for a in 0..self.m {
                k[a] += (rem % span) as i64 - reach;
                rem /= span;
            }
            if let Some(v) = self.map.get(&k) {
                out.extend_from_slice(v);
            }
        }
        out
    }
}

fn key(x: &[f64], cell: f64) -> Vec<i64> {
    x.iter().map(|v| (v / cell).floor() as i64).collect()
}

/// Chart-projected vertex data of a region, with a spatial index.
struct ChartData {
    m: usize,
    k: usize,
    pts: Vec<(usize, Vec<f64>)>,
    vert: Vec<Vec<f64>>,
    index: VertexIndex,
    ell: f64,
}

impl ChartData {
    fn new(imm: &SampledImmersion, frame: &EuclideanIsometry, verts: &[usize], ell: f64) -> Self {
        let mut pts = Vec::with_capacity(verts.len());
        let mut vert = Vec::with_capacity(verts.len());
        for &v in verts {
            let (x, w) = chart_coords(imm, frame, v);
            pts.push((v, x));
            vert.push(w);
        }
        let index = VertexIndex::new(&pts, 2.0 * ell, imm.m);
        ChartData { m: imm.m, k: imm.n - imm.m, pts, vert, index, ell }
    }

    fn fit(&self, x0: &[f64]) -> Option<LocalFit> {
        let (m, k) = (self.m, self.k);
        let deg = 3usize;
        let mons = monomials(m, deg);
        let mut radius = 2.5 * self.ell;
        for _ in 0..4 {
            let cand: Vec<usize> = self
                .index
                .near(x0, radius)
                .into_iter()
                .filter(|&i| dist(&self.pts[i].1, x0) <= radius)
                .collect();
            if cand.len() >= mons.len() + 2 {
                let rows = cand.len();
                let mut v = DMatrix::<f64>::zeros(rows, mons.len());
                let mut rhs = DMatrix::<f64>::zeros(rows, k);
                for (r, &i) in cand.iter().enumerate() {
                    let off: Vec<f64> = self.pts[i].1.iter().zip(x0).map(|(a, b)| (a - b) / self.ell).collect();
                    let d2: f64 = off.iter().map(|o| o * o).sum();
                    let w = (-d2 / 2.0).exp().sqrt();
                    for (c, e) in mons.iter().enumerate() {
                        v[(r, c)] = w * e.iter().zip(&off).map(|(&p, x)| x.powi(p as i32)).product::<f64>();
                    }
                    for c in 0..k {
                        rhs[(r, c)] = w * self.vert[i][c];
                    }
                }
                // normal equations when well conditioned, SVD otherwise
                let coef = (v.transpose() * &v).cholesky().and_then(|c| {
                    let d = c.l_dirty().diagonal();
                    (d.min() > 1e-6 * d.max()).then(|| c.solve(&(v.transpose() * &rhs)))
                });
                let coef = match coef {
                    Some(c) => Some(c),
                    None => {
                        let svd = v.svd(true, true);
                        let smax = svd.singular_values.max();
                        if svd.singular_values.min() > 1e-9 * smax {
                            Some(svd.solve(&rhs, 1e-15).ok()?)
                        } else {
                            None
                        }
                    }
                };
                if let Some(coef) = coef {
                    let mut value = vec![0.0; k];
                    let mut grad = DMatrix::zeros(k, m);
                    let mut hess = vec![DVector::zeros(k); m * m];
                    for (ci, e) in mons.iter().enumerate() {
                        let d: usize = e.iter().sum();
                        for c in 0..k {
                            let cf = coef[(ci, c)];
                            match d {
                                0 => value[c] = cf,
                                1 => {
                                    let a = e.iter().position(|&p| p == 1).unwrap();
                                    grad[(c, a)] = cf / self.ell;
                                }
                                2 => {
                                    let nz: Vec<usize> = (0..m).filter(|&a| e[a] > 0).collect();
                                    let s = self.ell * self.ell;
                                    if nz.len() == 1 {
                                        hess[nz[0] * m + nz[0]][c] = 2.0 * cf / s;
                                    } else {
                                        hess[nz[0] * m + nz[1]][c] = cf / s;
                                        hess[nz[1] * m + nz[0]][c] = cf / s;
                                    }
                                }
                                _ => {}
                            }
                        }
                    }
                    return Some(LocalFit { value, grad, hess });
                }
            }
            radius *= 1.5;
        }
        None
    }
}

fn rotate_frame_by_slope(frame: &EuclideanIsometry, grad: &DMatrix<f64>) -> EuclideanIsometry {
    // new tangent vectors (e_a, ∂_a u) mapped back to ambient coordinates
    let (k, m) = grad.shape();
    let n = m + k;
    let mut t = Vec::with_capacity(m);
    for a in 0..m {
        let mut v = DVector::zeros(n);
        v[a] = 1.0;
        for c in 0..k {
            v[m + c] = grad[(c, a)];
        }
        t.push(&frame.rotation * v);
    }
    let mut ortho: Vec<DVector<f64>> = Vec::new();
    for v in t {
        let mut v = v;
        for b in &ortho {
            let c = b.dot(&v);
            v -= b * c;
        }
        ortho.push(v.normalize());
    }
    // complete using the old normal directions to keep orientation continuous
    let mut basis = ortho.clone();
    for c in 0..k {
        let mut v = frame.rotation.column(m + c).into_owned();
        for b in &basis {
            let d = b.dot(&v);
            v -= b * d;
        }
        basis.push(v.normalize());
    }
    let mut r = DMatrix::from_columns(&basis);
    if r.determinant() < 0.0 {
        let col = -r.column(n - 1).into_owned();
        r.set_column(n - 1, &col);
    }
    EuclideanIsometry { rotation: r, translation: frame.translation.clone() }
}

/// Tangent frame refined so that the fitted local graph has zero slope at the origin.
pub fn refined_frame(imm: &SampledImmersion, q: usize) -> Result<EuclideanIsometry> {
    let mut frame = tangent_frame_at(imm, q)?;
    let verts = {
        let mut v = ring(imm, q, 4);
        v.push(q);
        v
    };
    let ell = imm.mean_edge_at(q).max(1e-12);
    for _ in 0..4 {
        let cd = ChartData::new(imm, &frame, &verts, ell);
        let Some(fit) = cd.fit(&vec![0.0; imm.m]) else { break };
        if col_norm(&fit.grad) < 1e-13 {
            break;
        }
        frame = rotate_frame_by_slope(&frame, &fit.grad);
    }
    Ok(frame)
}

/// Result of the combinatorial part of a graph certification.
#[derive(Debug, Clone)]
pub struct Region {
    /// Vertices of the q-component (chart projection inside `B_r`).
    pub inner: Vec<usize>,
    /// Simplices meeting the q-component.
    pub simplices: Vec<usize>,
    /// Vertices of those simplices (closed star of the component).
    pub closure: Vec<usize>,
}

/// Breadth-first growth of the q-component of the chart preimage of `B_r`.
pub fn grow_region(imm: &SampledImmersion, frame: &EuclideanIsometry, q: usize, r: f64) -> Region {
    let nv = imm.num_vertices();
    let mut seen = vec![false; nv];
    let mut inner = Vec::new();
    let mut queue = VecDeque::new();
    seen[q] = true;
    queue.push_back(q);
    while let Some(v) = queue.pop_front() {
        inner.push(v);
        for &w in imm.neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                let (x, _) = chart_coords(imm, frame, w);
                if norm(&x) < r {
                    queue.push_back(w);
                }
            }
        }
    }
    inner.sort_unstable();
    let mut simplices: Vec<usize> = inner.iter().flat_map(|&v| imm.simplices_of(v).iter().copied()).collect();
    simplices.sort_unstable();
    simplices.dedup();
    let mut closure: Vec<usize> = simplices.iter().flat_map(|&s| imm.simplex(s).iter().copied()).collect();
    closure.extend(&inner);
    closure.sort_unstable();
    closure.dedup();
    Region { inner, simplices, closure }
}

fn signed_volume(pts: &[&[f64]]) -> f64 {
    let m = pts.len() - 1;
    let mat = DMatrix::from_fn(m, m, |i, j| pts[i + 1][j] - pts[0][j]);
    mat.determinant()
}

/// Projected simplices of a region with a spatial index, used for point location.
#[derive(Debug, Clone)]
struct ProjectedMesh {
    m: usize,
    simplices: Vec<usize>,
    corners: Vec<Vec<Vec<f64>>>,
    verticals: Vec<Vec<Vec<f64>>>,
    inverse: Vec<Option<DMatrix<f64>>>,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
    cell: f64,
}

impl ProjectedMesh {
    fn new(imm: &SampledImmersion, frame: &EuclideanIsometry, simplices: &[usize], cell: f64) -> Self {
        let m = imm.m;
        let mut coords: HashMap<usize, (Vec<f64>, Vec<f64>)> = HashMap::new();
        let mut corners = Vec::new();
        let mut verticals = Vec::new();
        let mut inverse = Vec::new();
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, &s) in simplices.iter().enumerate() {
            let mut c = Vec::new();
            let mut w = Vec::new();
            for &v in imm.simplex(s) {
                let e = coords.entry(v).or_insert_with(|| chart_coords(imm, frame, v));
                c.push(e.0.clone());
                w.push(e.1.clone());
            }
            let e = DMatrix::from_fn(m, m, |a, b| c[b + 1][a] - c[0][a]);
            inverse.push(e.try_inverse());
            let lo: Vec<i64> = (0..m).map(|a| (c.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min) / cell).floor() as i64).collect();
            let hi: Vec<i64> = (0..m).map(|a| (c.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max) / cell).floor() as i64).collect();
            let span: Vec<i64> = (0..m).map(|a| hi[a] - lo[a] + 1).collect();
            let total: i64 = span.iter().product();
            if total < 10_000 {
                for flat in 0..total {
                    let mut rem = flat;
                    let mut kk = lo.clone();
                    for a in 0..m {
                        kk[a] += rem % span[a];
                        rem /= span[a];
                    }
                    buckets.entry(kk).or_default().push(i);
                }
            }
            corners.push(c);
            verticals.push(w);
        }
        ProjectedMesh { m, simplices: simplices.to_vec(), corners, verticals, inverse, buckets, cell }
    }

    /// Barycentric coordinates of `x` in projected simplex `i`.
    fn bary(&self, i: usize, x: &[f64]) -> Option<Vec<f64>> {
        let inv = self.inverse[i].as_ref()?;
        let d = DVector::from_iterator(self.m, x.iter().zip(&self.corners[i][0]).map(|(a, b)| a - b));
        let l = inv * d;
        let mut out = Vec::with_capacity(self.m + 1);
        out.push(1.0 - l.sum());
        out.extend(l.iter());
        Some(out)
    }

    /// All projected simplices containing `x` (within a relative tolerance).
    fn containing(&self, x: &[f64], eps: f64) -> Vec<(usize, Vec<f64>)> {
        let k = key(x, self.cell);
        let mut out = Vec::new();
        if let Some(list) = self.buckets.get(&k) {
            for &i in list {
                if let Some(b) = self.bary(i, x) {
                    if b.iter().all(|&t| t >= -eps) {
                        out.push((i, b));
                    }
                }
            }
        }
        out
    }

    fn vertical_at(&self, i: usize, b: &[f64]) -> Vec<f64> {
        let k = self.verticals[i][0].len();
        let mut w = vec![0.0; k];
        for (bi, wi) in b.iter().zip(&self.verticals[i]) {
            for c in 0..k {
                w[c] += bi * wi[c];
            }
        }
        w
    }
}

/// Fold test: adjacent projected simplices must lie on opposite sides of their shared face,
/// and no projected simplex may be degenerate.
fn detect_fold(imm: &SampledImmersion, frame: &EuclideanIsometry, simplices: &[usize]) -> bool {
    let m = imm.m;
    let mut coords: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut get = |v: usize| -> Vec<f64> { coords.entry(v).or_insert_with(|| chart_coords(imm, frame, v).0).clone() };
    let mut faces: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for &s in simplices {
        let sv = imm.simplex(s).to_vec();
        let pts: Vec<Vec<f64>> = sv.iter().map(|&v| get(v)).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let scale: f64 = (1..=m).map(|i| dist(refs[i], refs[0])).fold(0.0, f64::max);
        if signed_volume(&refs).abs() <= 1e-9 * scale.powi(m as i32) {
            return true;
        }
        for skip in 0..=m {
            let mut f: Vec<usize> = sv.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &v)| v).collect();
            f.sort_unstable();
            faces.entry(f).or_default().push(sv[skip]);
        }
    }
    for (f, opp) in &faces {
        if opp.len() != 2 {
            continue;
        }
        let fp: Vec<Vec<f64>> = f.iter().map(|&v| get(v)).collect();
        let side = |o: usize, get: &mut dyn FnMut(usize) -> Vec<f64>| {
            let p = get(o);
            let mut pts: Vec<&[f64]> = fp.iter().map(|x| x.as_slice()).collect();
            pts.push(&p);
            signed_volume(&pts)
        };
        let a = side(opp[0], &mut get);
        let b = side(opp[1], &mut get);
        if a * b >= 0.0 {
            return true;
        }
    }
    false
}

/// Largest column norm of the piecewise-linear slope over the region's simplices.
fn max_slope(imm: &SampledImmersion, frame: &EuclideanIsometry, simplices: &[usize]) -> f64 {
    let m = imm.m;
    let k = imm.n - m;
    simplices
        .iter()
        .map(|&s| {
            let cw: Vec<(Vec<f64>, Vec<f64>)> = imm.simplex(s).iter().map(|&v| chart_coords(imm, frame, v)).collect();
            let e = DMatrix::from_fn(m, m, |i, a| cw[i + 1].0[a] - cw[0].0[a]);
            let dw = DMatrix::from_fn(m, k, |i, c| cw[i + 1].1[c] - cw[0].1[c]);
            match e.try_inverse() {
                Some(inv) => col_norm(&(inv * dw)),
                None => f64::INFINITY,
            }
        })
        .fold(0.0, f64::max)
}

/// Combinatorial graph test over `B_r` in the given frame.
pub fn certify(imm: &SampledImmersion, frame: &EuclideanIsometry, q: usize, r: f64, alpha: f64) -> std::result::Result<Region, GraphFailure> {
    let region = grow_region(imm, frame, q, r);
    if detect_fold(imm, frame, &region.simplices) {
        return Err(GraphFailure::Fold);
    }
    if region.inner.iter().any(|&v| imm.is_boundary(v)) {
        return Err(GraphFailure::Incomplete);
    }
    if max_slope(imm, frame, &region.simplices) > alpha {
        return Err(GraphFailure::Slope);
    }
    Ok(region)
}

/// Local graph representation: frame, centered patch on `B_r`, and the vertex set `U_{r,q}`.
#[derive(Debug, Clone)]
pub struct LocalGraph {
    pub frame: EuclideanIsometry,
    pub patch: GraphPatch,
    pub region: Region,
}

/// Grid spacing used when resampling a region: half the shortest edge.
pub fn default_spacing(imm: &SampledImmersion, verts: &[usize]) -> f64 {
    verts.iter().map(|&v| imm.min_edge_at(v)).fold(f64::INFINITY, f64::min) / 2.0
}

/// Resamples the region onto a grid, returning values and a validity mask.
fn resample(
    imm: &SampledImmersion,
    frame: &EuclideanIsometry,
    region: &Region,
    grid: &GridBall,
) -> (Vec<f64>, Vec<bool>, bool, ProjectedMesh) {
    let m = imm.m;
    let k = imm.n - m;
    let ell = region.closure.iter().map(|&v| imm.mean_edge_at(v)).sum::<f64>() / region.closure.len().max(1) as f64;
    let cd = ChartData::new(imm, frame, &region.closure, ell);
    let pm = ProjectedMesh::new(imm, frame, &region.simplices, 2.0 * ell);
    let results: Vec<(Vec<f64>, bool, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let x = grid.point_vec(node);
            let hits = pm.containing(&x, 1e-9);
            if hits.is_empty() {
                return (vec![0.0; k], false, false);
            }
            // vertical line test: every containing simplex must give the same height
            let w0 = pm.vertical_at(hits[0].0, &hits[0].1);
            let folded = hits.iter().any(|(i, b)| dist(&pm.vertical_at(*i, b), &w0) > 1e-6 * ell.max(1e-12) + 1e-12);
            match cd.fit(&x) {
                Some(f) => (f.value, true, folded),
                None => (w0, true, folded),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len() * k);
    let mut mask = Vec::with_capacity(grid.len());
    let mut fold = false;
    for (v, ok, f) in results {
        values.extend(v);
        mask.push(ok);
        fold |= f;
    }
    (values, mask, fold, pm)
}

#[derive(Debug, Clone, Copy)]
pub struct GraphOptions {
    /// Fixed grid spacing; `None` uses half the shortest edge in the region.
    pub h: Option<f64>,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions { h: None }
    }
}

/// `U_{r,q}` as a centered graph patch over `B_r`, or the failure kind.
pub fn local_graph(imm: &SampledImmersion, q: usize, r: f64, alpha: f64, opts: GraphOptions) -> Result<LocalGraph> {
    let fail = |kind| GeomError::Certification { vertex: q, kind };
    let mut frame = refined_frame(imm, q)?;
    for attempt in 0..3 {
        let region = certify(imm, &frame, q, r, alpha).map_err(fail)?;
        let h = opts.h.unwrap_or_else(|| default_spacing(imm, &region.inner));
        let h = if h < r / 2.0 { h } else { r / 2.0 };
        let grid = GridBall::new(imm.m, r, h)?;
        let (mut values, mask, folded, _) = resample(imm, &frame, &region, &grid);
        if folded {
            return Err(fail(GraphFailure::Fold));
        }
        if mask.iter().any(|&b| !b) {
            return Err(fail(GraphFailure::Incomplete));
        }
        let k = imm.n - imm.m;
        let o = grid.origin();
        let u0: Vec<f64> = values[o * k..(o + 1) * k].to_vec();
        for node in 0..grid.len() {
            for c in 0..k {
                values[node * k + c] -= u0[c];
            }
        }
        let patch = GraphPatch::new(grid, k, values, false)?;
        let d = patch.differentiate()?;
        let du0 = d.du_at(patch.grid.origin());
        if col_norm(&du0) <= TOL_CENTER || attempt == 2 {
            let mut patch = patch;
            patch.centered = col_norm(&du0) <= TOL_CENTER;
            return Ok(LocalGraph { frame, patch, region });
        }
        frame = rotate_frame_by_slope(&frame, &du0);
    }
    unreachable!()
}

/// Graph of the q-component through `anchor` over `B_r` in a prescribed frame.
/// Nodes outside the projected component are masked out.
#[derive(Debug, Clone)]
pub struct PartialGraph {
    pub grid: GridBall,
    pub k: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub region: Region,
    pub fold: bool,
    pub max_slope: f64,
    located: ProjectedMesh,
}

impl PartialGraph {
    pub fn eval(&self, x: &[f64]) -> Option<Vec<f64>> {
        let w = self.grid.interp_weights(x, Some(&self.valid))?;
        Some(crate::grid::apply_weights(&w, &self.values, self.k))
    }

    /// Gradient (k×m) by differentiating the interpolant with central differences.
    pub fn eval_grad(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let m = self.grid.m;
        let eps = self.grid.h * 1e-2;
        let mut g = DMatrix::zeros(self.k, m);
        for a in 0..m {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[a] += eps;
            xm[a] -= eps;
            let p = self.eval(&xp)?;
            let q = self.eval(&xm)?;
            for c in 0..self.k {
                g[(c, a)] = (p[c] - q[c]) / (2.0 * eps);
            }
        }
        Some(g)
    }

    /// Target simplex and barycentric coordinates above a chart point.
    pub fn locate(&self, x: &[f64]) -> Option<(usize, Vec<f64>)> {
        let hits = self.located.containing(x, 1e-9);
        hits.into_iter().next().map(|(i, b)| (self.located.simplices[i], b))
    }

    pub fn full_patch(&self) -> Option<GraphPatch> {
        if self.valid.iter().all(|&b| b) {
            GraphPatch::new(self.grid.clone(), self.k, self.values.clone(), false).ok()
        } else {
            None
        }
    }
}

pub fn graph_in_frame(imm: &SampledImmersion, frame: &EuclideanIsometry, anchor: usize, r: f64, h: f64) -> Result<PartialGraph> {
    let region = grow_region(imm, frame, anchor, r);
    let fold = detect_fold(imm, frame, &region.simplices);
    let slope = max_slope(imm, frame, &region.simplices);
    let grid = GridBall::new(imm.m, r, h)?;
    let (values, valid, folded, located) = resample(imm, frame, &region, &grid);
    Ok(PartialGraph { grid, k: imm.n - imm.m, values, valid, region, fold: fold || folded, max_slope: slope, located })
}

/// Largest certified radius at `q`, by bisection to resolution `h_bisect`.
pub fn max_graph_radius(imm: &SampledImmersion, q: usize, alpha: f64, h_bisect: f64) -> Result<f64> {
    let frame = refined_frame(imm, q)?;
    let p0 = imm.pos(q);
    let extent = (0..imm.num_vertices()).map(|v| dist(imm.pos(v), p0)).fold(0.0, f64::max);
    let ok = |r: f64| certify(imm, &frame, q, r, alpha).is_ok();
    let mut lo: f64 = 0.0;
    let mut hi = extent * 1.01 + h_bisect;
    if ok(hi) {
        return Ok(hi);
    }
    let edge = imm.min_edge_at(q);
    if !ok(edge.min(hi / 2.0)) {
        return Ok(0.0);
    }
    lo = lo.max(edge.min(hi / 2.0));
    while hi - lo > h_bisect {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `r = (c α / ‖A‖_{L^p})^{p/(p-m)}`; `+∞` when `‖A‖_{L^p} = 0`.
pub fn radius_bound(m: usize, p_exp: f64, alpha: f64, a_lp: f64, c: f64) -> Result<f64> {
    if !(p_exp > m as f64) {
        return Err(GeomError::ExponentTooSmall { p: p_exp, m });
    }
    if !(alpha > 0.0 && alpha <= 1.0) || !(c > 0.0) || !(a_lp >= 0.0) {
        return Err(GeomError::InvalidArgument(format!("radius_bound needs 0<α≤1, c>0, A≥0 (α={alpha}, c={c}, A={a_lp})")));
    }
    if a_lp == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((c * alpha / a_lp).powf(p_exp / (p_exp - m as f64)))
}

/// One calibration sample: measured radius and curvature integral.
#[derive(Debug, Clone, Copy)]
pub struct RadiusSample {
    pub m: usize,
    pub p_exp: f64,
    pub alpha: f64,
    pub a_lp: f64,
    pub measured: f64,
}

/// Largest `c` for which `radius_bound` stays below every measured radius.
pub fn calibrate_c(samples: &[RadiusSample]) -> f64 {
    samples
        .iter()
        .map(|s| s.a_lp * s.measured.powf((s.p_exp - s.m as f64) / s.p_exp) / s.alpha)
        .fold(f64::INFINITY, f64::min)
        * (1.0 - 1e-9)
}

/// `‖A‖` at a vertex from a cubic fit in the refined frame.
pub fn vertex_curvature(imm: &SampledImmersion, q: usize) -> Result<f64> {
    let frame = refined_frame(imm, q)?;
    // one-sided rings at mesh boundaries need more depth
    let mut fit = None;
    for depth in [4, 6, 8] {
        let mut verts = ring(imm, q, depth);
        verts.push(q);
        let cd = ChartData::new(imm, &frame, &verts, imm.mean_edge_at(q));
        fit = cd.fit(&vec![0.0; imm.m]);
        if fit.is_some() {
            break;
        }
    }
    let fit = fit.ok_or(GeomError::RankDeficient(q))?;
    let m = imm.m;
    let g = node_geometry(&fit.grad, &|i, j| fit.hess[i * m + j].clone())?;
    Ok(g.a_norm)
}

/// `‖A‖_{L^p}` of the whole immersion from vertex curvatures and dual volumes.
pub fn immersion_a_lp(imm: &SampledImmersion, p_exp: f64) -> Result<f64> {
    let vals: Result<Vec<f64>> = (0..imm.num_vertices())
        .into_par_iter()
        .map(|v| Ok(vertex_curvature(imm, v)?.powf(p_exp) * imm.vertex_volume(v)))
        .collect();
    Ok(vals?.iter().sum::<f64>().powf(1.0 / p_exp))
}

/// Decreasing radius sequence with slope bound.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusSequence {
    pub values: Vec<f64>,
    pub alpha: f64,
}

impl RadiusSequence {
    pub fn new(values: Vec<f64>, alpha: f64) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
            return Err(GeomError::InvalidArgument("radii must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(GeomError::InvalidArgument("radius sequence must be non-increasing".into()));
        }
        Ok(RadiusSequence { values, alpha })
    }

    /// Geometric sequence `r_1 ratio^(j-1)`.
    pub fn geometric(r1: f64, ratio: f64, len: usize, alpha: f64) -> Result<Self> {
        RadiusSequence::new((0..len).map(|j| r1 * ratio.powi(j as i32)).collect(), alpha)
    }

    /// `r_j` for `j >= 1`, clamped to the last stored value.
    pub fn r(&self, j: usize) -> f64 {
        self.values[(j.max(1) - 1).min(self.values.len() - 1)]
    }

    /// Checks `r_1 <= 3/8` and the slope constraints for net and projection use.
    pub fn check_noncompact(&self, k: usize, projecting: bool) -> Result<()> {
        if self.values[0] > 0.375 {
            return Err(GeomError::Config(format!("r_1 = {} exceeds 3/8", self.values[0])));
        }
        if !(self.alpha * self.alpha < 1.0 / 3.0) {
            return Err(GeomError::Config(format!("alpha^2 = {} not below 1/3", self.alpha * self.alpha)));
        }
        if projecting && self.alpha > 1.0 / (4.0 * (k as f64).sqrt()) + 1e-15 {
            return Err(GeomError::Config(format!("alpha = {} exceeds 1/(4 sqrt k)", self.alpha)));
        }
        Ok(())
    }
}

/// Ambient target set for open-target exhaustions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaSpec {
    Whole,
    /// Complement of the closed solid cylinder `x_0^2 + x_1^2 <= radius^2`.
    OutsideCylinder { radius: f64 },
}

impl OmegaSpec {
    pub fn dist_to_boundary(&self, x: &[f64]) -> f64 {
        match self {
            OmegaSpec::Whole => f64::INFINITY,
            OmegaSpec::OutsideCylinder { radius } => (x[0] * x[0] + x[1] * x[1]).sqrt() - radius,
        }
    }
}

/// Exhaustion by balls `B_{j·scale}(0)` or by `V^j = B_{j·scale}(0) ∩ Ω_{1/j}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exhaustion {
    pub scale: f64,
    pub omega: OmegaSpec,
}

impl Exhaustion {
    pub fn balls(scale: f64) -> Self {
        Exhaustion { scale, omega: OmegaSpec::Whole }
    }

    pub fn contains(&self, j: usize, x: &[f64]) -> bool {
        j >= 1 && norm(x) < j as f64 * self.scale && self.omega.dist_to_boundary(x) > 1.0 / j as f64
    }

    /// Smallest `j` with `x ∈ V^j`, `None` outside `Ω`.
    pub fn level(&self, x: &[f64]) -> Option<usize> {
        let d = self.omega.dist_to_boundary(x);
        if !(d > 0.0) {
            return None;
        }
        let jb = (norm(x) / self.scale).floor() as usize + 1;
        let jo = if d.is_finite() { (1.0 / d).floor() as usize + 1 } else { 1 };
        let mut j = jb.max(jo);
        while !self.contains(j, x) {
            j += 1;
        }
        Some(j)
    }
}

/// δ-net with optional subdivision and intersection sets.
#[derive(Debug, Clone)]
pub struct NetResult {
    pub points: Vec<usize>,
    /// Cover radius used for each point.
    pub net_delta: Vec<f64>,
    /// Radius defining `Z` for each point.
    pub z_delta: Vec<f64>,
    /// Certification radius for each point.
    pub r: Vec<f64>,
    pub frames: Vec<EuclideanIsometry>,
    /// `U_{z_delta, q_j}` (closed stars).
    pub regions: Vec<Vec<usize>>,
    pub z: Vec<Vec<usize>>,
    /// `Z̃` from the inner sets at radius `z_delta/5`.
    pub z_tilde: Vec<Vec<usize>>,
    /// `ν_0 = 0, ν_1, …` when subdivided.
    pub subdivision: Option<Vec<usize>>,
    /// A-priori recursion values for `ν`.
    pub nu_ceiling: Option<Vec<usize>>,
}

impl NetResult {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Every vertex in `verts` lies in some stored region.
    pub fn covers(&self, nv: usize, verts: impl Iterator<Item = usize>) -> bool {
        let mut hit = vec![false; nv];
        for r in &self.regions {
            for &v in r {
                hit[v] = true;
            }
        }
        verts.into_iter().all(|v| hit[v])
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("net points={}\n", self.points.len());
        for j in 0..self.points.len() {
            let z: Vec<String> = self.z[j].iter().map(|x| x.to_string()).collect();
            s.push_str(&format!(
                "point j={} vertex={} delta={:?} z_delta={:?} r={:?} Z={}\n",
                j,
                self.points[j],
                self.net_delta[j],
                self.z_delta[j],
                self.r[j],
                z.join(",")
            ));
        }
        if let Some(nu) = &self.subdivision {
            let v: Vec<String> = nu.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!("nu={}\n", v.join(",")));
        }
        s
    }
}

/// `Z(j) = {k : U_j ∩ U_k ≠ ∅}` from stored vertex sets.
pub fn intersection_sets(regions: &[Vec<usize>], nv: usize) -> Vec<Vec<usize>> {
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (j, r) in regions.iter().enumerate() {
        for &v in r {
            owners[v].push(j);
        }
    }
    let mut z: Vec<Vec<usize>> = vec![Vec::new(); regions.len()];
    for list in &owners {
        for &a in list {
            z[a].extend_from_slice(list);
        }
    }
    for zj in &mut z {
        zj.sort_unstable();
        zj.dedup();
    }
    z
}

/// Closed-star vertex set of `U_{ρ,q}` under the given frame.
pub fn neighbourhood(imm: &SampledImmersion, frame: &EuclideanIsometry, q: usize, rho: f64) -> Vec<usize> {
    grow_region(imm, frame, q, rho).closure
}

fn finish_net(imm: &SampledImmersion, mut net: NetResult) -> NetResult {
    let nv = imm.num_vertices();
    let (regions, tilde): (Vec<Vec<usize>>, Vec<Vec<usize>>) = (0..net.points.len())
        .into_par_iter()
        .map(|j| {
            let q = net.points[j];
            let f = &net.frames[j];
            (neighbourhood(imm, f, q, net.z_delta[j]), grow_region(imm, f, q, net.z_delta[j] / 5.0).inner)
        })
        .unzip();
    net.z = intersection_sets(&regions, nv);
    net.z_tilde = intersection_sets(&tilde, nv);
    net.regions = regions;
    net
}

/// Greedy δ-net (lowest uncovered vertex index first) with each point certified at `(r, α)`.
/// `z_delta` is the radius defining the intersection sets.
pub fn delta_net(imm: &SampledImmersion, delta: f64, z_delta: f64, r: f64, alpha: f64) -> Result<NetResult> {
    if !(delta > 0.0 && delta < r) {
        return Err(GeomError::InvalidArgument(format!("need 0 < δ < r (δ={delta}, r={r})")));
    }
    let nv = imm.num_vertices();
    let mut covered = vec![false; nv];
    let mut points = Vec::new();
    let mut frames = Vec::new();
    for v in 0..nv {
        if covered[v] {
            continue;
        }
        let frame = refined_frame(imm, v)?;
        certify(imm, &frame, v, r, alpha).map_err(|kind| GeomError::Certification { vertex: v, kind })?;
        for w in grow_region(imm, &frame, v, delta).inner {
            covered[w] = true;
        }
        points.push(v);
        frames.push(frame);
    }
    let s = points.len();
    let net = NetResult {
        points,
        net_delta: vec![delta; s],
        z_delta: vec![z_delta; s],
        r: vec![r; s],
        frames,
        regions: Vec::new(),
        z: Vec::new(),
        z_tilde: Vec::new(),
        subdivision: None,
        nu_ceiling: None,
    };
    Ok(finish_net(imm, net))
}

/// `⌊(4/δ)^m · vol⌋`.
pub fn net_size_bound(m: usize, delta: f64, vol: f64) -> usize {
    ((4.0 / delta).powi(m as i32) * vol).floor() as usize
}

/// Parameters of a subdivided net.
pub struct SubdividedParams<'a> {
    pub radii: &'a RadiusSequence,
    /// Cover radius per level `j = 1..=levels`.
    pub net_delta: Vec<f64>,
    /// Intersection-set radius per level.
    pub z_delta: Vec<f64>,
    pub levels: usize,
    pub exhaustion: Exhaustion,
    /// `C(R)` bounding the mass in `B_R`.
    pub mass_bound: &'a dyn Fn(f64) -> f64,
}

/// Per-annulus greedy nets over `V^j \ V^{j-1}`, `j = 1..=levels`.
pub fn delta_net_subdivided(imm: &SampledImmersion, p: &SubdividedParams) -> Result<NetResult> {
    let nv = imm.num_vertices();
    let mut level = vec![0usize; nv];
    for (v, lv) in level.iter_mut().enumerate() {
        *lv = p.exhaustion.level(imm.pos(v)).ok_or(GeomError::NotProper(v))?;
    }
    let mut covered = vec![false; nv];
    let mut points = Vec::new();
    let mut frames = Vec::new();
    let (mut nd, mut zd, mut rs) = (Vec::new(), Vec::new(), Vec::new());
    let mut nu = vec![0usize];
    let mut ceiling = vec![0usize];
    for j in 1..=p.levels {
        let delta = p.net_delta[j - 1];
        let r = p.radii.r(j);
        for v in 0..nv {
            if level[v] != j || covered[v] {
                continue;
            }
            let frame = refined_frame(imm, v)?;
            certify(imm, &frame, v, r, p.radii.alpha).map_err(|kind| GeomError::Certification { vertex: v, kind })?;
            for w in grow_region(imm, &frame, v, delta).inner {
                covered[w] = true;
            }
            points.push(v);
            frames.push(frame);
            nd.push(delta);
            zd.push(p.z_delta[j - 1]);
            rs.push(r);
        }
        nu.push(points.len());
        let c = (p.mass_bound)((j + 1) as f64 * p.exhaustion.scale);
        let last = *ceiling.last().unwrap();
        ceiling.push(last + net_size_bound(imm.m, delta, c));
    }
    let net = NetResult {
        points,
        net_delta: nd,
        z_delta: zd,
        r: rs,
        frames,
        regions: Vec::new(),
        z: Vec::new(),
        z_tilde: Vec::new(),
        subdivision: Some(nu),
        nu_ceiling: Some(ceiling),
    };
    Ok(finish_net(imm, net))
}

/// Annulus index of each net point (1-based), from the subdivision.
pub fn annulus_of(nu: &[usize], j: usize) -> usize {
    nu.iter().position(|&x| j < x).unwrap_or(nu.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{circle, icosphere, parametric_curve, spiral, square_graph};

    #[test]
    fn frame_of_plane() {
        let s = square_graph(1.0, 20, |_, _| 0.0).unwrap();
        let q = 220;
        let f = tangent_frame_at(&s, q).unwrap();
        assert!((f.rotation[(2, 2)].abs() - 1.0).abs() < 1e-12);
        for &w in s.neighbors(q) {
            let (_, v) = chart_coords(&s, &f, w);
            assert!(v[0].abs() < 1e-12);
        }
    }

    #[test]
    fn frame_of_circle() {
        let c = circle([0.0, 0.0], 1.0, 720).unwrap();
        let f = tangent_frame_at(&c, 0).unwrap();
        assert!(f.rotation[(0, 0)].abs() < 1e-3);
        assert!((f.rotation[(1, 0)].abs() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn frame_of_sphere() {
        let s = icosphere(1.0, 3).unwrap();
        for q in [0, 17, 300] {
            let f = tangent_frame_at(&s, q).unwrap();
            let p = s.pos(q);
            let dot: f64 = (0..3).map(|a| f.rotation[(a, 2)] * p[a]).sum();
            assert!((dot.abs() - 1.0).abs() < 2e-3, "vertex {q}: {dot}");
        }
    }

    #[test]
    fn flat_local_graph() {
        let s = square_graph(1.0, 20, |_, _| 0.0).unwrap();
        let g = local_graph(&s, 220, 0.5, 0.1, GraphOptions::default()).unwrap();
        assert!(g.patch.values.iter().all(|v| v.abs() < 1e-12));
        assert!(g.patch.centered);
    }

    #[test]
    fn circle_slope_threshold() {
        let c = circle([0.0, 0.0], 1.0, 720).unwrap();
        assert!(local_graph(&c, 0, 0.70, 1.0, GraphOptions::default()).is_ok());
        let e = local_graph(&c, 0, 0.72, 1.0, GraphOptions::default()).unwrap_err();
        assert_eq!(e, GeomError::Certification { vertex: 0, kind: GraphFailure::Slope });
    }

    #[test]
    fn circle_patch_curvature() {
        let c = circle([0.0, 0.0], 2.0, 1440).unwrap();
        let g = local_graph(&c, 5, 0.5, 1.0, GraphOptions::default()).unwrap();
        let (geom, _) = crate::patch::fundamental_forms(&g.patch).unwrap();
        let a0 = geom.nodes[g.patch.grid.origin()].a_norm;
        assert!((a0 - 0.5).abs() < 1e-3, "{a0}");
        assert!((vertex_curvature(&c, 5).unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn spiral_folds() {
        let s = spiral(0.05, 3.0, 720).unwrap();
        let q = 1080;
        let f = refined_frame(&s, q).unwrap();
        assert!(certify(&s, &f, q, 0.5, 1e3).is_ok());
        assert_eq!(certify(&s, &f, q, 1.2, 1e3).unwrap_err(), GraphFailure::Fold);
    }

    #[test]
    fn segment_end_is_incomplete() {
        let l = parametric_curve(|t| vec![t, 0.0], 0.0, 1.0, 101).unwrap();
        let f = refined_frame(&l, 5).unwrap();
        assert_eq!(certify(&l, &f, 5, 0.2, 0.5).unwrap_err(), GraphFailure::Incomplete);
        assert!(certify(&l, &f, 50, 0.2, 0.5).is_ok());
    }

    #[test]
    fn circle_max_radius() {
        let c = circle([0.0, 0.0], 1.0, 720).unwrap();
        let r = max_graph_radius(&c, 0, 1.0, 1e-3).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 0.01, "{r}");
        let c2 = circle([0.0, 0.0], 2.0, 1440).unwrap();
        let r2 = max_graph_radius(&c2, 0, 1.0, 1e-3).unwrap();
        assert!((r2 - 2.0 * r).abs() < 0.01, "{r2}");
    }

    #[test]
    fn plane_radius_is_extent() {
        let l = parametric_curve(|t| vec![t, 0.0], -1.0, 1.0, 201).unwrap();
        let r = max_graph_radius(&l, 100, 0.5, 1e-3).unwrap();
        assert!((r - 1.0).abs() < 0.02, "{r}");
    }

    #[test]
    fn radius_bound_examples() {
        assert_eq!(radius_bound(1, 2.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        let a = radius_bound(1, 2.0, 0.5, 1.0, 1.0).unwrap();
        let b = radius_bound(1, 2.0, 0.5, 2.0, 1.0).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
        let h = radius_bound(1, 2.0, 0.25, 1.0, 1.0).unwrap();
        assert!((h / a - 0.25).abs() < 1e-12);
        assert!(radius_bound(1, 1.0, 0.5, 1.0, 1.0).is_err());
        assert_eq!(radius_bound(2, 3.0, 0.5, 0.0, 1.0).unwrap(), f64::INFINITY);
    }

    /// Greedy cover of circle angles computed directly from arc geometry.
    fn arc_greedy(nseg: usize, delta: f64) -> usize {
        let ang = |v: usize| 2.0 * std::f64::consts::PI * v as f64 / nseg as f64;
        let mut covered = vec![false; nseg];
        let mut count = 0;
        for v in 0..nseg {
            if covered[v] {
                continue;
            }
            count += 1;
            for w in 0..nseg {
                let d = ang(w) - ang(v);
                if d.cos() > 0.0 && d.sin().abs() < delta {
                    covered[w] = true;
                }
            }
        }
        count
    }

    #[test]
    fn circle_net_matches_arc_oracle() {
        let c = circle([0.0, 0.0], 1.0, 700).unwrap();
        let net = delta_net(&c, 0.4, 0.4, 0.44, 0.5).unwrap();
        assert!(net.len() <= net_size_bound(1, 0.4, c.total_volume()));
        assert_eq!(net.len(), arc_greedy(700, 0.4));
        assert!(net.covers(700, 0..700));
    }

    #[test]
    fn circle_thirteen_point_net() {
        let c = circle([0.0, 0.0], 1.0, 700).unwrap();
        assert_eq!(arc_greedy(700, 0.45), 13);
        let net = delta_net(&c, 0.45, 0.45, 0.46, 0.55).unwrap();
        assert_eq!(net.len(), 13);
        for j in 0..13 {
            assert!(net.z[j].contains(&((j + 1) % 13)));
            assert!(net.z[j].contains(&((j + 12) % 13)));
            for &k in &net.z[j] {
                assert!(net.z[k].contains(&j));
            }
        }
    }

    #[test]
    fn two_circles_net() {
        let a = circle([0.0, 0.0], 1.0, 200).unwrap();
        let b = circle([5.0, 0.0], 1.0, 200).unwrap();
        let mut v = a.vertices().to_vec();
        v.extend_from_slice(b.vertices());
        let mut s: Vec<usize> = (0..200).flat_map(|i| [i, (i + 1) % 200]).collect();
        s.extend((0..200).flat_map(|i| [200 + i, 200 + (i + 1) % 200]));
        let m = SampledImmersion::new(1, 2, v, s).unwrap();
        let net = delta_net(&m, 0.3, 0.3, 0.4, 0.5).unwrap();
        assert!(net.points.iter().any(|&p| p < 200));
        assert!(net.points.iter().any(|&p| p >= 200));
        let first = net.points.iter().filter(|&&p| p < 200).count();
        for j in 0..first {
            assert!(net.z[j].iter().all(|&k| k < first));
        }
    }

    #[test]
    fn disjoint_sets_have_trivial_z() {
        let z = intersection_sets(&[vec![0, 1], vec![5, 6]], 10);
        assert_eq!(z, vec![vec![0], vec![1]]);
    }

    fn line() -> SampledImmersion {
        parametric_curve(|t| vec![t, 0.0], -6.0, 6.0, 1201).unwrap()
    }

    #[test]
    fn line_subdivision_symmetric() {
        let l = line();
        let radii = RadiusSequence::geometric(0.3, 1.0, 6, 0.5).unwrap();
        let p = SubdividedParams {
            radii: &radii,
            net_delta: vec![0.1; 4],
            z_delta: vec![0.2; 4],
            levels: 4,
            exhaustion: Exhaustion::balls(1.0),
            mass_bound: &|r| 2.0 * r,
        };
        let net = delta_net_subdivided(&l, &p).unwrap();
        let nu = net.subdivision.clone().unwrap();
        let counts: Vec<usize> = nu.windows(2).map(|w| w[1] - w[0]).collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
        let ceil = net.nu_ceiling.clone().unwrap();
        assert!(nu.iter().zip(&ceil).all(|(a, b)| a <= b));
        for (j, &q) in net.points.iter().enumerate() {
            let lv = annulus_of(&nu, j);
            assert_eq!(Exhaustion::balls(1.0).level(l.pos(q)), Some(lv));
        }
    }

    #[test]
    fn compact_subdivision_degenerate() {
        let c = circle([0.0, 0.0], 0.5, 300).unwrap();
        let radii = RadiusSequence::geometric(0.2, 1.0, 3, 0.5).unwrap();
        let p = SubdividedParams {
            radii: &radii,
            net_delta: vec![0.1; 3],
            z_delta: vec![0.1; 3],
            levels: 3,
            exhaustion: Exhaustion::balls(1.0),
            mass_bound: &|_| 4.0,
        };
        let net = delta_net_subdivided(&c, &p).unwrap();
        let s = net.len();
        assert_eq!(net.subdivision.unwrap(), vec![0, s, s, s]);
    }

    #[test]
    fn omega_levels() {
        let ex = Exhaustion { scale: 1.0, omega: OmegaSpec::OutsideCylinder { radius: 0.5 } };
        assert_eq!(ex.level(&[0.3, 0.0, 0.0]), None);
        assert_eq!(ex.level(&[1.0, 0.0, 0.0]), Some(3));
        assert_eq!(ex.level(&[2.5, 0.0, 0.0]), Some(3));
        assert_eq!(ex.level(&[3.5, 0.0, 0.0]), Some(4));
    }
}
