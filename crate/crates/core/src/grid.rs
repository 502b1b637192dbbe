//! Regular lattices restricted to an open ball, with difference stencils,
//! cell weights and local interpolation.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};

const MAX_LATTICE: usize = 20_000_000;

/// Lattice points `x = h·i` with `|x| < r`, ordered lexicographically (axis 0 slowest).
#[derive(Debug, Clone)]
pub struct GridBall {
    pub m: usize,
    pub r: f64,
    pub h: f64,
    half: i64,
    idx: Vec<i64>,
    lookup: Vec<u32>,
    weights: Vec<f64>,
    origin: usize,
}

impl PartialEq for GridBall {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.r.to_bits() == other.r.to_bits() && self.h.to_bits() == other.h.to_bits()
    }
}

impl GridBall {
    pub fn new(m: usize, r: f64, h: f64) -> Result<Self> {
        if m == 0 || m > 3 {
            return Err(GeomError::InvalidGrid(format!("domain dimension {m} unsupported")));
        }
        if !(h > 0.0) || !(r > 0.0) || !h.is_finite() || !r.is_finite() {
            return Err(GeomError::InvalidGrid(format!("need r>0, h>0 (r={r}, h={h})")));
        }
        if !(h < r) {
            return Err(GeomError::InvalidGrid(format!("fewer than 3 nodes per axis (r={r}, h={h})")));
        }
        let half = (r / h).ceil() as i64 + 1;
        let side = (2 * half + 1) as usize;
        let total = side.checked_pow(m as u32).unwrap_or(usize::MAX);
        if total > MAX_LATTICE {
            return Err(GeomError::InvalidGrid(format!("lattice too large ({total} cells)")));
        }
        let mut lookup = vec![u32::MAX; total];
        let mut idx = Vec::new();
        let mut count = 0usize;
        let mut cur = vec![-half; m];
        let r2 = r * r;
        loop {
            let d2: f64 = cur.iter().map(|&i| (i as f64 * h).powi(2)).sum();
            if d2 < r2 {
                let key = Self::key_of(half, side, &cur);
                lookup[key] = count as u32;
                idx.extend_from_slice(&cur);
                count += 1;
            }
            // odometer increment, last axis fastest
            let mut a = m;
            loop {
                if a == 0 {
                    break;
                }
                a -= 1;
                cur[a] += 1;
                if cur[a] <= half {
                    break;
                }
                cur[a] = -half;
                if a == 0 {
                    a = usize::MAX;
                    break;
                }
            }
            if a == usize::MAX {
                break;
            }
        }
        let origin = lookup[Self::key_of(half, side, &vec![0; m])] as usize;
        let mut g = GridBall { m, r, h, half, idx, lookup, weights: Vec::new(), origin };
        g.weights = g.compute_weights();
        Ok(g)
    }

    fn key_of(half: i64, side: usize, i: &[i64]) -> usize {
        let mut k = 0usize;
        for &v in i {
            k = k * side + (v + half) as usize;
        }
        k
    }

    pub fn len(&self) -> usize {
        self.idx.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn index(&self, node: usize) -> &[i64] {
        &self.idx[node * self.m..(node + 1) * self.m]
    }

    pub fn lookup(&self, i: &[i64]) -> Option<usize> {
        if i.iter().any(|&v| v.abs() > self.half) {
            return None;
        }
        let side = (2 * self.half + 1) as usize;
        let v = self.lookup[Self::key_of(self.half, side, i)];
        (v != u32::MAX).then_some(v as usize)
    }

    pub fn point(&self, node: usize) -> DVector<f64> {
        DVector::from_iterator(self.m, self.index(node).iter().map(|&i| i as f64 * self.h))
    }

    pub fn point_vec(&self, node: usize) -> Vec<f64> {
        self.index(node).iter().map(|&i| i as f64 * self.h).collect()
    }

    pub fn norm_of(&self, node: usize) -> f64 {
        self.index(node).iter().map(|&i| (i as f64 * self.h).powi(2)).sum::<f64>().sqrt()
    }

    /// Neighbour `step` lattice units away along `axis`.
    pub fn neighbor(&self, node: usize, axis: usize, step: i64) -> Option<usize> {
        let mut i = self.index(node).to_vec();
        i[axis] += step;
        self.lookup(&i)
    }

    /// Node misses at least one axis neighbour.
    pub fn is_boundary(&self, node: usize) -> bool {
        (0..self.m).any(|a| self.neighbor(node, a, 1).is_none() || self.neighbor(node, a, -1).is_none())
    }

    /// Quadrature weight of each node: `h^m` times the fraction of its cell inside the ball,
    /// estimated with `4^m` subsamples for cells meeting the sphere.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn coverage(&self, c: &[f64]) -> f64 {
        let subs = 4usize.pow(self.m as u32);
        let mut inside = 0usize;
        for s in 0..subs {
            let mut rem = s;
            let mut d2 = 0.0;
            for ca in c {
                let t = rem % 4;
                rem /= 4;
                let off = (-0.5 + (t as f64 + 0.5) / 4.0) * self.h;
                d2 += (ca + off).powi(2);
            }
            if d2 < self.r * self.r {
                inside += 1;
            }
        }
        inside as f64 / subs as f64
    }

    fn compute_weights(&self) -> Vec<f64> {
        let hm = self.h.powi(self.m as i32);
        let reach = 0.5 * self.h * (self.m as f64).sqrt();
        let mut w: Vec<f64> = (0..self.len())
            .map(|node| {
                let c = self.point_vec(node);
                let rad = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                if rad + reach < self.r {
                    hm
                } else {
                    hm * self.coverage(&c)
                }
            })
            .collect();
        // cells centred just outside the ball are lumped onto the nearest node
        let side = 2 * self.half + 1;
        let total = (side as usize).pow(self.m as u32);
        let mut ix = vec![0i64; self.m];
        for flat in 0..total {
            let mut rem = flat;
            for a in (0..self.m).rev() {
                ix[a] = (rem % side as usize) as i64 - self.half;
                rem /= side as usize;
            }
            let c: Vec<f64> = ix.iter().map(|&i| i as f64 * self.h).collect();
            let rad = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rad < self.r || rad - reach >= self.r || self.lookup(&ix).is_some() {
                continue;
            }
            let cov = self.coverage(&c);
            if cov == 0.0 {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            let span = 3i64.pow(self.m as u32);
            for o in 0..span {
                let mut rr = o;
                let mut jx = ix.clone();
                for a in 0..self.m {
                    jx[a] += (rr % 3) as i64 - 1;
                    rr /= 3;
                }
                if let Some(nd) = self.lookup(&jx) {
                    let d: f64 = jx.iter().zip(&ix).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
                    if best.map_or(true, |(bd, _)| d < bd) {
                        best = Some((d, nd));
                    }
                }
            }
            if let Some((_, nd)) = best {
                w[nd] += hm * cov;
            }
        }
        w
    }

    /// Tensor Lagrange interpolation weights at `x` (up to 4 nodes per axis).
    /// `valid` restricts which nodes may be used.
    pub fn interp_weights(&self, x: &[f64], valid: Option<&[bool]>) -> Option<Vec<(usize, f64)>> {
        let m = self.m;
        let mut options: Vec<Vec<Vec<i64>>> = Vec::with_capacity(m);
        for a in 0..m {
            let t = x[a] / self.h;
            if !t.is_finite() {
                return None;
            }
            let b = t.floor() as i64;
            let mut opts = vec![
                vec![b - 1, b, b + 1, b + 2],
                vec![b - 2, b - 1, b, b + 1],
                vec![b, b + 1, b + 2, b + 3],
                vec![b - 1, b, b + 1],
                vec![b, b + 1, b + 2],
                vec![b, b + 1],
            ];
            if (t - b as f64).abs() < 1e-12 {
                opts.push(vec![b]);
            }
            options.push(opts);
        }
        let nopt: Vec<usize> = options.iter().map(|o| o.len()).collect();
        let mut choice = vec![0usize; m];
        // prefer higher order: choices are enumerated in lexicographic order of option index
        loop {
            if let Some(w) = self.try_tensor(x, &options, &choice, valid) {
                return Some(w);
            }
            let mut a = m;
            loop {
                if a == 0 {
                    return None;
                }
                a -= 1;
                choice[a] += 1;
                if choice[a] < nopt[a] {
                    break;
                }
                choice[a] = 0;
                if a == 0 {
                    return None;
                }
            }
        }
    }

    /// Least-squares quadratic weights from nodes within `2.5h` of `x`; reaches past the rim
    /// where no tensor stencil fits.
    pub fn fit_weights(&self, x: &[f64]) -> Option<Vec<(usize, f64)>> {
        let reach = 2.5 * self.h;
        let near: Vec<usize> = (0..self.len())
            .filter(|&n| self.point_vec(n).iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= reach)
            .collect();
        let mons = monomials(self.m, 2);
        if near.len() < mons.len() + 2 {
            return None;
        }
        let v = DMatrix::from_fn(near.len(), mons.len(), |r, c| {
            let p = self.point_vec(near[r]);
            mons[c].iter().enumerate().map(|(a, &e)| ((p[a] - x[a]) / self.h).powi(e as i32)).product()
        });
        let svd = (v.transpose() * &v).svd(true, true);
        let s = &svd.singular_values;
        if s.min() <= 1e-10 * s.max() {
            return None;
        }
        let inv: DMatrix<f64> = svd.pseudo_inverse(0.0).ok()?;
        // constant coefficient: first monomial
        let row: DMatrix<f64> = inv.rows(0, 1) * v.transpose();
        Some(near.iter().zip(row.iter()).map(|(&n, &w)| (n, w)).collect())
    }

    fn try_tensor(
        &self,
        x: &[f64],
        options: &[Vec<Vec<i64>>],
        choice: &[usize],
        valid: Option<&[bool]>,
    ) -> Option<Vec<(usize, f64)>> {
        let m = self.m;
        let sets: Vec<&Vec<i64>> = (0..m).map(|a| &options[a][choice[a]]).collect();
        let basis: Vec<Vec<f64>> = (0..m)
            .map(|a| {
                let t = x[a] / self.h;
                let s = sets[a];
                s.iter()
                    .map(|&i| {
                        s.iter()
                            .filter(|&&j| j != i)
                            .map(|&j| (t - j as f64) / (i - j) as f64)
                            .product::<f64>()
                    })
                    .collect()
            })
            .collect();
        let total: usize = sets.iter().map(|s| s.len()).product();
        let mut out = Vec::with_capacity(total);
        let mut ix = vec![0i64; m];
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            for a in (0..m).rev() {
                let la = sets[a].len();
                let c = rem % la;
                rem /= la;
                ix[a] = sets[a][c];
                w *= basis[a][c];
            }
            let node = self.lookup(&ix)?;
            if let Some(v) = valid {
                if !v[node] {
                    return None;
                }
            }
            out.push((node, w));
        }
        Some(out)
    }
}

/// Applies interpolation weights to a node-major field with `comps` components.
pub fn apply_weights(w: &[(usize, f64)], field: &[f64], comps: usize) -> Vec<f64> {
    let mut out = vec![0.0; comps];
    for &(node, c) in w {
        for (o, v) in out.iter_mut().zip(&field[node * comps..(node + 1) * comps]) {
            *o += c * v;
        }
    }
    out
}

const D1_CENTRAL: (&[i64], &[f64]) = (&[-1, 1], &[-0.5, 0.5]);
const D1_FWD: (&[i64], &[f64]) = (&[0, 1, 2], &[-1.5, 2.0, -0.5]);
const D1_BWD: (&[i64], &[f64]) = (&[0, -1, -2], &[1.5, -2.0, 0.5]);
const D2_CENTRAL: (&[i64], &[f64]) = (&[-1, 0, 1], &[1.0, -2.0, 1.0]);
const D2_FWD: (&[i64], &[f64]) = (&[0, 1, 2, 3], &[2.0, -5.0, 4.0, -1.0]);
const D2_BWD: (&[i64], &[f64]) = (&[0, -1, -2, -3], &[2.0, -5.0, 4.0, -1.0]);

type Stencil = (&'static [i64], &'static [f64]);

/// Gradient and Hessian of every component of a node-major field.
/// Returns `(grad[node][c][a], hess[node][c][a][b])` flattened.
pub fn derivatives(grid: &GridBall, field: &[f64], comps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = grid.m;
    let n = grid.len();
    let h = grid.h;
    let mut grad = vec![0.0; n * comps * m];
    let mut hess = vec![0.0; n * comps * m * m];
    for node in 0..n {
        let base = grid.index(node).to_vec();
        let mut need_fit = false;
        'axes: for a in 0..m {
            for b in a..m {
                let ok = if a == b {
                    let s1 = pick_stencil(grid, &base, a, &[D1_CENTRAL, D1_FWD, D1_BWD]);
                    let s2 = pick_stencil(grid, &base, a, &[D2_CENTRAL, D2_FWD, D2_BWD]);
                    match (s1, s2) {
                        (Some(s1), Some(s2)) => {
                            for c in 0..comps {
                                let g = apply_1d(grid, &base, a, s1, field, comps, c) / h;
                                let d = apply_1d(grid, &base, a, s2, field, comps, c) / (h * h);
                                grad[(node * comps + c) * m + a] = g;
                                hess[((node * comps + c) * m + a) * m + a] = d;
                            }
                            true
                        }
                        _ => false,
                    }
                } else {
                    match pick_mixed(grid, &base, a, b) {
                        Some((sa, sb)) => {
                            for c in 0..comps {
                                let mut acc = 0.0;
                                for (oa, ca) in sa.0.iter().zip(sa.1) {
                                    for (ob, cb) in sb.0.iter().zip(sb.1) {
                                        let mut ix = base.clone();
                                        ix[a] += oa;
                                        ix[b] += ob;
                                        let nd = grid.lookup(&ix).unwrap();
                                        acc += ca * cb * field[nd * comps + c];
                                    }
                                }
                                let v = acc / (h * h);
                                hess[((node * comps + c) * m + a) * m + b] = v;
                                hess[((node * comps + c) * m + b) * m + a] = v;
                            }
                            true
                        }
                        None => false,
                    }
                };
                if !ok {
                    need_fit = true;
                    break 'axes;
                }
            }
        }
        if need_fit {
            let (g, hs) = poly_fit_derivatives(grid, node, field, comps)?;
            grad[node * comps * m..(node + 1) * comps * m].copy_from_slice(&g);
            hess[node * comps * m * m..(node + 1) * comps * m * m].copy_from_slice(&hs);
        }
    }
    Ok((grad, hess))
}

fn pick_stencil(grid: &GridBall, base: &[i64], axis: usize, opts: &[Stencil]) -> Option<Stencil> {
    opts.iter().copied().find(|s| {
        s.0.iter().all(|&o| {
            let mut ix = base.to_vec();
            ix[axis] += o;
            grid.lookup(&ix).is_some()
        })
    })
}

fn pick_mixed(grid: &GridBall, base: &[i64], a: usize, b: usize) -> Option<(Stencil, Stencil)> {
    let opts = [D1_CENTRAL, D1_FWD, D1_BWD];
    for sa in opts {
        for sb in opts {
            let ok = sa.0.iter().all(|&oa| {
                sb.0.iter().all(|&ob| {
                    let mut ix = base.to_vec();
                    ix[a] += oa;
                    ix[b] += ob;
                    grid.lookup(&ix).is_some()
                })
            });
            if ok {
                return Some((sa, sb));
            }
        }
    }
    None
}

fn apply_1d(grid: &GridBall, base: &[i64], axis: usize, s: Stencil, field: &[f64], comps: usize, c: usize) -> f64 {
    let mut acc = 0.0;
    let mut ix = base.to_vec();
    for (o, w) in s.0.iter().zip(s.1) {
        ix[axis] = base[axis] + o;
        let nd = grid.lookup(&ix).unwrap();
        acc += w * field[nd * comps + c];
    }
    acc
}

/// Monomial exponents of total degree <= `deg` in `m` variables.
pub fn monomials(m: usize, deg: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; m];
    fn rec(a: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if a == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[a] = e;
            rec(a + 1, left - e, cur, out);
        }
        cur[a] = 0;
    }
    rec(0, deg, &mut cur, &mut out);
    out.sort_by_key(|e| e.iter().sum::<usize>());
    out
}

/// Local least-squares polynomial fit (cubic, else quadratic) around a node.
fn poly_fit_derivatives(grid: &GridBall, node: usize, field: &[f64], comps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = grid.m;
    let base = grid.index(node).to_vec();
    for (deg, reach) in [(3usize, 3i64), (2, 3), (2, 4)] {
        let mons = monomials(m, deg);
        let mut pts: Vec<(Vec<f64>, usize)> = Vec::new();
        let side = 2 * reach + 1;
        let total = (side as usize).pow(m as u32);
        for flat in 0..total {
            let mut rem = flat;
            let mut ix = base.clone();
            let mut off = vec![0.0; m];
            for a in 0..m {
                let o = (rem % side as usize) as i64 - reach;
                rem /= side as usize;
                ix[a] += o;
                off[a] = o as f64;
            }
            if let Some(nd) = grid.lookup(&ix) {
                pts.push((off, nd));
            }
        }
        if pts.len() < mons.len() {
            continue;
        }
        let rows = pts.len();
        let mut v = DMatrix::<f64>::zeros(rows, mons.len());
        for (r, (off, _)) in pts.iter().enumerate() {
            for (c, e) in mons.iter().enumerate() {
                v[(r, c)] = e.iter().zip(off).map(|(&p, x)| x.powi(p as i32)).product();
            }
        }
        let svd = v.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-8 * smax) {
            continue;
        }
        let mut rhs = DMatrix::<f64>::zeros(rows, comps);
        for (r, (_, nd)) in pts.iter().enumerate() {
            for c in 0..comps {
                rhs[(r, c)] = field[nd * comps + c];
            }
        }
        let coef = svd.solve(&rhs, 1e-14).map_err(|_| GeomError::StencilTooSmall(node))?;
        let h = grid.h;
        let mut g = vec![0.0; comps * m];
        let mut hs = vec![0.0; comps * m * m];
        for (ci, e) in mons.iter().enumerate() {
            let d: usize = e.iter().sum();
            if d == 1 {
                let a = e.iter().position(|&p| p == 1).unwrap();
                for c in 0..comps {
                    g[c * m + a] = coef[(ci, c)] / h;
                }
            } else if d == 2 {
                let nz: Vec<usize> = (0..m).filter(|&a| e[a] > 0).collect();
                for c in 0..comps {
                    if nz.len() == 1 {
                        let a = nz[0];
                        hs[(c * m + a) * m + a] = 2.0 * coef[(ci, c)] / (h * h);
                    } else {
                        let (a, b) = (nz[0], nz[1]);
                        let val = coef[(ci, c)] / (h * h);
                        hs[(c * m + a) * m + b] = val;
                        hs[(c * m + b) * m + a] = val;
                    }
                }
            }
        }
        return Ok((g, hs));
    }
    Err(GeomError::StencilTooSmall(node))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_and_axis_counts() {
        let g = GridBall::new(2, 1.0, 0.25).unwrap();
        assert_eq!(g.point_vec(g.origin()), vec![0.0, 0.0]);
        assert!(GridBall::new(1, 1.0, 1.0).is_err());
        assert!(GridBall::new(1, 1.0, 0.0).is_err());
        let g1 = GridBall::new(1, 1.0, 0.5).unwrap();
        assert_eq!(g1.len(), 3);
    }

    #[test]
    fn weights_sum_to_ball_volume() {
        let g = GridBall::new(2, 1.0, 0.01).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - std::f64::consts::PI).abs() < 0.02, "{s}");
    }

    #[test]
    fn interpolation_exact_on_cubics() {
        let g = GridBall::new(2, 1.0, 0.1).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|i| {
                let p = g.point_vec(i);
                p[0].powi(3) - 2.0 * p[0] * p[1] + p[1] * p[1]
            })
            .collect();
        for x in [[0.13, -0.27], [0.9, 0.05], [-0.61, 0.7]] {
            let w = g.interp_weights(&x, None).unwrap();
            let v = apply_weights(&w, &f, 1)[0];
            let exact = x[0].powi(3) - 2.0 * x[0] * x[1] + x[1] * x[1];
            assert!((v - exact).abs() < 1e-12, "{v} {exact}");
        }
    }

    #[test]
    fn monomial_count() {
        assert_eq!(monomials(2, 3).len(), 10);
        assert_eq!(monomials(1, 3).len(), 4);
    }
}
