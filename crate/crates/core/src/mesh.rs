//! Simplicial meshes with vertex positions in `R^n`: the sampled input immersions.

use std::collections::HashMap;

use crate::error::{GeomError, Result};

/// Smallest admissible simplex volume.
pub const VOL_MIN: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct SampledImmersion {
    pub m: usize,
    pub n: usize,
    vertices: Vec<f64>,
    simplices: Vec<usize>,
    vert_simplices: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    boundary: Vec<bool>,
    volumes: Vec<f64>,
}

impl SampledImmersion {
    pub fn new(m: usize, n: usize, vertices: Vec<f64>, simplices: Vec<usize>) -> Result<Self> {
        if m == 0 || n <= m || n > crate::linalg::MAX_DIM {
            return Err(GeomError::InvalidMesh(format!("bad dimensions m={m}, n={n}")));
        }
        if vertices.len() % n != 0 || simplices.len() % (m + 1) != 0 {
            return Err(GeomError::InvalidMesh("array lengths not divisible by arity".into()));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let nv = vertices.len() / n;
        if let Some(&bad) = simplices.iter().find(|&&i| i >= nv) {
            return Err(GeomError::InvalidMesh(format!("vertex index {bad} out of range")));
        }
        let ns = simplices.len() / (m + 1);
        let mut vert_simplices = vec![Vec::new(); nv];
        let mut neighbors = vec![Vec::new(); nv];
        for s in 0..ns {
            let sv = &simplices[s * (m + 1)..(s + 1) * (m + 1)];
            for (a, &v) in sv.iter().enumerate() {
                vert_simplices[v].push(s);
                for (b, &w) in sv.iter().enumerate() {
                    if a != b {
                        neighbors[v].push(w);
                    }
                }
            }
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        let mut mesh = SampledImmersion {
            m,
            n,
            vertices,
            simplices,
            vert_simplices,
            neighbors,
            boundary: vec![false; nv],
            volumes: Vec::new(),
        };
        mesh.volumes = (0..ns).map(|s| mesh.compute_volume(s)).collect();
        if let Some((s, v)) = mesh.volumes.iter().enumerate().find(|(_, &v)| !(v >= VOL_MIN)) {
            return Err(GeomError::InvalidMesh(format!("simplex {s} has volume {v:e}")));
        }
        // (m-1)-faces: each in at most two simplices; faces in exactly one are boundary
        let mut faces: HashMap<Vec<usize>, usize> = HashMap::new();
        for s in 0..ns {
            let sv = mesh.simplex(s).to_vec();
            for skip in 0..=m {
                let mut f: Vec<usize> = sv.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &v)| v).collect();
                f.sort_unstable();
                *faces.entry(f).or_insert(0) += 1;
            }
        }
        for (f, c) in &faces {
            if *c > 2 {
                return Err(GeomError::InvalidMesh(format!("face {f:?} shared by {c} simplices")));
            }
            if *c == 1 {
                for &v in f {
                    mesh.boundary[v] = true;
                }
            }
        }
        for (v, s) in mesh.vert_simplices.iter().enumerate() {
            if s.is_empty() {
                mesh.boundary[v] = true;
            }
        }
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len() / self.n
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len() / (self.m + 1)
    }

    pub fn pos(&self, v: usize) -> &[f64] {
        &self.vertices[v * self.n..(v + 1) * self.n]
    }

    pub fn vertices(&self) -> &[f64] {
        &self.vertices
    }

    pub fn simplex(&self, s: usize) -> &[usize] {
        &self.simplices[s * (self.m + 1)..(s + 1) * (self.m + 1)]
    }

    pub fn simplices_of(&self, v: usize) -> &[usize] {
        &self.vert_simplices[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn simplex_volume(&self, s: usize) -> f64 {
        self.volumes[s]
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Barycentric dual volume of a vertex.
    pub fn vertex_volume(&self, v: usize) -> f64 {
        self.vert_simplices[v].iter().map(|&s| self.volumes[s]).sum::<f64>() / (self.m + 1) as f64
    }

    pub fn centroid(&self, s: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.n];
        for &v in self.simplex(s) {
            for (ci, x) in c.iter_mut().zip(self.pos(v)) {
                *ci += x;
            }
        }
        c.iter_mut().for_each(|x| *x /= (self.m + 1) as f64);
        c
    }

    /// Shortest edge incident to `v`.
    pub fn min_edge_at(&self, v: usize) -> f64 {
        self.neighbors[v].iter().map(|&w| dist(self.pos(v), self.pos(w))).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_edge_at(&self, v: usize) -> f64 {
        let nb = &self.neighbors[v];
        if nb.is_empty() {
            return 0.0;
        }
        nb.iter().map(|&w| dist(self.pos(v), self.pos(w))).sum::<f64>() / nb.len() as f64
    }

    pub fn max_edge_at(&self, v: usize) -> f64 {
        self.neighbors[v].iter().map(|&w| dist(self.pos(v), self.pos(w))).fold(0.0, f64::max)
    }

    fn compute_volume(&self, s: usize) -> f64 {
        let sv = self.simplex(s);
        let p0 = self.pos(sv[0]);
        let edges: Vec<Vec<f64>> = sv[1..]
            .iter()
            .map(|&v| self.pos(v).iter().zip(p0).map(|(a, b)| a - b).collect())
            .collect();
        let m = self.m;
        let gram = nalgebra::DMatrix::from_fn(m, m, |i, j| edges[i].iter().zip(&edges[j]).map(|(a, b)| a * b).sum::<f64>());
        let fact: f64 = (1..=m).map(|i| i as f64).product();
        gram.determinant().max(0.0).sqrt() / fact
    }

    /// Applies `x -> R x + T` to every vertex.
    pub fn transformed(&self, iso: &crate::linalg::EuclideanIsometry) -> Self {
        let mut out = self.clone();
        for v in 0..self.num_vertices() {
            let x = nalgebra::DVector::from_column_slice(self.pos(v));
            let y = iso.apply(&x);
            out.vertices[v * self.n..(v + 1) * self.n].copy_from_slice(y.as_slice());
        }
        out
    }

    /// Text format: `m n nv ns`, then `nv` vertex rows, then `ns` simplex rows.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {} {}\n", self.m, self.n, self.num_vertices(), self.num_simplices());
        for v in 0..self.num_vertices() {
            let row: Vec<String> = self.pos(v).iter().map(|x| format!("{x:?}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        for t in 0..self.num_simplices() {
            let row: Vec<String> = self.simplex(t).iter().map(|x| x.to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: &str| GeomError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (l0, header) = lines.next().ok_or_else(|| perr(1, "empty mesh file"))?;
        let h: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| perr(l0 + 1, "header must be four integers"))?;
        if h.len() != 4 {
            return Err(perr(l0 + 1, "header must be four integers"));
        }
        let (m, n, nv, ns) = (h[0], h[1], h[2], h[3]);
        let mut vertices = Vec::with_capacity(nv * n);
        for _ in 0..nv {
            let (li, l) = lines.next().ok_or_else(|| perr(0, "missing vertex line"))?;
            let row: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| perr(li + 1, "bad float"))?;
            if row.len() != n {
                return Err(perr(li + 1, "wrong vertex arity"));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(perr(li + 1, "non-finite coordinate"));
            }
            vertices.extend(row);
        }
        let mut simplices = Vec::with_capacity(ns * (m + 1));
        for _ in 0..ns {
            let (li, l) = lines.next().ok_or_else(|| perr(0, "missing simplex line"))?;
            let row: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| perr(li + 1, "bad index"))?;
            if row.len() != m + 1 {
                return Err(perr(li + 1, "wrong simplex arity"));
            }
            simplices.extend(row);
        }
        if let Some((li, _)) = lines.next() {
            return Err(perr(li + 1, "trailing data"));
        }
        SampledImmersion::new(m, n, vertices, simplices)
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> SampledImmersion {
        SampledImmersion::new(
            2,
            3,
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0],
            vec![0, 1, 2, 0, 2, 3],
        )
        .unwrap()
    }

    #[test]
    fn volumes_and_boundary() {
        let s = square();
        assert!((s.total_volume() - 1.0).abs() < 1e-15);
        assert!((0..4).all(|v| s.is_boundary(v)));
        assert_eq!(s.neighbors(0), &[1, 2, 3]);
    }

    #[test]
    fn text_round_trip() {
        let s = square();
        assert_eq!(SampledImmersion::from_text(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn strict_parse() {
        assert!(SampledImmersion::from_text("1 2 2 1\n0 0\nNaN 1\n0 1\n").is_err());
        assert!(SampledImmersion::from_text("1 2 2 1\n0 0\n1 1\n0 2\n").is_err());
        assert!(SampledImmersion::from_text("1 2 2 1\n0 0\n1 1\n0 1\n5\n").is_err());
        assert!(SampledImmersion::from_text("1 2 2 1\n0 0\n0 0\n0 1\n").is_err());
    }

    #[test]
    fn nonmanifold_rejected() {
        let e = SampledImmersion::new(1, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0], vec![0, 1, 0, 2, 0, 3]);
        assert!(e.is_err());
    }
}
