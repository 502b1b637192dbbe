//! Graph systems `Γ = (A_j, u_j)`, the metric 𝔡 with truncations, and
//! subsequence selection for finite sequences of systems.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::atlas::{local_graph, GraphOptions, NetResult};
use crate::error::{GeomError, Result};
use crate::grid::GridBall;
use crate::linalg::{rotation_distance, EuclideanIsometry};
use crate::mesh::{dist, SampledImmersion};
use crate::patch::{parse_patch_record, Derivatives, GraphPatch};

#[derive(Debug, Clone)]
pub struct SystemEntry {
    pub iso: EuclideanIsometry,
    pub patch: GraphPatch,
    deriv: OnceLock<Derivatives>,
}

impl PartialEq for SystemEntry {
    fn eq(&self, other: &Self) -> bool {
        self.iso == other.iso && self.patch == other.patch
    }
}

impl SystemEntry {
    pub fn new(iso: EuclideanIsometry, patch: GraphPatch) -> Self {
        SystemEntry { iso, patch, deriv: OnceLock::new() }
    }

    pub fn derivatives(&self) -> Result<&Derivatives> {
        if let Some(d) = self.deriv.get() {
            return Ok(d);
        }
        let d = self.patch.differentiate()?;
        Ok(self.deriv.get_or_init(|| d))
    }

    /// `A_j(x, u_j(x))` at a chart point.
    pub fn ambient(&self, x: &[f64]) -> Option<DVector<f64>> {
        let u = self.patch.eval(x)?;
        let mut y = x.to_vec();
        y.extend(u);
        Some(self.iso.apply(&DVector::from_vec(y)))
    }

    /// The same graph written in the frame `[T Q₁ | N Q₂]` closest to `reference`,
    /// with `Q₁ ∈ O(m)`, `Q₂ ∈ O(k)` and the determinant kept at one.
    /// The new patch is `v(y) = Q₂ᵀ u(Q₁ y)`.
    pub fn aligned_to(&self, reference: &DMatrix<f64>) -> Result<SystemEntry> {
        let m = self.patch.m();
        let n = self.patch.n();
        let k = n - m;
        let r = &self.iso.rotation;
        let polar = |a: DMatrix<f64>| {
            let svd = a.svd(true, true);
            (svd.u.unwrap() * svd.v_t.unwrap(), svd.singular_values)
        };
        let t = r.columns(0, m).into_owned();
        let nn = r.columns(m, k).into_owned();
        let (q1, _) = polar(t.transpose() * reference.columns(0, m));
        let (mut q2, sv) = polar(nn.transpose() * reference.columns(m, k));
        if q1.determinant() * q2.determinant() < 0.0 {
            let imin = sv.imin();
            let col = -q2.column(imin);
            q2.set_column(imin, &col);
        }
        let eye = |q: &DMatrix<f64>| (q - DMatrix::<f64>::identity(q.nrows(), q.ncols())).amax() < 1e-12;
        if eye(&q1) && eye(&q2) {
            return Ok(self.clone());
        }
        let mut rot = DMatrix::zeros(n, n);
        rot.columns_mut(0, m).copy_from(&(&t * &q1));
        rot.columns_mut(m, k).copy_from(&(&nn * &q2));
        let grid = &self.patch.grid;
        let mut values = Vec::with_capacity(grid.len() * k);
        for node in 0..grid.len() {
            let x = &q1 * grid.point(node);
            // signed permutations land on nodes exactly
            let idx: Vec<i64> = x.iter().map(|v| (v / grid.h).round() as i64).collect();
            let on_node = x.iter().zip(&idx).all(|(v, &i)| (v - i as f64 * grid.h).abs() < 1e-9 * grid.h.max(1.0));
            let u = match (on_node, grid.lookup(&idx)) {
                (true, Some(j)) => self.patch.value(j).to_vec(),
                _ => self
                    .patch
                    .eval_extended(x.as_slice())
                    .ok_or_else(|| GeomError::InvalidArgument(format!("reframed node {node} leaves the chart")))?,
            };
            let v = q2.transpose() * DVector::from_vec(u);
            values.extend(v.iter());
        }
        let patch = GraphPatch { grid: grid.clone(), k, values, centered: self.patch.centered };
        Ok(SystemEntry::new(EuclideanIsometry { rotation: rot, translation: self.iso.translation.clone() }, patch))
    }

    /// `A_j(x, u_j(x))` at a grid node.
    pub fn ambient_node(&self, node: usize) -> DVector<f64> {
        let mut y = self.patch.grid.point_vec(node);
        y.extend_from_slice(self.patch.value(node));
        self.iso.apply(&DVector::from_vec(y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSystem {
    pub entries: Vec<SystemEntry>,
    /// Chart radius `ϱ_i` per entry.
    pub radius_seq: Option<Vec<f64>>,
    /// `ν_0 = 0, ν_1, …`
    pub subdivision: Option<Vec<usize>>,
}

impl GraphSystem {
    /// Re-expresses entry `j` in the frame orientation of `reference` entry `j`.
    /// Frames are only fixed up to `O(m) × O(k)`, so members are aligned before comparing.
    pub fn aligned_to(&self, reference: &GraphSystem) -> Result<GraphSystem> {
        let mut entries = self
            .entries
            .iter()
            .zip(&reference.entries)
            .map(|(e, r)| e.aligned_to(&r.iso.rotation))
            .collect::<Result<Vec<_>>>()?;
        entries.extend(self.entries.iter().skip(reference.entries.len()).cloned());
        Ok(GraphSystem { entries, radius_seq: self.radius_seq.clone(), subdivision: self.subdivision.clone() })
    }

    pub fn new(entries: Vec<SystemEntry>, radius_seq: Option<Vec<f64>>, subdivision: Option<Vec<usize>>) -> Result<Self> {
        if let Some(first) = entries.first() {
            let (m, k, n) = (first.patch.m(), first.patch.k, first.iso.n());
            for (j, e) in entries.iter().enumerate() {
                if e.patch.m() != m || e.patch.k != k || e.iso.n() != n || m + k != n {
                    return Err(GeomError::ShapeMismatch(format!("entry {j} has inconsistent dimensions")));
                }
            }
        }
        if let Some(nu) = &subdivision {
            if nu.first() != Some(&0) || nu.windows(2).any(|w| w[1] < w[0]) || *nu.last().unwrap() > entries.len() {
                return Err(GeomError::ShapeMismatch(format!("invalid subdivision {nu:?}")));
            }
        }
        if let Some(rs) = &radius_seq {
            if rs.len() != entries.len() {
                return Err(GeomError::ShapeMismatch("radius sequence length differs from entry count".into()));
            }
            if let Some(nu) = &subdivision {
                for w in nu.windows(2) {
                    let block = &rs[w[0]..w[1]];
                    if block.iter().any(|r| *r != block[0]) {
                        return Err(GeomError::ShapeMismatch("radius not constant within a subdivision block".into()));
                    }
                }
            }
        }
        Ok(GraphSystem { entries, radius_seq, subdivision })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of levels recorded by the subdivision (0 for plain systems).
    pub fn levels(&self) -> usize {
        self.subdivision.as_ref().map_or(0, |nu| nu.len() - 1)
    }

    /// Entries belonging to the truncation `Γ_j`; `None` means all entries.
    pub fn truncated_len(&self, level: Option<usize>) -> usize {
        match (level, &self.subdivision) {
            (Some(j), Some(nu)) => nu[j.min(nu.len() - 1)],
            _ => self.entries.len(),
        }
    }

    pub fn to_text(&self) -> String {
        let list = |v: &Option<Vec<String>>| v.as_ref().map_or("none".to_string(), |v| v.join(","));
        let rs = self.radius_seq.as_ref().map(|r| r.iter().map(|x| format!("{x:?}")).collect());
        let nu = self.subdivision.as_ref().map(|r| r.iter().map(|x| x.to_string()).collect());
        let mut s = format!("system entries={} radius_seq={} subdivision={}\n", self.entries.len(), list(&rs), list(&nu));
        for e in &self.entries {
            let n = e.iso.n();
            let rot: Vec<String> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| format!("{:?}", e.iso.rotation[(i, j)])).collect();
            let tr: Vec<String> = e.iso.translation.iter().map(|x| format!("{x:?}")).collect();
            s.push_str(&format!("rotation n={} {}\n", n, rot.join(" ")));
            s.push_str(&format!("translation {}\n", tr.join(" ")));
            s.push_str(&e.patch.to_text());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: &str| GeomError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| perr(1, "empty system"))?;
        let mut toks = header.split_whitespace();
        if toks.next() != Some("system") {
            return Err(perr(1, "expected 'system' header"));
        }
        let mut count = None;
        let mut radius_seq = None;
        let mut subdivision = None;
        for t in toks {
            let (k, v) = t.split_once('=').ok_or_else(|| perr(1, "malformed key=value"))?;
            match k {
                "entries" => count = Some(v.parse::<usize>().map_err(|_| perr(1, "bad entries"))?),
                "radius_seq" if v != "none" => {
                    radius_seq = Some(v.split(',').map(|x| x.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| perr(1, "bad radius_seq"))?)
                }
                "subdivision" if v != "none" => {
                    subdivision = Some(v.split(',').map(|x| x.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| perr(1, "bad subdivision"))?)
                }
                "radius_seq" | "subdivision" => {}
                _ => return Err(perr(1, &format!("unknown key {k}"))),
            }
        }
        let count = count.ok_or_else(|| perr(1, "missing entries"))?;
        let mut entries = Vec::with_capacity(count);
        let mut line_no = 1;
        for _ in 0..count {
            line_no += 1;
            let rl = lines.next().ok_or_else(|| perr(line_no, "missing rotation"))?;
            let mut rt = rl.split_whitespace();
            if rt.next() != Some("rotation") {
                return Err(perr(line_no, "expected rotation"));
            }
            let n: usize = rt
                .next()
                .and_then(|t| t.strip_prefix("n="))
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| perr(line_no, "bad rotation size"))?;
            let vals: Vec<f64> = rt.map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| perr(line_no, "bad float"))?;
            if vals.len() != n * n {
                return Err(perr(line_no, "rotation arity"));
            }
            line_no += 1;
            let tl = lines.next().ok_or_else(|| perr(line_no, "missing translation"))?;
            let mut tt = tl.split_whitespace();
            if tt.next() != Some("translation") {
                return Err(perr(line_no, "expected translation"));
            }
            let tv: Vec<f64> = tt.map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| perr(line_no, "bad float"))?;
            let iso = EuclideanIsometry::new(DMatrix::from_row_slice(n, n, &vals), DVector::from_vec(tv), 1e-8)?;
            line_no += 1;
            let ph = lines.next().ok_or_else(|| perr(line_no, "missing patch"))?;
            let patch = parse_patch_record(ph, &mut lines, line_no)?;
            line_no += patch.grid.len();
            entries.push(SystemEntry::new(iso, patch));
        }
        if lines.next().is_some() {
            return Err(perr(line_no + 1, "trailing data"));
        }
        GraphSystem::new(entries, radius_seq, subdivision)
    }
}

/// Builds `Γ(f)` from certified local graphs at the given vertices.
pub fn extract_at(
    imm: &SampledImmersion,
    points: &[usize],
    radii: &[f64],
    alpha: f64,
    opts: GraphOptions,
    subdivision: Option<Vec<usize>>,
) -> Result<GraphSystem> {
    let entries: Result<Vec<SystemEntry>> = points
        .par_iter()
        .zip(radii.par_iter())
        .map(|(&q, &r)| {
            let g = local_graph(imm, q, r, alpha, opts)?;
            Ok(SystemEntry::new(g.frame, g.patch))
        })
        .collect();
    let radius_seq = subdivision.as_ref().map(|_| radii.to_vec());
    GraphSystem::new(entries?, radius_seq, subdivision)
}

/// `Γ(f)` over a net; chart radius is the net's certification radius.
pub fn extract_system(imm: &SampledImmersion, net: &NetResult, alpha: f64, opts: GraphOptions) -> Result<GraphSystem> {
    extract_at(imm, &net.points, &net.r, alpha, opts, net.subdivision.clone())
}

/// Vertex of `imm` nearest to each given ambient position (lowest index on ties).
pub fn nearest_vertices(imm: &SampledImmersion, targets: &[Vec<f64>]) -> Vec<usize> {
    targets
        .par_iter()
        .map(|t| {
            let mut best = (f64::INFINITY, 0);
            for v in 0..imm.num_vertices() {
                let d = dist(imm.pos(v), t);
                if d < best.0 {
                    best = (d, v);
                }
            }
            best.1
        })
        .collect()
}

/// Values and gradients of a patch on a target grid.
fn on_grid(e: &SystemEntry, grid: &GridBall) -> Result<(Vec<f64>, Vec<f64>)> {
    if &e.patch.grid == grid {
        let d = e.derivatives()?;
        return Ok((e.patch.values.clone(), d.du.clone()));
    }
    let k = e.patch.k;
    let mut values = Vec::with_capacity(grid.len() * k);
    for node in 0..grid.len() {
        let v = e
            .patch
            .eval(&grid.point_vec(node))
            .ok_or_else(|| GeomError::ShapeMismatch("common grid leaves a patch domain".into()))?;
        values.extend(v);
    }
    let p = GraphPatch::new(grid.clone(), k, values, false)?;
    let d = p.differentiate()?;
    Ok((p.values, d.du))
}

/// `‖u − ũ‖_{C¹}` on the finer of the two grids: sup `|u−ũ|` plus sup column norm of `Du−Dũ`.
pub fn c1_distance(a: &SystemEntry, b: &SystemEntry) -> Result<f64> {
    let (pa, pb) = (&a.patch, &b.patch);
    if pa.m() != pb.m() || pa.k != pb.k {
        return Err(GeomError::ShapeMismatch("patch dimensions differ".into()));
    }
    let grid = if pa.grid == pb.grid {
        pa.grid.clone()
    } else {
        let r = pa.grid.r.min(pb.grid.r);
        let h = pa.grid.h.min(pb.grid.h);
        GridBall::new(pa.m(), r, h)?
    };
    let (va, da) = on_grid(a, &grid)?;
    let (vb, db) = on_grid(b, &grid)?;
    let (k, m) = (pa.k, pa.m());
    let mut c0: f64 = 0.0;
    let mut c1: f64 = 0.0;
    for node in 0..grid.len() {
        let d0: f64 = (0..k).map(|c| (va[node * k + c] - vb[node * k + c]).powi(2)).sum::<f64>().sqrt();
        let d1: f64 = (0..k * m).map(|c| (da[node * k * m + c] - db[node * k * m + c]).powi(2)).sum::<f64>().sqrt();
        c0 = c0.max(d0);
        c1 = c1.max(d1);
    }
    Ok(c0 + c1)
}

/// One entry's contribution to 𝔡.
pub fn entry_distance(a: &SystemEntry, b: &SystemEntry) -> Result<f64> {
    if a.iso.n() != b.iso.n() {
        return Err(GeomError::ShapeMismatch("ambient dimensions differ".into()));
    }
    let rot = rotation_distance(&a.iso.rotation, &b.iso.rotation);
    let tr = (&a.iso.translation - &b.iso.translation).norm();
    Ok(rot + tr + c1_distance(a, b)?)
}

/// 𝔡 over the entries of the truncation at `level` (all entries when `None`).
pub fn system_distance(a: &GraphSystem, b: &GraphSystem, level: Option<usize>) -> Result<f64> {
    let na = a.truncated_len(level);
    let nb = b.truncated_len(level);
    if na != nb {
        return Err(GeomError::ShapeMismatch(format!("truncations have {na} and {nb} entries")));
    }
    let terms: Result<Vec<f64>> = (0..na).into_par_iter().map(|j| entry_distance(&a.entries[j], &b.entries[j])).collect();
    Ok(terms?.iter().sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub level: Option<usize>,
    /// Pairwise distances over the whole sequence.
    pub table: Vec<Vec<f64>>,
    /// Selected subsequence (ascending indices into the sequence).
    pub selected: Vec<usize>,
    pub diameter: f64,
    pub cauchy: bool,
    /// First index of the longest all-selected tail (at least two members).
    pub tail_start: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub tol: f64,
    pub levels: Vec<LevelReport>,
    /// Diagonal subsequence: the selection at the deepest level.
    pub subsequence: Vec<usize>,
}

impl ConvergenceReport {
    pub fn to_text(&self, tag: &str) -> String {
        let mut s = String::new();
        for l in &self.levels {
            let lv = l.level.map_or("all".to_string(), |j| j.to_string());
            let sel: Vec<String> = l.selected.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!(
                "{tag}converge level={lv} cauchy={} diameter={:e} tail_start={} selected={}\n",
                l.cauchy as u8,
                l.diameter,
                l.tail_start.map_or("none".to_string(), |t| t.to_string()),
                sel.join(",")
            ));
            for (i, row) in l.table.iter().enumerate() {
                for (k, d) in row.iter().enumerate().skip(i + 1) {
                    s.push_str(&format!("{tag}distance level={lv} i={i} k={k} value={d:e}\n"));
                }
            }
        }
        s
    }
}

fn distance_table(seq: &[GraphSystem], level: Option<usize>, among: &[usize]) -> Result<Vec<Vec<f64>>> {
    let n = seq.len();
    let pairs: Vec<(usize, usize)> = among.iter().flat_map(|&i| among.iter().filter(move |&&k| k > i).map(move |&k| (i, k))).collect();
    let vals: Result<Vec<f64>> = pairs.par_iter().map(|&(i, k)| system_distance(&seq[i], &seq[k], level)).collect();
    let vals = vals?;
    let mut t = vec![vec![f64::NAN; n]; n];
    for &i in among {
        t[i][i] = 0.0;
    }
    for (&(i, k), d) in pairs.iter().zip(vals) {
        t[i][k] = d;
        t[k][i] = d;
    }
    Ok(t)
}

/// Greedy ball growth around the medoid of `among`: candidates join in order of distance
/// to the medoid whenever they stay within `tol` of every member already selected.
pub fn select_cluster(table: &[Vec<f64>], among: &[usize], tol: f64) -> Vec<usize> {
    let medoid = *among
        .iter()
        .min_by(|&&a, &&b| {
            let sa: f64 = among.iter().map(|&k| table[a][k]).sum();
            let sb: f64 = among.iter().map(|&k| table[b][k]).sum();
            sa.partial_cmp(&sb).unwrap().then(a.cmp(&b))
        })
        .unwrap();
    let mut order: Vec<usize> = among.iter().copied().filter(|&k| k != medoid).collect();
    order.sort_by(|&a, &b| table[medoid][a].partial_cmp(&table[medoid][b]).unwrap().then(a.cmp(&b)));
    let mut sel = vec![medoid];
    for c in order {
        if sel.iter().all(|&s| table[c][s] <= tol) {
            sel.push(c);
        }
    }
    sel.sort_unstable();
    sel
}

/// Per-level subsequence selection, each level refining the previous one.
pub fn detect_convergence(seq: &[GraphSystem], tol: f64, levels: &[Option<usize>]) -> Result<ConvergenceReport> {
    if seq.len() < 2 {
        return Err(GeomError::TooFewSystems(seq.len()));
    }
    let mut among: Vec<usize> = (0..seq.len()).collect();
    let mut out = Vec::new();
    for &level in levels {
        let table = distance_table(seq, level, &(0..seq.len()).collect::<Vec<_>>())?;
        let selected = select_cluster(&table, &among, tol);
        let diameter = selected
            .iter()
            .flat_map(|&a| selected.iter().map(move |&b| (a, b)))
            .map(|(a, b)| table[a][b])
            .fold(0.0, f64::max);
        let n = seq.len();
        let mut tail_start = None;
        for s in (0..n.saturating_sub(1)).rev() {
            if selected.contains(&s) && (s..n).all(|i| selected.contains(&i)) {
                tail_start = Some(s);
            } else {
                break;
            }
        }
        let cauchy = selected.len() >= 2 && diameter <= tol;
        among = selected.clone();
        out.push(LevelReport { level, table, selected, diameter, cauchy, tail_start });
    }
    let subsequence = out.last().map(|l| l.selected.clone()).unwrap_or_default();
    Ok(ConvergenceReport { tol, levels: out, subsequence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::delta_net;
    use crate::scenario::circle;

    fn flat_entry(shift: &[f64]) -> SystemEntry {
        let grid = GridBall::new(1, 0.5, 0.05).unwrap();
        let patch = GraphPatch::from_fn(grid, 1, true, |_| vec![0.0]).unwrap();
        SystemEntry::new(EuclideanIsometry { rotation: DMatrix::identity(2, 2), translation: DVector::from_column_slice(shift) }, patch)
    }

    #[test]
    fn distance_examples() {
        let a = GraphSystem::new(vec![flat_entry(&[0.0, 0.0])], None, None).unwrap();
        assert_eq!(system_distance(&a, &a, None).unwrap(), 0.0);
        let b = GraphSystem::new(vec![flat_entry(&[1.0, 0.0])], None, None).unwrap();
        assert_eq!(system_distance(&a, &b, None).unwrap(), 1.0);
        let mut c = a.clone();
        c.entries[0].iso.rotation = EuclideanIsometry::planar_rotation(std::f64::consts::FRAC_PI_3);
        assert!((system_distance(&a, &c, None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let c = circle([0.0, 0.0], 1.0, 300).unwrap();
        let net = delta_net(&c, 0.3, 0.3, 0.4, 0.5).unwrap();
        let s = extract_system(&c, &net, 0.5, GraphOptions::default()).unwrap();
        assert_eq!(s.len(), net.len());
        let back = GraphSystem::from_text(&s.to_text()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_text(), s.to_text());
    }

    #[test]
    fn extracted_patches_are_centered_arcs() {
        let c = circle([0.0, 0.0], 1.0, 700).unwrap();
        let net = delta_net(&c, 0.45, 0.45, 0.46, 0.55).unwrap();
        let s = extract_system(&c, &net, 0.55, GraphOptions::default()).unwrap();
        assert_eq!(s.len(), 13);
        for e in &s.entries {
            assert!(e.patch.centered);
            let d = e.derivatives().unwrap();
            let sup = (0..e.patch.grid.len()).map(|n| d.du_norm(n)).fold(0.0, f64::max);
            assert!(sup <= 0.55, "{sup}");
            // arc oracle: u(x) = 1 - sqrt(1 - x²) up to sign
            for node in 0..e.patch.grid.len() {
                let x = e.patch.grid.point_vec(node)[0];
                let u = e.patch.value(node)[0].abs();
                assert!((u - (1.0 - (1.0 - x * x).sqrt())).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn constant_and_alternating_sequences() {
        let a = GraphSystem::new(vec![flat_entry(&[0.0, 0.0])], None, None).unwrap();
        let b = GraphSystem::new(vec![flat_entry(&[0.5, 0.0])], None, None).unwrap();
        let constant = vec![a.clone(); 5];
        let r = detect_convergence(&constant, 1e-15, &[None]).unwrap();
        assert_eq!(r.subsequence, vec![0, 1, 2, 3, 4]);
        assert!(r.levels[0].cauchy);
        let alt: Vec<GraphSystem> = (0..6).map(|i| if i % 2 == 0 { a.clone() } else { b.clone() }).collect();
        let r = detect_convergence(&alt, 0.1, &[None]).unwrap();
        assert!(r.subsequence == vec![0, 2, 4] || r.subsequence == vec![1, 3, 5]);
        assert!(detect_convergence(&alt[..1], 0.1, &[None]).is_err());
    }
}
