//! The limit manifold `M = (⊔ B_δ^j)/∼`: identification of chart nodes with equal
//! ambient images, the union-find quotient, transition maps, audits and the
//! cover/inclusion/disjointness checks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use petgraph::unionfind::UnionFind;
use rayon::prelude::*;

use crate::atlas::Exhaustion;
use crate::error::{GeomError, Result};
use crate::system::{GraphSystem, SystemEntry};

/// A chart `B_ρ^j` of the limit: the entry's patch restricted to `|x| < ρ`.
#[derive(Debug, Clone)]
pub struct Chart {
    pub radius: f64,
    pub entry: SystemEntry,
    /// Patch grid nodes inside `B_ρ`.
    pub nodes: Vec<usize>,
    local: Vec<Option<usize>>,
}

impl Chart {
    pub fn new(entry: SystemEntry, radius: f64) -> Self {
        let g = &entry.patch.grid;
        let mut local = vec![None; g.len()];
        let mut nodes = Vec::new();
        for node in 0..g.len() {
            if g.norm_of(node) < radius {
                local[node] = Some(nodes.len());
                nodes.push(node);
            }
        }
        Chart { radius, entry, nodes, local }
    }

    pub fn m(&self) -> usize {
        self.entry.patch.m()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.entry.patch.grid.point_vec(self.nodes[i])
    }

    /// Local nodes within `radius` of a chart point, from a grid-index box.
    pub fn nodes_within(&self, x: &[f64], radius: f64) -> Vec<usize> {
        let g = &self.entry.patch.grid;
        let m = x.len();
        let lo: Vec<i64> = x.iter().map(|v| ((v - radius) / g.h).floor() as i64).collect();
        let hi: Vec<i64> = x.iter().map(|v| ((v + radius) / g.h).ceil() as i64).collect();
        let mut out = Vec::new();
        let mut idx = lo.clone();
        loop {
            if let Some(i) = g.lookup(&idx).and_then(|node| self.local[node]) {
                let p = self.point(i);
                if p.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= radius * radius {
                    out.push(i);
                }
            }
            let mut a = 0;
            loop {
                if a == m {
                    return out;
                }
                idx[a] += 1;
                if idx[a] <= hi[a] {
                    break;
                }
                idx[a] = lo[a];
                a += 1;
            }
        }
    }

    /// Ambient image of local node `i`.
    pub fn image(&self, i: usize) -> DVector<f64> {
        self.entry.ambient_node(self.nodes[i])
    }

    /// `π ∘ A^{-1}(p)` and the vertical residual against the graph.
    pub fn chart_coords(&self, p: &DVector<f64>) -> Option<(Vec<f64>, f64)> {
        let z = self.entry.iso.apply_inverse(p);
        let m = self.m();
        let psi = z.as_slice()[..m].to_vec();
        let u = self.entry.patch.eval(&psi)?;
        let res = z.as_slice()[m..].iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        Some((psi, res))
    }

    /// Local node nearest to a chart point, restricted to the chart domain.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let g = &self.entry.patch.grid;
        let base: Vec<i64> = x.iter().map(|v| (v / g.h).round() as i64).collect();
        let m = x.len();
        let mut best: Option<(f64, usize)> = None;
        for flat in 0..3usize.pow(m as u32) {
            let mut rem = flat;
            let mut idx = base.clone();
            for a in idx.iter_mut() {
                *a += (rem % 3) as i64 - 1;
                rem /= 3;
            }
            if let Some(node) = g.lookup(&idx) {
                if let Some(l) = self.local[node] {
                    let d: f64 = g.point_vec(node).iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                    if best.map_or(true, |(bd, bl)| d < bd || (d == bd && l < bl)) {
                        best = Some((d, l));
                    }
                }
            }
        }
        best.map(|b| b.1)
    }

    /// Local nodes with a grid neighbour outside the chart domain.
    pub fn is_boundary_node(&self, i: usize) -> bool {
        let g = &self.entry.patch.grid;
        let node = self.nodes[i];
        (0..self.m()).any(|a| {
            [-1i64, 1].iter().any(|&s| match g.neighbor(node, a, s) {
                Some(nb) => self.local[nb].is_none(),
                None => true,
            })
        })
    }
}

/// `(x, j) ∼ (ψ, k)` with `ψ = π∘A_k^{-1}∘A_j(x, u_j(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GluePair {
    pub j: usize,
    /// Local node of chart `j`.
    pub x: usize,
    pub k: usize,
    pub psi: Vec<f64>,
    /// Local node of chart `k` nearest to `ψ`.
    pub y: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct GlueRelation {
    pub pairs: Vec<GluePair>,
    pub tol_glue: f64,
    /// Pair indices per chart and local node.
    pub by_node: Vec<Vec<Vec<usize>>>,
}

impl GlueRelation {
    pub fn of(&self, j: usize, x: usize) -> impl Iterator<Item = &GluePair> {
        self.by_node[j][x].iter().map(move |&p| &self.pairs[p])
    }
}

/// Default identification tolerance: `max(3hα, 2h√m)`.
pub fn default_tol_glue(h: f64, alpha: f64, m: usize) -> f64 {
    (3.0 * h * alpha).max(2.0 * h * (m as f64).sqrt())
}

pub fn make_charts(gamma: &GraphSystem, radii: &[f64]) -> Result<Vec<Chart>> {
    if radii.len() != gamma.len() {
        return Err(GeomError::ShapeMismatch("one chart radius per entry required".into()));
    }
    Ok(gamma.entries.iter().zip(radii).map(|(e, &r)| Chart::new(e.clone(), r)).collect())
}

/// All identifications between charts `j` and `k ∈ Z(j)`, `k ≠ j`.
pub fn glue_relation(charts: &[Chart], z: &[Vec<usize>], tol_glue: f64) -> Result<GlueRelation> {
    if z.len() != charts.len() {
        return Err(GeomError::ShapeMismatch("Z must list one set per chart".into()));
    }
    // a glued image lies within sqrt(ρ² + (max|u| + tol)²) of the chart origin
    let reach: Vec<f64> = charts
        .iter()
        .map(|c| {
            let pt = &c.entry.patch;
            let umax = pt.values.chunks(pt.k.max(1)).map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt()).fold(0.0, f64::max);
            (c.radius.powi(2) + (umax + tol_glue).powi(2)).sqrt()
        })
        .collect();
    let per_chart: Vec<Vec<GluePair>> = (0..charts.len())
        .into_par_iter()
        .map(|j| {
            let cj = &charts[j];
            let mut out = Vec::new();
            for x in 0..cj.nodes.len() {
                let p = cj.image(x);
                for &k in &z[j] {
                    if k == j {
                        continue;
                    }
                    let ck = &charts[k];
                    if (&p - &ck.entry.iso.translation).norm() > reach[k] {
                        continue;
                    }
                    let Some((psi, res)) = ck.chart_coords(&p) else { continue };
                    let nrm = psi.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if nrm < ck.radius && res <= tol_glue {
                        if let Some(y) = ck.nearest_node(&psi) {
                            out.push(GluePair { j, x, k, psi, y, residual: res });
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut by_node: Vec<Vec<Vec<usize>>> = charts.iter().map(|c| vec![Vec::new(); c.nodes.len()]).collect();
    let mut pairs = Vec::new();
    for list in per_chart {
        for p in list {
            by_node[p.j][p.x].push(pairs.len());
            pairs.push(p);
        }
    }
    Ok(GlueRelation { pairs, tol_glue, by_node })
}

/// A failed transitivity triple `(x,j) ∼ (y,k) ∼ (z,l)` with `(x,j) ≁ (z,l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleWitness {
    pub j: usize,
    pub x: usize,
    pub k: usize,
    pub y: usize,
    pub l: usize,
    pub z: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LimitManifold {
    pub charts: Vec<Chart>,
    pub z: Vec<Vec<usize>>,
    pub relation: GlueRelation,
    offsets: Vec<usize>,
    /// Class id per global node (classes numbered by smallest member).
    pub class_of: Vec<usize>,
    pub classes: Vec<Vec<usize>>,
    /// Component label per chart.
    pub component_of: Vec<usize>,
    pub components: usize,
    /// Per component: every chart-boundary node is glued to another chart.
    pub closed: Vec<bool>,
    /// Transition samples `τ_jk(x) = ψ` for overlapping pairs.
    pub transitions: BTreeMap<(usize, usize), Vec<(usize, Vec<f64>)>>,
    pub audit: AuditReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    /// Max pairwise ambient distance within a class.
    pub class_spread: f64,
    pub consistency_pass: bool,
    pub triples_checked: usize,
    pub transitivity: Option<TripleWitness>,
    /// Pairs of charts in one class that are not in each other's `Z`.
    pub z_warnings: Vec<(usize, usize)>,
    pub max_round_trip: f64,
    pub min_transition_det: f64,
}

impl AuditReport {
    pub fn transitivity_pass(&self) -> bool {
        self.transitivity.is_none()
    }
}

impl LimitManifold {
    pub fn num_nodes(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn global(&self, j: usize, x: usize) -> usize {
        self.offsets[j] + x
    }

    pub fn local(&self, g: usize) -> (usize, usize) {
        let j = self.offsets.partition_point(|&o| o <= g) - 1;
        (j, g - self.offsets[j])
    }

    /// `[(x, j)] ↦ A_j(x, u_j(x))`.
    pub fn eval(&self, j: usize, x: &[f64]) -> Option<DVector<f64>> {
        self.charts[j].entry.ambient(x)
    }

    pub fn all_closed(&self) -> bool {
        self.closed.iter().all(|&c| c)
    }

    /// Chart list, class table and component labels in a fixed order.
    pub fn export(&self) -> String {
        let mut s = format!("limit charts={} classes={} components={}\n", self.charts.len(), self.classes.len(), self.components);
        for (j, c) in self.charts.iter().enumerate() {
            let t: Vec<String> = c.entry.iso.translation.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&format!(
                "chart j={} radius={:?} nodes={} component={} origin={}\n",
                j,
                c.radius,
                c.nodes.len(),
                self.component_of[j],
                t.join(",")
            ));
        }
        for (id, members) in self.classes.iter().enumerate() {
            if members.len() < 2 {
                continue;
            }
            let m: Vec<String> = members
                .iter()
                .map(|&g| {
                    let (j, x) = self.local(g);
                    format!("{j}:{x}")
                })
                .collect();
            s.push_str(&format!("class id={} members={}\n", id, m.join(",")));
        }
        for (c, closed) in self.closed.iter().enumerate() {
            s.push_str(&format!("component id={} closed={}\n", c, *closed as u8));
        }
        s
    }
}

/// Union-find quotient: each node is linked to its nearest node in the lowest-index
/// chart that contains its image; all relation pairs are then audited.
pub fn build_limit(charts: Vec<Chart>, z: Vec<Vec<usize>>, relation: GlueRelation, tol_geom: f64) -> Result<LimitManifold> {
    let mut offsets = vec![0usize];
    for c in &charts {
        offsets.push(offsets.last().unwrap() + c.nodes.len());
    }
    let total = *offsets.last().unwrap();
    let mut uf = UnionFind::<usize>::new(total);
    for j in 0..charts.len() {
        for x in 0..charts[j].nodes.len() {
            if let Some(p) = relation.of(j, x).filter(|p| p.k < j).min_by_key(|p| p.k) {
                uf.union(offsets[j] + x, offsets[p.k] + p.y);
            }
        }
    }
    let labels = uf.into_labeling();
    let mut class_index: BTreeMap<usize, usize> = BTreeMap::new();
    let mut class_of = vec![0usize; total];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for g in 0..total {
        let id = *class_index.entry(labels[g]).or_insert_with(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        class_of[g] = id;
        classes[id].push(g);
    }

    // chart graph components
    let mut cuf = UnionFind::<usize>::new(charts.len());
    for p in &relation.pairs {
        cuf.union(p.j, p.k);
    }
    let cl = cuf.into_labeling();
    let mut comp_index: BTreeMap<usize, usize> = BTreeMap::new();
    let mut component_of = vec![0; charts.len()];
    for j in 0..charts.len() {
        let n = comp_index.len();
        component_of[j] = *comp_index.entry(cl[j]).or_insert(n);
    }
    let components = comp_index.len();
    let mut closed = vec![true; components];
    for (j, c) in charts.iter().enumerate() {
        for x in 0..c.nodes.len() {
            if c.is_boundary_node(x) && relation.by_node[j][x].is_empty() {
                closed[component_of[j]] = false;
            }
        }
    }

    let mut transitions: BTreeMap<(usize, usize), Vec<(usize, Vec<f64>)>> = BTreeMap::new();
    for p in &relation.pairs {
        transitions.entry((p.j, p.k)).or_default().push((p.x, p.psi.clone()));
    }

    let mut lim = LimitManifold {
        charts,
        z,
        relation,
        offsets,
        class_of,
        classes,
        component_of,
        components,
        closed,
        transitions,
        audit: AuditReport::default(),
    };
    lim.audit = audit(&lim, tol_geom);
    Ok(lim)
}

fn audit(lim: &LimitManifold, tol_geom: f64) -> AuditReport {
    let tol = lim.relation.tol_glue;
    let charts = &lim.charts;
    // ambient spread per class
    let spread = lim
        .classes
        .par_iter()
        .map(|members| {
            let imgs: Vec<DVector<f64>> = members
                .iter()
                .map(|&g| {
                    let (j, x) = lim.local(g);
                    charts[j].image(x)
                })
                .collect();
            let mut s: f64 = 0.0;
            for a in 0..imgs.len() {
                for b in a + 1..imgs.len() {
                    s = s.max((&imgs[a] - &imgs[b]).norm());
                }
            }
            s
        })
        .reduce(|| 0.0, f64::max);
    let mut z_warnings = Vec::new();
    for members in &lim.classes {
        let js: Vec<usize> = members.iter().map(|&g| lim.local(g).0).collect();
        for &a in &js {
            for &b in &js {
                if a < b && !lim.z[a].contains(&b) {
                    z_warnings.push((a, b));
                }
            }
        }
    }
    z_warnings.sort_unstable();
    z_warnings.dedup();

    // triples (x,j) ∼ (y,k) ∼ (z,l)
    let rel = &lim.relation;
    let results: Vec<(usize, Option<TripleWitness>)> = (0..charts.len())
        .into_par_iter()
        .map(|j| {
            let mut count = 0;
            for x in 0..charts[j].nodes.len() {
                let px = charts[j].image(x);
                // distinct endpoints (l, z), each with the first middle node (k, y) reaching it
                let mut ends: Vec<(usize, usize, usize, usize)> = Vec::new();
                for p in rel.of(j, x) {
                    for q in rel.of(p.k, p.y) {
                        if q.k != j {
                            ends.push((q.k, q.y, p.k, p.y));
                        }
                    }
                }
                count += ends.len();
                ends.sort_by_key(|e| (e.0, e.1));
                ends.dedup_by_key(|e| (e.0, e.1));
                let mut verified = usize::MAX;
                for (l, zn, k, y) in ends {
                    let witness = |reason: String| TripleWitness { j, x, k, y, l, z: zn, reason };
                    if !lim.z[j].contains(&l) {
                        return (count, Some(witness(format!("chart {l} not in Z({j})"))));
                    }
                    let pz = charts[l].image(zn);
                    let gap = (&px - &pz).norm();
                    if gap > 2.0 * tol {
                        return (count, Some(witness(format!("ambient gap {gap:e}"))));
                    }
                    if verified == l {
                        continue;
                    }
                    verified = l;
                    // direct re-verification of (x,j) ∼ (·,l) away from the chart rim
                    let cl = &charts[l];
                    let zl = cl.entry.iso.apply_inverse(&px);
                    let m = cl.m();
                    if norm(&zl.as_slice()[..m]) < cl.radius - 2.0 * cl.entry.patch.grid.h {
                        match cl.chart_coords(&px) {
                            Some((_, res)) if res <= tol => {}
                            Some((_, res)) => return (count, Some(witness(format!("direct residual {res:e}")))),
                            None => return (count, Some(witness("image outside chart patch".into()))),
                        }
                    }
                }
            }
            (count, None)
        })
        .collect();
    let triples_checked = results.iter().map(|r| r.0).sum();
    let transitivity = results.into_iter().find_map(|r| r.1);

    // transitions: round trip and Jacobian determinant
    let pairs: Vec<&(usize, usize)> = lim.transitions.keys().collect();
    let (rt, det) = pairs
        .par_iter()
        .map(|&&(j, k)| {
            let mut rt: f64 = 0.0;
            let mut det = f64::INFINITY;
            let cj = &charts[j];
            let ck = &charts[k];
            let d = cj.entry.derivatives().ok();
            for (x, psi) in &lim.transitions[&(j, k)] {
                if let Some(back) = ck.entry.ambient(psi).and_then(|p| cj.chart_coords(&p)) {
                    let xp = cj.point(*x);
                    let e = back.0.iter().zip(&xp).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    rt = rt.max(e);
                }
                if let Some(d) = &d {
                    let m = cj.m();
                    let n = cj.entry.iso.n();
                    let du = d.du_at(cj.nodes[*x]);
                    let mut df = DMatrix::zeros(n, m);
                    for a in 0..m {
                        df[(a, a)] = 1.0;
                        for c in 0..n - m {
                            df[(m + c, a)] = du[(c, a)];
                        }
                    }
                    let full = ck.entry.iso.rotation.transpose() * &cj.entry.iso.rotation * df;
                    let jac = full.rows(0, m).into_owned();
                    det = det.min(jac.determinant().abs());
                }
            }
            (rt, det)
        })
        .reduce(|| (0.0, f64::INFINITY), |a, b| (a.0.max(b.0), a.1.min(b.1)));
    let _ = tol_geom;
    AuditReport {
        class_spread: spread,
        consistency_pass: spread <= tol,
        triples_checked,
        transitivity,
        z_warnings,
        max_round_trip: rt,
        min_transition_det: if det.is_finite() { det } else { 1.0 },
    }
}

/// Glue and build in one step.
pub fn limit_from_system(gamma: &GraphSystem, radii: &[f64], z: &[Vec<usize>], tol_glue: f64, tol_geom: f64) -> Result<LimitManifold> {
    let charts = make_charts(gamma, radii)?;
    let rel = glue_relation(&charts, z, tol_glue)?;
    build_limit(charts, z.to_vec(), rel, tol_geom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: &'static str,
    pub pass: bool,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Points of `B_{ρ/4}` on a refinement of the chart grid, at least 16 per radius.
fn quarter_samples(c: &Chart) -> Vec<Vec<f64>> {
    let h = c.entry.patch.grid.h;
    let m = c.m();
    let step = h / (16.0 * h / c.radius).ceil().max(1.0);
    let n = (c.radius / 4.0 / step).ceil() as i64;
    let side = (2 * n + 1) as usize;
    (0..side.pow(m as u32))
        .map(|mut flat| {
            (0..m)
                .map(|_| {
                    let i = (flat % side) as i64 - n;
                    flat /= side;
                    i as f64 * step
                })
                .collect::<Vec<f64>>()
        })
        .filter(|y| norm(y) < c.radius / 4.0)
        .collect()
}

/// Cover by shrunk charts, quarter-overlap inclusion, quarter-disjointness versus `Z̃`,
/// and (with an exhaustion) properness by levels.
pub fn structure_checks(lim: &LimitManifold, z_tilde: &[Vec<usize>], proper: Option<(&Exhaustion, &[usize])>) -> CheckReport {
    let ch = &lim.charts;
    let rel = &lim.relation;
    let mut items = Vec::new();

    // (i) every node lies in some P(B_{ρ/6}); with an exhaustion only nodes inside the covered levels count
    let covered = |p: &[f64]| match proper {
        Some((ex, nu)) => ex.level(p).is_some_and(|l| l + 1 < nu.len()),
        None => true,
    };
    let mut w = None;
    'cover: for (j, c) in ch.iter().enumerate() {
        for x in 0..c.nodes.len() {
            if !covered(c.image(x).as_slice()) {
                continue;
            }
            let inside = norm(&c.point(x)) < c.radius / 6.0 || rel.of(j, x).any(|p| norm(&p.psi) < ch[p.k].radius / 6.0);
            if !inside {
                w = Some(format!("chart {j} node {x} outside every shrunk chart"));
                break 'cover;
            }
        }
    }
    items.push(CheckItem { name: "cover_sixth", pass: w.is_none(), witness: w });

    // (ii) quarter overlap implies inclusion
    let mut w = None;
    'incl: for (k, c) in ch.iter().enumerate() {
        let quarter: Vec<usize> = (0..c.nodes.len()).filter(|&y| norm(&c.point(y)) < c.radius / 4.0).collect();
        let mut partners: Vec<usize> = quarter
            .iter()
            .flat_map(|&y| rel.of(k, y).filter(|p| norm(&p.psi) < ch[p.k].radius / 4.0).map(|p| p.k))
            .collect();
        partners.sort_unstable();
        partners.dedup();
        for j in partners {
            for &y in &quarter {
                if !rel.of(k, y).any(|p| p.k == j) {
                    w = Some(format!("chart {k} node {y} in quarter ball but not in chart {j}"));
                    break 'incl;
                }
            }
        }
    }
    items.push(CheckItem { name: "quarter_inclusion", pass: w.is_none(), witness: w });

    // (iii) k ∈ Z̃(j) forces overlapping quarter balls
    let mut w = None;
    'disj: for (j, c) in ch.iter().enumerate() {
        for &k in z_tilde.get(j).map(|v| v.as_slice()).unwrap_or(&[]) {
            if k == j {
                continue;
            }
            let meet = quarter_samples(c).iter().any(|y| {
                c.entry.ambient(y).and_then(|p| ch[k].chart_coords(&p)).is_some_and(|(psi, res)| norm(&psi) < ch[k].radius / 4.0 && res <= rel.tol_glue)
            });
            if !meet {
                w = Some(format!("quarter balls of charts {j} and {k} disjoint but {k} in Z~({j})"));
                break 'disj;
            }
        }
    }
    items.push(CheckItem { name: "quarter_disjoint", pass: w.is_none(), witness: w });

    // (iv) properness: nodes imaged in V^l come from charts listed before ν_{l+1}
    if let Some((ex, nu)) = proper {
        let mut w = None;
        let levels = nu.len() - 1;
        'prop: for (j, c) in ch.iter().enumerate() {
            for x in 0..c.nodes.len() {
                let p = c.image(x);
                if let Some(l) = ex.level(p.as_slice()) {
                    if l + 1 <= levels && j >= nu[l + 1] {
                        w = Some(format!("chart {j} reaches level {l} beyond ν_{}", l + 1));
                        break 'prop;
                    }
                }
            }
        }
        items.push(CheckItem { name: "proper", pass: w.is_none(), witness: w });
    }
    CheckReport { items }
}

/// Removes `l` from `Z(j)` and `j` from `Z(l)`.
pub fn drop_z_pair(z: &[Vec<usize>], j: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = z.to_vec();
    out[j].retain(|&v| v != l);
    out[l].retain(|&v| v != j);
    out
}

/// Pairs `(j, l)` that glue and share a third overlapping chart; candidates for fault injection.
pub fn injectable_pairs(lim: &LimitManifold) -> Vec<(usize, usize)> {
    let mut glued: BTreeMap<(usize, usize), bool> = BTreeMap::new();
    for p in &lim.relation.pairs {
        glued.insert((p.j.min(p.k), p.j.max(p.k)), true);
    }
    let mut out = Vec::new();
    for &(j, l) in glued.keys() {
        let third = lim.z[j].iter().any(|&k| k != j && k != l && glued.contains_key(&(k.min(l), k.max(l))) && glued.contains_key(&(k.min(j), k.max(j))));
        if third {
            out.push((j, l));
        }
    }
    out
}
