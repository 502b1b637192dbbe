//! Deterministic mesh generators and the named scenario families.

use std::f64::consts::PI;

use crate::atlas::{Exhaustion, OmegaSpec};
use crate::error::{GeomError, Result};
use crate::mesh::SampledImmersion;

/// Polyline through `points` (each of length `n`); closed curves reconnect the last vertex to the first.
pub fn polyline(n: usize, points: &[Vec<f64>], closed: bool) -> Result<SampledImmersion> {
    let nv = points.len();
    let mut simplices = Vec::new();
    let ns = if closed { nv } else { nv - 1 };
    for i in 0..ns {
        simplices.push(i);
        simplices.push((i + 1) % nv);
    }
    SampledImmersion::new(1, n, points.concat(), simplices)
}

/// Circle of radius `r` centred at `c`, `segments` equal edges, counter-clockwise from angle 0.
pub fn circle(c: [f64; 2], r: f64, segments: usize) -> Result<SampledImmersion> {
    let pts: Vec<Vec<f64>> = (0..segments)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / segments as f64;
            vec![c[0] + r * t.cos(), c[1] + r * t.sin()]
        })
        .collect();
    polyline(2, &pts, true)
}

/// Open curve `t -> f(t)` sampled at `samples` equally spaced parameters in `[t0, t1]`.
pub fn parametric_curve(f: impl Fn(f64) -> Vec<f64>, t0: f64, t1: f64, samples: usize) -> Result<SampledImmersion> {
    let pts: Vec<Vec<f64>> = (0..samples).map(|i| f(t0 + (t1 - t0) * i as f64 / (samples - 1) as f64)).collect();
    let n = pts[0].len();
    polyline(n, &pts, false)
}

/// Spiral `ρ(θ) = 1 + pitch (θ/2π − turns/2)`, `θ ∈ [0, 2π turns]`.
pub fn spiral(pitch: f64, turns: f64, per_turn: usize) -> Result<SampledImmersion> {
    let samples = (turns * per_turn as f64).round() as usize + 1;
    parametric_curve(
        |t| {
            let rho = 1.0 + pitch * (t / (2.0 * PI) - turns / 2.0);
            vec![rho * t.cos(), rho * t.sin()]
        },
        0.0,
        2.0 * PI * turns,
        samples,
    )
}

/// Hairpin: `y = +w` from `x = -len` to `bend`, a half circle of radius `w`, back along `y = -w`.
/// Edges have length close to `edge`.
pub fn hairpin(w: f64, len: f64, bend: f64, edge: f64) -> Result<SampledImmersion> {
    let straight = bend + len;
    let ns = (straight / edge).round().max(1.0) as usize;
    let nb = (PI * w / edge).round().max(2.0) as usize;
    let mut pts = Vec::new();
    for i in 0..ns {
        pts.push(vec![-len + straight * i as f64 / ns as f64, w]);
    }
    for i in 0..nb {
        let t = PI / 2.0 - PI * i as f64 / nb as f64;
        pts.push(vec![bend + w * t.cos(), w * t.sin()]);
    }
    for i in 0..=ns {
        pts.push(vec![bend - straight * i as f64 / ns as f64, -w]);
    }
    polyline(2, &pts, false)
}

/// Two parallel segments `y = ±w`, `x ∈ [-len, len]`, as one two-component mesh.
pub fn parallel_lines(w: f64, len: f64, edge: f64) -> Result<SampledImmersion> {
    let ns = (2.0 * len / edge).round() as usize;
    let mut verts = Vec::new();
    let mut simplices = Vec::new();
    for (c, y) in [w, -w].into_iter().enumerate() {
        let base = c * (ns + 1);
        for i in 0..=ns {
            verts.extend([-len + 2.0 * len * i as f64 / ns as f64, y]);
        }
        for i in 0..ns {
            simplices.extend([base + i, base + i + 1]);
        }
    }
    SampledImmersion::new(1, 2, verts, simplices)
}

/// Icosphere of radius `r` after `level` midpoint subdivisions.
pub fn icosphere(r: f64, level: usize) -> Result<SampledImmersion> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut f: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let unit = |p: [f64; 3]| {
        let l = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / l, p[1] / l, p[2] / l]
    };
    for p in v.iter_mut() {
        *p = unit(*p);
    }
    for _ in 0..level {
        let mut mid = std::collections::HashMap::new();
        let mut nf = Vec::with_capacity(f.len() * 4);
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let p = [(v[a][0] + v[b][0]) / 2.0, (v[a][1] + v[b][1]) / 2.0, (v[a][2] + v[b][2]) / 2.0];
                v.push(unit(p));
                v.len() - 1
            })
        };
        for [a, b, c] in f {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            nf.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = nf;
    }
    let verts: Vec<f64> = v.iter().flat_map(|p| p.iter().map(|x| x * r)).collect();
    SampledImmersion::new(2, 3, verts, f.concat())
}

/// Graph `z = g(x, y)` over a triangulated square `[-half, half]^2` with `cells` cells per side.
pub fn square_graph(half: f64, cells: usize, g: impl Fn(f64, f64) -> f64) -> Result<SampledImmersion> {
    let mut verts = Vec::new();
    let h = 2.0 * half / cells as f64;
    for i in 0..=cells {
        for j in 0..=cells {
            let (x, y) = (-half + h * i as f64, -half + h * j as f64);
            verts.extend([x, y, g(x, y)]);
        }
    }
    let id = |i: usize, j: usize| i * (cells + 1) + j;
    let mut s = Vec::new();
    for i in 0..cells {
        for j in 0..cells {
            // alternate diagonals for isotropy
            if (i + j) % 2 == 0 {
                s.extend([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            } else {
                s.extend([id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
    }
    SampledImmersion::new(2, 3, verts, s)
}

/// Graph `z = g(x, y)` over the annulus `r_in ≤ |(x,y)| ≤ r_out` on a polar mesh.
pub fn annulus_graph(r_in: f64, r_out: f64, rings: usize, sectors: usize, g: impl Fn(f64, f64) -> f64) -> Result<SampledImmersion> {
    let mut verts = Vec::new();
    for a in 0..=rings {
        let rho = r_in + (r_out - r_in) * a as f64 / rings as f64;
        // offset alternate rings by half a sector
        let shift = if a % 2 == 0 { 0.0 } else { 0.5 };
        for b in 0..sectors {
            let t = 2.0 * PI * (b as f64 + shift) / sectors as f64;
            let (x, y) = (rho * t.cos(), rho * t.sin());
            verts.extend([x, y, g(x, y)]);
        }
    }
    let id = |a: usize, b: usize| a * sectors + (b % sectors);
    let mut s = Vec::new();
    for a in 0..rings {
        for b in 0..sectors {
            if a % 2 == 0 {
                s.extend([id(a, b), id(a, b + 1), id(a + 1, b), id(a, b + 1), id(a + 1, b + 1), id(a + 1, b)]);
            } else {
                s.extend([id(a, b), id(a + 1, b + 1), id(a + 1, b), id(a, b), id(a, b + 1), id(a + 1, b + 1)]);
            }
        }
    }
    SampledImmersion::new(2, 3, verts, s)
}

/// Ground-truth annotations shipped with a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotations {
    /// Connected components of the limit.
    pub components: usize,
    /// Compact members (closed meshes) or truncated noncompact ones.
    pub compact: bool,
    /// Whether the limit is diffeomorphic to the members.
    pub diffeomorphic: bool,
    /// `|A|` of the limit where it is constant.
    pub limit_curvature: Option<f64>,
    /// Exact `‖A‖_{L^2}` of each member, if known.
    pub member_a_l2: Vec<Option<f64>>,
    /// Exact `‖A‖_{L^2}` of the limit, if known.
    pub limit_a_l2: Option<f64>,
    pub exhaustion: Option<Exhaustion>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    /// Sequence index `i` of each member.
    pub indices: Vec<usize>,
    pub members: Vec<SampledImmersion>,
    pub limit: SampledImmersion,
    pub annotations: Annotations,
}

/// Generator parameters; zero fields take the scenario's default.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GenParams {
    pub i_min: usize,
    pub i_max: usize,
    pub resolution: usize,
}

pub const SCENARIOS: [&str; 7] = [
    "circle_family",
    "sphere_family",
    "two_lines_dumbbell",
    "spiral_vs_circle",
    "annulus_graphs",
    "line_family",
    "shrinking_perturbation",
];

fn pick(v: usize, d: usize) -> usize {
    if v == 0 {
        d
    } else {
        v
    }
}

pub fn generate(name: &str, p: GenParams) -> Result<Scenario> {
    let range = |lo: usize, hi: usize| -> Vec<usize> { (pick(p.i_min, lo)..=pick(p.i_max, hi)).collect() };
    let (indices, members, limit, ann) = match name {
        "circle_family" => {
            let idx = range(2, 16);
            let n = pick(p.resolution, 720);
            let members = idx.iter().map(|&i| circle([0.0, 0.0], 1.0 + 1.0 / i as f64, n)).collect::<Result<Vec<_>>>()?;
            let l2 = idx.iter().map(|&i| Some((2.0 * PI / (1.0 + 1.0 / i as f64)).sqrt())).collect();
            (
                idx,
                members,
                circle([0.0, 0.0], 1.0, n)?,
                Annotations {
                    components: 1,
                    compact: true,
                    diffeomorphic: true,
                    limit_curvature: Some(1.0),
                    member_a_l2: l2,
                    limit_a_l2: Some((2.0 * PI).sqrt()),
                    exhaustion: None,
                },
            )
        }
        "sphere_family" => {
            let idx = range(2, 6);
            let level = pick(p.resolution, 4);
            let members = idx.iter().map(|&i| icosphere(1.0 + 1.0 / i as f64, level)).collect::<Result<Vec<_>>>()?;
            // ‖A‖² = 2/R² over area 4πR²: ‖A‖_{L²} = √(8π)
            let l2 = idx.iter().map(|_| Some((8.0 * PI).sqrt())).collect();
            (
                idx,
                members,
                icosphere(1.0, level)?,
                Annotations {
                    components: 1,
                    compact: true,
                    diffeomorphic: true,
                    limit_curvature: Some(2f64.sqrt()),
                    member_a_l2: l2,
                    limit_a_l2: Some((8.0 * PI).sqrt()),
                    exhaustion: None,
                },
            )
        }
        "two_lines_dumbbell" => {
            let idx = range(2, 8);
            let edge = 1.0 / pick(p.resolution, 50) as f64;
            let members = idx.iter().map(|&i| hairpin(1.0, 8.0, 2.0 + i as f64, edge)).collect::<Result<Vec<_>>>()?;
            (
                idx.clone(),
                members,
                parallel_lines(1.0, 8.0, edge)?,
                Annotations {
                    components: 2,
                    compact: false,
                    diffeomorphic: true,
                    limit_curvature: Some(0.0),
                    member_a_l2: vec![None; idx.len()],
                    limit_a_l2: None,
                    exhaustion: Some(Exhaustion::balls(1.0)),
                },
            )
        }
        "spiral_vs_circle" => {
            let idx = range(8, 16);
            let n = pick(p.resolution, 720);
            let members = idx.iter().map(|&i| spiral(1.0 / i as f64, 3.0, n)).collect::<Result<Vec<_>>>()?;
            (
                idx.clone(),
                members,
                circle([0.0, 0.0], 1.0, n)?,
                Annotations {
                    components: 1,
                    compact: true,
                    diffeomorphic: false,
                    limit_curvature: Some(1.0),
                    member_a_l2: vec![None; idx.len()],
                    limit_a_l2: Some((2.0 * PI).sqrt()),
                    exhaustion: None,
                },
            )
        }
        "annulus_graphs" => {
            let idx = range(2, 5);
            let sectors = pick(p.resolution, 96);
            let rings = sectors * 7 / 16;
            let g = |a: f64| move |x: f64, y: f64| a * (x * 0.7).sin() * (y * 0.7).sin();
            let members = idx
                .iter()
                .map(|&i| annulus_graph(0.5, 4.0, rings, sectors, g(0.1 + 0.1 / i as f64)))
                .collect::<Result<Vec<_>>>()?;
            (
                idx.clone(),
                members,
                annulus_graph(0.5, 4.0, rings, sectors, g(0.1))?,
                Annotations {
                    components: 1,
                    compact: false,
                    diffeomorphic: true,
                    limit_curvature: None,
                    member_a_l2: vec![None; idx.len()],
                    limit_a_l2: None,
                    exhaustion: Some(Exhaustion { scale: 1.0, omega: OmegaSpec::OutsideCylinder { radius: 0.4 } }),
                },
            )
        }
        "line_family" => {
            let idx = range(2, 8);
            let samples = 2 * pick(p.resolution, 50) * 8 + 1;
            let members = idx
                .iter()
                .map(|&i| {
                    let th = 0.2 / i as f64;
                    parametric_curve(move |t| vec![t * th.cos(), t * th.sin()], -8.0, 8.0, samples)
                })
                .collect::<Result<Vec<_>>>()?;
            (
                idx.clone(),
                members,
                parametric_curve(|t| vec![t, 0.0], -8.0, 8.0, samples)?,
                Annotations {
                    components: 1,
                    compact: false,
                    diffeomorphic: true,
                    limit_curvature: Some(0.0),
                    member_a_l2: vec![Some(0.0); idx.len()],
                    limit_a_l2: Some(0.0),
                    exhaustion: Some(Exhaustion::balls(1.0)),
                },
            )
        }
        "shrinking_perturbation" => {
            let idx = range(2, 16);
            let samples = 2 * pick(p.resolution, 100) * 5 + 1;
            let members = idx
                .iter()
                .map(|&i| {
                    let a = i as f64;
                    parametric_curve(move |t| vec![t, (a * t).sin() / (a * a)], -5.0, 5.0, samples)
                })
                .collect::<Result<Vec<_>>>()?;
            (
                idx.clone(),
                members,
                parametric_curve(|t| vec![t, 0.0], -5.0, 5.0, samples)?,
                Annotations {
                    components: 1,
                    compact: false,
                    diffeomorphic: true,
                    limit_curvature: Some(0.0),
                    member_a_l2: vec![None; idx.len()],
                    limit_a_l2: Some(0.0),
                    exhaustion: Some(Exhaustion::balls(1.0)),
                },
            )
        }
        other => return Err(GeomError::UnknownScenario(other.to_string())),
    };
    Ok(Scenario { name: name.to_string(), indices, members, limit, annotations: ann })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_length() {
        let c = circle([0.0, 0.0], 1.0, 720).unwrap();
        assert!((c.total_volume() - 2.0 * PI).abs() < 1e-4);
        assert!((0..c.num_vertices()).all(|v| !c.is_boundary(v)));
    }

    #[test]
    fn icosphere_is_closed() {
        let s = icosphere(1.0, 3).unwrap();
        assert_eq!(s.num_vertices(), 642);
        assert!((0..s.num_vertices()).all(|v| !s.is_boundary(v)));
        assert!((s.total_volume() - 4.0 * PI).abs() < 0.1, "{}", s.total_volume());
    }

    #[test]
    fn deterministic() {
        for name in SCENARIOS {
            let p = GenParams { i_min: 2, i_max: 3, resolution: 0 };
            let a = generate(name, p).unwrap();
            let b = generate(name, p).unwrap();
            assert_eq!(a.members, b.members, "{name}");
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(generate("torus", GenParams::default()), Err(GeomError::UnknownScenario(_))));
    }

    #[test]
    fn hairpin_is_connected_curve() {
        let h = hairpin(1.0, 4.0, 3.0, 0.05).unwrap();
        let boundary = (0..h.num_vertices()).filter(|&v| h.is_boundary(v)).count();
        assert_eq!(boundary, 2);
    }
}
