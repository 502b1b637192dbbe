use immersa::grid::GridBall;
use immersa::linalg::{rotation_distance, EuclideanIsometry};
use immersa::measures::MeasureHandle;
use immersa::patch::GraphPatch;
use immersa::projector::{build_frame, frame_vertical, project_point};
use immersa::scenario::circle;
use immersa::system::{system_distance, GraphSystem, SystemEntry};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn entry(theta: f64, shift: (f64, f64), a: f64, b: f64) -> SystemEntry {
    let grid = GridBall::new(1, 0.3, 0.03).unwrap();
    let patch = GraphPatch::from_fn(grid, 1, false, |x| vec![a * x[0] * x[0] + b * x[0].powi(3)]).unwrap();
    let iso = EuclideanIsometry::new(
        EuclideanIsometry::planar_rotation(theta),
        DVector::from_vec(vec![shift.0, shift.1]),
        1e-12,
    )
    .unwrap();
    SystemEntry::new(iso, patch)
}

fn entry_strategy() -> impl Strategy<Value = SystemEntry> {
    (-3.0..3.0f64, -1.0..1.0f64, -1.0..1.0f64, -0.5..0.5f64, -0.5..0.5f64)
        .prop_map(|(t, x, y, a, b)| entry(t, (x, y), a, b))
}

fn system_strategy() -> impl Strategy<Value = GraphSystem> {
    prop::collection::vec(entry_strategy(), 4).prop_map(|e| GraphSystem::new(e, None, Some(vec![0, 1, 3, 4])).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms(a in system_strategy(), b in system_strategy(), c in system_strategy()) {
        let ab = system_distance(&a, &b, None).unwrap();
        let ba = system_distance(&b, &a, None).unwrap();
        let ac = system_distance(&a, &c, None).unwrap();
        let cb = system_distance(&c, &b, None).unwrap();
        prop_assert_eq!(system_distance(&a, &a, None).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn truncations_are_monotone(a in system_strategy(), b in system_strategy()) {
        let mut prev = 0.0;
        for l in 1..=3 {
            let d = system_distance(&a, &b, Some(l)).unwrap();
            prop_assert!(d + 1e-12 >= prev);
            prev = d;
        }
        prop_assert!((prev - system_distance(&a, &b, None).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn rotation_distance_is_symmetric(s in -3.0..3.0f64, t in -3.0..3.0f64) {
        let (r, q) = (EuclideanIsometry::planar_rotation(s), EuclideanIsometry::planar_rotation(t));
        prop_assert!((rotation_distance(&r, &q) - rotation_distance(&q, &r)).abs() <= 1e-14);
    }

    #[test]
    fn alignment_undoes_a_frame_flip(e in entry_strategy()) {
        // same graph seen in the frame -R: v(y) = -u(-y)
        let g = &e.patch.grid;
        let values = (0..g.len()).map(|n| -e.patch.value(g.lookup(&[-g.index(n)[0]]).unwrap())[0]).collect();
        let flipped_patch = GraphPatch::new(g.clone(), 1, values, false).unwrap();
        let flipped = SystemEntry::new(
            EuclideanIsometry { rotation: -&e.iso.rotation, translation: e.iso.translation.clone() },
            flipped_patch,
        );
        let back = flipped.aligned_to(&e.iso.rotation).unwrap();
        prop_assert!((&back.iso.rotation - &e.iso.rotation).amax() <= 1e-12);
        for (u, v) in back.patch.values.iter().zip(&e.patch.values) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn frame_identity(n in prop::collection::vec(-0.5..0.5f64, 4), t in prop::collection::vec(-2.0..2.0f64, 2)) {
        let nx = DMatrix::from_row_slice(2, 2, &n);
        let back = frame_vertical(&build_frame(&nx), &t);
        for (a, b) in back.iter().zip(&t) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn contraction_bound(alpha in 0.05..0.28f64, sn in -1.0..1.0f64, ss in -1.0..1.0f64, x in -0.5..0.5f64, shift in -0.05..0.05f64) {
        // |N| ≤ 2α and |Dũ| ≤ 2α give a contraction factor of at most 4α²
        let n = DMatrix::from_element(1, 1, 2.0 * alpha * sn);
        let s = 2.0 * alpha * ss;
        let target = move |y: &[f64]| Some(vec![shift + s * y[0].sin()]);
        let p = project_point(&[0.0], &target, &n, &[x], 1e-13, 500).unwrap();
        prop_assert!(p.contraction <= 4.0 * alpha * alpha + 1e-6);
        prop_assert!(p.residual <= 1e-10);
    }

    #[test]
    fn mass_is_isometry_invariant(theta in -3.0..3.0f64, tx in -2.0..2.0f64, ty in -2.0..2.0f64, cx in -1.5..1.5f64, r in 0.1..2.5f64) {
        let c = circle([0.0, 0.0], 1.0, 240).unwrap();
        let iso = EuclideanIsometry::new(EuclideanIsometry::planar_rotation(theta), DVector::from_vec(vec![tx, ty]), 1e-12).unwrap();
        let moved = c.transformed(&iso);
        let center = DVector::from_vec(vec![cx, 0.3]);
        let m0 = MeasureHandle::from_immersion(&c).ball_mass_at(center.as_slice(), r);
        let m1 = MeasureHandle::from_immersion(&moved).ball_mass_at(iso.apply(&center).as_slice(), r);
        prop_assert!((m0 - m1).abs() <= 1e-9 * (1.0 + m0));
    }

    #[test]
    fn mass_is_monotone_and_bounded(r1 in 0.05..3.0f64, dr in 0.0..1.0f64) {
        let c = circle([0.0, 0.0], 1.0, 240).unwrap();
        let mh = MeasureHandle::from_immersion(&c);
        let a = mh.ball_mass_at(&[0.4, 0.1], r1);
        let b = mh.ball_mass_at(&[0.4, 0.1], r1 + dr);
        prop_assert!(a <= b + 1e-12);
        prop_assert!(b <= mh.total + 1e-12);
    }
}

#[test]
fn mass_adds_over_disjoint_pieces() {
    let a = circle([0.0, 0.0], 1.0, 200).unwrap();
    let b = circle([5.0, 0.0], 0.5, 200).unwrap();
    let (ma, mb) = (MeasureHandle::from_immersion(&a), MeasureHandle::from_immersion(&b));
    // one ball catching both pieces versus the two pieces separately
    let both = ma.ball_mass_at(&[2.5, 0.0], 4.0) + mb.ball_mass_at(&[2.5, 0.0], 4.0);
    assert!((both - (a.total_volume() + b.total_volume())).abs() < 1e-9);
}
