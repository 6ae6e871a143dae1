use std::sync::Arc;
use nalgebra::{DMatrix, DVector};
use asyncfo_core::model::{BlockLayout, BoxSet, OutputMap};
use asyncfo_core::Error;
use asyncfo_core::objective::*;
use proptest::prelude::*;

fn scalar_epoch(qm: f64, qv: f64, pm: f64, theta: f64) -> QuadraticEpoch {
    QuadraticEpoch::new(
        0.0,
        DMatrix::from_element(1, 1, qm),
        DVector::from_element(1, qv),
        DMatrix::from_element(1, 1, pm),
        DVector::from_element(1, theta),
        0.0,
    )
    .unwrap()
}

fn scalar_map() -> (BlockLayout, OutputMap) {
    let layout = BlockLayout::uniform(1, 1, 1).unwrap();
    let map = OutputMap::new(DMatrix::from_element(1, 1, 1.0), &layout).unwrap();
    (layout, map)
}

#[test]
fn eval_j_examples() {
    let e = QuadraticEpoch::new(
        0.0,
        DMatrix::identity(2, 2) * 2.0,
        DVector::zeros(2),
        DMatrix::identity(2, 2) * 2.0,
        DVector::zeros(2),
        0.0,
    )
    .unwrap();
    let ones = DVector::from_element(2, 1.0);
    assert_eq!(e.eval_f(&ones).unwrap(), 2.0);
    assert_eq!(e.eval_g(&ones).unwrap(), 2.0);
    assert_eq!(eval_j(&e, &ones, &ones).unwrap(), 4.0);

    let shifted = QuadraticEpoch::new(
        0.0,
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        -3.5,
    )
    .unwrap();
    assert_eq!(eval_j(&shifted, &DVector::zeros(2), &DVector::zeros(2)).unwrap(), -3.5);
    assert!(matches!(
        eval_j(&shifted, &DVector::zeros(3), &DVector::zeros(2)),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn grad_block_examples() {
    let (layout, map) = scalar_map();
    let e = scalar_epoch(1.0, 0.0, 1.0, 1.0);
    let g = grad_block(&e, &map, &layout, 0, &DVector::from_element(1, 2.0), &DVector::zeros(1)).unwrap();
    assert_eq!(g[0], 1.0);
    // Interior minimizer x* = 0.5 has zero gradient.
    let g = grad_block(&e, &map, &layout, 0, &DVector::from_element(1, 0.5), &DVector::from_element(1, 0.5))
        .unwrap();
    assert_eq!(g[0], 0.0);
    // g-gradient vanishes at the target.
    let e = scalar_epoch(1.0, 0.0, 1.0, 0.25);
    let g = grad_block(&e, &map, &layout, 0, &DVector::from_element(1, -3.0), &DVector::from_element(1, 0.25))
        .unwrap();
    assert_eq!(g[0], -3.0);
    assert!(matches!(
        grad_block(&e, &map, &layout, 1, &DVector::zeros(1), &DVector::zeros(1)),
        Err(Error::InvalidAgent { .. })
    ));
}

#[test]
fn rejects_indefinite_matrices() {
    let bad = QuadraticEpoch::new(
        0.0,
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        DVector::zeros(2),
        DMatrix::identity(1, 1),
        DVector::zeros(1),
        0.0,
    );
    assert!(matches!(bad, Err(Error::NotPositiveDefinite { matrix: "Q", .. })));
    let bad = QuadraticEpoch::new(
        0.0,
        DMatrix::identity(1, 1),
        DVector::zeros(1),
        DMatrix::zeros(1, 1),
        DVector::zeros(1),
        0.0,
    );
    assert!(matches!(bad, Err(Error::NotPositiveDefinite { matrix: "P", .. })));
}

#[test]
fn linear_output_form_matches_direct_evaluation() {
    let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let pv = DVector::from_column_slice(&[0.3, -1.2]);
    let e = QuadraticEpoch::from_linear_output(
        0.0,
        DMatrix::identity(1, 1),
        DVector::zeros(1),
        p.clone(),
        pv.clone(),
    )
    .unwrap();
    for y in [[0.0, 0.0], [1.0, -2.0], [3.5, 0.25]] {
        let y = DVector::from_column_slice(&y);
        let direct = 0.5 * y.dot(&(&p * &y)) + pv.dot(&y);
        let got = e.eval_g(&y).unwrap() + e.offset();
        assert!((direct - got).abs() < 1e-12);
    }
}

#[test]
fn constants_examples() {
    let layout = BlockLayout::uniform(2, 1, 1).unwrap();
    let map = OutputMap::new(DMatrix::identity(2, 2), &layout).unwrap();
    let set = BoxSet::uniform(2, -1.0, 1.0).unwrap();
    let e = QuadraticEpoch::new(
        0.0,
        DMatrix::identity(2, 2) * 2.0,
        DVector::zeros(2),
        DMatrix::identity(2, 2) * 2.0,
        DVector::zeros(2),
        0.0,
    )
    .unwrap();
    let opts = ConstantsOptions {
        lambda_eb: Some(1.0),
        ..Default::default()
    };
    let xs = DVector::zeros(2);
    let c = epoch_constants(&e, &xs, None, &set, &map, &opts).unwrap();
    assert!((c.l_x - 2.0).abs() < 1e-12);
    assert!((c.l_y - 2.0).abs() < 1e-12);
    assert!((c.l - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    assert!((c.p_strong - 2.0).abs() < 1e-12);
    assert_eq!((c.sigma, c.l_t, c.delta), (0.0, 0.0, 0.0));

    let same = epoch_constants(&e, &xs, Some(PreviousEpoch { epoch: &e, x_star: &xs }), &set, &map, &opts).unwrap();
    assert_eq!((same.sigma, same.l_t), (0.0, 0.0));

    let (layout1, map1) = scalar_map();
    let _ = layout1;
    let e1 = scalar_epoch(1.0, 0.0, 1.0, 0.0);
    let set1 = BoxSet::uniform(1, -1.0, 1.0).unwrap();
    let c1 = epoch_constants(&e1, &DVector::zeros(1), None, &set1, &map1, &opts).unwrap();
    assert_eq!(c1.m_x, 1.0);
}

#[test]
fn temporal_change_is_detected() {
    let (_, map) = scalar_map();
    let set = BoxSet::uniform(1, -1.0, 1.0).unwrap();
    let a = scalar_epoch(1.0, 0.0, 1.0, 0.0);
    let b = scalar_epoch(1.0, 0.5, 1.0, 0.0).at_time(2.0);
    let opts = ConstantsOptions {
        lambda_eb: Some(1.0),
        ..Default::default()
    };
    let xa = DVector::zeros(1);
    let xb = DVector::from_element(1, -0.25);
    let c = epoch_constants(&b, &xb, Some(PreviousEpoch { epoch: &a, x_star: &xa }), &set, &map, &opts).unwrap();
    assert_eq!(c.delta, 2.0);
    assert!((c.sigma - 0.25).abs() < 1e-15);
    // |0.5 x| is maximised at a corner of [-1, 1].
    assert!((c.delta_lt() - 0.5).abs() < 1e-12);
}

#[test]
fn epoch_schedule_boundaries() {
    let e = scalar_epoch(1.0, 0.0, 1.0, 0.0);
    let s = EpochSchedule::fixed(vec![e.clone(), e.clone(), e], vec![2, 1, 3], 2).unwrap();
    assert_eq!((s.eta(0), s.eta(1), s.eta(2), s.horizon()), (4, 6, 12, 12));
    assert_eq!((s.start(0), s.start(1), s.start(2)), (0, 4, 6));
    assert_eq!(s.epoch_of_tick(3), 0);
    assert_eq!(s.epoch_of_tick(4), 1);
    assert_eq!(s.epoch_of_tick(11), 2);
    assert_eq!(s.epoch_of_state(0), 0);
    assert_eq!(s.epoch_of_state(4), 0);
    assert_eq!(s.epoch_of_state(5), 1);
    assert_eq!(s.epoch_of_state(12), 2);
    assert!(EpochSchedule::from_kappa(vec![], vec![], 2).is_err());
    let e = scalar_epoch(1.0, 0.0, 1.0, 0.0);
    assert!(EpochSchedule::from_kappa(vec![EpochSource::Fixed(Arc::new(e))], vec![3], 2).is_err());
}

fn random_instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-1.0f64..1.0, 9),
        prop::collection::vec(-1.0f64..1.0, 4),
        prop::collection::vec(-1.0f64..1.0, 3),
        prop::collection::vec(-1.0f64..1.0, 2),
        prop::collection::vec(-1.0f64..1.0, 6),
        prop::collection::vec(-2.0f64..2.0, 3),
        prop::collection::vec(-2.0f64..2.0, 3),
    )
}

fn build(a: &[f64], b: &[f64], q: &[f64], th: &[f64], c: &[f64]) -> (QuadraticEpoch, OutputMap, BlockLayout) {
    let a = DMatrix::from_row_slice(3, 3, a);
    let b = DMatrix::from_row_slice(2, 2, b);
    let qm = a.transpose() * &a + DMatrix::identity(3, 3) * 0.5;
    let pm = b.transpose() * &b + DMatrix::identity(2, 2) * 0.5;
    let e = QuadraticEpoch::new(
        0.0,
        qm,
        DVector::from_column_slice(q),
        pm,
        DVector::from_column_slice(th),
        0.0,
    )
    .unwrap();
    let layout = BlockLayout::new(vec![1, 2], vec![1, 1]).unwrap();
    let map = OutputMap::new(DMatrix::from_row_slice(2, 3, c), &layout).unwrap();
    (e, map, layout)
}

proptest! {
    #[test]
    fn gradient_matches_finite_differences((a, b, q, th, c, x, d) in random_instance()) {
        let (e, map, layout) = build(&a, &b, &q, &th, &c);
        let x = DVector::from_vec(x);
        let d = DVector::from_vec(d).normalize();
        let h = 1e-5;
        let jx = |v: &DVector<f64>| e.eval_j(v, &map.apply(v)).unwrap();
        let fd = (jx(&(&x + &d * h)) - jx(&(&x - &d * h))) / (2.0 * h);
        let y = map.apply(&x);
        let mut full = DVector::zeros(3);
        for i in 0..2 {
            let g = grad_block(&e, &map, &layout, i, &x, &y).unwrap();
            full.rows_mut(layout.input_range(i).start, g.len()).copy_from(&g);
        }
        let an = full.dot(&d);
        prop_assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()));
        prop_assert!((&full - e.grad_x(&map, &x, &y)).norm() <= 1e-12 * (1.0 + full.norm()));
    }

    #[test]
    fn constants_certify_lipschitz_bounds_and_convexity(
        (a, b, q, th, c, u1, u2) in random_instance()
    ) {
        let (e, map, _) = build(&a, &b, &q, &th, &c);
        let set = BoxSet::new(
            DVector::from_column_slice(&[-1.0, -2.0, 0.0]),
            DVector::from_column_slice(&[1.0, 0.5, 3.0]),
        ).unwrap();
        let opts = ConstantsOptions { lambda_eb: Some(1.0), ..Default::default() };
        let k = epoch_constants(&e, &DVector::zeros(3), None, &set, &map, &opts).unwrap();
        let to_unit = |v: &[f64]| v.iter().map(|t| (t + 2.0) / 4.0).collect::<Vec<_>>();
        let x1 = set.lerp(&to_unit(&u1));
        let x2 = set.lerp(&to_unit(&u2));
        let (y1, y2) = (map.apply(&x1), map.apply(&x2));
        let dx = (&x1 - &x2).norm();
        prop_assert!((e.grad_f(&x1) - e.grad_f(&x2)).norm() <= k.l_x * dx * (1.0 + 1e-12) + 1e-12);
        prop_assert!((e.grad_g(&y1) - e.grad_g(&y2)).norm() <= k.l_y * (&y1 - &y2).norm() * (1.0 + 1e-12) + 1e-12);
        let jd = (e.grad_x(&map, &x1, &y1) - e.grad_x(&map, &x2, &y2)).norm();
        let joint = (dx * dx + (&y1 - &y2).norm_squared()).sqrt();
        prop_assert!(jd <= k.l * joint * (1.0 + 1e-12) + 1e-12);
        prop_assert!(e.grad_f(&x1).norm() <= k.m_x * (1.0 + 1e-12));
        prop_assert!(e.grad_g(&y1).norm() <= k.m_y * (1.0 + 1e-12));
        let lhs = e.eval_f(&x2).unwrap();
        let rhs = e.eval_f(&x1).unwrap() + e.grad_f(&x1).dot(&(&x2 - &x1)) + 0.5 * k.p_strong * dx * dx;
        prop_assert!(lhs >= rhs - 1e-10 * (1.0 + lhs.abs()));
    }
}
