use nalgebra::{DMatrix, DVector};
use asyncfo_core::Error;
use asyncfo_core::model::*;
use proptest::prelude::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

#[test]
fn projection_examples() {
    let sq = BoxSet::uniform(2, -1.0, 1.0).unwrap();
    assert_eq!(project_box(&v(&[2.0, -3.0]), &sq).unwrap(), v(&[1.0, -1.0]));
    let unit = BoxSet::uniform(2, 0.0, 1.0).unwrap();
    assert_eq!(project_box(&v(&[0.3, 0.7]), &unit).unwrap(), v(&[0.3, 0.7]));
    let rect = BoxSet::new(v(&[0.0, 0.0]), v(&[1.0, 2.0])).unwrap();
    assert_eq!(project_box(&v(&[0.5, 5.0]), &rect).unwrap(), v(&[0.5, 2.0]));
}

#[test]
fn projection_dimension_mismatch() {
    let sq = BoxSet::uniform(2, -1.0, 1.0).unwrap();
    assert!(matches!(
        project_box(&v(&[1.0, 2.0, 3.0]), &sq),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn diameter_examples() {
    assert_eq!(diameter(&BoxSet::uniform(1, -1.0, 1.0).unwrap()), 2.0);
    let big = BoxSet::uniform(20, -10.0, 10.0).unwrap();
    assert!((diameter(&big) - 20.0 * 20f64.sqrt()).abs() < 1e-12);
    assert!((diameter(&big) - 89.4427).abs() < 1e-4);
    let point = BoxSet::new(v(&[0.5, 2.0]), v(&[0.5, 2.0])).unwrap();
    assert_eq!(diameter(&point), 0.0);
}

#[test]
fn empty_box_rejected() {
    assert!(matches!(
        BoxSet::new(v(&[0.0, 1.0]), v(&[1.0, 0.0])),
        Err(Error::EmptyBox { index: 1, .. })
    ));
}

#[test]
fn layout_offsets_and_validation() {
    let l = BlockLayout::new(vec![2, 1, 3], vec![1, 2, 1]).unwrap();
    assert_eq!((l.agents(), l.n(), l.m()), (3, 6, 4));
    assert_eq!(l.input_range(2), 3..6);
    assert_eq!(l.output_range(1), 1..3);
    assert!(BlockLayout::new(vec![1, 2], vec![1]).is_err());
    assert!(BlockLayout::new(vec![1, 0], vec![1, 1]).is_err());
    assert!(BlockLayout::new(vec![], vec![]).is_err());
    assert!(l.check_agent(3).is_err());
}

#[test]
fn output_map_blocks_reassemble() {
    let l = BlockLayout::new(vec![2, 1], vec![1, 2]).unwrap();
    let c = DMatrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64 - 4.0);
    let map = OutputMap::new(c.clone(), &l).unwrap();
    let cols = DMatrix::from_columns(
        &(0..2)
            .flat_map(|i| map.col_block(i).column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    );
    assert_eq!(cols, c);
    let rows = DMatrix::from_rows(
        &(0..2)
            .flat_map(|i| map.row_block(i).row_iter().map(|r| r.into_owned()).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    );
    assert_eq!(rows, c);
    for k in 0..20 {
        let probe = DVector::from_fn(3, |j, _| ((k * 7 + j * 3) % 5) as f64 - 2.0);
        assert!(map.apply(&probe).norm() <= map.norm() * probe.norm() * (1.0 + 1e-12));
    }
}

fn box_and_point() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<f64>, Vec<f64>)> {
    (1usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec((-5.0f64..5.0, 0.0f64..4.0), n),
            prop::collection::vec(-12.0f64..12.0, n),
            prop::collection::vec(0.0f64..1.0, n),
        )
    })
    .prop_map(|(b, p, u)| (b.into_iter().map(|(lo, w)| (lo, lo + w)).collect(), p, u))
}

proptest! {
    #[test]
    fn projection_properties((bounds, point, u) in box_and_point()) {
        let lo = DVector::from_iterator(bounds.len(), bounds.iter().map(|b| b.0));
        let hi = DVector::from_iterator(bounds.len(), bounds.iter().map(|b| b.1));
        let set = BoxSet::new(lo, hi).unwrap();
        let p = DVector::from_vec(point);
        let z = set.project(&p).unwrap();
        prop_assert!(set.contains(&z));
        prop_assert_eq!(set.project(&z).unwrap(), z.clone());
        let w = set.lerp(&u);
        prop_assert!((&z - &p).norm() <= (&w - &p).norm() + 1e-12);
        prop_assert!((&z - &p).dot(&(&z - &w)) <= 1e-12);

        // Per-block projection agrees with projecting the whole vector.
        let n = set.dim();
        let dims: Vec<usize> = if n > 1 { vec![1, n - 1] } else { vec![1] };
        let layout = BlockLayout::new(dims.clone(), vec![1; dims.len()]).unwrap();
        let proj = BoxProjector::new(set.clone(), layout.clone()).unwrap();
        let mut blockwise = p.clone();
        for i in 0..layout.agents() {
            let r = layout.input_range(i);
            proj.project_block(i, &mut blockwise.as_mut_slice()[r]);
        }
        prop_assert_eq!(blockwise, z);
    }
}
