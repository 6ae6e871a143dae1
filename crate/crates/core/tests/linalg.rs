use nalgebra::{DMatrix, DVector};
use asyncfo_core::Error;
use asyncfo_core::linalg::*;

#[test]
fn spectral_norm_examples() {
    assert!((spectral_norm(&DMatrix::identity(3, 3)) - 1.0).abs() < 1e-12);
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
    assert!((spectral_norm(&d) - 3.0).abs() < 1e-12);
    let nil = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
    assert!((spectral_norm(&nil) - 2.0).abs() < 1e-12);
    assert_eq!(spectral_norm(&DMatrix::zeros(4, 2)), 0.0);
}

#[test]
fn power_iteration_agrees_with_svd() {
    let m = DMatrix::from_fn(70, 80, |r, c| ((r * 31 + c * 17) % 13) as f64 / 13.0 - 0.4);
    let exact = m.singular_values().max();
    let approx = spectral_norm(&m);
    assert!((exact - approx).abs() <= 1e-10 * exact, "{exact} vs {approx}");
}

#[test]
fn spd_validation() {
    let ok = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    assert!(validate_spd(&ok, "Q").is_ok());
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    match validate_spd(&indefinite, "P") {
        Err(Error::NotPositiveDefinite { matrix, .. }) => assert_eq!(matrix, "P"),
        other => panic!("unexpected {other:?}"),
    }
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    assert!(matches!(
        validate_spd(&asym, "Q"),
        Err(Error::NotSymmetric { .. })
    ));
}
