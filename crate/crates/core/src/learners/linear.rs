use nalgebra::{DMatrix, DVector};

use super::Parameters;
use crate::error::{Error, Result};

/// Weighted least squares with intercept and ridge penalty on the slopes,
/// solved by Householder QR of the row-augmented system
/// `[sqrt(w)·[1 X]; sqrt(ridge)·[0 I]]`.
pub(super) fn fit(cols: &[&[f64]], y: &[f64], weights: Option<&[f64]>, ridge: f64) -> Result<Parameters> {
    let n = y.len();
    let p = cols.len();
    let extra = if ridge > 0.0 { p } else { 0 };
    let mut a = DMatrix::<f64>::zeros(n + extra, p + 1);
    let mut b = DVector::<f64>::zeros(n + extra);
    for i in 0..n {
        let sw = weights.map_or(1.0, |w| w[i].sqrt());
        a[(i, 0)] = sw;
        for (j, col) in cols.iter().enumerate() {
            a[(i, j + 1)] = sw * col[i];
        }
        b[i] = sw * y[i];
    }
    let sr = ridge.sqrt();
    for j in 0..extra {
        a[(n + j, j + 1)] = sr;
    }
    if n + extra < p + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{n} rows cannot determine {} coefficients without ridge",
            p + 1
        )));
    }
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    let beta = r
        .solve_upper_triangular(&qtb)
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::DimensionMismatch("singular design; raise the ridge".into()))?;
    Ok(Parameters::Linear {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use crate::learners::{Design, LearnerSpec};

    fn one_feature(x: Vec<f64>) -> Design {
        let n = x.len();
        Design::new(vec!["x".into()], vec![x], n).unwrap()
    }

    #[test]
    fn two_point_line() {
        let m = LearnerSpec::linear()
            .fit(&one_feature(vec![0.0, 1.0]), &[1.0, 3.0], None)
            .unwrap();
        assert!((m.intercept().unwrap() - 1.0).abs() < 1e-7);
        assert!((m.coefficient("x").unwrap() - 2.0).abs() < 1e-7);
    }

    #[test]
    fn noiseless_recovery() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 7.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let d = one_feature(x);
        let m = LearnerSpec::linear().fit(&d, &y, None).unwrap();
        assert!((m.coefficient("x").unwrap() - 2.0).abs() < 1e-9);
        let pred = m.predict(&d).unwrap();
        let rss: f64 = pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum();
        assert!(rss < 1e-12);
    }

    #[test]
    fn weights_select_rows() {
        // zero weight removes the outlier entirely
        let d = one_feature(vec![0.0, 1.0, 2.0]);
        let mut spec = LearnerSpec::linear();
        spec.ridge = 0.0;
        let m = spec.fit(&d, &[0.0, 1.0, 100.0], Some(&[1.0, 1.0, 0.0])).unwrap();
        assert!((m.coefficient("x").unwrap() - 1.0).abs() < 1e-12);
        assert!(m.intercept().unwrap().abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_handled_by_ridge() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let d = Design::new(vec!["a".into(), "b".into()], vec![x.clone(), x.clone()], 10).unwrap();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let m = LearnerSpec::linear().fit(&d, &y, None).unwrap();
        let pred = m.predict(&d).unwrap();
        for (p, t) in pred.iter().zip(&y) {
            assert!((p - t).abs() < 1e-6);
        }
    }

    #[test]
    fn intercept_only() {
        let m = LearnerSpec::linear().fit(&Design::empty(3), &[1.0, 2.0, 6.0], None).unwrap();
        assert!((m.intercept().unwrap() - 3.0).abs() < 1e-12);
    }
}
