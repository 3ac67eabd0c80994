use nalgebra::{DMatrix, DVector};

use super::Parameters;
use crate::error::{Error, Result};

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of `(intercept, coefficients)`.
pub fn log_likelihood(cols: &[&[f64]], y: &[f64], intercept: f64, coefficients: &[f64]) -> f64 {
    (0..y.len())
        .map(|i| {
            let eta = intercept + cols.iter().zip(coefficients).map(|(c, b)| b * c[i]).sum::<f64>();
            if y[i] == 1.0 {
                -softplus(-eta)
            } else {
                -softplus(eta)
            }
        })
        .sum()
}

/// Newton-Raphson (IRLS) with step halving. Separable data never meets the
/// tolerance; the fit then stops at `max_iterations` without error.
pub(super) fn fit(cols: &[&[f64]], y: &[f64], max_iterations: usize, tolerance: f64) -> Result<Parameters> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("logistic target must be 0/1".into()));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::SingleClass("target".into()));
    }
    let n = y.len();
    let k = cols.len() + 1;
    let row = |i: usize, j: usize| if j == 0 { 1.0 } else { cols[j - 1][i] };

    let mean = y.iter().sum::<f64>() / n as f64;
    let mut beta = DVector::<f64>::zeros(k);
    beta[0] = (mean / (1.0 - mean)).ln();
    let ll = |b: &DVector<f64>| log_likelihood(cols, y, b[0], &b.as_slice()[1..]);
    let mut current = ll(&beta);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iterations {
        iterations += 1;
        let mut hess = DMatrix::<f64>::zeros(k, k);
        let mut grad = DVector::<f64>::zeros(k);
        for i in 0..n {
            let eta: f64 = (0..k).map(|j| beta[j] * row(i, j)).sum();
            // p(1-p) and y-p evaluated without cancellation at large |eta|
            let w = sigmoid(eta) * sigmoid(-eta);
            let resid = if y[i] == 1.0 { sigmoid(-eta) } else { -sigmoid(eta) };
            for a in 0..k {
                let xa = row(i, a);
                grad[a] += xa * resid;
                for b in 0..=a {
                    hess[(a, b)] += w * xa * row(i, b);
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let step = solve_spd(hess, &grad);
        if step.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + &step * scale;
            let value = ll(&candidate);
            if value >= current - 1e-12 * current.abs().max(1.0) {
                beta = candidate;
                current = value;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
        if step.amax() * scale < tolerance {
            converged = true;
            break;
        }
    }
    Ok(Parameters::Logistic {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        iterations,
        converged,
    })
}

/// Solve `H x = g` for symmetric PSD `H`, adding diagonal jitter until the
/// Cholesky factorization succeeds.
fn solve_spd(hess: DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let scale = (0..hess.nrows()).map(|i| hess[(i, i)]).fold(0.0_f64, f64::max).max(1e-300);
    let mut jitter = 0.0;
    loop {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += jitter;
        }
        if let Some(ch) = h.cholesky() {
            return ch.solve(grad);
        }
        jitter = if jitter == 0.0 { scale * 1e-12 } else { jitter * 10.0 };
        if jitter > scale * 1e6 {
            return DVector::from_element(grad.len(), f64::NAN);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Design, LearnerSpec, Parameters};

    fn one_feature(x: Vec<f64>) -> Design {
        let n = x.len();
        Design::new(vec!["x".into()], vec![x], n).unwrap()
    }

    #[test]
    fn symmetric_data_has_zero_intercept() {
        let x = vec![-1.0, 1.0, -1.0, 1.0, -2.0, 2.0];
        let y = [0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let m = LearnerSpec::logistic().fit(&one_feature(x), &y, None).unwrap();
        assert!(m.intercept().unwrap().abs() < 1e-9);
    }

    #[test]
    fn intercept_only_recovers_log_odds() {
        let y = [1.0, 0.0, 0.0, 0.0];
        let m = LearnerSpec::logistic().fit(&Design::empty(4), &y, None).unwrap();
        let p = m.predict(&Design::empty(1)).unwrap()[0];
        assert!((p - 0.25).abs() < 1e-12);
    }

    #[test]
    fn separable_data_stops_at_cap() {
        let x = vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let d = one_feature(x);
        let m = LearnerSpec::logistic().fit(&d, &y, None).unwrap();
        match &m.params {
            Parameters::Logistic { iterations, converged, .. } => {
                assert_eq!(*iterations, 100);
                assert!(!converged);
            }
            _ => unreachable!(),
        }
        let p = m.predict(&d).unwrap();
        assert!(p.windows(2).all(|w| w[0] <= w[1]), "{p:?}");
        assert!(m.coefficient("x").unwrap() > 0.0);
    }

    #[test]
    fn single_class_and_non_binary_rejected() {
        let d = one_feature(vec![0.0, 1.0]);
        assert!(matches!(
            LearnerSpec::logistic().fit(&d, &[1.0, 1.0], None),
            Err(Error::SingleClass(_))
        ));
        assert!(matches!(
            LearnerSpec::logistic().fit(&d, &[1.0, 2.0], None),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
