use causet::estimators::{
    ipw_ate, psm_att, regression_adjustment, stratified_ate, weighted_ate, EffectQuery, PropensityModel, DEFAULT_CLIP,
};
use causet::frame::{Column, Frame};
use causet::rng::SplitMix64;
use causet::synth;
use proptest::prelude::*;

/// Confounded data: z ~ N(0,1), t ~ Bernoulli(sigmoid(z)), y = 2z + tau t + noise.
fn confounded(n: usize, tau: f64, seed: u64) -> Frame {
    let mut rng = SplitMix64::new(seed);
    let (mut z, mut t, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let zi = rng.normal();
        let ti = if rng.uniform() < 1.0 / (1.0 + (-zi).exp()) { 1.0 } else { 0.0 };
        z.push(zi);
        t.push(ti);
        y.push(2.0 * zi + tau * ti + 0.5 * rng.normal());
    }
    Frame::new(vec![Column::numeric("z", z), Column::binary("t", t), Column::numeric("y", y)]).unwrap()
}

fn query() -> EffectQuery {
    EffectQuery::new("t", "y", vec!["z".into()])
}

fn all_four(f: &Frame) -> [f64; 4] {
    let q = query();
    let pm = PropensityModel::fit(f, "t", &q.adjustment, DEFAULT_CLIP).unwrap();
    [
        regression_adjustment(f, &q).unwrap().value,
        psm_att(f, &q, &pm).unwrap().value,
        ipw_ate(f, &q, &pm).unwrap().value,
        stratified_ate(f, &q, &pm, 5).unwrap().value,
    ]
}

fn map_y(f: &Frame, g: impl Fn(f64) -> f64) -> Frame {
    let y = f.numeric("y").unwrap().iter().map(|&v| g(v)).collect();
    f.with_column(Column::numeric("y", y)).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outcome_shift(seed in any::<u64>(), c in -1e3f64..1e3) {
        let f = confounded(200, 1.0, seed);
        let a = all_four(&f);
        let b = all_four(&map_y(&f, |v| v + c));
        let tol = 1e-9 * (1.0 + c.abs());
        // regression adjustment, matching and stratification are differences
        for i in [0, 1, 3] {
            prop_assert!(close(a[i], b[i], tol), "{} vs {}", a[i], b[i]);
        }
        // unnormalized weights move by c times the weight imbalance
        let pm = PropensityModel::fit(&f, "t", &query().adjustment, DEFAULT_CLIP).unwrap();
        let e = pm.scores(&f).unwrap();
        let t = f.binary("t").unwrap();
        let n = t.len() as f64;
        let imbalance: f64 = (0..t.len()).map(|i| t[i] / e[i] - (1.0 - t[i]) / (1.0 - e[i])).sum::<f64>() / n;
        prop_assert!(close(a[2] + c * imbalance, b[2], tol), "{} + {} vs {}", a[2], c * imbalance, b[2]);
    }

    #[test]
    fn outcome_scaling_scales_effects(seed in any::<u64>(), s in 0.01f64..100.0) {
        let f = confounded(200, 1.0, seed);
        let a = all_four(&f);
        let b = all_four(&map_y(&f, |v| v * s));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(close(x * s, *y, 1e-9), "{} * {} vs {}", x, s, y);
        }
    }

    #[test]
    fn relabeling_negates_regression_adjustment(seed in any::<u64>()) {
        let f = confounded(150, 0.7, seed);
        let flipped: Vec<f64> = f.binary("t").unwrap().iter().map(|v| 1.0 - v).collect();
        let g = f.with_column(Column::binary("t", flipped)).unwrap();
        let a = regression_adjustment(&f, &query()).unwrap().value;
        let b = regression_adjustment(&g, &query()).unwrap().value;
        prop_assert!(close(a, -b, 1e-10), "{} vs {}", a, b);
    }

    #[test]
    fn half_propensity_ipw_is_algebraic(seed in any::<u64>(), n in 4usize..200) {
        let mut rng = SplitMix64::new(seed);
        let mut t: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
        t[0] = 1.0;
        t[1] = 0.0;
        let y: Vec<f64> = (0..n).map(|_| rng.normal() * 10.0).collect();
        let got = weighted_ate(&t, &y, &vec![0.5; n]).unwrap();
        let nn = n as f64;
        let want = 2.0 * (0..n).map(|i| t[i] * y[i]).sum::<f64>() / nn
            - 2.0 * (0..n).map(|i| (1.0 - t[i]) * y[i]).sum::<f64>() / nn;
        prop_assert!(close(got, want, 1e-12));
    }
}

#[test]
fn ipw_hand_example() {
    assert_eq!(weighted_ate(&[1.0, 0.0], &[3.0, 1.0], &[0.5, 0.5]).unwrap(), 2.0);
}

#[test]
fn randomized_scores_concentrate() {
    let mut rng = SplitMix64::new(21);
    let n = 10_000;
    let z: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let t: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.3) { 1.0 } else { 0.0 }).collect();
    let f = Frame::new(vec![Column::numeric("z", z), Column::binary("t", t)]).unwrap();
    let s = PropensityModel::fit(&f, "t", &["z".into()], DEFAULT_CLIP).unwrap().scores(&f).unwrap();
    let (lo, hi) = s.iter().fold((1.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi - lo < 0.1, "spread {}", hi - lo);
}

#[test]
fn synthetic_scores_track_true_propensity() {
    let set = synth::generate(5000, 5, 1.0, 2).unwrap();
    let f = set.to_frame();
    let s = PropensityModel::fit(&f, "w", &set.covariate_names(), DEFAULT_CLIP).unwrap().scores(&f).unwrap();
    let e = &set.e_true;
    let (ms, me) = (s.iter().sum::<f64>() / 5000.0, e.iter().sum::<f64>() / 5000.0);
    let cov: f64 = s.iter().zip(e).map(|(a, b)| (a - ms) * (b - me)).sum();
    let vs: f64 = s.iter().map(|a| (a - ms).powi(2)).sum();
    let ve: f64 = e.iter().map(|b| (b - me).powi(2)).sum();
    assert!(cov / (vs * ve).sqrt() > 0.5);
}

#[test]
fn adjustment_removes_confounding() {
    let mut rng = SplitMix64::new(4);
    let n = 5000;
    let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let t: Vec<f64> = x.iter().map(|&v| if v + rng.normal() > 0.0 { 1.0 } else { 0.0 }).collect();
    let y: Vec<f64> = (0..n).map(|i| x[i] + t[i]).collect();
    let naive = {
        let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            if t[i] == 1.0 {
                s1 += y[i];
                n1 += 1.0;
            } else {
                s0 += y[i];
                n0 += 1.0;
            }
        }
        s1 / n1 - s0 / n0
    };
    let f = Frame::new(vec![Column::numeric("x", x), Column::binary("t", t), Column::numeric("y", y)]).unwrap();
    let adj = regression_adjustment(&f, &EffectQuery::new("t", "y", vec!["x".into()])).unwrap().value;
    assert!((adj - 1.0).abs() < 1e-6, "{adj}");
    assert!(naive > 1.0, "{naive}");
}

/// Randomized data with constant effect and its diff-in-means standard error.
fn randomized(n: usize, tau: f64, seed: u64) -> (Frame, f64) {
    let mut rng = SplitMix64::new(seed);
    let z: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let t: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
    let y: Vec<f64> = (0..n).map(|i| z[i] + tau * t[i] + rng.normal()).collect();
    let arm = |a: f64| {
        let v: Vec<f64> = (0..n).filter(|&i| t[i] == a).map(|i| y[i]).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0) / v.len() as f64
    };
    let se = (arm(1.0) + arm(0.0)).sqrt();
    let f = Frame::new(vec![Column::numeric("z", z), Column::binary("t", t), Column::numeric("y", y)]).unwrap();
    (f, se)
}

#[test]
fn matching_recovers_constant_effect() {
    let (f, se) = randomized(2000, 1.5, 10);
    let q = EffectQuery::new("t", "y", vec!["z".into()]);
    let pm = PropensityModel::fit(&f, "t", &q.adjustment, DEFAULT_CLIP).unwrap();
    let att = psm_att(&f, &q, &pm).unwrap().value;
    assert!((att - 1.5).abs() < 2.0 * se, "{att} se {se}");
}

#[test]
fn stratification_recovers_constant_effect() {
    let (f, se) = randomized(2000, 1.5, 11);
    let q = EffectQuery::new("t", "y", vec!["z".into()]);
    let pm = PropensityModel::fit(&f, "t", &q.adjustment, DEFAULT_CLIP).unwrap();
    for k in [2, 5, 10] {
        let v = stratified_ate(&f, &q, &pm, k).unwrap().value;
        assert!((v - 1.5).abs() < 2.0 * se, "k={k}: {v} se {se}");
    }
}

#[test]
fn relative_effect_uses_control_mean() {
    let f = Frame::new(vec![
        Column::numeric("z", vec![0.0, 1.0, 0.0, 1.0]),
        Column::binary("t", vec![1.0, 1.0, 0.0, 0.0]),
        Column::numeric("y", vec![5.0, 5.0, 4.0, 4.0]),
    ])
    .unwrap();
    let e = regression_adjustment(&f, &EffectQuery::new("t", "y", vec!["z".into()])).unwrap();
    assert!((e.value - 1.0).abs() < 1e-7, "{}", e.value);
    assert!((e.relative_effect.unwrap() - 0.25).abs() < 1e-7);
}
