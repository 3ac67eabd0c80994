use causet::synth::{self, baseline, effect, generate};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn structure_holds(n in 1usize..300, p in 5usize..9, sigma in 0.0f64..3.0, seed in any::<u64>()) {
        let s = generate(n, p, sigma, seed).unwrap();
        prop_assert_eq!(s.x.len(), p);
        prop_assert!(s.x.iter().all(|c| c.len() == n && c.iter().all(|v| (0.0..1.0).contains(v))));
        for v in [&s.w, &s.y, &s.tau_true, &s.e_true, &s.b_true] {
            prop_assert_eq!(v.len(), n);
        }
        prop_assert!(s.e_true.iter().all(|e| (0.1..=0.9).contains(e)));
        prop_assert!(s.w.iter().all(|&w| w == 0.0 || w == 1.0));
        for i in 0..n {
            prop_assert_eq!(s.tau_true[i], (s.x[0][i] + s.x[1][i]) / 2.0);
        }
        prop_assert_eq!(&generate(n, p, sigma, seed).unwrap(), &s);
    }

    #[test]
    fn noiseless_outcome_decomposes(n in 1usize..200, seed in any::<u64>()) {
        let s = generate(n, 5, 0.0, seed).unwrap();
        for i in 0..n {
            let row: Vec<f64> = s.x.iter().map(|c| c[i]).collect();
            prop_assert_eq!(s.b_true[i], baseline(&row));
            prop_assert_eq!(s.tau_true[i], effect(&row));
            prop_assert_eq!(s.y[i], s.b_true[i] + (s.w[i] - 0.5) * s.tau_true[i]);
        }
    }
}

#[test]
fn full_size_shapes_and_average_effect() {
    for seed in 0..5 {
        let s = generate(10_000, 5, 1.0, seed).unwrap();
        assert_eq!((s.x.len(), s.x[0].len(), s.n()), (5, 10_000, 10_000));
        assert!((s.mean_tau() - 0.5).abs() < 0.01, "seed {seed}: {}", s.mean_tau());
        let treated = s.w.iter().sum::<f64>();
        let expected = s.e_true.iter().sum::<f64>();
        let sd = s.e_true.iter().map(|e| e * (1.0 - e)).sum::<f64>().sqrt();
        assert!((treated - expected).abs() < 3.0 * sd, "seed {seed}");
    }
}

#[test]
fn frame_columns_follow_the_documented_order() {
    let s = generate(4, 6, 1.0, 1).unwrap();
    let f = s.to_frame();
    let names: Vec<&str> = f.column_names().collect();
    assert_eq!(names, ["x0", "x1", "x2", "x3", "x4", "x5", "w", "y", "tau_true", "e_true", "b_true"]);
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("x0,x1,x2,x3,x4,x5,w,y,tau_true,e_true,b_true\n"));
}

#[test]
fn invalid_arguments() {
    assert_eq!(synth::generate(10, 4, 1.0, 0).unwrap_err().kind(), "InvalidDimension");
    assert_eq!(synth::generate(0, 5, 1.0, 0).unwrap_err().kind(), "InvalidDimension");
    assert!(synth::generate(10, 5, -1.0, 0).is_err());
}
