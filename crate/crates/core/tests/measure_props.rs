use proptest::prelude::*;
use pwlab::measure::{fit_decay_exponent, sigma_decomposition, sublevel_measure, Polynomial, SublevelFn};

fn eps_ladder(hi: f64, lo: f64, per_decade: usize) -> Vec<f64> {
    let steps = ((hi / lo).log10() * per_decade as f64).round() as usize;
    (0..=steps).map(|i| hi * 10f64.powf(-(i as f64) / per_decade as f64)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn measure_is_monotone_in_eps(roots in prop::collection::vec(0.0f64..1.0, 1..4), scale in 0.2f64..3.0) {
        let p = Polynomial::from_roots(&roots);
        let f = |t: f64| scale * p.value(t);
        let ladder = eps_ladder(1e-1, 1e-6, 2);
        let m: Vec<f64> = ladder.iter().map(|&e| sublevel_measure(f, 1.0, e, 512)).collect();
        for w in m.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        prop_assert!(m.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn decomposition_covers_sigma(roots in prop::collection::vec(0.05f64..0.95, 1..4), lead in 0.5f64..2.0, k in 4u32..8) {
        // roots at least 1e-2 apart keep the polynomial's zero orders at most its multiplicity
        let mut r = roots.clone();
        r.sort_by(f64::total_cmp);
        prop_assume!(r.windows(2).all(|w| w[1] - w[0] > 1e-2));
        let mut p = Polynomial::from_roots(&r);
        p.0.iter_mut().for_each(|c| *c *= lead);
        let eps = 10f64.powi(-(k as i32));
        let d = sigma_decomposition(&p, 1.0, eps, r.len(), 1.0, 1024).unwrap();
        prop_assert!(d.cover_defect() <= 1e-8, "defect {}", d.cover_defect());
        prop_assert!(d.beyond.is_empty());
    }
}

#[test]
fn power_family_slopes() {
    let eps = eps_ladder(1e-2, 1e-6, 2);
    for m in 1..=4i32 {
        let meas: Vec<f64> = eps.iter().map(|&e| sublevel_measure(|t| (t - 0.5).powi(m), 1.0, e, 1024)).collect();
        let slope = fit_decay_exponent(&eps, &meas).unwrap();
        let target = 1.0 / m as f64;
        assert!((slope - target).abs() <= 0.05, "M = {m}: slope {slope}");
        assert!(slope >= 1.0 / (2.0 * m as f64));
    }
}

#[test]
fn polynomial_derivatives_match_finite_differences() {
    let p = Polynomial(vec![0.3, -1.0, 0.5, 2.0]);
    for t in [0.1, 0.4, 0.9] {
        let h = 1e-5;
        let fd = (p.value(t + h) - p.value(t - h)) / (2.0 * h);
        assert!((p.derivative(t, 1).unwrap() - fd).abs() < 1e-8);
    }
}
