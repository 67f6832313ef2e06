use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use num_rational::Ratio;
use proptest::prelude::*;
use pwlab::characteristics::{
    condition_c, cosphere_samples, eigs, group_roots, theoretical_smoothing, ConditionCParams, MatrixSymbol, RootSystem,
};
use pwlab::symdsl::{iterated_bracket, parse, PhasePoint, SymbolExpr};

fn sym(s: &str) -> SymbolExpr {
    parse(s, 1).unwrap()
}

/// Pool with repeated roots written in different forms.
const POOL: [&str; 6] = ["norm_xi", "norm_xi + 0*sin(x1)", "2*norm_xi", "norm_xi*2", "-norm_xi", "(1+sin(x1)^2)*norm_xi"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spectral_reconstruction(c in prop::collection::vec(-2.0f64..2.0, 4), x in 0.0f64..std::f64::consts::TAU, xi in 0.3f64..5.0, neg in any::<bool>()) {
        let re = vec![
            vec![format!("{}*norm_xi", c[0]), format!("{}*cos(x1)*norm_xi", c[1])],
            vec![format!("{}*cos(x1)*norm_xi", c[1]), format!("(2+{}*sin(x1))*norm_xi", c[2])],
        ];
        let im = vec![vec!["0".to_string(), format!("{}*xi1", c[3])], vec![format!("-{}*xi1", c[3]), "0".to_string()]];
        let a = MatrixSymbol::parse(&re, Some(&im), 1, 1).unwrap();
        let p = PhasePoint::one_dim(x, if neg { -xi } else { xi }).unwrap();
        let e = eigs(&a, &p).unwrap();
        let full = a.eval(&p).unwrap();
        let mut rebuilt = DMatrix::<C64>::zeros(2, 2);
        for (v, proj) in e.values.iter().zip(&e.projectors) {
            rebuilt += proj * C64::new(*v, 0.0);
        }
        prop_assert!((&rebuilt - &full).norm() <= 1e-10 * full.norm());
    }

    #[test]
    fn grouping_is_idempotent(picks in prop::collection::vec(0usize..POOL.len(), 1..6)) {
        let roots: Vec<SymbolExpr> = picks.iter().map(|&i| sym(POOL[i])).collect();
        let samples = cosphere_samples(1, 64);
        let once = group_roots(&roots, &samples);
        let twice = group_roots(&once.roots, &samples);
        prop_assert_eq!(&once.groups, &twice.groups);
        for g in &once.groups {
            for &i in g {
                let (a, b) = (POOL[picks[g[0]]], POOL[picks[i]]);
                let same = |s: &str| ["norm_xi", "norm_xi + 0*sin(x1)"].contains(&s);
                let double = |s: &str| ["2*norm_xi", "norm_xi*2"].contains(&s);
                prop_assert!(a == b || (same(a) && same(b)) || (double(a) && double(b)));
            }
        }
    }
}

/// λ* recomputed at (x, sξ) with the normalization |H^λ a_k|/|ξ|.
fn order_scaled(aj: &SymbolExpr, ak: &SymbolExpr, x: f64, xi: f64, params: &ConditionCParams) -> Option<u32> {
    let p = PhasePoint::one_dim(x, xi).unwrap();
    (1..=params.cap).find(|&l| iterated_bracket(aj, ak, l, &p).unwrap().abs() / p.xi_norm() > params.bracket_tol)
}

#[test]
fn condition_c_is_scale_robust() {
    let params = ConditionCParams::default();
    for (a, b) in [("norm_xi", "(1+sin(x1)^2)*norm_xi"), ("norm_xi", "(1+0.5*sin(x1))*norm_xi"), ("norm_xi", "(1+sin(x1)^4)*norm_xi")] {
        let (aj, ak) = (sym(a), sym(b));
        let report = condition_c(&RootSystem::distinct(vec![aj.clone(), ak.clone()]), &params);
        let points = &report.pairs[0].points;
        assert!(!points.is_empty(), "{b}");
        for q in points {
            for s in [2.0, 0.5, 10.0] {
                assert_eq!(order_scaled(&aj, &ak, q.x[0], s * q.xi[0], &params), q.lambda, "{b} at {:?}, scale {s}", q.x);
            }
        }
    }
}

#[test]
fn smoothing_formula_increases_past_its_pole() {
    for m in 1..=4u64 {
        for n in 1..=3u64 {
            // l₀: the denominator 3⌊l/2⌋ − 2n − 2 + l/(2M) is positive for every l ≥ l₀
            let den = |l: u64| Ratio::from_integer(3 * (l / 2) as i128 - 2 * n as i128 - 2) + Ratio::new(l as i128, 2 * m as i128);
            let l0 = (1..200).rev().find(|&l| den(l) <= Ratio::from_integer(0)).unwrap() + 1;
            let mut prev = theoretical_smoothing(l0, m, n).unwrap();
            for l in l0 + 1..=2000 {
                let v = theoretical_smoothing(l, m, n).unwrap();
                assert!(v >= prev, "M = {m}, n = {n}, l = {l}");
                prev = v;
            }
        }
    }
}
