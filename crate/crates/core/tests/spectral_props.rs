use proptest::prelude::*;
use pwlab::characteristics::{MatrixSymbol, RootSystem};
use pwlab::spectral::{assemble, counting, eigenvalues, sturm_count, tridiagonalize, weyl_report, WeylParams};
use pwlab::symdsl::parse;

fn roots(r: &[&str]) -> RootSystem {
    RootSystem::distinct(r.iter().map(|s| parse(s, 1).unwrap()).collect())
}

fn coupling(entries: [[&str; 2]; 2], im: Option<[[&str; 2]; 2]>) -> MatrixSymbol {
    let rows = |e: [[&str; 2]; 2]| e.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect::<Vec<Vec<String>>>();
    let im = im.map(rows);
    MatrixSymbol::parse(&rows(entries), im.as_deref(), 1, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sturm_count_matches_dense_count(c in 0.1f64..0.9, b in 0.0f64..1.0, lambdas in prop::collection::vec(-40.0f64..40.0, 8)) {
        let rs = roots(&[&format!("(1 + {c}*sin(x1))*norm_xi"), "2*norm_xi"]);
        let cb = format!("{b}*cos(x1)");
        let g = assemble(&rs, &coupling([["0", &cb], [&cb, "0.5"]], Some([["0", "sin(x1)"], ["-sin(x1)", "0"]])), 24).unwrap();
        let evs = eigenvalues(&g).unwrap();
        let (d, e) = tridiagonalize(&g.matrix);
        for l in lambdas {
            prop_assert_eq!(sturm_count(&d, &e, l), counting(&evs, l));
        }
    }

    #[test]
    fn multiplier_assembly_is_hermitian_and_diagonal(s in 0.2f64..3.0, b in -1.0f64..1.0, k in 4usize..32) {
        let rs = roots(&[&format!("{s}*norm_xi"), "-norm_xi"]);
        let bs = format!("{b}");
        let g = assemble(&rs, &coupling([["0.1", &bs], [&bs, "0"]], None), k).unwrap();
        prop_assert!(g.raw_asymmetry <= 1e-10);
        let nm = g.modes.len();
        for i in 0..g.dim() {
            for j in 0..g.dim() {
                if i % nm != j % nm {
                    prop_assert_eq!(g.matrix[(i, j)].norm(), 0.0);
                }
            }
        }
    }
}

#[test]
fn first_coefficient_converges_in_the_cutoff() {
    let rs = roots(&["(1 + 0.5*sin(x1))*norm_xi", "(2 + cos(x1))*norm_xi"]);
    let b = coupling([["0", "0.3*cos(x1)"], ["0.3*cos(x1)", "0"]], None);
    let fit = |k: usize| {
        let p = WeylParams { cutoff: k, samples: 100_000, period_seeds: 8, ..Default::default() };
        weyl_report(&rs, &b, &p).unwrap().fit.c_n
    };
    let (c1, c2) = (fit(96), fit(192));
    assert!((c1 - c2).abs() <= 0.01 * c2, "c_n at K = 96: {c1}, at 2K: {c2}");
}
