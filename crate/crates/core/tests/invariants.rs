//! Property-based invariants of the public API.

use chanflow::grid::{self, Grid};
use chanflow::harness::{fit_rate, Config};
use proptest::prelude::*;

fn eps_ladder() -> impl Strategy<Value = Vec<f64>> {
    // Strictly decreasing viscosities in (0, 1).
    prop::collection::vec(1.2f64..3.0, 4..8).prop_map(|factors| {
        let mut e = 0.5;
        factors
            .into_iter()
            .map(|f| {
                e /= f;
                e
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_recovers_power_laws(eps in eps_ladder(), slope in 0.1f64..3.0, c in 1e-3f64..1e3) {
        let values: Vec<f64> = eps.iter().map(|e| c * e.powf(slope)).collect();
        let f = fit_rate("q", &eps, &values).unwrap();
        prop_assert!((f.slope.unwrap() - slope).abs() < 1e-9);
        prop_assert!((f.intercept.unwrap() - c.ln()).abs() < 1e-7);
        prop_assert!(f.ci.unwrap() < 1e-8);
    }

    #[test]
    fn fit_slope_is_scale_invariant(eps in eps_ladder(), noise in prop::collection::vec(0.5f64..2.0, 8), k in 1e-4f64..1e4) {
        let values: Vec<f64> = eps.iter().zip(&noise).map(|(e, n)| n * e.sqrt()).collect();
        let scaled: Vec<f64> = values.iter().map(|v| k * v).collect();
        let a = fit_rate("q", &eps, &values).unwrap();
        let b = fit_rate("q", &eps, &scaled).unwrap();
        prop_assert!((a.slope.unwrap() - b.slope.unwrap()).abs() < 1e-9);
        prop_assert!((a.ci.unwrap() - b.ci.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn config_json_round_trip(eps in eps_ladder(), n in 9usize..300, workers in 0usize..16, dump in any::<bool>()) {
        let mut cfg = Config::default();
        cfg.sweep.eps = eps;
        cfg.grid.nodes = vec![n];
        cfg.sweep.workers = workers;
        cfg.output.dump_fields = dump;
        let text = serde_json::to_string(&cfg).unwrap();
        let back = Config::from_json(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn non_decreasing_eps_is_rejected(mut eps in eps_ladder(), i in 0usize..3) {
        eps.swap(i, i + 1);
        let mut cfg = Config::default();
        cfg.sweep.eps = eps;
        prop_assert!(cfg.validate().is_err());
    }

    #[test]
    fn trapezoid_integrates_bilinear_exactly(n in 8usize..40, l in 0.05f64..1.0, a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0) {
        let g = Grid::square(n, l).unwrap();
        let f = g.sample(|x, y| a + b * x + c * y + d * x * y);
        // Domain is [0, L] × [0, 2].
        let exact = 2.0 * l * a + b * l * l + 2.0 * c * l + d * l * l;
        prop_assert!((grid::integrate(&f) - exact).abs() < 1e-10 * (1.0 + exact.abs()));
    }
}
