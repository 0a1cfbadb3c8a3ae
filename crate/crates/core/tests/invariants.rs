use langevin_error::pipeline::{expected_pipeline_error, PipelineParams};
use langevin_error::score_theory::{sgd_tau_bound, TauNSign};
use proptest::prelude::*;

fn case() -> impl Strategy<Value = (Vec<f64>, PipelineParams)> {
    (prop::collection::vec(0.05f64..3.0, 1..6), 0.1f64..2.0, 0.01f64..0.5, 0.01f64..0.9, 2u64..1_000_000).prop_map(
        |(spec, sigma, tf, gf, n)| {
            let lmax = spec.iter().cloned().fold(0.0, f64::max);
            let lmin = spec.iter().cloned().fold(f64::INFINITY, f64::min);
            let p = PipelineParams {
                sigma,
                tau: tf * sgd_tau_bound(lmax, sigma),
                gamma: gf * (lmin + sigma * sigma),
                n,
            };
            (spec, p)
        },
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-11 * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn breakdown_is_invariant_under_spectrum_permutation((spec, p) in case(), shift in 0usize..6) {
        let mut rot = spec.clone();
        rot.rotate_left(shift % spec.len());
        rot.reverse();
        let a = expected_pipeline_error(&spec, &p, TauNSign::Minus).unwrap();
        let b = expected_pipeline_error(&rot, &p, TauNSign::Minus).unwrap();
        for (x, y) in [(a.term0, b.term0), (a.term_tau, b.term_tau), (a.term_tau_n, b.term_tau_n), (a.term_n, b.term_n)] {
            prop_assert!(close(x, y), "{x} vs {y}");
        }
    }

    #[test]
    fn terms_scale_with_tau_and_n((spec, p) in case()) {
        let a = expected_pipeline_error(&spec, &p, TauNSign::Minus).unwrap();
        let q = PipelineParams { tau: p.tau / 2.0, n: p.n * 3, ..p };
        let b = expected_pipeline_error(&spec, &q, TauNSign::Minus).unwrap();
        prop_assert!(close(a.term0, b.term0));
        prop_assert!(close(a.term_tau, 2.0 * b.term_tau));
        prop_assert!(close(a.term_n, 3.0 * b.term_n));
        prop_assert!(close(a.term_tau_n, 6.0 * b.term_tau_n));
        prop_assert!(a.term0 >= 0.0 && a.term_tau >= 0.0 && a.term_n >= 0.0 && a.term_tau_n <= 0.0);
    }

    #[test]
    fn sign_flips_only_the_tau_n_term((spec, p) in case()) {
        let m = expected_pipeline_error(&spec, &p, TauNSign::Minus).unwrap();
        let q = expected_pipeline_error(&spec, &p, TauNSign::Plus).unwrap();
        prop_assert!(close(m.term_tau_n, -q.term_tau_n));
        prop_assert!(close(m.term_tau, q.term_tau) && close(m.term_n, q.term_n));
        prop_assert!((q.total - m.total - 2.0 * q.term_tau_n).abs() <= 1e-12 * q.total);
    }
}
