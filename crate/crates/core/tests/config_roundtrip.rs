use langevin_error::harness::config::{
    AxisName, DataMode, Grid, LogGrid, PowerLaw, SpectrumSpec, SweepAxis,
};
use langevin_error::harness::{parse_config, Budget, ExperimentConfig, Mode, OutputFormat};
use langevin_error::score_theory::TauNSign;
use proptest::prelude::*;

fn grid() -> impl Strategy<Value = Grid> {
    prop_oneof![
        prop::collection::vec(0.01f64..0.3, 1..5).prop_map(Grid::Values),
        (0.01f64..0.05, 0.06f64..0.3, 2usize..20).prop_map(|(lo, hi, points)| Grid::Log { log: LogGrid { lo, hi, points } }),
    ]
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    let spectrum = prop_oneof![
        prop::collection::vec(0.1f64..3.0, 1..5).prop_map(SpectrumSpec::Explicit),
        (1usize..6, 0.0f64..2.0, 0.5f64..2.0)
            .prop_map(|(d, exponent, scale)| SpectrumSpec::PowerLaw { power_law: PowerLaw { d, exponent, scale } }),
    ];
    (
        spectrum,
        0u64..(i64::MAX as u64),
        prop::option::of(1usize..8),
        (0.3f64..2.0, 1e-4f64..0.05, 1e-4f64..0.05, 2u64..100_000),
        (prop::option::of(0u64..5000), 1000u64..100_000, 1u64..4, 1u32..4),
        (any::<bool>(), any::<bool>(), prop::collection::vec(grid(), 1..3)),
        prop::collection::vec(1u8..=9, 0..4),
    )
        .prop_map(|(spectrum, seed, threads, (sigma, tau, gamma, n), (burn_in, n_steps, thinning, replicas), (csv, plus, grids), only)| {
            let mut c = ExperimentConfig {
                mode: Mode::Sweep,
                seed,
                threads,
                format: if csv { OutputFormat::Csv } else { OutputFormat::Json },
                tau_n_sign: if plus { TauNSign::Plus } else { TauNSign::Minus },
                spectrum,
                ..Default::default()
            };
            c.params.sigma = sigma;
            c.params.tau = tau;
            c.params.gamma = gamma;
            c.params.n = n;
            c.chain.burn_in = burn_in;
            c.chain.n_steps = n_steps * thinning;
            c.chain.thinning = thinning;
            c.chain.replicas = replicas;
            c.simulate.data = DataMode::Ensemble;
            let names = [AxisName::Tau, AxisName::Gamma];
            c.sweep.axes = grids.into_iter().zip(names).map(|(grid, name)| SweepAxis { name, grid }).collect();
            c.verify.budget = Budget::Full;
            c.verify.only = only;
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn valid_configs_round_trip_through_toml(cfg in config()) {
        prop_assert!(cfg.validate().is_ok(), "{:?}", cfg.violations());
        let text = cfg.to_toml();
        let back = parse_config(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(back, cfg);
    }
}
