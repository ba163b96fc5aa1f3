//! Property test: any valid experiment config survives serialization to
//! canonical TOML and reparsing unchanged, including every float.

use proptest::prelude::*;
use splitchain::diagnostics::ModelSpec;
use splitchain::euler2d::{Dissipation, EulerSpec};
use splitchain::lorenz96::LorenzSpec;
use splitchain_cli::config::{
    parse_config, to_toml_string, ExperimentConfig, ExperimentKind, OrderPolicyKind, RunConfig,
    SchemeConfig, TimeLawKind,
};

fn lorenz_model() -> impl Strategy<Value = ModelSpec> {
    (4usize..10, proptest::option::of(0.05f64..3.0)).prop_flat_map(|(n, nu)| match nu {
        None => Just(ModelSpec::Lorenz96(LorenzSpec::conservative(n))).boxed(),
        Some(nu) => proptest::collection::vec(-2.0f64..2.0, n)
            .prop_map(move |mut f| {
                f[0] = 1.25; // keep the forcing away from identically zero
                ModelSpec::Lorenz96(LorenzSpec::forced(n, nu, f))
            })
            .boxed(),
    })
}

fn euler_model() -> impl Strategy<Value = ModelSpec> {
    let forced = (
        0.05f64..3.0,
        proptest::collection::vec(-1.0f64..1.0, 24),
        prop_oneof![Just(Dissipation::Laplacian), Just(Dissipation::Ekman)],
    )
        .prop_map(|(nu, mut f, d)| {
            // Pin a pattern whose interaction closure reaches the whole
            // lattice; extra random entries can only enlarge the closure.
            f[0] = 0.8;
            f[8] = 0.5;
            f[11] = 0.3;
            ModelSpec::Euler2d(EulerSpec::forced(2, nu, f, d))
        });
    prop_oneof![Just(ModelSpec::Euler2d(EulerSpec::conservative(2))), forced]
}

fn config_strategy() -> impl Strategy<Value = ExperimentConfig> {
    let model = prop_oneof![lorenz_model(), euler_model()];
    let kind = proptest::option::of(proptest::sample::select(ExperimentKind::ALL.to_vec()));
    let time_law = prop_oneof![
        Just(TimeLawKind::Exponential),
        (0.1f64..5.0).prop_map(|shape| TimeLawKind::Gamma { shape }),
        Just(TimeLawKind::Uniform),
    ];
    let scheme = (0.001f64..10.0, time_law, prop_oneof![
        Just(OrderPolicyKind::RandomPermutation),
        Just(OrderPolicyKind::Fixed)
    ])
        .prop_map(|(h, time_law, order_policy)| SchemeConfig { h, time_law, order_policy });
    let run = (1u64..100_000, 2u64..1_000_000, 0u64..=i64::MAX as u64).prop_flat_map(
        |(cycles, samples, seed)| {
            (Just(cycles), Just(samples), Just(seed), 0..cycles)
                .prop_map(|(cycles, samples, seed, burn_in)| RunConfig {
                    cycles,
                    samples,
                    seed,
                    burn_in,
                })
        },
    );
    (kind, model, scheme, run).prop_flat_map(|(kind, model, scheme, run)| {
        let dim = model.dim();
        proptest::collection::vec(-3.0f64..3.0, dim).prop_map(move |x0| ExperimentConfig {
            kind,
            model: model.clone(),
            x0,
            scheme: scheme.clone(),
            run: run.clone(),
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialize_then_parse_is_identity(cfg in config_strategy()) {
        let text = to_toml_string(&cfg);
        let parsed = parse_config(&text).expect("canonical output must validate");
        prop_assert_eq!(parsed, cfg);
    }

    #[test]
    fn canonical_serialization_is_stable(cfg in config_strategy()) {
        let text = to_toml_string(&cfg);
        let again = to_toml_string(&parse_config(&text).unwrap());
        prop_assert_eq!(text, again);
    }
}
