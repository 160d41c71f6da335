use platoon_cli::config::{
    ChangeConfig, Coefficient, ConfigDocument, GivenInitial, InitialConfig, LeaderConfig, LeaderKind, NoiseConfig,
    TfConfig, BUNDLED,
};
use platoon_core::platoon::NoiseDistribution;
use proptest::prelude::*;

fn coefficient() -> impl Strategy<Value = Coefficient> {
    prop_oneof![
        (-10.0f64..10.0).prop_map(Coefficient::Value),
        (0.1f64..5.0, 0.1f64..3.0).prop_map(|(a, b)| Coefficient::Expr(format!("{a} / ({b} + h)"))),
    ]
}

fn document() -> impl Strategy<Value = ConfigDocument> {
    (
        0.5f64..6.0,
        1usize..8,
        proptest::collection::vec(coefficient(), 1..3),
        0.1f64..0.99,
        0.0f64..2.0,
        prop_oneof![
            Just(NoiseDistribution::Gaussian),
            Just(NoiseDistribution::Uniform),
            Just(NoiseDistribution::Rademacher)
        ],
        proptest::option::of((0usize..50, -3.0f64..3.0)),
        any::<u64>(),
        any::<bool>(),
    )
        .prop_map(
            |(headway, followers, num, pole, variance, distribution, change, seed, given)| {
                let base = ConfigDocument::load("paper_h3.2").unwrap();
                let leader = match change {
                    Some((at, speed)) => LeaderConfig {
                        kind: LeaderKind::PiecewiseSpeed,
                        base_speed: 1.0,
                        changes: vec![ChangeConfig { at, speed }],
                    },
                    None => LeaderConfig::default(),
                };
                let initial_condition = if given {
                    InitialConfig::Given(GivenInitial {
                        mu: vec![0.5, -1.0],
                        p: vec![vec![1.0, 0.25], vec![0.25, 2.0]],
                    })
                } else {
                    InitialConfig::default()
                };
                let mut doc = ConfigDocument {
                    headway,
                    followers,
                    initial_condition,
                    controller: TfConfig {
                        num,
                        den: vec![Coefficient::Value(1.0), Coefficient::Value(pole)],
                    },
                    noise: NoiseConfig { variance, distribution },
                    leader,
                    ..base
                };
                doc.monte_carlo.seed = seed;
                doc
            },
        )
}

proptest! {
    #[test]
    fn normalization_is_idempotent(doc in document()) {
        let once = doc.normalized();
        let parsed = ConfigDocument::parse(&once).unwrap();
        prop_assert_eq!(&parsed, &doc);
        prop_assert_eq!(parsed.normalized(), once);
        prop_assert_eq!(parsed.hash(), doc.hash());
    }
}

#[test]
fn bundled_configs_round_trip_to_the_same_platoon() {
    for (name, text) in BUNDLED {
        let doc = ConfigDocument::parse(text).unwrap();
        let again = ConfigDocument::parse(&doc.normalized()).unwrap();
        assert_eq!(doc, again, "{name}");
        let (a, b) = (doc.to_spec().unwrap(), again.to_spec().unwrap());
        assert_eq!(a.vehicle_loop(), b.vehicle_loop());
        assert_eq!(a.leader, b.leader);
    }
}

#[test]
fn hash_tracks_content() {
    let a = ConfigDocument::load("paper_h3.2").unwrap();
    let b = ConfigDocument::load("paper_h2.4").unwrap();
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}
