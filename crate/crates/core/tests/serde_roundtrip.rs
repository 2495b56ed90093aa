use ccsl::inference::fit;
use ccsl::metrics::evaluate;
use ccsl::synthgen::{gen_dataset, GenSettings, GroundTruth};
use ccsl::{FitConfig, FitResult, GroupModel, NoiseModel, Panel};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(value: &T) {
    let text = serde_json::to_string(value).unwrap();
    let back: T = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, value);
}

fn quick_config() -> FitConfig {
    FitConfig {
        mc_samples_fit: 2,
        mc_samples_score: 8,
        inner_iterations: 5,
        warm_start_iterations: 3,
        holdout_iterations: 3,
        max_sweeps: 2,
        ..FitConfig::default()
    }
}

fn small_dataset(seed: u64) -> (Panel, GroundTruth) {
    let settings = GenSettings {
        subjects: 4,
        variables: 3,
        length: 25,
        ..GenSettings::default()
    };
    gen_dataset(&settings, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn dataset_and_fit_round_trip() {
    let (panel, truth) = small_dataset(1);
    round_trip(&truth);
    round_trip(&panel);
    let result: FitResult =
        fit(&panel, &quick_config(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    round_trip(&result);
    round_trip(&quick_config());
    round_trip(&evaluate(&result, &truth, &quick_config()).unwrap());
}

#[test]
fn pipeline_is_seed_deterministic() {
    let (panel, _) = small_dataset(3);
    let a = fit(&panel, &quick_config(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let b = fit(&panel, &quick_config(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a.state.labels().unwrap().len(), 4);
}

fn matrix(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1e3f64..1e3, m * m).prop_map(move |v| DMatrix::from_row_slice(m, m, &v))
}

fn positive(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(1e-6f64..10.0, m * m).prop_map(move |v| DMatrix::from_row_slice(m, m, &v))
}

fn group_model() -> impl Strategy<Value = GroupModel> {
    (1usize..4, 0usize..3, 1usize..3).prop_flat_map(|(m, lags, q)| {
        (
            matrix(m),
            positive(m),
            prop::collection::vec((matrix(m), positive(m)), lags),
            prop::collection::vec(0.1f64..1.0, q),
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, m), q),
            prop::collection::vec(prop::collection::vec(1e-3f64..5.0, m), q),
        )
            .prop_map(|(mu_b, sigma_b, lagged, weights, means, variances)| {
                let (nu_a, omega_a) = lagged.into_iter().unzip();
                GroupModel {
                    mu_b,
                    sigma_b,
                    nu_a,
                    omega_a,
                    noise: NoiseModel::new(weights, means, variances).unwrap(),
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_models_round_trip_exactly(g in group_model()) {
        let text = serde_json::to_string(&g).unwrap();
        let back: GroupModel = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, g);
    }
}
