//! Cross-module checks: the packaged pair evaluation against a by-hand
//! composition of its stages, recovery of a known warped correspondence,
//! and the shipped presets.

use ndarray::Array2;

use tot_core::{
    adapter_forward, alignment_loss, combined_cost_beta, cosine_cost, ctc_loss, entropy,
    evaluate_pair, ot_objective, project, softmax_predict, tot_coupling, AdapterWeights,
    FeatureSequence, SinkhornConfig, SplitMix64, TokenSequence, DEFAULT_BLANK, DEV_BEST,
    STABILIZED_BELOW, TEST_BEST,
};

fn random_sequence(rng: &mut SplitMix64, rows: usize, dim: usize, modality: &str) -> FeatureSequence {
    FeatureSequence::new(
        Array2::from_shape_fn((rows, dim), |_| rng.uniform_in(-1.0, 1.0)),
        modality,
    )
    .unwrap()
}

#[test]
fn packaged_evaluation_equals_the_hand_built_composition() {
    let mut rng = SplitMix64::new(0xfeed_0001);
    let d_a = 5;
    let d_t = 6;
    let vocab = 9;
    let l_a = 7;
    let l_t = 4;
    let h_ca = random_sequence(&mut rng, l_a, d_a, "acoustic");
    let z = random_sequence(&mut rng, l_t, d_t, "linguistic");
    let labels = TokenSequence::framed(vec![7, 2, 4, 8], 7, 8).unwrap();
    let weights = AdapterWeights::seeded(d_a, d_t, vocab, 0.1, 42).unwrap();
    let beta = 0.5;
    let cfg = SinkhornConfig::new(0.5);
    let (lambda, w_scale) = (0.3, 1.0);

    let report =
        evaluate_pair(&h_ca, &z, &labels, &weights, beta, &cfg, lambda, w_scale).unwrap();

    let (h_a, h_fused) = adapter_forward(&h_ca, &weights).unwrap();
    let gamma = tot_coupling(&h_a, &z, beta, &cfg).unwrap();
    let align = alignment_loss(&project(&gamma, &h_a).unwrap(), &z).unwrap();
    let combined = combined_cost_beta(&cosine_cost(&h_a, &z).unwrap(), beta, l_a, l_t).unwrap();
    let tot = ot_objective(&gamma, &combined).unwrap();
    let log_probs = softmax_predict(&h_fused, &weights).unwrap().mapv(f64::ln);
    let ctc = ctc_loss(&log_probs, &labels, DEFAULT_BLANK).unwrap();
    let ctc_value = ctc.value().expect("feasible fixture");

    assert_eq!(report.ctc, ctc);
    assert_eq!(report.align, align);
    assert_eq!(report.tot, tot);
    let expected_total = lambda * ctc_value + (1.0 - lambda) * w_scale * (align + tot);
    assert_eq!(report.total.unwrap(), expected_total);
    let expected_regularized = tot - cfg.epsilon * entropy(&gamma).unwrap();
    assert_eq!(report.tot_regularized.unwrap(), expected_regularized);
    let stats = report.coupling.unwrap();
    assert_eq!(stats.iterations, gamma.iterations());
    assert_eq!(stats.marginal_error, gamma.marginal_error());
}

/// Doubling every linguistic row with a little noise gives a pair whose
/// true correspondence sends acoustic frames 2j-1 and 2j (1-based) to token
/// j. With the temporal penalty on and epsilon small, the coupling puts
/// nearly all its mass on those cells.
#[test]
fn warped_pair_recovers_the_ground_truth_correspondence() {
    let mut rng = SplitMix64::new(0xfeed_0002);
    let l_t = 6;
    let l_a = 2 * l_t;
    let dim = 8;
    let z = random_sequence(&mut rng, l_t, dim, "linguistic");
    let h = FeatureSequence::new(
        Array2::from_shape_fn((l_a, dim), |(i, k)| {
            z.data()[[i / 2, k]] + 0.05 * rng.uniform_in(-1.0, 1.0)
        }),
        "acoustic",
    )
    .unwrap();

    let plan = tot_coupling(&h, &z, 0.5, &SinkhornConfig::new(0.01)).unwrap();
    let on_truth: f64 = plan
        .entries()
        .indexed_iter()
        .filter(|((i, j), _)| i / 2 == *j)
        .map(|(_, &mass)| mass)
        .sum();
    assert!(on_truth > 0.8, "ground-truth cells hold {on_truth}");
}

#[test]
fn presets_carry_the_reported_settings() {
    assert_eq!(DEV_BEST.epsilon, 0.5);
    assert_eq!(DEV_BEST.adapter_scale, 0.1);
    assert_eq!(TEST_BEST.epsilon, 0.01);
    assert_eq!(TEST_BEST.adapter_scale, 0.1);

    // The test-split epsilon is small enough to trip the automatic
    // log-domain switch; the dev-split one is not.
    assert!(TEST_BEST.epsilon < STABILIZED_BELOW);
    assert!(SinkhornConfig::new(TEST_BEST.epsilon).stabilized);
    assert!(!SinkhornConfig::new(DEV_BEST.epsilon).stabilized);
}
