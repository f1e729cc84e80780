//! Contract tests for the evaluation metrics: classifier-backed faithfulness
//! oracles, robustness determinism, and ranking-metric properties.

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use spectralx::classifier::{synthetic_band_rule, ClassifierHandle, LinearSoftmax};
use spectralx::dataset::{class_template, generate_synthetic, ground_truth_ranking, SynthConfig};
use spectralx::explainers::{
    rise_explain, DeletionFill, Explanation, Method, PerturbationEngine, RiseConfig,
    SpectrogramEngine, TimeSeriesEngine,
};
use spectralx::metrics::{
    area_under_curves, faithfulness_at_k, rbo, robustness, FaithfulnessMode, NoiseDomain,
    RobustnessConfig,
};
use spectralx::perturbation::FeatureSpace;
use spectralx::signal::TimeSeries;

const WINDOW: usize = 16;
const HOP: usize = 8;

fn tf_space(frames: usize, bins: usize) -> FeatureSpace {
    FeatureSpace::TimeFrequency { frames, bins }
}

fn explanation_with(space: FeatureSpace, ranked: Vec<(usize, f64)>) -> Explanation {
    Explanation {
        method: Method::Deletion,
        target_class: 0,
        space,
        seed: 0,
        params: serde_json::Value::Null,
        ranked,
    }
}

fn small_synthetic(samples_per_class: usize, seed: u64) -> (SynthConfig, Vec<Vec<TimeSeries>>) {
    let cfg = SynthConfig {
        samples_per_class,
        seed,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&cfg).unwrap();
    let per_class = (0..3)
        .map(|c| data.class_samples(c).into_iter().cloned().collect())
        .collect();
    (cfg, per_class)
}

#[test]
fn constant_classifier_has_zero_faithfulness() {
    let (_, per_class) = small_synthetic(2, 3);
    let classifier = ClassifierHandle::Softmax(
        LinearSoftmax::new(Array2::zeros((3, 384)), Array1::zeros(3)).unwrap(),
    );
    let mut engine = SpectrogramEngine::new(
        &classifier,
        &per_class[0],
        0,
        WINDOW,
        HOP,
        DeletionFill::RetainedBin,
    )
    .unwrap();
    let space = engine.space();
    let ranked: Vec<(usize, f64)> = (0..12).map(|f| (f * 7, 0.0)).collect();
    let explanation = explanation_with(space, ranked);
    for k in [1usize, 4, 12] {
        for mode in [FaithfulnessMode::Cumulative, FaithfulnessMode::Single] {
            let drop = faithfulness_at_k(&mut engine, &explanation, k, mode).unwrap();
            assert_eq!(drop, 0.0, "k={k} mode={mode:?}");
        }
    }
}

#[test]
fn removing_the_ground_truth_peak_drops_the_rule_probability() {
    let (cfg, per_class) = small_synthetic(3, 11);
    let classifier = synthetic_band_rule(&cfg, WINDOW, HOP).unwrap();
    for class in 0..3 {
        let template = class_template(&cfg, class).unwrap();
        let truth = ground_truth_ranking(&template, WINDOW, HOP, None).unwrap();
        let mut engine = SpectrogramEngine::new(
            &classifier,
            &per_class[class],
            class,
            WINDOW,
            HOP,
            DeletionFill::RetainedBin,
        )
        .unwrap();
        let space = engine.space();
        let bins = match space {
            FeatureSpace::TimeFrequency { bins, .. } => bins,
            _ => unreachable!(),
        };
        let top = truth.cells[0].0 * bins + truth.cells[0].1;
        let explanation = explanation_with(space, vec![(top, 0.0)]);
        let drop =
            faithfulness_at_k(&mut engine, &explanation, 1, FaithfulnessMode::Cumulative).unwrap();
        assert!(
            drop > 0.0,
            "class {class}: removing the peak cell should cost probability, got {drop}"
        );
    }
}

#[test]
fn removing_everything_costs_at_least_as_much_as_the_top_cell() {
    let (cfg, per_class) = small_synthetic(2, 19);
    let classifier = synthetic_band_rule(&cfg, WINDOW, HOP).unwrap();
    for class in 0..3 {
        let template = class_template(&cfg, class).unwrap();
        let truth = ground_truth_ranking(&template, WINDOW, HOP, None).unwrap();
        let mut engine = SpectrogramEngine::new(
            &classifier,
            &per_class[class],
            class,
            WINDOW,
            HOP,
            DeletionFill::RetainedBin,
        )
        .unwrap();
        let space = engine.space();
        let (frames, bins) = match space {
            FeatureSpace::TimeFrequency { frames, bins } => (frames, bins),
            _ => unreachable!(),
        };
        let top = truth.cells[0].0 * bins + truth.cells[0].1;
        let mut ranked = vec![(top, 0.0)];
        ranked.extend((0..frames * bins).filter(|&f| f != top).map(|f| (f, 0.0)));
        let explanation = explanation_with(space, ranked);
        let k1 =
            faithfulness_at_k(&mut engine, &explanation, 1, FaithfulnessMode::Cumulative).unwrap();
        let kf = faithfulness_at_k(
            &mut engine,
            &explanation,
            frames * bins,
            FaithfulnessMode::Cumulative,
        )
        .unwrap();
        assert!(
            kf >= k1,
            "class {class}: full removal {kf} under top-1 removal {k1}"
        );
    }
}

#[test]
fn cumulative_and_single_agree_at_depth_one() {
    let (cfg, per_class) = small_synthetic(2, 23);
    let classifier = synthetic_band_rule(&cfg, WINDOW, HOP).unwrap();
    let mut engine = SpectrogramEngine::new(
        &classifier,
        &per_class[1],
        1,
        WINDOW,
        HOP,
        DeletionFill::RetainedBin,
    )
    .unwrap();
    let explanation = explanation_with(engine.space(), vec![(40, 0.0), (3, 0.0)]);
    let a = faithfulness_at_k(&mut engine, &explanation, 1, FaithfulnessMode::Cumulative).unwrap();
    let b = faithfulness_at_k(&mut engine, &explanation, 1, FaithfulnessMode::Single).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zeroing_an_active_time_segment_drops_the_rule_probability() {
    let (cfg, per_class) = small_synthetic(3, 29);
    let classifier = synthetic_band_rule(&cfg, WINDOW, HOP).unwrap();
    let mut engine = TimeSeriesEngine::new(&classifier, &per_class[2], 2, 16).unwrap();
    // Class 2 lives in the middle third of the signal: segments 8..16.
    let explanation = explanation_with(engine.space(), vec![(10, 0.0)]);
    let drop =
        faithfulness_at_k(&mut engine, &explanation, 1, FaithfulnessMode::Cumulative).unwrap();
    assert!(drop > 0.0, "zeroing an active segment should cost probability");
}

#[test]
fn faithfulness_rejects_bad_depth_and_mismatched_space() {
    let (cfg, per_class) = small_synthetic(1, 31);
    let classifier = synthetic_band_rule(&cfg, WINDOW, HOP).unwrap();
    let mut engine = SpectrogramEngine::new(
        &classifier,
        &per_class[0],
        0,
        WINDOW,
        HOP,
        DeletionFill::RetainedBin,
    )
    .unwrap();
    let explanation = explanation_with(engine.space(), vec![(0, 0.0)]);
    assert!(faithfulness_at_k(&mut engine, &explanation, 0, FaithfulnessMode::Cumulative).is_err());
    assert!(faithfulness_at_k(&mut engine, &explanation, 2, FaithfulnessMode::Cumulative).is_err());

    let wrong_space = explanation_with(tf_space(10, 9), vec![(0, 0.0)]);
    assert!(
        faithfulness_at_k(&mut engine, &wrong_space, 1, FaithfulnessMode::Cumulative).is_err()
    );
}

fn rise_closure<'a>(
    classifier: &'a ClassifierHandle,
    target: usize,
    perturbations: usize,
) -> impl FnMut(&[TimeSeries]) -> spectralx::Result<Explanation> + 'a {
    move |batch: &[TimeSeries]| {
        let mut engine = SpectrogramEngine::new(
            classifier,
            batch,
            target,
            WINDOW,
            HOP,
            DeletionFill::RetainedBin,
        )?;
        rise_explain(
            &mut engine,
            &RiseConfig {
                perturbations,
                mask_size: 40,
                seed: 9,
                exhaustive: false,
            },
        )
    }
}

#[test]
fn zero_noise_robustness_is_exactly_one() {
    let (cfg, per_class) = small_synthetic(2, 37);
    let classifier = synthetic_band_rule(&cfg, WINDOW, HOP).unwrap();
    for noise in [
        NoiseDomain::Time,
        NoiseDomain::TimeFrequency {
            window: WINDOW,
            hop: HOP,
        },
    ] {
        let score = robustness(
            rise_closure(&classifier, 1, 150),
            &per_class[1],
            noise,
            &RobustnessConfig {
                sigma: 0.0,
                trials: 3,
                ..RobustnessConfig::default()
            },
        )
        .unwrap();
        assert_eq!(score, 1.0);
    }
}

#[test]
fn overwhelming_noise_degrades_robustness() {
    let (cfg, per_class) = small_synthetic(2, 41);
    let classifier = synthetic_band_rule(&cfg, WINDOW, HOP).unwrap();
    let score = robustness(
        rise_closure(&classifier, 2, 150),
        &per_class[2],
        NoiseDomain::Time,
        &RobustnessConfig {
            sigma: 1e3,
            trials: 3,
            ..RobustnessConfig::default()
        },
    )
    .unwrap();
    assert!(score < 1.0, "rankings survived 1000-sigma noise: {score}");
    assert!((0.0..=1.0).contains(&score));
}

#[test]
fn full_set_overlap_is_always_one() {
    // top_m covering the whole ranking compares full feature sets, which are
    // identical for an explainer that ranks every feature.
    let (cfg, per_class) = small_synthetic(1, 43);
    let classifier = synthetic_band_rule(&cfg, WINDOW, HOP).unwrap();
    let score = robustness(
        rise_closure(&classifier, 0, 150),
        &per_class[0],
        NoiseDomain::Time,
        &RobustnessConfig {
            sigma: 0.5,
            trials: 2,
            top_m: usize::MAX,
            ..RobustnessConfig::default()
        },
    )
    .unwrap();
    assert_eq!(score, 1.0);
}

#[test]
fn spectral_noise_robustness_is_deterministic() {
    let (cfg, per_class) = small_synthetic(1, 47);
    let classifier = synthetic_band_rule(&cfg, WINDOW, HOP).unwrap();
    let run = || {
        robustness(
            rise_closure(&classifier, 0, 120),
            &per_class[0],
            NoiseDomain::TimeFrequency {
                window: WINDOW,
                hop: HOP,
            },
            &RobustnessConfig {
                sigma: 0.3,
                trials: 3,
                ..RobustnessConfig::default()
            },
        )
        .unwrap()
    };
    let first = run();
    assert!((0.0..=1.0).contains(&first));
    assert_eq!(first, run());
}

#[test]
fn robustness_validates_its_parameters() {
    let (cfg, per_class) = small_synthetic(1, 53);
    let classifier = synthetic_band_rule(&cfg, WINDOW, HOP).unwrap();
    let bad_sigma = robustness(
        rise_closure(&classifier, 0, 50),
        &per_class[0],
        NoiseDomain::Time,
        &RobustnessConfig {
            sigma: -0.1,
            ..RobustnessConfig::default()
        },
    );
    assert!(bad_sigma.is_err());
    let no_samples = robustness(
        rise_closure(&classifier, 0, 50),
        &[],
        NoiseDomain::Time,
        &RobustnessConfig::default(),
    );
    assert!(no_samples.is_err());
}

fn ranking_strategy(universe: usize, max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::sample::subsequence((0..universe).collect::<Vec<usize>>(), 0..=max_len)
        .prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rbo_is_symmetric(
        a in ranking_strategy(30, 12),
        b in ranking_strategy(30, 12),
        depth in 1usize..12,
    ) {
        let x = rbo(&a, &b, depth, 0.9).unwrap();
        let y = rbo(&b, &a, depth, 0.9).unwrap();
        prop_assert!((x - y).abs() < 1e-12);
    }

    #[test]
    fn rbo_stays_in_unit_range(
        a in ranking_strategy(30, 12),
        b in ranking_strategy(30, 12),
        depth in 1usize..12,
    ) {
        let x = rbo(&a, &b, depth, 0.9).unwrap();
        prop_assert!((0.0..=1.0).contains(&x));
    }

    #[test]
    fn shared_prefix_never_lowers_rbo(
        a in ranking_strategy(30, 10),
        b in ranking_strategy(30, 10),
        depth in 1usize..10,
    ) {
        // Prepending the same fresh element to both lists can only help.
        let shared = 999usize;
        let mut pa = vec![shared];
        pa.extend(&a);
        let mut pb = vec![shared];
        pb.extend(&b);
        let before = rbo(&a, &b, depth, 0.9).unwrap();
        let after = rbo(&pa, &pb, depth, 0.9).unwrap();
        prop_assert!(after >= before - 1e-12, "{after} < {before}");
    }

    #[test]
    fn recall_area_grows_with_depth(
        predicted in ranking_strategy(25, 10),
        truth in ranking_strategy(25, 8),
        depth in 1usize..10,
    ) {
        prop_assume!(!truth.is_empty());
        let (aup_short, aur_short) = area_under_curves(&predicted, &truth, depth).unwrap();
        let (aup_long, aur_long) = area_under_curves(&predicted, &truth, depth + 1).unwrap();
        prop_assert!((0.0..=1.0).contains(&aup_short));
        prop_assert!((0.0..=1.0).contains(&aup_long));
        prop_assert!(aur_long >= aur_short - 1e-12);
    }
}
