//! Acceptance gate for the toolkit. Each test checks one release criterion
//! end to end and prints a single pass/fail verdict line; run with
//! `cargo test --test acceptance -- --nocapture` to see the checklist.
//!
//! The oracles here are written from scratch on purpose, so a shared bug in
//! the library and its unit tests cannot slip through this gate.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use spectralx::classifier::{
    synthetic_band_rule, train_classifier, TrainConfig, TrainKind,
};
use spectralx::dataset::{
    class_template, generate_synthetic, ground_truth_ranking, save_ucr, split_dataset,
    LabeledDataset, SynthConfig,
};
use spectralx::experiment::{
    run_experiment, ClassifierSpec, DatasetSource, ExperimentConfig, ExplanationDomain,
};
use spectralx::explainers::{
    fia_explain, kernelshap_explain, lime_explain, rise_explain, DeletionFill, FiaConfig,
    KernelShapConfig, LimeConfig, Method, PerturbationEngine, RiseConfig, SpectrogramEngine,
};
use spectralx::metrics::{
    area_under_curves, rbo, robustness, NoiseDomain, RobustnessConfig, METRICS_CSV_HEADER,
};
use spectralx::perturbation::{enumerate_masks, FeatureSpace, PerturbationMask, PerturbationMode};
use spectralx::signal::{istft, make_window, stft, TimeSeries, WindowKind};
use spectralx::Result;

const WINDOW: usize = 16;
const HOP: usize = 8;

/// Prints the verdict line for one criterion and panics if anything failed.
fn verdict(number: u8, name: &str, failures: Vec<String>) {
    if failures.is_empty() {
        println!("criterion {number} ({name}): PASS");
    } else {
        let detail = failures.join("; ");
        println!("criterion {number} ({name}): FAIL: {detail}");
        panic!("criterion {number} ({name}) failed: {detail}");
    }
}

fn check(failures: &mut Vec<String>, ok: bool, detail: impl FnOnce() -> String) {
    if !ok {
        failures.push(detail());
    }
}

fn check_runtime(failures: &mut Vec<String>, elapsed: Duration, budget: Duration) {
    check(failures, elapsed <= budget, || {
        format!("took {elapsed:.2?}, budget {budget:.2?}")
    });
}

#[test]
fn criterion_1_reconstruction_is_exact_on_random_signals() {
    let mut failures = Vec::new();
    let start = Instant::now();
    let window = make_window(WindowKind::Hann, WINDOW).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..384)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let x = TimeSeries::new(values).unwrap();
        let y = istft(&stft(&x, &window, HOP).unwrap()).unwrap();
        let scale = x.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let err = x
            .values()
            .iter()
            .zip(y.values())
            .fold(0.0f64, |a, (&u, &v)| a.max((u - v).abs()))
            / scale;
        worst = worst.max(err);
    }
    check(&mut failures, worst <= 1e-6, || {
        format!("worst relative reconstruction error {worst:.3e} > 1e-6")
    });
    check_runtime(&mut failures, start.elapsed(), Duration::from_secs(5));
    verdict(1, "round-trip reconstruction", failures);
}

#[test]
fn criterion_2_mlp_separates_the_synthetic_classes() {
    let mut failures = Vec::new();
    let start = Instant::now();
    let data = generate_synthetic(&SynthConfig::default()).unwrap();
    let (train, val, test) = split_dataset(&data, (0.8, 0.1, 0.1), 0).unwrap();
    let (model, report) = train_classifier(
        &train,
        &val,
        &TrainConfig {
            kind: TrainKind::Mlp,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let accuracy = model.accuracy(&test).unwrap();
    check(&mut failures, accuracy >= 0.99, || {
        format!(
            "test accuracy {accuracy:.4} < 0.99 (val {:.4} after {} epochs)",
            report.val_accuracy, report.epochs
        )
    });
    check_runtime(&mut failures, start.elapsed(), Duration::from_secs(120));
    verdict(2, "classifier accuracy", failures);
}

/// Time-frequency cells a class's discriminative content can legitimately
/// occupy: frames whose window overlaps an active segment, crossed with the
/// segment's carrier bin plus one bin of leakage either side.
fn active_region(cfg: &SynthConfig, class: usize, frames: usize, bins: usize) -> HashSet<(usize, usize)> {
    let parts: &[(usize, f64)] = match class {
        0 => &[(0, 1.0), (2, 12.0)],
        1 => &[(0, 12.0), (2, 1.0)],
        _ => &[(1, 6.0)],
    };
    let mut region = HashSet::new();
    for &(segment, cycles) in parts {
        let start = (segment * cfg.segment_length) as i64;
        let end = start + cfg.segment_length as i64;
        let carrier = (cycles * WINDOW as f64 / cfg.segment_length as f64).round() as i64;
        for frame in 0..frames {
            let lo = (frame * HOP) as i64 - HOP as i64;
            if lo < end && lo + WINDOW as i64 > start {
                for bin in (carrier - 1).max(0)..=(carrier + 1).min(bins as i64 - 1) {
                    region.insert((frame, bin as usize));
                }
            }
        }
    }
    region
}

#[test]
fn criterion_3_deletion_localizes_the_rule_classifiers_evidence() {
    let mut failures = Vec::new();
    let start = Instant::now();
    let mut passing_runs = 0u32;
    for seed in 0..10u64 {
        let cfg = SynthConfig {
            samples_per_class: 2,
            seed,
            ..SynthConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        let classifier = synthetic_band_rule(&cfg, WINDOW, HOP).unwrap();
        let mut localized = true;
        for class in 0..3 {
            let samples: Vec<TimeSeries> =
                data.class_samples(class).into_iter().cloned().collect();
            let mut engine = SpectrogramEngine::new(
                &classifier,
                &samples,
                class,
                WINDOW,
                HOP,
                DeletionFill::RetainedBin,
            )
            .unwrap();
            let explanation = fia_explain(
                &mut engine,
                Method::Deletion,
                &FiaConfig {
                    perturbations: 600,
                    mask_size: 10,
                    iterations: 1,
                    seed: 0,
                    ..FiaConfig::default()
                },
            )
            .unwrap();
            let FeatureSpace::TimeFrequency { frames, bins } = explanation.space else {
                panic!("expected a time-frequency explanation");
            };
            let cell = explanation.space.cell_of(explanation.ranked[0].0).unwrap();
            if !active_region(&cfg, class, frames, bins).contains(&cell) {
                localized = false;
            }
        }
        if localized {
            passing_runs += 1;
        }
    }
    check(&mut failures, passing_runs >= 8, || {
        format!("top-1 inside the active region for all classes in only {passing_runs}/10 runs")
    });
    check_runtime(&mut failures, start.elapsed(), Duration::from_secs(300));
    verdict(3, "ground-truth localization", failures);
}

/// A cooperative game posing as a perturbation engine; the value function
/// sees which features are kept.
struct Game<F: Fn(&[bool]) -> f64> {
    features: usize,
    value: F,
}

impl<F: Fn(&[bool]) -> f64> Game<F> {
    fn kept_for(&self, mask: &PerturbationMask, fixed: &[usize], mode: PerturbationMode) -> Vec<bool> {
        let mut kept = vec![false; self.features];
        for &f in mask.indices() {
            kept[f] = true;
        }
        for &f in fixed {
            kept[f] = true;
        }
        if matches!(mode, PerturbationMode::Deletion) {
            for k in kept.iter_mut() {
                *k = !*k;
            }
        }
        kept
    }
}

impl<F: Fn(&[bool]) -> f64> PerturbationEngine for Game<F> {
    fn space(&self) -> FeatureSpace {
        FeatureSpace::TimeSegments {
            segment_count: self.features,
            segment_length: 1,
        }
    }

    fn target_class(&self) -> usize {
        0
    }

    fn original_value(&mut self) -> Result<f64> {
        Ok((self.value)(&vec![true; self.features]))
    }

    fn batch_value(
        &mut self,
        masks: &[PerturbationMask],
        fixed: &[usize],
        mode: PerturbationMode,
    ) -> Result<Vec<f64>> {
        Ok(masks
            .iter()
            .map(|mask| (self.value)(&self.kept_for(mask, fixed, mode)))
            .collect())
    }
}

const TOY_CELLS: [f64; 6] = [0.05, 0.40, 0.10, 0.30, 0.15, 0.08];

fn toy_game() -> Game<impl Fn(&[bool]) -> f64> {
    Game {
        features: TOY_CELLS.len(),
        value: |kept: &[bool]| {
            0.1 + kept
                .iter()
                .zip(&TOY_CELLS)
                .map(|(&on, c)| if on { *c } else { 0.0 })
                .sum::<f64>()
        },
    }
}

/// Conditional-mean oracle for one greedy iteration, by full enumeration.
fn enumeration_oracle(
    game: &Game<impl Fn(&[bool]) -> f64>,
    mask_size: usize,
    fixed: &[usize],
    mode: PerturbationMode,
) -> Vec<f64> {
    let original = (game.value)(&vec![true; game.features]);
    let mut sums = vec![0.0; game.features];
    let mut counts = vec![0usize; game.features];
    for mask in enumerate_masks(mask_size, game.features, fixed).unwrap() {
        let delta = (game.value)(&game.kept_for(&mask, fixed, mode)) - original;
        for &f in mask.indices() {
            sums[f] += delta;
            counts[f] += 1;
        }
    }
    (0..game.features)
        .map(|f| sums[f] / counts[f].max(1) as f64)
        .collect()
}

#[test]
fn criterion_4_greedy_scores_match_enumeration_oracles() {
    let mut failures = Vec::new();
    for mode in [PerturbationMode::Insertion, PerturbationMode::Deletion] {
        // Score rule: mean conditional delta over every mask of size 2.
        let mut game = toy_game();
        let masks = enumerate_masks(2, 6, &[]).unwrap();
        let scores =
            spectralx::explainers::iteration_scores(&mut game, &masks, &[], mode).unwrap();
        let oracle = enumeration_oracle(&game, 2, &[], mode);
        for (f, (s, o)) in scores.iter().zip(&oracle).enumerate() {
            check(&mut failures, (s - o).abs() < 1e-9, || {
                format!("{mode:?} score for feature {f}: {s} vs oracle {o}")
            });
        }

        // Selection rule: the greedy path must follow the oracle's extremum
        // at every step, ties to the lowest index.
        let method = match mode {
            PerturbationMode::Insertion => Method::Insertion,
            PerturbationMode::Deletion => Method::Deletion,
        };
        let mut game = toy_game();
        let explanation = fia_explain(
            &mut game,
            method,
            &FiaConfig {
                mask_size: 2,
                iterations: 4,
                exhaustive: true,
                ..FiaConfig::default()
            },
        )
        .unwrap();
        let mut fixed: Vec<usize> = Vec::new();
        for step in 0..4 {
            let oracle = enumeration_oracle(&game, 2, &fixed, mode);
            let pick = (0..6)
                .filter(|f| !fixed.contains(f))
                .min_by(|&a, &b| {
                    let (x, y) = match mode {
                        PerturbationMode::Insertion => (oracle[b], oracle[a]),
                        PerturbationMode::Deletion => (oracle[a], oracle[b]),
                    };
                    x.total_cmp(&y).then(a.cmp(&b))
                })
                .unwrap();
            let chosen = explanation.ranked[step].0;
            check(&mut failures, chosen == pick, || {
                format!("{mode:?} step {step} selected {chosen}, oracle says {pick}")
            });
            fixed.push(pick);
        }
    }
    verdict(4, "scoring-oracle equivalence", failures);
}

/// Exact Shapley values by summing weighted marginal contributions over
/// every subset.
fn exact_shapley(features: usize, value: &dyn Fn(&[bool]) -> f64) -> Vec<f64> {
    let mut factorial = vec![1.0f64; features + 1];
    for i in 1..=features {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; features];
    for i in 0..features {
        for bits in 0u32..(1 << features) {
            if bits & (1 << i) != 0 {
                continue;
            }
            let size = bits.count_ones() as usize;
            let weight = factorial[size] * factorial[features - size - 1] / factorial[features];
            let mut kept: Vec<bool> = (0..features).map(|f| bits & (1 << f) != 0).collect();
            let without = value(&kept);
            kept[i] = true;
            phi[i] += weight * (value(&kept) - without);
        }
    }
    phi
}

fn coupled_game(kept: &[bool]) -> f64 {
    let c = [0.12, 0.31, 0.05, 0.22, 0.09, 0.18];
    let mut v = 0.1;
    for (i, &on) in kept.iter().enumerate() {
        if on {
            v += c[i];
        }
    }
    // Feature pairs that reward and punish showing up together, so the
    // attributions differ from the bare coefficients.
    if kept[0] && kept[1] {
        v += 0.25;
    }
    if kept[2] && kept[3] {
        v -= 0.15;
    }
    v
}

#[test]
fn criterion_5_shapley_regression_is_exact_on_small_spaces() {
    let mut failures = Vec::new();
    let mut game = Game {
        features: 6,
        value: coupled_game,
    };
    // 62 perturbations cover all proper coalitions of 6 features, so the
    // exhaustive path runs.
    let explanation = kernelshap_explain(
        &mut game,
        &KernelShapConfig {
            perturbations: 62,
            seed: 0,
        },
    )
    .unwrap();
    let mut attributions = vec![0.0; 6];
    for &(f, s) in &explanation.ranked {
        attributions[f] = s;
    }
    let exact = exact_shapley(6, &coupled_game);
    for f in 0..6 {
        let (got, want) = (attributions[f], exact[f]);
        check(&mut failures, (got - want).abs() < 1e-6, || {
            format!("attribution for feature {f}: {got} vs exact {want}")
        });
    }
    let full = coupled_game(&[true; 6]);
    let empty = coupled_game(&[false; 6]);
    let total: f64 = attributions.iter().sum();
    check(&mut failures, (total - (full - empty)).abs() < 1e-6, || {
        format!(
            "efficiency violated: attributions sum to {total}, value spread is {}",
            full - empty
        )
    });
    verdict(5, "Shapley exactness", failures);
}

#[test]
fn criterion_6_metric_identities_hold() {
    let mut failures = Vec::new();

    let identical: Vec<usize> = (10..18).collect();
    let value = rbo(&identical, &identical, 8, 0.9).unwrap();
    check(&mut failures, (value - 0.56953279).abs() <= 1e-9, || {
        format!("rbo on identical lists: {value} vs 0.56953279")
    });
    let disjoint = rbo(&[1, 2, 3], &[4, 5, 6], 8, 0.9).unwrap();
    check(&mut failures, disjoint == 0.0, || {
        format!("rbo on disjoint lists: {disjoint} vs 0")
    });

    // A noise scale of zero must leave any deterministic explainer fully
    // stable, with no floating-point slack.
    let synth = SynthConfig {
        samples_per_class: 1,
        seed: 3,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&synth).unwrap();
    let classifier = synthetic_band_rule(&synth, WINDOW, HOP).unwrap();
    let samples: Vec<TimeSeries> = data.class_samples(0).into_iter().cloned().collect();
    let explain = |batch: &[TimeSeries]| {
        let mut engine = SpectrogramEngine::new(
            &classifier,
            batch,
            0,
            WINDOW,
            HOP,
            DeletionFill::RetainedBin,
        )?;
        rise_explain(
            &mut engine,
            &RiseConfig {
                perturbations: 200,
                mask_size: 40,
                ..RiseConfig::default()
            },
        )
    };
    let stability = robustness(
        explain,
        &samples,
        NoiseDomain::TimeFrequency {
            window: WINDOW,
            hop: HOP,
        },
        &RobustnessConfig {
            sigma: 0.0,
            trials: 3,
            ..RobustnessConfig::default()
        },
    )
    .unwrap();
    check(&mut failures, stability == 1.0, || {
        format!("robustness at sigma 0: {stability} vs exactly 1.0")
    });

    // Hand-computed curves: truth {0, 1}, prediction [0, 5, 1], depth 3.
    // Precision marches 1, 1/2, 2/3 and recall 1/2, 1/2, 1.
    let (aup, aur) = area_under_curves(&[0, 5, 1], &[0, 1], 3).unwrap();
    check(&mut failures, (aup - 13.0 / 18.0).abs() <= 1e-9, || {
        format!("precision area {aup} vs {}", 13.0 / 18.0)
    });
    check(&mut failures, (aur - 2.0 / 3.0).abs() <= 1e-9, || {
        format!("recall area {aur} vs {}", 2.0 / 3.0)
    });

    verdict(6, "metric identities", failures);
}

#[test]
fn criterion_7_combined_ranks_ground_truth_at_least_as_well_as_insertion() {
    let mut failures = Vec::new();
    let synth = SynthConfig {
        samples_per_class: 100,
        seed: 0,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&synth).unwrap();
    let (train, val, test) = split_dataset(&data, (0.8, 0.1, 0.1), 0).unwrap();
    let (model, _) = train_classifier(
        &train,
        &val,
        &TrainConfig {
            kind: TrainKind::Mlp,
            ..TrainConfig::default()
        },
    )
    .unwrap();

    let window = make_window(WindowKind::Hann, WINDOW).unwrap();
    let bins = stft(&class_template(&synth, 0).unwrap(), &window, HOP)
        .unwrap()
        .bins();
    let truth: Vec<Vec<usize>> = (0..3)
        .map(|class| {
            ground_truth_ranking(&class_template(&synth, class).unwrap(), WINDOW, HOP, None)
                .unwrap()
                .flat_indices(bins)
        })
        .collect();

    let mean_rbo = |method: Method| -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for seed in 0..10u64 {
            for class in 0..3 {
                let batch: Vec<TimeSeries> = test
                    .class_samples(class)
                    .into_iter()
                    .take(2)
                    .cloned()
                    .collect();
                let mut engine = SpectrogramEngine::new(
                    &model,
                    &batch,
                    class,
                    WINDOW,
                    HOP,
                    DeletionFill::RetainedBin,
                )
                .unwrap();
                let explanation = fia_explain(
                    &mut engine,
                    method,
                    &FiaConfig {
                        perturbations: 600,
                        mask_size: 40,
                        iterations: 8,
                        seed,
                        ..FiaConfig::default()
                    },
                )
                .unwrap();
                total += rbo(&explanation.ranked_features(), &truth[class], 8, 0.9).unwrap();
                count += 1;
            }
        }
        total / count as f64
    };

    let combined = mean_rbo(Method::Combined);
    let insertion = mean_rbo(Method::Insertion);
    check(&mut failures, combined >= insertion, || {
        format!("mean ranked agreement: combined {combined:.4} < insertion {insertion:.4}")
    });
    verdict(7, "combined beats insertion on ranked agreement", failures);
}

#[test]
fn criterion_8_degeneracies_and_surrogate_recovery() {
    let mut failures = Vec::new();

    // Alpha 1 must reduce the combined selection to insertion exactly, on a
    // game lumpy enough that the two methods genuinely diverge at alpha 0.2.
    let lumpy = |kept: &[bool]| {
        let c = [
            0.30, 0.05, 0.22, 0.17, 0.02, 0.09, 0.27, 0.12, 0.07, 0.19, 0.04, 0.14,
        ];
        let mut v = 0.2;
        for (i, &on) in kept.iter().enumerate() {
            if on {
                v += c[i];
            }
        }
        if kept[0] && kept[5] {
            v += 0.2;
        }
        if kept[3] && kept[9] {
            v -= 0.1;
        }
        v
    };
    let run = |method: Method, alpha: f64| {
        let mut game = Game {
            features: 12,
            value: lumpy,
        };
        fia_explain(
            &mut game,
            method,
            &FiaConfig {
                perturbations: 200,
                mask_size: 3,
                iterations: 6,
                alpha,
                seed: 7,
                exhaustive: false,
            },
        )
        .unwrap()
    };
    let insertion = run(Method::Insertion, 0.2);
    let degenerate = run(Method::Combined, 1.0);
    check(
        &mut failures,
        insertion.ranked.len() == degenerate.ranked.len(),
        || "selection lengths differ".to_string(),
    );
    for (&(fa, sa), &(fb, sb)) in insertion.ranked.iter().zip(&degenerate.ranked) {
        check(&mut failures, fa == fb && sa.to_bits() == sb.to_bits(), || {
            format!("alpha 1 diverges from insertion: ({fa}, {sa:?}) vs ({fb}, {sb:?})")
        });
    }

    // The local surrogate must recover a linear game's coefficients.
    let mut game = toy_game();
    let surrogate = lime_explain(
        &mut game,
        &LimeConfig {
            perturbations: 500,
            seed: 11,
            ..LimeConfig::default()
        },
    )
    .unwrap();
    for &(f, s) in &surrogate.ranked {
        check(&mut failures, (s - TOY_CELLS[f]).abs() < 1e-6, || {
            format!("surrogate coefficient for feature {f}: {s} vs {}", TOY_CELLS[f])
        });
    }

    verdict(8, "degeneracy and surrogate recovery", failures);
}

#[test]
fn criterion_9_file_datasets_flow_through_the_pipeline() {
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();

    // A small two-class file in the tab-separated archive layout.
    let mut samples = Vec::new();
    for i in 0..20usize {
        let class = i % 2;
        let sign = if class == 0 { 1.0 } else { -1.0 };
        let values: Vec<f64> = (0..64)
            .map(|t| {
                let phase = 2.0 * std::f64::consts::PI * t as f64 / 16.0;
                sign * phase.sin() + 0.02 * ((t * (i + 1)) % 7) as f64
            })
            .collect();
        samples.push(TimeSeries::with_label(values, class).unwrap());
    }
    let data = LabeledDataset::new("archive", 2, samples).unwrap();
    let path = dir.path().join("archive.tsv");
    save_ucr(&data, &path).unwrap();

    let out = dir.path().join("run");
    run_experiment(&ExperimentConfig {
        dataset: DatasetSource::Ucr { path },
        classifier: ClassifierSpec::Softmax,
        methods: vec![Method::Rise],
        domains: vec![ExplanationDomain::Tf],
        perturbations: 300,
        mask_size: 12,
        topk: 3,
        out: out.clone(),
        explain_samples: 2,
        robustness_trials: 2,
        max_epochs: 30,
        learning_rate: 1e-2,
        ..ExperimentConfig::default()
    })
    .unwrap();

    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or("");
    check(&mut failures, header == METRICS_CSV_HEADER, || {
        format!("header {header:?} vs {METRICS_CSV_HEADER:?}")
    });
    let rows: Vec<&str> = lines.collect();
    check(&mut failures, !rows.is_empty(), || "no metric rows".to_string());
    for row in &rows {
        let cells: Vec<&str> = row.split(',').collect();
        check(&mut failures, cells.len() == 13, || {
            format!("row {row:?} has {} columns, want 13", cells.len())
        });
        check(
            &mut failures,
            !cells[4].is_empty() && !cells[5].is_empty(),
            || format!("row {row:?} is missing faithfulness or robustness"),
        );
    }
    verdict(9, "archive files produce the full metric table", failures);
}
