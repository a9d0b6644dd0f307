use super::*;
use crate::autodiff::{gradient_check, Tape};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn on_tape(rows: usize, cols: usize, data: Vec<f64>) -> (Tape, Var) {
    let tape = Tape::new();
    let samples = tape.param(Tensor::matrix(rows, cols, data));
    (tape, samples)
}

#[test]
fn energy_estimate_symmetric_two_sample_case() {
    // Samples 0 and 2 around the observation 1: the distance terms cancel.
    let (_t, s) = on_tape(2, 1, vec![0.0, 2.0]);
    let v = energy_score_estimate(&s, &[1.0], &EnergyScoreParams::default()).unwrap();
    assert_relative_eq!(v.item(), 0.0);
}

#[test]
fn energy_estimate_three_sample_case() {
    // (2/3)(1+3+5) = 6 toward the observation, minus (1/6)(2+4+2+2+4+2)
    // = 8/3 between samples: 10/3.
    let (_t, s) = on_tape(3, 1, vec![1.0, 3.0, 5.0]);
    let v = energy_score_estimate(&s, &[0.0], &EnergyScoreParams::default()).unwrap();
    assert_relative_eq!(v.item(), 10.0 / 3.0, max_relative = 1e-12);
}

#[test]
fn kernel_estimate_two_sample_case() {
    // Pair term exp(-4/2); observation terms 2*exp(-1/2).
    let (_t, s) = on_tape(2, 1, vec![0.0, 2.0]);
    let v = kernel_score_estimate(&s, &[1.0], &KernelScoreParams { gamma: 1.0 }).unwrap();
    let expect = (-2.0f64).exp() - 2.0 * (-0.5f64).exp();
    assert_relative_eq!(v.item(), expect, max_relative = 1e-12);
}

#[test]
fn coincident_samples_keep_finite_values_and_gradients() {
    let (tape, s) = on_tape(2, 1, vec![1.0, 1.0]);
    let v = energy_score_estimate(&s, &[0.0], &EnergyScoreParams::default()).unwrap();
    assert_relative_eq!(v.item(), 2.0);
    let grads = tape.backward(&v).unwrap();
    assert!(grads.get(&s).unwrap().is_finite());
}

#[test]
fn estimator_rejects_single_sample() {
    let (_t, s) = on_tape(1, 1, vec![0.5]);
    assert!(matches!(
        energy_score_estimate(&s, &[0.0], &EnergyScoreParams::default()),
        Err(ScoreError::TooFewSamples(1))
    ));
}

#[test]
fn estimator_rejects_dimension_mismatch() {
    let (_t, s) = on_tape(3, 2, vec![0.0; 6]);
    assert!(matches!(
        energy_score_estimate(&s, &[0.0], &EnergyScoreParams::default()),
        Err(ScoreError::DimMismatch { sample_dim: 2, obs_dim: 1 })
    ));
}

#[test]
fn beta_and_gamma_are_validated() {
    let (_t, s) = on_tape(2, 1, vec![0.0, 1.0]);
    assert!(energy_score_estimate(&s, &[0.0], &EnergyScoreParams { beta: 2.0 }).is_err());
    assert!(energy_score_estimate(&s, &[0.0], &EnergyScoreParams { beta: 0.0 }).is_err());
    assert!(kernel_score_estimate(&s, &[0.0], &KernelScoreParams { gamma: 0.0 }).is_err());
    assert!(kernel_score_estimate(&s, &[0.0], &KernelScoreParams { gamma: f64::NAN }).is_err());
}

#[test]
fn exact_energy_oracle_uniform_support() {
    let support = vec![vec![0.0], vec![2.0]];
    let probs = [0.5, 0.5];
    // 2*(0.5*1 + 0.5*1) - (2*0.25*2) = 1 for the centered observation,
    // 2*(0.5*0 + 0.5*2) - 1 = 1 for an observation on a support point.
    let at_center = exact_energy_score_discrete(&support, &probs, &[1.0], 1.0).unwrap();
    assert_relative_eq!(at_center, 1.0);
    let at_support = exact_energy_score_discrete(&support, &probs, &[0.0], 1.0).unwrap();
    assert_relative_eq!(at_support, 1.0);
}

#[test]
fn discrete_oracle_validates_distribution() {
    let support = vec![vec![0.0], vec![1.0]];
    assert!(matches!(
        exact_energy_score_discrete(&support, &[0.7, 0.7], &[0.0], 1.0),
        Err(ScoreError::InvalidDistribution(_))
    ));
    assert!(exact_energy_score_discrete(&support, &[1.2, -0.2], &[0.0], 1.0).is_err());
}

fn discrete_example() -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let support = vec![
        vec![0.0, 0.0],
        vec![1.5, 0.3],
        vec![-0.7, 2.0],
        vec![0.4, -1.1],
    ];
    let probs = vec![0.4, 0.3, 0.2, 0.1];
    let obs = vec![0.25, -0.5];
    (support, probs, obs)
}

fn draw_support(rng: &mut ChaCha8Rng, support: &[Vec<f64>], probs: &[f64], m: usize) -> Vec<f64> {
    let p = support[0].len();
    let mut out = Vec::with_capacity(m * p);
    for _ in 0..m {
        let u: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut idx = support.len() - 1;
        for (i, &pi) in probs.iter().enumerate() {
            acc += pi;
            if u < acc {
                idx = i;
                break;
            }
        }
        out.extend_from_slice(&support[idx]);
    }
    out
}

/// Monte Carlo unbiasedness of both estimators against the exact discrete
/// oracles, within four standard errors.
#[test]
fn estimators_are_unbiased_on_discrete_distribution() {
    let (support, probs, obs) = discrete_example();
    let exact_e = exact_energy_score_discrete(&support, &probs, &obs, 1.0).unwrap();
    let exact_k = exact_kernel_score_discrete(&support, &probs, &obs, 0.8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (n_draws, m) = (30_000, 5);
    let mut sums = [0.0f64; 2];
    let mut sqs = [0.0f64; 2];
    for _ in 0..n_draws {
        let data = draw_support(&mut rng, &support, &probs, m);
        let (_t, s) = on_tape(m, 2, data);
        let e = energy_score_estimate(&s, &obs, &EnergyScoreParams::default()).unwrap().item();
        let k = kernel_score_estimate(&s, &obs, &KernelScoreParams { gamma: 0.8 }).unwrap().item();
        sums[0] += e;
        sqs[0] += e * e;
        sums[1] += k;
        sqs[1] += k * k;
    }
    for (i, exact) in [exact_e, exact_k].into_iter().enumerate() {
        let mean = sums[i] / n_draws as f64;
        let var = (sqs[i] / n_draws as f64 - mean * mean).max(0.0);
        let se = (var / n_draws as f64).sqrt();
        assert!(
            (mean - exact).abs() < 4.0 * se,
            "estimator {i}: mean {mean} vs exact {exact}, se {se}"
        );
    }
}

/// The expected score is minimized when sampling from the data
/// distribution (propriety), checked numerically for a Gaussian.
#[test]
fn expected_score_prefers_the_true_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (trials, m) = (4000, 10);
    let mut run = |shift: f64, gamma_rule: bool| -> (f64, f64) {
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..trials {
            let x: f64 = rng.sample(StandardNormal);
            let data: Vec<f64> =
                (0..m).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect();
            let (_t, s) = on_tape(m, 1, data);
            let v = if gamma_rule {
                kernel_score_estimate(&s, &[x], &KernelScoreParams { gamma: 1.0 }).unwrap().item()
            } else {
                energy_score_estimate(&s, &[x], &EnergyScoreParams::default()).unwrap().item()
            };
            sum += v;
            sq += v * v;
        }
        let mean = sum / trials as f64;
        let var = (sq / trials as f64 - mean * mean).max(0.0);
        (mean, (var / trials as f64).sqrt())
    };
    for gamma_rule in [false, true] {
        let (true_mean, true_se) = run(0.0, gamma_rule);
        let (off_mean, off_se) = run(1.5, gamma_rule);
        let gap = off_mean - true_mean;
        let se = (true_se * true_se + off_se * off_se).sqrt();
        assert!(gap > 4.0 * se, "rule {gamma_rule}: gap {gap} vs se {se}");
    }
}

#[test]
fn estimator_gradients_match_finite_differences() {
    let point = Tensor::matrix(4, 2, vec![0.8, -0.3, 1.7, 0.4, -1.1, 0.9, 0.2, -1.6]);
    let obs = [0.5, 0.1];
    for beta in [1.0, 1.3] {
        let report = gradient_check(
            |_tape, s| {
                energy_score_estimate(s, &obs, &EnergyScoreParams { beta })
                    .map_err(|e| match e {
                        ScoreError::Autodiff(a) => a,
                        other => panic!("{other}"),
                    })
            },
            &point,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "beta {beta}: rel err {}", report.max_rel_err);
    }
    let report = gradient_check(
        |_tape, s| {
            kernel_score_estimate(s, &obs, &KernelScoreParams { gamma: 0.7 }).map_err(|e| match e {
                ScoreError::Autodiff(a) => a,
                other => panic!("{other}"),
            })
        },
        &point,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed, "kernel rel err {}", report.max_rel_err);
}

#[test]
fn patched_gradients_match_finite_differences() {
    let point = Tensor::matrix(
        3,
        6,
        vec![
            0.3, -0.8, 1.2, 0.5, -0.2, 0.9, 1.1, 0.4, -0.6, 0.7, 1.4, -1.0, -0.5, 0.2, 0.8, -1.3,
            0.6, 0.1,
        ],
    );
    let obs = [0.2, -0.1, 0.5, 0.9, -0.4, 0.3];
    let layout = PatchLayout::new(GridShape::Line(6), 2, 2);
    let report = gradient_check(
        |_tape, s| {
            patched_score_estimate(s, &obs, &BaseRule::Energy(EnergyScoreParams::default()), &layout)
                .map_err(|e| match e {
                    ScoreError::Autodiff(a) => a,
                    other => panic!("{other}"),
                })
        },
        &point,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed, "rel err {}", report.max_rel_err);
}

#[test]
fn patch_counts_match_layout_arithmetic() {
    let cases = [
        (PatchLayout::new(GridShape::Line(100), 10, 5), 19),
        (PatchLayout::new(GridShape::Line(100), 20, 10), 9),
        (PatchLayout::new(GridShape::Line(40), 10, 5), 7),
        (PatchLayout::new(GridShape::Plane { rows: 28, cols: 28 }, 8, 5), 25),
    ];
    for (layout, expect) in cases {
        let patches = patch_layout_indices(&layout).unwrap();
        assert_eq!(patches.len(), expect);
        assert_eq!(layout.patch_count(), expect);
        for p in &patches {
            assert_eq!(
                p.len(),
                match layout.grid {
                    GridShape::Line(_) => layout.patch_size,
                    GridShape::Plane { .. } => layout.patch_size * layout.patch_size,
                }
            );
            assert!(p.iter().all(|&i| i < layout.grid.len()));
        }
    }
}

#[test]
fn plane_patch_indices_follow_row_major_windows() {
    let layout = PatchLayout::new(GridShape::Plane { rows: 4, cols: 4 }, 2, 2);
    let patches = patch_layout_indices(&layout).unwrap();
    assert_eq!(patches.len(), 4);
    assert_eq!(patches[0], vec![0, 1, 4, 5]);
    assert_eq!(patches[1], vec![2, 3, 6, 7]);
    assert_eq!(patches[2], vec![8, 9, 12, 13]);
    assert_eq!(patches[3], vec![10, 11, 14, 15]);
}

#[test]
fn invalid_layouts_are_rejected() {
    assert!(patch_layout_indices(&PatchLayout::new(GridShape::Line(10), 11, 1)).is_err());
    assert!(patch_layout_indices(&PatchLayout::new(GridShape::Line(10), 0, 1)).is_err());
    assert!(patch_layout_indices(&PatchLayout::new(GridShape::Line(10), 2, 0)).is_err());
    let mut bad = PatchLayout::new(GridShape::Line(10), 2, 2);
    bad.w_patch = 0.0;
    assert!(patch_layout_indices(&bad).is_err());
}

#[test]
fn patched_estimate_equals_manual_decomposition() {
    let data = vec![
        0.3, -0.8, 1.2, 0.5, 1.1, 0.4, -0.6, 0.7, -0.5, 0.2, 0.8, -1.3,
    ];
    let obs = [0.2, -0.1, 0.5, 0.9];
    let layout = PatchLayout { grid: GridShape::Line(4), patch_size: 2, patch_step: 2, w_full: 0.6, w_patch: 1.7 };
    let base = BaseRule::Energy(EnergyScoreParams::default());

    let (_t, s) = on_tape(3, 4, data.clone());
    let patched = patched_score_estimate(&s, &obs, &base, &layout).unwrap().item();

    let full = {
        let (_t, s) = on_tape(3, 4, data.clone());
        energy_score_estimate(&s, &obs, &EnergyScoreParams::default()).unwrap().item()
    };
    let mut patch_sum = 0.0;
    for patch in patch_layout_indices(&layout).unwrap() {
        let mut cols = Vec::with_capacity(3 * patch.len());
        for r in 0..3 {
            for &c in &patch {
                cols.push(data[r * 4 + c]);
            }
        }
        let obs_p: Vec<f64> = patch.iter().map(|&c| obs[c]).collect();
        let (_t, s) = on_tape(3, 2, cols);
        patch_sum += energy_score_estimate(&s, &obs_p, &EnergyScoreParams::default()).unwrap().item();
    }
    assert_relative_eq!(patched, 0.6 * full + 1.7 * patch_sum, max_relative = 1e-12);
}

#[test]
fn gaussian_kernel_is_one_on_diagonal_and_bounded() {
    let a = [0.4, -1.0, 2.2];
    assert_relative_eq!(gaussian_kernel_eval(&a, &a, 0.3).unwrap(), 1.0);
    let b = [1.4, 0.0, -0.2];
    let k = gaussian_kernel_eval(&a, &b, 0.3).unwrap();
    assert!(k > 0.0 && k < 1.0);
}

#[test]
fn median_bandwidth_small_example() {
    // Distances {1, 1, 2}: median 1.
    let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
    assert_relative_eq!(median_bandwidth(&rows).unwrap(), 1.0);
}

#[test]
fn median_bandwidth_rejects_identical_rows() {
    let rows = vec![vec![3.0, 1.0]; 5];
    assert!(matches!(median_bandwidth(&rows), Err(ScoreError::DegenerateData(_))));
}

#[test]
fn rule_names_cover_all_variants() {
    assert_eq!(ScoringRule::energy().name(), "energy");
    assert_eq!(ScoringRule::Kernel(KernelScoreParams { gamma: 1.0 }).name(), "kernel");
    let patched = ScoringRule::Patched {
        base: BaseRule::Kernel(KernelScoreParams { gamma: 1.0 }),
        layout: PatchLayout::new(GridShape::Line(4), 2, 2),
    };
    assert_eq!(patched.name(), "patched_kernel");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Estimates are invariant under permuting the sample rows.
    #[test]
    fn energy_estimate_is_permutation_invariant(
        data in prop::collection::vec(-5.0..5.0f64, 8),
        obs in prop::collection::vec(-5.0..5.0f64, 2),
    ) {
        let (_t, s) = on_tape(4, 2, data.clone());
        let v1 = energy_score_estimate(&s, &obs, &EnergyScoreParams::default()).unwrap().item();
        let mut reversed = Vec::with_capacity(8);
        for r in (0..4).rev() {
            reversed.extend_from_slice(&data[r * 2..(r + 1) * 2]);
        }
        let (_t, s) = on_tape(4, 2, reversed);
        let v2 = energy_score_estimate(&s, &obs, &EnergyScoreParams::default()).unwrap().item();
        prop_assert!((v1 - v2).abs() <= 1e-10 * v1.abs().max(1.0));
    }

    /// The Gaussian-kernel score always lies in (-2, 1).
    #[test]
    fn kernel_estimate_is_bounded(
        data in prop::collection::vec(-5.0..5.0f64, 6),
        obs in prop::collection::vec(-5.0..5.0f64, 2),
        gamma in 0.1..3.0f64,
    ) {
        let (_t, s) = on_tape(3, 2, data);
        let v = kernel_score_estimate(&s, &obs, &KernelScoreParams { gamma }).unwrap().item();
        prop_assert!(v > -2.0 && v < 1.0);
    }
}
