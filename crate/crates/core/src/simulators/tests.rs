use super::dataset::{Dataset, DatasetError};
use super::linalg;
use super::reference::{
    conjugate_reference, effective_sample_size, grid_posterior, slcp_reference,
    systematic_resample, two_moons_log_posterior, two_moons_reference, GaussianPosterior,
};
use super::*;
use approx::assert_relative_eq;
use rand::SeedableRng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn model_lookup_exposes_the_four_models_with_their_dims() {
    let expect = [
        ("conjugate_gaussian", 1, 1),
        ("two_moons", 2, 2),
        ("slcp", 5, 8),
        ("grid_toy", 40, 40),
    ];
    for (name, p, d) in expect {
        let m = Model::by_name(name).unwrap();
        assert_eq!(m.name(), name);
        assert_eq!(m.parameter_dim(), p);
        assert_eq!(m.data_dim(), d);
    }
    assert!(matches!(Model::by_name("lotka_volterra"), Err(SimError::UnknownModel(_))));
}

#[test]
fn degenerate_model_parameters_are_rejected() {
    assert!(ConjugateGaussian::new(0.0, 1.0, 0.0).is_err());
    assert!(ConjugateGaussian::new(0.0, 0.0, 1.0).is_err());
    assert!(ConjugateGaussian::new(f64::NAN, 1.0, 1.0).is_err());
    assert!(GridToy::new(0, 5.0, 0.1).is_err());
    assert!(GridToy::new(4, -1.0, 0.1).is_err());
    assert!(GridToy::new(4, 5.0, 0.0).is_err());
}

#[test]
fn simulate_validates_the_parameter_vector() {
    let m = Model::by_name("two_moons").unwrap();
    assert!(matches!(
        m.simulate(&[0.1], &mut rng(0)),
        Err(SimError::WrongParameterDim { got: 1, expected: 2 })
    ));
    assert!(matches!(
        m.simulate(&[0.1, f64::NAN], &mut rng(0)),
        Err(SimError::NonFiniteParameter)
    ));
}

#[test]
fn prior_draws_stay_in_the_support() {
    for name in ["two_moons", "slcp"] {
        let m = Model::by_name(name).unwrap();
        let (lo, hi) = m.parameter_bounds().unwrap();
        let mut r = rng(7);
        for _ in 0..500 {
            let t = m.sample_prior(&mut r);
            assert!(t.iter().zip(&lo).all(|(v, l)| v > l));
            assert!(t.iter().zip(&hi).all(|(v, h)| v < h));
            assert!(m.log_prior(&t).unwrap().is_finite());
        }
    }
    let moons = Model::by_name("two_moons").unwrap();
    assert_eq!(moons.log_prior(&[1.2, 0.0]).unwrap(), f64::NEG_INFINITY);
    assert_relative_eq!(moons.log_prior(&[0.5, -0.5]).unwrap(), -(4.0f64).ln());
}

#[test]
fn log_priors_match_hand_computed_densities() {
    let conj = Model::by_name("conjugate_gaussian").unwrap();
    let expect = -0.5 * (2.0 * PI).ln() - 0.5 * 0.25;
    assert_relative_eq!(conj.log_prior(&[0.5]).unwrap(), expect, max_relative = 1e-12);

    let slcp = Model::by_name("slcp").unwrap();
    assert_relative_eq!(
        slcp.log_prior(&[0.0; 5]).unwrap(),
        -5.0 * (6.0f64).ln(),
        max_relative = 1e-12
    );

    // One-cell grid: standard normal prior.
    let grid = Model::GridToy(GridToy::new(1, 5.0, 0.1).unwrap());
    assert_relative_eq!(
        grid.log_prior(&[0.7]).unwrap(),
        -0.5 * (2.0 * PI).ln() - 0.5 * 0.49,
        max_relative = 1e-10
    );
}

#[test]
fn conjugate_posterior_matches_rejection_conditioning() {
    // Independent route to the posterior: draw from the joint, keep pairs
    // whose observation lands in a narrow window, and compare the retained
    // parameter distribution with the closed form.
    let m = ConjugateGaussian::new(0.5, 1.2, 0.8).unwrap();
    let model = Model::ConjugateGaussian(m.clone());
    let y_star = 0.8;
    let window = 0.05;
    let mut r = rng(2024);
    let mut kept = Vec::new();
    for _ in 0..400_000 {
        let t = model.sample_prior(&mut r);
        let y = model.simulate(&t, &mut r).unwrap();
        if (y[0] - y_star).abs() < window {
            kept.push(t[0]);
        }
    }
    assert!(kept.len() > 5_000, "conditioning window too narrow: {}", kept.len());
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let var = kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    assert!(
        (mean - m.posterior_mean(y_star)).abs() < 0.03,
        "mean {mean} vs {}",
        m.posterior_mean(y_star)
    );
    assert!(
        (var.sqrt() - m.posterior_sd()).abs() < 0.02,
        "sd {} vs {}",
        var.sqrt(),
        m.posterior_sd()
    );
}

#[test]
fn two_moons_observations_sit_on_the_shifted_crescent() {
    let model = Model::by_name("two_moons").unwrap();
    let theta = [0.3, -0.2];
    let (s1, s2) = TwoMoons::shift(&theta);
    let mut r = rng(11);
    let mut radius_sum = 0.0;
    let trials = 2_000;
    for _ in 0..trials {
        let y = model.simulate(&theta, &mut r).unwrap();
        let p1 = y[0] - s1;
        let p2 = y[1] - s2;
        let radius = ((p1 - TWO_MOONS_OFFSET).powi(2) + p2 * p2).sqrt();
        assert!((radius - TWO_MOONS_RADIUS_MEAN).abs() < 6.0 * TWO_MOONS_RADIUS_SD);
        assert!(p1 >= TWO_MOONS_OFFSET - 1e-12, "angle outside the half circle");
        radius_sum += radius;
    }
    let se = TWO_MOONS_RADIUS_SD / (trials as f64).sqrt();
    assert!((radius_sum / trials as f64 - TWO_MOONS_RADIUS_MEAN).abs() < 4.0 * se);
}

#[test]
fn two_moons_reference_sampler_matches_the_grid_posterior() {
    // Compare the inversion sampler against midpoint quadrature of the
    // posterior density on a fine grid, aggregated to 20 x 20 cells, in
    // total variation.
    let model = Model::by_name("two_moons").unwrap();
    let theta0 = [0.3, -0.2];
    let y0 = model.simulate(&theta0, &mut rng(4242)).unwrap();

    let n = 200_000;
    let samples = two_moons_reference(&TwoMoons, &y0, n, 99).unwrap();
    let cells = 20;
    let mut emp = vec![0.0f64; cells * cells];
    for k in 0..n {
        let t1 = samples[2 * k];
        let t2 = samples[2 * k + 1];
        let i = (((t1 + 1.0) / 2.0 * cells as f64) as usize).min(cells - 1);
        let j = (((t2 + 1.0) / 2.0 * cells as f64) as usize).min(cells - 1);
        emp[i * cells + j] += 1.0 / n as f64;
    }

    let fine = 200;
    let sub = fine / cells;
    let h = 2.0 / fine as f64;
    let mut logs = vec![f64::NEG_INFINITY; fine * fine];
    let mut max_log = f64::NEG_INFINITY;
    for i in 0..fine {
        for j in 0..fine {
            let t1 = -1.0 + (i as f64 + 0.5) * h;
            let t2 = -1.0 + (j as f64 + 0.5) * h;
            let lp = two_moons_log_posterior(&[t1, t2], &y0);
            logs[i * fine + j] = lp;
            max_log = max_log.max(lp);
        }
    }
    let mut quad = vec![0.0f64; cells * cells];
    let mut total = 0.0;
    for i in 0..fine {
        for j in 0..fine {
            let w = (logs[i * fine + j] - max_log).exp();
            quad[(i / sub) * cells + (j / sub)] += w;
            total += w;
        }
    }
    for q in quad.iter_mut() {
        *q /= total;
    }

    let tv = 0.5 * emp.iter().zip(&quad).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv < 0.03, "total variation {tv}");

    let again = two_moons_reference(&TwoMoons, &y0, 100, 99).unwrap();
    assert_eq!(&again[..], &two_moons_reference(&TwoMoons, &y0, 100, 99).unwrap()[..]);
    assert!(samples.iter().all(|v| v.abs() <= 1.0));
}

#[test]
fn slcp_simulation_moments_match_the_conditional_gaussian() {
    let model = Model::by_name("slcp").unwrap();
    let theta = [0.7, -1.2, 1.0, 0.9, 0.6];
    let s1 = 1.0;
    let s2 = 0.81;
    let rho = 0.6f64.tanh();
    let mut r = rng(3);
    let trials = 20_000;
    let count = (trials * SLCP_REPEATS) as f64;
    let (mut m1, mut m2, mut c11, mut c12, mut c22) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..trials {
        let y = model.simulate(&theta, &mut r).unwrap();
        for k in 0..SLCP_REPEATS {
            let x1 = y[2 * k] - theta[0];
            let x2 = y[2 * k + 1] - theta[1];
            m1 += x1;
            m2 += x2;
            c11 += x1 * x1;
            c12 += x1 * x2;
            c22 += x2 * x2;
        }
    }
    assert!((m1 / count).abs() < 0.02);
    assert!((m2 / count).abs() < 0.02);
    assert!((c11 / count - s1 * s1).abs() < 0.03);
    assert!((c12 / count - rho * s1 * s2).abs() < 0.03);
    assert!((c22 / count - s2 * s2).abs() < 0.03);
}

#[test]
fn slcp_log_likelihood_agrees_with_a_cholesky_evaluation() {
    let theta: [f64; 5] = [0.4, -0.9, 1.3, 0.7, -0.8];
    let y = [0.2, -1.0, 1.4, -0.7, 0.9, -1.2, 0.0, -0.3];
    let s1 = theta[2] * theta[2];
    let s2 = theta[3] * theta[3];
    let rho = theta[4].tanh();
    let cov = vec![s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2];
    let l = linalg::cholesky_lower(2, &cov).unwrap();
    let log_det = 2.0 * (l[0].ln() + l[3].ln());
    let mut expect = 0.0;
    for k in 0..4 {
        let z = [y[2 * k] - theta[0], y[2 * k + 1] - theta[1]];
        let v = linalg::forward_sub(2, &l, &z);
        expect += -(2.0 * PI).ln() - 0.5 * log_det - 0.5 * (v[0] * v[0] + v[1] * v[1]);
    }
    let got = Slcp::log_likelihood(&theta, &y).unwrap();
    assert_relative_eq!(got, expect, max_relative = 1e-10);

    let degenerate = [0.4, -0.9, 0.0, 0.7, -0.8];
    assert_eq!(Slcp::log_likelihood(&degenerate, &y).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn cholesky_factors_and_solves_recover_the_matrix() {
    // SPD matrix B B' + I from a fixed 5 x 3 block.
    let b: Vec<f64> = (0..15).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
    let bt = linalg::transpose(5, 3, &b);
    let mut a = linalg::matmul(5, 3, 5, &b, &bt);
    for i in 0..5 {
        a[i * 5 + i] += 1.0;
    }
    let l = linalg::cholesky_lower(5, &a).unwrap();
    let lt = linalg::transpose(5, 5, &l);
    let rebuilt = linalg::matmul(5, 5, 5, &l, &lt);
    for (x, y) in a.iter().zip(&rebuilt) {
        assert_relative_eq!(x, y, max_relative = 1e-10, epsilon = 1e-12);
    }
    let rhs = vec![1.0, -2.0, 0.5, 3.0, -1.5];
    let x = linalg::chol_solve(5, &l, &rhs);
    let ax: Vec<f64> = (0..5)
        .map(|i| (0..5).map(|j| a[i * 5 + j] * x[j]).sum())
        .collect();
    for (got, want) in ax.iter().zip(&rhs) {
        assert_relative_eq!(got, want, max_relative = 1e-9, epsilon = 1e-11);
    }

    let not_pd = vec![1.0, 2.0, 2.0, 1.0];
    assert!(matches!(linalg::cholesky_lower(2, &not_pd), Err(SimError::NotPositiveDefinite)));
}

#[test]
fn systematic_resampling_matches_weight_proportions() {
    let mut r = rng(5);
    let picks = systematic_resample(&[0.5, 0.5, 0.0, 0.0], 100, &mut r).unwrap();
    let count0 = picks.iter().filter(|&&i| i == 0).count();
    let count1 = picks.iter().filter(|&&i| i == 1).count();
    assert_eq!(count0, 50);
    assert_eq!(count1, 50);
    assert_eq!(count0 + count1, 100);

    let picks = systematic_resample(&[0.2, 0.3, 0.5], 1000, &mut r).unwrap();
    let mut counts = [0usize; 3];
    for i in picks {
        counts[i] += 1;
    }
    assert!((counts[0] as i64 - 200).abs() <= 1);
    assert!((counts[1] as i64 - 300).abs() <= 1);
    assert!((counts[2] as i64 - 500).abs() <= 1);

    assert!(systematic_resample(&[0.0, 0.0], 10, &mut r).is_err());
    assert!(systematic_resample(&[0.5, -0.1], 10, &mut r).is_err());
}

#[test]
fn effective_sample_size_boundary_cases() {
    assert_relative_eq!(effective_sample_size(&[1.0; 8]), 8.0);
    assert_relative_eq!(effective_sample_size(&[5.0, 0.0, 0.0]), 1.0);
    assert_eq!(effective_sample_size(&[0.0, 0.0]), 0.0);
}

#[test]
fn importance_resampling_recovers_the_conjugate_posterior() {
    // The same prior-proposal scheme the SLCP reference uses, checked on a
    // model where the posterior is known exactly.
    let m = ConjugateGaussian::standard();
    let y0 = 1.2;
    let mut r = rng(42);
    let proposals = 100_000;
    let mut thetas = Vec::with_capacity(proposals);
    let mut weights = Vec::with_capacity(proposals);
    for _ in 0..proposals {
        let t: f64 = rand::Rng::sample::<f64, _>(&mut r, rand_distr::StandardNormal);
        thetas.push(t);
        weights.push((-0.5 * (y0 - t) * (y0 - t)).exp());
    }
    assert!(effective_sample_size(&weights) > 10_000.0);
    let picks = systematic_resample(&weights, 5_000, &mut r).unwrap();
    let resampled: Vec<f64> = picks.iter().map(|&i| thetas[i]).collect();
    let n = resampled.len() as f64;
    let mean = resampled.iter().sum::<f64>() / n;
    let var = resampled.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    assert!((mean - m.posterior_mean(y0)).abs() < 0.03, "mean {mean}");
    assert!((var.sqrt() - m.posterior_sd()).abs() < 0.03, "sd {}", var.sqrt());
}

#[test]
fn slcp_reference_is_deterministic_and_in_support() {
    let model = Model::by_name("slcp").unwrap();
    let theta0 = [0.5, -0.5, 1.2, 0.8, 0.3];
    let y0 = model.simulate(&theta0, &mut rng(31)).unwrap();
    let a = slcp_reference(&Slcp, &y0, 400, 17, 50_000).unwrap();
    let b = slcp_reference(&Slcp, &y0, 400, 17, 50_000).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 400 * 5);
    assert!(a.iter().all(|v| v.abs() <= SLCP_BOUND));
    // The first two parameters are the conditional mean; the posterior
    // should place them near the empirical mean of the four points.
    let obs_mean1 = (y0[0] + y0[2] + y0[4] + y0[6]) / 4.0;
    let post_mean1 = a.chunks(5).map(|c| c[0]).sum::<f64>() / 400.0;
    assert!((post_mean1 - obs_mean1).abs() < 0.8, "{post_mean1} vs {obs_mean1}");
}

#[test]
fn grid_cross_covariance_matches_the_linear_model() {
    let grid = GridToy::new(8, 2.0, 0.1).unwrap();
    let model = Model::GridToy(grid.clone());
    let s = grid.prior_covariance();
    let at = linalg::transpose(8, 8, &grid.smoothing_matrix());
    let expect = linalg::matmul(8, 8, 8, &s, &at);
    let mut r = rng(77);
    let trials = 20_000;
    let mut acc = vec![0.0f64; 64];
    for _ in 0..trials {
        let t = model.sample_prior(&mut r);
        let y = model.simulate(&t, &mut r).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                acc[i * 8 + j] += t[i] * y[j];
            }
        }
    }
    for (i, (got, want)) in acc.iter().zip(&expect).enumerate() {
        assert!(
            (got / trials as f64 - want).abs() < 0.05,
            "entry {i}: {} vs {want}",
            got / trials as f64
        );
    }
}

#[test]
fn grid_posterior_matches_a_hand_solved_two_cell_case() {
    let grid = GridToy::new(2, 1.0, 0.1).unwrap();
    let y = [0.3, 0.5];
    let got = grid_posterior(&grid, &y).unwrap();

    // By hand with 2 x 2 algebra: S = [[1, c], [c, 1]], both smoothing rows
    // average the two cells, so A S A' has every entry (1 + c) / 2.
    let c = (-0.5f64).exp();
    let e = (1.0 + c) / 2.0;
    let k = [e + 0.01, e, e, e + 0.01];
    let det = k[0] * k[3] - k[1] * k[2];
    let kinv = [k[3] / det, -k[1] / det, -k[2] / det, k[0] / det];
    // S A' also has every entry (1 + c) / 2.
    let sa = [e, e, e, e];
    let kinv_y = [kinv[0] * y[0] + kinv[1] * y[1], kinv[2] * y[0] + kinv[3] * y[1]];
    let mean = [sa[0] * kinv_y[0] + sa[1] * kinv_y[1], sa[2] * kinv_y[0] + sa[3] * kinv_y[1]];
    let mut cov = [1.0, c, c, 1.0];
    for row in 0..2 {
        for col in 0..2 {
            let mut corr = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    corr += sa[row * 2 + a] * kinv[a * 2 + b] * sa[b * 2 + col];
                }
            }
            cov[row * 2 + col] -= corr;
        }
    }
    for i in 0..2 {
        assert_relative_eq!(got.mean[i], mean[i], max_relative = 1e-9, epsilon = 1e-12);
    }
    for i in 0..4 {
        assert_relative_eq!(got.cov[i], cov[i], max_relative = 1e-9, epsilon = 1e-12);
    }
}

#[test]
fn gaussian_posterior_sampling_moments_match() {
    let post = GaussianPosterior { mean: vec![0.4, -0.6], cov: vec![0.5, 0.2, 0.2, 0.3] };
    let n = 100_000;
    let draws = post.sample(n, 8).unwrap();
    let mut mean = [0.0f64; 2];
    for row in draws.chunks(2) {
        mean[0] += row[0];
        mean[1] += row[1];
    }
    mean[0] /= n as f64;
    mean[1] /= n as f64;
    let mut cov = [0.0f64; 4];
    for row in draws.chunks(2) {
        let a = row[0] - mean[0];
        let b = row[1] - mean[1];
        cov[0] += a * a;
        cov[1] += a * b;
        cov[2] += a * b;
        cov[3] += b * b;
    }
    assert!((mean[0] - 0.4).abs() < 0.01);
    assert!((mean[1] + 0.6).abs() < 0.01);
    for (got, want) in cov.iter().map(|v| v / n as f64).zip([0.5, 0.2, 0.2, 0.3]) {
        assert!((got - want).abs() < 0.01, "{got} vs {want}");
    }
}

#[test]
fn grid_reference_dispatch_recovers_the_analytic_mean() {
    let model = Model::by_name("grid_toy").unwrap();
    let grid = match &model {
        Model::GridToy(g) => g.clone(),
        _ => unreachable!(),
    };
    let theta0 = vec![0.2; 40];
    let y0 = model.simulate(&theta0, &mut rng(55)).unwrap();
    let analytic = grid_posterior(&grid, &y0).unwrap();
    let draws = model.reference_posterior(&y0, 2_000, 9).unwrap();
    for i in [0usize, 13, 27, 39] {
        let emp: f64 = draws.chunks(40).map(|r| r[i]).sum::<f64>() / 2_000.0;
        assert!(
            (emp - analytic.mean[i]).abs() < 0.1,
            "component {i}: {emp} vs {}",
            analytic.mean[i]
        );
    }
}

#[test]
fn conjugate_reference_matches_posterior_quantiles() {
    let m = ConjugateGaussian::standard();
    let draws = conjugate_reference(&m, &[1.0], 50_000, 3).unwrap();
    let mut sorted = draws.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[25_000];
    assert!((median - 0.5).abs() < 0.01);
    let mean = draws.iter().sum::<f64>() / 50_000.0;
    assert!((mean - 0.5).abs() < 0.015);
}

#[test]
fn dataset_generation_is_seeded_and_prefix_stable() {
    let model = Model::by_name("two_moons").unwrap();
    let a = Dataset::generate(&model, 10, 31).unwrap();
    let b = Dataset::generate(&model, 10, 31).unwrap();
    assert_eq!(a, b);
    let c = Dataset::generate(&model, 10, 32).unwrap();
    assert_ne!(a.theta, c.theta);
    // Row i depends only on (seed, i): shorter datasets are prefixes.
    let head = Dataset::generate(&model, 4, 31).unwrap();
    assert_eq!(&a.theta[..4 * 2], &head.theta[..]);
    assert_eq!(&a.y[..4 * 2], &head.y[..]);
    // All rows respect the prior support.
    assert!(a.theta.iter().all(|v| v.abs() < 1.0));
    let pairs = a.pairs();
    assert_eq!(pairs.len(), 10);
    assert_eq!(pairs[3].0, a.theta_row(3));
    assert_eq!(pairs[3].1, a.y_row(3));
}

#[test]
fn dataset_binary_roundtrip_is_bitwise() {
    let model = Model::by_name("slcp").unwrap();
    let ds = Dataset::generate(&model, 25, 5).unwrap();
    let mut buf = Vec::new();
    ds.write_to(&mut buf).unwrap();
    let back = Dataset::read_from(&mut buf.as_slice()).unwrap();
    assert_eq!(ds, back);
}

#[test]
fn dataset_reader_rejects_tampered_files() {
    let model = Model::by_name("conjugate_gaussian").unwrap();
    let ds = Dataset::generate(&model, 8, 1).unwrap();
    let mut buf = Vec::new();
    ds.write_to(&mut buf).unwrap();

    let mut bad_magic = buf.clone();
    bad_magic[0] = b'X';
    assert!(matches!(
        Dataset::read_from(&mut bad_magic.as_slice()),
        Err(DatasetError::BadMagic)
    ));

    let mut bad_version = buf.clone();
    bad_version[8] = 99;
    assert!(matches!(
        Dataset::read_from(&mut bad_version.as_slice()),
        Err(DatasetError::UnsupportedVersion(99))
    ));

    let truncated = &buf[..buf.len() - 3];
    assert!(matches!(
        Dataset::read_from(&mut &truncated[..]),
        Err(DatasetError::Truncated)
    ));

    let mut trailing = buf.clone();
    trailing.push(0);
    assert!(matches!(
        Dataset::read_from(&mut trailing.as_slice()),
        Err(DatasetError::Corrupt(_))
    ));
}

#[test]
fn dataset_csv_layout() {
    let model = Model::by_name("two_moons").unwrap();
    let ds = Dataset::generate(&model, 3, 2).unwrap();
    let csv = ds.csv_string();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "theta_0,theta_1,y_0,y_1");
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], ds.theta[0]);
    assert_eq!(first[3], ds.y[1]);
}
