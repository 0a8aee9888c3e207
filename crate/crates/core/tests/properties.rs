use cbo::baseline::{grid_search_simplex, projected_gradient};
use cbo::cli::constant_correlation_cov;
use cbo::diagnostics::{decay_experiment, error_trace, laplace_sweep};
use cbo::market::{
    estimate_stats, log_returns, parse_prices, sample_frontier, synthetic_market, uniform_simplex_point, ReturnsSeries,
};
use cbo::objective::{neg_sharpe, rastrigin, sharpe_components, sphere, DEFAULT_VAR_FLOOR};
use cbo::solver::{
    cbo_step, consensus_point, init_ensemble, noise_rng, predictor_step, run, InitSpec, RunOptions, StepNoise,
};
use cbo::{CboParams, Ensemble, MarketStats, NoiseMode, Objective, Projector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn market(seed: u64, mu: &[f64], vol: &[f64], corr: f64, periods: usize) -> MarketStats {
    let prices = synthetic_market(seed, mu.len(), periods, mu, &constant_correlation_cov(vol, corr)).unwrap();
    estimate_stats(&log_returns(&prices), 0.01).unwrap()
}

fn d3_market(seed: u64) -> MarketStats {
    market(seed, &[0.5, 0.3, 0.2], &[0.1, 0.06, 0.04], 0.2, 500)
}

#[test]
fn objectives_are_finite_on_random_simplex_points() {
    let stats = market(5, &[0.01, 0.02, 0.0, -0.01, 0.03], &[0.1, 0.2, 0.05, 0.15, 0.3], 0.4, 300);
    let objectives: Vec<Box<dyn Objective>> = vec![
        Box::new(sphere(vec![0.2; 5]).unwrap()),
        Box::new(rastrigin(vec![0.1, 0.5, 0.2, 0.1, 0.1], 0.3).unwrap()),
        Box::new(neg_sharpe(stats, DEFAULT_VAR_FLOOR).unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100_000 {
        let w = uniform_simplex_point(&mut rng, 5);
        for obj in &objectives {
            assert!(obj.eval(&w).unwrap().is_finite());
        }
    }
}

#[test]
fn frontier_samples_stay_below_the_oracle() {
    let stats = d3_market(1);
    let obj = neg_sharpe(stats.clone(), DEFAULT_VAR_FLOOR).unwrap();
    let proj = Projector::simplex(3).unwrap();
    let grid = grid_search_simplex(&obj, 3, 0.005).unwrap();
    let polished = projected_gradient(&obj, &proj, &grid.weights, 1e-4, 20_000).unwrap();
    let oracle = -polished.value.min(grid.value);
    let cloud = sample_frontier(&stats, 20_000, 9).unwrap();
    assert_eq!(cloud.samples.len(), 20_000);
    for s in &cloud.samples {
        assert!(proj.contains(&s.weights, 1e-10));
        assert!(s.sharpe <= oracle + 1e-9, "{} > {}", s.sharpe, oracle);
    }
}

#[test]
fn frontier_weights_are_uniform_on_the_simplex() {
    let stats = market(3, &[0.01, 0.02, 0.03, 0.04], &[0.1, 0.1, 0.1, 0.1], 0.0, 100);
    let m = 100_000;
    let cloud = sample_frontier(&stats, m, 4).unwrap();
    let mut mean = [0.0; 4];
    for s in &cloud.samples {
        for (a, w) in mean.iter_mut().zip(&s.weights) {
            *a += w / m as f64;
        }
    }
    let tol = 4.0 / ((m * 4) as f64).sqrt();
    for a in mean {
        assert!((a - 0.25).abs() <= tol, "{a}");
    }
}

#[test]
fn concentrated_cbo_dominates_the_frontier_cloud() {
    // dominance to 1e-6 needs a sharply concentrated consensus
    let stats = d3_market(2);
    let best_sampled = sample_frontier(&stats, 100_000, 0).unwrap().max_sharpe().unwrap().sharpe;
    let obj = neg_sharpe(stats.clone(), DEFAULT_VAR_FLOOR).unwrap();
    let proj = Projector::simplex(3).unwrap();
    for seed in 0..3 {
        let params = CboParams { lambda: 1.0, sigma: 0.5, h: 0.1, beta: 1e6, n_particles: 200, seed, ..Default::default() };
        let out = run(&obj, &proj, &params, &RunOptions::default()).unwrap();
        let s = sharpe_components(&stats, &out.result).unwrap().sharpe;
        assert!(s >= best_sampled - 1e-6, "seed {seed}: {s} < {best_sampled}");
    }
}

#[test]
fn synthetic_market_recovers_its_mean() {
    let mu = [0.001, -0.002, 0.0005];
    let vol = [0.02, 0.01, 0.03];
    let t = 10_000;
    let stats = market(8, &mu, &vol, 0.5, t + 1);
    for i in 0..3 {
        let tol = 4.0 * (vol[i] * vol[i] / t as f64).sqrt();
        assert!((stats.mu[i] - mu[i]).abs() <= tol, "asset {i}: {} vs {}", stats.mu[i], mu[i]);
    }
}

#[test]
fn solver_traces_do_not_depend_on_worker_count() {
    // N·d is large enough to take the parallel code paths
    let dim = 100;
    let proj = Projector::simplex(dim).unwrap();
    let obj = sphere((0..dim).map(|l| if l < 10 { 0.1 } else { 0.0 }).collect()).unwrap();
    let params = CboParams { n_particles: 200, max_iters: 15, seed: 3, ..Default::default() };
    let go = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run(&obj, &proj, &params, &RunOptions::default()).unwrap())
    };
    let (a, b) = (go(1), go(4));
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.result, b.result);
    let decay = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| decay_experiment(&obj, &proj, &params, &InitSpec::default(), 6, 5, 1).unwrap())
    };
    assert_eq!(decay(1), decay(3));
}

#[test]
fn running_sums_are_monotone_and_bounded() {
    let params = CboParams { lambda: 1.0, sigma: 0.5, h: 0.1, n_particles: 50, ..Default::default() };
    let obj = sphere(vec![0.1, 0.2, 0.3, 0.25, 0.15]).unwrap();
    let proj = Projector::simplex(5).unwrap();
    let rep = decay_experiment(&obj, &proj, &params, &InitSpec::default(), 200, 100, 12).unwrap();
    assert!(rep.running_sum_bound.is_finite());
    for w in rep.rows.windows(2) {
        assert!(w[1].mean_a >= w[0].mean_a && w[1].mean_b >= w[0].mean_b);
    }
    for r in &rep.rows {
        assert!(r.mean_a <= 1.5 * rep.running_sum_bound, "A at n={}", r.n);
        assert!(r.mean_b <= 1.5 * rep.running_sum_bound, "B at n={}", r.n);
        assert!(r.mean_consensus_sq <= r.consensus_bound * rep.slack, "consensus distance at n={}", r.n);
    }
}

#[test]
fn common_noise_is_standard_normal() {
    let mut rng = noise_rng(21);
    let mut values = Vec::new();
    for _ in 0..200 {
        values.extend_from_slice(StepNoise::draw(NoiseMode::CommonPerStep, 10, 500, &mut rng).values());
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 5.0 / n.sqrt());
    assert!((var - 1.0).abs() < 5.0 * (2.0 / n).sqrt());
    let independent = StepNoise::draw(NoiseMode::IndependentPerParticle, 10, 500, &mut rng);
    assert_eq!(independent.values().len(), 5000);
}

#[test]
fn error_trace_is_invariant_under_particle_permutation() {
    let stats = d3_market(1);
    let obj = neg_sharpe(stats, DEFAULT_VAR_FLOOR).unwrap();
    let proj = Projector::simplex(3).unwrap();
    let reference = grid_search_simplex(&obj, 3, 0.01).unwrap();
    let params = CboParams { lambda: 1.0, sigma: 0.5, h: 0.1, n_particles: 30, max_iters: 0, ..Default::default() };
    let e = init_ensemble(3, &params, &proj.anchor(), 1.0, &proj, &obj, 5).unwrap();
    let rows: Vec<Vec<f64>> = e.rows().map(<[f64]>::to_vec).collect();
    let mut shuffled = rows.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let errors = |rows: &[Vec<f64>]| {
        let ens = Ensemble::from_positions(3, rows.concat(), &obj).unwrap();
        let mut out = cbo::solver::run_from(ens, &obj, &proj, &params, &RunOptions::default(), &mut noise_rng(0)).unwrap();
        error_trace(&mut out.trace, &reference).unwrap()
    };
    let (a, b) = (errors(&rows), errors(&shuffled));
    assert!((a[0] - b[0]).abs() < 1e-14);
}

fn permuted_returns(r: &ReturnsSeries, perm: &[usize]) -> ReturnsSeries {
    ReturnsSeries {
        returns: r.returns.iter().map(|row| perm.iter().map(|&p| row[p]).collect()).collect(),
        asset_names: perm.iter().map(|&p| r.asset_names[p].clone()).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimate_stats_is_permutation_equivariant(
        rows in prop::collection::vec(prop::collection::vec(-0.1f64..0.1, 4), 3..30),
        seed in any::<u64>(),
    ) {
        let r = ReturnsSeries { returns: rows, asset_names: (0..4).map(|i| format!("A{i}")).collect() };
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let base = estimate_stats(&r, 0.0).unwrap();
        let moved = estimate_stats(&permuted_returns(&r, &perm), 0.0).unwrap();
        for i in 0..4 {
            prop_assert_eq!(moved.mu[i], base.mu[perm[i]]);
            for j in 0..4 {
                prop_assert_eq!(moved.sigma[i][j], base.sigma[perm[i]][perm[j]]);
            }
        }
    }

    #[test]
    fn ingestion_round_trips(prices in prop::collection::vec(prop::collection::vec(1e-3f64..1e6, 3), 2..20)) {
        let mut text = String::from("date,A,B,C\n");
        for (t, row) in prices.iter().enumerate() {
            text.push_str(&format!("2021-03-{:02},{},{},{}\n", t + 1, row[0], row[1], row[2]));
        }
        let parsed = parse_prices(&text).unwrap();
        let again = parse_prices(&parsed.to_csv_string()).unwrap();
        prop_assert_eq!(&parsed, &again);
        prop_assert_eq!(&parsed.prices, &prices);
    }

    #[test]
    fn pre_projection_pairwise_identity(
        seed in any::<u64>(),
        lambda in 0.1f64..2.0,
        sigma in 0.0f64..2.0,
        h in 0.001f64..0.5,
    ) {
        let dim = 4;
        let params = CboParams { lambda, sigma, h, n_particles: 6, ..Default::default() };
        let free = Projector::unbounded(dim).unwrap();
        let obj = sphere(vec![0.3; dim]).unwrap();
        let e = init_ensemble(dim, &params, &[0.0; 4], 1.0, &free, &obj, seed).unwrap();
        let consensus = consensus_point(&e, params.beta).unwrap();
        let noise = StepNoise::draw(NoiseMode::CommonPerStep, 6, dim, &mut noise_rng(seed));
        let raw = predictor_step(&e, &consensus, &params, &noise).unwrap();
        let eta = noise.values();
        for i in 0..6 {
            for j in 0..6 {
                for l in 0..dim {
                    let lhs = raw[i * dim + l] - raw[j * dim + l];
                    let factor = 1.0 - lambda * h + sigma * h.sqrt() * eta[l];
                    let rhs = factor * (e.row(i)[l] - e.row(j)[l]);
                    prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
                }
            }
        }
    }

    #[test]
    fn iterates_stay_feasible_and_consensus_is_in_the_hull(
        seed in any::<u64>(),
        dim in 2usize..8,
        lambda in 0.1f64..2.0,
        sigma in 0.0f64..2.0,
        independent in any::<bool>(),
    ) {
        let proj = Projector::simplex(dim).unwrap();
        let obj = rastrigin(vec![1.0 / dim as f64; dim], 0.2).unwrap();
        let params = CboParams {
            lambda,
            sigma,
            h: 0.05,
            n_particles: 12,
            noise_mode: if independent { NoiseMode::IndependentPerParticle } else { NoiseMode::CommonPerStep },
            ..Default::default()
        };
        let mut e = init_ensemble(dim, &params, &proj.anchor(), 1.0, &proj, &obj, seed).unwrap();
        let mut rng = noise_rng(seed);
        for _ in 0..30 {
            let (next, rec) = cbo_step(&e, &params, &proj, &obj, &mut rng).unwrap();
            prop_assert!(proj.contains(&rec.consensus, 1e-10));
            for row in next.rows() {
                prop_assert!(proj.contains(row, 1e-10));
            }
            e = next;
        }
        for row in laplace_sweep(&e, &[0.0, 1.0, 1e3]).unwrap() {
            prop_assert!(proj.contains(&row.consensus, 1e-10));
        }
    }
}
