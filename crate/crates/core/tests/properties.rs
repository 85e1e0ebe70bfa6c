use birkhoff_copula::basis::{copula_cdf, copula_pdf};
use birkhoff_copula::data::{bin_counts, pseudo_observations, Margins};
use birkhoff_copula::estimators::mle::{mle_matrix, objective};
use birkhoff_copula::estimators::{bayes_estimate, deheuvels_estimate, mle_estimate};
use birkhoff_copula::numerics::{binomial_mad, binomial_mad_direct};
use birkhoff_copula::polytope::{
    birkhoff_decompose, from_alpha, radius, random_interior, to_alpha,
};
use birkhoff_copula::rng::stream_rng;
use birkhoff_copula::sampler::{log_likelihood, log_likelihood_counts, run_chain_with};
use birkhoff_copula::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn interior(m: usize, seed: u64) -> DoublyStochasticMatrix {
    random_interior(m, &mut stream_rng(seed, 0)).unwrap()
}

/// A convex combination of `k` random permutations: sits on a low face.
fn sparse(m: usize, k: usize, seed: u64) -> DoublyStochasticMatrix {
    let mut rng = stream_rng(seed, 1);
    let mut acc = DoublyStochasticMatrix::center(m).unwrap();
    for t in 0..k {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let q = DoublyStochasticMatrix::permutation(&perm).unwrap();
        acc = if t == 0 { q } else { acc.mix(&q, 1.0 - 1.0 / (t + 1) as f64).unwrap() };
    }
    acc
}

fn basis(m: usize, bernstein: bool) -> PartitionBasis {
    if bernstein {
        PartitionBasis::bernstein(m).unwrap()
    } else {
        PartitionBasis::indicator(m).unwrap()
    }
}

fn sample(n: usize, rho: f64, seed: u64) -> RawSample {
    let pairs = ReferenceCopula::gaussian(rho).unwrap().sample(n, &mut stream_rng(seed, 2));
    RawSample::from_pairs(&pairs).unwrap()
}

proptest! {
    #[test]
    fn alpha_coordinates_are_a_bijection(m in 2usize..8, seed: u64) {
        let p = interior(m, seed);
        let a = to_alpha(&p);
        let back = from_alpha(&a).unwrap();
        prop_assert!((back.as_matrix() - p.as_matrix()).amax() <= 1e-12);
        let again = to_alpha(&back);
        prop_assert!((again.as_matrix() - a.as_matrix()).amax() <= 1e-12);
        prop_assert!(back.sum_residual() <= 1e-12);
    }

    #[test]
    fn mixtures_stay_doubly_stochastic(m in 2usize..8, seed: u64, lambda in 0.0f64..=1.0) {
        let p = interior(m, seed).mix(&sparse(m, 3, seed), lambda).unwrap();
        prop_assert!(p.sum_residual() <= 1e-12);
        prop_assert!(p.min_entry() >= 0.0);
    }

    #[test]
    fn birkhoff_decomposition_is_tight(
        m in prop::sample::select(vec![2usize, 3, 4, 6]),
        k in 1usize..12,
        seed: u64,
        dense: bool,
    ) {
        let p = if dense { interior(m, seed) } else { sparse(m, k, seed) };
        let dec = birkhoff_decompose(&p).unwrap();
        prop_assert!((dec.reconstruct() - p.as_matrix()).amax() <= 1e-10);
        prop_assert!(dec.len() <= (m - 1) * (m - 1) + 1);
        let total: f64 = dec.terms.iter().map(|t| t.weight).sum();
        prop_assert!((total - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn radius_is_at_most_the_vertex_distance(m in 2usize..7, k in 1usize..5, seed: u64) {
        let bound = ((m - 1) as f64).sqrt();
        prop_assert!(radius(&interior(m, seed)) <= bound);
        prop_assert!(radius(&sparse(m, k, seed)) <= bound + 1e-12);
    }

    #[test]
    fn partition_of_unity(m in 2usize..=20, u in 0.0f64..=1.0, bernstein: bool) {
        let total: f64 = basis(m, bernstein).phi_all(u).iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn model_cdf_within_frechet_bounds(
        m in 2usize..9,
        seed: u64,
        bernstein: bool,
        u in 0.0f64..=1.0,
        v in 0.0f64..=1.0,
    ) {
        let p = sparse(m, 2, seed).mix(&interior(m, seed), 0.5).unwrap();
        let c = copula_cdf(&p, &basis(m, bernstein), u, v);
        prop_assert!(c >= (u + v - 1.0).max(0.0) - 1e-10);
        prop_assert!(c <= u.min(v) + 1e-10);
        prop_assert!(copula_pdf(&p, &basis(m, bernstein), u, v) >= 0.0);
    }

    #[test]
    fn model_cdf_is_linear_in_p(
        m in 2usize..9,
        seed: u64,
        lambda in 0.0f64..=1.0,
        bernstein: bool,
        u in 0.0f64..=1.0,
        v in 0.0f64..=1.0,
    ) {
        let (p1, p2) = (interior(m, seed), sparse(m, 3, seed));
        let b = basis(m, bernstein);
        let mixed = copula_cdf(&p1.mix(&p2, lambda).unwrap(), &b, u, v);
        let split = lambda * copula_cdf(&p1, &b, u, v) + (1.0 - lambda) * copula_cdf(&p2, &b, u, v);
        prop_assert!((mixed - split).abs() <= 1e-12);
    }

    #[test]
    fn cross_copula_reflection(rho in -1.0f64..=1.0, u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        let c = ReferenceCopula::cross(rho).unwrap();
        prop_assert!((c.cdf(u, v) - (u - c.cdf(u, 1.0 - v))).abs() <= 1e-9);
    }

    #[test]
    fn binomial_mad_closed_form(n in 1u64..=50, p in 0.0f64..=1.0) {
        prop_assert!((binomial_mad(n, p) - binomial_mad_direct(n, p)).abs() <= 1e-12);
    }

    #[test]
    fn indicator_likelihood_is_the_count_likelihood(n in 1usize..60, m in 2usize..7, seed: u64) {
        let ps = pseudo_observations(&sample(n, 0.3, seed), Margins::Unknown).unwrap();
        let counts = bin_counts(&ps, m).unwrap();
        let b = PartitionBasis::indicator(m).unwrap();
        let (p1, p2) = (interior(m, seed), interior(m, seed ^ 1));
        let d_points = log_likelihood(&p1, &b, &ps) - log_likelihood(&p2, &b, &ps);
        let d_counts = log_likelihood_counts(&p1, &counts) - log_likelihood_counts(&p2, &counts);
        prop_assert!((d_points - d_counts).abs() <= 1e-9 * (1.0 + d_counts.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chains_never_leave_the_polytope(
        m in prop::sample::select(vec![2usize, 4, 6]),
        jeffreys: bool,
        seed: u64,
    ) {
        let kind = if jeffreys { PriorKind::Jeffreys } else { PriorKind::Uniform };
        let ps = pseudo_observations(&sample(25, 0.6, seed), Margins::Unknown).unwrap();
        let mut cfg = ChainConfig::new(PriorSpec::new(kind, m).unwrap(), ChainMode::Posterior);
        cfg.length = 500;
        cfg.burn_in = 50;
        cfg.seed = seed;
        let mut worst_sum = 0.0f64;
        let mut worst_entry = 0.0f64;
        let mut bad_log = false;
        run_chain_with(Some(&ps), &cfg, |rec| {
            for k in 0..m {
                worst_sum = worst_sum
                    .max((rec.matrix.row(k).sum() - 1.0).abs())
                    .max((rec.matrix.column(k).sum() - 1.0).abs());
            }
            worst_entry = worst_entry.min(rec.matrix.min());
            bad_log |= rec.log_posterior.is_nan() || rec.accept_rate.is_nan();
        })
        .unwrap();
        prop_assert!(worst_sum <= 1e-10);
        prop_assert!(worst_entry >= -1e-12);
        prop_assert!(!bad_log);
    }

    #[test]
    fn mle_dominates_the_posterior_mean(n in 5usize..80, m in 2usize..7, rho in -0.9f64..0.9, seed: u64) {
        let ps = pseudo_observations(&sample(n, rho, seed), Margins::Unknown).unwrap();
        let counts = bin_counts(&ps, m).unwrap();
        let mle = mle_matrix(&counts).unwrap();
        let mut cfg = ChainConfig::new(PriorSpec::jeffreys(m).unwrap(), ChainMode::Posterior);
        cfg.length = 400;
        cfg.burn_in = 50;
        cfg.seed = seed;
        let bayes = bayes_estimate(&ps, &cfg).unwrap();
        let a = objective(&counts, mle.as_matrix());
        let b = objective(&counts, bayes.matrix().unwrap().as_matrix());
        prop_assert!(a >= b - 1e-9 * b.abs(), "{} < {}", a, b);
    }

    #[test]
    fn rank_estimators_are_bitwise_invariant(n in 2usize..50, rho in -0.9f64..0.9, seed: u64) {
        let raw = sample(n, rho, seed);
        let moved = raw.map(|x| x.exp(), |y| y * y * y + y).unwrap();
        let (ps, qs) = (
            pseudo_observations(&raw, Margins::Unknown).unwrap(),
            pseudo_observations(&moved, Margins::Unknown).unwrap(),
        );
        prop_assert_eq!(&ps, &qs);
        let mut cfg = ChainConfig::new(PriorSpec::uniform(3).unwrap(), ChainMode::Posterior);
        cfg.length = 200;
        cfg.burn_in = 20;
        cfg.seed = seed;
        prop_assert_eq!(bayes_estimate(&ps, &cfg).unwrap(), bayes_estimate(&qs, &cfg).unwrap());
        prop_assert_eq!(mle_estimate(&ps, 4).unwrap(), mle_estimate(&qs, 4).unwrap());
        prop_assert_eq!(deheuvels_estimate(&raw).unwrap(), deheuvels_estimate(&moved).unwrap());
    }
}
