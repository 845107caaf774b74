use fkchain_core::feynman_kac::{fk_semigroup_apply, gauge_function, schrodinger_generator};
use fkchain_core::girsanov::{form_identity_residual, reduction_identity_residual};
use fkchain_core::pathsim::{merge_blocks, path_rng, sample_path, BlockStats};
use fkchain_core::spectral::{independence_report, Exponent};
use fkchain_core::{JumpPerturbation, ModelSpec, SmoothMeasure, SymmetricChain};
use proptest::prelude::*;

/// A connected chain: path edges plus optional chords, optional killing.
fn chain() -> impl Strategy<Value = SymmetricChain> {
    (2usize..9)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.5f64..2.0, n),
                prop::collection::vec(0.2f64..2.0, n - 1),
                prop::collection::vec(prop::option::weighted(0.3, 0.2f64..2.0), n * (n - 1) / 2),
                prop::collection::vec(prop::option::weighted(0.4, 0.05f64..1.0), n),
            )
        })
        .prop_map(|(m, path, chords, kill)| {
            let n = m.len();
            let mut q = Vec::new();
            let mut edge = |x: usize, y: usize, c: f64| {
                q.push((x, y, c / m[x]));
                q.push((y, x, c / m[y]));
            };
            for (x, &c) in path.iter().enumerate() {
                edge(x, x + 1, c);
            }
            let mut i = 0;
            for x in 0..n {
                for y in x + 1..n {
                    if let (Some(c), true) = (chords[i], y > x + 1) {
                        edge(x, y, c);
                    }
                    i += 1;
                }
            }
            ModelSpec::Explicit {
                m: m.clone(),
                q,
                k: kill.iter().map(|k| k.unwrap_or(0.0)).collect(),
                repair: false,
            }
            .build()
            .unwrap()
        })
}

/// A chain with a signed measure and a symmetric jump weight on its edges.
fn perturbed() -> impl Strategy<Value = (SymmetricChain, SmoothMeasure, JumpPerturbation)> {
    chain().prop_flat_map(|c| {
        let n = c.n();
        let edges = c.rates().triplets().len();
        (
            Just(c),
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(-1.0f64..1.0, edges),
        )
            .prop_map(|(c, mu, fv)| {
                let mut t = Vec::new();
                for ((x, y, _), v) in c.rates().triplets().into_iter().zip(fv) {
                    if x < y {
                        t.push((x, y, v));
                        t.push((y, x, v));
                    }
                }
                let f = JumpPerturbation::from_triplets(c.n(), t).unwrap();
                (c, SmoothMeasure::new(mu).unwrap(), f)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chains_satisfy_detailed_balance(c in chain()) {
        let m = c.mass();
        for (x, y, q) in c.rates().triplets() {
            let back = c.rates().get(y, x);
            prop_assert!((m[x] * q - m[y] * back).abs() <= 1e-12 * (m[x] * q));
        }
        let gen = c.generator();
        let rows = gen.operator().apply(&vec![1.0; c.n()]);
        for (r, k) in rows.iter().zip(c.killing()) {
            prop_assert!((r + k).abs() <= 1e-12);
        }
    }

    #[test]
    fn sampled_paths_are_valid(c in chain(), seed: u64, horizon in 0.01f64..10.0, x0 in 0usize..8) {
        let x0 = x0 % c.n();
        let traj = sample_path(&c, x0, horizon, &mut path_rng(seed, 0)).unwrap();
        prop_assert!(traj.is_valid());
        prop_assert_eq!(traj.start(), x0);
        prop_assert_eq!(traj.state_at(0.0), Some(x0));
        for w in traj.states.windows(2) {
            prop_assert!(c.rates().get(w[0], w[1]) > 0.0);
        }
        if traj.is_killed() {
            prop_assert!(c.killing()[*traj.states.last().unwrap()] > 0.0);
        }
    }

    #[test]
    fn merging_blocks_matches_one_pass(
        xs in prop::collection::vec(-10.0f64..10.0, 2..200),
        cuts in prop::collection::vec(0usize..200, 0..6),
    ) {
        let mut whole = BlockStats::new(1);
        for x in &xs {
            whole.push(&[*x]);
        }
        let mut cuts: Vec<usize> = cuts.into_iter().map(|c| c % xs.len()).collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut bounds = vec![0];
        bounds.extend(cuts);
        bounds.push(xs.len());
        let blocks: Vec<BlockStats> = bounds
            .windows(2)
            .map(|w| {
                let mut b = BlockStats::new(1);
                for x in &xs[w[0]..w[1]] {
                    b.push(&[*x]);
                }
                b
            })
            .collect();
        let merged = merge_blocks(blocks.clone(), 1);
        prop_assert_eq!(merged.n, whole.n);
        prop_assert!((merged.mean[0] - whole.mean[0]).abs() <= 1e-12 * 10.0);
        prop_assert!((merged.m2[0] - whole.m2[0]).abs() <= 1e-9 * whole.m2[0].max(1.0));
        // The reduction order is fixed, so repeating it reproduces every bit.
        prop_assert_eq!(merge_blocks(blocks, 1), merged);
    }

    #[test]
    fn girsanov_reduction_is_exact((c, mu, f) in perturbed()) {
        prop_assert!(reduction_identity_residual(&c, &mu, &f).unwrap() <= 1e-12);
        let u: Vec<f64> = (0..c.n()).map(|i| (i as f64).sin()).collect();
        prop_assert!(form_identity_residual(&c, &f, &u).unwrap() <= 1e-10);
    }

    #[test]
    fn spectral_values_are_ordered((c, mu, f) in perturbed()) {
        let ps: Vec<Exponent> = [1.0, 2.0, f64::INFINITY]
            .into_iter()
            .map(|p| Exponent::new(p).unwrap())
            .collect();
        let r = independence_report(&c, &mu, &f, &ps, false).unwrap();
        prop_assert!(r.invariants_ok(), "{:?}", r.violations());
        for e in &r.lambda_p {
            prop_assert!(r.lambda_inf <= e.value + 1e-8 && e.value <= r.lambda2 + 1e-8);
        }
        prop_assert!(r.lambda_inf >= r.lambda2.min(0.0) - 1e-8);
    }

    #[test]
    fn unperturbed_gauge_is_one(c in chain()) {
        prop_assume!(!c.is_conservative());
        let n = c.n();
        let g = gauge_function(&c, &SmoothMeasure::zero(n), &JumpPerturbation::zero(n)).unwrap();
        for v in g.g.unwrap() {
            prop_assert!((v - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn semigroup_is_positive((c, mu, f) in perturbed(), t in 0.0f64..5.0) {
        let op = schrodinger_generator(&c, &mu, &f).unwrap();
        let out = fk_semigroup_apply(&op, t, &vec![1.0; c.n()]).unwrap();
        prop_assert!(out.iter().all(|&v| v > 0.0));
        if c.is_conservative() {
            let n = c.n();
            let free = schrodinger_generator(&c, &SmoothMeasure::zero(n), &JumpPerturbation::zero(n)).unwrap();
            for v in fk_semigroup_apply(&free, t, &vec![1.0; n]).unwrap() {
                prop_assert!((v - 1.0).abs() <= 1e-10);
            }
        }
    }
}
