use polar_rl::channel::{noise_variance, RngStream};
use polar_rl::construction::{
    code_from_sequence, dega_construct, dega_reliability, extract_subsequence,
    sequence_from_trajectory, NestedSequence,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

fn dominates(j: usize, i: usize) -> bool {
    j & i == i
}

#[test]
fn reliability_respects_binary_domination() {
    for n in [2usize, 4, 8, 16, 32, 64] {
        for snr in [-3.0, 0.0, 2.0, 5.0] {
            let r = dega_reliability(n, snr).unwrap();
            let v = r.values();
            for i in 0..n {
                for j in 0..n {
                    if dominates(j, i) {
                        assert!(v[j] >= v[i], "N={n} snr={snr}: {j} dominates {i}");
                    }
                }
            }
        }
    }
}

#[test]
fn frozen_sets_respect_domination() {
    // If i is an information index, every index dominating it is too.
    for k in 0..=8 {
        let c = dega_construct(8, k, 2.0).unwrap();
        for i in c.info_indices() {
            for j in 0..8 {
                if dominates(j, i) {
                    assert!(!c.is_frozen(j), "K={k}: {j} frozen but dominates info {i}");
                }
            }
        }
    }
}

/// Exact LLR combination at a check node.
fn boxplus(a: f64, b: f64) -> f64 {
    let s = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    s * a.abs().min(b.abs()) + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

/// Sampled density evolution: every node's LLR population is carried as
/// 10^6 samples, check nodes pair samples through a random permutation.
fn sampled_mean_llrs(n: usize, snr_db: f64, samples: usize, rng: &mut RngStream) -> Vec<f64> {
    let var = noise_variance(snr_db);
    let root: Vec<f64> = (0..samples)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            2.0 * (1.0 + var.sqrt() * z) / var
        })
        .collect();
    let mut level = vec![root];
    while level.len() < n {
        let mut next = Vec::with_capacity(2 * level.len());
        for pool in &level {
            let mut perm: Vec<usize> = (0..samples).collect();
            perm.shuffle(rng);
            let upper = (0..samples).map(|j| boxplus(pool[j], pool[perm[j]])).collect();
            perm.shuffle(rng);
            let lower = (0..samples).map(|j| pool[j] + pool[perm[j]]).collect();
            next.push(upper);
            next.push(lower);
        }
        level = next;
    }
    level.iter().map(|p| p.iter().sum::<f64>() / samples as f64).collect()
}

fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let s = (a[i].total_cmp(&a[j]) as i64 * b[i].total_cmp(&b[j]) as i64) as f64;
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    let pairs = (a.len() * (a.len() - 1) / 2) as f64;
    (concordant - discordant) as f64 / pairs
}

#[test]
fn ordering_matches_sampled_density_evolution() {
    let mut rng = RngStream::new(77, 0);
    let sampled = sampled_mean_llrs(8, 2.0, 1_000_000, &mut rng);
    let ga = dega_reliability(8, 2.0).unwrap();
    let tau = kendall_tau(ga.values(), &sampled);
    assert!(tau >= 0.95, "tau = {tau}, ga = {:?}, sampled = {sampled:?}", ga.values());
}

#[test]
fn dega_codes_are_per_k() {
    // The contract is only "freeze the N-K least reliable". The resulting
    // family happens to be nested because it comes from one sort, which is
    // all this checks; nothing downstream relies on it.
    let seq = NestedSequence::from_reliability(&dega_reliability(16, 1.0).unwrap());
    for k in 0..=16 {
        let c = dega_construct(16, k, 1.0).unwrap();
        assert_eq!(c.info_len(), k);
        assert_eq!(c, code_from_sequence(&seq, k).unwrap());
    }
}

#[test]
fn round_trip_with_episode_state() {
    let actions = [5usize, 0, 7, 2, 1, 6, 3, 4];
    let seq = sequence_from_trajectory(&actions).unwrap();
    for steps in 0..=8 {
        let c = code_from_sequence(&seq, 8 - steps).unwrap();
        let mut expected = vec![false; 8];
        for &a in &actions[..steps] {
            expected[a] = true;
        }
        assert_eq!(c.mask(), expected.as_slice());
    }
}

proptest! {
    #[test]
    fn sequences_nest(seed in any::<u64>(), log_n in 1usize..7) {
        let n = 1 << log_n;
        let mut rng = RngStream::new(seed, 0);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let seq = NestedSequence::new(order).unwrap();
        for k in 0..n {
            let small = code_from_sequence(&seq, k).unwrap();
            let large = code_from_sequence(&seq, k + 1).unwrap();
            for i in 0..n {
                prop_assert!(!large.is_frozen(i) || small.is_frozen(i));
            }
            prop_assert_eq!(small.frozen_count(), large.frozen_count() + 1);
        }
    }

    #[test]
    fn extraction_yields_permutation(seed in any::<u64>(), log_n in 0usize..6) {
        let mut rng = RngStream::new(seed, 1);
        let mut order: Vec<usize> = (0..64).collect();
        order.shuffle(&mut rng);
        let seq = NestedSequence::new(order.clone()).unwrap();
        let n = 1 << log_n;
        let sub = extract_subsequence(&seq, n).unwrap();
        let mut sorted = sub.order().to_vec();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        let kept: Vec<usize> = order.into_iter().filter(|&i| i < n).collect();
        prop_assert_eq!(sub.order(), kept.as_slice());
    }
}

#[test]
fn random_permutations_are_accepted() {
    let mut rng = RngStream::new(1, 1);
    for _ in 0..50 {
        let n = 1 << rng.random_range(0..8);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        assert!(NestedSequence::new(order).is_ok());
    }
}
