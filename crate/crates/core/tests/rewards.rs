use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smorl_core::data::ItemCatalog;
use smorl_core::numerics::DenseMatrix;
use smorl_core::rewards::{accuracy_reward, diversity_reward, novelty_reward, stack_rewards, DiversityEmbedding};

fn random_embedding(n: usize, d: usize, seed: u64) -> DiversityEmbedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DiversityEmbedding::new(DenseMatrix::random_uniform(n + 1, d, 1.0, &mut rng))
}

#[test]
fn diversity_reward_bounds_over_10k_pairs() {
    let n = 200;
    let emb = random_embedding(n, 16, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let a = rng.gen_range(1..=n);
        let b = rng.gen_range(1..=n);
        let r = diversity_reward(a, b, &emb).unwrap();
        assert!((0.0..=2.0).contains(&r), "r_div({a},{b}) = {r}");
        assert_eq!(r, diversity_reward(b, a, &emb).unwrap());
        assert_eq!(diversity_reward(a, a, &emb).unwrap(), 0.0);
    }
}

#[test]
fn diversity_reward_matches_cosine_oracle() {
    // Rows: pad, (1,0), (0,1), (-1,0), (0,0), (3,3)
    let table = DenseMatrix::from_rows(&[
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![-1.0, 0.0],
        vec![0.0, 0.0],
        vec![3.0, 3.0],
    ])
    .unwrap();
    let emb = DiversityEmbedding::new(table);
    assert_eq!(diversity_reward(1, 2, &emb).unwrap(), 1.0);
    assert_eq!(diversity_reward(1, 3, &emb).unwrap(), 2.0);
    assert_eq!(diversity_reward(1, 4, &emb).unwrap(), 1.0);
    let r = diversity_reward(1, 5, &emb).unwrap();
    assert!((r - (1.0 - std::f64::consts::FRAC_1_SQRT_2)).abs() < 1e-15);
    assert!(diversity_reward(0, 1, &emb).is_err());
    assert!(diversity_reward(1, 6, &emb).is_err());
}

#[test]
fn novelty_partitions_items_by_popularity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [7usize, 100, 523] {
        let mut counts = vec![0u64];
        counts.extend((0..n).map(|_| rng.gen_range(0..500)));
        for x in [1.0, 5.0, 10.0, 50.0] {
            let cat = ItemCatalog::from_counts(counts.clone(), x);
            let novel: f64 = (1..=n).map(|i| novelty_reward(i, &cat).unwrap()).sum();
            let popular = n as f64 - novel;
            assert_eq!(popular as usize, smorl_core::data::popular_set_size(n, x));
            assert!((popular / n as f64 - cat.popular_items().len() as f64 / n as f64).abs() < 1e-15);
        }
        let cat = ItemCatalog::from_counts(counts.clone(), 10.0);
        assert!(novelty_reward(0, &cat).is_err());
        assert!(novelty_reward(n + 1, &cat).is_err());
    }
}

#[test]
fn stacked_rewards_are_in_objective_order() {
    let emb = random_embedding(10, 4, 4);
    let mut counts = vec![0u64; 11];
    counts[1] = 100;
    let cat = ItemCatalog::from_counts(counts, 10.0);
    assert_eq!(accuracy_reward(3), 1.0);
    let r = stack_rewards(3, 2, 1, Some(&emb), &cat).unwrap();
    assert_eq!(r.to_array(), [1.0, diversity_reward(2, 1, &emb).unwrap(), 0.0]);
    let r = stack_rewards(3, 2, 5, None, &cat).unwrap();
    assert_eq!(r.to_array(), [1.0, 0.0, 1.0]);
    assert!(r.in_bounds());
}
