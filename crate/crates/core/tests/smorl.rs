use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smorl_core::data::synthetic::deterministic_successor;
use smorl_core::data::{make_examples, split, ItemCatalog, TrainingExample};
use smorl_core::encoder::{EncoderModel, EncoderShape};
use smorl_core::numerics::{grad_check, DenseMatrix, GradCheckOptions};
use smorl_core::rewards::{DiversityEmbedding, RewardVector};
use smorl_core::smorl::{
    sdql_loss, select_action, smorl_loss_and_grads, train, train_supervised_twin, Agent, Objective, QMatrix,
    RewardContext, SdqlTerms, SmorlHead, TrainConfig, TrainInputs, TrainerState,
};

fn agent(n: usize, e: usize, h: usize, seed: u64) -> Agent {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = EncoderShape {
        n_items: n,
        embed_size: e,
        hidden_size: h,
    };
    Agent {
        encoder: EncoderModel::init(shape, &mut rng),
        head: SmorlHead::init(h, n, &mut rng),
    }
}

fn with_params(base: &Agent, p: &[DenseMatrix]) -> Agent {
    let mut a = base.clone();
    for (dst, src) in a.params_mut().into_iter().zip(p) {
        *dst = src.clone();
    }
    a
}

struct Fixture {
    examples: Vec<TrainingExample>,
    catalog: ItemCatalog,
    emb: DiversityEmbedding,
}

fn fixture(n: usize, seed: u64) -> Fixture {
    let ds = deterministic_successor(n, 30, 3, 12, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    Fixture {
        examples: make_examples(&ds, 10),
        catalog: ItemCatalog::from_sessions(n, ds.sessions.iter().map(Vec::as_slice), 10.0),
        emb: DiversityEmbedding::new(DenseMatrix::random_uniform(n + 1, 5, 1.0, &mut rng)),
    }
}

#[test]
fn sdql_analytic_examples() {
    let obj = Objective {
        weights: [1.0, 1.0, 1.0],
        gamma: 0.0,
        alpha: 1.0,
    };
    let mut terms = SdqlTerms {
        taken: vec![[0.0; 3]],
        next_actions: vec![1],
        bootstrap: vec![[7.0, -3.0, 2.0]],
        predictions: vec![1],
        rewards: vec![RewardVector {
            accuracy: 1.0,
            diversity: 0.5,
            novelty: 1.0,
        }],
    };
    assert_eq!(sdql_loss(&terms, &obj).unwrap(), 6.25);
    terms.rewards[0] = RewardVector::default();
    assert_eq!(sdql_loss(&terms, &obj).unwrap(), 0.0);
}

#[test]
fn loss_terms_match_scalar_recomputation() {
    let f = fixture(12, 3);
    let online = agent(12, 6, 5, 1);
    let alternate = agent(12, 6, 5, 2);
    let batch: Vec<&TrainingExample> = f.examples.iter().take(4).collect();
    let obj = Objective {
        weights: [0.3, 1.2, 0.7],
        gamma: 0.5,
        alpha: 1.0,
    };
    let ctx = RewardContext {
        catalog: &f.catalog,
        diversity: Some(&f.emb),
    };
    let out = smorl_loss_and_grads(&online, &alternate, &batch, &ctx, &obj).unwrap();

    let mut sum = 0.0;
    for (b, ex) in batch.iter().enumerate() {
        let s = online.encoder.encode(&ex.prefix).unwrap();
        let s_next = online.encoder.encode(&ex.next_prefix).unwrap();
        let s_boot = alternate.encoder.encode(&ex.next_prefix).unwrap();
        let q_now = online.head.q_forward(&s).unwrap().row(ex.target);
        let a_star = select_action(&online.head.q_forward(&s_next).unwrap(), &obj.weights);
        let q_boot = alternate.head.q_forward(&s_boot).unwrap().row(a_star);
        assert_eq!(a_star, out.terms.next_actions[b]);
        let r = out.terms.rewards[b].to_array();
        let td: f64 = (0..3).map(|z| obj.weights[z] * (r[z] + obj.gamma * q_boot[z] - q_now[z])).sum();
        sum += td * td;
    }
    let expect = sum / batch.len() as f64;
    assert!((out.losses.sdql - expect).abs() < 1e-12, "{} vs {expect}", out.losses.sdql);
    assert!((sdql_loss(&out.terms, &obj).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn full_loss_gradients_match_finite_differences() {
    let f = fixture(9, 5);
    let online = agent(9, 4, 4, 11);
    let alternate = agent(9, 4, 4, 12);
    let batch: Vec<&TrainingExample> = f.examples.iter().skip(3).take(6).collect();
    let ctx = RewardContext {
        catalog: &f.catalog,
        diversity: Some(&f.emb),
    };
    for obj in [
        Objective {
            weights: [1.0, 1.0, 1.0],
            gamma: 0.5,
            alpha: 1.0,
        },
        Objective {
            weights: [0.2, 0.0, 2.0],
            gamma: 0.9,
            alpha: 3.0,
        },
    ] {
        let out = smorl_loss_and_grads(&online, &alternate, &batch, &ctx, &obj).unwrap();
        assert!(out.bootstrap_grads.iter().all(|g| g.values().iter().all(|&v| v == 0.0)));
        let params: Vec<DenseMatrix> = online.params().cloned().collect();
        let err = grad_check(&params, &out.updated_grads, GradCheckOptions::default(), |p| {
            let a = with_params(&online, p);
            Ok(smorl_loss_and_grads(&a, &alternate, &batch, &ctx, &obj)?.losses.total)
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err:e}");
    }
}

#[test]
fn sdql_invariant_under_objective_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let n = rng.gen_range(1..6);
        let mut terms = SdqlTerms::default();
        for _ in 0..n {
            terms.taken.push([rng.gen(), rng.gen(), rng.gen()]);
            terms.bootstrap.push([rng.gen(), rng.gen(), rng.gen()]);
            terms.rewards.push(RewardVector {
                accuracy: 1.0,
                diversity: rng.gen_range(0.0..2.0),
                novelty: rng.gen_range(0..2) as f64,
            });
        }
        let obj = Objective {
            weights: [rng.gen(), rng.gen(), rng.gen()],
            gamma: rng.gen(),
            alpha: 1.0,
        };
        // Only the pairing of weights with components matters: rotate both.
        let rot = |v: [f64; 3]| [v[1], v[2], v[0]];
        let base = sdql_loss(&terms, &obj).unwrap();
        let direct: f64 = (0..n)
            .map(|b| {
                let r = rot(terms.rewards[b].to_array());
                let (q, bt, w) = (rot(terms.taken[b]), rot(terms.bootstrap[b]), rot(obj.weights));
                let td: f64 = (0..3).map(|z| w[z] * (r[z] + obj.gamma * bt[z] - q[z])).sum();
                td * td
            })
            .sum::<f64>()
            / n as f64;
        assert!((base - direct).abs() <= 1e-12 * base.abs().max(1.0));
    }
}

proptest! {
    #[test]
    fn argmax_invariant_under_positive_rescaling(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = QMatrix::new(DenseMatrix::random_uniform(rng.gen_range(1..40), 3, 5.0, &mut rng)).unwrap();
        let w = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let scaled = [w[0] * c, w[1] * c, w[2] * c];
        prop_assert_eq!(select_action(&q, &w), select_action(&q, &scaled));
    }
}

fn small_setup() -> (smorl_core::data::SessionDataset, smorl_core::data::Fold) {
    let ds = deterministic_successor(15, 120, 3, 9, 4);
    let fold = split(ds.n_sessions(), (8, 1, 1), 5, 4).unwrap().folds.remove(0);
    (ds, fold)
}

#[test]
fn two_runs_are_bit_identical_and_resume_continues_the_trajectory() {
    let (ds, fold) = small_setup();
    let catalog = ItemCatalog::from_sessions(15, fold.train.iter().map(|&s| ds.sessions[s].as_slice()), 10.0);
    let inputs = TrainInputs {
        dataset: &ds,
        fold: &fold,
        catalog: &catalog,
        diversity: None,
    };
    let cfg = TrainConfig {
        objective: Objective {
            weights: [1.0, 0.0, 1.0],
            ..Default::default()
        },
        batch_size: 16,
        max_steps: 30,
        eval_every: 10,
        embed_size: 8,
        hidden_size: 8,
        seed: 3,
        ..Default::default()
    };
    let a = train(inputs, &cfg, None, &mut ()).unwrap();
    let b = train(inputs, &cfg, None, &mut ()).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.log, b.log);

    let half = TrainConfig { max_steps: 20, ..cfg.clone() };
    let first = train(inputs, &half, None, &mut ()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.ckpt");
    first.state.save(&cfg, &path).unwrap();
    let restored = TrainerState::load(&cfg, &path).unwrap();
    assert_eq!(restored, first.state);
    let rest = train(inputs, &cfg, Some(restored), &mut ()).unwrap();
    assert_eq!(rest.state, a.state);
    let mut joined = first.log.clone();
    joined.extend(rest.log);
    assert_eq!(joined, a.log);
}

#[test]
fn zero_steps_returns_initial_model() {
    let (ds, fold) = small_setup();
    let catalog = ItemCatalog::from_sessions(15, fold.train.iter().map(|&s| ds.sessions[s].as_slice()), 10.0);
    let inputs = TrainInputs {
        dataset: &ds,
        fold: &fold,
        catalog: &catalog,
        diversity: None,
    };
    let cfg = TrainConfig {
        objective: Objective {
            weights: [1.0, 0.0, 0.0],
            ..Default::default()
        },
        max_steps: 0,
        embed_size: 8,
        hidden_size: 8,
        ..Default::default()
    };
    let out = train(inputs, &cfg, None, &mut ()).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.model, smorl_core::smorl::init_encoder(15, &cfg));
}

#[test]
fn missing_diversity_embedding_is_rejected() {
    let (ds, fold) = small_setup();
    let catalog = ItemCatalog::from_sessions(15, fold.train.iter().map(|&s| ds.sessions[s].as_slice()), 10.0);
    let inputs = TrainInputs {
        dataset: &ds,
        fold: &fold,
        catalog: &catalog,
        diversity: None,
    };
    let err = train(inputs, &TrainConfig::default(), None, &mut ()).err().unwrap();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn alpha_zero_matches_supervised_twin_over_60_steps() {
    let (ds, fold) = small_setup();
    let catalog = ItemCatalog::from_sessions(15, fold.train.iter().map(|&s| ds.sessions[s].as_slice()), 10.0);
    let inputs = TrainInputs {
        dataset: &ds,
        fold: &fold,
        catalog: &catalog,
        diversity: None,
    };
    let cfg = TrainConfig {
        objective: Objective {
            weights: [1.0, 0.0, 1.0],
            gamma: 0.5,
            alpha: 0.0,
        },
        batch_size: 16,
        max_steps: 60,
        eval_every: 0,
        embed_size: 8,
        hidden_size: 8,
        seed: 21,
        ..Default::default()
    };
    let out = train(inputs, &cfg, None, &mut ()).unwrap();
    let examples = smorl_core::data::make_examples_for(&ds, &fold.train, 10);
    let (online, alternate, losses) = train_supervised_twin(15, &examples, &cfg).unwrap();
    assert_eq!(&out.state.online().encoder, &online);
    assert_eq!(&out.state.alternate().encoder, &alternate);
    for (rec, (branch, l)) in out.log.iter().zip(&losses) {
        assert_eq!(rec.branch, *branch);
        assert_eq!(rec.l_s.to_bits(), l.to_bits());
    }
}
