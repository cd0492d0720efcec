//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines reach the console. Exits
//! non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smorl_core::data::synthetic::{deterministic_successor, zipf_planted, ZipfPlantedConfig};
use smorl_core::data::{make_examples, make_examples_for, popular_set_size, split, ItemCatalog, TrainingExample, SEQ_LEN};
use smorl_core::encoder::{pretrain_diversity_embedding, EncoderModel, EncoderShape, PretrainConfig};
use smorl_core::metrics::{coverage_at_k, evaluate, hr_at_k, ndcg_at_k, repetitiveness_at_k, MetricsReport, REPORT_KS};
use smorl_core::numerics::{grad_check, DenseMatrix, GradCheckOptions};
use smorl_core::rewards::{diversity_reward, novelty_reward, DiversityEmbedding};
use smorl_core::smorl::{
    select_action, smorl_loss_and_grads, train, train_supervised_twin, Agent, Objective, QMatrix, RewardContext,
    SmorlHead, TrainConfig, TrainInputs,
};

type Outcome = (bool, String);
type Check = fn() -> Outcome;

const PAIRED_SEEDS: u64 = 5;
const PAIRED_STEPS: u64 = 1_500;
const PAIRED_PRETRAIN_STEPS: u64 = 500;

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
    let ds = deterministic_successor(n, 40, 3, 12, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    Fixture {
        examples: make_examples(&ds, SEQ_LEN),
        catalog: ItemCatalog::from_sessions(n, ds.sessions.iter().map(Vec::as_slice), 10.0),
        emb: DiversityEmbedding::new(DenseMatrix::random_uniform(n + 1, 6, 1.0, &mut rng)),
    }
}

fn criterion_1() -> Outcome {
    let f = fixture(40, 1);
    let online = agent(40, 6, 5, 2);
    let alternate = agent(40, 6, 5, 3);
    let batch: Vec<&TrainingExample> = f.examples.iter().step_by(5).take(8).collect();
    let ctx = RewardContext {
        catalog: &f.catalog,
        diversity: Some(&f.emb),
    };
    let obj = |alpha| Objective {
        weights: [1.0, 0.7, 1.3],
        gamma: 0.5,
        alpha,
    };
    let params: Vec<DenseMatrix> = online.params().cloned().collect();
    let run = |p: &[DenseMatrix], alpha: f64| smorl_loss_and_grads(&with_params(&online, p), &alternate, &batch, &ctx, &obj(alpha));

    let sup = smorl_loss_and_grads(&online, &alternate, &batch, &ctx, &obj(0.0)).unwrap();
    let full = smorl_loss_and_grads(&online, &alternate, &batch, &ctx, &obj(1.0)).unwrap();
    let sdql_grads: Vec<DenseMatrix> = full
        .updated_grads
        .iter()
        .zip(&sup.updated_grads)
        .map(|(a, b)| {
            let diff = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
            DenseMatrix::from_vec(a.rows(), a.cols(), diff).unwrap()
        })
        .collect();
    let opts = GradCheckOptions::default();
    let e_s = grad_check(&params, &sup.updated_grads, opts, |p| Ok(run(p, 0.0)?.losses.supervised)).unwrap();
    let e_q = grad_check(&params, &sdql_grads, opts, |p| Ok(run(p, 1.0)?.losses.sdql)).unwrap();
    let e_t = grad_check(&params, &full.updated_grads, opts, |p| Ok(run(p, 1.0)?.losses.total)).unwrap();
    let boot_zero = full
        .bootstrap_grads
        .iter()
        .chain(&sup.bootstrap_grads)
        .all(|g| g.values().iter().all(|&v| v == 0.0));
    let pass = e_s < 1e-4 && e_q < 1e-4 && e_t < 1e-4 && boot_zero;
    (
        pass,
        format!("rel err L_s {e_s:.2e}, L_SDQL {e_q:.2e}, L_SMORL {e_t:.2e}; bootstrap grads zero: {boot_zero}"),
    )
}

fn criterion_2() -> Outcome {
    let ds = deterministic_successor(30, 400, 3, 12, 2);
    let fold = split(ds.n_sessions(), (8, 1, 1), 5, 2).unwrap().folds.remove(0);
    let catalog = ItemCatalog::from_sessions(30, fold.train.iter().map(|&s| ds.sessions[s].as_slice()), 10.0);
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
        batch_size: 32,
        max_steps: 500,
        eval_every: 0,
        embed_size: 16,
        hidden_size: 16,
        seed: 2,
        ..Default::default()
    };
    let out = train(inputs, &cfg, None, &mut ()).unwrap();
    let examples = make_examples_for(&ds, &fold.train, SEQ_LEN);
    let (online, alternate, losses) = train_supervised_twin(30, &examples, &cfg).unwrap();
    let params_equal = out.state.online().encoder == online && out.state.alternate().encoder == alternate;
    let losses_equal = out.log.len() == 500
        && out
            .log
            .iter()
            .zip(&losses)
            .all(|(rec, (branch, l))| rec.branch == *branch && rec.l_s.to_bits() == l.to_bits());
    (
        params_equal && losses_equal,
        format!("500 steps: parameters identical {params_equal}, per-step L_s bit-identical {losses_equal}"),
    )
}

/// Q-values of every action for objective `z`, straight from the head weights.
fn q_column(head: &SmorlHead, z: usize, state: &[f64]) -> Vec<f64> {
    let (h, b) = (&head.params()[2 * z], &head.params()[2 * z + 1]);
    (0..h.cols())
        .map(|a| b.get(0, a) + state.iter().enumerate().map(|(i, s)| s * h.get(i, a)).sum::<f64>())
        .collect()
}

fn criterion_3() -> Outcome {
    let f = fixture(25, 3);
    let mut worst: f64 = 0.0;
    let obj = Objective {
        weights: [1.0, 0.0, 0.0],
        gamma: 0.5,
        alpha: 1.0,
    };
    let ctx = RewardContext {
        catalog: &f.catalog,
        diversity: None,
    };
    for round in 0..10u64 {
        let online = agent(25, 8, 6, 10 + round);
        let alternate = agent(25, 8, 6, 50 + round);
        let batch: Vec<&TrainingExample> = f.examples.iter().skip(round as usize * 8).take(8).collect();
        let out = smorl_loss_and_grads(&online, &alternate, &batch, &ctx, &obj).unwrap();
        let mut sum = 0.0;
        for ex in &batch {
            let s = online.encoder.encode(&ex.prefix).unwrap();
            let s_next = online.encoder.encode(&ex.next_prefix).unwrap();
            let s_boot = alternate.encoder.encode(&ex.next_prefix).unwrap();
            let q_next = q_column(&online.head, 0, &s_next);
            let mut a_star = 0;
            for a in 1..q_next.len() {
                if q_next[a] > q_next[a_star] {
                    a_star = a;
                }
            }
            let target = 1.0 + obj.gamma * q_column(&alternate.head, 0, &s_boot)[a_star];
            let q = q_column(&online.head, 0, &s)[ex.target - 1];
            sum += (target - q).powi(2);
        }
        let oracle = sum / batch.len() as f64;
        worst = worst.max((out.losses.sdql - oracle).abs());
    }
    (worst <= 1e-10, format!("max |L_SDQL - scalar double-Q| over 10 batches = {worst:.2e}"))
}

struct Brute;

impl Brute {
    fn hr(lists: &[Vec<usize>], targets: &[usize], k: usize) -> f64 {
        let hits = lists.iter().zip(targets).filter(|(l, t)| l[..k].contains(t)).count();
        hits as f64 / lists.len() as f64
    }

    fn ndcg(lists: &[Vec<usize>], targets: &[usize], k: usize) -> f64 {
        let mut total = 0.0;
        for (l, t) in lists.iter().zip(targets) {
            if let Some(p) = l[..k].iter().position(|i| i == t) {
                total += 1.0 / ((p + 2) as f64).log2();
            }
        }
        total / lists.len() as f64
    }

    fn coverage(lists: &[Vec<usize>], universe: &[usize], k: usize) -> f64 {
        let seen: BTreeSet<usize> = lists.iter().flat_map(|l| l[..k].iter().copied()).collect();
        universe.iter().filter(|u| seen.contains(u)).count() as f64 / universe.len() as f64
    }

    fn repetitiveness(sessions: &[Vec<Vec<usize>>], k: usize) -> f64 {
        let mut total = 0usize;
        for s in sessions {
            let flat: Vec<usize> = s.iter().flat_map(|l| l[..k].iter().copied()).collect();
            let distinct: BTreeSet<usize> = flat.iter().copied().collect();
            total += flat.len() - distinct.len();
        }
        total as f64 / sessions.len() as f64
    }
}

fn random_sessions(rng: &mut ChaCha8Rng, n_sessions: usize) -> (Vec<Vec<Vec<usize>>>, Vec<usize>) {
    let pool: Vec<usize> = (1..=50).collect();
    let mut sessions = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..n_sessions {
        let lists: Vec<Vec<usize>> = (0..rng.gen_range(1..=6))
            .map(|_| pool.choose_multiple(rng, 20).copied().collect())
            .collect();
        for l in &lists {
            targets.push(if rng.gen_bool(0.7) { l[rng.gen_range(0..20)] } else { rng.gen_range(1..=50) });
        }
        sessions.push(lists);
    }
    (sessions, targets)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let universe: Vec<usize> = (1..=50).collect();
    let tail: Vec<usize> = (6..=50).collect();
    let (sessions, targets) = random_sessions(&mut rng, 20);
    let lists: Vec<Vec<usize>> = sessions.iter().flatten().cloned().collect();
    let mut exact = true;
    for k in REPORT_KS {
        exact &= hr_at_k(&lists, &targets, k).unwrap() == Brute::hr(&lists, &targets, k);
        exact &= ndcg_at_k(&lists, &targets, k).unwrap() == Brute::ndcg(&lists, &targets, k);
        exact &= coverage_at_k(&lists, &universe, k).unwrap() == Brute::coverage(&lists, &universe, k);
        exact &= coverage_at_k(&lists, &tail, k).unwrap() == Brute::coverage(&lists, &tail, k);
        exact &= repetitiveness_at_k(&sessions, k).unwrap() == Brute::repetitiveness(&sessions, k);
    }
    let rank3 = ndcg_at_k(&[vec![5, 6, 7, 8]], &[7], 10).unwrap() == 0.5;

    let mut monotone = true;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=5);
        let (sessions, targets) = random_sessions(&mut rng, n);
        let lists: Vec<Vec<usize>> = sessions.iter().flatten().cloned().collect();
        let mut prev = [0.0f64; 4];
        for k in 1..=20 {
            let cur = [
                hr_at_k(&lists, &targets, k).unwrap(),
                ndcg_at_k(&lists, &targets, k).unwrap(),
                coverage_at_k(&lists, &universe, k).unwrap(),
                repetitiveness_at_k(&sessions, k).unwrap(),
            ];
            monotone &= cur.iter().zip(&prev).all(|(c, p)| c >= p) && cur[1] <= cur[0];
            prev = cur;
        }
    }
    (
        exact && rank3 && monotone,
        format!("brute-force match {exact}, NDCG rank-3 = 0.5 {rank3}, monotone over 1000 instances {monotone}"),
    )
}

fn criterion_5() -> Outcome {
    let n = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let emb = DiversityEmbedding::new(DenseMatrix::random_uniform(n + 1, 16, 1.0, &mut rng));
    let mut bounded = true;
    let mut self_zero = true;
    for _ in 0..10_000 {
        let (l, p) = (rng.gen_range(1..=n), rng.gen_range(1..=n));
        let r = diversity_reward(l, p, &emb).unwrap();
        bounded &= (0.0..=2.0).contains(&r);
        self_zero &= diversity_reward(l, l, &emb).unwrap() == 0.0;
    }
    let mut counts = vec![0u64];
    counts.extend((0..n).map(|_| rng.gen_range(0..1000u64)));
    let mut partition = true;
    for x in [1.0, 5.0, 10.0, 50.0] {
        let cat = ItemCatalog::from_counts(counts.clone(), x);
        let popular = (1..=n).filter(|&i| novelty_reward(i, &cat).unwrap() == 0.0).count();
        partition &= popular as f64 / n as f64 == popular_set_size(n, x) as f64 / n as f64;
    }
    (
        bounded && self_zero && partition,
        format!("r_div in [0,2] {bounded}, r_div(a,a) = 0 {self_zero}, popular fraction identity {partition}"),
    )
}

struct PairedSeed {
    smorl: MetricsReport,
    baseline: MetricsReport,
}

fn paired_runs() -> &'static Vec<PairedSeed> {
    static RUNS: OnceLock<Vec<PairedSeed>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..PAIRED_SEEDS)
            .map(|seed| {
                let t0 = Instant::now();
                let ds = zipf_planted(&ZipfPlantedConfig {
                    seed,
                    ..Default::default()
                });
                let fold = split(ds.n_sessions(), (8, 1, 1), 5, seed).unwrap().folds.remove(0);
                let catalog =
                    ItemCatalog::from_sessions(ds.n_items(), fold.train.iter().map(|&s| ds.sessions[s].as_slice()), 10.0);
                let examples = make_examples_for(&ds, &fold.train, SEQ_LEN);
                let emb = pretrain_diversity_embedding(
                    ds.n_items(),
                    &examples,
                    &PretrainConfig {
                        steps: PAIRED_PRETRAIN_STEPS,
                        seed,
                        ..Default::default()
                    },
                )
                .unwrap();
                let inputs = TrainInputs {
                    dataset: &ds,
                    fold: &fold,
                    catalog: &catalog,
                    diversity: Some(&emb),
                };
                let run = |alpha| {
                    let cfg = TrainConfig {
                        objective: Objective {
                            weights: [1.0, 1.0, 1.0],
                            gamma: 0.5,
                            alpha,
                        },
                        max_steps: PAIRED_STEPS,
                        eval_every: 0,
                        seed,
                        ..Default::default()
                    };
                    let out = train(inputs, &cfg, None, &mut ()).unwrap();
                    evaluate(&out.model, &ds, &fold.test, &catalog, Some(&emb), &REPORT_KS).unwrap()
                };
                let smorl = run(1.0);
                let baseline = run(0.0);
                println!(
                    "  paired seed {seed}: HR@10 {:.4}/{:.4} CV@10 {:.4}/{:.4} CVlt@10 {:.4}/{:.4} R@10 {:.3}/{:.3} (SMORL/base, {:.0}s)",
                    smorl.hr(10).unwrap(),
                    baseline.hr(10).unwrap(),
                    smorl.cv_all(10).unwrap(),
                    baseline.cv_all(10).unwrap(),
                    smorl.cv_longtail(10).unwrap(),
                    baseline.cv_longtail(10).unwrap(),
                    smorl.repetitiveness(10).unwrap(),
                    baseline.repetitiveness(10).unwrap(),
                    t0.elapsed().as_secs_f64()
                );
                PairedSeed { smorl, baseline }
            })
            .collect()
    })
}

fn count_seeds(pred: impl Fn(&PairedSeed) -> bool) -> usize {
    paired_runs().iter().filter(|p| pred(p)).count()
}

fn criterion_6() -> Outcome {
    let wins = count_seeds(|p| {
        p.smorl.cv_all(10) > p.baseline.cv_all(10) && p.smorl.cv_longtail(10) > p.baseline.cv_longtail(10)
    });
    (wins >= 4, format!("SMORL CV@10 and long-tail CV@10 above baseline in {wins}/{PAIRED_SEEDS} seeds"))
}

fn criterion_7() -> Outcome {
    let wins = count_seeds(|p| p.smorl.repetitiveness(10) <= p.baseline.repetitiveness(10));
    (wins >= 4, format!("SMORL R@10 not above baseline in {wins}/{PAIRED_SEEDS} seeds"))
}

fn criterion_8() -> Outcome {
    let wins = count_seeds(|p| {
        let (s, b) = (p.smorl.hr(10).unwrap(), p.baseline.hr(10).unwrap());
        s >= 0.95 * b
    });
    (wins >= 4, format!("SMORL HR@10 within -5% of baseline in {wins}/{PAIRED_SEEDS} seeds"))
}

fn criterion_9() -> Outcome {
    let ds = deterministic_successor(20, 2_000, 3, 12, 9);
    let fold = split(ds.n_sessions(), (8, 1, 1), 5, 9).unwrap().folds.remove(0);
    let catalog = ItemCatalog::from_sessions(20, fold.train.iter().map(|&s| ds.sessions[s].as_slice()), 10.0);
    let inputs = TrainInputs {
        dataset: &ds,
        fold: &fold,
        catalog: &catalog,
        diversity: None,
    };
    let cfg = TrainConfig {
        objective: Objective {
            weights: [1.0, 0.0, 0.0],
            gamma: 0.5,
            alpha: 1.0,
        },
        max_steps: 2_000,
        eval_every: 0,
        seed: 9,
        ..Default::default()
    };
    let out = train(inputs, &cfg, None, &mut ()).unwrap();
    let report = evaluate(&out.model, &ds, &fold.test, &catalog, None, &REPORT_KS).unwrap();
    let hr1 = report.hr(1).unwrap();
    (hr1 >= 0.95, format!("held-out HR@1 = {hr1:.4} after 2000 steps"))
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=50);
        let q = QMatrix::new(DenseMatrix::random_uniform(n, 3, 10.0, &mut rng)).unwrap();
        let w = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let c = 10f64.powf(rng.gen_range(-3.0..3.0));
        if select_action(&q, &w) != select_action(&q, &[c * w[0], c * w[1], c * w[2]]) {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("{mismatches} argmax changes over 10000 instances"))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("gradient correctness", criterion_1),
        ("alpha = 0 equals supervised training", criterion_2),
        ("accuracy-only loss equals scalar double-Q", criterion_3),
        ("metric oracles", criterion_4),
        ("reward bounds and identities", criterion_5),
        ("directional coverage effect", criterion_6),
        ("directional repetitiveness effect", criterion_7),
        ("accuracy non-degradation", criterion_8),
        ("learnability", criterion_9),
        ("argmax rescaling invariance", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == (i + 1).to_string()) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(outcome) => outcome,
            Err(_) => (false, "panicked".to_string()),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{id} {}: {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
