//! Paired SMORL (α = 1) and α = 0 runs on the synthetic Zipf dataset.
//!
//! `cargo run --release --example paired_runs -- <steps> <seeds> [pretrain_steps] [batch]`

use std::time::Instant;

use smorl_core::data::synthetic::{zipf_planted, ZipfPlantedConfig};
use smorl_core::data::{make_examples_for, split, ItemCatalog, SEQ_LEN};
use smorl_core::encoder::{pretrain_diversity_embedding, PretrainConfig};
use smorl_core::metrics::{evaluate, REPORT_KS};
use smorl_core::smorl::{train, Objective, TrainConfig, TrainInputs};

fn main() -> smorl_core::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let steps = args.first().copied().unwrap_or(1000);
    let seeds = args.get(1).copied().unwrap_or(1);
    let pretrain = args.get(2).copied().unwrap_or(500);
    let batch = args.get(3).copied().unwrap_or(256) as usize;
    for seed in 0..seeds {
        let t0 = Instant::now();
        let ds = zipf_planted(&ZipfPlantedConfig { seed, ..Default::default() });
        let folds = split(ds.n_sessions(), (8, 1, 1), 5, seed)?;
        let fold = &folds.folds[0];
        let catalog = ItemCatalog::from_sessions(ds.n_items(), fold.train.iter().map(|&s| ds.sessions[s].as_slice()), 10.0);
        let examples = make_examples_for(&ds, &fold.train, SEQ_LEN);
        let emb = pretrain_diversity_embedding(
            ds.n_items(),
            &examples,
            &PretrainConfig { steps: pretrain, batch_size: batch, seed, ..Default::default() },
        )?;
        let inputs = TrainInputs { dataset: &ds, fold, catalog: &catalog, diversity: Some(&emb) };
        let mut row = Vec::new();
        for alpha in [1.0, 0.0] {
            let cfg = TrainConfig {
                objective: Objective { weights: [1.0, 1.0, 1.0], gamma: 0.5, alpha },
                batch_size: batch,
                max_steps: steps,
                eval_every: std::env::var("EVAL_EVERY").ok().and_then(|v| v.parse().ok()).unwrap_or(0),
                seed,
                ..Default::default()
            };
            let t = Instant::now();
            let out = train(inputs, &cfg, None, &mut ())?;
            for rec in out.log.iter().filter(|r| r.validation.is_some()) {
                let v = rec.validation.as_ref().unwrap();
                println!(
                    "  step {} val HR@10 {:.4} CV@10 {:.4} CVlt@10 {:.4} R@10 {:.3}",
                    rec.step,
                    v.hr(10).unwrap(),
                    v.cv_all(10).unwrap(),
                    v.cv_longtail(10).unwrap(),
                    v.repetitiveness(10).unwrap()
                );
            }
            let r = evaluate(&out.model, &ds, &fold.test, &catalog, Some(&emb), &REPORT_KS)?;
            println!(
                "seed {seed} alpha {alpha}: HR@10 {:.4} CV@10 {:.4} CVlt@10 {:.4} R@10 {:.3} NDCG@20 {:.4} ({:.1}s)",
                r.hr(10).unwrap(),
                r.cv_all(10).unwrap(),
                r.cv_longtail(10).unwrap(),
                r.repetitiveness(10).unwrap(),
                r.ndcg(20).unwrap(),
                t.elapsed().as_secs_f64()
            );
            row.push(r);
        }
        println!("seed {seed} total {:.1}s", t0.elapsed().as_secs_f64());
    }
    Ok(())
}
