//! Runs the self-training benchmark under several calibration variants and
//! prints median target mPQ / mRQ over seeds.

use std::time::Instant;

use maskcal::adapt::{run_benchmark, BenchmarkConfig};
use maskcal::hmc::StageOrder;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn main() -> maskcal::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let base = BenchmarkConfig::default();
    let mut ceiling = Vec::new();
    for seed in 0..seeds {
        let data = maskcal::adapt::BenchmarkData::generate(&base, seed)?;
        let m = maskcal::adapt::PrototypeModel::fit_supervised(
            data.target_train.iter().map(|s| (&s.features, &s.gt)),
            base.scene.num_categories,
            base.scene.feature_dim,
            base.model_temperature,
        )?;
        ceiling.push(maskcal::adapt::evaluate_model(&m, &data.target_eval)?.m_pq);
    }
    println!("target-supervised ceiling mPQ {:.4}", median(ceiling));
    let variants: Vec<String> = std::env::var("VARIANTS")
        .unwrap_or_else(|_| "none R S P RSP PSR".into())
        .split_whitespace()
        .map(String::from)
        .collect();
    let start = Instant::now();
    for name in variants.iter().map(String::as_str) {
        let mut cfg = base.clone();
        if name == "none" {
            cfg.calibration = None;
        } else {
            cfg.calibration.as_mut().unwrap().stage_order = name.parse::<StageOrder>()?;
        }
        let runs: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..seeds)
                .map(|seed| {
                    let cfg = &cfg;
                    s.spawn(move || run_benchmark(cfg, seed, |_| {}))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect::<maskcal::Result<Vec<_>>>()
        })?;
        let pq = median(runs.iter().map(|r| r.final_target.m_pq).collect());
        let rq = median(runs.iter().map(|r| r.final_target.m_rq).collect());
        let init = median(runs.iter().map(|r| r.initial_target.m_pq).collect());
        println!("{name:>5}  mPQ {pq:.4}  mRQ {rq:.4}  (source-only mPQ {init:.4})");
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
