//! Choosing the dividing point on a set of losses: EM-GMM, percentile and
//! 2-means on the same synthetic bimodal scores.
//!
//! cargo run --example partition

use querysift::threshold::{self, EmOptions, Strategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn run() -> querysift::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let good = Normal::new(2.0, 0.4).unwrap();
    let bad = Normal::new(5.0, 0.8).unwrap();
    let scored: Vec<(String, f64)> = (0..1000)
        .map(|i| {
            let loss: f64 = if i % 10 < 7 {
                good.sample(&mut rng)
            } else {
                bad.sample(&mut rng)
            };
            (format!("r{i:04}"), loss.max(0.0))
        })
        .collect();

    let losses: Vec<f64> = scored.iter().map(|(_, l)| *l).collect();
    let fit = threshold::fit_em_gmm(&losses, EmOptions::default())?;
    println!(
        "gmm: pi {:.3}  q N({:.3}, {:.3})  uq N({:.3}, {:.3})  {} EM iterations",
        fit.pi,
        fit.mu_q,
        fit.sigma_q,
        fit.mu_uq,
        fit.sigma_uq,
        fit.loglik_trace.len()
    );
    println!("decision threshold {:.4}", threshold::decision_threshold(&fit));

    for strategy in [Strategy::Gmm, Strategy::Percentile(0.6), Strategy::KMeans2] {
        let split = threshold::partition(&scored, strategy, EmOptions::default())?;
        let r = &split.report;
        println!(
            "{:<16} retained {:>4} / {}  threshold {}",
            r.strategy,
            r.retained,
            r.total,
            r.threshold.map_or("-".into(), |t| format!("{t:.4}"))
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
