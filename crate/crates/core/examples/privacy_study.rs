//! Runs the synthetic privacy/utility study and prints one table per seed.
//!
//! Usage: cargo run --release --example privacy_study -- [seed ...]

use std::time::Instant;

use dpanon::study::{run_trial, ConditionResult, StudyConfig};

fn print(label: &str, rows: &[ConditionResult]) {
    for r in rows {
        let asi = r.asi_error.map_or("-".to_owned(), |v| format!("{v:.1}"));
        let utility = r.utility.map_or("-".to_owned(), |v| format!("{v:.3}"));
        println!("  {label:<5} {:<16} P_ASI={asi:<6} utility={utility}", format!("{:?}", r.condition));
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds: Vec<u64> = std::env::args().skip(1).map(|s| s.parse()).collect::<Result<_, _>>()?;
    let seeds = if seeds.is_empty() { vec![0] } else { seeds };
    let config = StudyConfig::default();
    for seed in seeds {
        let start = Instant::now();
        let outcome = run_trial(&config, seed)?;
        println!("seed {seed} ({:.1} s)", start.elapsed().as_secs_f64());
        print("pitch", &outcome.pitch);
        print("bn", &outcome.bn);
    }
    Ok(())
}
