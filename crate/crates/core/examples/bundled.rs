//! Assesses every bundled scenario and prints the headline numbers.
//!
//! `cargo run --release --example bundled -- [continuous_bins] [quadrature]`

use std::time::Instant;

use riskbn_core::discretize::BinningConfig;
use riskbn_core::product::{assess, ScenarioConfig};
use riskbn_core::scenarios;

fn main() {
    let bins: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let mut binning = BinningConfig::with_bins(bins);
    if let Some(q) = std::env::args().nth(2).and_then(|a| a.parse().ok()) {
        binning.quadrature = q;
    }
    for (name, json) in scenarios::ALL {
        let config = ScenarioConfig::from_json(json).expect("bundled scenario");
        let start = Instant::now();
        let r = assess(&config, &binning, 0).expect("assessment");
        println!("{name} ({:.2?})", start.elapsed());
        println!(
            "  p_hd test {:.3e} op {:.3e} adj {:.3e} eff {:.3e} occ {:.4}",
            r.hazard_per_demand_testing.mean,
            r.hazard_per_demand_operational.mean,
            r.hazard_per_demand.mean,
            r.hazard_per_demand_effective.mean,
            r.hazard_occurrence.mean
        );
        println!(
            "  p_major {:.3e} p_minor {:.3e} counts {:.1} / {:.1}",
            r.p_major_injury.mean, r.p_minor_injury.mean, r.major_injury_instances.mean, r.minor_injury_instances.mean
        );
        let fmt = |d: &riskbn_core::report::Distribution| {
            d.states.iter().map(|s| format!("{:.3}", s.probability)).collect::<Vec<_>>().join(" ")
        };
        println!("  risk [{}] mode {}", fmt(&r.risk_level), r.risk_level.mode);
        println!("  tol  [{}] mode {}", fmt(&r.risk_tolerability), r.risk_tolerability.mode);
        println!("  intervene {:.3}", r.recommendation.probability);
    }
}
