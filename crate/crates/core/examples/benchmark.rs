use std::time::Instant;

use tta_core::harness::{run_benchmark, BenchmarkConfig, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = BenchmarkConfig::default();
    if let Some(seed) = std::env::args().nth(1) {
        cfg.seed = seed.parse()?;
    }
    let start = Instant::now();
    let report = run_benchmark(&cfg, &Mode::ALL)?;
    for r in &report.results {
        let m = &r.metrics;
        println!(
            "{:<15} map {:6.2} source {:6.2} target {:6.2} loopback {:6.2} drop {:6.2} overall {:6.2}",
            r.mode.name(), m.map, m.map_source, m.map_target, m.map_loopback, m.map_drop, m.map_overall
        );
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
