//! Searches time and space tile sizes for a 2D stencil, ranking plans by
//! simulated traffic and, for the top few, by interpreter wall time.
//!
//! ```text
//! cargo run --release --example tune_tiles
//! ```

use stencil_tiler::autotune::{tune, Cost, SearchSpace};
use stencil_tiler::cache_sim::CacheConfig;
use stencil_tiler::parse_spec;

const HEAT2D: &str = "\
stencil heat2d
dims 2
extent 128 128
steps 16
term 0.6 1 0 0
term 0.1 1 -1 0
term 0.1 1 1 0
term 0.1 1 0 -1
term 0.1 1 0 1
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (spec, space) = parse_spec(HEAT2D)?;
    let mut search = SearchSpace::default_for(&spec, &space);
    search.space_tile_candidates = vec![vec![8, 16, 32, 64, 128]; 2];

    let cache = CacheConfig::new(2048, 1)?;
    let by_traffic = tune(&spec, &space, &search, &Cost::SimTraffic(cache))?;
    let mut ranked = by_traffic.table.clone();
    ranked.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    println!(
        "{} plans, best {:?} at {} bytes",
        ranked.len(),
        by_traffic.best_plan,
        by_traffic.best_cost
    );
    for e in ranked.iter().take(8) {
        println!(
            "  t_t={:<3} tiles={:<10} {:>10} bytes",
            e.plan.time_tile,
            format!("{:?}", e.plan.space_tiles),
            e.cost
        );
    }
    let worst = ranked.last().expect("non-empty table");
    println!(
        "  worst: t_t={} tiles={:?} {} bytes",
        worst.plan.time_tile, worst.plan.space_tiles, worst.cost
    );

    let mut timed = search.clone();
    timed.time_tile_candidates = vec![by_traffic.best_plan.time_tile];
    timed.space_tile_candidates = by_traffic
        .best_plan
        .space_tiles
        .iter()
        .map(|&t| vec![t])
        .collect();
    timed.trials = 3;
    let by_time = tune(&spec, &space, &timed, &Cost::WallTime)?;
    println!(
        "interpreter time for the traffic winner: {:.4} s",
        by_time.best_cost
    );
    Ok(())
}
