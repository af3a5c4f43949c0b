//! Replays spatially tiled and time-tiled schedules through the LRU model and
//! compares the bytes they move.
//!
//! ```text
//! cargo run --release --example cache_traffic -- 4096 1
//! ```

use stencil_tiler::cache_sim::{simulate, CacheConfig};
use stencil_tiler::transforms::build_variant;
use stencil_tiler::{parse_spec, TilePlan, Variant};

const LAP2D: &str = "\
stencil lap2d
dims 2
extent 192 192
steps 16
term 0.6 1 0 0
term 0.1 1 -1 0
term 0.1 1 1 0
term 0.1 1 0 -1
term 0.1 1 0 1
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (spec, space) = parse_spec(LAP2D)?;
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>());
    let capacity = args.next().transpose()?.unwrap_or(4096);
    let line = args.next().transpose()?.unwrap_or(1);
    let cache = CacheConfig::new(capacity, line)?;
    println!(
        "{}: {:?} x {} steps, cache {} elems in {}-elem lines",
        spec.name(),
        space.extents(),
        space.time_steps(),
        cache.capacity_elems,
        cache.line_elems
    );
    println!(
        "{:>16} {:>4} {:>10} {:>10} {:>12} {:>8}",
        "variant", "t_t", "tiles", "loaded", "bytes", "ai"
    );

    let runs = [
        (Variant::None, 1, vec![192, 192]),
        (Variant::Space, 1, vec![32, 32]),
        (Variant::Time, 2, vec![32, 32]),
        (Variant::Time, 4, vec![16, 32]),
        (Variant::Time, 8, vec![16, 16]),
        (Variant::Time, 16, vec![8, 16]),
    ];
    for (variant, tt, tiles) in runs {
        let plan = TilePlan::new(spec.min_skew_factor(), tt, tiles.clone());
        let schedule = build_variant(&spec, &space, variant, &plan)?;
        let r = simulate(&schedule, &spec, &space, &cache)?;
        println!(
            "{:>16} {tt:>4} {:>10} {:>10} {:>12} {:>8.3}",
            format!("{variant:?}"),
            format!("{}x{}", tiles[0], tiles[1]),
            r.lines_loaded,
            r.bytes,
            r.measured_ai
        );
    }
    Ok(())
}
