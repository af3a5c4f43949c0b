//! Tabulates the naive and cache-aware intensity estimates for a range of
//! time tiles, then places them on a roofline.
//!
//! ```text
//! cargo run --example intensity_roofline -- 262.0 17.3 65536
//! ```

use std::env;

use stencil_tiler::analysis::{ridge_point, roofline_bound, tight_bound};
use stencil_tiler::{parse_spec, MachineProfile, TilePlan};

const LAP2D_SO4: &str = "\
stencil lap2d_so4
dims 2
extent 1024 1024
steps 64
term -0.5 1 0 0
term 0.2 1 -1 0
term 0.2 1 1 0
term 0.2 1 0 -1
term 0.2 1 0 1
term 0.05 1 -2 0
term 0.05 1 2 0
term 0.05 1 0 -2
term 0.05 1 0 2
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = env::args().skip(1).map(|s| s.parse::<f64>());
    let peak = args.next().transpose()?.unwrap_or(262.0);
    let bw = args.next().transpose()?.unwrap_or(17.3);
    let cache = args.next().transpose()?.unwrap_or(65536.0) as usize;
    let profile = MachineProfile::new(peak, bw, cache)?;
    let (spec, space) = parse_spec(LAP2D_SO4)?;

    println!(
        "peak {peak} GFLOP/s, {bw} GB/s, ridge at {:.3} flop/byte, cache {cache} elems",
        ridge_point(&profile)
    );
    println!(
        "{:>4} {:>9} {:>8} {:>8} {:>8} {:>10} {:>9}",
        "t_t", "tiles", "naive", "tight", "union", "case", "GFLOP/s"
    );
    for (tt, tile) in [
        (1, 64),
        (2, 64),
        (4, 64),
        (8, 32),
        (8, 64),
        (16, 32),
        (16, 128),
        (32, 64),
    ] {
        let plan = TilePlan::new(spec.min_skew_factor(), tt, vec![tile, tile]);
        let b = tight_bound(&spec, &space, &plan, profile.cache_elems)?;
        let case = serde_json::to_value(b.faces.case)?;
        println!(
            "{tt:>4} {:>9} {:>8.3} {:>8.3} {:>8.4} {:>10} {:>9.2}",
            format!("{tile}x{tile}"),
            b.estimate.ai_naive_tt,
            b.estimate.ai_tight_tt,
            b.faces.union_frac,
            case["kind"].as_str().unwrap_or("?"),
            roofline_bound(&profile, b.estimate.ai_tight_tt)
        );
    }
    Ok(())
}
