//! Prints a 1D heat nest after each transformation step: skew, strip-mine,
//! interchange, spatial tiling and the full time-tiled nest.
//!
//! ```text
//! cargo run --example loop_transforms
//! ```

use stencil_tiler::ir::{build_canonical_nest, pretty, DimRole};
use stencil_tiler::transforms::{self, SpaceTiling};
use stencil_tiler::{parse_spec, TilePlan};

const HEAT: &str = "\
stencil heat1d
dims 1
extent 40
steps 8
term 0.25 1 -1
term 0.5 1 0
term 0.25 1 1
";

const HEAT2D: &str = "\
stencil heat2d
dims 2
extent 12 20
steps 4
term 0.6 1 0 0
term 0.1 1 -1 0
term 0.1 1 1 0
term 0.1 1 0 -1
term 0.1 1 0 1
";

fn section(title: &str, body: &str) {
    println!("== {title}\n{body}");
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (spec, space) = parse_spec(HEAT)?;
    let canonical = build_canonical_nest(&spec, &space);
    section("canonical", &pretty(&canonical));

    let skewed = transforms::skew(&canonical, spec.min_skew_factor())?;
    section("skewed by 1", &pretty(&skewed.nest));

    let mined = transforms::strip_mine(&skewed.nest, DimRole::Time, 4)?;
    section("time strip-mined by 4", &pretty(&mined));

    match transforms::interchange(&mined, 0, 1) {
        Ok(_) => println!("t moved above t_blk?"),
        Err(e) => println!("t above t_blk rejected: {e}\n"),
    }

    let (spec2, space2) = parse_spec(HEAT2D)?;
    let swapped = transforms::interchange(&build_canonical_nest(&spec2, &space2), 1, 2)?;
    section("2D nest with x and y interchanged", &pretty(&swapped));

    let minmax = transforms::tile_space(&canonical, &[16], SpaceTiling::MinMax)?;
    section("space tiled with min/max", &pretty(&minmax.nests[0]));

    let remainder = transforms::tile_space(&canonical, &[16], SpaceTiling::Remainder)?;
    for (i, nest) in remainder.nests.iter().enumerate() {
        section(&format!("space tiled, remainder nest {i}"), &pretty(nest));
    }

    let plan = TilePlan::new(1, 4, vec![16]);
    let tiled = transforms::tile_time(&canonical, &spec, &space, &plan)?;
    let tiled = transforms::mark_parallel(&tiled)?;
    section(
        "time tiled (t_t=4, x_t=16), parallel marked",
        &pretty(&tiled),
    );

    let illegal = TilePlan::new(0, 4, vec![16]);
    match transforms::check_legality(&spec, &illegal) {
        Ok(()) => println!("skew 0 accepted?"),
        Err(e) => println!("skew 0 rejected: {e}"),
    }
    Ok(())
}
