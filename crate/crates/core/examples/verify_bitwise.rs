//! Runs every schedule variant of a corpus stencil and compares the final
//! time levels bit for bit against the untransformed nest.
//!
//! ```text
//! cargo run --release --example verify_bitwise -- corpus/wave2d.stencil 6,10 3
//! ```

use std::env;
use std::fs;

use stencil_tiler::executor::{execute, init_grid, verify_bitwise, ExecOptions, Grid};
use stencil_tiler::ir::build_canonical_nest;
use stencil_tiler::transforms::build_variant;
use stencil_tiler::{parse_spec, IterationSpace, Schedule, StencilSpec, TilePlan, Variant};

fn run(schedule: &Schedule, spec: &StencilSpec, space: &IterationSpace, reverse: bool) -> Grid {
    let grid = init_grid(spec, space, 42, schedule.required_slots(spec)).expect("grid");
    execute(
        schedule,
        spec,
        space,
        grid,
        ExecOptions {
            reverse_parallel: reverse,
        },
    )
    .expect("execute")
    .0
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/heat2d.stencil").into());
    let (spec, space) = parse_spec(&fs::read_to_string(&path)?)?;
    let tiles: Vec<usize> = match args.next() {
        Some(s) => s.split(',').map(str::parse).collect::<Result<_, _>>()?,
        None => space.extents().iter().map(|&d| (d / 3).max(1)).collect(),
    };
    let time_tile: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);

    let reference = run(
        &Schedule::from(build_canonical_nest(&spec, &space)),
        &spec,
        &space,
        false,
    );
    let plan = TilePlan::new(spec.min_skew_factor(), time_tile, tiles);
    println!(
        "{} over {:?} x {} steps, plan {:?}",
        spec.name(),
        space.extents(),
        space.time_steps(),
        plan
    );

    let mut all_equal = true;
    for variant in [
        Variant::None,
        Variant::Space,
        Variant::SpaceRemainder,
        Variant::Time,
    ] {
        let schedule = build_variant(&spec, &space, variant, &plan)?;
        for reverse in [false, true] {
            let got = run(&schedule, &spec, &space, reverse);
            let equal = verify_bitwise(&reference, &got, spec.time_depth())?;
            all_equal &= equal;
            println!(
                "{:>16}  slots={}  reversed={reverse:<5}  {}",
                format!("{variant:?}"),
                schedule.required_slots(&spec),
                if equal { "identical" } else { "MISMATCH" }
            );
        }
    }
    if !all_equal {
        std::process::exit(1);
    }
    Ok(())
}
