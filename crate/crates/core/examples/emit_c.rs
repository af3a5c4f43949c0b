//! Emits a self-contained OpenMP C program for a time-tiled stencil. With
//! `CC` set it also compiles and runs the program and compares its output to
//! the interpreter.
//!
//! ```text
//! cargo run --example emit_c > heat.c
//! CC=cc cargo run --example emit_c
//! ```

use std::env;
use std::process::Command;

use stencil_tiler::codegen::emit_c;
use stencil_tiler::executor::{execute, init_grid};
use stencil_tiler::transforms::build_variant;
use stencil_tiler::{parse_spec, TilePlan, Variant};

const HEAT2D: &str = "\
stencil heat2d
dims 2
extent 70 28
steps 6
term 0.6 1 0 0
term 0.1 1 -1 0
term 0.1 1 1 0
term 0.1 1 0 -1
term 0.1 1 0 1
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (spec, space) = parse_spec(HEAT2D)?;
    let plan = TilePlan::new(spec.min_skew_factor(), 3, vec![16, 8]);
    let schedule = build_variant(&spec, &space, Variant::Time, &plan)?;
    let source = emit_c(&schedule, &spec, &space)?;

    let Ok(cc) = env::var("CC") else {
        print!("{source}");
        return Ok(());
    };
    let dir = env::temp_dir().join(format!("stencil-tiler-emit-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let c_path = dir.join("kernel.c");
    let exe = dir.join("kernel");
    std::fs::write(&c_path, &source)?;
    let status = Command::new(&cc)
        .args(["-std=c99", "-O2", "-ffp-contract=off", "-fopenmp", "-o"])
        .arg(&exe)
        .arg(&c_path)
        .status()?;
    if !status.success() {
        return Err(format!("{cc} failed on {}", c_path.display()).into());
    }
    let seed = 11;
    let out = Command::new(&exe).arg(seed.to_string()).output()?;

    let grid = init_grid(&spec, &space, seed, schedule.required_slots(&spec))?;
    let (grid, _) = execute(&schedule, &spec, &space, grid, Default::default())?;
    let expected = grid.final_levels_bytes(spec.time_depth());
    println!(
        "{} bytes from {}, {}",
        out.stdout.len(),
        exe.display(),
        if out.stdout == expected {
            "bit-identical to the interpreter"
        } else {
            "DIFFERENT from the interpreter"
        }
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
