//! Time tiling for stencil loop nests.
//!
//! The crate builds a canonical loop nest from a stencil description,
//! transforms it (skewing, strip-mining, interchange, spatial tiling with
//! `min`/`max` bounds or remainder nests, and full time tiling), executes any
//! variant with a bit-exact reference interpreter, replays it through an LRU
//! cache model, estimates arithmetic intensity, tunes tile sizes and emits C.
//!
//! ```
//! use stencil_tiler::{ir, model, transforms, executor};
//!
//! let (spec, space) = model::parse_spec(
//!     "stencil heat\ndims 1\nextent 32\nsteps 6\nterm 0.25 1 -1\nterm 0.5 1 0\nterm 0.25 1 1",
//! ).unwrap();
//! let plan = model::TilePlan::new(spec.min_skew_factor(), 3, vec![8]);
//! let canonical = ir::Schedule::from(ir::build_canonical_nest(&spec, &space));
//! let tiled = transforms::build_variant(&spec, &space, transforms::Variant::Time, &plan).unwrap();
//!
//! let run = |s: &ir::Schedule| {
//!     let grid = executor::init_grid(&spec, &space, 7, s.required_slots(&spec)).unwrap();
//!     executor::execute(s, &spec, &space, grid, Default::default()).unwrap().0
//! };
//! assert!(executor::verify_bitwise(&run(&canonical), &run(&tiled), spec.time_depth()).unwrap());
//! ```

pub mod analysis;
pub mod autotune;
pub mod cache_sim;
pub mod cli;
pub mod codegen;
pub mod executor;
pub mod ir;
pub mod model;
pub mod transforms;

pub use ir::{LoopNest, Schedule};
pub use model::{parse_spec, IterationSpace, MachineProfile, StencilSpec, StencilTerm, TilePlan};
pub use transforms::Variant;
