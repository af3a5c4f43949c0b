//! Reference interpreter for loop nests over a time-buffered, halo-padded
//! `f32` grid.
//!
//! Storage is slot-major, then row-major over the padded spatial extents.
//! Time level `L` lives in slot `L mod slots`; interior point `x` sits at
//! padded coordinate `x + δ_i`. Levels `0..δ_t` hold the initial condition
//! and iteration `t` writes level `t + δ_t`. Halo cells are written once at
//! initialisation and never updated.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{CompiledSchedule, IrError, Schedule};
use crate::model::{IterationSpace, StencilSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("grid has {slots} time slots but the schedule needs {required}")]
    InsufficientSlots { slots: usize, required: usize },
    #[error("out-of-bounds {access} at logical point {point:?}: dimension {dim} index {index}")]
    OutOfBounds {
        access: String,
        point: Vec<i64>,
        dim: usize,
        index: i64,
    },
    #[error("grid shapes differ")]
    ShapeMismatch,
    #[error("cannot compare {requested} levels of a grid holding {slots}")]
    CompareDepth { requested: usize, slots: usize },
}

/// 64-bit linear congruential generator with a fixed output mapping onto
/// `[0.001, 0.002)`. The emitted C driver reproduces it bit for bit.
#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub const MULTIPLIER: u64 = 6364136223846793005;
    pub const INCREMENT: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(Self::MULTIPLIER)
            .wrapping_add(Self::INCREMENT);
        self.state
    }

    pub fn next_value(&mut self) -> f32 {
        let bits = self.next_u64() >> 40;
        (0.001 + 0.001 * bits as f64 / 16777216.0) as f32
    }
}

/// Padded extents and row-major strides of one time slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct AddressMap {
    pub halo: Vec<usize>,
    pub padded: Vec<usize>,
    pub strides: Vec<usize>,
    pub slab: usize,
}

impl AddressMap {
    pub fn new(spec: &StencilSpec, space: &IterationSpace) -> Self {
        let halo = spec.radii().to_vec();
        let padded: Vec<usize> = space
            .extents()
            .iter()
            .zip(&halo)
            .map(|(d, h)| d + 2 * h)
            .collect();
        let mut strides = vec![1usize; padded.len()];
        for i in (0..padded.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * padded[i + 1];
        }
        let slab = padded.iter().product();
        Self {
            halo,
            padded,
            strides,
            slab,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    slots: usize,
    extents: Vec<usize>,
    halo: Vec<usize>,
    padded: Vec<usize>,
    strides: Vec<usize>,
    slab: usize,
    time_depth: usize,
    last_level: i64,
    data: Vec<f32>,
}

impl Grid {
    fn zeroed(spec: &StencilSpec, space: &IterationSpace, slots: usize) -> Self {
        let AddressMap {
            halo,
            padded,
            strides,
            slab,
        } = AddressMap::new(spec, space);
        Self {
            slots,
            extents: space.extents().to_vec(),
            halo,
            padded,
            strides,
            slab,
            time_depth: spec.time_depth(),
            last_level: spec.time_depth() as i64 - 1,
            data: vec![0.0; slots * slab],
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn padded_extents(&self) -> &[usize] {
        &self.padded
    }

    pub fn halo(&self) -> &[usize] {
        &self.halo
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Highest time level written so far.
    pub fn last_level(&self) -> i64 {
        self.last_level
    }

    /// Elements in one time slot, halo included.
    pub fn slab_len(&self) -> usize {
        self.slab
    }

    pub fn flat_index(&self, level: i64, padded_coords: &[usize]) -> usize {
        let slot = level.rem_euclid(self.slots as i64) as usize;
        slot * self.slab
            + padded_coords
                .iter()
                .zip(&self.strides)
                .map(|(c, s)| c * s)
                .sum::<usize>()
    }

    fn is_halo(&self, padded_coords: &[usize]) -> bool {
        padded_coords
            .iter()
            .zip(self.halo.iter().zip(&self.extents))
            .any(|(&c, (&h, &d))| c < h || c >= h + d)
    }

    /// Interior values of one time level in row-major order.
    pub fn level_interior(&self, level: i64) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.extents.iter().product());
        let mut coords = vec![0usize; self.extents.len()];
        loop {
            let padded: Vec<usize> = coords.iter().zip(&self.halo).map(|(c, h)| c + h).collect();
            out.push(self.data[self.flat_index(level, &padded)]);
            if !advance(&mut coords, &self.extents) {
                break;
            }
        }
        out
    }

    /// Interior of the last `count` levels, oldest first, as little-endian
    /// bytes. Same layout the emitted C driver writes to stdout.
    pub fn final_levels_bytes(&self, count: usize) -> Vec<u8> {
        let first = self.last_level - count as i64 + 1;
        (first..=self.last_level)
            .flat_map(|level| self.level_interior(level))
            .flat_map(f32::to_le_bytes)
            .collect()
    }

    fn same_shape(&self, other: &Grid) -> bool {
        self.extents == other.extents
            && self.halo == other.halo
            && self.time_depth == other.time_depth
    }
}

/// Odometer increment over `extents`; false once it wraps.
fn advance(coords: &mut [usize], extents: &[usize]) -> bool {
    for i in (0..coords.len()).rev() {
        coords[i] += 1;
        if coords[i] < extents[i] {
            return true;
        }
        coords[i] = 0;
    }
    false
}

/// Fills levels `0..δ_t` from the LCG stream: one full padded slab per level,
/// drawn row-major. The halo of level 0 then becomes the halo of every slot,
/// so boundary values do not depend on the buffer depth. Other interiors are
/// zero.
pub fn init_grid(
    spec: &StencilSpec,
    space: &IterationSpace,
    seed: u64,
    slots: usize,
) -> Result<Grid, ExecError> {
    let required = spec.time_depth() + 1;
    if slots < required {
        return Err(ExecError::InsufficientSlots { slots, required });
    }
    let mut grid = Grid::zeroed(spec, space, slots);
    let mut rng = Lcg::new(seed);
    let slab = grid.slab;
    for slot in 0..spec.time_depth() {
        for v in &mut grid.data[slot * slab..(slot + 1) * slab] {
            *v = rng.next_value();
        }
    }
    let mut coords = vec![0usize; grid.padded.len()];
    let padded = grid.padded.clone();
    loop {
        if grid.is_halo(&coords) {
            let offset = grid.flat_index(0, &coords);
            let value = grid.data[offset];
            for slot in 1..slots {
                grid.data[slot * slab + offset] = value;
            }
        }
        if !advance(&mut coords, &padded) {
            break;
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecOptions {
    /// Run every loop marked parallel from its last iteration to its first.
    pub reverse_parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecReport {
    pub points_updated: u64,
    pub flops: u64,
    pub wall_seconds: f64,
}

/// Runs `schedule` over `grid`. Each point evaluates
/// `acc = c_1·r_1; acc = acc + c_k·r_k` in term order, unfused.
pub fn execute(
    schedule: &Schedule,
    spec: &StencilSpec,
    space: &IterationSpace,
    mut grid: Grid,
    options: ExecOptions,
) -> Result<(Grid, ExecReport), ExecError> {
    schedule.validate(spec)?;
    if grid.extents != space.extents() || grid.halo != spec.radii() {
        return Err(ExecError::ShapeMismatch);
    }
    let required = schedule.required_slots(spec);
    if grid.slots < required {
        return Err(ExecError::InsufficientSlots {
            slots: grid.slots,
            required,
        });
    }
    let compiled = CompiledSchedule::new(schedule)?;
    let coeffs: Vec<f32> = spec.terms().iter().map(|t| t.coeff).collect();
    let slots = grid.slots as i64;
    let slab = grid.slab;
    let halo: Vec<i64> = grid.halo.iter().map(|&h| h as i64).collect();
    let padded: Vec<i64> = grid.padded.iter().map(|&p| p as i64).collect();
    let extents: Vec<i64> = grid.extents.iter().map(|&d| d as i64).collect();
    let strides = grid.strides.clone();
    let mut points: u64 = 0;
    let mut last_level = grid.last_level;
    let data = &mut grid.data;

    let start = Instant::now();
    compiled.walk(options.reverse_parallel, &mut |body, env| {
        let mut acc = 0.0f32;
        for (k, read) in body.reads.iter().enumerate() {
            let slot = read.time.eval(env).rem_euclid(slots) as usize;
            let mut offset = slot * slab;
            for (dim, form) in read.space.iter().enumerate() {
                let p = form.eval(env) + halo[dim];
                if p < 0 || p >= padded[dim] {
                    return Err(ExecError::OutOfBounds {
                        access: format!("read of term {k}"),
                        point: body.logical_point(env),
                        dim,
                        index: p - halo[dim],
                    });
                }
                offset += p as usize * strides[dim];
            }
            let product = coeffs[k] * data[offset];
            acc = if k == 0 { product } else { acc + product };
        }
        let level = body.target.time.eval(env);
        let mut offset = level.rem_euclid(slots) as usize * slab;
        for (dim, form) in body.target.space.iter().enumerate() {
            let x = form.eval(env);
            if x < 0 || x >= extents[dim] {
                return Err(ExecError::OutOfBounds {
                    access: "write".into(),
                    point: body.logical_point(env),
                    dim,
                    index: x,
                });
            }
            offset += (x + halo[dim]) as usize * strides[dim];
        }
        data[offset] = acc;
        last_level = last_level.max(level);
        points += 1;
        Ok(())
    })?;
    let wall_seconds = start.elapsed().as_secs_f64();
    grid.last_level = last_level;

    let report = ExecReport {
        points_updated: points,
        flops: points * spec.flops_per_point() as u64,
        wall_seconds,
    };
    Ok((grid, report))
}

/// True iff the last `compare_slots` levels agree bit for bit over the
/// interior.
pub fn verify_bitwise(a: &Grid, b: &Grid, compare_slots: usize) -> Result<bool, ExecError> {
    if !a.same_shape(b) {
        return Err(ExecError::ShapeMismatch);
    }
    for g in [a, b] {
        if compare_slots > g.slots {
            return Err(ExecError::CompareDepth {
                requested: compare_slots,
                slots: g.slots,
            });
        }
    }
    if a.last_level != b.last_level {
        return Ok(false);
    }
    let first = a.last_level - compare_slots as i64 + 1;
    Ok((first..=a.last_level).all(|level| {
        let x = a.level_interior(level);
        let y = b.level_interior(level);
        x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{build_canonical_nest, Schedule};
    use crate::model::{parse_spec, TilePlan};
    use crate::transforms::{build_variant, tile_time, Variant};

    fn fixture(text: &str) -> (StencilSpec, IterationSpace) {
        parse_spec(text).unwrap()
    }

    fn heat1d() -> (StencilSpec, IterationSpace) {
        fixture(
            "stencil s\ndims 1\nextent 12\nsteps 5\nterm 0.25 1 -1\nterm 0.5 1 0\nterm 0.25 1 1",
        )
    }

    #[test]
    fn lcg_matches_recurrence() {
        let mut rng = Lcg::new(7);
        let first = rng.next_u64();
        assert_eq!(
            first,
            7u64.wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407)
        );
        let mut a = Lcg::new(3);
        let mut b = Lcg::new(3);
        for _ in 0..100 {
            let v = a.next_value();
            assert_eq!(v.to_bits(), b.next_value().to_bits());
            assert!((0.001..0.002).contains(&v));
        }
    }

    #[test]
    fn init_is_deterministic_and_in_range() {
        let (spec, space) =
            fixture("stencil s\ndims 2\nextent 6 5\nsteps 2\nterm 0.5 2 1 0\nterm 0.5 1 0 -2");
        let a = init_grid(&spec, &space, 42, 4).unwrap();
        let b = init_grid(&spec, &space, 42, 4).unwrap();
        assert_eq!(a, b);
        let c = init_grid(&spec, &space, 43, 4).unwrap();
        assert_ne!(a.data()[..16], c.data()[..16]);
        let slab = a.slab_len();
        assert!(a.data()[..2 * slab]
            .iter()
            .all(|v| (0.001..0.002).contains(v)));
        // Halo cells are identical across slots; later interiors are zero.
        assert_eq!(a.data()[0], a.data()[3 * slab]);
        assert!(a.level_interior(2).iter().all(|&v| v == 0.0));
        assert!(matches!(
            init_grid(&spec, &space, 1, 2),
            Err(ExecError::InsufficientSlots { .. })
        ));
    }

    #[test]
    fn identity_stencil_copies_forward() {
        let (spec, space) = fixture("stencil id\ndims 1\nextent 9\nsteps 4\nterm 1.0 1 0");
        let grid = init_grid(&spec, &space, 5, 2).unwrap();
        let initial = grid.level_interior(0);
        let nest = build_canonical_nest(&spec, &space);
        let (out, report) = execute(
            &Schedule::from(nest),
            &spec,
            &space,
            grid,
            ExecOptions::default(),
        )
        .unwrap();
        assert_eq!(out.last_level(), 4);
        assert_eq!(out.level_interior(4), initial);
        assert_eq!(report.points_updated, 36);
        assert_eq!(report.flops, 36);
    }

    #[test]
    fn time_tiled_matches_canonical() {
        let (spec, space) = heat1d();
        let plan = TilePlan::new(1, 2, vec![3]);
        let canon = build_variant(&spec, &space, Variant::None, &plan).unwrap();
        let tiled = build_variant(&spec, &space, Variant::Time, &plan).unwrap();
        let g1 = init_grid(&spec, &space, 7, 2).unwrap();
        let g2 = init_grid(&spec, &space, 7, 3).unwrap();
        let (a, _) = execute(&canon, &spec, &space, g1, ExecOptions::default()).unwrap();
        let (b, _) = execute(&tiled, &spec, &space, g2, ExecOptions::default()).unwrap();
        assert!(verify_bitwise(&a, &b, 1).unwrap());
    }

    #[test]
    fn unskewed_time_tiles_break_equality() {
        let (spec, space) = fixture(
            "stencil s\ndims 1\nextent 8\nsteps 4\nterm 0.3 1 -1\nterm 0.4 1 0\nterm 0.3 1 1",
        );
        let canonical = build_canonical_nest(&spec, &space);
        // Build an illegal plan by pretending the stencil is pointwise.
        let pointwise = fixture(
            "stencil p\ndims 1\nextent 8\nsteps 4\nterm 0.3 1 0\nterm 0.4 1 0\nterm 0.3 1 0",
        )
        .0;
        let mut bad = tile_time(
            &canonical,
            &pointwise,
            &space,
            &TilePlan::new(0, 2, vec![2]),
        )
        .unwrap();
        bad.body = canonical.body.clone();
        let g = || init_grid(&spec, &space, 11, 3).unwrap();
        let (a, _) = execute(
            &Schedule::from(canonical.clone()),
            &spec,
            &space,
            g(),
            ExecOptions::default(),
        )
        .unwrap();
        match execute(
            &Schedule::from(bad),
            &spec,
            &space,
            g(),
            ExecOptions::default(),
        ) {
            Ok((b, _)) => assert!(!verify_bitwise(&a, &b, 1).unwrap()),
            Err(e) => assert!(matches!(e, ExecError::OutOfBounds { .. })),
        }
    }

    #[test]
    fn out_of_range_reads_are_reported() {
        let (spec, space) = heat1d();
        let mut nest = build_canonical_nest(&spec, &space);
        nest.body.reads[0].space[0] = nest.body.reads[0].space[0].clone().plus_const(-5);
        let grid = init_grid(&spec, &space, 1, 2).unwrap();
        let err = execute(
            &Schedule::from(nest),
            &spec,
            &space,
            grid,
            ExecOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ExecError::OutOfBounds { dim: 0, .. }));
    }

    #[test]
    fn insufficient_slots_rejected() {
        let (spec, space) = heat1d();
        let tiled =
            build_variant(&spec, &space, Variant::Time, &TilePlan::new(1, 4, vec![4])).unwrap();
        let grid = init_grid(&spec, &space, 1, 3).unwrap();
        assert_eq!(
            execute(&tiled, &spec, &space, grid, ExecOptions::default()).unwrap_err(),
            ExecError::InsufficientSlots {
                slots: 3,
                required: 5
            }
        );
    }

    #[test]
    fn verify_detects_one_ulp() {
        let (spec, space) = heat1d();
        let nest = Schedule::from(build_canonical_nest(&spec, &space));
        let grid = init_grid(&spec, &space, 9, 2).unwrap();
        let (a, _) = execute(&nest, &spec, &space, grid, ExecOptions::default()).unwrap();
        assert!(verify_bitwise(&a, &a, 1).unwrap());
        let mut b = a.clone();
        let idx = b.flat_index(b.last_level(), &[4]);
        b.data_mut()[idx] = f32::from_bits(b.data()[idx].to_bits() + 1);
        assert!(!verify_bitwise(&a, &b, 1).unwrap());
        assert!(matches!(
            verify_bitwise(&a, &b, 3),
            Err(ExecError::CompareDepth { .. })
        ));
    }
}
