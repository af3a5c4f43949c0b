//! Loop transformations on [`LoopNest`]: skewing, strip-mining, interchange,
//! spatial tiling (min/max bounded or with remainder nests), time tiling and
//! parallel marking.
//!
//! Every transformation is a pure function producing a new nest. Skewing and
//! strip-mining preserve the execution order of logical points; interchange
//! only checks that bounds stay in scope, dependence legality of the time
//! tiles comes from [`check_legality`].

use thiserror::Error;

use crate::ir::{
    self, tile_var, AffineExpr, Bound, DimRole, IrError, Loop, LoopKind, LoopNest, Schedule,
};
use crate::model::{IterationSpace, ModelError, StencilSpec, TilePlan};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("skew factor {skew} is below the minimum legal factor {required}")]
pub struct LegalityError {
    pub skew: usize,
    pub required: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error(transparent)]
    Illegal(#[from] LegalityError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Plan(#[from] ModelError),
    #[error("nest is not canonical: {0}")]
    NotCanonical(String),
    #[error("loop `{0}` is already tiled")]
    AlreadyTiled(String),
    #[error("no point loop for {0:?}")]
    NoSuchLoop(DimRole),
    #[error("tile size must be at least 1")]
    TileSize,
    #[error("loop position {pos} is out of range for a nest of depth {depth}")]
    Position { pos: usize, depth: usize },
    #[error("interchange would move loop `{inner}` above `{outer}`, which its bounds depend on")]
    Interchange { outer: String, inner: String },
    #[error("expected {expected} tile sizes, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("unrecognized loop structure: {0}")]
    Unrecognized(String),
}

/// Result of [`skew`]. `skipped` is set when the nest had no time loop and
/// was returned untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skewed {
    pub nest: LoopNest,
    pub skipped: bool,
}

/// Shifts every spatial point loop by `s·t` and rewrites every spatial index
/// in the body from `x` to `x - s·t`. Execution order is unchanged.
pub fn skew(nest: &LoopNest, s: usize) -> Result<Skewed, TransformError> {
    let Some(time) = nest.time_loop() else {
        return Ok(Skewed {
            nest: nest.clone(),
            skipped: true,
        });
    };
    if nest.has_space_tiles() {
        return Err(TransformError::NotCanonical(
            "skewing must precede spatial tiling".into(),
        ));
    }
    let t = time.var.clone();
    let s = s as i64;
    let mut out = nest.clone();
    if s == 0 {
        return Ok(Skewed {
            nest: out,
            skipped: false,
        });
    }
    let mut space_vars = Vec::new();
    for l in out.loops.iter_mut() {
        if matches!(l.role, DimRole::Space(_)) {
            l.lower = l.lower.map(|e| e.clone().plus_term(&t, s));
            l.upper = l.upper.map(|e| e.clone().plus_term(&t, s));
            space_vars.push(l.var.clone());
        }
    }
    for v in &space_vars {
        let replacement = AffineExpr::var(v).plus_term(&t, -s);
        out.body = out.body.map(|e| e.substitute(v, &replacement));
    }
    Ok(Skewed {
        nest: out,
        skipped: false,
    })
}

/// Splits the plain loop for `role` into a tile loop `v_blk` (stride
/// `tile_size`, original bounds) around an incremental loop `v` bounded by
/// `max(lower, v_blk)` and `min(upper, v_blk + tile_size)`.
pub fn strip_mine(
    nest: &LoopNest,
    role: DimRole,
    tile_size: usize,
) -> Result<LoopNest, TransformError> {
    if tile_size == 0 {
        return Err(TransformError::TileSize);
    }
    let pos = nest
        .loops
        .iter()
        .position(|l| l.role == role && l.is_point_loop())
        .ok_or(TransformError::NoSuchLoop(role))?;
    let target = &nest.loops[pos];
    if target.kind != LoopKind::Plain {
        return Err(TransformError::AlreadyTiled(target.var.clone()));
    }
    let blk = tile_var(&target.var);
    if nest.position(&blk).is_some() {
        return Err(TransformError::AlreadyTiled(target.var.clone()));
    }
    let b = tile_size as i64;
    let tile = Loop {
        var: blk.clone(),
        lower: target.lower.clone(),
        upper: target.upper.clone(),
        step: b,
        kind: LoopKind::Tile,
        role,
        parallel: false,
    };
    let mut lower = target.lower.exprs.clone();
    lower.push(AffineExpr::var(&blk));
    let mut upper = target.upper.exprs.clone();
    upper.push(AffineExpr::var(&blk).plus_const(b));
    let incremental = Loop {
        var: target.var.clone(),
        lower: Bound::max_of(lower),
        upper: Bound::min_of(upper),
        step: 1,
        kind: LoopKind::Incremental,
        role,
        parallel: false,
    };
    let mut out = nest.clone();
    out.loops.splice(pos..=pos, [tile, incremental]);
    Ok(out)
}

/// Swaps the loops at two positions. Bounds are left untouched, so the swap
/// is rejected when a loop would end up outside a loop its bounds use.
pub fn interchange(
    nest: &LoopNest,
    pos_a: usize,
    pos_b: usize,
) -> Result<LoopNest, TransformError> {
    let depth = nest.loops.len();
    for pos in [pos_a, pos_b] {
        if pos >= depth {
            return Err(TransformError::Position { pos, depth });
        }
    }
    let mut out = nest.clone();
    out.loops.swap(pos_a, pos_b);
    check_scoping(&out)?;
    Ok(out)
}

fn check_scoping(nest: &LoopNest) -> Result<(), TransformError> {
    for (i, l) in nest.loops.iter().enumerate() {
        if let Some(inner) = nest.loops[i + 1..].iter().find(|o| l.references(&o.var)) {
            return Err(TransformError::Interchange {
                outer: inner.var.clone(),
                inner: l.var.clone(),
            });
        }
    }
    Ok(())
}

/// Reorders loops into `order` (loop variables, outermost first) through a
/// sequence of adjacent interchanges.
pub fn permute(nest: &LoopNest, order: &[String]) -> Result<LoopNest, TransformError> {
    if order.len() != nest.loops.len() {
        return Err(TransformError::Arity {
            expected: nest.loops.len(),
            found: order.len(),
        });
    }
    let rank = |var: &str| order.iter().position(|o| o == var);
    let mut out = nest.clone();
    for l in &out.loops {
        if rank(&l.var).is_none() {
            return Err(TransformError::Unrecognized(format!(
                "loop `{}` missing from order",
                l.var
            )));
        }
    }
    // Bubble sort keeps every intermediate nest a composition of swaps, but
    // intermediate states may be out of scope; only the final order is checked.
    let n = out.loops.len();
    for i in 0..n {
        for j in 0..n - 1 - i {
            if rank(&out.loops[j].var) > rank(&out.loops[j + 1].var) {
                out.loops.swap(j, j + 1);
            }
        }
    }
    check_scoping(&out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SpaceTiling {
    /// One nest; incremental loops clipped with `min`/`max`.
    MinMax,
    /// `2^n` nests: full tiles first, then every combination of remainders.
    Remainder,
}

fn check_canonical(nest: &LoopNest) -> Result<(), TransformError> {
    ir::validate(nest)?;
    if nest.loops.iter().any(|l| l.kind != LoopKind::Plain) {
        return Err(TransformError::NotCanonical("nest is already tiled".into()));
    }
    if nest.loops.first().map(|l| l.role) != Some(DimRole::Time) {
        return Err(TransformError::NotCanonical(
            "time loop must be outermost".into(),
        ));
    }
    let t = &nest.loops[0].var;
    if nest.loops.iter().any(|l| l.references(t)) {
        return Err(TransformError::NotCanonical("nest is skewed".into()));
    }
    Ok(())
}

fn constant_extent(l: &Loop) -> Result<(i64, i64), TransformError> {
    match (l.lower.as_single(), l.upper.as_single()) {
        (Some(lo), Some(hi)) if lo.terms.is_empty() && hi.terms.is_empty() => {
            Ok((lo.constant, hi.constant))
        }
        _ => Err(TransformError::NotCanonical(format!(
            "loop `{}` has non-constant bounds",
            l.var
        ))),
    }
}

fn space_loops(nest: &LoopNest) -> Vec<&Loop> {
    let mut v: Vec<&Loop> = nest
        .loops
        .iter()
        .filter(|l| matches!(l.role, DimRole::Space(_)))
        .collect();
    v.sort_by_key(|l| match l.role {
        DimRole::Space(i) => i,
        DimRole::Time => 0,
    });
    v
}

/// Tiles the spatial loops of a canonical nest.
pub fn tile_space(
    nest: &LoopNest,
    sizes: &[usize],
    mode: SpaceTiling,
) -> Result<Schedule, TransformError> {
    check_canonical(nest)?;
    let spatial: Vec<Loop> = space_loops(nest).into_iter().cloned().collect();
    if sizes.len() != spatial.len() {
        return Err(TransformError::Arity {
            expected: spatial.len(),
            found: sizes.len(),
        });
    }
    if sizes.contains(&0) {
        return Err(TransformError::TileSize);
    }
    let time = nest.loops[0].clone();
    let tiled = match mode {
        SpaceTiling::MinMax => {
            let mut out = nest.clone();
            for l in &spatial {
                let DimRole::Space(i) = l.role else {
                    unreachable!()
                };
                out = strip_mine(&out, l.role, sizes[i])?;
            }
            let order: Vec<String> = std::iter::once(time.var.clone())
                .chain(spatial.iter().map(|l| tile_var(&l.var)))
                .chain(spatial.iter().map(|l| l.var.clone()))
                .collect();
            Schedule::from(permute(&out, &order)?)
        }
        SpaceTiling::Remainder => {
            let n = spatial.len();
            let mut masks: Vec<u32> = (0..1u32 << n).collect();
            // Fewest remainder dimensions first; ties in dimension order.
            masks.sort_by_key(|m| {
                let dims: Vec<usize> = (0..n).filter(|i| m & (1 << i) != 0).collect();
                (dims.len(), dims)
            });
            let mut nests = Vec::with_capacity(masks.len());
            for mask in masks {
                let mut tiles = Vec::new();
                let mut points = Vec::new();
                for (i, l) in spatial.iter().enumerate() {
                    let (lo, hi) = constant_extent(l)?;
                    let b = sizes[i] as i64;
                    let main_end = lo + (hi - lo) - (hi - lo) % b;
                    if mask & (1 << i) != 0 {
                        points.push(Loop::plain(
                            &l.var,
                            Bound::constant(main_end),
                            Bound::constant(hi),
                            l.role,
                        ));
                    } else {
                        let blk = tile_var(&l.var);
                        tiles.push(Loop {
                            var: blk.clone(),
                            lower: Bound::constant(lo),
                            upper: Bound::constant(main_end),
                            step: b,
                            kind: LoopKind::Tile,
                            role: l.role,
                            parallel: false,
                        });
                        points.push(Loop {
                            var: l.var.clone(),
                            lower: Bound::single(AffineExpr::var(&blk)),
                            upper: Bound::single(AffineExpr::var(&blk).plus_const(b)),
                            step: 1,
                            kind: LoopKind::Incremental,
                            role: l.role,
                            parallel: false,
                        });
                    }
                }
                let loops = std::iter::once(time.clone())
                    .chain(tiles)
                    .chain(points)
                    .collect();
                nests.push(LoopNest {
                    loops,
                    body: nest.body.clone(),
                });
            }
            Schedule::fused(nests)?
        }
    };
    mark_parallel_schedule(&tiled)
}

/// `Ok` iff the skew is at least the largest stencil radius.
pub fn check_legality(spec: &StencilSpec, plan: &TilePlan) -> Result<(), LegalityError> {
    let required = spec.min_skew_factor();
    if plan.skew < required {
        return Err(LegalityError {
            skew: plan.skew,
            required,
        });
    }
    Ok(())
}

/// Skews, strip-mines time and every spatial dimension, widens the spatial
/// tile loops to the whole skewed space and hoists them above the time
/// point loop: `t_blk, x1_blk..xn_blk, t, x1..xn`.
pub fn tile_time(
    nest: &LoopNest,
    spec: &StencilSpec,
    space: &IterationSpace,
    plan: &TilePlan,
) -> Result<LoopNest, TransformError> {
    plan.check(spec.ndims())?;
    check_legality(spec, plan)?;
    check_canonical(nest)?;
    let spatial: Vec<Loop> = space_loops(nest).into_iter().cloned().collect();
    if spatial.len() != plan.space_tiles.len() {
        return Err(TransformError::Arity {
            expected: spatial.len(),
            found: plan.space_tiles.len(),
        });
    }
    let time = nest.loops[0].clone();
    let (t_lo, t_hi) = constant_extent(&time)?;
    debug_assert_eq!(t_hi - t_lo, space.time_steps() as i64);

    let mut out = skew(nest, plan.skew)?.nest;
    out = strip_mine(&out, DimRole::Time, plan.time_tile)?;
    for l in &spatial {
        let DimRole::Space(i) = l.role else {
            unreachable!()
        };
        out = strip_mine(&out, l.role, plan.space_tiles[i])?;
    }
    // Tile loops must not depend on `t` once hoisted above it: take the hull
    // of the skewed range over the whole time extent.
    let lo_t = AffineExpr::constant(t_lo);
    let hi_t = AffineExpr::constant(t_hi);
    for l in out.loops.iter_mut() {
        if l.kind == LoopKind::Tile && matches!(l.role, DimRole::Space(_)) {
            l.lower = l.lower.map(|e| e.substitute(&time.var, &lo_t));
            l.upper = l.upper.map(|e| e.substitute(&time.var, &hi_t));
        }
    }
    let order: Vec<String> = std::iter::once(tile_var(&time.var))
        .chain(spatial.iter().map(|l| tile_var(&l.var)))
        .chain(std::iter::once(time.var.clone()))
        .chain(spatial.iter().map(|l| l.var.clone()))
        .collect();
    let out = permute(&out, &order)?;
    mark_parallel(&out)
}

/// Sets parallel flags from the nest's structure:
///
/// * time loops are never parallel;
/// * space-tiled: the spatial tile loops;
/// * time-tiled: the outermost spatial point loop (tile loops carry
///   dependences across tiles);
/// * untiled: the outermost spatial loop.
pub fn mark_parallel(nest: &LoopNest) -> Result<LoopNest, TransformError> {
    let mut out = nest.clone();
    for l in out.loops.iter_mut() {
        l.parallel = false;
    }
    let time_pos = out
        .loops
        .iter()
        .position(|l| l.role == DimRole::Time && l.is_point_loop())
        .ok_or_else(|| TransformError::Unrecognized("no time loop".into()))?;
    let is_space = |l: &Loop| matches!(l.role, DimRole::Space(_));

    if out.time_tile_loop().is_some() {
        let first_point = out
            .loops
            .iter()
            .position(|l| is_space(l) && l.is_point_loop())
            .ok_or_else(|| {
                TransformError::Unrecognized("time-tiled nest without spatial loops".into())
            })?;
        if first_point < time_pos {
            return Err(TransformError::Unrecognized(
                "spatial point loop outside the time point loop".into(),
            ));
        }
        out.loops[first_point].parallel = true;
    } else if out.has_space_tiles() {
        if out
            .loops
            .iter()
            .position(is_space)
            .is_some_and(|p| p < time_pos)
        {
            return Err(TransformError::Unrecognized(
                "spatial loop outside the time loop".into(),
            ));
        }
        for l in out.loops.iter_mut() {
            if is_space(l) && l.kind == LoopKind::Tile {
                l.parallel = true;
            }
        }
    } else {
        let first = out
            .loops
            .iter()
            .position(is_space)
            .ok_or_else(|| TransformError::Unrecognized("no spatial loops".into()))?;
        if first < time_pos {
            return Err(TransformError::Unrecognized(
                "spatial loop outside the time loop".into(),
            ));
        }
        out.loops[first].parallel = true;
    }
    Ok(out)
}

pub fn mark_parallel_schedule(schedule: &Schedule) -> Result<Schedule, TransformError> {
    let nests = schedule
        .nests
        .iter()
        .map(mark_parallel)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Schedule::fused(nests)?)
}

/// The schedule a CLI/tuner `mode` denotes, built from the canonical nest.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    None,
    Space,
    SpaceRemainder,
    Time,
}

pub fn build_variant(
    spec: &StencilSpec,
    space: &IterationSpace,
    variant: Variant,
    plan: &TilePlan,
) -> Result<Schedule, TransformError> {
    let canonical = ir::build_canonical_nest(spec, space);
    match variant {
        Variant::None => Ok(Schedule::from(mark_parallel(&canonical)?)),
        Variant::Space => {
            plan.check(spec.ndims())?;
            tile_space(&canonical, &plan.space_tiles, SpaceTiling::MinMax)
        }
        Variant::SpaceRemainder => {
            plan.check(spec.ndims())?;
            tile_space(&canonical, &plan.space_tiles, SpaceTiling::Remainder)
        }
        Variant::Time => Ok(Schedule::from(tile_time(&canonical, spec, space, plan)?)),
    }
}
