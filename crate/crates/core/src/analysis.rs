//! Arithmetic-intensity estimators and the roofline model.
//!
//! Estimator internals count elements; every AI figure returned is in flops
//! per byte at four bytes per element. Spatial dimensions are taken in loop
//! order, outermost first, the same order `tile_time` emits.

use serde::{Deserialize, Serialize};

use crate::model::{IterationSpace, MachineProfile, ModelError, StencilSpec, TilePlan, ELEM_BYTES};

/// Which branch of the tight bound applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TightCase {
    /// No face exceeds the cache.
    Empty,
    /// Only the outermost face exceeds the cache.
    F1Only,
    /// `limiting_dim` (1-based) is the innermost dimension whose face exceeds
    /// the cache; faces of all outer dimensions are reloaded.
    Multi { limiting_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceAnalysis {
    pub face_sizes: Vec<u64>,
    pub boundary_fracs: Vec<f64>,
    pub union_frac: f64,
    pub case: TightCase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityEstimate {
    pub flops_per_point: usize,
    pub bytes_per_point: f64,
    pub ai_spatial: f64,
    pub ai_naive_tt: f64,
    pub ai_tight_tt: f64,
    pub divisor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightBound {
    pub estimate: IntensityEstimate,
    pub faces: FaceAnalysis,
}

/// Compulsory traffic per point: `δ_t` levels read and one written.
pub fn bytes_per_point(spec: &StencilSpec) -> f64 {
    ((spec.time_depth() + 1) * ELEM_BYTES) as f64
}

pub fn ai_spatial(spec: &StencilSpec, _space: &IterationSpace) -> f64 {
    spec.flops_per_point() as f64 / bytes_per_point(spec)
}

/// Scales a spatially tiled intensity by the time tile.
pub fn naive_time_tiled(ai_spatial: f64, time_tile: usize) -> f64 {
    ai_spatial * time_tile as f64
}

pub fn ai_naive_tt(spec: &StencilSpec, space: &IterationSpace, time_tile: usize) -> f64 {
    naive_time_tiled(ai_spatial(spec, space), time_tile)
}

/// Size in elements of the overlap between neighbouring tiles along each
/// dimension, scaled by the time tile.
pub fn face_sizes(
    spec: &StencilSpec,
    space: &IterationSpace,
    plan: &TilePlan,
) -> Result<Vec<u64>, ModelError> {
    plan.check(spec.ndims())?;
    let d = space.extents();
    let t = &plan.space_tiles;
    Ok((0..spec.ndims())
        .map(|i| {
            let outer: u64 = t[..i].iter().map(|&x| x as u64).product();
            let inner: u64 = d[i + 1..].iter().map(|&x| x as u64).product();
            plan.time_tile as u64 * 2 * outer * spec.radii()[i] as u64 * inner
        })
        .collect())
}

/// Fraction of the space lying on a tile boundary along each dimension.
pub fn boundary_fracs(
    spec: &StencilSpec,
    space: &IterationSpace,
    plan: &TilePlan,
) -> Result<Vec<f64>, ModelError> {
    plan.check(spec.ndims())?;
    Ok(space
        .extents()
        .iter()
        .zip(&plan.space_tiles)
        .zip(spec.radii())
        .map(|((&d, &t), &r)| (2.0 * (r as f64 / d as f64) * (d / t) as f64).min(1.0))
        .collect())
}

/// Union of evenly distributed subsets given their fractions.
pub fn union_frac(fracs: &[f64]) -> f64 {
    1.0 - fracs.iter().map(|f| 1.0 - f).product::<f64>()
}

pub fn face_analysis(
    spec: &StencilSpec,
    space: &IterationSpace,
    plan: &TilePlan,
    cache_elems: usize,
) -> Result<FaceAnalysis, ModelError> {
    let face_sizes = face_sizes(spec, space, plan)?;
    let boundary_fracs = boundary_fracs(spec, space, plan)?;
    let omega = cache_elems as u64;
    let limiting = face_sizes.iter().rposition(|&f| f >= omega);
    let (case, union) = match limiting {
        None => (TightCase::Empty, 0.0),
        Some(0) => {
            let d1 = space.extents()[0];
            let reloaded = (face_sizes[0] - omega) * (d1 / plan.space_tiles[0]) as u64;
            let frac = (reloaded as f64 / space.points_per_level() as f64).min(1.0);
            (TightCase::F1Only, frac)
        }
        Some(i) => (
            TightCase::Multi {
                limiting_dim: i + 1,
            },
            union_frac(&boundary_fracs[..i]),
        ),
    };
    Ok(FaceAnalysis {
        face_sizes,
        boundary_fracs,
        union_frac: union,
        case,
    })
}

/// The naive estimate divided by one plus the fraction of data that has to
/// be reloaded because its face does not fit in a cache of `cache_elems`.
pub fn tight_bound(
    spec: &StencilSpec,
    space: &IterationSpace,
    plan: &TilePlan,
    cache_elems: usize,
) -> Result<TightBound, ModelError> {
    let faces = face_analysis(spec, space, plan, cache_elems)?;
    let spatial = ai_spatial(spec, space);
    let naive = naive_time_tiled(spatial, plan.time_tile);
    let divisor = 1.0 + faces.union_frac;
    Ok(TightBound {
        estimate: IntensityEstimate {
            flops_per_point: spec.flops_per_point(),
            bytes_per_point: bytes_per_point(spec),
            ai_spatial: spatial,
            ai_naive_tt: naive,
            ai_tight_tt: naive / divisor,
            divisor,
        },
        faces,
    })
}

/// Attainable GFlop/s at intensity `ai` (flops/byte).
pub fn roofline_bound(profile: &MachineProfile, ai: f64) -> f64 {
    profile.peak_gflops.min(profile.bandwidth_gbs * ai)
}

pub fn ridge_point(profile: &MachineProfile) -> f64 {
    profile.peak_gflops / profile.bandwidth_gbs
}
