#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stencil_tiler::executor::{execute, init_grid, ExecOptions, Grid};
use stencil_tiler::model::{parse_spec, IterationSpace, StencilSpec, StencilTerm, TilePlan};
use stencil_tiler::Schedule;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn corpus() -> Vec<(String, StencilSpec, IterationSpace)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "stencil"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let (spec, space) = parse_spec(&std::fs::read_to_string(&p).unwrap()).unwrap();
            (
                p.file_stem().unwrap().to_string_lossy().into_owned(),
                spec,
                space,
            )
        })
        .collect()
}

pub struct Case {
    pub spec: StencilSpec,
    pub space: IterationSpace,
    pub plans: Vec<TilePlan>,
}

/// A random stencil with `ndims` spatial dimensions: radii up to 4, up to two
/// earlier time levels, at most nine terms whose coefficient magnitudes sum
/// to at most one.
pub fn random_spec(rng: &mut ChaCha8Rng, ndims: usize) -> StencilSpec {
    let depth = rng.gen_range(1..=2usize);
    let radii: Vec<i64> = (0..ndims).map(|_| rng.gen_range(0..=4)).collect();
    let k = rng.gen_range(1..=9usize);
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum::<f64>() * rng.gen_range(1.0..1.25);
    let mut terms: Vec<StencilTerm> = weights
        .iter()
        .map(|w| {
            let sign = if rng.gen_bool(0.2) { -1.0 } else { 1.0 };
            let offsets = radii.iter().map(|&r| rng.gen_range(-r..=r)).collect();
            StencilTerm::new((sign * w / total) as f32, rng.gen_range(1..=depth), offsets)
        })
        .collect();
    terms[rng.gen_range(0..k)].dt = depth;
    StencilSpec::new(format!("rand{ndims}d"), ndims, terms).unwrap()
}

pub fn random_space(rng: &mut ChaCha8Rng, ndims: usize) -> IterationSpace {
    let max = 32;
    let extents = (0..ndims).map(|_| rng.gen_range(3..=max)).collect();
    IterationSpace::new(rng.gen_range(1..=8), extents).unwrap()
}

/// Plans at the minimum legal skew for every `t_t ∈ {1, 2, 4}`, tiles mixing
/// dividing, non-dividing and oversized choices.
pub fn random_plans(
    rng: &mut ChaCha8Rng,
    spec: &StencilSpec,
    space: &IterationSpace,
) -> Vec<TilePlan> {
    [1, 2, 4]
        .into_iter()
        .map(|tt| {
            let tiles = space
                .extents()
                .iter()
                .map(|&d| {
                    let divisors: Vec<usize> = (1..=d).filter(|t| d % t == 0).collect();
                    match rng.gen_range(0..3) {
                        0 => *divisors.choose(rng).unwrap(),
                        1 => rng.gen_range(1..=d),
                        _ => d + rng.gen_range(0..4),
                    }
                })
                .collect();
            TilePlan::new(spec.min_skew_factor(), tt, tiles)
        })
        .collect()
}

pub fn suite(count: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let ndims = 1 + i % 3;
            let spec = random_spec(&mut rng, ndims);
            let space = random_space(&mut rng, ndims);
            let plans = random_plans(&mut rng, &spec, &space);
            Case { spec, space, plans }
        })
        .collect()
}

pub fn run_with(
    schedule: &Schedule,
    spec: &StencilSpec,
    space: &IterationSpace,
    seed: u64,
    slots: usize,
    reverse_parallel: bool,
) -> Grid {
    let grid = init_grid(spec, space, seed, slots).unwrap();
    execute(
        schedule,
        spec,
        space,
        grid,
        ExecOptions { reverse_parallel },
    )
    .unwrap()
    .0
}

pub fn run(schedule: &Schedule, spec: &StencilSpec, space: &IterationSpace, seed: u64) -> Grid {
    run_with(
        schedule,
        spec,
        space,
        seed,
        schedule.required_slots(spec),
        false,
    )
}
