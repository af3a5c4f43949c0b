//! Exhaustive search over tile sizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache_sim::{simulate, CacheConfig, SimError};
use crate::executor::{execute, init_grid, ExecError, ExecOptions};
use crate::model::{IterationSpace, StencilSpec, TilePlan};
use crate::transforms::{build_variant, check_legality, LegalityError, TransformError, Variant};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TuneError {
    #[error("search space is empty")]
    Empty,
    #[error(transparent)]
    Illegal(#[from] LegalityError),
    #[error("plan {plan:?}: {source}")]
    Transform {
        plan: TilePlan,
        source: TransformError,
    },
    #[error("plan {plan:?}: {source}")]
    Sim { plan: TilePlan, source: SimError },
    #[error("plan {plan:?}: {source}")]
    Exec { plan: TilePlan, source: ExecError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub time_tile_candidates: Vec<usize>,
    pub space_tile_candidates: Vec<Vec<usize>>,
    pub skew: usize,
    pub trials: usize,
    /// Time-tiled plans by default; a spatial variant ignores the time tile.
    pub variant: Variant,
}

impl SearchSpace {
    pub fn default_for(spec: &StencilSpec, space: &IterationSpace) -> Self {
        let time_tile_candidates = [1, 2, 4, 8, 16]
            .into_iter()
            .filter(|&t| t <= space.time_steps())
            .collect();
        let n = space.ndims();
        let space_tile_candidates = space
            .extents()
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let mut sizes: Vec<usize> =
                    std::iter::successors(Some(2usize), |p| p.checked_mul(2))
                        .take_while(|&p| p <= d)
                        .collect();
                if (i + 1 == n || sizes.is_empty()) && !sizes.contains(&d) {
                    sizes.push(d);
                }
                sizes
            })
            .collect();
        Self {
            time_tile_candidates,
            space_tile_candidates,
            skew: spec.min_skew_factor(),
            trials: 1,
            variant: Variant::Time,
        }
    }

    /// Every plan in the Cartesian product, in lexicographic
    /// `(t_t, t_1, ..., t_n)` order.
    pub fn plans(&self) -> Vec<TilePlan> {
        let times: Vec<usize> = if self.variant == Variant::Time {
            self.time_tile_candidates.clone()
        } else {
            vec![1]
        };
        let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
        for cands in &self.space_tile_candidates {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    cands.iter().map(move |&c| {
                        let mut p = prefix.clone();
                        p.push(c);
                        p
                    })
                })
                .collect();
        }
        let mut plans: Vec<TilePlan> = times
            .iter()
            .flat_map(|&t| {
                combos
                    .iter()
                    .map(move |c| TilePlan::new(self.skew, t, c.clone()))
            })
            .collect();
        plans.sort_by_key(TilePlan::sort_key);
        plans.dedup();
        plans
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cost {
    /// Bytes moved through a simulated cache.
    SimTraffic(CacheConfig),
    /// Best wall-clock seconds of the interpreter over the trials.
    WallTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneEntry {
    pub plan: TilePlan,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_plan: TilePlan,
    pub best_cost: f64,
    pub table: Vec<TuneEntry>,
}

fn evaluate(
    spec: &StencilSpec,
    space: &IterationSpace,
    search: &SearchSpace,
    cost: &Cost,
    plan: &TilePlan,
) -> Result<f64, TuneError> {
    let schedule = build_variant(spec, space, search.variant, plan).map_err(|source| {
        TuneError::Transform {
            plan: plan.clone(),
            source,
        }
    })?;
    match cost {
        Cost::SimTraffic(cache) => simulate(&schedule, spec, space, cache)
            .map(|r| r.bytes as f64)
            .map_err(|source| TuneError::Sim {
                plan: plan.clone(),
                source,
            }),
        Cost::WallTime => {
            let exec_err = |source| TuneError::Exec {
                plan: plan.clone(),
                source,
            };
            let slots = schedule.required_slots(spec);
            let mut best = f64::INFINITY;
            for _ in 0..search.trials.max(1) {
                let grid = init_grid(spec, space, 0, slots).map_err(exec_err)?;
                let (_, report) = execute(&schedule, spec, space, grid, ExecOptions::default())
                    .map_err(exec_err)?;
                best = best.min(report.wall_seconds);
            }
            Ok(best)
        }
    }
}

/// Evaluates every plan in `search` and returns the cheapest one. Ties go to
/// the lexicographically smallest `(t_t, t_1, ..., t_n)`.
///
/// Simulated costs are evaluated concurrently; timed runs go one at a time
/// so they do not compete for cores.
pub fn tune(
    spec: &StencilSpec,
    space: &IterationSpace,
    search: &SearchSpace,
    cost: &Cost,
) -> Result<TuneResult, TuneError> {
    let plans = search.plans();
    if plans.is_empty() || search.space_tile_candidates.len() != spec.ndims() {
        return Err(TuneError::Empty);
    }
    check_legality(spec, &plans[0])?;
    let eval = |plan: &TilePlan| {
        evaluate(spec, space, search, cost, plan).map(|c| TuneEntry {
            plan: plan.clone(),
            cost: c,
        })
    };
    let table: Vec<TuneEntry> = match cost {
        Cost::SimTraffic(_) => plans.par_iter().map(eval).collect::<Result<_, _>>()?,
        Cost::WallTime => plans.iter().map(eval).collect::<Result<_, _>>()?,
    };
    // `table` is already in tie-break order, so the first minimum wins.
    let best = table
        .iter()
        .fold(None::<&TuneEntry>, |acc, e| match acc {
            Some(b) if b.cost <= e.cost => Some(b),
            _ => Some(e),
        })
        .ok_or(TuneError::Empty)?;
    Ok(TuneResult {
        best_plan: best.plan.clone(),
        best_cost: best.cost,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_spec;

    fn heat1d() -> (StencilSpec, IterationSpace) {
        parse_spec(
            "stencil s\ndims 1\nextent 32\nsteps 8\nterm 0.25 1 -1\nterm 0.5 1 0\nterm 0.25 1 1",
        )
        .unwrap()
    }

    #[test]
    fn default_candidates() {
        let (spec, _) = heat1d();
        let space = IterationSpace::new(6, vec![20, 12]).unwrap();
        let s = SearchSpace::default_for(&spec, &space);
        assert_eq!(s.time_tile_candidates, vec![1, 2, 4]);
        assert_eq!(
            s.space_tile_candidates,
            vec![vec![2, 4, 8, 16], vec![2, 4, 8, 12]]
        );
        assert_eq!(s.skew, 1);
        let one = IterationSpace::new(1, vec![1]).unwrap();
        assert_eq!(
            SearchSpace::default_for(&spec, &one).space_tile_candidates,
            vec![vec![1]]
        );
    }

    #[test]
    fn plans_are_sorted_product() {
        let (spec, space) = heat1d();
        let mut s = SearchSpace::default_for(&spec, &space);
        s.time_tile_candidates = vec![4, 1];
        s.space_tile_candidates = vec![vec![8, 2, 32]];
        let keys: Vec<Vec<usize>> = s.plans().iter().map(TilePlan::sort_key).collect();
        assert_eq!(
            keys,
            vec![
                vec![1, 2],
                vec![1, 8],
                vec![1, 32],
                vec![4, 2],
                vec![4, 8],
                vec![4, 32]
            ]
        );
        s.variant = Variant::Space;
        assert_eq!(s.plans().len(), 3);
    }

    #[test]
    fn sim_traffic_matches_brute_force_argmin() {
        let (spec, space) = heat1d();
        let mut s = SearchSpace::default_for(&spec, &space);
        s.time_tile_candidates = vec![1, 2, 4];
        s.space_tile_candidates = vec![vec![4, 32]];
        let cache = CacheConfig::new(16, 1).unwrap();
        let result = tune(&spec, &space, &s, &Cost::SimTraffic(cache)).unwrap();
        assert_eq!(result.table.len(), 6);

        let mut best: Option<(u64, TilePlan)> = None;
        for t in [1, 2, 4] {
            for x in [4, 32] {
                let plan = TilePlan::new(1, t, vec![x]);
                let sched = build_variant(&spec, &space, Variant::Time, &plan).unwrap();
                let bytes = simulate(&sched, &spec, &space, &cache).unwrap().bytes;
                if best.as_ref().is_none_or(|(b, _)| bytes < *b) {
                    best = Some((bytes, plan));
                }
            }
        }
        let (bytes, plan) = best.unwrap();
        assert_eq!(result.best_plan, plan);
        assert_eq!(result.best_cost, bytes as f64);
        assert!(result.table.iter().all(|e| e.cost >= result.best_cost));
        assert_eq!(
            tune(&spec, &space, &s, &Cost::SimTraffic(cache)).unwrap(),
            result
        );
    }

    #[test]
    fn ties_go_to_smallest_plan() {
        // A cache holding everything makes every plan cost the same.
        let (spec, space) = heat1d();
        let mut s = SearchSpace::default_for(&spec, &space);
        s.time_tile_candidates = vec![1];
        s.space_tile_candidates = vec![vec![16, 8, 32]];
        let r = tune(
            &spec,
            &space,
            &s,
            &Cost::SimTraffic(CacheConfig::new(4096, 1).unwrap()),
        )
        .unwrap();
        assert!(r.table.iter().all(|e| e.cost == r.best_cost));
        assert_eq!(r.best_plan, TilePlan::new(1, 1, vec![8]));
    }

    #[test]
    fn wall_time_takes_min_of_trials() {
        let (spec, space) = heat1d();
        let mut s = SearchSpace::default_for(&spec, &space);
        s.time_tile_candidates = vec![2];
        s.space_tile_candidates = vec![vec![8]];
        s.trials = 3;
        let r = tune(&spec, &space, &s, &Cost::WallTime).unwrap();
        assert_eq!(r.table.len(), 1);
        assert!(r.best_cost >= 0.0 && r.best_cost.is_finite());
    }

    #[test]
    fn rejects_illegal_skew_and_empty_space() {
        let (spec, space) = heat1d();
        let mut s = SearchSpace::default_for(&spec, &space);
        s.skew = 0;
        assert!(matches!(
            tune(&spec, &space, &s, &Cost::WallTime),
            Err(TuneError::Illegal(_))
        ));
        s.skew = 1;
        s.space_tile_candidates = vec![vec![]];
        assert_eq!(
            tune(&spec, &space, &s, &Cost::WallTime),
            Err(TuneError::Empty)
        );
    }
}
