//! Stencil domain types: the update rule, the iteration space it sweeps, tile
//! plans and machine profiles, plus the handful of quantities derived from
//! them (radii, minimum skew, buffer depth, flop count).
//!
//! A stencil file is line oriented:
//!
//! ```text
//! stencil lap1
//! dims 1
//! extent 64
//! steps 8
//! term 0.25 1 -1
//! term 0.5  1  0
//! term 0.25 1  1
//! ```
//!
//! `#` starts a comment. The order of `term` lines is the evaluation order of
//! the update and is preserved exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes per grid element. Everything is single precision.
pub const ELEM_BYTES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("a stencil needs at least one spatial dimension")]
    NoDimensions,
    #[error("a stencil needs at least one term")]
    NoTerms,
    #[error("term {index} has {found} offsets, expected {expected}")]
    OffsetArity {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("term {index} reads time distance {dt}; reads must reach at least one level back")]
    TimeDistance { index: usize, dt: usize },
    #[error("extent of dimension {dim} must be positive")]
    EmptyExtent { dim: usize },
    #[error("time step count must be positive")]
    NoTimeSteps,
    #[error("tile plan has {found} spatial tile sizes, expected {expected}")]
    PlanArity { found: usize, expected: usize },
    #[error("tile sizes must be at least 1")]
    ZeroTile,
    #[error("machine profile values must be positive")]
    Profile,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// The discretised domain: `time_steps` updates over a box of `extents`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationSpace {
    time_steps: usize,
    extents: Vec<usize>,
}

impl IterationSpace {
    pub fn new(time_steps: usize, extents: Vec<usize>) -> Result<Self, ModelError> {
        if extents.is_empty() {
            return Err(ModelError::NoDimensions);
        }
        if time_steps == 0 {
            return Err(ModelError::NoTimeSteps);
        }
        if let Some(dim) = extents.iter().position(|&e| e == 0) {
            return Err(ModelError::EmptyExtent { dim });
        }
        Ok(Self {
            time_steps,
            extents,
        })
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn ndims(&self) -> usize {
        self.extents.len()
    }

    /// Number of points in one time level.
    pub fn points_per_level(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn total_points(&self) -> usize {
        self.time_steps * self.points_per_level()
    }
}

/// One weighted read: `coeff * A[t - dt][x + offsets]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilTerm {
    pub coeff: f32,
    pub dt: usize,
    pub offsets: Vec<i64>,
}

impl StencilTerm {
    pub fn new(coeff: f32, dt: usize, offsets: Vec<i64>) -> Self {
        Self { coeff, dt, offsets }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilSpec {
    name: String,
    ndims: usize,
    terms: Vec<StencilTerm>,
    time_depth: usize,
    radii: Vec<usize>,
}

impl StencilSpec {
    pub fn new(
        name: impl Into<String>,
        ndims: usize,
        terms: Vec<StencilTerm>,
    ) -> Result<Self, ModelError> {
        if ndims == 0 {
            return Err(ModelError::NoDimensions);
        }
        if terms.is_empty() {
            return Err(ModelError::NoTerms);
        }
        let mut radii = vec![0usize; ndims];
        let mut time_depth = 0;
        for (index, term) in terms.iter().enumerate() {
            if term.offsets.len() != ndims {
                return Err(ModelError::OffsetArity {
                    index,
                    found: term.offsets.len(),
                    expected: ndims,
                });
            }
            if term.dt == 0 {
                return Err(ModelError::TimeDistance { index, dt: term.dt });
            }
            time_depth = time_depth.max(term.dt);
            for (r, off) in radii.iter_mut().zip(&term.offsets) {
                *r = (*r).max(off.unsigned_abs() as usize);
            }
        }
        Ok(Self {
            name: name.into(),
            ndims,
            terms,
            time_depth,
            radii,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ndims(&self) -> usize {
        self.ndims
    }

    /// Terms in evaluation order.
    pub fn terms(&self) -> &[StencilTerm] {
        &self.terms
    }

    /// Number of earlier time levels read, `δ_t`.
    pub fn time_depth(&self) -> usize {
        self.time_depth
    }

    /// Furthest spatial dependence per dimension, `δ_i`.
    pub fn radii(&self) -> &[usize] {
        &self.radii
    }

    /// Smallest uniform skew that makes time tiles legal: the largest radius.
    pub fn min_skew_factor(&self) -> usize {
        self.radii.iter().copied().max().unwrap_or(0)
    }

    /// Time levels that must be resident when `time_tile` levels are computed
    /// per tile: the `δ_t` dependencies plus the tile itself.
    pub fn time_buffer_slots(&self, time_tile: usize) -> usize {
        self.time_depth + time_tile
    }

    /// `k` multiplies and `k - 1` adds.
    pub fn flops_per_point(&self) -> usize {
        2 * self.terms.len() - 1
    }
}

/// Skew factor plus time and spatial tile sizes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TilePlan {
    pub skew: usize,
    pub time_tile: usize,
    pub space_tiles: Vec<usize>,
}

impl TilePlan {
    pub fn new(skew: usize, time_tile: usize, space_tiles: Vec<usize>) -> Self {
        Self {
            skew,
            time_tile,
            space_tiles,
        }
    }

    pub fn check(&self, ndims: usize) -> Result<(), ModelError> {
        if self.space_tiles.len() != ndims {
            return Err(ModelError::PlanArity {
                found: self.space_tiles.len(),
                expected: ndims,
            });
        }
        if self.time_tile == 0 || self.space_tiles.contains(&0) {
            return Err(ModelError::ZeroTile);
        }
        Ok(())
    }

    /// Tie-break key used by the tuner: `(t_t, t_1, ..., t_n)`.
    pub fn sort_key(&self) -> Vec<usize> {
        std::iter::once(self.time_tile)
            .chain(self.space_tiles.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineProfile {
    pub peak_gflops: f64,
    pub bandwidth_gbs: f64,
    pub cache_elems: usize,
    pub elem_bytes: usize,
}

impl MachineProfile {
    pub fn new(
        peak_gflops: f64,
        bandwidth_gbs: f64,
        cache_elems: usize,
    ) -> Result<Self, ModelError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(peak_gflops) || !positive(bandwidth_gbs) || cache_elems == 0 {
            return Err(ModelError::Profile);
        }
        Ok(Self {
            peak_gflops,
            bandwidth_gbs,
            cache_elems,
            elem_bytes: ELEM_BYTES,
        })
    }
}

/// Parses a stencil file into the update rule and the space it runs over.
pub fn parse_spec(text: &str) -> Result<(StencilSpec, IterationSpace), ParseError> {
    let mut name: Option<String> = None;
    let mut dims: Option<(usize, usize)> = None;
    let mut extent: Option<(usize, Vec<usize>)> = None;
    let mut steps: Option<usize> = None;
    let mut terms: Vec<(usize, StencilTerm)> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        let args: Vec<&str> = tokens.collect();

        if name.is_none() && keyword != "stencil" {
            return Err(ParseError::new(
                line,
                "file must start with `stencil <name>`",
            ));
        }
        match keyword {
            "stencil" => {
                if name.is_some() {
                    return Err(ParseError::new(line, "duplicate `stencil` line"));
                }
                let [id] = args.as_slice() else {
                    return Err(ParseError::new(line, "expected `stencil <name>`"));
                };
                if !is_identifier(id) {
                    return Err(ParseError::new(
                        line,
                        format!("`{id}` is not an identifier"),
                    ));
                }
                name = Some((*id).to_string());
            }
            "dims" => {
                if dims.is_some() {
                    return Err(ParseError::new(line, "duplicate `dims` line"));
                }
                let [n] = args.as_slice() else {
                    return Err(ParseError::new(line, "expected `dims <n>`"));
                };
                let n = parse_count(n, line)?;
                if n == 0 {
                    return Err(ParseError::new(line, "dims must be at least 1"));
                }
                dims = Some((line, n));
            }
            "extent" => {
                if extent.is_some() {
                    return Err(ParseError::new(line, "duplicate `extent` line"));
                }
                if args.is_empty() {
                    return Err(ParseError::new(line, "expected `extent <D_1> ... <D_n>`"));
                }
                let values = args
                    .iter()
                    .map(|a| parse_count(a, line))
                    .collect::<Result<Vec<_>, _>>()?;
                if values.contains(&0) {
                    return Err(ParseError::new(line, "extents must be positive"));
                }
                extent = Some((line, values));
            }
            "steps" => {
                if steps.is_some() {
                    return Err(ParseError::new(line, "duplicate `steps` line"));
                }
                let [d] = args.as_slice() else {
                    return Err(ParseError::new(line, "expected `steps <D_t>`"));
                };
                let d = parse_count(d, line)?;
                if d == 0 {
                    return Err(ParseError::new(line, "steps must be positive"));
                }
                steps = Some(d);
            }
            "term" => {
                if args.len() < 3 {
                    return Err(ParseError::new(
                        line,
                        "expected `term <coeff> <dt> <offsets...>`",
                    ));
                }
                let coeff: f32 = args[0]
                    .parse()
                    .map_err(|_| ParseError::new(line, format!("bad coefficient `{}`", args[0])))?;
                if !coeff.is_finite() {
                    return Err(ParseError::new(line, "coefficient must be finite"));
                }
                let dt = parse_count(args[1], line)?;
                if dt == 0 {
                    return Err(ParseError::new(
                        line,
                        "term time distance must be at least 1",
                    ));
                }
                let offsets = args[2..]
                    .iter()
                    .map(|a| {
                        a.parse::<i64>()
                            .map_err(|_| ParseError::new(line, format!("bad offset `{a}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                terms.push((line, StencilTerm { coeff, dt, offsets }));
            }
            other => {
                return Err(ParseError::new(
                    line,
                    format!("unknown directive `{other}`"),
                ));
            }
        }
    }

    let end = last_line.max(1);
    let name = name.ok_or_else(|| ParseError::new(end, "missing `stencil` line"))?;
    let (_, ndims) = dims.ok_or_else(|| ParseError::new(end, "missing `dims` line"))?;
    let (extent_line, extents) =
        extent.ok_or_else(|| ParseError::new(end, "missing `extent` line"))?;
    let steps = steps.ok_or_else(|| ParseError::new(end, "missing `steps` line"))?;
    if extents.len() != ndims {
        return Err(ParseError::new(
            extent_line,
            format!("extent lists {} values for {} dims", extents.len(), ndims),
        ));
    }
    if terms.is_empty() {
        return Err(ParseError::new(end, "stencil has no terms"));
    }
    for (line, term) in &terms {
        if term.offsets.len() != ndims {
            return Err(ParseError::new(
                *line,
                format!("term has {} offsets for {} dims", term.offsets.len(), ndims),
            ));
        }
    }

    let spec = StencilSpec::new(name, ndims, terms.into_iter().map(|(_, t)| t).collect())
        .map_err(|e| ParseError::new(end, e.to_string()))?;
    let space =
        IterationSpace::new(steps, extents).map_err(|e| ParseError::new(end, e.to_string()))?;
    Ok((spec, space))
}

fn parse_count(token: &str, line: usize) -> Result<usize, ParseError> {
    token.parse::<usize>().map_err(|_| {
        ParseError::new(
            line,
            format!("expected a non-negative integer, found `{token}`"),
        )
    })
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
