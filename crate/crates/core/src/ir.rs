//! Loop-nest IR: perfect nests whose bounds are integer affine expressions,
//! optionally wrapped in `max`/`min`, around a single stencil update.
//!
//! Upper bounds are exclusive everywhere. A [`Schedule`] is one nest or a
//! group of nests that share an identical outermost loop and run one after
//! another inside each iteration of it (remainder-loop tiling produces such
//! groups).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{IterationSpace, StencilSpec};

/// Default maximum number of body executions [`trace`] will materialise.
pub const DEFAULT_TRACE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("variable `{var}` is not bound by an enclosing loop ({context})")]
    Unbound { var: String, context: String },
    #[error("loop variable `{0}` is bound twice")]
    Duplicate(String),
    #[error("loop `{var}`: {message}")]
    BoundShape { var: String, message: String },
    #[error("loop `{var}` has step {step}; {message}")]
    Step {
        var: String,
        step: i64,
        message: String,
    },
    #[error("expected exactly one time loop, found {0}")]
    TimeLoops(usize),
    #[error("body has {found} reads but the stencil has {expected} terms")]
    ReadCount { found: usize, expected: usize },
    #[error("body indexes {found} spatial dimensions, expected {expected}")]
    IndexArity { found: usize, expected: usize },
    #[error("fused nests must share an identical outermost loop")]
    FusedOuterLoop,
    #[error("schedule contains no nests")]
    EmptySchedule,
    #[error("iteration count exceeds the cap of {0}")]
    CapExceeded(usize),
}

/// `constant + Σ coeff · var`, exact integer arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffineExpr {
    pub constant: i64,
    pub terms: Vec<(String, i64)>,
}

impl AffineExpr {
    pub fn constant(c: i64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(name: &str) -> Self {
        Self {
            constant: 0,
            terms: vec![(name.to_string(), 1)],
        }
    }

    pub fn coeff(&self, var: &str) -> i64 {
        self.terms
            .iter()
            .filter(|(v, _)| v == var)
            .map(|(_, c)| c)
            .sum()
    }

    pub fn references(&self, var: &str) -> bool {
        self.coeff(var) != 0
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.terms
            .iter()
            .filter(|(_, c)| *c != 0)
            .map(|(v, _)| v.as_str())
    }

    pub fn plus_const(mut self, c: i64) -> Self {
        self.constant += c;
        self
    }

    /// Adds `c · var`, merging with an existing term for `var`.
    pub fn plus_term(mut self, var: &str, c: i64) -> Self {
        if c == 0 {
            return self;
        }
        match self.terms.iter_mut().find(|(v, _)| v == var) {
            Some((_, existing)) => *existing += c,
            None => self.terms.push((var.to_string(), c)),
        }
        self.terms.retain(|(_, c)| *c != 0);
        self
    }

    pub fn plus(self, other: &AffineExpr) -> Self {
        let mut out = self.plus_const(other.constant);
        for (v, c) in &other.terms {
            out = out.plus_term(v, *c);
        }
        out
    }

    /// Replaces `var` by `replacement` everywhere.
    pub fn substitute(&self, var: &str, replacement: &AffineExpr) -> Self {
        let c = self.coeff(var);
        if c == 0 {
            return self.clone();
        }
        let mut out = AffineExpr {
            constant: self.constant,
            terms: self
                .terms
                .iter()
                .filter(|(v, _)| v != var)
                .cloned()
                .collect(),
        };
        out = out.plus_const(c * replacement.constant);
        for (v, rc) in &replacement.terms {
            out = out.plus_term(v, c * rc);
        }
        out
    }

    /// Evaluates under `lookup`; a missing variable is an error.
    pub fn eval(&self, lookup: impl Fn(&str) -> Option<i64>) -> Result<i64, IrError> {
        let mut acc = self.constant;
        for (v, c) in &self.terms {
            let value = lookup(v).ok_or_else(|| IrError::Unbound {
                var: v.clone(),
                context: "evaluation".into(),
            })?;
            acc += c * value;
        }
        Ok(acc)
    }
}

impl fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in self.terms.iter().filter(|(_, c)| *c != 0) {
            let (sign, mag) = if *c < 0 { ("-", -c) } else { ("+", *c) };
            match (first, sign) {
                (true, "-") => write!(f, "-")?,
                (true, _) => {}
                (false, s) => write!(f, " {s} ")?,
            }
            if mag == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{mag}*{v}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant > 0 {
            write!(f, " + {}", self.constant)
        } else if self.constant < 0 {
            write!(f, " - {}", -self.constant)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundKind {
    Single,
    MaxOf,
    MinOf,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bound {
    pub kind: BoundKind,
    pub exprs: Vec<AffineExpr>,
}

impl Bound {
    pub fn single(e: AffineExpr) -> Self {
        Self {
            kind: BoundKind::Single,
            exprs: vec![e],
        }
    }

    pub fn constant(c: i64) -> Self {
        Self::single(AffineExpr::constant(c))
    }

    pub fn max_of(exprs: Vec<AffineExpr>) -> Self {
        Self {
            kind: BoundKind::MaxOf,
            exprs,
        }
    }

    pub fn min_of(exprs: Vec<AffineExpr>) -> Self {
        Self {
            kind: BoundKind::MinOf,
            exprs,
        }
    }

    pub fn references(&self, var: &str) -> bool {
        self.exprs.iter().any(|e| e.references(var))
    }

    /// The single expression if this is not a max/min wrapper.
    pub fn as_single(&self) -> Option<&AffineExpr> {
        match self.kind {
            BoundKind::Single => self.exprs.first(),
            _ => None,
        }
    }

    pub fn map(&self, f: impl Fn(&AffineExpr) -> AffineExpr) -> Self {
        Self {
            kind: self.kind,
            exprs: self.exprs.iter().map(f).collect(),
        }
    }

    pub fn eval(&self, lookup: impl Fn(&str) -> Option<i64> + Copy) -> Result<i64, IrError> {
        let values = self
            .exprs
            .iter()
            .map(|e| e.eval(lookup))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(match self.kind {
            BoundKind::Single | BoundKind::MaxOf => values.into_iter().max(),
            BoundKind::MinOf => values.into_iter().min(),
        }
        .unwrap_or(0))
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            BoundKind::Single => return write!(f, "{}", self.exprs[0]),
            BoundKind::MaxOf => "max",
            BoundKind::MinOf => "min",
        };
        write!(f, "{name}(")?;
        for (i, e) in self.exprs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoopKind {
    Plain,
    Tile,
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DimRole {
    Time,
    Space(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Loop {
    pub var: String,
    /// Inclusive.
    pub lower: Bound,
    /// Exclusive.
    pub upper: Bound,
    pub step: i64,
    pub kind: LoopKind,
    pub role: DimRole,
    pub parallel: bool,
}

impl Loop {
    pub fn plain(var: &str, lower: Bound, upper: Bound, role: DimRole) -> Self {
        Self {
            var: var.to_string(),
            lower,
            upper,
            step: 1,
            kind: LoopKind::Plain,
            role,
            parallel: false,
        }
    }

    /// Loops that enumerate points rather than tiles.
    pub fn is_point_loop(&self) -> bool {
        self.kind != LoopKind::Tile
    }

    pub fn references(&self, var: &str) -> bool {
        self.lower.references(var) || self.upper.references(var)
    }
}

/// One array reference: a time index and one index per spatial dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Access {
    pub time: AffineExpr,
    pub space: Vec<AffineExpr>,
}

impl Access {
    pub fn map(&self, f: impl Fn(&AffineExpr) -> AffineExpr) -> Self {
        Self {
            time: f(&self.time),
            space: self.space.iter().map(f).collect(),
        }
    }

    fn exprs(&self) -> impl Iterator<Item = &AffineExpr> {
        std::iter::once(&self.time).chain(self.space.iter())
    }
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A[{}]", self.time)?;
        for e in &self.space {
            write!(f, "[{e}]")?;
        }
        Ok(())
    }
}

/// `target = Σ_k coeff_k · reads[k]`; reads are in stencil term order and
/// the coefficients live in the [`StencilSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Statement {
    pub target: Access,
    pub reads: Vec<Access>,
}

impl Statement {
    pub fn map(&self, f: impl Fn(&AffineExpr) -> AffineExpr + Copy) -> Self {
        Self {
            target: self.target.map(f),
            reads: self.reads.iter().map(|r| r.map(f)).collect(),
        }
    }

    fn accesses(&self) -> impl Iterator<Item = &Access> {
        std::iter::once(&self.target).chain(self.reads.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoopNest {
    /// Outermost first.
    pub loops: Vec<Loop>,
    pub body: Statement,
}

impl LoopNest {
    pub fn position(&self, var: &str) -> Option<usize> {
        self.loops.iter().position(|l| l.var == var)
    }

    /// The loop enumerating time points (plain or incremental).
    pub fn time_loop(&self) -> Option<&Loop> {
        self.loops
            .iter()
            .find(|l| l.role == DimRole::Time && l.is_point_loop())
    }

    pub fn time_tile_loop(&self) -> Option<&Loop> {
        self.loops
            .iter()
            .find(|l| l.role == DimRole::Time && l.kind == LoopKind::Tile)
    }

    pub fn has_space_tiles(&self) -> bool {
        self.loops
            .iter()
            .any(|l| matches!(l.role, DimRole::Space(_)) && l.kind == LoopKind::Tile)
    }
}

/// Spatial loop variable names: `x`, `y`, `z`, then `x3`, `x4`, ...
pub fn space_var(dim: usize, ndims: usize) -> String {
    const NAMES: [&str; 3] = ["x", "y", "z"];
    if ndims <= NAMES.len() {
        NAMES[dim].to_string()
    } else {
        format!("x{dim}")
    }
}

pub const TIME_VAR: &str = "t";

/// Tile-loop variable for a point-loop variable.
pub fn tile_var(var: &str) -> String {
    format!("{var}_blk")
}

/// `t` outermost, then one plain loop per spatial dimension in declaration
/// order. The body writes level `t + δ_t`; the first `δ_t` levels are the
/// initial condition.
pub fn build_canonical_nest(spec: &StencilSpec, space: &IterationSpace) -> LoopNest {
    let n = spec.ndims();
    let depth = spec.time_depth() as i64;
    let mut loops = vec![Loop::plain(
        TIME_VAR,
        Bound::constant(0),
        Bound::constant(space.time_steps() as i64),
        DimRole::Time,
    )];
    let vars: Vec<String> = (0..n).map(|i| space_var(i, n)).collect();
    for (i, var) in vars.iter().enumerate() {
        loops.push(Loop::plain(
            var,
            Bound::constant(0),
            Bound::constant(space.extents()[i] as i64),
            DimRole::Space(i),
        ));
    }
    let t = AffineExpr::var(TIME_VAR);
    let target = Access {
        time: t.clone().plus_const(depth),
        space: vars.iter().map(|v| AffineExpr::var(v)).collect(),
    };
    let reads = spec
        .terms()
        .iter()
        .map(|term| Access {
            time: t.clone().plus_const(depth - term.dt as i64),
            space: vars
                .iter()
                .zip(&term.offsets)
                .map(|(v, off)| AffineExpr::var(v).plus_const(*off))
                .collect(),
        })
        .collect();
    LoopNest {
        loops,
        body: Statement { target, reads },
    }
}

/// Checks scoping, bound shapes, steps and the single-time-loop rule.
pub fn validate(nest: &LoopNest) -> Result<(), IrError> {
    let mut bound: HashSet<&str> = HashSet::new();
    for l in &nest.loops {
        if bound.contains(l.var.as_str()) {
            return Err(IrError::Duplicate(l.var.clone()));
        }
        check_bound_shape(l)?;
        for e in l.lower.exprs.iter().chain(&l.upper.exprs) {
            if let Some(v) = e.vars().find(|v| !bound.contains(v)) {
                return Err(IrError::Unbound {
                    var: v.to_string(),
                    context: format!("bounds of loop `{}`", l.var),
                });
            }
        }
        if l.step < 1 {
            return Err(IrError::Step {
                var: l.var.clone(),
                step: l.step,
                message: "steps must be positive".into(),
            });
        }
        if l.kind != LoopKind::Tile && l.step != 1 {
            return Err(IrError::Step {
                var: l.var.clone(),
                step: l.step,
                message: "only tile loops may stride".into(),
            });
        }
        bound.insert(&l.var);
    }

    for tile in nest.loops.iter().filter(|l| l.kind == LoopKind::Tile) {
        check_tile_step(nest, tile)?;
    }

    let time_loops = nest
        .loops
        .iter()
        .filter(|l| l.role == DimRole::Time && l.is_point_loop())
        .count();
    if time_loops != 1 {
        return Err(IrError::TimeLoops(time_loops));
    }

    for access in nest.body.accesses() {
        for e in access.exprs() {
            if let Some(v) = e.vars().find(|v| !bound.contains(v)) {
                return Err(IrError::Unbound {
                    var: v.to_string(),
                    context: "loop body".into(),
                });
            }
        }
    }
    let n = nest.body.target.space.len();
    if let Some(bad) = nest.body.reads.iter().find(|r| r.space.len() != n) {
        return Err(IrError::IndexArity {
            found: bad.space.len(),
            expected: n,
        });
    }
    Ok(())
}

/// Validates a nest against the stencil it is meant to evaluate.
pub fn validate_for(nest: &LoopNest, spec: &StencilSpec) -> Result<(), IrError> {
    validate(nest)?;
    if nest.body.reads.len() != spec.terms().len() {
        return Err(IrError::ReadCount {
            found: nest.body.reads.len(),
            expected: spec.terms().len(),
        });
    }
    if nest.body.target.space.len() != spec.ndims() {
        return Err(IrError::IndexArity {
            found: nest.body.target.space.len(),
            expected: spec.ndims(),
        });
    }
    Ok(())
}

fn check_bound_shape(l: &Loop) -> Result<(), IrError> {
    let shape_err = |message: &str| IrError::BoundShape {
        var: l.var.clone(),
        message: message.to_string(),
    };
    for (bound, is_lower) in [(&l.lower, true), (&l.upper, false)] {
        if bound.exprs.is_empty() {
            return Err(shape_err("empty bound"));
        }
        match bound.kind {
            BoundKind::Single if bound.exprs.len() != 1 => {
                return Err(shape_err("single bound must hold exactly one expression"))
            }
            BoundKind::MaxOf if !is_lower => {
                return Err(shape_err("max_of used as an upper bound"))
            }
            BoundKind::MinOf if is_lower => return Err(shape_err("min_of used as a lower bound")),
            _ => {}
        }
    }
    Ok(())
}

/// The point loop driven by a tile loop must stop at `tile + step`.
fn check_tile_step(nest: &LoopNest, tile: &Loop) -> Result<(), IrError> {
    let driven: Vec<&Loop> = nest
        .loops
        .iter()
        .filter(|l| {
            l.kind == LoopKind::Incremental && l.role == tile.role && l.references(&tile.var)
        })
        .collect();
    if driven.is_empty() {
        return Err(IrError::Step {
            var: tile.var.clone(),
            step: tile.step,
            message: "tile loop drives no incremental loop".into(),
        });
    }
    for inc in driven {
        let widths: Vec<i64> = inc
            .upper
            .exprs
            .iter()
            .filter(|e| e.coeff(&tile.var) == 1 && e.terms.len() == 1)
            .map(|e| e.constant)
            .collect();
        if widths.iter().any(|&w| w != tile.step) || widths.is_empty() {
            return Err(IrError::Step {
                var: tile.var.clone(),
                step: tile.step,
                message: format!("incremental loop `{}` spans a different tile size", inc.var),
            });
        }
    }
    Ok(())
}

/// One nest, or several nests fused under a shared outermost loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub nests: Vec<LoopNest>,
}

impl Schedule {
    pub fn fused(nests: Vec<LoopNest>) -> Result<Self, IrError> {
        let s = Self { nests };
        s.check_shape()?;
        Ok(s)
    }

    fn check_shape(&self) -> Result<(), IrError> {
        let first = self.nests.first().ok_or(IrError::EmptySchedule)?;
        let outer = first.loops.first();
        if self.nests.len() > 1
            && self
                .nests
                .iter()
                .any(|n| n.loops.first() != outer || n.loops.is_empty())
        {
            return Err(IrError::FusedOuterLoop);
        }
        Ok(())
    }

    pub fn validate(&self, spec: &StencilSpec) -> Result<(), IrError> {
        self.check_shape()?;
        self.nests.iter().try_for_each(|n| validate_for(n, spec))
    }

    pub fn time_tile(&self) -> Option<i64> {
        self.nests
            .iter()
            .filter_map(|n| n.time_tile_loop())
            .map(|l| l.step)
            .max()
    }

    /// Time-buffer depth this schedule needs: `δ_t + t_t` when time-tiled,
    /// `δ_t + 1` otherwise.
    pub fn required_slots(&self, spec: &StencilSpec) -> usize {
        spec.time_buffer_slots(self.time_tile().unwrap_or(1).max(1) as usize)
    }
}

impl From<LoopNest> for Schedule {
    fn from(nest: LoopNest) -> Self {
        Self { nests: vec![nest] }
    }
}

/// A logical iteration point `(t, x_1, ..., x_n)` in unskewed coordinates.
pub type Point = Vec<i64>;

/// The exact sequence of logical points the body executes, in order.
pub fn trace(schedule: &Schedule, cap: usize) -> Result<Vec<Point>, IrError> {
    let compiled = CompiledSchedule::new(schedule)?;
    let mut out = Vec::new();
    compiled.walk(false, &mut |body, env| {
        if out.len() >= cap {
            return Err(IrError::CapExceeded(cap));
        }
        out.push(body.logical_point(env));
        Ok(())
    })?;
    Ok(out)
}

pub fn trace_nest(nest: &LoopNest, cap: usize) -> Result<Vec<Point>, IrError> {
    trace(&Schedule::from(nest.clone()), cap)
}

/// C-like rendering for debugging.
pub fn pretty(nest: &LoopNest) -> String {
    let mut out = String::new();
    let mut indent = 0;
    for l in &nest.loops {
        let pad = "  ".repeat(indent);
        if l.parallel {
            out.push_str(&format!("{pad}// parallel\n"));
        }
        let step = if l.step == 1 {
            format!("{}++", l.var)
        } else {
            format!("{} += {}", l.var, l.step)
        };
        out.push_str(&format!(
            "{pad}for ({} = {}; {} < {}; {step})  // {:?}\n",
            l.var, l.lower, l.var, l.upper, l.kind
        ));
        indent += 1;
    }
    let pad = "  ".repeat(indent);
    let reads: Vec<String> = nest
        .body
        .reads
        .iter()
        .enumerate()
        .map(|(k, r)| format!("c{k}*{r}"))
        .collect();
    out.push_str(&format!(
        "{pad}{} = {};\n",
        nest.body.target,
        reads.join(" + ")
    ));
    out
}

/// Affine expression over loop depths, evaluated against a dense environment.
#[derive(Debug, Clone)]
pub(crate) struct LinearForm {
    pub constant: i64,
    pub terms: Vec<(usize, i64)>,
}

impl LinearForm {
    fn compile(e: &AffineExpr, slots: &[&str]) -> Result<Self, IrError> {
        let mut terms = Vec::new();
        for (v, c) in e.terms.iter().filter(|(_, c)| *c != 0) {
            let slot = slots
                .iter()
                .position(|s| s == v)
                .ok_or_else(|| IrError::Unbound {
                    var: v.clone(),
                    context: "compilation".into(),
                })?;
            terms.push((slot, *c));
        }
        Ok(Self {
            constant: e.constant,
            terms,
        })
    }

    #[inline]
    pub fn eval(&self, env: &[i64]) -> i64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(slot, c)| acc + c * env[slot])
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledAccess {
    pub time: LinearForm,
    pub space: Vec<LinearForm>,
}

impl CompiledAccess {
    fn compile(a: &Access, slots: &[&str]) -> Result<Self, IrError> {
        Ok(Self {
            time: LinearForm::compile(&a.time, slots)?,
            space: a
                .space
                .iter()
                .map(|e| LinearForm::compile(e, slots))
                .collect::<Result<_, _>>()?,
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledBody {
    pub target: CompiledAccess,
    pub reads: Vec<CompiledAccess>,
    time_slot: usize,
}

impl CompiledBody {
    pub fn logical_point(&self, env: &[i64]) -> Point {
        std::iter::once(env[self.time_slot])
            .chain(self.target.space.iter().map(|f| f.eval(env)))
            .collect()
    }
}

#[derive(Debug, Clone)]
struct CompiledLoop {
    lower: Vec<LinearForm>,
    upper: Vec<LinearForm>,
    step: i64,
    parallel: bool,
}

impl CompiledLoop {
    #[inline]
    fn range(&self, env: &[i64]) -> (i64, i64) {
        let lo = self.lower.iter().map(|f| f.eval(env)).max().unwrap_or(0);
        let hi = self.upper.iter().map(|f| f.eval(env)).min().unwrap_or(0);
        (lo, hi)
    }
}

#[derive(Debug, Clone)]
struct CompiledNest {
    loops: Vec<CompiledLoop>,
    body: CompiledBody,
}

/// Dense form of a validated schedule; the engine shared by the tracer,
/// the executor and the cache simulator.
#[derive(Debug, Clone)]
pub(crate) struct CompiledSchedule {
    nests: Vec<CompiledNest>,
    depth: usize,
}

impl CompiledSchedule {
    pub fn new(schedule: &Schedule) -> Result<Self, IrError> {
        schedule.check_shape()?;
        let mut nests = Vec::with_capacity(schedule.nests.len());
        let mut depth = 0;
        for nest in &schedule.nests {
            validate(nest)?;
            let slots: Vec<&str> = nest.loops.iter().map(|l| l.var.as_str()).collect();
            let loops = nest
                .loops
                .iter()
                .map(|l| {
                    Ok(CompiledLoop {
                        lower: compile_bound(&l.lower, &slots)?,
                        upper: compile_bound(&l.upper, &slots)?,
                        step: l.step,
                        parallel: l.parallel,
                    })
                })
                .collect::<Result<Vec<_>, IrError>>()?;
            let time_slot = nest
                .loops
                .iter()
                .position(|l| l.role == DimRole::Time && l.is_point_loop())
                .ok_or(IrError::TimeLoops(0))?;
            let body = CompiledBody {
                target: CompiledAccess::compile(&nest.body.target, &slots)?,
                reads: nest
                    .body
                    .reads
                    .iter()
                    .map(|r| CompiledAccess::compile(r, &slots))
                    .collect::<Result<_, _>>()?,
                time_slot,
            };
            depth = depth.max(loops.len());
            nests.push(CompiledNest { loops, body });
        }
        Ok(Self { nests, depth })
    }

    /// Calls `f` once per body execution, in execution order. With
    /// `reverse_parallel`, loops marked parallel run from their last
    /// iteration to their first.
    pub fn walk<E>(
        &self,
        reverse_parallel: bool,
        f: &mut impl FnMut(&CompiledBody, &[i64]) -> Result<(), E>,
    ) -> Result<(), E> {
        let mut env = vec![0i64; self.depth];
        if self.nests.len() == 1 {
            let nest = &self.nests[0];
            return walk_loops(&nest.loops, &nest.body, 0, &mut env, reverse_parallel, f);
        }
        // Fused group: drive the shared outer loop once, then each nest's
        // inner loops in order.
        let outer = &self.nests[0].loops[0];
        let (lo, hi) = outer.range(&env);
        for v in iteration_values(lo, hi, outer.step, reverse_parallel && outer.parallel) {
            env[0] = v;
            for nest in &self.nests {
                walk_loops(&nest.loops, &nest.body, 1, &mut env, reverse_parallel, f)?;
            }
        }
        Ok(())
    }
}

fn compile_bound(b: &Bound, slots: &[&str]) -> Result<Vec<LinearForm>, IrError> {
    b.exprs
        .iter()
        .map(|e| LinearForm::compile(e, slots))
        .collect()
}

fn iteration_values(lo: i64, hi: i64, step: i64, reverse: bool) -> Box<dyn Iterator<Item = i64>> {
    if hi <= lo {
        return Box::new(std::iter::empty());
    }
    let forward = (lo..hi).step_by(step as usize);
    if reverse {
        let last = lo + (hi - 1 - lo) / step * step;
        Box::new((0..=(last - lo) / step).map(move |k| last - k * step))
    } else {
        Box::new(forward)
    }
}

fn walk_loops<E>(
    loops: &[CompiledLoop],
    body: &CompiledBody,
    depth: usize,
    env: &mut [i64],
    reverse_parallel: bool,
    f: &mut impl FnMut(&CompiledBody, &[i64]) -> Result<(), E>,
) -> Result<(), E> {
    let Some(l) = loops.get(depth) else {
        return f(body, env);
    };
    let (lo, hi) = l.range(env);
    if hi <= lo {
        return Ok(());
    }
    if reverse_parallel && l.parallel {
        let last = lo + (hi - 1 - lo) / l.step * l.step;
        let mut v = last;
        while v >= lo {
            env[depth] = v;
            walk_loops(loops, body, depth + 1, env, reverse_parallel, f)?;
            v -= l.step;
        }
    } else {
        let mut v = lo;
        while v < hi {
            env[depth] = v;
            walk_loops(loops, body, depth + 1, env, reverse_parallel, f)?;
            v += l.step;
        }
    }
    Ok(())
}
