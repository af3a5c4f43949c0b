//! Fully associative LRU cache replaying a schedule's exact access stream.
//!
//! Each body execution issues its reads in term order, then its write, at
//! the executor's addresses. Policy is write-allocate/write-back. A write
//! miss on a single-element line does not fetch (the write defines the whole
//! line); wider lines are fetched. Dirty lines still resident at the end are
//! flushed and counted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::AddressMap;
use crate::ir::{CompiledSchedule, IrError, Schedule};
use crate::model::{IterationSpace, StencilSpec, ELEM_BYTES};

/// 64-byte lines.
pub const DEFAULT_LINE_ELEMS: usize = 16;

/// Replay stops with an error past this many body executions.
pub const DEFAULT_SIM_POINT_CAP: usize = 200_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("cache capacity {capacity} must be a positive multiple of the line size {line}")]
    Config { capacity: usize, line: usize },
    #[error("schedule executes more than {0} points")]
    CapExceeded(usize),
    #[error("access outside the padded grid at logical point {0:?}")]
    OutOfBounds(Vec<i64>),
    #[error("no memory traffic was recorded")]
    NoTraffic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity_elems: usize,
    pub line_elems: usize,
    /// Largest number of body executions a simulation will replay.
    pub point_cap: usize,
}

impl CacheConfig {
    pub fn new(capacity_elems: usize, line_elems: usize) -> Result<Self, SimError> {
        if line_elems == 0
            || capacity_elems < line_elems
            || !capacity_elems.is_multiple_of(line_elems)
        {
            return Err(SimError::Config {
                capacity: capacity_elems,
                line: line_elems,
            });
        }
        Ok(Self {
            capacity_elems,
            line_elems,
            point_cap: DEFAULT_SIM_POINT_CAP,
        })
    }

    pub fn with_point_cap(mut self, cap: usize) -> Self {
        self.point_cap = cap;
        self
    }

    pub fn capacity_lines(&self) -> usize {
        self.capacity_elems / self.line_elems
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub lines_loaded: u64,
    pub lines_written_back: u64,
    pub bytes: u64,
    pub flops: u64,
    /// Flops per byte; zero when no traffic occurred.
    pub measured_ai: f64,
}

const NIL: u32 = u32::MAX;

/// LRU list over dense line ids, most recent at the head.
struct Lru {
    prev: Vec<u32>,
    next: Vec<u32>,
    resident: Vec<bool>,
    dirty: Vec<bool>,
    head: u32,
    tail: u32,
    len: usize,
    capacity: usize,
    loads: u64,
    write_backs: u64,
    fetch_on_write: bool,
}

impl Lru {
    fn new(lines: usize, capacity: usize, fetch_on_write: bool) -> Self {
        Self {
            prev: vec![NIL; lines],
            next: vec![NIL; lines],
            resident: vec![false; lines],
            dirty: vec![false; lines],
            head: NIL,
            tail: NIL,
            len: 0,
            capacity,
            loads: 0,
            write_backs: 0,
            fetch_on_write,
        }
    }

    fn unlink(&mut self, id: u32) {
        let (p, n) = (self.prev[id as usize], self.next[id as usize]);
        if p != NIL {
            self.next[p as usize] = n;
        } else {
            self.head = n;
        }
        if n != NIL {
            self.prev[n as usize] = p;
        } else {
            self.tail = p;
        }
    }

    fn push_front(&mut self, id: u32) {
        self.prev[id as usize] = NIL;
        self.next[id as usize] = self.head;
        if self.head != NIL {
            self.prev[self.head as usize] = id;
        }
        self.head = id;
        if self.tail == NIL {
            self.tail = id;
        }
    }

    fn access(&mut self, line: usize, write: bool) {
        let id = line as u32;
        if self.resident[line] {
            if self.head != id {
                self.unlink(id);
                self.push_front(id);
            }
        } else {
            if !write || self.fetch_on_write {
                self.loads += 1;
            }
            if self.len == self.capacity {
                let victim = self.tail;
                self.unlink(victim);
                self.resident[victim as usize] = false;
                if std::mem::take(&mut self.dirty[victim as usize]) {
                    self.write_backs += 1;
                }
                self.len -= 1;
            }
            self.resident[line] = true;
            self.push_front(id);
            self.len += 1;
        }
        if write {
            self.dirty[line] = true;
        }
    }

    fn flush(&mut self) {
        let dirty = self.dirty.iter().filter(|&&d| d).count() as u64;
        self.write_backs += dirty;
        self.dirty.iter_mut().for_each(|d| *d = false);
    }
}

/// Replays `schedule` against an LRU cache and reports the memory traffic.
pub fn simulate(
    schedule: &Schedule,
    spec: &StencilSpec,
    space: &IterationSpace,
    cache: &CacheConfig,
) -> Result<TrafficReport, SimError> {
    schedule.validate(spec)?;
    let cache =
        CacheConfig::new(cache.capacity_elems, cache.line_elems)?.with_point_cap(cache.point_cap);
    let compiled = CompiledSchedule::new(schedule)?;
    let map = AddressMap::new(spec, space);
    let slots = schedule.required_slots(spec) as i64;
    let total_elems = slots as usize * map.slab;
    let line = cache.line_elems;
    let mut lru = Lru::new(total_elems.div_ceil(line), cache.capacity_lines(), line > 1);

    let halo: Vec<i64> = map.halo.iter().map(|&h| h as i64).collect();
    let padded: Vec<i64> = map.padded.iter().map(|&p| p as i64).collect();
    let slab = map.slab;
    let strides = map.strides;
    let mut points: usize = 0;
    let cap = cache.point_cap;

    let address = |access: &crate::ir::CompiledAccess, env: &[i64]| -> Option<usize> {
        let mut offset = access.time.eval(env).rem_euclid(slots) as usize * slab;
        for (dim, form) in access.space.iter().enumerate() {
            let p = form.eval(env) + halo[dim];
            if p < 0 || p >= padded[dim] {
                return None;
            }
            offset += p as usize * strides[dim];
        }
        Some(offset)
    };

    compiled.walk(false, &mut |body, env| {
        if points >= cap {
            return Err(SimError::CapExceeded(cap));
        }
        points += 1;
        for read in &body.reads {
            let addr =
                address(read, env).ok_or_else(|| SimError::OutOfBounds(body.logical_point(env)))?;
            lru.access(addr / line, false);
        }
        let addr = address(&body.target, env)
            .ok_or_else(|| SimError::OutOfBounds(body.logical_point(env)))?;
        lru.access(addr / line, true);
        Ok(())
    })?;
    lru.flush();

    let bytes = (ELEM_BYTES * line) as u64 * (lru.loads + lru.write_backs);
    let flops = points as u64 * spec.flops_per_point() as u64;
    Ok(TrafficReport {
        lines_loaded: lru.loads,
        lines_written_back: lru.write_backs,
        bytes,
        flops,
        measured_ai: if bytes > 0 {
            flops as f64 / bytes as f64
        } else {
            0.0
        },
    })
}

/// Flops per byte of a simulated run, in the units the estimators use.
pub fn measured_ai_elems(report: &TrafficReport) -> Result<f64, SimError> {
    if report.bytes == 0 {
        return Err(SimError::NoTraffic);
    }
    Ok(report.flops as f64 / report.bytes as f64)
}
