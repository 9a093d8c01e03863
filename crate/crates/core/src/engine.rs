//! The two-phase time step.
//!
//! Planning reads the pre-step world from any number of workers, which claim
//! contiguous chunks of the alive roster from a shared counter. Movement then
//! runs on the calling thread, one agent at a time, in a seeded random order.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::agents::{bounded, choose_with, rng_u64, Agent, PlanScratch, SimParams};
use crate::world::{line_offsets, trace_offset, CellKind, Coord, Grid, Potential};

/// Upper clamp on the planning chunk size.
pub const MAX_BLOCKSIZE: usize = 32767;

/// Random stream id used for the movement permutation; no agent has it.
pub const ORDER_STREAM: u64 = 1 << 63;

const EMPTY: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("agent {id} at ({x}, {y}) is not on a free or exit cell")]
    BadPlacement { id: u32, x: i32, y: i32 },
    #[error("agents {first} and {second} share cell ({x}, {y})")]
    SharedCell { first: u32, second: u32, x: i32, y: i32 },
    #[error("agent ids must be dense from 0; found {found} at index {index}")]
    SparseIds { index: usize, found: u32 },
    #[error("all agents must share one v_max; found {0} and {1}")]
    MixedSpeeds(u8, u8),
}

/// `max(min(agents / cores, 32767), 1)` with truncating division.
pub fn compute_blocksize(number_of_agents: usize, cores: usize) -> Result<usize, EngineError> {
    if cores == 0 {
        return Err(EngineError::NoWorkers);
    }
    Ok((number_of_agents / cores).clamp(1, MAX_BLOCKSIZE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleParams {
    cores: usize,
}

impl ScheduleParams {
    pub fn new(cores: usize) -> Result<Self, EngineError> {
        if cores == 0 {
            return Err(EngineError::NoWorkers);
        }
        Ok(ScheduleParams { cores })
    }

    pub fn cores(&self) -> usize {
        self.cores
    }

    pub fn blocksize(&self, alive: usize) -> usize {
        (alive / self.cores).clamp(1, MAX_BLOCKSIZE)
    }
}

/// The mutable simulation world.
#[derive(Debug, Clone)]
pub struct SimState {
    grid: Grid,
    potential: Potential,
    agents: Vec<Agent>,
    occupancy: Vec<u32>,
    step: u64,
    desired: Vec<Coord>,
}

impl SimState {
    pub fn new(grid: Grid, potential: Potential, agents: Vec<Agent>) -> Result<Self, EngineError> {
        let mut occupancy = vec![EMPTY; grid.cells().len()];
        for (index, a) in agents.iter().enumerate() {
            if a.id as usize != index {
                return Err(EngineError::SparseIds { index, found: a.id });
            }
            if a.v_max != agents[0].v_max {
                return Err(EngineError::MixedSpeeds(agents[0].v_max, a.v_max));
            }
            if !a.alive {
                continue;
            }
            if !grid.contains(a.pos) || grid.kind(a.pos) == CellKind::Wall {
                return Err(EngineError::BadPlacement { id: a.id, x: a.pos.x, y: a.pos.y });
            }
            let slot = &mut occupancy[grid.index(a.pos)];
            if *slot != EMPTY {
                return Err(EngineError::SharedCell {
                    first: *slot,
                    second: a.id,
                    x: a.pos.x,
                    y: a.pos.y,
                });
            }
            *slot = a.id;
        }
        let desired = agents.iter().map(|a| a.pos).collect();
        Ok(SimState {
            grid,
            potential,
            agents,
            occupancy,
            step: 0,
            desired,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Desired cells from the last planning phase, indexed by agent id.
    pub fn desired(&self) -> &[Coord] {
        &self.desired
    }

    #[inline]
    pub fn occupant(&self, c: Coord) -> Option<u32> {
        match self.occupancy[self.grid.index(c)] {
            EMPTY => None,
            id => Some(id),
        }
    }

    pub fn alive_count(&self) -> usize {
        self.agents.iter().filter(|a| a.alive).count()
    }

    /// Checks that occupancy and positions agree and no cell holds two agents.
    pub fn check_consistency(&self) -> Result<(), String> {
        let mut seen = vec![EMPTY; self.occupancy.len()];
        for a in self.agents.iter().filter(|a| a.alive) {
            let i = self.grid.index(a.pos);
            if self.grid.kind(a.pos) == CellKind::Wall {
                return Err(format!("agent {} inside a wall at {:?}", a.id, a.pos));
            }
            if seen[i] != EMPTY {
                return Err(format!("agents {} and {} share {:?}", seen[i], a.id, a.pos));
            }
            seen[i] = a.id;
            if self.occupancy[i] != a.id {
                return Err(format!("occupancy at {:?} is {} not {}", a.pos, self.occupancy[i], a.id));
            }
        }
        if let Some(i) = (0..seen.len()).find(|&i| self.occupancy[i] != seen[i]) {
            return Err(format!("stale occupancy {} at {:?}", self.occupancy[i], self.grid.coord_of(i)));
        }
        Ok(())
    }

    /// Hash of step counter, positions and alive flags.
    pub fn trajectory_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.step.hash(&mut h);
        for a in &self.agents {
            (a.pos, a.alive).hash(&mut h);
        }
        h.finish()
    }
}

/// Fills the desired slot of every alive agent. Dead agents keep theirs.
pub fn plan_phase(state: &mut SimState, params: &SimParams, sched: &ScheduleParams) {
    let alive: Vec<u32> = state.agents.iter().filter(|a| a.alive).map(|a| a.id).collect();
    if alive.is_empty() {
        return;
    }
    let blocksize = sched.blocksize(alive.len());
    let step = state.step;
    let mut plan = vec![Coord::default(); alive.len()];

    {
        let world: &SimState = state;
        let chunks: Vec<Mutex<&mut [Coord]>> = plan.chunks_mut(blocksize).map(Mutex::new).collect();
        let next = AtomicUsize::new(0);
        let work = || {
            let mut scratch = PlanScratch::default();
            loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(chunk) = chunks.get(k) else { break };
                // each chunk index is claimed exactly once, so this never contends
                let mut out = chunk.lock().unwrap();
                let ids = &alive[k * blocksize..];
                for (slot, &id) in out.iter_mut().zip(ids) {
                    let agent = &world.agents[id as usize];
                    *slot = choose_with(world, agent, params, step, &mut scratch);
                }
            }
        };
        let workers = sched.cores().min(chunks.len());
        if workers <= 1 {
            work();
        } else {
            std::thread::scope(|s| {
                for _ in 1..workers {
                    s.spawn(work);
                }
                work();
            });
        }
    }

    for (&id, cell) in alive.iter().zip(plan) {
        state.desired[id as usize] = cell;
    }
}

/// Seeded Fisher-Yates order over the alive agents for `step`.
pub fn movement_order(state: &SimState, seed: u64) -> Vec<u32> {
    let mut order: Vec<u32> = state.agents.iter().filter(|a| a.alive).map(|a| a.id).collect();
    for k in (1..order.len()).rev() {
        let word = rng_u64(seed, ORDER_STREAM, state.step, k as u64);
        let j = bounded(word, k as u64 + 1) as usize;
        order.swap(k, j);
    }
    order
}

/// Outcome of a movement phase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MoveOutcome {
    pub exited: Vec<u32>,
    /// Single-cell hops taken, summed over agents.
    pub hops: u64,
}

/// Walks every alive agent towards its desired cell, one agent at a time.
///
/// A walk stops before a wall or an occupied cell, after `v_max` hops, or on
/// entering an exit, which removes the agent.
pub fn move_phase(state: &mut SimState, params: &SimParams) -> MoveOutcome {
    let order = movement_order(state, params.seed());
    let mut out = MoveOutcome::default();
    for id in order {
        let i = id as usize;
        let Agent { pos: start, v_max, .. } = state.agents[i];
        let target = state.desired[i];
        if target == start {
            continue;
        }
        let (dx, dy) = trace_offset(&state.grid, start, target);
        let mut pos = start;
        for (ox, oy) in line_offsets(dx, dy).take(v_max as usize) {
            let Some(next) = state.grid.normalize(start.offset(ox, oy)) else {
                break;
            };
            let ni = state.grid.index(next);
            let kind = state.grid.kind(next);
            if kind == CellKind::Wall || state.occupancy[ni] != EMPTY {
                break;
            }
            let pi = state.grid.index(pos);
            state.occupancy[pi] = EMPTY;
            out.hops += 1;
            if kind == CellKind::Exit {
                state.agents[i].alive = false;
                state.agents[i].pos = next;
                out.exited.push(id);
                break;
            }
            state.occupancy[ni] = id;
            pos = next;
            state.agents[i].pos = next;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub alive: usize,
    pub exited: usize,
    /// Cells walked, summed over agents.
    pub displacement: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct PhaseTimes {
    plan: Duration,
    movement: Duration,
}

fn timed_step(
    state: &mut SimState,
    params: &SimParams,
    sched: &ScheduleParams,
    times: &mut PhaseTimes,
) -> StepStats {
    let t0 = Instant::now();
    plan_phase(state, params, sched);
    let t1 = Instant::now();
    let moved = move_phase(state, params);
    let t2 = Instant::now();
    times.plan += t1 - t0;
    times.movement += t2 - t1;
    state.step += 1;
    StepStats {
        alive: state.alive_count(),
        exited: moved.exited.len(),
        displacement: moved.hops,
    }
}

/// Plans, moves and advances the step counter.
pub fn step(state: &mut SimState, params: &SimParams, sched: &ScheduleParams) -> StepStats {
    timed_step(state, params, sched, &mut PhaseTimes::default())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub steps: u64,
    pub wall_time_s: f64,
    pub plan_time_s: f64,
    pub move_time_s: f64,
    pub alive: usize,
    pub exited: usize,
    pub displacement: u64,
}

/// Runs `params.steps()` steps, timing only the stepping loop.
pub fn run(state: &mut SimState, params: &SimParams, sched: &ScheduleParams) -> RunStats {
    let mut times = PhaseTimes::default();
    let mut stats = RunStats {
        steps: params.steps(),
        alive: state.alive_count(),
        ..RunStats::default()
    };
    let start = Instant::now();
    for _ in 0..params.steps() {
        let s = timed_step(state, params, sched, &mut times);
        stats.exited += s.exited;
        stats.displacement += s.displacement;
        stats.alive = s.alive;
    }
    stats.wall_time_s = start.elapsed().as_secs_f64();
    stats.plan_time_s = times.plan.as_secs_f64();
    stats.move_time_s = times.movement.as_secs_f64();
    stats
}
