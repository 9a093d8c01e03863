//! Agents, run parameters, counter-based random streams and the planning
//! step that picks each agent's desired cell.
//!
//! Planning only reads pre-step state. The exponential weighting lives here
//! so that movement can stay on integer arithmetic.

use thiserror::Error;

use crate::engine::SimState;
use crate::world::{clear_offset_line, Boundary, CellKind, Coord, Potential};

/// Static-field coupling used unless overridden.
pub const DEFAULT_K_S: f64 = 1.2;
/// Steps per run unless overridden; one step is one simulated second.
pub const DEFAULT_STEPS: u64 = 396;
pub const DEFAULT_DT: f64 = 1.0;
pub const MAX_SPEED: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Agent {
    pub id: u32,
    pub pos: Coord,
    /// Cells per step.
    pub v_max: u8,
    pub alive: bool,
}

impl Agent {
    pub fn new(id: u32, pos: Coord, v_max: u8) -> Self {
        Agent {
            id,
            pos,
            v_max,
            alive: true,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("v_max must be in 1..={MAX_SPEED}, got {0}")]
    Speed(u8),
    #[error("k_other is fixed at 0, got {0}")]
    NonZeroKOther(f64),
    #[error("k_S must be finite and non-negative, got {0}")]
    Coupling(f64),
    #[error("steps must be at least 1")]
    ZeroSteps,
    #[error("dt must be positive and finite, got {0}")]
    TimeStep(f64),
}

/// Validated run parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    k_s: f64,
    k_other: f64,
    v_max: u8,
    seed: u64,
    steps: u64,
    dt: f64,
}

impl SimParams {
    pub fn new(v_max: u8, seed: u64) -> Result<Self, ParamError> {
        if !(1..=MAX_SPEED).contains(&v_max) {
            return Err(ParamError::Speed(v_max));
        }
        Ok(SimParams {
            k_s: DEFAULT_K_S,
            k_other: 0.0,
            v_max,
            seed,
            steps: DEFAULT_STEPS,
            dt: DEFAULT_DT,
        })
    }

    pub fn with_k_s(mut self, k_s: f64) -> Result<Self, ParamError> {
        if !(k_s.is_finite() && k_s >= 0.0) {
            return Err(ParamError::Coupling(k_s));
        }
        self.k_s = k_s;
        Ok(self)
    }

    pub fn with_k_other(self, k_other: f64) -> Result<Self, ParamError> {
        if k_other != 0.0 {
            return Err(ParamError::NonZeroKOther(k_other));
        }
        Ok(self)
    }

    pub fn with_steps(mut self, steps: u64) -> Result<Self, ParamError> {
        if steps == 0 {
            return Err(ParamError::ZeroSteps);
        }
        self.steps = steps;
        Ok(self)
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self, ParamError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ParamError::TimeStep(dt));
        }
        self.dt = dt;
        Ok(self)
    }

    pub fn k_s(&self) -> f64 {
        self.k_s
    }

    pub fn k_other(&self) -> f64 {
        self.k_other
    }

    pub fn v_max(&self) -> u8 {
        self.v_max
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// SplitMix64 output mix.
#[inline]
pub const fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based random word for `(seed, agent_id, step, draw)`. A pure
/// function of the tuple, so it does not matter which worker asks or when.
#[inline]
pub const fn rng_u64(seed: u64, agent_id: u64, step: u64, draw: u64) -> u64 {
    splitmix64_mix(
        seed ^ agent_id.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ step.wrapping_mul(0xBF58_476D_1CE4_E5B9)
            ^ draw.wrapping_mul(0x94D0_49BB_1331_11EB),
    )
}

/// Top 53 bits as a float in `[0, 1)`.
#[inline]
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..bound` by widening multiply.
#[inline]
pub fn bounded(word: u64, bound: u64) -> u64 {
    ((word as u128 * bound as u128) >> 64) as u64
}

/// A reachable cell together with the offset that reaches it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub cell: Coord,
    pub dx: i32,
    pub dy: i32,
}

/// Fills `out` with the candidate cells of `agent`, row-major by `(y, x)`.
///
/// A cell qualifies when it lies within Chebyshev distance `v_max`, is not a
/// wall, is not held by another agent and is visible along a Bresenham line.
/// The agent's own cell is always included.
pub fn collect_candidates(state: &SimState, agent: &Agent, out: &mut Vec<Candidate>) {
    out.clear();
    let grid = state.grid();
    let v = agent.v_max as i32;
    let pos = agent.pos;
    for dy in -v..=v {
        for dx in -v..=v {
            let Some(cell) = grid.normalize(pos.offset(dx, dy)) else {
                continue;
            };
            if grid.kind(cell) == CellKind::Wall {
                continue;
            }
            if let Some(other) = state.occupant(cell) {
                if other != agent.id {
                    continue;
                }
            }
            let (tx, ty) = (grid.x_offset(pos.x, cell.x), dy);
            if !clear_offset_line(grid, pos, tx, ty) {
                continue;
            }
            out.push(Candidate { cell, dx: tx, dy: ty });
        }
    }
    if grid.boundary() == Boundary::PeriodicX {
        out.sort_by_key(|c| (c.cell.y, c.cell.x));
        out.dedup_by_key(|c| c.cell);
    }
}

pub fn enumerate_candidates(state: &SimState, agent: &Agent) -> Vec<Coord> {
    let mut buf = Vec::new();
    collect_candidates(state, agent, &mut buf);
    buf.into_iter().map(|c| c.cell).collect()
}

/// Unnormalized choice weights `exp(k_S * (S(pos) - S(c)))`.
///
/// Unreachable candidates get weight 0. If the agent itself stands on an
/// unreachable cell (or the grid has no exits) every candidate weighs 1.
pub fn candidate_weights(
    state: &SimState,
    agent: &Agent,
    k_s: f64,
    candidates: &[Candidate],
    out: &mut Vec<f64>,
) {
    out.clear();
    match state.potential() {
        Potential::Static(field) => {
            let here = field.get(agent.pos);
            if !here.is_finite() {
                out.resize(candidates.len(), 1.0);
                return;
            }
            out.extend(candidates.iter().map(|c| {
                let s = field.get(c.cell);
                if s.is_finite() {
                    (k_s * (here - s)).exp()
                } else {
                    0.0
                }
            }));
        }
        Potential::GradientX => {
            out.extend(candidates.iter().map(|c| (k_s * c.dx as f64).exp()));
        }
    }
}

/// Index of the first entry whose cumulative share of the total weight
/// strictly exceeds `u`.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0);
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        cum += w;
        if cum / total > u {
            return i;
        }
    }
    last_positive
}

/// Reusable buffers for planning; one per worker.
#[derive(Debug, Default)]
pub struct PlanScratch {
    candidates: Vec<Candidate>,
    weights: Vec<f64>,
}

/// Draws the desired cell of `agent` for `step`.
pub fn choose_desired_cell(state: &SimState, agent: &Agent, params: &SimParams, step: u64) -> Coord {
    choose_with(state, agent, params, step, &mut PlanScratch::default())
}

pub(crate) fn choose_with(
    state: &SimState,
    agent: &Agent,
    params: &SimParams,
    step: u64,
    scratch: &mut PlanScratch,
) -> Coord {
    collect_candidates(state, agent, &mut scratch.candidates);
    if scratch.candidates.len() == 1 {
        return scratch.candidates[0].cell;
    }
    candidate_weights(state, agent, params.k_s(), &scratch.candidates, &mut scratch.weights);
    let u = unit_f64(rng_u64(params.seed(), agent.id as u64, step, 0));
    scratch.candidates[sample_index(&scratch.weights, u)].cell
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::parse_scenario;
    use proptest::prelude::*;

    #[test]
    fn rng_golden_values() {
        // reference values from an independent scalar implementation
        assert_eq!(rng_u64(0, 0, 0, 0), 0);
        assert_eq!(rng_u64(1, 0, 0, 0), 0x5692_161d_100b_05e5);
        assert_eq!(rng_u64(42, 7, 3, 0), 0x05bb_78ec_e4e9_d663);
        assert_eq!(rng_u64(42, 7, 3, 1), 0xa3f8_37d6_15ff_880a);
        assert_eq!(rng_u64(0xDEAD_BEEF, 1 << 63, 396, 5), 0x0cc0_c788_565f_d6f6);
    }

    #[test]
    fn rng_draw_channel_differs() {
        let mut x = 0x1234_5678_9abc_def0u64;
        for _ in 0..1_000_000 {
            x = splitmix64_mix(x.wrapping_add(0x9E37_79B9_7F4A_7C15));
            let (seed, id, step) = (x, x >> 40, x & 0xffff);
            let draw = x >> 60;
            assert_ne!(rng_u64(seed, id, step, draw), rng_u64(seed, id, step, draw + 1));
        }
    }

    #[test]
    fn unit_range() {
        assert_eq!(unit_f64(0), 0.0);
        assert!(unit_f64(u64::MAX) < 1.0);
        assert_eq!(bounded(u64::MAX, 10), 9);
        assert_eq!(bounded(0, 10), 0);
    }

    #[test]
    fn params_validation() {
        assert_eq!(SimParams::new(0, 1).unwrap_err(), ParamError::Speed(0));
        assert_eq!(SimParams::new(6, 1).unwrap_err(), ParamError::Speed(6));
        let p = SimParams::new(4, 1).unwrap();
        assert_eq!((p.k_s(), p.k_other(), p.steps(), p.dt()), (1.2, 0.0, 396, 1.0));
        assert!(p.with_k_other(0.0).is_ok());
        assert_eq!(p.with_k_other(0.5).unwrap_err(), ParamError::NonZeroKOther(0.5));
        assert_eq!(p.with_steps(0).unwrap_err(), ParamError::ZeroSteps);
        assert!(p.with_dt(0.0).is_err());
        assert!(p.with_k_s(f64::NAN).is_err());
    }

    fn room(rows: &[&str]) -> crate::world::Grid {
        let text = format!(
            "FAST-SCENARIO v1\nwidth {}\nheight {}\ncell_size 0.4\nboundary closed\ngrid:\n{}\n",
            rows[0].len(),
            rows.len(),
            rows.join("\n")
        );
        parse_scenario(&text).unwrap()
    }

    fn state_with(rows: &[&str], agents: &[(i32, i32)], v_max: u8) -> SimState {
        let grid = room(rows);
        let potential = Potential::from_grid(&grid);
        let agents = agents
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Agent::new(i as u32, Coord::new(x, y), v_max))
            .collect();
        SimState::new(grid, potential, agents).unwrap()
    }

    #[test]
    fn lone_agent_sees_three_by_three() {
        let s = state_with(&["#######", "#.....#", "#.....#", "#.....#", "#.....#", "#.....#", "###E###"], &[(3, 3)], 1);
        let c = enumerate_candidates(&s, &s.agents()[0]);
        assert_eq!(c.len(), 9);
        assert_eq!(c[0], Coord::new(2, 2));
        assert_eq!(c[8], Coord::new(4, 4));
        assert!(c.windows(2).all(|w| (w[0].y, w[0].x) < (w[1].y, w[1].x)));
    }

    #[test]
    fn walled_in_agent_only_stays() {
        let s = state_with(&["#####", "#.#E#", "###.#", "#####"], &[(1, 1)], 4);
        let a = s.agents()[0];
        assert_eq!(enumerate_candidates(&s, &a), vec![Coord::new(1, 1)]);
        let p = SimParams::new(4, 9).unwrap();
        for step in 0..100 {
            assert_eq!(choose_desired_cell(&s, &a, &p, step), a.pos);
        }
    }

    #[test]
    fn occupied_cells_excluded() {
        let s = state_with(&["#####", "#...#", "#...#", "#...#", "##E##"], &[(2, 2), (1, 1), (3, 3)], 1);
        let c = enumerate_candidates(&s, &s.agents()[0]);
        assert_eq!(c.len(), 7);
        assert!(!c.contains(&Coord::new(1, 1)));
        assert!(!c.contains(&Coord::new(3, 3)));
    }

    #[test]
    fn zero_coupling_is_uniform() {
        let s = state_with(&["#######", "#.....#", "#.....#", "#.....#", "###E###"], &[(3, 2)], 1);
        let a = s.agents()[0];
        let p = SimParams::new(1, 3).unwrap().with_k_s(0.0).unwrap();
        let cands = enumerate_candidates(&s, &a);
        let n = 100_000;
        let mut counts = vec![0usize; cands.len()];
        for step in 0..n {
            let c = choose_desired_cell(&s, &a, &p, step);
            counts[cands.iter().position(|x| *x == c).unwrap()] += 1;
        }
        let pr = 1.0 / cands.len() as f64;
        let sigma = (n as f64 * pr * (1.0 - pr)).sqrt();
        for k in counts {
            assert!((k as f64 - n as f64 * pr).abs() < 3.0 * sigma, "{k}");
        }
    }

    #[test]
    fn mean_descent_positive() {
        let s = state_with(
            &["###########", "#.........#", "#.........#", "#.........#", "#.........#", "#.........#", "#####E#####"],
            &[(5, 2)],
            2,
        );
        let a = s.agents()[0];
        let p = SimParams::new(2, 77).unwrap();
        let Potential::Static(f) = s.potential() else { unreachable!() };
        let mut total = 0.0;
        for step in 0..100_000 {
            let c = choose_desired_cell(&s, &a, &p, step);
            total += f.get(a.pos) - f.get(c);
        }
        assert!(total > 0.0);
    }

    #[test]
    fn sampling_edges() {
        assert_eq!(sample_index(&[1.0, 3.0], 0.0), 0);
        assert_eq!(sample_index(&[1.0, 3.0], 0.2499), 0);
        assert_eq!(sample_index(&[1.0, 3.0], 0.25), 1);
        assert_eq!(sample_index(&[0.0, 1.0, 0.0], 0.0), 1);
        assert_eq!(sample_index(&[1.0, 1.0, 0.0], 0.999_999_999_999), 1);
    }

    proptest! {
        #[test]
        fn scaling_weights_keeps_choice(
            w in prop::collection::vec(0.0f64..50.0, 1..30),
            shift in -20i32..20,
            u in 0.0f64..1.0,
        ) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let scale = 2f64.powi(shift);
            let scaled: Vec<f64> = w.iter().map(|x| x * scale).collect();
            prop_assert_eq!(sample_index(&w, u), sample_index(&scaled, u));
        }

        #[test]
        fn choice_is_a_candidate(x in 1i32..9, y in 1i32..6, step in 0u64..1000, v in 1u8..=5) {
            let rows = ["##########", "#........#", "#..##....#", "#...#....#", "#........#", "#........#", "####E#####"];
            prop_assume!(rows[y as usize].as_bytes()[x as usize] == b'.');
            let s = state_with(&rows, &[(x, y)], v);
            let a = s.agents()[0];
            let p = SimParams::new(v, 5).unwrap();
            let c = choose_desired_cell(&s, &a, &p, step);
            prop_assert!(enumerate_candidates(&s, &a).contains(&c));
            prop_assert_eq!(c, choose_desired_cell(&s, &a, &p, step));
        }
    }
}
