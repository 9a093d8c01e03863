//! Measurement harness: timing sweeps, speed factors, real-time capacity and
//! density-speed measurements on a periodic corridor.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::agents::{ParamError, SimParams};
use crate::engine::{self, EngineError, ScheduleParams, SimState};
use crate::scenario_io::{spawn_agents, RunRecord, ScenarioIoError};
use crate::world::{Boundary, Grid, Potential};

/// Agent count the real-time search starts from.
pub const REALTIME_START: usize = 1000;

/// Free-flow speed of the reference density-speed curve (m/s).
pub const WEIDMANN_FREE_SPEED: f64 = 1.34;
/// Shape parameter of the reference curve (1/m²).
pub const WEIDMANN_GAMMA: f64 = 1.913;
/// Jam density of the reference curve (1/m²).
pub const WEIDMANN_JAM_DENSITY: f64 = 5.4;

pub const DEFAULT_WARMUP: u64 = 100;
pub const DEFAULT_MEASURE: u64 = 296;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("sweep list `{0}` is empty")]
    EmptyList(&'static str),
    #[error("sweep list `{0}` contains a zero")]
    ZeroValue(&'static str),
    #[error("repetitions and steps must be at least 1")]
    ZeroRepetitions,
    #[error("scenario holds {free} agents at most, {requested} requested")]
    Capacity { requested: usize, free: usize },
    #[error("scenario has no exits; drain runs need at least one")]
    NoExits,
    #[error("no 1-core baseline for agents={agents}, v_max={v_max}")]
    MissingBaseline { agents: usize, v_max: u8 },
    #[error(
        "real-time capacity below {agents} agents: {agents} agents took {wall_time_s:.6} s against a budget of {budget_s:.6} s"
    )]
    BelowStart { agents: usize, wall_time_s: f64, budget_s: f64 },
    #[error("agents={agents}, v_max={v_max}: final state with {cores} cores differs from {baseline_cores} cores")]
    Divergence { agents: usize, v_max: u8, cores: usize, baseline_cores: usize },
    #[error("density {density} exceeds the cell capacity of {max} per m²")]
    DensityTooHigh { density: f64, max: f64 },
    #[error("density must be positive, got {0}")]
    InvalidDensity(f64),
    #[error("density measurements need a periodic-x corridor without exits")]
    NotACorridor,
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Scenario(#[from] ScenarioIoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub cores_list: Vec<usize>,
    pub agents_list: Vec<usize>,
    pub vmax_list: Vec<u8>,
    pub steps: u64,
    pub repetitions: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            cores_list: vec![1],
            agents_list: vec![1000],
            vmax_list: vec![4],
            steps: crate::agents::DEFAULT_STEPS,
            repetitions: 3,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        fn check<T: PartialEq + Default>(name: &'static str, v: &[T]) -> Result<(), BenchError> {
            if v.is_empty() {
                return Err(BenchError::EmptyList(name));
            }
            if v.iter().any(|x| *x == T::default()) {
                return Err(BenchError::ZeroValue(name));
            }
            Ok(())
        }
        check("cores", &self.cores_list)?;
        check("agents", &self.agents_list)?;
        check("vmax", &self.vmax_list)?;
        for &v in &self.vmax_list {
            SimParams::new(v, 0)?;
        }
        if self.repetitions == 0 || self.steps == 0 {
            return Err(BenchError::ZeroRepetitions);
        }
        Ok(())
    }
}

/// Minimum-wall-time run of one configuration plus the final state hash.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub record: RunRecord,
    pub final_hash: u64,
}

/// Builds a fresh state and times `params.steps()` steps `repetitions` times.
/// Reports the fastest repetition.
pub fn measure(
    name: &str,
    grid: &Grid,
    potential: &Potential,
    agents: usize,
    params: &SimParams,
    cores: usize,
    repetitions: usize,
) -> Result<Measurement, BenchError> {
    let sched = ScheduleParams::new(cores)?;
    let mut best: Option<Measurement> = None;
    for _ in 0..repetitions.max(1) {
        let roster = spawn_agents(grid, agents, params.v_max(), params.seed())?;
        let mut state = SimState::new(grid.clone(), potential.clone(), roster)?;
        let stats = engine::run(&mut state, params, &sched);
        let m = Measurement {
            record: RunRecord {
                scenario_name: name.to_string(),
                agents_initial: agents,
                v_max: params.v_max(),
                cores,
                steps: params.steps(),
                wall_time_s: stats.wall_time_s,
                plan_time_s: stats.plan_time_s,
                move_time_s: stats.move_time_s,
                seed: params.seed(),
            },
            final_hash: state.trajectory_hash(),
        };
        if let Some(b) = &best {
            debug_assert_eq!(b.final_hash, m.final_hash);
        }
        if best.as_ref().is_none_or(|b| m.record.wall_time_s < b.record.wall_time_s) {
            best = Some(m);
        }
    }
    Ok(best.expect("at least one repetition"))
}

/// One record per `(agents, v_max, cores)` triple, in that nesting order.
///
/// Every triple sharing `(agents, v_max)` must end in the same state
/// whatever the worker count; a mismatch is reported as an error.
pub fn run_sweep(spec: &SweepSpec, name: &str, grid: &Grid, seed: u64) -> Result<Vec<RunRecord>, BenchError> {
    spec.validate()?;
    require_exits(grid)?;
    let max_agents = *spec.agents_list.iter().max().expect("validated non-empty");
    let free = grid.free_count();
    if max_agents > free {
        return Err(BenchError::Capacity { requested: max_agents, free });
    }
    let potential = Potential::from_grid(grid);
    let mut records = Vec::new();
    for &agents in &spec.agents_list {
        for &v_max in &spec.vmax_list {
            let params = SimParams::new(v_max, seed)?.with_steps(spec.steps)?;
            let mut baseline: Option<(usize, u64)> = None;
            for &cores in &spec.cores_list {
                let m = measure(name, grid, &potential, agents, &params, cores, spec.repetitions)?;
                match baseline {
                    None => baseline = Some((cores, m.final_hash)),
                    Some((baseline_cores, h)) if h != m.final_hash => {
                        return Err(BenchError::Divergence { agents, v_max, cores, baseline_cores });
                    }
                    Some(_) => {}
                }
                records.push(m.record);
            }
        }
    }
    Ok(records)
}

/// Drain runs need somewhere to drain to.
pub fn require_exits(grid: &Grid) -> Result<(), BenchError> {
    if grid.exit_count() == 0 {
        return Err(BenchError::NoExits);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorRow {
    pub agents_initial: usize,
    pub v_max: u8,
    pub cores: usize,
    pub wall_time_s: f64,
    /// `wall_time(1 core) / wall_time(cores)`.
    pub factor: f64,
}

/// Computation speed factors grouped by `(agents, v_max)`, sorted by group
/// then cores. Duplicate configurations keep their fastest time.
pub fn speed_factor(records: &[RunRecord]) -> Result<Vec<FactorRow>, BenchError> {
    let mut groups: BTreeMap<(usize, u8), BTreeMap<usize, f64>> = BTreeMap::new();
    for r in records {
        let t = groups
            .entry((r.agents_initial, r.v_max))
            .or_default()
            .entry(r.cores)
            .or_insert(f64::INFINITY);
        *t = t.min(r.wall_time_s);
    }
    let mut rows = Vec::new();
    for ((agents, v_max), by_cores) in groups {
        let base = *by_cores.get(&1).ok_or(BenchError::MissingBaseline { agents, v_max })?;
        for (cores, wall) in by_cores {
            let factor = if cores == 1 { 1.0 } else { base / wall };
            rows.push(FactorRow {
                agents_initial: agents,
                v_max,
                cores,
                wall_time_s: wall,
                factor,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capacity {
    /// Largest agent count estimated to run within the budget.
    pub agents: usize,
    pub budget_s: f64,
    /// Largest measured count within budget and its time.
    pub lower: (usize, f64),
    /// Smallest measured count over budget. `None` when the scenario filled
    /// up before the budget was exceeded.
    pub upper: Option<(usize, f64)>,
}

/// Doubling search from `start` agents for the budget crossing, followed by
/// linear interpolation between the bracketing measurements (rounded down).
/// `limit` caps the agent count the scenario can hold.
pub fn realtime_capacity_with<F>(budget_s: f64, start: usize, limit: usize, mut wall_time: F) -> Result<Capacity, BenchError>
where
    F: FnMut(usize) -> Result<f64, BenchError>,
{
    if limit == 0 {
        return Err(BenchError::Capacity { requested: start, free: 0 });
    }
    let mut lo = start.min(limit).max(1);
    let mut t_lo = wall_time(lo)?;
    if t_lo > budget_s {
        return Err(BenchError::BelowStart { agents: lo, wall_time_s: t_lo, budget_s });
    }
    loop {
        if lo >= limit {
            return Ok(Capacity { agents: lo, budget_s, lower: (lo, t_lo), upper: None });
        }
        let hi = lo.saturating_mul(2).min(limit);
        let t_hi = wall_time(hi)?;
        if t_hi > budget_s {
            let span = (hi - lo) as f64;
            let est = lo as f64 + (budget_s - t_lo) / (t_hi - t_lo) * span;
            let agents = (est.floor() as usize).clamp(lo, hi - 1);
            return Ok(Capacity { agents, budget_s, lower: (lo, t_lo), upper: Some((hi, t_hi)) });
        }
        lo = hi;
        t_lo = t_hi;
    }
}

/// Real-time capacity of `grid` at a fixed speed and worker count, using
/// `steps * dt` simulated seconds as the wall-clock budget.
pub fn realtime_capacity(
    name: &str,
    grid: &Grid,
    params: &SimParams,
    cores: usize,
    repetitions: usize,
) -> Result<Capacity, BenchError> {
    require_exits(grid)?;
    let potential = Potential::from_grid(grid);
    let budget = params.steps() as f64 * params.dt();
    realtime_capacity_with(budget, REALTIME_START, grid.free_count(), |n| {
        Ok(measure(name, grid, &potential, n, params, cores, repetitions)?.record.wall_time_s)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdRecord {
    /// Persons per m².
    pub density: f64,
    /// m/s.
    pub mean_speed: f64,
    /// Persons per meter per second.
    pub flow: f64,
}

/// Walkable area of a grid in m².
pub fn free_area(grid: &Grid) -> f64 {
    grid.free_count() as f64 * grid.cell_size() * grid.cell_size()
}

/// Density-speed points on a periodic corridor driven by a uniform slope in
/// +x. Each density gets `round(density * area)` agents (at least one); the
/// reported density is the realized one. Speeds are mean x-displacement per
/// step over `measure` steps after `warmup` steps.
pub fn fundamental_diagram(
    corridor: &Grid,
    params: &SimParams,
    densities: &[f64],
    warmup: u64,
    measure: u64,
) -> Result<Vec<FdRecord>, BenchError> {
    if corridor.boundary() != Boundary::PeriodicX || corridor.exit_count() > 0 {
        return Err(BenchError::NotACorridor);
    }
    if measure == 0 {
        return Err(BenchError::ZeroRepetitions);
    }
    let cs = corridor.cell_size();
    let max_density = 1.0 / (cs * cs);
    let area = free_area(corridor);
    let sched = ScheduleParams::new(1)?;
    let mut out = Vec::with_capacity(densities.len());
    for &density in densities {
        if density.is_nan() || density <= 0.0 {
            return Err(BenchError::InvalidDensity(density));
        }
        if density > max_density + 1e-12 {
            return Err(BenchError::DensityTooHigh { density, max: max_density });
        }
        let n = ((density * area).round() as usize).max(1);
        let roster = spawn_agents(corridor, n, params.v_max(), params.seed())?;
        let mut state = SimState::new(corridor.clone(), Potential::GradientX, roster)?;
        for _ in 0..warmup {
            engine::step(&mut state, params, &sched);
        }
        let mut total_dx: i64 = 0;
        let mut before: Vec<i32> = state.agents().iter().map(|a| a.pos.x).collect();
        for _ in 0..measure {
            engine::step(&mut state, params, &sched);
            for (a, x0) in state.agents().iter().zip(before.iter_mut()) {
                total_dx += corridor.x_offset(*x0, a.pos.x) as i64;
                *x0 = a.pos.x;
            }
        }
        let cells_per_step = total_dx as f64 / (n as f64 * measure as f64);
        let mean_speed = cells_per_step * cs / params.dt();
        let density = n as f64 / area;
        out.push(FdRecord {
            density,
            mean_speed,
            flow: density * mean_speed,
        });
    }
    Ok(out)
}

/// Reference walking speed at `density`, Kladek form:
/// `v_f * (1 - exp(-gamma * (1/rho - 1/rho_max)))`, zero at and above jam
/// density.
pub fn weidmann_speed(density: f64) -> f64 {
    if density >= WEIDMANN_JAM_DENSITY {
        return 0.0;
    }
    if density <= 0.0 {
        return WEIDMANN_FREE_SPEED;
    }
    WEIDMANN_FREE_SPEED * (1.0 - (-WEIDMANN_GAMMA * (1.0 / density - 1.0 / WEIDMANN_JAM_DENSITY)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeidmannRow {
    pub density: f64,
    pub model_speed: f64,
    pub reference_speed: f64,
    pub abs_error: f64,
}

pub fn compare_weidmann(fd: &[FdRecord]) -> Vec<WeidmannRow> {
    fd.iter()
        .map(|r| {
            let reference_speed = weidmann_speed(r.density);
            WeidmannRow {
                density: r.density,
                model_speed: r.mean_speed,
                reference_speed,
                abs_error: (r.mean_speed - reference_speed).abs(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_io::{make_corridor, make_plaza};

    fn rec(agents: usize, v_max: u8, cores: usize, wall: f64) -> RunRecord {
        RunRecord {
            scenario_name: "synthetic".into(),
            agents_initial: agents,
            v_max,
            cores,
            steps: 396,
            wall_time_s: wall,
            plan_time_s: 0.0,
            move_time_s: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn factor_arithmetic() {
        let rows = speed_factor(&[rec(10, 4, 1, 100.0), rec(10, 4, 8, 20.0)]).unwrap();
        assert_eq!(rows[0].factor, 1.0);
        assert_eq!(rows[1].factor, 5.0);
    }

    #[test]
    fn ideal_scaling_factors() {
        let t = 37.5;
        let recs: Vec<_> = [1, 2, 4, 8].iter().map(|&c| rec(5, 2, c, t / c as f64)).collect();
        for r in speed_factor(&recs).unwrap() {
            assert!((r.factor - r.cores as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_baseline_named() {
        let e = speed_factor(&[rec(10, 3, 2, 1.0)]).unwrap_err();
        assert_eq!(e.to_string(), "no 1-core baseline for agents=10, v_max=3");
    }

    #[test]
    fn synthetic_capacity() {
        let cap = realtime_capacity_with(396.0, REALTIME_START, usize::MAX, |n| Ok(0.002 * n as f64)).unwrap();
        assert_eq!(cap.agents, 198_000);
        assert_eq!(cap.lower.0, 128_000);
        assert_eq!(cap.upper.unwrap().0, 256_000);
    }

    #[test]
    fn capacity_bracket_holds() {
        for a in [1e-5, 3.3e-4, 0.002, 0.05, 0.3] {
            let cap = realtime_capacity_with(396.0, REALTIME_START, usize::MAX, |n| Ok(a * n as f64)).unwrap();
            let (hi, t_hi) = cap.upper.unwrap();
            assert!(cap.lower.1 <= 396.0 && 396.0 < t_hi);
            assert!(cap.lower.0 <= cap.agents && cap.agents < hi);
        }
    }

    #[test]
    fn capacity_errors_and_limits() {
        let e = realtime_capacity_with(1.0, REALTIME_START, usize::MAX, |_| Ok(2.5)).unwrap_err();
        assert!(matches!(e, BenchError::BelowStart { agents: 1000, .. }));
        let cap = realtime_capacity_with(1.0, REALTIME_START, 3000, |_| Ok(0.1)).unwrap();
        assert_eq!((cap.agents, cap.upper), (3000, None));
    }

    #[test]
    fn weidmann_reference() {
        assert_eq!(weidmann_speed(1e-12), WEIDMANN_FREE_SPEED);
        assert_eq!(weidmann_speed(5.4), 0.0);
        assert_eq!(weidmann_speed(6.0), 0.0);
        let v = 1.34 * (1.0 - (-1.913f64 * (1.0 - 1.0 / 5.4)).exp());
        assert!((weidmann_speed(1.0) - v).abs() < 1e-15);
        assert!((weidmann_speed(1.0) - 1.058_062_856_076_800_4).abs() < 1e-12);
    }

    #[test]
    fn sweep_shapes() {
        let grid = make_plaza(6.0, 2).unwrap();
        let spec = SweepSpec {
            cores_list: vec![1, 2],
            agents_list: vec![5, 10, 20],
            vmax_list: vec![3],
            steps: 5,
            repetitions: 1,
        };
        assert_eq!(run_sweep(&spec, "p", &grid, 1).unwrap().len(), 6);
        let single = SweepSpec { steps: 5, repetitions: 2, ..SweepSpec::default() };
        let small = make_plaza(40.0, 2).unwrap();
        assert_eq!(run_sweep(&single, "p", &small, 1).unwrap().len(), 1);
        let too_many = SweepSpec { agents_list: vec![10_000], ..spec.clone() };
        assert!(matches!(run_sweep(&too_many, "p", &grid, 1), Err(BenchError::Capacity { .. })));
        let no_exit = make_plaza(6.0, 0).unwrap();
        assert!(matches!(run_sweep(&spec, "p", &no_exit, 1), Err(BenchError::NoExits)));
        let empty = SweepSpec { cores_list: vec![], ..spec };
        assert!(matches!(empty.validate(), Err(BenchError::EmptyList("cores"))));
    }

    #[test]
    fn saturated_corridor_is_jammed() {
        let g = make_corridor(10.0, 2.0).unwrap();
        let p = SimParams::new(4, 3).unwrap();
        let fd = fundamental_diagram(&g, &p, &[6.25], 2, 5).unwrap();
        assert_eq!(fd[0].mean_speed, 0.0);
        assert!(fundamental_diagram(&g, &p, &[6.5], 2, 5).is_err());
        let plaza = make_plaza(6.0, 1).unwrap();
        assert!(matches!(fundamental_diagram(&plaza, &p, &[1.0], 1, 1), Err(BenchError::NotACorridor)));
    }
}
