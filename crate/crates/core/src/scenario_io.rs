//! Agent spawning, standard geometries and the timing CSV.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::agents::{bounded, rng_u64, Agent};
use crate::world::{Boundary, CellKind, Grid, DEFAULT_CELL_SIZE};

/// Column header of the timing CSV.
pub const CSV_HEADER: &str = "scenario,agents_initial,v_max,cores,steps,wall_time_s,plan_time_s,move_time_s,seed";

/// Random stream id used for spawning.
const SPAWN_STREAM: u64 = (1 << 63) | 1;

#[derive(Debug, Error)]
pub enum ScenarioIoError {
    #[error("cannot place {requested} agents on {free} free cells")]
    Capacity { requested: usize, free: usize },
    #[error("{what} of {meters} m gives {cells} cells; at least 3 are required")]
    Degenerate { what: &'static str, meters: f64, cells: usize },
    #[error("{exits} exits do not fit on a border of {slots} cells")]
    TooManyExits { exits: usize, slots: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: line {line}: {message}")]
    Record { path: String, line: u64, message: String },
}

/// Places `n` agents on distinct free cells by a seeded partial Fisher-Yates
/// shuffle of the row-major free-cell list.
pub fn spawn_agents(grid: &Grid, n: usize, v_max: u8, seed: u64) -> Result<Vec<Agent>, ScenarioIoError> {
    let mut free = grid.free_cells();
    if n > free.len() {
        return Err(ScenarioIoError::Capacity { requested: n, free: free.len() });
    }
    for k in 0..n {
        let remaining = (free.len() - k) as u64;
        let j = k + bounded(rng_u64(seed, SPAWN_STREAM, 0, k as u64), remaining) as usize;
        free.swap(k, j);
    }
    Ok(free[..n]
        .iter()
        .enumerate()
        .map(|(i, &pos)| Agent::new(i as u32, pos, v_max))
        .collect())
}

fn cells_for(what: &'static str, meters: f64) -> Result<usize, ScenarioIoError> {
    let cells = (meters / DEFAULT_CELL_SIZE).round();
    if cells.is_nan() || cells < 3.0 {
        return Err(ScenarioIoError::Degenerate {
            what,
            meters,
            cells: if cells.is_finite() && cells > 0.0 { cells as usize } else { 0 },
        });
    }
    Ok(cells as usize)
}

/// Square room with a solid border and `exits` single-cell exits spread
/// evenly around the border. Corners are never exits.
pub fn make_plaza(side_m: f64, exits: usize) -> Result<Grid, ScenarioIoError> {
    let n = cells_for("plaza side", side_m)?;
    let mut cells = vec![CellKind::Free; n * n];
    for y in 0..n {
        for x in 0..n {
            if x == 0 || y == 0 || x + 1 == n || y + 1 == n {
                cells[y * n + x] = CellKind::Wall;
            }
        }
    }
    // border ring without corners, clockwise from the top-left
    let m = n - 2;
    let mut ring = Vec::with_capacity(4 * m);
    ring.extend((1..=m).map(|x| (x, 0)));
    ring.extend((1..=m).map(|y| (n - 1, y)));
    ring.extend((1..=m).rev().map(|x| (x, n - 1)));
    ring.extend((1..=m).rev().map(|y| (0, y)));
    if exits > ring.len() {
        return Err(ScenarioIoError::TooManyExits { exits, slots: ring.len() });
    }
    for i in 0..exits {
        let (x, y) = ring[(2 * i + 1) * ring.len() / (2 * exits)];
        cells[y * n + x] = CellKind::Exit;
    }
    Ok(Grid::new(n, n, DEFAULT_CELL_SIZE, Boundary::Closed, cells).expect("plaza border is solid"))
}

/// Periodic-x corridor without exits. The width includes the two wall rows.
pub fn make_corridor(length_m: f64, width_m: f64) -> Result<Grid, ScenarioIoError> {
    let w = cells_for("corridor length", length_m)?;
    let h = cells_for("corridor width", width_m)?;
    let mut cells = vec![CellKind::Free; w * h];
    cells[..w].fill(CellKind::Wall);
    cells[(h - 1) * w..].fill(CellKind::Wall);
    Ok(Grid::new(w, h, DEFAULT_CELL_SIZE, Boundary::PeriodicX, cells).expect("corridor rows are solid"))
}

/// One timing measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario_name: String,
    pub agents_initial: usize,
    pub v_max: u8,
    pub cores: usize,
    pub steps: u64,
    pub wall_time_s: f64,
    pub plan_time_s: f64,
    pub move_time_s: f64,
    pub seed: u64,
}

/// Serializes records; seconds carry six fractional digits.
pub fn write_csv_to<W: Write>(records: &[RunRecord], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.write_record([
            r.scenario_name.clone(),
            r.agents_initial.to_string(),
            r.v_max.to_string(),
            r.cores.to_string(),
            r.steps.to_string(),
            format!("{:.6}", r.wall_time_s),
            format!("{:.6}", r.plan_time_s),
            format!("{:.6}", r.move_time_s),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[RunRecord], path: &Path) -> Result<(), ScenarioIoError> {
    let name = path.display().to_string();
    let file = File::create(path).map_err(|source| ScenarioIoError::Io { path: name.clone(), source })?;
    write_csv_to(records, file).map_err(|source| ScenarioIoError::Csv { path: name, source })
}

pub fn read_csv_from<R: Read>(input: R, name: &str) -> Result<Vec<RunRecord>, ScenarioIoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let csv_err = |source| ScenarioIoError::Csv { path: name.to_string(), source };
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(ScenarioIoError::Record {
            path: name.to_string(),
            line: 1,
            message: format!("expected header `{CSV_HEADER}`"),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |field: &str| ScenarioIoError::Record {
            path: name.to_string(),
            line,
            message: format!("invalid {field}"),
        };
        let get = |i: usize| row.get(i).unwrap_or_default();
        out.push(RunRecord {
            scenario_name: get(0).to_string(),
            agents_initial: get(1).parse().map_err(|_| bad("agents_initial"))?,
            v_max: get(2).parse().map_err(|_| bad("v_max"))?,
            cores: get(3).parse().map_err(|_| bad("cores"))?,
            steps: get(4).parse().map_err(|_| bad("steps"))?,
            wall_time_s: get(5).parse().map_err(|_| bad("wall_time_s"))?,
            plan_time_s: get(6).parse().map_err(|_| bad("plan_time_s"))?,
            move_time_s: get(7).parse().map_err(|_| bad("move_time_s"))?,
            seed: get(8).parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>, ScenarioIoError> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|source| ScenarioIoError::Io { path: name.clone(), source })?;
    read_csv_from(file, &name)
}
