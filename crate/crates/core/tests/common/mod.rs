//! Test-only oracles and random scenario builders. Nothing here calls into
//! the field builder or the candidate enumerator it is used to check.
#![allow(dead_code)]

use std::f64::consts::SQRT_2;

use fastped::agents::Agent;
use fastped::world::{line_of_sight, Boundary, CellKind, Coord, Grid, Potential};
use fastped::SimState;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grid_from_rows(rows: &[&str], boundary: Boundary) -> Grid {
    let cells = rows
        .iter()
        .flat_map(|r| r.chars())
        .map(|c| match c {
            '#' => CellKind::Wall,
            'E' => CellKind::Exit,
            _ => CellKind::Free,
        })
        .collect();
    Grid::new(rows[0].len(), rows.len(), 0.4, boundary, cells).unwrap()
}

/// Closed room with a solid border, interior walls at `wall_frac`, and
/// `exits` exits on non-corner border cells.
pub fn random_closed_grid(r: &mut impl Rng, w: usize, h: usize, wall_frac: f64, exits: usize) -> Grid {
    let mut cells = vec![CellKind::Free; w * h];
    let mut border = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let on_border = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            if on_border {
                cells[y * w + x] = CellKind::Wall;
                let corner = (x == 0 || x + 1 == w) && (y == 0 || y + 1 == h);
                if !corner {
                    border.push(y * w + x);
                }
            } else if r.gen_bool(wall_frac) {
                cells[y * w + x] = CellKind::Wall;
            }
        }
    }
    for &i in border.choose_multiple(r, exits) {
        cells[i] = CellKind::Exit;
    }
    Grid::new(w, h, 0.4, Boundary::Closed, cells).unwrap()
}

/// Periodic-x corridor with solid top/bottom rows and scattered walls.
pub fn random_periodic_grid(r: &mut impl Rng, w: usize, h: usize, wall_frac: f64, exits: usize) -> Grid {
    let mut cells = vec![CellKind::Free; w * h];
    for y in 0..h {
        for x in 0..w {
            if y == 0 || y + 1 == h || r.gen_bool(wall_frac) {
                cells[y * w + x] = CellKind::Wall;
            }
        }
    }
    let interior: Vec<usize> = (w..w * (h - 1)).collect();
    for &i in interior.choose_multiple(r, exits) {
        cells[i] = CellKind::Exit;
    }
    Grid::new(w, h, 0.4, Boundary::PeriodicX, cells).unwrap()
}

fn wrap(grid: &Grid, x: i32, y: i32) -> Option<(usize, usize)> {
    let (w, h) = (grid.width() as i32, grid.height() as i32);
    if y < 0 || y >= h {
        return None;
    }
    let x = match grid.boundary() {
        Boundary::PeriodicX => x.rem_euclid(w),
        Boundary::Closed if x < 0 || x >= w => return None,
        Boundary::Closed => x,
    };
    Some((x as usize, y as usize))
}

fn is_wall(grid: &Grid, x: i32, y: i32) -> bool {
    match wrap(grid, x, y) {
        Some((x, y)) => grid.cells()[y * grid.width() + x] == CellKind::Wall,
        None => true,
    }
}

/// Bellman-Ford style relaxation to a fixed point: repeatedly lowers every
/// cell through its 8 neighbors until nothing changes.
pub fn field_oracle(grid: &Grid) -> Vec<f64> {
    let (w, h) = (grid.width(), grid.height());
    let mut s: Vec<f64> = grid
        .cells()
        .iter()
        .map(|k| if *k == CellKind::Exit { 0.0 } else { f64::INFINITY })
        .collect();
    loop {
        let mut changed = false;
        for y in 0..h as i32 {
            for x in 0..w as i32 {
                if is_wall(grid, x, y) {
                    continue;
                }
                let here = y as usize * w + x as usize;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if dx == 0 && dy == 0 || is_wall(grid, x + dx, y + dy) {
                            continue;
                        }
                        let diagonal = dx != 0 && dy != 0;
                        if diagonal && is_wall(grid, x + dx, y) && is_wall(grid, x, y + dy) {
                            continue;
                        }
                        let (nx, ny) = wrap(grid, x + dx, y + dy).unwrap();
                        let cand = s[ny * w + nx] + if diagonal { SQRT_2 } else { 1.0 };
                        if cand < s[here] - 1e-12 {
                            s[here] = cand;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return s;
        }
    }
}

/// Chebyshev distance, wrapping in x on periodic grids.
pub fn chebyshev(grid: &Grid, a: Coord, b: Coord) -> i32 {
    let mut dx = (a.x - b.x).abs();
    if grid.boundary() == Boundary::PeriodicX {
        dx = dx.min(grid.width() as i32 - dx);
    }
    dx.max((a.y - b.y).abs())
}

/// Scans every cell of the grid and applies the candidate filters one by one.
pub fn candidate_oracle(state: &SimState, agent: &Agent) -> Vec<Coord> {
    let grid = state.grid();
    let mut out = Vec::new();
    for y in 0..grid.height() as i32 {
        for x in 0..grid.width() as i32 {
            let c = Coord::new(x, y);
            if chebyshev(grid, agent.pos, c) > agent.v_max as i32 {
                continue;
            }
            if grid.kind(c) == CellKind::Wall {
                continue;
            }
            if matches!(state.occupant(c), Some(id) if id != agent.id) {
                continue;
            }
            if line_of_sight(grid, agent.pos, c) {
                out.push(c);
            }
        }
    }
    out
}

/// Random agents on distinct free cells.
pub fn random_agents(r: &mut impl Rng, grid: &Grid, n: usize, v_max: u8) -> Vec<Agent> {
    let mut free = grid.free_cells();
    free.shuffle(r);
    free.truncate(n);
    free.into_iter()
        .enumerate()
        .map(|(i, pos)| Agent::new(i as u32, pos, v_max))
        .collect()
}

pub struct RandomScenario {
    pub state: SimState,
    pub v_max: u8,
}

/// Random closed or periodic scenario no larger than `max_side` and
/// `max_agents`.
pub fn random_scenario(r: &mut impl Rng, max_side: usize, max_agents: usize) -> RandomScenario {
    let w = r.gen_range(8..=max_side);
    let h = r.gen_range(8..=max_side);
    let wall_frac = r.gen_range(0.0..0.25);
    let v_max = r.gen_range(1..=5u8);
    let grid = if r.gen_bool(0.75) {
        let exits = r.gen_range(0..=6);
        random_closed_grid(r, w, h, wall_frac, exits)
    } else {
        let exits = r.gen_range(0..=3);
        random_periodic_grid(r, w.max(12), h, wall_frac, exits)
    };
    let n = r.gen_range(0..=max_agents.min(grid.free_count()));
    let agents = random_agents(r, &grid, n, v_max);
    let potential = Potential::from_grid(&grid);
    RandomScenario {
        state: SimState::new(grid, potential, agents).unwrap(),
        v_max,
    }
}
