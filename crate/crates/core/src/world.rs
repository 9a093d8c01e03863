//! Scenario geometry, the scenario text format, the static floor field and
//! grid line tracing.
//!
//! A [`Grid`] is immutable once built. The [`StaticField`] derived from it is
//! the 8-connected shortest-path distance to the nearest exit, in cell units.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use thiserror::Error;

/// Default edge length of one cell in meters.
pub const DEFAULT_CELL_SIZE: f64 = 0.4;

const HEADER: &str = "FAST-SCENARIO v1";

/// Integer cell coordinate. `y = 0` is the top row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
}

impl Coord {
    pub const fn new(x: i32, y: i32) -> Self {
        Coord { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Coord::new(self.x + dx, self.y + dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Free,
    Wall,
    Exit,
}

impl CellKind {
    fn from_char(c: char) -> Option<Self> {
        match c {
            '.' => Some(CellKind::Free),
            '#' => Some(CellKind::Wall),
            'E' => Some(CellKind::Exit),
            _ => None,
        }
    }

    fn to_char(self) -> char {
        match self {
            CellKind::Free => '.',
            CellKind::Wall => '#',
            CellKind::Exit => 'E',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    Closed,
    /// Columns wrap in x; the top and bottom rows are solid.
    PeriodicX,
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must be at least 1x1, got {width}x{height}")]
    EmptyGrid { width: usize, height: usize },
    #[error("cell size must be positive and finite, got {0}")]
    BadCellSize(f64),
    #[error("expected {expected} cells for the declared dimensions, got {actual}")]
    CellCount { expected: usize, actual: usize },
    #[error("closed boundary requires wall or exit at border cell ({x}, {y})")]
    OpenBorder { x: usize, y: usize },
    #[error("periodic-x boundary requires a wall at ({x}, {y}) in the top and bottom rows")]
    OpenPeriodicRow { x: usize, y: usize },
}

/// Scenario file parse failure, tagged with the 1-based line it refers to.
#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {kind}")]
pub struct ScenarioError {
    pub line: usize,
    pub kind: ScenarioErrorKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioErrorKind {
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("unexpected end of file, expected {0}")]
    Truncated(&'static str),
    #[error("dimension mismatch: expected {expected} characters, found {found}")]
    RowLength { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected} grid rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("unknown cell character `{0}`")]
    UnknownCell(char),
    #[error("{0}")]
    Grid(GridError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    cell_size: f64,
    boundary: Boundary,
    cells: Vec<CellKind>,
}

impl Grid {
    /// Builds a grid from row-major cells, checking the border rules of
    /// `boundary`.
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        boundary: Boundary,
        cells: Vec<CellKind>,
    ) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::EmptyGrid { width, height });
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(GridError::BadCellSize(cell_size));
        }
        if cells.len() != width * height {
            return Err(GridError::CellCount {
                expected: width * height,
                actual: cells.len(),
            });
        }
        let grid = Grid {
            width,
            height,
            cell_size,
            boundary,
            cells,
        };
        grid.check_border()?;
        Ok(grid)
    }

    fn check_border(&self) -> Result<(), GridError> {
        let kind = |x: usize, y: usize| self.cells[y * self.width + x];
        match self.boundary {
            Boundary::Closed => {
                for y in 0..self.height {
                    for x in 0..self.width {
                        let border = x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height;
                        if border && kind(x, y) == CellKind::Free {
                            return Err(GridError::OpenBorder { x, y });
                        }
                    }
                }
            }
            Boundary::PeriodicX => {
                for &y in &[0, self.height - 1] {
                    for x in 0..self.width {
                        if kind(x, y) != CellKind::Wall {
                            return Err(GridError::OpenPeriodicRow { x, y });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn cells(&self) -> &[CellKind] {
        &self.cells
    }

    /// Maps a possibly out-of-range coordinate onto the grid, wrapping x for
    /// periodic grids. `None` if the coordinate lies outside.
    #[inline]
    pub fn normalize(&self, c: Coord) -> Option<Coord> {
        let (w, h) = (self.width as i32, self.height as i32);
        if c.y < 0 || c.y >= h {
            return None;
        }
        let x = match self.boundary {
            Boundary::Closed if c.x < 0 || c.x >= w => return None,
            Boundary::Closed => c.x,
            Boundary::PeriodicX => c.x.rem_euclid(w),
        };
        Some(Coord::new(x, c.y))
    }

    /// Row-major index of an in-range coordinate.
    #[inline]
    pub fn index(&self, c: Coord) -> usize {
        debug_assert!(self.contains(c), "{c:?} outside grid");
        c.y as usize * self.width + c.x as usize
    }

    #[inline]
    pub fn contains(&self, c: Coord) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn coord_of(&self, index: usize) -> Coord {
        Coord::new((index % self.width) as i32, (index / self.width) as i32)
    }

    /// Kind of an in-range coordinate.
    #[inline]
    pub fn kind(&self, c: Coord) -> CellKind {
        self.cells[self.index(c)]
    }

    /// Kind after normalization; anything off-grid reads as wall.
    #[inline]
    pub fn kind_at(&self, c: Coord) -> CellKind {
        match self.normalize(c) {
            Some(c) => self.kind(c),
            None => CellKind::Wall,
        }
    }

    /// Free cells in row-major order.
    pub fn free_cells(&self) -> Vec<Coord> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == CellKind::Free)
            .map(|(i, _)| self.coord_of(i))
            .collect()
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|k| **k == CellKind::Free).count()
    }

    pub fn exit_count(&self) -> usize {
        self.cells.iter().filter(|k| **k == CellKind::Exit).count()
    }

    /// Signed x offset from `a` to `b`. On periodic grids the shorter of the
    /// direct and wrapped offsets is taken; a tie keeps the direct one.
    #[inline]
    pub fn x_offset(&self, a: i32, b: i32) -> i32 {
        let direct = b - a;
        if self.boundary == Boundary::Closed || direct == 0 {
            return direct;
        }
        let w = self.width as i32;
        let wrapped = direct - direct.signum() * w;
        if wrapped.abs() < direct.abs() {
            wrapped
        } else {
            direct
        }
    }
}

/// Parses the `FAST-SCENARIO v1` text format.
pub fn parse_scenario(text: &str) -> Result<Grid, ScenarioError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let err = |line, kind| ScenarioError { line, kind };

    let mut next = |what: &'static str| {
        lines.next().ok_or(ScenarioErrorKind::Truncated(what))
    };
    let last_line = text.lines().count();

    let (n, l) = next("header").map_err(|k| err(last_line + 1, k))?;
    if l.trim() != HEADER {
        return Err(err(n, header_err(HEADER, l)));
    }
    let (n, l) = next("width").map_err(|k| err(last_line + 1, k))?;
    let width: usize = keyed_value(l, "width").ok_or_else(|| err(n, header_err("width <int>", l)))?;
    let (n, l) = next("height").map_err(|k| err(last_line + 1, k))?;
    let height: usize =
        keyed_value(l, "height").ok_or_else(|| err(n, header_err("height <int>", l)))?;
    let (n, l) = next("cell_size").map_err(|k| err(last_line + 1, k))?;
    let cell_size: f64 = keyed_value(l, "cell_size")
        .ok_or_else(|| err(n, header_err("cell_size <decimal meters>", l)))?;
    let (n, l) = next("boundary").map_err(|k| err(last_line + 1, k))?;
    let boundary = match l.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["boundary", "closed"] => Boundary::Closed,
        ["boundary", "periodic-x"] => Boundary::PeriodicX,
        _ => return Err(err(n, header_err("boundary closed|periodic-x", l))),
    };
    let (n, l) = next("grid:").map_err(|k| err(last_line + 1, k))?;
    if l.trim() != "grid:" {
        return Err(err(n, header_err("grid:", l)));
    }
    let body_start = n + 1;

    let mut cells = Vec::with_capacity(width * height);
    let mut rows = 0;
    let mut rows_end = n;
    for (n, l) in lines {
        if rows == height {
            if l.trim().is_empty() {
                continue;
            }
            return Err(err(n, ScenarioErrorKind::RowCount { expected: height, found: rows + 1 }));
        }
        let found = l.chars().count();
        if found != width {
            return Err(err(n, ScenarioErrorKind::RowLength { expected: width, found }));
        }
        for c in l.chars() {
            let kind = CellKind::from_char(c).ok_or_else(|| err(n, ScenarioErrorKind::UnknownCell(c)))?;
            cells.push(kind);
        }
        rows += 1;
        rows_end = n;
    }
    if rows != height {
        return Err(err(rows_end + 1, ScenarioErrorKind::RowCount { expected: height, found: rows }));
    }

    Grid::new(width, height, cell_size, boundary, cells).map_err(|e| {
        let line = match e {
            GridError::OpenBorder { y, .. } | GridError::OpenPeriodicRow { y, .. } => body_start + y,
            GridError::BadCellSize(_) => 4,
            _ => 2,
        };
        err(line, ScenarioErrorKind::Grid(e))
    })
}

fn header_err(expected: &str, found: &str) -> ScenarioErrorKind {
    ScenarioErrorKind::Header {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

fn keyed_value<T: std::str::FromStr>(line: &str, key: &str) -> Option<T> {
    let mut it = line.split_whitespace();
    if it.next()? != key {
        return None;
    }
    let v = it.next()?.parse().ok()?;
    it.next().is_none().then_some(v)
}

/// Writes a grid in the scenario text format; [`parse_scenario`] reads it back
/// unchanged.
pub fn serialize_scenario(grid: &Grid) -> String {
    let mut out = String::with_capacity(grid.cells.len() + grid.height + 96);
    let boundary = match grid.boundary {
        Boundary::Closed => "closed",
        Boundary::PeriodicX => "periodic-x",
    };
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "width {}", grid.width);
    let _ = writeln!(out, "height {}", grid.height);
    let _ = writeln!(out, "cell_size {}", grid.cell_size);
    let _ = writeln!(out, "boundary {boundary}");
    let _ = writeln!(out, "grid:");
    for row in grid.cells.chunks(grid.width) {
        out.extend(row.iter().map(|k| k.to_char()));
        out.push('\n');
    }
    out
}

/// Per-cell distance to the nearest exit in cell units.
///
/// Walls and cells with no path to an exit hold [`StaticField::UNREACHABLE`].
#[derive(Debug, Clone, PartialEq)]
pub struct StaticField {
    width: usize,
    values: Vec<f64>,
}

impl StaticField {
    pub const UNREACHABLE: f64 = f64::INFINITY;

    pub fn get(&self, c: Coord) -> f64 {
        self.values[c.y as usize * self.width + c.x as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_reachable(&self, c: Coord) -> bool {
        self.get(c).is_finite()
    }
}

/// Potential the planning phase descends.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// Distance-to-exit field of the grid.
    Static(StaticField),
    /// Uniform slope decreasing by one per cell in +x (`S = -x`), used on
    /// periodic corridors to drive a steady stream.
    GradientX,
}

impl Potential {
    pub fn from_grid(grid: &Grid) -> Self {
        Potential::Static(compute_static_field(grid))
    }
}

/// The 8 neighbor offsets with their step length.
pub const NEIGHBORS: [(i32, i32, f64); 8] = [
    (-1, -1, std::f64::consts::SQRT_2),
    (0, -1, 1.0),
    (1, -1, std::f64::consts::SQRT_2),
    (-1, 0, 1.0),
    (1, 0, 1.0),
    (-1, 1, std::f64::consts::SQRT_2),
    (0, 1, 1.0),
    (1, 1, std::f64::consts::SQRT_2),
];

/// Whether a single hop from `from` by `(dx, dy)` is allowed: the target is
/// not a wall and a diagonal hop does not squeeze between two walls.
#[inline]
pub fn hop_allowed(grid: &Grid, from: Coord, dx: i32, dy: i32) -> bool {
    if grid.kind_at(from.offset(dx, dy)) == CellKind::Wall {
        return false;
    }
    if dx != 0 && dy != 0 {
        let side_a = grid.kind_at(from.offset(dx, 0)) == CellKind::Wall;
        let side_b = grid.kind_at(from.offset(0, dy)) == CellKind::Wall;
        if side_a && side_b {
            return false;
        }
    }
    true
}

#[derive(PartialEq)]
struct Frontier {
    dist: f64,
    index: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then index for a fixed pop order
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra from every exit over 8-connected hops of length 1
/// and √2. Corner cutting between two walls is not allowed.
pub fn compute_static_field(grid: &Grid) -> StaticField {
    let mut values = vec![StaticField::UNREACHABLE; grid.cells.len()];
    let mut heap = BinaryHeap::new();
    for (i, k) in grid.cells.iter().enumerate() {
        if *k == CellKind::Exit {
            values[i] = 0.0;
            heap.push(Frontier { dist: 0.0, index: i });
        }
    }

    while let Some(Frontier { dist, index }) = heap.pop() {
        if dist > values[index] {
            continue;
        }
        let here = grid.coord_of(index);
        for &(dx, dy, len) in &NEIGHBORS {
            // hops are symmetric, so checking from `here` covers the reverse edge
            if !hop_allowed(grid, here, dx, dy) {
                continue;
            }
            let Some(next) = grid.normalize(here.offset(dx, dy)) else {
                continue;
            };
            let ni = grid.index(next);
            let nd = dist + len;
            if nd < values[ni] {
                values[ni] = nd;
                heap.push(Frontier { dist: nd, index: ni });
            }
        }
    }

    StaticField {
        width: grid.width,
        values,
    }
}

/// Offsets visited by a Bresenham line from the origin to `(dx, dy)`,
/// excluding the origin and including the end point.
pub fn line_offsets(dx: i32, dy: i32) -> LineOffsets {
    LineOffsets {
        x: 0,
        y: 0,
        end_x: dx,
        end_y: dy,
        adx: dx.abs(),
        ady: -dy.abs(),
        sx: dx.signum(),
        sy: dy.signum(),
        err: dx.abs() - dy.abs(),
    }
}

#[derive(Debug, Clone)]
pub struct LineOffsets {
    x: i32,
    y: i32,
    end_x: i32,
    end_y: i32,
    adx: i32,
    ady: i32,
    sx: i32,
    sy: i32,
    err: i32,
}

impl Iterator for LineOffsets {
    type Item = (i32, i32);

    fn next(&mut self) -> Option<(i32, i32)> {
        if self.x == self.end_x && self.y == self.end_y {
            return None;
        }
        let e2 = 2 * self.err;
        if e2 >= self.ady {
            self.err += self.ady;
            self.x += self.sx;
        }
        if e2 <= self.adx {
            self.err += self.adx;
            self.y += self.sy;
        }
        Some((self.x, self.y))
    }
}

/// Offset from `a` to `b` as traced by lines on this grid (shorter wrap on
/// periodic grids).
#[inline]
pub fn trace_offset(grid: &Grid, a: Coord, b: Coord) -> (i32, i32) {
    (grid.x_offset(a.x, b.x), b.y - a.y)
}

/// True when every cell on the Bresenham line from `a` to `b` (excluding `a`)
/// is not a wall and no diagonal hop squeezes between two walls.
pub fn line_of_sight(grid: &Grid, a: Coord, b: Coord) -> bool {
    let (dx, dy) = trace_offset(grid, a, b);
    clear_offset_line(grid, a, dx, dy)
}

/// [`line_of_sight`] for an explicit offset from `a`.
#[inline]
pub fn clear_offset_line(grid: &Grid, a: Coord, dx: i32, dy: i32) -> bool {
    let mut prev = (0, 0);
    for (ox, oy) in line_offsets(dx, dy) {
        let from = a.offset(prev.0, prev.1);
        if !hop_allowed(grid, from, ox - prev.0, oy - prev.1) {
            return false;
        }
        prev = (ox, oy);
    }
    true
}
