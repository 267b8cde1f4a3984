//! Discrete 3D flight environment.
//!
//! The region is a lattice of `nx × ny × nz` cells. Obstacles occupy whole
//! cells, the base station sits on a ground-plane column and the UAV takes
//! off from a fixed start cell. Moves are 6-connected unit displacements.

use std::fmt;

use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or querying a grid world.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must be positive, got {nx}x{ny}x{nz}")]
    EmptyDimension { nx: u32, ny: u32, nz: u32 },
    #[error("cell sizes must be positive and finite (cell_size_m={size}, cell_height_m={height})")]
    InvalidCellSize { size: f64, height: f64 },
    #[error("region must be square: nx*cell_size_m = {x_m} m, ny*cell_size_m = {y_m} m")]
    NonSquareRegion { x_m: f64, y_m: f64 },
    #[error("grid height {height_m} m exceeds the maximum altitude {max_m} m")]
    AboveMaxAltitude { height_m: f64, max_m: f64 },
    #[error("obstacle density {0} is outside [0, 0.5]")]
    DensityOutOfRange(f64),
    #[error("{what} cell {cell} is outside the grid")]
    OutOfBounds { what: &'static str, cell: Cell },
    #[error("grid has {eligible} cells eligible for obstacles but {requested} were requested")]
    TooManyObstacles { requested: usize, eligible: usize },
    #[error("no free cell is available")]
    NoFreeCell,
}

/// Lattice geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: u32,
    pub ny: u32,
    pub nz: u32,
    /// Horizontal edge length of a cell in metres.
    pub cell_size_m: f64,
    /// Vertical edge length of a cell in metres.
    pub cell_height_m: f64,
}

impl Default for GridSpec {
    /// 1 km × 1 km × 100 m region as 20 × 20 × 5 cells of 50 m × 50 m × 20 m.
    fn default() -> Self {
        Self {
            nx: 20,
            ny: 20,
            nz: 5,
            cell_size_m: 50.0,
            cell_height_m: 20.0,
        }
    }
}

impl GridSpec {
    pub fn new(nx: u32, ny: u32, nz: u32, cell_size_m: f64, cell_height_m: f64) -> Result<Self, GridError> {
        let spec = Self {
            nx,
            ny,
            nz,
            cell_size_m,
            cell_height_m,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(GridError::EmptyDimension {
                nx: self.nx,
                ny: self.ny,
                nz: self.nz,
            });
        }
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.cell_size_m) || !ok(self.cell_height_m) {
            return Err(GridError::InvalidCellSize {
                size: self.cell_size_m,
                height: self.cell_height_m,
            });
        }
        if self.nx != self.ny {
            return Err(GridError::NonSquareRegion {
                x_m: f64::from(self.nx) * self.cell_size_m,
                y_m: f64::from(self.ny) * self.cell_size_m,
            });
        }
        Ok(())
    }

    /// Fails when the top of the lattice is above `max_altitude_m`.
    pub fn check_altitude(&self, max_altitude_m: f64) -> Result<(), GridError> {
        let height_m = self.height_m();
        if height_m > max_altitude_m {
            return Err(GridError::AboveMaxAltitude {
                height_m,
                max_m: max_altitude_m,
            });
        }
        Ok(())
    }

    pub fn region_side_m(&self) -> f64 {
        f64::from(self.nx) * self.cell_size_m
    }

    pub fn height_m(&self) -> f64 {
        f64::from(self.nz) * self.cell_height_m
    }

    pub fn cell_count(&self) -> usize {
        self.nx as usize * self.ny as usize * self.nz as usize
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.ix < self.nx && c.iy < self.ny && c.iz < self.nz
    }

    /// Row-major index with x fastest.
    pub fn index(&self, c: Cell) -> usize {
        debug_assert!(self.contains(c));
        (c.iz as usize * self.ny as usize + c.iy as usize) * self.nx as usize + c.ix as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        let nx = self.nx as usize;
        let ny = self.ny as usize;
        Cell::new((index % nx) as u32, ((index / nx) % ny) as u32, (index / (nx * ny)) as u32)
    }

    /// All cells in index order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count()).map(move |i| self.cell_at(i))
    }

    /// Centre of `c` in metres.
    pub fn cell_center_m(&self, c: Cell) -> [f64; 3] {
        [
            (f64::from(c.ix) + 0.5) * self.cell_size_m,
            (f64::from(c.iy) + 0.5) * self.cell_size_m,
            (f64::from(c.iz) + 0.5) * self.cell_height_m,
        ]
    }

    /// Euclidean distance between cell centres in metres.
    pub fn distance_m(&self, a: Cell, b: Cell) -> f64 {
        let dx = (f64::from(a.ix) - f64::from(b.ix)) * self.cell_size_m;
        let dy = (f64::from(a.iy) - f64::from(b.iy)) * self.cell_size_m;
        let dz = (f64::from(a.iz) - f64::from(b.iz)) * self.cell_height_m;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Axis-aligned (L1) distance between cell centres in metres.
    pub fn manhattan_m(&self, a: Cell, b: Cell) -> f64 {
        f64::from(a.ix.abs_diff(b.ix)) * self.cell_size_m
            + f64::from(a.iy.abs_diff(b.iy)) * self.cell_size_m
            + f64::from(a.iz.abs_diff(b.iz)) * self.cell_height_m
    }

    /// The cell reached from `c` by `a`, or `None` when it leaves the lattice.
    pub fn neighbor(&self, c: Cell, a: Action) -> Option<Cell> {
        let (dx, dy, dz) = a.delta();
        let step = |v: u32, d: i32, n: u32| -> Option<u32> {
            let next = v.checked_add_signed(d)?;
            (next < n).then_some(next)
        };
        Some(Cell::new(
            step(c.ix, dx, self.nx)?,
            step(c.iy, dy, self.ny)?,
            step(c.iz, dz, self.nz)?,
        ))
    }
}

/// Integer lattice coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct Cell {
    pub ix: u32,
    pub iy: u32,
    pub iz: u32,
}

impl Cell {
    pub const fn new(ix: u32, iy: u32, iz: u32) -> Self {
        Self { ix, iy, iz }
    }

    /// Number of unit moves separating two cells.
    pub fn grid_steps(self, other: Cell) -> u32 {
        self.ix.abs_diff(other.ix) + self.iy.abs_diff(other.iy) + self.iz.abs_diff(other.iz)
    }

    fn same_column(self, other: Cell) -> bool {
        self.ix == other.ix && self.iy == other.iy
    }
}

impl From<[u32; 3]> for Cell {
    fn from(v: [u32; 3]) -> Self {
        Cell::new(v[0], v[1], v[2])
    }
}

impl From<Cell> for [u32; 3] {
    fn from(c: Cell) -> Self {
        [c.ix, c.iy, c.iz]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.ix, self.iy, self.iz)
    }
}

/// Unit moves along the lattice axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
    PlusZ,
    MinusZ,
}

impl Action {
    pub const COUNT: usize = 6;

    pub const ALL: [Action; 6] = [
        Action::PlusX,
        Action::MinusX,
        Action::PlusY,
        Action::MinusY,
        Action::PlusZ,
        Action::MinusZ,
    ];

    /// Moves available when altitude is locked.
    pub const HORIZONTAL: [Action; 4] = [Action::PlusX, Action::MinusX, Action::PlusY, Action::MinusY];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn delta(self) -> (i32, i32, i32) {
        match self {
            Action::PlusX => (1, 0, 0),
            Action::MinusX => (-1, 0, 0),
            Action::PlusY => (0, 1, 0),
            Action::MinusY => (0, -1, 0),
            Action::PlusZ => (0, 0, 1),
            Action::MinusZ => (0, 0, -1),
        }
    }

    /// Candidate action set for a flight mode.
    pub fn candidates(altitude_locked: bool) -> &'static [Action] {
        if altitude_locked {
            &Self::HORIZONTAL
        } else {
            &Self::ALL
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepEvent {
    Moved,
    BlockedAtBoundary,
    CrashedIntoObstacle,
    ArrivedAtDestination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub next: Cell,
    pub event: StepEvent,
}

/// An immutable environment instance.
#[derive(Debug, Clone, Serialize)]
pub struct GridWorld {
    spec: GridSpec,
    obstacle_density: f64,
    start: Cell,
    base_station: Cell,
    /// Sorted by lattice index.
    obstacles: Vec<Cell>,
    #[serde(skip)]
    occupied: Vec<bool>,
    /// Cells a destination may be drawn from: not an obstacle, not the start.
    #[serde(skip)]
    free: Vec<Cell>,
}

impl GridWorld {
    /// Places `round(density · cell_count)` obstacles uniformly at random,
    /// never on the start cell or the base-station column.
    pub fn build(spec: GridSpec, density: f64, seed: u64, start: Cell, bs_xy: Cell) -> Result<Self, GridError> {
        spec.validate()?;
        if !(0.0..=0.5).contains(&density) {
            return Err(GridError::DensityOutOfRange(density));
        }
        if !spec.contains(start) {
            return Err(GridError::OutOfBounds { what: "start", cell: start });
        }
        let base_station = Cell::new(bs_xy.ix, bs_xy.iy, 0);
        if !spec.contains(base_station) {
            return Err(GridError::OutOfBounds {
                what: "base station",
                cell: base_station,
            });
        }

        let requested = (density * spec.cell_count() as f64).round() as usize;
        let eligible: Vec<Cell> = spec
            .cells()
            .filter(|&c| c != start && !c.same_column(base_station))
            .collect();
        if requested > eligible.len() {
            return Err(GridError::TooManyObstacles {
                requested,
                eligible: eligible.len(),
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obstacles: Vec<Cell> = index::sample(&mut rng, eligible.len(), requested)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        obstacles.sort_by_key(|&c| spec.index(c));

        Ok(Self::assemble(spec, density, start, base_station, obstacles))
    }

    /// Builds a world with an explicit obstacle layout.
    pub fn with_obstacles(spec: GridSpec, start: Cell, bs_xy: Cell, obstacles: &[Cell]) -> Result<Self, GridError> {
        spec.validate()?;
        let base_station = Cell::new(bs_xy.ix, bs_xy.iy, 0);
        for (what, cell) in [("start", start), ("base station", base_station)] {
            if !spec.contains(cell) {
                return Err(GridError::OutOfBounds { what, cell });
            }
        }
        let mut cells: Vec<Cell> = Vec::with_capacity(obstacles.len());
        for &c in obstacles {
            if !spec.contains(c) {
                return Err(GridError::OutOfBounds { what: "obstacle", cell: c });
            }
            if c == start || c.same_column(base_station) {
                continue;
            }
            cells.push(c);
        }
        cells.sort_by_key(|&c| spec.index(c));
        cells.dedup();
        let density = cells.len() as f64 / spec.cell_count() as f64;
        Ok(Self::assemble(spec, density, start, base_station, cells))
    }

    fn assemble(spec: GridSpec, obstacle_density: f64, start: Cell, base_station: Cell, obstacles: Vec<Cell>) -> Self {
        let mut occupied = vec![false; spec.cell_count()];
        for &c in &obstacles {
            occupied[spec.index(c)] = true;
        }
        let free = spec
            .cells()
            .filter(|&c| c != start && !occupied[spec.index(c)])
            .collect();
        Self {
            spec,
            obstacle_density,
            start,
            base_station,
            obstacles,
            occupied,
            free,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    /// Ground-plane cell of the base-station column (`iz` is always 0).
    pub fn base_station(&self) -> Cell {
        self.base_station
    }

    pub fn obstacle_density(&self) -> f64 {
        self.obstacle_density
    }

    pub fn obstacles(&self) -> &[Cell] {
        &self.obstacles
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.spec.contains(c) && self.occupied[self.spec.index(c)]
    }

    /// Free cells other than the start; destinations are drawn from these.
    pub fn free_cells(&self) -> &[Cell] {
        &self.free
    }

    /// Moves one cell from `at`. Leaving the lattice keeps the UAV in place;
    /// entering an obstacle reports a crash but still moves into it.
    pub fn apply_action(&self, at: Cell, a: Action, dest: Cell) -> StepOutcome {
        match self.spec.neighbor(at, a) {
            None => StepOutcome {
                next: at,
                event: StepEvent::BlockedAtBoundary,
            },
            Some(next) if next == dest => StepOutcome {
                next,
                event: StepEvent::ArrivedAtDestination,
            },
            Some(next) if self.is_obstacle(next) => StepOutcome {
                next,
                event: StepEvent::CrashedIntoObstacle,
            },
            Some(next) => StepOutcome {
                next,
                event: StepEvent::Moved,
            },
        }
    }

    pub fn distance_m(&self, a: Cell, b: Cell) -> f64 {
        self.spec.distance_m(a, b)
    }

    /// Uniform draw over free cells, excluding the start cell.
    pub fn random_free_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Cell, GridError> {
        if self.free.is_empty() {
            return Err(GridError::NoFreeCell);
        }
        Ok(self.free[rng.gen_range(0..self.free.len())])
    }
}
