//! Grid mazes in the MovingAI `.map` format.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Environment, StepResult};
use crate::error::{Error, Result};
use crate::types::ActionRef;

/// `(x, y)`, x to the right, y downward.
pub type Cell = (usize, usize);

/// Right, down, left, up.
pub const MAZE_ACTIONS: [u32; 4] = [0, 1, 2, 3];
pub const MAZE_ACTION_NAMES: [&str; 4] = ["r", "d", "l", "u"];

pub const STEP_REWARD: f64 = -1.0;
pub const GOAL_REWARD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    width: usize,
    height: usize,
    passable: Vec<bool>,
}

impl Grid {
    pub fn new(width: usize, height: usize, passable: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || passable.len() != width * height {
            return Err(Error::InvalidParams("grid dimensions do not match cells".into()));
        }
        Ok(Grid {
            width,
            height,
            passable,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_passable(&self, (x, y): Cell) -> bool {
        x < self.width && y < self.height && self.passable[y * self.width + x]
    }

    pub fn passable_cells(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&c| self.is_passable(c))
            .collect()
    }

    fn neighbor(&self, (x, y): Cell, action: u32) -> Option<Cell> {
        let next = match action {
            0 => (x.checked_add(1)?, y),
            1 => (x, y.checked_add(1)?),
            2 => (x.checked_sub(1)?, y),
            3 => (x, y.checked_sub(1)?),
            _ => return None,
        };
        self.is_passable(next).then_some(next)
    }

    /// BFS distances from `from` (None for unreachable cells).
    pub fn distances(&self, from: Cell) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.width * self.height];
        if !self.is_passable(from) {
            return dist;
        }
        let mut queue = VecDeque::from([from]);
        dist[from.1 * self.width + from.0] = Some(0);
        while let Some(c) = queue.pop_front() {
            let d = dist[c.1 * self.width + c.0].expect("visited");
            for a in MAZE_ACTIONS {
                if let Some(n) = self.neighbor(c, a) {
                    let slot = &mut dist[n.1 * self.width + n.0];
                    if slot.is_none() {
                        *slot = Some(d + 1);
                        queue.push_back(n);
                    }
                }
            }
        }
        dist
    }

    /// Serializes back to MovingAI text, `.` for passable and `@` for blocked.
    pub fn to_map_text(&self) -> String {
        let mut s = format!("type octile\nheight {}\nwidth {}\nmap\n", self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                s.push(if self.is_passable((x, y)) { '.' } else { '@' });
            }
            s.push('\n');
        }
        s
    }

    /// Perfect maze carved on a lattice of junctions `pitch` cells apart,
    /// with some walls knocked out afterwards to create loops.
    ///
    /// Corridors are `corridor_width` cells wide; with width 1 every corridor
    /// between two junctions is a straight run of `pitch` moves.
    pub fn corridor_maze<R: Rng>(
        width: usize,
        height: usize,
        pitch: usize,
        corridor_width: usize,
        loop_fraction: f64,
        rng: &mut R,
    ) -> Result<Grid> {
        if corridor_width == 0 || pitch <= corridor_width || width < pitch + corridor_width + 2 || height < pitch + corridor_width + 2 {
            return Err(Error::InvalidParams("maze too small for pitch and corridor width".into()));
        }
        let cw = corridor_width;
        let cols = (width - 2 - cw) / pitch + 1;
        let rows = (height - 2 - cw) / pitch + 1;
        let mut passable = vec![false; width * height];
        let junction = |c: usize, r: usize| (1 + c * pitch, 1 + r * pitch);
        let carve = |passable: &mut Vec<bool>, (c0, r0): (usize, usize), (c1, r1): (usize, usize)| {
            let (x0, y0) = junction(c0, r0);
            let (x1, y1) = junction(c1, r1);
            for x in x0.min(x1)..x0.max(x1) + cw {
                for y in y0.min(y1)..y0.max(y1) + cw {
                    passable[y * width + x] = true;
                }
            }
        };
        let mut visited = vec![false; cols * rows];
        let mut stack = vec![(0usize, 0usize)];
        visited[0] = true;
        carve(&mut passable, (0, 0), (0, 0));
        let mut walls = Vec::new();
        while let Some(&(c, r)) = stack.last() {
            let mut next: Vec<(usize, usize)> = [
                (c + 1, r),
                (c, r + 1),
                (c.wrapping_sub(1), r),
                (c, r.wrapping_sub(1)),
            ]
            .into_iter()
            .filter(|&(nc, nr)| nc < cols && nr < rows)
            .collect();
            next.shuffle(rng);
            match next.iter().find(|&&(nc, nr)| !visited[nr * cols + nc]) {
                Some(&n) => {
                    visited[n.1 * cols + n.0] = true;
                    carve(&mut passable, (c, r), n);
                    stack.push(n);
                }
                None => {
                    stack.pop();
                }
            }
            for n in next {
                walls.push(((c, r), n));
            }
        }
        walls.shuffle(rng);
        let extra = (walls.len() as f64 * loop_fraction.clamp(0.0, 1.0)) as usize;
        for &(a, b) in walls.iter().take(extra) {
            carve(&mut passable, a, b);
        }
        Grid::new(width, height, passable)
    }
}

/// Parses MovingAI `.map` text: `type`, `height`, `width`, `map` header
/// lines, then `height` rows of `width` glyphs.
pub fn load_map(text: &str) -> Result<Grid> {
    let err = |line: usize, msg: &str| Error::MapParse {
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let mut header = |key: &str| -> Result<(usize, String)> {
        let (n, l) = lines.next().ok_or_else(|| err(0, "unexpected end of header"))?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(err(n, &format!("expected '{key}'")));
        }
        Ok((n, parts.collect::<Vec<_>>().join(" ")))
    };
    let (n, kind) = header("type")?;
    if kind.is_empty() {
        return Err(err(n, "missing map type"));
    }
    let (n, h) = header("height")?;
    let height: usize = h.parse().map_err(|_| err(n, "bad height"))?;
    let (n, w) = header("width")?;
    let width: usize = w.parse().map_err(|_| err(n, "bad width"))?;
    let (n, rest) = header("map")?;
    if !rest.is_empty() {
        return Err(err(n, "unexpected text after 'map'"));
    }
    if width == 0 || height == 0 {
        return Err(err(n, "empty map"));
    }
    let mut passable = Vec::with_capacity(width * height);
    let mut rows = 0;
    let mut last = n;
    for (n, line) in lines {
        last = n;
        if rows == height {
            if line.trim().is_empty() {
                continue;
            }
            return Err(err(n, "more rows than the height header"));
        }
        if line.chars().count() != width {
            return Err(err(n, &format!("row has {} cells, expected {width}", line.chars().count())));
        }
        for ch in line.chars() {
            passable.push(match ch {
                '.' | 'G' => true,
                '@' | 'O' | 'T' | 'W' | 'S' => false,
                other => return Err(err(n, &format!("unknown glyph {other:?}"))),
            });
        }
        rows += 1;
    }
    if rows != height {
        return Err(err(last, &format!("found {rows} rows, height header says {height}")));
    }
    Grid::new(width, height, passable)
}

/// A grid with start and goal cells, connected by a passable path.
#[derive(Debug, Clone, PartialEq)]
pub struct Maze {
    pub grid: Grid,
    pub start: Cell,
    pub goal: Cell,
}

impl Maze {
    pub fn new(grid: Grid, start: Cell, goal: Cell) -> Result<Self> {
        if start == goal {
            return Err(Error::InvalidParams("start equals goal".into()));
        }
        if !grid.is_passable(start) || !grid.is_passable(goal) {
            return Err(Error::InvalidParams("start or goal blocked".into()));
        }
        if grid.distances(start)[goal.1 * grid.width + goal.0].is_none() {
            return Err(Error::InvalidParams("goal unreachable from start".into()));
        }
        Ok(Maze { grid, start, goal })
    }

    pub fn shortest_path_len(&self) -> usize {
        self.grid.distances(self.start)[self.goal.1 * self.grid.width + self.goal.0]
            .expect("validated at construction")
    }

    /// Default step cap, `10 · (width + height)`.
    pub fn default_cap(&self) -> usize {
        10 * (self.grid.width + self.grid.height)
    }

    /// Undiscounted return of the shortest path.
    pub fn optimal_return(&self) -> f64 {
        (self.shortest_path_len() as f64 - 1.0) * STEP_REWARD + GOAL_REWARD
    }
}

/// One transition: blocked or off-grid moves leave the cell unchanged.
/// `done` here means the goal was reached; step caps are the task's job.
pub fn maze_step(maze: &Maze, cell: Cell, action: u32) -> Result<StepResult<Cell>> {
    if action > 3 {
        return Err(Error::InvalidAction(format!("maze action {action}")));
    }
    if !maze.grid.is_passable(cell) {
        return Err(Error::InvalidState(format!("cell {cell:?} is blocked")));
    }
    let next = maze.grid.neighbor(cell, action).unwrap_or(cell);
    let goal = next == maze.goal;
    Ok(StepResult {
        next_state: next,
        reward: if goal { GOAL_REWARD } else { STEP_REWARD },
        done: goal,
        truncated: false,
    })
}

/// Episodic wrapper with a step cap.
#[derive(Debug, Clone)]
pub struct MazeTask {
    pub maze: Maze,
    pub cap: usize,
    pos: Cell,
    steps: usize,
}

impl MazeTask {
    pub fn new(maze: Maze) -> Self {
        let cap = maze.default_cap();
        Self::with_cap(maze, cap)
    }

    pub fn with_cap(maze: Maze, cap: usize) -> Self {
        let pos = maze.start;
        MazeTask {
            maze,
            cap,
            pos,
            steps: 0,
        }
    }

    pub fn state_key(cell: Cell) -> u64 {
        ((cell.1 as u64) << 32) | cell.0 as u64
    }
}

impl Environment for MazeTask {
    type State = Cell;

    fn reset(&mut self) -> Cell {
        self.pos = self.maze.start;
        self.steps = 0;
        self.pos
    }

    fn state(&self) -> Cell {
        self.pos
    }

    fn step(&mut self, action: ActionRef<'_>) -> Result<StepResult<Cell>> {
        let ActionRef::Discrete(a) = action else {
            return Err(Error::InvalidAction("maze needs discrete actions".into()));
        };
        let mut r = maze_step(&self.maze, self.pos, a)?;
        self.pos = r.next_state;
        self.steps += 1;
        if !r.done && self.steps >= self.cap {
            r.done = true;
            r.truncated = true;
        }
        Ok(r)
    }
}

/// Deterministic stream of mazes with random start/goal pairs.
#[derive(Debug, Clone)]
pub struct MazeGenerator {
    maps: Vec<(Grid, Vec<Cell>)>,
    rng: ChaCha8Rng,
}

impl MazeGenerator {
    pub fn new(maps: Vec<Grid>, seed: u64) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::NoData);
        }
        let mut prepared = Vec::with_capacity(maps.len());
        for g in maps {
            // only cells in components with at least two cells can host a task
            let cells = g.passable_cells();
            let usable: Vec<Cell> = cells
                .iter()
                .copied()
                .filter(|&c| MAZE_ACTIONS.iter().any(|&a| g.neighbor(c, a).is_some()))
                .collect();
            if usable.len() < 2 {
                return Err(Error::InvalidParams("map has fewer than 2 connected passable cells".into()));
            }
            prepared.push((g, usable));
        }
        Ok(MazeGenerator {
            maps: prepared,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn next_maze(&mut self) -> Maze {
        loop {
            let (grid, cells) = &self.maps[self.rng.gen_range(0..self.maps.len())];
            let start = cells[self.rng.gen_range(0..cells.len())];
            let goal = cells[self.rng.gen_range(0..cells.len())];
            if let Ok(m) = Maze::new(grid.clone(), start, goal) {
                return m;
            }
        }
    }
}

impl Iterator for MazeGenerator {
    type Item = Maze;

    fn next(&mut self) -> Option<Maze> {
        Some(self.next_maze())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(w: usize, h: usize) -> Grid {
        Grid::new(w, h, vec![true; w * h]).unwrap()
    }

    #[test]
    fn parse_open_map() {
        let g = load_map("type octile\nheight 3\nwidth 3\nmap\n...\n...\n...\n").unwrap();
        assert_eq!(g.passable_cells().len(), 9);
    }

    #[test]
    fn parse_blocked_glyphs() {
        let g = load_map("type octile\nheight 2\nwidth 3\nmap\n.@G\nTWS\n").unwrap();
        assert!(g.is_passable((0, 0)));
        assert!(!g.is_passable((1, 0)));
        assert!(g.is_passable((2, 0)));
        assert!(g.passable_cells().len() == 2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = load_map("type octile\nheight 3\nwidth 2\nmap\n..\n..\n").unwrap_err();
        assert!(matches!(e, Error::MapParse { line: 6, .. }), "{e}");
        let e = load_map("type octile\nheight 1\nwidth 2\nmap\n.x\n").unwrap_err();
        assert!(matches!(e, Error::MapParse { line: 5, .. }));
        let e = load_map("type octile\nwidth 2\nheight 1\nmap\n..\n").unwrap_err();
        assert!(matches!(e, Error::MapParse { line: 2, .. }));
        let e = load_map("type octile\nheight 1\nwidth 2\nmap\n...\n").unwrap_err();
        assert!(matches!(e, Error::MapParse { line: 5, .. }));
    }

    #[test]
    fn map_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Grid::corridor_maze(23, 17, 3, 1, 0.1, &mut rng).unwrap();
        assert_eq!(load_map(&g.to_map_text()).unwrap(), g);
    }

    #[test]
    fn step_semantics() {
        let mut g = open(3, 3);
        g.passable[2] = false; // (2,0) blocked
        let maze = Maze::new(g, (0, 0), (0, 2)).unwrap();
        let r = maze_step(&maze, (0, 0), 0).unwrap();
        assert_eq!((r.next_state, r.reward, r.done), ((1, 0), -1.0, false));
        let r = maze_step(&maze, (1, 0), 0).unwrap();
        assert_eq!((r.next_state, r.reward), ((1, 0), -1.0));
        let r = maze_step(&maze, (0, 0), 3).unwrap();
        assert_eq!(r.next_state, (0, 0));
        let r = maze_step(&maze, (0, 1), 1).unwrap();
        assert_eq!((r.next_state, r.reward, r.done), ((0, 2), 10.0, true));
        assert!(maze_step(&maze, (0, 0), 4).is_err());
        assert!(maze_step(&maze, (2, 0), 0).is_err());
    }

    #[test]
    fn step_cap_truncates() {
        let maze = Maze::new(open(4, 1), (0, 0), (3, 0)).unwrap();
        let mut task = MazeTask::with_cap(maze, 2);
        task.reset();
        assert!(!task.step(ActionRef::Discrete(2)).unwrap().done);
        let r = task.step(ActionRef::Discrete(2)).unwrap();
        assert!(r.done && r.truncated && r.reward == -1.0);
    }

    #[test]
    fn generator_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Grid::corridor_maze(30, 30, 3, 1, 0.1, &mut rng).unwrap();
        let a: Vec<_> = MazeGenerator::new(vec![g.clone()], 9).unwrap().take(5).collect();
        let b: Vec<_> = MazeGenerator::new(vec![g], 9).unwrap().take(5).collect();
        assert_eq!(a, b);
        for m in &a {
            assert_ne!(m.start, m.goal);
        }
    }

    #[test]
    fn two_cell_map_forces_the_pair() {
        let g = load_map("type octile\nheight 1\nwidth 3\nmap\n..@\n").unwrap();
        for m in MazeGenerator::new(vec![g], 4).unwrap().take(6) {
            assert!(
                (m.start, m.goal) == ((0, 0), (1, 0)) || (m.start, m.goal) == ((1, 0), (0, 0))
            );
        }
        let lonely = load_map("type octile\nheight 1\nwidth 3\nmap\n.@.\n").unwrap();
        assert!(MazeGenerator::new(vec![lonely], 4).is_err());
    }

    #[test]
    fn corridor_maze_is_connected_and_walled() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (w, h, pitch, cw) in [(30, 30, 3, 1), (32, 27, 4, 1), (30, 30, 5, 3), (41, 23, 6, 4)] {
            let g = Grid::corridor_maze(w, h, pitch, cw, 0.15, &mut rng).unwrap();
            let cells = g.passable_cells();
            let d = g.distances(cells[0]);
            assert!(cells.iter().all(|c| d[c.1 * w + c.0].is_some()));
            assert!(cells.iter().all(|&(x, y)| x > 0 && y > 0 && x < w - 1 && y < h - 1));
        }
        assert!(Grid::corridor_maze(30, 30, 3, 3, 0.0, &mut rng).is_err());
    }
}
