//! Hexagonal map geometry.
//!
//! Cells are addressed with even-r horizontal offset coordinates: pointy-top
//! hexes, even rows shoved half a cell to the right. Distances go through
//! cube coordinates. The six directions are numbered
//! `E, W, NE, NW, SE, SW` (0..5) and that numbering is shared with the
//! `Move` action encoding.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HexError {
    #[error("coordinate ({row}, {col}) is outside a {rows}x{cols} map")]
    OutOfBounds {
        row: i32,
        col: i32,
        rows: i32,
        cols: i32,
    },
    #[error("map parse error at line {line}{}: {message}", cell.map(|c| format!(", cell {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        cell: Option<usize>,
        message: String,
    },
    #[error("invalid map: {0}")]
    Invalid(String),
}

/// A cell position on the map, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct HexCoord {
    pub row: i32,
    pub col: i32,
}

impl HexCoord {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    /// Cube coordinates `(q, r, s)` with `q + r + s = 0`.
    fn to_cube(self) -> (i32, i32, i32) {
        let q = self.col - (self.row + (self.row & 1)) / 2;
        let r = self.row;
        (q, r, -q - r)
    }

    /// Neighbor in `dir`, ignoring map bounds.
    pub fn step(self, dir: Direction) -> HexCoord {
        let (dr, dc) = dir.offset(self.row);
        HexCoord::new(self.row + dr, self.col + dc)
    }
}

impl From<(i32, i32)> for HexCoord {
    fn from((row, col): (i32, i32)) -> Self {
        HexCoord::new(row, col)
    }
}

impl From<HexCoord> for (i32, i32) {
    fn from(c: HexCoord) -> Self {
        (c.row, c.col)
    }
}

impl fmt::Display for HexCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    E = 0,
    W = 1,
    NE = 2,
    NW = 3,
    SE = 4,
    SW = 5,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::E,
        Direction::W,
        Direction::NE,
        Direction::NW,
        Direction::SE,
        Direction::SW,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Self::ALL.get(i).copied()
    }

    /// `(d_row, d_col)` for a cell in row `row`.
    fn offset(self, row: i32) -> (i32, i32) {
        let even = row & 1 == 0;
        match (self, even) {
            (Direction::E, _) => (0, 1),
            (Direction::W, _) => (0, -1),
            (Direction::NE, true) => (-1, 1),
            (Direction::NW, true) => (-1, 0),
            (Direction::SE, true) => (1, 1),
            (Direction::SW, true) => (1, 0),
            (Direction::NE, false) => (-1, 0),
            (Direction::NW, false) => (-1, -1),
            (Direction::SE, false) => (1, 0),
            (Direction::SW, false) => (1, -1),
        }
    }

    /// Image of this direction under the row flip `r -> rows - 1 - r`.
    pub fn row_flipped(self) -> Direction {
        match self {
            Direction::E => Direction::E,
            Direction::W => Direction::W,
            Direction::NE => Direction::SE,
            Direction::NW => Direction::SW,
            Direction::SE => Direction::NE,
            Direction::SW => Direction::NW,
        }
    }
}

/// Terrain code of a normal cell.
pub const NORMAL: u8 = 0;
/// Terrain code of a special (hidden-terrain) cell.
pub const SPECIAL: u8 = 1;

/// Bounded hex map with a terrain code per cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameMap {
    rows: i32,
    cols: i32,
    terrain: Vec<u8>,
}

impl GameMap {
    /// All-normal map. Panics on non-positive dimensions.
    pub fn new(rows: i32, cols: i32) -> Self {
        assert!(rows > 0 && cols > 0, "map dimensions must be positive");
        Self {
            rows,
            cols,
            terrain: vec![NORMAL; (rows * cols) as usize],
        }
    }

    pub fn from_terrain(rows: i32, cols: i32, terrain: Vec<u8>) -> Result<Self, HexError> {
        if rows <= 0 || cols <= 0 {
            return Err(HexError::Invalid(format!("non-positive dimensions {rows}x{cols}")));
        }
        if terrain.len() != (rows * cols) as usize {
            return Err(HexError::Invalid(format!(
                "terrain has {} cells, expected {}",
                terrain.len(),
                rows * cols
            )));
        }
        if let Some(i) = terrain.iter().position(|&t| t > SPECIAL) {
            return Err(HexError::Invalid(format!("illegal cell code {} at index {i}", terrain[i])));
        }
        Ok(Self { rows, cols, terrain })
    }

    pub fn rows(&self) -> i32 {
        self.rows
    }

    pub fn cols(&self) -> i32 {
        self.cols
    }

    pub fn cell_count(&self) -> usize {
        self.terrain.len()
    }

    pub fn terrain(&self) -> &[u8] {
        &self.terrain
    }

    pub fn in_bounds(&self, c: HexCoord) -> bool {
        c.row >= 0 && c.row < self.rows && c.col >= 0 && c.col < self.cols
    }

    pub fn check(&self, c: HexCoord) -> Result<(), HexError> {
        if self.in_bounds(c) {
            Ok(())
        } else {
            Err(HexError::OutOfBounds {
                row: c.row,
                col: c.col,
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    pub fn index(&self, c: HexCoord) -> usize {
        debug_assert!(self.in_bounds(c));
        (c.row * self.cols + c.col) as usize
    }

    pub fn coord(&self, index: usize) -> HexCoord {
        let i = index as i32;
        HexCoord::new(i / self.cols, i % self.cols)
    }

    pub fn is_special(&self, c: HexCoord) -> bool {
        self.in_bounds(c) && self.terrain[self.index(c)] == SPECIAL
    }

    pub fn set_terrain(&mut self, c: HexCoord, code: u8) -> Result<(), HexError> {
        self.check(c)?;
        if code > SPECIAL {
            return Err(HexError::Invalid(format!("illegal cell code {code}")));
        }
        let i = self.index(c);
        self.terrain[i] = code;
        Ok(())
    }

    pub fn has_special(&self) -> bool {
        self.terrain.contains(&SPECIAL)
    }

    pub fn special_cells(&self) -> impl Iterator<Item = HexCoord> + '_ {
        self.terrain
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == SPECIAL)
            .map(|(i, _)| self.coord(i))
    }

    pub fn cells(&self) -> impl Iterator<Item = HexCoord> + '_ {
        (0..self.cell_count()).map(|i| self.coord(i))
    }

    pub fn center(&self) -> HexCoord {
        HexCoord::new(self.rows / 2, self.cols / 2)
    }

    /// Row flip `r -> rows - 1 - r`. A grid automorphism when `rows` is odd.
    pub fn flip_coord(&self, c: HexCoord) -> HexCoord {
        HexCoord::new(self.rows - 1 - c.row, c.col)
    }

    pub fn row_flipped(&self) -> GameMap {
        let mut out = self.clone();
        for c in self.cells() {
            let i = out.index(self.flip_coord(c));
            out.terrain[i] = self.terrain[self.index(c)];
        }
        out
    }

    pub fn is_row_flip_symmetric(&self) -> bool {
        self.rows % 2 == 1 && self.row_flipped() == *self
    }

    /// In-bounds neighbors of `c`, in direction order.
    pub fn neighbors(&self, c: HexCoord) -> Result<Vec<HexCoord>, HexError> {
        self.check(c)?;
        Ok(self.neighbor_dirs(c).map(|(_, n)| n).collect())
    }

    /// In-bounds `(direction, neighbor)` pairs of an in-bounds cell.
    pub fn neighbor_dirs(&self, c: HexCoord) -> impl Iterator<Item = (Direction, HexCoord)> + '_ {
        Direction::ALL
            .into_iter()
            .map(move |d| (d, c.step(d)))
            .filter(|(_, n)| self.in_bounds(*n))
    }

    pub fn hex_distance(&self, a: HexCoord, b: HexCoord) -> Result<u32, HexError> {
        self.check(a)?;
        self.check(b)?;
        Ok(hex_distance(a, b))
    }

    /// Minimal-length path `a..=b`; ties go to the lowest direction index.
    pub fn shortest_path(&self, a: HexCoord, b: HexCoord) -> Result<Vec<HexCoord>, HexError> {
        self.shortest_path_ordered(a, b, &Direction::ALL)
    }

    /// Minimal-length path `a..=b`; at each step the first direction in
    /// `order` that stays minimal is taken.
    pub fn shortest_path_ordered(
        &self,
        a: HexCoord,
        b: HexCoord,
        order: &[Direction; 6],
    ) -> Result<Vec<HexCoord>, HexError> {
        self.check(a)?;
        self.check(b)?;
        let mut path = vec![a];
        let mut cur = a;
        while cur != b {
            match self.greedy_step(cur, b, order) {
                Some(next) => {
                    path.push(next);
                    cur = next;
                }
                None => return Ok(self.bfs_path(a, b, order)),
            }
        }
        Ok(path)
    }

    /// First direction of a minimal path from `a` to `b`, `None` if `a == b`.
    pub fn first_step(&self, a: HexCoord, b: HexCoord, order: &[Direction; 6]) -> Option<Direction> {
        if a == b || !self.in_bounds(a) || !self.in_bounds(b) {
            return None;
        }
        let d = hex_distance(a, b);
        order
            .iter()
            .copied()
            .find(|&dir| {
                let n = a.step(dir);
                self.in_bounds(n) && hex_distance(n, b) + 1 == d
            })
            .or_else(|| {
                let path = self.bfs_path(a, b, order);
                let next = path.get(1)?;
                order.iter().copied().find(|&dir| a.step(dir) == *next)
            })
    }

    fn greedy_step(&self, cur: HexCoord, b: HexCoord, order: &[Direction; 6]) -> Option<HexCoord> {
        let d = hex_distance(cur, b);
        order
            .iter()
            .map(|&dir| cur.step(dir))
            .find(|&n| self.in_bounds(n) && hex_distance(n, b) + 1 == d)
    }

    /// Breadth-first fallback over the neighbor graph.
    fn bfs_path(&self, a: HexCoord, b: HexCoord, order: &[Direction; 6]) -> Vec<HexCoord> {
        let dist = self.bfs_distances(b);
        let mut path = vec![a];
        let mut cur = a;
        while cur != b {
            let here = dist[self.index(cur)];
            let next = order
                .iter()
                .map(|&dir| cur.step(dir))
                .find(|&n| self.in_bounds(n) && dist[self.index(n)] + 1 == here)
                .expect("connected grid");
            path.push(next);
            cur = next;
        }
        path
    }

    /// Neighbor-graph distances from `src` to every cell.
    pub fn bfs_distances(&self, src: HexCoord) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.cell_count()];
        let mut queue = VecDeque::new();
        dist[self.index(src)] = 0;
        queue.push_back(src);
        while let Some(c) = queue.pop_front() {
            let d = dist[self.index(c)];
            for (_, n) in self.neighbor_dirs(c) {
                let i = self.index(n);
                if dist[i] == u32::MAX {
                    dist[i] = d + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }
}

/// Closed-form hex distance, valid for any two coordinates.
pub fn hex_distance(a: HexCoord, b: HexCoord) -> u32 {
    let (aq, ar, as_) = a.to_cube();
    let (bq, br, bs) = b.to_cube();
    let d = (aq - bq).abs().max((ar - br).abs()).max((as_ - bs).abs());
    d as u32
}

/// Parse the line-oriented map format: `rows cols`, then one line per row of
/// space-separated `0`/`1` codes.
pub fn load_map(bytes: &[u8]) -> Result<GameMap, HexError> {
    let text = std::str::from_utf8(bytes).map_err(|e| HexError::Parse {
        line: 1,
        cell: None,
        message: format!("not utf-8: {e}"),
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(HexError::Parse {
        line: 1,
        cell: None,
        message: "missing header".into(),
    })?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let parse_dim = |s: &str| -> Result<i32, HexError> {
        s.parse::<i32>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| HexError::Parse {
                line: hline + 1,
                cell: None,
                message: format!("bad dimension {s:?}"),
            })
    };
    if dims.len() != 2 {
        return Err(HexError::Parse {
            line: hline + 1,
            cell: None,
            message: format!("header must be `rows cols`, got {header:?}"),
        });
    }
    let rows = parse_dim(dims[0])?;
    let cols = parse_dim(dims[1])?;
    let mut terrain = Vec::with_capacity((rows * cols) as usize);
    let mut seen_rows = 0;
    for (ln, line) in lines {
        if seen_rows == rows {
            return Err(HexError::Parse {
                line: ln + 1,
                cell: None,
                message: format!("more than {rows} rows"),
            });
        }
        let mut n = 0;
        for (ci, tok) in line.split_whitespace().enumerate() {
            let code = match tok {
                "0" => NORMAL,
                "1" => SPECIAL,
                other => {
                    return Err(HexError::Parse {
                        line: ln + 1,
                        cell: Some(ci),
                        message: format!("illegal cell code {other:?}"),
                    })
                }
            };
            terrain.push(code);
            n += 1;
        }
        if n != cols {
            return Err(HexError::Parse {
                line: ln + 1,
                cell: None,
                message: format!("row has {n} cells, expected {cols}"),
            });
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(HexError::Parse {
            line: text.lines().count() + 1,
            cell: None,
            message: format!("found {seen_rows} rows, expected {rows}"),
        });
    }
    GameMap::from_terrain(rows, cols, terrain)
}

pub fn save_map(map: &GameMap) -> Vec<u8> {
    let mut out = format!("{} {}\n", map.rows, map.cols);
    for row in map.terrain.chunks(map.cols as usize) {
        let line: Vec<&str> = row.iter().map(|&t| if t == SPECIAL { "1" } else { "0" }).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}
