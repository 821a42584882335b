//! Circuit puzzle: a grid of rotatable wire tiles. Power enters the left
//! edge at the source row and must reach the right edge at the sink row
//! through tiles whose openings face each other.

use std::collections::VecDeque;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const GRID_SIZE: usize = 4;

const N: u8 = 1;
const E: u8 = 2;
const S: u8 = 4;
const W: u8 = 8;
const DIRS: [u8; 4] = [N, E, S, W];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TileKind {
    Empty,
    Straight,
    Corner,
    Tee,
    Cross,
}

impl TileKind {
    /// Openings at rotation 0.
    fn base(self) -> u8 {
        match self {
            TileKind::Empty => 0,
            TileKind::Straight => N | S,
            TileKind::Corner => N | E,
            TileKind::Tee => N | E | S,
            TileKind::Cross => N | E | S | W,
        }
    }

    /// Openings after `rotation` clockwise quarter turns.
    pub fn openings(self, rotation: u8) -> u8 {
        let mut bits = self.base();
        for _ in 0..rotation % 4 {
            bits = ((bits << 1) | (bits >> 3)) & 0xF;
        }
        bits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub kind: TileKind,
    pub rotation: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Puzzle {
    /// Single-use identifier the solution must quote.
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Row-major.
    pub tiles: Vec<Tile>,
    pub source_row: usize,
    pub sink_row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PuzzleSolution {
    pub puzzle_id: String,
    /// Final rotation of every tile, row-major.
    pub rotations: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolutionError {
    #[error("expected {expected} rotations, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("rotation {0} is out of range 0..=3")]
    BadRotation(u8),
    #[error("the circuit does not connect the source to the sink")]
    NotConnected,
}

fn opposite(d: u8) -> u8 {
    match d {
        N => S,
        S => N,
        E => W,
        _ => E,
    }
}

impl Puzzle {
    /// A random solvable puzzle with scrambled rotations.
    pub fn generate<R: Rng>(rng: &mut R) -> Self {
        let (w, h) = (GRID_SIZE, GRID_SIZE);
        let source_row = rng.random_range(0..h);
        let sink_row = rng.random_range(0..h);
        let path = random_path(rng, w, h, source_row, sink_row);
        let mut tiles: Vec<Tile> = (0..w * h)
            .map(|_| {
                let kind = *[
                    TileKind::Empty,
                    TileKind::Straight,
                    TileKind::Corner,
                    TileKind::Tee,
                    TileKind::Cross,
                ]
                .choose(rng)
                .expect("non-empty");
                Tile { kind, rotation: 0 }
            })
            .collect();
        for (i, &cell) in path.iter().enumerate() {
            let entry = if i == 0 { E } else { direction(path[i - 1], cell, w) };
            let exit = if i + 1 == path.len() { E } else { direction(cell, path[i + 1], w) };
            let from = opposite(entry);
            let needed = from | exit;
            tiles[cell].kind = if from == opposite(exit) {
                TileKind::Straight
            } else {
                TileKind::Corner
            };
            debug_assert!((0..4).any(|r| tiles[cell].kind.openings(r) == needed));
        }
        for t in &mut tiles {
            t.rotation = rng.random_range(0..4);
        }
        let mut puzzle = Self {
            id: format!("{:016x}", rng.random::<u64>()),
            width: w,
            height: h,
            tiles,
            source_row,
            sink_row,
        };
        // never hand out a puzzle that is already solved
        while puzzle.is_connected(&puzzle.current_rotations()) {
            let cell = path[0];
            puzzle.tiles[cell].rotation = (puzzle.tiles[cell].rotation + 1) % 4;
        }
        puzzle
    }

    pub fn current_rotations(&self) -> Vec<u8> {
        self.tiles.iter().map(|t| t.rotation).collect()
    }

    pub fn check(&self, rotations: &[u8]) -> Result<(), SolutionError> {
        if rotations.len() != self.tiles.len() {
            return Err(SolutionError::WrongLength {
                expected: self.tiles.len(),
                got: rotations.len(),
            });
        }
        if let Some(&r) = rotations.iter().find(|r| **r > 3) {
            return Err(SolutionError::BadRotation(r));
        }
        if self.is_connected(rotations) {
            Ok(())
        } else {
            Err(SolutionError::NotConnected)
        }
    }

    /// Breadth-first search over mutually open tile edges.
    fn is_connected(&self, rotations: &[u8]) -> bool {
        let (w, h) = (self.width, self.height);
        let open = |cell: usize| self.tiles[cell].kind.openings(rotations[cell]);
        let start = self.source_row * w;
        let goal = self.sink_row * w + (w - 1);
        if open(start) & W == 0 || open(goal) & E == 0 {
            return false;
        }
        let mut seen = vec![false; w * h];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(cell) = queue.pop_front() {
            if cell == goal {
                return true;
            }
            for d in DIRS {
                if open(cell) & d == 0 {
                    continue;
                }
                let Some(next) = neighbor(cell, d, w, h) else {
                    continue;
                };
                if !seen[next] && open(next) & opposite(d) != 0 {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        false
    }

    /// Finds rotations that solve the puzzle, if any.
    pub fn solve(&self) -> Option<Vec<u8>> {
        let mut rotations = self.current_rotations();
        let mut used = vec![false; self.tiles.len()];
        let start = self.source_row * self.width;
        if self.search(start, W, &mut rotations, &mut used) {
            Some(rotations)
        } else {
            None
        }
    }

    fn search(&self, cell: usize, entered_from: u8, rotations: &mut [u8], used: &mut [bool]) -> bool {
        let (w, h) = (self.width, self.height);
        used[cell] = true;
        let goal = self.sink_row * w + (w - 1);
        for r in 0..4 {
            let open = self.tiles[cell].kind.openings(r);
            if open & entered_from == 0 {
                continue;
            }
            rotations[cell] = r;
            if cell == goal && open & E != 0 {
                return true;
            }
            for d in DIRS {
                if d == entered_from || open & d == 0 {
                    continue;
                }
                if let Some(next) = neighbor(cell, d, w, h) {
                    if !used[next] && self.search(next, opposite(d), rotations, used) {
                        return true;
                    }
                }
            }
        }
        used[cell] = false;
        false
    }
}

fn neighbor(cell: usize, d: u8, w: usize, h: usize) -> Option<usize> {
    let (x, y) = (cell % w, cell / w);
    match d {
        N if y > 0 => Some(cell - w),
        S if y + 1 < h => Some(cell + w),
        W if x > 0 => Some(cell - 1),
        E if x + 1 < w => Some(cell + 1),
        _ => None,
    }
}

/// Direction of travel from `a` to the adjacent cell `b`.
fn direction(a: usize, b: usize, w: usize) -> u8 {
    if b + w == a {
        N
    } else if b == a + w {
        S
    } else if b + 1 == a {
        W
    } else {
        E
    }
}

/// Random self-avoiding walk from the source cell to the sink cell.
fn random_path<R: Rng>(rng: &mut R, w: usize, h: usize, source_row: usize, sink_row: usize) -> Vec<usize> {
    let start = source_row * w;
    let goal = sink_row * w + (w - 1);
    let mut path = vec![start];
    let mut visited = vec![false; w * h];
    visited[start] = true;
    fn walk<R: Rng>(
        rng: &mut R,
        path: &mut Vec<usize>,
        visited: &mut [bool],
        goal: usize,
        w: usize,
        h: usize,
    ) -> bool {
        let cell = *path.last().expect("non-empty path");
        if cell == goal {
            return true;
        }
        let mut dirs = DIRS;
        dirs.shuffle(rng);
        for d in dirs {
            if let Some(next) = neighbor(cell, d, w, h) {
                if visited[next] {
                    continue;
                }
                visited[next] = true;
                path.push(next);
                if walk(rng, path, visited, goal, w, h) {
                    return true;
                }
                path.pop();
                visited[next] = false;
            }
        }
        false
    }
    let found = walk(rng, &mut path, &mut visited, goal, w, h);
    debug_assert!(found, "a grid always has a path between two edge cells");
    path
}
