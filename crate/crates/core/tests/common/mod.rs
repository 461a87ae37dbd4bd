//! Reference implementations and random generators shared by the property
//! and acceptance suites. Everything here is written independently of the
//! library code it checks.

#![allow(dead_code)]

use posestar::Grid;
use rand::Rng;

/// Per pixel: sum of the values strictly above `beta` in token order divided
/// by their count, or zero when none clears it.
pub fn thresholded_average_oracle(maps: &[Grid<f32>], beta: f32) -> Grid<f32> {
    let (h, w) = maps[0].dims();
    let mut out = Grid::zeros(h, w);
    for i in 0..h {
        for j in 0..w {
            let mut sum = 0.0f32;
            let mut n = 0usize;
            for m in maps {
                let v = m[(i, j)];
                if v > beta {
                    sum += v;
                    n += 1;
                }
            }
            out[(i, j)] = if n == 0 { 0.0 } else { sum / n as f32 };
        }
    }
    out
}

/// Random token maps whose values sometimes sit exactly on `beta`.
pub fn random_map_set<R: Rng>(rng: &mut R, beta: f32) -> Vec<Grid<f32>> {
    let n = rng.random_range(1..=8);
    (0..n)
        .map(|_| {
            Grid::from_fn(16, 16, |_, _| match rng.random_range(0..10) {
                0 => 0.0,
                1 => beta,
                _ => rng.random::<f32>(),
            })
        })
        .collect()
}

/// A random hole-free union of 2x2 blocks whose outline is a simple
/// 4-connected lattice cycle, plus that cycle's vertical unit edges.
pub struct LatticeCurve {
    pub size: usize,
    /// Cycle pixels.
    pub curve: Grid<bool>,
    /// `(row, col)` of every vertical unit edge from `row` to `row + 1`.
    pub vertical_edges: Vec<(usize, usize)>,
}

fn fill_holes(cells: &mut Grid<bool>) {
    let (h, w) = cells.dims();
    let mut outside = Grid::filled(h, w, false);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for i in 0..h {
        for j in 0..w {
            if (i == 0 || j == 0 || i == h - 1 || j == w - 1) && !cells[(i, j)] {
                outside[(i, j)] = true;
                stack.push((i, j));
            }
        }
    }
    while let Some((i, j)) = stack.pop() {
        let n = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
        for (a, b) in n {
            if a < h && b < w && !cells[(a, b)] && !outside[(a, b)] {
                outside[(a, b)] = true;
                stack.push((a, b));
            }
        }
    }
    for i in 0..h {
        for j in 0..w {
            if !outside[(i, j)] {
                cells[(i, j)] = true;
            }
        }
    }
}

/// Fills one cell of every diagonal-only 2x2 pattern; returns whether any
/// was found.
fn fix_pinches(cells: &mut Grid<bool>) -> bool {
    let (h, w) = cells.dims();
    let mut changed = false;
    for i in 0..h - 1 {
        for j in 0..w - 1 {
            let (a, b, c, d) = (cells[(i, j)], cells[(i, j + 1)], cells[(i + 1, j)], cells[(i + 1, j + 1)]);
            if (a && d && !b && !c) || (b && c && !a && !d) {
                if a {
                    cells[(i, j + 1)] = true;
                } else {
                    cells[(i, j)] = true;
                }
                changed = true;
            }
        }
    }
    changed
}

pub fn random_lattice_curve<R: Rng>(rng: &mut R, max_size: usize) -> LatticeCurve {
    // Fine grid side is 2 * coarse + 3 (one pixel margin on each side).
    let coarse = rng.random_range(2..=(max_size - 3) / 2);
    // The outermost coarse ring stays empty so hole filling sees the outside.
    let mut cells = Grid::filled(coarse, coarse, false);
    let inner = coarse.saturating_sub(2).max(1);
    let start = (1 + rng.random_range(0..inner), 1 + rng.random_range(0..inner));
    let start = (start.0.min(coarse - 1), start.1.min(coarse - 1));
    cells[start] = true;
    let target = rng.random_range(1..=(inner * inner).max(1));
    let mut members = vec![start];
    let mut tries = 0;
    while members.len() < target && tries < 20 * target {
        tries += 1;
        let (i, j) = members[rng.random_range(0..members.len())];
        let (di, dj) = [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)][rng.random_range(0..4)];
        let (a, b) = (i as isize + di, j as isize + dj);
        if a < 1 || b < 1 || a as usize >= coarse - 1 || b as usize >= coarse - 1 {
            continue;
        }
        let (a, b) = (a as usize, b as usize);
        if !cells[(a, b)] {
            cells[(a, b)] = true;
            members.push((a, b));
        }
    }
    loop {
        fill_holes(&mut cells);
        if !fix_pinches(&mut cells) {
            break;
        }
    }

    let size = 2 * coarse + 3;
    let cell = |a: isize, b: isize| a >= 0 && b >= 0 && (a as usize) < coarse && (b as usize) < coarse && cells[(a as usize, b as usize)];
    // Fine point (r, c) maps to coarse coordinates (r - 1) / 2, (c - 1) / 2.
    let mut curve = Grid::filled(size, size, false);
    let mut vertical_edges = Vec::new();
    for r in 0..size {
        for c in 0..size {
            let (y, x) = (r as isize - 1, c as isize - 1);
            // Cells whose closed square contains the point.
            let rows: Vec<isize> = if y % 2 == 0 { vec![y / 2 - 1, y / 2] } else { vec![y.div_euclid(2)] };
            let cols: Vec<isize> = if x % 2 == 0 { vec![x / 2 - 1, x / 2] } else { vec![x.div_euclid(2)] };
            let mut any = false;
            let mut all = true;
            for &a in &rows {
                for &b in &cols {
                    let v = cell(a, b);
                    any |= v;
                    all &= v;
                }
            }
            curve[(r, c)] = any && !all;
            // Vertical unit edge from (r, c) to (r + 1, c) lies on a cell
            // side where exactly one neighbour cell is present.
            if x % 2 == 0 && r + 1 < size && y >= 0 {
                let a = y.div_euclid(2);
                if cell(a, x / 2 - 1) != cell(a, x / 2) {
                    vertical_edges.push((r, c));
                }
            }
        }
    }
    LatticeCurve {
        size,
        curve,
        vertical_edges,
    }
}

/// Even-odd scanline fill of the lattice cycle: a pixel off the curve is
/// inside when a ray to its right crosses an odd number of vertical edges,
/// counting edges that start on its row (half-open rule).
pub fn scanline_even_odd_fill(c: &LatticeCurve) -> Grid<bool> {
    let mut crossings = Grid::filled(c.size, c.size, 0u32);
    for &(r, col) in &c.vertical_edges {
        for x in 0..col {
            crossings[(r, x)] += 1;
        }
    }
    Grid::from_fn(c.size, c.size, |i, j| c.curve[(i, j)] || crossings[(i, j)] % 2 == 1)
}

/// A random square step stack: `side²` maps of 16x16 plus a window that
/// fits it.
pub fn random_step_stack<R: Rng>(rng: &mut R) -> (Vec<Grid<f32>>, usize) {
    let side = rng.random_range(1..=10);
    let window = rng.random_range(1..=side);
    let constant_regions = rng.random_bool(0.2);
    let maps = (0..side * side)
        .map(|_| {
            if constant_regions {
                let v = rng.random::<f32>();
                Grid::filled(16, 16, v)
            } else {
                Grid::from_fn(16, 16, |_, _| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f32>() })
            }
        })
        .collect();
    (maps, window)
}
