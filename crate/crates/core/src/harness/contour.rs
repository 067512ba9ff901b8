//! Marching-squares level sets on a grid dump.

use std::collections::HashMap;

use crate::grid::Grid2D;

pub type Polyline = Vec<(f64, f64)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Edge {
    /// Between `(i, j)` and `(i + 1, j)`.
    X(usize, usize),
    /// Between `(i, j)` and `(i, j + 1)`.
    Y(usize, usize),
}

/// Polylines of `{u = level}`; a closed curve repeats its first point.
pub fn contour(grid: &Grid2D<f64>, u: &[f64], level: f64) -> Vec<Polyline> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let at = |i: usize, j: usize| u[i * ny + j];
    let above = |i: usize, j: usize| at(i, j) >= level;

    let point = |e: Edge| -> (f64, f64) {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::X(i, j) => ((i, j), (i + 1, j)),
            Edge::Y(i, j) => ((i, j), (i, j + 1)),
        };
        let (v0, v1) = (at(i0, j0), at(i1, j1));
        let t = if v1 == v0 { 0.5 } else { ((level - v0) / (v1 - v0)).clamp(0.0, 1.0) };
        let (x0, y0) = (grid.gx.point(i0), grid.gy.point(j0));
        let (x1, y1) = (grid.gx.point(i1), grid.gy.point(j1));
        (x0 + t * (x1 - x0), y0 + t * (y1 - y0))
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            // counter-clockwise: bottom, right, top, left
            let edges = [Edge::X(i, j), Edge::Y(i + 1, j), Edge::X(i, j + 1), Edge::Y(i, j)];
            let corners = [above(i, j), above(i + 1, j), above(i + 1, j + 1), above(i, j + 1)];
            let cut: Vec<usize> = (0..4).filter(|&k| corners[k] != corners[(k + 1) % 4]).collect();
            match cut.len() {
                2 => segments.push((edges[cut[0]], edges[cut[1]])),
                4 => {
                    let center = 0.25 * (at(i, j) + at(i + 1, j) + at(i + 1, j + 1) + at(i, j + 1)) >= level;
                    // isolate the corners whose state differs from the center
                    if corners[0] == center {
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }

    let mut touching: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        touching.entry(a).or_default().push(s);
        touching.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let next = |edge: Edge, used: &[bool]| touching[&edge].iter().copied().find(|&s| !used[s]);

    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut chain = std::collections::VecDeque::from([a, b]);
        let mut tail = b;
        while let Some(s) = next(tail, &used) {
            used[s] = true;
            let (p, q) = segments[s];
            tail = if p == tail { q } else { p };
            chain.push_back(tail);
        }
        let mut head = a;
        while let Some(s) = next(head, &used) {
            used[s] = true;
            let (p, q) = segments[s];
            head = if p == head { q } else { p };
            chain.push_front(head);
        }
        lines.push(chain.into_iter().map(point).collect());
    }
    lines
}

/// `(min, max)` of the x coordinate over all polylines.
pub fn x_range(lines: &[Polyline]) -> Option<(f64, f64)> {
    lines.iter().flatten().fold(None, |r, &(x, _)| match r {
        None => Some((x, x)),
        Some((lo, hi)) => Some((f64::min(lo, x), f64::max(hi, x))),
    })
}

/// Bilinear interpolation of a grid function at `(x, y)`.
pub fn interpolate(grid: &Grid2D<f64>, u: &[f64], x: f64, y: f64) -> f64 {
    crate::parallel::bilinear_stencil(grid, x, y).gather(u)
}
