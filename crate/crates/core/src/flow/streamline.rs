use serde::{Deserialize, Serialize};

use super::helmholtz::FlowPotentials;
use super::reproject::Reprojection;
use crate::error::{Error, Result};

/// Connected pixels from the Sun to the image edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Streamline {
    pub pixels: Vec<(usize, usize)>,
    /// `[a_x, a_y]`: whether the column / row changes on the step leaving
    /// each pixel (the last pixel repeats the previous step).
    pub axis: Vec<[bool; 2]>,
    /// Plane coordinates in meters, filled by [`Streamline::with_geometry`].
    pub coords: Vec<[f64; 2]>,
    pub cells: Vec<[f64; 2]>,
}

const NEIGHBORS: [(isize, isize); 8] =
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

impl Streamline {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Attaches plane coordinates and cell sizes for every pixel.
    pub fn with_geometry(mut self, geo: &Reprojection) -> Self {
        self.coords = self.pixels.iter().map(|&(i, j)| [geo.x[[i, j]], geo.y[[i, j]]]).collect();
        self.cells = self.pixels.iter().map(|&(i, j)| [geo.dx[[i, j]], geo.dy[[i, j]]]).collect();
        self
    }
}

/// Greedy trace: from the Sun pixel, step to the unvisited 8-neighbor with
/// potential above the Sun's that changes the streamfunction least; ties go
/// to the smallest `(i, j)`. Stops once the current pixel is on the border.
pub fn trace_streamline(p: &FlowPotentials, sun: (usize, usize)) -> Result<Streamline> {
    let (m, n) = p.potential.dim();
    let (i0, j0) = sun;
    if i0 >= m || j0 >= n {
        return Err(Error::InvalidArgument(format!("sun pixel ({i0}, {j0}) outside {m}x{n} grid")));
    }
    let psi_sun = p.potential[[i0, j0]];
    let on_edge = |i: usize, j: usize| i == 0 || j == 0 || i == m - 1 || j == n - 1;
    let mut visited = vec![false; m * n];
    visited[i0 * n + j0] = true;
    let mut pixels = vec![sun];
    let (mut i, mut j) = sun;
    while !on_edge(i, j) {
        let phi = p.streamfunction[[i, j]];
        let mut best: Option<(f64, usize, usize)> = None;
        for (di, dj) in NEIGHBORS {
            let (a, b) = ((i as isize + di) as usize, (j as isize + dj) as usize);
            if visited[a * n + b] || p.potential[[a, b]] <= psi_sun {
                continue;
            }
            let cost = (p.streamfunction[[a, b]] - phi).powi(2);
            // NEIGHBORS is in lexicographic order, so strict < keeps the smallest (i, j)
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, a, b));
            }
        }
        let Some((_, a, b)) = best else {
            return Err(if pixels.len() == 1 {
                Error::EmptyStreamline { row: i, col: j }
            } else {
                Error::StreamlineDeadEnd { row: i, col: j }
            });
        };
        visited[a * n + b] = true;
        pixels.push((a, b));
        (i, j) = (a, b);
    }
    let mut axis: Vec<[bool; 2]> =
        pixels.windows(2).map(|w| [w[0].1 != w[1].1, w[0].0 != w[1].0]).collect();
    axis.push(axis.last().copied().unwrap_or([true, true]));
    Ok(Streamline { pixels, axis, coords: Vec::new(), cells: Vec::new() })
}
