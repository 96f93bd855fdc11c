//! Shared fixtures for the benchmarks.

use hypogeo::{Frame, Grid, GridFunction, NonlinearSystem, SolveOptions};

pub fn profile(x: f64) -> f64 {
    (x / 2f64.sqrt()).tanh()
}

/// Square Grushin grid `[-8, 8]²` with `n` nodes per side.
pub fn grushin_grid(n: usize) -> Grid {
    Grid::new(&[-8.0, -8.0], &[8.0, 8.0], &[n, n]).unwrap()
}

/// Allen–Cahn solution on `grid` with `tanh` boundary data.
pub fn allen_cahn_solution(grid: Grid, frame: &Frame) -> Vec<GridFunction> {
    let data = vec![GridFunction::from_fn(grid, |p| profile(p[0]))];
    hypogeo::solve_semilinear(&grid, frame, &NonlinearSystem::allen_cahn(), &data, Some(&data), &SolveOptions::default())
        .unwrap()
        .u
}
