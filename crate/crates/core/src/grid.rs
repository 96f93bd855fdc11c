//! Rectangular grids: finite-difference jets, assembly of the sub-Laplacian,
//! anisotropic balls, cutoff functions and quadrature.
//!
//! Nodes are vertex-centered, `x_i = lo + i (hi - lo)/(n - 1)` for
//! `i = 0..n`, with the x index running fastest in flat storage.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::JetSample;
use crate::error::{Error, Result};
use crate::fields::{Frame, VectorField};
use crate::linalg::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    lo: [f64; 3],
    hi: [f64; 3],
    n: [usize; 3],
    h: [f64; 3],
}

impl Grid {
    /// `n` holds node counts per axis (at least 3 each).
    pub fn new(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Self> {
        let dim = n.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!("grid dimension {dim} not in 1..=3")));
        }
        for other in [lo.len(), hi.len()] {
            if other != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: other });
            }
        }
        let mut g = Grid {
            dim,
            lo: [0.0; 3],
            hi: [0.0; 3],
            n: [1; 3],
            h: [1.0; 3],
        };
        for k in 0..dim {
            if n[k] < 3 {
                return Err(Error::GridTooSmall { axis: k, nodes: n[k] });
            }
            if !(lo[k].is_finite() && hi[k].is_finite() && hi[k] > lo[k]) {
                return Err(Error::InvalidArgument(format!(
                    "axis {k}: need finite lo < hi, got [{}, {}]",
                    lo[k], hi[k]
                )));
            }
            g.lo[k] = lo[k];
            g.hi[k] = hi[k];
            g.n[k] = n[k];
            g.h[k] = (hi[k] - lo[k]) / (n[k] - 1) as f64;
        }
        Ok(g)
    }

    /// Square/cubic box `[-half_width, half_width]^dim` with `nodes` per axis.
    pub fn centered(dim: usize, half_width: f64, nodes: usize) -> Result<Self> {
        Grid::new(&vec![-half_width; dim], &vec![half_width; dim], &vec![nodes; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi[..self.dim]
    }

    pub fn nodes(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h[..self.dim]
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element `Π h_k`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        let n1 = (self.n[axis] - 1) as f64;
        self.lo[axis] + (self.hi[axis] - self.lo[axis]) * (i as f64) / n1
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|i| self.axis_coord(axis, i)).collect()
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        [idx % self.n[0], (idx / self.n[0]) % self.n[1], idx / (self.n[0] * self.n[1])]
    }

    pub fn index(&self, m: [usize; 3]) -> usize {
        m[0] + self.n[0] * (m[1] + self.n[1] * m[2])
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let m = self.multi_index(idx);
        (0..self.dim).map(|k| self.axis_coord(k, m[k])).collect()
    }

    /// Neighbor `delta` steps along `axis`, if inside the grid.
    pub fn neighbor(&self, idx: usize, axis: usize, delta: isize) -> Option<usize> {
        let mut m = self.multi_index(idx);
        let j = m[axis] as isize + delta;
        if j < 0 || j >= self.n[axis] as isize {
            return None;
        }
        m[axis] = j as usize;
        Some(self.index(m))
    }

    /// Number of steps to the nearest boundary face.
    pub fn boundary_distance(&self, idx: usize) -> usize {
        let m = self.multi_index(idx);
        (0..self.dim).map(|k| m[k].min(self.n[k] - 1 - m[k])).min().unwrap()
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary_distance(idx) == 0
    }

    pub fn interior_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| !self.is_boundary(i)).collect()
    }

    /// Product trapezoid weights; exact for multilinear integrands.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let vol = self.cell_volume();
        (0..self.len())
            .map(|idx| {
                let m = self.multi_index(idx);
                (0..self.dim).fold(vol, |w, k| if m[k] == 0 || m[k] == self.n[k] - 1 { w * 0.5 } else { w })
            })
            .collect()
    }

    /// Same box with `(n - 1) * factor + 1` nodes per axis.
    pub fn refined(&self, factor: usize) -> Result<Grid> {
        let n: Vec<usize> = self.nodes().iter().map(|&n| (n - 1) * factor + 1).collect();
        Grid::new(self.lo(), self.hi(), &n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at node {i}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.point(i))).collect();
        GridFunction { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Coefficients of a field at every node, padded to three axes.
pub fn sample_field(grid: &Grid, field: &VectorField) -> Vec<[f64; 3]> {
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.point(i);
            let mut c = [0.0; 3];
            for (k, poly) in field.coeffs().iter().enumerate() {
                c[k] = poly.eval_f64(&p);
            }
            c
        })
        .collect()
}

fn check_frame(grid: &Grid, frame: &Frame) -> Result<()> {
    if frame.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: frame.dim(),
        });
    }
    Ok(())
}

/// Partial derivative along `axis` at a node: centered inside, second-order
/// one-sided on the boundary faces.
fn partial(grid: &Grid, v: &[f64], idx: usize, axis: usize) -> f64 {
    let h = grid.h[axis];
    match (grid.neighbor(idx, axis, -1), grid.neighbor(idx, axis, 1)) {
        (Some(m), Some(p)) => (v[p] - v[m]) / (2.0 * h),
        (None, Some(p)) => {
            let pp = grid.neighbor(idx, axis, 2).unwrap();
            (-3.0 * v[idx] + 4.0 * v[p] - v[pp]) / (2.0 * h)
        }
        (Some(m), None) => {
            let mm = grid.neighbor(idx, axis, -2).unwrap();
            (3.0 * v[idx] - 4.0 * v[m] + v[mm]) / (2.0 * h)
        }
        (None, None) => unreachable!("grid axes have at least 3 nodes"),
    }
}

/// `F v` at every node, with `F` given by sampled coefficients.
pub fn field_derivative(grid: &Grid, coeffs: &[[f64; 3]], v: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            (0..grid.dim)
                .filter(|&k| coeffs[i][k] != 0.0)
                .map(|k| coeffs[i][k] * partial(grid, v, i, k))
                .sum()
        })
        .collect()
}

/// Finite-difference horizontal jets of a grid function at every node.
#[derive(Clone, Debug)]
pub struct JetFields {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub xu: Vec<f64>,
    pub yu: Vec<f64>,
    pub zu: Vec<f64>,
    pub xxu: Vec<f64>,
    pub xyu: Vec<f64>,
    pub yxu: Vec<f64>,
    pub yyu: Vec<f64>,
    pub zxu: Vec<f64>,
    pub zyu: Vec<f64>,
    pub x_grad_norm: Vec<f64>,
    pub y_grad_norm: Vec<f64>,
}

impl JetFields {
    pub fn compute(u: &GridFunction, frame: &Frame) -> Result<Self> {
        let grid = *u.grid();
        check_frame(&grid, frame)?;
        let cx = sample_field(&grid, &frame.x);
        let cy = sample_field(&grid, &frame.y);
        let cz = sample_field(&grid, &frame.z);
        let v = u.values();
        let xu = field_derivative(&grid, &cx, v);
        let yu = field_derivative(&grid, &cy, v);
        let gn: Vec<f64> = xu.iter().zip(&yu).map(|(a, b)| a.hypot(*b)).collect();
        Ok(JetFields {
            grid,
            u: v.to_vec(),
            zu: field_derivative(&grid, &cz, v),
            xxu: field_derivative(&grid, &cx, &xu),
            xyu: field_derivative(&grid, &cx, &yu),
            yxu: field_derivative(&grid, &cy, &xu),
            yyu: field_derivative(&grid, &cy, &yu),
            zxu: field_derivative(&grid, &cz, &xu),
            zyu: field_derivative(&grid, &cz, &yu),
            x_grad_norm: field_derivative(&grid, &cx, &gn),
            y_grad_norm: field_derivative(&grid, &cy, &gn),
            xu,
            yu,
        })
    }

    pub fn jet(&self, idx: usize) -> JetSample {
        JetSample {
            point: self.grid.point(idx),
            u: self.u[idx],
            xu: self.xu[idx],
            yu: self.yu[idx],
            zu: self.zu[idx],
            xxu: self.xxu[idx],
            xyu: self.xyu[idx],
            yxu: self.yxu[idx],
            yyu: self.yyu[idx],
            zxu: Some(self.zxu[idx]),
            zyu: Some(self.zyu[idx]),
            x_grad_norm: Some(self.x_grad_norm[idx]),
            y_grad_norm: Some(self.y_grad_norm[idx]),
        }
    }

    pub fn grad_norm(&self, idx: usize) -> f64 {
        self.xu[idx].hypot(self.yu[idx])
    }
}

/// Jet at a single node from centered differences only; the node must be at
/// least two steps from the boundary.
pub fn jet_from_grid(u: &GridFunction, node: usize, frame: &Frame) -> Result<JetSample> {
    let grid = *u.grid();
    check_frame(&grid, frame)?;
    if node >= grid.len() {
        return Err(Error::InvalidArgument(format!("node {node} outside grid")));
    }
    if grid.boundary_distance(node) < 2 {
        return Err(Error::NearBoundary { node, required: 2 });
    }
    let coeff = |field: &VectorField, idx: usize| -> [f64; 3] {
        let p = grid.point(idx);
        let mut c = [0.0; 3];
        for (k, poly) in field.coeffs().iter().enumerate() {
            c[k] = poly.eval_f64(&p);
        }
        c
    };
    let centered = |field: &VectorField, idx: usize, f: &dyn Fn(usize) -> f64| -> f64 {
        let c = coeff(field, idx);
        (0..grid.dim)
            .filter(|&k| c[k] != 0.0)
            .map(|k| {
                let p = grid.neighbor(idx, k, 1).unwrap();
                let m = grid.neighbor(idx, k, -1).unwrap();
                c[k] * (f(p) - f(m)) / (2.0 * grid.h[k])
            })
            .sum()
    };
    let v = u.values();
    let val = |i: usize| v[i];
    let xu = |i: usize| centered(&frame.x, i, &val);
    let yu = |i: usize| centered(&frame.y, i, &val);
    let gn = |i: usize| xu(i).hypot(yu(i));
    Ok(JetSample {
        point: grid.point(node),
        u: v[node],
        xu: xu(node),
        yu: yu(node),
        zu: centered(&frame.z, node, &val),
        xxu: centered(&frame.x, node, &xu),
        xyu: centered(&frame.x, node, &yu),
        yxu: centered(&frame.y, node, &xu),
        yyu: centered(&frame.y, node, &yu),
        zxu: Some(centered(&frame.z, node, &xu)),
        zyu: Some(centered(&frame.z, node, &yu)),
        x_grad_norm: Some(centered(&frame.x, node, &gn)),
        y_grad_norm: Some(centered(&frame.y, node, &gn)),
    })
}

/// Discrete sub-Laplacian on interior rows; boundary rows are empty, so the
/// operator acts on any node vector and reads boundary values as data.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    pub grid: Grid,
    pub matrix: CsrMatrix,
    pub interior: Vec<bool>,
}

impl SparseOperator {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(v)
    }

    /// `∫ |∇ζ|²` in the discrete energy that generates the operator, for `ζ`
    /// vanishing on the boundary.
    pub fn dirichlet_energy(&self, zeta: &[f64]) -> f64 {
        let lz = self.apply(zeta);
        let s: f64 = (0..zeta.len()).filter(|&i| self.interior[i]).map(|i| -zeta[i] * lz[i]).sum();
        s * self.grid.cell_volume()
    }

    /// Interior-by-interior block as a dense matrix (small grids only).
    pub fn interior_dense(&self) -> Vec<Vec<f64>> {
        let idx: Vec<usize> = (0..self.grid.len()).filter(|&i| self.interior[i]).collect();
        idx.iter()
            .map(|&i| idx.iter().map(|&j| self.matrix.get(i, j)).collect())
            .collect()
    }
}

/// One-sided difference vectors of a field at a center node: for every sign
/// choice along the active axes, `g = Σ F_k s_k (v[c + s_k e_k] - v[c]) / h_k`,
/// returned as (node, coefficient) lists. Vectors leaving the grid are skipped.
fn difference_vectors(grid: &Grid, coeff: [f64; 3], c: usize) -> (Vec<Vec<(usize, f64)>>, f64) {
    let active: Vec<usize> = (0..grid.dim).filter(|&k| coeff[k] != 0.0).collect();
    if active.is_empty() {
        return (Vec::new(), 0.0);
    }
    let weight = 1.0 / (1u32 << active.len()) as f64;
    let mut out = Vec::with_capacity(1 << active.len());
    'signs: for mask in 0..(1u32 << active.len()) {
        let mut entries = Vec::with_capacity(active.len() + 1);
        let mut center = 0.0;
        for (bit, &k) in active.iter().enumerate() {
            let s: isize = if mask & (1 << bit) == 0 { 1 } else { -1 };
            let Some(nb) = grid.neighbor(c, k, s) else {
                continue 'signs;
            };
            let w = coeff[k] * s as f64 / grid.h[k];
            entries.push((nb, w));
            center -= w;
        }
        entries.push((c, center));
        out.push(entries);
    }
    (out, weight)
}

/// Assembles `Δ = X X + Y Y` from the discrete energy
/// `Σ_c Σ_F 2^{-|K|} Σ_s g_{F,c,s}(u)²` of averaged one-sided differences.
///
/// The matrix on interior rows is minus the Hessian of that energy, hence
/// symmetric and negative semidefinite for every frame. For diagonal fields
/// such as Grushin's it is the flux-form five-point stencil with the
/// coefficient sampled on the grid line of the edge, which is exact on
/// quadratics in `x` and `y`.
pub fn assemble_sublaplacian(grid: &Grid, frame: &Frame) -> Result<SparseOperator> {
    check_frame(grid, frame)?;
    let fields = [sample_field(grid, &frame.x), sample_field(grid, &frame.y)];
    let interior = grid.interior_mask();
    let rows: Vec<Vec<(usize, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::new();
            if !interior[i] {
                return row;
            }
            let mut centers = vec![i];
            for k in 0..grid.dim {
                centers.extend(grid.neighbor(i, k, -1));
                centers.extend(grid.neighbor(i, k, 1));
            }
            for coeffs in &fields {
                for &c in &centers {
                    let (vectors, weight) = difference_vectors(grid, coeffs[c], c);
                    for v in vectors {
                        let Some(&(_, wi)) = v.iter().find(|(n, _)| *n == i) else {
                            continue;
                        };
                        for &(n, wn) in &v {
                            row.push((n, -weight * wi * wn));
                        }
                    }
                }
            }
            row
        })
        .collect();
    Ok(SparseOperator {
        grid: *grid,
        matrix: CsrMatrix::from_rows(grid.len(), rows),
        interior,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// `(x⁴ + y²)^{1/4}`
    Grushin,
    /// `((x² + y²)² + z²)^{1/4}`
    Heisenberg,
    Euclidean,
}

impl NormKind {
    pub fn for_frame(frame: &Frame) -> NormKind {
        use crate::fields::FrameKind::*;
        match frame.kind {
            Grushin2D => NormKind::Grushin,
            Heisenberg3D => NormKind::Heisenberg,
            _ => NormKind::Euclidean,
        }
    }

    pub fn eval(self, p: &[f64]) -> f64 {
        let c = |k: usize| p.get(k).copied().unwrap_or(0.0);
        match self {
            NormKind::Grushin => (c(0).powi(4) + c(1).powi(2)).powf(0.25),
            NormKind::Heisenberg => {
                let r2 = c(0) * c(0) + c(1) * c(1);
                (r2 * r2 + c(2) * c(2)).powf(0.25)
            }
            NormKind::Euclidean => p.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// Half-widths of the coordinate box enclosing the ball of radius `r`.
    pub fn ball_extent(self, r: f64, dim: usize) -> Vec<f64> {
        let e = match self {
            NormKind::Grushin => vec![r, r * r, 0.0],
            NormKind::Heisenberg => vec![r, r, r * r],
            NormKind::Euclidean => vec![r; 3],
        };
        e[..dim].to_vec()
    }
}

/// Whether the ball of radius `r` fits inside the grid box.
pub fn ball_fits(grid: &Grid, r: f64, kind: NormKind) -> bool {
    kind.ball_extent(r, grid.dim())
        .iter()
        .enumerate()
        .all(|(k, &e)| -e >= grid.lo[k] && e <= grid.hi[k])
}

pub fn anisotropic_ball_mask(grid: &Grid, r: f64, kind: NormKind) -> Vec<bool> {
    (0..grid.len()).into_par_iter().map(|i| kind.eval(&grid.point(i)) < r).collect()
}

/// Logarithmic cutoff: `1/2` on `‖p‖ ≤ √R`, `(ln R - ln‖p‖)/ln R` up to
/// `‖p‖ = R`, zero beyond.
pub fn chi_value(norm: f64, r: f64) -> f64 {
    if norm <= r.sqrt() {
        0.5
    } else if norm < r {
        (r.ln() - norm.ln()) / r.ln()
    } else {
        0.0
    }
}

pub fn cutoff_chi(grid: &Grid, r: f64, kind: NormKind) -> Result<GridFunction> {
    if !(r > 1.0) {
        return Err(Error::InvalidArgument(format!("cutoff radius must exceed 1, got {r}")));
    }
    Ok(GridFunction::from_fn(*grid, |p| chi_value(kind.eval(p), r)))
}

/// Quadrature of `f` over the grid, restricted to `mask` when given.
pub fn integrate(f: &GridFunction, mask: Option<&[bool]>) -> f64 {
    let w = f.grid().quadrature_weights();
    f.values()
        .iter()
        .zip(&w)
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
        .map(|(_, (v, w))| v * w)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::geometric_report;
    use crate::polynomial::Polynomial;

    fn grushin_grid(n: usize) -> Grid {
        Grid::new(&[-1.0, -1.5], &[2.0, 1.0], &[n, n + 2]).unwrap()
    }

    fn max_interior_error(op: &SparseOperator, u: &GridFunction, exact: impl Fn(&[f64]) -> f64) -> f64 {
        let lu = op.apply(u.values());
        (0..op.grid.len())
            .filter(|&i| op.interior[i])
            .map(|i| (lu[i] - exact(&op.grid.point(i))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_layout() {
        let g = Grid::new(&[0.0, -1.0], &[1.0, 1.0], &[5, 3]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.point(7), vec![0.5, 0.0]);
        assert_eq!(g.spacing(), &[0.25, 1.0]);
        assert_eq!(g.interior_mask().iter().filter(|b| **b).count(), 3);
        assert!(matches!(
            Grid::new(&[0.0], &[1.0], &[2]),
            Err(Error::GridTooSmall { axis: 0, nodes: 2 })
        ));
        let c = Grid::centered(2, 8.0, 129).unwrap();
        assert_eq!(c.axis_coord(0, 64), 0.0);
    }

    #[test]
    fn quadrature_examples() {
        let g = Grid::new(&[0.0, 0.0], &[1.0, 1.0], &[11, 7]).unwrap();
        assert!((integrate(&GridFunction::constant(g, 1.0), None) - 1.0).abs() < 1e-14);
        let fx = GridFunction::from_fn(g, |p| p[0]);
        assert!((integrate(&fx, None) - 0.5).abs() < 1e-14);
        assert_eq!(integrate(&fx, Some(&vec![false; g.len()])), 0.0);
    }

    #[test]
    fn grushin_stencil_on_quadratics() {
        let g = grushin_grid(21);
        let op = assemble_sublaplacian(&g, &Frame::grushin2d()).unwrap();
        let x2 = GridFunction::from_fn(g, |p| p[0] * p[0]);
        assert!(max_interior_error(&op, &x2, |_| 2.0) < 1e-11);
        let y2 = GridFunction::from_fn(g, |p| p[1] * p[1]);
        assert!(max_interior_error(&op, &y2, |p| 2.0 * p[0] * p[0]) < 1e-11);
        let c = GridFunction::constant(g, 3.7);
        assert!(max_interior_error(&op, &c, |_| 0.0) < 1e-12);
    }

    #[test]
    fn operators_symmetric_and_nonpositive() {
        let frames = [
            (Frame::euclidean2d(), Grid::new(&[-1.0, -1.0], &[1.0, 0.5], &[6, 5]).unwrap()),
            (Frame::grushin2d(), grushin_grid(6)),
            (Frame::heisenberg3d(), Grid::centered(3, 1.0, 5).unwrap()),
            (Frame::martinet3d(), Grid::new(&[-1.0, -0.5, 0.0], &[1.0, 1.0, 1.0], &[5, 4, 4]).unwrap()),
        ];
        for (frame, grid) in frames {
            let op = assemble_sublaplacian(&grid, &frame).unwrap();
            let a = op.interior_dense();
            let n = a.len();
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
            assert!((&m - m.transpose()).abs().max() < 1e-12);
            let max_eig = m.symmetric_eigenvalues().max();
            assert!(max_eig <= 1e-10, "{:?}: {max_eig}", frame.kind);
        }
    }

    #[test]
    fn convergence_order_on_smooth_function() {
        let errs: Vec<f64> = [33, 65]
            .iter()
            .map(|&n| {
                let g = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], &[n, n]).unwrap();
                let op = assemble_sublaplacian(&g, &Frame::grushin2d()).unwrap();
                let u = GridFunction::from_fn(g, |p| p[0].sin() * p[1].cos());
                max_interior_error(&op, &u, |p| -(1.0 + p[0] * p[0]) * p[0].sin() * p[1].cos())
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn heisenberg_consistency_is_second_order() {
        // sin(x)cos(y) does not depend on z, so Δ of it is -2 sin(x)cos(y);
        // the polynomial part goes through the exact calculus.
        let frame = Frame::heisenberg3d();
        let poly = Polynomial::from_terms(3, &[(&[0, 0, 2], 1, 4), (&[1, 0, 1], 1, 1)]);
        let lap = crate::symcalc::sublaplacian(&frame, &poly).unwrap();
        let errs: Vec<f64> = [17, 33]
            .iter()
            .map(|&n| {
                let g = Grid::centered(3, 1.0, n).unwrap();
                let op = assemble_sublaplacian(&g, &frame).unwrap();
                let u = GridFunction::from_fn(g, |p| p[0].sin() * p[1].cos() + poly.eval_f64(p));
                max_interior_error(&op, &u, |p| -2.0 * p[0].sin() * p[1].cos() + lap.eval_f64(p))
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 1.8, "errors {errs:?}");
    }

    #[test]
    fn jets_exact_on_quadratics() {
        let g = grushin_grid(13);
        let frame = Frame::grushin2d();
        let u = GridFunction::from_fn(g, |p| p[0] * p[0]);
        let node = g.index([5, 6, 0]);
        let j = jet_from_grid(&u, node, &frame).unwrap();
        let x = g.point(node)[0];
        assert!((j.xu - 2.0 * x).abs() < 1e-12);
        assert!((j.xxu - 2.0).abs() < 1e-11);
        let w = GridFunction::from_fn(g, |p| p[1]);
        let j = jet_from_grid(&w, node, &frame).unwrap();
        assert!((j.xyu - 1.0).abs() < 1e-11);
        let c = GridFunction::constant(g, 2.0);
        let j = jet_from_grid(&c, node, &frame).unwrap();
        assert_eq!([j.xu, j.yu, j.zu, j.xxu, j.xyu, j.yxu, j.yyu], [0.0; 7]);
        assert!(matches!(
            jet_from_grid(&c, g.index([1, 5, 0]), &frame),
            Err(Error::NearBoundary { .. })
        ));
    }

    #[test]
    fn jet_fields_match_single_node_jets() {
        let g = Grid::centered(3, 1.0, 9).unwrap();
        let frame = Frame::heisenberg3d();
        let u = GridFunction::from_fn(g, |p| (p[0] + 0.3 * p[2]).exp() * (1.5 + p[1].sin()));
        let fields = JetFields::compute(&u, &frame).unwrap();
        for node in (0..g.len()).filter(|&i| g.boundary_distance(i) >= 2) {
            assert_eq!(fields.jet(node), jet_from_grid(&u, node, &frame).unwrap());
        }
    }

    #[test]
    fn grid_jets_converge_to_polynomial_jets() {
        let frame = Frame::grushin2d();
        let w = Polynomial::from_terms(2, &[(&[3, 1], 1, 1), (&[0, 2], -1, 2), (&[1, 0], 2, 1)]);
        let g = Grid::new(&[0.5, -1.0], &[1.5, 1.0], &[41, 41]).unwrap();
        let u = GridFunction::from_fn(g, |p| w.eval_f64(p));
        let node = g.index([20, 20, 0]);
        let fd = geometric_report(&jet_from_grid(&u, node, &frame).unwrap(), 1e-8);
        let ex = geometric_report(&JetSample::from_polynomial(&frame, &w, &g.point(node)).unwrap(), 1e-8);
        assert!((fd.a - ex.a).abs() < 1e-2);
        assert!((fd.b - ex.b).abs() < 1e-2);
    }

    #[test]
    fn norms_and_cutoff() {
        assert_eq!(NormKind::Grushin.eval(&[0.0, 1.0]), 1.0);
        assert_eq!(NormKind::Grushin.eval(&[1.0, 0.0]), 1.0);
        assert!((NormKind::Heisenberg.eval(&[1.0, 1.0, 0.0]) - 2f64.sqrt()).abs() < 1e-15);
        let r: f64 = 16.0;
        assert_eq!(chi_value(r.sqrt(), r), 0.5);
        assert_eq!(chi_value(r, r), 0.0);
        assert!((chi_value(r.powf(0.75), r) - 0.25).abs() < 1e-15);
        let g = Grid::centered(2, 2.0, 5).unwrap();
        assert!(cutoff_chi(&g, 1.0, NormKind::Grushin).is_err());
        let mask = anisotropic_ball_mask(&g, 1.0001, NormKind::Grushin);
        assert!(mask[g.index([2, 3, 0])]);
        assert!(!anisotropic_ball_mask(&g, 1.0, NormKind::Grushin)[g.index([2, 3, 0])]);
    }

    #[test]
    fn cutoff_is_continuous_at_breakpoints() {
        let r = 9.0f64;
        for b in [r.sqrt(), r] {
            let jumps: Vec<f64> = [1e-3, 1e-6]
                .iter()
                .map(|d| (chi_value(b - d, r) - chi_value(b + d, r)).abs())
                .collect();
            assert!(jumps[1] < jumps[0] && jumps[1] < 1e-5);
        }
    }
}
