//! Linearized operators, smallest-eigenvalue certificates, and the
//! stability and geometric Poincaré inequalities evaluated on grids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calculus::geometric_report;
use crate::error::{Error, Result};
use crate::fields::Frame;
use crate::grid::{field_derivative, sample_field, Grid, GridFunction, JetFields, SparseOperator};
use crate::linalg::{dot, max_abs, norm2, CsrMatrix, SparseCholesky};
use crate::solver::{interleave, residual, NonlinearSystem};

/// `φ ↦ Δφ_i - Σ_j ∂_jH_i(u) φ_j` on interior unknowns (Dirichlet-zero),
/// node-major with `m` components per node.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub grid: Grid,
    pub m: usize,
    pub symmetric: bool,
    pub matrix: CsrMatrix,
    pub interior_nodes: Vec<usize>,
}

impl LinearizedOperator {
    /// Spreads an interior vector back onto `m` grid functions (zero on the boundary).
    pub fn to_fields(&self, v: &[f64]) -> Vec<GridFunction> {
        let mut out = vec![vec![0.0; self.grid.len()]; self.m];
        for (k, &node) in self.interior_nodes.iter().enumerate() {
            for (c, f) in out.iter_mut().enumerate() {
                f[node] = v[k * self.m + c];
            }
        }
        out.into_iter().map(|f| GridFunction::new(self.grid, f).unwrap()).collect()
    }
}

fn check_fields(grid: &Grid, m: usize, fields: &[GridFunction]) -> Result<()> {
    if fields.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: fields.len() });
    }
    if fields.iter().any(|f| f.grid() != grid) {
        return Err(Error::InvalidArgument("field defined on a different grid".into()));
    }
    Ok(())
}

pub fn assemble_linearized(op: &SparseOperator, system: &NonlinearSystem, u: &[GridFunction]) -> Result<LinearizedOperator> {
    let m = system.m;
    check_fields(&op.grid, m, u)?;
    let uv = interleave(u);
    let interior_nodes: Vec<usize> = (0..op.grid.len()).filter(|&i| op.interior[i]).collect();
    let mut position = vec![usize::MAX; op.grid.len()];
    for (k, &node) in interior_nodes.iter().enumerate() {
        position[node] = k;
    }
    let mut jac = vec![0.0; m * m];
    let mut rows = Vec::with_capacity(interior_nodes.len() * m);
    for (k, &node) in interior_nodes.iter().enumerate() {
        system.jacobian(&uv[node * m..(node + 1) * m], &mut jac);
        for c in 0..m {
            let mut r: Vec<(usize, f64)> = op
                .matrix
                .row(node)
                .filter(|(j, _)| position[*j] != usize::MAX)
                .map(|(j, v)| (position[j] * m + c, v))
                .collect();
            for d in 0..m {
                if d == c || jac[c * m + d] != 0.0 {
                    r.push((k * m + d, -jac[c * m + d]));
                }
            }
            rows.push(r);
        }
    }
    Ok(LinearizedOperator {
        grid: op.grid,
        m,
        symmetric: system.symmetric,
        matrix: CsrMatrix::from_rows(interior_nodes.len() * m, rows),
        interior_nodes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub margin: f64,
    /// Relative width of the inertia bracket handed to inverse iteration.
    pub bracket_rel: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            rel_tol: 1e-8,
            max_iter: 500,
            margin: 1e-6,
            bracket_rel: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    pub lambda: f64,
    pub vector: Vec<f64>,
    /// `[lo, hi]` with `A - lo I` positive definite and `A - hi I` not.
    pub bracket: (f64, f64),
    pub iterations: usize,
    pub factorizations: usize,
}

fn positive_definite(a: &CsrMatrix, shift: f64) -> Result<Option<SparseCholesky>> {
    SparseCholesky::new(&a.shifted(-shift))
}

/// Smallest eigenpair of a symmetric matrix: bisection on positive
/// definiteness of `A - σI` brackets `λ_min`, then inverse iteration from
/// just below it.
pub fn smallest_eigenpair(a: &CsrMatrix, opts: &EigenOptions) -> Result<EigenResult> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty operator".into()));
    }
    let lb = a.gershgorin_lower();
    let ub = a.gershgorin_upper();
    let scale = (ub - lb).max(lb.abs()).max(ub.abs()).max(f64::MIN_POSITIVE);
    let floor = 1e-13 * scale;
    let mut factorizations = 0;

    let mut lo = lb - floor;
    loop {
        factorizations += 1;
        if positive_definite(a, lo)?.is_some() {
            break;
        }
        lo -= (lb - lo).abs().max(floor) * 2.0;
    }
    let mut hi = ub + floor;
    while hi - lo > (opts.bracket_rel * lo.abs().max(hi.abs())).max(floor) {
        let mid = 0.5 * (lo + hi);
        factorizations += 1;
        if positive_definite(a, mid)?.is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let chol = positive_definite(a, lo)?.ok_or_else(|| Error::LinearSolve("lost definiteness at bracket end".into()))?;
    factorizations += 1;
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.25 * ((i as f64) * 0.618).sin()).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut mu = dot(&x, &a.mul_vec(&x));
    for it in 1..=opts.max_iter {
        let mut y = chol.solve(&x);
        let ny = norm2(&y);
        y.iter_mut().for_each(|v| *v /= ny);
        x = y;
        let next = dot(&x, &a.mul_vec(&x));
        let done = (next - mu).abs() <= opts.rel_tol * next.abs().max(floor);
        mu = next;
        if done {
            return Ok(EigenResult {
                lambda: mu,
                vector: x,
                bracket: (lo, hi),
                iterations: it,
                factorizations,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        last: mu,
    })
}

#[derive(Clone, Debug)]
pub struct StabilityCertificate {
    /// Smallest eigenvalue of `-(Δ - J(u))`.
    pub lambda: f64,
    /// Eigenfunction, scaled to max-abs 1 and positive sum.
    pub phi: Vec<GridFunction>,
    pub stable: bool,
    pub margin: f64,
    pub iterations: usize,
}

pub fn smallest_eigenvalue(op: &LinearizedOperator, opts: &EigenOptions) -> Result<StabilityCertificate> {
    if !op.symmetric {
        return Err(Error::InvalidArgument(
            "spectral certificate needs a symmetric system".into(),
        ));
    }
    let res = smallest_eigenpair(&op.matrix.scaled(-1.0), opts)?;
    let mut v = res.vector;
    let s: f64 = v.iter().sum();
    let scale = max_abs(&v) * if s < 0.0 { -1.0 } else { 1.0 };
    v.iter_mut().for_each(|x| *x /= scale);
    Ok(StabilityCertificate {
        lambda: res.lambda,
        phi: op.to_fields(&v),
        stable: res.lambda >= -opts.margin,
        margin: opts.margin,
        iterations: res.iterations,
    })
}

/// First node of `zeta` that is nonzero within two steps of the boundary.
pub fn check_compact_support(zeta: &[GridFunction]) -> Result<()> {
    for z in zeta {
        let g = z.grid();
        if let Some(node) = (0..g.len()).find(|&i| g.boundary_distance(i) < 2 && z.values()[i] != 0.0) {
            return Err(Error::NotCompactlySupported { node });
        }
    }
    Ok(())
}

/// Right side minus left side of `-Σ∫ ∂_iH_j(u) ζ_i ζ_j ≤ Σ∫ |∇ζ_i|²`, with
/// the gradient energy taken from the same discrete energy as `op`, so the
/// gap equals `h^d ζᵀ(-Δ + J)ζ` exactly.
pub fn stability_inequality_gap(op: &SparseOperator, system: &NonlinearSystem, u: &[GridFunction], zeta: &[GridFunction]) -> Result<f64> {
    let m = system.m;
    check_fields(&op.grid, m, u)?;
    check_fields(&op.grid, m, zeta)?;
    check_compact_support(zeta)?;
    let rhs: f64 = zeta.iter().map(|z| op.dirichlet_energy(z.values())).sum();
    let uv = interleave(u);
    let zv = interleave(zeta);
    let w = op.grid.quadrature_weights();
    let mut jac = vec![0.0; m * m];
    let mut lhs = 0.0;
    for i in 0..op.grid.len() {
        let z = &zv[i * m..(i + 1) * m];
        if z.iter().all(|v| *v == 0.0) {
            continue;
        }
        system.jacobian(&uv[i * m..(i + 1) * m], &mut jac);
        let mut q = 0.0;
        for a in 0..m {
            for b in 0..m {
                q += jac[a * m + b] * z[a] * z[b];
            }
        }
        lhs -= w[i] * q;
    }
    Ok(rhs - lhs)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub lhs_terms: BTreeMap<String, f64>,
    pub rhs: f64,
    pub gap: f64,
    pub masked_fraction: f64,
}

impl InequalityReport {
    pub fn lhs_total(&self) -> f64 {
        self.lhs_terms.values().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareOptions {
    pub grad_floor: f64,
    /// Largest interior residual of `u` accepted as a solution.
    pub solution_tol: f64,
}

impl Default for PoincareOptions {
    fn default() -> Self {
        PoincareOptions {
            grad_floor: crate::calculus::DEFAULT_GRAD_FLOOR,
            solution_tol: 1e-6,
        }
    }
}

pub const TERM_CURVATURE: &str = "curvature";
pub const TERM_BRACKET: &str = "bracket";
pub const TERM_COUPLING: &str = "coupling";

/// Terms of the geometric Poincaré inequality
///
/// `Σ∫_{∇u_i≠0} |∇u_i|²(A_i² + B_i²)ζ_i² - Σ∫ 2[ZYu_i Xu_i - ZXu_i Yu_i]ζ_i²
///  + Σ_{i≠j}∫ ∂_jH_i(u)[⟨∇u_i,∇u_j⟩ζ_i² - |∇u_i||∇u_j|ζ_iζ_j] ≤ Σ∫ |∇u_i|²|∇ζ_i|²`
///
/// with finite-difference jets. Nodes with `|∇u_i|` at or below the floor
/// contribute nothing to either side.
pub fn poincare_gap(
    op: &SparseOperator,
    frame: &Frame,
    system: &NonlinearSystem,
    u: &[GridFunction],
    zeta: &[GridFunction],
    opts: &PoincareOptions,
) -> Result<InequalityReport> {
    let m = system.m;
    let grid = op.grid;
    check_fields(&grid, m, u)?;
    check_fields(&grid, m, zeta)?;
    check_compact_support(zeta)?;
    let res = max_abs(&residual(op, system, &interleave(u)));
    if res > opts.solution_tol {
        return Err(Error::NotASolution {
            residual: res,
            limit: opts.solution_tol,
        });
    }
    let jets: Vec<JetFields> = u.iter().map(|f| JetFields::compute(f, frame)).collect::<Result<_>>()?;
    let cx = sample_field(&grid, &frame.x);
    let cy = sample_field(&grid, &frame.y);
    let w = grid.quadrature_weights();
    let uv = interleave(u);

    let (mut curvature, mut bracket, mut coupling, mut rhs) = (0.0, 0.0, 0.0, 0.0);
    let (mut masked, mut support) = (0usize, 0usize);
    let mut jac = vec![0.0; m * m];
    for (i, (jet_i, z)) in jets.iter().zip(zeta).enumerate() {
        let zv = z.values();
        let xz = field_derivative(&grid, &cx, zv);
        let yz = field_derivative(&grid, &cy, zv);
        for node in 0..grid.len() {
            let z2 = zv[node] * zv[node];
            let g2 = jet_i.xu[node].powi(2) + jet_i.yu[node].powi(2);
            // Nodes with a degenerate gradient drop out of both sides.
            let rep = geometric_report(&jet_i.jet(node), opts.grad_floor);
            if zv[node] != 0.0 {
                support += 1;
                masked += rep.masked as usize;
            }
            if rep.masked {
                continue;
            }
            rhs += w[node] * g2 * (xz[node].powi(2) + yz[node].powi(2));
            if zv[node] == 0.0 {
                continue;
            }
            curvature += w[node] * g2 * (rep.a * rep.a + rep.b * rep.b) * z2;
            let bq = jet_i.zyu[node] * jet_i.xu[node] - jet_i.zxu[node] * jet_i.yu[node];
            bracket -= w[node] * 2.0 * bq * z2;
            if m > 1 {
                system.jacobian(&uv[node * m..(node + 1) * m], &mut jac);
                for (j, jet_j) in jets.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let inner = jet_i.xu[node] * jet_j.xu[node] + jet_i.yu[node] * jet_j.yu[node];
                    let norms = jet_i.grad_norm(node) * jet_j.grad_norm(node);
                    coupling += w[node] * jac[i * m + j] * (inner * z2 - norms * zv[node] * zeta[j].values()[node]);
                }
            }
        }
    }
    let lhs_terms = BTreeMap::from([
        (TERM_CURVATURE.to_string(), curvature),
        (TERM_BRACKET.to_string(), bracket),
        (TERM_COUPLING.to_string(), coupling),
    ]);
    let total: f64 = lhs_terms.values().sum();
    Ok(InequalityReport {
        lhs_terms,
        rhs,
        gap: rhs - total,
        masked_fraction: if support == 0 { 0.0 } else { masked as f64 / support as f64 },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointwiseReport {
    pub residual_max: f64,
    /// `residual_max` over the size of the two sides of the linearized equation.
    pub relative_residual: f64,
    /// Per component: fraction of nodes sharing the majority sign.
    pub sign_constancy: Vec<f64>,
    /// For `m ≥ 2`: fraction of nodes with `∂_jH_i(u) φ_i φ_j < 0` for all `i ≠ j`.
    pub cross_sign_fraction: Option<f64>,
    /// Relative residual within `h²` (largest spacing), full sign constancy,
    /// and for systems the cross-sign condition at every node.
    pub pass: bool,
}

/// Checks a candidate `φ` against the linearized system
/// `Δφ_i = Σ_j ∂_jH_i(u) φ_j` and its sign conditions.
pub fn pointwise_certificate(op: &SparseOperator, system: &NonlinearSystem, u: &[GridFunction], phi: &[GridFunction]) -> Result<PointwiseReport> {
    let m = system.m;
    let grid = op.grid;
    check_fields(&grid, m, u)?;
    check_fields(&grid, m, phi)?;
    if phi.iter().all(|f| f.values().iter().all(|v| *v == 0.0)) {
        return Err(Error::InvalidArgument("phi must be nonzero".into()));
    }
    let uv = interleave(u);
    let pv = interleave(phi);
    let lphi: Vec<Vec<f64>> = phi.iter().map(|f| op.apply(f.values())).collect();
    let mut jac = vec![0.0; m * m];
    let (mut rmax, mut lmax, mut jmax) = (0.0f64, 0.0f64, 0.0f64);
    let mut cross_ok = 0usize;
    for node in 0..grid.len() {
        system.jacobian(&uv[node * m..(node + 1) * m], &mut jac);
        let p = &pv[node * m..(node + 1) * m];
        if op.interior[node] {
            for c in 0..m {
                let jp: f64 = (0..m).map(|d| jac[c * m + d] * p[d]).sum();
                rmax = rmax.max((lphi[c][node] - jp).abs());
                lmax = lmax.max(lphi[c][node].abs());
                jmax = jmax.max(jp.abs());
            }
        }
        if m > 1 {
            let ok = (0..m).all(|a| (0..m).all(|b| a == b || jac[a * m + b] * p[a] * p[b] < 0.0));
            cross_ok += ok as usize;
        }
    }
    let sign_constancy: Vec<f64> = phi
        .iter()
        .map(|f| {
            let pos = f.values().iter().filter(|v| **v > 0.0).count();
            let neg = f.values().iter().filter(|v| **v < 0.0).count();
            pos.max(neg) as f64 / grid.len() as f64
        })
        .collect();
    let relative_residual = rmax / lmax.max(jmax).max(f64::MIN_POSITIVE);
    let relative_residual = if rmax == 0.0 { 0.0 } else { relative_residual };
    let cross_sign_fraction = (m > 1).then(|| cross_ok as f64 / grid.len() as f64);
    let h = grid.spacing().iter().fold(0.0f64, |a, b| a.max(*b));
    let pass = relative_residual <= h * h
        && sign_constancy.iter().all(|s| *s == 1.0)
        && cross_sign_fraction.is_none_or(|f| f == 1.0);
    Ok(PointwiseReport {
        residual_max: rmax,
        relative_residual,
        sign_constancy,
        cross_sign_fraction,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble_sublaplacian, cutoff_chi, NormKind};
    use crate::solver::{solve_with_operator, SolveOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn profile(x: f64) -> f64 {
        (x / 2f64.sqrt()).tanh()
    }

    /// Discrete x-only Allen–Cahn solution on a 2D Grushin grid.
    fn x_only_solution(grid: Grid) -> (SparseOperator, Vec<GridFunction>) {
        let frame = Frame::grushin2d();
        let op = assemble_sublaplacian(&grid, &frame).unwrap();
        let g1 = Grid::new(&[grid.lo()[0]], &[grid.hi()[0]], &[grid.nodes()[0]]).unwrap();
        let op1 = assemble_sublaplacian(&g1, &Frame::euclidean1d()).unwrap();
        let b1 = GridFunction::from_fn(g1, |p| profile(p[0]));
        let sys = NonlinearSystem::allen_cahn();
        let prof = solve_with_operator(&op1, &sys, std::slice::from_ref(&b1), Some(std::slice::from_ref(&b1)), &SolveOptions::default()).unwrap();
        let nx = grid.nodes()[0];
        let p = prof.u[0].values();
        let u = GridFunction::new(grid, (0..grid.len()).map(|i| p[i % nx]).collect()).unwrap();
        (op, vec![u])
    }

    #[test]
    fn linearization_examples() {
        let grid = Grid::centered(2, 1.0, 7).unwrap();
        let op = assemble_sublaplacian(&grid, &Frame::grushin2d()).unwrap();
        let u = vec![GridFunction::constant(grid, 1.0)];
        let zero = assemble_linearized(&op, &NonlinearSystem::zero(1), &u).unwrap();
        let ac = assemble_linearized(&op, &NonlinearSystem::allen_cahn(), &u).unwrap();
        for (k, &node) in ac.interior_nodes.iter().enumerate() {
            for (j, v) in zero.matrix.row(k) {
                let expected = v - if j == k { 2.0 } else { 0.0 };
                assert!((ac.matrix.get(k, j) - expected).abs() < 1e-12);
                assert_eq!(v, op.matrix.get(node, ac.interior_nodes[j]));
            }
        }
        // Uncoupled pair: no cross-component entries.
        let two = vec![u[0].clone(), GridFunction::constant(grid, -1.0)];
        let lin = assemble_linearized(&op, &NonlinearSystem::gradient_coupled(0.0), &two).unwrap();
        for k in 0..lin.matrix.nrows() {
            assert!(lin.matrix.row(k).all(|(j, _)| j % 2 == k % 2));
        }
        assert!(lin.matrix.asymmetry() < 1e-12);
    }

    #[test]
    fn dirichlet_laplacian_on_interval() {
        let n = 256;
        let grid = Grid::new(&[0.0], &[std::f64::consts::PI], &[n]).unwrap();
        let op = assemble_sublaplacian(&grid, &Frame::euclidean1d()).unwrap();
        let u = vec![GridFunction::constant(grid, 0.0)];
        let lin = assemble_linearized(&op, &NonlinearSystem::zero(1), &u).unwrap();
        let cert = smallest_eigenvalue(&lin, &EigenOptions::default()).unwrap();
        let h = grid.spacing()[0];
        assert!((cert.lambda - 1.0).abs() < h * h, "{}", cert.lambda);
        assert!(cert.stable);
        assert!(cert.phi[0].values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn diagonal_matrix_eigenvalue() {
        let a = CsrMatrix::from_dense(&[vec![3.0, 0.0, 0.0], vec![0.0, 5.0, 0.0], vec![0.0, 0.0, 7.0]]);
        let r = smallest_eigenpair(&a, &EigenOptions::default()).unwrap();
        assert_eq!(r.lambda, 3.0);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn eigenvalue_matches_dense_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                if i == j || rng.gen_bool(0.2) {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    dense[i][j] = v;
                    dense[j][i] = v;
                }
            }
        }
        let expected = nalgebra::DMatrix::from_fn(n, n, |i, j| dense[i][j]).symmetric_eigenvalues().min();
        let got = smallest_eigenpair(&CsrMatrix::from_dense(&dense), &EigenOptions::default()).unwrap();
        assert!((got.lambda - expected).abs() < 1e-8 * expected.abs().max(1.0));
    }

    #[test]
    fn x_only_grushin_profile_is_stable() {
        let grid = Grid::new(&[-6.0, -3.0], &[6.0, 3.0], &[49, 25]).unwrap();
        let (op, u) = x_only_solution(grid);
        let sys = NonlinearSystem::allen_cahn();
        let lin = assemble_linearized(&op, &sys, &u).unwrap();
        let cert = smallest_eigenvalue(&lin, &EigenOptions::default()).unwrap();
        assert!(cert.lambda >= -1e-6, "{}", cert.lambda);
        let frame = Frame::grushin2d();
        let phi = JetFields::compute(&u[0], &frame).unwrap().xu;
        let phi = vec![GridFunction::new(grid, phi).unwrap()];
        let rep = pointwise_certificate(&op, &sys, &u, &phi).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.sign_constancy, vec![1.0]);
    }

    #[test]
    fn pointwise_certificate_smoke_cases() {
        let grid = Grid::centered(2, 1.0, 9).unwrap();
        let op = assemble_sublaplacian(&grid, &Frame::grushin2d()).unwrap();
        let sys = NonlinearSystem::zero(1);
        let u = vec![GridFunction::constant(grid, 0.0)];
        let one = vec![GridFunction::constant(grid, 1.0)];
        let rep = pointwise_certificate(&op, &sys, &u, &one).unwrap();
        assert_eq!(rep.residual_max, 0.0);
        assert_eq!(rep.sign_constancy, vec![1.0]);
        assert!(rep.pass);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = vec![GridFunction::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()];
        let rep = pointwise_certificate(&op, &sys, &u, &noise).unwrap();
        assert!(rep.residual_max > 1.0);
        assert!(!rep.pass);
    }

    #[test]
    fn stability_gap_examples() {
        let grid = Grid::centered(2, 2.0, 17).unwrap();
        let op = assemble_sublaplacian(&grid, &Frame::grushin2d()).unwrap();
        let sys = NonlinearSystem::allen_cahn();
        let u = vec![GridFunction::constant(grid, 1.0)];
        let zero = vec![GridFunction::constant(grid, 0.0)];
        assert_eq!(stability_inequality_gap(&op, &sys, &u, &zero).unwrap(), 0.0);
        let bump = vec![GridFunction::from_fn(grid, |p| (1.0 - p[0] * p[0]).max(0.0) * (1.0 - p[1] * p[1]).max(0.0))];
        assert!(stability_inequality_gap(&op, &sys, &u, &bump).unwrap() >= 0.0);
        let wide = vec![GridFunction::constant(grid, 1.0)];
        assert!(matches!(
            stability_inequality_gap(&op, &sys, &u, &wide),
            Err(Error::NotCompactlySupported { .. })
        ));
    }

    #[test]
    fn nonnegative_spectrum_implies_nonnegative_gaps() {
        let grid = Grid::new(&[-5.0, -2.0], &[5.0, 2.0], &[41, 17]).unwrap();
        let (op, u) = x_only_solution(grid);
        let sys = NonlinearSystem::allen_cahn();
        let cert = smallest_eigenvalue(&assemble_linearized(&op, &sys, &u).unwrap(), &EigenOptions::default()).unwrap();
        assert!(cert.lambda >= 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let mut z = GridFunction::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            for i in 0..grid.len() {
                if grid.boundary_distance(i) < 2 {
                    z.values_mut()[i] = 0.0;
                }
            }
            let n2: f64 = z.values().iter().map(|v| v * v).sum::<f64>() * grid.cell_volume();
            let gap = stability_inequality_gap(&op, &sys, &u, &[z]).unwrap();
            assert!(gap >= -1e-6 * n2, "{gap}");
        }
    }

    #[test]
    fn poincare_terms_vanish_for_x_only_profile() {
        let grid = Grid::new(&[-8.0, -20.0], &[8.0, 20.0], &[65, 81]).unwrap();
        let (op, u) = x_only_solution(grid);
        let frame = Frame::grushin2d();
        let sys = NonlinearSystem::allen_cahn();
        let zeta = vec![cutoff_chi(&grid, 4.0, NormKind::Grushin).unwrap()];
        let rep = poincare_gap(&op, &frame, &sys, &u, &zeta, &PoincareOptions::default()).unwrap();
        for (name, v) in &rep.lhs_terms {
            assert!(v.abs() <= 1e-8, "{name} = {v}");
        }
        assert!(rep.gap >= 0.0 && rep.rhs > 0.0);
        let zero = vec![GridFunction::constant(grid, 0.0)];
        let rep = poincare_gap(&op, &frame, &sys, &u, &zero, &PoincareOptions::default()).unwrap();
        assert_eq!(rep.gap, 0.0);
        assert_eq!(rep.lhs_total(), 0.0);
        // Not a solution: refused.
        let bad = vec![u[0].map(|v| v * 0.9)];
        assert!(matches!(
            poincare_gap(&op, &frame, &sys, &bad, &zeta, &PoincareOptions::default()),
            Err(Error::NotASolution { .. })
        ));
    }
}
