//! Semilinear systems `Δ u_i = H_i(u)` with Dirichlet data: damped Newton
//! with a semi-implicit gradient-flow fallback.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Frame;
use crate::grid::{assemble_sublaplacian, Grid, GridFunction, SparseOperator};
use crate::linalg::{max_abs, norm2, CsrMatrix, SparseLu};
use crate::polynomial::Polynomial;

type VecFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Nonlinearity `H: R^m → R^m` with Jacobian and optional potential.
#[derive(Clone)]
pub struct NonlinearSystem {
    pub m: usize,
    pub names: Vec<String>,
    pub label: String,
    /// Declared symmetry of the Jacobian (gradient systems).
    pub symmetric: bool,
    h: VecFn,
    jac: VecFn,
    potential: Option<ScalarFn>,
}

impl std::fmt::Debug for NonlinearSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlinearSystem")
            .field("label", &self.label)
            .field("m", &self.m)
            .field("symmetric", &self.symmetric)
            .field("potential", &self.potential.is_some())
            .finish()
    }
}

fn default_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("u{i}")).collect()
}

impl NonlinearSystem {
    pub fn new(
        label: impl Into<String>,
        m: usize,
        symmetric: bool,
        h: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        jac: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        potential: Option<ScalarFn>,
    ) -> Self {
        NonlinearSystem {
            m,
            names: default_names(m),
            label: label.into(),
            symmetric,
            h: Arc::new(h),
            jac: Arc::new(jac),
            potential,
        }
    }

    /// `Δu = u³ - u`, potential `¼(u² - 1)²`.
    pub fn allen_cahn() -> Self {
        NonlinearSystem::new(
            "allen-cahn",
            1,
            true,
            |u, out| out[0] = u[0] * u[0] * u[0] - u[0],
            |u, out| out[0] = 3.0 * u[0] * u[0] - 1.0,
            Some(Arc::new(|u: &[f64]| 0.25 * (u[0] * u[0] - 1.0).powi(2))),
        )
    }

    /// Two double wells coupled by `(β/2) u² v²`.
    pub fn gradient_coupled(beta: f64) -> Self {
        NonlinearSystem::new(
            "gradient-coupled",
            2,
            true,
            move |u, out| {
                let (a, b) = (u[0], u[1]);
                out[0] = a * a * a - a + beta * a * b * b;
                out[1] = b * b * b - b + beta * a * a * b;
            },
            move |u, out| {
                let (a, b) = (u[0], u[1]);
                out[0] = 3.0 * a * a - 1.0 + beta * b * b;
                out[1] = 2.0 * beta * a * b;
                out[2] = out[1];
                out[3] = 3.0 * b * b - 1.0 + beta * a * a;
            },
            Some(Arc::new(move |u: &[f64]| {
                let (a, b) = (u[0], u[1]);
                0.25 * (a * a - 1.0).powi(2) + 0.25 * (b * b - 1.0).powi(2) + 0.5 * beta * a * a * b * b
            })),
        )
    }

    pub fn zero(m: usize) -> Self {
        NonlinearSystem::new(
            "zero",
            m,
            true,
            |_, out| out.fill(0.0),
            |_, out| out.fill(0.0),
            Some(Arc::new(|_: &[f64]| 0.0)),
        )
    }

    /// `H(u) = M u`; a potential exists exactly when `M` is symmetric.
    pub fn linear(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let m = matrix.len();
        if matrix.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("linear system matrix must be square".into()));
        }
        let symmetric = (0..m).all(|i| (0..m).all(|j| matrix[i][j] == matrix[j][i]));
        let mat = Arc::new(matrix);
        let (a, b, c) = (mat.clone(), mat.clone(), mat.clone());
        let potential: Option<ScalarFn> = symmetric.then(|| {
            Arc::new(move |u: &[f64]| {
                0.5 * (0..u.len()).map(|i| (0..u.len()).map(|j| u[i] * c[i][j] * u[j]).sum::<f64>()).sum::<f64>()
            }) as ScalarFn
        });
        Ok(NonlinearSystem::new(
            "linear",
            m,
            symmetric,
            move |u, out| {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..u.len()).map(|j| a[i][j] * u[j]).sum();
                }
            },
            move |_, out| {
                for i in 0..m {
                    for j in 0..m {
                        out[i * m + j] = b[i][j];
                    }
                }
            },
            potential,
        ))
    }

    /// `H_i = ∂_i P` for a polynomial potential `P` in `m` variables.
    pub fn from_potential(label: impl Into<String>, p: &Polynomial) -> Self {
        let m = p.dim();
        let grad: Vec<Polynomial> = (0..m).map(|i| p.derivative(i)).collect();
        let mut sys = NonlinearSystem::from_polynomials(label, grad);
        let p = p.clone();
        sys.potential = Some(Arc::new(move |u: &[f64]| p.eval_f64(u)));
        sys.symmetric = true;
        sys
    }

    /// General polynomial nonlinearity; symmetric iff the Jacobian is.
    pub fn from_polynomials(label: impl Into<String>, h: Vec<Polynomial>) -> Self {
        let m = h.len();
        let jac: Vec<Polynomial> = (0..m * m).map(|k| h[k / m].derivative(k % m)).collect();
        let symmetric = (0..m).all(|i| (0..m).all(|j| jac[i * m + j] == jac[j * m + i]));
        let h = Arc::new(h);
        let jac = Arc::new(jac);
        NonlinearSystem::new(
            label,
            m,
            symmetric,
            move |u, out| {
                for (o, p) in out.iter_mut().zip(h.iter()) {
                    *o = p.eval_f64(u);
                }
            },
            move |u, out| {
                for (o, p) in out.iter_mut().zip(jac.iter()) {
                    *o = p.eval_f64(u);
                }
            },
            None,
        )
    }

    /// Preset by name: `allen-cahn`, `gradient-coupled` (uses `beta`), `zero`.
    pub fn preset(name: &str, beta: f64) -> Result<Self> {
        match name {
            "allen-cahn" => Ok(NonlinearSystem::allen_cahn()),
            "gradient-coupled" => Ok(NonlinearSystem::gradient_coupled(beta)),
            "zero" | "harmonic" => Ok(NonlinearSystem::zero(1)),
            other => Err(Error::Parse(format!("unknown system preset '{other}'"))),
        }
    }

    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        let label = spec.name.clone().unwrap_or_else(|| "custom".into());
        let mut sys = match (&spec.potential, &spec.h) {
            (Some(p), None) => NonlinearSystem::from_potential(label, p),
            (None, Some(h)) => {
                if let Some(bad) = h.iter().find(|p| p.dim() != h.len()) {
                    return Err(Error::DimensionMismatch {
                        expected: h.len(),
                        got: bad.dim(),
                    });
                }
                NonlinearSystem::from_polynomials(label, h.clone())
            }
            _ => {
                return Err(Error::Parse(
                    "system file needs exactly one of 'potential' or 'h'".into(),
                ))
            }
        };
        if let Some(names) = &spec.names {
            if names.len() != sys.m {
                return Err(Error::DimensionMismatch {
                    expected: sys.m,
                    got: names.len(),
                });
            }
            sys.names = names.clone();
        }
        Ok(sys)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        NonlinearSystem::from_spec(&serde_json::from_str(&text)?)
    }

    pub fn eval(&self, u: &[f64], out: &mut [f64]) {
        (self.h)(u, out)
    }

    /// Row-major `out[i*m + j] = ∂_j H_i(u)`.
    pub fn jacobian(&self, u: &[f64], out: &mut [f64]) {
        (self.jac)(u, out)
    }

    pub fn jacobian_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m * self.m];
        self.jacobian(u, &mut out);
        out
    }

    pub fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    pub fn potential(&self, u: &[f64]) -> Result<f64> {
        self.potential.as_ref().map(|p| p(u)).ok_or(Error::MissingPotential)
    }
}

/// JSON description of a polynomial nonlinearity in `m` variables.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub names: Option<Vec<String>>,
    #[serde(default)]
    pub potential: Option<Polynomial>,
    #[serde(default)]
    pub h: Option<Vec<Polynomial>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub max_discrepancy: f64,
    pub pass: bool,
}

pub const SYMMETRY_TOL: f64 = 1e-10;

/// Largest `|∂_j H_i - ∂_i H_j|` over the samples.
pub fn check_symmetry(system: &NonlinearSystem, samples: &[Vec<f64>]) -> Result<SymmetryReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let m = system.m;
    let mut worst: f64 = 0.0;
    for s in samples {
        if s.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: s.len() });
        }
        let j = system.jacobian_vec(s);
        for a in 0..m {
            for b in a + 1..m {
                worst = worst.max((j[a * m + b] - j[b * m + a]).abs());
            }
        }
    }
    Ok(SymmetryReport {
        max_discrepancy: worst,
        pass: worst <= SYMMETRY_TOL,
    })
}

/// Largest deviation between `H` and the central-difference gradient of
/// the potential, relative to `max(1, |H|)`.
pub fn check_potential(system: &NonlinearSystem, samples: &[Vec<f64>]) -> Result<f64> {
    let m = system.m;
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let mut h = vec![0.0; m];
    for s in samples {
        system.eval(s, &mut h);
        for i in 0..m {
            let mut p = s.clone();
            p[i] += step;
            let up = system.potential(&p)?;
            p[i] -= 2.0 * step;
            let dn = system.potential(&p)?;
            let g = (up - dn) / (2.0 * step);
            worst = worst.max((g - h[i]).abs() / h[i].abs().max(1.0));
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub min_step: f64,
    /// Gradient-flow pseudo time step.
    pub flow_step: f64,
    /// Flow steps per fallback episode.
    pub flow_steps: usize,
    pub stagnation_window: usize,
    pub stagnation_reduction: f64,
    pub divergence_factor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 50,
            armijo: 1e-4,
            min_step: 1.0 / 1024.0,
            flow_step: 0.5,
            flow_steps: 20,
            stagnation_window: 5,
            stagnation_reduction: 1e-3,
            divergence_factor: 10.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub u: Vec<GridFunction>,
    /// Max-node norm of `Δu_i - H_i(u)` over interior nodes.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    pub flow_steps: usize,
}

/// Node-major interleaving of `m` component fields.
pub fn interleave(fields: &[GridFunction]) -> Vec<f64> {
    let m = fields.len();
    let n = fields[0].values().len();
    let mut out = vec![0.0; n * m];
    for (c, f) in fields.iter().enumerate() {
        for (i, v) in f.values().iter().enumerate() {
            out[i * m + c] = *v;
        }
    }
    out
}

pub fn deinterleave(grid: Grid, v: &[f64], m: usize) -> Vec<GridFunction> {
    (0..m)
        .map(|c| GridFunction::new(grid, v.iter().skip(c).step_by(m).copied().collect()).unwrap())
        .collect()
}

/// `Δu_i - H_i(u)` on interior nodes, zero on the boundary (interleaved).
pub fn residual(op: &SparseOperator, system: &NonlinearSystem, u: &[f64]) -> Vec<f64> {
    let m = system.m;
    let n = op.grid.len();
    let mut out = vec![0.0; n * m];
    let mut h = vec![0.0; m];
    let comps: Vec<Vec<f64>> = (0..m)
        .map(|c| op.apply(&u.iter().skip(c).step_by(m).copied().collect::<Vec<_>>()))
        .collect();
    for i in 0..n {
        if !op.interior[i] {
            continue;
        }
        system.eval(&u[i * m..(i + 1) * m], &mut h);
        for c in 0..m {
            out[i * m + c] = comps[c][i] - h[c];
        }
    }
    out
}

/// Newton matrix `L ⊗ I - J(u)` on interior rows, identity on boundary rows.
pub fn newton_matrix(op: &SparseOperator, system: &NonlinearSystem, u: &[f64]) -> CsrMatrix {
    let m = system.m;
    let n = op.grid.len();
    let mut jac = vec![0.0; m * m];
    let mut rows = Vec::with_capacity(n * m);
    for i in 0..n {
        if !op.interior[i] {
            for c in 0..m {
                rows.push(vec![(i * m + c, 1.0)]);
            }
            continue;
        }
        system.jacobian(&u[i * m..(i + 1) * m], &mut jac);
        for c in 0..m {
            let mut r: Vec<(usize, f64)> = op.matrix.row(i).map(|(j, v)| (j * m + c, v)).collect();
            for d in 0..m {
                r.push((i * m + d, -jac[c * m + d]));
            }
            rows.push(r);
        }
    }
    CsrMatrix::from_rows(n * m, rows)
}

/// Per-axis linear interpolation of boundary values, averaged over axes.
pub fn interpolate_boundary(data: &GridFunction) -> GridFunction {
    let grid = *data.grid();
    let v = data.values();
    let values = (0..grid.len())
        .map(|i| {
            if grid.is_boundary(i) {
                return v[i];
            }
            let m = grid.multi_index(i);
            let mut acc = 0.0;
            for k in 0..grid.dim() {
                let n = grid.nodes()[k];
                let mut lo = m;
                lo[k] = 0;
                let mut hi = m;
                hi[k] = n - 1;
                let t = m[k] as f64 / (n - 1) as f64;
                acc += (1.0 - t) * v[grid.index(lo)] + t * v[grid.index(hi)];
            }
            acc / grid.dim() as f64
        })
        .collect();
    GridFunction::new(grid, values).unwrap()
}

pub fn solve_semilinear(
    grid: &Grid,
    frame: &Frame,
    system: &NonlinearSystem,
    boundary: &[GridFunction],
    init: Option<&[GridFunction]>,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let op = assemble_sublaplacian(grid, frame)?;
    solve_with_operator(&op, system, boundary, init, opts)
}

pub fn solve_with_operator(
    op: &SparseOperator,
    system: &NonlinearSystem,
    boundary: &[GridFunction],
    init: Option<&[GridFunction]>,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let m = system.m;
    let grid = op.grid;
    if boundary.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: boundary.len() });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    for f in boundary.iter().chain(init.unwrap_or(&[]).iter()) {
        if f.grid() != &grid {
            return Err(Error::InvalidArgument("field defined on a different grid".into()));
        }
    }
    let start: Vec<GridFunction> = match init {
        Some(fields) => {
            if fields.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: fields.len() });
            }
            fields
                .iter()
                .zip(boundary)
                .map(|(f, b)| {
                    let mut f = f.clone();
                    for i in (0..grid.len()).filter(|&i| !op.interior[i]) {
                        f.values_mut()[i] = b.values()[i];
                    }
                    f
                })
                .collect()
        }
        None => boundary.iter().map(interpolate_boundary).collect(),
    };
    let mut u = interleave(&start);
    let mut f = residual(op, system, &u);
    let mut r = max_abs(&f);
    let mut history = vec![r];
    let mut best = r;
    let mut iterations = 0;
    let mut flow_total = 0;
    let mut flow = None;

    while r > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let k = history.len();
        let stagnating = k > opts.stagnation_window
            && history[k - 1] > (1.0 - opts.stagnation_reduction) * history[k - 1 - opts.stagnation_window];
        if stagnating && flow_total < opts.flow_steps * opts.max_iter {
            let flow_lu = match &flow {
                Some(lu) => lu,
                None => flow.insert(flow_factor(op, opts.flow_step)?),
            };
            for _ in 0..opts.flow_steps {
                u = flow_update(op, system, flow_lu, &u, opts.flow_step)?;
                flow_total += 1;
            }
            f = residual(op, system, &u);
        } else {
            let jm = newton_matrix(op, system, &u);
            let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
            let delta = SparseLu::new(&jm)?.solve(&rhs)?;
            let f0 = norm2(&f);
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
                let ft = residual(op, system, &trial);
                if norm2(&ft) <= (1.0 - opts.armijo * t) * f0 || t <= opts.min_step {
                    u = trial;
                    f = ft;
                    break;
                }
                t *= 0.5;
            }
        }
        r = max_abs(&f);
        history.push(r);
        if !r.is_finite() || r > opts.divergence_factor * best {
            return Err(Error::Divergence {
                iterations,
                residual: r,
                best,
                history,
            });
        }
        best = best.min(r);
    }
    Ok(SolveResult {
        u: deinterleave(grid, &u, m),
        residual_norm: r,
        iterations,
        converged: r <= opts.tol,
        history,
        flow_steps: flow_total,
    })
}

fn flow_factor(op: &SparseOperator, tau: f64) -> Result<SparseLu> {
    let n = op.grid.len();
    let rows = (0..n)
        .map(|i| {
            let mut r = vec![(i, 1.0)];
            if op.interior[i] {
                r.extend(op.matrix.row(i).map(|(j, v)| (j, -tau * v)));
            }
            r
        })
        .collect();
    SparseLu::new(&CsrMatrix::from_rows(n, rows))
}

/// `u ← (I - τL)⁻¹(u - τH(u))`, componentwise, boundary values held.
fn flow_update(op: &SparseOperator, system: &NonlinearSystem, lu: &SparseLu, u: &[f64], tau: f64) -> Result<Vec<f64>> {
    let m = system.m;
    let n = op.grid.len();
    let mut h = vec![0.0; m];
    let mut rhs = vec![vec![0.0; n]; m];
    for i in 0..n {
        if op.interior[i] {
            system.eval(&u[i * m..(i + 1) * m], &mut h);
        } else {
            h.fill(0.0);
        }
        for c in 0..m {
            rhs[c][i] = u[i * m + c] - tau * h[c];
        }
    }
    let mut out = vec![0.0; n * m];
    for (c, b) in rhs.iter().enumerate() {
        for (i, v) in lu.solve(b)?.into_iter().enumerate() {
            out[i * m + c] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(x: f64) -> f64 {
        (x / 2f64.sqrt()).tanh()
    }

    #[test]
    fn symmetry_examples() {
        let samples = vec![vec![0.3, -1.2], vec![2.0, 0.5]];
        let p = Polynomial::from_terms(2, &[(&[2, 2], 1, 1)]);
        let grad = NonlinearSystem::from_potential("uv", &p);
        assert!(check_symmetry(&grad, &samples).unwrap().pass);
        let h = vec![
            Polynomial::from_terms(2, &[(&[1, 0], 1, 1), (&[0, 1], -1, 1)]),
            Polynomial::from_terms(2, &[(&[1, 0], 1, 1), (&[0, 1], 1, 1)]),
        ];
        let rep = check_symmetry(&NonlinearSystem::from_polynomials("rot", h), &samples).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.max_discrepancy, 2.0);
        assert!(check_symmetry(&NonlinearSystem::allen_cahn(), &[vec![0.7]]).unwrap().pass);
        assert!(check_symmetry(&NonlinearSystem::allen_cahn(), &[]).is_err());
    }

    #[test]
    fn potentials_match_nonlinearities() {
        let samples: Vec<Vec<f64>> = (0..10).map(|k| vec![-1.5 + 0.3 * k as f64, 0.8 - 0.2 * k as f64]).collect();
        for sys in [NonlinearSystem::gradient_coupled(0.7), NonlinearSystem::linear(vec![vec![2.0, 1.0], vec![1.0, -1.0]]).unwrap()] {
            assert!(check_potential(&sys, &samples).unwrap() < 1e-6, "{}", sys.label);
            assert!(check_symmetry(&sys, &samples).unwrap().pass);
        }
        let ac = NonlinearSystem::allen_cahn();
        let s1: Vec<Vec<f64>> = samples.iter().map(|s| vec![s[0]]).collect();
        assert!(check_potential(&ac, &s1).unwrap() < 1e-6);
        assert_eq!(ac.potential(&[1.0]).unwrap(), 0.0);
        let lin = NonlinearSystem::linear(vec![vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        assert!(!lin.symmetric);
        assert!(matches!(lin.potential(&[0.0, 0.0]), Err(Error::MissingPotential)));
    }

    #[test]
    fn allen_cahn_1d_matches_tanh() {
        let l = 8.0;
        let mut errs = Vec::new();
        for n in [129, 257] {
            let grid = Grid::new(&[-l], &[l], &[n]).unwrap();
            let bc = GridFunction::from_fn(grid, |p| profile(p[0]));
            let init = GridFunction::from_fn(grid, |p| (p[0] / 2.0).tanh());
            let sys = NonlinearSystem::allen_cahn();
            let res = solve_semilinear(&grid, &Frame::euclidean1d(), &sys, &[bc], Some(&[init]), &SolveOptions::default()).unwrap();
            assert!(res.converged, "{:?}", res.history);
            let err = (0..grid.len())
                .map(|i| (res.u[0].values()[i] - profile(grid.point(i)[0])).abs())
                .fold(0.0, f64::max);
            let h = grid.spacing()[0];
            assert!(err <= 5.0 * h * h, "err {err}");
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 3.5);
    }

    #[test]
    fn harmonic_problem_in_one_step() {
        let grid = Grid::centered(2, 1.0, 17).unwrap();
        let bc = GridFunction::from_fn(grid, |p| p[0] * p[1] + p[0].exp() * p[1].cos());
        let res = solve_semilinear(&grid, &Frame::grushin2d(), &NonlinearSystem::zero(1), &[bc], None, &SolveOptions::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert!(res.residual_norm <= 1e-8);
    }

    /// Discrete 1D Allen–Cahn profile on the x-nodes of `grid`.
    fn discrete_profile(grid: &Grid) -> Vec<f64> {
        let g1 = Grid::new(&[grid.lo()[0]], &[grid.hi()[0]], &[grid.nodes()[0]]).unwrap();
        let bc = GridFunction::from_fn(g1, |p| profile(p[0]));
        let res = solve_semilinear(&g1, &Frame::euclidean1d(), &NonlinearSystem::allen_cahn(), std::slice::from_ref(&bc), Some(std::slice::from_ref(&bc)), &SolveOptions::default()).unwrap();
        res.u[0].values().to_vec()
    }

    #[test]
    fn grushin_x_only_data_gives_y_independent_solution() {
        let grid = Grid::new(&[-6.0, -3.0], &[6.0, 3.0], &[49, 25]).unwrap();
        let prof = discrete_profile(&grid);
        let nx = grid.nodes()[0];
        let bc = GridFunction::new(grid, (0..grid.len()).map(|i| prof[i % nx]).collect()).unwrap();
        // Start away from the answer so the solver has real work to do.
        let init = GridFunction::from_fn(grid, |p| (p[0] + 0.3 * p[1]).tanh());
        let res = solve_semilinear(&grid, &Frame::grushin2d(), &NonlinearSystem::allen_cahn(), &[bc], Some(&[init]), &SolveOptions::default()).unwrap();
        assert!(res.converged);
        let u = res.u[0].values();
        let ny = grid.nodes()[1];
        let spread = (0..nx)
            .map(|i| {
                let col: Vec<f64> = (0..ny).map(|j| u[grid.index([i, j, 0])]).collect();
                col.iter().cloned().fold(f64::MIN, f64::max) - col.iter().cloned().fold(f64::MAX, f64::min)
            })
            .fold(0.0, f64::max);
        assert!(spread <= 1e-6, "spread {spread}");
    }

    #[test]
    fn coupled_system_converges_and_is_quadratic() {
        let grid = Grid::centered(2, 4.0, 33).unwrap();
        let sys = NonlinearSystem::gradient_coupled(0.5);
        let bu = GridFunction::from_fn(grid, |p| profile(p[0]));
        let bv = GridFunction::from_fn(grid, |p| profile(p[1]));
        let res = solve_semilinear(&grid, &Frame::euclidean2d(), &sys, &[bu, bv], None, &SolveOptions::default()).unwrap();
        assert!(res.converged, "{:?}", res.history);
        let hist = &res.history;
        let k = hist.len();
        assert!(k >= 3);
        // Quadratic convergence: r_{k+1} / r_k² stays bounded near the end.
        let ratio = hist[k - 1] / hist[k - 2].powi(2);
        assert!(ratio < 1e3 || hist[k - 1] < 1e-12, "{hist:?}");
    }

    #[test]
    fn divergence_is_reported() {
        // At the inflection value u = 1/√3 the Newton matrix is nearly the
        // bare Laplacian of a long interval, so full steps overshoot wildly.
        let c = 1.0 / 3f64.sqrt();
        let grid = Grid::new(&[0.0], &[40.0], &[21]).unwrap();
        let bc = GridFunction::constant(grid, c);
        let opts = SolveOptions { min_step: 1.0, ..Default::default() };
        match solve_semilinear(&grid, &Frame::euclidean1d(), &NonlinearSystem::allen_cahn(), std::slice::from_ref(&bc), Some(std::slice::from_ref(&bc)), &opts) {
            Err(Error::Divergence { history, residual, best, .. }) => {
                assert!(residual > 10.0 * best);
                assert_eq!(history.last(), Some(&residual));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn gradient_flow_fallback_reduces_residual() {
        // A stagnation threshold of 100% forces the flow branch after one step.
        let grid = Grid::new(&[-4.0], &[4.0], &[33]).unwrap();
        let bc = GridFunction::from_fn(grid, |p| profile(p[0]));
        let init = GridFunction::from_fn(grid, |p| p[0] / 4.0);
        let opts = SolveOptions {
            stagnation_window: 1,
            stagnation_reduction: 1.0,
            max_iter: 3,
            ..Default::default()
        };
        let res = solve_semilinear(&grid, &Frame::euclidean1d(), &NonlinearSystem::allen_cahn(), &[bc], Some(&[init]), &opts).unwrap();
        assert!(res.flow_steps > 0);
        assert!(res.history.last().unwrap() < &res.history[0]);
    }

    #[test]
    fn system_spec_from_json() {
        let text = r#"{"name":"wells","potential":{"dim":1,"terms":{"4":"1/4","2":"-1/2"}}}"#;
        let sys = NonlinearSystem::from_spec(&serde_json::from_str(text).unwrap()).unwrap();
        let mut h = [0.0];
        sys.eval(&[2.0], &mut h);
        assert_eq!(h[0], 6.0);
        assert!(sys.symmetric);
        let bad = r#"{"name":"none"}"#;
        assert!(NonlinearSystem::from_spec(&serde_json::from_str(bad).unwrap()).is_err());
    }
}
