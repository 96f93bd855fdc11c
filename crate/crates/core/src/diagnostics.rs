//! Quantitative diagnostics on computed solutions: the Hamiltonian slice
//! identity, energy and weighted-gradient growth in anisotropic balls,
//! flatness of level sets, monotonicity along `Z` and the slope condition.

use std::collections::{BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{Frame, FrameKind};
use crate::grid::{anisotropic_ball_mask, ball_fits, field_derivative, sample_field, Grid, GridFunction, JetFields, NormKind};
use crate::polynomial::Polynomial;
use crate::solver::{interleave, NonlinearSystem};

fn check_components(m: usize, u: &[GridFunction]) -> Result<Grid> {
    if u.len() != m || m == 0 {
        return Err(Error::DimensionMismatch { expected: m, got: u.len() });
    }
    let grid = *u[0].grid();
    if u.iter().any(|f| *f.grid() != grid) {
        return Err(Error::InvalidArgument("components live on different grids".into()));
    }
    Ok(grid)
}

/// Whether `frame` has the split form `X = ∂_x`, `Y = f(x) ∂_y`.
pub fn is_split_form(frame: &Frame) -> bool {
    if frame.dim() != 2 {
        return false;
    }
    let (x, y) = (frame.x.coeffs(), frame.y.coeffs());
    x[0] == Polynomial::from_int(2, 1) && x[1].is_zero() && y[0].is_zero() && y[1].derivative(1).is_zero() && !y[1].is_zero()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HamiltonianReport {
    /// Grid rows actually used (nearest to the requested slices).
    pub slices: Vec<f64>,
    pub values: Vec<f64>,
    pub drift: f64,
}

/// `∫ (Σ_i ½[|Xu_i|² - |Yu_i|²] + P(u)) dx` along rows `y = const`, for
/// split-form frames where `|Yu|² = f(x)²|∂_y u|²`. Conserved in `y` up to
/// the boundary flux `[Σ ∂_x u_i ∂_y u_i]` at the ends of the rows.
pub fn hamiltonian_slices(u: &[GridFunction], system: &NonlinearSystem, frame: &Frame, slices: &[f64]) -> Result<HamiltonianReport> {
    let grid = check_components(system.m, u)?;
    if !system.has_potential() {
        return Err(Error::MissingPotential);
    }
    if !is_split_form(frame) {
        return Err(Error::UnsupportedFrame(frame.kind.name().into()));
    }
    if grid.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: grid.dim() });
    }
    let jets: Vec<JetFields> = u.iter().map(|f| JetFields::compute(f, frame)).collect::<Result<_>>()?;
    let uv = interleave(u);
    let m = system.m;
    let [nx, ny] = [grid.nodes()[0], grid.nodes()[1]];
    let (ylo, hy, hx) = (grid.lo()[1], grid.spacing()[1], grid.spacing()[0]);
    let mut rows = Vec::with_capacity(slices.len());
    for &s in slices {
        if !(s >= grid.lo()[1] - 0.5 * hy && s <= grid.hi()[1] + 0.5 * hy) {
            return Err(Error::InvalidArgument(format!("slice y = {s} outside the grid")));
        }
        rows.push((((s - ylo) / hy).round() as usize).min(ny - 1));
    }
    let values: Vec<f64> = rows
        .par_iter()
        .map(|&j| {
            let mut acc = 0.0;
            for i in 0..nx {
                let node = j * nx + i;
                let kinetic: f64 = jets.iter().map(|jet| 0.5 * (jet.xu[node].powi(2) - jet.yu[node].powi(2))).sum();
                let w = if i == 0 || i == nx - 1 { 0.5 * hx } else { hx };
                acc += w * (kinetic + system.potential(&uv[node * m..(node + 1) * m]).unwrap());
            }
            acc
        })
        .collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(HamiltonianReport {
        slices: rows.iter().map(|&j| grid.axis_coord(1, j)).collect(),
        drift: if values.is_empty() { 0.0 } else { max - min },
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    /// Radii whose balls fit inside the grid, strictly increasing.
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Least-squares slope of `ln value` against `ln R` over the upper half
    /// of the radii; absent when a fitted value is not positive.
    pub slope: Option<f64>,
    /// RMS residual of that fit.
    pub fit_residual: Option<f64>,
    pub fit_points: usize,
    /// Requested radii whose balls leave the box.
    pub dropped_radii: Vec<f64>,
    pub truncated: bool,
    pub bound: f64,
    /// Slope within the bound; all-zero profiles pass.
    pub pass: bool,
}

pub const GROWTH_SLOPE_BOUND: f64 = 4.2;
pub const ENERGY_SLOPE_BOUND: f64 = 2.2;

/// Slope and RMS residual of the least-squares line through `(ln r, ln v)`.
pub fn loglog_fit(radii: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    if radii.len() < 2 || values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum::<f64>() / n).sqrt();
    Some((slope, rms))
}

fn scaling_report(
    grid: &Grid,
    kind: NormKind,
    radii: &[f64],
    bound: f64,
    density: &[f64],
) -> Result<ScalingReport> {
    if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be positive and strictly increasing".into()));
    }
    let (kept, dropped): (Vec<f64>, Vec<f64>) = radii.iter().partition(|&&r| ball_fits(grid, r, kind));
    let w = grid.quadrature_weights();
    let values: Vec<f64> = kept
        .par_iter()
        .map(|&r| {
            let mask = anisotropic_ball_mask(grid, r, kind);
            (0..grid.len()).filter(|&i| mask[i]).map(|i| w[i] * density[i]).sum()
        })
        .collect();
    let from = kept.len() / 2;
    let fit = loglog_fit(&kept[from..], &values[from..]);
    let all_zero = values.iter().all(|v| *v == 0.0);
    Ok(ScalingReport {
        fit_points: kept.len() - from,
        slope: fit.map(|f| f.0),
        fit_residual: fit.map(|f| f.1),
        pass: all_zero || fit.is_some_and(|f| f.0 <= bound),
        truncated: !dropped.is_empty(),
        dropped_radii: dropped,
        radii: kept,
        values,
        bound,
    })
}

/// `I_R = ∫_{B_R} [Σ ½|∇u_i|² + P(u) - P(a)]` over anisotropic balls.
pub fn energy_profile(u: &[GridFunction], system: &NonlinearSystem, frame: &Frame, radii: &[f64], shift: &[f64]) -> Result<ScalingReport> {
    let grid = check_components(system.m, u)?;
    if shift.len() != system.m || shift.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidArgument("shift must be a finite vector with one entry per component".into()));
    }
    let base = system.potential(shift)?;
    let density = energy_density(u, system, frame)?;
    let density: Vec<f64> = density.iter().map(|d| d - base).collect();
    scaling_report(&grid, NormKind::for_frame(frame), radii, ENERGY_SLOPE_BOUND, &density)
}

/// Weight in front of the gradient in the growth hypothesis: `x²` on
/// Grushin, `x² + y²` on Heisenberg, 1 otherwise.
pub fn growth_weight(kind: FrameKind, p: &[f64]) -> f64 {
    match kind {
        FrameKind::Grushin2D => p[0] * p[0],
        FrameKind::Heisenberg3D => p[0] * p[0] + p[1] * p[1],
        _ => 1.0,
    }
}

/// `∫_{B_R} w Σ|∇u_i|²` with the weight from [`growth_weight`].
pub fn growth_integral(u: &[GridFunction], frame: &Frame, radii: &[f64]) -> Result<ScalingReport> {
    let grid = check_components(u.len(), u)?;
    let jets: Vec<JetFields> = u.iter().map(|f| JetFields::compute(f, frame)).collect::<Result<_>>()?;
    let density: Vec<f64> = (0..grid.len())
        .map(|i| {
            let g2: f64 = jets.iter().map(|j| j.xu[i].powi(2) + j.yu[i].powi(2)).sum();
            growth_weight(frame.kind, &grid.point(i)) * g2
        })
        .collect();
    scaling_report(&grid, NormKind::for_frame(frame), radii, GROWTH_SLOPE_BOUND, &density)
}

/// Nodewise `½Σ|∇u_i|² + P(u)`.
pub fn energy_density(u: &[GridFunction], system: &NonlinearSystem, frame: &Frame) -> Result<Vec<f64>> {
    let grid = check_components(system.m, u)?;
    if !system.has_potential() {
        return Err(Error::MissingPotential);
    }
    let jets: Vec<JetFields> = u.iter().map(|f| JetFields::compute(f, frame)).collect::<Result<_>>()?;
    let uv = interleave(u);
    let m = system.m;
    Ok((0..grid.len())
        .map(|i| {
            let g2: f64 = jets.iter().map(|j| j.xu[i].powi(2) + j.yu[i].powi(2)).sum();
            0.5 * g2 + system.potential(&uv[i * m..(i + 1) * m]).unwrap()
        })
        .collect())
}

/// `E(u) = ∫ [½Σ|∇u_i|² + P(u)]`, restricted to `mask` when given.
pub fn energy(u: &[GridFunction], system: &NonlinearSystem, frame: &Frame, mask: Option<&[bool]>) -> Result<f64> {
    let density = energy_density(u, system, frame)?;
    let w = u[0].grid().quadrature_weights();
    Ok((0..density.len()).filter(|&i| mask.is_none_or(|m| m[i])).map(|i| w[i] * density[i]).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyComparison {
    pub energy_u: f64,
    pub energy_competitor: f64,
    /// `energy_competitor - energy_u`; nonnegative when `u` wins.
    pub difference: f64,
}

/// Energy of `u` against the spliced competitor `min(ψ, u)`.
pub fn energy_compare(u: &[GridFunction], psi: &[GridFunction], system: &NonlinearSystem, frame: &Frame) -> Result<EnergyComparison> {
    let grid = check_components(system.m, u)?;
    if check_components(system.m, psi)? != grid {
        return Err(Error::InvalidArgument("competitor lives on a different grid".into()));
    }
    let competitor: Vec<GridFunction> = u
        .iter()
        .zip(psi)
        .map(|(a, b)| GridFunction::new(grid, a.values().iter().zip(b.values()).map(|(x, y)| x.min(*y)).collect()))
        .collect::<Result<_>>()?;
    let energy_u = energy(u, system, frame, None)?;
    let energy_competitor = energy(&competitor, system, frame, None)?;
    Ok(EnergyComparison {
        energy_u,
        energy_competitor,
        difference: energy_competitor - energy_u,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatnessModel {
    /// `x = const`
    Vertical,
    /// `y = a x² + b`
    Parabola,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentFit {
    pub points: usize,
    pub a: f64,
    pub b: f64,
    /// RMS of `y - a x² - b`.
    pub rms_parabola: f64,
    /// RMS spread of `x` about its mean.
    pub verticality: f64,
    pub x_mean: f64,
    pub model: FlatnessModel,
    /// Points on both sides of `x = 0`.
    pub straddles_axis: bool,
}

impl ComponentFit {
    pub fn rms(&self) -> f64 {
        match self.model {
            FlatnessModel::Vertical => self.verticality,
            FlatnessModel::Parabola => self.rms_parabola,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSetFit {
    pub level: f64,
    pub components: Vec<ComponentFit>,
}

pub const MIN_COMPONENT_POINTS: usize = 5;
/// The parabola must beat the vertical line by this factor to be chosen.
pub const MODEL_HYSTERESIS: f64 = 0.9;

/// Marching-squares level curves of a 2D grid function, split into
/// 8-connected cell components, each fitted by `x = c` and `y = a x² + b`.
pub fn level_set_flatness(u: &GridFunction, levels: &[f64]) -> Result<Vec<LevelSetFit>> {
    let grid = *u.grid();
    if grid.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: grid.dim() });
    }
    Ok(levels
        .par_iter()
        .map(|&level| LevelSetFit {
            level,
            components: level_components(u, level)
                .into_iter()
                .filter(|pts| pts.len() >= MIN_COMPONENT_POINTS)
                .map(|pts| fit_component(&pts))
                .collect(),
        })
        .collect())
}

/// Crossing points of each connected piece of `{u = level}`.
fn level_components(u: &GridFunction, level: f64) -> Vec<Vec<[f64; 2]>> {
    let grid = *u.grid();
    let v = u.values();
    let [nx, ny] = [grid.nodes()[0], grid.nodes()[1]];
    let above = |i: usize| v[i] > level;
    // Edge ids: 2*node for the edge to the right, 2*node + 1 for the edge up.
    let crossing = |edge: usize| -> Option<[f64; 2]> {
        let a = edge / 2;
        let b = if edge.is_multiple_of(2) { a + 1 } else { a + nx };
        if above(a) == above(b) {
            return None;
        }
        let t = (level - v[a]) / (v[b] - v[a]);
        let (pa, pb) = (grid.point(a), grid.point(b));
        Some([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])])
    };
    let (cx, cy) = (nx - 1, ny - 1);
    let cell_edges = |c: usize| {
        let (i, j) = (c % cx, c / cx);
        let n = j * nx + i;
        [2 * n, 2 * (n + nx), 2 * n + 1, 2 * (n + 1) + 1]
    };
    let active: Vec<bool> = (0..cx * cy).map(|c| cell_edges(c).iter().any(|&e| crossing(e).is_some())).collect();
    let mut seen = vec![false; cx * cy];
    let mut out = Vec::new();
    for start in 0..cx * cy {
        if !active[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut edges = BTreeSet::new();
        while let Some(c) = queue.pop_front() {
            edges.extend(cell_edges(c).into_iter().filter(|&e| crossing(e).is_some()));
            let (i, j) = ((c % cx) as isize, (c / cx) as isize);
            for dj in -1..=1 {
                for di in -1..=1 {
                    let (a, b) = (i + di, j + dj);
                    if a < 0 || b < 0 || a >= cx as isize || b >= cy as isize {
                        continue;
                    }
                    let d = b as usize * cx + a as usize;
                    if active[d] && !seen[d] {
                        seen[d] = true;
                        queue.push_back(d);
                    }
                }
            }
        }
        out.push(edges.into_iter().filter_map(crossing).collect());
    }
    out
}

fn fit_component(pts: &[[f64; 2]]) -> ComponentFit {
    let n = pts.len() as f64;
    let x_mean = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let verticality = (pts.iter().map(|p| (p[0] - x_mean).powi(2)).sum::<f64>() / n).sqrt();
    let s_mean = pts.iter().map(|p| p[0] * p[0]).sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let sss: f64 = pts.iter().map(|p| (p[0] * p[0] - s_mean).powi(2)).sum();
    let ssy: f64 = pts.iter().map(|p| (p[0] * p[0] - s_mean) * (p[1] - y_mean)).sum();
    let a = if sss > 1e-12 * n * (1.0 + s_mean * s_mean) { ssy / sss } else { 0.0 };
    let b = y_mean - a * s_mean;
    let rms_parabola = (pts.iter().map(|p| (p[1] - a * p[0] * p[0] - b).powi(2)).sum::<f64>() / n).sqrt();
    let model = if rms_parabola < MODEL_HYSTERESIS * verticality {
        FlatnessModel::Parabola
    } else {
        FlatnessModel::Vertical
    };
    ComponentFit {
        points: pts.len(),
        a,
        b,
        rms_parabola,
        verticality,
        x_mean,
        model,
        straddles_axis: pts.iter().any(|p| p[0] < 0.0) && pts.iter().any(|p| p[0] > 0.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentMonotonicity {
    /// Fraction of nodes where `Zu_i` has the majority sign (zeros count against).
    pub sign_constancy: f64,
    /// `+1`, `-1`, or 0 when `Zu_i` vanishes everywhere.
    pub majority_sign: i8,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub components: Vec<ComponentMonotonicity>,
    /// For systems: fraction of nodes with `∂_jH_i(u) Zu_i Zu_j < 0` for all `i ≠ j`.
    pub h_monotone_fraction: Option<f64>,
    /// For systems: fraction of nodes with `∂_jH_i(u) θ_i θ_j < 0`, `θ_i` the majority signs.
    pub orientable_fraction: Option<f64>,
}

/// `|Zu|` below this times `max|u|/h` counts as zero.
pub const MONOTONE_ZERO_REL: f64 = 1e-12;

/// Strict monotonicity of every component along the bracket direction `Z`,
/// differentiated along the sampled `Z` field itself.
pub fn monotonicity_profile(u: &[GridFunction], system: &NonlinearSystem, frame: &Frame) -> Result<MonotonicityReport> {
    let grid = check_components(system.m, u)?;
    let m = system.m;
    let cz = sample_field(&grid, &frame.z);
    let zu: Vec<Vec<f64>> = u.iter().map(|f| field_derivative(&grid, &cz, f.values())).collect();
    let hmin = grid.spacing().iter().copied().fold(f64::INFINITY, f64::min);
    let components: Vec<ComponentMonotonicity> = zu
        .iter()
        .zip(u)
        .map(|(z, f)| {
            // Differences of equal values can leave roundoff at one-sided stencils.
            let zero = MONOTONE_ZERO_REL * f.values().iter().fold(0.0f64, |a, v| a.max(v.abs())) / hmin;
            let pos = z.iter().filter(|v| **v > zero).count();
            let neg = z.iter().filter(|v| **v < -zero).count();
            let sign = match pos.cmp(&neg) {
                _ if pos + neg == 0 => 0,
                std::cmp::Ordering::Less => -1,
                _ => 1,
            };
            ComponentMonotonicity {
                sign_constancy: pos.max(neg) as f64 / grid.len() as f64,
                majority_sign: sign,
                degenerate: pos + neg == 0,
            }
        })
        .collect();
    let (mut h_monotone, mut orientable) = (None, None);
    if m > 1 {
        let uv = interleave(u);
        let theta: Vec<f64> = components.iter().map(|c| c.majority_sign as f64).collect();
        let (mut hm, mut or) = (0usize, 0usize);
        let mut jac = vec![0.0; m * m];
        for node in 0..grid.len() {
            system.jacobian(&uv[node * m..(node + 1) * m], &mut jac);
            let all = |s: &dyn Fn(usize) -> f64| (0..m).all(|i| (0..m).all(|j| i == j || jac[i * m + j] * s(i) * s(j) < 0.0));
            hm += all(&|i| zu[i][node]) as usize;
            or += all(&|i| theta[i]) as usize;
        }
        h_monotone = Some(hm as f64 / grid.len() as f64);
        orientable = Some(or as f64 / grid.len() as f64);
    }
    Ok(MonotonicityReport {
        components,
        h_monotone_fraction: h_monotone,
        orientable_fraction: orientable,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeReport {
    /// `2[ZYu·Xu - ZXu·Yu]` per node; NaN where the gradient is below the floor.
    pub quantity: Vec<f64>,
    /// Grushin only: `∂_y(-x ∂_xu/∂_yu)` where `|∂_yu|` exceeds the floor, NaN elsewhere.
    pub slope_derivative: Option<Vec<f64>>,
    pub unmasked: usize,
    pub max_quantity: f64,
    /// Fraction of unmasked nodes with quantity at most `tol`.
    pub fraction_nonpositive: f64,
    pub tol: f64,
}

pub const SLOPE_TOL: f64 = 1e-8;

pub fn slope_condition(u: &GridFunction, frame: &Frame, grad_floor: f64, tol: f64) -> Result<SlopeReport> {
    let grid = *u.grid();
    let jet = JetFields::compute(u, frame)?;
    let quantity: Vec<f64> = (0..grid.len())
        .map(|i| {
            if jet.grad_norm(i) > grad_floor {
                2.0 * (jet.zyu[i] * jet.xu[i] - jet.zxu[i] * jet.yu[i])
            } else {
                f64::NAN
            }
        })
        .collect();
    let slope_derivative = (frame.kind == FrameKind::Grushin2D).then(|| {
        let v = u.values();
        let ex = [[1.0, 0.0, 0.0]].repeat(grid.len());
        let ey = [[0.0, 1.0, 0.0]].repeat(grid.len());
        let ux = field_derivative(&grid, &ex, v);
        let uy = field_derivative(&grid, &ey, v);
        let s: Vec<f64> = (0..grid.len())
            .map(|i| {
                if uy[i].abs() > grad_floor {
                    -grid.point(i)[0] * ux[i] / uy[i]
                } else {
                    f64::NAN
                }
            })
            .collect();
        field_derivative(&grid, &ey, &s)
    });
    let live: Vec<f64> = quantity.iter().copied().filter(|q| !q.is_nan()).collect();
    Ok(SlopeReport {
        unmasked: live.len(),
        max_quantity: live.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        fraction_nonpositive: if live.is_empty() {
            1.0
        } else {
            live.iter().filter(|q| **q <= tol).count() as f64 / live.len() as f64
        },
        quantity,
        slope_derivative,
        tol,
    })
}
