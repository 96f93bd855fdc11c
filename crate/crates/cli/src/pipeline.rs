//! Runs the requested verbs in pipeline order and collects one JSON section
//! per verb.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hypogeo::diagnostics::{
    energy_profile, growth_integral, hamiltonian_slices, is_split_form, level_set_flatness, monotonicity_profile, slope_condition,
    ScalingReport, SLOPE_TOL,
};
use hypogeo::grid::{assemble_sublaplacian, cutoff_chi, JetFields, NormKind, SparseOperator};
use hypogeo::io::{read_raw, write_csv, write_raw};
use hypogeo::solver::{solve_with_operator, SolveResult};
use hypogeo::stability::{assemble_linearized, pointwise_certificate, poincare_gap, smallest_eigenvalue, stability_inequality_gap};
use hypogeo::symcalc::verify_identities;
use hypogeo::{Error, Frame, Grid, GridFunction, NonlinearSystem};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{frame_by_name_or_file, BoundaryKind, RunConfig};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Verify,
    Solve,
    Stability,
    Poincare,
    Hamiltonian,
    Diagnose,
}

impl Verb {
    pub const ALL: [Verb; 6] = [Verb::Verify, Verb::Solve, Verb::Stability, Verb::Poincare, Verb::Hamiltonian, Verb::Diagnose];

    pub fn name(self) -> &'static str {
        match self {
            Verb::Verify => "verify",
            Verb::Solve => "solve",
            Verb::Stability => "stability",
            Verb::Poincare => "poincare",
            Verb::Hamiltonian => "hamiltonian",
            Verb::Diagnose => "diagnose",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Section {
    pub pass: bool,
    pub summary: String,
    pub data: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub verbs: Vec<Verb>,
    pub sections: BTreeMap<String, Section>,
    /// Output files relative to the output directory.
    pub files: Vec<String>,
    /// Set when the solver failed; later verbs are not run.
    pub error: Option<String>,
    pub pass: bool,
}

impl PipelineReport {
    pub fn exit_code(&self) -> i32 {
        if self.error.is_some() {
            3
        } else if self.pass {
            0
        } else {
            1
        }
    }
}

struct Context<'a> {
    config: &'a RunConfig,
    frame: Frame,
    system: NonlinearSystem,
    out: PathBuf,
    files: Vec<String>,
    /// Verbs not requested by name are skipped when they do not apply.
    lenient: bool,
    grid: Option<Grid>,
    op: Option<SparseOperator>,
    solution: Option<Vec<GridFunction>>,
}

/// Runs `verbs` (sorted into pipeline order). Config problems come back as
/// `Err`; solver failures end the run with `error` set.
pub fn run_pipeline(config: &RunConfig, verbs: &[Verb], lenient: bool) -> Result<PipelineReport, CliError> {
    config.validate()?;
    let mut verbs = verbs.to_vec();
    verbs.sort();
    verbs.dedup();
    fs::create_dir_all(&config.output).map_err(|e| CliError::Config(format!("cannot create {}: {e}", config.output.display())))?;
    let mut ctx = Context {
        config,
        frame: config.frame()?,
        system: config.system()?,
        out: config.output.clone(),
        files: Vec::new(),
        lenient,
        grid: None,
        op: None,
        solution: None,
    };
    let mut sections = BTreeMap::new();
    let mut error = None;
    for &verb in &verbs {
        let result = match verb {
            Verb::Verify => ctx.verify(),
            Verb::Solve => ctx.solve_section(),
            Verb::Stability => ctx.stability(),
            Verb::Poincare => ctx.poincare(),
            Verb::Hamiltonian => ctx.hamiltonian(),
            Verb::Diagnose => ctx.diagnose(),
        };
        match result {
            Ok(s) => {
                sections.insert(verb.name().to_string(), s);
            }
            Err(CliError::Solver(msg)) => {
                error = Some(format!("{}: {msg}", verb.name()));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let pass = error.is_none() && sections.values().all(|s| s.pass);
    Ok(PipelineReport {
        verbs,
        sections,
        files: ctx.files,
        error,
        pass,
    })
}

fn solver_err(e: Error) -> CliError {
    match e {
        Error::Divergence { .. } | Error::NotConverged { .. } | Error::LinearSolve(_) => CliError::Solver(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn component_names(system: &NonlinearSystem) -> Vec<String> {
    (0..system.m)
        .map(|i| system.names.get(i).cloned().unwrap_or_else(|| format!("u{}", i + 1)))
        .collect()
}

/// Boundary data of the configured kind on `grid`, and a starting guess
/// when one is known.
pub fn boundary_data(
    grid: &Grid,
    system: &NonlinearSystem,
    config: &RunConfig,
) -> Result<(Vec<GridFunction>, Option<Vec<GridFunction>>), CliError> {
    let m = system.m;
    let tanh = |p: &[f64]| (p[0] / 2f64.sqrt()).tanh();
    let b = &config.boundary;
    let same = |f: GridFunction| vec![f; m];
    Ok(match b.kind {
        BoundaryKind::Tanh => (same(GridFunction::from_fn(*grid, tanh)), None),
        BoundaryKind::Constant => (same(GridFunction::constant(*grid, b.value)), None),
        BoundaryKind::Decaying => {
            let a = b.amplitude;
            let g = GridFunction::from_fn(*grid, move |p| tanh(p) + a / (1.0 + p.iter().map(|v| v * v).sum::<f64>()));
            (same(g), None)
        }
        BoundaryKind::Profile => {
            let g1 = Grid::new(&[grid.lo()[0]], &[grid.hi()[0]], &[grid.nodes()[0]]).map_err(solver_err)?;
            let op1 = assemble_sublaplacian(&g1, &Frame::euclidean1d()).map_err(solver_err)?;
            let b1 = same(GridFunction::from_fn(g1, tanh));
            let prof = solve_with_operator(&op1, system, &b1, Some(&b1), &config.solver).map_err(solver_err)?;
            if !prof.converged {
                return Err(CliError::Solver(format!("1D profile did not converge (residual {:e})", prof.residual_norm)));
            }
            let nx = grid.nodes()[0];
            let ext: Vec<GridFunction> = prof
                .u
                .iter()
                .map(|p| GridFunction::new(*grid, (0..grid.len()).map(|i| p.values()[i % nx]).collect()).unwrap())
                .collect();
            (ext.clone(), Some(ext))
        }
    })
}

/// Solves on `grid` with the configured boundary data.
pub fn solve_on(grid: &Grid, frame: &Frame, system: &NonlinearSystem, config: &RunConfig) -> Result<(SparseOperator, SolveResult), CliError> {
    let op = assemble_sublaplacian(grid, frame).map_err(solver_err)?;
    let (bdata, init) = boundary_data(grid, system, config)?;
    let res = solve_with_operator(&op, system, &bdata, init.as_deref(), &config.solver).map_err(solver_err)?;
    if !res.converged {
        return Err(CliError::Solver(format!(
            "no convergence in {} iterations (residual {:e})",
            res.iterations, res.residual_norm
        )));
    }
    Ok((op, res))
}

/// Largest radii (up to `count`, powers of two times `base`) whose ball stays
/// `margin` nodes inside the grid.
fn radii_that_fit(grid: &Grid, kind: NormKind, margin: usize, min: f64, count: usize) -> Vec<f64> {
    let fits = |r: f64| {
        kind.ball_extent(r, grid.dim()).iter().enumerate().all(|(k, &e)| {
            let pad = margin as f64 * grid.spacing()[k];
            -e >= grid.lo()[k] + pad && e <= grid.hi()[k] - pad
        })
    };
    let mut r = min;
    let mut all = Vec::new();
    while fits(r) {
        all.push(r);
        r *= 2.0;
    }
    let start = all.len().saturating_sub(count);
    all[start..].to_vec()
}

fn scaling_json(rep: &ScalingReport) -> Value {
    serde_json::to_value(rep).unwrap()
}

impl Context<'_> {
    fn ensure_solution(&mut self) -> Result<(), CliError> {
        if self.solution.is_some() {
            return Ok(());
        }
        self.solve_section().map(|_| ())
    }

    fn solve_section(&mut self) -> Result<Section, CliError> {
        let names = component_names(&self.system);
        let (grid, u, data) = if let Some(path) = &self.config.input {
            let (_, fields) = read_raw(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if fields.len() != self.system.m {
                return Err(CliError::Config(format!("input has {} components, system needs {}", fields.len(), self.system.m)));
            }
            let grid = *fields[0].grid();
            let op = assemble_sublaplacian(&grid, &self.frame).map_err(|e| CliError::Config(e.to_string()))?;
            let r = hypogeo::linalg::max_abs(&hypogeo::solver::residual(&op, &self.system, &hypogeo::solver::interleave(&fields)));
            self.op = Some(op);
            let data = json!({ "source": "input", "residual_norm": r, "converged": r <= self.config.solver.tol });
            (grid, fields, data)
        } else {
            let grid = self.config.grid(&self.frame)?;
            let (op, res) = solve_on(&grid, &self.frame, &self.system, self.config)?;
            self.op = Some(op);
            let data = json!({
                "source": "solve",
                "boundary": self.config.boundary,
                "converged": res.converged,
                "residual_norm": res.residual_norm,
                "iterations": res.iterations,
                "flow_steps": res.flow_steps,
                "history": res.history,
            });
            (grid, res.u, data)
        };
        write_raw(&self.out.join("solution"), &names, &u).map_err(|e| CliError::Config(e.to_string()))?;
        write_csv(&self.out.join("solution.csv"), &names, &u).map_err(|e| CliError::Config(e.to_string()))?;
        self.files.extend(["solution.f64", "solution.json", "solution.csv"].map(String::from));
        let pass = data["converged"].as_bool().unwrap_or(false);
        let summary = format!("residual {:.3e} on {:?} nodes", data["residual_norm"].as_f64().unwrap_or(f64::NAN), grid.nodes());
        let mut data = data;
        data["grid"] = json!({ "lo": grid.lo(), "hi": grid.hi(), "nodes": grid.nodes() });
        data["frame"] = json!(self.frame.kind.name());
        data["system"] = json!(self.system.label);
        self.grid = Some(grid);
        self.solution = Some(u);
        Ok(Section { pass, summary, data })
    }

    fn verify(&mut self) -> Result<Section, CliError> {
        let v = &self.config.verify;
        let frames: Vec<Frame> = if v.frames.is_empty() {
            vec![self.frame.clone()]
        } else {
            v.frames.iter().map(|n| frame_by_name_or_file(n)).collect::<Result<_, _>>()?
        };
        let rep = verify_identities(&frames, v.degree, v.samples, self.config.seed).map_err(|e| CliError::Config(e.to_string()))?;
        let mut by_identity: BTreeMap<String, BTreeMap<String, [usize; 2]>> = BTreeMap::new();
        for c in &rep.checks {
            let e = by_identity.entry(c.identity.to_string()).or_default().entry(c.frame.to_string()).or_default();
            e[c.pass as usize] += 1;
        }
        let counts: BTreeMap<String, BTreeMap<String, Value>> = by_identity
            .into_iter()
            .map(|(id, per)| (id, per.into_iter().map(|(f, [fail, ok])| (f, json!({ "passed": ok, "failed": fail }))).collect()))
            .collect();
        let failures: Vec<_> = rep.checks.iter().filter(|c| !c.pass).take(20).collect();
        Ok(Section {
            pass: rep.all_pass(),
            summary: format!("{}/{} exact checks zero, algebraic lemma residual terms {}", rep.passed, rep.checks.len(), rep.algebraic_lemma_terms),
            data: json!({
                "degree": rep.degree,
                "samples": rep.samples,
                "seed": rep.seed,
                "frames": frames.iter().map(|f| f.kind.name()).collect::<Vec<_>>(),
                "passed": rep.passed,
                "failed": rep.failed,
                "algebraic_lemma_terms": rep.algebraic_lemma_terms,
                "counts": counts,
                "failures": failures,
            }),
        })
    }

    fn stability(&mut self) -> Result<Section, CliError> {
        self.ensure_solution()?;
        let (op, u) = (self.op.as_ref().unwrap(), self.solution.as_ref().unwrap());
        if !self.system.symmetric {
            return Ok(Section {
                pass: false,
                summary: "spectral certificate needs a symmetric system".into(),
                data: json!({ "symmetric": false }),
            });
        }
        let lin = assemble_linearized(op, &self.system, u).map_err(solver_err)?;
        let cert = smallest_eigenvalue(&lin, &self.config.stability).map_err(solver_err)?;
        let phi: Vec<GridFunction> = u
            .iter()
            .map(|f| {
                let jet = JetFields::compute(f, &self.frame)?;
                GridFunction::new(*f.grid(), jet.xu)
            })
            .collect::<hypogeo::Result<_>>()
            .map_err(solver_err)?;
        // Xu vanishes identically on x-independent solutions; there is no
        // candidate for the pointwise certificate then.
        let pointwise = if phi.iter().all(|f| f.values().iter().all(|v| *v == 0.0)) {
            None
        } else {
            Some(pointwise_certificate(op, &self.system, u, &phi).map_err(solver_err)?)
        };
        Ok(Section {
            pass: cert.stable,
            summary: format!(
                "lambda_min {:.6e} ({}); pointwise with phi = Xu {}",
                cert.lambda,
                if cert.stable { "stable" } else { "unstable" },
                match &pointwise {
                    Some(p) if p.pass => "passes",
                    Some(_) => "fails",
                    None => "skipped (Xu = 0)",
                }
            ),
            data: json!({
                "symmetric": true,
                "lambda_min": cert.lambda,
                "stable": cert.stable,
                "margin": cert.margin,
                "iterations": cert.iterations,
                "pointwise_phi": "Xu",
                "pointwise": pointwise,
            }),
        })
    }

    fn poincare(&mut self) -> Result<Section, CliError> {
        self.ensure_solution()?;
        let (op, u, grid) = (self.op.as_ref().unwrap(), self.solution.as_ref().unwrap(), self.grid.unwrap());
        let kind = NormKind::for_frame(&self.frame);
        let cfg = &self.config.poincare;
        let radii = if cfg.radii.is_empty() {
            radii_that_fit(&grid, kind, 2, 2.0, 3)
        } else {
            cfg.radii.clone()
        };
        let asserted = self.frame.bracket_is_central().map_err(solver_err)?;
        let mut rows = Vec::new();
        let mut all = true;
        for &r in &radii {
            let zeta = match cutoff_chi(&grid, r, kind) {
                Ok(z) => vec![z; self.system.m],
                Err(e) => return Err(CliError::Config(e.to_string())),
            };
            let stab = stability_inequality_gap(op, &self.system, u, &zeta);
            let rep = poincare_gap(op, &self.frame, &self.system, u, &zeta, &cfg.options());
            let row = match (rep, stab) {
                (Ok(rep), Ok(stab)) => {
                    let ok = rep.gap >= -cfg.rel_tol * rep.rhs.abs();
                    all &= ok || !asserted;
                    json!({ "radius": r, "report": rep, "stability_gap": stab, "pass": ok })
                }
                (Err(e), _) | (_, Err(e)) => {
                    all = false;
                    json!({ "radius": r, "error": e.to_string(), "pass": false })
                }
            };
            rows.push(row);
        }
        if radii.is_empty() {
            all = false;
        }
        let worst = rows
            .iter()
            .filter_map(|r| Some(r["report"]["gap"].as_f64()? / r["report"]["rhs"].as_f64()?.abs().max(f64::MIN_POSITIVE)))
            .fold(f64::INFINITY, f64::min);
        Ok(Section {
            pass: all,
            summary: if radii.is_empty() {
                "no cutoff radius fits the box".into()
            } else {
                format!("{} radii, smallest gap/rhs {:.3e}{}", radii.len(), worst, if asserted { "" } else { " (not asserted: bracket not central)" })
            },
            data: json!({ "radii": radii, "asserted": asserted, "rel_tol": cfg.rel_tol, "results": rows }),
        })
    }

    fn hamiltonian(&mut self) -> Result<Section, CliError> {
        if !is_split_form(&self.frame) || !self.system.has_potential() {
            let why = if self.system.has_potential() { "frame is not of split form" } else { "system has no potential" };
            if self.lenient {
                return Ok(Section {
                    pass: true,
                    summary: format!("skipped: {why}"),
                    data: json!({ "applicable": false, "reason": why }),
                });
            }
            return Err(CliError::Config(format!("hamiltonian: {why}")));
        }
        self.ensure_solution()?;
        let (u, grid) = (self.solution.as_ref().unwrap(), self.grid.unwrap());
        let cfg = &self.config.hamiltonian;
        let slices = if cfg.slices.is_empty() {
            let (lo, hi) = (grid.lo()[1], grid.hi()[1]);
            let (c, q) = (0.5 * (lo + hi), 0.25 * (hi - lo));
            [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|t| c + t * q).collect()
        } else {
            cfg.slices.clone()
        };
        let rep = hamiltonian_slices(u, &self.system, &self.frame, &slices).map_err(|e| CliError::Config(e.to_string()))?;
        let scale = rep.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let mut pass = rep.drift <= cfg.tol * scale;
        let mut data = json!({ "applicable": true, "report": rep, "tol": cfg.tol, "scale": scale });
        let mut summary = format!("drift {:.3e} over {} slices", rep.drift, rep.slices.len());
        if cfg.doubling {
            let lo: Vec<f64> = (0..grid.dim()).map(|k| 1.5 * grid.lo()[k] - 0.5 * grid.hi()[k]).collect();
            let hi: Vec<f64> = (0..grid.dim()).map(|k| 1.5 * grid.hi()[k] - 0.5 * grid.lo()[k]).collect();
            let n: Vec<usize> = grid.nodes().iter().map(|n| 2 * n - 1).collect();
            let big = Grid::new(&lo, &hi, &n).map_err(|e| CliError::Config(e.to_string()))?;
            let (_, res) = solve_on(&big, &self.frame, &self.system, self.config)?;
            let rep2 = hamiltonian_slices(&res.u, &self.system, &self.frame, &slices).map_err(|e| CliError::Config(e.to_string()))?;
            let ratio = rep.drift / rep2.drift;
            pass |= ratio >= 2.0;
            summary.push_str(&format!("; doubled box drift {:.3e} (ratio {:.2})", rep2.drift, ratio));
            data["doubled"] = json!({ "report": rep2, "ratio": ratio, "nodes": n });
        }
        Ok(Section { pass, summary, data })
    }

    fn diagnose(&mut self) -> Result<Section, CliError> {
        self.ensure_solution()?;
        let (u, grid) = (self.solution.as_ref().unwrap(), self.grid.unwrap());
        let cfg = &self.config.diagnostics;
        let kind = NormKind::for_frame(&self.frame);
        let radii = if cfg.radii.is_empty() {
            let top = radii_that_fit(&grid, kind, 0, 0.5, 1).first().copied();
            match top {
                Some(r) => (0..6).rev().map(|j| r * 2f64.powf(-0.5 * j as f64)).collect(),
                None => Vec::new(),
            }
        } else {
            cfg.radii.clone()
        };
        let growth = growth_integral(u, &self.frame, &radii).map_err(|e| CliError::Config(e.to_string()))?;
        let mut table = vec![("growth", &growth)];
        let energy = if self.system.has_potential() {
            let shift = if cfg.shift.is_empty() { vec![1.0; self.system.m] } else { cfg.shift.clone() };
            Some(energy_profile(u, &self.system, &self.frame, &radii, &shift).map_err(|e| CliError::Config(e.to_string()))?)
        } else {
            None
        };
        if let Some(e) = &energy {
            table.push(("energy", e));
        }
        write_scaling_csv(&self.out.join("scaling.csv"), &table)?;
        self.files.push("scaling.csv".into());
        let monotonicity = monotonicity_profile(u, &self.system, &self.frame).map_err(|e| CliError::Config(e.to_string()))?;

        let mut data = json!({
            "radii": radii,
            "growth": scaling_json(&growth),
            "energy": energy.as_ref().map(scaling_json),
            "monotonicity": monotonicity,
        });
        let mut summary = format!(
            "growth slope {}, energy slope {}",
            fmt_slope(growth.slope),
            energy.as_ref().map_or("n/a".into(), |e| fmt_slope(e.slope))
        );
        if grid.dim() == 2 {
            let mut level_rows = Vec::new();
            let mut fits = Vec::new();
            let mut slopes = Vec::new();
            for (c, f) in u.iter().enumerate() {
                let lf = level_set_flatness(f, &cfg.levels).map_err(|e| CliError::Config(e.to_string()))?;
                for l in &lf {
                    for (k, comp) in l.components.iter().enumerate() {
                        level_rows.push((c, l.level, k, comp.clone()));
                    }
                }
                fits.push(lf);
                let s = slope_condition(f, &self.frame, cfg.grad_floor, SLOPE_TOL).map_err(|e| CliError::Config(e.to_string()))?;
                slopes.push(json!({
                    "unmasked": s.unmasked,
                    "max_quantity": s.max_quantity,
                    "fraction_nonpositive": s.fraction_nonpositive,
                    "tol": s.tol,
                }));
            }
            write_levels_csv(&self.out.join("level_sets.csv"), &level_rows)?;
            self.files.push("level_sets.csv".into());
            let vertical = level_rows.iter().filter(|r| r.3.model == hypogeo::diagnostics::FlatnessModel::Vertical).count();
            summary.push_str(&format!("; {vertical}/{} level components vertical", level_rows.len()));
            data["level_sets"] = json!(fits);
            data["slope_condition"] = json!(slopes);
        }
        let pass = growth.pass && energy.as_ref().is_none_or(|e| e.pass);
        Ok(Section { pass, summary, data })
    }
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or("n/a".into(), |v| format!("{v:.3}"))
}

fn write_scaling_csv(path: &Path, tables: &[(&str, &ScalingReport)]) -> Result<(), CliError> {
    let mut out = String::from("quantity,radius,value\n");
    for (name, rep) in tables {
        for (r, v) in rep.radii.iter().zip(&rep.values) {
            out.push_str(&format!("{name},{r:e},{v:e}\n"));
        }
    }
    fs::write(path, out).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_levels_csv(path: &Path, rows: &[(usize, f64, usize, hypogeo::diagnostics::ComponentFit)]) -> Result<(), CliError> {
    let mut out = String::from("component,level,index,points,a,b,rms_parabola,verticality,x_mean,model,straddles_axis\n");
    for (c, level, k, f) in rows {
        out.push_str(&format!(
            "{c},{level:e},{k},{},{:e},{:e},{:e},{:e},{:e},{},{}\n",
            f.points,
            f.a,
            f.b,
            f.rms_parabola,
            f.verticality,
            f.x_mean,
            match f.model {
                hypogeo::diagnostics::FlatnessModel::Vertical => "vertical",
                hypogeo::diagnostics::FlatnessModel::Parabola => "parabola",
            },
            f.straddles_axis
        ));
    }
    fs::write(path, out).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
