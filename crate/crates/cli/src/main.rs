use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hypogeo_cli::config::{BoundaryKind, RunConfig};
use hypogeo_cli::report::write_reports;
use hypogeo_cli::{init_threads, run_pipeline, CliError, Verb};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Verify,
    Solve,
    Stability,
    Poincare,
    Hamiltonian,
    Diagnose,
    /// Every verb in pipeline order.
    Report,
}

/// Hypoelliptic calculus toolkit: exact identities, sub-Laplacian solves,
/// stability certificates and flatness diagnostics.
#[derive(Debug, Parser)]
#[command(name = "hypogeo", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frame name (euclidean1d, euclidean2d, grushin2d, heisenberg3d, martinet3d) or custom frame JSON.
    #[arg(long)]
    frame: Option<String>,
    /// Nodes per axis, e.g. 129,129.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Box as xlo,xhi,ylo,yhi[,zlo,zhi].
    #[arg(long = "box", value_delimiter = ',', allow_hyphen_values = true)]
    bounds: Option<Vec<f64>>,
    /// System preset (allen-cahn, gradient-coupled, zero) or system JSON file.
    #[arg(long)]
    system: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    boundary: Option<BoundaryKind>,
    #[arg(long, allow_hyphen_values = true)]
    amplitude: Option<f64>,
    /// Raw-field sidecar of an existing solution.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long)]
    samples: Option<usize>,
    /// Verify on every built-in frame.
    #[arg(long)]
    all_frames: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    margin: Option<f64>,
    /// Poincaré cutoff radii.
    #[arg(long, value_delimiter = ',')]
    cutoff_radii: Option<Vec<f64>>,
    /// Ball radii for growth and energy profiles.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    levels: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    slices: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    shift: Option<Vec<f64>>,
    /// Re-solve on the doubled box for the Hamiltonian drift.
    #[arg(long)]
    doubling: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Cli {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => {
                if !path.is_file() {
                    return Err(CliError::Config(format!("file not found: {}", path.display())));
                }
                RunConfig::from_file(path)?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &self.frame {
            c.frame = v.clone();
        }
        if let Some(v) = &self.grid {
            c.grid.nodes = v.clone();
        }
        if let Some(v) = &self.bounds {
            c.grid.bounds = v.clone();
        }
        if let Some(v) = &self.system {
            if v.ends_with(".json") || std::path::Path::new(v).is_file() {
                c.system.file = Some(v.into());
            } else {
                c.system.preset = v.clone();
                c.system.file = None;
            }
        }
        if let Some(v) = self.beta {
            c.system.beta = v;
        }
        if let Some(v) = self.boundary {
            c.boundary.kind = v;
        }
        if let Some(v) = self.amplitude {
            c.boundary.amplitude = v;
        }
        if let Some(v) = &self.input {
            c.input = Some(v.clone());
        }
        if let Some(v) = self.tol {
            c.solver.tol = v;
        }
        if let Some(v) = self.max_iter {
            c.solver.max_iter = v;
        }
        if let Some(v) = self.degree {
            c.verify.degree = v;
        }
        if let Some(v) = self.samples {
            c.verify.samples = v;
        }
        if self.all_frames {
            c.verify.frames = ["euclidean2d", "grushin2d", "heisenberg3d", "martinet3d"].map(String::from).to_vec();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.margin {
            c.stability.margin = v;
        }
        if let Some(v) = &self.cutoff_radii {
            c.poincare.radii = v.clone();
        }
        if let Some(v) = &self.radii {
            c.diagnostics.radii = v.clone();
        }
        if let Some(v) = &self.levels {
            c.diagnostics.levels = v.clone();
        }
        if let Some(v) = &self.slices {
            c.hamiltonian.slices = v.clone();
        }
        if let Some(v) = &self.shift {
            c.diagnostics.shift = v.clone();
        }
        if self.doubling {
            c.hamiltonian.doubling = true;
        }
        if let Some(v) = &self.out {
            c.output = v.clone();
        }
        Ok(c)
    }
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let config = cli.config()?;
    let (verbs, lenient): (Vec<Verb>, bool) = match cli.command {
        Command::Verify => (vec![Verb::Verify], false),
        Command::Solve => (vec![Verb::Solve], false),
        Command::Stability => (vec![Verb::Solve, Verb::Stability], false),
        Command::Poincare => (vec![Verb::Solve, Verb::Poincare], false),
        Command::Hamiltonian => (vec![Verb::Solve, Verb::Hamiltonian], false),
        Command::Diagnose => (vec![Verb::Solve, Verb::Diagnose], false),
        Command::Report => (Verb::ALL.to_vec(), true),
    };
    let report = run_pipeline(&config, &verbs, lenient)?;
    write_reports(&config.output, &config, &report)?;
    for verb in &report.verbs {
        if let Some(s) = report.sections.get(verb.name()) {
            println!("{:<12} {}  {}", verb.name(), if s.pass { "PASS" } else { "FAIL" }, s.summary);
        }
    }
    if let Some(e) = &report.error {
        eprintln!("solver failure: {e}");
    }
    println!("report: {}", config.output.join("report.json").display());
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("hypogeo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
