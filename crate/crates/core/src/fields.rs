//! Coordinate vector fields with polynomial coefficients, Lie brackets and
//! the bracket-generating rank check.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polynomial::Polynomial;
use crate::symcalc::apply_field;

/// `Σ_k coeffs[k] ∂/∂x_k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorField {
    pub name: String,
    coeffs: Vec<Polynomial>,
}

impl VectorField {
    pub fn new(name: impl Into<String>, coeffs: Vec<Polynomial>) -> Result<Self> {
        let dim = coeffs.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("vector field needs at least one coefficient".into()));
        }
        if let Some(bad) = coeffs.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(VectorField {
            name: name.into(),
            coeffs,
        })
    }

    pub fn zero(name: impl Into<String>, dim: usize) -> Self {
        VectorField {
            name: name.into(),
            coeffs: vec![Polynomial::zero(dim); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Polynomial] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Polynomial::is_zero)
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        Ok(self.coeffs.iter().map(|c| c.eval_f64(point)).collect())
    }

    pub fn evaluate_exact(&self, point: &[BigRational]) -> Vec<BigRational> {
        self.coeffs.iter().map(|c| c.eval_exact(point)).collect()
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        write!(f, "{} = ({})", self.name, parts.join(", "))
    }
}

pub fn evaluate_field(field: &VectorField, point: &[f64]) -> Result<Vec<f64>> {
    field.evaluate(point)
}

/// `[a, b]` with k-th coefficient `a(b_k) - b(a_k)`.
pub fn lie_bracket(a: &VectorField, b: &VectorField) -> Result<VectorField> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let coeffs = a
        .coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(ak, bk)| Ok(apply_field(a, bk)? - apply_field(b, ak)?))
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(format!("[{},{}]", a.name, b.name), coeffs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Euclidean1D,
    Euclidean2D,
    Grushin2D,
    Heisenberg3D,
    Martinet3D,
    Custom,
}

impl FrameKind {
    pub fn name(self) -> &'static str {
        match self {
            FrameKind::Euclidean1D => "euclidean1d",
            FrameKind::Euclidean2D => "euclidean2d",
            FrameKind::Grushin2D => "grushin2d",
            FrameKind::Heisenberg3D => "heisenberg3d",
            FrameKind::Martinet3D => "martinet3d",
            FrameKind::Custom => "custom",
        }
    }
}

/// Two horizontal fields and their bracket `Z = [X, Y]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub x: VectorField,
    pub y: VectorField,
    pub z: VectorField,
}

fn half() -> BigRational {
    BigRational::new(1.into(), 2.into())
}

impl Frame {
    pub fn new(kind: FrameKind, x: VectorField, y: VectorField) -> Result<Self> {
        let z = lie_bracket(&x, &y)?;
        let z = VectorField { name: "Z".into(), ..z };
        Ok(Frame { kind, x, y, z })
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn euclidean1d() -> Self {
        let x = VectorField::new("X", vec![Polynomial::from_int(1, 1)]).unwrap();
        Frame::new(FrameKind::Euclidean1D, x, VectorField::zero("Y", 1)).unwrap()
    }

    pub fn euclidean2d() -> Self {
        let x = VectorField::new("X", vec![Polynomial::from_int(2, 1), Polynomial::zero(2)]).unwrap();
        let y = VectorField::new("Y", vec![Polynomial::zero(2), Polynomial::from_int(2, 1)]).unwrap();
        Frame::new(FrameKind::Euclidean2D, x, y).unwrap()
    }

    /// `X = ∂_x`, `Y = x ∂_y`.
    pub fn grushin2d() -> Self {
        let x = VectorField::new("X", vec![Polynomial::from_int(2, 1), Polynomial::zero(2)]).unwrap();
        let y = VectorField::new("Y", vec![Polynomial::zero(2), Polynomial::var(2, 0)]).unwrap();
        Frame::new(FrameKind::Grushin2D, x, y).unwrap()
    }

    /// `X = ∂_x - (y/2) ∂_z`, `Y = ∂_y + (x/2) ∂_z`.
    pub fn heisenberg3d() -> Self {
        let one = Polynomial::from_int(3, 1);
        let zero = Polynomial::zero(3);
        let x = VectorField::new(
            "X",
            vec![one.clone(), zero.clone(), -&Polynomial::var(3, 1).scale(&half())],
        )
        .unwrap();
        let y = VectorField::new("Y", vec![zero, one, Polynomial::var(3, 0).scale(&half())]).unwrap();
        Frame::new(FrameKind::Heisenberg3D, x, y).unwrap()
    }

    /// `X = ∂_x`, `Y = ∂_y + (x²/2) ∂_z`.
    pub fn martinet3d() -> Self {
        let one = Polynomial::from_int(3, 1);
        let zero = Polynomial::zero(3);
        let x = VectorField::new("X", vec![one.clone(), zero.clone(), zero.clone()]).unwrap();
        let y = VectorField::new(
            "Y",
            vec![zero, one, Polynomial::var(3, 0).square().scale(&half())],
        )
        .unwrap();
        Frame::new(FrameKind::Martinet3D, x, y).unwrap()
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "euclidean1d" => Ok(Frame::euclidean1d()),
            "euclidean2d" | "euclidean" => Ok(Frame::euclidean2d()),
            "grushin2d" | "grushin" => Ok(Frame::grushin2d()),
            "heisenberg3d" | "heisenberg" => Ok(Frame::heisenberg3d()),
            "martinet3d" | "martinet" => Ok(Frame::martinet3d()),
            other => Err(Error::Parse(format!("unknown frame '{other}'"))),
        }
    }

    /// All built-in frames.
    pub fn builtins() -> Vec<Frame> {
        vec![
            Frame::euclidean2d(),
            Frame::grushin2d(),
            Frame::heisenberg3d(),
            Frame::martinet3d(),
        ]
    }

    pub fn from_spec(spec: &CustomFrameSpec) -> Result<Self> {
        let x = VectorField::new("X", spec.x.clone())?;
        let y = VectorField::new("Y", spec.y.clone())?;
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                got: y.dim(),
            });
        }
        Frame::new(FrameKind::Custom, x, y)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: CustomFrameSpec = serde_json::from_str(&text)?;
        Frame::from_spec(&spec)
    }

    /// Whether `Z` commutes with both `X` and `Y` (step-two nilpotent frames).
    pub fn bracket_is_central(&self) -> Result<bool> {
        Ok(lie_bracket(&self.x, &self.z)?.is_zero() && lie_bracket(&self.y, &self.z)?.is_zero())
    }
}

/// JSON description of a custom frame: each field is a list of coefficient
/// polynomials, one per coordinate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CustomFrameSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub x: Vec<Polynomial>,
    pub y: Vec<Polynomial>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub depth: usize,
}

/// Fields of the Lie algebra generated by `X, Y`, grouped by bracket depth.
fn bracket_layers(frame: &Frame, max_depth: usize) -> Result<Vec<Vec<VectorField>>> {
    let mut layers = vec![vec![frame.x.clone(), frame.y.clone()]];
    for _ in 1..max_depth {
        let prev = layers.last().unwrap();
        let mut next = Vec::new();
        for f in prev {
            for g in [&frame.x, &frame.y] {
                let b = lie_bracket(g, f)?;
                if !b.is_zero() && !next.contains(&b) {
                    next.push(b);
                }
            }
        }
        layers.push(next);
    }
    Ok(layers)
}

#[allow(clippy::needless_range_loop)]
fn exact_rank(rows: &[Vec<BigRational>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows.to_vec();
    let ncols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..ncols {
        let Some(p) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let inv = BigRational::one() / m[rank][col].clone();
        for r in 0..m.len() {
            if r != rank && !m[r][col].is_zero() {
                let factor = &m[r][col] * &inv;
                for c in col..ncols {
                    let t = &factor * &m[rank][c];
                    m[r][c] -= t;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Rank of the span of `X, Y` and iterated brackets up to `max_depth` at
/// `point`, plus the smallest depth reaching that rank. Finite floats are
/// exact binary rationals, so elimination is done over the rationals.
pub fn hormander_rank(frame: &Frame, point: &[f64], max_depth: usize) -> Result<RankReport> {
    if max_depth == 0 {
        return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
    }
    if point.len() != frame.dim() {
        return Err(Error::DimensionMismatch {
            expected: frame.dim(),
            got: point.len(),
        });
    }
    let exact_point = point
        .iter()
        .map(|&v| BigRational::from_float(v))
        .collect::<Option<Vec<_>>>();
    let layers = bracket_layers(frame, max_depth)?;
    let mut rows = Vec::new();
    let mut best = RankReport { rank: 0, depth: 1 };
    for (d, layer) in layers.iter().enumerate() {
        for f in layer {
            rows.push(f);
        }
        let rank = match &exact_point {
            Some(p) => exact_rank(&rows.iter().map(|f| f.evaluate_exact(p)).collect::<Vec<_>>()),
            None => numeric_rank(&rows, point, 1e-10)?,
        };
        if rank > best.rank {
            best = RankReport { rank, depth: d + 1 };
        }
    }
    Ok(best)
}

/// Rank by singular-value thresholding; used when the point is not representable exactly.
pub fn numeric_rank(fields: &[&VectorField], point: &[f64], tol: f64) -> Result<usize> {
    let n = point.len();
    let mut data = Vec::with_capacity(fields.len() * n);
    for f in fields {
        data.extend(f.evaluate(point)?);
    }
    let m = DMatrix::from_row_slice(fields.len(), n, &data);
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    Ok(sv.iter().filter(|&&s| s > tol * smax.max(1.0)).count())
}
