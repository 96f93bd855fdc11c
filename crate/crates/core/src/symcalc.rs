//! Exact verification of the horizontal-calculus identities on polynomial
//! inputs. Every residual returned here must be the zero polynomial.

use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{lie_bracket, Frame, VectorField};
use crate::polynomial::Polynomial;

/// `Σ_k coeffs_k ∂p/∂x_k`.
pub fn apply_field(field: &VectorField, p: &Polynomial) -> Result<Polynomial> {
    if field.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: p.dim(),
        });
    }
    let mut acc = Polynomial::zero(p.dim());
    for (k, c) in field.coeffs().iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let d = p.derivative(k);
        if !d.is_zero() {
            acc = &acc + &(c * &d);
        }
    }
    Ok(acc)
}

/// `Δ_XY p = X(Xp) + Y(Yp)`.
pub fn sublaplacian(frame: &Frame, p: &Polynomial) -> Result<Polynomial> {
    let xx = apply_field(&frame.x, &apply_field(&frame.x, p)?)?;
    let yy = apply_field(&frame.y, &apply_field(&frame.y, p)?)?;
    Ok(&xx + &yy)
}

/// Exact horizontal jet of a polynomial; compositions read right to left
/// (`xy = X(Y w)`).
#[derive(Clone, Debug)]
pub struct PolynomialJet {
    pub x: Polynomial,
    pub y: Polynomial,
    pub z: Polynomial,
    pub xx: Polynomial,
    pub xy: Polynomial,
    pub yx: Polynomial,
    pub yy: Polynomial,
    pub zx: Polynomial,
    pub zy: Polynomial,
}

impl PolynomialJet {
    pub fn new(frame: &Frame, w: &Polynomial) -> Result<Self> {
        let x = apply_field(&frame.x, w)?;
        let y = apply_field(&frame.y, w)?;
        Ok(PolynomialJet {
            z: apply_field(&frame.z, w)?,
            xx: apply_field(&frame.x, &x)?,
            xy: apply_field(&frame.x, &y)?,
            yx: apply_field(&frame.y, &x)?,
            yy: apply_field(&frame.y, &y)?,
            zx: apply_field(&frame.z, &x)?,
            zy: apply_field(&frame.z, &y)?,
            x,
            y,
        })
    }
}

/// Numerators of the curvature `A` and the bracket-coupled quantity `B`:
/// `|∇w|³ A = A_num`, `|∇w|³ B = B_num`.
pub fn curvature_numerators(j: &PolynomialJet) -> (Polynomial, Polynomial) {
    let xw2 = j.x.square();
    let yw2 = j.y.square();
    let xwyw = &j.x * &j.y;
    let a = &(&(&j.xx * &yw2) - &(&j.xy * &xwyw)) - &(&(&j.yx * &xwyw) - &(&j.yy * &xw2));
    let b = &(&(&j.xx * &xwyw) - &(&j.xy * &xw2)) + &(&(&j.yx * &yw2) - &(&j.yy * &xwyw));
    (a, b)
}

/// Cleared form of the curvature identity.
///
/// With `G = |∇w|²` and `P = G·C`, where `C` is the left-hand side
/// `|∇Xw|² + |∇Yw|² - |X|∇w||² - |Y|∇w||²`, returns `G·P - A_num² - B_num²`.
pub fn cleared_identity_residual(w: &Polynomial, frame: &Frame) -> Result<Polynomial> {
    let j = PolynomialJet::new(frame, w)?;
    let g = &j.x.square() + &j.y.square();
    let grad_x = &j.xx.square() + &j.yx.square();
    let grad_y = &j.xy.square() + &j.yy.square();
    let s1 = &(&j.x * &j.xx) + &(&j.y * &j.xy);
    let s2 = &(&j.x * &j.yx) + &(&j.y * &j.yy);
    let p = &(&g * &(&grad_x + &grad_y)) - &(&s1.square() + &s2.square());
    let (a, b) = curvature_numerators(&j);
    Ok(&(&g * &p) - &(&a.square() + &b.square()))
}

/// `(Δ Xu + 2Z Yu - X Δu, Δ Yu - 2Z Xu - Y Δu)`; both vanish when `Z`
/// commutes with `X` and `Y`.
pub fn commutation_residual(u: &Polynomial, frame: &Frame) -> Result<(Polynomial, Polynomial)> {
    let xu = apply_field(&frame.x, u)?;
    let yu = apply_field(&frame.y, u)?;
    let lap = sublaplacian(frame, u)?;
    let first = &(&sublaplacian(frame, &xu)? + &apply_field(&frame.z, &yu)?.scale_int(2))
        - &apply_field(&frame.x, &lap)?;
    let second = &(&sublaplacian(frame, &yu)? - &apply_field(&frame.z, &xu)?.scale_int(2))
        - &apply_field(&frame.y, &lap)?;
    Ok((first, second))
}

/// Higher-bracket terms the commutation residual picks up on frames whose
/// bracket is not central: `(-[Y,Z]u, [X,Z]u)`.
pub fn commutation_correction(u: &Polynomial, frame: &Frame) -> Result<(Polynomial, Polynomial)> {
    let yz = lie_bracket(&frame.y, &frame.z)?;
    let xz = lie_bracket(&frame.x, &frame.z)?;
    Ok((-apply_field(&yz, u)?, apply_field(&xz, u)?))
}

/// The six-variable identity behind the curvature formula, expanded:
/// `[aε-bδ]²(ε²+δ²) + [cε-dδ]²(ε²+δ²) - [aε²-(b+c)εδ+dδ²]² - [cε²+(a-d)εδ-bδ²]²`.
pub fn algebraic_lemma_residual() -> Polynomial {
    let v = |k| Polynomial::var(6, k);
    let (a, b, c, d, e, dl) = (v(0), v(1), v(2), v(3), v(4), v(5));
    let norm = &e.square() + &dl.square();
    let l1 = (&(&a * &e) - &(&b * &dl)).square() * &norm;
    let l2 = (&(&c * &e) - &(&d * &dl)).square() * &norm;
    let ed = &e * &dl;
    let r1 = &(&(&a * &e.square()) - &(&(&b + &c) * &ed)) + &(&d * &dl.square());
    let r2 = &(&(&c * &e.square()) + &(&(&a - &d) * &ed)) - &(&b * &dl.square());
    &(&l1 + &l2) - &(&r1.square() + &r2.square())
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleCheck {
    pub identity: &'static str,
    pub frame: &'static str,
    pub sample: usize,
    pub pass: bool,
    pub residual_terms: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub degree: u32,
    pub samples: usize,
    pub seed: u64,
    pub algebraic_lemma_terms: usize,
    pub checks: Vec<SampleCheck>,
    pub passed: usize,
    pub failed: usize,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.failed == 0 && self.algebraic_lemma_terms == 0
    }
}

pub const IDENTITY_CLEARED: &str = "curvature_identity";
pub const IDENTITY_COMMUTATION: &str = "commutation";

/// Checks the curvature identity and the commutation rule on `samples`
/// random polynomials per frame. On frames whose bracket is not central the
/// commutation residual is compared against [`commutation_correction`].
pub fn verify_identities(frames: &[Frame], degree: u32, samples: usize, seed: u64) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    for (fi, frame) in frames.iter().enumerate() {
        let central = frame.bracket_is_central()?;
        let per_frame: Vec<Result<[SampleCheck; 2]>> = (0..samples)
            .into_par_iter()
            .map(|s| {
                let mut rng = StdRng::seed_from_u64(seed ^ ((fi as u64) << 32) ^ s as u64);
                let w = Polynomial::random(&mut rng, frame.dim(), degree, 3, 0.5);
                let cleared = cleared_identity_residual(&w, frame)?;
                let (c1, c2) = commutation_residual(&w, frame)?;
                let (r1, r2) = if central {
                    (c1, c2)
                } else {
                    let (k1, k2) = commutation_correction(&w, frame)?;
                    (&c1 - &k1, &c2 - &k2)
                };
                let name = frame.kind.name();
                Ok([
                    SampleCheck {
                        identity: IDENTITY_CLEARED,
                        frame: name,
                        sample: s,
                        pass: cleared.is_zero(),
                        residual_terms: cleared.term_count(),
                    },
                    SampleCheck {
                        identity: IDENTITY_COMMUTATION,
                        frame: name,
                        sample: s,
                        pass: r1.is_zero() && r2.is_zero(),
                        residual_terms: r1.term_count() + r2.term_count(),
                    },
                ])
            })
            .collect();
        for r in per_frame {
            checks.extend(r?);
        }
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    Ok(VerifyReport {
        degree,
        samples,
        seed,
        algebraic_lemma_terms: algebraic_lemma_residual().term_count(),
        failed: checks.len() - passed,
        passed,
        checks,
    })
}
