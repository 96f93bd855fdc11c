//! Pointwise horizontal calculus on second-order jets: gradient, normal and
//! tangent directions, curvature `A`, bracket-coupled term `B` and the gap of
//! the curvature identity.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::Frame;
use crate::polynomial::Polynomial;
use crate::symcalc::PolynomialJet;

pub const DEFAULT_GRAD_FLOOR: f64 = 1e-8;

/// First and second horizontal derivatives of a scalar at one point.
/// Compositions read right to left: `xyu = X(Y u)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JetSample {
    pub point: Vec<f64>,
    pub u: f64,
    pub xu: f64,
    pub yu: f64,
    pub zu: f64,
    pub xxu: f64,
    pub xyu: f64,
    pub yxu: f64,
    pub yyu: f64,
    /// `Z(Xu)` and `Z(Yu)`, needed only for the bracket quantity.
    #[serde(default)]
    pub zxu: Option<f64>,
    #[serde(default)]
    pub zyu: Option<f64>,
    /// `X|∇u|` and `Y|∇u|` measured independently (e.g. by finite
    /// differences of the gradient norm). When absent they are derived from
    /// the jet by the chain rule.
    #[serde(default)]
    pub x_grad_norm: Option<f64>,
    #[serde(default)]
    pub y_grad_norm: Option<f64>,
}

impl JetSample {
    /// Exact jet of a polynomial, evaluated at `point`.
    pub fn from_polynomial(frame: &Frame, w: &Polynomial, point: &[f64]) -> Result<Self> {
        let j = PolynomialJet::new(frame, w)?;
        Ok(Self::from_polynomial_jet(&j, w, point))
    }

    pub fn from_polynomial_jet(j: &PolynomialJet, w: &Polynomial, point: &[f64]) -> Self {
        JetSample {
            point: point.to_vec(),
            u: w.eval_f64(point),
            xu: j.x.eval_f64(point),
            yu: j.y.eval_f64(point),
            zu: j.z.eval_f64(point),
            xxu: j.xx.eval_f64(point),
            xyu: j.xy.eval_f64(point),
            yxu: j.yx.eval_f64(point),
            yyu: j.yy.eval_f64(point),
            zxu: Some(j.zx.eval_f64(point)),
            zyu: Some(j.zy.eval_f64(point)),
            x_grad_norm: None,
            y_grad_norm: None,
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.xu.hypot(self.yu)
    }

    /// `XYu - YXu - Zu`; zero for exact jets.
    pub fn compatibility_defect(&self) -> f64 {
        self.xyu - self.yxu - self.zu
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometricReport {
    pub grad_norm: f64,
    pub eta: [f64; 2],
    pub tau: [f64; 2],
    pub a: f64,
    pub b: f64,
    pub identity_gap: f64,
    pub det_hess: f64,
    pub ma_residual: f64,
    pub bracket_quantity: Option<f64>,
    /// Gradient at or below the floor: `a`, `b` are NaN and the identity gap
    /// is reported as 0.
    pub masked: bool,
}

/// Numerators of `A` and `B` on a numeric jet.
pub fn curvature_numerators(j: &JetSample) -> (f64, f64) {
    let (xu, yu) = (j.xu, j.yu);
    let a = j.xxu * yu * yu - j.xyu * xu * yu - j.yxu * xu * yu + j.yyu * xu * xu;
    let b = j.xxu * xu * yu - j.xyu * xu * xu + j.yxu * yu * yu - j.yyu * xu * yu;
    (a, b)
}

/// `ZYu·Xu - ZXu·Yu` when the jet carries third-order data.
pub fn bracket_quantity(j: &JetSample) -> Option<f64> {
    Some(j.zyu? * j.xu - j.zxu? * j.yu)
}

pub fn geometric_report(j: &JetSample, grad_floor: f64) -> GeometricReport {
    let g = j.grad_norm();
    let (det_hess, ma_residual) = monge_ampere_check(j);
    let bracket = bracket_quantity(j);
    if !(g > grad_floor) {
        return GeometricReport {
            grad_norm: g,
            eta: [0.0, 0.0],
            tau: [0.0, 0.0],
            a: f64::NAN,
            b: f64::NAN,
            identity_gap: 0.0,
            det_hess,
            ma_residual,
            bracket_quantity: bracket,
            masked: true,
        };
    }
    let eta = [j.xu / g, j.yu / g];
    let tau = [j.yu / g, -j.xu / g];
    let (a_num, b_num) = curvature_numerators(j);
    let g3 = g * g * g;
    let (a, b) = (a_num / g3, b_num / g3);

    let xg = j.x_grad_norm.unwrap_or((j.xu * j.xxu + j.yu * j.xyu) / g);
    let yg = j.y_grad_norm.unwrap_or((j.xu * j.yxu + j.yu * j.yyu) / g);
    let c = j.xxu * j.xxu + j.yxu * j.yxu + j.xyu * j.xyu + j.yyu * j.yyu - xg * xg - yg * yg;
    let identity_gap = c - g * g * (a * a + b * b);

    GeometricReport {
        grad_norm: g,
        eta,
        tau,
        a,
        b,
        identity_gap,
        det_hess,
        ma_residual,
        bracket_quantity: bracket,
        masked: false,
    }
}

/// `(det H, |Xu||∇Yu| - |Yu||∇Xu|)`, both zero wherever `A = B = 0`.
pub fn monge_ampere_check(j: &JetSample) -> (f64, f64) {
    let det = j.xxu * j.yyu - j.xyu * j.yxu;
    let balance = j.xu.abs() * j.xyu.hypot(j.yyu) - j.yu.abs() * j.xxu.hypot(j.yxu);
    (det, balance)
}

/// `⟨H τ, η⟩` with the horizontal Hessian `[[XX, YX], [XY, YY]]`.
pub fn hessian_form(j: &JetSample, tau: [f64; 2], eta: [f64; 2]) -> f64 {
    let h_tau = [j.xxu * tau[0] + j.yxu * tau[1], j.xyu * tau[0] + j.yyu * tau[1]];
    h_tau[0] * eta[0] + h_tau[1] * eta[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn jet(xu: f64, yu: f64, zu: f64, xxu: f64, xyu: f64, yxu: f64, yyu: f64) -> JetSample {
        JetSample {
            point: vec![0.0, 0.0],
            xu,
            yu,
            zu,
            xxu,
            xyu,
            yxu,
            yyu,
            ..Default::default()
        }
    }

    #[test]
    fn grushin_y_at_unit_point() {
        let r = geometric_report(&jet(0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0), DEFAULT_GRAD_FLOOR);
        assert!(!r.masked);
        assert_eq!(r.a, 0.0);
        assert_eq!(r.b, 0.0);
        assert_eq!(r.identity_gap, 0.0);
    }

    #[test]
    fn euclidean_circle_has_unit_curvature() {
        let r = geometric_report(&jet(2.0, 0.0, 0.0, 2.0, 0.0, 0.0, 2.0), DEFAULT_GRAD_FLOOR);
        assert_eq!(r.a, 1.0);
        assert_eq!(r.b, 0.0);
        assert_eq!(r.identity_gap, 0.0);
    }

    #[test]
    fn degenerate_gradient_is_masked() {
        let r = geometric_report(&jet(0.0, 0.0, 3.0, 1.0, 2.0, 3.0, 4.0), DEFAULT_GRAD_FLOOR);
        assert!(r.masked);
        assert!(r.a.is_nan() && r.b.is_nan());
        assert_eq!(r.identity_gap, 0.0);
    }

    #[test]
    fn monge_ampere_examples() {
        assert_eq!(monge_ampere_check(&jet(1.5, 0.0, 0.0, -0.7, 0.0, 0.0, 0.0)), (0.0, 0.0));
        assert_eq!(monge_ampere_check(&jet(2.0, 2.0, 0.0, 2.0, 0.0, 0.0, 2.0)), (4.0, 0.0));
        assert_eq!(monge_ampere_check(&JetSample::default()), (0.0, 0.0));
    }

    #[test]
    fn b_matches_hessian_form() {
        let j = jet(0.3, -1.1, 0.4, 0.7, 2.0, 1.6, -0.9);
        let r = geometric_report(&j, DEFAULT_GRAD_FLOOR);
        let expected = (-j.zu + hessian_form(&j, r.tau, r.eta)) / r.grad_norm;
        assert!((r.b - expected).abs() < 1e-12);
    }

    #[test]
    fn polynomial_jets_close_the_identity() {
        let w = Polynomial::from_terms(3, &[(&[2, 1, 0], 1, 1), (&[0, 0, 1], -3, 2), (&[1, 1, 1], 2, 1)]);
        for frame in [Frame::heisenberg3d(), Frame::martinet3d()] {
            let j = JetSample::from_polynomial(&frame, &w, &[0.4, -0.8, 1.3]).unwrap();
            let r = geometric_report(&j, DEFAULT_GRAD_FLOOR);
            assert!(r.grad_norm > 0.1);
            assert!(r.identity_gap.abs() < 1e-9 * (1.0 + r.grad_norm.powi(2) * (r.a * r.a + r.b * r.b)));
            assert!(j.compatibility_defect().abs() < 1e-12);
        }
    }

    /// Euclidean radial functions: `A` is the curvature `1/r` of the level
    /// circle (sign set by the direction of growth) and `B` vanishes.
    #[test]
    fn euclidean_radial_functions() {
        let frame = Frame::euclidean2d();
        // u = (x² + y²)² grows outward.
        let w = Polynomial::from_terms(2, &[(&[4, 0], 1, 1), (&[2, 2], 2, 1), (&[0, 4], 1, 1)]);
        for p in [[1.0, 0.5], [-0.3, 2.0], [0.7, -0.7]] {
            let r = geometric_report(&JetSample::from_polynomial(&frame, &w, &p).unwrap(), 1e-8);
            let radius = p[0].hypot(p[1]);
            assert!((r.a - 1.0 / radius).abs() < 1e-12);
            assert!(r.b.abs() < 1e-12);
            assert!(r.identity_gap.abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn eta_tau_orthonormal(xu in -10.0f64..10.0, yu in -10.0f64..10.0) {
            prop_assume!(xu.hypot(yu) > 1e-3);
            let r = geometric_report(&jet(xu, yu, 0.0, 1.0, 0.0, 0.0, 1.0), DEFAULT_GRAD_FLOOR);
            let dot = r.eta[0] * r.tau[0] + r.eta[1] * r.tau[1];
            prop_assert!(dot.abs() < 1e-12);
            prop_assert!((r.eta[0].hypot(r.eta[1]) - 1.0).abs() < 1e-12);
            prop_assert!((r.tau[0].hypot(r.tau[1]) - 1.0).abs() < 1e-12);
        }

        /// With the chain-rule gradient norm, the identity holds for any
        /// jet, compatible or not.
        #[test]
        fn identity_holds_on_arbitrary_jets(v in proptest::collection::vec(-5.0f64..5.0, 7)) {
            let j = jet(v[0], v[1], v[2], v[3], v[4], v[5], v[6]);
            prop_assume!(j.grad_norm() > 0.1);
            let r = geometric_report(&j, DEFAULT_GRAD_FLOOR);
            let scale = 1.0 + v.iter().map(|x| x * x).sum::<f64>();
            prop_assert!(r.identity_gap.abs() < 1e-10 * scale);
        }
    }
}
