//! Likelihood, measurement Jacobians, Fisher information and Cramer-Rao
//! bounds for every measurement family.
//!
//! Measurements are modelled as `M_h = G_h(P) + W_h` with independent
//! zero-mean Gaussian `W_h`. The Fisher information of such a model is the
//! Gram accumulation `J^T diag(1/sigma^2) J` of the measurement Jacobian.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{model_values, wrap_angle, Family, MeasurementSet, Position2D, RxLayout, TargetGeometry};
use crate::linalg::Matrix;

/// Fisher matrices with a condition number above this are treated as singular.
pub const ILL_CONDITION_LIMIT: f64 = 1e12;

/// Estimands: `[x1, y1]` for classical families,
/// `[x1(t0), y1(t0), x1(t1), y1(t1)]` for the running fix.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn classical(p: Position2D) -> Self {
        Self(vec![p.x, p.y])
    }

    pub fn running(t0: Position2D, t1: Position2D) -> Self {
        Self(vec![t0.x, t0.y, t1.x, t1.y])
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self(values.to_vec())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Transmitter geometry this state describes for `family`; differential
    /// families use the parallel TX pair.
    pub fn target(&self, family: Family, layout: &RxLayout) -> Result<TargetGeometry> {
        let expected = family.state_len();
        if self.0.len() != expected {
            return Err(Error::DimensionMismatch {
                family,
                expected,
                got: self.0.len(),
            });
        }
        let tx = Position2D::new(self.0[0], self.0[1]);
        Ok(match family {
            Family::RunningRange => TargetGeometry::at(tx).moving_to(Position2D::new(self.0[2], self.0[3])),
            Family::DifferentialBearing | Family::DifferentialRange => {
                TargetGeometry::at(tx).with_tx2(layout.parallel_partner(tx))
            }
            _ => TargetGeometry::at(tx),
        })
    }
}

/// Model predictions `G(P)`.
pub fn predict(family: Family, layout: &RxLayout, state: &StateVector) -> Result<Vec<f64>> {
    model_values(layout, family, &state.target(family, layout)?)
}

fn residuals(meas: &MeasurementSet, layout: &RxLayout, state: &StateVector) -> Result<Vec<f64>> {
    if meas.sigmas().iter().any(|s| *s <= 0.0) {
        return Err(Error::DegenerateLikelihood);
    }
    let family = meas.family();
    let g = predict(family, layout, state)?;
    Ok(meas
        .values()
        .iter()
        .zip(&g)
        .enumerate()
        .map(|(h, (m, g))| if family.is_angle(h) { wrap_angle(m - g) } else { m - g })
        .collect())
}

/// Gaussian log-likelihood `ln p(M; P)`.
pub fn log_likelihood(meas: &MeasurementSet, layout: &RxLayout, state: &StateVector) -> Result<f64> {
    let r = residuals(meas, layout, state)?;
    let ll = meas
        .sigmas()
        .iter()
        .zip(&r)
        .map(|(s, r)| -0.5 * (2.0 * PI * s * s).ln() - r * r / (2.0 * s * s))
        .sum();
    Ok(ll)
}

/// Gradient of the log-likelihood with respect to the state; zero at the MLE.
pub fn score_residual(meas: &MeasurementSet, layout: &RxLayout, state: &StateVector) -> Result<Vec<f64>> {
    let r = residuals(meas, layout, state)?;
    let j = measurement_jacobian(meas.family(), layout, state)?;
    let mut score = vec![0.0; j.cols()];
    for (h, (r, s)) in r.iter().zip(meas.sigmas()).enumerate() {
        let w = r / (s * s);
        for (m, out) in score.iter_mut().enumerate() {
            *out += w * j[(h, m)];
        }
    }
    Ok(score)
}

fn bearing_row(tx: Position2D, rx: Position2D) -> [f64; 2] {
    let (dx, dy) = (tx.x - rx.x, tx.y - rx.y);
    let r2 = dx * dx + dy * dy;
    [dy / r2, -dx / r2]
}

fn range_row(tx: Position2D, rx: Position2D) -> [f64; 2] {
    let (dx, dy) = (tx.x - rx.x, tx.y - rx.y);
    let d = dx.hypot(dy);
    [dx / d, dy / d]
}

fn minus(a: [f64; 2], b: [f64; 2]) -> Vec<f64> {
    vec![a[0] - b[0], a[1] - b[1]]
}

/// `N_H x N_M` matrix of `dG_h / dP_m` at `state`.
pub fn measurement_jacobian(family: Family, layout: &RxLayout, state: &StateVector) -> Result<Matrix> {
    let target = state.target(family, layout)?;
    for p in [Some(target.tx), target.tx2, target.next].into_iter().flatten() {
        if !(p.y > 0.0) {
            return Err(Error::BehindReceiverPlane { y: p.y });
        }
    }
    let [rx1, rx2] = layout.anchors();
    let tx = target.tx;
    let rows = match family {
        Family::DirectBearing => vec![bearing_row(tx, rx1).to_vec(), bearing_row(tx, rx2).to_vec()],
        Family::DirectRange => vec![range_row(tx, rx1).to_vec(), range_row(tx, rx2).to_vec()],
        Family::DifferentialBearing => {
            // TX2 rides along with TX1, so d/dx1 acts on both transmitters
            let tx2 = layout.parallel_partner(tx);
            vec![
                minus(bearing_row(tx, rx1), bearing_row(tx, rx2)),
                minus(bearing_row(tx2, rx1), bearing_row(tx2, rx2)),
            ]
        }
        Family::DifferentialRange => {
            let tx2 = layout.parallel_partner(tx);
            vec![
                minus(range_row(tx, rx1), range_row(tx, rx2)),
                minus(range_row(tx2, rx1), range_row(tx2, rx2)),
            ]
        }
        Family::RunningRange => {
            let t1 = target.next.ok_or(Error::MissingGeometry(family))?;
            let (dx, dy) = (t1.x - tx.x, t1.y - tx.y);
            let dv2 = dx * dx + dy * dy;
            if dv2 == 0.0 {
                return Err(Error::DegenerateMotion);
            }
            let dv = dv2.sqrt();
            let [a0, b0] = range_row(tx, rx1);
            let [a1, b1] = range_row(t1, rx1);
            vec![
                vec![a0, b0, 0.0, 0.0],
                vec![0.0, 0.0, a1, b1],
                vec![-dy / dv2, dx / dv2, dy / dv2, -dx / dv2],
                vec![-dx / dv, -dy / dv, dx / dv, dy / dv],
            ]
        }
    };
    Ok(Matrix::from_rows(&rows))
}

/// Symmetric positive semidefinite Fisher information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix(Matrix);

impl FisherMatrix {
    /// Wraps a matrix, symmetrizing away round-off. Panics on non-square input.
    pub fn new(m: Matrix) -> Self {
        assert_eq!(m.rows(), m.cols(), "Fisher matrix must be square");
        let mut s = m.clone();
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                s[(r, c)] = 0.5 * (m[(r, c)] + m[(c, r)]);
            }
        }
        Self(s)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }
}

/// `J^T diag(1/sigma^2) J` for an arbitrary stack of independent rows.
pub fn fisher_from_jacobian(jacobian: &Matrix, sigmas: &[f64]) -> Result<FisherMatrix> {
    if sigmas.len() != jacobian.rows() {
        return Err(Error::InvalidParameter(format!(
            "{} sigmas for {} measurement rows",
            sigmas.len(),
            jacobian.rows()
        )));
    }
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::DegenerateLikelihood);
    }
    let n = jacobian.cols();
    let mut f = Matrix::zeros(n, n);
    for (h, s) in sigmas.iter().enumerate() {
        let w = 1.0 / (s * s);
        let row = jacobian.row(h);
        for m in 0..n {
            for k in m..n {
                f[(m, k)] += w * row[m] * row[k];
            }
        }
    }
    for m in 0..n {
        for k in 0..m {
            f[(m, k)] = f[(k, m)];
        }
    }
    Ok(FisherMatrix(f))
}

pub fn fisher_information(
    family: Family,
    layout: &RxLayout,
    state: &StateVector,
    sigmas: &[f64],
) -> Result<FisherMatrix> {
    fisher_from_jacobian(&measurement_jacobian(family, layout, state)?, sigmas)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrlbResult {
    /// Variance lower bound per state coordinate (units^2); infinite when infeasible.
    pub bounds: Vec<f64>,
    pub condition_number: f64,
    pub feasible: bool,
}

impl CrlbResult {
    pub fn std(&self, m: usize) -> f64 {
        self.bounds[m].sqrt()
    }
}

pub fn crlb(f: &FisherMatrix) -> CrlbResult {
    crlb_with_limit(f, ILL_CONDITION_LIMIT)
}

/// Diagonal of `F^-1`, or infinite bounds when `F` is singular or its
/// condition number exceeds `limit`.
pub fn crlb_with_limit(f: &FisherMatrix, limit: f64) -> CrlbResult {
    let n = f.dim();
    let infeasible = |condition_number| CrlbResult {
        bounds: vec![f64::INFINITY; n],
        condition_number,
        feasible: false,
    };
    let eig = f.matrix().symmetric_eigenvalues();
    let (lo, hi) = (eig[0], eig[n - 1]);
    let condition_number = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition_number <= limit) {
        return infeasible(condition_number);
    }
    match f.matrix().inverse() {
        Some(inv) if inv.diag().iter().all(|v| *v > 0.0 && v.is_finite()) => CrlbResult {
            bounds: inv.diag(),
            condition_number,
            feasible: true,
        },
        _ => infeasible(condition_number),
    }
}

/// Noise on the inertial relative-motion inputs of the running fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionNoise {
    pub heading_sigma_deg: f64,
    /// Travelled-distance sigma (m).
    pub distance_sigma: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            heading_sigma_deg: 0.1,
            distance_sigma: 0.01,
        }
    }
}

impl MotionNoise {
    pub fn heading_sigma(&self) -> f64 {
        self.heading_sigma_deg.to_radians()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> RxLayout {
        RxLayout::new(1.6).unwrap()
    }

    fn state_for(family: Family, p: Position2D) -> StateVector {
        match family {
            Family::RunningRange => StateVector::running(p, p.offset(0.3, -0.8)),
            _ => StateVector::classical(p),
        }
    }

    fn exact_set(family: Family, state: &StateVector, sigma: f64) -> MeasurementSet {
        let v = predict(family, &layout(), state).unwrap();
        let n = v.len();
        MeasurementSet::new(family, v, vec![sigma; n]).unwrap()
    }

    #[test]
    fn likelihood_at_truth_is_normalizer() {
        for family in Family::ALL {
            let s = state_for(family, Position2D::new(1.5, 10.0));
            let m = exact_set(family, &s, 0.02);
            let want = -0.5 * (family.measurement_len() as f64) * (2.0 * PI * 0.02 * 0.02).ln();
            assert!((log_likelihood(&m, &layout(), &s).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn one_sigma_offset_costs_half() {
        let s = StateVector::classical(Position2D::new(1.5, 10.0));
        let m = exact_set(Family::DirectRange, &s, 0.05);
        let base = log_likelihood(&m, &layout(), &s).unwrap();
        let mut v = m.values().to_vec();
        v[1] += 0.05;
        let shifted = m.with_values(v).unwrap();
        assert!((base - log_likelihood(&shifted, &layout(), &s).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn likelihood_matches_joint_pdf() {
        let s = StateVector::classical(Position2D::new(-2.0, 7.0));
        let g = predict(Family::DirectBearing, &layout(), &s).unwrap();
        let sig = [0.01, 0.03];
        let noisy = vec![g[0] + 0.004, g[1] - 0.05];
        let m = MeasurementSet::new(Family::DirectBearing, noisy.clone(), sig.to_vec()).unwrap();
        let pdf: f64 = noisy
            .iter()
            .zip(&g)
            .zip(&sig)
            .map(|((m, g), s)| (-(m - g) * (m - g) / (2.0 * s * s)).exp() / (2.0 * PI * s * s).sqrt())
            .product();
        assert!((log_likelihood(&m, &layout(), &s).unwrap() - pdf.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_sigma_is_degenerate() {
        let s = StateVector::classical(Position2D::new(1.5, 10.0));
        let m = MeasurementSet::exact(Family::DirectRange, vec![10.0, 10.0]).unwrap();
        assert_eq!(log_likelihood(&m, &layout(), &s), Err(Error::DegenerateLikelihood));
        assert_eq!(score_residual(&m, &layout(), &s), Err(Error::DegenerateLikelihood));
    }

    #[test]
    fn score_vanishes_at_truth() {
        for family in Family::ALL {
            let s = state_for(family, Position2D::new(-1.0, 12.0));
            let m = exact_set(family, &s, 0.01);
            assert!(score_residual(&m, &layout(), &s).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn heading_residual_wraps() {
        // straight approach: alpha_v = pi, a measured value just past -pi is a small error
        let s = StateVector::running(Position2D::new(0.0, 10.0), Position2D::new(0.0, 9.0));
        let mut v = predict(Family::RunningRange, &layout(), &s).unwrap();
        v[2] = -PI + 1e-3;
        let m = MeasurementSet::new(Family::RunningRange, v, vec![0.05, 0.05, 1e-3, 0.01]).unwrap();
        let ll = log_likelihood(&m, &layout(), &s).unwrap();
        let at_truth = log_likelihood(&exact_set(Family::RunningRange, &s, 1.0).with_sigmas(vec![0.05, 0.05, 1e-3, 0.01]).unwrap(), &layout(), &s).unwrap();
        assert!((at_truth - ll - 0.5).abs() < 1e-9);
    }

    #[test]
    fn jacobian_reference_values() {
        let s = StateVector::classical(Position2D::new(1.5, 10.0));
        let j = measurement_jacobian(Family::DirectRange, &layout(), &s).unwrap();
        assert!((j[(0, 0)] - 0.14834).abs() < 5e-6);

        let s = StateVector::classical(Position2D::new(0.0, 6.0));
        let j = measurement_jacobian(Family::DirectRange, &layout(), &s).unwrap();
        assert_eq!(j[(0, 0)], 0.0);
        let j = measurement_jacobian(Family::DirectBearing, &layout(), &s).unwrap();
        assert_eq!(j[(0, 1)], 0.0);
    }

    #[test]
    fn jacobian_rejects_plane() {
        let s = StateVector::classical(Position2D::new(1.0, 0.0));
        assert!(matches!(
            measurement_jacobian(Family::DirectBearing, &layout(), &s),
            Err(Error::BehindReceiverPlane { .. })
        ));
        let s = StateVector::running(Position2D::new(1.0, 3.0), Position2D::new(1.0, 3.0));
        assert_eq!(measurement_jacobian(Family::RunningRange, &layout(), &s), Err(Error::DegenerateMotion));
    }

    #[test]
    fn fisher_scales_with_inverse_variance() {
        let s = StateVector::classical(Position2D::new(2.0, 9.0));
        let f1 = fisher_information(Family::DirectBearing, &layout(), &s, &[0.01, 0.02]).unwrap();
        let f2 = fisher_information(Family::DirectBearing, &layout(), &s, &[0.02, 0.04]).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((f1.matrix()[(r, c)] - 4.0 * f2.matrix()[(r, c)]).abs() <= 1e-12 * f1.matrix()[(r, c)].abs());
            }
        }
        let b1 = crlb(&f1);
        let b2 = crlb(&f2);
        for m in 0..2 {
            assert!((b2.bounds[m] / b1.bounds[m] - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fisher_matches_dense_product() {
        for family in Family::ALL {
            let s = state_for(family, Position2D::new(-3.0, 14.0));
            let sig: Vec<f64> = (0..family.measurement_len()).map(|h| 0.01 * (h + 1) as f64).collect();
            let f = fisher_information(family, &layout(), &s, &sig).unwrap();
            let j = measurement_jacobian(family, &layout(), &s).unwrap();
            let w = Matrix::diagonal(&sig.iter().map(|s| 1.0 / (s * s)).collect::<Vec<_>>());
            let dense = j.transpose().mul(&w).mul(&j);
            for r in 0..f.dim() {
                for c in 0..f.dim() {
                    assert!((f.matrix()[(r, c)] - dense[(r, c)]).abs() <= 1e-10 * dense.max_abs());
                }
            }
        }
    }

    #[test]
    fn crlb_of_diagonal() {
        let r = crlb(&FisherMatrix::new(Matrix::diagonal(&[4.0, 0.25])));
        assert!(r.feasible);
        assert_eq!(r.bounds, vec![0.25, 4.0]);
        assert_eq!(r.condition_number, 16.0);
    }

    #[test]
    fn crlb_flags_singular_information() {
        let r = crlb(&FisherMatrix::new(Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]])));
        assert!(!r.feasible);
        assert!(r.bounds.iter().all(|b| b.is_infinite()));
        let r = crlb(&FisherMatrix::new(Matrix::diagonal(&[1.0, 1e-13])));
        assert!(!r.feasible);
    }

    #[test]
    fn crlb_ignores_measurement_order() {
        let s = StateVector::running(Position2D::new(1.0, 8.0), Position2D::new(1.2, 7.7));
        let j = measurement_jacobian(Family::RunningRange, &layout(), &s).unwrap();
        let sig = [0.01, 0.02, 0.003, 0.05];
        let base = crlb(&fisher_from_jacobian(&j, &sig).unwrap());
        let perm = [2usize, 0, 3, 1];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&h| j.row(h).to_vec()).collect();
        let psig: Vec<f64> = perm.iter().map(|&h| sig[h]).collect();
        let shuffled = crlb(&fisher_from_jacobian(&Matrix::from_rows(&rows), &psig).unwrap());
        for (a, b) in base.bounds.iter().zip(&shuffled.bounds) {
            assert!((a - b).abs() <= 1e-9 * a);
        }
    }

    #[test]
    fn extra_measurement_never_loosens_bounds() {
        let l = layout();
        let s = StateVector::classical(Position2D::new(0.7, 11.0));
        let j = measurement_jacobian(Family::DirectBearing, &l, &s).unwrap();
        let base = crlb(&fisher_from_jacobian(&j, &[0.01, 0.01]).unwrap());
        // third receiver further along the bumper
        let third = bearing_row(Position2D::new(0.7, 11.0), Position2D::new(0.8, 0.0));
        let rows = vec![j.row(0).to_vec(), j.row(1).to_vec(), third.to_vec()];
        let more = crlb(&fisher_from_jacobian(&Matrix::from_rows(&rows), &[0.01, 0.01, 0.01]).unwrap());
        for (a, b) in base.bounds.iter().zip(&more.bounds) {
            assert!(b <= a);
        }
    }

    #[test]
    fn state_dimension_is_checked() {
        let s = StateVector::classical(Position2D::new(0.0, 5.0));
        assert!(matches!(
            measurement_jacobian(Family::RunningRange, &layout(), &s),
            Err(Error::DimensionMismatch { expected: 4, got: 2, .. })
        ));
    }
}
