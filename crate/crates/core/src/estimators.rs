//! Closed-form geometric position fixes.
//!
//! Each estimator is the exact functional inverse of its measurement model
//! (N_H = N_M), so under Gaussian measurement noise it returns the maximum
//! likelihood position for its measurement set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Family, MeasurementSet, Position2D, RelativeMotion, RxLayout, TrackSide};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Rays closer to parallel than this (rad, on |sin| or |dtheta|) are degenerate.
    pub degenerate_eps: f64,
    /// Cosine-rule arguments within this distance outside [-1, 1] are clamped.
    pub acos_tolerance: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            degenerate_eps: 1e-9,
            acos_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fix {
    Classical(Position2D),
    Running { t0: Position2D, t1: Position2D },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixResult {
    pub fix: Fix,
    pub family: Family,
    /// Nearness to degeneracy: sine of the angle subtended at the target
    /// (classical fixes) or at the `t0` vertex (running fix). Zero is degenerate.
    pub diagnostic: f64,
}

impl FixResult {
    /// Most recent position estimate (`t1` for running fixes).
    pub fn position(&self) -> Position2D {
        match self.fix {
            Fix::Classical(p) => p,
            Fix::Running { t1, .. } => t1,
        }
    }

    /// Estimated coordinates in state-vector order.
    pub fn coordinates(&self) -> Vec<f64> {
        match self.fix {
            Fix::Classical(p) => vec![p.x, p.y],
            Fix::Running { t0, t1 } => vec![t0.x, t0.y, t1.x, t1.y],
        }
    }
}

fn positive_baseline(l: f64) -> Result<()> {
    if l > 0.0 && l.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("baseline must be positive, got {l}")))
    }
}

fn ahead(p: Position2D) -> Result<Position2D> {
    if p.y > 0.0 {
        Ok(p)
    } else {
        Err(Error::BehindReceiverPlane { y: p.y })
    }
}

/// Triangulation from the two direct bearings to TX1 (law of sines).
pub fn classical_fix_direct_bearing(
    theta11: f64,
    theta21: f64,
    l: f64,
    cfg: &EstimatorConfig,
) -> Result<FixResult> {
    positive_baseline(l)?;
    let s = (theta11 - theta21).sin();
    if !(s.abs() > cfg.degenerate_eps) {
        return Err(Error::DegenerateGeometry("bearing rays are parallel"));
    }
    let cos11 = theta11.cos();
    let (sin21, cos21) = theta21.sin_cos();
    let x = l * (1.0 + sin21 * cos11 / s);
    let y = l * (cos21 * cos11 / s);
    Ok(FixResult {
        fix: Fix::Classical(ahead(Position2D::new(x, y))?),
        family: Family::DirectBearing,
        diagnostic: s.abs(),
    })
}

/// Trilateration from the two direct ranges to TX1.
pub fn classical_fix_direct_range(d11: f64, d21: f64, l: f64) -> Result<FixResult> {
    positive_baseline(l)?;
    for d in [d11, d21] {
        if !(d > 0.0) {
            return Err(Error::NonPositiveRange(d));
        }
    }
    let x = (d11 * d11 - d21 * d21 + l * l) / (2.0 * l);
    let residual = d11 * d11 - x * x;
    if residual < 0.0 {
        return Err(Error::NoIntersection { residual });
    }
    let y = residual.sqrt();
    let p = ahead(Position2D::new(x, y))?;
    Ok(FixResult {
        fix: Fix::Classical(p),
        family: Family::DirectRange,
        diagnostic: l * y / (d11 * d21),
    })
}

/// Single-receiver running fix from two consecutive RX1 ranges and the
/// target's relative motion between them.
///
/// The cosine rule gives the unsigned angle `phi` at the `t0` vertex between
/// the direction of travel and the direction back to RX1. `side` selects
/// which of the two mirror solutions is returned: the bearing from the
/// target to RX1 is `alpha_v + phi` when RX1 lies right of the track and
/// `alpha_v - phi` when it lies left.
pub fn running_fix_direct_range(
    d11_t0: f64,
    d11_t1: f64,
    motion: RelativeMotion,
    side: TrackSide,
    cfg: &EstimatorConfig,
) -> Result<FixResult> {
    for d in [d11_t0, d11_t1] {
        if !(d > 0.0) {
            return Err(Error::NonPositiveRange(d));
        }
    }
    let dv = motion.d_v;
    if !(dv > 0.0) {
        return Err(Error::DegenerateMotion);
    }
    let cosine = (dv * dv + d11_t0 * d11_t0 - d11_t1 * d11_t1) / (2.0 * dv * d11_t0);
    if !(cosine.abs() <= 1.0 + cfg.acos_tolerance) {
        return Err(Error::InconsistentRanges { cosine });
    }
    let cosine = cosine.clamp(-1.0, 1.0);
    let phi = cosine.acos();
    let to_rx = match side {
        TrackSide::Right => motion.alpha_v + phi,
        TrackSide::Left => motion.alpha_v - phi,
    };
    let (sb, cb) = to_rx.sin_cos();
    let t0 = Position2D::new(-d11_t0 * sb, -d11_t0 * cb);
    let (sa, ca) = motion.direction();
    let t1 = t0.offset(dv * sa, dv * ca);
    Ok(FixResult {
        fix: Fix::Running {
            t0: ahead(t0)?,
            t1: ahead(t1)?,
        },
        family: Family::RunningRange,
        diagnostic: (1.0 - cosine * cosine).sqrt(),
    })
}

/// Classical fix from the differential bearings of a TX pair assumed
/// parallel to the RX baseline, `L` apart.
///
/// With bearings growing toward `+x`, `S = (cot dtheta_2 - cot dtheta_1) / 2`
/// equals `x1 / y1`, so `x = S * y`. The estimate is exact for a parallel
/// pair and biased otherwise.
pub fn classical_fix_differential_bearing(
    dtheta_1: f64,
    dtheta_2: f64,
    l: f64,
    cfg: &EstimatorConfig,
) -> Result<FixResult> {
    positive_baseline(l)?;
    for dt in [dtheta_1, dtheta_2] {
        if !(dt.abs() > cfg.degenerate_eps) || !(dt.sin().abs() > cfg.degenerate_eps) {
            return Err(Error::CotangentSingularity(dt));
        }
    }
    let cot1 = dtheta_1.cos() / dtheta_1.sin();
    let cot2 = dtheta_2.cos() / dtheta_2.sin();
    let s = 0.5 * (cot2 - cot1);
    let y = l / (1.0 + s * s) * (cot2 - s);
    let x = s * y;
    Ok(FixResult {
        fix: Fix::Classical(ahead(Position2D::new(x, y))?),
        family: Family::DifferentialBearing,
        diagnostic: dtheta_1.sin().abs().min(dtheta_2.sin().abs()),
    })
}

/// The implemented estimators, selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DirectBearing,
    DirectRange,
    DifferentialBearing,
    RunningRange,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::DirectBearing,
        Method::DirectRange,
        Method::DifferentialBearing,
        Method::RunningRange,
    ];

    pub fn family(self) -> Family {
        match self {
            Method::DirectBearing => Family::DirectBearing,
            Method::DirectRange => Family::DirectRange,
            Method::DifferentialBearing => Family::DifferentialBearing,
            Method::RunningRange => Family::RunningRange,
        }
    }

    pub fn name(self) -> &'static str {
        self.family().name()
    }

    /// Runs the estimator on a measurement set of the matching family.
    /// `side` is only consulted by the running fix.
    pub fn estimate(
        self,
        meas: &MeasurementSet,
        layout: &RxLayout,
        side: TrackSide,
        cfg: &EstimatorConfig,
    ) -> Result<FixResult> {
        if meas.family() != self.family() {
            return Err(Error::InvalidParameter(format!(
                "{} estimator cannot consume {} measurements",
                self,
                meas.family()
            )));
        }
        let v = meas.values();
        let l = layout.baseline();
        match self {
            Method::DirectBearing => classical_fix_direct_bearing(v[0], v[1], l, cfg),
            Method::DirectRange => classical_fix_direct_range(v[0], v[1], l),
            Method::DifferentialBearing => classical_fix_differential_bearing(v[0], v[1], l, cfg),
            Method::RunningRange => {
                let motion = RelativeMotion {
                    alpha_v: v[2],
                    d_v: v[3],
                };
                running_fix_direct_range(v[0], v[1], motion, side, cfg)
            }
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{model_values, relative_motion, TargetGeometry};
    use std::f64::consts::FRAC_PI_4;

    const L: f64 = 1.6;

    fn cfg() -> EstimatorConfig {
        EstimatorConfig::default()
    }

    fn close(p: Position2D, x: f64, y: f64, tol: f64) -> bool {
        (p.x - x).abs() < tol && (p.y - y).abs() < tol
    }

    #[test]
    fn direct_bearing_examples() {
        let r = classical_fix_direct_bearing(0.0, -FRAC_PI_4, L, &cfg()).unwrap();
        assert!(close(r.position(), 0.0, L, 1e-12));
        let r = classical_fix_direct_bearing(FRAC_PI_4, -FRAC_PI_4, L, &cfg()).unwrap();
        assert!(close(r.position(), L / 2.0, L / 2.0, 1e-12));
        assert!((r.diagnostic - 1.0).abs() < 1e-15);
        // rounded inputs: the round trip is only as good as six decimals
        let r = classical_fix_direct_bearing(0.148890, -0.0100, L, &cfg()).unwrap();
        assert!(close(r.position(), 1.5, 10.0, 2e-3));
    }

    #[test]
    fn direct_bearing_errors() {
        assert_eq!(
            classical_fix_direct_bearing(0.3, 0.3, L, &cfg()),
            Err(Error::DegenerateGeometry("bearing rays are parallel"))
        );
        // rays crossing behind the receivers
        assert!(matches!(
            classical_fix_direct_bearing(-0.2, 0.2, L, &cfg()),
            Err(Error::BehindReceiverPlane { .. })
        ));
    }

    #[test]
    fn direct_range_examples() {
        let r = classical_fix_direct_range(L, L * 2f64.sqrt(), L).unwrap();
        assert!(close(r.position(), 0.0, L, 1e-12));
        let r = classical_fix_direct_range(7.0, 7.0, L).unwrap();
        assert!((r.position().x - L / 2.0).abs() < 1e-15);
        let r = classical_fix_direct_range(10.1119, 10.0005, L).unwrap();
        assert!(close(r.position(), 1.5, 10.0, 2e-3));
    }

    #[test]
    fn direct_range_errors() {
        assert!(matches!(classical_fix_direct_range(1.0, 4.0, L), Err(Error::NoIntersection { .. })));
        assert_eq!(classical_fix_direct_range(0.0, 4.0, L), Err(Error::NonPositiveRange(0.0)));
        assert_eq!(classical_fix_direct_range(3.0, -1.0, L), Err(Error::NonPositiveRange(-1.0)));
    }

    #[test]
    fn running_fix_pure_approach() {
        let m = relative_motion(Position2D::new(0.0, 10.0), Position2D::new(0.0, 9.0)).unwrap();
        let r = running_fix_direct_range(10.0, 9.0, m, TrackSide::Right, &cfg()).unwrap();
        match r.fix {
            Fix::Running { t0, t1 } => {
                assert!(close(t0, 0.0, 10.0, 1e-12));
                assert!(close(t1, 0.0, 9.0, 1e-12));
            }
            _ => panic!("expected running fix"),
        }
        assert_eq!(r.diagnostic, 0.0);
    }

    #[test]
    fn running_fix_offset_target() {
        let (p0, p1) = (Position2D::new(1.5, 10.0), Position2D::new(1.5, 9.0));
        let m = relative_motion(p0, p1).unwrap();
        let r = running_fix_direct_range(p0.distance(Position2D::default()), p1.distance(Position2D::default()), m, TrackSide::of(p0, p1), &cfg()).unwrap();
        let Fix::Running { t0, t1 } = r.fix else { panic!() };
        assert!(close(t0, 1.5, 10.0, 1e-12));
        assert!(close(t1, 1.5, 9.0, 1e-12));

        // four-decimal ranges; phi is ill-conditioned near collinear motion
        let r = running_fix_direct_range(10.1119, 9.1241, m, TrackSide::Right, &cfg()).unwrap();
        let Fix::Running { t0, t1 } = r.fix else { panic!() };
        assert!(close(t0, 1.5, 10.0, 5e-3) && close(t1, 1.5, 9.0, 5e-3), "{t0:?} {t1:?}");

        // the other branch is the mirror image about the track
        let r = running_fix_direct_range(10.1119, 9.1241, m, TrackSide::Left, &cfg()).unwrap();
        assert!(close(r.position(), -1.5, 9.0, 5e-3));
    }

    #[test]
    fn running_fix_errors() {
        let m = RelativeMotion { alpha_v: std::f64::consts::PI, d_v: 1.0 };
        assert!(matches!(
            running_fix_direct_range(9.0, 10.5, m, TrackSide::Right, &cfg()),
            Err(Error::InconsistentRanges { .. })
        ));
        let still = RelativeMotion { alpha_v: 0.0, d_v: 0.0 };
        assert_eq!(
            running_fix_direct_range(9.0, 9.0, still, TrackSide::Right, &cfg()),
            Err(Error::DegenerateMotion)
        );
        // within tolerance of the collinear boundary: clamped, not rejected
        let r = running_fix_direct_range(10.0, 9.0 - 1e-12, m, TrackSide::Right, &cfg()).unwrap();
        assert!(close(r.position(), 0.0, 9.0, 1e-5));
    }

    #[test]
    fn differential_bearing_examples() {
        let l = RxLayout::new(L).unwrap();
        let tx1 = Position2D::new(1.5, 10.0);
        let v = model_values(&l, Family::DifferentialBearing, &TargetGeometry::at(tx1).with_tx2(Position2D::new(3.1, 10.0))).unwrap();
        let r = classical_fix_differential_bearing(v[0], v[1], L, &cfg()).unwrap();
        assert!(close(r.position(), 1.5, 10.0, 1e-12));

        let r = classical_fix_differential_bearing(0.2, 0.2, L, &cfg()).unwrap();
        assert_eq!(r.position().x, 0.0);

        assert_eq!(
            classical_fix_differential_bearing(0.0, 0.0, L, &cfg()),
            Err(Error::CotangentSingularity(0.0))
        );
    }

    #[test]
    fn dispatch_rejects_family_mismatch() {
        let l = RxLayout::new(L).unwrap();
        let m = MeasurementSet::exact(Family::DirectRange, vec![10.0, 10.0]).unwrap();
        assert!(Method::DirectBearing.estimate(&m, &l, TrackSide::Right, &cfg()).is_err());
        assert!(Method::DirectRange.estimate(&m, &l, TrackSide::Right, &cfg()).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn fix(method: Method, l: f64, p: Position2D, q: Position2D) -> FixResult {
            let layout = RxLayout::new(l).unwrap();
            let target = TargetGeometry::at(p).moving_to(q);
            let m = crate::geometry::forward_model(&layout, method.family(), &target).unwrap();
            method.estimate(&m, &layout, TrackSide::of(p, q), &cfg()).unwrap()
        }

        proptest! {
            #[test]
            fn noise_free_round_trip(
                x in -5.0f64..5.0, y in 2.0f64..30.0, l in 1.2f64..2.0,
                dx in -1.0f64..1.0, dy in -1.0f64..-0.05,
            ) {
                let p = Position2D::new(x, y);
                let q = p.offset(dx, dy);
                for method in Method::ALL {
                    let r = fix(method, l, p, q);
                    let truth = if method == Method::RunningRange { vec![p.x, p.y, q.x, q.y] } else { vec![p.x, p.y] };
                    for (a, b) in r.coordinates().iter().zip(&truth) {
                        prop_assert!((a - b).abs() < 1e-9, "{method}: {a} vs {b}");
                    }
                }
            }

            #[test]
            fn baseline_scaling(x in -5.0f64..5.0, y in 2.0f64..30.0, k in 0.2f64..5.0) {
                let p = Position2D::new(x, y);
                for method in [Method::DirectBearing, Method::DirectRange] {
                    let base = fix(method, 1.6, p, p).position();
                    let scaled = fix(method, 1.6 * k, p.scale(k), p.scale(k)).position();
                    prop_assert!((scaled.x - k * base.x).abs() < 1e-9 * k.max(1.0) * 30.0);
                    prop_assert!((scaled.y - k * base.y).abs() < 1e-9 * k.max(1.0) * 30.0);
                }
            }
        }
    }
}
