//! Ego-frame geometry and the noise-free measurement model.
//!
//! RX1 sits at the origin and RX2 at `(L, 0)`. `x` is lateral (positive
//! toward RX2), `y` is longitudinal (positive ahead of the ego vehicle).
//! Bearings are measured from the `+y` axis and grow toward `+x`, so
//! `theta = atan2(x, y)`. Relative headings use the same convention.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position2D {
    /// Lateral coordinate (m).
    pub x: f64,
    /// Longitudinal coordinate (m).
    pub y: f64,
}

impl Position2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    pub fn distance(self, other: Position2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing of `self` seen from `anchor`.
    pub fn bearing_from(self, anchor: Position2D) -> f64 {
        (self.x - anchor.x).atan2(self.y - anchor.y)
    }

    fn ensure_ahead(self) -> Result<Self> {
        if self.y > 0.0 {
            Ok(self)
        } else {
            Err(Error::BehindReceiverPlane { y: self.y })
        }
    }
}

/// Two receivers on the ego lateral axis, `inter_rx_distance` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RxLayout {
    pub inter_rx_distance: f64,
}

impl Default for RxLayout {
    fn default() -> Self {
        Self {
            inter_rx_distance: 1.6,
        }
    }
}

impl RxLayout {
    pub fn new(inter_rx_distance: f64) -> Result<Self> {
        if inter_rx_distance > 0.0 && inter_rx_distance.is_finite() {
            Ok(Self { inter_rx_distance })
        } else {
            Err(Error::InvalidParameter(format!(
                "inter-RX distance must be positive, got {inter_rx_distance}"
            )))
        }
    }

    pub fn baseline(&self) -> f64 {
        self.inter_rx_distance
    }

    pub fn rx1(&self) -> Position2D {
        Position2D::new(0.0, 0.0)
    }

    pub fn rx2(&self) -> Position2D {
        Position2D::new(self.inter_rx_distance, 0.0)
    }

    pub fn anchors(&self) -> [Position2D; 2] {
        [self.rx1(), self.rx2()]
    }

    /// Second tail light of a target parallel to the ego vehicle.
    pub fn parallel_partner(&self, tx1: Position2D) -> Position2D {
        tx1.offset(self.inter_rx_distance, 0.0)
    }
}

/// Measurement families. Each family fixes the number and meaning of the
/// measured elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `[theta11, theta21]`
    DirectBearing,
    /// `[d11, d21]`
    DirectRange,
    /// `[dtheta12/1, dtheta12/2]`
    DifferentialBearing,
    /// `[dd12/1, dd12/2]`
    DifferentialRange,
    /// `[d11(t0), d11(t1), alpha_v, d_v]`
    RunningRange,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::DirectBearing,
        Family::DirectRange,
        Family::DifferentialBearing,
        Family::DifferentialRange,
        Family::RunningRange,
    ];

    /// Number of measured elements (N_H).
    pub fn measurement_len(self) -> usize {
        match self {
            Family::RunningRange => 4,
            _ => 2,
        }
    }

    /// Number of estimated coordinates (N_M).
    pub fn state_len(self) -> usize {
        self.measurement_len()
    }

    /// Whether element `h` is an angle (residuals wrap at +-pi).
    pub fn is_angle(self, h: usize) -> bool {
        match self {
            Family::DirectBearing | Family::DifferentialBearing => true,
            Family::RunningRange => h == 2,
            _ => false,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::DirectBearing => "direct-bearing",
            Family::DirectRange => "direct-range",
            Family::DifferentialBearing => "differential-bearing",
            Family::DifferentialRange => "differential-range",
            Family::RunningRange => "running-range",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown family '{s}'")))
    }
}

/// Measured values of one family with their per-element noise sigmas.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    family: Family,
    values: Vec<f64>,
    sigmas: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(family: Family, values: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        let expected = family.measurement_len();
        for got in [values.len(), sigmas.len()] {
            if got != expected {
                return Err(Error::DimensionMismatch {
                    family,
                    expected,
                    got,
                });
            }
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative sigma {s}")));
        }
        Ok(Self {
            family,
            values,
            sigmas,
        })
    }

    /// Noise-free set (all sigmas zero).
    pub fn exact(family: Family, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(family, values, vec![0.0; n])
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn with_sigmas(mut self, sigmas: Vec<f64>) -> Result<Self> {
        let fresh = Self::new(self.family, std::mem::take(&mut self.values), sigmas)?;
        Ok(fresh)
    }

    pub fn with_values(self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.family, values, self.sigmas)
    }
}

/// Relative heading and travelled distance of the target between two
/// epochs. `alpha_v` follows the bearing convention: `atan2(dx, dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeMotion {
    pub alpha_v: f64,
    pub d_v: f64,
}

impl RelativeMotion {
    pub fn new(alpha_v: f64, d_v: f64) -> Result<Self> {
        if d_v > 0.0 {
            Ok(Self { alpha_v, d_v })
        } else if d_v == 0.0 {
            Err(Error::DegenerateMotion)
        } else {
            Err(Error::InvalidParameter(format!(
                "travelled distance must be nonnegative, got {d_v}"
            )))
        }
    }

    /// Unit displacement vector `(sin alpha, cos alpha)`.
    pub fn direction(&self) -> (f64, f64) {
        self.alpha_v.sin_cos()
    }
}

pub fn relative_motion(p_t0: Position2D, p_t1: Position2D) -> Result<RelativeMotion> {
    let dx = p_t1.x - p_t0.x;
    let dy = p_t1.y - p_t0.y;
    let d_v = dx.hypot(dy);
    if d_v == 0.0 {
        return Err(Error::DegenerateMotion);
    }
    Ok(RelativeMotion {
        alpha_v: dx.atan2(dy),
        d_v,
    })
}

/// Side of the target's track on which the ego receiver lies, looking
/// along the direction of travel. A single range-only receiver cannot
/// tell the two mirror solutions of the running fix apart, so the side
/// is a discrete prior (lane association, previous fix, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackSide {
    Left,
    #[default]
    Right,
}

impl TrackSide {
    /// Side of RX1 (the origin) relative to the track `p_t0 -> p_t1`.
    /// Collinear tracks report `Right`; both branches coincide there.
    pub fn of(p_t0: Position2D, p_t1: Position2D) -> Self {
        let (ux, uy) = (p_t1.x - p_t0.x, p_t1.y - p_t0.y);
        // cross(u, origin - p_t0) in a right-handed x/y frame
        let cross = ux * (-p_t0.y) - uy * (-p_t0.x);
        if cross > 0.0 {
            TrackSide::Left
        } else {
            TrackSide::Right
        }
    }
}

impl FromStr for TrackSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(TrackSide::Left),
            "right" => Ok(TrackSide::Right),
            _ => Err(Error::InvalidParameter(format!("unknown track side '{s}'"))),
        }
    }
}

/// Transmitter geometry behind one measurement set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetGeometry {
    /// TX1, or TX1 at `t0` for running fixes.
    pub tx: Position2D,
    /// TX2 for differential families; defaults to the parallel partner.
    pub tx2: Option<Position2D>,
    /// TX1 at `t1` for running fixes.
    pub next: Option<Position2D>,
}

impl TargetGeometry {
    pub fn at(tx: Position2D) -> Self {
        Self {
            tx,
            tx2: None,
            next: None,
        }
    }

    pub fn with_tx2(mut self, tx2: Position2D) -> Self {
        self.tx2 = Some(tx2);
        self
    }

    pub fn moving_to(mut self, next: Position2D) -> Self {
        self.next = Some(next);
        self
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Noise-free measurement values for a family.
pub fn model_values(layout: &RxLayout, family: Family, target: &TargetGeometry) -> Result<Vec<f64>> {
    let [rx1, rx2] = layout.anchors();
    let tx = target.tx.ensure_ahead()?;
    let values = match family {
        Family::DirectBearing => vec![tx.bearing_from(rx1), tx.bearing_from(rx2)],
        Family::DirectRange => vec![tx.distance(rx1), tx.distance(rx2)],
        Family::DifferentialBearing => {
            let tx2 = target
                .tx2
                .unwrap_or_else(|| layout.parallel_partner(tx))
                .ensure_ahead()?;
            vec![
                tx.bearing_from(rx1) - tx.bearing_from(rx2),
                tx2.bearing_from(rx1) - tx2.bearing_from(rx2),
            ]
        }
        Family::DifferentialRange => {
            let tx2 = target
                .tx2
                .unwrap_or_else(|| layout.parallel_partner(tx))
                .ensure_ahead()?;
            vec![
                tx.distance(rx1) - tx.distance(rx2),
                tx2.distance(rx1) - tx2.distance(rx2),
            ]
        }
        Family::RunningRange => {
            let next = target
                .next
                .ok_or(Error::MissingGeometry(family))?
                .ensure_ahead()?;
            let motion = relative_motion(tx, next)?;
            vec![tx.distance(rx1), next.distance(rx1), motion.alpha_v, motion.d_v]
        }
    };
    Ok(values)
}

/// Noise-free measurement set (all sigmas zero).
pub fn forward_model(layout: &RxLayout, family: Family, target: &TargetGeometry) -> Result<MeasurementSet> {
    MeasurementSet::exact(family, model_values(layout, family, target)?)
}
