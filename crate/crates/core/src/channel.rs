//! Line-of-sight optical link budget and the mapping from link SNR to
//! measurement noise sigmas.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Family, MeasurementSet, Position2D, RxLayout, TargetGeometry};
use crate::statistics::MotionNoise;

const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// How measurement sigmas are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SigmaMode {
    /// Constant sigmas regardless of geometry.
    Fixed {
        bearing_deg: f64,
        /// m
        range: f64,
        diff_bearing_deg: f64,
        /// m
        diff_range: f64,
    },
    /// `sigma_theta = k_bearing / sqrt(snr * N)`,
    /// `sigma_d = k_range * c / (2 pi f_c sqrt(snr * N))`.
    ChannelDerived { k_bearing: f64, k_range: f64 },
}

impl SigmaMode {
    pub fn fixed(bearing_deg: f64, range: f64) -> Self {
        SigmaMode::Fixed {
            bearing_deg,
            range,
            diff_bearing_deg: bearing_deg,
            diff_range: range,
        }
    }
}

impl Default for SigmaMode {
    fn default() -> Self {
        SigmaMode::ChannelDerived {
            k_bearing: 1.0,
            k_range: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    /// Optical transmit power (W).
    pub tx_power: f64,
    pub lambertian_order: f64,
    pub rx_fov_half_angle_deg: f64,
    /// Single-receiver aperture (m^2).
    pub rx_aperture_area: f64,
    /// A/W
    pub responsivity: f64,
    /// Hz
    pub noise_bandwidth: f64,
    /// Ambient-light photocurrent (A).
    pub background_current: f64,
    /// A^2/Hz
    pub thermal_noise_density: f64,
    /// Ranging tone frequency (Hz).
    pub carrier_frequency: f64,
    /// ADC samples per position fix (10 MSPS at 100 Hz).
    pub samples_per_fix: f64,
    /// Aperture multiplier for range links, which sum all quadrant signals.
    pub range_aperture_factor: f64,
    pub sigma: SigmaMode,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            tx_power: 2.0,
            lambertian_order: 11.0,
            rx_fov_half_angle_deg: 60.0,
            rx_aperture_area: 1e-4,
            responsivity: 0.5,
            noise_bandwidth: 1e5,
            background_current: 100e-6,
            thermal_noise_density: 1e-22,
            carrier_frequency: 1e6,
            samples_per_fix: 1e5,
            range_aperture_factor: 4.0,
            sigma: SigmaMode::default(),
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tx_power", self.tx_power),
            ("rx_fov_half_angle_deg", self.rx_fov_half_angle_deg),
            ("rx_aperture_area", self.rx_aperture_area),
            ("responsivity", self.responsivity),
            ("noise_bandwidth", self.noise_bandwidth),
            ("background_current", self.background_current),
            ("thermal_noise_density", self.thermal_noise_density),
            ("carrier_frequency", self.carrier_frequency),
            ("samples_per_fix", self.samples_per_fix),
            ("range_aperture_factor", self.range_aperture_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("channel.{name} must be positive, got {v}")));
            }
        }
        if !(self.lambertian_order >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "channel.lambertian_order must be >= 1, got {}",
                self.lambertian_order
            )));
        }
        if self.rx_fov_half_angle_deg > 90.0 {
            return Err(Error::InvalidParameter("channel.rx_fov_half_angle_deg must be <= 90".into()));
        }
        let sigmas = match self.sigma {
            SigmaMode::Fixed {
                bearing_deg,
                range,
                diff_bearing_deg,
                diff_range,
            } => vec![bearing_deg, range, diff_bearing_deg, diff_range],
            SigmaMode::ChannelDerived { k_bearing, k_range } => vec![k_bearing, k_range],
        };
        if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("sigma constants must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn fov_half_angle(&self) -> f64 {
        self.rx_fov_half_angle_deg.to_radians()
    }

    /// Parameters for a range link (summed quadrant aperture).
    pub fn range_link(&self) -> Self {
        Self {
            rx_aperture_area: self.rx_aperture_area * self.range_aperture_factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// W
    pub received_power: f64,
    /// Electrical SNR.
    pub snr: f64,
    pub in_fov: bool,
}

/// Lambertian LoS link from a transmitter facing backward along its own
/// heading (`tx_heading` follows the bearing convention; zero means the
/// target points the same way as the ego) to a forward-facing receiver.
pub fn link_budget(params: &ChannelParams, rx: Position2D, tx: Position2D, tx_heading: f64) -> Result<LinkBudget> {
    let (dx, dy) = (tx.x - rx.x, tx.y - rx.y);
    let d = dx.hypot(dy);
    if !(d > 0.0) {
        return Err(Error::DegenerateGeometry("transmitter coincides with receiver"));
    }
    let cos_incidence = dy / d;
    let (sh, ch) = tx_heading.sin_cos();
    let cos_irradiance = (dx * sh + dy * ch) / d;
    let in_fov = cos_incidence > 0.0 && cos_incidence.min(1.0).acos() <= params.fov_half_angle() && cos_irradiance > 0.0;
    if !in_fov {
        return Ok(LinkBudget {
            received_power: 0.0,
            snr: 0.0,
            in_fov: false,
        });
    }
    let m = params.lambertian_order;
    let received_power = params.tx_power * (m + 1.0) / (2.0 * PI) * cos_irradiance.powf(m)
        * params.rx_aperture_area
        / (d * d)
        * cos_incidence;
    let current = params.responsivity * received_power;
    let shot = 2.0 * ELECTRON_CHARGE * (current + params.background_current) * params.noise_bandwidth;
    let thermal = params.thermal_noise_density * params.noise_bandwidth;
    Ok(LinkBudget {
        received_power,
        snr: current * current / (shot + thermal),
        in_fov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementKind {
    Bearing,
    Range,
}

/// Noise sigma of one direct measurement over `budget`.
pub fn measurement_sigma(params: &ChannelParams, budget: &LinkBudget, kind: MeasurementKind) -> Result<f64> {
    if !budget.in_fov || !(budget.snr > 0.0) {
        return Err(Error::LinkInfeasible);
    }
    Ok(match (params.sigma, kind) {
        (SigmaMode::Fixed { bearing_deg, .. }, MeasurementKind::Bearing) => bearing_deg.to_radians(),
        (SigmaMode::Fixed { range, .. }, MeasurementKind::Range) => range,
        (SigmaMode::ChannelDerived { k_bearing, .. }, MeasurementKind::Bearing) => {
            k_bearing / (budget.snr * params.samples_per_fix).sqrt()
        }
        (SigmaMode::ChannelDerived { k_range, .. }, MeasurementKind::Range) => {
            k_range * SPEED_OF_LIGHT / (2.0 * PI * params.carrier_frequency * (budget.snr * params.samples_per_fix).sqrt())
        }
    })
}

/// Sigmas for a whole measurement family.
///
/// `budgets` lists the optical links in the order returned by
/// [`family_links`]. Range families expect budgets computed with
/// [`ChannelParams::range_link`]. In channel-derived mode a differential
/// element's sigma is the quadrature sum of its two links' sigmas; in fixed
/// mode the configured differential sigmas are used directly.
pub fn measurement_sigmas(
    params: &ChannelParams,
    budgets: &[LinkBudget],
    family: Family,
    motion: &MotionNoise,
) -> Result<Vec<f64>> {
    let expected = family_link_count(family);
    if budgets.len() != expected {
        return Err(Error::InvalidParameter(format!(
            "{family} needs {expected} link budgets, got {}",
            budgets.len()
        )));
    }
    let kind = match family {
        Family::DirectBearing | Family::DifferentialBearing => MeasurementKind::Bearing,
        _ => MeasurementKind::Range,
    };
    let direct: Vec<f64> = budgets
        .iter()
        .map(|b| measurement_sigma(params, b, kind))
        .collect::<Result<_>>()?;
    Ok(match family {
        Family::DirectBearing | Family::DirectRange => direct,
        Family::DifferentialBearing | Family::DifferentialRange => match params.sigma {
            SigmaMode::Fixed {
                diff_bearing_deg,
                diff_range,
                ..
            } => {
                let s = if kind == MeasurementKind::Bearing {
                    diff_bearing_deg.to_radians()
                } else {
                    diff_range
                };
                vec![s, s]
            }
            SigmaMode::ChannelDerived { .. } => vec![direct[0].hypot(direct[1]), direct[2].hypot(direct[3])],
        },
        Family::RunningRange => vec![direct[0], direct[1], motion.heading_sigma(), motion.distance_sigma],
    })
}

fn family_link_count(family: Family) -> usize {
    match family {
        Family::DifferentialBearing | Family::DifferentialRange => 4,
        _ => 2,
    }
}

/// `(receiver, transmitter)` pairs a family observes, in sigma order.
pub fn family_links(layout: &RxLayout, family: Family, target: &TargetGeometry) -> Result<Vec<(Position2D, Position2D)>> {
    let [rx1, rx2] = layout.anchors();
    let tx = target.tx;
    Ok(match family {
        Family::DirectBearing | Family::DirectRange => vec![(rx1, tx), (rx2, tx)],
        Family::DifferentialBearing | Family::DifferentialRange => {
            let tx2 = target.tx2.unwrap_or_else(|| layout.parallel_partner(tx));
            vec![(rx1, tx), (rx2, tx), (rx1, tx2), (rx2, tx2)]
        }
        Family::RunningRange => {
            let next = target.next.ok_or(Error::MissingGeometry(family))?;
            vec![(rx1, tx), (rx1, next)]
        }
    })
}

/// Link budgets and sigmas for `family` observing `target`, whose lights
/// all face backward along `tx_heading`. Fails with
/// [`Error::LinkInfeasible`] when any link leaves the field of view.
pub fn family_sigmas(
    params: &ChannelParams,
    layout: &RxLayout,
    family: Family,
    target: &TargetGeometry,
    tx_heading: f64,
    motion: &MotionNoise,
) -> Result<Vec<f64>> {
    let link_params = match family {
        Family::DirectRange | Family::DifferentialRange | Family::RunningRange => params.range_link(),
        _ => *params,
    };
    let budgets = family_links(layout, family, target)?
        .into_iter()
        .map(|(rx, tx)| link_budget(&link_params, rx, tx, tx_heading))
        .collect::<Result<Vec<_>>>()?;
    measurement_sigmas(&link_params, &budgets, family, motion)
}

/// Adds independent zero-mean Gaussian noise to each element.
pub fn sample_measurements_with<R: Rng + ?Sized>(truth: &MeasurementSet, sigmas: &[f64], rng: &mut R) -> Result<MeasurementSet> {
    if sigmas.len() != truth.values().len() {
        return Err(Error::DimensionMismatch {
            family: truth.family(),
            expected: truth.values().len(),
            got: sigmas.len(),
        });
    }
    let values = truth
        .values()
        .iter()
        .zip(sigmas)
        .map(|(v, s)| {
            let z: f64 = rng.sample(StandardNormal);
            if *s == 0.0 {
                *v
            } else {
                v + s * z
            }
        })
        .collect();
    MeasurementSet::new(truth.family(), values, sigmas.to_vec())
}

/// Seeded variant of [`sample_measurements_with`].
pub fn sample_measurements(truth: &MeasurementSet, sigmas: &[f64], seed: u64) -> Result<MeasurementSet> {
    sample_measurements_with(truth, sigmas, &mut ChaCha8Rng::seed_from_u64(seed))
}
