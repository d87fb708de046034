//! Run configuration: TOML or JSON on disk, every field defaulted.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, Method};
use crate::geometry::{Family, RxLayout};
use crate::simulation::{GridSpec, MonteCarloSetup, ScenarioParams};
use crate::statistics::MotionNoise;

pub const CONFIG_ENV: &str = "VLP_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: usize,
    /// 0 lets rayon choose.
    pub workers: usize,
    pub output_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub methods: Vec<Method>,
    pub map_families: Vec<Family>,
    pub layout: RxLayout,
    pub estimator: EstimatorConfig,
    pub motion_noise: MotionNoise,
    pub scenario: ScenarioParams,
    pub grid: GridSpec,
    pub channel: ChannelParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            iterations: 3000,
            workers: 0,
            output_dir: PathBuf::from("vlp-out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Svg],
            methods: Method::ALL.to_vec(),
            map_families: vec![
                Family::DirectBearing,
                Family::DirectRange,
                Family::DifferentialBearing,
                Family::DifferentialRange,
            ],
            layout: RxLayout::default(),
            estimator: EstimatorConfig::default(),
            motion_noise: MotionNoise::default(),
            scenario: ScenarioParams::default(),
            grid: GridSpec::default(),
            channel: ChannelParams::default(),
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
        if is_json(path) {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    /// Explicit path first, then `$VLP_CONFIG`, then defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable in TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always representable in JSON")
    }

    pub fn validate(&self) -> Result<()> {
        RxLayout::new(self.layout.inter_rx_distance)?;
        self.channel.validate()?;
        self.grid.validate()?;
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("methods must not be empty".into()));
        }
        if self.map_families.contains(&Family::RunningRange) {
            return Err(Error::InvalidParameter("map_families cannot include running-range".into()));
        }
        let m = &self.motion_noise;
        if !(m.heading_sigma_deg >= 0.0 && m.distance_sigma >= 0.0) {
            return Err(Error::InvalidParameter("motion noise sigmas must be >= 0".into()));
        }
        let s = &self.scenario;
        if !(s.fix_rate > 0.0 && s.duration >= 0.0) {
            return Err(Error::InvalidParameter("scenario needs fix_rate > 0 and duration >= 0".into()));
        }
        Ok(())
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }

    pub fn monte_carlo(&self) -> MonteCarloSetup {
        MonteCarloSetup {
            layout: self.layout,
            channel: self.channel,
            motion: self.motion_noise,
            estimator: self.estimator,
            methods: self.methods.clone(),
            iterations: self.iterations,
            seed: self.seed,
            workers: self.workers,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SigmaMode;

    #[test]
    fn toml_round_trip_is_lossless() {
        let mut cfg = RunConfig::default();
        cfg.channel.sigma = SigmaMode::fixed(0.3, 0.07);
        cfg.scenario.tx_separation = Some(1.55);
        cfg.methods = vec![Method::RunningRange, Method::DirectBearing];
        cfg.motion_noise.heading_sigma_deg = 0.1 + 0.2;
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("seed = 11\n[layout]\ninter_rx_distance = 1.8\n").unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.layout.baseline(), 1.8);
        assert_eq!(cfg.iterations, 3000);
        assert_eq!(cfg.channel, ChannelParams::default());
    }

    #[test]
    fn fixed_sigma_table() {
        let text = "[channel.sigma]\nmode = \"fixed\"\nbearing_deg = 0.5\nrange = 0.05\ndiff_bearing_deg = 0.7\ndiff_range = 0.07\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        assert!(matches!(cfg.channel.sigma, SigmaMode::Fixed { bearing_deg, .. } if bearing_deg == 0.5));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_toml("sede = 1").is_err());
        assert!(RunConfig::from_toml("iterations = 0").is_err());
        assert!(RunConfig::from_toml("[layout]\ninter_rx_distance = -1.0").is_err());
        assert!(RunConfig::from_toml("map_families = [\"running-range\"]").is_err());
        assert!(RunConfig::from_toml("methods = [\"telepathy\"]").is_err());
    }

    #[test]
    fn load_dispatches_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("c.json");
        fs::write(&j, r#"{"seed": 3}"#).unwrap();
        assert_eq!(RunConfig::load(&j).unwrap().seed, 3);
        let t = dir.path().join("c.toml");
        fs::write(&t, "seed = 4").unwrap();
        assert_eq!(RunConfig::load(&t).unwrap().seed, 4);
        assert!(RunConfig::load(&dir.path().join("missing.toml")).is_err());
    }
}
