//! Lane-change Monte Carlo comparison of the estimators and CRLB error maps
//! over a road grid.
//!
//! Both are parallel over independent units of work (waypoints, grid rows).
//! Every Monte Carlo draw comes from its own ChaCha stream keyed by
//! `(seed ^ iteration, waypoint, method)`, and results are reduced in index
//! order, so outputs do not depend on the worker count.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{family_sigmas, sample_measurements_with, ChannelParams};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, Method};
use crate::geometry::{forward_model, Family, Position2D, RxLayout, TargetGeometry, TrackSide};
use crate::statistics::{crlb, fisher_information, MotionNoise, StateVector};

/// Lane change of the target in the ego frame. Defaults are illustrative:
/// the target starts one lane to the left, 20 m ahead, and cuts into the
/// ego lane over 10 s while closing at 1.5 m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub start_x: f64,
    pub start_y: f64,
    pub lateral_offset: f64,
    /// Longitudinal closing speed (m/s), positive when approaching.
    pub closing_speed: f64,
    /// Absolute ego speed (m/s); only sets the target body yaw.
    pub ego_speed: f64,
    /// s
    pub duration: f64,
    /// Hz
    pub fix_rate: f64,
    /// Tail-light separation on the target; `None` means equal to the RX baseline.
    pub tx_separation: Option<f64>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            start_x: -3.5,
            start_y: 20.0,
            lateral_offset: 3.5,
            closing_speed: 1.5,
            ego_speed: 20.0,
            duration: 10.0,
            fix_rate: 100.0,
            tx_separation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub t: f64,
    pub position: Position2D,
    /// Direction of the relative velocity (bearing convention).
    pub heading: f64,
    /// Target body yaw relative to the ego (bearing convention).
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryScenario {
    pub params: ScenarioParams,
    pub waypoints: Vec<Waypoint>,
}

impl TrajectoryScenario {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }
}

/// Sinusoidal-ease lateral transition at constant closing speed.
pub fn gen_lane_change(params: &ScenarioParams) -> Result<TrajectoryScenario> {
    if !(params.duration > 0.0) || !(params.fix_rate > 0.0) {
        return Err(Error::InvalidParameter("duration and fix_rate must be positive".into()));
    }
    if !(params.ego_speed >= 0.0) {
        return Err(Error::InvalidParameter("ego_speed must be nonnegative".into()));
    }
    let steps = (params.duration * params.fix_rate).round() as usize;
    let mut waypoints = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 / params.fix_rate;
        let s = (t / params.duration).min(1.0);
        let x = params.start_x + params.lateral_offset * 0.5 * (1.0 - (PI * s).cos());
        let y = params.start_y - params.closing_speed * t;
        if !(y > 0.0) {
            return Err(Error::BehindReceiverPlane { y });
        }
        let vx = params.lateral_offset * PI / (2.0 * params.duration) * (PI * s).sin();
        let vy = -params.closing_speed;
        waypoints.push(Waypoint {
            t,
            position: Position2D::new(x, y),
            heading: vx.atan2(vy),
            yaw: vx.atan2(params.ego_speed + vy),
        });
    }
    Ok(TrajectoryScenario {
        params: *params,
        waypoints,
    })
}

/// Everything a Monte Carlo run needs besides the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSetup {
    pub layout: RxLayout,
    pub channel: ChannelParams,
    pub motion: MotionNoise,
    pub estimator: EstimatorConfig,
    pub methods: Vec<Method>,
    pub iterations: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl Default for MonteCarloSetup {
    fn default() -> Self {
        Self {
            layout: RxLayout::default(),
            channel: ChannelParams::default(),
            motion: MotionNoise::default(),
            estimator: EstimatorConfig::default(),
            methods: Method::ALL.to_vec(),
            iterations: 3000,
            seed: 7,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub used: usize,
    pub dropouts: usize,
    pub bias_x: f64,
    pub bias_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    /// Sum of the CRLB variances of the estimated position, when defined.
    pub crlb_var_2d: Option<f64>,
}

impl CellStats {
    /// Standard deviation of the 2D error vector; NaN with fewer than two fixes.
    pub fn err_std_2d(&self) -> f64 {
        if self.used < 2 {
            f64::NAN
        } else {
            (self.var_x + self.var_y).sqrt()
        }
    }

    fn all_dropped(n: usize) -> Self {
        Self {
            used: 0,
            dropouts: n,
            bias_x: f64::NAN,
            bias_y: f64::NAN,
            var_x: f64::NAN,
            var_y: f64::NAN,
            crlb_var_2d: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub times: Vec<f64>,
    pub methods: Vec<Method>,
    pub iterations: usize,
    /// `cells[waypoint][method]`
    pub cells: Vec<Vec<CellStats>>,
}

impl ErrorStats {
    pub fn cell(&self, waypoint: usize, method: Method) -> Option<&CellStats> {
        let m = self.methods.iter().position(|x| *x == method)?;
        self.cells.get(waypoint).map(|row| &row[m])
    }

    /// Root-mean-square of the per-waypoint 2D error std over waypoints
    /// where it is defined.
    pub fn aggregate_std(&self, method: Method) -> f64 {
        let Some(m) = self.methods.iter().position(|x| *x == method) else {
            return f64::NAN;
        };
        let (sum, n) = self
            .cells
            .iter()
            .map(|row| row[m].err_std_2d())
            .filter(|s| s.is_finite())
            .fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
        if n == 0 {
            f64::NAN
        } else {
            (sum / n as f64).sqrt()
        }
    }

    pub fn total_dropouts(&self, method: Method) -> usize {
        match self.methods.iter().position(|x| *x == method) {
            Some(m) => self.cells.iter().map(|row| row[m].dropouts).sum(),
            None => 0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,method,err_std_2d,bias_x,bias_y,dropouts\n");
        for (t, row) in self.times.iter().zip(&self.cells) {
            for (method, c) in self.methods.iter().zip(row) {
                let _ = writeln!(
                    out,
                    "{t},{method},{},{},{},{}",
                    c.err_std_2d(),
                    c.bias_x,
                    c.bias_y,
                    c.dropouts
                );
            }
        }
        out
    }
}

fn method_stream(waypoint: usize, method: Method) -> u64 {
    let idx = Method::ALL.iter().position(|m| *m == method).unwrap_or(0);
    (waypoint * Method::ALL.len() + idx) as u64
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

struct Welford {
    n: usize,
    mean: [f64; 2],
    m2: [f64; 2],
}

impl Welford {
    fn new() -> Self {
        Self {
            n: 0,
            mean: [0.0; 2],
            m2: [0.0; 2],
        }
    }

    fn push(&mut self, e: [f64; 2]) {
        self.n += 1;
        for i in 0..2 {
            let d = e[i] - self.mean[i];
            self.mean[i] += d / self.n as f64;
            self.m2[i] += d * (e[i] - self.mean[i]);
        }
    }

    fn var(&self, i: usize) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2[i] / (self.n - 1) as f64
        }
    }
}

fn simulate_cell(traj: &TrajectoryScenario, k: usize, method: Method, setup: &MonteCarloSetup) -> Result<CellStats> {
    let n = setup.iterations;
    let wp = traj.waypoints[k];
    let family = method.family();
    let (target, side, state) = match method {
        Method::RunningRange => {
            if k == 0 {
                return Ok(CellStats::all_dropped(n));
            }
            let prev = traj.waypoints[k - 1].position;
            (
                TargetGeometry::at(prev).moving_to(wp.position),
                TrackSide::of(prev, wp.position),
                StateVector::running(prev, wp.position),
            )
        }
        Method::DifferentialBearing => {
            let sep = traj.params.tx_separation.unwrap_or(setup.layout.baseline());
            let tx2 = wp.position.offset(sep * wp.yaw.cos(), -sep * wp.yaw.sin());
            (
                TargetGeometry::at(wp.position).with_tx2(tx2),
                TrackSide::default(),
                StateVector::classical(wp.position),
            )
        }
        _ => (
            TargetGeometry::at(wp.position),
            TrackSide::default(),
            StateVector::classical(wp.position),
        ),
    };
    let sigmas = match family_sigmas(&setup.channel, &setup.layout, family, &target, wp.yaw, &setup.motion) {
        Ok(s) => s,
        Err(Error::LinkInfeasible) => return Ok(CellStats::all_dropped(n)),
        Err(e) => return Err(e),
    };
    let truth = forward_model(&setup.layout, family, &target)?;
    let crlb_var_2d = if sigmas.iter().all(|s| *s > 0.0) {
        let b = crlb(&fisher_information(family, &setup.layout, &state, &sigmas)?);
        let off = family.state_len() - 2;
        b.feasible.then(|| b.bounds[off] + b.bounds[off + 1])
    } else {
        Some(0.0)
    };

    let stream = method_stream(k, method);
    let mut acc = Welford::new();
    let mut dropouts = 0;
    for iter in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed ^ iter as u64);
        rng.set_stream(stream);
        let noisy = sample_measurements_with(&truth, &sigmas, &mut rng)?;
        match method.estimate(&noisy, &setup.layout, side, &setup.estimator) {
            Ok(fix) => {
                let p = fix.position();
                acc.push([p.x - wp.position.x, p.y - wp.position.y]);
            }
            Err(_) => dropouts += 1,
        }
    }
    let (bias_x, bias_y) = if acc.n > 0 {
        (acc.mean[0], acc.mean[1])
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(CellStats {
        used: acc.n,
        dropouts,
        bias_x,
        bias_y,
        var_x: acc.var(0),
        var_y: acc.var(1),
        crlb_var_2d,
    })
}

/// Runs every estimator over every waypoint `setup.iterations` times.
/// Failed fixes are dropouts and do not enter the error statistics.
pub fn run_monte_carlo(traj: &TrajectoryScenario, setup: &MonteCarloSetup) -> Result<ErrorStats> {
    if setup.iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be >= 1".into()));
    }
    if setup.methods.is_empty() {
        return Err(Error::InvalidParameter("no estimators selected".into()));
    }
    setup.channel.validate()?;
    let cells = with_pool(setup.workers, || {
        (0..traj.len())
            .into_par_iter()
            .map(|k| {
                setup
                    .methods
                    .iter()
                    .map(|m| simulate_cell(traj, k, *m, setup))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ErrorStats {
        times: traj.waypoints.iter().map(|w| w.t).collect(),
        methods: setup.methods.clone(),
        iterations: setup.iterations,
        cells,
    })
}

/// Repeated fixes of one static scene, used for efficiency and bias checks.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTrials {
    pub method: Method,
    pub truth: Vec<f64>,
    pub used: usize,
    pub dropouts: usize,
    /// Per estimated coordinate, in state-vector order.
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl PointTrials {
    /// Bias of coordinate `m` in units of its standard error.
    pub fn bias_in_standard_errors(&self, m: usize) -> f64 {
        (self.mean[m] - self.truth[m]) / (self.var[m] / self.used as f64).sqrt()
    }

    pub fn csv_header() -> &'static str {
        "method,coordinate,truth,mean,var,used,dropouts"
    }

    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for m in 0..self.truth.len() {
            let _ = writeln!(
                out,
                "{},{m},{},{},{},{},{}",
                self.method, self.truth[m], self.mean[m], self.var[m], self.used, self.dropouts
            );
        }
        out
    }
}

#[derive(Clone)]
struct Moments {
    n: usize,
    dropouts: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            dropouts: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, v: &[f64]) {
        self.n += 1;
        for (i, x) in v.iter().enumerate() {
            let d = x - self.mean[i];
            self.mean[i] += d / self.n as f64;
            self.m2[i] += d * (x - self.mean[i]);
        }
    }

    // Chan et al. pairwise combination
    fn merge(mut self, other: &Moments) -> Self {
        let n = self.n + other.n;
        self.dropouts += other.dropouts;
        if other.n == 0 {
            return self;
        }
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.m2[i] += other.m2[i] + d * d * (self.n * other.n) as f64 / n as f64;
            self.mean[i] += d * other.n as f64 / n as f64;
        }
        self.n = n;
        self
    }
}

const TRIAL_CHUNK: usize = 1000;

/// Monte Carlo over `iterations` noisy measurement sets of a fixed scene.
/// Trials are processed in fixed-size chunks merged in order, so the result
/// is independent of `setup.workers`.
pub fn point_trials(
    setup: &MonteCarloSetup,
    method: Method,
    target: &TargetGeometry,
    side: TrackSide,
    sigmas: &[f64],
) -> Result<PointTrials> {
    if setup.iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be >= 1".into()));
    }
    let family = method.family();
    let truth_set = forward_model(&setup.layout, family, target)?;
    let truth = match family {
        Family::RunningRange => {
            let next = target.next.ok_or(Error::MissingGeometry(family))?;
            vec![target.tx.x, target.tx.y, next.x, next.y]
        }
        _ => vec![target.tx.x, target.tx.y],
    };
    let chunks = setup.iterations.div_ceil(TRIAL_CHUNK);
    let stream = method_stream(0, method);
    let parts = with_pool(setup.workers, || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = Moments::new(truth.len());
                for iter in c * TRIAL_CHUNK..((c + 1) * TRIAL_CHUNK).min(setup.iterations) {
                    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed ^ iter as u64);
                    rng.set_stream(stream);
                    let noisy = sample_measurements_with(&truth_set, sigmas, &mut rng)?;
                    match method.estimate(&noisy, &setup.layout, side, &setup.estimator) {
                        Ok(fix) => acc.push(&fix.coordinates()),
                        Err(_) => acc.dropouts += 1,
                    }
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let total = parts.iter().fold(Moments::new(truth.len()), |a, b| a.merge(b));
    let var = total
        .m2
        .iter()
        .map(|m2| if total.n > 1 { m2 / (total.n - 1) as f64 } else { f64::NAN })
        .collect();
    Ok(PointTrials {
        method,
        truth,
        used: total.n,
        dropouts: total.dropouts,
        mean: total.mean,
        var,
    })
}

/// Road grid. The default spans three 3.5 m lanes centred on the ego and
/// 2-30 m ahead at 0.25 m resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: -5.25,
            x_max: 5.25,
            y_min: 2.0,
            y_max: 30.0,
            resolution: 0.25,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) {
            return Err(Error::InvalidParameter("grid resolution must be positive".into()));
        }
        if !(self.x_max >= self.x_min) || !(self.y_max >= self.y_min) {
            return Err(Error::InvalidParameter("grid is empty".into()));
        }
        if !(self.y_min > 0.0) {
            return Err(Error::InvalidParameter("grid must lie ahead of the receivers (y_min > 0)".into()));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| lo + k as f64 * step).collect()
    }

    pub fn xs(&self) -> Vec<f64> {
        Self::axis(self.x_min, self.x_max, self.resolution)
    }

    pub fn ys(&self) -> Vec<f64> {
        Self::axis(self.y_min, self.y_max, self.resolution)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapCell {
    pub x: f64,
    pub y: f64,
    pub family: Family,
    /// CRLB standard deviations (m); infinite when infeasible.
    pub std_x: f64,
    pub std_y: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub grid: GridSpec,
    pub families: Vec<Family>,
    /// Row-major over `y` then `x`, families innermost.
    pub cells: Vec<MapCell>,
}

impl ErrorMap {
    pub fn feasible_count(&self) -> usize {
        self.cells.iter().filter(|c| c.feasible).count()
    }

    pub fn cells_for(&self, family: Family) -> impl Iterator<Item = &MapCell> {
        self.cells.iter().filter(move |c| c.family == family)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,method,crlb_std_x,crlb_std_y,feasible\n");
        for c in &self.cells {
            let _ = writeln!(out, "{},{},{},{},{},{}", c.x, c.y, c.family, c.std_x, c.std_y, c.feasible);
        }
        out
    }
}

fn map_cell(
    x: f64,
    y: f64,
    family: Family,
    channel: &ChannelParams,
    layout: &RxLayout,
    motion: &MotionNoise,
) -> Result<MapCell> {
    let p = Position2D::new(x, y);
    let infeasible = MapCell {
        x,
        y,
        family,
        std_x: f64::INFINITY,
        std_y: f64::INFINITY,
        feasible: false,
    };
    let state = StateVector::classical(p);
    let target = state.target(family, layout)?;
    let sigmas = match family_sigmas(channel, layout, family, &target, 0.0, motion) {
        Ok(s) => s,
        Err(Error::LinkInfeasible) => return Ok(infeasible),
        Err(e) => return Err(e),
    };
    let bound = crlb(&fisher_information(family, layout, &state, &sigmas)?);
    if !bound.feasible {
        return Ok(infeasible);
    }
    Ok(MapCell {
        x,
        y,
        family,
        std_x: bound.std(0),
        std_y: bound.std(1),
        feasible: true,
    })
}

/// CRLB standard deviations per axis over the grid for each classical family,
/// using channel- or config-derived sigmas at every cell. Differential
/// families are evaluated with a parallel TX pair.
pub fn crlb_error_map(
    grid: &GridSpec,
    channel: &ChannelParams,
    layout: &RxLayout,
    motion: &MotionNoise,
    families: &[Family],
    workers: usize,
) -> Result<ErrorMap> {
    grid.validate()?;
    channel.validate()?;
    if families.contains(&Family::RunningRange) {
        return Err(Error::InvalidParameter("error maps cover classical families only".into()));
    }
    let xs = grid.xs();
    let rows = with_pool(workers, || {
        grid.ys()
            .into_par_iter()
            .map(|y| {
                let mut row = Vec::with_capacity(xs.len() * families.len());
                for &x in &xs {
                    for &family in families {
                        row.push(map_cell(x, y, family, channel, layout, motion)?);
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ErrorMap {
        grid: *grid,
        families: families.to_vec(),
        cells: rows.concat(),
    })
}
