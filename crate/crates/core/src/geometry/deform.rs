//! Developable deformations of the rest plate.
//!
//! Each state bends the plate along a single direction: a planar profile
//! curve parameterized by arc length is swept along the perpendicular axis.
//! Such a sweep is an exact isometry of the plane, so grid edges only change
//! by the chord-versus-arc discretization.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::surface::{rest_xy, SurfaceState, DEFAULT_GRID};
use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    /// Tangent-angle amplitude in radians.
    pub amplitude: f64,
    pub wavelength: f64,
    pub phase: f64,
}

/// Shape of one state: tangent angle along the profile is
/// `curvature * s + sum(amplitude * sin(2 pi s / wavelength + phase))`,
/// shifted so the centre of the plate stays level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeformationParams {
    pub curvature: f64,
    /// Angle of the bending direction in the xy-plane.
    pub direction: f64,
    pub waves: Vec<Wave>,
}

impl DeformationParams {
    pub fn bend(curvature: f64, direction: f64) -> Self {
        Self { curvature, direction, waves: Vec::new() }
    }

    fn raw_angle(&self, s: f64) -> f64 {
        let mut phi = self.curvature * s;
        for w in &self.waves {
            phi += w.amplitude * (2.0 * PI * s / w.wavelength + w.phase).sin();
        }
        phi
    }

    pub fn tangent_angle(&self, s: f64) -> f64 {
        self.raw_angle(s) - self.raw_angle(0.0)
    }

    /// Upper bound of |tangent angle| over |s| <= reach.
    pub fn angle_bound(&self, reach: f64) -> f64 {
        self.curvature.abs() * reach + 2.0 * self.waves.iter().map(|w| w.amplitude.abs()).sum::<f64>()
    }

    pub fn is_identity(&self) -> bool {
        self.curvature == 0.0 && self.waves.iter().all(|w| w.amplitude == 0.0)
    }

    fn describe(&self) -> String {
        let amps: Vec<String> = self.waves.iter().map(|w| format!("{:.4}", w.amplitude)).collect();
        format!("curvature={:.4}, wave amplitudes=[{}]", self.curvature, amps.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeformationConfig {
    pub grid: usize,
    /// Largest bend curvature reached over the sequence.
    pub max_bend: f64,
    /// Largest tangent-angle amplitude of each travelling wave (radians).
    pub wave_amplitude: f64,
    pub waves: usize,
    pub wavelength_range: (f64, f64),
    /// Oscillation periods, in states, are drawn from this range.
    pub period_range: (f64, f64),
    pub isometry_tolerance: f64,
    pub max_edge_deviation: f64,
}

impl Default for DeformationConfig {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID,
            max_bend: 0.6,
            wave_amplitude: 0.15,
            waves: 2,
            wavelength_range: (0.9, 2.2),
            period_range: (40.0, 120.0),
            isometry_tolerance: 0.02,
            max_edge_deviation: 0.05,
        }
    }
}

impl DeformationConfig {
    pub fn flat() -> Self {
        Self { max_bend: 0.0, wave_amplitude: 0.0, ..Self::default() }
    }

    pub fn bends(max_bend: f64) -> Self {
        Self { max_bend, wave_amplitude: 0.0, ..Self::default() }
    }

    pub fn waves(amplitude: f64) -> Self {
        Self { max_bend: 0.0, wave_amplitude: amplitude, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Generation(m));
        if self.grid < 2 {
            return bad(format!("grid={} must be at least 2", self.grid));
        }
        if !(self.max_bend >= 0.0 && self.wave_amplitude >= 0.0) {
            return bad(format!(
                "max_bend={} and wave_amplitude={} must be non-negative",
                self.max_bend, self.wave_amplitude
            ));
        }
        let (l0, l1) = self.wavelength_range;
        let (p0, p1) = self.period_range;
        if !(l0 > 0.0 && l1 >= l0 && p0 > 0.0 && p1 >= p0) {
            return bad(format!(
                "wavelength_range={:?} and period_range={:?} must be positive and ordered",
                self.wavelength_range, self.period_range
            ));
        }
        let bound = self.max_bend * SQRT_2 + 2.0 * self.waves as f64 * self.wave_amplitude;
        if bound >= FRAC_PI_2 {
            return bad(format!(
                "max_bend={} with {} waves of wave_amplitude={} allows tangent angles up to {:.3} rad; \
                 the profile folds over itself beyond pi/2",
                self.max_bend, self.waves, self.wave_amplitude, bound
            ));
        }
        Ok(())
    }
}

/// Smoothly varying per-state parameters, drawn once per sequence.
#[derive(Clone, Debug)]
struct Schedule {
    bend_period: f64,
    direction0: f64,
    direction_period: f64,
    waves: Vec<WaveSchedule>,
}

#[derive(Clone, Debug)]
struct WaveSchedule {
    wavelength: f64,
    amplitude_period: f64,
    phase0: f64,
    phase_period: f64,
}

impl Schedule {
    fn draw(cfg: &DeformationConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p0, p1) = cfg.period_range;
        let (l0, l1) = cfg.wavelength_range;
        let period = |rng: &mut ChaCha8Rng| if p1 > p0 { rng.random_range(p0..p1) } else { p0 };
        let bend_period = period(&mut rng);
        let direction0 = rng.random_range(0.0..PI);
        let direction_period = 3.0 * period(&mut rng);
        let waves = (0..cfg.waves)
            .map(|_| WaveSchedule {
                wavelength: if l1 > l0 { rng.random_range(l0..l1) } else { l0 },
                amplitude_period: period(&mut rng),
                phase0: rng.random_range(0.0..2.0 * PI),
                phase_period: period(&mut rng) / 2.0,
            })
            .collect();
        Self { bend_period, direction0, direction_period, waves }
    }

    fn params(&self, cfg: &DeformationConfig, i: usize) -> DeformationParams {
        let t = i as f64;
        DeformationParams {
            curvature: cfg.max_bend * (2.0 * PI * t / self.bend_period).sin(),
            direction: self.direction0 + 2.0 * PI * t / self.direction_period,
            waves: self
                .waves
                .iter()
                .map(|w| Wave {
                    amplitude: cfg.wave_amplitude * (PI * t / w.amplitude_period).sin(),
                    wavelength: w.wavelength,
                    phase: w.phase0 + 2.0 * PI * t / w.phase_period,
                })
                .collect(),
        }
    }
}

/// Per-state parameters of a sequence; state 0 has no deformation.
pub fn state_params(count: usize, cfg: &DeformationConfig, seed: u64) -> Result<Vec<DeformationParams>> {
    cfg.validate()?;
    if count == 0 {
        return Err(CoreError::Generation("count must be at least 1".into()));
    }
    let sched = Schedule::draw(cfg, seed);
    Ok((0..count).map(|i| sched.params(cfg, i)).collect())
}

pub fn generate_states(count: usize, cfg: &DeformationConfig, seed: u64) -> Result<Vec<SurfaceState>> {
    let params = state_params(count, cfg, seed)?;
    params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let s = deform_state(i as u32, p, cfg.grid)?;
            let audit = s.edge_audit();
            if !audit.passes(cfg.isometry_tolerance, cfg.max_edge_deviation) {
                return Err(CoreError::Generation(format!(
                    "state {i} ({}) breaks the isometry tolerance: mean edge deviation {:.4}, max {:.4}",
                    p.describe(),
                    audit.mean_rel_dev,
                    audit.max_rel_dev
                )));
            }
            Ok(s)
        })
        .collect()
}

/// Apply one deformation to the rest grid.
pub fn deform_state(state_id: u32, params: &DeformationParams, grid: usize) -> Result<SurfaceState> {
    if params.is_identity() {
        return Ok(SurfaceState::rest(state_id, grid, grid));
    }
    let profile = Profile::new(params, SQRT_2 + 0.05)?;
    let (dc, ds) = (params.direction.cos(), params.direction.sin());
    let mut points = Vec::with_capacity(grid * grid);
    for r in 0..grid {
        for c in 0..grid {
            let (x, y) = rest_xy(r, c, grid, grid);
            let u = x * dc + y * ds;
            let v = -x * ds + y * dc;
            let (px, pz) = profile.eval(u);
            points.push([px * dc - v * ds, px * ds + v * dc, pz]);
        }
    }
    SurfaceState::new(state_id, grid, grid, points)
}

/// Tabulated profile curve with exact derivatives at the nodes.
struct Profile<'a> {
    params: &'a DeformationParams,
    step: f64,
    reach: f64,
    x: Vec<f64>,
    z: Vec<f64>,
}

const GL_NODES: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

impl<'a> Profile<'a> {
    fn new(params: &'a DeformationParams, reach: f64) -> Result<Self> {
        let step = 1.0 / 512.0;
        let n = (reach / step).ceil() as usize;
        // nodes at s = (k - n) * step for k in 0..=2n
        let mut x = vec![0.0; 2 * n + 1];
        let mut z = vec![0.0; 2 * n + 1];
        let mut max_angle = 0.0f64;
        for k in 0..=2 * n {
            max_angle = max_angle.max(params.tangent_angle((k as f64 - n as f64) * step).abs());
        }
        if max_angle >= FRAC_PI_2 {
            return Err(CoreError::Generation(format!(
                "{} reaches tangent angle {max_angle:.3} rad; the profile folds over itself",
                params.describe()
            )));
        }
        let seg = |a: f64, b: f64| {
            let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
            let (mut sx, mut sz) = (0.0, 0.0);
            for (t, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
                let phi = params.tangent_angle(mid + half * t);
                sx += w * phi.cos();
                sz += w * phi.sin();
            }
            (sx * half, sz * half)
        };
        for k in n..2 * n {
            let s = (k - n) as f64 * step;
            let (dx, dz) = seg(s, s + step);
            x[k + 1] = x[k] + dx;
            z[k + 1] = z[k] + dz;
        }
        for k in (1..=n).rev() {
            let s = (k as f64 - n as f64) * step;
            let (dx, dz) = seg(s - step, s);
            x[k - 1] = x[k] - dx;
            z[k - 1] = z[k] - dz;
        }
        Ok(Self { params, step, reach: n as f64 * step, x, z })
    }

    /// Cubic Hermite interpolation using the exact tangent (cos phi, sin phi).
    fn eval(&self, s: f64) -> (f64, f64) {
        let pos = ((s + self.reach) / self.step).clamp(0.0, (self.x.len() - 1) as f64);
        let k = (pos.floor() as usize).min(self.x.len() - 2);
        let t = pos - k as f64;
        let (s0, s1) = (k as f64 * self.step - self.reach, (k + 1) as f64 * self.step - self.reach);
        let (a0, a1) = (self.params.tangent_angle(s0), self.params.tangent_angle(s1));
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        let h = self.step;
        let px = h00 * self.x[k] + h10 * h * a0.cos() + h01 * self.x[k + 1] + h11 * h * a1.cos();
        let pz = h00 * self.z[k] + h10 * h * a0.sin() + h01 * self.z[k + 1] + h11 * h * a1.sin();
        (px, pz)
    }
}
