//! Reference solutions: characteristics for transport, truncated double sine
//! series for heat and wave, classical RK4 for Lotka-Volterra. They generate
//! observation data and measure solution error.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Basis, Jet};
use crate::network::input_basis;
use crate::problems::{
    initial_transport, initial_transport_slope, Grid, Observation, ObservationSampling, ObservationSet, ProblemKind,
    ProblemSpec,
};
use crate::tables::LV_STEP;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("series truncation must be a positive odd mode, got {0}")]
    InvalidTruncation(usize),
    #[error("RK4 step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("Lotka-Volterra initial state must be positive, got ({0}, {1})")]
    NonPositiveInit(f64, f64),
    #[error("integrator produced a non-finite state at step {step}")]
    Integrator { step: usize },
    #[error("requested {requested} observations but only {available} are available")]
    TooManyObservations { requested: usize, available: usize },
    #[error("observation file: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for OracleError {
    fn from(e: csv::Error) -> Self {
        OracleError::Csv(e.to_string())
    }
}

/// Largest odd mode `M` kept in the double series (`m, n in {1, 3, ..., M}`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesTruncation {
    pub max_mode: usize,
}

impl Default for SeriesTruncation {
    fn default() -> Self {
        SeriesTruncation { max_mode: 19 }
    }
}

impl SeriesTruncation {
    pub fn new(max_mode: usize) -> Result<Self, OracleError> {
        if max_mode == 0 || max_mode.is_multiple_of(2) {
            return Err(OracleError::InvalidTruncation(max_mode));
        }
        Ok(SeriesTruncation { max_mode })
    }

    pub fn modes(&self) -> impl Iterator<Item = usize> + Clone {
        (1..=self.max_mode).step_by(2)
    }

    /// Sum of `|c_mn|` over the discarded modes.
    pub fn tail_bound(&self) -> f64 {
        // Sum over odd m of 8/(m^3 pi^3) is 7 zeta(3) / pi^3.
        const ZETA3: f64 = 1.202_056_903_159_594_3;
        let full = 7.0 * ZETA3 / PI.powi(3);
        let kept: f64 = self.modes().map(|m| 8.0 / ((m as f64).powi(3) * PI.powi(3))).sum();
        full * full - kept * kept
    }
}

/// Solution of the transport equation by characteristics: `f(x - a t)`.
pub fn transport_exact(t: f64, x: f64, a: f64) -> f64 {
    initial_transport(x - a * t)
}

/// Sine coefficient of `x y (1-x)(1-y)` for mode `(m, n)`.
pub fn fourier_coeff(m: usize, n: usize) -> f64 {
    if m % 2 == 1 && n % 2 == 1 {
        64.0 / ((m * m * m * n * n * n) as f64 * PI.powi(6))
    } else {
        0.0
    }
}

/// Value, gradient and Hessian in `(t, x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SeriesDerivs {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

#[derive(Clone, Copy)]
enum TimeFactor {
    Heat,
    Wave,
}

fn series(t: f64, x: f64, y: f64, a2: f64, trunc: SeriesTruncation, kind: TimeFactor) -> SeriesDerivs {
    let modes: Vec<usize> = trunc.modes().collect();
    let sx: Vec<(f64, f64, f64)> = modes
        .iter()
        .map(|&m| {
            let k = m as f64 * PI;
            let (s, c) = (k * x).sin_cos();
            (s, k * c, -k * k * s)
        })
        .collect();
    let sy: Vec<(f64, f64, f64)> = modes
        .iter()
        .map(|&n| {
            let k = n as f64 * PI;
            let (s, c) = (k * y).sin_cos();
            (s, k * c, -k * k * s)
        })
        .collect();
    let mut d = SeriesDerivs::default();
    for (i, &m) in modes.iter().enumerate() {
        for (j, &n) in modes.iter().enumerate() {
            let c = fourier_coeff(m, n);
            let (mf, nf) = (m as f64, n as f64);
            let k2 = (mf * mf + nf * nf) * PI * PI;
            let (tv, td, tdd) = match kind {
                TimeFactor::Heat => {
                    let r = a2 * k2;
                    let e = (-r * t).exp();
                    (e, -r * e, r * r * e)
                }
                TimeFactor::Wave => {
                    let w = (a2 * k2).sqrt();
                    let (s, co) = (w * t).sin_cos();
                    (co, -w * s, -w * w * co)
                }
            };
            let (xv, xd, xdd) = sx[i];
            let (yv, yd, ydd) = sy[j];
            let f = [(tv, td, tdd), (xv, xd, xdd), (yv, yd, ydd)];
            d.value += c * tv * xv * yv;
            for a in 0..3 {
                let mut g = c;
                for (b, fb) in f.iter().enumerate() {
                    g *= if b == a { fb.1 } else { fb.0 };
                }
                d.grad[a] += g;
                for bb in 0..3 {
                    let mut h = c;
                    for (b, fb) in f.iter().enumerate() {
                        h *= match (b == a, b == bb) {
                            (true, true) => fb.2,
                            (true, false) | (false, true) => fb.1,
                            (false, false) => fb.0,
                        };
                    }
                    d.hess[a][bb] += h;
                }
            }
        }
    }
    d
}

/// Truncated series solution of `u_t = a2 (u_xx + u_yy)` with zero Dirichlet data.
pub fn heat_series(t: f64, x: f64, y: f64, a2: f64, trunc: SeriesTruncation) -> f64 {
    let mut u = 0.0;
    for m in trunc.modes() {
        let sm = (m as f64 * PI * x).sin();
        for n in trunc.modes() {
            let k2 = ((m * m + n * n) as f64) * PI * PI;
            u += fourier_coeff(m, n) * sm * (n as f64 * PI * y).sin() * (-a2 * k2 * t).exp();
        }
    }
    u
}

pub fn heat_series_derivs(t: f64, x: f64, y: f64, a2: f64, trunc: SeriesTruncation) -> SeriesDerivs {
    series(t, x, y, a2, trunc, TimeFactor::Heat)
}

/// Truncated series solution of `u_tt = a2 (u_xx + u_yy)`, `u_t(0) = 0`.
pub fn wave_series(t: f64, x: f64, y: f64, a2: f64, trunc: SeriesTruncation) -> f64 {
    let a = a2.sqrt();
    let mut u = 0.0;
    for m in trunc.modes() {
        let sm = (m as f64 * PI * x).sin();
        for n in trunc.modes() {
            let k = ((m * m + n * n) as f64).sqrt() * PI;
            u += fourier_coeff(m, n) * sm * (n as f64 * PI * y).sin() * (a * k * t).cos();
        }
    }
    u
}

pub fn wave_series_derivs(t: f64, x: f64, y: f64, a2: f64, trunc: SeriesTruncation) -> SeriesDerivs {
    series(t, x, y, a2, trunc, TimeFactor::Wave)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rk4Config {
    pub step: f64,
    pub t_end: f64,
}

impl Default for Rk4Config {
    fn default() -> Self {
        Rk4Config { step: LV_STEP, t_end: 100.0 }
    }
}

impl Rk4Config {
    pub fn steps(&self) -> usize {
        (self.t_end / self.step).round() as usize
    }
}

/// `(alpha, beta, delta, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LvParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl LvParams {
    pub fn from_slice(p: &[f64]) -> Self {
        LvParams { alpha: p[0], beta: p[1], delta: p[2], gamma: p[3] }
    }

    #[inline]
    pub fn field(&self, u: f64, v: f64) -> (f64, f64) {
        (self.alpha * u - self.beta * u * v, self.delta * u * v - self.gamma * v)
    }

    /// Conserved quantity `delta u - gamma ln u + beta v - alpha ln v`.
    pub fn first_integral(&self, u: f64, v: f64) -> f64 {
        self.delta * u - self.gamma * u.ln() + self.beta * v - self.alpha * v.ln()
    }

    fn rk4_step(&self, (u, v): (f64, f64), h: f64) -> (f64, f64) {
        let k1 = self.field(u, v);
        let k2 = self.field(u + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
        let k3 = self.field(u + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
        let k4 = self.field(u + h * k3.0, v + h * k3.1);
        (u + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0), v + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step: f64,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last(&self) -> (f64, f64) {
        (*self.u.last().unwrap(), *self.v.last().unwrap())
    }
}

/// Classical fourth-order Runge-Kutta for the Lotka-Volterra system.
/// Returns `steps + 1` states including the initial one.
pub fn lv_rk4(config: Rk4Config, params: LvParams, init: (f64, f64)) -> Result<Trajectory, OracleError> {
    if !(config.step > 0.0 && config.step.is_finite()) {
        return Err(OracleError::InvalidStep(config.step));
    }
    if !(init.0 > 0.0 && init.1 > 0.0) {
        return Err(OracleError::NonPositiveInit(init.0, init.1));
    }
    let n = config.steps();
    let mut traj = Trajectory {
        step: config.step,
        t: Vec::with_capacity(n + 1),
        u: Vec::with_capacity(n + 1),
        v: Vec::with_capacity(n + 1),
    };
    let mut state = init;
    traj.t.push(0.0);
    traj.u.push(state.0);
    traj.v.push(state.1);
    for k in 1..=n {
        state = params.rk4_step(state, config.step);
        if !(state.0.is_finite() && state.1.is_finite()) {
            return Err(OracleError::Integrator { step: k });
        }
        traj.t.push(k as f64 * config.step);
        traj.u.push(state.0);
        traj.v.push(state.1);
    }
    Ok(traj)
}

/// Reference solution of one benchmark, evaluated pointwise.
#[derive(Debug, Clone)]
pub enum Oracle {
    Transport { a: f64 },
    Heat { a2: f64, trunc: SeriesTruncation },
    Wave { a2: f64, trunc: SeriesTruncation },
    LotkaVolterra { params: LvParams, trajectory: Trajectory },
}

impl Oracle {
    pub fn new(spec: &ProblemSpec, trunc: SeriesTruncation, rk4: Rk4Config) -> Result<Self, OracleError> {
        SeriesTruncation::new(trunc.max_mode)?;
        let p = &spec.true_params;
        Ok(match spec.kind {
            ProblemKind::Transport1d => Oracle::Transport { a: p[0] },
            ProblemKind::Heat2d => Oracle::Heat { a2: p[0], trunc },
            ProblemKind::Wave2d => Oracle::Wave { a2: p[0], trunc },
            ProblemKind::LotkaVolterra => {
                let params = LvParams::from_slice(p);
                let config = Rk4Config { step: rk4.step, t_end: rk4.t_end.max(spec.domain.t_end) };
                Oracle::LotkaVolterra { params, trajectory: lv_rk4(config, params, (1.0, 1.0))? }
            }
        })
    }

    /// Observed quantities at `(t, x[, y])`: `u`, or `(u, v)` for Lotka-Volterra.
    pub fn eval(&self, input: &[f64]) -> Vec<f64> {
        match self {
            Oracle::Transport { a } => vec![transport_exact(input[0], input[1], *a)],
            Oracle::Heat { a2, trunc } => vec![heat_series(input[0], input[1], input[2], *a2, *trunc)],
            Oracle::Wave { a2, trunc } => vec![wave_series(input[0], input[1], input[2], *a2, *trunc)],
            Oracle::LotkaVolterra { .. } => {
                let (u, v) = self.lv_state(input[0]);
                vec![u, v]
            }
        }
    }

    fn lv_state(&self, t: f64) -> (f64, f64) {
        let Oracle::LotkaVolterra { params, trajectory } = self else { unreachable!("lv_state on a non-LV oracle") };
        let h = trajectory.step;
        let k = ((t / h).floor().max(0.0) as usize).min(trajectory.len() - 1);
        let rest = t - trajectory.t[k];
        let state = (trajectory.u[k], trajectory.v[k]);
        if rest.abs() < 1e-15 {
            state
        } else {
            params.rk4_step(state, rest)
        }
    }

    /// Jets of every network output (auxiliaries included) for the exact
    /// solution, in the network's output order.
    pub fn output_jets(&self, input: &[f64]) -> Vec<Jet<f64>> {
        let basis: Basis = input_basis(input.len());
        let jet = |value: f64, d1: &[f64]| Jet { value, d1: d1.to_vec(), basis };
        match self {
            Oracle::Transport { a } => {
                let s = input[1] - a * input[0];
                let slope = initial_transport_slope(s);
                vec![jet(initial_transport(s), &[-a * slope, slope])]
            }
            Oracle::Heat { a2, trunc } => {
                let d = heat_series_derivs(input[0], input[1], input[2], *a2, *trunc);
                vec![jet(d.value, &d.grad), jet(d.grad[1], &d.hess[1]), jet(d.grad[2], &d.hess[2])]
            }
            Oracle::Wave { a2, trunc } => {
                let d = wave_series_derivs(input[0], input[1], input[2], *a2, *trunc);
                vec![
                    jet(d.value, &d.grad),
                    jet(d.grad[0], &d.hess[0]),
                    jet(d.grad[1], &d.hess[1]),
                    jet(d.grad[2], &d.hess[2]),
                ]
            }
            Oracle::LotkaVolterra { params, .. } => {
                let (u, v) = self.lv_state(input[0]);
                let (du, dv) = params.field(u, v);
                vec![jet(u, &[du]), jet(v, &[dv])]
            }
        }
    }
}

/// Draws `count` grid points (deterministic per `seed`) and attaches oracle values.
pub fn generate_observations(
    spec: &ProblemSpec,
    oracle: &Oracle,
    grid: &Grid,
    count: usize,
    seed: u64,
    sampling: ObservationSampling,
) -> Result<ObservationSet, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = match sampling {
        ObservationSampling::Uniform => {
            let available = grid.len();
            if count > available {
                return Err(OracleError::TooManyObservations { requested: count, available });
            }
            let mut idx = index::sample(&mut rng, available, count).into_vec();
            idx.sort_unstable();
            idx
        }
        ObservationSampling::OnePerTimeSlice => {
            let slices = grid.axes[0].len();
            if count > slices {
                return Err(OracleError::TooManyObservations { requested: count, available: slices });
            }
            let per_slice = grid.len() / slices;
            let mut chosen = index::sample(&mut rng, slices, count).into_vec();
            chosen.sort_unstable();
            chosen.into_iter().map(|s| s * per_slice + rng.gen_range(0..per_slice)).collect()
        }
    };
    let points = indices
        .into_iter()
        .map(|i| {
            let input = grid.point(i);
            let values = oracle.eval(&input);
            Observation { input, values }
        })
        .collect();
    Ok(ObservationSet { problem: spec.kind, points })
}

fn csv_header(kind: ProblemKind) -> &'static [&'static str] {
    match kind {
        ProblemKind::Transport1d => &["t", "x", "value"],
        ProblemKind::Heat2d | ProblemKind::Wave2d => &["t", "x", "y", "value"],
        ProblemKind::LotkaVolterra => &["t", "u", "v"],
    }
}

/// Full-precision (17 significant digits) decimal rendering.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_observations(path: &Path, set: &ObservationSet) -> Result<(), OracleError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header(set.problem))?;
    for o in &set.points {
        let row: Vec<String> = o.input.iter().chain(&o.values).map(|&v| fmt_full(v)).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations(path: &Path, problem: ProblemKind) -> Result<ObservationSet, OracleError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = csv_header(problem);
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(OracleError::Csv(format!("expected header {header:?}, found {got:?}")));
    }
    let n_in = ProblemSpec::new(problem).input_dim;
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| OracleError::Csv(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != header.len() {
            return Err(OracleError::Csv(format!("row has {} fields, expected {}", vals.len(), header.len())));
        }
        points.push(Observation { input: vals[..n_in].to_vec(), values: vals[n_in..].to_vec() });
    }
    Ok(ObservationSet { problem, points })
}
