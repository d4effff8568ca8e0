//! The four benchmark systems: governing-equation residuals, initial and
//! boundary data, parameters and domains.
//!
//! Network inputs are ordered `(t, x[, y])`. The second-order heat and wave
//! equations are posed as first-order systems: the heat network outputs
//! `(u, v1, v2)` with `v1 = u_x`, `v2 = u_y`; the wave network outputs
//! `(u, w, v1, v2)` with `w = u_t` in addition. The consistency equations are
//! extra residual components.

mod grid;

pub use grid::{Grid, ObservationSampling};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Jet, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem {0:?} (expected transport1d, heat2d, wave2d or lotka_volterra)")]
    UnknownProblem(String),
    #[error("point {point:?} is not on the constrained boundary of {problem}")]
    NotOnBoundary { problem: ProblemKind, point: Vec<f64> },
    #[error("{0} has no spatial boundary")]
    NoSpatialBoundary(ProblemKind),
    #[error("expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[serde(rename = "transport1d")]
    Transport1d,
    #[serde(rename = "heat2d")]
    Heat2d,
    #[serde(rename = "wave2d")]
    Wave2d,
    LotkaVolterra,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] =
        [ProblemKind::Transport1d, ProblemKind::Heat2d, ProblemKind::Wave2d, ProblemKind::LotkaVolterra];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Transport1d => "transport1d",
            ProblemKind::Heat2d => "heat2d",
            ProblemKind::Wave2d => "wave2d",
            ProblemKind::LotkaVolterra => "lotka_volterra",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = ProblemError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ProblemError::UnknownProblem(s.to_string()))
    }
}

/// `[0, T] x Omega` with `Omega` an axis-aligned box (empty for ODEs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub t_end: f64,
    pub space: Vec<(f64, f64)>,
}

impl Domain {
    pub fn contains(&self, input: &[f64]) -> bool {
        input.len() == 1 + self.space.len()
            && (0.0..=self.t_end).contains(&input[0])
            && self.space.iter().zip(&input[1..]).all(|(&(lo, hi), &x)| (lo..=hi).contains(&x))
    }
}

pub const TRANSPORT_SPEED: f64 = PI / 10.0;
pub const LV_TRUE: [f64; 4] = [1.0, 0.4, 0.4, 0.1];

/// A benchmark problem: everything needed to assemble its losses.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub domain: Domain,
    pub input_dim: usize,
    /// Network outputs including reduction-of-order auxiliaries.
    pub output_dim: usize,
    /// Outputs that are observed and compared with the oracle.
    pub observed_dim: usize,
    pub param_names: Vec<String>,
    pub true_params: Vec<f64>,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind) -> Self {
        let names = |n: &[&str]| n.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match kind {
            ProblemKind::Transport1d => ProblemSpec {
                kind,
                domain: Domain { t_end: 1.0, space: vec![(0.0, 1.0)] },
                input_dim: 2,
                output_dim: 1,
                observed_dim: 1,
                param_names: names(&["a"]),
                true_params: vec![TRANSPORT_SPEED],
            },
            ProblemKind::Heat2d => ProblemSpec {
                kind,
                domain: Domain { t_end: 1.0, space: vec![(0.0, 1.0), (0.0, 1.0)] },
                input_dim: 3,
                output_dim: 3,
                observed_dim: 1,
                param_names: names(&["a2"]),
                true_params: vec![1.0],
            },
            ProblemKind::Wave2d => ProblemSpec {
                kind,
                domain: Domain { t_end: 1.0, space: vec![(0.0, 1.0), (0.0, 1.0)] },
                input_dim: 3,
                output_dim: 4,
                observed_dim: 1,
                param_names: names(&["a2"]),
                true_params: vec![1.0],
            },
            ProblemKind::LotkaVolterra => ProblemSpec {
                kind,
                domain: Domain { t_end: 100.0, space: vec![] },
                input_dim: 1,
                output_dim: 2,
                observed_dim: 2,
                param_names: names(&["alpha", "beta", "delta", "gamma"]),
                true_params: LV_TRUE.to_vec(),
            },
        }
    }

    pub fn has_spatial_boundary(&self) -> bool {
        !self.domain.space.is_empty()
    }

    /// Number of residual components per collocation point.
    pub fn residual_dim(&self) -> usize {
        match self.kind {
            ProblemKind::Transport1d => 1,
            ProblemKind::Heat2d => 3,
            ProblemKind::Wave2d => 4,
            ProblemKind::LotkaVolterra => 2,
        }
    }

    /// Number of leading outputs constrained at `t = 0`.
    pub fn initial_dim(&self) -> usize {
        match self.kind {
            ProblemKind::Transport1d | ProblemKind::Heat2d => 1,
            ProblemKind::Wave2d | ProblemKind::LotkaVolterra => 2,
        }
    }

    /// Governing-equation residual from the output jets and model parameters.
    pub fn residual<R: Real>(&self, out: &[Jet<R>], p: &[R]) -> Vec<R> {
        match self.kind {
            ProblemKind::Transport1d => vec![residual_transport(&out[0], p[0])],
            ProblemKind::Heat2d => residual_heat(&out[0], &out[1], &out[2], p[0]).to_vec(),
            ProblemKind::Wave2d => residual_wave(&out[0], &out[1], &out[2], &out[3], p[0]).to_vec(),
            ProblemKind::LotkaVolterra => residual_lv(&out[0], &out[1], [p[0], p[1], p[2], p[3]]).to_vec(),
        }
    }

    /// Targets `f` for the leading [`initial_dim`](Self::initial_dim) outputs
    /// at `t = 0`; `x` is the spatial point (empty for ODEs).
    pub fn initial(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ProblemKind::Transport1d => vec![initial_transport(x[0])],
            ProblemKind::Heat2d => vec![initial_wave(x[0], x[1]).0],
            ProblemKind::Wave2d => {
                let (u0, w0) = initial_wave(x[0], x[1]);
                vec![u0, w0]
            }
            ProblemKind::LotkaVolterra => vec![1.0, 1.0],
        }
    }
}

/// Boundary target `g` for output `u` at `(t, x)`, `x` on the constrained boundary.
///
/// Heat and wave: homogeneous Dirichlet on all four sides. Transport:
/// inflow side `x = 0` only.
pub fn boundary_eval(spec: &ProblemSpec, t: f64, x: &[f64]) -> Result<Vec<f64>, ProblemError> {
    const TOL: f64 = 1e-12;
    let _ = t;
    let on = |v: f64, edge: f64| (v - edge).abs() <= TOL;
    let not_on = || ProblemError::NotOnBoundary {
        problem: spec.kind,
        point: std::iter::once(t).chain(x.iter().copied()).collect(),
    };
    match spec.kind {
        ProblemKind::LotkaVolterra => Err(ProblemError::NoSpatialBoundary(spec.kind)),
        ProblemKind::Transport1d => {
            if x.len() != 1 {
                return Err(ProblemError::Arity { expected: 1, got: x.len() });
            }
            if on(x[0], 0.0) {
                Ok(vec![0.0])
            } else {
                Err(not_on())
            }
        }
        ProblemKind::Heat2d | ProblemKind::Wave2d => {
            if x.len() != 2 {
                return Err(ProblemError::Arity { expected: 2, got: x.len() });
            }
            let inside = x.iter().all(|&v| (-TOL..=1.0 + TOL).contains(&v));
            if inside && x.iter().any(|&v| on(v, 0.0) || on(v, 1.0)) {
                Ok(vec![0.0])
            } else {
                Err(not_on())
            }
        }
    }
}

/// `u_t + a u_x`.
pub fn residual_transport<R: Real>(u: &Jet<R>, a: R) -> R {
    u.d(0) + a * u.d(1)
}

/// `(u_t - a2 (v1_x + v2_y), v1 - u_x, v2 - u_y)`.
pub fn residual_heat<R: Real>(u: &Jet<R>, v1: &Jet<R>, v2: &Jet<R>, a2: R) -> [R; 3] {
    [u.d(0) - a2 * (v1.d(1) + v2.d(2)), v1.value - u.d(1), v2.value - u.d(2)]
}

/// `(w_t - a2 (v1_x + v2_y), w - u_t, v1 - u_x, v2 - u_y)`.
pub fn residual_wave<R: Real>(u: &Jet<R>, w: &Jet<R>, v1: &Jet<R>, v2: &Jet<R>, a2: R) -> [R; 4] {
    [w.d(0) - a2 * (v1.d(1) + v2.d(2)), w.value - u.d(0), v1.value - u.d(1), v2.value - u.d(2)]
}

/// `(u' - alpha u + beta u v, v' - delta u v + gamma v)` with `p = (alpha, beta, delta, gamma)`.
pub fn residual_lv<R: Real>(u: &Jet<R>, v: &Jet<R>, p: [R; 4]) -> [R; 2] {
    let [alpha, beta, delta, gamma] = p;
    let uv = u.value * v.value;
    [u.d(0) - alpha * u.value + beta * uv, v.d(0) - delta * uv + gamma * v.value]
}

/// Transport initial profile, taken literally: `sin^4(pi/4 (x - 0.1))` on
/// `[0.1, 0.5]`, zero elsewhere (so it jumps down at `x = 0.5`).
pub fn initial_transport(x: f64) -> f64 {
    if (0.1..=0.5).contains(&x) {
        (0.25 * PI * (x - 0.1)).sin().powi(4)
    } else {
        0.0
    }
}

/// Derivative of [`initial_transport`] away from its jump.
pub fn initial_transport_slope(x: f64) -> f64 {
    if (0.1..0.5).contains(&x) {
        let th = 0.25 * PI * (x - 0.1);
        PI * th.sin().powi(3) * th.cos()
    } else {
        0.0
    }
}

/// Wave (and heat) initial data `(u(0), u_t(0)) = (x y (1-x)(1-y), 0)`.
pub fn initial_wave(x: f64, y: f64) -> (f64, f64) {
    (x * y * (1.0 - x) * (1.0 - y), 0.0)
}

/// One observed data point `(t, x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// `(t, x[, y])`.
    pub input: Vec<f64>,
    /// Observed outputs: `u`, or `(u, v)` for Lotka-Volterra.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub problem: ProblemKind,
    pub points: Vec<Observation>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// All points inside `[0, T] x closure(Omega)` with finite values.
    pub fn is_valid_for(&self, spec: &ProblemSpec) -> bool {
        self.problem == spec.kind
            && self.points.iter().all(|o| {
                spec.domain.contains(&o.input)
                    && o.values.len() == spec.observed_dim
                    && o.values.iter().all(|v| v.is_finite())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Basis;

    fn jet(value: f64, d1: &[f64]) -> Jet<f64> {
        Jet { value, d1: d1.to_vec(), basis: Basis::new(0, d1.len()) }
    }

    #[test]
    fn transport_residual_examples() {
        let a = PI / 10.0;
        assert_eq!(residual_transport(&jet(3.0, &[0.0, 0.0]), a), 0.0);
        assert_eq!(residual_transport(&jet(0.0, &[-a, 1.0]), a), 0.0);
        assert_eq!(residual_transport(&jet(0.0, &[1.0, 0.0]), 0.5), 1.0);
    }

    #[test]
    fn heat_residual_examples() {
        let z = jet(0.0, &[0.0; 3]);
        assert_eq!(residual_heat(&z, &z, &z, 1.0), [0.0; 3]);
        let u = jet(0.3, &[0.0, 1.0, 0.0]);
        assert_eq!(residual_heat(&u, &jet(1.0, &[0.0; 3]), &z, 2.5), [0.0; 3]);
        assert_eq!(residual_heat(&u, &z, &z, 1.0), [0.0, -1.0, 0.0]);
    }

    #[test]
    fn wave_residual_examples() {
        let z = jet(0.0, &[0.0; 3]);
        assert_eq!(residual_wave(&z, &z, &z, &z, 1.0), [0.0; 4]);
        let u = jet(0.4, &[1.0, 0.0, 0.0]);
        assert_eq!(residual_wave(&u, &jet(1.0, &[0.0; 3]), &z, &z, 1.0), [0.0; 4]);
        assert_eq!(residual_wave(&u, &z, &z, &z, 1.0), [0.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn lv_residual_examples() {
        let p = [1.0, 0.4, 0.4, 0.1];
        let c = |v: f64| jet(v, &[0.0]);
        assert_eq!(residual_lv(&c(0.0), &c(0.0), p), [0.0, 0.0]);
        let r = residual_lv(&c(0.25), &c(2.5), p);
        assert!(r[0].abs() < 1e-15 && r[1].abs() < 1e-15);
        let r = residual_lv(&c(1.0), &c(1.0), p);
        assert!((r[0] + 0.6).abs() < 1e-15 && (r[1] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn transport_initial_profile() {
        assert_eq!(initial_transport(0.1), 0.0);
        assert_eq!(initial_transport(0.05), 0.0);
        assert!((initial_transport(0.5) - 9.118_627e-3).abs() < 1e-8);
        assert_eq!(initial_transport(0.5000001), 0.0);
    }

    #[test]
    fn wave_initial_values() {
        assert_eq!(initial_wave(0.5, 0.5), (0.0625, 0.0));
        assert_eq!(initial_wave(0.0, 0.7), (0.0, 0.0));
        assert_eq!(initial_wave(0.25, 0.5), (0.046875, 0.0));
    }

    #[test]
    fn boundary_values_and_errors() {
        let heat = ProblemSpec::new(ProblemKind::Heat2d);
        assert_eq!(boundary_eval(&heat, 0.3, &[0.0, 0.4]).unwrap(), vec![0.0]);
        let wave = ProblemSpec::new(ProblemKind::Wave2d);
        assert_eq!(boundary_eval(&wave, 0.9, &[0.2, 1.0]).unwrap(), vec![0.0]);
        assert!(matches!(boundary_eval(&wave, 0.9, &[0.2, 0.5]), Err(ProblemError::NotOnBoundary { .. })));
        let tr = ProblemSpec::new(ProblemKind::Transport1d);
        assert_eq!(boundary_eval(&tr, 0.7, &[0.0]).unwrap(), vec![0.0]);
        assert!(boundary_eval(&tr, 0.7, &[0.4]).is_err());
        let lv = ProblemSpec::new(ProblemKind::LotkaVolterra);
        assert_eq!(boundary_eval(&lv, 0.0, &[]), Err(ProblemError::NoSpatialBoundary(ProblemKind::LotkaVolterra)));
    }

    #[test]
    fn heat_and_wave_initial_data_vanish_on_edges() {
        for i in 0..=50 {
            let s = i as f64 / 50.0;
            for (x, y) in [(0.0, s), (1.0, s), (s, 0.0), (s, 1.0)] {
                assert_eq!(initial_wave(x, y).0, 0.0);
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for k in ProblemKind::ALL {
            assert_eq!(k.as_str().parse::<ProblemKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
        assert!("burgers".parse::<ProblemKind>().is_err());
    }
}
