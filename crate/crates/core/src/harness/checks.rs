//! Invariant suite behind `pinnforge check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{forward, forward_jet, init_params, Activation, LayerSpec, MlpParams};
use crate::oracles::{lv_rk4, LvParams, Oracle, Rk4Config, SeriesTruncation};
use crate::problems::{initial_wave, Observation, ObservationSet, ProblemKind, ProblemSpec, LV_TRUE};
use crate::training::{sample_batches, taped_loss, Collocation, LossEvaluator};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: impl Into<String>, value: f64, limit: f64, lower_is_better: bool) -> CheckOutcome {
    let passed = if lower_is_better { value < limit } else { value >= limit };
    let cmp = if lower_is_better { "<" } else { ">=" };
    CheckOutcome { name: name.into(), passed, detail: format!("{value:.3e} (need {cmp} {limit:e})") }
}

fn small_net(spec: &ProblemSpec, seed: u64) -> MlpParams<f64> {
    let names: Vec<_> = spec.param_names.iter().map(|n| (n.clone(), 0.8)).collect();
    init_params(
        spec.input_dim,
        &[
            LayerSpec::new(6, Activation::Sin),
            LayerSpec::new(5, Activation::Tanh),
            LayerSpec::new(spec.output_dim, Activation::Identity),
        ],
        &names,
        seed,
    )
    .expect("valid architecture")
}

fn random_obs(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> ObservationSet {
    let points = (0..4)
        .map(|_| {
            let mut input = vec![rng.gen::<f64>() * spec.domain.t_end];
            input.extend((1..spec.input_dim).map(|_| rng.gen::<f64>()));
            Observation { input, values: (0..spec.observed_dim).map(|_| rng.gen()).collect() }
        })
        .collect();
    ObservationSet { problem: spec.kind, points }
}

/// Largest `|g - fd| / max(1, |fd|)` of the batched loss gradient against
/// central differences, and against the scalar-tape reference.
pub fn loss_gradient_error(kind: ProblemKind, seed: u64) -> (f64, f64) {
    let spec = ProblemSpec::new(kind);
    let params = small_net(&spec, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batches = sample_batches(&spec, &Collocation::Uniform, (8, 4, 4), &mut rng);
    let obs = random_obs(&spec, &mut rng);
    let mut ev = LossEvaluator::<f64>::new();
    let mut g = vec![0.0; params.num_leaves()];
    ev.evaluate(&spec, &params, &batches, Some(&obs), Some(&mut g));
    let (_, g_tape) = taped_loss(&spec, &params, &batches, Some(&obs));
    let flat = params.to_flat();
    let h = 1e-6;
    let (mut fd_err, mut tape_err) = (0.0f64, 0.0f64);
    let mut p = params.clone();
    for i in 0..flat.len() {
        let mut f = flat.clone();
        f[i] += h;
        p.set_flat(&f);
        let up = ev.evaluate(&spec, &p, &batches, Some(&obs), None).total;
        f[i] -= 2.0 * h;
        p.set_flat(&f);
        let dn = ev.evaluate(&spec, &p, &batches, Some(&obs), None).total;
        let fd = (up - dn) / (2.0 * h);
        fd_err = fd_err.max((g[i] - fd).abs() / fd.abs().max(1.0));
        tape_err = tape_err.max((g[i] - g_tape[i]).abs() / g_tape[i].abs().max(1.0));
    }
    (fd_err, tape_err)
}

/// Largest deviation of network input derivatives from central differences.
pub fn input_jet_error(kind: ProblemKind, seed: u64) -> f64 {
    let spec = ProblemSpec::new(kind);
    let params = small_net(&spec, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let x: Vec<f64> = (0..spec.input_dim).map(|_| rng.gen()).collect();
        let jets = forward_jet(&params, &x).expect("input dimension");
        for i in 0..spec.input_dim {
            let h = 1e-6;
            let mut up = x.clone();
            let mut dn = x.clone();
            up[i] += h;
            dn[i] -= h;
            let (fu, fdn) = (forward(&params, &up).unwrap(), forward(&params, &dn).unwrap());
            for (j, jet) in jets.iter().enumerate() {
                let fd = (fu[j] - fdn[j]) / (2.0 * h);
                worst = worst.max((jet.d(i) - fd).abs() / fd.abs().max(1.0));
            }
        }
    }
    worst
}

/// RMS of the governing-equation residual of the oracle at random points.
pub fn oracle_residual_rms(kind: ProblemKind, seed: u64) -> f64 {
    let spec = ProblemSpec::new(kind);
    let oracle = Oracle::new(&spec, SeriesTruncation::default(), Rk4Config::default()).expect("default oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = sample_batches(&spec, &Collocation::Uniform, (1000, 1, 1), &mut rng);
    let mut sq = 0.0;
    let mut n = 0;
    for x in b.interior_points() {
        for r in spec.residual(&oracle.output_jets(x), &spec.true_params) {
            sq += r * r;
            n += 1;
        }
    }
    (sq / n as f64).sqrt()
}

/// Largest gap between the series at `t = 0` and the initial data.
pub fn series_initial_gap(kind: ProblemKind) -> f64 {
    let spec = ProblemSpec::new(kind);
    let oracle = Oracle::new(&spec, SeriesTruncation::default(), Rk4Config::default()).expect("default oracle");
    let mut worst = 0.0f64;
    for i in 0..=50 {
        for j in 0..=50 {
            let (x, y) = (i as f64 / 50.0, j as f64 / 50.0);
            worst = worst.max((oracle.eval(&[0.0, x, y])[0] - initial_wave(x, y).0).abs());
        }
    }
    worst
}

/// Largest drift of the first integral along the default trajectory.
pub fn lv_first_integral_drift() -> f64 {
    let p = LvParams::from_slice(&LV_TRUE);
    let tr = lv_rk4(Rk4Config::default(), p, (1.0, 1.0)).expect("default trajectory");
    let v0 = p.first_integral(1.0, 1.0);
    tr.u.iter().zip(&tr.v).map(|(&u, &v)| (p.first_integral(u, v) - v0).abs()).fold(0.0, f64::max)
}

/// Observed convergence order of RK4 at `t = 10` from step sizes `h` and `h/2`
/// against a reference computed with `h/64`.
pub fn rk4_observed_order(h: f64) -> f64 {
    let p = LvParams::from_slice(&LV_TRUE);
    let end = |step: f64| lv_rk4(Rk4Config { step, t_end: 10.0 }, p, (1.0, 1.0)).expect("trajectory").last();
    let reference = end(h / 64.0);
    let err = |s: (f64, f64)| ((s.0 - reference.0).powi(2) + (s.1 - reference.1).powi(2)).sqrt();
    (err(end(h)) / err(end(h / 2.0))).log2()
}

pub fn run_checks() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for (i, kind) in ProblemKind::ALL.into_iter().enumerate() {
        let (fd, tape) = loss_gradient_error(kind, 100 + i as u64);
        out.push(outcome(format!("loss gradient vs differences ({kind})"), fd, 1e-4, true));
        out.push(outcome(format!("loss gradient vs scalar tape ({kind})"), tape, 1e-10, true));
        out.push(outcome(
            format!("input jets vs differences ({kind})"),
            input_jet_error(kind, 200 + i as u64),
            1e-5,
            true,
        ));
    }
    out.push(outcome(
        "oracle residual RMS (transport1d)",
        oracle_residual_rms(ProblemKind::Transport1d, 1),
        1e-6,
        true,
    ));
    for kind in [ProblemKind::Heat2d, ProblemKind::Wave2d] {
        out.push(outcome(format!("oracle residual RMS ({kind})"), oracle_residual_rms(kind, 2), 1e-4, true));
        out.push(outcome(format!("series initial gap at M=19 ({kind})"), series_initial_gap(kind), 1e-4, true));
    }
    out.push(outcome(
        "oracle residual RMS (lotka_volterra)",
        oracle_residual_rms(ProblemKind::LotkaVolterra, 3),
        1e-6,
        true,
    ));
    out.push(outcome("Lotka-Volterra first-integral drift", lv_first_integral_drift(), 1e-5, true));
    out.push(outcome("RK4 observed order", rk4_observed_order(0.1), 3.9, false));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for c in run_checks() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
