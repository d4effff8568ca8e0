//! Loss terms. Three routes compute the same quantities:
//!
//! * pointwise functions over any [`OutputModel`] (network or oracle), in `f64`;
//! * [`LossEvaluator`], the batched route used for training;
//! * [`taped_loss`], the whole loss recorded on one scalar tape, used as the
//!   reference for gradient checks.

use serde::{Deserialize, Serialize};

use super::sampling::Batches;
use crate::autodiff::{grad, Jet, Real, Tape, Var};
use crate::network::batch::{backward_batch, forward_batch, BatchPass};
use crate::network::{forward_jet, forward_jet_taped, MlpParams};
use crate::oracles::Oracle;
use crate::problems::{boundary_eval, ObservationSet, ProblemSpec};
use crate::scalar::Scalar;

/// Components of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ge: f64,
    pub ic: f64,
    pub bc: f64,
    pub obs: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(ge: f64, ic: f64, bc: f64, obs: f64) -> Self {
        LossBreakdown { ge, ic, bc, obs, total: ge + ic + bc + obs }
    }

    pub fn is_finite(&self) -> bool {
        [self.ge, self.ic, self.bc, self.obs, self.total].iter().all(|v| v.is_finite())
    }

    /// Name of the first non-finite component, if any.
    pub fn non_finite_component(&self) -> Option<&'static str> {
        [("ge", self.ge), ("ic", self.ic), ("bc", self.bc), ("obs", self.obs), ("total", self.total)]
            .into_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| n)
    }
}

/// Anything that maps an input point to jets of every network output.
pub trait OutputModel {
    fn jets(&self, input: &[f64]) -> Vec<Jet<f64>>;

    fn values(&self, input: &[f64]) -> Vec<f64> {
        self.jets(input).into_iter().map(|j| j.value).collect()
    }
}

impl OutputModel for MlpParams<f64> {
    fn jets(&self, input: &[f64]) -> Vec<Jet<f64>> {
        forward_jet(self, input).expect("input dimension matches the network")
    }
}

impl OutputModel for Oracle {
    fn jets(&self, input: &[f64]) -> Vec<Jet<f64>> {
        self.output_jets(input)
    }

    fn values(&self, input: &[f64]) -> Vec<f64> {
        self.output_jets(input).into_iter().map(|j| j.value).collect()
    }
}

impl<F: Fn(&[f64]) -> Vec<Jet<f64>>> OutputModel for F {
    fn jets(&self, input: &[f64]) -> Vec<Jet<f64>> {
        self(input)
    }
}

fn mean_over<'a>(points: impl ExactSizeIterator<Item = &'a [f64]>, f: impl Fn(&[f64]) -> f64) -> f64 {
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    points.map(f).sum::<f64>() / n as f64
}

/// Targets at an initial point `(0, x)`.
pub(crate) fn initial_targets(spec: &ProblemSpec, point: &[f64]) -> Vec<f64> {
    spec.initial(&point[1..])
}

pub(crate) fn boundary_target(spec: &ProblemSpec, point: &[f64]) -> f64 {
    boundary_eval(spec, point[0], &point[1..]).map_or(0.0, |g| g[0])
}

/// Mean over the batch of the summed squared residual components.
pub fn loss_ge<M: OutputModel + ?Sized>(spec: &ProblemSpec, model: &M, p: &[f64], interior: &[f64]) -> f64 {
    mean_over(interior.chunks_exact(spec.input_dim), |x| spec.residual(&model.jets(x), p).iter().map(|r| r * r).sum())
}

/// Mean squared deviation from the initial data at `t = 0`.
pub fn loss_ic<M: OutputModel + ?Sized>(spec: &ProblemSpec, model: &M, initial: &[f64]) -> f64 {
    mean_over(initial.chunks_exact(spec.input_dim), |x| {
        let out = model.values(x);
        initial_targets(spec, x).iter().zip(&out).map(|(f, u)| (u - f) * (u - f)).sum()
    })
}

/// Mean squared deviation from the boundary data; zero without a spatial boundary.
pub fn loss_bc<M: OutputModel + ?Sized>(spec: &ProblemSpec, model: &M, boundary: &[f64]) -> f64 {
    if !spec.has_spatial_boundary() {
        return 0.0;
    }
    mean_over(boundary.chunks_exact(spec.input_dim), |x| {
        let e = model.values(x)[0] - boundary_target(spec, x);
        e * e
    })
}

/// `(1/k) sum |u_obs - u_N|^2`, summing over observed outputs.
pub fn loss_obs<M: OutputModel + ?Sized>(model: &M, obs: &ObservationSet) -> f64 {
    let n = obs.len();
    if n == 0 {
        return 0.0;
    }
    obs.points
        .iter()
        .map(|o| model.values(&o.input).iter().zip(&o.values).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
        .sum::<f64>()
        / n as f64
}

/// All components; `obs = None` is forward mode (observation term reported as 0).
pub fn loss_total<M: OutputModel + ?Sized>(
    spec: &ProblemSpec,
    model: &M,
    p: &[f64],
    batches: &Batches,
    obs: Option<&ObservationSet>,
) -> LossBreakdown {
    LossBreakdown::new(
        loss_ge(spec, model, p, &batches.interior),
        loss_ic(spec, model, &batches.initial),
        loss_bc(spec, model, &batches.boundary),
        obs.map_or(0.0, |o| loss_obs(model, o)),
    )
}

/// Batched loss and gradient. Buffers are kept between calls.
pub struct LossEvaluator<T> {
    interior: BatchPass<T>,
    values: BatchPass<T>,
    inputs: Vec<T>,
    seeds: Vec<T>,
    tape: Tape<T>,
    p_grad: Vec<T>,
}

impl<T: Scalar> Default for LossEvaluator<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> LossEvaluator<T> {
    pub fn new() -> Self {
        LossEvaluator {
            interior: BatchPass::new(),
            values: BatchPass::new(),
            inputs: Vec::new(),
            seeds: Vec::new(),
            tape: Tape::new(),
            p_grad: Vec::new(),
        }
    }

    /// Loss components for `params`; with `grad`, adds the gradient with
    /// respect to every leaf (model parameters included) into it.
    pub fn evaluate(
        &mut self,
        spec: &ProblemSpec,
        params: &MlpParams<T>,
        batches: &Batches,
        obs: Option<&ObservationSet>,
        mut grad_out: Option<&mut [T]>,
    ) -> LossBreakdown {
        let d = spec.input_dim;
        let od = params.output_dim();
        let want_grad = grad_out.is_some();

        // Governing equation: jets of every output, then a per-sample tape
        // over output jets and model parameters gives the seeds.
        let m = batches.interior.len() / d;
        let mut ge = 0.0;
        if m > 0 {
            self.inputs.clear();
            self.inputs.extend(batches.interior.iter().map(|&v| T::lit(v)));
            forward_batch(params, &self.inputs, true, &mut self.interior);
            let channels = self.interior.channels();
            self.seeds.clear();
            self.seeds.resize(channels * m * od, T::zero());
            self.p_grad.clear();
            self.p_grad.resize(params.model_params.len(), T::zero());
            let k = params.model_params.len();
            let inv_m = T::lit(1.0 / m as f64);
            for s in 0..m {
                self.tape.clear();
                let tape = &self.tape;
                let p: Vec<_> = params.model_params.values.iter().map(|&v| tape.leaf(v)).collect();
                let basis = crate::network::input_basis(d);
                let jets: Vec<Jet<_>> = (0..od)
                    .map(|j| Jet {
                        value: tape.leaf(self.interior.output(0, s, j, od)),
                        d1: (0..d).map(|i| tape.leaf(self.interior.output(i + 1, s, j, od))).collect(),
                        basis,
                    })
                    .collect();
                let r = spec.residual(&jets, &p);
                let mut sq = r[0] * r[0];
                for &ri in &r[1..] {
                    sq = sq + ri * ri;
                }
                ge += sq.value().to_f64_lossy();
                if want_grad {
                    let g = grad(tape, sq.index()).expect("per-sample tape is well formed");
                    for (i, pg) in self.p_grad.iter_mut().enumerate() {
                        *pg += g.by_leaf[i] * inv_m;
                    }
                    for j in 0..od {
                        let base = k + j * (1 + d);
                        for c in 0..=d {
                            self.seeds[(c * m + s) * od + j] = g.by_leaf[base + c] * inv_m;
                        }
                    }
                }
            }
            ge /= m as f64;
            if let Some(g) = grad_out.as_deref_mut() {
                backward_batch(params, &mut self.interior, &self.seeds, g);
                let model = params.layout().model;
                for (dst, &src) in g[model..].iter_mut().zip(&self.p_grad) {
                    *dst += src;
                }
            }
        }

        // Value-only terms share one pass: initial, boundary, observations.
        let n_ic = batches.initial.len() / d;
        let n_bc = if spec.has_spatial_boundary() { batches.boundary.len() / d } else { 0 };
        let n_obs = obs.map_or(0, |o| o.len());
        let rows = n_ic + n_bc + n_obs;
        let (mut ic, mut bc, mut ob) = (0.0, 0.0, 0.0);
        if rows > 0 {
            self.inputs.clear();
            self.inputs.extend(batches.initial.iter().map(|&v| T::lit(v)));
            self.inputs.extend(batches.boundary[..n_bc * d].iter().map(|&v| T::lit(v)));
            if let Some(o) = obs {
                for pt in &o.points {
                    self.inputs.extend(pt.input.iter().map(|&v| T::lit(v)));
                }
            }
            forward_batch(params, &self.inputs, false, &mut self.values);
            self.seeds.clear();
            self.seeds.resize(rows * od, T::zero());
            let out = self.values.outputs();
            let two = T::lit(2.0);

            let mut term = |row: usize, j: usize, target: f64, scale: f64, acc: &mut f64| {
                let e = out[row * od + j] - T::lit(target);
                *acc += (e * e).to_f64_lossy() * scale;
                self.seeds[row * od + j] = two * e * T::lit(scale);
            };
            for (s, x) in batches.initial_points().enumerate() {
                for (j, f) in initial_targets(spec, x).into_iter().enumerate() {
                    term(s, j, f, 1.0 / n_ic as f64, &mut ic);
                }
            }
            for (s, x) in batches.boundary_points().take(n_bc).enumerate() {
                term(n_ic + s, 0, boundary_target(spec, x), 1.0 / n_bc as f64, &mut bc);
            }
            if let Some(o) = obs {
                for (s, pt) in o.points.iter().enumerate() {
                    for (j, &v) in pt.values.iter().enumerate() {
                        term(n_ic + n_bc + s, j, v, 1.0 / n_obs as f64, &mut ob);
                    }
                }
            }
            if let Some(g) = grad_out {
                backward_batch(params, &mut self.values, &self.seeds, g);
            }
        }
        LossBreakdown::new(ge, ic, bc, ob)
    }
}

/// Reference route: the whole loss recorded on one scalar tape through the
/// pointwise jet network. Returns the components and the gradient over
/// every leaf in flat order.
pub fn taped_loss(
    spec: &ProblemSpec,
    params: &MlpParams<f64>,
    batches: &Batches,
    obs: Option<&ObservationSet>,
) -> (LossBreakdown, Vec<f64>) {
    let tape = Tape::new();
    let taped = params.register(&tape);
    let d = spec.input_dim;
    let zero = tape.constant(0.0);
    fn mean<'t>(sum: Var<'t, f64>, n: usize) -> Var<'t, f64> {
        if n == 0 {
            sum
        } else {
            sum.scale(1.0 / n as f64)
        }
    }

    let mut ge = zero;
    for x in batches.interior.chunks_exact(d) {
        let out = forward_jet_taped(&taped, &tape, x).expect("input dimension");
        for r in spec.residual(&out, &taped.model) {
            ge = ge + r * r;
        }
    }
    let ge = mean(ge, batches.interior.len() / d);

    let mut ic = zero;
    for x in batches.initial_points() {
        let out = forward_jet_taped(&taped, &tape, x).expect("input dimension");
        for (j, f) in initial_targets(spec, x).into_iter().enumerate() {
            let e = out[j].value - tape.constant(f);
            ic = ic + e * e;
        }
    }
    let ic = mean(ic, batches.initial.len() / d);

    let mut bc = zero;
    let n_bc = if spec.has_spatial_boundary() { batches.boundary.len() / d } else { 0 };
    for x in batches.boundary_points().take(n_bc) {
        let out = forward_jet_taped(&taped, &tape, x).expect("input dimension");
        let e = out[0].value - tape.constant(boundary_target(spec, x));
        bc = bc + e * e;
    }
    let bc = mean(bc, n_bc);

    let mut ob = zero;
    if let Some(o) = obs {
        for pt in &o.points {
            let out = forward_jet_taped(&taped, &tape, &pt.input).expect("input dimension");
            for (j, &v) in pt.values.iter().enumerate() {
                let e = out[j].value - tape.constant(v);
                ob = ob + e * e;
            }
        }
    }
    let ob = mean(ob, obs.map_or(0, |o| o.len()));

    let total = ge + ic + bc + ob;
    let g = grad(&tape, total.index()).expect("loss tape is well formed");
    let breakdown = LossBreakdown::new(ge.value(), ic.value(), bc.value(), ob.value());
    (breakdown, g.by_leaf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Basis;
    use crate::network::{init_params, Activation, LayerSpec};
    use crate::oracles::{Rk4Config, SeriesTruncation};
    use crate::problems::{initial_transport, Observation, ProblemKind};
    use crate::training::sampling::{sample_batches, Collocation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_model(dim: usize, outputs: usize) -> impl Fn(&[f64]) -> Vec<Jet<f64>> {
        move |_x: &[f64]| vec![Jet::constant(Basis::new(0, dim), 0.0); outputs]
    }

    fn batches(kind: ProblemKind, seed: u64) -> Batches {
        let spec = ProblemSpec::new(kind);
        sample_batches(&spec, &Collocation::Uniform, (16, 8, 8), &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn zero_network_on_heat() {
        let spec = ProblemSpec::new(ProblemKind::Heat2d);
        let b = batches(spec.kind, 0);
        let z = zero_model(3, 3);
        assert_eq!(loss_ge(&spec, &z, &[1.0], &b.interior), 0.0);
        assert_eq!(loss_bc(&spec, &z, &b.boundary), 0.0);
        assert!(loss_ic(&spec, &z, &b.initial) > 0.0);
    }

    #[test]
    fn linear_in_time_transport() {
        let spec = ProblemSpec::new(ProblemKind::Transport1d);
        let b = batches(spec.kind, 1);
        let u = |x: &[f64]| vec![Jet { value: x[0], d1: vec![1.0, 0.0], basis: Basis::new(0, 2) }];
        assert!((loss_ge(&spec, &u, &[0.3], &b.interior) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transport_initial_contribution() {
        let spec = ProblemSpec::new(ProblemKind::Transport1d);
        let z = zero_model(2, 1);
        let v = loss_ic(&spec, &z, &[0.0, 0.3]);
        let f = initial_transport(0.3);
        assert!((f - 5.98e-4).abs() < 1e-6);
        assert!((v - f * f).abs() < 1e-18 && (v - 3.58e-7).abs() < 1e-9);
    }

    #[test]
    fn lv_initial_fit_is_zero() {
        let spec = ProblemSpec::new(ProblemKind::LotkaVolterra);
        let one = |_x: &[f64]| vec![Jet::constant(Basis::new(0, 1), 1.0); 2];
        assert_eq!(loss_ic(&spec, &one, &[0.0]), 0.0);
    }

    #[test]
    fn observation_loss_examples() {
        let z = zero_model(2, 1);
        let single = ObservationSet {
            problem: ProblemKind::Transport1d,
            points: vec![Observation { input: vec![0.5, 0.5], values: vec![1.0] }],
        };
        assert_eq!(loss_obs(&z, &single), 1.0);
        let mut many = single.clone();
        many.points = vec![single.points[0].clone(); 7];
        assert_eq!(loss_obs(&z, &many), 1.0);
    }

    #[test]
    fn oracle_residuals_vanish() {
        for kind in ProblemKind::ALL {
            let spec = ProblemSpec::new(kind);
            let oracle = Oracle::new(&spec, SeriesTruncation::default(), Rk4Config::default()).unwrap();
            let b = batches(kind, 7);
            let ge = loss_ge(&spec, &oracle, &spec.true_params, &b.interior);
            let tol = if kind == ProblemKind::LotkaVolterra { 1e-12 } else { 1e-8 };
            assert!(ge < tol, "{kind}: {ge}");
            assert!(loss_bc(&spec, &oracle, &b.boundary) < 1e-20, "{kind}");
        }
    }

    #[test]
    fn breakdown_sums() {
        let l = LossBreakdown::new(0.1, 0.2, 0.3, 0.4);
        assert!((l.total - 1.0).abs() < 1e-15);
        assert_eq!(LossBreakdown::new(1.0, f64::NAN, 0.0, 0.0).non_finite_component(), Some("ic"));
    }

    fn small_net(kind: ProblemKind, seed: u64) -> MlpParams<f64> {
        let spec = ProblemSpec::new(kind);
        let act = match kind {
            ProblemKind::Transport1d => Activation::Tanh,
            _ => Activation::Sin,
        };
        let names: Vec<(String, f64)> = spec.param_names.iter().map(|n| (n.clone(), 0.7)).collect();
        init_params(
            spec.input_dim,
            &[
                LayerSpec::new(5, act),
                LayerSpec::new(4, Activation::Sigmoid),
                LayerSpec::new(spec.output_dim, Activation::Identity),
            ],
            &names,
            seed,
        )
        .unwrap()
    }

    fn some_obs(spec: &ProblemSpec, seed: u64) -> ObservationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..5)
            .map(|_| {
                let mut input = vec![rand::Rng::gen::<f64>(&mut rng) * spec.domain.t_end];
                input.extend((1..spec.input_dim).map(|_| rand::Rng::gen::<f64>(&mut rng)));
                let values = (0..spec.observed_dim).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
                Observation { input, values }
            })
            .collect();
        ObservationSet { problem: spec.kind, points }
    }

    #[test]
    fn three_routes_agree() {
        for kind in ProblemKind::ALL {
            let spec = ProblemSpec::new(kind);
            let params = small_net(kind, 11);
            let b = batches(kind, 3);
            let obs = some_obs(&spec, 4);
            let pointwise = loss_total(&spec, &params, &params.model_params.values, &b, Some(&obs));
            let (taped, g_tape) = taped_loss(&spec, &params, &b, Some(&obs));
            let mut g = vec![0.0; params.num_leaves()];
            let fused = LossEvaluator::new().evaluate(&spec, &params, &b, Some(&obs), Some(&mut g));
            for (a, c) in [
                (pointwise.ge, taped.ge),
                (pointwise.ic, fused.ic),
                (pointwise.bc, fused.bc),
                (pointwise.obs, fused.obs),
                (pointwise.ge, fused.ge),
            ] {
                assert!((a - c).abs() <= 1e-12 * (1.0 + a.abs()), "{kind}: {a} vs {c}");
            }
            for (i, (a, c)) in g.iter().zip(&g_tape).enumerate() {
                assert!((a - c).abs() <= 1e-10 * (1.0 + c.abs()), "{kind} leaf {i}: {a} vs {c}");
            }
        }
    }

    #[test]
    fn fused_gradient_matches_differences() {
        let spec = ProblemSpec::new(ProblemKind::Wave2d);
        let params = small_net(spec.kind, 5);
        let b = batches(spec.kind, 6);
        let obs = some_obs(&spec, 8);
        let mut ev = LossEvaluator::new();
        let mut g = vec![0.0; params.num_leaves()];
        ev.evaluate(&spec, &params, &b, Some(&obs), Some(&mut g));
        let flat = params.to_flat();
        let h = 1e-6;
        for i in 0..flat.len() {
            let mut p = params.clone();
            let mut f = flat.clone();
            f[i] += h;
            p.set_flat(&f);
            let up = ev.evaluate(&spec, &p, &b, Some(&obs), None).total;
            f[i] -= 2.0 * h;
            p.set_flat(&f);
            let dn = ev.evaluate(&spec, &p, &b, Some(&obs), None).total;
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "leaf {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn forward_mode_reports_zero_observation_loss() {
        let spec = ProblemSpec::new(ProblemKind::Transport1d);
        let params = small_net(spec.kind, 2);
        let l = LossEvaluator::new().evaluate(&spec, &params, &batches(spec.kind, 0), None, None);
        assert_eq!(l.obs, 0.0);
        assert_eq!(l.total, l.ge + l.ic + l.bc);
    }

    #[test]
    fn single_precision_route_tracks_double() {
        let spec = ProblemSpec::new(ProblemKind::Heat2d);
        let p64 = small_net(spec.kind, 9);
        let p32 = MlpParams::<f32>::from_layers(
            p64.input_dim,
            p64.layers
                .iter()
                .map(|l| crate::network::Dense {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: l.weights.iter().map(|&v| v as f32).collect(),
                    bias: l.bias.iter().map(|&v| v as f32).collect(),
                    activation: l.activation,
                })
                .collect(),
            crate::network::ModelParams { names: p64.model_params.names.clone(), values: vec![0.7f32] },
        )
        .unwrap();
        let b = batches(spec.kind, 1);
        let l64 = LossEvaluator::new().evaluate(&spec, &p64, &b, None, None);
        let l32 = LossEvaluator::new().evaluate(&spec, &p32, &b, None, None);
        assert!((l64.total - l32.total).abs() < 1e-5 * (1.0 + l64.total));
    }
}
