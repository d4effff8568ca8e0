use crate::network::MlpParams;
use crate::scalar::Scalar;

use super::TrainError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment estimates of Adam, one entry per leaf in flat leaf order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m1: Vec<T>,
    pub m2: Vec<T>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(leaves: usize) -> Self {
        AdamState {
            m1: vec![T::zero(); leaves],
            m2: vec![T::zero(); leaves],
            step_count: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
        }
    }
}

/// One bias-corrected Adam update. Leaves with `frozen[i]` keep their value
/// and moments. Nothing is modified when a gradient entry is not finite.
pub fn adam_step<T: Scalar>(
    state: &mut AdamState<T>,
    params: &mut MlpParams<T>,
    grad: &[T],
    lr: f64,
    frozen: &[bool],
) -> Result<(), TrainError> {
    let n = params.num_leaves();
    if grad.len() != n || frozen.len() != n || state.m1.len() != n {
        return Err(TrainError::Config(format!(
            "gradient ({}) / mask ({}) / moments ({}) do not cover the {n} leaves",
            grad.len(),
            frozen.len(),
            state.m1.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient { step: state.step_count + 1, leaf: params.leaf_label(i) });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let (c1, c2) = (1.0 - state.beta1.powi(t), 1.0 - state.beta2.powi(t));
    let step = T::lit(lr / c1);
    let inv_c2 = T::lit(1.0 / c2);
    let eps = T::lit(state.epsilon);
    let one = T::one();

    let update = |w: &mut T, m1: &mut T, m2: &mut T, g: T| {
        let m = b1 * *m1 + (one - b1) * g;
        let v = b2 * *m2 + (one - b2) * g * g;
        *m1 = m;
        *m2 = v;
        *w -= step * m / ((v * inv_c2).sqrt() + eps);
    };
    let mut off = 0;
    for block in params.blocks_mut() {
        let end = off + block.len();
        let (m1, m2, g, fr) = (&mut state.m1[off..end], &mut state.m2[off..end], &grad[off..end], &frozen[off..end]);
        if fr.iter().any(|&f| f) {
            for (k, w) in block.iter_mut().enumerate() {
                if !fr[k] {
                    update(w, &mut m1[k], &mut m2[k], g[k]);
                }
            }
        } else {
            // Unmasked blocks are the common case; a plain zip vectorises.
            for (((w, a), b), &gk) in block.iter_mut().zip(m1.iter_mut()).zip(m2.iter_mut()).zip(g) {
                update(w, a, b, gk);
            }
        }
        off = end;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, Activation, LayerSpec};

    fn tiny() -> MlpParams<f64> {
        init_params(
            1,
            &[LayerSpec::new(2, Activation::Tanh), LayerSpec::new(1, Activation::Identity)],
            &[("p".into(), 1.0)],
            3,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_is_a_null_update() {
        let mut p = tiny();
        let before = p.clone();
        let n = p.num_leaves();
        let mut s = AdamState::new(n);
        adam_step(&mut s, &mut p, &vec![0.0; n], 1e-3, &vec![false; n]).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = tiny();
        let n = p.num_leaves();
        let mut g = vec![0.0; n];
        g[n - 1] = 0.5;
        let mut s = AdamState::new(n);
        adam_step(&mut s, &mut p, &g, 1e-4, &vec![false; n]).unwrap();
        // m_hat / sqrt(v_hat) = g / |g| on the first step.
        let moved = 1.0 - p.model_params.values[0];
        let want = 1e-4 * 0.5 / (0.5 + 1e-8);
        assert!((moved - want).abs() < 1e-15, "{moved}");
    }

    #[test]
    fn frozen_leaves_are_untouched() {
        let mut p = tiny();
        let n = p.num_leaves();
        let mut frozen = vec![false; n];
        frozen[n - 1] = true;
        let mut s = AdamState::new(n);
        for _ in 0..10 {
            adam_step(&mut s, &mut p, &vec![0.3; n], 1e-2, &frozen).unwrap();
        }
        assert_eq!(p.model_params.values[0].to_bits(), 1.0f64.to_bits());
        assert_eq!(s.m1[n - 1], 0.0);
        assert!(p.layers[0].bias[0] < 0.0);
    }

    #[test]
    fn non_finite_gradient_names_the_leaf() {
        let mut p = tiny();
        let before = p.clone();
        let n = p.num_leaves();
        let mut g = vec![0.0; n];
        g[2] = f64::NAN;
        let mut s = AdamState::new(n);
        let err = adam_step(&mut s, &mut p, &g, 1e-3, &vec![false; n]).unwrap_err();
        match err {
            TrainError::NonFiniteGradient { leaf, step } => {
                assert_eq!(leaf, "layer 1 bias[0]");
                assert_eq!(step, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p, before);
        assert_eq!(s.step_count, 0);
    }
}
