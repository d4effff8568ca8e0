//! Published experiment settings: evaluation grids, observation counts,
//! architectures, activations and learning rates of the four benchmarks.

use crate::network::{Activation, LayerSpec};
use crate::problems::ProblemKind;

/// Grid row: per-axis `(lo, hi, points)`, time axis first.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub axes: &'static [(f64, f64, usize)],
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureRow {
    pub input: usize,
    pub hidden: &'static [usize],
    pub output: usize,
    pub activations: &'static [Activation],
    pub learning_rate: f64,
}

/// LV time grid: 20,000 points `t_k = k h`, `h = 0.005`, `k = 1..=20000`.
pub const LV_STEP: f64 = 0.005;

pub fn grid_row(kind: ProblemKind) -> GridRow {
    match kind {
        ProblemKind::Transport1d => GridRow { axes: &[(0.0, 1.0, 17), (0.0, 1.0, 100)], observations: 17 },
        ProblemKind::Heat2d => GridRow { axes: &[(0.0, 1.0, 100), (0.0, 1.0, 100), (0.0, 1.0, 100)], observations: 13 },
        ProblemKind::Wave2d => GridRow { axes: &[(0.0, 1.0, 100), (0.0, 1.0, 100), (0.0, 1.0, 100)], observations: 61 },
        ProblemKind::LotkaVolterra => GridRow { axes: &[(LV_STEP, 100.0, 20_000)], observations: 40 },
    }
}

/// Architecture row. The output width counts every network output, so the
/// heat and wave rows include the auxiliary first-order fields (the printed
/// table lists the single physical output).
pub fn architecture_row(kind: ProblemKind) -> ArchitectureRow {
    use Activation::*;
    match kind {
        ProblemKind::Transport1d => ArchitectureRow {
            input: 2,
            hidden: &[128, 256, 128],
            output: 1,
            activations: &[Relu, Relu, Relu],
            learning_rate: 1e-5,
        },
        ProblemKind::Heat2d => ArchitectureRow {
            input: 3,
            hidden: &[128, 128],
            output: 3,
            activations: &[Sin, Sigmoid],
            learning_rate: 1e-5,
        },
        ProblemKind::Wave2d => ArchitectureRow {
            input: 3,
            hidden: &[128, 256, 128],
            output: 4,
            activations: &[Sin, Tanh, Tanh],
            learning_rate: 1e-5,
        },
        ProblemKind::LotkaVolterra => {
            ArchitectureRow { input: 1, hidden: &[64, 64], output: 2, activations: &[Sin, Sin], learning_rate: 1e-4 }
        }
    }
}

impl ArchitectureRow {
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.hidden
            .iter()
            .zip(self.activations)
            .map(|(&w, &a)| LayerSpec::new(w, a))
            .chain(std::iter::once(LayerSpec::new(self.output, Activation::Identity)))
            .collect()
    }
}
