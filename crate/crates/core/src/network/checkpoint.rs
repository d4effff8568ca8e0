use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Dense, MlpParams, ModelParams, NetworkError};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "pinnforge-ckpt-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
    /// Row-major `rows x cols`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// On-disk parameter snapshot. Values are stored as `f64` whatever the
/// training precision was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub scalar: String,
    pub input_dim: usize,
    pub layers: Vec<CheckpointLayer>,
    pub model_param_names: Vec<String>,
    pub model_param_values: Vec<f64>,
}

impl Checkpoint {
    pub fn from_params<T: Scalar>(params: &MlpParams<T>) -> Self {
        let to64 = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            scalar: T::NAME.to_string(),
            input_dim: params.input_dim,
            layers: params
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    rows: l.outputs,
                    cols: l.inputs,
                    activation: l.activation,
                    weights: to64(&l.weights),
                    bias: to64(&l.bias),
                })
                .collect(),
            model_param_names: params.model_params.names.clone(),
            model_param_values: to64(&params.model_params.values),
        }
    }

    pub fn into_params<T: Scalar>(self) -> Result<MlpParams<T>, NetworkError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NetworkError::Checkpoint(format!("unsupported format {:?}", self.format)));
        }
        if self.model_param_names.len() != self.model_param_values.len() {
            return Err(NetworkError::Checkpoint("model parameter names and values differ in length".into()));
        }
        let from64 = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<_>>();
        let layers = self
            .layers
            .into_iter()
            .map(|l| Dense {
                inputs: l.cols,
                outputs: l.rows,
                weights: from64(l.weights),
                bias: from64(l.bias),
                activation: l.activation,
            })
            .collect();
        let model = ModelParams { names: self.model_param_names, values: from64(self.model_param_values) };
        MlpParams::from_layers(self.input_dim, layers, model)
    }
}

pub fn save_checkpoint<T: Scalar>(params: &MlpParams<T>, path: &Path) -> Result<(), NetworkError> {
    let text = serde_json::to_string(&Checkpoint::from_params(params))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<MlpParams<T>, NetworkError> {
    let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
    ckpt.into_params()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, LayerSpec};

    #[test]
    fn checkpoint_round_trip_is_exact_in_f64() {
        let p = init_params::<f64>(
            1,
            &[LayerSpec::new(4, Activation::Sin), LayerSpec::new(2, Activation::Identity)],
            &[("alpha".into(), 1.0), ("beta".into(), 0.4)],
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&p, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(CHECKPOINT_FORMAT));
        let q: MlpParams<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_foreign_format_and_bad_shapes() {
        let p = init_params::<f32>(2, &[LayerSpec::new(1, Activation::Identity)], &[], 0).unwrap();
        let mut c = Checkpoint::from_params(&p);
        c.format = "other".into();
        assert!(c.clone().into_params::<f32>().is_err());
        c.format = CHECKPOINT_FORMAT.into();
        c.layers[0].weights.pop();
        assert!(c.into_params::<f32>().is_err());
    }
}
