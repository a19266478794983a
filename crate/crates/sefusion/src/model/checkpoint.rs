//! Versioned model checkpoint container. Parameter values are encoded as
//! 64-bit floats regardless of the training precision, so a save/load round
//! trip is bit-exact in either mode.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::TaskId;
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::model::{EpochStats, HeadConfig, LabelPrior, TrainedModel};
use crate::numerics::{Matrix, ParamSet, Precision, Scalar};

pub const CHECKPOINT_FORMAT: &str = "sefusion-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub task: TaskId,
    pub precision: Precision,
    pub seed: u64,
    pub tau: f64,
    pub text_dim: usize,
    pub image_dim: usize,
    pub fusion_biases: bool,
    pub head: HeadConfig,
    pub prior: LabelPrior,
    parameters: Vec<ParamEntry>,
    pub history: Vec<EpochStats>,
    pub selected_epoch: Option<usize>,
}

/// Training history as written beside the checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
    pub selected_epoch: Option<usize>,
}

impl Checkpoint {
    pub fn from_model<S: Scalar>(model: &TrainedModel<S>) -> Self {
        let parameters = model
            .params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                values: p.value.data().iter().map(|v| v.to_f64()).collect(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            task: model.task,
            precision: S::PRECISION,
            seed: model.seed,
            tau: model.tau,
            text_dim: model.fusion.config.text_dim,
            image_dim: model.fusion.config.image_dim,
            fusion_biases: model.fusion.config.biases,
            head: model.head_config,
            prior: model.prior.clone(),
            parameters,
            history: model.history.clone(),
            selected_epoch: model.selected_epoch,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::data(format!(
                "not a checkpoint file (format `{}`)",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::data(format!(
                "unsupported checkpoint version {} (this build reads version {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        Ok(())
    }

    /// Reconstructs the model in precision `S` by replaying the parameter
    /// registration order and installing the stored values.
    pub fn into_model<S: Scalar>(&self) -> Result<TrainedModel<S>> {
        self.validate()?;
        let fusion_cfg = FusionConfig::new(self.text_dim, self.image_dim, self.fusion_biases)?;
        let mut model = TrainedModel::<S>::init(
            self.task,
            fusion_cfg,
            self.head,
            self.prior.clone(),
            self.tau,
            self.seed,
        )?;
        if self.parameters.len() != model.params.len() {
            return Err(Error::data(format!(
                "checkpoint stores {} parameters, model defines {}",
                self.parameters.len(),
                model.params.len()
            )));
        }
        let ids: Vec<_> = model.params.ids().collect();
        for (id, entry) in ids.into_iter().zip(&self.parameters) {
            let expected = model.params.value(id);
            if model.params.name(id) != entry.name
                || expected.shape() != (entry.rows, entry.cols)
            {
                return Err(Error::data(format!(
                    "checkpoint parameter `{}` ({}x{}) does not match model parameter `{}` ({})",
                    entry.name,
                    entry.rows,
                    entry.cols,
                    model.params.name(id),
                    expected.shape_string(),
                )));
            }
            let values: Vec<S> = entry.values.iter().map(|&v| S::from_f64(v)).collect();
            *model.params.value_mut(id) = Matrix::from_vec(entry.rows, entry.cols, values)?;
        }
        model.history = self.history.clone();
        model.selected_epoch = self.selected_epoch;
        Ok(model)
    }
}

/// A model restored from disk, in whichever precision it was trained.
pub enum LoadedModel {
    F32(TrainedModel<f32>),
    F64(TrainedModel<f64>),
}

impl LoadedModel {
    pub fn task(&self) -> TaskId {
        match self {
            LoadedModel::F32(m) => m.task,
            LoadedModel::F64(m) => m.task,
        }
    }

    pub fn text_dim(&self) -> usize {
        match self {
            LoadedModel::F32(m) => m.fusion.config.text_dim,
            LoadedModel::F64(m) => m.fusion.config.text_dim,
        }
    }

    pub fn image_dim(&self) -> usize {
        match self {
            LoadedModel::F32(m) => m.fusion.config.image_dim,
            LoadedModel::F64(m) => m.fusion.config.image_dim,
        }
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::data(format!("checkpoint is not UTF-8: {e}")))?;
    let checkpoint: Checkpoint =
        serde_json::from_str(text).map_err(|e| Error::data(format!("invalid checkpoint: {e}")))?;
    checkpoint.validate()?;
    Ok(checkpoint)
}

pub fn save_checkpoint<S: Scalar>(model: &TrainedModel<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, Checkpoint::from_model(model).to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<LoadedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let checkpoint = parse_checkpoint(&bytes).map_err(|e| match e {
        Error::Data { line, message, .. } => Error::Data {
            path: Some(path.to_path_buf()),
            line,
            message,
        },
        other => other,
    })?;
    Ok(match checkpoint.precision {
        Precision::F32 => LoadedModel::F32(checkpoint.into_model()?),
        Precision::F64 => LoadedModel::F64(checkpoint.into_model()?),
    })
}

/// Round-trip helper for the parameter set alone, used in tests.
pub fn values_equal<S: Scalar>(a: &ParamSet<S>, b: &ParamSet<S>) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| x.name == y.name && x.value == y.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_dataset, SynthConfig};
    use crate::model::{train, TrainConfig};

    fn trained_f32() -> TrainedModel<f32> {
        let ds = synth_dataset(&SynthConfig {
            seed: 3,
            n_train: 24,
            n_validation: 9,
            n_test: 9,
            task: TaskId::A,
            separability: 1.0,
            proportions: None,
            text_dim: 8,
            image_dim: 4,
        })
        .unwrap();
        train(
            &ds,
            TaskId::A,
            FusionConfig::new(8, 4, true).unwrap(),
            HeadConfig::new(2, 3),
            &TrainConfig {
                epochs: 3,
                seed: 17,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact_for_f32() {
        let model = trained_f32();
        let json = Checkpoint::from_model(&model).to_json();
        let back = parse_checkpoint(json.as_bytes()).unwrap();
        let restored: TrainedModel<f32> = back.into_model().unwrap();
        assert!(values_equal(&model.params, &restored.params));
        assert_eq!(model.history, restored.history);
        assert_eq!(model.selected_epoch, restored.selected_epoch);
        assert_eq!(model.prior, restored.prior);

        // Serializing again reproduces the same bytes.
        let json2 = Checkpoint::from_model(&restored).to_json();
        assert_eq!(json, json2);
    }

    #[test]
    fn round_trip_is_bit_exact_for_f64() {
        let prior = LabelPrior::from_counts(vec![1, 2]).unwrap();
        let model = TrainedModel::<f64>::init(
            TaskId::B2,
            FusionConfig::new(6, 4, false).unwrap(),
            HeadConfig::new(2, 2),
            prior,
            0.5,
            9,
        )
        .unwrap();
        let json = Checkpoint::from_model(&model).to_json();
        let restored: TrainedModel<f64> = parse_checkpoint(json.as_bytes())
            .unwrap()
            .into_model()
            .unwrap();
        assert!(values_equal(&model.params, &restored.params));
    }

    #[test]
    fn rejects_foreign_and_future_files() {
        assert!(parse_checkpoint(b"{}").is_err());
        assert!(parse_checkpoint(b"not json at all").is_err());
        let model = trained_f32();
        let mut cp = Checkpoint::from_model(&model);
        cp.version = 99;
        let err = parse_checkpoint(cp.to_json().as_bytes()).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn file_round_trip_through_loaded_model() {
        let model = trained_f32();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&model, &path).unwrap();
        match load_checkpoint(&path).unwrap() {
            LoadedModel::F32(m) => {
                assert!(values_equal(&model.params, &m.params));
                assert_eq!(m.task, TaskId::A);
            }
            LoadedModel::F64(_) => panic!("expected an f32 checkpoint"),
        }
    }
}

