//! Classification head over the fused features, the prior-adjusted loss,
//! the deterministic training loop with best-epoch selection, and prediction.

pub mod checkpoint;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split, TaskId, TaskSpec};
use crate::error::{Error, Result};
use crate::fusion::{sefusion_on_tape, FusionConfig, FusionParams};
use crate::metrics;
use crate::numerics::{AdamConfig, AdamState, Matrix, ParamId, ParamSet, Scalar, Tape, VarId};

/// Class counts and normalized probabilities over one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelPrior {
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
}

impl LabelPrior {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::usage("label prior needs at least one count"));
        }
        let probabilities = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(LabelPrior {
            counts,
            probabilities,
        })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    /// Add-one smoothing, for splits with absent classes.
    pub fn smooth_add_one(&self) -> LabelPrior {
        LabelPrior::from_counts(self.counts.iter().map(|&c| c + 1).collect())
            .expect("smoothed counts are positive")
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }

    /// τ·log(pᵢ) per class; requires every probability to be positive.
    pub fn log_adjustment(&self, tau: f64) -> Result<Vec<f64>> {
        if let Some(zero) = self.probabilities.iter().position(|&p| p <= 0.0) {
            return Err(Error::usage(format!(
                "class {zero} has zero prior probability; smooth the prior first"
            )));
        }
        Ok(self.probabilities.iter().map(|&p| tau * p.ln()).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FinalActivation {
    #[default]
    Softmax,
    /// Single-logit binary mode; only valid for two classes.
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// Total dense layers, hidden ReLU layers plus the output layer.
    pub n_layers: usize,
    pub hidden_width: usize,
    pub output_classes: usize,
    pub final_activation: FinalActivation,
}

impl HeadConfig {
    pub fn new(n_layers: usize, output_classes: usize) -> Self {
        HeadConfig {
            n_layers,
            hidden_width: 64,
            output_classes,
            final_activation: FinalActivation::Softmax,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::usage("head needs at least one layer"));
        }
        if self.output_classes < 2 {
            return Err(Error::usage("head needs at least two classes"));
        }
        if self.hidden_width == 0 {
            return Err(Error::usage("hidden width must be positive"));
        }
        if self.final_activation == FinalActivation::Sigmoid && self.output_classes != 2 {
            return Err(Error::usage(
                "sigmoid output mode is only defined for two classes",
            ));
        }
        Ok(())
    }

    /// Width of the final affine layer: one logit per class, or a single
    /// logit in sigmoid mode.
    pub fn output_width(&self) -> usize {
        match self.final_activation {
            FinalActivation::Softmax => self.output_classes,
            FinalActivation::Sigmoid => 1,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HeadLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct HeadParams {
    pub layers: Vec<HeadLayer>,
}

impl HeadParams {
    pub fn init<S: Scalar>(
        params: &mut ParamSet<S>,
        input_width: usize,
        cfg: &HeadConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        let mut width = input_width;
        for layer in 0..cfg.n_layers {
            let out_width = if layer + 1 == cfg.n_layers {
                cfg.output_width()
            } else {
                cfg.hidden_width
            };
            let weight = params.add_xavier(format!("head.w{layer}"), width, out_width, rng);
            let bias = params.add_zeros(format!("head.b{layer}"), 1, out_width);
            layers.push(HeadLayer { weight, bias });
            width = out_width;
        }
        Ok(HeadParams { layers })
    }
}

/// Hidden affine+ReLU layers followed by a final affine producing raw logits.
pub fn head_forward<S: Scalar>(
    fused: &Matrix<S>,
    params: &ParamSet<S>,
    head: &HeadParams,
) -> Result<Matrix<S>> {
    let mut x = fused.clone();
    for (i, layer) in head.layers.iter().enumerate() {
        x = crate::numerics::affine(
            &x,
            params.value(layer.weight),
            Some(params.value(layer.bias)),
        )?;
        if i + 1 != head.layers.len() {
            x = x.relu();
        }
    }
    Ok(x)
}

pub fn head_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    params: &ParamSet<S>,
    head: &HeadParams,
    fused: VarId,
) -> Result<VarId> {
    let mut x = fused;
    for (i, layer) in head.layers.iter().enumerate() {
        let w = tape.param(params, layer.weight);
        let b = tape.param(params, layer.bias);
        x = tape.affine(x, w, Some(b))?;
        if i + 1 != head.layers.len() {
            x = tape.relu(x);
        }
    }
    Ok(x)
}

/// Ablation path: the head applied to the plain concatenation of the two
/// feature rows, skipping the fusion block.
pub fn concat_baseline_forward<S: Scalar>(
    xt: &Matrix<S>,
    xi: &Matrix<S>,
    params: &ParamSet<S>,
    head: &HeadParams,
) -> Result<Matrix<S>> {
    head_forward(&xt.concat_cols(xi)?, params, head)
}

/// −log softmax(logits + τ·log prior)[label] for a single sample.
pub fn logit_adjusted_loss<S: Scalar>(
    logits: &Matrix<S>,
    label: usize,
    prior: &LabelPrior,
    tau: f64,
) -> Result<S> {
    if logits.rows() != 1 || logits.cols() != prior.classes() {
        return Err(Error::shape(
            "logit_adjusted_loss",
            format!("1x{}", prior.classes()),
            logits.shape_string(),
        ));
    }
    if label >= prior.classes() {
        return Err(Error::usage(format!(
            "label {label} out of range for {} classes",
            prior.classes()
        )));
    }
    let adjustment = Matrix::row_from_f64(&prior.log_adjustment(tau)?);
    let adjusted = logits.add_row_broadcast(&adjustment)?;
    Ok(-adjusted.log_softmax_rows().get(0, label))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMetric {
    /// Keep the epoch with the best validation accuracy (ties → earliest).
    #[default]
    Accuracy,
    WeightedF1,
}

impl std::str::FromStr for SelectionMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(SelectionMetric::Accuracy),
            "weighted-f1" => Ok(SelectionMetric::WeightedF1),
            other => Err(format!(
                "unknown selection metric `{other}` (expected accuracy or weighted-f1)"
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub seed: u64,
    pub smooth_prior: bool,
    pub selection: SelectionMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-4,
            tau: 1.0,
            seed: 0,
            smooth_prior: false,
            selection: SelectionMetric::Accuracy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: f64,
    pub validation_weighted_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedModel<S> {
    pub params: ParamSet<S>,
    pub fusion: FusionParams,
    pub head: HeadParams,
    pub head_config: HeadConfig,
    pub task: TaskId,
    pub prior: LabelPrior,
    pub tau: f64,
    pub seed: u64,
    pub history: Vec<EpochStats>,
    pub selected_epoch: Option<usize>,
}

impl<S: Scalar> TrainedModel<S> {
    pub fn spec(&self) -> &'static TaskSpec {
        TaskSpec::for_task(self.task)
    }

    /// Freshly initialized, untrained model.
    pub fn init(
        task: TaskId,
        fusion_cfg: FusionConfig,
        head_cfg: HeadConfig,
        prior: LabelPrior,
        tau: f64,
        seed: u64,
    ) -> Result<Self> {
        let spec = TaskSpec::for_task(task);
        if head_cfg.output_classes != spec.class_count {
            return Err(Error::usage(format!(
                "head has {} classes but task {task} has {}",
                head_cfg.output_classes, spec.class_count
            )));
        }
        if prior.classes() != spec.class_count {
            return Err(Error::usage(format!(
                "prior covers {} classes but task {task} has {}",
                prior.classes(),
                spec.class_count
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let fusion = FusionParams::init(&mut params, fusion_cfg, &mut rng)?;
        let head = HeadParams::init(&mut params, fusion_cfg.fused_width(), &head_cfg, &mut rng)?;
        Ok(TrainedModel {
            params,
            fusion,
            head,
            head_config: head_cfg,
            task,
            prior,
            tau,
            seed,
            history: Vec::new(),
            selected_epoch: None,
        })
    }

    fn adjustment_row(&self) -> Result<Matrix<S>> {
        let adj = self.prior.log_adjustment(self.tau)?;
        Ok(match self.head_config.final_activation {
            FinalActivation::Softmax => Matrix::row_from_f64(&adj),
            // Single-logit mode scores class 1 against class 0.
            FinalActivation::Sigmoid => Matrix::row_from_f64(&[adj[1] - adj[0]]),
        })
    }

    /// Raw logits for a batch (one sample per row).
    pub fn forward_logits(&self, xt: &Matrix<S>, xi: &Matrix<S>) -> Result<Matrix<S>> {
        let mut tape = Tape::new();
        let xt = tape.constant(xt.clone());
        let xi = tape.constant(xi.clone());
        let vars = sefusion_on_tape(&mut tape, &self.params, &self.fusion, xt, xi)?;
        let logits = head_on_tape(&mut tape, &self.params, &self.head, vars.fused)?;
        Ok(tape.value(logits).clone())
    }

    /// Adjusted class probabilities for a batch, consistent with the
    /// training-time adjustment.
    pub fn probabilities(&self, xt: &Matrix<S>, xi: &Matrix<S>) -> Result<Matrix<S>> {
        let logits = self.forward_logits(xt, xi)?;
        let adjusted = logits.add_row_broadcast(&self.adjustment_row()?)?;
        Ok(match self.head_config.final_activation {
            FinalActivation::Softmax => adjusted.softmax_rows(),
            FinalActivation::Sigmoid => {
                let p1 = adjusted.sigmoid();
                let mut probs = Matrix::zeros(p1.rows(), 2);
                for r in 0..p1.rows() {
                    probs.set(r, 0, S::ONE - p1.get(r, 0));
                    probs.set(r, 1, p1.get(r, 0));
                }
                probs
            }
        })
    }

    /// Predicted classes for a batch; argmax ties resolve to the lowest index.
    pub fn predict_classes(&self, xt: &Matrix<S>, xi: &Matrix<S>) -> Result<Vec<usize>> {
        let probs = self.probabilities(xt, xi)?;
        Ok((0..probs.rows()).map(|r| probs.argmax_row(r)).collect())
    }
}

#[derive(Clone, Debug)]
pub struct Prediction<S> {
    pub class: usize,
    pub probabilities: Matrix<S>,
}

/// Single-sample prediction.
pub fn predict<S: Scalar>(
    model: &TrainedModel<S>,
    xt: &Matrix<S>,
    xi: &Matrix<S>,
) -> Result<Prediction<S>> {
    if xt.rows() != 1 || xt.cols() != model.fusion.config.text_dim {
        return Err(Error::shape(
            "predict text features",
            format!("1x{}", model.fusion.config.text_dim),
            xt.shape_string(),
        ));
    }
    if xi.rows() != 1 || xi.cols() != model.fusion.config.image_dim {
        return Err(Error::shape(
            "predict image features",
            format!("1x{}", model.fusion.config.image_dim),
            xi.shape_string(),
        ));
    }
    let probabilities = model.probabilities(xt, xi)?;
    let class = probabilities.argmax_row(0);
    Ok(Prediction {
        class,
        probabilities,
    })
}

struct SplitTensors<S> {
    text: Matrix<S>,
    image: Matrix<S>,
    labels: Vec<usize>,
}

fn split_tensors<S: Scalar>(dataset: &Dataset, task: TaskId, split: Split) -> SplitTensors<S> {
    let labeled = dataset.labeled(task, split);
    let records: Vec<_> = labeled.iter().map(|(r, _)| *r).collect();
    let labels = labeled.iter().map(|(_, l)| *l).collect();
    let (text, image) = dataset.feature_batch(&records);
    SplitTensors {
        text: Matrix::from_f64_matrix(&text),
        image: Matrix::from_f64_matrix(&image),
        labels,
    }
}

fn gather_rows<S: Scalar>(source: &Matrix<S>, indices: &[usize]) -> Matrix<S> {
    let mut data = Vec::with_capacity(indices.len() * source.cols());
    for &i in indices {
        data.extend_from_slice(source.row_slice(i));
    }
    Matrix::from_vec(indices.len(), source.cols(), data).expect("gathered rows")
}

/// Trains one sub-task with mini-batch Adam, recording per-epoch train loss
/// and validation scores, and returns the model restored to the best epoch
/// under the selection metric (ties → earliest). Fully deterministic for a
/// given seed.
pub fn train<S: Scalar>(
    dataset: &Dataset,
    task: TaskId,
    fusion_cfg: FusionConfig,
    head_cfg: HeadConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel<S>> {
    let spec = TaskSpec::for_task(task);
    fusion_cfg.validate()?;
    if dataset.text_dim != fusion_cfg.text_dim || dataset.image_dim != fusion_cfg.image_dim {
        return Err(Error::usage(format!(
            "dataset features are {}+{} wide, model expects {}+{}",
            dataset.text_dim, dataset.image_dim, fusion_cfg.text_dim, fusion_cfg.image_dim
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::usage("batch size must be positive"));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::usage("learning rate must be positive"));
    }

    let train_data: SplitTensors<S> = split_tensors(dataset, task, Split::Train);
    if train_data.labels.is_empty() {
        return Err(Error::usage(format!(
            "train split has no labels for task {task}"
        )));
    }
    let mut prior = crate::data::compute_priors(dataset, task, Split::Train)?;
    if prior.counts.iter().any(|&c| c == 0) {
        if cfg.smooth_prior {
            prior = prior.smooth_add_one();
        } else {
            let missing = prior.counts.iter().position(|&c| c == 0).unwrap();
            return Err(Error::usage(format!(
                "class `{}` is absent from the train split for task {task}; \
                 enable prior smoothing (--smooth-prior) to proceed",
                spec.label_names[missing]
            )));
        }
    }

    let mut model =
        TrainedModel::<S>::init(task, fusion_cfg, head_cfg, prior, cfg.tau, cfg.seed)?;
    if cfg.epochs == 0 {
        return Ok(model);
    }

    let val_data: SplitTensors<S> = split_tensors(dataset, task, Split::Validation);
    if val_data.labels.is_empty() {
        return Err(Error::usage(format!(
            "validation split has no labels for task {task}"
        )));
    }

    let adjustment = model.adjustment_row()?;
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..Default::default()
        },
    );
    // Init already consumed draws from the model seed; shuffling gets its own
    // deterministic stream.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let n_train = train_data.labels.len();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut best: Option<(usize, f64)> = None;
    let mut best_snapshot = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let xt = gather_rows(&train_data.text, chunk);
            let xi = gather_rows(&train_data.image, chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train_data.labels[i]).collect();

            let mut tape = Tape::new();
            let xt = tape.constant(xt);
            let xi = tape.constant(xi);
            let vars = sefusion_on_tape(&mut tape, &model.params, &model.fusion, xt, xi)?;
            let logits = head_on_tape(&mut tape, &model.params, &model.head, vars.fused)?;
            let adj = tape.constant(adjustment.clone());
            let adjusted = tape.add_row(logits, adj)?;
            let loss = match model.head_config.final_activation {
                FinalActivation::Softmax => tape.mean_nll(adjusted, &labels)?,
                FinalActivation::Sigmoid => tape.mean_bce_logit(adjusted, &labels)?,
            };
            let loss_value = tape.scalar_value(loss)?.to_f64();
            if !loss_value.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became non-finite at epoch {epoch}"
                )));
            }
            loss_sum += loss_value * chunk.len() as f64;
            tape.backward(loss, &mut model.params)?;
            adam.step(&mut model.params)?;
        }

        let predictions = model.predict_classes(&val_data.text, &val_data.image)?;
        let accuracy = metrics::accuracy(&val_data.labels, &predictions)?;
        let weighted_f1 =
            metrics::weighted_f1(&val_data.labels, &predictions, spec.class_count)?;
        model.history.push(EpochStats {
            epoch,
            train_loss: loss_sum / n_train as f64,
            validation_accuracy: accuracy,
            validation_weighted_f1: weighted_f1,
        });

        let score = match cfg.selection {
            SelectionMetric::Accuracy => accuracy,
            SelectionMetric::WeightedF1 => weighted_f1,
        };
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((epoch, score));
            best_snapshot = Some(model.params.snapshot_values());
        }
    }

    if let (Some((epoch, _)), Some(snapshot)) = (best, best_snapshot) {
        model.params.restore_values(&snapshot)?;
        model.selected_epoch = Some(epoch);
    }
    Ok(model)
}
