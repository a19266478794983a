//! Command-line pipeline: synthesize feature files, train per sub-task,
//! evaluate, predict, and merge reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
//! failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::data::format::{load_dataset, write_dataset};
use crate::data::synth::{synth_dataset, SynthConfig};
use crate::data::{render_summary, summarize, Dataset, Split, TaskId, TaskSpec};
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::metrics;
use crate::model::checkpoint::{
    load_checkpoint, save_checkpoint, LoadedModel, TrainingHistory,
};
use crate::model::{
    train, FinalActivation, HeadConfig, SelectionMetric, TrainConfig, TrainedModel,
};
use crate::numerics::{Matrix, Precision, Scalar};
use crate::report::{load_report, save_report, EvalReport, TaskScores};

#[derive(Parser, Debug)]
#[command(
    name = "sefusion",
    version,
    about = "Squeeze-and-excitation fusion pipeline for multi-modal classification"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a deterministic synthetic feature file and print its summary
    Synth(SynthArgs),
    /// Train one sub-task; writes checkpoint, history, and prior files
    Train(TrainArgs),
    /// Compute weighted-F1 scores for one checkpoint or a task group
    Eval(EvalArgs),
    /// Write one prediction line per record of a feature file
    Predict(PredictArgs),
    /// Merge evaluation reports into one table with group averages
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Sub-task to label (A, B1-B4, C1-C4)
    #[arg(long)]
    task: TaskId,
    /// Output feature file (.gz for the compressed variant)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train-split size; validation and test default to a fifth each
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_validation: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 0 = indistinguishable classes, 1 = fully separable clusters
    #[arg(long, default_value_t = 1.0)]
    separability: f64,
    /// Per-class shares, e.g. 0.33,0.42,0.25
    #[arg(long, value_delimiter = ',')]
    proportions: Option<Vec<f64>>,
    #[arg(long, default_value_t = 768)]
    text_dim: usize,
    #[arg(long, default_value_t = 512)]
    image_dim: usize,
    #[arg(long, env = "SEFUSION_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    task: Option<TaskId>,
    /// Feature file to train on
    #[arg(long)]
    data: Option<PathBuf>,
    /// Config file with RunConfig fields; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "SEFUSION_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Logit-adjustment strength; 0 disables the prior term
    #[arg(long)]
    tau: Option<f64>,
    /// Dense layers in the head (defaults: 2 for A/B tasks, 5 for C tasks)
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    hidden_width: Option<usize>,
    /// Bias terms on the fusion layers (true for the trained form, false for
    /// the bias-free one)
    #[arg(long)]
    fusion_biases: Option<bool>,
    /// Single-logit sigmoid output instead of softmax (binary tasks only)
    #[arg(long)]
    sigmoid_head: bool,
    #[arg(long)]
    precision: Option<Precision>,
    /// Apply add-one smoothing when a class is absent from the train split
    #[arg(long)]
    smooth_prior: bool,
    /// Model selection metric: accuracy or weighted-f1
    #[arg(long)]
    select_metric: Option<SelectionMetric>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Feature file to score
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint for single-task evaluation
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Task group (B or C); requires --checkpoints with the four members
    #[arg(long)]
    group: Option<String>,
    /// Comma-separated checkpoints covering the group
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<PathBuf>,
    /// Splits to score
    #[arg(long, value_delimiter = ',', default_values_t = vec![Split::Train, Split::Validation, Split::Test])]
    splits: Vec<Split>,
    /// Report output path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "SEFUSION_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Predictions output path (tab-separated: id, class, probabilities)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "SEFUSION_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Evaluation report files to merge
    #[arg(long, value_delimiter = ',', required = true)]
    evals: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "SEFUSION_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

/// On-disk run configuration; any field may be omitted.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub task: Option<TaskId>,
    pub data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub n_layers: Option<usize>,
    pub hidden_width: Option<usize>,
    pub tau: Option<f64>,
    pub fusion_biases: Option<bool>,
    pub sigmoid_head: Option<bool>,
    pub precision: Option<Precision>,
    pub out_dir: Option<PathBuf>,
    pub smooth_prior: Option<bool>,
    pub select_metric: Option<SelectionMetric>,
}

pub fn parse_run_config(bytes: &[u8]) -> Result<RunConfigFile> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::data(format!("config is not UTF-8: {e}")))?;
    serde_json::from_str(text).map_err(|e| Error::data(format!("invalid config: {e}")))
}

fn load_run_config(path: &Path) -> Result<RunConfigFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_run_config(&bytes).map_err(|e| match e {
        Error::Data { line, message, .. } => Error::Data {
            path: Some(path.to_path_buf()),
            line,
            message,
        },
        other => other,
    })
}

/// Effective settings after merging flags over the config file over defaults.
#[derive(Debug)]
struct ResolvedRun {
    task: TaskId,
    data: PathBuf,
    seed: u64,
    batch_size: usize,
    learning_rate: f64,
    epochs: usize,
    n_layers: Option<usize>,
    hidden_width: usize,
    tau: f64,
    fusion_biases: bool,
    sigmoid_head: bool,
    precision: Precision,
    out_dir: PathBuf,
    smooth_prior: bool,
    select_metric: SelectionMetric,
}

fn resolve_run(args: &TrainArgs) -> Result<ResolvedRun> {
    let file = match &args.config {
        Some(path) => load_run_config(path)?,
        None => RunConfigFile::default(),
    };
    let task = args
        .task
        .or(file.task)
        .ok_or_else(|| Error::usage("no task given (use --task or the config file)"))?;
    let data = args
        .data
        .clone()
        .or(file.data)
        .ok_or_else(|| Error::usage("no feature file given (use --data or the config file)"))?;
    Ok(ResolvedRun {
        task,
        data,
        seed: args.seed.or(file.seed).unwrap_or(0),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(256),
        learning_rate: args.learning_rate.or(file.learning_rate).unwrap_or(1e-4),
        epochs: args.epochs.or(file.epochs).unwrap_or(100),
        n_layers: args.n_layers.or(file.n_layers),
        hidden_width: args.hidden_width.or(file.hidden_width).unwrap_or(64),
        tau: args.tau.or(file.tau).unwrap_or(1.0),
        fusion_biases: args.fusion_biases.or(file.fusion_biases).unwrap_or(true),
        sigmoid_head: args.sigmoid_head || file.sigmoid_head.unwrap_or(false),
        precision: args.precision.or(file.precision).unwrap_or(Precision::F32),
        out_dir: args
            .out_dir
            .clone()
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from(".")),
        smooth_prior: args.smooth_prior || file.smooth_prior.unwrap_or(false),
        select_metric: args
            .select_metric
            .or(file.select_metric)
            .unwrap_or_default(),
    })
}

/// Head depth default: 2 dense layers for the A and binary tasks, 5 for the
/// scale tasks.
fn default_layers(task: TaskId) -> usize {
    match task {
        TaskId::C1 | TaskId::C2 | TaskId::C3 => 5,
        _ => 2,
    }
}

fn out_dir_of(explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: args.seed,
        n_train: args.n_train.unwrap_or(args.n),
        n_validation: args.n_validation.unwrap_or(args.n / 5),
        n_test: args.n_test.unwrap_or(args.n / 5),
        task: args.task,
        separability: args.separability,
        proportions: args.proportions.clone(),
        text_dim: args.text_dim,
        image_dim: args.image_dim,
    };
    let dataset = synth_dataset(&cfg)?;
    let out = match args.out {
        Some(path) => path,
        None => {
            let dir = out_dir_of(&args.out_dir);
            ensure_dir(&dir)?;
            dir.join(format!("synth-{}.jsonl", args.task))
        }
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_dataset(&dataset, &out)?;
    print!("{}", render_summary(&summarize(&dataset)));
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let run = resolve_run(&args)?;
    let dataset = load_dataset(&run.data)?;
    let spec = TaskSpec::for_task(run.task);
    let fusion_cfg = FusionConfig::new(dataset.text_dim, dataset.image_dim, run.fusion_biases)?;
    let head_cfg = HeadConfig {
        n_layers: run.n_layers.unwrap_or_else(|| default_layers(run.task)),
        hidden_width: run.hidden_width,
        output_classes: spec.class_count,
        final_activation: if run.sigmoid_head {
            FinalActivation::Sigmoid
        } else {
            FinalActivation::Softmax
        },
    };
    let train_cfg = TrainConfig {
        epochs: run.epochs,
        batch_size: run.batch_size,
        learning_rate: run.learning_rate,
        tau: run.tau,
        seed: run.seed,
        smooth_prior: run.smooth_prior,
        selection: run.select_metric,
    };

    ensure_dir(&run.out_dir)?;
    match run.precision {
        Precision::F32 => {
            let model: TrainedModel<f32> =
                train(&dataset, run.task, fusion_cfg, head_cfg, &train_cfg)?;
            finish_train(&model, &run)
        }
        Precision::F64 => {
            let model: TrainedModel<f64> =
                train(&dataset, run.task, fusion_cfg, head_cfg, &train_cfg)?;
            finish_train(&model, &run)
        }
    }
}

fn finish_train<S: Scalar>(model: &TrainedModel<S>, run: &ResolvedRun) -> Result<()> {
    let checkpoint_path = run.out_dir.join(format!("checkpoint-{}.json", model.task));
    save_checkpoint(model, &checkpoint_path)?;

    let history = TrainingHistory {
        epochs: model.history.clone(),
        selected_epoch: model.selected_epoch,
    };
    let history_path = run.out_dir.join(format!("history-{}.json", model.task));
    std::fs::write(
        &history_path,
        serde_json::to_string_pretty(&history).expect("history serializes"),
    )
    .map_err(|e| Error::io(&history_path, e))?;

    let prior_path = run.out_dir.join(format!("prior-{}.json", model.task));
    std::fs::write(
        &prior_path,
        serde_json::to_string_pretty(&model.prior).expect("prior serializes"),
    )
    .map_err(|e| Error::io(&prior_path, e))?;

    match model.selected_epoch {
        Some(epoch) => {
            let stats = &model.history[epoch];
            println!(
                "task {}: selected epoch {epoch} (validation accuracy {:.4}, weighted-F1 {:.4})",
                model.task, stats.validation_accuracy, stats.validation_weighted_f1
            );
        }
        None => println!("task {}: wrote initialized model (no epochs)", model.task),
    }
    println!("wrote {}", checkpoint_path.display());
    Ok(())
}

fn check_dims(model: &LoadedModel, dataset: &Dataset) -> Result<()> {
    if model.text_dim() != dataset.text_dim || model.image_dim() != dataset.image_dim {
        return Err(Error::data(format!(
            "checkpoint expects {}+{} wide features, dataset provides {}+{}",
            model.text_dim(),
            model.image_dim(),
            dataset.text_dim,
            dataset.image_dim
        )));
    }
    Ok(())
}

fn eval_scores<S: Scalar>(
    model: &TrainedModel<S>,
    dataset: &Dataset,
    splits: &[Split],
) -> Result<TaskScores> {
    let spec = model.spec();
    let mut scores = TaskScores::default();
    for &split in splits {
        let labeled = dataset.labeled(model.task, split);
        if labeled.is_empty() {
            return Err(Error::data(format!(
                "split `{split}` has no labels for task {} in this feature file",
                model.task
            )));
        }
        let records: Vec<_> = labeled.iter().map(|(r, _)| *r).collect();
        let gold: Vec<usize> = labeled.iter().map(|(_, l)| *l).collect();
        let (text, image) = dataset.feature_batch(&records);
        let predictions = model.predict_classes(
            &Matrix::from_f64_matrix(&text),
            &Matrix::from_f64_matrix(&image),
        )?;
        scores.set(
            split,
            metrics::weighted_f1(&gold, &predictions, spec.class_count)?,
        );
    }
    Ok(scores)
}

fn eval_loaded(model: &LoadedModel, dataset: &Dataset, splits: &[Split]) -> Result<TaskScores> {
    check_dims(model, dataset)?;
    match model {
        LoadedModel::F32(m) => eval_scores(m, dataset, splits),
        LoadedModel::F64(m) => eval_scores(m, dataset, splits),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let mut report = EvalReport::new();
    let label;

    match (&args.checkpoint, &args.group) {
        (Some(path), None) => {
            let model = load_checkpoint(path)?;
            let scores = eval_loaded(&model, &dataset, &args.splits)?;
            for split in &args.splits {
                report.insert(model.task(), *split, scores.get(*split).unwrap());
            }
            label = model.task().to_string();
        }
        (None, Some(group)) => {
            let members: &[TaskId] = match group.as_str() {
                "B" | "b" => &TaskId::GROUP_B,
                "C" | "c" => &TaskId::GROUP_C,
                other => {
                    return Err(Error::usage(format!(
                        "unknown task group `{other}` (expected B or C)"
                    )))
                }
            };
            if args.checkpoints.len() != members.len() {
                return Err(Error::usage(format!(
                    "group {group} needs {} checkpoints, got {}",
                    members.len(),
                    args.checkpoints.len()
                )));
            }
            let mut seen = Vec::new();
            for path in &args.checkpoints {
                let model = load_checkpoint(path)?;
                if !members.contains(&model.task()) {
                    return Err(Error::usage(format!(
                        "checkpoint {} is for task {}, not part of group {group}",
                        path.display(),
                        model.task()
                    )));
                }
                if seen.contains(&model.task()) {
                    return Err(Error::usage(format!(
                        "duplicate checkpoint for task {}",
                        model.task()
                    )));
                }
                seen.push(model.task());
                let scores = eval_loaded(&model, &dataset, &args.splits)?;
                for split in &args.splits {
                    report.insert(model.task(), *split, scores.get(*split).unwrap());
                }
            }
            label = format!("group-{}", group.to_uppercase());
        }
        _ => {
            return Err(Error::usage(
                "pass either --checkpoint for one task or --group with --checkpoints",
            ))
        }
    }

    report.compute_group_averages()?;
    print!("{}", report.render_text());
    let out = match args.out {
        Some(path) => path,
        None => {
            let dir = out_dir_of(&args.out_dir);
            ensure_dir(&dir)?;
            dir.join(format!("report-{label}.json"))
        }
    };
    save_report(&report, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn predict_lines<S: Scalar>(model: &TrainedModel<S>, dataset: &Dataset) -> Result<String> {
    let spec = model.spec();
    let mut out = String::new();
    if dataset.records.is_empty() {
        return Ok(out);
    }
    let records: Vec<_> = dataset.records.iter().collect();
    let (text, image) = dataset.feature_batch(&records);
    let probs = model.probabilities(
        &Matrix::from_f64_matrix(&text),
        &Matrix::from_f64_matrix(&image),
    )?;
    for (row, record) in records.iter().enumerate() {
        let class = probs.argmax_row(row);
        let cells: Vec<String> = probs
            .row_slice(row)
            .iter()
            .map(|p| p.to_f64().to_string())
            .collect();
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            record.id,
            spec.label_names[class],
            cells.join(",")
        ));
    }
    Ok(out)
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.data)?;
    check_dims(&model, &dataset)?;
    let lines = match &model {
        LoadedModel::F32(m) => predict_lines(m, &dataset)?,
        LoadedModel::F64(m) => predict_lines(m, &dataset)?,
    };
    let out = match args.out {
        Some(path) => path,
        None => {
            let dir = out_dir_of(&args.out_dir);
            ensure_dir(&dir)?;
            dir.join(format!("predictions-{}.tsv", model.task()))
        }
    };
    std::fs::write(&out, lines).map_err(|e| Error::io(&out, e))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut merged = EvalReport::new();
    for path in &args.evals {
        let report = load_report(path)?;
        merged.merge(&report)?;
    }
    merged.compute_group_averages()?;
    print!("{}", merged.render_text());
    let out = match args.out {
        Some(path) => path,
        None => {
            let dir = out_dir_of(&args.out_dir);
            ensure_dir(&dir)?;
            dir.join("report-all.json")
        }
    };
    save_report(&merged, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_merges_under_flags() {
        let file: RunConfigFile = parse_run_config(
            br#"{"task":"B1","data":"x.jsonl","epochs":5,"learning_rate":0.01}"#,
        )
        .unwrap();
        assert_eq!(file.task, Some(TaskId::B1));
        assert_eq!(file.epochs, Some(5));
        // Unknown fields are rejected.
        assert!(parse_run_config(br#"{"lr":0.1}"#).is_err());
    }

    #[test]
    fn default_head_depth_follows_task_group() {
        assert_eq!(default_layers(TaskId::A), 2);
        assert_eq!(default_layers(TaskId::B3), 2);
        assert_eq!(default_layers(TaskId::B4), 2);
        assert_eq!(default_layers(TaskId::C2), 5);
    }
}
