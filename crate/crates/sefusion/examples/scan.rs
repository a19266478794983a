// Scratch calibration runs for the synthetic-data acceptance tests.

use sefusion::data::synth::{synth_dataset, SynthConfig};
use sefusion::data::{Split, TaskId};
use sefusion::fusion::FusionConfig;
use sefusion::metrics::{confusion, per_class_f1, weighted_f1};
use sefusion::model::{train, HeadConfig, TrainConfig, TrainedModel};
use sefusion::numerics::Matrix;

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_default();
    if mode == "train" {
        trainability();
    } else {
        imbalance();
    }
}

fn trainability() {
    let dataset = synth_dataset(&SynthConfig {
        seed: 7,
        n_train: 300,
        n_validation: 60,
        n_test: 60,
        task: TaskId::A,
        separability: 1.0,
        proportions: None,
        text_dim: 768,
        image_dim: 512,
    })
    .unwrap();
    let start = std::time::Instant::now();
    let model: TrainedModel<f32> = train(
        &dataset,
        TaskId::A,
        FusionConfig::default(),
        HeadConfig::new(2, 3),
        &TrainConfig {
            epochs: 500,
            batch_size: 256,
            learning_rate: 1e-4,
            tau: 1.0,
            seed: 7,
            ..Default::default()
        },
    )
    .unwrap();
    let best = model
        .history
        .iter()
        .map(|h| h.validation_accuracy)
        .fold(0.0f64, f64::max);
    let first95 = model
        .history
        .iter()
        .find(|h| h.validation_accuracy >= 0.95)
        .map(|h| h.epoch);
    for h in model.history.iter().step_by(50) {
        println!(
            "epoch {:3} loss {:.4} val_acc {:.3}",
            h.epoch, h.train_loss, h.validation_accuracy
        );
    }
    println!(
        "best {best:.3} first>=0.95 {first95:?} elapsed {:?}",
        start.elapsed()
    );
}

fn imbalance() {
    for sep in [0.4f64, 0.55, 0.7] {
        for (epochs, lr) in [(120usize, 1e-4f64), (300, 1e-4), (120, 1e-3)] {
            let mut wf1 = [0.0f64; 2];
            let mut rec = [0.0f64; 2];
            for seed in 0..5u64 {
                let dataset = synth_dataset(&SynthConfig {
                    seed: 100 + seed,
                    n_train: 440,
                    n_validation: 88,
                    n_test: 88,
                    task: TaskId::B1,
                    separability: sep,
                    proportions: Some(vec![10.0 / 11.0, 1.0 / 11.0]),
                    text_dim: 32,
                    image_dim: 16,
                })
                .unwrap();
                let labeled = dataset.labeled(TaskId::B1, Split::Test);
                let records: Vec<_> = labeled.iter().map(|(r, _)| *r).collect();
                let gold: Vec<usize> = labeled.iter().map(|(_, l)| *l).collect();
                let (text, image) = dataset.feature_batch(&records);
                let (text, image) = (
                    Matrix::<f32>::from_f64_matrix(&text),
                    Matrix::<f32>::from_f64_matrix(&image),
                );
                for (slot, tau) in [(0usize, 0.0f64), (1, 1.0)] {
                    let model: TrainedModel<f32> = train(
                        &dataset,
                        TaskId::B1,
                        FusionConfig::new(32, 16, true).unwrap(),
                        HeadConfig::new(2, 2),
                        &TrainConfig {
                            epochs,
                            batch_size: 256,
                            learning_rate: lr,
                            tau,
                            seed,
                            ..Default::default()
                        },
                    )
                    .unwrap();
                    let pred = model.predict_classes(&text, &image).unwrap();
                    wf1[slot] += weighted_f1(&gold, &pred, 2).unwrap() / 5.0;
                    let cm = confusion(&gold, &pred, 2).unwrap();
                    rec[slot] += per_class_f1(&cm)[1].recall / 5.0;
                }
            }
            println!(
                "sep {sep:.2} epochs {epochs:3} lr {lr:.0e}: wf1 plain {:.3} adj {:.3} | minority recall plain {:.3} adj {:.3}",
                wf1[0], wf1[1], rec[0], rec[1]
            );
        }
    }
}
