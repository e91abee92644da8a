//! Command implementations. Each returns `Ok(())` or a [`CliError`] carrying
//! the exit code: 1 runtime, 2 config, 3 incompatible pair.

use std::path::Path;

use tslearn_core::data::{dump_records, make_synthetic};
use tslearn_core::model::parse_input_shape;
use tslearn_core::{
    evaluate, persist, train_student, train_teacher, write_metrics_csv, EpochMetrics, TrainMode,
};

use crate::config::{DataConfig, Document, Experiment};
use crate::CliError;

fn print_progress(history: &[EpochMetrics]) {
    if let Some(m) = history.last() {
        println!(
            "epoch {:>4}  lr {:<10}  loss {:<12.6}  train_acc {:.4}  test_acc {:.4}",
            m.epoch, m.lr, m.loss_total, m.train_acc, m.test_acc
        );
    }
}

pub fn train_teacher_cmd(config: &Path, out: &Path, metrics: &Path) -> Result<(), CliError> {
    let doc = Document::load(config)?;
    let experiment = Experiment::from_document(&doc)?;
    if experiment.train.mode != TrainMode::Teacher {
        return Err(CliError::config(format!(
            "train-teacher requires mode = teacher, config says '{}'",
            experiment.train.mode.as_str()
        )));
    }
    let (train, test) = experiment.data.load()?;
    let (model, history) =
        train_teacher(&experiment.train, &train, &test).map_err(CliError::runtime_from)?;
    print_progress(&history);
    persist::save(&model, out).map_err(CliError::runtime_from)?;
    write_metrics_csv(metrics, &history).map_err(CliError::runtime_from)?;
    println!("teacher checkpoint written to {}", out.display());
    Ok(())
}

pub fn train_student_cmd(
    config: &Path,
    teacher: Option<&Path>,
    out: &Path,
    metrics: &Path,
) -> Result<(), CliError> {
    let doc = Document::load(config)?;
    let experiment = Experiment::from_document(&doc)?;
    let mode = experiment.train.mode;
    if mode == TrainMode::Teacher {
        return Err(CliError::config(
            "train-student requires a student mode, config says 'teacher'".into(),
        ));
    }
    let teacher_model = match (mode.needs_teacher(), teacher) {
        (true, Some(path)) => Some(persist::load(path).map_err(CliError::runtime_from)?),
        (true, None) => {
            return Err(CliError::config(format!(
                "mode '{}' requires --teacher CHECKPOINT",
                mode.as_str()
            )))
        }
        (false, Some(_)) => {
            return Err(CliError::config(
                "mode 'student_plain' never uses a teacher; drop --teacher".into(),
            ))
        }
        (false, None) => None,
    };
    let (train, test) = experiment.data.load()?;
    let (model, history) = train_student(
        &experiment.train,
        &train,
        &test,
        teacher_model.as_ref(),
    )
    .map_err(CliError::from_core)?;
    print_progress(&history);
    persist::save(&model, out).map_err(CliError::runtime_from)?;
    write_metrics_csv(metrics, &history).map_err(CliError::runtime_from)?;
    println!("student checkpoint written to {}", out.display());
    Ok(())
}

pub fn eval_cmd(model_path: &Path, data_config: &Path) -> Result<(), CliError> {
    let doc = Document::load(data_config)?;
    let data = DataConfig::from_document(&doc)?;
    let model = persist::load(model_path).map_err(CliError::runtime_from)?;
    let (_, test) = data.load()?;
    let accuracy = evaluate(&model, &test).map_err(CliError::runtime_from)?;
    println!("accuracy={accuracy:.4}");
    Ok(())
}

pub fn gen_data_cmd(
    kind: &str,
    classes: usize,
    per_class: usize,
    seed: u64,
    shape: &str,
    out: &Path,
) -> Result<(), CliError> {
    if kind != "synthetic" {
        return Err(CliError::config(format!(
            "unknown data kind '{kind}' (only 'synthetic' can be generated)"
        )));
    }
    let shape = parse_input_shape(shape).map_err(CliError::config_from)?;
    let dataset =
        make_synthetic::<f32>(classes, per_class, shape, seed).map_err(CliError::config_from)?;
    dump_records(&dataset, out).map_err(CliError::runtime_from)?;
    println!(
        "wrote {} records of {} bytes to {}",
        dataset.len(),
        1 + shape.0 * shape.1 * shape.2,
        out.display()
    );
    Ok(())
}

pub fn inspect_cmd(model_path: &Path) -> Result<(), CliError> {
    let model = persist::load(model_path).map_err(CliError::runtime_from)?;
    let spec = model.spec();
    println!("spec:");
    for line in spec.canonical_text().lines() {
        println!("  {line}");
    }
    let count: usize = model.parameters().iter().map(|p| p.value.numel()).sum();
    println!("parameters = {count}");
    println!(
        "frozen = {}",
        if model.mode() == tslearn_core::Mode::Frozen { "yes" } else { "no" }
    );
    Ok(())
}
