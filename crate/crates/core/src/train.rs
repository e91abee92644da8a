//! The two-phase teacher-student training protocol.
//!
//! Phase one trains a teacher with plain softmax cross-entropy. Phase two
//! freezes the teacher and trains a student on a combined loss: cross-entropy
//! against the labels plus a weighted feature regression onto the teacher's
//! penultimate activations, optionally over batches expanded with
//! teacher-labelled random images.
//!
//! Every run is a pure function of `(config, dataset)`: initialization,
//! shuffling, and augmentation draw from separate seeded generators, so
//! ablations vary one factor at a time and repeated runs are bitwise
//! identical. When the feature weight is exactly zero the teacher is never
//! consulted and the reported feature loss is zero, which makes the
//! degenerate student run step-for-step identical to a plain run.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::augment::{expand_batch, AugmentConfig, LcgState};
use crate::autodiff::graph::{Graph, Reduction};
use crate::autodiff::tensor::Tensor;
use crate::data::{batches, BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::model::{build_model, validate_pair, Mode, ModelState, NetworkSpec};
use crate::optim::{Adam, AdamHyper, LrSchedule};
use crate::Scalar;

/// The experiment family: one teacher phase and three student variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Teacher,
    StudentPlain,
    StudentTeacher,
    StudentTeacherAug,
}

impl TrainMode {
    pub fn parse(value: &str) -> Result<Self> {
        match value {
            "teacher" => Ok(TrainMode::Teacher),
            "student_plain" => Ok(TrainMode::StudentPlain),
            "student_teacher" => Ok(TrainMode::StudentTeacher),
            "student_teacher_aug" => Ok(TrainMode::StudentTeacherAug),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected teacher, student_plain, student_teacher, student_teacher_aug)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Teacher => "teacher",
            TrainMode::StudentPlain => "student_plain",
            TrainMode::StudentTeacher => "student_teacher",
            TrainMode::StudentTeacherAug => "student_teacher_aug",
        }
    }

    pub fn needs_teacher(&self) -> bool {
        matches!(self, TrainMode::StudentTeacher | TrainMode::StudentTeacherAug)
    }
}

/// Independent seeds for the three random streams of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub init: u64,
    pub shuffle: u64,
    pub augment: u64,
}

/// Complete description of one training run.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Spec of the network being trained.
    pub spec: NetworkSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_mse: f64,
    pub lambda_xent: f64,
    pub xent_reduction: Reduction,
    pub adam: AdamHyper,
    pub schedule: LrSchedule,
    pub augment: Option<AugmentConfig>,
    pub seeds: Seeds,
    pub drop_last: bool,
}

/// Per-epoch record of losses, accuracies, learning rate, and wall time.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_xent: f64,
    pub loss_mse: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub seconds: f64,
}

/// Trains a teacher with plain cross-entropy.
pub fn train_teacher<T: Scalar>(
    config: &TrainConfig,
    train_data: &Dataset<T>,
    test_data: &Dataset<T>,
) -> Result<(ModelState<T>, Vec<EpochMetrics>)> {
    if config.mode != TrainMode::Teacher {
        return Err(Error::Usage(format!(
            "train_teacher requires mode 'teacher', got '{}'",
            config.mode.as_str()
        )));
    }
    check_data_compatibility(config, train_data, test_data)?;
    run_loop(config, train_data, test_data, None, 0.0, 1.0)
}

/// Trains a student in one of the three modes. `teacher` must be a frozen
/// model in the teacher-assisted modes and absent in the plain mode.
pub fn train_student<T: Scalar>(
    config: &TrainConfig,
    train_data: &Dataset<T>,
    test_data: &Dataset<T>,
    teacher: Option<&ModelState<T>>,
) -> Result<(ModelState<T>, Vec<EpochMetrics>)> {
    match config.mode {
        TrainMode::Teacher => {
            return Err(Error::Usage(
                "train_student cannot run in mode 'teacher'".into(),
            ))
        }
        TrainMode::StudentPlain => {
            if teacher.is_some() {
                return Err(Error::Usage(
                    "mode 'student_plain' never evaluates a teacher; none must be supplied".into(),
                ));
            }
            if config.lambda_mse != 0.0 {
                return Err(Error::Config(format!(
                    "mode 'student_plain' requires lambda_mse = 0, got {}",
                    config.lambda_mse
                )));
            }
        }
        TrainMode::StudentTeacher | TrainMode::StudentTeacherAug => {
            let teacher = teacher.ok_or_else(|| {
                Error::Usage(format!(
                    "mode '{}' requires a teacher model",
                    config.mode.as_str()
                ))
            })?;
            if teacher.mode() != Mode::Frozen {
                return Err(Error::Usage("the teacher must be frozen".into()));
            }
            let report = validate_pair(teacher.spec(), &config.spec);
            if !report.is_compatible() {
                return Err(Error::Incompatible(report));
            }
            if teacher.spec().input_shape != config.spec.input_shape {
                return Err(Error::Config(format!(
                    "teacher input shape {:?} differs from student input shape {:?}",
                    teacher.spec().input_shape,
                    config.spec.input_shape
                )));
            }
        }
    }
    if config.mode == TrainMode::StudentTeacherAug {
        let augment = config
            .augment
            .as_ref()
            .ok_or_else(|| Error::Config("mode 'student_teacher_aug' requires an augment section".into()))?;
        if augment.image_shape != config.spec.input_shape {
            return Err(Error::Config(format!(
                "augment image shape {:?} differs from network input shape {:?}",
                augment.image_shape, config.spec.input_shape
            )));
        }
    } else if let Some(augment) = &config.augment {
        if augment.images_per_batch != 0 {
            return Err(Error::Config(format!(
                "mode '{}' does not expand batches; set images_per_batch = 0",
                config.mode.as_str()
            )));
        }
    }
    check_data_compatibility(config, train_data, test_data)?;
    run_loop(
        config,
        train_data,
        test_data,
        teacher,
        config.lambda_mse,
        config.lambda_xent,
    )
}

fn check_data_compatibility<T: Scalar>(
    config: &TrainConfig,
    train_data: &Dataset<T>,
    test_data: &Dataset<T>,
) -> Result<()> {
    config.spec.validate()?;
    for (name, ds) in [("train", train_data), ("test", test_data)] {
        if ds.classes() != config.spec.num_classes {
            return Err(Error::Config(format!(
                "{name} split has {} classes but the network emits {}",
                ds.classes(),
                config.spec.num_classes
            )));
        }
        if ds.image_shape() != config.spec.input_shape {
            return Err(Error::Config(format!(
                "{name} split images are {:?} but the network expects {:?}",
                ds.image_shape(),
                config.spec.input_shape
            )));
        }
    }
    if config.batch_size == 0 || config.batch_size > train_data.len() {
        return Err(Error::Config(format!(
            "batch size {} is invalid for a train split of {}",
            config.batch_size,
            train_data.len()
        )));
    }
    if config.lambda_mse < 0.0 || config.lambda_xent < 0.0 {
        return Err(Error::Config("loss weights must be non-negative".into()));
    }
    Ok(())
}

fn run_loop<T: Scalar>(
    config: &TrainConfig,
    train_data: &Dataset<T>,
    test_data: &Dataset<T>,
    teacher: Option<&ModelState<T>>,
    lambda_mse: f64,
    lambda_xent: f64,
) -> Result<(ModelState<T>, Vec<EpochMetrics>)> {
    let mut model = build_model::<T>(&config.spec, config.seeds.init)?;
    let mut optimizer = Adam::with_hyper(T::from_f64_lossy(config.schedule.lr_at(0)), config.adam);
    let plan = BatchPlan {
        shuffle_seed: config.seeds.shuffle,
        batch_size: config.batch_size,
        drop_last: config.drop_last,
    };

    // The feature term is active only when a teacher exists and its weight is
    // nonzero; otherwise the teacher is never consulted, the term is never
    // recorded, and the reported feature loss is exactly zero.
    let use_feature_term = teacher.is_some() && lambda_mse != 0.0;
    let expand = config.mode == TrainMode::StudentTeacherAug
        && config.augment.as_ref().is_some_and(|a| a.images_per_batch > 0);
    let mut generator: Option<LcgState> = match (&config.augment, expand) {
        (Some(augment), true) => {
            let mut state = augment.clone();
            state.seed = config.seeds.augment;
            Some(state.initial_state()?)
        }
        _ => None,
    };

    let weight_mse = T::from_f64_lossy(lambda_mse);
    let weight_xent = T::from_f64_lossy(lambda_xent);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = config.schedule.lr_at(epoch);
        optimizer.set_lr(T::from_f64_lossy(lr));

        let mut xent_weighted = 0.0f64;
        let mut mse_weighted = 0.0f64;
        let mut loss_rows = 0usize;
        let mut correct = 0usize;
        let mut real_rows = 0usize;

        for (images, targets) in batches(train_data, &plan, epoch)? {
            let real_m = images.shape()[0];
            let (images, targets) = if expand {
                let augment = config.augment.as_ref().expect("checked above");
                let teacher = teacher.expect("aug mode requires a teacher");
                let state = generator.take().expect("generator initialized");
                let (xi, xt, next) = expand_batch(&images, &targets, augment, state, teacher)?;
                generator = Some(next);
                (xi, xt)
            } else {
                (images, targets)
            };
            let rows = images.shape()[0];

            let mut graph = Graph::new();
            let bound = model.bind(&mut graph)?;
            let (features, logits) = model.forward_recorded(&mut graph, &bound, &images)?;

            correct += count_matches(graph.value(logits), &targets, real_m);
            real_rows += real_m;

            let xent = graph.cross_entropy(logits, &targets, config.xent_reduction)?;
            let mut mse_value = 0.0f64;
            let loss = if use_feature_term {
                let teacher = teacher.expect("feature term requires a teacher");
                let (teacher_features, _) = teacher.forward(&images)?;
                let mse = graph.mse_feature(features, &teacher_features)?;
                mse_value = mse.value().to_f64().unwrap_or(f64::NAN);
                graph.combined(&mse, &xent, weight_mse, weight_xent)?
            } else {
                graph.weighted(&[(weight_xent, &xent)])?
            };
            graph.backward(&loss)?;

            let grads: Vec<Tensor<T>> = bound
                .param_ids()
                .iter()
                .map(|id| graph.grad(*id).cloned())
                .collect::<Result<_>>()?;
            optimizer.step(model.parameters_mut()?, grads)?;

            let batch_weight = rows as f64;
            xent_weighted += xent.value().to_f64().unwrap_or(f64::NAN) * batch_weight;
            mse_weighted += mse_value * batch_weight;
            loss_rows += rows;
        }

        let loss_xent = xent_weighted / loss_rows as f64;
        let loss_mse = mse_weighted / loss_rows as f64;
        let loss_total = lambda_mse * loss_mse + lambda_xent * loss_xent;
        let train_acc = correct as f64 / real_rows as f64;
        let test_acc = evaluate(&model, test_data)?;
        history.push(EpochMetrics {
            epoch,
            lr,
            loss_total,
            loss_xent,
            loss_mse,
            train_acc,
            test_acc,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    Ok((model, history))
}

fn argmax_row<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0usize;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Counts rows (among the first `limit`) whose predicted class matches the
/// one-hot target.
fn count_matches<T: Scalar>(logits: &Tensor<T>, targets: &Tensor<T>, limit: usize) -> usize {
    let classes = logits.shape()[1];
    let mut correct = 0;
    for i in 0..limit {
        let predicted = argmax_row(&logits.data()[i * classes..(i + 1) * classes]);
        if targets.data()[i * classes + predicted] == T::one() {
            correct += 1;
        }
    }
    correct
}

/// Fraction of samples whose argmax logit equals the ground-truth label.
/// Deterministic; records no gradient state.
pub fn evaluate<T: Scalar>(model: &ModelState<T>, dataset: &Dataset<T>) -> Result<f64> {
    const CHUNK: usize = 128;
    let n = dataset.len();
    let mut correct = 0usize;
    let mut start = 0usize;
    while start < n {
        let end = (start + CHUNK).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (images, _) = dataset.gather(&indices);
        let (_, logits) = model.forward(&images)?;
        let classes = logits.shape()[1];
        for (row, &index) in indices.iter().enumerate() {
            let predicted = argmax_row(&logits.data()[row * classes..(row + 1) * classes]);
            if predicted == dataset.labels()[index] as usize {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(correct as f64 / n as f64)
}

/// CSV header for metrics files.
pub const METRICS_HEADER: &str = "epoch,lr,loss_total,loss_xent,loss_mse,train_acc,test_acc,seconds";

/// Renders metrics as CSV text (decimal point, one row per epoch).
pub fn metrics_csv_string(history: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.3}",
            m.epoch, m.lr, m.loss_total, m.loss_xent, m.loss_mse, m.train_acc, m.test_acc, m.seconds
        );
    }
    out
}

pub fn write_metrics_csv(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    std::fs::write(path, metrics_csv_string(history))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;
    use crate::model::LayerSpec;

    fn tiny_spec(classes: usize) -> NetworkSpec {
        NetworkSpec {
            input_shape: (1, 6, 6),
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Linear { out_features: 8 },
                LayerSpec::Relu,
            ],
            feature_dim: 8,
            num_classes: classes,
        }
    }

    fn tiny_config(mode: TrainMode, epochs: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            mode,
            spec: tiny_spec(4),
            epochs,
            batch_size: 8,
            lambda_mse: if mode.needs_teacher() { 1.0 } else { 0.0 },
            lambda_xent: 1.0,
            xent_reduction: Reduction::Mean,
            adam: AdamHyper::default(),
            schedule: LrSchedule::new(lr, 50, 0.1).unwrap(),
            augment: None,
            seeds: Seeds { init: 1, shuffle: 2, augment: 3 },
            drop_last: false,
        }
    }

    fn datasets() -> (Dataset<f32>, Dataset<f32>) {
        (
            make_synthetic(4, 8, (1, 6, 6), 100).unwrap(),
            make_synthetic(4, 4, (1, 6, 6), 200).unwrap(),
        )
    }

    #[test]
    fn zero_learning_rate_is_a_no_learning_baseline() {
        let (train, test) = datasets();
        let config = tiny_config(TrainMode::Teacher, 1, 0.0);
        let initial = build_model::<f32>(&config.spec, config.seeds.init).unwrap();
        let (model, history) = train_teacher(&config, &train, &test).unwrap();
        assert_eq!(model.parameters(), initial.parameters());
        // A fresh model predicts close to uniformly; the tolerance covers the
        // logit spread Kaiming initialization produces at these widths.
        assert!((history[0].loss_xent - 4.0f64.ln()).abs() < 0.75, "{}", history[0].loss_xent);
    }

    #[test]
    fn identical_configs_train_identical_models() {
        let (train, test) = datasets();
        let config = tiny_config(TrainMode::Teacher, 3, 0.01);
        let (a, ha) = train_teacher(&config, &train, &test).unwrap();
        let (b, hb) = train_teacher(&config, &train, &test).unwrap();
        assert_eq!(a.parameters(), b.parameters());
        for (x, y) in ha.iter().zip(hb.iter()) {
            assert_eq!(x.loss_total.to_bits(), y.loss_total.to_bits());
            assert_eq!(x.test_acc.to_bits(), y.test_acc.to_bits());
        }
    }

    #[test]
    fn degenerate_student_matches_plain_and_teacher_runs_bitwise() {
        let (train, test) = datasets();
        let teacher_model = build_model::<f32>(&tiny_spec(4), 77).unwrap().frozen();

        let mut plain_cfg = tiny_config(TrainMode::StudentPlain, 3, 0.005);
        plain_cfg.lambda_mse = 0.0;
        let (plain_model, plain_history) =
            train_student(&plain_cfg, &train, &test, None).unwrap();

        let mut degenerate_cfg = tiny_config(TrainMode::StudentTeacher, 3, 0.005);
        degenerate_cfg.lambda_mse = 0.0;
        let (degenerate_model, degenerate_history) =
            train_student(&degenerate_cfg, &train, &test, Some(&teacher_model)).unwrap();

        let teacher_cfg = tiny_config(TrainMode::Teacher, 3, 0.005);
        let (teacher_as_plain, teacher_history) =
            train_teacher(&teacher_cfg, &train, &test).unwrap();

        assert_eq!(plain_model.parameters(), degenerate_model.parameters());
        assert_eq!(plain_model.parameters(), teacher_as_plain.parameters());
        for ((p, d), t) in plain_history
            .iter()
            .zip(degenerate_history.iter())
            .zip(teacher_history.iter())
        {
            assert_eq!(p.loss_total.to_bits(), d.loss_total.to_bits());
            assert_eq!(p.loss_total.to_bits(), t.loss_total.to_bits());
            assert_eq!(p.loss_mse, 0.0);
            assert_eq!(d.loss_mse, 0.0);
        }
    }

    #[test]
    fn student_initialized_at_teacher_weights_is_a_fixed_point() {
        let (train, test) = datasets();
        let teacher_model = build_model::<f32>(&tiny_spec(4), 1).unwrap().frozen();

        let mut config = tiny_config(TrainMode::StudentTeacher, 3, 0.01);
        config.lambda_mse = 1.0;
        config.lambda_xent = 0.0;
        // Same spec, same init seed: the student starts at the teacher.
        let (student, history) =
            train_student(&config, &train, &test, Some(&teacher_model)).unwrap();
        for epoch in &history {
            assert_eq!(epoch.loss_mse, 0.0);
            assert_eq!(epoch.loss_total, 0.0);
        }
        assert_eq!(student.parameters(), teacher_model.parameters());
    }

    #[test]
    fn feature_loss_descends_under_pure_regression() {
        let (train, test) = datasets();
        let teacher_model = build_model::<f32>(&tiny_spec(4), 900).unwrap().frozen();
        let mut config = tiny_config(TrainMode::StudentTeacher, 10, 1e-4);
        config.lambda_mse = 1.0;
        config.lambda_xent = 0.0;
        config.seeds.init = 901;
        let (_, history) = train_student(&config, &train, &test, Some(&teacher_model)).unwrap();
        for pair in history.windows(2) {
            assert!(
                pair[1].loss_mse <= pair[0].loss_mse + 1e-12,
                "feature loss rose: {} -> {}",
                pair[0].loss_mse,
                pair[1].loss_mse
            );
        }
    }

    #[test]
    fn teacher_parameters_survive_a_student_run_bitwise() {
        let (train, test) = datasets();
        let teacher_model = build_model::<f32>(&tiny_spec(4), 55).unwrap().frozen();
        let before = teacher_model.parameters().to_vec();
        let mut config = tiny_config(TrainMode::StudentTeacher, 10, 0.005);
        config.seeds.init = 56;
        let _ = train_student(&config, &train, &test, Some(&teacher_model)).unwrap();
        assert_eq!(teacher_model.parameters(), &before[..]);
    }

    #[test]
    fn incompatible_pair_is_rejected_before_training() {
        let (train, test) = datasets();
        let mut wide = tiny_spec(4);
        wide.layers[1] = LayerSpec::Linear { out_features: 16 };
        wide.feature_dim = 16;
        let teacher_model = build_model::<f32>(&wide, 3).unwrap().frozen();
        let config = tiny_config(TrainMode::StudentTeacher, 1, 0.01);
        let err = train_student(&config, &train, &test, Some(&teacher_model)).unwrap_err();
        assert!(matches!(err, Error::Incompatible(_)));
    }

    #[test]
    fn unfrozen_teacher_is_rejected() {
        let (train, test) = datasets();
        let teacher_model = build_model::<f32>(&tiny_spec(4), 3).unwrap();
        let config = tiny_config(TrainMode::StudentTeacher, 1, 0.01);
        assert!(matches!(
            train_student(&config, &train, &test, Some(&teacher_model)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn plain_mode_rejects_nonzero_feature_weight_and_teachers() {
        let (train, test) = datasets();
        let mut config = tiny_config(TrainMode::StudentPlain, 1, 0.01);
        config.lambda_mse = 0.5;
        assert!(matches!(
            train_student(&config, &train, &test, None),
            Err(Error::Config(_))
        ));
        let config = tiny_config(TrainMode::StudentPlain, 1, 0.01);
        let teacher_model = build_model::<f32>(&tiny_spec(4), 3).unwrap().frozen();
        assert!(matches!(
            train_student(&config, &train, &test, Some(&teacher_model)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn constant_predictor_scores_chance_accuracy() {
        let data = make_synthetic::<f32>(10, 10, (1, 6, 6), 5).unwrap();
        let mut model = build_model::<f32>(&tiny_spec(10), 1).unwrap();
        model.zero_parameters().unwrap();
        let accuracy = evaluate(&model, &data).unwrap();
        assert_eq!(accuracy, 0.1);
    }

    #[test]
    fn evaluate_matches_manual_count_on_eight_samples() {
        let data = make_synthetic::<f32>(4, 2, (1, 6, 6), 31).unwrap();
        let model = build_model::<f32>(&tiny_spec(4), 17).unwrap();
        let indices: Vec<usize> = (0..8).collect();
        let (images, _) = data.gather(&indices);
        let (_, logits) = model.forward(&images).unwrap();
        let mut expected = 0usize;
        for i in 0..8 {
            let row = &logits.data()[i * 4..(i + 1) * 4];
            let predicted = (0..4).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
            if predicted == data.labels()[i] as usize {
                expected += 1;
            }
        }
        let accuracy = evaluate(&model, &data).unwrap();
        assert_eq!(accuracy, expected as f64 / 8.0);
    }

    #[test]
    fn reported_loss_decomposes_every_epoch() {
        let (train, test) = datasets();
        let teacher_model = build_model::<f32>(&tiny_spec(4), 7).unwrap().frozen();
        let mut config = tiny_config(TrainMode::StudentTeacher, 4, 0.01);
        config.lambda_mse = 0.6;
        config.lambda_xent = 1.2;
        config.seeds.init = 8;
        let (_, history) = train_student(&config, &train, &test, Some(&teacher_model)).unwrap();
        for m in &history {
            let recombined = 0.6 * m.loss_mse + 1.2 * m.loss_xent;
            assert!((m.loss_total - recombined).abs() < 1e-9);
            assert!(m.loss_mse >= 0.0 && m.loss_xent >= 0.0);
            assert!((0.0..=1.0).contains(&m.train_acc));
            assert!((0.0..=1.0).contains(&m.test_acc));
        }
    }

    #[test]
    fn csv_has_one_row_per_epoch_with_fixed_header() {
        let history = vec![EpochMetrics {
            epoch: 0,
            lr: 0.001,
            loss_total: 1.5,
            loss_xent: 1.0,
            loss_mse: 0.5,
            train_acc: 0.25,
            test_acc: 0.5,
            seconds: 0.125,
        }];
        let text = metrics_csv_string(&history);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), METRICS_HEADER);
        assert_eq!(lines.next().unwrap(), "0,0.001,1.5,1,0.5,0.25,0.5,0.125");
        assert!(lines.next().is_none());
    }
}
