//! Experiment config files: `#` comments, `[section]` headers, `key = value`
//! entries. Unknown sections, unknown keys, and duplicate keys are hard
//! errors with line numbers, so a typo in a hyperparameter can never silently
//! change an experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tslearn_core::data::{load_cifar10, load_records, make_synthetic};
use tslearn_core::model::parse_input_shape;
use tslearn_core::{
    AdamHyper, AugmentConfig, Dataset, LrSchedule, NetworkSpec, Reduction, Seeds, TrainConfig,
    TrainMode,
};

use crate::CliError;

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "experiment",
        &["mode", "epochs", "batch_size", "lambda_mse", "lambda_xent", "xent_reduction", "drop_last"],
    ),
    ("teacher", &["input_shape", "layers", "feature_dim", "num_classes"]),
    ("student", &["input_shape", "layers", "feature_dim", "num_classes"]),
    ("optimizer", &["lr", "decay_every", "decay_factor", "beta1", "beta2", "epsilon"]),
    (
        "augment",
        &["images_per_batch", "label_mode", "lcg_multiplier", "lcg_increment", "lcg_modulus"],
    ),
    (
        "data",
        &[
            "kind",
            "dir",
            "train_path",
            "test_path",
            "classes",
            "shape",
            "per_class_train",
            "per_class_test",
            "seed_train",
            "seed_test",
        ],
    ),
    ("seeds", &["init", "shuffle", "augment"]),
];

fn allowed_keys(section: &str) -> Option<&'static [&'static str]> {
    SECTIONS.iter().find(|(name, _)| *name == section).map(|(_, keys)| *keys)
}

struct Entry {
    value: String,
    line: usize,
}

#[derive(Default)]
pub struct Section {
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }
}

/// A parsed config file: sections of key/value entries with line numbers.
pub struct Document {
    path: PathBuf,
    sections: BTreeMap<String, Section>,
}

impl Document {
    pub fn load(path: &Path) -> Result<Document, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Document, CliError> {
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (index, raw) in text.lines().enumerate() {
            let line_no = index + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    CliError::config(format!("line {line_no}: malformed section header '{line}'"))
                })?;
                let name = name.trim();
                if allowed_keys(name).is_none() {
                    return Err(CliError::config(format!(
                        "line {line_no}: unknown section [{name}]"
                    )));
                }
                if sections.contains_key(name) {
                    return Err(CliError::config(format!(
                        "line {line_no}: duplicate section [{name}]"
                    )));
                }
                sections.insert(name.to_string(), Section::default());
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("line {line_no}: expected 'key = value', got '{line}'"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let section_name = current.as_ref().ok_or_else(|| {
                CliError::config(format!("line {line_no}: key '{key}' appears before any [section]"))
            })?;
            let allowed = allowed_keys(section_name).expect("validated section");
            if !allowed.contains(&key) {
                return Err(CliError::config(format!(
                    "line {line_no}: unknown key '{key}' in section [{section_name}]"
                )));
            }
            let section = sections.get_mut(section_name).expect("current section exists");
            if let Some(existing) = section.entries.get(key) {
                return Err(CliError::config(format!(
                    "line {line_no}: duplicate key '{key}' in section [{section_name}] (first on line {})",
                    existing.line
                )));
            }
            section.entries.insert(
                key.to_string(),
                Entry { value: value.to_string(), line: line_no },
            );
        }
        Ok(Document { path: path.to_path_buf(), sections })
    }

    fn section(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }

    fn require_section(&self, name: &str) -> Result<&Section, CliError> {
        self.section(name).ok_or_else(|| {
            CliError::config(format!(
                "{}: missing required section [{name}]",
                self.path.display()
            ))
        })
    }

    fn forbid_section(&self, name: &str, why: &str) -> Result<(), CliError> {
        if self.sections.contains_key(name) {
            return Err(CliError::config(format!(
                "{}: section [{name}] is not used here ({why})",
                self.path.display()
            )));
        }
        Ok(())
    }
}

fn require<'a>(section: &'a Section, section_name: &str, key: &str) -> Result<&'a str, CliError> {
    section.get(key).ok_or_else(|| {
        CliError::config(format!(
            "missing required key '{key}' in section [{section_name}]"
        ))
    })
}

fn parse_value<T: std::str::FromStr>(
    section: &Section,
    section_name: &str,
    key: &str,
    value: &str,
) -> Result<T, CliError> {
    value.parse().map_err(|_| {
        let line = section.entries.get(key).map(|e| e.line).unwrap_or(0);
        CliError::config(format!(
            "line {line}: invalid value '{value}' for '{key}' in section [{section_name}]"
        ))
    })
}

fn required<T: std::str::FromStr>(
    section: &Section,
    section_name: &str,
    key: &str,
) -> Result<T, CliError> {
    let value = require(section, section_name, key)?;
    parse_value(section, section_name, key, value)
}

fn optional<T: std::str::FromStr>(
    section: &Section,
    section_name: &str,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    match section.get(key) {
        Some(value) => parse_value(section, section_name, key, value),
        None => Ok(default),
    }
}

fn network_spec(section: &Section, name: &str) -> Result<NetworkSpec, CliError> {
    let input_shape = parse_input_shape(require(section, name, "input_shape")?)
        .map_err(|e| CliError::config(format!("[{name}] {e}")))?;
    let layers = tslearn_core::model::parse_layer_list(require(section, name, "layers")?)
        .map_err(|e| CliError::config(format!("[{name}] {e}")))?;
    let spec = NetworkSpec {
        input_shape,
        layers,
        feature_dim: required(section, name, "feature_dim")?,
        num_classes: required(section, name, "num_classes")?,
    };
    spec.validate()
        .map_err(|e| CliError::config(format!("[{name}] {e}")))?;
    Ok(spec)
}

/// Where the experiment's data comes from.
pub enum DataConfig {
    Cifar10 {
        dir: PathBuf,
    },
    Records {
        train_path: PathBuf,
        test_path: PathBuf,
        classes: usize,
        shape: (usize, usize, usize),
    },
    Synthetic {
        classes: usize,
        per_class_train: usize,
        per_class_test: usize,
        shape: (usize, usize, usize),
        seed_train: u64,
        seed_test: u64,
    },
}

impl DataConfig {
    pub fn from_document(doc: &Document) -> Result<DataConfig, CliError> {
        let section = doc.require_section("data")?;
        let kind = require(section, "data", "kind")?;
        let only = |keys: &[&str]| -> Result<(), CliError> {
            for (key, entry) in &section.entries {
                if key != "kind" && !keys.contains(&key.as_str()) {
                    return Err(CliError::config(format!(
                        "line {}: key '{key}' does not apply to data kind '{kind}'",
                        entry.line
                    )));
                }
            }
            Ok(())
        };
        match kind {
            "cifar10" => {
                only(&["dir"])?;
                Ok(DataConfig::Cifar10 {
                    dir: PathBuf::from(require(section, "data", "dir")?),
                })
            }
            "records" => {
                only(&["train_path", "test_path", "classes", "shape"])?;
                Ok(DataConfig::Records {
                    train_path: PathBuf::from(require(section, "data", "train_path")?),
                    test_path: PathBuf::from(require(section, "data", "test_path")?),
                    classes: required(section, "data", "classes")?,
                    shape: parse_input_shape(require(section, "data", "shape")?)
                        .map_err(|e| CliError::config(format!("[data] {e}")))?,
                })
            }
            "synthetic" => {
                only(&[
                    "classes",
                    "per_class_train",
                    "per_class_test",
                    "shape",
                    "seed_train",
                    "seed_test",
                ])?;
                Ok(DataConfig::Synthetic {
                    classes: required(section, "data", "classes")?,
                    per_class_train: required(section, "data", "per_class_train")?,
                    per_class_test: required(section, "data", "per_class_test")?,
                    shape: parse_input_shape(require(section, "data", "shape")?)
                        .map_err(|e| CliError::config(format!("[data] {e}")))?,
                    seed_train: required(section, "data", "seed_train")?,
                    seed_test: required(section, "data", "seed_test")?,
                })
            }
            other => Err(CliError::config(format!(
                "unknown data kind '{other}' (expected cifar10, records, synthetic)"
            ))),
        }
    }

    pub fn load(&self) -> Result<(Dataset<f32>, Dataset<f32>), CliError> {
        match self {
            DataConfig::Cifar10 { dir } => load_cifar10(dir).map_err(CliError::runtime_from),
            DataConfig::Records { train_path, test_path, classes, shape } => {
                let train = load_records(train_path, *classes, *shape, "train")
                    .map_err(CliError::runtime_from)?;
                let test = load_records(test_path, *classes, *shape, "test")
                    .map_err(CliError::runtime_from)?;
                Ok((train, test))
            }
            DataConfig::Synthetic {
                classes,
                per_class_train,
                per_class_test,
                shape,
                seed_train,
                seed_test,
            } => {
                let train = make_synthetic(*classes, *per_class_train, *shape, *seed_train)
                    .map_err(CliError::runtime_from)?;
                let test = make_synthetic(*classes, *per_class_test, *shape, *seed_test)
                    .map_err(CliError::runtime_from)?;
                Ok((train, test))
            }
        }
    }
}

/// A fully validated training experiment, ready to load data and run.
pub struct Experiment {
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl Experiment {
    pub fn from_document(doc: &Document) -> Result<Experiment, CliError> {
        let experiment = doc.require_section("experiment")?;
        let mode = TrainMode::parse(require(experiment, "experiment", "mode")?)
            .map_err(|e| CliError::config(format!("[experiment] {e}")))?;

        // The network being trained: the teacher spec in teacher mode, the
        // student spec otherwise. The other section must be absent — in
        // student modes the teacher arrives as a checkpoint.
        let spec = match mode {
            TrainMode::Teacher => {
                doc.forbid_section("student", "mode 'teacher' trains the [teacher] network")?;
                doc.forbid_section("augment", "mode 'teacher' does not expand batches")?;
                network_spec(doc.require_section("teacher")?, "teacher")?
            }
            _ => {
                doc.forbid_section(
                    "teacher",
                    "student modes take the teacher from --teacher, not from the config",
                )?;
                if mode != TrainMode::StudentTeacherAug {
                    doc.forbid_section(
                        "augment",
                        "only mode 'student_teacher_aug' expands batches",
                    )?;
                }
                network_spec(doc.require_section("student")?, "student")?
            }
        };

        let default_lambda_mse = match mode {
            TrainMode::Teacher | TrainMode::StudentPlain => 0.0,
            _ => 1.0,
        };
        let lambda_mse = optional(experiment, "experiment", "lambda_mse", default_lambda_mse)?;
        let lambda_xent = optional(experiment, "experiment", "lambda_xent", 1.0)?;
        let xent_reduction = match experiment.get("xent_reduction").unwrap_or("mean") {
            "mean" => Reduction::Mean,
            "sum" => Reduction::Sum,
            other => {
                return Err(CliError::config(format!(
                    "invalid xent_reduction '{other}' (expected mean or sum)"
                )))
            }
        };

        let optimizer = doc.require_section("optimizer")?;
        let schedule = LrSchedule::new(
            required(optimizer, "optimizer", "lr")?,
            optional(optimizer, "optimizer", "decay_every", 50)?,
            optional(optimizer, "optimizer", "decay_factor", 0.1)?,
        )
        .map_err(|e| CliError::config(format!("[optimizer] {e}")))?;
        let adam = AdamHyper {
            beta1: optional(optimizer, "optimizer", "beta1", 0.9)?,
            beta2: optional(optimizer, "optimizer", "beta2", 0.999)?,
            epsilon: optional(optimizer, "optimizer", "epsilon", 1e-8)?,
        };

        let seeds_section = doc.require_section("seeds")?;
        let seeds = Seeds {
            init: required(seeds_section, "seeds", "init")?,
            shuffle: required(seeds_section, "seeds", "shuffle")?,
            augment: optional(seeds_section, "seeds", "augment", 0)?,
        };

        let augment = if mode == TrainMode::StudentTeacherAug {
            let section = doc.require_section("augment")?;
            let label_mode = section.get("label_mode").unwrap_or("hard");
            if label_mode != "hard" {
                return Err(CliError::config(format!(
                    "invalid label_mode '{label_mode}' (only 'hard' is supported)"
                )));
            }
            let mut augment = AugmentConfig::new(
                required(section, "augment", "images_per_batch")?,
                spec.input_shape,
                seeds.augment,
            );
            augment.multiplier = optional(
                section,
                "augment",
                "lcg_multiplier",
                tslearn_core::augment::DEFAULT_MULTIPLIER,
            )?;
            augment.increment = optional(
                section,
                "augment",
                "lcg_increment",
                tslearn_core::augment::DEFAULT_INCREMENT,
            )?;
            augment.modulus = optional(
                section,
                "augment",
                "lcg_modulus",
                tslearn_core::augment::DEFAULT_MODULUS,
            )?;
            Some(augment)
        } else {
            None
        };

        let train = TrainConfig {
            mode,
            spec,
            epochs: required(experiment, "experiment", "epochs")?,
            batch_size: required(experiment, "experiment", "batch_size")?,
            lambda_mse,
            lambda_xent,
            xent_reduction,
            adam,
            schedule,
            augment,
            seeds,
            drop_last: optional(experiment, "experiment", "drop_last", false)?,
        };
        let data = DataConfig::from_document(doc)?;
        Ok(Experiment { train, data })
    }
}
