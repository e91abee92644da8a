//! Dataset ingestion, synthetic data generation, and deterministic batching.
//!
//! The on-disk record layout is the CIFAR-10 binary format generalized to any
//! image shape: each record is one label byte followed by `c*h*w` pixel bytes,
//! stored channel-planar and row-major within each plane. Pixels load as
//! `byte / 255`, so every image value lives in `[0, 1]` — the same range the
//! random-image generator uses, which keeps generated and real inputs
//! interchangeable for the teacher. No mean/std standardization is applied.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::augment::LcgState;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::Scalar;

/// CIFAR-10 image shape (channels, height, width).
pub const CIFAR10_SHAPE: (usize, usize, usize) = (3, 32, 32);
pub const CIFAR10_CLASSES: usize = 10;

/// An immutable labelled image collection.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    images: Tensor<T>,
    labels: Vec<u8>,
    classes: usize,
    split: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(images: Tensor<T>, labels: Vec<u8>, classes: usize, split: &str) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::Validation(format!(
                "dataset images must be n x c x h x w, got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Validation(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if classes < 2 || classes > 256 {
            return Err(Error::Validation(format!(
                "class count must be in [2, 256] for the byte-label record layout, got {classes}"
            )));
        }
        if let Some(bad) = labels.iter().position(|&l| (l as usize) >= classes) {
            return Err(Error::Validation(format!(
                "label {} at index {bad} is outside [0, {classes})",
                labels[bad]
            )));
        }
        Ok(Dataset {
            images,
            labels,
            classes,
            split: split.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> &str {
        &self.split
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn images(&self) -> &Tensor<T> {
        &self.images
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    /// Copies the indexed samples into a batch: images `[m,c,h,w]` and one-hot
    /// targets `[m,classes]`.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<T>, Tensor<T>) {
        let (c, h, w) = self.image_shape();
        let row = c * h * w;
        let mut image_data = Vec::with_capacity(indices.len() * row);
        let mut target_data = vec![T::zero(); indices.len() * self.classes];
        for (slot, &i) in indices.iter().enumerate() {
            image_data.extend_from_slice(&self.images.data()[i * row..(i + 1) * row]);
            target_data[slot * self.classes + self.labels[i] as usize] = T::one();
        }
        (
            Tensor::new(vec![indices.len(), c, h, w], image_data).expect("positive extents"),
            Tensor::new(vec![indices.len(), self.classes], target_data).expect("positive extents"),
        )
    }
}

/// One-hot encodes integer labels.
pub fn one_hot<T: Scalar>(labels: &[u8], classes: usize) -> Result<Tensor<T>> {
    let mut data = vec![T::zero(); labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if (l as usize) >= classes {
            return Err(Error::Validation(format!(
                "label {l} outside [0, {classes})"
            )));
        }
        data[i * classes + l as usize] = T::one();
    }
    Tensor::new(vec![labels.len(), classes], data)
}

// ---------------------------------------------------------------------------
// Binary record IO
// ---------------------------------------------------------------------------

/// Loads one binary record file: each record is `1 + c*h*w` bytes (label byte,
/// then channel-planar pixel bytes). Pixels are scaled to `[0, 1]` by
/// division by 255.
pub fn load_records<T: Scalar>(
    path: &Path,
    classes: usize,
    shape: (usize, usize, usize),
    split: &str,
) -> Result<Dataset<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_records(&bytes, classes, shape, split)
}

fn decode_records<T: Scalar>(
    bytes: &[u8],
    classes: usize,
    shape: (usize, usize, usize),
    split: &str,
) -> Result<Dataset<T>> {
    let (c, h, w) = shape;
    let record = 1 + c * h * w;
    if bytes.len() % record != 0 {
        return Err(Error::DataFormat {
            offset: (bytes.len() / record * record) as u64,
            message: format!(
                "file size {} is not a multiple of the {record}-byte record",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / record;
    if n == 0 {
        return Err(Error::DataFormat {
            offset: 0,
            message: "empty record file".into(),
        });
    }
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * (record - 1));
    let scale = 1.0 / 255.0;
    for i in 0..n {
        let start = i * record;
        let label = bytes[start];
        if (label as usize) >= classes {
            return Err(Error::DataFormat {
                offset: start as u64,
                message: format!("label byte {label} is outside [0, {classes})"),
            });
        }
        labels.push(label);
        for &b in &bytes[start + 1..start + record] {
            pixels.push(T::from_f64_lossy(b as f64 * scale));
        }
    }
    let images = Tensor::new(vec![n, c, h, w], pixels)?;
    Dataset::new(images, labels, classes, split)
}

/// Writes a dataset in the binary record layout. Pixels are quantized with
/// round-to-nearest to `[0, 255]`.
pub fn dump_records<T: Scalar>(dataset: &Dataset<T>, path: &Path) -> Result<()> {
    let (c, h, w) = dataset.image_shape();
    let row = c * h * w;
    let mut out = Vec::with_capacity(dataset.len() * (1 + row));
    for i in 0..dataset.len() {
        out.push(dataset.labels()[i]);
        for &v in &dataset.images().data()[i * row..(i + 1) * row] {
            let q = (v.to_f64().unwrap_or(0.0) * 255.0).round().clamp(0.0, 255.0);
            out.push(q as u8);
        }
    }
    let mut file = fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    file.write_all(&out)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Loads the standard CIFAR-10 binary layout from a directory:
/// `data_batch_1.bin` … `data_batch_5.bin` become the train split and
/// `test_batch.bin` the test split.
pub fn load_cifar10<T: Scalar>(dir: &Path) -> Result<(Dataset<T>, Dataset<T>)> {
    let mut train_bytes = Vec::new();
    for i in 1..=5 {
        let path = dir.join(format!("data_batch_{i}.bin"));
        let bytes =
            fs::read(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        train_bytes.extend_from_slice(&bytes);
    }
    let train = decode_records(&train_bytes, CIFAR10_CLASSES, CIFAR10_SHAPE, "train")?;
    let test = load_records(
        &dir.join("test_batch.bin"),
        CIFAR10_CLASSES,
        CIFAR10_SHAPE,
        "test",
    )?;
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Default pixel-noise amplitude for synthetic datasets.
pub const SYNTHETIC_NOISE: f64 = 0.2;

/// Generates a linearly separable labelled dataset: class `k` is a sinusoidal
/// gradient whose spatial frequency is `k + 1`, plus seeded uniform pixel
/// noise in `[-amplitude, amplitude]`, clamped to `[0, 1]`.
pub fn make_synthetic_with_amplitude<T: Scalar>(
    classes: usize,
    per_class: usize,
    shape: (usize, usize, usize),
    seed: u64,
    amplitude: f64,
) -> Result<Dataset<T>> {
    if classes < 2 {
        return Err(Error::Config(format!(
            "synthetic dataset needs at least 2 classes, got {classes}"
        )));
    }
    if per_class == 0 {
        return Err(Error::Config("per_class must be positive".into()));
    }
    let (c, h, w) = shape;
    let mut rng = LcgState::with_default_params(seed);
    let mut pixels = Vec::with_capacity(classes * per_class * c * h * w);
    let mut labels = Vec::with_capacity(classes * per_class);
    let tau = std::f64::consts::TAU;
    for class in 0..classes {
        let frequency = (class + 1) as f64;
        for _ in 0..per_class {
            labels.push(class as u8);
            for ch in 0..c {
                let phase = ch as f64 * 0.7;
                for y in 0..h {
                    for x in 0..w {
                        let base = 0.5
                            + 0.35
                                * (tau * frequency * (y + x) as f64 / (h + w) as f64 + phase)
                                    .sin();
                        let noise = (2.0 * rng.next_unit() - 1.0) * amplitude;
                        pixels.push(T::from_f64_lossy((base + noise).clamp(0.0, 1.0)));
                    }
                }
            }
        }
    }
    let images = Tensor::new(vec![classes * per_class, c, h, w], pixels)?;
    Dataset::new(images, labels, classes, "synthetic")
}

pub fn make_synthetic<T: Scalar>(
    classes: usize,
    per_class: usize,
    shape: (usize, usize, usize),
    seed: u64,
) -> Result<Dataset<T>> {
    make_synthetic_with_amplitude(classes, per_class, shape, seed, SYNTHETIC_NOISE)
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

/// Deterministic shuffled batching: the permutation is a pure function of
/// `(shuffle_seed, epoch)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchPlan {
    pub shuffle_seed: u64,
    pub batch_size: usize,
    pub drop_last: bool,
}

/// The per-epoch permutation: Fisher-Yates driven by the toolkit generator,
/// seeded by mixing the epoch into the shuffle seed.
pub fn epoch_permutation(n: usize, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    let mixed = shuffle_seed.wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut rng = LcgState::with_default_params(mixed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.next_below((i + 1) as u64) as usize;
        order.swap(i, j);
    }
    order
}

/// Iterator over one epoch's batches of `(images, one-hot targets)`.
pub struct Batches<'a, T> {
    dataset: &'a Dataset<T>,
    order: Vec<usize>,
    batch_size: usize,
    drop_last: bool,
    cursor: usize,
}

impl<'a, T: Scalar> Iterator for Batches<'a, T> {
    type Item = (Tensor<T>, Tensor<T>);

    fn next(&mut self) -> Option<Self::Item> {
        let remaining = self.order.len() - self.cursor;
        if remaining == 0 || (self.drop_last && remaining < self.batch_size) {
            return None;
        }
        let take = remaining.min(self.batch_size);
        let indices = &self.order[self.cursor..self.cursor + take];
        self.cursor += take;
        Some(self.dataset.gather(indices))
    }
}

pub fn batches<'a, T: Scalar>(
    dataset: &'a Dataset<T>,
    plan: &BatchPlan,
    epoch: usize,
) -> Result<Batches<'a, T>> {
    if plan.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if plan.batch_size > dataset.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds dataset size {}",
            plan.batch_size,
            dataset.len()
        )));
    }
    Ok(Batches {
        dataset,
        order: epoch_permutation(dataset.len(), plan.shuffle_seed, epoch),
        batch_size: plan.batch_size,
        drop_last: plan.drop_last,
        cursor: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_constructed_record_decodes() {
        let mut bytes = vec![3u8];
        bytes.extend(std::iter::repeat(255u8).take(3 * 32 * 32));
        let ds: Dataset<f64> = decode_records(&bytes, 10, CIFAR10_SHAPE, "t").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.labels(), &[3]);
        assert!(ds.images().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn two_records_make_a_dataset_of_two() {
        let bytes = vec![0u8; 2 * 3073];
        let ds: Dataset<f32> = decode_records(&bytes, 10, CIFAR10_SHAPE, "t").unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn truncated_file_reports_byte_offset() {
        let bytes = vec![0u8; 3073 + 100];
        let err = decode_records::<f64>(&bytes, 10, CIFAR10_SHAPE, "t").unwrap_err();
        match err {
            Error::DataFormat { offset, .. } => assert_eq!(offset, 3073),
            other => panic!("expected data format error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_label_reports_record_offset() {
        let mut bytes = vec![0u8; 2 * 3073];
        bytes[3073] = 10;
        let err = decode_records::<f64>(&bytes, 10, CIFAR10_SHAPE, "t").unwrap_err();
        match err {
            Error::DataFormat { offset, message } => {
                assert_eq!(offset, 3073);
                assert!(message.contains("label"));
            }
            other => panic!("expected data format error, got {other:?}"),
        }
    }

    #[test]
    fn standard_cifar_layout_loads_with_expected_splits() {
        let dir = tempfile::tempdir().unwrap();
        // Five train files and one test file, 10000 balanced records each.
        for name in [
            "data_batch_1.bin",
            "data_batch_2.bin",
            "data_batch_3.bin",
            "data_batch_4.bin",
            "data_batch_5.bin",
            "test_batch.bin",
        ] {
            let mut bytes = Vec::with_capacity(10000 * 3073);
            for i in 0..10000u32 {
                bytes.push((i % 10) as u8);
                bytes.extend(std::iter::repeat(0u8).take(3072));
            }
            fs::write(dir.path().join(name), &bytes).unwrap();
        }
        let (train, test): (Dataset<f32>, Dataset<f32>) = load_cifar10(dir.path()).unwrap();
        assert_eq!(train.len(), 50000);
        assert_eq!(test.len(), 10000);
        assert_eq!(train.split(), "train");
        assert_eq!(test.split(), "test");
        for class in 0..10u8 {
            let count = train.labels().iter().filter(|&&l| l == class).count();
            assert_eq!(count, 5000);
        }
    }

    #[test]
    fn synthetic_is_deterministic_per_seed() {
        let a: Dataset<f64> = make_synthetic(4, 3, (1, 6, 6), 9).unwrap();
        let b: Dataset<f64> = make_synthetic(4, 3, (1, 6, 6), 9).unwrap();
        assert_eq!(a, b);
        let c: Dataset<f64> = make_synthetic(4, 3, (1, 6, 6), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_amplitude_makes_within_class_images_identical() {
        let ds: Dataset<f64> = make_synthetic_with_amplitude(3, 4, (1, 5, 5), 1, 0.0).unwrap();
        let row = 25;
        for class in 0..3 {
            let base = &ds.images().data()[class * 4 * row..class * 4 * row + row];
            for i in 1..4 {
                let image =
                    &ds.images().data()[(class * 4 + i) * row..(class * 4 + i + 1) * row];
                assert_eq!(base, image);
            }
        }
    }

    #[test]
    fn synthetic_pixels_and_labels_are_in_range() {
        let ds: Dataset<f32> = make_synthetic(5, 10, (2, 4, 4), 77).unwrap();
        assert!(ds.images().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(ds.labels().iter().all(|&l| l < 5));
    }

    #[test]
    fn dump_then_load_round_trips_quantized_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synthetic.bin");
        let original: Dataset<f32> = make_synthetic(3, 5, (2, 4, 4), 13).unwrap();
        dump_records(&original, &path).unwrap();
        let reloaded: Dataset<f32> = load_records(&path, 3, (2, 4, 4), "synthetic").unwrap();
        assert_eq!(original.labels(), reloaded.labels());
        // After one quantization pass the byte values are stable.
        let second = dir.path().join("again.bin");
        dump_records(&reloaded, &second).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&second).unwrap());
        for (&a, &b) in original
            .images()
            .data()
            .iter()
            .zip(reloaded.images().data().iter())
        {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    /// Dataset whose image pixels encode the sample index, so batch contents
    /// can be traced back to indices.
    fn traceable(n: usize) -> Dataset<f64> {
        let data: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let images = Tensor::new(vec![n, 1, 1, 1], data).unwrap();
        let labels = vec![0u8; n];
        Dataset::new(images, labels, 2, "trace").unwrap()
    }

    #[test]
    fn full_batch_contains_every_sample_once() {
        let ds = traceable(8);
        let plan = BatchPlan { shuffle_seed: 4, batch_size: 8, drop_last: false };
        let got: Vec<_> = batches(&ds, &plan, 0).unwrap().collect();
        assert_eq!(got.len(), 1);
        let mut seen: Vec<usize> =
            got[0].0.data().iter().map(|&v| v as usize).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_and_epoch_give_identical_order() {
        assert_eq!(epoch_permutation(32, 5, 3), epoch_permutation(32, 5, 3));
        assert_ne!(epoch_permutation(32, 5, 3), epoch_permutation(32, 5, 4));
        assert_ne!(epoch_permutation(32, 5, 3), epoch_permutation(32, 6, 3));
    }

    #[test]
    fn epoch_batches_partition_the_index_set() {
        let ds = traceable(23);
        let plan = BatchPlan { shuffle_seed: 11, batch_size: 5, drop_last: false };
        let mut seen = Vec::new();
        for (images, _) in batches(&ds, &plan, 2).unwrap() {
            seen.extend(images.data().iter().map(|&v| v as usize));
        }
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn drop_last_keeps_only_full_batches() {
        let ds = traceable(23);
        let plan = BatchPlan { shuffle_seed: 11, batch_size: 5, drop_last: true };
        let sizes: Vec<usize> = batches(&ds, &plan, 0)
            .unwrap()
            .map(|(images, _)| images.shape()[0])
            .collect();
        assert_eq!(sizes, vec![5, 5, 5, 5]);
    }

    #[test]
    fn oversized_batch_is_a_configuration_error() {
        let ds = traceable(4);
        let plan = BatchPlan { shuffle_seed: 0, batch_size: 5, drop_last: false };
        assert!(matches!(batches(&ds, &plan, 0), Err(Error::Config(_))));
    }

    #[test]
    fn one_hot_targets_are_exact() {
        let t: Tensor<f64> = one_hot(&[2, 0], 3).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!(one_hot::<f64>(&[3], 3).is_err());
    }
}
