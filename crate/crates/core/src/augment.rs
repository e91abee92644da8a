//! Deterministic random-image augmentation.
//!
//! A linear congruential generator synthesizes images with pixels in `[0, 1]`;
//! a frozen teacher assigns each one a hard pseudo-label; batches are expanded
//! by appending the labelled random images after the real samples. The
//! generator state is an explicit value threaded through the training loop, so
//! every run is reproducible from its seed alone.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::model::{Mode, ModelState};
use crate::Scalar;

/// Classic full-period constants for a power-of-two modulus.
pub const DEFAULT_MULTIPLIER: u64 = 1_664_525;
pub const DEFAULT_INCREMENT: u64 = 1_013_904_223;
pub const DEFAULT_MODULUS: u64 = 1 << 32;

/// Linear congruential generator: `X_{n+1} = (a * X_n + c) mod m`.
///
/// The recurrence is evaluated in 128-bit integer arithmetic, so it is exact
/// for any 64-bit parameters and identical on every platform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LcgState {
    multiplier: u64,
    increment: u64,
    modulus: u64,
    state: u64,
}

impl LcgState {
    pub fn new(multiplier: u64, increment: u64, modulus: u64, seed: u64) -> Result<Self> {
        if modulus < 2 {
            return Err(Error::Config(format!(
                "LCG modulus must be at least 2, got {modulus}"
            )));
        }
        Ok(LcgState {
            multiplier,
            increment,
            modulus,
            state: seed % modulus,
        })
    }

    pub fn with_default_params(seed: u64) -> Self {
        Self::new(DEFAULT_MULTIPLIER, DEFAULT_INCREMENT, DEFAULT_MODULUS, seed)
            .expect("default modulus is valid")
    }

    pub fn multiplier(&self) -> u64 {
        self.multiplier
    }

    pub fn increment(&self) -> u64 {
        self.increment
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Current value of `X_n`.
    pub fn current(&self) -> u64 {
        self.state
    }

    /// Advances the generator and returns the new value `X_{n+1}`.
    pub fn next_value(&mut self) -> u64 {
        let wide = self.multiplier as u128 * self.state as u128 + self.increment as u128;
        self.state = (wide % self.modulus as u128) as u64;
        self.state
    }

    /// Next draw mapped to `[0, 1]` inclusive: `value / (m - 1)`.
    pub fn next_unit(&mut self) -> f64 {
        self.next_value() as f64 / (self.modulus - 1) as f64
    }

    /// Next draw reduced to `[0, bound)`.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        self.next_value() % bound
    }
}

/// Functional form of the generator step.
pub fn lcg_next(state: LcgState) -> (u64, LcgState) {
    let mut next = state;
    let value = next.next_value();
    (value, next)
}

/// How generated images are labelled by the teacher.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LabelMode {
    /// One-hot at the argmax of the teacher logits.
    #[default]
    Hard,
}

/// Augmentation settings for one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    /// Number of random images appended to each batch.
    pub images_per_batch: usize,
    /// Shape (channels, height, width) of generated images; must match the
    /// teacher's input shape.
    pub image_shape: (usize, usize, usize),
    pub label_mode: LabelMode,
    pub seed: u64,
    pub multiplier: u64,
    pub increment: u64,
    pub modulus: u64,
}

impl AugmentConfig {
    pub fn new(images_per_batch: usize, image_shape: (usize, usize, usize), seed: u64) -> Self {
        AugmentConfig {
            images_per_batch,
            image_shape,
            label_mode: LabelMode::Hard,
            seed,
            multiplier: DEFAULT_MULTIPLIER,
            increment: DEFAULT_INCREMENT,
            modulus: DEFAULT_MODULUS,
        }
    }

    pub fn initial_state(&self) -> Result<LcgState> {
        LcgState::new(self.multiplier, self.increment, self.modulus, self.seed)
    }
}

/// Draws one random image with pixels in `[0, 1]`, filling row-major and
/// consuming exactly `c * h * w` generator draws.
pub fn generate_random_image<T: Scalar>(
    state: &mut LcgState,
    shape: (usize, usize, usize),
) -> Tensor<T> {
    let (c, h, w) = shape;
    let data: Vec<T> = (0..c * h * w)
        .map(|_| T::from_f64_lossy(state.next_unit()))
        .collect();
    Tensor::new(vec![c, h, w], data).expect("positive extents")
}

/// Labels a stack of images with the frozen teacher: row `i` of the result is
/// one-hot at the argmax of the teacher's logits (first index on ties).
pub fn pseudo_label<T: Scalar>(
    teacher: &ModelState<T>,
    images: &Tensor<T>,
) -> Result<Tensor<T>> {
    if teacher.mode() != Mode::Frozen {
        return Err(Error::Usage(
            "pseudo-labelling requires a frozen teacher".into(),
        ));
    }
    let (_, logits) = teacher.forward(images)?;
    let (n, classes) = (logits.shape()[0], logits.shape()[1]);
    let mut data = vec![T::zero(); n * classes];
    for i in 0..n {
        let row = &logits.data()[i * classes..(i + 1) * classes];
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        data[i * classes + best] = T::one();
        let _ = i;
    }
    Tensor::new(vec![n, classes], data)
}

/// Appends `N` teacher-labelled random images to a batch. Original pairs are
/// preserved bit-exactly and come first; the returned generator state has
/// advanced by exactly `N * c * h * w` draws.
pub fn expand_batch<T: Scalar>(
    images: &Tensor<T>,
    targets: &Tensor<T>,
    config: &AugmentConfig,
    state: LcgState,
    teacher: &ModelState<T>,
) -> Result<(Tensor<T>, Tensor<T>, LcgState)> {
    let extra = config.images_per_batch;
    if extra == 0 {
        return Ok((images.clone(), targets.clone(), state));
    }
    let (c, h, w) = config.image_shape;
    if images.rank() != 4 || (images.shape()[1], images.shape()[2], images.shape()[3]) != (c, h, w)
    {
        return Err(Error::shape_mismatch(
            "augment image shape",
            images.shape(),
            &[images.shape()[0], c, h, w],
        ));
    }
    let classes = targets.shape()[1];
    if teacher.spec().num_classes != classes {
        return Err(Error::shape_mismatch(
            "augment teacher classes vs targets",
            &[teacher.spec().num_classes],
            &[classes],
        ));
    }

    let mut state = state;
    let mut generated = Vec::with_capacity(extra * c * h * w);
    for _ in 0..extra {
        let image = generate_random_image::<T>(&mut state, (c, h, w));
        generated.extend_from_slice(image.data());
    }
    let random_images = Tensor::new(vec![extra, c, h, w], generated)?;
    let labels = pseudo_label(teacher, &random_images)?;

    let m = images.shape()[0];
    let mut image_data = Vec::with_capacity((m + extra) * c * h * w);
    image_data.extend_from_slice(images.data());
    image_data.extend_from_slice(random_images.data());
    let mut target_data = Vec::with_capacity((m + extra) * classes);
    target_data.extend_from_slice(targets.data());
    target_data.extend_from_slice(labels.data());

    Ok((
        Tensor::new(vec![m + extra, c, h, w], image_data)?,
        Tensor::new(vec![m + extra, classes], target_data)?,
        state,
    ))
}
