//! Declarative network construction and the feature/logit split.
//!
//! A [`NetworkSpec`] lists the feature-extractor layers; the final linear
//! classification head (`feature_dim -> num_classes`) is implicit and always
//! present. `forward` returns both the penultimate feature vector — the
//! post-activation input to the head — and the logits the head produces,
//! because the feature vector is the regression target for teacher-student
//! transfer and the logits feed the cross-entropy loss.

use std::fmt;

use crate::augment::LcgState;
use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::ops;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::Scalar;

/// One layer of the feature extractor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Linear {
        out_features: usize,
    },
    Relu,
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Flatten,
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv2d { out_channels, kernel, stride, padding } => {
                write!(f, "conv2d({out_channels},{kernel},{stride},{padding})")
            }
            LayerSpec::Linear { out_features } => write!(f, "linear({out_features})"),
            LayerSpec::Relu => write!(f, "relu"),
            LayerSpec::MaxPool2d { window, stride } => write!(f, "maxpool2d({window},{stride})"),
            LayerSpec::Flatten => write!(f, "flatten"),
        }
    }
}

/// Declarative description of a network: input shape, feature-extractor
/// layers, the feature dimension `d` entering the head, and the class count
/// `c` the head emits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    pub feature_dim: usize,
    pub num_classes: usize,
}

impl NetworkSpec {
    /// Checks field consistency and shape propagation; errors name the
    /// offending layer.
    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Spec(format!(
                "input shape {c}x{h}x{w} has a zero extent"
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::Spec("feature_dim must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Spec(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        let out = self.propagate()?;
        if out.len() != 1 || out[0] != self.feature_dim {
            return Err(Error::Spec(format!(
                "layers produce shape {out:?} but the head expects a flat vector of length {}",
                self.feature_dim
            )));
        }
        Ok(())
    }

    /// Unbatched shape after the last layer.
    fn propagate(&self) -> Result<Vec<usize>> {
        let (c, h, w) = self.input_shape;
        let mut shape = vec![c, h, w];
        for (index, layer) in self.layers.iter().enumerate() {
            shape = propagate_layer(layer, &shape)
                .map_err(|e| Error::Spec(format!("layer {index} ({layer}): {e}")))?;
        }
        Ok(shape)
    }

    /// Parameter names, shapes, and fan-in, in deterministic layer order. The
    /// implicit head comes last.
    pub fn parameter_specs(&self) -> Result<Vec<ParamSpec>> {
        let (c, h, w) = self.input_shape;
        let mut shape = vec![c, h, w];
        let mut out = Vec::new();
        for (index, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv2d { out_channels, kernel, .. } => {
                    let ci = shape[0];
                    out.push(ParamSpec {
                        name: format!("layer{index}.weight"),
                        shape: vec![*out_channels, ci, *kernel, *kernel],
                        fan_in: ci * kernel * kernel,
                    });
                    out.push(ParamSpec {
                        name: format!("layer{index}.bias"),
                        shape: vec![*out_channels],
                        fan_in: ci * kernel * kernel,
                    });
                }
                LayerSpec::Linear { out_features } => {
                    let fan_in = shape[0];
                    out.push(ParamSpec {
                        name: format!("layer{index}.weight"),
                        shape: vec![fan_in, *out_features],
                        fan_in,
                    });
                    out.push(ParamSpec {
                        name: format!("layer{index}.bias"),
                        shape: vec![*out_features],
                        fan_in,
                    });
                }
                LayerSpec::Relu | LayerSpec::MaxPool2d { .. } | LayerSpec::Flatten => {}
            }
            shape = propagate_layer(layer, &shape)
                .map_err(|e| Error::Spec(format!("layer {index} ({layer}): {e}")))?;
        }
        out.push(ParamSpec {
            name: "head.weight".into(),
            shape: vec![self.feature_dim, self.num_classes],
            fan_in: self.feature_dim,
        });
        out.push(ParamSpec {
            name: "head.bias".into(),
            shape: vec![self.num_classes],
            fan_in: self.feature_dim,
        });
        Ok(out)
    }

    /// Total number of scalar parameters, including the head.
    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self
            .parameter_specs()?
            .iter()
            .map(|p| p.shape.iter().product::<usize>())
            .sum())
    }

    /// Canonical textual form: four `key = value` lines in fixed order.
    /// Writing is deterministic, so equal specs always serialize to equal
    /// bytes.
    pub fn canonical_text(&self) -> String {
        let (c, h, w) = self.input_shape;
        let layers = self
            .layers
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            "input_shape = {c}x{h}x{w}\nlayers = {layers}\nfeature_dim = {}\nnum_classes = {}",
            self.feature_dim, self.num_classes
        )
    }

    /// Parses the canonical textual form produced by [`canonical_text`].
    ///
    /// [`canonical_text`]: NetworkSpec::canonical_text
    pub fn parse_canonical(text: &str) -> Result<NetworkSpec> {
        let mut input_shape = None;
        let mut layers = None;
        let mut feature_dim = None;
        let mut num_classes = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Spec(format!("expected 'key = value', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "input_shape" => input_shape = Some(parse_input_shape(value)?),
                "layers" => layers = Some(parse_layer_list(value)?),
                "feature_dim" => feature_dim = Some(parse_positive(value, "feature_dim")?),
                "num_classes" => num_classes = Some(parse_positive(value, "num_classes")?),
                other => return Err(Error::Spec(format!("unknown spec key '{other}'"))),
            }
        }
        let spec = NetworkSpec {
            input_shape: input_shape
                .ok_or_else(|| Error::Spec("missing key 'input_shape'".into()))?,
            layers: layers.ok_or_else(|| Error::Spec("missing key 'layers'".into()))?,
            feature_dim: feature_dim
                .ok_or_else(|| Error::Spec("missing key 'feature_dim'".into()))?,
            num_classes: num_classes
                .ok_or_else(|| Error::Spec("missing key 'num_classes'".into()))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn propagate_layer(layer: &LayerSpec, shape: &[usize]) -> Result<Vec<usize>> {
    match layer {
        LayerSpec::Conv2d { out_channels, kernel, stride, padding } => {
            if *out_channels == 0 || *kernel == 0 {
                return Err(Error::Config("channels and kernel must be positive".into()));
            }
            if shape.len() != 3 {
                return Err(Error::Config(format!(
                    "conv2d expects a cxhxw input, got {shape:?}"
                )));
            }
            let oh = ops::out_extent(shape[1], *kernel, *stride, *padding)?;
            let ow = ops::out_extent(shape[2], *kernel, *stride, *padding)?;
            Ok(vec![*out_channels, oh, ow])
        }
        LayerSpec::Linear { out_features } => {
            if *out_features == 0 {
                return Err(Error::Config("linear width must be positive".into()));
            }
            if shape.len() != 1 {
                return Err(Error::Config(format!(
                    "linear expects a flat input (insert flatten), got {shape:?}"
                )));
            }
            Ok(vec![*out_features])
        }
        LayerSpec::Relu => Ok(shape.to_vec()),
        LayerSpec::MaxPool2d { window, stride } => {
            if shape.len() != 3 {
                return Err(Error::Config(format!(
                    "maxpool2d expects a cxhxw input, got {shape:?}"
                )));
            }
            let oh = ops::out_extent(shape[1], *window, *stride, 0)?;
            let ow = ops::out_extent(shape[2], *window, *stride, 0)?;
            Ok(vec![shape[0], oh, ow])
        }
        LayerSpec::Flatten => Ok(vec![shape.iter().product()]),
    }
}

pub fn parse_input_shape(value: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = value.split('x').collect();
    if parts.len() != 3 {
        return Err(Error::Spec(format!(
            "input shape must be CxHxW, got '{value}'"
        )));
    }
    let mut dims = [0usize; 3];
    for (slot, part) in dims.iter_mut().zip(parts.iter()) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| Error::Spec(format!("invalid extent '{part}' in '{value}'")))?;
    }
    Ok((dims[0], dims[1], dims[2]))
}

fn parse_positive(value: &str, key: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Spec(format!("invalid {key} '{value}'")))
}

/// Splits a comma-separated layer list, respecting parentheses, and parses
/// each entry.
pub fn parse_layer_list(value: &str) -> Result<Vec<LayerSpec>> {
    let mut layers = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let bytes = value.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'(' => depth += 1,
            b')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Spec(format!("unbalanced ')' in '{value}'")))?;
            }
            b',' if depth == 0 => {
                layers.push(parse_layer(value[start..i].trim())?);
                start = i + 1;
            }
            _ => {}
        }
    }
    let tail = value[start..].trim();
    if !tail.is_empty() {
        layers.push(parse_layer(tail)?);
    }
    Ok(layers)
}

fn parse_layer(token: &str) -> Result<LayerSpec> {
    if token.is_empty() {
        return Err(Error::Spec("empty layer entry".into()));
    }
    let (name, args) = match token.split_once('(') {
        Some((name, rest)) => {
            let rest = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::Spec(format!("missing ')' in layer '{token}'")))?;
            let args: Vec<usize> = rest
                .split(',')
                .map(|a| {
                    a.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Spec(format!("invalid argument '{a}' in '{token}'")))
                })
                .collect::<Result<_>>()?;
            (name.trim(), args)
        }
        None => (token, Vec::new()),
    };
    let arity = |n: usize| -> Result<()> {
        if args.len() != n {
            return Err(Error::Spec(format!(
                "layer '{name}' expects {n} argument(s), got {}",
                args.len()
            )));
        }
        Ok(())
    };
    match name {
        "conv2d" => {
            arity(4)?;
            Ok(LayerSpec::Conv2d {
                out_channels: args[0],
                kernel: args[1],
                stride: args[2],
                padding: args[3],
            })
        }
        "linear" => {
            arity(1)?;
            Ok(LayerSpec::Linear { out_features: args[0] })
        }
        "relu" => {
            arity(0)?;
            Ok(LayerSpec::Relu)
        }
        "maxpool2d" => {
            arity(2)?;
            Ok(LayerSpec::MaxPool2d { window: args[0], stride: args[1] })
        }
        "flatten" => {
            arity(0)?;
            Ok(LayerSpec::Flatten)
        }
        other => Err(Error::Spec(format!("unknown layer kind '{other}'"))),
    }
}

/// Shape and initialization metadata for one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
}

/// A named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Whether a model accepts gradient updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Training,
    Frozen,
}

/// A network spec together with its learned parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T> {
    spec: NetworkSpec,
    params: Vec<Param<T>>,
    mode: Mode,
}

/// Parameter node ids for one recorded forward pass, aligned with the model's
/// parameter order.
pub struct BoundModel {
    param_ids: Vec<NodeId>,
}

impl BoundModel {
    pub fn param_ids(&self) -> &[NodeId] {
        &self.param_ids
    }
}

/// Builds a model with Kaiming-uniform fan-in initialization: weights drawn
/// uniformly from `[-sqrt(6/fan_in), sqrt(6/fan_in)]`, biases zero. The draw
/// stream comes from the toolkit's own generator, so identical `(spec, seed)`
/// always produce bitwise-identical parameters.
pub fn build_model<T: Scalar>(spec: &NetworkSpec, init_seed: u64) -> Result<ModelState<T>> {
    spec.validate()?;
    let mut rng = LcgState::with_default_params(init_seed);
    let mut params = Vec::new();
    for pspec in spec.parameter_specs()? {
        let numel: usize = pspec.shape.iter().product();
        let value = if pspec.name.ends_with(".bias") {
            Tensor::zeros(&pspec.shape)
        } else {
            let bound = (6.0 / pspec.fan_in as f64).sqrt();
            let data: Vec<T> = (0..numel)
                .map(|_| T::from_f64_lossy((2.0 * rng.next_unit() - 1.0) * bound))
                .collect();
            Tensor::new(pspec.shape.clone(), data)?
        };
        params.push(Param { name: pspec.name, value });
    }
    Ok(ModelState {
        spec: spec.clone(),
        params,
        mode: Mode::Training,
    })
}

/// Report of the teacher/student compatibility constraints: both networks
/// must share the feature dimension `d` and the class count `c`.
#[derive(Clone, Debug)]
pub struct CompatReport {
    pub teacher: (usize, usize),
    pub student: (usize, usize),
    pub violations: Vec<String>,
}

impl CompatReport {
    pub fn is_compatible(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for CompatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(
                f,
                "compatible (d={}, c={})",
                self.teacher.0, self.teacher.1
            )
        } else {
            write!(
                f,
                "teacher (d={}, c={}) vs student (d={}, c={}): {}",
                self.teacher.0,
                self.teacher.1,
                self.student.0,
                self.student.1,
                self.violations.join("; ")
            )
        }
    }
}

pub fn validate_pair(teacher: &NetworkSpec, student: &NetworkSpec) -> CompatReport {
    let mut violations = Vec::new();
    if teacher.feature_dim != student.feature_dim {
        violations.push(format!(
            "feature dimensions differ: teacher d={}, student d={}",
            teacher.feature_dim, student.feature_dim
        ));
    }
    if teacher.num_classes != student.num_classes {
        violations.push(format!(
            "class counts differ: teacher c={}, student c={}",
            teacher.num_classes, student.num_classes
        ));
    }
    CompatReport {
        teacher: (teacher.feature_dim, teacher.num_classes),
        student: (student.feature_dim, student.num_classes),
        violations,
    }
}

impl<T: Scalar> ModelState<T> {
    /// Reassembles a model from a spec and pre-existing parameter tensors
    /// (checkpoint loading). Shapes must match the spec exactly.
    pub fn from_parameters(spec: NetworkSpec, params: Vec<Param<T>>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.parameter_specs()?;
        if expected.len() != params.len() {
            return Err(Error::Spec(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (e, p) in expected.iter().zip(params.iter()) {
            if e.name != p.name || e.shape != p.value.shape() {
                return Err(Error::Spec(format!(
                    "parameter '{}' with shape {:?} does not match expected '{}' {:?}",
                    p.name,
                    p.value.shape(),
                    e.name,
                    e.shape
                )));
            }
        }
        Ok(ModelState {
            spec,
            params,
            mode: Mode::Training,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn parameters(&self) -> &[Param<T>] {
        &self.params
    }

    /// Mutable parameter access for the optimizer; frozen models refuse.
    pub fn parameters_mut(&mut self) -> Result<&mut [Param<T>]> {
        if self.mode == Mode::Frozen {
            return Err(Error::Usage("parameters of a frozen model are immutable".into()));
        }
        Ok(&mut self.params)
    }

    /// Overwrites every parameter with zeros (useful as a degenerate
    /// baseline). Refused on frozen models.
    pub fn zero_parameters(&mut self) -> Result<()> {
        for p in self.parameters_mut()? {
            let shape = p.value.shape().to_vec();
            p.value = Tensor::zeros(&shape);
        }
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.mode = Mode::Frozen;
    }

    /// Consuming freeze, convenient at construction sites.
    pub fn frozen(mut self) -> Self {
        self.freeze();
        self
    }

    /// Re-enables training on a loaded model.
    pub fn thaw(&mut self) {
        self.mode = Mode::Training;
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let (c, h, w) = self.spec.input_shape;
        if batch.rank() != 4
            || batch.shape()[1] != c
            || batch.shape()[2] != h
            || batch.shape()[3] != w
        {
            return Err(Error::shape_mismatch(
                "model input",
                batch.shape(),
                &[batch.shape().first().copied().unwrap_or(0), c, h, w],
            ));
        }
        Ok(batch.shape()[0])
    }

    /// Plain forward pass: `(features, logits)` with no gradient state. This
    /// is the only forward path a frozen model needs.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        let mut cursor = 0usize;
        for layer in &self.spec.layers {
            x = match layer {
                LayerSpec::Conv2d { stride, padding, .. } => {
                    let out = ops::conv2d_forward(
                        &x,
                        &self.params[cursor].value,
                        &self.params[cursor + 1].value,
                        *stride,
                        *padding,
                    )?;
                    cursor += 2;
                    out
                }
                LayerSpec::Linear { .. } => {
                    let out = ops::linear_forward(
                        &x,
                        &self.params[cursor].value,
                        &self.params[cursor + 1].value,
                    )?;
                    cursor += 2;
                    out
                }
                LayerSpec::Relu => ops::relu_forward(&x),
                LayerSpec::MaxPool2d { window, stride } => {
                    ops::maxpool2d_forward(&x, *window, *stride)?.0
                }
                LayerSpec::Flatten => ops::flatten_forward(&x)?,
            };
        }
        let features = x;
        let logits = ops::linear_forward(
            &features,
            &self.params[cursor].value,
            &self.params[cursor + 1].value,
        )?;
        Ok((features, logits))
    }

    /// Registers every parameter as a graph leaf. Frozen models never record
    /// a graph, so binding one is a usage error.
    pub fn bind(&self, graph: &mut Graph<T>) -> Result<BoundModel> {
        if self.mode == Mode::Frozen {
            return Err(Error::Usage(
                "frozen models record no graph; use forward() instead".into(),
            ));
        }
        let mut param_ids = Vec::with_capacity(self.params.len());
        for p in &self.params {
            param_ids.push(graph.leaf(p.value.clone())?);
        }
        Ok(BoundModel { param_ids })
    }

    /// Graph-recorded forward pass mirroring [`forward`], returning node ids
    /// for the features and logits.
    ///
    /// [`forward`]: ModelState::forward
    pub fn forward_recorded(
        &self,
        graph: &mut Graph<T>,
        bound: &BoundModel,
        batch: &Tensor<T>,
    ) -> Result<(NodeId, NodeId)> {
        self.check_batch(batch)?;
        let mut x = graph.leaf(batch.clone())?;
        let mut cursor = 0usize;
        for layer in &self.spec.layers {
            x = match layer {
                LayerSpec::Conv2d { stride, padding, .. } => {
                    let out = graph.conv2d(
                        x,
                        bound.param_ids[cursor],
                        bound.param_ids[cursor + 1],
                        *stride,
                        *padding,
                    )?;
                    cursor += 2;
                    out
                }
                LayerSpec::Linear { .. } => {
                    let out =
                        graph.linear(x, bound.param_ids[cursor], bound.param_ids[cursor + 1])?;
                    cursor += 2;
                    out
                }
                LayerSpec::Relu => graph.relu(x)?,
                LayerSpec::MaxPool2d { window, stride } => graph.maxpool2d(x, *window, *stride)?,
                LayerSpec::Flatten => graph.flatten(x)?,
            };
        }
        let features = x;
        let logits = graph.linear(features, bound.param_ids[cursor], bound.param_ids[cursor + 1])?;
        Ok((features, logits))
    }
}
