//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied during a forward pass. Calling
//! [`Graph::backward`] on a scalar loss walks the tape in reverse and fills a
//! gradient buffer for every leaf (parameter or input) that influenced the
//! loss; leaves that did not influence it receive exact zeros. A graph can be
//! differentiated once — a second `backward` is a usage error, which catches
//! double-step bugs early.

use crate::autodiff::ops;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::Scalar;

/// Handle to a node in one specific [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Batch reduction applied to cross-entropy.
///
/// `Mean` keeps the loss magnitude independent of batch size, so a single
/// weighting between loss terms stays balanced across differing effective
/// batch sizes. `Sum` is the literal per-batch summed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// A scalar loss recorded on a graph, with its already-computed value.
#[derive(Clone, Copy, Debug)]
pub struct LossValue<T> {
    node: NodeId,
    value: T,
}

impl<T: Scalar> LossValue<T> {
    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn value(&self) -> T {
        self.value
    }
}

/// Probabilities are clamped to this floor before the log so adversarial
/// logits still yield a finite loss.
const PROB_FLOOR: f64 = 1e-12;

enum Op<T> {
    Leaf,
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    },
    Relu {
        input: NodeId,
    },
    MaxPool2d {
        input: NodeId,
        argmax: Vec<usize>,
    },
    Flatten {
        input: NodeId,
    },
    Softmax {
        logits: NodeId,
    },
    CrossEntropy {
        logits: NodeId,
        probs: Tensor<T>,
        targets: Tensor<T>,
        reduction: Reduction,
    },
    MseFeature {
        student: NodeId,
        teacher: Tensor<T>,
    },
    WeightedSum {
        terms: Vec<(T, NodeId)>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recording context for one forward/backward cycle.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    consumed: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn check_recording(&self) -> Result<()> {
        if self.consumed {
            return Err(Error::Usage(
                "graph already consumed by backward; build a fresh graph".into(),
            ));
        }
        Ok(())
    }

    /// Registers a leaf (parameter or input). Leaves are the only nodes whose
    /// gradients are retained after `backward`.
    pub fn leaf(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.check_recording()?;
        Ok(self.push(value, Op::Leaf))
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Gradient of the scalar loss with respect to a leaf, available after
    /// `backward`. Disconnected leaves hold exact zeros.
    pub fn grad(&self, id: NodeId) -> Result<&Tensor<T>> {
        if !self.consumed {
            return Err(Error::Usage("gradients not computed; call backward first".into()));
        }
        self.grads[id.0]
            .as_ref()
            .ok_or_else(|| Error::Usage("gradient retained only for leaf nodes".into()))
    }

    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        self.check_recording()?;
        let value = ops::linear_forward(
            &self.nodes[input.0].value,
            &self.nodes[weight.0].value,
            &self.nodes[bias.0].value,
        )?;
        Ok(self.push(value, Op::Linear { input, weight, bias }))
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        self.check_recording()?;
        let value = ops::conv2d_forward(
            &self.nodes[input.0].value,
            &self.nodes[kernel.0].value,
            &self.nodes[bias.0].value,
            stride,
            padding,
        )?;
        Ok(self.push(value, Op::Conv2d { input, kernel, bias, stride, padding }))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        self.check_recording()?;
        let value = ops::relu_forward(&self.nodes[input.0].value);
        Ok(self.push(value, Op::Relu { input }))
    }

    pub fn maxpool2d(&mut self, input: NodeId, window: usize, stride: usize) -> Result<NodeId> {
        self.check_recording()?;
        let (value, argmax) = ops::maxpool2d_forward(&self.nodes[input.0].value, window, stride)?;
        Ok(self.push(value, Op::MaxPool2d { input, argmax }))
    }

    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId> {
        self.check_recording()?;
        let value = ops::flatten_forward(&self.nodes[input.0].value)?;
        Ok(self.push(value, Op::Flatten { input }))
    }

    pub fn softmax(&mut self, logits: NodeId) -> Result<NodeId> {
        self.check_recording()?;
        let value = ops::softmax_forward(&self.nodes[logits.0].value)?;
        Ok(self.push(value, Op::Softmax { logits }))
    }

    /// Softmax cross-entropy against one-hot targets, reduced over the batch.
    /// The gradient with respect to the logits is `(p - y)` per row, scaled by
    /// the reduction.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &Tensor<T>,
        reduction: Reduction,
    ) -> Result<LossValue<T>> {
        self.check_recording()?;
        let logits_value = &self.nodes[logits.0].value;
        if logits_value.shape() != targets.shape() {
            return Err(Error::shape_mismatch(
                "cross_entropy logits/targets",
                logits_value.shape(),
                targets.shape(),
            ));
        }
        validate_one_hot(targets)?;
        let probs = ops::softmax_forward(logits_value)?;
        let (m, c) = (probs.shape()[0], probs.shape()[1]);
        let floor = T::from_f64_lossy(PROB_FLOOR);
        let mut total = T::zero();
        for i in 0..m {
            let mut row = T::zero();
            for j in 0..c {
                let y = targets.data()[i * c + j];
                if y != T::zero() {
                    let p = probs.data()[i * c + j].max(floor);
                    row -= y * p.ln();
                }
            }
            total += row;
        }
        if reduction == Reduction::Mean {
            total = total / T::from_usize(m).expect("batch size fits scalar");
        }
        debug_assert!(total >= T::zero());
        let node = self.push(
            Tensor::scalar(total),
            Op::CrossEntropy {
                logits,
                probs,
                targets: targets.clone(),
                reduction,
            },
        );
        Ok(LossValue { node, value: total })
    }

    /// Mean squared error between student features (differentiated) and
    /// teacher features (a constant target): `sum((f - g)^2) / (m * d)`.
    pub fn mse_feature(&mut self, student: NodeId, teacher: &Tensor<T>) -> Result<LossValue<T>> {
        self.check_recording()?;
        let student_value = &self.nodes[student.0].value;
        if student_value.shape() != teacher.shape() {
            return Err(Error::shape_mismatch(
                "feature mse student/teacher",
                student_value.shape(),
                teacher.shape(),
            ));
        }
        let n = T::from_usize(student_value.numel()).expect("element count fits scalar");
        let mut total = T::zero();
        for (&g, &f) in student_value.data().iter().zip(teacher.data().iter()) {
            let d = f - g;
            total += d * d;
        }
        let value = total / n;
        debug_assert!(value >= T::zero());
        let node = self.push(
            Tensor::scalar(value),
            Op::MseFeature { student, teacher: teacher.clone() },
        );
        Ok(LossValue { node, value })
    }

    /// Weighted combination of the two loss terms. Terms with an exactly-zero
    /// weight are dropped from the node entirely, so the degenerate weighting
    /// is bitwise identical to the surviving term alone.
    pub fn combined(
        &mut self,
        mse: &LossValue<T>,
        xent: &LossValue<T>,
        lambda_mse: T,
        lambda_xent: T,
    ) -> Result<LossValue<T>> {
        self.weighted(&[(lambda_mse, mse), (lambda_xent, xent)])
    }

    /// General non-negative weighted sum of scalar losses.
    pub fn weighted(&mut self, terms: &[(T, &LossValue<T>)]) -> Result<LossValue<T>> {
        self.check_recording()?;
        for (weight, _) in terms {
            if *weight < T::zero() {
                return Err(Error::Config(format!(
                    "loss weights must be non-negative, got {weight}"
                )));
            }
        }
        let kept: Vec<(T, NodeId)> = terms
            .iter()
            .filter(|(w, _)| *w != T::zero())
            .map(|(w, l)| (*w, l.node))
            .collect();
        let mut value = T::zero();
        for (w, l) in terms.iter().filter(|(w, _)| *w != T::zero()) {
            value += *w * l.value;
        }
        let node = self.push(Tensor::scalar(value), Op::WeightedSum { terms: kept });
        Ok(LossValue { node, value })
    }

    /// Reverse pass from a scalar loss. Populates gradients on every leaf
    /// reachable from the loss and zeros on every other leaf, then marks the
    /// graph consumed.
    pub fn backward(&mut self, loss: &LossValue<T>) -> Result<()> {
        if self.consumed {
            return Err(Error::Usage(
                "backward on a consumed graph; build a fresh graph per step".into(),
            ));
        }
        self.consumed = true;
        let root = loss.node.0;
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[root] = Some(Tensor::scalar(T::one()));

        for id in (0..=root).rev() {
            let Some(grad_out) = grads[id].take() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Leaf => {
                    // Retained below.
                }
                Op::Linear { input, weight, bias } => {
                    let (d_in, d_w, d_b) = ops::linear_backward(
                        &self.nodes[input.0].value,
                        &self.nodes[weight.0].value,
                        &grad_out,
                    );
                    accumulate(&mut grads, input.0, d_in);
                    accumulate(&mut grads, weight.0, d_w);
                    accumulate(&mut grads, bias.0, d_b);
                }
                Op::Conv2d { input, kernel, bias, stride, padding } => {
                    let (d_in, d_k, d_b) = ops::conv2d_backward(
                        &self.nodes[input.0].value,
                        &self.nodes[kernel.0].value,
                        &grad_out,
                        *stride,
                        *padding,
                    );
                    accumulate(&mut grads, input.0, d_in);
                    accumulate(&mut grads, kernel.0, d_k);
                    accumulate(&mut grads, bias.0, d_b);
                }
                Op::Relu { input } => {
                    let d_in = ops::relu_backward(&self.nodes[input.0].value, &grad_out);
                    accumulate(&mut grads, input.0, d_in);
                }
                Op::MaxPool2d { input, argmax } => {
                    let d_in = ops::maxpool2d_backward(
                        self.nodes[input.0].value.shape(),
                        argmax,
                        &grad_out,
                    );
                    accumulate(&mut grads, input.0, d_in);
                }
                Op::Flatten { input } => {
                    let shape = self.nodes[input.0].value.shape().to_vec();
                    let d_in = grad_out.reshaped(shape).expect("flatten preserves count");
                    accumulate(&mut grads, input.0, d_in);
                }
                Op::Softmax { logits } => {
                    let d_in = ops::softmax_backward(&self.nodes[id].value, &grad_out);
                    accumulate(&mut grads, logits.0, d_in);
                }
                Op::CrossEntropy { logits, probs, targets, reduction } => {
                    let upstream = grad_out.data()[0];
                    let (m, c) = (probs.shape()[0], probs.shape()[1]);
                    let scale = match reduction {
                        Reduction::Mean => {
                            upstream / T::from_usize(m).expect("batch size fits scalar")
                        }
                        Reduction::Sum => upstream,
                    };
                    let mut d = vec![T::zero(); m * c];
                    for (k, slot) in d.iter_mut().enumerate() {
                        *slot = scale * (probs.data()[k] - targets.data()[k]);
                    }
                    let d_in = Tensor::new(vec![m, c], d).expect("shape");
                    accumulate(&mut grads, logits.0, d_in);
                }
                Op::MseFeature { student, teacher } => {
                    let upstream = grad_out.data()[0];
                    let g = &self.nodes[student.0].value;
                    let n = T::from_usize(g.numel()).expect("element count fits scalar");
                    let two = T::from_f64_lossy(2.0);
                    let data: Vec<T> = g
                        .data()
                        .iter()
                        .zip(teacher.data().iter())
                        .map(|(&gv, &fv)| upstream * two * (gv - fv) / n)
                        .collect();
                    let d_in = Tensor::new(g.shape().to_vec(), data).expect("shape");
                    accumulate(&mut grads, student.0, d_in);
                }
                Op::WeightedSum { terms } => {
                    let upstream = grad_out.data()[0];
                    for (w, parent) in terms {
                        accumulate(&mut grads, parent.0, Tensor::scalar(*w * upstream));
                    }
                }
            }
            if matches!(self.nodes[id].op, Op::Leaf) {
                grads[id] = Some(grad_out);
            }
        }

        // Leaves untouched by the loss get exact zeros.
        for (id, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        self.grads = grads;
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: usize, delta: Tensor<T>) {
    match &mut grads[id] {
        Some(g) => g.accumulate(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn validate_one_hot<T: Scalar>(targets: &Tensor<T>) -> Result<()> {
    let (m, c) = (targets.shape()[0], targets.shape()[1]);
    for i in 0..m {
        let mut ones = 0usize;
        for j in 0..c {
            let v = targets.data()[i * c + j];
            if v == T::one() {
                ones += 1;
            } else if v != T::zero() {
                return Err(Error::Validation(format!(
                    "target row {i} is not one-hot: entry {j} is {v}"
                )));
            }
        }
        if ones != 1 {
            return Err(Error::Validation(format!(
                "target row {i} is not one-hot: {ones} entries set"
            )));
        }
    }
    Ok(())
}
