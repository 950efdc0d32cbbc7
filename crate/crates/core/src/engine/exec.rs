use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::clb::{collapse_clb, ClbBlock, CollapsedConv};
use super::graph::{GraphSpec, Op};
use super::ops::{self, Conv2dParams, KernelPath, SeWeights};
use super::weights::WeightStore;
use super::Activation;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::types::{DepthMap, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub kernels: KernelPath,
    /// Fold linear blocks into single convolutions at load time.
    pub collapse_clb: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            kernels: KernelPath::Optimized,
            collapse_clb: true,
        }
    }
}

#[derive(Debug, Clone)]
enum Step {
    Conv {
        kernel: Tensor,
        bias: Option<Vec<f32>>,
        params: Conv2dParams,
        depthwise: bool,
    },
    Act(Activation),
    Se {
        reduce_kernel: Tensor,
        reduce_bias: Vec<f32>,
        expand_kernel: Tensor,
        expand_bias: Vec<f32>,
    },
    Resize {
        bilinear: bool,
        height: usize,
        width: usize,
    },
    Concat(usize),
    Add,
    Clb(ClbBlock),
    Collapsed(CollapsedConv),
}

/// Output shape of every executed node, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShapeTrace {
    pub entries: Vec<(String, Vec<usize>)>,
}

impl ShapeTrace {
    pub fn get(&self, id: &str) -> Option<&[usize]> {
        self.entries
            .iter()
            .find(|(n, _)| n == id)
            .map(|(_, s)| s.as_slice())
    }
}

/// A graph bound to its weights, ready to run.
#[derive(Debug, Clone)]
pub struct Model {
    graph: GraphSpec,
    options: ModelOptions,
    steps: Vec<Step>,
    /// Slot indices read by each node; slot 0 is the graph input, slot
    /// `i + 1` is node `i`.
    reads: Vec<Vec<usize>>,
    /// Slot freed after each node runs.
    frees: Vec<Vec<usize>>,
    output_slots: Vec<usize>,
}

fn take(weights: &WeightStore, node: &str, param: &str) -> Result<Tensor> {
    weights
        .get(node, param)
        .cloned()
        .ok_or_else(|| Error::graph(node, format!("missing weight `{param}`")))
}

fn vector(weights: &WeightStore, node: &str, param: &str) -> Result<Vec<f32>> {
    take(weights, node, param).map(Tensor::into_data)
}

impl Model {
    pub fn new(graph: GraphSpec, weights: &WeightStore, options: ModelOptions) -> Result<Self> {
        weights.validate_for(&graph)?;
        let mut slot_of: HashMap<&str, usize> = HashMap::new();
        slot_of.insert(graph.input().id.as_str(), 0);
        let mut steps = Vec::with_capacity(graph.nodes().len());
        let mut reads = Vec::with_capacity(graph.nodes().len());
        for (i, node) in graph.nodes().iter().enumerate() {
            reads.push(node.inputs.iter().map(|id| slot_of[id.as_str()]).collect::<Vec<_>>());
            slot_of.insert(node.id.as_str(), i + 1);
            let id = node.id.as_str();
            let step = match &node.op {
                Op::Conv2d(a) => Step::Conv {
                    kernel: take(weights, id, "kernel")?,
                    bias: if a.bias { Some(vector(weights, id, "bias")?) } else { None },
                    params: a.conv_params(),
                    depthwise: false,
                },
                Op::DepthwiseConv2d(a) => Step::Conv {
                    kernel: take(weights, id, "kernel")?,
                    bias: if a.bias { Some(vector(weights, id, "bias")?) } else { None },
                    params: a.conv_params(),
                    depthwise: true,
                },
                Op::Activation(a) => Step::Act(*a),
                Op::SqueezeExcite(_) => Step::Se {
                    reduce_kernel: take(weights, id, "reduce.kernel")?,
                    reduce_bias: vector(weights, id, "reduce.bias")?,
                    expand_kernel: take(weights, id, "expand.kernel")?,
                    expand_bias: vector(weights, id, "expand.bias")?,
                },
                Op::ResizeNearest(_) | Op::ResizeBilinear(_) => {
                    let [_, height, width, _] = graph.shape_of(id).expect("validated graph");
                    Step::Resize {
                        bilinear: matches!(node.op, Op::ResizeBilinear(_)),
                        height,
                        width,
                    }
                }
                Op::Concat(a) => Step::Concat(a.axis),
                Op::Add => Step::Add,
                Op::Clb(a) => {
                    let block = ClbBlock {
                        expand_kernel: take(weights, id, "expand.kernel")?,
                        expand_bias: vector(weights, id, "expand.bias")?,
                        project_kernel: take(weights, id, "project.kernel")?,
                        project_bias: vector(weights, id, "project.bias")?,
                        params: a.conv_params(),
                        residual: a.residual,
                        interior_activation: a.interior_activation,
                    };
                    block.dims().map_err(|e| Error::graph(id, e.to_string()))?;
                    if options.collapse_clb && block.interior_activation.is_none() {
                        Step::Collapsed(collapse_clb(&block).map_err(|e| Error::graph(id, e.to_string()))?)
                    } else {
                        Step::Clb(block)
                    }
                }
            };
            steps.push(step);
        }
        let output_slots: Vec<usize> = graph.outputs().iter().map(|o| slot_of[o.as_str()]).collect();
        let mut last_read = vec![None; steps.len() + 1];
        for (i, r) in reads.iter().enumerate() {
            for &s in r {
                last_read[s] = Some(i);
            }
        }
        let mut frees = vec![Vec::new(); steps.len()];
        for (slot, last) in last_read.iter().enumerate() {
            if let Some(i) = last {
                if !output_slots.contains(&slot) {
                    frees[*i].push(slot);
                }
            }
        }
        Ok(Self {
            graph,
            options,
            steps,
            reads,
            frees,
            output_slots,
        })
    }

    pub fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    pub fn options(&self) -> ModelOptions {
        self.options
    }

    /// Runs the graph and returns its outputs in declaration order.
    pub fn run_tensor(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        self.execute(input, None)
    }

    pub fn run_traced(&self, input: &Tensor) -> Result<(Vec<Tensor>, ShapeTrace)> {
        let mut trace = ShapeTrace::default();
        let out = self.execute(input, Some(&mut trace))?;
        Ok((out, trace))
    }

    /// Runs an RGB image through the graph; the first output must be a
    /// single-channel map and becomes the predicted depth.
    pub fn run(&self, image: &RgbImage) -> Result<DepthMap> {
        let outputs = self.run_tensor(&image.to_tensor())?;
        let out = &outputs[0];
        let [n, h, w, c] = out.nhwc()?;
        if n != 1 || c != 1 {
            return Err(Error::graph(
                &self.graph.outputs()[0],
                format!("output shape {:?} is not a single depth map", out.shape()),
            ));
        }
        DepthMap::from_prediction(h, w, out.data().iter().map(|&v| f64::from(v)).collect())
    }

    fn execute(&self, input: &Tensor, mut trace: Option<&mut ShapeTrace>) -> Result<Vec<Tensor>> {
        let expected = self.graph.input().shape;
        if input.shape() != expected {
            return Err(Error::Shape(format!(
                "input shape {:?} does not match graph input {expected:?}",
                input.shape()
            )));
        }
        let mut slots: Vec<Option<Tensor>> = vec![None; self.steps.len() + 1];
        slots[0] = Some(input.clone());
        let path = self.options.kernels;
        for (i, step) in self.steps.iter().enumerate() {
            let node = &self.graph.nodes()[i];
            let args: Vec<&Tensor> = self.reads[i]
                .iter()
                .map(|&s| slots[s].as_ref().expect("slot read before it was freed"))
                .collect();
            let out = run_step(step, &args, path).map_err(|e| match e {
                Error::Graph { .. } => e,
                other => Error::graph(&node.id, other.to_string()),
            })?;
            if let Some(t) = trace.as_deref_mut() {
                t.entries.push((node.id.clone(), out.shape().to_vec()));
            }
            slots[i + 1] = Some(out);
            for &s in &self.frees[i] {
                slots[s] = None;
            }
        }
        Ok(self
            .output_slots
            .iter()
            .map(|&s| slots[s].clone().expect("outputs are never freed"))
            .collect())
    }
}

fn run_step(step: &Step, args: &[&Tensor], path: KernelPath) -> Result<Tensor> {
    match step {
        Step::Conv {
            kernel,
            bias,
            params,
            depthwise,
        } => {
            let bias = bias.as_deref();
            match (depthwise, path) {
                (false, KernelPath::Naive) => ops::conv2d_naive(args[0], kernel, bias, *params),
                (false, KernelPath::Optimized) => ops::conv2d(args[0], kernel, bias, *params),
                (true, KernelPath::Naive) => ops::depthwise_conv_naive(args[0], kernel, bias, *params),
                (true, KernelPath::Optimized) => ops::depthwise_conv(args[0], kernel, bias, *params),
            }
        }
        Step::Act(a) => Ok(a.apply(args[0])),
        Step::Se {
            reduce_kernel,
            reduce_bias,
            expand_kernel,
            expand_bias,
        } => ops::se_block(
            args[0],
            &SeWeights {
                reduce_kernel,
                reduce_bias,
                expand_kernel,
                expand_bias,
            },
        ),
        Step::Resize { bilinear, height, width } => {
            if *bilinear {
                ops::resize_bilinear(args[0], *height, *width)
            } else {
                ops::resize_nearest(args[0], *height, *width)
            }
        }
        Step::Concat(axis) => ops::concat(args, *axis),
        Step::Add => ops::add(args),
        Step::Clb(b) => b.forward(args[0], path),
        Step::Collapsed(c) => c.forward(args[0], path),
    }
}

/// Validates, binds and runs a graph on one image with default options.
pub fn run_graph(graph: &GraphSpec, weights: &WeightStore, image: &RgbImage) -> Result<DepthMap> {
    Model::new(graph.clone(), weights, ModelOptions::default())?.run(image)
}
