//! Declarative network description.
//!
//! JSON layout (`schema` must be `depthbench-graph/1`):
//!
//! ```json
//! {
//!   "schema": "depthbench-graph/1",
//!   "name": "example",
//!   "input": { "id": "image", "shape": [1, 480, 640, 3] },
//!   "nodes": [
//!     { "id": "conv", "op": "conv2d", "inputs": ["image"],
//!       "params": { "out_channels": 8, "kernel": 3, "stride": 2, "padding": 1 },
//!       "shape": [1, 240, 320, 8] }
//!   ],
//!   "outputs": ["conv"]
//! }
//! ```
//!
//! Nodes are listed in execution order and may only consume the graph input
//! or earlier nodes, which makes every valid file a topologically sorted DAG.
//! `shape` is optional; when present it must equal the inferred NHWC shape.
//!
//! | op | params |
//! |----|--------|
//! | `conv2d` | `out_channels`, `kernel`, `stride`=1, `padding`=0, `dilation`=1, `bias`=true |
//! | `depthwise_conv2d` | `kernel`, `stride`=1, `padding`=0, `dilation`=1, `bias`=true |
//! | `relu`, `hard_swish`, `hard_sigmoid` | none |
//! | `squeeze_excite` | `reduced_channels` |
//! | `resize_nearest`, `resize_bilinear` | exactly one of `scale` (integer) or `size` (`[h, w]`) |
//! | `concat` | `axis`=3 |
//! | `add` | none |
//! | `clb` | `out_channels`, `kernel`, `expand_ratio`=4, `residual`=false, `interior_activation`=null |

use std::collections::{HashMap, HashSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ops::Conv2dParams;
use super::Activation;
use crate::error::{Error, Result};

pub const GRAPH_SCHEMA: &str = "depthbench-graph/1";

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn four() -> usize {
    4
}

fn channel_axis() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvAttrs {
    pub out_channels: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default = "one")]
    pub dilation: usize,
    #[serde(default = "yes")]
    pub bias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthwiseAttrs {
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default = "one")]
    pub dilation: usize,
    #[serde(default = "yes")]
    pub bias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeAttrs {
    pub reduced_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResizeAttrs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcatAttrs {
    #[serde(default = "channel_axis")]
    pub axis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClbAttrs {
    pub out_channels: usize,
    pub kernel: usize,
    #[serde(default = "four")]
    pub expand_ratio: usize,
    #[serde(default)]
    pub residual: bool,
    #[serde(default)]
    pub interior_activation: Option<Activation>,
}

impl ConvAttrs {
    pub fn conv_params(&self) -> Conv2dParams {
        Conv2dParams::new(self.stride, self.padding, self.dilation)
    }
}

impl DepthwiseAttrs {
    pub fn conv_params(&self) -> Conv2dParams {
        Conv2dParams::new(self.stride, self.padding, self.dilation)
    }
}

impl ClbAttrs {
    pub fn hidden_channels(&self) -> usize {
        self.expand_ratio * self.out_channels
    }

    /// Stride 1 with "same" padding.
    pub fn conv_params(&self) -> Conv2dParams {
        Conv2dParams::new(1, self.kernel / 2, 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Conv2d(ConvAttrs),
    DepthwiseConv2d(DepthwiseAttrs),
    Activation(Activation),
    SqueezeExcite(SeAttrs),
    ResizeNearest(ResizeAttrs),
    ResizeBilinear(ResizeAttrs),
    Concat(ConcatAttrs),
    Add,
    Clb(ClbAttrs),
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Conv2d(_) => "conv2d",
            Op::DepthwiseConv2d(_) => "depthwise_conv2d",
            Op::Activation(a) => a.name(),
            Op::SqueezeExcite(_) => "squeeze_excite",
            Op::ResizeNearest(_) => "resize_nearest",
            Op::ResizeBilinear(_) => "resize_bilinear",
            Op::Concat(_) => "concat",
            Op::Add => "add",
            Op::Clb(_) => "clb",
        }
    }

    fn parse(kind: &str, params: Value) -> std::result::Result<Self, String> {
        fn attrs<T: DeserializeOwned>(v: Value) -> std::result::Result<T, String> {
            serde_json::from_value(v).map_err(|e| format!("bad params: {e}"))
        }
        fn none(v: &Value) -> std::result::Result<(), String> {
            match v {
                Value::Null => Ok(()),
                Value::Object(m) if m.is_empty() => Ok(()),
                _ => Err("this op takes no params".into()),
            }
        }
        Ok(match kind {
            "conv2d" => Op::Conv2d(attrs(params)?),
            "depthwise_conv2d" => Op::DepthwiseConv2d(attrs(params)?),
            "relu" | "hard_swish" | "hard_sigmoid" => {
                none(&params)?;
                Op::Activation(attrs(Value::String(kind.into()))?)
            }
            "squeeze_excite" => Op::SqueezeExcite(attrs(params)?),
            "resize_nearest" => Op::ResizeNearest(attrs(params)?),
            "resize_bilinear" => Op::ResizeBilinear(attrs(params)?),
            "concat" => Op::Concat(attrs(if params.is_null() { Value::Object(Default::default()) } else { params })?),
            "add" => {
                none(&params)?;
                Op::Add
            }
            "clb" => Op::Clb(attrs(params)?),
            other => return Err(format!("unknown op_kind `{other}`")),
        })
    }

    fn params(&self) -> Value {
        let v = match self {
            Op::Conv2d(a) => serde_json::to_value(a),
            Op::DepthwiseConv2d(a) => serde_json::to_value(a),
            Op::SqueezeExcite(a) => serde_json::to_value(a),
            Op::ResizeNearest(a) | Op::ResizeBilinear(a) => serde_json::to_value(a),
            Op::Concat(a) => serde_json::to_value(a),
            Op::Clb(a) => serde_json::to_value(a),
            Op::Activation(_) | Op::Add => return Value::Object(Default::default()),
        };
        v.expect("attribute structs serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDecl {
    pub id: String,
    pub shape: [usize; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub op: Op,
    pub inputs: Vec<String>,
    /// Declared output shape, checked against inference.
    pub shape: Option<[usize; 4]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    op: String,
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(default)]
    params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<[usize; 4]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    schema: String,
    name: String,
    input: InputDecl,
    nodes: Vec<RawNode>,
    outputs: Vec<String>,
}

/// A validated graph with inferred shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    name: String,
    input: InputDecl,
    nodes: Vec<Node>,
    outputs: Vec<String>,
    shapes: HashMap<String, [usize; 4]>,
}

/// A weight tensor a node needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub node: String,
    pub name: &'static str,
    pub shape: Vec<usize>,
    /// Input fan-in, used for initialization scaling.
    pub fan_in: usize,
}

impl GraphSpec {
    pub fn new(name: impl Into<String>, input: InputDecl, nodes: Vec<Node>, outputs: Vec<String>) -> Result<Self> {
        let mut g = Self {
            name: name.into(),
            input,
            nodes,
            outputs,
            shapes: HashMap::new(),
        };
        g.shapes = g.infer_shapes()?;
        Ok(g)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::graph("<file>", e.to_string()))?;
        if file.schema != GRAPH_SCHEMA {
            return Err(Error::graph(
                "<file>",
                format!("unsupported schema `{}`, expected `{GRAPH_SCHEMA}`", file.schema),
            ));
        }
        let nodes = file
            .nodes
            .into_iter()
            .map(|raw| {
                let op = Op::parse(&raw.op, raw.params).map_err(|e| Error::graph(&raw.id, e))?;
                Ok(Node {
                    id: raw.id,
                    op,
                    inputs: raw.inputs,
                    shape: raw.shape,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.name, file.input, nodes, file.outputs)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            schema: GRAPH_SCHEMA.into(),
            name: self.name.clone(),
            input: self.input.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| RawNode {
                    id: n.id.clone(),
                    op: n.op.kind().into(),
                    inputs: n.inputs.clone(),
                    params: n.op.params(),
                    shape: n.shape,
                })
                .collect(),
            outputs: self.outputs.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input(&self) -> &InputDecl {
        &self.input
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    /// Inferred NHWC shape of a node or of the graph input.
    pub fn shape_of(&self, id: &str) -> Option<[usize; 4]> {
        self.shapes.get(id).copied()
    }

    fn infer_shapes(&self) -> Result<HashMap<String, [usize; 4]>> {
        let mut shapes = HashMap::new();
        if self.input.shape.contains(&0) {
            return Err(Error::graph(&self.input.id, "input extents must be >= 1"));
        }
        shapes.insert(self.input.id.clone(), self.input.shape);
        let mut seen = HashSet::new();
        seen.insert(self.input.id.as_str());
        for node in &self.nodes {
            if !seen.insert(node.id.as_str()) {
                return Err(Error::graph(&node.id, "duplicate node id"));
            }
            let ins = node
                .inputs
                .iter()
                .map(|i| {
                    shapes.get(i).copied().ok_or_else(|| {
                        Error::graph(&node.id, format!("input `{i}` is not defined before this node"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let out = infer_node(&node.op, &ins).map_err(|e| Error::graph(&node.id, e))?;
            if let Some(declared) = node.shape {
                if declared != out {
                    return Err(Error::graph(
                        &node.id,
                        format!("declared shape {declared:?} but inferred {out:?}"),
                    ));
                }
            }
            shapes.insert(node.id.clone(), out);
        }
        if self.outputs.is_empty() {
            return Err(Error::graph("<outputs>", "graph declares no outputs"));
        }
        for o in &self.outputs {
            if !shapes.contains_key(o) {
                return Err(Error::graph(o, "output refers to an undefined node"));
            }
        }
        Ok(shapes)
    }

    /// Weight tensors required by every parameterized node.
    pub fn parameter_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        for node in &self.nodes {
            let cin = node
                .inputs
                .first()
                .and_then(|i| self.shapes.get(i))
                .map_or(0, |s| s[3]);
            let mut push = |name: &'static str, shape: Vec<usize>, fan_in: usize| {
                specs.push(ParamSpec {
                    node: node.id.clone(),
                    name,
                    shape,
                    fan_in,
                })
            };
            match &node.op {
                Op::Conv2d(a) => {
                    let fan = a.kernel * a.kernel * cin;
                    push("kernel", vec![a.kernel, a.kernel, cin, a.out_channels], fan);
                    if a.bias {
                        push("bias", vec![a.out_channels], fan);
                    }
                }
                Op::DepthwiseConv2d(a) => {
                    let fan = a.kernel * a.kernel;
                    push("kernel", vec![a.kernel, a.kernel, cin, 1], fan);
                    if a.bias {
                        push("bias", vec![cin], fan);
                    }
                }
                Op::SqueezeExcite(a) => {
                    push("reduce.kernel", vec![1, 1, cin, a.reduced_channels], cin);
                    push("reduce.bias", vec![a.reduced_channels], cin);
                    push("expand.kernel", vec![1, 1, a.reduced_channels, cin], a.reduced_channels);
                    push("expand.bias", vec![cin], a.reduced_channels);
                }
                Op::Clb(a) => {
                    let hidden = a.hidden_channels();
                    let fan = a.kernel * a.kernel * cin;
                    push("expand.kernel", vec![a.kernel, a.kernel, cin, hidden], fan);
                    push("expand.bias", vec![hidden], fan);
                    push("project.kernel", vec![1, 1, hidden, a.out_channels], hidden);
                    push("project.bias", vec![a.out_channels], hidden);
                }
                _ => {}
            }
        }
        specs
    }
}

fn single(ins: &[[usize; 4]]) -> std::result::Result<[usize; 4], String> {
    match ins {
        [s] => Ok(*s),
        _ => Err(format!("expects exactly one input, got {}", ins.len())),
    }
}

fn conv_out(
    s: [usize; 4],
    kernel: usize,
    p: Conv2dParams,
    cout: usize,
) -> std::result::Result<[usize; 4], String> {
    if kernel == 0 || p.stride == 0 || p.dilation == 0 || cout == 0 {
        return Err("kernel, stride, dilation and channels must be >= 1".into());
    }
    match (p.output_dim(s[1], kernel), p.output_dim(s[2], kernel)) {
        (Some(h), Some(w)) => Ok([s[0], h, w, cout]),
        _ => Err(format!(
            "{kernel}x{kernel} kernel does not fit a {}x{} input",
            s[1], s[2]
        )),
    }
}

fn resize_out(s: [usize; 4], a: &ResizeAttrs) -> std::result::Result<[usize; 4], String> {
    match (a.scale, a.size) {
        (Some(k), None) if k >= 1 => Ok([s[0], s[1] * k, s[2] * k, s[3]]),
        (None, Some([h, w])) if h >= 1 && w >= 1 => Ok([s[0], h, w, s[3]]),
        _ => Err("resize needs exactly one of a positive `scale` or a non-empty `size`".into()),
    }
}

fn infer_node(op: &Op, ins: &[[usize; 4]]) -> std::result::Result<[usize; 4], String> {
    match op {
        Op::Conv2d(a) => conv_out(single(ins)?, a.kernel, a.conv_params(), a.out_channels),
        Op::DepthwiseConv2d(a) => {
            let s = single(ins)?;
            conv_out(s, a.kernel, a.conv_params(), s[3])
        }
        Op::Activation(_) => single(ins),
        Op::SqueezeExcite(a) => {
            if a.reduced_channels == 0 {
                return Err("reduced_channels must be >= 1".into());
            }
            single(ins)
        }
        Op::ResizeNearest(a) | Op::ResizeBilinear(a) => resize_out(single(ins)?, a),
        Op::Concat(a) => {
            let first = *ins.first().ok_or("concat needs at least one input")?;
            if a.axis > 3 {
                return Err(format!("axis {} out of range", a.axis));
            }
            let mut out = first;
            out[a.axis] = 0;
            for s in ins {
                if (0..4).any(|d| d != a.axis && s[d] != first[d]) {
                    return Err(format!("cannot concat {first:?} with {s:?} on axis {}", a.axis));
                }
                out[a.axis] += s[a.axis];
            }
            Ok(out)
        }
        Op::Add => {
            let first = *ins.first().ok_or("add needs at least one input")?;
            if ins.iter().any(|s| *s != first) {
                return Err(format!("add inputs differ in shape: {ins:?}"));
            }
            Ok(first)
        }
        Op::Clb(a) => {
            let s = single(ins)?;
            if a.kernel % 2 == 0 {
                return Err("clb kernel must be odd".into());
            }
            if a.expand_ratio == 0 {
                return Err("expand_ratio must be >= 1".into());
            }
            if a.residual && s[3] != a.out_channels {
                return Err(format!(
                    "residual clb needs c_in == c_out, got {} -> {}",
                    s[3], a.out_channels
                ));
            }
            conv_out(s, a.kernel, a.conv_params(), a.out_channels)
        }
    }
}
