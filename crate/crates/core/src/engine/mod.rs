//! Forward-only NHWC inference for small encoder-decoder depth networks.
//!
//! A network is a [`GraphSpec`] (JSON, see [`graph`]) plus a [`WeightStore`]
//! (the `DBW1` binary container, see [`weights`]). [`Model`] binds the two,
//! optionally folding collapsible linear blocks, and executes the graph in
//! declaration order.

pub mod clb;
pub mod exec;
pub mod graph;
pub mod ops;
pub mod tcl;
pub mod weights;

pub use clb::{collapse_clb, ClbBlock, CollapsedConv};
pub use exec::{run_graph, Model, ModelOptions, ShapeTrace};
pub use graph::{GraphSpec, InputDecl, Node, Op, ParamSpec, GRAPH_SCHEMA};
pub use tcl::{tcl_tiny, TCL_TINY_JSON};
pub use ops::{Conv2dParams, KernelPath};
pub use weights::WeightStore;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    HardSwish,
    HardSigmoid,
}

impl Activation {
    pub fn apply(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Relu => ops::relu(x),
            Activation::HardSwish => ops::hard_swish(x),
            Activation::HardSigmoid => ops::hard_sigmoid(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::HardSwish => "hard_swish",
            Activation::HardSigmoid => "hard_sigmoid",
        }
    }
}
