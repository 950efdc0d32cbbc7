//! The bundled `tcl-tiny` reference network.
//!
//! A MobileNetV3-style encoder on a 128x160 downscale of the VGA input
//! (stem and three inverted-residual stages, squeeze-excite in stages 1 and
//! 3, encoder output at 16x20x48) and a decoder of collapsible linear blocks
//! (48 -> 24 -> 16 -> 8 channels) fused with encoder skips, a 1x1 head at
//! 48x64 and a 10x nearest upscale back to 480x640.

use super::graph::GraphSpec;

/// JSON source of the `tcl-tiny` graph.
pub const TCL_TINY_JSON: &str = include_str!("../../assets/tcl-tiny.graph.json");

pub fn tcl_tiny() -> GraphSpec {
    GraphSpec::from_json(TCL_TINY_JSON).expect("bundled graph is valid")
}
