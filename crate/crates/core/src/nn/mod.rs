//! Int8 CNN engine: model container, kernels, float oracle and the shared
//! multitenant arena.

mod arena;
pub mod builder;
pub mod kernels;
mod model;
pub mod reference;
pub mod zoo;

use std::fmt::Write as _;

use thiserror::Error;

pub use arena::{
    plan_arena, Arena, ArenaPlan, PendingInference, PlannedBuffer, TenantToken, DEFAULT_ARENA_BYTES,
};
pub use kernels::{
    avg_pool2d, conv2d, depthwise_conv2d, fully_connected, reshape, run_layer, softmax_int8,
};
pub use model::{
    out_dim, parse_model, Activation, LayerDesc, LayerKind, ModelGraph, ModelId, Padding,
    FLASH_BUDGET, FORMAT_VERSION, MAGIC,
};
pub use reference::{reference_invoke_float, reference_trace_float};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("bad magic: not a TMLF model")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u16),
    #[error("model stream truncated at byte {offset}")]
    TruncatedStream { offset: usize },
    #[error("model is {size} bytes, flash budget is {budget}")]
    FlashBudgetExceeded { size: usize, budget: usize },
    #[error("invalid layer {index}: {reason}")]
    InvalidLayer { index: usize, reason: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("{0} trailing bytes after the last layer")]
    TrailingBytes(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("arena overflow: plan needs {peak} bytes, arena has {capacity}")]
    ArenaOverflow { peak: usize, capacity: usize },
    #[error("arena busy: tenant {active} has an inference in flight, cannot serve {requested}")]
    TenantBusy { active: ModelId, requested: ModelId },
    #[error("model {0} is not the active arena tenant")]
    TenantNotActive(ModelId),
}

/// Layer table plus flash and arena figures, as printed by `inspect`.
pub fn inspect_report(graph: &ModelGraph, arena_capacity: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model {} (id {})", graph.name(), graph.id());
    let _ = writeln!(
        out,
        "input {} {}",
        graph.input_shape(),
        graph.input_params()
    );
    let _ = writeln!(
        out,
        "{:>3}  {:<16} {:<7} {:<6} {:<6} {:<18} {:>8}  output",
        "#", "kind", "stride", "pad", "act", "shape", "params"
    );
    for (i, l) in graph.layers().iter().enumerate() {
        let params = l.weights.as_ref().map_or(0, |w| w.data.len()) + l.bias.len();
        let _ = writeln!(
            out,
            "{:>3}  {:<16} {:<7} {:<6} {:<6} {:<18} {:>8}  {}",
            i,
            l.kind,
            format!("{}x{}", l.stride.0, l.stride.1),
            format!("{:?}", l.padding),
            format!("{:?}", l.activation),
            graph.tensor_shape(i + 1).to_string(),
            params,
            l.output
        );
    }
    let flash_ok = graph.flash_size() <= FLASH_BUDGET;
    let _ = writeln!(
        out,
        "flash {} bytes / budget {} {}",
        graph.flash_size(),
        FLASH_BUDGET,
        if flash_ok { "PASS" } else { "FAIL" }
    );
    match plan_arena(graph, usize::MAX) {
        Ok(plan) => {
            let ok = plan.peak_bytes <= arena_capacity;
            let _ = writeln!(
                out,
                "arena peak {} bytes (max live {}) / capacity {} {}",
                plan.peak_bytes,
                plan.max_live_bytes,
                arena_capacity,
                if ok { "PASS" } else { "FAIL" }
            );
        }
        Err(e) => {
            let _ = writeln!(out, "arena plan failed: {e}");
        }
    }
    out
}
