//! Activation planning and the shared multitenant arena.
//!
//! Every activation tensor is assigned a byte range inside one arena.
//! Tensors whose lifetimes overlap get disjoint ranges; the others may
//! alias. Two models share the arena but only one is resident at a time.

use std::time::{Duration, Instant};

use super::kernels;
use super::model::{LayerKind, ModelGraph, ModelId};
use super::NnError;
use crate::tensor::QuantTensor;

/// 256 KiB of SRAM.
pub const DEFAULT_ARENA_BYTES: usize = 256 * 1024;

/// A contiguous region holding one or more aliased tensors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedBuffer {
    pub offset: usize,
    pub size: usize,
    /// First and last execution step (layer index) during which it is live.
    pub first_step: usize,
    pub last_step: usize,
}

impl PlannedBuffer {
    pub fn live_during(&self, other: &PlannedBuffer) -> bool {
        self.first_step <= other.last_step && other.first_step <= self.last_step
    }

    pub fn overlaps(&self, other: &PlannedBuffer) -> bool {
        self.offset < other.offset + other.size && other.offset < self.offset + self.size
    }

    pub fn end(&self) -> usize {
        self.offset + self.size
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArenaPlan {
    pub buffers: Vec<PlannedBuffer>,
    /// Buffer holding tensor `i` (0 = graph input).
    pub tensor_buffer: Vec<usize>,
    /// Highest byte used by the plan; this is what must fit the arena.
    pub peak_bytes: usize,
    /// Largest total size of simultaneously live buffers.
    pub max_live_bytes: usize,
}

impl ArenaPlan {
    pub fn tensor_offset(&self, tensor: usize) -> usize {
        self.buffers[self.tensor_buffer[tensor]].offset
    }
}

/// Greedy first-fit placement, largest buffers first.
pub fn plan_arena(graph: &ModelGraph, capacity: usize) -> Result<ArenaPlan, NnError> {
    let layers = graph.layers();
    let shapes = graph.tensor_shapes();

    let mut buffers: Vec<PlannedBuffer> = Vec::new();
    let mut tensor_buffer = Vec::with_capacity(shapes.len());
    buffers.push(PlannedBuffer {
        offset: 0,
        size: shapes[0].num_elements(),
        first_step: 0,
        last_step: 0,
    });
    tensor_buffer.push(0);
    for (step, layer) in layers.iter().enumerate() {
        let input_buf = tensor_buffer[step];
        buffers[input_buf].last_step = buffers[input_buf].last_step.max(step);
        if layer.kind == LayerKind::Reshape {
            tensor_buffer.push(input_buf);
        } else {
            buffers.push(PlannedBuffer {
                offset: 0,
                size: shapes[step + 1].num_elements(),
                first_step: step,
                last_step: step,
            });
            tensor_buffer.push(buffers.len() - 1);
        }
    }

    let mut order: Vec<usize> = (0..buffers.len()).collect();
    order.sort_by(|&a, &b| {
        buffers[b]
            .size
            .cmp(&buffers[a].size)
            .then(buffers[a].first_step.cmp(&buffers[b].first_step))
    });
    let mut placed: Vec<usize> = Vec::with_capacity(buffers.len());
    for &i in &order {
        let mut conflicts: Vec<(usize, usize)> = placed
            .iter()
            .filter(|&&j| buffers[j].live_during(&buffers[i]))
            .map(|&j| (buffers[j].offset, buffers[j].end()))
            .collect();
        conflicts.sort_unstable();
        let mut offset = 0;
        for (start, end) in conflicts {
            if offset + buffers[i].size <= start {
                break;
            }
            offset = offset.max(end);
        }
        buffers[i].offset = offset;
        placed.push(i);
    }

    let peak_bytes = buffers.iter().map(PlannedBuffer::end).max().unwrap_or(0);
    let max_live_bytes = (0..layers.len())
        .map(|step| {
            buffers
                .iter()
                .filter(|b| b.first_step <= step && step <= b.last_step)
                .map(|b| b.size)
                .sum::<usize>()
        })
        .max()
        .unwrap_or(0);
    if peak_bytes > capacity {
        return Err(NnError::ArenaOverflow {
            peak: peak_bytes,
            capacity,
        });
    }
    Ok(ArenaPlan {
        buffers,
        tensor_buffer,
        peak_bytes,
        max_live_bytes,
    })
}

/// Proof that a model is the arena's resident tenant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TenantToken {
    id: ModelId,
    generation: u64,
}

impl TenantToken {
    pub fn model(&self) -> ModelId {
        self.id
    }
}

#[derive(Debug)]
struct Tenant {
    id: ModelId,
    name: String,
    plan: ArenaPlan,
    generation: u64,
}

/// An inference that has executed but whose result has not been collected.
/// The arena stays locked to its tenant until [`Arena::complete`].
#[derive(Debug)]
#[must_use = "the arena stays busy until the inference is completed"]
pub struct PendingInference {
    id: ModelId,
    output: QuantTensor,
}

impl PendingInference {
    pub fn model(&self) -> ModelId {
        self.id
    }
}

/// Single-owner memory arena shared by several models.
#[derive(Debug)]
pub struct Arena {
    memory: Vec<i8>,
    tenant: Option<Tenant>,
    in_flight: Option<ModelId>,
    generation: u64,
    peak_usage: usize,
    last_elapsed: Option<Duration>,
}

impl Default for Arena {
    fn default() -> Self {
        Self::new(DEFAULT_ARENA_BYTES)
    }
}

impl Arena {
    pub fn new(capacity: usize) -> Self {
        Self {
            memory: vec![0; capacity],
            tenant: None,
            in_flight: None,
            generation: 0,
            peak_usage: 0,
            last_elapsed: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.memory.len()
    }

    pub fn active_tenant(&self) -> Option<ModelId> {
        self.tenant.as_ref().map(|t| t.id)
    }

    pub fn active_tenant_name(&self) -> Option<&str> {
        self.tenant.as_ref().map(|t| t.name.as_str())
    }

    pub fn in_flight(&self) -> Option<ModelId> {
        self.in_flight
    }

    pub fn plan(&self) -> Option<&ArenaPlan> {
        self.tenant.as_ref().map(|t| &t.plan)
    }

    /// Largest plan peak installed so far.
    pub fn peak_usage(&self) -> usize {
        self.peak_usage
    }

    /// Wall-clock duration of the most recent inference.
    pub fn last_elapsed(&self) -> Option<Duration> {
        self.last_elapsed
    }

    /// Makes `graph` the resident tenant, replacing the previous plan.
    /// Re-activating the resident tenant is a no-op.
    pub fn activate_tenant(&mut self, graph: &ModelGraph) -> Result<TenantToken, NnError> {
        if let Some(t) = &self.tenant {
            if t.id == graph.id() {
                return Ok(TenantToken {
                    id: t.id,
                    generation: t.generation,
                });
            }
        }
        if let Some(busy) = self.in_flight {
            return Err(NnError::TenantBusy {
                active: busy,
                requested: graph.id(),
            });
        }
        let plan = plan_arena(graph, self.capacity())?;
        self.generation += 1;
        self.peak_usage = self.peak_usage.max(plan.peak_bytes);
        self.tenant = Some(Tenant {
            id: graph.id(),
            name: graph.name().to_string(),
            plan,
            generation: self.generation,
        });
        Ok(TenantToken {
            id: graph.id(),
            generation: self.generation,
        })
    }

    fn check_token(&self, token: TenantToken, graph: &ModelGraph) -> Result<(), NnError> {
        match &self.tenant {
            Some(t)
                if t.id == token.id && t.generation == token.generation && t.id == graph.id() =>
            {
                Ok(())
            }
            _ => Err(NnError::TenantNotActive(graph.id())),
        }
    }

    /// Runs the graph inside the arena and holds the result until
    /// [`Arena::complete`]; no other tenant can be activated meanwhile.
    pub fn begin_inference(
        &mut self,
        token: TenantToken,
        graph: &ModelGraph,
        input: &QuantTensor,
    ) -> Result<PendingInference, NnError> {
        if let Some(busy) = self.in_flight {
            return Err(NnError::TenantBusy {
                active: busy,
                requested: graph.id(),
            });
        }
        self.check_token(token, graph)?;
        if &input.shape != graph.input_shape() || input.params != graph.input_params() {
            return Err(NnError::ShapeMismatch(format!(
                "input {} ({}) does not match graph input {} ({})",
                input.shape,
                input.params,
                graph.input_shape(),
                graph.input_params()
            )));
        }
        let started = Instant::now();
        let output = self.execute(graph, input);
        self.last_elapsed = Some(started.elapsed());
        self.in_flight = Some(graph.id());
        Ok(PendingInference {
            id: graph.id(),
            output,
        })
    }

    /// Releases the arena and hands back the scores.
    pub fn complete(&mut self, pending: PendingInference) -> QuantTensor {
        debug_assert_eq!(self.in_flight, Some(pending.id));
        self.in_flight = None;
        pending.output
    }

    /// Runs one inference to completion.
    pub fn invoke(
        &mut self,
        token: TenantToken,
        graph: &ModelGraph,
        input: &QuantTensor,
    ) -> Result<QuantTensor, NnError> {
        let pending = self.begin_inference(token, graph, input)?;
        Ok(self.complete(pending))
    }

    fn execute(&mut self, graph: &ModelGraph, input: &QuantTensor) -> QuantTensor {
        let plan = &self.tenant.as_ref().expect("checked tenant").plan;
        let shapes = graph.tensor_shapes();
        let off0 = plan.tensor_offset(0);
        self.memory[off0..off0 + input.data.len()].copy_from_slice(&input.data);
        for (i, layer) in graph.layers().iter().enumerate() {
            let in_off = plan.tensor_offset(i);
            let out_off = plan.tensor_offset(i + 1);
            if in_off == out_off && plan.tensor_buffer[i] == plan.tensor_buffer[i + 1] {
                continue; // aliased reshape
            }
            let in_len = shapes[i].num_elements();
            let out_len = shapes[i + 1].num_elements();
            let (src, dst) = disjoint(&mut self.memory, in_off, in_len, out_off, out_len);
            kernels::execute(
                src,
                &shapes[i],
                graph.layer_input_params(i),
                layer,
                &shapes[i + 1],
                dst,
            );
        }
        let last = shapes.len() - 1;
        let off = plan.tensor_offset(last);
        QuantTensor {
            shape: shapes[last].clone(),
            data: self.memory[off..off + shapes[last].num_elements()].to_vec(),
            params: graph.output_params(),
        }
    }
}

/// Borrows two non-overlapping ranges of the arena.
fn disjoint(
    mem: &mut [i8],
    a_off: usize,
    a_len: usize,
    b_off: usize,
    b_len: usize,
) -> (&[i8], &mut [i8]) {
    assert!(
        a_off + a_len <= b_off || b_off + b_len <= a_off,
        "planner placed live tensors on overlapping bytes"
    );
    if a_off < b_off {
        let (lo, hi) = mem.split_at_mut(b_off);
        (&lo[a_off..a_off + a_len], &mut hi[..b_len])
    } else {
        let (lo, hi) = mem.split_at_mut(a_off);
        (&hi[..a_len], &mut lo[b_off..b_off + b_len])
    }
}
