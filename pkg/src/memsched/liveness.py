"""Static tensor lifetime analysis over a training schedule.

Answers, for every forward tensor and every gradient buffer, the step range
during which it must stay resident, and folds those windows into a per-step
residency curve.  Gradient buffers are keyed by owning layer: kinds that
rewrite their incoming gradient in place share the buffer of the producer
below them, and a buffer exists from its first writing backward step until
the owning layer's own backward step.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from .costmodel import CostTable, grad_owner
from .netgraph import (
    BACKWARD_NEEDS,
    LayerKind,
    NetworkDef,
    Schedule,
    backward_reads,
)


def forward_use_steps(net: NetworkDef, sched: Schedule) -> dict[int, list[int]]:
    """Forward steps that read each tensor, keyed by producing layer."""
    uses: dict[int, list[int]] = {lay.id: [] for lay in net.layers}
    for layer in net.layers:
        for pid in layer.prev:
            uses[pid].append(sched.fwd_step_of[layer.id])
    for lid in uses:
        uses[lid].sort()
    return uses


def backward_use_steps(net: NetworkDef, sched: Schedule) -> dict[int, list[int]]:
    """Backward steps that read each tensor, keyed by producing layer."""
    uses: dict[int, list[int]] = {lay.id: [] for lay in net.layers}
    for layer in net.layers:
        step = sched.bwd_step_of[layer.id]
        for tid in backward_reads(net, layer.id):
            uses[tid].append(step)
    for lid in uses:
        uses[lid].sort()
    return uses


def last_use_step(net: NetworkDef, sched: Schedule) -> dict[int, int]:
    """Last step, forward or backward, that reads each tensor.

    A tensor nothing ever reads dies on its own production step.
    """
    fwd = forward_use_steps(net, sched)
    bwd = backward_use_steps(net, sched)
    return {
        lid: max([sched.fwd_step_of[lid]] + fwd[lid] + bwd[lid])
        for lid in fwd
    }


def last_forward_use_step(net: NetworkDef, sched: Schedule) -> dict[int, int]:
    fwd = forward_use_steps(net, sched)
    return {lid: max([sched.fwd_step_of[lid]] + fwd[lid]) for lid in fwd}


@dataclass(frozen=True)
class GradBuffer:
    owner: int
    nbytes: int
    create_step: int
    free_step: int


def grad_buffers(
    net: NetworkDef,
    costs: CostTable,
    sched: Schedule,
    materialize_seed: bool = False,
) -> dict[int, GradBuffer]:
    """Gradient buffers with their residency windows.

    A buffer is created at the earliest backward step that writes it: each
    layer's backward writes the buffers of its inputs' owners.  The loss
    seed of the terminal layer is written only when ``materialize_seed``
    is set (nothing frees gradients in that mode's caller, but the window
    end here is still the owner's backward step).
    """
    writes: dict[int, list[int]] = {}
    for layer in net.layers:
        if layer.kind is LayerKind.DATA:
            continue
        step = sched.bwd_step_of[layer.id]
        for pid in layer.prev:
            owner = grad_owner(net, pid)
            if owner is not None:
                writes.setdefault(owner, []).append(step)
    if materialize_seed:
        terminal = net.terminal_id
        owner = grad_owner(net, terminal)
        if owner is not None:
            writes.setdefault(owner, []).append(sched.bwd_step_of[terminal])
    buffers: dict[int, GradBuffer] = {}
    for owner in sorted(writes):
        buffers[owner] = GradBuffer(
            owner=owner,
            nbytes=costs[owner].grad_bytes,
            create_step=min(writes[owner]),
            free_step=sched.bwd_step_of[owner],
        )
    return buffers


@dataclass(frozen=True)
class TensorLife:
    layer_id: int
    name: str
    kind: str
    nbytes: int
    birth_step: int
    last_forward_use: int
    last_use: int


def liveness_table(net: NetworkDef, costs: CostTable,
                   sched: Schedule) -> list[TensorLife]:
    last = last_use_step(net, sched)
    last_fwd = last_forward_use_step(net, sched)
    rows = []
    for lid in sched.forward_ids:
        layer = net.layers[lid]
        rows.append(TensorLife(
            layer_id=lid,
            name=layer.name,
            kind=layer.kind.value,
            nbytes=costs[lid].device_bytes,
            birth_step=sched.fwd_step_of[lid],
            last_forward_use=last_fwd[lid],
            last_use=last[lid],
        ))
    return rows


def dump_liveness_csv(net: NetworkDef, costs: CostTable,
                      sched: Schedule) -> str:
    out = io.StringIO()
    out.write("layer,kind,bytes,birth_step,last_forward_use,last_use\n")
    for row in liveness_table(net, costs, sched):
        out.write(f"{row.name},{row.kind},{row.nbytes},{row.birth_step},"
                  f"{row.last_forward_use},{row.last_use}\n")
    return out.getvalue()


def resident_curve(net: NetworkDef, costs: CostTable, sched: Schedule,
                   mode: str = "liveness") -> list[int]:
    """Device bytes resident during each step.

    ``liveness`` frees tensors after their last use and gradient buffers
    after their owner's backward step; ``baseline`` frees nothing and also
    materializes the terminal loss seed.
    """
    if mode not in ("liveness", "baseline"):
        raise ValueError(f"unknown residency mode {mode!r}")
    end = sched.num_steps - 1
    curve = [0] * sched.num_steps
    last = last_use_step(net, sched)
    for lid in sched.forward_ids:
        nbytes = costs[lid].device_bytes
        if not nbytes:
            continue
        lo = sched.fwd_step_of[lid]
        hi = last[lid] if mode == "liveness" else end
        for s in range(lo, hi + 1):
            curve[s] += nbytes
    buffers = grad_buffers(net, costs, sched,
                           materialize_seed=(mode == "baseline"))
    for buf in buffers.values():
        if not buf.nbytes:
            continue
        hi = buf.free_step if mode == "liveness" else end
        for s in range(buf.create_step, hi + 1):
            curve[s] += buf.nbytes
    return curve


def curve_peak(curve: list[int]) -> tuple[int, int]:
    """Peak bytes and the first step attaining them."""
    peak = max(curve)
    return peak, curve.index(peak)


def working_set_bytes(
    net: NetworkDef,
    costs: CostTable,
    sched: Schedule,
    buffers: dict[int, GradBuffer],
    step: int,
) -> int:
    """Bytes the step itself touches: reads, output, and gradient buffers."""
    info = sched.steps[step]
    layer = net.layers[info.layer_id]
    if step < len(sched.forward_ids):
        total = costs[layer.id].device_bytes
        for pid in layer.prev:
            total += costs[pid].device_bytes
        return total
    total = 0
    for tid in dict.fromkeys(backward_reads(net, layer.id)):
        total += costs[tid].device_bytes
    counted: set[int] = set()
    dy_owner = grad_owner(net, layer.id)
    if dy_owner is not None and dy_owner in buffers:
        buf = buffers[dy_owner]
        if buf.create_step <= step <= buf.free_step:
            total += buf.nbytes
            counted.add(dy_owner)
    for pid in layer.prev:
        owner = grad_owner(net, pid)
        if owner is None or owner in counted or owner not in buffers:
            continue
        counted.add(owner)
        total += buffers[owner].nbytes
    return total


def liveness_peak(net: NetworkDef, costs: CostTable,
                  sched: Schedule) -> tuple[int, int]:
    return curve_peak(resident_curve(net, costs, sched, mode="liveness"))
