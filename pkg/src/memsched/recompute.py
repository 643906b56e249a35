"""Recompute planning: replay cheap layers instead of stashing them.

Checkpoint kinds (the expensive, weight-bearing layers) keep their outputs
reachable via host backups; every maximal run of non-checkpoint layers in
forward order forms a segment whose tensors are dropped after forward use
and rebuilt on demand.  Two strategies exist per segment: ``speed`` replays
the whole segment once at its first backward use and keeps the results,
``memory`` replays a prefix for every member's own backward step and
discards aggressively.  The ``cost-aware`` policy picks speed only when
the predicted residency of the speed replay stays within the network-wide
per-step demand floor, so it never raises the peak.

This module also computes that per-step demand floor itself: the bytes
each step needs resident under the most frugal (memory) strategy.  Its
maximum is the smallest pool any schedule can run in.
"""

from __future__ import annotations

from dataclasses import dataclass

from .costmodel import CostTable, grad_owner
from .errors import ConfigError
from .liveness import backward_use_steps, grad_buffers
from .netgraph import (
    BACKWARD_NEEDS,
    LayerKind,
    NetworkDef,
    Schedule,
    backward_reads,
    checkpoint_segments,
    external_inputs,
)

POLICIES = ("speed", "memory", "cost-aware")


@dataclass(frozen=True)
class Segment:
    index: int
    members: tuple[int, ...]
    anchors: tuple[int, ...]


@dataclass(frozen=True)
class RecomputePlan:
    policy: str
    segments: tuple[Segment, ...]
    modes: tuple[str, ...]
    spill_ids: frozenset[int]
    extra_forward_steps: int
    predictions: tuple[int, ...]

    def segment_of(self, layer_id: int) -> int | None:
        for seg in self.segments:
            if layer_id in seg.members:
                return seg.index
        return None


def build_segments(net: NetworkDef, sched: Schedule) -> list[Segment]:
    runs = checkpoint_segments(net, order=sched.forward_ids)
    return [
        Segment(index=i, members=tuple(run),
                anchors=tuple(external_inputs(net, run)))
        for i, run in enumerate(runs)
    ]


def _segment_index(segments: list[Segment]) -> dict[int, int]:
    lookup: dict[int, int] = {}
    for seg in segments:
        for lid in seg.members:
            lookup[lid] = seg.index
    return lookup


def first_backward_use(net: NetworkDef, sched: Schedule,
                       seg: Segment) -> int | None:
    uses = backward_use_steps(net, sched)
    steps = [s for lid in seg.members for s in uses[lid]]
    return min(steps) if steps else None


def memory_extras(net: NetworkDef, seg: Segment) -> int:
    total = 0
    for idx, lid in enumerate(seg.members):
        if BACKWARD_NEEDS[net.layers[lid].kind]:
            total += idx + 1
    return total


def speed_extras(net: NetworkDef, sched: Schedule, seg: Segment) -> int:
    return len(seg.members) if first_backward_use(net, sched, seg) is not None else 0


def speed_prediction(net: NetworkDef, costs: CostTable, sched: Schedule,
                     seg: Segment) -> int:
    """Residency of the whole-segment replay at its first backward use."""
    step = first_backward_use(net, sched, seg)
    if step is None:
        return 0
    total = sum(costs[a].device_bytes for a in seg.anchors)
    total += sum(costs[m].device_bytes for m in seg.members)
    user = sched.steps[step].layer_id
    dy_owner = grad_owner(net, user)
    if dy_owner is not None and user != net.terminal_id:
        total += costs[dy_owner].grad_bytes
    for pid in net.layers[user].prev:
        owner = grad_owner(net, pid)
        if owner is not None and owner != dy_owner:
            total += costs[owner].grad_bytes
    return total


def plan(net: NetworkDef, costs: CostTable, sched: Schedule, policy: str,
         offloaded_ids: frozenset[int] = frozenset()) -> RecomputePlan:
    if policy not in POLICIES:
        raise ConfigError(
            f"unknown recompute policy {policy!r}, expected one of {POLICIES}")
    segments = build_segments(net, sched)
    predictions = [speed_prediction(net, costs, sched, s) for s in segments]
    if policy == "speed":
        modes = ["speed"] * len(segments)
    elif policy == "memory":
        modes = ["memory"] * len(segments)
    else:
        floor = min_pool_bytes(net, costs, sched)
        modes = ["speed" if predictions[s.index] <= floor else "memory"
                 for s in segments]
    extras = 0
    for seg, mode in zip(segments, modes):
        extras += (speed_extras(net, sched, seg) if mode == "speed"
                   else memory_extras(net, seg))
    spills: set[int] = set()
    member_ids = {m for seg in segments for m in seg.members}
    for layer in net.layers:
        if layer.kind is LayerKind.DATA:
            continue
        for r in backward_reads(net, layer.id):
            if (r not in member_ids and r not in offloaded_ids
                    and costs[r].device_bytes > 0):
                spills.add(r)
    for seg, mode in zip(segments, modes):
        for anchor in seg.anchors:
            if (anchor not in offloaded_ids
                    and costs[anchor].device_bytes > 0):
                spills.add(anchor)
        if mode == "memory":
            inside = set(seg.members)
            for lid in seg.members:
                for nxt in net.layers[lid].next:
                    if nxt not in inside:
                        spills.add(lid)
                        break
    return RecomputePlan(
        policy=policy,
        segments=tuple(segments),
        modes=tuple(modes),
        spill_ids=frozenset(spills),
        extra_forward_steps=extras,
        predictions=tuple(predictions),
    )


@dataclass(frozen=True)
class DemandPeak:
    nbytes: int
    step: int
    layer_id: int


def step_demands(net: NetworkDef, costs: CostTable,
                 sched: Schedule) -> list[int]:
    """Bytes each step must hold resident under the memory strategy.

    Forward steps need their inputs and output.  A backward step needs its
    reads (rebuilt by prefix replay when they live in a segment, fetched
    from a host backup otherwise), the gradient buffers alive at the step,
    and survives the transient maximum of the replay walk itself.
    """
    segments = build_segments(net, sched)
    seg_of = _segment_index(segments)
    buffers = grad_buffers(net, costs, sched, materialize_seed=False)
    n_fwd = len(sched.forward_ids)
    demands = [0] * sched.num_steps
    for lid in sched.forward_ids:
        total = costs[lid].device_bytes
        for pid in net.layers[lid].prev:
            total += costs[pid].device_bytes
        demands[sched.fwd_step_of[lid]] = total
    for lid in sched.forward_ids:
        step = sched.bwd_step_of[lid]
        bg_all = 0
        bg_pre = 0
        for buf in buffers.values():
            if buf.create_step <= step <= buf.free_step:
                bg_all += buf.nbytes
                if buf.create_step < step:
                    bg_pre += buf.nbytes
        reads = list(dict.fromkeys(backward_reads(net, lid)))
        compute_total = sum(costs[r].device_bytes for r in reads) + bg_all
        phase_max = _replay_phase_max(net, costs, lid, reads, segments, seg_of)
        demands[step] = max(compute_total, phase_max + bg_pre)
    return demands


def _replay_phase_max(net: NetworkDef, costs: CostTable, lid: int,
                      reads: list[int], segments: list[Segment],
                      seg_of: dict[int, int]) -> int:
    own_seg = seg_of.get(lid)
    replayed = [r for r in reads if own_seg is not None
                and seg_of.get(r) == own_seg]
    fetched = [r for r in reads if r not in replayed]
    alive: dict[int, int] = {r: costs[r].device_bytes for r in fetched}
    total = sum(alive.values())
    peak = total
    if not replayed:
        return peak
    members = segments[own_seg].members
    depth = max(members.index(r) for r in replayed)
    prefix = members[: depth + 1]
    keep = set(reads)
    last_need: dict[int, int] = {}
    for slot, mid in enumerate(prefix):
        for pid in net.layers[mid].prev:
            last_need[pid] = slot
    for slot, mid in enumerate(prefix):
        for pid in net.layers[mid].prev:
            if pid not in alive:
                alive[pid] = costs[pid].device_bytes
                total += alive[pid]
        alive[mid] = costs[mid].device_bytes
        total += alive[mid]
        peak = max(peak, total)
        for tid in list(alive):
            if tid not in keep and last_need.get(tid, -1) == slot:
                total -= alive.pop(tid)
    return peak


def min_pool_bytes(net: NetworkDef, costs: CostTable,
                   sched: Schedule) -> int:
    return max(step_demands(net, costs, sched))


def demand_peak(net: NetworkDef, costs: CostTable,
                sched: Schedule) -> DemandPeak:
    demands = step_demands(net, costs, sched)
    peak = max(demands)
    step = demands.index(peak)
    return DemandPeak(nbytes=peak, step=step,
                      layer_id=sched.steps[step].layer_id)
