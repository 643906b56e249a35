"""Deterministic step simulator for one training iteration.

The simulator keeps two views of device memory in lockstep.  The scheduled
view tracks the bytes the feature set requires resident at each step: it
is exact integer arithmetic, independent of pool capacity, and is what the
report's residency curve and peak describe.  The physical view runs every
allocation through a block pool of the configured capacity, so it also
feels workspace allocations, block rounding, fragmentation, and lazy
caching; its high-water mark and any out-of-memory failure describe what
a real device of that size would do.

Time advances on two cursors: a compute cursor that accumulates layer
times (plus any replayed layers), and a single FIFO transfer engine for
host copies.  Scheduled transfers overlap compute; a read that arrives
late or must be fetched on demand stalls the compute cursor.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import convselect as cs
from . import liveness as lv
from . import offload as ol
from . import recompute as rc
from .costmodel import (
    CostConfig,
    CostTable,
    baseline_peak_bytes,
    build_costs,
    grad_owner,
    mib,
)
from .errors import ConfigError, SchedulingError
from .netgraph import (
    LayerKind,
    NetworkDef,
    Phase,
    Schedule,
    backward_reads,
    build_schedule,
)
from .poolalloc import BlockPool, PoolExhausted

FEATURE_NAMES = ("liveness", "offload", "cache", "recompute", "convselect")


@dataclass(frozen=True)
class Features:
    liveness: bool = False
    offload: bool = False
    cache: bool = False
    recompute: str | None = None
    convselect: bool = False

    def normalized(self) -> "Features":
        """Apply feature implications: each mechanism builds on the last."""
        liveness, offload = self.liveness, self.offload
        if self.cache:
            offload = True
        if offload or self.recompute:
            liveness = True
        return replace(self, liveness=liveness, offload=offload)

    def label(self) -> str:
        parts = []
        if self.liveness:
            parts.append("liveness")
        if self.offload:
            parts.append("offload")
        if self.cache:
            parts.append("cache")
        if self.recompute:
            parts.append(f"recompute={self.recompute}")
        if self.convselect:
            parts.append("convselect")
        return ",".join(parts) if parts else "none"


def parse_features(text: str) -> Features:
    """Parse the comma-separated feature list of the command line."""
    text = text.strip()
    if not text or text == "none":
        return Features()
    kwargs: dict[str, object] = {}
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        name, sep, value = token.partition("=")
        if name not in FEATURE_NAMES:
            raise ConfigError(
                f"unknown feature {name!r}, expected one of {FEATURE_NAMES}")
        if name == "recompute":
            policy = value if sep else "cost-aware"
            if policy not in rc.POLICIES:
                raise ConfigError(
                    f"unknown recompute policy {policy!r}, expected one of "
                    f"{rc.POLICIES}")
            kwargs["recompute"] = policy
        else:
            if sep:
                raise ConfigError(f"feature {name!r} takes no value")
            kwargs[name] = True
    return Features(**kwargs)


@dataclass(frozen=True)
class SimConfig:
    pool_bytes: int
    features: Features = Features()
    cost: CostConfig = CostConfig()

    def __post_init__(self) -> None:
        if self.pool_bytes <= 0:
            raise ConfigError(
                f"pool size must be positive, got {self.pool_bytes}")


@dataclass(frozen=True)
class StepRow:
    index: float
    layer: str
    kind: str
    phase: str
    resident_bytes: int
    live_count: int
    pool_used_bytes: int
    compute_s: float
    stall_s: float
    transfer_bytes: int


@dataclass(frozen=True)
class SimReport:
    net_name: str
    num_layers: int
    num_steps: int
    batch: int
    pool_capacity_bytes: int
    features: str
    recompute_policy: str | None
    recompute_modes: tuple[str, ...]
    peak_bytes: int
    peak_step: int
    peak_layer: str
    peak_live_count: int
    peak_working_bytes: int
    peak_stash_bytes: int
    min_pool_bytes: int
    baseline_peak_bytes: int
    liveness_peak_bytes: int
    compute_s: float
    stall_s: float
    stall_prefetch_s: float
    stall_demand_s: float
    stall_backup_s: float
    transfer_busy_s: float
    total_s: float
    scheduled_transfer_bytes: int
    scheduled_transfer_count: int
    demand_transfer_bytes: int
    demand_transfer_count: int
    cache_hits: int
    evictions: int
    extra_forward_steps: int
    planned_extra_forward_steps: int
    pool_high_water_bytes: int
    selections: tuple[cs.Selection, ...]
    rows: tuple[StepRow, ...]


class _TransferEngine:
    def __init__(self, bandwidth: float) -> None:
        self.bandwidth = bandwidth
        self.busy_until = 0.0
        self.total_bytes = 0
        self.total_duration = 0.0
        self.count = 0

    def submit(self, nbytes: int, now: float) -> float:
        duration = nbytes / self.bandwidth
        start = max(self.busy_until, now)
        self.busy_until = start + duration
        self.total_bytes += nbytes
        self.total_duration += duration
        self.count += 1
        return self.busy_until


class _Simulation:
    def __init__(self, net: NetworkDef, config: SimConfig) -> None:
        self.net = net
        self.config = config
        self.features = config.features.normalized()
        self.sched: Schedule = build_schedule(net)
        self.costs: CostTable = build_costs(net, config.cost)
        self.min_pool = rc.min_pool_bytes(net, self.costs, self.sched)
        if config.pool_bytes < self.min_pool:
            raise ConfigError(
                f"pool of {config.pool_bytes} bytes is below the minimum "
                f"schedulable demand of {self.min_pool} bytes "
                f"({mib(self.min_pool):.3f} MiB)")
        self.pool = BlockPool(-(-config.pool_bytes // 1024) * 1024)
        self.engine = _TransferEngine(config.cost.bandwidth_bytes_per_s)
        self.cache = ol.LruCache()
        self.last_use = lv.last_use_step(net, self.sched)
        self.last_fwd_use = lv.last_forward_use_step(net, self.sched)
        self.bwd_uses = lv.backward_use_steps(net, self.sched)
        self.grad_windows = lv.grad_buffers(
            net, self.costs, self.sched,
            materialize_seed=not self.features.liveness)
        self.offload_plan: ol.OffloadPlan | None = None
        self.plan: rc.RecomputePlan | None = None
        offloaded: frozenset[int] = frozenset()
        if self.features.offload:
            self.offload_plan = ol.build_offload_plan(net, self.sched)
            offloaded = frozenset(self.offload_plan.cp_ids)
        if self.features.recompute:
            self.plan = rc.plan(net, self.costs, self.sched,
                                self.features.recompute,
                                offloaded_ids=offloaded)
        self.backed_ids = set(offloaded)
        if self.plan:
            self.backed_ids |= self.plan.spill_ids
        self.seg_of: dict[int, int] = {}
        self.seg_replayed: set[int] = set()
        if self.plan:
            for seg in self.plan.segments:
                for m in seg.members:
                    self.seg_of[m] = seg.index
        # Scheduled state.
        self.resident: dict[tuple[str, int], int] = {}
        self.res_total = 0
        self.live_peak = 0
        self.peak_step = 0
        self.peak_count = 0
        self.step_max = 0
        self.step_count = 0
        self.clock = 0.0
        self.backup_done: dict[int, float] = {}
        self.arrival_done: dict[int, float] = {}
        self.stall_prefetch = 0.0
        self.stall_demand = 0.0
        self.stall_backup = 0.0
        self.scheduled_bytes = 0
        self.scheduled_count = 0
        self.demand_bytes = 0
        self.demand_count = 0
        self.cache_hits = 0
        self.evictions = 0
        self.extra_steps = 0
        self.compute_total = 0.0
        self.selections: list[cs.Selection] = []
        self.rows: list[StepRow] = []
        self.drop_events: dict[int, list[tuple[str, int]]] = {}
        self.pending_backed_drops: list[int] = []
        self.prefetch_at: dict[int, list[int]] = {}
        self._build_static_events()

    # ---- static planning -------------------------------------------------

    def _build_static_events(self) -> None:
        feats = self.features
        if not feats.liveness:
            return
        for lid in self.sched.forward_ids:
            if self.costs[lid].device_bytes == 0:
                continue
            if feats.recompute:
                kind = "backed" if lid in self.backed_ids else "dead"
                self._add_drop(self.last_fwd_use[lid], kind, lid)
            elif feats.offload and self.offload_plan and \
                    lid in self.offload_plan.drop_after:
                self._add_drop(self.offload_plan.drop_after[lid],
                               "backed", lid)
                if lid in self.offload_plan.last_backward_use:
                    self._add_drop(
                        self.offload_plan.last_backward_use[lid],
                        "dead", lid)
            else:
                self._add_drop(self.last_use[lid], "dead", lid)
        if feats.offload and not feats.recompute and not feats.cache \
                and self.offload_plan:
            for cp, step in self.offload_plan.prefetch_issue.items():
                self.prefetch_at.setdefault(step, []).append(cp)

    def _add_drop(self, step: int, kind: str, lid: int) -> None:
        self.drop_events.setdefault(step, []).append((kind, lid))

    # ---- scheduled-view accounting ----------------------------------------

    def _bump(self) -> None:
        if self.res_total > self.step_max:
            self.step_max = self.res_total
            self.step_count = len(self.resident)
        if self.res_total > self.live_peak:
            self.live_peak = self.res_total
            self.peak_step = self.current_step
            self.peak_count = len(self.resident)

    def _track_add(self, key: tuple[str, int], nbytes: int) -> None:
        if key in self.resident:
            raise SchedulingError(f"internal: {key} already resident")
        self.resident[key] = nbytes
        self.res_total += nbytes
        self._bump()

    def _track_remove(self, key: tuple[str, int]) -> None:
        nbytes = self.resident.pop(key)
        self.res_total -= nbytes

    # ---- physical-view helpers --------------------------------------------

    def _pool_alloc(self, key: tuple[str, int], nbytes: int,
                    high: bool = False) -> None:
        while True:
            try:
                self.pool.alloc(key, nbytes, high=high)
                return
            except PoolExhausted as exc:
                where = (f"step {self.current_step} "
                         f"({self.sched.layer_at(self.current_step).name})")
                if not self.features.cache:
                    raise SchedulingError(
                        f"out of pool memory at {where}: {exc}") from None
                try:
                    ekey, _ = self.cache.evict_lru()
                except ol.AllLockedError:
                    raise SchedulingError(
                        f"out of pool memory at {where} with no cached "
                        f"tensor left to evict: {exc}") from None
                done = self.backup_done.get(ekey[1], 0.0)
                if done > self.clock:
                    self.stall_backup += done - self.clock
                    self.clock = done
                self.pool.free(ekey)
                self.evictions += 1

    def _materialize(self, lid: int, nbytes: int) -> bool:
        """Make ("act", lid) resident; returns True when content is needed.

        Reuses a lazily cached device copy when one survives (or a copy
        whose eviction still waits on its host backup), otherwise claims
        fresh pool space.  The caller decides whether the content then
        comes from a transfer or a replayed forward step.
        """
        key = ("act", lid)
        if key in self.cache:
            self.cache.discard(key)
            self._track_add(key, nbytes)
            self.cache_hits += 1
            return False
        if key in self.pool:
            # Dropped from the scheduled view but the copy-out has not
            # finished yet, so the block is still here with valid content.
            self.pending_backed_drops.remove(lid)
            self._track_add(key, nbytes)
            return False
        self._pool_alloc(key, nbytes)
        self._track_add(key, nbytes)
        return True

    def _drop_act(self, lid: int, cacheable: bool) -> None:
        key = ("act", lid)
        if key in self.resident:
            self._track_remove(key)
        if key not in self.pool:
            return
        if cacheable and self.features.cache and lid in self.backed_ids:
            self.cache.insert(key, self.costs[lid].device_bytes)
        else:
            self.cache.discard(key)
            self.pool.free(key)

    # ---- transfers ---------------------------------------------------------

    def _copy_out(self, lid: int) -> None:
        nbytes = self.costs[lid].device_bytes
        self.backup_done[lid] = self.engine.submit(nbytes, self.clock)
        self.scheduled_bytes += nbytes
        self.scheduled_count += 1
        self.step_transfer += nbytes

    def _fetch_scheduled(self, lid: int) -> None:
        nbytes = self.costs[lid].device_bytes
        self.arrival_done[lid] = self.engine.submit(nbytes, self.clock)
        self.scheduled_bytes += nbytes
        self.scheduled_count += 1
        self.step_transfer += nbytes

    def _fetch_demand(self, lid: int) -> None:
        nbytes = self.costs[lid].device_bytes
        done = self.engine.submit(nbytes, self.clock)
        self.stall_demand += done - self.clock
        self.clock = done
        self.demand_bytes += nbytes
        self.demand_count += 1
        self.step_transfer += nbytes

    def _ensure_read(self, lid: int, transient: set[int]) -> None:
        nbytes = self.costs[lid].device_bytes
        if nbytes == 0 or ("act", lid) in self.resident:
            return
        if lid not in self.backed_ids:
            raise SchedulingError(
                f"tensor of layer {self.net.layers[lid].name!r} is needed "
                f"at step {self.current_step} but is neither resident nor "
                "recoverable from a host backup")
        if self._materialize(lid, nbytes):
            self._fetch_demand(lid)
        if self.features.recompute:
            transient.add(lid)

    # ---- replay ------------------------------------------------------------

    def _replay_member(self, mid: int, replay_rows: list) -> None:
        if self._materialize(mid, self.costs[mid].device_bytes):
            self.compute_total += self.costs[mid].fwd_time
            self.clock += self.costs[mid].fwd_time
            self.extra_steps += 1
            replay_rows.append((mid, self.costs[mid].fwd_time,
                                self.res_total, len(self.resident)))

    def _replay_prefix(self, seg: rc.Segment, depth: int, keep: set[int],
                       transient: set[int], replay_rows: list) -> None:
        prefix = seg.members[: depth + 1]
        last_need: dict[int, int] = {}
        for slot, mid in enumerate(prefix):
            for pid in self.net.layers[mid].prev:
                last_need[pid] = slot
        for slot, mid in enumerate(prefix):
            for pid in self.net.layers[mid].prev:
                if ("act", pid) not in self.resident:
                    self._ensure_read(pid, transient)
            if ("act", mid) not in self.resident:
                self._replay_member(mid, replay_rows)
                transient.add(mid)
            for tid in list(self.resident):
                if tid[0] != "act":
                    continue
                lid = tid[1]
                if lid in keep:
                    continue
                if last_need.get(lid, -1) == slot and lid in transient:
                    self._drop_act(lid, cacheable=True)

    def _speed_replay(self, seg_index: int, transient: set[int],
                      replay_rows: list) -> None:
        """Rebuild a whole segment once and keep the results around."""
        assert self.plan is not None
        if seg_index in self.seg_replayed:
            return
        self.seg_replayed.add(seg_index)
        anchors_fetched: set[int] = set()
        for mid in self.plan.segments[seg_index].members:
            for pid in self.net.layers[mid].prev:
                if ("act", pid) not in self.resident:
                    self._ensure_read(pid, anchors_fetched)
            if ("act", mid) not in self.resident:
                self._replay_member(mid, replay_rows)
            use = max([self.last_fwd_use[mid]] + self.bwd_uses[mid])
            self._add_drop(max(use, self.current_step), "dead", mid)
        # Fetched anchors stay only for the rest of this step.
        transient.update(anchors_fetched)

    def _run_replay(self, layer_id: int, reads: list[int],
                    transient: set[int], replay_rows: list) -> None:
        assert self.plan is not None
        own = self.seg_of.get(layer_id)
        same: list[int] = []
        for r in reads:
            rseg = self.seg_of.get(r)
            if rseg is not None and rseg == own:
                same.append(r)
            elif rseg is not None and self.plan.modes[rseg] == "speed":
                # Reading into a speed segment triggers its one replay.
                self._speed_replay(rseg, transient, replay_rows)
            else:
                # Checkpoint, spilled feeder, or host-resident input.
                self._ensure_read(r, transient)
        if not same:
            return
        if self.plan.modes[own] == "speed":
            self._speed_replay(own, transient, replay_rows)
        else:
            seg = self.plan.segments[own]
            depth = max(seg.members.index(r) for r in same)
            self._replay_prefix(seg, depth, set(reads), transient,
                                replay_rows)
            # The anchor side of the walk has served its purpose; only the
            # reads themselves stay for the compute that follows.
            for tid in list(self.resident):
                if tid[0] == "act" and tid[1] in transient \
                        and tid[1] not in reads:
                    self._drop_act(tid[1], cacheable=True)

    # ---- the step loop -----------------------------------------------------

    def run(self) -> SimReport:
        feats = self.features
        for step in self.sched.steps:
            self.current_step = step.index
            self.step_max = self.res_total
            self.step_count = len(self.resident)
            self.step_transfer = 0
            step_compute = 0.0
            stall_before = (self.stall_prefetch + self.stall_demand
                            + self.stall_backup)
            layer = self.net.layers[step.layer_id]
            cost = self.costs[step.layer_id]
            replay_rows: list[tuple[int, float, int, int]] = []
            if step.phase is Phase.FORWARD:
                step_compute += self._forward_step(step.index, layer, cost)
            else:
                step_compute += self._backward_step(step.index, layer, cost,
                                                    replay_rows)
            self._end_of_step(step.index)
            stall_here = (self.stall_prefetch + self.stall_demand
                          + self.stall_backup) - stall_before
            for j, (mid, rtime, res_at, n_live) in enumerate(replay_rows):
                self.rows.append(StepRow(
                    index=step.index - 1 + (j + 1) / (len(replay_rows) + 1),
                    layer=self.net.layers[mid].name,
                    kind=self.net.layers[mid].kind.value,
                    phase="replay",
                    resident_bytes=res_at,
                    live_count=n_live,
                    pool_used_bytes=self.pool.used_bytes,
                    compute_s=rtime,
                    stall_s=0.0,
                    transfer_bytes=0,
                ))
            self.rows.append(StepRow(
                index=float(step.index),
                layer=layer.name,
                kind=layer.kind.value,
                phase=step.phase.value,
                resident_bytes=self.step_max,
                live_count=self.step_count,
                pool_used_bytes=self.pool.used_bytes,
                compute_s=step_compute,
                stall_s=stall_here,
                transfer_bytes=self.step_transfer,
            ))
        self.pool.check()
        self.rows.sort(key=lambda r: r.index)
        return self._build_report()

    def _forward_step(self, s: int, layer, cost) -> float:
        if layer.kind is LayerKind.DATA:
            return 0.0
        for pid in layer.prev:
            if self.costs[pid].device_bytes and \
                    ("act", pid) not in self.resident:
                raise SchedulingError(
                    f"forward input {self.net.layers[pid].name!r} missing "
                    f"at step {s}")
        if cost.device_bytes:
            self._pool_alloc(("act", layer.id), cost.device_bytes)
            self._track_add(("act", layer.id), cost.device_bytes)
        mult, ws_key = self._select_workspace(s, layer, cost, "forward")
        elapsed = cost.fwd_time * mult
        self.compute_total += elapsed
        self.clock += elapsed
        if ws_key is not None:
            self.pool.free(ws_key)
        if layer.id in self.backed_ids:
            self._copy_out(layer.id)
        return elapsed

    def _backward_step(self, s: int, layer, cost,
                       replay_rows) -> float:
        if layer.kind is LayerKind.DATA:
            return 0.0
        for cp in self.prefetch_at.get(s, ()):
            if ("act", cp) not in self.resident:
                if self._materialize(cp, self.costs[cp].device_bytes):
                    self._fetch_scheduled(cp)
        reads = list(dict.fromkeys(backward_reads(self.net, layer.id)))
        transient: set[int] = set()
        if self.features.recompute:
            self._run_replay(layer.id, reads, transient, replay_rows)
        else:
            for r in reads:
                self._ensure_read(r, transient)
        for r in reads:
            done = self.arrival_done.get(r, 0.0)
            if done > self.clock:
                self.stall_prefetch += done - self.clock
                self.clock = done
        dy_owner = grad_owner(self.net, layer.id)
        gkey = None if dy_owner is None else ("grad", dy_owner)
        if layer.id == self.net.terminal_id:
            if not self.features.liveness and gkey is not None \
                    and gkey not in self.resident:
                self._pool_alloc(gkey, self.costs[dy_owner].grad_bytes,
                                 high=True)
                self._track_add(gkey, self.costs[dy_owner].grad_bytes)
        elif gkey is not None and gkey not in self.resident:
            raise SchedulingError(
                f"gradient buffer of {self.net.layers[dy_owner].name!r} "
                f"missing at step {s}")
        for pid in layer.prev:
            owner = grad_owner(self.net, pid)
            if owner is None:
                continue
            okey = ("grad", owner)
            if okey not in self.resident:
                self._pool_alloc(okey, self.costs[owner].grad_bytes, high=True)
                self._track_add(okey, self.costs[owner].grad_bytes)
        mult, ws_key = self._select_workspace(s, layer, cost, "backward")
        elapsed = cost.bwd_time * mult
        self.compute_total += elapsed
        self.clock += elapsed
        if ws_key is not None:
            self.pool.free(ws_key)
        if self.features.recompute:
            for lid in transient:
                if ("act", lid) in self.resident:
                    self._drop_act(lid, cacheable=True)
        return elapsed

    def _select_workspace(self, s: int, layer, cost, phase):
        if not (self.features.convselect
                and layer.kind is LayerKind.CONV):
            return 1.0, None
        free = self.config.pool_bytes - self.res_total
        first = cs.select_algorithm(cost.out_bytes, free)
        candidates = [first] + [
            a for a in sorted(cs.ALGORITHMS,
                              key=lambda a: (a.time_factor,
                                             a.workspace_factor, a.name))
            if a is not first]
        algo, ws, ws_key = candidates[-1], 0, None
        for cand in candidates:
            nbytes = cand.workspace_bytes(cost.out_bytes)
            if nbytes == 0:
                algo, ws = cand, 0
                break
            try:
                # Scratch contends like any allocation and may evict
                # cached tensors; a shortfall degrades the algorithm
                # instead of failing the run.
                self._pool_alloc(("ws", s), nbytes)
            except SchedulingError:
                continue
            algo, ws, ws_key = cand, nbytes, ("ws", s)
            break
        self.selections.append(cs.Selection(
            step=float(s), layer_id=layer.id, layer_name=layer.name,
            phase=phase, algo=algo.name, workspace_bytes=ws,
            free_bytes=free))
        return algo.time_factor, ws_key

    def _end_of_step(self, s: int) -> None:
        if self.features.liveness:
            for buf in self.grad_windows.values():
                if buf.free_step == s:
                    key = ("grad", buf.owner)
                    if key in self.resident:
                        self._track_remove(key)
                        self.pool.free(key)
        still_waiting: list[int] = []
        for lid in self.pending_backed_drops:
            if self.backup_done.get(lid, 0.0) <= self.clock:
                self._drop_act(lid, cacheable=True)
            else:
                still_waiting.append(lid)
        self.pending_backed_drops = still_waiting
        for kind, lid in self.drop_events.get(s, ()):
            if kind == "dead":
                self._drop_act(lid, cacheable=False)
            elif self.backup_done.get(lid, 0.0) <= self.clock:
                self._drop_act(lid, cacheable=True)
            else:
                if ("act", lid) in self.resident:
                    self._track_remove(("act", lid))
                self.pending_backed_drops.append(lid)

    # ---- reporting ---------------------------------------------------------

    def _build_report(self) -> SimReport:
        buffers = lv.grad_buffers(self.net, self.costs, self.sched,
                                  materialize_seed=not self.features.liveness)
        working = lv.working_set_bytes(self.net, self.costs, self.sched,
                                       buffers, self.peak_step)
        working = min(working, self.live_peak)
        total = max(self.clock, self.engine.busy_until)
        stall = self.stall_prefetch + self.stall_demand + self.stall_backup
        live_curve = lv.resident_curve(self.net, self.costs, self.sched,
                                       mode="liveness")
        live_static, _ = lv.curve_peak(live_curve)
        return SimReport(
            net_name=self.net.name,
            num_layers=len(self.net),
            num_steps=self.sched.num_steps,
            batch=self.config.cost.batch,
            pool_capacity_bytes=self.config.pool_bytes,
            features=self.features.label(),
            recompute_policy=self.features.recompute,
            recompute_modes=self.plan.modes if self.plan else (),
            peak_bytes=self.live_peak,
            peak_step=self.peak_step,
            peak_layer=self.sched.layer_at(self.peak_step).name,
            peak_live_count=self.peak_count,
            peak_working_bytes=working,
            peak_stash_bytes=self.live_peak - working,
            min_pool_bytes=self.min_pool,
            baseline_peak_bytes=baseline_peak_bytes(self.costs),
            liveness_peak_bytes=live_static,
            compute_s=self.compute_total,
            stall_s=stall,
            stall_prefetch_s=self.stall_prefetch,
            stall_demand_s=self.stall_demand,
            stall_backup_s=self.stall_backup,
            transfer_busy_s=self.engine.total_duration,
            total_s=total,
            scheduled_transfer_bytes=self.scheduled_bytes,
            scheduled_transfer_count=self.scheduled_count,
            demand_transfer_bytes=self.demand_bytes,
            demand_transfer_count=self.demand_count,
            cache_hits=self.cache_hits,
            evictions=self.evictions,
            extra_forward_steps=self.extra_steps,
            planned_extra_forward_steps=(
                self.plan.extra_forward_steps if self.plan else 0),
            pool_high_water_bytes=self.pool.high_water_bytes,
            selections=tuple(self.selections),
            rows=tuple(self.rows),
        )


def run_simulation(net: NetworkDef, config: SimConfig) -> SimReport:
    return _Simulation(net, config).run()


@dataclass(frozen=True)
class SweepPoint:
    axis: str
    value: int
    peak_bytes: int
    peak_step: int
    total_s: float
    compute_s: float
    stall_s: float
    scheduled_transfer_bytes: int
    demand_transfer_bytes: int
    extra_forward_steps: int
    pool_high_water_bytes: int


SWEEP_AXES = ("batch", "pool-bytes")


def run_sweep(net: NetworkDef, config: SimConfig, axis: str,
              values: list[int]) -> list[SweepPoint]:
    if axis not in SWEEP_AXES:
        raise ConfigError(
            f"unknown sweep axis {axis!r}, expected one of {SWEEP_AXES}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    points = []
    for value in values:
        if axis == "batch":
            cfg = replace(config, cost=replace(config.cost, batch=value))
        else:
            cfg = replace(config, pool_bytes=value)
        report = run_simulation(net, cfg)
        points.append(SweepPoint(
            axis=axis,
            value=value,
            peak_bytes=report.peak_bytes,
            peak_step=report.peak_step,
            total_s=report.total_s,
            compute_s=report.compute_s,
            stall_s=report.stall_s,
            scheduled_transfer_bytes=report.scheduled_transfer_bytes,
            demand_transfer_bytes=report.demand_transfer_bytes,
            extra_forward_steps=report.extra_forward_steps,
            pool_high_water_bytes=report.pool_high_water_bytes,
        ))
    return points
