"""Host offload planning and the device tensor cache.

Checkpoint tensors are copied to host memory as the forward pass produces
them; the device copy is dropped once its last forward consumer and the
copy-out are both done.  Each checkpoint is fetched back one checkpoint
ahead of need: the prefetch for a checkpoint issues when the next
checkpoint in forward order runs its backward step, so the transfer
overlaps that step's compute.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

from .errors import SchedulingError
from .liveness import backward_use_steps, last_forward_use_step
from .netgraph import OFFLOAD_KINDS, LayerKind, NetworkDef, Schedule


class AllLockedError(SchedulingError):
    """Eviction was needed but every cached tensor is locked or absent."""


def offload_candidates(net: NetworkDef,
                       kinds: frozenset[LayerKind] = OFFLOAD_KINDS,
                       order: list[int] | None = None) -> list[int]:
    ids = order if order is not None else [l.id for l in net.layers]
    return [lid for lid in ids if net.layers[lid].kind in kinds]


@dataclass(frozen=True)
class OffloadPlan:
    """Per-checkpoint transfer schedule, all in step indices."""

    cp_ids: tuple[int, ...]
    drop_after: dict[int, int]
    prefetch_issue: dict[int, int]
    first_backward_use: dict[int, int]
    last_backward_use: dict[int, int]


def build_offload_plan(net: NetworkDef, sched: Schedule,
                       cp_ids: list[int] | None = None) -> OffloadPlan:
    if cp_ids is None:
        cp_ids = offload_candidates(net, order=sched.forward_ids)
    bwd_uses = backward_use_steps(net, sched)
    last_fwd = last_forward_use_step(net, sched)
    drop_after: dict[int, int] = {}
    issue: dict[int, int] = {}
    first_use: dict[int, int] = {}
    last_use: dict[int, int] = {}
    for pos, cp in enumerate(cp_ids):
        drop_after[cp] = last_fwd[cp]
        uses = bwd_uses[cp]
        if not uses:
            continue
        first_use[cp] = uses[0]
        last_use[cp] = uses[-1]
        if pos + 1 < len(cp_ids):
            candidate = sched.bwd_step_of[cp_ids[pos + 1]]
        else:
            candidate = uses[0]
        # Never issue later than the first use; a skip edge can pull a
        # use earlier than the next checkpoint's backward step.
        issue[cp] = min(candidate, uses[0])
    return OffloadPlan(
        cp_ids=tuple(cp_ids),
        drop_after=drop_after,
        prefetch_issue=issue,
        first_backward_use=first_use,
        last_backward_use=last_use,
    )


@dataclass
class _CacheEntry:
    nbytes: int
    locks: int = 0


class LruCache:
    """Recency-ordered registry of reusable device tensors.

    The cache does not hold memory itself; it decides which device copies
    may be dropped when the pool needs room.  Locked entries are in active
    use and must never be chosen.  Eviction scans from the least recently
    used end.
    """

    def __init__(self) -> None:
        self._entries: OrderedDict[object, _CacheEntry] = OrderedDict()

    def __contains__(self, key: object) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def insert(self, key: object, nbytes: int) -> None:
        if key in self._entries:
            self.touch(key)
            return
        self._entries[key] = _CacheEntry(nbytes=nbytes)

    def touch(self, key: object) -> None:
        self._entries.move_to_end(key)

    def lock(self, key: object) -> None:
        self._entries[key].locks += 1

    def unlock(self, key: object) -> None:
        entry = self._entries[key]
        if entry.locks <= 0:
            raise ValueError(f"cache entry {key!r} is not locked")
        entry.locks -= 1

    def discard(self, key: object) -> int:
        entry = self._entries.pop(key, None)
        return entry.nbytes if entry else 0

    def evict_lru(self) -> tuple[object, int]:
        """Drop and return the least recently used unlocked entry."""
        for key, entry in self._entries.items():
            if entry.locks == 0:
                del self._entries[key]
                return key, entry.nbytes
        raise AllLockedError(
            "no unlocked cached tensor is available for eviction")

    def keys(self) -> list[object]:
        return list(self._entries)
