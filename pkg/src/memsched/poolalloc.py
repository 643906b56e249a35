"""First-fit block memory pool with coalescing free spans.

The pool hands out contiguous runs of fixed 1 KiB blocks.  Free spans are
kept sorted by offset; allocation scans them first-fit, and freeing merges
the returned span with its neighbors so the free list never holds two
adjacent spans.  Every allocation is tracked by caller-chosen key, so the
pool can audit itself: allocated plus free spans must exactly tile the
arena at all times.
"""

from __future__ import annotations

import io
from bisect import bisect_left, insort

from .errors import MemschedError, SchedulingError

BLOCK_BYTES = 1024


class PoolError(MemschedError):
    """Misuse of the pool API: duplicate or unknown keys, bad sizes."""


class PoolExhausted(SchedulingError):
    """No free span is large enough for the requested allocation."""


def blocks_for(nbytes: int) -> int:
    if nbytes < 0:
        raise PoolError(f"negative allocation size {nbytes}")
    return max(1, -(-nbytes // BLOCK_BYTES))


class BlockPool:
    """Fixed-capacity block arena with two-ended first-fit allocation.

    Callers that know an allocation will outlive the churn around it can
    place it from the top of the arena (``high=True``); short-lived
    allocations fill from the bottom.  Keeping the two populations apart
    preserves large contiguous holes far longer than a single-ended
    policy would.
    """

    def __init__(self, capacity_bytes: int) -> None:
        if capacity_bytes < BLOCK_BYTES:
            raise PoolError(
                f"pool capacity must be at least {BLOCK_BYTES} bytes")
        self.capacity_blocks = capacity_bytes // BLOCK_BYTES
        self._free: list[tuple[int, int]] = [(0, self.capacity_blocks)]
        self._allocated: dict[object, tuple[int, int]] = {}
        self._used_blocks = 0
        self._high_water_blocks = 0

    @property
    def capacity_bytes(self) -> int:
        return self.capacity_blocks * BLOCK_BYTES

    @property
    def used_bytes(self) -> int:
        return self._used_blocks * BLOCK_BYTES

    @property
    def free_bytes(self) -> int:
        return (self.capacity_blocks - self._used_blocks) * BLOCK_BYTES

    @property
    def high_water_bytes(self) -> int:
        return self._high_water_blocks * BLOCK_BYTES

    def __contains__(self, key: object) -> bool:
        return key in self._allocated

    def __len__(self) -> int:
        return len(self._allocated)

    def size_of(self, key: object) -> int:
        return self._allocated[key][1] * BLOCK_BYTES

    def alloc(self, key: object, nbytes: int, high: bool = False) -> int:
        """Allocate ``nbytes`` under ``key``; returns the block offset."""
        if key in self._allocated:
            raise PoolError(f"key {key!r} is already allocated")
        need = blocks_for(nbytes)
        indices = range(len(self._free) - 1, -1, -1) if high \
            else range(len(self._free))
        for i in indices:
            offset, length = self._free[i]
            if length < need:
                continue
            if length == need:
                del self._free[i]
            elif high:
                offset = offset + length - need
                self._free[i] = (self._free[i][0], length - need)
            else:
                self._free[i] = (offset + need, length - need)
            self._allocated[key] = (offset, need)
            self._used_blocks += need
            if self._used_blocks > self._high_water_blocks:
                self._high_water_blocks = self._used_blocks
            return offset
        raise PoolExhausted(
            f"no contiguous {need} blocks available "
            f"({self.free_bytes} bytes free, fragmented)")

    def free(self, key: object) -> None:
        if key not in self._allocated:
            raise PoolError(f"key {key!r} is not allocated")
        offset, length = self._allocated.pop(key)
        self._used_blocks -= length
        idx = bisect_left(self._free, (offset, 0))
        # Merge with the following span, then with the preceding one.
        if idx < len(self._free) and self._free[idx][0] == offset + length:
            length += self._free[idx][1]
            del self._free[idx]
        if idx > 0:
            p_off, p_len = self._free[idx - 1]
            if p_off + p_len == offset:
                self._free[idx - 1] = (p_off, p_len + length)
                return
            if p_off + p_len > offset:
                raise PoolError("free list corrupted: overlapping spans")
        insort(self._free, (offset, length))

    def check(self) -> None:
        """Audit the arena: spans must tile it exactly, fully coalesced."""
        spans = sorted(
            [(off, length, "free") for off, length in self._free]
            + [(off, length, "used") for off, length in
               self._allocated.values()])
        cursor = 0
        previous = None
        for off, length, tag in spans:
            if off != cursor:
                raise PoolError(
                    f"arena gap or overlap at block {cursor}: next span "
                    f"starts at {off}")
            if tag == "free" and previous == "free":
                raise PoolError(
                    f"adjacent free spans not coalesced at block {off}")
            cursor = off + length
            previous = tag
        if cursor != self.capacity_blocks:
            raise PoolError(
                f"arena ends at block {cursor}, capacity is "
                f"{self.capacity_blocks}")
        if self._used_blocks != sum(
                length for _, length in self._allocated.values()):
            raise PoolError("used-block counter out of sync")

    def dump(self) -> str:
        out = io.StringIO()
        out.write(f"pool: {self.capacity_blocks} blocks x {BLOCK_BYTES} B, "
                  f"{self._used_blocks} used, "
                  f"high water {self._high_water_blocks}\n")
        by_offset = sorted(
            (span, key) for key, span in self._allocated.items())
        for (offset, length), key in by_offset:
            out.write(f"  used  {offset:>8} +{length:<8} {key!r}\n")
        for offset, length in self._free:
            out.write(f"  free  {offset:>8} +{length:<8}\n")
        return out.getvalue()
