"""Convolution algorithm selection under a memory budget.

Each algorithm trades workspace for speed; selection picks the fastest
algorithm whose workspace fits in the bytes currently free, breaking ties
toward the smaller workspace and then the name.  The zero-workspace
algorithm is always eligible, so selection cannot fail.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ConvAlgo:
    name: str
    workspace_factor: int
    time_factor: float

    def workspace_bytes(self, out_bytes: int) -> int:
        return self.workspace_factor * out_bytes


ALGORITHMS: tuple[ConvAlgo, ...] = (
    ConvAlgo("implicit-gemm", workspace_factor=0, time_factor=1.0),
    ConvAlgo("gemm-workspace", workspace_factor=1, time_factor=0.8),
    ConvAlgo("fft", workspace_factor=3, time_factor=0.6),
)

DEFAULT_ALGO = ALGORITHMS[0]


def select_algorithm(out_bytes: int, free_bytes: int) -> ConvAlgo:
    budget = max(free_bytes, 0)
    eligible = [a for a in ALGORITHMS if a.workspace_bytes(out_bytes) <= budget]
    return min(eligible,
               key=lambda a: (a.time_factor, a.workspace_bytes(out_bytes),
                              a.name))


@dataclass(frozen=True)
class Selection:
    step: float
    layer_id: int
    layer_name: str
    phase: str
    algo: str
    workspace_bytes: int
    free_bytes: int
