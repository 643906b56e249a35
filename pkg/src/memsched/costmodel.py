"""Per-layer memory and time cost tables derived from layer shapes.

Activation bytes are exact integers.  DATA outputs live in host memory and
contribute zero device bytes; parameter tensors are tracked for reporting
but excluded from device residency, which models a runtime that keeps
weights resident permanently and accounts them separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

from .errors import MemschedError
from .netgraph import (
    GRAD_INPLACE_KINDS,
    Layer,
    LayerKind,
    NetworkDef,
)


class CostError(MemschedError):
    """A layer's parameters or input shapes do not admit a cost."""


#: Kinds whose compute cost per element is an order of magnitude above the
#: cheap elementwise kinds.
HEAVY_KINDS = frozenset({LayerKind.CONV, LayerKind.FC})


@dataclass(frozen=True)
class CostConfig:
    """Knobs of the cost model; defaults calibrate the bundled fixtures."""

    batch: int = 200
    dtype_bytes: int = 4
    time_per_elem: float = 2e-9
    heavy_time_per_elem: float = 2e-8
    backward_time_factor: float = 2.0
    bandwidth_bytes_per_s: float = 8e9

    def __post_init__(self) -> None:
        if self.batch < 1:
            raise CostError(f"batch must be positive, got {self.batch}")
        if self.dtype_bytes < 1:
            raise CostError("dtype_bytes must be positive")
        if self.bandwidth_bytes_per_s <= 0:
            raise CostError("bandwidth must be positive")
        if self.backward_time_factor <= 0:
            raise CostError("backward_time_factor must be positive")


@dataclass(frozen=True)
class LayerCost:
    layer_id: int
    shape: tuple[int, ...]
    out_elems: int
    out_bytes: int
    device_bytes: int
    grad_bytes: int
    param_bytes: int
    fwd_time: float
    bwd_time: float


CostTable = dict[int, LayerCost]


def _int_param(layer: Layer, key: str, default: int | None = None) -> int:
    if key not in layer.params:
        if default is not None:
            return default
        raise CostError(f"layer {layer.name!r} is missing parameter {key!r}")
    value = layer.params[key]
    if not isinstance(value, int):
        raise CostError(
            f"layer {layer.name!r} parameter {key!r} must be an integer, "
            f"got {value!r}")
    return value


def _window(layer: Layer, size: int, kernel: int, stride: int,
            pad: int) -> int:
    out = (size + 2 * pad - kernel) // stride + 1
    if out < 1:
        raise CostError(
            f"layer {layer.name!r}: kernel {kernel} stride {stride} "
            f"pad {pad} does not fit input extent {size}")
    return out


def propagate_shapes(net: NetworkDef) -> dict[int, tuple[int, ...]]:
    """Per-sample output shape of every layer, in forward dependency order."""
    shapes: dict[int, tuple[int, ...]] = {}
    pending = list(net.layers)
    while pending:
        progressed = False
        remaining: list[Layer] = []
        for layer in pending:
            if all(p in shapes for p in layer.prev):
                shapes[layer.id] = _layer_shape(net, layer, shapes)
                progressed = True
            else:
                remaining.append(layer)
        if not progressed:
            names = [l.name for l in remaining]
            raise CostError(f"cannot resolve shapes for layers {names}")
        pending = remaining
    return shapes


def _layer_shape(net: NetworkDef, layer: Layer,
                 shapes: dict[int, tuple[int, ...]]) -> tuple[int, ...]:
    kind = layer.kind
    if kind is LayerKind.DATA:
        c = _int_param(layer, "c")
        h = _int_param(layer, "h")
        w = _int_param(layer, "w")
        return (c, h, w)
    inputs = [shapes[p] for p in layer.prev]
    if kind is LayerKind.JOIN:
        first = inputs[0]
        for shape, pid in zip(inputs, layer.prev):
            if shape != first:
                raise CostError(
                    f"JOIN layer {layer.name!r} merges mismatched shapes "
                    f"{first} and {shape} (from {net.layers[pid].name!r})")
        return first
    src = inputs[0]
    if kind is LayerKind.CONV:
        if len(src) != 3:
            raise CostError(
                f"CONV layer {layer.name!r} needs a (c, h, w) input, "
                f"got {src}")
        out_c = _int_param(layer, "out")
        k = _int_param(layer, "k")
        s = _int_param(layer, "s", 1)
        p = _int_param(layer, "p", 0)
        return (out_c, _window(layer, src[1], k, s, p),
                _window(layer, src[2], k, s, p))
    if kind is LayerKind.POOL:
        if len(src) != 3:
            raise CostError(
                f"POOL layer {layer.name!r} needs a (c, h, w) input, "
                f"got {src}")
        k = _int_param(layer, "k")
        s = _int_param(layer, "s", k)
        p = _int_param(layer, "p", 0)
        return (src[0], _window(layer, src[1], k, s, p),
                _window(layer, src[2], k, s, p))
    if kind is LayerKind.FC:
        return (_int_param(layer, "out"),)
    # ACT, LRN, BN, DROPOUT, SOFTMAX preserve their input shape.
    return src


def _param_elems(layer: Layer, in_shape: tuple[int, ...],
                 out_shape: tuple[int, ...]) -> int:
    kind = layer.kind
    if kind is LayerKind.CONV:
        k = _int_param(layer, "k")
        return k * k * in_shape[0] * out_shape[0] + out_shape[0]
    if kind is LayerKind.FC:
        return prod(in_shape) * out_shape[0] + out_shape[0]
    if kind is LayerKind.BN:
        return 4 * out_shape[0]
    return 0


def build_costs(net: NetworkDef, config: CostConfig) -> CostTable:
    shapes = propagate_shapes(net)
    table: CostTable = {}
    for layer in net.layers:
        shape = shapes[layer.id]
        elems = config.batch * prod(shape)
        out_bytes = elems * config.dtype_bytes
        if layer.kind is LayerKind.DATA:
            device_bytes = 0
            fwd_time = 0.0
        else:
            device_bytes = out_bytes
            per_elem = (config.heavy_time_per_elem
                        if layer.kind in HEAVY_KINDS
                        else config.time_per_elem)
            fwd_time = per_elem * elems
        if layer.kind in GRAD_INPLACE_KINDS or layer.kind is LayerKind.DATA:
            grad_bytes = 0
        else:
            grad_bytes = device_bytes
        in_shape = shapes[layer.prev[0]] if layer.prev else shape
        table[layer.id] = LayerCost(
            layer_id=layer.id,
            shape=shape,
            out_elems=elems,
            out_bytes=out_bytes,
            device_bytes=device_bytes,
            grad_bytes=grad_bytes,
            param_bytes=_param_elems(layer, in_shape, shape)
            * config.dtype_bytes,
            fwd_time=fwd_time,
            bwd_time=config.backward_time_factor * fwd_time,
        )
    return table


def grad_owner(net: NetworkDef, layer_id: int) -> int | None:
    """Layer whose gradient buffer holds d(output) of ``layer_id``.

    Kinds that rewrite their incoming gradient in place share the buffer
    of the producer below them; a walk that reaches DATA has no gradient.
    """
    lid = layer_id
    while True:
        layer = net.layers[lid]
        if layer.kind is LayerKind.DATA:
            return None
        if layer.kind in GRAD_INPLACE_KINDS:
            lid = layer.prev[0]
            continue
        return lid


def total_forward_bytes(costs: CostTable) -> int:
    return sum(c.device_bytes for c in costs.values())


def total_grad_bytes(costs: CostTable) -> int:
    return sum(c.grad_bytes for c in costs.values())


def baseline_peak_bytes(costs: CostTable) -> int:
    """Device bytes held at the end of an iteration with every feature off.

    Nothing is freed: every activation plus every gradient buffer,
    including the loss seed of the terminal layer, is still resident.
    """
    return total_forward_bytes(costs) + total_grad_bytes(costs)


def mib(nbytes: int | float) -> float:
    return nbytes / (1 << 20)
