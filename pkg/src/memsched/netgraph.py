"""Network graph model: the .net file format, validation, and step ordering.

A network is a DAG of named layers with exactly one DATA source and one
terminal layer.  Training executes one forward step per layer in a
deterministic depth-first order, then the backward steps in exactly the
reverse order, so a network with N layers runs steps 0..2N-1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from .errors import MemschedError


class NetError(MemschedError):
    """Problem with a network definition."""


class NetParseError(NetError):
    """Malformed network text; carries the offending line number."""

    def __init__(self, message: str, lineno: int) -> None:
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class NetValidationError(NetError):
    """Structurally invalid network."""


class LayerKind(enum.Enum):
    DATA = "DATA"
    CONV = "CONV"
    POOL = "POOL"
    ACT = "ACT"
    LRN = "LRN"
    BN = "BN"
    FC = "FC"
    DROPOUT = "DROPOUT"
    SOFTMAX = "SOFTMAX"
    JOIN = "JOIN"


#: Forward tensors a layer's backward step reads.  "x" expands to the
#: output of every predecessor, "y" to the layer's own output.
BACKWARD_NEEDS: dict[LayerKind, tuple[str, ...]] = {
    LayerKind.DATA: (),
    LayerKind.CONV: ("x",),
    LayerKind.FC: ("x",),
    LayerKind.POOL: ("x", "y"),
    LayerKind.ACT: ("x", "y"),
    LayerKind.LRN: ("x", "y"),
    LayerKind.BN: ("x", "y"),
    LayerKind.DROPOUT: ("y",),
    LayerKind.SOFTMAX: ("y",),
    LayerKind.JOIN: (),
}

#: Kinds whose backward rewrites the incoming gradient in place, so their
#: gradient buffer is shared with the producer below them.
GRAD_INPLACE_KINDS = frozenset({LayerKind.ACT, LayerKind.DROPOUT})

#: Kinds treated as recompute checkpoints: their outputs anchor replay.
CHECKPOINT_KINDS = frozenset({LayerKind.CONV, LayerKind.FC})

#: Kinds whose outputs are offloaded to host memory after forward use.
OFFLOAD_KINDS = frozenset({LayerKind.CONV})


@dataclass
class Layer:
    id: int
    name: str
    kind: LayerKind
    params: dict[str, int | float | str] = field(default_factory=dict)
    prev: list[int] = field(default_factory=list)
    next: list[int] = field(default_factory=list)


class Phase(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True)
class Step:
    index: int
    layer_id: int
    phase: Phase


@dataclass
class NetworkDef:
    """A validated layer graph."""

    layers: list[Layer]
    name: str = "net"

    def __len__(self) -> int:
        return len(self.layers)

    def __iter__(self) -> Iterator[Layer]:
        return iter(self.layers)

    def layer(self, name: str) -> Layer:
        for lay in self.layers:
            if lay.name == name:
                return lay
        raise KeyError(name)

    @property
    def data_id(self) -> int:
        for lay in self.layers:
            if lay.kind is LayerKind.DATA:
                return lay.id
        raise NetValidationError("network has no DATA layer")

    @property
    def terminal_id(self) -> int:
        for lay in self.layers:
            if not lay.next:
                return lay.id
        raise NetValidationError("network has no terminal layer")

    def validate(self) -> None:
        if len(self.layers) < 2:
            raise NetValidationError(
                "a network needs a DATA layer and at least one consumer")
        datas = [l for l in self.layers if l.kind is LayerKind.DATA]
        if len(datas) != 1:
            raise NetValidationError(
                f"expected exactly one DATA layer, found {len(datas)}")
        if datas[0].prev:
            raise NetValidationError("the DATA layer cannot have inputs")
        for lay in self.layers:
            if lay.kind is not LayerKind.DATA and not lay.prev:
                raise NetValidationError(f"layer {lay.name!r} has no inputs")
            if len(lay.prev) > 1 and lay.kind is not LayerKind.JOIN:
                raise NetValidationError(
                    f"layer {lay.name!r} has {len(lay.prev)} inputs, "
                    "only JOIN may merge branches")
            if lay.kind is LayerKind.JOIN and len(lay.prev) < 2:
                raise NetValidationError(
                    f"JOIN layer {lay.name!r} needs at least two inputs")
        terminals = [l.name for l in self.layers if not l.next]
        if len(terminals) != 1:
            raise NetValidationError(
                f"expected exactly one terminal layer, found {terminals}")
        order = _forward_order(self)
        if len(order) != len(self.layers):
            seen = set(order)
            missing = [l.name for l in self.layers if l.id not in seen]
            raise NetValidationError(
                f"layers unreachable from DATA or on a cycle: {missing}")


def _coerce(text: str) -> int | float | str:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_network(text: str, name: str = "net") -> NetworkDef:
    """Parse network text into a validated NetworkDef.

    The format is line oriented: ``layer <name> <KIND> [key=value ...]``
    declares a layer, ``edge <from> <to>`` connects two declared layers,
    ``#`` starts a comment.
    """
    layers: list[Layer] = []
    by_name: dict[str, Layer] = {}
    edges: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "layer":
            if len(tokens) < 3:
                raise NetParseError("layer needs a name and a kind", lineno)
            lname, kind_text = tokens[1], tokens[2]
            if lname in by_name:
                raise NetParseError(f"duplicate layer name {lname!r}", lineno)
            try:
                kind = LayerKind(kind_text)
            except ValueError:
                raise NetParseError(
                    f"unknown layer kind {kind_text!r}", lineno) from None
            params: dict[str, int | float | str] = {}
            for tok in tokens[3:]:
                key, sep, value = tok.partition("=")
                if not sep or not key or not value:
                    raise NetParseError(
                        f"malformed parameter {tok!r}, expected key=value",
                        lineno)
                params[key] = _coerce(value)
            layer = Layer(id=len(layers), name=lname, kind=kind, params=params)
            layers.append(layer)
            by_name[lname] = layer
        elif tokens[0] == "edge":
            if len(tokens) != 3:
                raise NetParseError(
                    "edge needs exactly a source and a target", lineno)
            src_name, dst_name = tokens[1], tokens[2]
            for missing in (src_name, dst_name):
                if missing not in by_name:
                    raise NetParseError(
                        f"edge references undeclared layer {missing!r}",
                        lineno)
            src, dst = by_name[src_name], by_name[dst_name]
            if src.id == dst.id:
                raise NetParseError(
                    f"layer {src_name!r} cannot feed itself", lineno)
            if (src.id, dst.id) in edges:
                raise NetParseError(
                    f"duplicate edge {src_name!r} -> {dst_name!r}", lineno)
            edges.add((src.id, dst.id))
            src.next.append(dst.id)
            dst.prev.append(src.id)
        else:
            raise NetParseError(f"unknown directive {tokens[0]!r}", lineno)
    net = NetworkDef(layers=layers, name=name)
    net.validate()
    return net


def load_network(path: str | Path) -> NetworkDef:
    path = Path(path)
    return parse_network(path.read_text(), name=path.stem)


def _forward_order(net: NetworkDef) -> list[int]:
    """Depth-first layer order with join gating.

    A layer is emitted the moment its last pending input arrives; after
    emission its successors are explored in edge declaration order.  The
    walk is iterative so very deep networks do not hit the interpreter
    recursion limit.
    """
    layers = net.layers
    entry = None
    for lay in layers:
        if lay.kind is LayerKind.DATA and not lay.prev:
            entry = lay.id
            break
    if entry is None:
        return []
    arrived = [0] * len(layers)
    order = [entry]
    stack: list[tuple[int, int]] = [(entry, 0)]
    while stack:
        lid, cursor = stack[-1]
        succs = layers[lid].next
        if cursor == len(succs):
            stack.pop()
            continue
        stack[-1] = (lid, cursor + 1)
        nid = succs[cursor]
        arrived[nid] += 1
        if arrived[nid] == len(layers[nid].prev):
            order.append(nid)
            stack.append((nid, 0))
    return order


def forward_order(net: NetworkDef) -> list[int]:
    order = _forward_order(net)
    if len(order) != len(net.layers):
        raise NetValidationError("network has unreachable or cyclic layers")
    return order


@dataclass
class Schedule:
    """Step sequence for one training iteration: forward then backward."""

    net: NetworkDef
    forward_ids: list[int]
    steps: list[Step]
    fwd_step_of: dict[int, int]
    bwd_step_of: dict[int, int]

    @property
    def num_steps(self) -> int:
        return len(self.steps)

    def layer_at(self, step_index: int) -> Layer:
        return self.net.layers[self.steps[step_index].layer_id]


def build_schedule(net: NetworkDef) -> Schedule:
    ids = forward_order(net)
    n = len(ids)
    steps = [Step(i, lid, Phase.FORWARD) for i, lid in enumerate(ids)]
    steps += [Step(n + i, lid, Phase.BACKWARD)
              for i, lid in enumerate(reversed(ids))]
    fwd = {lid: i for i, lid in enumerate(ids)}
    bwd = {lid: 2 * n - 1 - fwd[lid] for lid in ids}
    return Schedule(net=net, forward_ids=ids, steps=steps,
                    fwd_step_of=fwd, bwd_step_of=bwd)


def backward_reads(net: NetworkDef, layer_id: int) -> list[int]:
    """Producer ids of the forward tensors this layer's backward step reads."""
    layer = net.layers[layer_id]
    reads: list[int] = []
    for need in BACKWARD_NEEDS[layer.kind]:
        if need == "x":
            reads.extend(layer.prev)
        else:
            reads.append(layer.id)
    return reads


def checkpoint_segments(
    net: NetworkDef,
    order: Sequence[int] | None = None,
    cp_kinds: frozenset[LayerKind] = CHECKPOINT_KINDS,
) -> list[list[int]]:
    """Maximal runs of consecutive non-checkpoint layers in forward order.

    DATA and checkpoint layers break runs and belong to no segment.
    """
    if order is None:
        order = forward_order(net)
    segments: list[list[int]] = []
    current: list[int] = []
    for lid in order:
        kind = net.layers[lid].kind
        if kind is LayerKind.DATA or kind in cp_kinds:
            if current:
                segments.append(current)
                current = []
        else:
            current.append(lid)
    if current:
        segments.append(current)
    return segments


def external_inputs(net: NetworkDef, members: Sequence[int]) -> list[int]:
    """Producers feeding ``members`` from outside the group, in first-use order."""
    inside = set(members)
    externals: list[int] = []
    seen: set[int] = set()
    for lid in members:
        for pid in net.layers[lid].prev:
            if pid not in inside and pid not in seen:
                seen.add(pid)
                externals.append(pid)
    return externals
