"""Synthetic network generators for experiments and tests.

All generators emit the plain-text network format and round-trip it
through the parser, so anything built here is guaranteed to satisfy the
same validation rules as a hand-written file.
"""

from __future__ import annotations

import random

from .errors import ConfigError
from .netgraph import NetworkDef, parse_network


def uniform_chain_text(n_layers: int, cp_positions: tuple[int, ...] = (),
                       c: int = 4, h: int = 16, w: int = 16) -> str:
    """A straight chain of shape-preserving layers over a (c, h, w) input.

    Positions in ``cp_positions`` (1-based) become 1x1 convolutions with
    ``c`` output channels; every other position alternates LRN and BN.
    Every tensor in the chain therefore has identical byte size, which
    makes peak arithmetic exact in units of one tensor.
    """
    if n_layers < 2:
        raise ConfigError("chain needs at least 2 layers")
    cps = set(cp_positions)
    bad = [p for p in cps if not 1 <= p <= n_layers]
    if bad:
        raise ConfigError(f"checkpoint positions out of range: {bad}")
    lines = [f"layer data DATA c={c} h={h} w={w}"]
    for i in range(1, n_layers + 1):
        if i in cps:
            lines.append(f"layer l{i} CONV out={c} k=1")
        elif i % 2 == 1:
            lines.append(f"layer l{i} LRN")
        else:
            lines.append(f"layer l{i} BN")
    lines.append("edge data l1")
    for i in range(1, n_layers):
        lines.append(f"edge l{i} l{i + 1}")
    return "\n".join(lines) + "\n"


def make_uniform_chain(n_layers: int, cp_positions: tuple[int, ...] = (),
                       c: int = 4, h: int = 16, w: int = 16) -> NetworkDef:
    text = uniform_chain_text(n_layers, cp_positions, c, h, w)
    return parse_network(text, name=f"chain{n_layers}")


def resnet_text(n1: int, n2: int, n3: int, n4: int,
                num_classes: int = 1000) -> str:
    """A residual classification network for 224x224 inputs.

    Each stage holds ``ni`` blocks of CONV+BN+ACT; blocks that keep the
    spatial shape merge their input back in through a JOIN, the first
    block of stages two to four downsamples by stride 2 instead.  The
    nominal depth counter 3*(n1+n2+n3+n4)+2 follows the usual convention
    of counting the per-block layers plus the stem and classifier.
    """
    for n in (n1, n2, n3, n4):
        if n < 1:
            raise ConfigError("each stage needs at least one block")
    lines = [
        "layer data DATA c=3 h=224 w=224",
        "layer conv_stem CONV out=64 k=7 s=2 p=3",
        "layer bn_stem BN",
        "layer relu_stem ACT",
        "layer pool_stem POOL k=3 s=2 p=1",
        "edge data conv_stem",
        "edge conv_stem bn_stem",
        "edge bn_stem relu_stem",
        "edge relu_stem pool_stem",
    ]
    current = "pool_stem"
    for stage, blocks in enumerate((n1, n2, n3, n4), start=1):
        ch = 64 * 2 ** (stage - 1)
        for b in range(1, blocks + 1):
            tag = f"s{stage}b{b}"
            stride = 2 if stage > 1 and b == 1 else 1
            lines.append(f"layer conv_{tag} CONV out={ch} k=3 s={stride} p=1")
            lines.append(f"layer bn_{tag} BN")
            lines.append(f"layer relu_{tag} ACT")
            lines.append(f"edge {current} conv_{tag}")
            lines.append(f"edge conv_{tag} bn_{tag}")
            lines.append(f"edge bn_{tag} relu_{tag}")
            if stride == 1:
                lines.append(f"layer join_{tag} JOIN")
                lines.append(f"edge relu_{tag} join_{tag}")
                lines.append(f"edge {current} join_{tag}")
                current = f"join_{tag}"
            else:
                current = f"relu_{tag}"
    lines += [
        "layer pool_avg POOL k=7 s=1",
        f"layer fc FC out={num_classes}",
        "layer softmax SOFTMAX",
        f"edge {current} pool_avg",
        "edge pool_avg fc",
        "edge fc softmax",
    ]
    return "\n".join(lines) + "\n"


def gen_resnet(n1: int, n2: int, n3: int, n4: int,
               num_classes: int = 1000) -> NetworkDef:
    depth = 3 * (n1 + n2 + n3 + n4) + 2
    return parse_network(resnet_text(n1, n2, n3, n4, num_classes),
                         name=f"resnet{depth}")


_BRANCH_KINDS = ("ACT", "LRN", "BN", "CONV")


def random_fanjoin(seed: int, min_blocks: int = 2,
                   max_blocks: int = 5) -> NetworkDef:
    """A random fan-out/fan-in network, reproducible from its seed.

    A spine of blocks, each splitting into two or three shape-preserving
    branches merged by a JOIN, with occasional pooling between blocks and
    a small classifier tail.  Meant for property tests: shapes stay tiny.
    """
    rng = random.Random(seed)
    c = rng.choice((2, 3, 4))
    hw = rng.choice((8, 16))
    lines = [f"layer data DATA c={c} h={hw} w={hw}"]
    edges: list[tuple[str, str]] = []
    current = "data"
    uid = 0

    def fresh(prefix: str) -> str:
        nonlocal uid
        uid += 1
        return f"{prefix}{uid}"

    for _ in range(rng.randint(min_blocks, max_blocks)):
        n_branches = rng.randint(2, 3)
        heads = []
        for _ in range(n_branches):
            prev = current
            for _ in range(rng.randint(1, 2)):
                kind = rng.choice(_BRANCH_KINDS)
                name = fresh(kind.lower())
                if kind == "CONV":
                    k = rng.choice((1, 3))
                    p = 1 if k == 3 else 0
                    lines.append(f"layer {name} CONV out={c} k={k} p={p}")
                else:
                    lines.append(f"layer {name} {kind}")
                edges.append((prev, name))
                prev = name
            heads.append(prev)
        join = fresh("join")
        lines.append(f"layer {join} JOIN")
        for head in heads:
            edges.append((head, join))
        current = join
        if hw >= 4 and rng.random() < 0.4:
            pool = fresh("pool")
            lines.append(f"layer {pool} POOL k=2 s=2")
            edges.append((current, pool))
            current = pool
            hw //= 2
    fc = fresh("fc")
    lines.append(f"layer {fc} FC out={rng.choice((10, 16, 32))}")
    edges.append((current, fc))
    sm = fresh("softmax")
    lines.append(f"layer {sm} SOFTMAX")
    edges.append((fc, sm))
    lines += [f"edge {a} {b}" for a, b in edges]
    return parse_network("\n".join(lines) + "\n", name=f"fanjoin_{seed}")
