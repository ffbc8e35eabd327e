"""Cell topology, candidate operations, architecture parameters, genotypes.

A cell is a DAG on 7 nodes: nodes 0 and 1 are the two inputs, nodes 2..5 are
intermediate, and the output node concatenates the four intermediates along
channels. Every (predecessor, node) pair with predecessor < node gives one of
the 14 searchable edges. Each edge carries the same ordered menu of 10
candidate operations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Tensor
from .errors import GenotypeError, InputError
from .layers import BatchNorm1d, Conv1d, MaxPool1d

Array = np.ndarray

OP_NAMES: tuple[str, ...] = (
    "conv3", "conv5", "conv9", "conv13", "conv17", "conv27",
    "maxpool3", "maxpool5", "skip_connect", "zero",
)
NUM_OPS = len(OP_NAMES)
ZERO_INDEX = OP_NAMES.index("zero")
CONV_KERNELS = {"conv3": 3, "conv5": 5, "conv9": 9, "conv13": 13,
                "conv17": 17, "conv27": 27}
POOL_KERNELS = {"maxpool3": 3, "maxpool5": 5}

NUM_INPUT_NODES = 2
NUM_INTERMEDIATE = 4
# (predecessor, node) pairs in flat edge order: node 2 first, predecessors
# ascending within a node. 2 + 3 + 4 + 5 = 14 edges.
EDGES: tuple[tuple[int, int], ...] = tuple(
    (i, j) for j in range(NUM_INPUT_NODES, NUM_INPUT_NODES + NUM_INTERMEDIATE)
    for i in range(j)
)
NUM_EDGES = len(EDGES)
_EDGE_INDEX = {edge: k for k, edge in enumerate(EDGES)}
CONCAT_NODES: tuple[int, ...] = tuple(range(NUM_INPUT_NODES, NUM_INPUT_NODES + NUM_INTERMEDIATE))


def edge_index(pred: int, node: int) -> int:
    try:
        return _EDGE_INDEX[(pred, node)]
    except KeyError:
        raise InputError(f"no edge from node {pred} to node {node}") from None


class ConvBnRelu:
    """Odd-kernel same-padding convolution, then BN, then ReLU."""

    def __init__(self, name: str, channels: int, kernel: int, stride: int,
                 affine: bool, rng: np.random.Generator, dtype):
        self.conv = Conv1d(f"{name}.conv", channels, channels, kernel,
                           stride=stride, padding=kernel // 2, rng=rng, dtype=dtype)
        self.bn = BatchNorm1d(f"{name}.bn", channels, affine=affine, dtype=dtype)

    def __call__(self, x: Tensor, *, training: bool, tape: Tape | None) -> Tensor:
        h = self.conv(x, tape)
        h = self.bn(h, training=training, tape=tape)
        return ad.relu(h, tape)

    def parameters(self) -> Iterator[Parameter]:
        yield from self.conv.parameters()
        yield from self.bn.parameters()

    def state_arrays(self) -> dict[str, Array]:
        return self.bn.state_arrays()


class PoolBn:
    """Same-padding max pooling followed by BN."""

    def __init__(self, name: str, channels: int, kernel: int, stride: int,
                 affine: bool, dtype):
        self.pool = MaxPool1d(kernel, stride=stride, padding=kernel // 2)
        self.bn = BatchNorm1d(f"{name}.bn", channels, affine=affine, dtype=dtype)

    def __call__(self, x: Tensor, *, training: bool, tape: Tape | None) -> Tensor:
        h = self.pool(x, tape)
        return self.bn(h, training=training, tape=tape)

    def parameters(self) -> Iterator[Parameter]:
        yield from self.bn.parameters()

    def state_arrays(self) -> dict[str, Array]:
        return self.bn.state_arrays()


class Identity:
    def __call__(self, x: Tensor, *, training: bool, tape: Tape | None) -> Tensor:
        return x

    def parameters(self) -> Iterator[Parameter]:
        return iter(())

    def state_arrays(self) -> dict[str, Array]:
        return {}


class StridedSkip:
    """skip_connect on a stride-2 edge: 1x1 conv (stride 2) + BN, no ReLU."""

    def __init__(self, name: str, channels: int, affine: bool,
                 rng: np.random.Generator, dtype):
        self.conv = Conv1d(f"{name}.conv", channels, channels, 1, stride=2,
                           padding=0, rng=rng, dtype=dtype)
        self.bn = BatchNorm1d(f"{name}.bn", channels, affine=affine, dtype=dtype)

    def __call__(self, x: Tensor, *, training: bool, tape: Tape | None) -> Tensor:
        h = self.conv(x, tape)
        return self.bn(h, training=training, tape=tape)

    def parameters(self) -> Iterator[Parameter]:
        yield from self.conv.parameters()
        yield from self.bn.parameters()

    def state_arrays(self) -> dict[str, Array]:
        return self.bn.state_arrays()


class ZeroOp:
    """Emits zeros at the strided output length; blocks gradient flow."""

    def __init__(self, stride: int):
        self.stride = stride

    def __call__(self, x: Tensor, *, training: bool, tape: Tape | None) -> Tensor:
        return ad.zeros_like_strided(x, stride=self.stride, tape=tape)

    def parameters(self) -> Iterator[Parameter]:
        return iter(())

    def state_arrays(self) -> dict[str, Array]:
        return {}


def make_op(name: str, channels: int, stride: int, affine: bool,
            rng: np.random.Generator, prefix: str, dtype=np.float32):
    """Build one candidate op. `prefix` seeds the parameter ids."""
    if name in CONV_KERNELS:
        return ConvBnRelu(prefix, channels, CONV_KERNELS[name], stride, affine, rng, dtype)
    if name in POOL_KERNELS:
        return PoolBn(prefix, channels, POOL_KERNELS[name], stride, affine, dtype)
    if name == "skip_connect":
        if stride == 1:
            return Identity()
        return StridedSkip(prefix, channels, affine, rng, dtype)
    if name == "zero":
        return ZeroOp(stride)
    raise InputError(f"unknown operation {name!r}")


@dataclass
class ArchParams:
    """The two shared mixing-weight matrices, one row per edge."""

    alpha_normal: Parameter
    alpha_reduce: Parameter

    @classmethod
    def init(cls, rng: np.random.Generator, dtype=np.float32) -> "ArchParams":
        def fresh(name: str) -> Parameter:
            a = rng.normal(0.0, 1e-3, size=(NUM_EDGES, NUM_OPS)).astype(dtype)
            return Parameter(a, id=name, group=ad.ARCH_GROUP)
        return cls(alpha_normal=fresh("alpha.normal"), alpha_reduce=fresh("alpha.reduce"))

    def parameters(self) -> Iterator[Parameter]:
        yield self.alpha_normal
        yield self.alpha_reduce


def mixing_weights(alpha_row: Array) -> Array:
    """Softmax over one edge's op scores (pure numpy, for inspection code)."""
    row = np.asarray(alpha_row)
    if row.shape != (NUM_OPS,):
        raise InputError(f"expected one row of {NUM_OPS} scores, got shape {row.shape}")
    return ad.softmax(row)


Pairings = tuple[tuple[tuple[int, str], tuple[int, str]], ...]


@dataclass(frozen=True)
class Genotype:
    """Discrete architecture: per intermediate node, two (predecessor, op) picks."""

    normal: Pairings
    reduce: Pairings
    concat: tuple[int, ...] = CONCAT_NODES

    def __post_init__(self):
        object.__setattr__(self, "normal", _freeze_pairings(self.normal, "normal"))
        object.__setattr__(self, "reduce", _freeze_pairings(self.reduce, "reduce"))
        object.__setattr__(self, "concat", tuple(int(c) for c in self.concat))
        if self.concat != CONCAT_NODES:
            raise GenotypeError(f"concat must be {list(CONCAT_NODES)}, got {list(self.concat)}")

    def to_json_text(self) -> str:
        def unpack(p: Pairings):
            return [[[pred, op] for pred, op in node] for node in p]
        doc = {"normal": unpack(self.normal), "reduce": unpack(self.reduce),
               "concat": list(self.concat), "format_version": 1}
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json_text(cls, text: str) -> "Genotype":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise GenotypeError(f"malformed genotype JSON: {e}") from None
        if not isinstance(doc, dict):
            raise GenotypeError("genotype JSON must be an object")
        if doc.get("format_version") != 1:
            raise GenotypeError(f"unsupported genotype format_version {doc.get('format_version')!r}")
        for key in ("normal", "reduce", "concat"):
            if key not in doc:
                raise GenotypeError(f"genotype JSON missing key {key!r}")
        def pack(raw, which):
            if not isinstance(raw, list):
                raise GenotypeError(f"{which} cell description must be a list")
            return tuple(tuple((pair[0], pair[1]) for pair in node) for node in raw)
        try:
            return cls(normal=pack(doc["normal"], "normal"),
                       reduce=pack(doc["reduce"], "reduce"),
                       concat=tuple(doc["concat"]))
        except (TypeError, IndexError) as e:
            raise GenotypeError(f"malformed genotype structure: {e}") from None


def _freeze_pairings(raw, which: str) -> Pairings:
    if raw is None:
        raise GenotypeError(f"{which} cell description missing")
    nodes = tuple(raw)
    if len(nodes) != NUM_INTERMEDIATE:
        raise GenotypeError(
            f"{which} cell must describe {NUM_INTERMEDIATE} nodes, got {len(nodes)}")
    frozen = []
    for offset, node in enumerate(nodes):
        node_idx = NUM_INPUT_NODES + offset
        picks = tuple(node)
        if len(picks) != 2:
            raise GenotypeError(
                f"{which} node {node_idx} must pick exactly 2 inputs, got {len(picks)}")
        seen = set()
        out = []
        for pred, op in picks:
            pred = int(pred)
            if not 0 <= pred < node_idx:
                raise GenotypeError(
                    f"{which} node {node_idx} has invalid predecessor {pred}")
            if pred in seen:
                raise GenotypeError(
                    f"{which} node {node_idx} picks predecessor {pred} twice")
            seen.add(pred)
            if op not in OP_NAMES or op == "zero":
                raise GenotypeError(
                    f"{which} node {node_idx} names unknown or excluded op {op!r}")
            out.append((pred, str(op)))
        frozen.append(tuple(out))
    return tuple(frozen)


def discretize(alpha_normal: Array, alpha_reduce: Array) -> Genotype:
    """Collapse mixing weights to a Genotype.

    Per edge: softmax the row and keep the best non-zero op (ties to the lower
    op index). Per node: keep the two incoming edges whose kept op has the
    largest weight (ties to lower op index, then lower predecessor).
    """
    return Genotype(normal=_discretize_one(np.asarray(alpha_normal)),
                    reduce=_discretize_one(np.asarray(alpha_reduce)))


def _discretize_one(alpha: Array) -> Pairings:
    if alpha.shape != (NUM_EDGES, NUM_OPS):
        raise InputError(f"alpha must be [{NUM_EDGES}, {NUM_OPS}], got {alpha.shape}")
    rows = ad.softmax(alpha.astype(np.float64))
    nodes = []
    for node_idx in range(NUM_INPUT_NODES, NUM_INPUT_NODES + NUM_INTERMEDIATE):
        ranked = []
        for pred in range(node_idx):
            row = rows[edge_index(pred, node_idx)]
            best_op = int(np.argmax(row[:ZERO_INDEX]))  # argmax takes lowest index on ties
            ranked.append((-row[best_op], best_op, pred))
        ranked.sort()
        picks = sorted(ranked[:2], key=lambda t: t[2])
        nodes.append(tuple((pred, OP_NAMES[op]) for _, op, pred in picks))
    return tuple(nodes)


def random_genotype(rng: np.random.Generator) -> Genotype:
    """Uniform random architecture from the same space discretize targets."""
    def one_cell() -> Pairings:
        nodes = []
        for node_idx in range(NUM_INPUT_NODES, NUM_INPUT_NODES + NUM_INTERMEDIATE):
            preds = sorted(rng.choice(node_idx, size=2, replace=False).tolist())
            ops = rng.choice(ZERO_INDEX, size=2).tolist()  # anything but zero
            nodes.append(tuple((int(p), OP_NAMES[int(o)]) for p, o in zip(preds, ops)))
        return tuple(nodes)
    return Genotype(normal=one_cell(), reduce=one_cell())
