"""Discrete evaluation network: genotype -> deep cell stack with shortcuts.

The stack threads two states (s0, s1) through the cells exactly like the
supernet, but layers on a three-stage shortcut scheme: the state right after
cells {0, L/3, 2L/3} is captured, and just before each of the two reduction
stages the captured state is added (then ReLU) into both running states. When
a stack position is both a capture and an addition site, capture wins and the
addition is skipped.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Tensor, backward
from .binio import Reader, Writer
from .errors import ConfigError, ModelFileError, ShapeError, StateError
from .layers import ClassifierHead, Conv1d, Stem
from .optim import MomentumSgd, clip_grad_norm, cosine_lr
from .search_space import (NUM_INPUT_NODES, NUM_INTERMEDIATE, Genotype, make_op)
from .supernet import reduction_indices

Array = np.ndarray

_MODEL_MAGIC = b"HDMD"
_MODEL_VERSION = 1


class DiscreteCell:
    """A genotype-pinned cell: each intermediate node sums exactly two ops."""

    def __init__(self, name: str, pairings, prev_prev_channels: int,
                 prev_channels: int, channels: int, *, reduction: bool,
                 reduction_prev: bool, rng: np.random.Generator, dtype):
        self.reduction = reduction
        self.pre0 = Conv1d(f"{name}.pre0", prev_prev_channels, channels, 1,
                           stride=2 if reduction_prev else 1, bias=True,
                           rng=rng, dtype=dtype)
        self.pre1 = Conv1d(f"{name}.pre1", prev_channels, channels, 1,
                           stride=1, bias=True, rng=rng, dtype=dtype)
        self.node_ops = []
        for offset, picks in enumerate(pairings):
            node = NUM_INPUT_NODES + offset
            built = []
            for slot, (pred, op_name) in enumerate(picks):
                stride = 2 if reduction and pred < NUM_INPUT_NODES else 1
                op = make_op(op_name, channels, stride, True, rng,
                             f"{name}.node{node}.in{slot}.{op_name}", dtype)
                built.append((pred, op))
            self.node_ops.append(built)
        self.out_channels = NUM_INTERMEDIATE * channels

    def __call__(self, s0: Tensor, s1: Tensor, *, training: bool,
                 tape: Tape | None) -> Tensor:
        states = [self.pre0(s0, tape), self.pre1(s1, tape)]
        for picks in self.node_ops:
            (pa, op_a), (pb, op_b) = picks
            ya = op_a(states[pa], training=training, tape=tape)
            yb = op_b(states[pb], training=training, tape=tape)
            states.append(ad.add(ya, yb, tape))
        return ad.concat_channels(states[NUM_INPUT_NODES:], tape)

    def parameters(self) -> Iterator[Parameter]:
        yield from self.pre0.parameters()
        yield from self.pre1.parameters()
        for picks in self.node_ops:
            for _, op in picks:
                yield from op.parameters()

    def state_arrays(self) -> dict[str, Array]:
        out: dict[str, Array] = {}
        for picks in self.node_ops:
            for _, op in picks:
                out.update(op.state_arrays())
        return out


@dataclass
class TrainConfig:
    layers: int = 15
    epochs: int = 100
    batch_size: int = 256
    init_channels: int = 32
    seed: int = 0
    classes: int = 5
    lr_max: float = 0.025
    lr_min: float = 0.0
    momentum: float = 0.9
    weight_decay: float = 3e-4
    grad_clip: float = 5.0

    def validate(self) -> None:
        if self.layers < 3:
            raise ConfigError(f"layers must be >= 3, got {self.layers}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch size must be >= 2, got {self.batch_size}")
        if self.init_channels < 1:
            raise ConfigError(f"init_channels must be >= 1, got {self.init_channels}")
        if self.classes < 2:
            raise ConfigError(f"classes must be >= 2, got {self.classes}")


class FinalNetwork:
    """Genotype-built classifier with stage shortcuts."""

    def __init__(self, genotype: Genotype, config: TrainConfig, *, leads: int,
                 dtype=np.float32):
        config.validate()
        self.genotype = genotype
        self.config = config
        self.leads = leads
        self.dtype = np.dtype(dtype)
        rng = np.random.Generator(np.random.PCG64(config.seed))
        layers = config.layers
        self.capture_sites = {0, layers // 3, (2 * layers) // 3}
        self.add_sites = {layers // 3 - 1, (2 * layers) // 3 - 1}
        self.stem = Stem("stem", leads, config.init_channels, rng=rng, dtype=dtype)
        reductions = reduction_indices(layers)
        self.cells: list[DiscreteCell] = []
        c_pp = c_p = config.init_channels
        c_curr = config.init_channels
        reduction_prev = False
        for i in range(layers):
            reduction = i in reductions
            if reduction:
                c_curr *= 2
            pairings = genotype.reduce if reduction else genotype.normal
            cell = DiscreteCell(f"cell{i}", pairings, c_pp, c_p, c_curr,
                                reduction=reduction, reduction_prev=reduction_prev,
                                rng=rng, dtype=dtype)
            self.cells.append(cell)
            c_pp, c_p = c_p, cell.out_channels
            reduction_prev = reduction
        self.classifier = ClassifierHead("classifier", c_p, config.classes,
                                         rng=rng, dtype=dtype)
        self.parameters: list[Parameter] = list(self._iter_params())
        ids = [p.id for p in self.parameters]
        if len(ids) != len(set(ids)):
            raise StateError("duplicate parameter ids in network build")

    def _iter_params(self) -> Iterator[Parameter]:
        yield from self.stem.parameters()
        for cell in self.cells:
            yield from cell.parameters()
        yield from self.classifier.parameters()

    def forward(self, x: Tensor, *, training: bool, tape: Tape | None = None,
                zero_shortcuts: bool = False) -> Tensor:
        """Run the stack. zero_shortcuts substitutes zeros for the captured
        state at the addition sites, which must leave outputs identical up to
        the extra ReLUs; the nullability test relies on it."""
        s0 = s1 = self.stem(x, training=training, tape=tape)
        captured: Tensor | None = None
        for i, cell in enumerate(self.cells):
            s0, s1 = s1, cell(s0, s1, training=training, tape=tape)
            if i in self.capture_sites:
                captured = s1
            elif i in self.add_sites:
                if captured is None:
                    raise StateError(f"shortcut addition at cell {i} before any capture")
                if captured.data.shape != s1.data.shape or s0.data.shape != s1.data.shape:
                    raise ShapeError(
                        f"shortcut shape mismatch at cell {i}: captured "
                        f"{captured.data.shape}, s0 {s0.data.shape}, s1 {s1.data.shape}")
                bridge = Tensor(np.zeros_like(captured.data)) if zero_shortcuts else captured
                s0 = ad.relu(ad.add(s0, bridge, tape), tape)
                s1 = ad.relu(ad.add(s1, bridge, tape), tape)
        return self.classifier(s1, tape)

    def state_arrays(self) -> dict[str, Array]:
        out = dict(self.stem.state_arrays())
        for cell in self.cells:
            out.update(cell.state_arrays())
        return out

    def parameter_arrays(self) -> dict[str, Array]:
        return {p.id: p.data for p in self.parameters}

    def load_parameter_arrays(self, arrays: dict[str, Array]) -> None:
        mine = {p.id: p for p in self.parameters}
        if set(mine) != set(arrays):
            missing = sorted(set(mine) - set(arrays))
            extra = sorted(set(arrays) - set(mine))
            raise ModelFileError(
                f"parameter set mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
        for pid, p in mine.items():
            if arrays[pid].shape != p.data.shape:
                raise ModelFileError(f"parameter {pid!r} shape mismatch")
            p.data = arrays[pid].astype(p.data.dtype, copy=True)

    def load_state_arrays(self, arrays: dict[str, Array]) -> None:
        mine = self.state_arrays()
        if set(mine) != set(arrays):
            raise ModelFileError("batch-norm running-stat set mismatch")
        for key, target in mine.items():
            target[...] = arrays[key].astype(target.dtype)


def build_network(genotype: Genotype, config: TrainConfig, *, leads: int,
                  dtype=np.float32) -> FinalNetwork:
    return FinalNetwork(genotype, config, leads=leads, dtype=dtype)


def predict(net: FinalNetwork, windows: Array, batch_size: int = 256) -> Array:
    """Eval-mode class predictions for [n, leads, window] inputs."""
    out = np.empty(len(windows), dtype=np.int64)
    for start in range(0, len(windows), batch_size):
        x = Tensor(windows[start:start + batch_size].astype(net.dtype, copy=False))
        logits = net.forward(x, training=False)
        out[start:start + len(x.data)] = logits.data[:, :, 0].argmax(axis=1)
    return out


def accuracy(net: FinalNetwork, windows: Array, labels: Array,
             batch_size: int = 256) -> float:
    preds = predict(net, windows, batch_size)
    return float((preds == np.asarray(labels)).mean())


@dataclass
class TrainResult:
    train_loss: list[float]
    val_accuracy: list[float]


def train_final(net: FinalNetwork, dataset, *, log=None) -> TrainResult:
    """SGD training of a built network on the dataset's train beats.

    Trains on search_train + search_val combined (the full 80% train side),
    tracking accuracy on search_val after each epoch.
    """
    from .pipeline import SPLIT_SEARCH_TRAIN, SPLIT_SEARCH_VAL
    cfg = net.config
    train_idx = np.concatenate([dataset.indices_for(SPLIT_SEARCH_TRAIN),
                                dataset.indices_for(SPLIT_SEARCH_VAL)])
    train_idx.sort()
    if len(train_idx) == 0:
        raise ConfigError("dataset has no training beats")
    val_idx = dataset.indices_for(SPLIT_SEARCH_VAL)
    rng = np.random.Generator(np.random.PCG64(cfg.seed + 1))
    opt = MomentumSgd(cfg.lr_max, cfg.momentum, cfg.weight_decay)
    result = TrainResult(train_loss=[], val_accuracy=[])
    for epoch in range(cfg.epochs):
        opt.lr = cosine_lr(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min)
        perm = rng.permutation(len(train_idx))
        loss_sum = 0.0
        steps = 0
        for start in range(0, len(perm), cfg.batch_size):
            ids = train_idx[perm[start:start + cfg.batch_size]]
            x = Tensor(dataset.windows[ids].astype(net.dtype, copy=False))
            y = dataset.labels[ids].astype(np.int64)
            tape = Tape()
            logits = net.forward(x, training=True, tape=tape)
            loss = ad.cross_entropy(logits, y, tape)
            backward(loss, tape, parameters=net.parameters)
            clip_grad_norm(net.parameters, cfg.grad_clip)
            opt.step(net.parameters)
            lval = float(loss.data)
            if not np.isfinite(lval):
                raise StateError(f"non-finite training loss at epoch {epoch}")
            loss_sum += lval
            steps += 1
        result.train_loss.append(loss_sum / steps)
        if len(val_idx):
            acc = accuracy(net, dataset.windows[val_idx], dataset.labels[val_idx],
                           cfg.batch_size)
        else:
            acc = float("nan")
        result.val_accuracy.append(acc)
        if log is not None:
            log(f"epoch {epoch + 1}/{cfg.epochs}: loss {result.train_loss[-1]:.4f}, "
                f"val acc {acc:.4f}")
    return result


def save_model(net: FinalNetwork) -> bytes:
    w = Writer()
    w.magic(_MODEL_MAGIC, _MODEL_VERSION)
    w.string(net.genotype.to_json_text())
    echo = {"config": asdict(net.config), "leads": net.leads, "dtype": net.dtype.name}
    w.json_obj(echo)
    w.named_arrays(net.parameter_arrays())
    w.named_arrays(net.state_arrays())
    return w.getvalue()


def load_model(blob: bytes) -> FinalNetwork:
    r = Reader(blob, ModelFileError, "model file")
    r.magic(_MODEL_MAGIC, _MODEL_VERSION)
    genotype = Genotype.from_json_text(r.string())
    echo = r.json_obj()
    config = TrainConfig(**echo["config"])
    net = FinalNetwork(genotype, config, leads=echo["leads"],
                       dtype=np.dtype(echo["dtype"]))
    net.load_parameter_arrays(r.named_arrays())
    net.load_state_arrays(r.named_arrays())
    r.expect_eof()
    return net
