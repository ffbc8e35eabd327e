"""Weight-sharing supernet and the alternating architecture search loop.

Every edge carries all candidate ops mixed by a softmax over shared
architecture scores (one score matrix for normal cells, one for reduction
cells). Search alternates two plain first-order updates per step: the
architecture scores descend the validation loss, then the operation weights
descend the training loss.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Tensor, backward, frozen
from .binio import Reader, Writer
from .errors import CheckpointError, ConfigError, StateError
from .layers import BatchNorm1d, ClassifierHead, Conv1d, Stem
from .optim import AdaptiveMoments, MomentumSgd, clip_grad_norm, cosine_lr
from .search_space import (CONV_KERNELS, NUM_EDGES, NUM_INPUT_NODES,
                           NUM_INTERMEDIATE, NUM_OPS, OP_NAMES, ArchParams,
                           Genotype, discretize, edge_index, make_op)

Array = np.ndarray

MAX_CONV_KERNEL = max(CONV_KERNELS.values())

_CHECKPOINT_MAGIC = b"HDCK"
_CHECKPOINT_VERSION = 1


def reduction_indices(cells: int) -> frozenset[int]:
    """Cells at one third and two thirds of the stack halve the length."""
    return frozenset({cells // 3, (2 * cells) // 3})


class MixedEdge:
    """One searchable edge: all candidate ops, blended by softmax scores.

    The six convolution candidates run fused: one window gather feeds a
    single GEMM over zero-embedded kernels (conv_bank), and one batch norm
    covers the concatenated block. Batch-norm statistics never mix channels,
    so per channel this is the same arithmetic as six separate Conv-BN-ReLU
    ops, just without six im2col copies.
    """

    def __init__(self, name: str, index: int, channels: int, stride: int,
                 rng: np.random.Generator, dtype):
        self.index = index
        self.stride = stride
        self.convs = [Conv1d(f"{name}.{op}.conv", channels, channels, k,
                             stride=stride, padding=k // 2, rng=rng, dtype=dtype)
                      for op, k in CONV_KERNELS.items()]
        self.conv_bn = BatchNorm1d(f"{name}.convs.bn", channels * len(self.convs),
                                   affine=False, dtype=dtype)
        self.tail = [make_op(op, channels, stride, False, rng, f"{name}.{op}", dtype)
                     for op in OP_NAMES if op not in CONV_KERNELS]
        self._split_sizes = [channels] * len(self.convs)

    def candidate_outputs(self, x: Tensor, cols: Tensor, *, training: bool,
                          tape: Tape | None) -> list[Tensor]:
        """All candidate op outputs, in score-column order.

        cols is x unfolded at the widest kernel (the cell shares it between
        every edge reading the same state).
        """
        block = ad.bank_from_cols(cols, x.data.shape[1],
                                  [c.weight for c in self.convs], tape=tape)
        block = self.conv_bn(block, training=training, tape=tape)
        block = ad.relu(block, tape)
        outs = ad.split_channels(block, self._split_sizes, tape)
        outs.extend(op(x, training=training, tape=tape) for op in self.tail)
        return outs

    def __call__(self, x: Tensor, cols: Tensor, alpha: Parameter, *,
                 training: bool, tape: Tape | None) -> Tensor:
        w = ad.row_softmax(alpha, self.index, tape)
        outs = self.candidate_outputs(x, cols, training=training, tape=tape)
        return ad.weighted_sum(outs, w, tape)

    def parameters(self) -> Iterator[Parameter]:
        for conv in self.convs:
            yield from conv.parameters()
        for op in self.tail:
            yield from op.parameters()

    def state_arrays(self) -> dict[str, Array]:
        out = dict(self.conv_bn.state_arrays())
        for op in self.tail:
            out.update(op.state_arrays())
        return out


class MixedCell:
    """Dense searchable cell: 2 adapted inputs, 4 intermediates, concat output."""

    def __init__(self, name: str, prev_prev_channels: int, prev_channels: int,
                 channels: int, *, reduction: bool, reduction_prev: bool,
                 rng: np.random.Generator, dtype):
        self.reduction = reduction
        # Input adapters: bare 1x1 convolutions onto this cell's channel
        # count; stride 2 when the state arrives at the pre-reduction length.
        self.pre0 = Conv1d(f"{name}.pre0", prev_prev_channels, channels, 1,
                           stride=2 if reduction_prev else 1, bias=True,
                           rng=rng, dtype=dtype)
        self.pre1 = Conv1d(f"{name}.pre1", prev_channels, channels, 1,
                           stride=1, bias=True, rng=rng, dtype=dtype)
        self.edges: list[MixedEdge] = []
        for node in range(NUM_INPUT_NODES, NUM_INPUT_NODES + NUM_INTERMEDIATE):
            for pred in range(node):
                k = edge_index(pred, node)
                stride = 2 if reduction and pred < NUM_INPUT_NODES else 1
                self.edges.append(MixedEdge(f"{name}.edge{k}", k, channels,
                                            stride, rng, dtype))
        self.out_channels = NUM_INTERMEDIATE * channels

    def __call__(self, s0: Tensor, s1: Tensor, alpha: Parameter, *,
                 training: bool, tape: Tape | None) -> Tensor:
        states = [self.pre0(s0, tape), self.pre1(s1, tape)]
        # One shared window gather per state: every edge leaving a state
        # convolves the same unfolded input.
        cols: list[Tensor] = []

        def unfolded(pred: int) -> Tensor:
            while len(cols) <= pred:
                p = len(cols)
                stride = 2 if self.reduction and p < NUM_INPUT_NODES else 1
                cols.append(ad.unfold(states[p], MAX_CONV_KERNEL, stride=stride,
                                      tape=tape))
            return cols[pred]

        for node in range(NUM_INPUT_NODES, NUM_INPUT_NODES + NUM_INTERMEDIATE):
            acc: Tensor | None = None
            for pred in range(node):
                edge = self.edges[edge_index(pred, node)]
                y = edge(states[pred], unfolded(pred), alpha,
                         training=training, tape=tape)
                acc = y if acc is None else ad.add(acc, y, tape)
            states.append(acc)
        return ad.concat_channels(states[NUM_INPUT_NODES:], tape)

    def parameters(self) -> Iterator[Parameter]:
        yield from self.pre0.parameters()
        yield from self.pre1.parameters()
        for e in self.edges:
            yield from e.parameters()

    def state_arrays(self) -> dict[str, Array]:
        out: dict[str, Array] = {}
        for e in self.edges:
            out.update(e.state_arrays())
        return out


class Supernet:
    """Stem -> stack of mixed cells -> global pooling classifier."""

    def __init__(self, *, leads: int, classes: int, init_channels: int,
                 cells: int, rng: np.random.Generator, dtype=np.float32):
        if cells < 1:
            raise ConfigError(f"need at least one cell, got {cells}")
        self.leads = leads
        self.classes = classes
        self.init_channels = init_channels
        self.num_cells = cells
        self.arch = ArchParams.init(rng, dtype)
        self.stem = Stem("stem", leads, init_channels, rng=rng, dtype=dtype)
        reductions = reduction_indices(cells)
        self.cells: list[MixedCell] = []
        c_pp = c_p = init_channels
        c_curr = init_channels
        reduction_prev = False
        for i in range(cells):
            reduction = i in reductions
            if reduction:
                c_curr *= 2
            cell = MixedCell(f"cell{i}", c_pp, c_p, c_curr, reduction=reduction,
                             reduction_prev=reduction_prev, rng=rng, dtype=dtype)
            self.cells.append(cell)
            c_pp, c_p = c_p, cell.out_channels
            reduction_prev = reduction
        self.classifier = ClassifierHead("classifier", c_p, classes, rng=rng, dtype=dtype)
        self.weight_parameters: list[Parameter] = list(self._iter_weight_params())
        self.arch_parameters: list[Parameter] = list(self.arch.parameters())
        ids = [p.id for p in self.weight_parameters + self.arch_parameters]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise StateError(f"duplicate parameter ids: {dupes}")

    def _iter_weight_params(self) -> Iterator[Parameter]:
        yield from self.stem.parameters()
        for cell in self.cells:
            yield from cell.parameters()
        yield from self.classifier.parameters()

    def forward(self, x: Tensor, *, training: bool, tape: Tape | None = None) -> Tensor:
        s0 = s1 = self.stem(x, training=training, tape=tape)
        for cell in self.cells:
            alpha = self.arch.alpha_reduce if cell.reduction else self.arch.alpha_normal
            s0, s1 = s1, cell(s0, s1, alpha, training=training, tape=tape)
        return self.classifier(s1, tape)

    def state_arrays(self) -> dict[str, Array]:
        out = dict(self.stem.state_arrays())
        for cell in self.cells:
            out.update(cell.state_arrays())
        return out

    def all_parameter_arrays(self) -> dict[str, Array]:
        return {p.id: p.data for p in self.weight_parameters + self.arch_parameters}

    def load_parameter_arrays(self, arrays: dict[str, Array]) -> None:
        mine = {p.id: p for p in self.weight_parameters + self.arch_parameters}
        if set(mine) != set(arrays):
            missing = sorted(set(mine) - set(arrays))
            extra = sorted(set(arrays) - set(mine))
            raise CheckpointError(
                f"parameter set mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
        for pid, p in mine.items():
            a = arrays[pid]
            if a.shape != p.data.shape:
                raise CheckpointError(
                    f"parameter {pid!r} shape mismatch: {a.shape} vs {p.data.shape}")
            p.data = a.astype(p.data.dtype, copy=True)

    def load_state_arrays(self, arrays: dict[str, Array]) -> None:
        mine = self.state_arrays()
        if set(mine) != set(arrays):
            raise CheckpointError("batch-norm running-stat set mismatch")
        for key, target in mine.items():
            target[...] = arrays[key].astype(target.dtype)


@dataclass
class SearchConfig:
    epochs: int = 100
    batch_size: int = 100
    init_channels: int = 16
    cells: int = 8
    seed: int = 0
    classes: int = 5
    weight_lr_max: float = 0.025
    weight_lr_min: float = 0.0
    weight_momentum: float = 0.9
    weight_decay: float = 3e-4
    arch_lr: float = 3e-4
    arch_beta1: float = 0.5
    arch_beta2: float = 0.999
    arch_weight_decay: float = 1e-3
    grad_clip: float = 5.0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch size must be >= 2, got {self.batch_size}")
        if self.init_channels < 1:
            raise ConfigError(f"init_channels must be >= 1, got {self.init_channels}")
        if self.cells < 3:
            raise ConfigError(f"search needs at least 3 cells, got {self.cells}")
        if self.classes < 2:
            raise ConfigError(f"classes must be >= 2, got {self.classes}")


@dataclass
class SearchState:
    epoch: int = 0
    val_cursor: int = 0
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    alpha_normal_history: list[Array] = field(default_factory=list)
    alpha_reduce_history: list[Array] = field(default_factory=list)


class SearchRun:
    """Owns the supernet, optimizers, rng, and per-epoch history for a search."""

    def __init__(self, config: SearchConfig, dataset, *, dtype=np.float32):
        config.validate()
        self.config = config
        self.dataset = dataset
        self.dtype = np.dtype(dtype)
        from .pipeline import SPLIT_SEARCH_TRAIN, SPLIT_SEARCH_VAL
        self._train_idx = dataset.indices_for(SPLIT_SEARCH_TRAIN)
        self._val_idx = dataset.indices_for(SPLIT_SEARCH_VAL)
        if len(self._train_idx) == 0 or len(self._val_idx) == 0:
            raise ConfigError("dataset is missing search_train or search_val beats")
        self.rng = np.random.Generator(np.random.PCG64(config.seed))
        self.net = Supernet(leads=dataset.leads, classes=config.classes,
                            init_channels=config.init_channels, cells=config.cells,
                            rng=self.rng, dtype=dtype)
        self.opt_w = MomentumSgd(config.weight_lr_max, config.weight_momentum,
                                 config.weight_decay)
        self.opt_a = AdaptiveMoments(config.arch_lr,
                                     (config.arch_beta1, config.arch_beta2),
                                     config.arch_weight_decay)
        self.state = SearchState()

    def _next_val_batch(self, size: int) -> Array:
        n = len(self._val_idx)
        c = self.state.val_cursor
        picks = self._val_idx[(c + np.arange(size)) % n]
        self.state.val_cursor = int((c + size) % n)
        return picks

    def _batch(self, ids: Array) -> tuple[Tensor, Array]:
        x = self.dataset.windows[ids].astype(self.dtype, copy=False)
        y = self.dataset.labels[ids].astype(np.int64)
        return Tensor(x), y

    def step(self, train_ids: Array, val_ids: Array) -> tuple[float, float]:
        """One alternating update; returns (train loss, val loss)."""
        net = self.net
        xv, yv = self._batch(val_ids)
        with frozen(net.weight_parameters):
            tape = Tape()
            logits = net.forward(xv, training=True, tape=tape)
            val_loss = ad.cross_entropy(logits, yv, tape)
            backward(val_loss, tape, parameters=net.arch_parameters)
            self.opt_a.step(net.arch_parameters)
        xt, yt = self._batch(train_ids)
        with frozen(net.arch_parameters):
            tape = Tape()
            logits = net.forward(xt, training=True, tape=tape)
            train_loss = ad.cross_entropy(logits, yt, tape)
            backward(train_loss, tape, parameters=net.weight_parameters)
            clip_grad_norm(net.weight_parameters, self.config.grad_clip)
            self.opt_w.step(net.weight_parameters)
        tl, vl = float(train_loss.data), float(val_loss.data)
        if not (np.isfinite(tl) and np.isfinite(vl)):
            raise StateError(
                f"non-finite loss at epoch {self.state.epoch} (train {tl}, val {vl})")
        return tl, vl

    def run_epoch(self) -> None:
        cfg = self.config
        self.opt_w.lr = cosine_lr(self.state.epoch, cfg.epochs, cfg.weight_lr_max,
                                  cfg.weight_lr_min)
        perm = self.rng.permutation(len(self._train_idx))
        tl_sum = vl_sum = 0.0
        steps = 0
        for start in range(0, len(perm), cfg.batch_size):
            train_ids = self._train_idx[perm[start:start + cfg.batch_size]]
            val_ids = self._next_val_batch(len(train_ids))
            tl, vl = self.step(train_ids, val_ids)
            tl_sum += tl
            vl_sum += vl
            steps += 1
        self.state.train_loss.append(tl_sum / steps)
        self.state.val_loss.append(vl_sum / steps)
        self.state.alpha_normal_history.append(self.net.arch.alpha_normal.data.copy())
        self.state.alpha_reduce_history.append(self.net.arch.alpha_reduce.data.copy())
        self.state.epoch += 1

    def run(self, epochs: int | None = None) -> None:
        target = self.config.epochs if epochs is None else self.state.epoch + epochs
        while self.state.epoch < target:
            self.run_epoch()

    def genotype(self) -> Genotype:
        return discretize(self.net.arch.alpha_normal.data,
                          self.net.arch.alpha_reduce.data)

    # -- checkpointing ------------------------------------------------------

    def checkpoint(self) -> bytes:
        w = Writer()
        w.magic(_CHECKPOINT_MAGIC, _CHECKPOINT_VERSION)
        echo = {"config": asdict(self.config), "leads": self.dataset.leads,
                "window_len": self.dataset.window_len, "dtype": self.dtype.name}
        w.json_obj(echo)
        w.u32(self.state.epoch)
        w.u64(self.state.val_cursor)
        w.string(json.dumps(self.rng.bit_generator.state))
        w.array(np.asarray(self.state.train_loss, dtype=np.float64))
        w.array(np.asarray(self.state.val_loss, dtype=np.float64))
        hist = {}
        for e, a in enumerate(self.state.alpha_normal_history):
            hist[f"alpha_normal.{e}"] = a
        for e, a in enumerate(self.state.alpha_reduce_history):
            hist[f"alpha_reduce.{e}"] = a
        w.named_arrays(hist)
        w.named_arrays(self.net.all_parameter_arrays())
        w.named_arrays(self.net.state_arrays())
        w.u64(self.opt_w.step_count)
        w.named_arrays(self.opt_w.state_arrays())
        w.u64(self.opt_a.step_count)
        w.named_arrays(self.opt_a.state_arrays())
        return w.getvalue()

    @classmethod
    def restore(cls, blob: bytes, dataset) -> "SearchRun":
        r = Reader(blob, CheckpointError, "checkpoint")
        r.magic(_CHECKPOINT_MAGIC, _CHECKPOINT_VERSION)
        echo = r.json_obj()
        config = SearchConfig(**echo["config"])
        if echo["leads"] != dataset.leads or echo["window_len"] != dataset.window_len:
            raise CheckpointError(
                f"checkpoint was built for leads={echo['leads']}, window={echo['window_len']}; "
                f"dataset has leads={dataset.leads}, window={dataset.window_len}")
        run = cls(config, dataset, dtype=np.dtype(echo["dtype"]))
        run.state.epoch = r.u32()
        run.state.val_cursor = int(r.u64())
        rng_state = json.loads(r.string())
        run.state.train_loss = [float(v) for v in r.array()]
        run.state.val_loss = [float(v) for v in r.array()]
        hist = r.named_arrays()
        run.state.alpha_normal_history = [
            hist[f"alpha_normal.{e}"] for e in range(run.state.epoch)]
        run.state.alpha_reduce_history = [
            hist[f"alpha_reduce.{e}"] for e in range(run.state.epoch)]
        if len(hist) != 2 * run.state.epoch:
            raise CheckpointError("alpha history does not match the epoch counter")
        run.net.load_parameter_arrays(r.named_arrays())
        run.net.load_state_arrays(r.named_arrays())
        run.opt_w.step_count = int(r.u64())
        run.opt_w.load_state_arrays(r.named_arrays())
        run.opt_a.step_count = int(r.u64())
        run.opt_a.load_state_arrays(r.named_arrays())
        r.expect_eof()
        run.rng.bit_generator.state = rng_state
        return run


def run_search(config: SearchConfig, dataset) -> tuple[Genotype, SearchState]:
    """Search to config.epochs and return the discretized winner plus history."""
    run = SearchRun(config, dataset)
    run.run()
    return run.genotype(), run.state


def read_checkpoint_alphas(blob: bytes) -> tuple[Array, Array]:
    """Pull just the current mixing scores out of a checkpoint."""
    r = Reader(blob, CheckpointError, "checkpoint")
    r.magic(_CHECKPOINT_MAGIC, _CHECKPOINT_VERSION)
    r.json_obj()
    r.u32()
    r.u64()
    r.string()
    r.array()
    r.array()
    r.named_arrays()
    params = r.named_arrays()
    try:
        return params["alpha.normal"], params["alpha.reduce"]
    except KeyError as e:
        raise CheckpointError(f"checkpoint is missing {e.args[0]!r}") from None
