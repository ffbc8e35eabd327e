"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor is a thin wrapper around an ndarray. Differentiable operations are
plain functions that compute the forward value eagerly and, when handed a
Tape, append a backward closure to it. backward() replays the tape in reverse
topological order (which is simply reverse recording order) and accumulates
gradients into .grad buffers. There is no global state: whoever runs the
forward pass owns the tape.

Only the operations the 1-D convolutional search networks need are provided.
Convolution is implemented as an im2col windowed view contracted with
np.tensordot so the heavy lifting stays inside BLAS.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InputError, ShapeError, StateError, StatisticsError

Array = np.ndarray

WEIGHT_GROUP = "weight"
ARCH_GROUP = "arch"
_GROUPS = (WEIGHT_GROUP, ARCH_GROUP)


class Tensor:
    """Value node. Gradients appear in .grad after backward()."""

    __slots__ = ("data", "grad", "requires_grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._tape: "Tape | None" = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _accumulate(self, g: Array) -> None:
        # Copy on first write: closures may hand us a buffer shared with
        # another tensor's gradient (add passes its upstream grad through).
        if self.grad is None:
            self.grad = np.array(g, copy=True)
        else:
            self.grad += g

    def _accumulate_owned(self, g: Array) -> None:
        # Backward closures that just built g and hand it over call this to
        # skip the defensive copy. Never pass a buffer shared with another
        # tensor's gradient.
        if self.grad is None:
            self.grad = g
        else:
            self.grad += g

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


class Parameter(Tensor):
    """Trainable tensor with a stable id and an update group."""

    __slots__ = ("id", "group")

    def __init__(self, data, id: str, group: str = WEIGHT_GROUP):
        super().__init__(data, requires_grad=True)
        if group not in _GROUPS:
            raise InputError(f"unknown parameter group {group!r}")
        self.id = id
        self.group = group

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Parameter({self.id!r}, shape={self.data.shape}, group={self.group})"


class Tape:
    """Linear record of one forward pass. Single use: backward() spends it."""

    __slots__ = ("_records", "_spent")

    def __init__(self):
        self._records: list[tuple[Tensor, Callable[[Array], None]]] = []
        self._spent = False

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, backward_fn: Callable[[Array], None]) -> None:
        if self._spent:
            raise StateError("tape already consumed by backward(); build a new one")
        out._tape = self
        self._records.append((out, backward_fn))


def _result(tape: Tape | None, inputs: Sequence[Tensor], data: Array,
            make_backward) -> Tensor:
    """Wrap an op result, recording a backward closure when needed."""
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, make_backward(out))
    return out


def backward(loss: Tensor, tape: Tape, parameters: Iterable[Parameter] = ()) -> None:
    """Propagate d(loss)/d(everything recorded on tape).

    Gradients of `parameters` are zeroed first, so parameters the loss never
    touched end the call with exact zero grads rather than stale ones.
    """
    if tape is None or loss._tape is not tape:
        raise StateError("loss was not produced by operations on this tape")
    if tape._spent:
        raise StateError("tape already consumed by backward(); rerun the forward pass")
    if loss.data.size != 1:
        raise InputError(f"loss must be scalar, got shape {loss.data.shape}")
    for p in parameters:
        p.grad = np.zeros_like(p.data)
    loss.grad = np.ones_like(loss.data)
    for out, fn in reversed(tape._records):
        if out.grad is not None:
            fn(out.grad)
    tape._spent = True


def zero_grads(parameters: Iterable[Parameter]) -> None:
    for p in parameters:
        p.grad = None


class frozen:
    """Context manager: temporarily drop requires_grad on a parameter group.

    Used by the alternating search step so the pass that only updates the
    architecture does not waste time computing weight gradients (and vice
    versa). Has no effect on values, just skips gradient work.
    """

    def __init__(self, parameters: Sequence[Parameter]):
        self._params = list(parameters)

    def __enter__(self):
        for p in self._params:
            p.requires_grad = False
        return self

    def __exit__(self, *exc):
        for p in self._params:
            p.requires_grad = True
        return False


def _require_rank3(x: Tensor, op: str) -> None:
    if x.data.ndim != 3:
        raise ShapeError(f"{op} expects [batch, channels, length], got shape {x.data.shape}")


def _windows(xp: Array, kernel: int, stride: int) -> Array:
    """[b, c, Lp] -> read-only view [b, c, Lout, kernel] of sliding windows."""
    b, c, lp = xp.shape
    lout = (lp - kernel) // stride + 1
    sb, sc, sl = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=(b, c, lout, kernel), strides=(sb, sc, sl * stride, sl),
        writeable=False)


def _zero_pad(data: Array, padding: int, fill: float = 0.0) -> Array:
    if padding == 0:
        return data
    b, c, lin = data.shape
    xp = np.full((b, c, lin + 2 * padding), fill, dtype=data.dtype)
    xp[:, :, padding:padding + lin] = data
    return xp


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, *,
           stride: int = 1, padding: int = 0, tape: Tape | None = None) -> Tensor:
    """1-D cross-correlation. weight: [out_ch, in_ch, kernel]."""
    _require_rank3(x, "conv1d")
    if weight.data.ndim != 3:
        raise ShapeError(f"conv1d weight must be [out, in, kernel], got {weight.data.shape}")
    if stride < 1 or padding < 0:
        raise InputError(f"conv1d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    b, cin, lin = x.data.shape
    cout, win, k = weight.data.shape
    if win != cin:
        raise ShapeError(f"conv1d channel mismatch: input has {cin}, weight expects {win}")
    lout = (lin + 2 * padding - k) // stride + 1
    if lin + 2 * padding < k or lout < 1:
        raise ShapeError(
            f"conv1d output empty: length {lin}, kernel {k}, stride {stride}, padding {padding}")
    if bias is not None and bias.data.shape != (cout,):
        raise ShapeError(f"conv1d bias must be [{cout}], got {bias.data.shape}")

    xp = _zero_pad(x.data, padding)
    view = _windows(xp, k, stride)
    out = np.tensordot(view, weight.data, axes=([1, 3], [1, 2]))  # [b, Lout, cout]
    out = np.ascontiguousarray(out.transpose(0, 2, 1))
    if bias is not None:
        out += bias.data[None, :, None]

    inputs = [x, weight] if bias is None else [x, weight, bias]

    def make_backward(out_t: Tensor):
        def bw(go: Array) -> None:
            if weight.requires_grad:
                # gW[o,c,t] = sum_{b,l} go[b,o,l] * window[b,c,l,t]
                gw = np.tensordot(go, view, axes=([0, 2], [0, 2]))
                weight._accumulate_owned(gw)
            if bias is not None and bias.requires_grad:
                bias._accumulate_owned(go.sum(axis=(0, 2)))
            if x.requires_grad:
                # Transposed conv: dilate go by stride, pad by k-1 (+ right
                # remainder so lengths line up), correlate with the
                # tap-flipped, io-transposed kernel.
                r = (lin + 2 * padding - k) - stride * (lout - 1)
                ld = stride * (lout - 1) + 1
                godp = np.zeros((b, cout, ld + 2 * (k - 1) + r), dtype=go.dtype)
                godp[:, :, k - 1:k - 1 + ld:stride] = go
                gview = _windows(godp, k, 1)
                wf = weight.data[:, :, ::-1]
                gxp = np.tensordot(gview, wf, axes=([1, 3], [0, 2]))  # [b, Lp, cin]
                gxp = gxp.transpose(0, 2, 1)
                gx = gxp[:, :, padding:padding + lin] if padding else gxp
                x._accumulate_owned(gx)
        return bw

    return _result(tape, inputs, out, make_backward)


def maxpool1d(x: Tensor, kernel: int, *, stride: int = 1, padding: int = 0,
              tape: Tape | None = None) -> Tensor:
    """Max pooling; ties go to the first (leftmost) index in the window."""
    _require_rank3(x, "maxpool1d")
    if stride < 1 or padding < 0 or kernel < 1:
        raise InputError(
            f"maxpool1d needs kernel, stride >= 1 and padding >= 0, got {kernel}, {stride}, {padding}")
    b, c, lin = x.data.shape
    lout = (lin + 2 * padding - kernel) // stride + 1
    if lin + 2 * padding < kernel or lout < 1:
        raise ShapeError(
            f"maxpool1d output empty: length {lin}, kernel {kernel}, stride {stride}, padding {padding}")
    xp = _zero_pad(x.data, padding, fill=-np.inf)
    view = _windows(xp, kernel, stride)
    out = view[..., 0].copy()
    record = tape is not None and x.requires_grad
    if not record:
        for t in range(1, kernel):
            np.maximum(out, view[..., t], out=out)
        return Tensor(out)

    # Running max with the winning tap tracked; strict greater-than keeps the
    # leftmost window position on ties, matching argmax.
    arg = np.zeros(out.shape, dtype=np.int8)
    better = np.empty(out.shape, dtype=bool)
    for t in range(1, kernel):
        cur = view[..., t]
        np.greater(cur, out, out=better)
        np.maximum(out, cur, out=out)
        arg[better] = t

    def make_backward(out_t: Tensor):
        lp = lin + 2 * padding

        def bw(go: Array) -> None:
            if not x.requires_grad:
                return
            starts = np.arange(lout) * stride
            pos = starts[None, None, :] + arg  # [b, c, Lout] indices into Lp
            base = (np.arange(b * c) * lp).reshape(b, c, 1)
            flat = np.bincount((base + pos).ravel(), weights=go.ravel(),
                               minlength=b * c * lp)
            gxp = flat.reshape(b, c, lp).astype(go.dtype, copy=False)
            gx = gxp[:, :, padding:padding + lin] if padding else gxp
            x._accumulate_owned(gx)
        return bw

    return _result(tape, [x], out, make_backward)


def unfold(x: Tensor, kernel: int, *, stride: int = 1,
           tape: Tape | None = None) -> Tensor:
    """Gather half-padded odd-kernel windows: [b, c, L] -> [b, Lout, c*kernel].

    The output is the im2col matrix every same-padding convolution up to
    `kernel` wide can be computed from. Several convolutions reading the same
    input share one unfold, which is why this is separate from bank_from_cols.
    """
    _require_rank3(x, "unfold")
    if kernel < 1 or kernel % 2 == 0:
        raise InputError(f"unfold kernel must be odd and positive, got {kernel}")
    if stride < 1:
        raise InputError(f"unfold needs stride >= 1, got {stride}")
    b, cin, lin = x.data.shape
    pad = kernel // 2
    lout = (lin - 1) // stride + 1

    xp = _zero_pad(x.data, pad)
    view = _windows(xp, kernel, stride)  # [b, cin, Lout, kernel]
    cols = np.ascontiguousarray(view.transpose(0, 2, 1, 3)).reshape(b, lout, cin * kernel)

    def make_backward(out_t: Tensor):
        def bw(go: Array) -> None:
            if not x.requires_grad:
                return
            # col2im: overlap-add every window column back onto the padded
            # input. The reorder makes each slice in the loop contiguous
            # along the length axis.
            g = go.reshape(b, lout, cin, kernel)
            g = np.ascontiguousarray(g.transpose(0, 2, 3, 1))
            gxp = np.zeros((b, cin, lin + 2 * pad), dtype=go.dtype)
            end = stride * (lout - 1) + 1
            for t in range(kernel):
                gxp[:, :, t:t + end:stride] += g[:, :, t, :]
            x._accumulate_owned(gxp[:, :, pad:pad + lin])
        return bw

    return _result(tape, [x], cols, make_backward)


def bank_from_cols(cols: Tensor, in_channels: int, weights: Sequence[Tensor], *,
                   tape: Tape | None = None) -> Tensor:
    """Apply a bank of odd-kernel convolutions to unfolded windows.

    cols: [b, Lout, in_channels * kmax] from unfold(). Every kernel is
    zero-embedded to kmax taps so the whole bank is a single GEMM; outputs
    are concatenated along the channel axis, in the order the weights were
    given. Identical arithmetic to running each same-padding conv1d alone.
    """
    if cols.data.ndim != 3:
        raise ShapeError(f"bank_from_cols expects unfolded [b, Lout, c*k], got {cols.data.shape}")
    if not weights:
        raise InputError("bank_from_cols needs at least one kernel")
    b, lout, ck = cols.data.shape
    if in_channels < 1 or ck % in_channels:
        raise ShapeError(
            f"unfolded width {ck} is not a multiple of in_channels {in_channels}")
    kmax = ck // in_channels
    kernels = []
    for w in weights:
        if w.data.ndim != 3 or w.data.shape[1] != in_channels:
            raise ShapeError(
                f"bank weight must be [out, {in_channels}, kernel], got {w.data.shape}")
        k = w.data.shape[2]
        if k % 2 == 0 or k > kmax:
            raise InputError(f"bank kernels must be odd and at most {kmax}, got {k}")
        kernels.append(k)
    ctot = sum(w.data.shape[0] for w in weights)

    wide = np.zeros((ctot, in_channels, kmax), dtype=cols.data.dtype)
    row = 0
    for w, k in zip(weights, kernels):
        off = (kmax - k) // 2
        wide[row:row + w.data.shape[0], :, off:off + k] = w.data
        row += w.data.shape[0]
    wide2 = wide.reshape(ctot, ck)
    cols2 = cols.data.reshape(b * lout, ck)
    out = cols2 @ wide2.T  # [b*Lout, ctot]
    out = np.ascontiguousarray(out.reshape(b, lout, ctot).transpose(0, 2, 1))

    def make_backward(out_t: Tensor):
        def bw(go: Array) -> None:
            go2 = np.ascontiguousarray(go.transpose(0, 2, 1)).reshape(b * lout, ctot)
            if any(w.requires_grad for w in weights):
                gw_wide = (go2.T @ cols2).reshape(ctot, in_channels, kmax)
                row = 0
                for w, k in zip(weights, kernels):
                    n = w.data.shape[0]
                    if w.requires_grad:
                        off = (kmax - k) // 2
                        w._accumulate_owned(gw_wide[row:row + n, :, off:off + k])
                    row += n
            if cols.requires_grad:
                cols._accumulate_owned((go2 @ wide2).reshape(b, lout, ck))
        return bw

    return _result(tape, [cols, *weights], out, make_backward)


def conv_bank(x: Tensor, weights: Sequence[Tensor], *, stride: int = 1,
              tape: Tape | None = None) -> Tensor:
    """Run several odd-kernel, half-padded convolutions of one input and
    concatenate their outputs along the channel axis.

    Equivalent to conv1d(x, w, stride=stride, padding=k//2) per weight
    followed by concat_channels. Composition of unfold and bank_from_cols;
    callers with several banks over one input should compose them directly
    so the unfold is shared.
    """
    _require_rank3(x, "conv_bank")
    kmax = max(w.data.shape[2] for w in weights) if weights else 1
    cols = unfold(x, kmax, stride=stride, tape=tape)
    return bank_from_cols(cols, x.data.shape[1], weights, tape=tape)


def split_channels(x: Tensor, sizes: Sequence[int],
                   tape: Tape | None = None) -> list[Tensor]:
    """Slice a [b, c, L] tensor into blocks along the channel axis."""
    _require_rank3(x, "split_channels")
    if sum(sizes) != x.data.shape[1]:
        raise ShapeError(
            f"split_channels sizes sum to {sum(sizes)}, tensor has {x.data.shape[1]} channels")
    if any(s < 1 for s in sizes):
        raise InputError("split_channels sizes must be positive")
    outs = []
    lo = 0
    for size in sizes:
        hi = lo + size
        part = x.data[:, lo:hi, :]

        def make_backward(out_t: Tensor, lo=lo, hi=hi):
            def bw(go: Array) -> None:
                if not x.requires_grad:
                    return
                if x.grad is None:
                    x.grad = np.zeros_like(x.data)
                x.grad[:, lo:hi, :] += go
            return bw

        outs.append(_result(tape, [x], part, make_backward))
        lo = hi
    return outs


def relu(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = np.maximum(x.data, np.asarray(0, dtype=x.data.dtype))

    def make_backward(out_t: Tensor):
        mask = x.data > 0

        def bw(go: Array) -> None:
            if x.requires_grad:
                x._accumulate_owned(go * mask)
        return bw

    return _result(tape, [x], out, make_backward)


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Elementwise sum; shapes must match exactly (no broadcasting)."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")

    def make_backward(out_t: Tensor):
        def bw(go: Array) -> None:
            if a.requires_grad:
                a._accumulate(go)
            if b.requires_grad:
                b._accumulate(go)
        return bw

    return _result(tape, [a, b], a.data + b.data, make_backward)


def concat_channels(parts: Sequence[Tensor], tape: Tape | None = None) -> Tensor:
    """Concatenate [b, c_i, L] tensors along the channel axis."""
    if not parts:
        raise InputError("concat_channels needs at least one tensor")
    for p in parts:
        _require_rank3(p, "concat_channels")
    b, _, length = parts[0].data.shape
    for p in parts[1:]:
        pb, _, pl = p.data.shape
        if pb != b or pl != length:
            raise ShapeError(
                f"concat_channels batch/length mismatch: {parts[0].data.shape} vs {p.data.shape}")
    out = np.concatenate([p.data for p in parts], axis=1)
    bounds = np.cumsum([0] + [p.data.shape[1] for p in parts])

    def make_backward(out_t: Tensor):
        def bw(go: Array) -> None:
            for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
                if p.requires_grad:
                    p._accumulate_owned(go[:, lo:hi, :])
        return bw

    return _result(tape, list(parts), out, make_backward)


def global_avgpool(x: Tensor, tape: Tape | None = None) -> Tensor:
    """[b, c, L] -> [b, c, 1], mean over the length axis."""
    _require_rank3(x, "global_avgpool")
    length = x.data.shape[2]
    out = x.data.mean(axis=2, keepdims=True)

    def make_backward(out_t: Tensor):
        def bw(go: Array) -> None:
            if x.requires_grad:
                x._accumulate(np.broadcast_to(go / length, x.data.shape))
        return bw

    return _result(tape, [x], out, make_backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None, *,
           tape: Tape | None = None) -> Tensor:
    """Flatten [b, c, L] to features and apply weight [out, c*L] (+ bias)."""
    _require_rank3(x, "linear")
    b, c, length = x.data.shape
    feats = c * length
    if weight.data.ndim != 2 or weight.data.shape[1] != feats:
        raise ShapeError(
            f"linear weight must be [out, {feats}] for input {x.data.shape}, got {weight.data.shape}")
    nout = weight.data.shape[0]
    if bias is not None and bias.data.shape != (nout,):
        raise ShapeError(f"linear bias must be [{nout}], got {bias.data.shape}")
    x2 = x.data.reshape(b, feats)
    out = x2 @ weight.data.T
    if bias is not None:
        out = out + bias.data[None, :]
    inputs = [x, weight] if bias is None else [x, weight, bias]

    def make_backward(out_t: Tensor):
        def bw(go3: Array) -> None:
            go = go3.reshape(b, nout)
            if weight.requires_grad:
                weight._accumulate_owned(go.T @ x2)
            if bias is not None and bias.requires_grad:
                bias._accumulate_owned(go.sum(axis=0))
            if x.requires_grad:
                x._accumulate_owned((go @ weight.data).reshape(b, c, length))
        return bw

    return _result(tape, inputs, out.reshape(b, nout, 1), make_backward)


def softmax(v: Array) -> Array:
    """Numerically stable softmax over the last axis (plain numpy, no tape)."""
    v = np.asarray(v)
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def row_softmax(alpha: Tensor, row: int, tape: Tape | None = None) -> Tensor:
    """Differentiable softmax of one row of a rank-2 tensor -> rank-1 weights."""
    if alpha.data.ndim != 2:
        raise ShapeError(f"row_softmax expects a rank-2 tensor, got {alpha.data.shape}")
    if not 0 <= row < alpha.data.shape[0]:
        raise InputError(f"row {row} out of range for shape {alpha.data.shape}")
    s = softmax(alpha.data[row])

    def make_backward(out_t: Tensor):
        def bw(go: Array) -> None:
            if alpha.requires_grad:
                grow = s * (go - float(go @ s))
                ga = np.zeros_like(alpha.data)
                ga[row] = grow
                alpha._accumulate_owned(ga)
        return bw

    return _result(tape, [alpha], s, make_backward)


def weighted_sum(parts: Sequence[Tensor], weights: Tensor,
                 tape: Tape | None = None) -> Tensor:
    """sum_i weights[i] * parts[i], accumulated left to right.

    The explicit loop keeps summation order fixed, which both determinism and
    the exact-match mixing oracle in the tests rely on.
    """
    if weights.data.ndim != 1 or weights.data.shape[0] != len(parts):
        raise ShapeError(
            f"weighted_sum needs {len(parts)} weights, got shape {weights.data.shape}")
    if not parts:
        raise InputError("weighted_sum needs at least one tensor")
    shape = parts[0].data.shape
    for p in parts[1:]:
        if p.data.shape != shape:
            raise ShapeError(f"weighted_sum shape mismatch: {shape} vs {p.data.shape}")
    w = weights.data
    out = w[0] * parts[0].data
    for i in range(1, len(parts)):
        out += w[i] * parts[i].data

    def make_backward(out_t: Tensor):
        def bw(go: Array) -> None:
            for i, p in enumerate(parts):
                if p.requires_grad:
                    p._accumulate_owned(w[i] * go)
            if weights.requires_grad:
                gw = np.array([np.vdot(go, p.data) for p in parts], dtype=w.dtype)
                weights._accumulate_owned(gw)
        return bw

    return _result(tape, [*parts, weights], out, make_backward)


def zeros_like_strided(x: Tensor, stride: int = 1, tape: Tape | None = None) -> Tensor:
    """The "zero" candidate op: all-zeros output at the strided length.

    Constant output, so nothing is recorded and no gradient flows to x.
    """
    _require_rank3(x, "zeros_like_strided")
    if stride < 1:
        raise InputError(f"stride must be >= 1, got {stride}")
    b, c, lin = x.data.shape
    lout = (lin - 1) // stride + 1
    return Tensor(np.zeros((b, c, lout), dtype=x.data.dtype))


def batchnorm1d(x: Tensor, gamma: Tensor | None, beta: Tensor | None,
                running_mean: Array, running_var: Array, *, training: bool,
                eps: float = 1e-5, momentum: float = 0.1,
                tape: Tape | None = None) -> Tensor:
    """Per-channel batch normalization over (batch, length).

    In training mode the batch statistics normalize and the running stats are
    updated in place (unbiased variance, as torch does). In eval mode the
    running stats normalize.
    """
    _require_rank3(x, "batchnorm1d")
    b, c, length = x.data.shape
    if running_mean.shape != (c,) or running_var.shape != (c,):
        raise ShapeError(f"running stats must be [{c}], got {running_mean.shape}, {running_var.shape}")
    for name, t in (("gamma", gamma), ("beta", beta)):
        if t is not None and t.data.shape != (c,):
            raise ShapeError(f"{name} must be [{c}], got {t.data.shape}")
    n = b * length
    if training:
        if n < 2:
            raise StatisticsError(
                f"batchnorm1d needs at least 2 values per channel in training mode, got {n}")
        mean = x.data.mean(axis=(0, 2))
        xc = x.data - mean[None, :, None]
        var = np.mean(xc * xc, axis=(0, 2))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * (var * (n / (n - 1)))
    else:
        mean = running_mean
        var = running_var
        xc = x.data - mean[None, :, None]
    invstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * invstd[None, :, None]
    out = xhat
    if gamma is not None:
        out = out * gamma.data[None, :, None]
    if beta is not None:
        out = out + beta.data[None, :, None]

    inputs = [t for t in (x, gamma, beta) if t is not None]

    def make_backward(out_t: Tensor):
        def bw(go: Array) -> None:
            if gamma is not None and gamma.requires_grad:
                gamma._accumulate_owned((go * xhat).sum(axis=(0, 2)))
            if beta is not None and beta.requires_grad:
                beta._accumulate_owned(go.sum(axis=(0, 2)))
            if not x.requires_grad:
                return
            gxhat = go if gamma is None else go * gamma.data[None, :, None]
            if training:
                s1 = gxhat.sum(axis=(0, 2), keepdims=True)
                s2 = (gxhat * xhat).sum(axis=(0, 2), keepdims=True)
                gx = (gxhat - s1 / n - xhat * (s2 / n)) * invstd[None, :, None]
            else:
                gx = gxhat * invstd[None, :, None]
            x._accumulate_owned(gx)
        return bw

    return _result(tape, inputs, out, make_backward)


def cross_entropy(logits: Tensor, labels: Array, tape: Tape | None = None) -> Tensor:
    """Mean softmax cross-entropy. logits: [b, classes, 1], labels: int [b]."""
    _require_rank3(logits, "cross_entropy")
    b, k, tail = logits.data.shape
    if tail != 1:
        raise ShapeError(f"cross_entropy expects [batch, classes, 1], got {logits.data.shape}")
    y = np.asarray(labels)
    if y.shape != (b,):
        raise ShapeError(f"labels must be [{b}], got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise InputError(f"labels must be integers, got dtype {y.dtype}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise InputError(f"labels must lie in [0, {k}), got range [{y.min()}, {y.max()}]")
    z = logits.data[:, :, 0]
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    lse = np.log(ez.sum(axis=1)) + zmax[:, 0]
    picked = z[np.arange(b), y]
    loss = (lse - picked).mean()

    def make_backward(out_t: Tensor):
        probs = ez / ez.sum(axis=1, keepdims=True)

        def bw(go: Array) -> None:
            if logits.requires_grad:
                g = probs.copy()
                g[np.arange(b), y] -= 1.0
                g *= float(go) / b
                logits._accumulate_owned(g[:, :, None])
        return bw

    return _result(tape, [logits], np.asarray(loss, dtype=logits.data.dtype),
                   make_backward)
