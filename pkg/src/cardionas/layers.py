"""Parameterized layers composing the functional ops in autodiff.py.

Layers own Parameters (with hierarchical string ids, e.g.
"cell3.edge7.conv5.weight") plus any non-trainable state such as batch-norm
running statistics. Initialization draws from an injected numpy Generator so
builds are reproducible from a seed alone.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Tensor

Array = np.ndarray


class Conv1d:
    def __init__(self, name: str, in_channels: int, out_channels: int, kernel: int,
                 *, stride: int = 1, padding: int = 0, bias: bool = False,
                 rng: np.random.Generator, dtype=np.float32, group: str = ad.WEIGHT_GROUP):
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_channels, in_channels, kernel))
        self.weight = Parameter(w.astype(dtype), id=f"{name}.weight", group=group)
        self.bias = None
        if bias:
            self.bias = Parameter(np.zeros(out_channels, dtype=dtype),
                                  id=f"{name}.bias", group=group)

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        return ad.conv1d(x, self.weight, self.bias, stride=self.stride,
                         padding=self.padding, tape=tape)

    def parameters(self) -> Iterator[Parameter]:
        yield self.weight
        if self.bias is not None:
            yield self.bias


class BatchNorm1d:
    def __init__(self, name: str, channels: int, *, affine: bool = True,
                 eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32):
        self.eps = eps
        self.momentum = momentum
        self.gamma = None
        self.beta = None
        if affine:
            self.gamma = Parameter(np.ones(channels, dtype=dtype), id=f"{name}.gamma")
            self.beta = Parameter(np.zeros(channels, dtype=dtype), id=f"{name}.beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._name = name

    def __call__(self, x: Tensor, *, training: bool, tape: Tape | None = None) -> Tensor:
        return ad.batchnorm1d(x, self.gamma, self.beta, self.running_mean,
                              self.running_var, training=training, eps=self.eps,
                              momentum=self.momentum, tape=tape)

    def parameters(self) -> Iterator[Parameter]:
        if self.gamma is not None:
            yield self.gamma
            yield self.beta

    def state_arrays(self) -> dict[str, Array]:
        return {f"{self._name}.running_mean": self.running_mean,
                f"{self._name}.running_var": self.running_var}


class Linear:
    def __init__(self, name: str, in_features: int, out_features: int, *,
                 bias: bool = True, rng: np.random.Generator, dtype=np.float32):
        w = rng.normal(0.0, np.sqrt(2.0 / in_features), size=(out_features, in_features))
        self.weight = Parameter(w.astype(dtype), id=f"{name}.weight")
        self.bias = None
        if bias:
            self.bias = Parameter(np.zeros(out_features, dtype=dtype), id=f"{name}.bias")

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        return ad.linear(x, self.weight, self.bias, tape=tape)

    def parameters(self) -> Iterator[Parameter]:
        yield self.weight
        if self.bias is not None:
            yield self.bias


class MaxPool1d:
    def __init__(self, kernel: int, *, stride: int = 1, padding: int = 0):
        self.kernel = kernel
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        return ad.maxpool1d(x, self.kernel, stride=self.stride,
                            padding=self.padding, tape=tape)


class Stem:
    """Shared network entry: conv(k=5, s=2) -> BN -> ReLU -> maxpool(k=3, s=2).

    With "same"-style padding (k // 2) this quarters the input length, e.g.
    300 -> 150 -> 75.
    """

    def __init__(self, name: str, in_channels: int, out_channels: int, *,
                 rng: np.random.Generator, dtype=np.float32):
        self.conv = Conv1d(f"{name}.conv", in_channels, out_channels, 5,
                           stride=2, padding=2, rng=rng, dtype=dtype)
        self.bn = BatchNorm1d(f"{name}.bn", out_channels, affine=True, dtype=dtype)
        self.pool = MaxPool1d(3, stride=2, padding=1)

    def __call__(self, x: Tensor, *, training: bool, tape: Tape | None = None) -> Tensor:
        h = self.conv(x, tape)
        h = self.bn(h, training=training, tape=tape)
        h = ad.relu(h, tape)
        return self.pool(h, tape)

    def parameters(self) -> Iterator[Parameter]:
        yield from self.conv.parameters()
        yield from self.bn.parameters()

    def state_arrays(self) -> dict[str, Array]:
        return self.bn.state_arrays()


class ClassifierHead:
    """Global average pooling followed by a fully connected layer."""

    def __init__(self, name: str, channels: int, classes: int, *,
                 rng: np.random.Generator, dtype=np.float32):
        self.fc = Linear(f"{name}.fc", channels, classes, rng=rng, dtype=dtype)

    def __call__(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        pooled = ad.global_avgpool(x, tape)
        return self.fc(pooled, tape)

    def parameters(self) -> Iterator[Parameter]:
        yield from self.fc.parameters()
