"""Parameter storage, dense layers and the Adam optimizer."""

from __future__ import annotations

from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import DimensionError

try:
    from . import _optim as _kernels

    BACKEND = "cython"
except ImportError:  # extension not built
    _kernels = None
    BACKEND = "numpy"


class ParamStore:
    """Ordered mapping of unique parameter names to trainable tensors.

    Each parameter carries its value in ``.data`` and its gradient in
    ``.grad``; both always share a shape. After :meth:`freeze` every value
    and gradient is a view into one flat buffer, so optimizers can update
    all parameters with a few vector operations.
    """

    def __init__(self):
        self._params: OrderedDict[str, Tensor] = OrderedDict()
        self.flat: np.ndarray | None = None
        self.flat_grad: np.ndarray | None = None

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if self.flat is not None:
            raise RuntimeError("parameter store is frozen")
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        t.zero_grad()
        self._params[name] = t
        return t

    def freeze(self) -> None:
        """Move all parameters into contiguous value and gradient buffers."""
        n = sum(t.data.size for t in self._params.values())
        self.flat = np.empty(n)
        self.flat_grad = np.zeros(n)
        pos = 0
        for t in self._params.values():
            k = t.data.size
            self.flat[pos:pos + k] = t.data.reshape(-1)
            t.data = self.flat[pos:pos + k].reshape(t.shape)
            t.grad = self.flat_grad[pos:pos + k].reshape(t.shape)
            pos += k

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    @contextmanager
    def detached(self):
        """Temporarily stop tracking gradients for every parameter.

        Used when only the gradient with respect to the input is wanted, so
        attack computations neither pay for nor pollute parameter gradients.
        """
        flags = [(t, t.requires_grad) for t in self._params.values()]
        for t, _ in flags:
            t.requires_grad = False
        try:
            yield
        finally:
            for t, flag in flags:
                t.requires_grad = flag

    def zero_grad(self) -> None:
        if self.flat_grad is not None:
            self.flat_grad.fill(0.0)
            return
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self._params.items())

    def load_state_dict(self, state) -> None:
        extra = set(state) - set(self._params)
        if extra:
            raise KeyError(f"unexpected parameters {sorted(extra)}")
        for name, t in self._params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != t.shape:
                raise DimensionError(f"{name}: shape {value.shape} != {t.shape}")
            t.data[...] = value

    def copy_from(self, other: "ParamStore") -> None:
        if self.flat is not None and other.flat is not None and self.flat.shape == other.flat.shape:
            self.flat[...] = other.flat
        else:
            self.load_state_dict(other.state_dict())


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def forward_dense(weight, bias, x, activation: str = "identity") -> Tensor:
    """Dense layer ``W x + b`` followed by ``relu`` or nothing."""
    out = ag.affine(x, weight, bias)
    if activation == "relu":
        return ag.relu(out)
    if activation != "identity":
        raise ValueError(f"unknown activation {activation!r}")
    return out


@dataclass
class AdamState:
    lr: float
    eps: float = 1.5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _adam_update(p: np.ndarray, g: np.ndarray, m: np.ndarray, v: np.ndarray,
                 state: AdamState, step_size: float, root_c2: float) -> None:
    b1, b2 = state.beta1, state.beta2
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    denom = np.sqrt(v)
    denom /= root_c2
    denom += state.eps
    p -= step_size * m / denom


def adam_step(params: ParamStore, state: AdamState, backend: str | None = None) -> None:
    """One bias-corrected Adam update; gradients are zeroed afterwards.

    Args:
        params: Parameters holding fresh gradients.
        state: Moment estimates and step counter, updated in place.
        backend: ``"cython"`` or ``"numpy"`` for frozen stores; defaults to
            the compiled kernel when it is available.
    """
    state.step += 1
    t = state.step
    step_size = state.lr / (1.0 - state.beta1**t)
    root_c2 = np.sqrt(1.0 - state.beta2**t)
    if params.flat is not None:
        if "__flat__" not in state.m:
            state.m["__flat__"] = np.zeros_like(params.flat)
            state.v["__flat__"] = np.zeros_like(params.flat)
        if (backend or BACKEND) == "cython":
            if _kernels is None:
                raise RuntimeError("compiled Adam kernel is not available")
            _kernels.adam(params.flat, params.flat_grad, state.m["__flat__"], state.v["__flat__"],
                          state.beta1, state.beta2, step_size, root_c2, state.eps)
            return
        _adam_update(params.flat, params.flat_grad, state.m["__flat__"], state.v["__flat__"],
                     state, step_size, root_c2)
        params.zero_grad()
        return
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if g.shape != p.shape:
            raise DimensionError(f"{name}: gradient {g.shape} != value {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        _adam_update(p.data, g, state.m[name], state.v[name], state, step_size, root_c2)
    params.zero_grad()


class Adam:
    """Thin holder pairing a parameter store with its Adam state."""

    def __init__(self, params: ParamStore, lr: float, eps: float = 1.5e-4,
                 beta1: float = 0.9, beta2: float = 0.999):
        self.params = params
        self.state = AdamState(lr=lr, eps=eps, beta1=beta1, beta2=beta2)

    def step(self) -> None:
        adam_step(self.params, self.state)

    def zero_grad(self) -> None:
        self.params.zero_grad()
