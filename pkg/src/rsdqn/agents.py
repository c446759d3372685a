"""Q and student networks: plain or dueling heads over dense (optionally noisy) layers."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigError, DimensionError
from .nn import ParamStore, uniform_init

MODES = ("explore", "train", "eval")


@dataclass(frozen=True)
class Architecture:
    """Everything needed to rebuild a network's parameter shapes.

    Plain nets are ``trunk -> stream -> n_actions``. Dueling nets share the
    trunk and split into an advantage stream (``n_actions`` outputs) and a
    value stream (one output).
    """

    input_dim: int
    n_actions: int
    hidden: tuple[int, ...] = (128,)
    stream_hidden: int = 64
    head: str = "dueling"
    noisy: bool = False
    factorized: bool = False
    sigma_init: float = 0.017
    kappa: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.head not in ("plain", "dueling"):
            raise ConfigError(f"head must be 'plain' or 'dueling', got {self.head!r}")
        if self.input_dim < 1 or self.n_actions < 1:
            raise ConfigError("input_dim and n_actions must be positive")
        if self.kappa < 1.0:
            raise ConfigError(f"kappa must be >= 1, got {self.kappa}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(**{**d, "hidden": tuple(d["hidden"])})


class NoisyDense:
    """Dense layer whose weights may carry learned Gaussian noise.

    With ``noisy=False`` this is an ordinary affine layer. With noise, the
    effective weight is ``mu + sigma * xi`` where ``xi`` is the current noise
    sample; in explore mode ``xi`` is additionally scaled by ``kappa``.
    """

    def __init__(self, params: ParamStore, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, noisy: bool = False,
                 sigma_init: float = 0.017, factorized: bool = False):
        self.name = name
        self.n_in, self.n_out = n_in, n_out
        self.noisy = noisy
        self.factorized = factorized
        if noisy:
            self.w_mu = params.add(f"{name}.w_mu", uniform_init(rng, n_in, (n_out, n_in)))
            self.b_mu = params.add(f"{name}.b_mu", uniform_init(rng, n_in, (n_out,)))
            self.w_sigma = params.add(f"{name}.w_sigma", np.full((n_out, n_in), sigma_init))
            self.b_sigma = params.add(f"{name}.b_sigma", np.full((n_out,), sigma_init))
        else:
            self.w_mu = params.add(f"{name}.weight", uniform_init(rng, n_in, (n_out, n_in)))
            self.b_mu = params.add(f"{name}.bias", uniform_init(rng, n_in, (n_out,)))
        self.xi_w = np.zeros((n_out, n_in))
        self.xi_b = np.zeros(n_out)

    def sample_noise(self, rng: np.random.Generator) -> None:
        if not self.noisy:
            return
        if self.factorized:
            f = lambda x: np.sign(x) * np.sqrt(np.abs(x))  # noqa: E731
            e_in = f(rng.standard_normal(self.n_in))
            e_out = f(rng.standard_normal(self.n_out))
            self.xi_w = np.outer(e_out, e_in)
            self.xi_b = e_out
        else:
            self.xi_w = rng.standard_normal((self.n_out, self.n_in))
            self.xi_b = rng.standard_normal(self.n_out)

    def clear_noise(self) -> None:
        self.xi_w = np.zeros((self.n_out, self.n_in))
        self.xi_b = np.zeros(self.n_out)

    def effective(self, mode: str, kappa: float) -> tuple[Tensor, Tensor]:
        if not self.noisy or mode == "eval":
            return self.w_mu, self.b_mu
        scale = kappa if mode == "explore" else 1.0
        w = ag.add(self.w_mu, ag.mul(self.w_sigma, scale * self.xi_w))
        b = ag.add(self.b_mu, ag.mul(self.b_sigma, scale * self.xi_b))
        return w, b


class Heads(NamedTuple):
    q: Tensor
    advantage: Tensor | None
    value: Tensor | None


class AgentNet:
    """A Q network (teacher, target or student) built from an :class:`Architecture`.

    With ``noisy`` set, every dense layer except the input layer carries
    weight noise.
    """

    def __init__(self, arch: Architecture, rng: np.random.Generator):
        self.arch = arch
        self.params = ParamStore()
        p, a = self.params, arch
        layer = lambda name, i, o: NoisyDense(  # noqa: E731
            p, name, i, o, rng, noisy=a.noisy, sigma_init=a.sigma_init, factorized=a.factorized
        )
        self.trunk: list[NoisyDense] = []
        width = a.input_dim
        for i, h in enumerate(a.hidden):
            if i == 0:
                # the input layer plays the role of the conv feature stack and stays deterministic
                self.trunk.append(NoisyDense(p, "trunk0", width, h, rng))
            else:
                self.trunk.append(layer(f"trunk{i}", width, h))
            width = h
        if a.head == "plain":
            self.adv_stream = [layer("out0", width, a.stream_hidden),
                               layer("out1", a.stream_hidden, a.n_actions)]
            self.value_stream: list[NoisyDense] = []
        else:
            self.adv_stream = [layer("adv0", width, a.stream_hidden),
                               layer("adv1", a.stream_hidden, a.n_actions)]
            self.value_stream = [layer("val0", width, a.stream_hidden),
                                 layer("val1", a.stream_hidden, 1)]
        self.params.freeze()

    @property
    def layers(self) -> list[NoisyDense]:
        return self.trunk + self.adv_stream + self.value_stream

    @property
    def dueling(self) -> bool:
        return self.arch.head == "dueling"

    def sample_noise(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.sample_noise(rng)

    def clear_noise(self) -> None:
        for layer in self.layers:
            layer.clear_noise()

    def advantage_layers(self, mode: str = "eval") -> list[tuple[Tensor, Tensor]]:
        """Effective ``(W, b)`` pairs along the input -> advantage path.

        For a plain head this is the whole network. ReLU sits between
        consecutive pairs, the last pair is linear.
        """
        _check_mode(mode)
        k = self.arch.kappa
        return [layer.effective(mode, k) for layer in self.trunk + self.adv_stream]

    def forward(self, x, mode: str = "eval") -> Heads:
        _check_mode(mode)
        x = ag.as_tensor(x)
        if x.shape[-1] != self.arch.input_dim:
            raise DimensionError(f"state width {x.shape[-1]} != network input {self.arch.input_dim}")
        k = self.arch.kappa
        h = x
        for layer in self.trunk:
            w, b = layer.effective(mode, k)
            h = ag.relu(ag.affine(h, w, b))
        adv = _run_stream(self.adv_stream, h, mode, k)
        if not self.dueling:
            return Heads(adv, None, None)
        value = _run_stream(self.value_stream, h, mode, k)
        axis = adv.data.ndim - 1
        centered = ag.sub(adv, ag.mean(adv, axis=axis, keepdims=True))
        q = ag.add(value, centered)
        return Heads(q, adv, value)

    def clone(self) -> "AgentNet":
        twin = copy.deepcopy(self)
        twin.params.freeze()
        return twin

    def state_dict(self):
        return self.params.state_dict()

    def load_state_dict(self, state) -> None:
        self.params.load_state_dict(state)


def _run_stream(stream: list[NoisyDense], h: Tensor, mode: str, kappa: float) -> Tensor:
    last = len(stream) - 1
    for i, layer in enumerate(stream):
        w, b = layer.effective(mode, kappa)
        h = ag.affine(h, w, b)
        if i < last:
            h = ag.relu(h)
    return h


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def q_values(net: AgentNet, state, mode: str = "eval",
             rng: np.random.Generator | None = None) -> np.ndarray:
    """Q-values for one state or a batch; resamples noise first if ``rng`` is given."""
    if rng is not None and mode != "eval":
        net.sample_noise(rng)
    with ag.no_grad():
        return net.forward(np.asarray(state, dtype=np.float64), mode).q.data


def greedy_action(net: AgentNet, state, mode: str = "eval"):
    """Argmax action, lowest index on ties.

    Dueling nets rank actions by the advantage stream, which orders actions
    exactly as the combined Q-values do.
    """
    with ag.no_grad():
        heads = net.forward(np.asarray(state, dtype=np.float64), mode)
    scores = heads.advantage.data if heads.advantage is not None else heads.q.data
    a = np.argmax(scores, axis=-1)
    return int(a) if np.ndim(a) == 0 else a


def epsilon_greedy(net: AgentNet, state, epsilon: float, rng: np.random.Generator,
                   mode: str = "explore") -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(net.arch.n_actions))
    return greedy_action(net, state, mode)
