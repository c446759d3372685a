import numpy as np
import pytest

from rsdqn import autograd as ag
from rsdqn.agents import AgentNet, Architecture


def make_net(seed=0, input_dim=6, n_actions=3, hidden=(8,), stream_hidden=5, head="dueling",
             noisy=False, **kw):
    arch = Architecture(input_dim=input_dim, n_actions=n_actions, hidden=hidden,
                        stream_hidden=stream_hidden, head=head, noisy=noisy, **kw)
    return AgentNet(arch, np.random.default_rng(seed))


def numeric_grad(f, x, h=1e-5):
    """Central finite differences of scalar ``f`` at array ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


def param_grad_error(net, loss_fn, h=1e-5):
    """Worst relative error between analytic and numeric gradients over all parameters."""
    net.params.zero_grad()
    loss_fn().backward()
    worst = 0.0
    for _, p in net.params.items():
        analytic = p.grad.copy()

        def value():
            with ag.no_grad():
                return float(loss_fn().data)

        numeric = numeric_grad(value, p.data, h)
        worst = max(worst, rel_error(analytic, numeric) if np.abs(analytic).max() > 1e-7
                    or np.abs(numeric).max() > 1e-7 else 0.0)
    net.params.zero_grad()
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
