import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rsdqn import sumtree
from rsdqn.errors import StateError
from rsdqn.replay import PRIORITY_FLOOR, PrioritizedBuffer, Transition

BACKENDS = ["numpy"] + (["cython"] if sumtree.BACKEND == "cython" else [])


def item(i, reward=0.0, done=False):
    return Transition(np.full(3, float(i)), i % 3, reward, np.full(3, i + 0.5), done)


def draw(buf, n, rng):
    """``n`` sampled indices, taken in batches no larger than the buffer."""
    k = len(buf)
    return np.concatenate([buf.sample(k, rng).indices for _ in range(n // k)])


def filled(n, capacity=None, **kw):
    buf = PrioritizedBuffer(capacity or n, **kw)
    for i in range(n):
        buf.push(item(i))
    return buf


# ------------------------------------------------------------------ sum tree

@pytest.mark.parametrize("backend", BACKENDS)
def test_sum_tree_totals_and_find(backend):
    t = sumtree.SumTree(5, backend)
    t.update(np.arange(5), np.array([1.0, 2.0, 0.0, 3.0, 4.0]))
    assert t.total() == 10.0 and t.max() == 4.0
    np.testing.assert_array_equal(t.find(np.array([0.0, 0.99, 1.0, 2.99, 3.0, 9.99])),
                                  [0, 0, 1, 1, 3, 4])


@pytest.mark.parametrize("backend", BACKENDS)
def test_sum_tree_repeated_index_last_wins(backend):
    t = sumtree.SumTree(4, backend)
    t.update(np.array([1, 1]), np.array([5.0, 2.0]))
    assert t.total() == 2.0 and t.max() == 2.0


def test_sum_tree_index_range():
    with pytest.raises(IndexError):
        sumtree.SumTree(4).update(np.array([4]), np.array([1.0]))
    with pytest.raises(ValueError):
        sumtree.SumTree(4, backend="fortran")


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernel not built")
@settings(max_examples=100, deadline=None)
@given(st.integers(1, 70), st.lists(st.tuples(st.integers(0, 69), st.floats(0, 100)), max_size=80),
       st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_backends_agree_exactly(capacity, updates, fractions):
    trees = [sumtree.SumTree(capacity, b) for b in BACKENDS]
    idx = np.array([i % capacity for i, _ in updates], dtype=np.int64)
    val = np.array([v for _, v in updates])
    for t in trees:
        t.update(idx, val)
    a, b = trees
    assert a.sums.tobytes() == b.sums.tobytes() and a.maxes.tobytes() == b.maxes.tobytes()
    mass = np.array(fractions) * a.total()
    np.testing.assert_array_equal(a.find(mass), b.find(mass))


# -------------------------------------------------------------------- buffer

def test_push_into_empty_has_unit_priority():
    buf = PrioritizedBuffer(10)
    buf.push(item(0))
    assert len(buf) == 1 and buf.priorities[0] == 1.0


def test_new_items_get_max_priority():
    big = PrioritizedBuffer(10)
    for i in range(3):
        big.push(item(i))
    big.update_priorities([0, 1, 2], [0.2, 4.0, 0.1])
    big.push(item(3))
    assert big.priorities[3] == pytest.approx(4.0 + PRIORITY_FLOOR)


def test_ring_eviction_fifo():
    buf = filled(6, capacity=4)
    assert len(buf) == 4
    stored = sorted(buf.get(i).state[0] for i in range(4))
    assert stored == [2.0, 3.0, 4.0, 5.0]
    assert buf.get(0).state[0] == 4.0 and buf.get(1).state[0] == 5.0


def test_reward_must_be_clipped():
    with pytest.raises(ValueError):
        PrioritizedBuffer(4).push(item(0, reward=2.0))


def test_underfull_sample(rng):
    with pytest.raises(StateError):
        filled(3).sample(4, rng)


def test_priority_floor_and_monotonicity():
    buf = filled(3)
    buf.update_priorities([0, 1, 2], [0.0, 0.5, -2.0])
    p = buf.priorities
    assert p[0] == PRIORITY_FLOOR and p[1] < p[2]
    assert buf.probabilities()[0] > 0


def test_update_index_out_of_range():
    buf = filled(3, capacity=8)
    with pytest.raises(IndexError):
        buf.update_priorities([3], [1.0])


def test_stale_index_updates_current_occupant():
    buf = filled(4, capacity=4)
    buf.push(item(99))  # overwrites slot 0
    buf.update_priorities([0], [3.0])
    assert buf.get(0).state[0] == 99.0
    assert buf.priorities[0] == pytest.approx(3.0 + PRIORITY_FLOOR)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 30), st.floats(-5, 5)), max_size=60))
def test_priorities_stay_positive(ops):
    buf = PrioritizedBuffer(8)
    for push, i, delta in ops:
        if push or len(buf) == 0:
            buf.push(item(i))
        else:
            buf.update_priorities([i % len(buf)], [delta])
    assert np.all(buf.priorities > 0)
    if len(buf):
        assert abs(buf.probabilities().sum() - 1.0) < 1e-12


def test_uniform_when_priorities_equal(rng):
    buf = filled(10)
    n = 100_000
    np.testing.assert_array_equal(buf.sample(10, rng).weights, 1.0)
    counts = np.bincount(draw(buf, n, rng), minlength=10)
    sigma = np.sqrt(n * 0.1 * 0.9)
    assert np.all(np.abs(counts - n / 10) < 3 * sigma)


def test_tenfold_priority_gives_sqrt_ten_ratio(rng):
    buf = filled(2)
    buf.update_priorities([0, 1], [10.0, 1.0])
    n = 100_000
    counts = np.bincount(draw(buf, n, rng), minlength=2)
    p0 = np.sqrt(10.0 + PRIORITY_FLOOR) / (np.sqrt(10.0 + PRIORITY_FLOOR) + np.sqrt(1.0 + PRIORITY_FLOOR))
    assert abs(counts[0] - n * p0) < 3 * np.sqrt(n * p0 * (1 - p0))


def test_importance_weights_bounded(rng):
    buf = filled(20)
    buf.update_priorities(np.arange(20), rng.random(20) * 5)
    batch = buf.sample(20, rng)
    assert np.all(batch.weights <= 1.0 + 1e-12)
    probs = buf.probabilities()
    expected = (probs[batch.indices] / probs.min()) ** -0.5
    np.testing.assert_allclose(batch.weights, expected, rtol=1e-12)
    least = int(np.argmin(probs))
    assert buf.tree.leaves([least])[0] / buf.tree.total() == pytest.approx(probs.min())
    assert (probs[least] / probs.min()) ** -0.5 == 1.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_chi_square_proportional_law(backend):
    rng = np.random.default_rng(7)
    buf = PrioritizedBuffer(100, backend=backend)
    for i in range(100):
        buf.push(item(i))
    pri = rng.uniform(0.1, 10.0, 100)
    buf.update_priorities(np.arange(100), pri)
    n = 100_000
    counts = np.bincount(draw(buf, n, rng), minlength=100)
    expected = (pri + PRIORITY_FLOOR) ** 0.5
    expected = n * expected / expected.sum()
    assert stats.chisquare(counts, expected).pvalue > 0.001


def test_sample_returns_consistent_batch(rng):
    buf = filled(8)
    batch = buf.sample(5, rng)
    for k, i in enumerate(batch.indices):
        t = buf.get(int(i))
        np.testing.assert_array_equal(batch.states[k], t.state)
        assert batch.actions[k] == t.action and len(batch) == 5
