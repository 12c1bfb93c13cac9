import numpy as np
import pytest

from pavegraph.graph import load_graph


def finite_difference(f, arrays, h=1e-5):
    """Central-difference gradients of scalar f with respect to each array."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr, dtype=np.float64)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            fp = f()
            arr[idx] = orig - h
            fm = f()
            arr[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, eps=1e-8):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    return float(np.max(np.abs(analytic - numeric) / (np.abs(numeric) + eps)))


@pytest.fixture
def path_graph_3():
    """a - b - c."""
    return load_graph(["a", "b", "c"], [("a", "b"), ("b", "c")])


@pytest.fixture
def ring_graph_5():
    ids = ["a", "b", "c", "d", "e"]
    pairs = [(ids[i], ids[(i + 1) % 5]) for i in range(5)]
    return load_graph(ids, pairs)


def random_graph(rng, n, extra_edges=None):
    """Random connected-ish graph: a spanning chain plus random extras."""
    width = len(str(n))
    ids = [f"n{i:0{width}d}" for i in range(n)]
    pairs = [(ids[i], ids[i + 1]) for i in range(n - 1)]
    extra = extra_edges if extra_edges is not None else n // 2
    for _ in range(extra):
        i, j = rng.integers(0, n, size=2)
        if i != j:
            pairs.append((ids[i], ids[j]))
    return load_graph(ids, pairs)
