"""Message-passing kernels with backend selection at import time.

The compiled Cython extension is preferred; the numpy implementation is the
fallback. ``PAVEGRAPH_FORCE_NUMPY=1`` forces the fallback (used by the
benchmark and the backend-parity tests). ``BACKEND`` names the active one.

All kernels accept 1-D or 2-D float64 arrays; 1-D inputs are treated as a
single column and returned with the same rank.
"""

import os

import numpy as np

from . import numpy_backend

if os.environ.get("PAVEGRAPH_FORCE_NUMPY") == "1":
    _impl = numpy_backend
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = numpy_backend

BACKEND: str = _impl.NAME

_INT = np.int64


def _as2d(a: np.ndarray) -> tuple[np.ndarray, bool]:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim == 1:
        return a.reshape(-1, 1), True
    if a.ndim != 2:
        raise ValueError(f"kernel inputs must be 1-D or 2-D, got shape {a.shape}")
    return a, False


def _index(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=_INT)


def segment_sum(values: np.ndarray, seg_ptr: np.ndarray) -> np.ndarray:
    v, squeeze = _as2d(values)
    out = _impl.segment_sum(v, _index(seg_ptr))
    return out[:, 0] if squeeze else out


def scatter_add(values: np.ndarray, index: np.ndarray, num_rows: int) -> np.ndarray:
    v, squeeze = _as2d(values)
    out = _impl.scatter_add(v, _index(index), num_rows)
    return out[:, 0] if squeeze else out


def segment_softmax_forward(
    scores: np.ndarray, seg_ptr: np.ndarray, seg_ids: np.ndarray
) -> np.ndarray:
    s, squeeze = _as2d(scores)
    out = _impl.segment_softmax_forward(s, _index(seg_ptr), _index(seg_ids))
    return out[:, 0] if squeeze else out


def segment_softmax_backward(
    alpha: np.ndarray, grad: np.ndarray, seg_ptr: np.ndarray, seg_ids: np.ndarray
) -> np.ndarray:
    a, squeeze = _as2d(alpha)
    g, _ = _as2d(grad)
    out = _impl.segment_softmax_backward(a, g, _index(seg_ptr), _index(seg_ids))
    return out[:, 0] if squeeze else out
