"""Pure-numpy message-passing kernels.

Fallback backend used when the compiled extension is unavailable. All
functions operate on the sorted-segment edge layout: rows grouped by
destination node, segment boundaries given by ``seg_ptr`` (length S+1,
``seg_ptr[0] == 0``, ``seg_ptr[-1] == num_rows``) and every segment
non-empty. ``seg_ids[r]`` is the segment index of row ``r``.
"""

import numpy as np

NAME = "numpy"


def segment_sum(values: np.ndarray, seg_ptr: np.ndarray) -> np.ndarray:
    """Sum rows within each contiguous segment: (E, D) -> (S, D)."""
    return np.add.reduceat(values, seg_ptr[:-1], axis=0)


def scatter_add(values: np.ndarray, index: np.ndarray, num_rows: int) -> np.ndarray:
    """Accumulate rows of ``values`` into ``out[index[r]]``; index unsorted."""
    out = np.zeros((num_rows,) + values.shape[1:], dtype=values.dtype)
    np.add.at(out, index, values)
    return out


def segment_softmax_forward(
    scores: np.ndarray, seg_ptr: np.ndarray, seg_ids: np.ndarray
) -> np.ndarray:
    """Per-segment softmax along axis 0, stabilized by the segment max."""
    seg_max = np.maximum.reduceat(scores, seg_ptr[:-1], axis=0)
    shifted = np.exp(scores - seg_max[seg_ids])
    denom = np.add.reduceat(shifted, seg_ptr[:-1], axis=0)
    return shifted / denom[seg_ids]


def segment_softmax_backward(
    alpha: np.ndarray, grad: np.ndarray, seg_ptr: np.ndarray, seg_ids: np.ndarray
) -> np.ndarray:
    """VJP of segment_softmax: alpha * (grad - sum_seg(grad * alpha))."""
    inner = np.add.reduceat(alpha * grad, seg_ptr[:-1], axis=0)
    return alpha * (grad - inner[seg_ids])
