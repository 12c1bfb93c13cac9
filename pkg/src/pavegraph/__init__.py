"""Spatio-temporal residual graph-attention toolkit for pavement forecasting.

End-to-end pipeline: synthetic data generation, graph/temporal ingestion,
gradient-based training of the attention model and its ablation variants,
regression diagnostics, severity-based maintenance prioritization, and
feature/edge-mask explanations. See the ``pavegraph`` CLI for the workflow
commands.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
