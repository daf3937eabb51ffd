"""Backend dispatch for the hot kernels.

The compiled extension is preferred when it imported cleanly; setting
``EVSEV_FORCE_FALLBACK=1`` in the environment selects the pure-numpy
fallback instead. Both backends share signatures and semantics:

- ``best_gini_split(values, labels, n_classes, min_leaf)``
- ``best_gain_split(values, grad, hess, lam, min_leaf)``
- ``knn_indices(X, Q, k, exclude)``
- ``ssm_scan_forward(dA, dBx, C, D, x)``
- ``ssm_scan_backward(dy, h, dA, C, D, x)``
- ``selective_scan_forward(dA, dt, B, C, D, x)``
- ``selective_scan_backward(dy, h, dA, dt, A, B, C, D, x)``

Split and neighbor kernels take float64 values with int64 labels and
indices; the selective-scan pair also accepts float32 (all inputs one
dtype). Arrays are C-contiguous.
"""

from __future__ import annotations

import os

from . import fallback as _fallback

if os.environ.get("EVSEV_FORCE_FALLBACK") == "1":
    _impl = _fallback
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _fallback

best_gini_split = _impl.best_gini_split
best_gain_split = _impl.best_gain_split
knn_indices = _impl.knn_indices
ssm_scan_forward = _impl.ssm_scan_forward
ssm_scan_backward = _impl.ssm_scan_backward
selective_scan_forward = _impl.selective_scan_forward
selective_scan_backward = _impl.selective_scan_backward


def backend_name() -> str:
    """Name of the selected backend: "compiled" or "fallback"."""
    return _impl.BACKEND


__all__ = [
    "backend_name",
    "best_gini_split",
    "best_gain_split",
    "knn_indices",
    "ssm_scan_forward",
    "ssm_scan_backward",
    "selective_scan_forward",
    "selective_scan_backward",
]
