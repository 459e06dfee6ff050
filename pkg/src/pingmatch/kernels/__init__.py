"""Hot numeric kernels with a compiled core and a numpy fallback.

The compiled backend (Cython, built by setup.py) is preferred when the
extension imported cleanly; otherwise the numpy backend is used. Set
PINGMATCH_KERNELS=numpy or =cython to force a backend (cython raises if
the extension is unavailable).
"""

from __future__ import annotations

import os

from . import _numpy

_FORCED = os.environ.get("PINGMATCH_KERNELS", "auto").lower()

_cython = None
if _FORCED in ("auto", "cython"):
    try:
        from . import _core as _cython  # type: ignore[no-redef]
    except ImportError:
        _cython = None
        if _FORCED == "cython":
            raise ImportError(
                "PINGMATCH_KERNELS=cython but pingmatch.kernels._core is not "
                "built; run `pip install -e . --no-build-isolation`"
            ) from None

if _FORCED == "numpy" or _cython is None:
    _impl = _numpy
    BACKEND = "numpy"
else:
    _impl = _cython
    BACKEND = "cython"

smoothed_rates = _impl.smoothed_rates
score_candidates = _impl.score_candidates
logistic_loss_grad = _impl.logistic_loss_grad
rank_auc = _impl.rank_auc


def available_backends() -> dict[str, object]:
    """Importable backends by name; used by tests and the benchmark."""
    backends: dict[str, object] = {"numpy": _numpy}
    if _cython is not None:
        backends["cython"] = _cython
    return backends
