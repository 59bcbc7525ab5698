"""Backend selection for the reduction kernels.

The compiled backend is used when importable; IPROJ_KERNELS=py|cy|auto
overrides the choice (cy fails loudly when the extension is missing).
Reductions run serially regardless of IPROJ_THREADS: 0 is the documented
reproducibility default and this build does not spawn worker threads for
any positive cap either, so results never depend on a thread schedule.

All wrappers coerce input to C-contiguous float64 so both backends see
identical bit patterns.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels_cy
except ImportError:  # extension not built on this platform
    _kernels_cy = None


def thread_cap() -> int:
    """Parsed IPROJ_THREADS value; 0 (serial) when unset or malformed."""
    raw = os.environ.get("IPROJ_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        return 0
    return max(cap, 0)


def _select(name: str):
    if name == "py":
        return _kernels_py
    if name == "cy":
        if _kernels_cy is None:
            raise ImportError("compiled kernel backend requested but not built")
        return _kernels_cy
    if name == "auto":
        return _kernels_cy if _kernels_cy is not None else _kernels_py
    raise ValueError(f"unknown kernel backend {name!r}")


_impl = _select(os.environ.get("IPROJ_KERNELS", "auto"))


def backend_name() -> str:
    return _impl.BACKEND


def available_backends() -> tuple[str, ...]:
    return ("python",) if _kernels_cy is None else ("python", "cython")


def use_backend(name: str) -> str:
    """Rebind the active backend ('py', 'cy' or 'auto'); returns its name."""
    global _impl
    _impl = _select(name)
    return _impl.BACKEND


def _vec(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def kahan_sum(values) -> float:
    return _impl.kahan_sum(_vec(values))


def weighted_sum(f, m) -> float:
    return _impl.weighted_sum(_vec(f), _vec(m))


def kl_sum(p, q) -> float:
    return _impl.kl_sum(_vec(p), _vec(q))


def logsumexp_weighted(y, m) -> float:
    return _impl.logsumexp_weighted(_vec(y), _vec(m))


def tilted_moments(z, m, alpha: float) -> tuple[float, float, float]:
    return _impl.tilted_moments(_vec(z), _vec(m), float(alpha))


def abs_diff_sum(a, b) -> float:
    return _impl.abs_diff_sum(_vec(a), _vec(b))


def pava(values, weights) -> np.ndarray:
    return np.asarray(_impl.pava(_vec(values), _vec(weights)), dtype=np.float64)
