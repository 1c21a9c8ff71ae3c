"""Integration kernel dispatch.

Two interchangeable backends provide the hot loops: a Cython extension
(``_fastpath``) and a pure-numpy lockstep fallback (``reference``). The
compiled one is picked when importable; set SHUTTLEKIT_BACKEND=compiled /
reference / auto to force the choice. Both orders their floating-point
operations identically, so results agree bit for bit.
"""

from __future__ import annotations

import os

import numpy as np

from .reference import STATUS_ENTERED, STATUS_LANDED, STATUS_TIMEOUT

__all__ = [
    "STATUS_LANDED", "STATUS_TIMEOUT", "STATUS_ENTERED",
    "get_backend", "simulate_paths", "scan_flights",
]


def _select():
    choice = os.environ.get("SHUTTLEKIT_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "compiled", "reference"):
        raise ValueError(
            f"SHUTTLEKIT_BACKEND={choice!r}: expected auto, compiled, or reference")
    if choice in ("auto", "compiled"):
        try:
            from . import _fastpath
            return _fastpath, "compiled"
        except ImportError:
            if choice == "compiled":
                raise RuntimeError(
                    "SHUTTLEKIT_BACKEND=compiled but the extension is not built")
    from . import reference
    return reference, "reference"


_impl, _backend_name = _select()


def get_backend() -> str:
    """Name of the active backend: 'compiled' or 'reference'."""
    return _backend_name


def _check_states(x0) -> np.ndarray:
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if x0.ndim != 2 or x0.shape[1] != 6:
        raise ValueError(f"states must have shape (m, 6), got {x0.shape}")
    return x0


def simulate_paths(x0, dt: float, n_steps: int, L: float, g: float,
                   num_threads: int = 0) -> np.ndarray:
    """RK4-integrate m states for n_steps; returns samples (m, n_steps + 1, 6)."""
    x0 = _check_states(x0)
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    return _impl.simulate_paths(x0, float(dt), int(n_steps), float(L), float(g),
                                int(num_threads))


def scan_flights(x0, dt: float, n_steps: int, L: float, g: float,
                 box, t_min: float, num_threads: int = 0):
    """Classify m launches against a hit box without storing paths.

    box is (x_lo, x_hi, y_lo, y_hi, z_lo, z_hi), bounds inclusive. Returns
    (status, entry_step); see the backend docstrings for the event order.
    """
    x0 = _check_states(x0)
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    box = np.ascontiguousarray(box, dtype=np.float64).reshape(6)
    if not (box[0] <= box[1] and box[2] <= box[3] and box[4] <= box[5]):
        raise ValueError(f"malformed box {box.tolist()}")
    return _impl.scan_flights(x0, float(dt), int(n_steps), float(L), float(g),
                              box, float(t_min), int(num_threads))
