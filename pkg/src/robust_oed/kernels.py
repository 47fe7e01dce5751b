"""Backend selection and batch helpers for the scenario information matrices.

The compiled extension is used when it imports; otherwise the numpy
fallback.  ``ROBUST_OED_BACKEND=python`` (or ``cython``) forces a choice.
Backends provide ``factor_batch``; quadratic forms and gradient sums are
built on its inverses here with dense products.
"""

import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

BACKENDS = {"python": _kernels_py}
if _kernels_c is not None:
    BACKENDS["cython"] = _kernels_c


def _select():
    choice = os.environ.get("ROBUST_OED_BACKEND", "auto").lower()
    if choice == "auto":
        return "cython" if _kernels_c is not None else "python"
    if choice not in BACKENDS:
        raise ImportError(f"kernel backend {choice!r} is not available (have {sorted(BACKENDS)})")
    return choice


BACKEND = _select()


def get_backend(name=None):
    return BACKENDS[name or BACKEND]


def _prep(T, w, S):
    T = np.ascontiguousarray(T, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    S = np.ascontiguousarray(np.atleast_2d(S), dtype=float)
    if S.shape[1] != T.shape[0] or w.shape[0] != T.shape[0]:
        raise ValueError("T, w and scenario rows must agree on n_y")
    return T, w, S


def _outer_rows(T):
    return (T[:, :, None] * T[:, None, :]).reshape(T.shape[0], -1)


def factor_batch(T, w, S, eps_rank=1e-10, want_inv=False, backend=None):
    """``(logdet M_j, ok_j, M_j^{-1} or None)`` for every scenario row."""
    T, w, S = _prep(T, w, S)
    return get_backend(backend).factor_batch(T, w, S, float(eps_rank), bool(want_inv))


def logdet_batch(T, w, S, eps_rank=1e-10, quad=False, backend=None):
    """Log-determinants of the scenario information matrices.

    Returns ``(logdet, ok, Q)``: ``logdet[j] = log det M_j`` (NaN where
    ill-posed), boolean ``ok`` flags, and when ``quad`` is set the array
    ``Q[j, i] = t_i^T M_j^{-1} t_i`` (zero rows where ill-posed).
    """
    T, w, S = _prep(T, w, S)
    logdet, ok, inv = get_backend(backend).factor_batch(T, w, S, float(eps_rank), bool(quad))
    if not quad:
        return logdet, ok, None
    flat = np.where(ok[:, None], inv.reshape(len(ok), -1), 0.0)
    return logdet, ok, flat @ _outer_rows(T).T


def inverse_batch(T, w, S, eps_rank=1e-10, backend=None):
    """``(inv, ok)`` with ``inv[j] = M_j^{-1}`` (NaN where ill-posed)."""
    _, ok, inv = factor_batch(T, w, S, eps_rank, True, backend)
    return inv, ok


def weighted_quad_sum(T, S, inv):
    """``g_i = sum_j S[j, i] t_i^T inv_j t_i`` without forming per-scenario forms."""
    T = np.asarray(T, dtype=float)
    A = np.asarray(S, dtype=float).T @ inv.reshape(inv.shape[0], -1)
    return np.einsum("ik,ik->i", A, _outer_rows(T))
