"""Pure-numpy batch kernel (fallback for the compiled ``_kernels`` module).

For a batch of scenario weight vectors ``S`` (one row per scenario, e.g. a
survival vector or a 0/1 failure mask) and design weights ``w`` the kernel
factors the information matrices

    M_j = sum_i S[j, i] * w[i] * t_i t_i^T

A scenario is flagged ill-posed when the extreme eigenvalues of ``M_j``
satisfy ``lam_min <= eps_rank * lam_max`` (or ``lam_max <= 0``).
"""

import numpy as np

CHUNK = 8192


def _information(T, sw):
    n_y, p = T.shape
    outer = (T[:, :, None] * T[:, None, :]).reshape(n_y, p * p)
    return (sw @ outer).reshape(-1, p, p)


def _well_posed(M, eps_rank):
    lam = np.linalg.eigvalsh(M)
    return (lam[:, -1] > 0) & (lam[:, 0] > eps_rank * lam[:, -1])


def factor_batch(T, w, S, eps_rank, want_inv=False):
    """``(logdet, ok, inv)``; ``inv`` is None unless ``want_inv``."""
    n_s = S.shape[0]
    p = T.shape[1]
    logdet = np.full(n_s, np.nan)
    ok = np.zeros(n_s, dtype=bool)
    inv = np.full((n_s, p, p), np.nan) if want_inv else None
    for start in range(0, n_s, CHUNK):
        stop = min(start + CHUNK, n_s)
        M = _information(T, S[start:stop] * w)
        good = _well_posed(M, eps_rank)
        ok[start:stop] = good
        if not good.any():
            continue
        idx = np.flatnonzero(good) + start
        L = np.linalg.cholesky(M[good])
        logdet[idx] = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        if want_inv:
            Linv = np.linalg.inv(L)
            inv[idx] = np.swapaxes(Linv, 1, 2) @ Linv
    return logdet, ok, inv
