import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_oed import kernels

BACKENDS = sorted(kernels.BACKENDS)


def direct(T, w, S):
    out = []
    for row in S:
        M = (T * (row * w)[:, None]).T @ T
        lam = np.linalg.eigvalsh(M)
        ok = lam[-1] > 0 and lam[0] > 1e-10 * lam[-1]
        out.append((ok, np.linalg.slogdet(M)[1] if ok else np.nan, np.linalg.inv(M) if ok else None))
    return out


def instance(rng, n_y=15, p=4, n_s=30, p_fail=0.3):
    T = rng.standard_normal((n_y, p))
    w = rng.uniform(0.0, 1.0, n_y)
    S = (rng.random((n_s, n_y)) >= p_fail).astype(float)
    S[0] = 1.0
    S[1, :] = 0.0
    S[1, :p - 1] = 1.0  # rank deficient
    return T, w, S


@pytest.mark.parametrize("backend", BACKENDS)
class TestAgainstDirect:
    def test_logdet_and_flags(self, rng, backend):
        T, w, S = instance(rng)
        ld, ok, Q = kernels.logdet_batch(T, w, S, quad=True, backend=backend)
        ref = direct(T, w, S)
        assert not ok[1]
        for j, (ok_j, ld_j, inv_j) in enumerate(ref):
            assert ok[j] == ok_j
            if ok_j:
                assert ld[j] == pytest.approx(ld_j, rel=1e-12, abs=1e-12)
                np.testing.assert_allclose(Q[j], np.einsum("ip,pq,iq->i", T, inv_j, T), rtol=1e-10)
            else:
                assert np.isnan(ld[j]) and not Q[j].any()

    def test_inverse(self, rng, backend):
        T, w, S = instance(rng)
        inv, ok = kernels.inverse_batch(T, w, S, backend=backend)
        for j, (ok_j, _, inv_j) in enumerate(direct(T, w, S)):
            if ok_j:
                np.testing.assert_allclose(inv[j], inv_j, rtol=1e-10, atol=1e-12)
            else:
                assert np.isnan(inv[j]).all()

    def test_all_zero_scenario(self, backend):
        T = np.eye(3)
        ld, ok, _ = kernels.logdet_batch(T, np.ones(3), np.zeros((1, 3)), backend=backend)
        assert not ok[0] and np.isnan(ld[0])

    def test_shape_mismatch(self, backend):
        with pytest.raises(ValueError):
            kernels.logdet_batch(np.eye(3), np.ones(3), np.ones((2, 4)), backend=backend)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
class TestParity:
    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n_y=st.integers(3, 40), p=st.integers(1, 7),
           p_fail=st.floats(0.0, 0.9))
    def test_backends_agree(self, seed, n_y, p, p_fail):
        rng = np.random.default_rng(seed)
        T = rng.standard_normal((n_y, p)) * rng.uniform(0.1, 10.0, p)
        w = rng.uniform(0.0, 1.0, n_y) * (rng.random(n_y) > 0.2)
        S = (rng.random((25, n_y)) >= p_fail) * rng.uniform(0.5, 1.0, (25, n_y))
        a = kernels.factor_batch(T, w, S, want_inv=True, backend="python")
        b = kernels.factor_batch(T, w, S, want_inv=True, backend="cython")
        np.testing.assert_array_equal(a[1], b[1])
        np.testing.assert_allclose(a[0], b[0], rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(a[2], b[2], rtol=1e-8, atol=1e-10 * np.nanmax(np.abs(a[2]), initial=1.0))


def test_weighted_quad_sum_matches_loop(rng):
    T, w, S = instance(rng)
    S = S[2:]
    ld, ok, Q = kernels.logdet_batch(T, w, S, quad=True)
    _, _, inv = kernels.factor_batch(T, w, S, want_inv=True)
    keep = ok
    g = kernels.weighted_quad_sum(T, S[keep], inv[keep])
    np.testing.assert_allclose(g, (S[keep] * Q[keep]).sum(axis=0), rtol=1e-10)


def test_backend_env_selection(monkeypatch):
    monkeypatch.setenv("ROBUST_OED_BACKEND", "python")
    assert kernels._select() == "python"
    monkeypatch.setenv("ROBUST_OED_BACKEND", "fortran")
    with pytest.raises(ImportError):
        kernels._select()
