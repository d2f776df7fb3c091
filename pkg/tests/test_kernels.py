"""Cross-backend agreement and the env-flag selection contract."""

import os
import subprocess
import sys

import numpy as np
import pytest

from msfx.kernels import BACKEND, get_backend

numba_be = get_backend("numba")
numpy_be = get_backend("numpy")


@pytest.mark.skipif(os.environ.get("MSFX_NUMBA", "1").strip().lower() in ("0", "false", "no", "off"), reason="numpy fallback forced via MSFX_NUMBA")
def test_default_backend_is_numba():
    assert BACKEND == "numba"


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, MSFX_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", "from msfx.kernels import BACKEND; print(BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_transition_cube_backends_match():
    rng = np.random.default_rng(3)
    for K in (1, 2, 3, 4):
        z = rng.standard_normal((40, 2))
        gamma = rng.normal(scale=1.5, size=(K - 1, 1 + 2 + K - 1))
        a = numba_be.transition_cube(gamma, z, K)
        b = numpy_be.transition_cube(gamma, z, K)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)
        np.testing.assert_allclose(a.sum(axis=2), 1.0, atol=1e-12)


def test_ffbs_filter_backends_match():
    rng = np.random.default_rng(4)
    T, K = 60, 3
    z = rng.standard_normal((T, 2))
    gamma = rng.normal(scale=0.7, size=(K - 1, 1 + 2 + K - 1))
    cube = numpy_be.transition_cube(gamma, z, K)
    loglik = rng.normal(loc=-1.0, size=(T, K))
    _, filt_a, ll_a, ok_a = numba_be.ffbs_draw(loglik, cube, np.random.default_rng(0))
    _, filt_b, ll_b, ok_b = numpy_be.ffbs_draw(loglik, cube, np.random.default_rng(0))
    assert ok_a and ok_b
    np.testing.assert_allclose(filt_a, filt_b, atol=1e-12)
    assert abs(ll_a - ll_b) < 1e-10


@pytest.mark.parametrize("c", [0.0, 1.0, 4.0])
def test_pg_backends_same_law(c):
    n = 100_000
    a = numba_be.pg_draw(np.full(n, c), np.random.default_rng(11))
    b = numpy_be.pg_draw(np.full(n, c), np.random.default_rng(12))
    # same distribution: compare means within joint MC error
    se = np.sqrt(a.var() / n + b.var() / n)
    assert abs(a.mean() - b.mean()) < 4 * se
    assert np.all(a > 0) and np.all(b > 0)


def test_dispatcher_rejects_malformed_shapes():
    from msfx import kernels

    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="gamma shape"):
        kernels.transition_cube(np.zeros((2, 4)), np.zeros((5, 2)), 3)
    with pytest.raises(ValueError, match="cube shape"):
        kernels.ffbs_draw(np.zeros((4, 2)), np.ones((4, 3, 3)), rng)
    with pytest.raises(ValueError, match="1-d"):
        kernels.pg_draw(np.zeros((3, 3)), rng)


def test_ffbs_single_state_path():
    loglik = np.full((10, 1), -0.5)
    cube = np.ones((10, 1, 1))
    states, filt, _, ok = numba_be.ffbs_draw(loglik, cube, np.random.default_rng(0))
    assert ok
    assert np.all(states == 0)
    np.testing.assert_allclose(filt, 1.0)
