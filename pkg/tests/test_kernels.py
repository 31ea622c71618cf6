import os
import subprocess
import sys

import numpy as np
import pytest

from moeapprox import kernels
from moeapprox.kernels import fallback

needs_ext = pytest.mark.skipif(kernels.compiled is None, reason="compiled extension not built")
RNG = np.random.default_rng(11)
SHAPES = [(1, 1, 1), (3, 5, 7), (17, 9, 64), (130, 70, 257)]


@pytest.mark.parametrize("nx,ny,K", SHAPES)
def test_fallback_contract_matches_matmul(nx, ny, K):
    G, E = RNG.random((nx, K)), RNG.random((ny, K))
    np.testing.assert_allclose(fallback.contract(G, E), G @ E.T, rtol=1e-13)


@needs_ext
@pytest.mark.parametrize("nx,ny,K", SHAPES)
def test_backends_agree_on_contract(nx, ny, K):
    G, E = RNG.random((nx, K)), RNG.random((ny, K))
    np.testing.assert_allclose(kernels.compiled.contract(G, E, 1), fallback.contract(G, E, 1), rtol=1e-13)


@pytest.mark.parametrize("impl", ["dispatch", "fallback"])
def test_contract_independent_of_workers(impl):
    fn = kernels.contract if impl == "dispatch" else fallback.contract
    G, E = RNG.random((301, 129)), RNG.random((77, 129))
    ref = fn(G, E, 1)
    for w in (2, 3, 8):
        np.testing.assert_array_equal(fn(G, E, w), ref)


@pytest.mark.parametrize("impl", ["dispatch", "fallback"])
def test_softmax_rows(impl):
    fn = kernels.softmax_rows if impl == "dispatch" else fallback.softmax_rows
    Z = RNG.normal(0, 300, (50, 9))
    out = fn(Z, 1)
    e = np.exp(Z - Z.max(axis=1, keepdims=True))
    np.testing.assert_allclose(out, e / e.sum(axis=1, keepdims=True), rtol=1e-13, atol=1e-300)
    np.testing.assert_array_equal(fn(Z, 4), out)


@needs_ext
def test_backends_agree_on_softmax():
    Z = RNG.normal(0, 30, (64, 33))
    np.testing.assert_allclose(kernels.compiled.softmax_rows(Z, 1), fallback.softmax_rows(Z, 1), rtol=1e-14)


def test_softmax_rejects_vectors():
    with pytest.raises(ValueError):
        kernels.softmax_rows(np.zeros(3))


def test_env_var_forces_fallback():
    env = dict(os.environ, MOEAPPROX_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import moeapprox; print(moeapprox.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
def test_default_backend_is_compiled():
    assert kernels.BACKEND == "cython"
