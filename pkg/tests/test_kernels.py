import os
import subprocess
import sys

import numpy as np
import pytest

from nullitylab import kernels, _pykernels

compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")


def brute_pair_max(A, B, symmetric):
    best, bi, bj = -1.0, -1, -1
    for i in range(len(A)):
        for j in range(len(B)):
            if symmetric and j <= i:
                continue
            d = float(np.sum((A[i] - B[j]) ** 2))
            if d > best:
                best, bi, bj = d, i, j
    return (np.sqrt(best), bi, bj) if bi >= 0 else (0.0, -1, -1)


@pytest.mark.parametrize("symmetric", [False, True])
def test_python_pair_max_matches_brute_force(symmetric):
    rng = np.random.default_rng(0)
    A = rng.standard_normal((37, 3))
    B = A if symmetric else rng.standard_normal((23, 3))
    assert _pykernels.pair_max_distance(A, B, symmetric) == pytest.approx(brute_pair_max(A, B, symmetric))


def test_pair_max_first_maximum_wins():
    A = np.array([[0.0], [1.0], [0.0], [1.0]])
    for backend in ("python",) + (("cython",) if kernels.BACKEND == "cython" else ()):
        assert kernels.pair_max_distance(A, A, True, backend=backend) == (1.0, 0, 1)


def test_pair_max_empty():
    A = np.zeros((1, 2))
    assert kernels.pair_max_distance(A, A, True, backend="python") == (0.0, -1, -1)


def brute_flatness(K):
    k, m, _ = K.shape
    best = 0.0
    for x in range(m):
        for y in range(m):
            for z in range(m):
                for w in range(m):
                    best = max(best, abs(K[:, x, w] @ K[:, y, z] - K[:, x, z] @ K[:, y, w]))
    return best


def test_python_flatness_matches_brute_force():
    rng = np.random.default_rng(1)
    forms = rng.standard_normal((6, 2, 3, 3))
    forms = forms + np.swapaxes(forms, 2, 3)
    got = _pykernels.flatness_residuals(forms)
    assert got == pytest.approx([brute_flatness(K) for K in forms])


def test_python_strain_maxabs():
    rng = np.random.default_rng(2)
    J = rng.standard_normal((5, 4, 2))
    expect = [np.abs(j.T @ j - np.eye(2)).max() for j in J]
    assert _pykernels.strain_maxabs(J) == pytest.approx(expect)


@compiled
@pytest.mark.parametrize("symmetric", [False, True])
def test_backends_agree_pair_max(symmetric):
    rng = np.random.default_rng(3)
    A = rng.standard_normal((500, 4))
    B = A if symmetric else rng.standard_normal((300, 4))
    c = kernels.pair_max_distance(A, B, symmetric, backend="cython")
    p = kernels.pair_max_distance(A, B, symmetric, backend="python")
    assert c[1:] == p[1:] and c[0] == pytest.approx(p[0], rel=1e-15)


@compiled
def test_backends_agree_flatness_and_strain():
    rng = np.random.default_rng(4)
    forms = rng.standard_normal((50, 2, 3, 3))
    forms = forms + np.swapaxes(forms, 2, 3)
    assert np.allclose(kernels.flatness_residuals(forms, backend="cython"),
                       kernels.flatness_residuals(forms, backend="python"), rtol=1e-13, atol=1e-13)
    J = rng.standard_normal((50, 4, 2))
    assert np.allclose(kernels.strain_maxabs(J, backend="cython"),
                       kernels.strain_maxabs(J, backend="python"), rtol=1e-13, atol=1e-15)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.pair_max_distance(np.zeros((2, 1)), np.zeros((2, 1)), backend="fortran")


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("NULLITYLAB_THREADS", "3")
    assert kernels.num_threads() == 3
    monkeypatch.setenv("NULLITYLAB_THREADS", "junk")
    assert kernels.num_threads() >= 1


def test_pure_python_env_forces_fallback():
    env = dict(os.environ, NULLITYLAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from nullitylab import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"
