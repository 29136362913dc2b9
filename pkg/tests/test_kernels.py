import os
import subprocess
import sys

import numpy as np
import pytest

from acoustic_occupancy import _kernels_py, kernels

backends = kernels.available_backends()
needs_cython = pytest.mark.skipif("cython" not in backends, reason="extension not built")


def _random_hmm(rng, n, T):
    pi = rng.dirichlet(np.ones(n))
    a = rng.dirichlet(np.ones(n), size=n)
    return np.log(pi), np.log(a), rng.normal(scale=3.0, size=(T, n))


@needs_cython
@pytest.mark.parametrize("n,T", [(1, 1), (2, 5), (15, 300), (6, 1)])
def test_hmm_kernels_agree(n, T):
    rng = np.random.default_rng(n * 1000 + T)
    log_pi, log_a, ll = _random_hmm(rng, n, T)
    cy, py = backends["cython"], backends["python"]
    p1, s1 = cy.viterbi_log(log_pi, log_a, ll)
    p2, s2 = py.viterbi_log(log_pi, log_a, ll)
    np.testing.assert_array_equal(p1, p2)
    assert s1 == pytest.approx(s2, abs=1e-10)
    np.testing.assert_allclose(cy.forward_log(log_pi, log_a, ll), py.forward_log(log_pi, log_a, ll),
                               rtol=0, atol=1e-10)
    np.testing.assert_allclose(cy.backward_log(log_a, ll), py.backward_log(log_a, ll),
                               rtol=0, atol=1e-10)


@needs_cython
def test_gmm_kernel_agrees():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(500, 60)) * 5
    means = rng.normal(size=(8, 60))
    var = rng.uniform(0.1, 3.0, size=(8, 60))
    log_w = np.log(rng.dirichlet(np.ones(8)))
    np.testing.assert_allclose(backends["cython"].gmm_log_joint(X, log_w, means, var),
                               backends["python"].gmm_log_joint(X, log_w, means, var),
                               rtol=1e-12, atol=1e-9)


@needs_cython
def test_viterbi_ties_go_to_smaller_state():
    ll = np.zeros((4, 3))
    log_pi = np.log(np.full(3, 1 / 3))
    log_a = np.log(np.full((3, 3), 1 / 3))
    for mod in backends.values():
        path, _ = mod.viterbi_log(log_pi, log_a, ll)
        assert path.tolist() == [0, 0, 0, 0]


def test_kernels_accept_readonly_arrays():
    rng = np.random.default_rng(0)
    log_pi, log_a, ll = _random_hmm(rng, 3, 4)
    for arr in (log_pi, log_a, ll):
        arr.setflags(write=False)
    for mod in backends.values():
        mod.viterbi_log(log_pi, log_a, ll)
        mod.forward_log(log_pi, log_a, ll)


def test_pure_python_can_be_forced():
    env = dict(os.environ, ACOUSTIC_OCCUPANCY_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from acoustic_occupancy import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


def test_backend_reports_selected_module():
    assert kernels.BACKEND in ("python", "cython")
    if kernels.BACKEND == "python":
        assert kernels.viterbi_log is _kernels_py.viterbi_log
