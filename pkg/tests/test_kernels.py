"""Backend contract: the compiled extension and the pure-Python kernels
must agree to near machine precision, each must be bitwise deterministic,
and the fused adjoint must match finite differences of its forward."""

import numpy as np
import pytest

from fairadapt import kernels
from fairadapt.kernels import reference

try:
    from fairadapt.kernels import _sortnet
except ImportError:
    _sortnet = None

needs_compiled = pytest.mark.skipif(
    _sortnet is None, reason="compiled extension not built")


def random_case(seed, batch=3, n=17):
    rng = np.random.default_rng(seed)
    scores = rng.normal(size=(batch, n))
    relevance = (rng.random(size=(batch, n)) < 0.3).astype(np.float64)
    bias = np.zeros(n)
    k = min(5, n)
    bias[:k] = 1.0 / np.log2(np.arange(2, k + 2))
    return scores, relevance, bias


class TestLayerPairs:
    def test_odd_even_structure(self):
        pairs = reference.layer_pairs(6)
        assert len(pairs) == 6
        np.testing.assert_array_equal(pairs[0], [0, 2, 4])
        np.testing.assert_array_equal(pairs[1], [1, 3])
        np.testing.assert_array_equal(pairs[2], [0, 2, 4])

    def test_every_adjacent_pair_covered(self):
        for n in (2, 3, 8, 13):
            touched = set()
            for layer in reference.layer_pairs(n):
                for i in layer:
                    assert 0 <= i < n - 1
                    touched.add(i)
            assert touched == set(range(n - 1))


class TestReferenceKernels:
    def test_fused_matches_permutation_contraction(self):
        scores, relevance, bias = random_case(0)
        perm, _ = reference.soft_permutation(scores, 10.0)
        w, rhat, _ = reference.fused_forward(scores, 10.0, relevance, bias)
        for b in range(scores.shape[0]):
            np.testing.assert_allclose(w[b], perm[b] @ bias, atol=1e-12)
            np.testing.assert_allclose(rhat[b], perm[b].T @ relevance[b],
                                       atol=1e-12)

    def test_adjoint_matches_finite_differences(self):
        scores, relevance, bias = random_case(1, batch=2, n=8)
        rng = np.random.default_rng(2)
        grad_w = rng.normal(size=scores.shape)
        grad_rhat = rng.normal(size=scores.shape)

        _, _, ctx = reference.fused_forward(scores, 6.0, relevance, bias)
        analytic = reference.fused_backward(ctx, grad_w, grad_rhat)

        eps = 1e-6
        numeric = np.empty_like(scores)
        for b in range(scores.shape[0]):
            for v in range(scores.shape[1]):
                up = scores.copy()
                up[b, v] += eps
                dn = scores.copy()
                dn[b, v] -= eps
                wu, ru, _ = reference.fused_forward(up, 6.0, relevance, bias)
                wd, rd, _ = reference.fused_forward(dn, 6.0, relevance, bias)
                val_u = (wu * grad_w).sum() + (ru * grad_rhat).sum()
                val_d = (wd * grad_w).sum() + (rd * grad_rhat).sum()
                numeric[b, v] = (val_u - val_d) / (2 * eps)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

    def test_bitwise_deterministic(self):
        scores, relevance, bias = random_case(3)
        a = reference.fused_forward(scores, 10.0, relevance, bias)
        b = reference.fused_forward(scores, 10.0, relevance, bias)
        assert a[0].tobytes() == b[0].tobytes()
        assert a[1].tobytes() == b[1].tobytes()


@needs_compiled
class TestCompiledParity:
    def test_soft_permutation_matches_reference(self):
        for seed in range(5):
            scores, _, _ = random_case(seed, batch=2, n=23)
            for beta in (1.0, 10.0, 1000.0):
                pc, sc = _sortnet.soft_permutation(scores, beta)
                pr, sr = reference.soft_permutation(scores, beta)
                np.testing.assert_allclose(pc, pr, atol=3e-13)
                np.testing.assert_allclose(sc, sr, atol=3e-13)

    def test_fused_forward_matches_reference(self):
        scores, relevance, bias = random_case(7, batch=4, n=31)
        wc, rc, _ = _sortnet.fused_forward(scores, 10.0, relevance, bias)
        wr, rr, _ = reference.fused_forward(scores, 10.0, relevance, bias)
        np.testing.assert_allclose(wc, wr, atol=3e-13)
        np.testing.assert_allclose(rc, rr, atol=3e-13)

    def test_fused_backward_matches_reference(self):
        scores, relevance, bias = random_case(8, batch=2, n=19)
        rng = np.random.default_rng(9)
        grad_w = rng.normal(size=scores.shape)
        grad_rhat = rng.normal(size=scores.shape)
        _, _, ctx_c = _sortnet.fused_forward(scores, 10.0, relevance, bias)
        _, _, ctx_r = reference.fused_forward(scores, 10.0, relevance, bias)
        gc = _sortnet.fused_backward(ctx_c, grad_w, grad_rhat)
        gr = reference.fused_backward(ctx_r, grad_w, grad_rhat)
        np.testing.assert_allclose(gc, gr, atol=3e-13)

    def test_compiled_bitwise_deterministic(self):
        scores, relevance, bias = random_case(10)
        a = _sortnet.fused_forward(scores, 10.0, relevance, bias)
        b = _sortnet.fused_forward(scores, 10.0, relevance, bias)
        assert a[0].tobytes() == b[0].tobytes()
        assert a[1].tobytes() == b[1].tobytes()


class TestBackendSelection:
    def test_backend_is_declared(self):
        assert kernels.BACKEND in ("compiled", "python")

    def test_active_backend_exports_kernels(self):
        assert callable(kernels.soft_permutation)
        assert callable(kernels.fused_forward)
        assert callable(kernels.fused_backward)

    def test_pure_env_forces_reference(self):
        import os
        import subprocess
        import sys

        code = "import fairadapt.kernels as k; print(k.BACKEND)"
        env = dict(os.environ, FAIRADAPT_PURE="1")
        out = subprocess.run([sys.executable, "-c", code],
                             capture_output=True, text=True, env=env)
        assert out.stdout.strip() == "python"
