# tests/test_linalg.py

import numpy as np
import pytest

from qmpx.errors import NotPositiveSemidefinite
from qmpx.linalg import (
    crandn,
    hermitian_sqrt,
    hermitianize,
    is_psd,
    kron,
    random_psd,
    real_embed,
    real_unembed,
    unvec,
    vectorize,
)

RNG = np.random.default_rng(101)


class TestKron:
    def test_identity(self):
        assert np.allclose(kron(np.eye(2), np.eye(3)), np.eye(6))

    def test_scalar_scaling(self):
        b = crandn(RNG, 3, 4)
        assert np.allclose(kron([[2.0]], b), 2 * b)

    def test_index_formula_oracle(self):
        # entry (i*3+k, j*2+l) = a_ij * b_kl, checked element by element
        a = crandn(RNG, 2, 2)
        b = crandn(RNG, 3, 2)
        k = kron(a, b)
        for i in range(2):
            for j in range(2):
                for p in range(3):
                    for q in range(2):
                        assert k[i * 3 + p, j * 2 + q] == pytest.approx(a[i, j] * b[p, q])

    def test_associative_bilinear(self):
        for _ in range(20):
            a, b, c = (crandn(RNG, 2, 3), crandn(RNG, 3, 2), crandn(RNG, 2, 2))
            assert np.allclose(kron(kron(a, b), c), kron(a, kron(b, c)), atol=1e-12)
            s, t = RNG.standard_normal(2)
            assert np.allclose(kron(s * a + t * a, b), s * kron(a, b) + t * kron(a, b), atol=1e-12)


class TestVectorize:
    def test_identity(self):
        assert np.allclose(vectorize(np.eye(2)).ravel(), [1, 0, 0, 1])

    def test_row_vector(self):
        row = crandn(RNG, 1, 5)
        assert np.allclose(vectorize(row), row.T)

    def test_vec_of_product_identity(self):
        # vec(A X B) = (B^T kron A) vec(X)
        for _ in range(10):
            a = crandn(RNG, 3, 4)
            x = crandn(RNG, 4, 2)
            b = crandn(RNG, 2, 5)
            lhs = vectorize(a @ x @ b)
            rhs = kron(b.T, a) @ vectorize(x)
            assert np.linalg.norm(lhs - rhs) < 1e-12

    def test_unvec_roundtrip(self):
        x = crandn(RNG, 3, 5)
        assert np.allclose(unvec(vectorize(x), 3, 5), x)


class TestHermitianSqrt:
    def test_identity(self):
        assert np.allclose(hermitian_sqrt(np.eye(4)), np.eye(4))

    def test_scaled_identity(self):
        assert np.allclose(hermitian_sqrt(4 * np.eye(3)), 2 * np.eye(3))

    def test_eigendecomposition_oracle(self):
        for _ in range(10):
            m = random_psd(RNG, 5)
            root = hermitian_sqrt(m)
            assert np.allclose(root, root.conj().T)
            assert np.linalg.norm(root @ root - m) < 1e-10 * max(1, np.linalg.norm(m))

    def test_commutes_with_input(self):
        for _ in range(10):
            m = random_psd(RNG, 4)
            root = hermitian_sqrt(m)
            assert np.linalg.norm(root @ m - m @ root) < 1e-9

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveSemidefinite):
            hermitian_sqrt(np.diag([1.0, -1.0]))

    def test_clips_tiny_negative(self):
        m = np.diag([1.0, -5e-11])
        root = hermitian_sqrt(m)
        assert np.allclose(root @ root, np.diag([1.0, 0.0]), atol=1e-10)


class TestRealEmbed:
    def test_identity(self):
        assert np.allclose(real_embed(np.eye(3)), np.eye(6))

    def test_real_input_block_diagonal(self):
        h = np.array([[2.0, 1.0], [1.0, 3.0]])
        e = real_embed(h)
        assert np.allclose(e[:2, :2], h)
        assert np.allclose(e[2:, 2:], h)
        assert np.allclose(e[:2, 2:], 0)

    def test_eigenvalue_doubling_oracle(self):
        for _ in range(10):
            h = hermitianize(crandn(RNG, 4, 4))
            w_h = np.linalg.eigvalsh(h)
            w_e = np.linalg.eigvalsh(real_embed(h))
            assert np.allclose(np.sort(np.repeat(w_h, 2)), np.sort(w_e), atol=1e-9)

    def test_product_homomorphism(self):
        # embed(a) embed(b) = embed(ab) whenever ab is itself Hermitian;
        # powers of one matrix commute, so a b is Hermitian by construction
        base = hermitianize(crandn(RNG, 3, 3))
        a, b = base @ base, base @ base @ base
        assert np.allclose(real_embed(a) @ real_embed(b), real_embed(a @ b), atol=1e-9)

    def test_unembed_roundtrip(self):
        h = hermitianize(crandn(RNG, 5, 5))
        assert np.allclose(real_unembed(real_embed(h)), h, atol=1e-12)

    def test_trace_doubling(self):
        a = hermitianize(crandn(RNG, 3, 3))
        b = hermitianize(crandn(RNG, 3, 3))
        t_c = np.trace(a @ b).real
        t_r = np.trace(real_embed(a) @ real_embed(b))
        assert t_r == pytest.approx(2 * t_c)


class TestIsPsd:
    def test_identity(self):
        assert is_psd(np.eye(3), 0.0)

    def test_indefinite(self):
        assert not is_psd(np.diag([1.0, -1.0]), 1e-9)

    def test_gram_matrix(self):
        g = crandn(RNG, 4, 6)
        assert is_psd(g @ g.conj().T, 1e-12)

    def test_tol_must_be_nonnegative(self):
        with pytest.raises(ValueError):
            is_psd(np.eye(2), -1.0)
