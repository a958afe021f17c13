# tests/test_qmp.py

import numpy as np
import pytest

from qmpx.errors import KindMismatch, ShapeMismatch
from qmpx.linalg import crandn, hermitianize, random_psd
from qmpx.qmp import (
    QMFunction,
    QMPProblem,
    evaluate,
    homogenize_t2,
    lift_t1,
    problem_from_json,
    problem_to_json,
    tightness_hint,
)

RNG = np.random.default_rng(202)


def random_function(rng, n, r, t2=False) -> QMFunction:
    return QMFunction(
        A=hermitianize(crandn(rng, n, n)),
        B=crandn(rng, n, r),
        D=np.eye(r) if t2 else hermitianize(crandn(rng, r, r)),
        c=float(rng.standard_normal()),
    )


def brute_force_evaluate(f: QMFunction, x: np.ndarray) -> float:
    """Element-wise double-sum oracle for Tr(D X^H A X) + 2Re Tr(B^H X) + c."""
    n, r = f.n, f.r
    quad = 0.0 + 0.0j
    for t in range(r):
        for k in range(r):
            for i in range(n):
                for j in range(n):
                    quad += f.D[t, k] * np.conj(x[i, k]) * f.A[i, j] * x[j, t]
    lin = sum(np.conj(f.B[i, k]) * x[i, k] for i in range(n) for k in range(r))
    return float(quad.real + 2 * lin.real + f.c)


class TestEvaluate:
    def test_identity_case(self):
        f = QMFunction(A=np.eye(2), B=np.zeros((2, 2)), D=np.eye(2), c=0.0)
        assert evaluate(f, np.eye(2)) == pytest.approx(2.0)

    def test_with_linear_and_constant(self):
        f = QMFunction(A=np.eye(2), B=np.eye(2), D=np.eye(2), c=1.0)
        assert evaluate(f, np.eye(2)) == pytest.approx(7.0)

    def test_brute_force_oracle(self):
        for _ in range(20):
            n, r = int(RNG.integers(1, 4)), int(RNG.integers(1, 4))
            f = random_function(RNG, n, r)
            x = crandn(RNG, n, r)
            assert abs(evaluate(f, x) - brute_force_evaluate(f, x)) < 1e-10

    def test_always_real(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n, r = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            f = random_function(rng, n, r)
            # evaluate raises if the imaginary residue exceeds 1e-10
            evaluate(f, crandn(rng, n, r))

    def test_shape_mismatch(self):
        f = random_function(RNG, 2, 2)
        with pytest.raises(ShapeMismatch):
            evaluate(f, np.zeros((3, 2)))


class TestLift:
    def test_zero_linear_border(self):
        f = QMFunction(A=random_psd(RNG, 2), B=np.zeros((2, 2)), D=np.eye(2), c=0.0)
        omega = lift_t1(QMPProblem(objective=f)).omegas[0]
        assert np.allclose(omega[-1, :], 0)
        assert np.allclose(omega[:, -1], 0)

    def test_scalar_case(self):
        f = QMFunction(A=[[2.0]], B=[[1 + 1j]], D=[[3.0]], c=-0.5)
        omega = lift_t1(QMPProblem(objective=f)).omegas[0]
        expect = np.array([[6.0, 1 + 1j], [1 - 1j, -0.5]])
        assert np.allclose(omega, expect)

    def test_evaluation_oracle(self):
        for _ in range(1000):
            n, r = int(RNG.integers(1, 4)), int(RNG.integers(1, 4))
            f = random_function(RNG, n, r)
            lifted = lift_t1(QMPProblem(objective=f))
            x = crandn(RNG, n, r)
            z = lifted.z_of(x)
            val = np.trace(lifted.omegas[0] @ z)
            assert abs(val.imag) < 1e-9
            assert abs(val.real - evaluate(f, x)) < 1e-10 * max(1, abs(evaluate(f, x)))


class TestHomogenize:
    def test_zero_constant_block(self):
        f = QMFunction(A=random_psd(RNG, 3), B=crandn(RNG, 3, 2), D=np.eye(2), c=0.0)
        m = homogenize_t2(QMPProblem(objective=f, kind="T2")).ms[0]
        assert np.allclose(m[3:, 3:], 0)

    def test_scalar_coincides_with_lift(self):
        f = QMFunction(A=[[1.5]], B=[[0.5 - 1j]], D=[[1.0]], c=2.0)
        p = QMPProblem(objective=f, kind="T2")
        assert np.allclose(homogenize_t2(p).ms[0], lift_t1(p).omegas[0])

    def test_evaluation_oracle(self):
        for _ in range(1000):
            n, r = int(RNG.integers(1, 4)), int(RNG.integers(1, 4))
            f = random_function(RNG, n, r, t2=True)
            p = QMPProblem(objective=f, kind="T2")
            h = homogenize_t2(p)
            x = crandn(RNG, n, r)
            val = np.trace(h.ms[0] @ h.u_of(x))
            assert abs(val.real - evaluate(f, x)) < 1e-10 * max(1, abs(evaluate(f, x)))

    def test_requires_t2(self):
        f = random_function(RNG, 2, 2)
        with pytest.raises(KindMismatch):
            homogenize_t2(QMPProblem(objective=f, kind="T1"))


class TestProblem:
    def test_t2_requires_identity_d(self):
        f = random_function(RNG, 2, 2)
        if not np.allclose(f.D, np.eye(2)):
            with pytest.raises(KindMismatch):
                QMPProblem(objective=f, kind="T2")

    def test_members_share_shape(self):
        f = random_function(RNG, 2, 2)
        g = random_function(RNG, 3, 2)
        with pytest.raises(ShapeMismatch):
            QMPProblem(objective=f, inequalities=(g,))

    def test_tightness_hint(self):
        def prob(r, n_cons):
            obj = random_function(RNG, 2, r, t2=True)
            cons = tuple(
                QMFunction(A=random_psd(RNG, 2), B=np.zeros((2, r)), D=np.eye(r), c=-1.0)
                for _ in range(n_cons)
            )
            return QMPProblem(objective=obj, inequalities=cons, kind="T2")

        assert tightness_hint(prob(2, 3)) is True
        assert tightness_hint(prob(1, 2)) is False
        assert tightness_hint(prob(4, 7)) is True


class TestSerialization:
    def test_round_trip(self):
        f = random_function(RNG, 3, 2)
        g = QMFunction(A=random_psd(RNG, 3), B=np.zeros((3, 2)), D=hermitianize(crandn(RNG, 2, 2)), c=-1.0)
        p = QMPProblem(objective=f, inequalities=(g,), kind="T1")
        q = problem_from_json(problem_to_json(p))
        assert np.allclose(q.objective.A, p.objective.A)
        assert np.allclose(q.inequalities[0].B, p.inequalities[0].B)
        x = crandn(RNG, 3, 2)
        assert evaluate(q.objective, x) == pytest.approx(evaluate(p.objective, x))
