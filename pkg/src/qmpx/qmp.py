# src/qmpx/qmp.py

"""Quadratic matrix functions and QMP problems, plus the structural
transformations (lifting and homogenization) that turn them into
semidefinite programs. Nothing in this module solves anything.

A quadratic matrix function of an n x r complex variable X is

    f(X) = Tr(D X^H A X) + 2 Re Tr(B^H X) + c

with A (n x n) and D (r x r) Hermitian, B complex n x r, c real. A QMP
problem minimizes one such function subject to others being <= 0 or == 0.
Type 2 (T2) problems restrict every D to the identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import KindMismatch, ShapeMismatch
from .linalg import (
    as_matrix,
    check_finite,
    hermitianize,
    kron,
    vectorize,
)

IMAG_RESIDUE_TOL = 1e-10


@dataclass(frozen=True)
class QMFunction:
    """One quadratic matrix function (A, B, D, c)."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    c: float

    def __post_init__(self):
        a = hermitianize(self.A)
        b = as_matrix(self.B)
        d = hermitianize(self.D)
        if a.shape[0] != b.shape[0] or d.shape[0] != b.shape[1]:
            raise ShapeMismatch(
                f"inconsistent shapes A={a.shape}, B={b.shape}, D={d.shape}"
            )
        for m, what in ((a, "A"), (b, "B"), (d, "D")):
            check_finite(m, what)
        if not np.isfinite(self.c):
            raise ValueError("c must be finite")
        for m in (a, b, d):
            m.setflags(write=False)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "D", d)
        object.__setattr__(self, "c", float(self.c))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def r(self) -> int:
        return self.D.shape[0]

    def __call__(self, x) -> float:
        return evaluate(self, x)


def evaluate(f: QMFunction, x) -> float:
    """Evaluate Tr(D X^H A X) + 2 Re Tr(B^H X) + c at X.

    The value is real by construction; the imaginary residue of the
    computed traces is asserted below 1e-10 and discarded.
    """
    x = as_matrix(x)
    if x.shape != (f.n, f.r):
        raise ShapeMismatch(f"X has shape {x.shape}, expected {(f.n, f.r)}")
    quad = np.trace(f.D @ x.conj().T @ (f.A @ x))
    lin = np.trace(f.B.conj().T @ x)
    if abs(quad.imag) > IMAG_RESIDUE_TOL * max(1.0, abs(quad.real)):
        raise ArithmeticError(f"quadratic trace has imaginary residue {quad.imag:.3e}")
    return float(quad.real + 2.0 * lin.real + f.c)


def is_t2(f: QMFunction, tol: float = 1e-12) -> bool:
    return bool(np.allclose(f.D, np.eye(f.r), atol=tol))


@dataclass(frozen=True)
class QMPProblem:
    """QM objective plus inequality (<= 0) and equality (== 0) QM constraints."""

    objective: QMFunction
    inequalities: tuple = ()
    equalities: tuple = ()
    kind: str = "T1"

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        if self.kind not in ("T1", "T2"):
            raise KindMismatch(f"unknown kind {self.kind!r}")
        n, r = self.objective.n, self.objective.r
        for g in self.members():
            if (g.n, g.r) != (n, r):
                raise ShapeMismatch("all member functions must share (n, r)")
        if self.kind == "T2":
            for g in self.members():
                if not is_t2(g):
                    raise KindMismatch("T2 problems require D = I in every member")

    @property
    def n(self) -> int:
        return self.objective.n

    @property
    def r(self) -> int:
        return self.objective.r

    def members(self):
        return (self.objective,) + self.inequalities + self.equalities


# ---------------------------------------------------------------------------
# lifting (general QMP -> SDP data on Z = [vec X; 1][vec X; 1]^H)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LiftedSDP:
    """Lifted representation: one (nr+1) Hermitian matrix per member function.

    Minimize Tr(omega[0] Z) subject to Tr(omega[i] Z) <= 0 for the
    inequality block, == 0 for the equality block, Z PSD Hermitian with the
    bottom-right corner pinned to 1 (the rank-1 constraint is dropped).
    """

    omegas: tuple
    n: int
    r: int
    n_ineq: int
    n_eq: int

    @property
    def dim(self) -> int:
        return self.n * self.r + 1

    def z_of(self, x) -> np.ndarray:
        """Rank-1 lift [vec X; 1][vec X; 1]^H of a candidate X."""
        v = np.vstack([vectorize(x), [[1.0]]])
        return v @ v.conj().T


def lift_omega(f: QMFunction) -> np.ndarray:
    """[[D^T kron A, vec B], [vec^H B, c]] for one QM function."""
    top = np.hstack([kron(f.D.T, f.A), vectorize(f.B)])
    bot = np.hstack([vectorize(f.B).conj().T, [[f.c]]])
    return hermitianize(np.vstack([top, bot]))


def lift_t1(p: QMPProblem) -> LiftedSDP:
    """Lift every member function; valid for both T1 and T2 problems."""
    return LiftedSDP(
        omegas=tuple(lift_omega(g) for g in p.members()),
        n=p.n,
        r=p.r,
        n_ineq=len(p.inequalities),
        n_eq=len(p.equalities),
    )


# ---------------------------------------------------------------------------
# homogenization (T2 QMP -> SDP data on U = [X; I][X; I]^H, dim n+r)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HomogenizedSDP:
    """Homogenized T2 representation: one (n+r) Hermitian matrix per member.

    Minimize Tr(m[0] U) subject to Tr(m[i] U) <= 0 / == 0, U PSD with the
    lower-right r x r block pinned to the identity (rank relaxed).
    """

    ms: tuple
    n: int
    r: int
    n_ineq: int
    n_eq: int

    @property
    def dim(self) -> int:
        return self.n + self.r

    def u_of(self, x) -> np.ndarray:
        v = np.vstack([as_matrix(x), np.eye(self.r)])
        return v @ v.conj().T


def homogenize_m(f: QMFunction) -> np.ndarray:
    """[[A, B], [B^H, (c/r) I_r]] for one T2 function."""
    r = f.r
    top = np.hstack([f.A, f.B])
    bot = np.hstack([f.B.conj().T, (f.c / r) * np.eye(r)])
    return hermitianize(np.vstack([top, bot]))


def homogenize_t2(p: QMPProblem) -> HomogenizedSDP:
    if p.kind != "T2":
        raise KindMismatch("homogenization is defined for T2 problems only")
    return HomogenizedSDP(
        ms=tuple(homogenize_m(g) for g in p.members()),
        n=p.n,
        r=p.r,
        n_ineq=len(p.inequalities),
        n_eq=len(p.equalities),
    )


def tightness_hint(p: QMPProblem) -> bool:
    """True when the relaxed homogenized SDP is known tight: #constraints < 2r."""
    if p.kind != "T2":
        raise KindMismatch("tightness hint applies to T2 problems")
    return (len(p.inequalities) + len(p.equalities)) < 2 * p.r


# ---------------------------------------------------------------------------
# JSON problem files: complex entries serialized as [re, im] pairs
# ---------------------------------------------------------------------------


def _matrix_to_json(m: np.ndarray):
    m = as_matrix(m)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def _matrix_from_json(rows) -> np.ndarray:
    return np.array([[complex(v[0], v[1]) for v in row] for row in rows])


def _function_to_json(f: QMFunction):
    return {
        "A": _matrix_to_json(f.A),
        "B": _matrix_to_json(f.B),
        "D": _matrix_to_json(f.D),
        "c": float(f.c),
    }


def _function_from_json(d) -> QMFunction:
    return QMFunction(
        A=_matrix_from_json(d["A"]),
        B=_matrix_from_json(d["B"]),
        D=_matrix_from_json(d["D"]),
        c=float(d["c"]),
    )


def problem_to_json(p: QMPProblem) -> dict:
    return {
        "n": p.n,
        "r": p.r,
        "kind": p.kind,
        "objective": _function_to_json(p.objective),
        "inequalities": [_function_to_json(g) for g in p.inequalities],
        "equalities": [_function_to_json(g) for g in p.equalities],
    }


def problem_from_json(d) -> QMPProblem:
    p = QMPProblem(
        objective=_function_from_json(d["objective"]),
        inequalities=tuple(_function_from_json(g) for g in d.get("inequalities", [])),
        equalities=tuple(_function_from_json(g) for g in d.get("equalities", [])),
        kind=d.get("kind", "T1"),
    )
    if (p.n, p.r) != (d["n"], d["r"]):
        raise ShapeMismatch("declared (n, r) does not match the matrices")
    return p


def save_problem(p: QMPProblem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_json(p), fh, indent=1)


def load_problem(path) -> QMPProblem:
    with open(path, "r", encoding="utf-8") as fh:
        return problem_from_json(json.load(fh))
