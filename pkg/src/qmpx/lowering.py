# src/qmpx/lowering.py

"""Lowering passes from QMP problems to conic standard form.

Both passes work on the real-variable embedding x~ = [Re vec X; Im vec X]
and produce linear-matrix-inequality programs solved through the dual
side of :mod:`qmpx.conic`:

* ``lower_convex_sdp`` writes every member function as an epigraph /
  feasibility Schur-complement block [[I, K x~], [(K x~)^T, corner]];
* ``lower_socp`` completes the square and emits one arrow (second-order
  cone) block per member function, radius sqrt(Tr(A^-1 B D^-1 B^H) - c).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic
from .errors import NotConvex, NotPositiveDefinite
from .linalg import (
    hermitian_inv_sqrt,
    hermitian_sqrt,
    hermitianize,
    is_psd,
    kron,
    unvec,
    vectorize,
)
from .qmp import QMFunction, QMPProblem

PSD_TOL = 1e-9


@dataclass
class LoweredProgram:
    """A conic program plus the bookkeeping to read the QMP answer back."""

    program: conic.ConicProgram
    n: int
    r: int
    kind: str  # "sdp" | "socp"
    square_constants: list = field(default_factory=list)

    def recover_x(self, sol: conic.ConicSolution) -> np.ndarray:
        nr = self.n * self.r
        u = sol.y
        x_tilde = u[: 2 * nr]
        return unvec(x_tilde[:nr] + 1j * x_tilde[nr:], self.n, self.r)


def _real_linear_map(k_complex: np.ndarray) -> np.ndarray:
    """Real 2N x 2N matrix acting on [Re v; Im v] as K acts on v."""
    re, im = k_complex.real, k_complex.imag
    return np.block([[re, -im], [im, re]])


def _real_vec(v_complex: np.ndarray) -> np.ndarray:
    v = np.asarray(v_complex).reshape(-1)
    return np.concatenate([v.real, v.imag])


def _member_maps(f: QMFunction, inverse: bool):
    """K = D^{T/2} kron A^{1/2} (real form) and, optionally, the affine
    completed-square shift A^{-1/2} B D^{-1/2}."""
    a_half = hermitian_sqrt(f.A)
    d_half = hermitian_sqrt(f.D)
    k = _real_linear_map(kron(d_half.T, a_half))
    if not inverse:
        return k, None
    a_ih = hermitian_inv_sqrt(f.A)
    d_ih = hermitian_inv_sqrt(f.D)
    shift = _real_vec(vectorize(a_ih @ f.B @ d_ih))
    return k, shift


def lower_convex_sdp(p: QMPProblem) -> LoweredProgram:
    """Epigraph SDP form for convex QMP (all A_l, D_l PSD, inequalities only)."""
    if p.equalities:
        raise NotConvex("convex lowering treats inequality constraints only")
    for g in p.members():
        if not (is_psd(g.A, PSD_TOL) and is_psd(g.D, PSD_TOL)):
            raise NotConvex("convex lowering requires PSD A and D in every member")

    nr = p.n * p.r
    nv = 2 * nr + 1  # [x~; t]
    members = p.members()
    f0_blocks = []
    f_var = [dict() for _ in range(nv)]
    dim = 2 * nr + 1

    for li, g in enumerate(members):
        k, _ = _member_maps(g, inverse=False)
        lin = -2.0 * _real_vec(vectorize(g.B))
        f0 = np.zeros((dim, dim))
        if li > 0:
            f0[-1, -1] = -g.c
        f0[: 2 * nr, : 2 * nr] = np.eye(2 * nr)
        f0_blocks.append(f0)
        for v in range(2 * nr):
            mat = np.zeros((dim, dim))
            mat[: 2 * nr, -1] = k[:, v]
            mat[-1, : 2 * nr] = k[:, v]
            mat[-1, -1] = lin[v]
            f_var[v][li] = mat
        if li == 0:
            t_mat = np.zeros((dim, dim))
            t_mat[-1, -1] = 1.0
            f_var[2 * nr][li] = t_mat

    coeffs = np.zeros(nv)
    coeffs[-1] = -1.0  # maximize -t  <=>  minimize t
    prog = conic.lmi_program(f0_blocks, f_var, coeffs)
    prog.meta["lowering"] = "convex_sdp"
    return LoweredProgram(program=prog, n=p.n, r=p.r, kind="sdp")


def lower_socp(p: QMPProblem) -> LoweredProgram:
    """Second-order cone form for strictly convex QMP (all A_l, D_l PD).

    Each member becomes ||A^{1/2} X D^{1/2} + A^{-1/2} B D^{-1/2}||_F with
    the completed-square constant c - Tr(A^{-1} B D^{-1} B^H) cached on the
    lowered program. A constraint whose radius squared is negative is
    unsatisfiable and the program is marked inconsistent.
    """
    if p.equalities:
        raise NotConvex("SOCP lowering treats inequality constraints only")
    for g in p.members():
        w_a = np.linalg.eigvalsh(hermitianize(g.A))
        w_d = np.linalg.eigvalsh(hermitianize(g.D))
        if w_a[0] <= PSD_TOL or w_d[0] <= PSD_TOL:
            raise NotPositiveDefinite("SOCP lowering requires PD A and D in every member")

    nr = p.n * p.r
    nv = 2 * nr + 1
    members = p.members()
    f0_blocks = []
    f_var = [dict() for _ in range(nv)]
    dim = 2 * nr + 1
    constants = []
    inconsistent = False

    for li, g in enumerate(members):
        k, shift = _member_maps(g, inverse=True)
        a_inv = np.linalg.inv(g.A)
        d_inv = np.linalg.inv(g.D)
        const = float(g.c - np.trace(a_inv @ g.B @ d_inv @ g.B.conj().T).real)
        constants.append(const)
        f0 = np.zeros((dim, dim))
        f0[0, 1:] = shift
        f0[1:, 0] = shift
        if li > 0:
            radius_sq = -const
            if radius_sq < 0:
                inconsistent = True
                radius_sq = 0.0
            rho = float(np.sqrt(radius_sq))
            f0[0, 0] = rho
            f0[1:, 1:] += rho * np.eye(2 * nr)
        f0_blocks.append(f0)
        for v in range(2 * nr):
            mat = np.zeros((dim, dim))
            mat[0, 1:] = k[:, v]
            mat[1:, 0] = k[:, v]
            f_var[v][li] = mat
        if li == 0:
            t_mat = np.zeros((dim, dim))
            t_mat[0, 0] = 1.0
            t_mat[1:, 1:] = np.eye(2 * nr)
            f_var[2 * nr][li] = t_mat

    coeffs = np.zeros(nv)
    coeffs[-1] = -1.0
    prog = conic.lmi_program(f0_blocks, f_var, coeffs)
    prog.meta["lowering"] = "socp"
    prog.inconsistent = inconsistent
    return LoweredProgram(program=prog, n=p.n, r=p.r, kind="socp", square_constants=constants)
