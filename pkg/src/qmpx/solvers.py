# src/qmpx/solvers.py

"""Solution paths for QMP problems.

* ``solve_unconstrained`` / ``solve_weighted``: Wiener closed form
  X = -A^{-1} B for T2 objectives with positive definite A.
* ``solve_single_constraint``: semi-closed form for one power constraint,
  X(mu) = -(A0 + mu A1)^{-1} B0 with the multiplier found by bisection on
  the monotone decreasing g(mu).
* ``solve_convex_sdp`` / ``solve_socp``: lowering passes + interior point.
* ``solve_sdr``: lifted (T1) or homogenized (T2) semidefinite relaxation
  with rank-1 / block recovery, feasibility rescue and Gaussian
  randomization; reports the relaxation lower bound and rank gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic
from .errors import (
    ConicSolverFailure,
    InfeasibleBracket,
    InfeasibleProblem,
    KindMismatch,
    NotPositiveSemidefinite,
    NotSingleConstraintForm,
    SingularA,
)
from .linalg import (
    hermitian_inv_sqrt,
    hermitianize,
    is_psd,
    real_embed,
    real_unembed,
    unvec,
)
from .lowering import lower_convex_sdp, lower_socp
from .qmp import QMFunction, QMPProblem, evaluate, homogenize_t2, is_t2, lift_t1

PD_TOL = 1e-10
FEAS_TOL = 1e-7


@dataclass
class SolveReport:
    x_opt: np.ndarray
    objective: float
    path: str  # ClosedForm | Bisection | ConvexSDP | SOCP | SDR
    iterations: int
    kkt_residual: float
    mu: float | None = None
    sdr_rank_gap: float | None = None
    lower_bound: float | None = None
    constraint_violation: float = 0.0


def _require_pd(a: np.ndarray, tol: float = PD_TOL) -> None:
    w = np.linalg.eigvalsh(hermitianize(a))
    if w[0] <= tol:
        raise SingularA(f"A has min eigenvalue {w[0]:.3e}; need > {tol:.0e}")


def solve_unconstrained(f: QMFunction) -> SolveReport:
    """Closed-form minimizer -A^{-1} B of an unconstrained T2 function."""
    if not is_t2(f):
        raise KindMismatch("closed form requires the T2 form D = I")
    _require_pd(f.A)
    x = -np.linalg.solve(f.A, f.B)
    resid = float(np.linalg.norm(f.A @ x + f.B, "fro"))
    return SolveReport(
        x_opt=x,
        objective=evaluate(f, x),
        path="ClosedForm",
        iterations=0,
        kkt_residual=resid,
    )


def solve_weighted(f: QMFunction, w: np.ndarray) -> SolveReport:
    """Minimizer of the weighted objective Tr(W X^H A X) + 2Re Tr(W^H B^H X) + c.

    X = -A^{-1} B is optimal for every PSD weighting W (dominance), so the
    weighting only enters the reported stationarity residual A X W + B W.
    """
    w = hermitianize(w)
    if not is_psd(w, 1e-9):
        raise NotPositiveSemidefinite("weighting matrix must be PSD")
    _require_pd(f.A)
    x = -np.linalg.solve(f.A, f.B)
    resid = float(np.linalg.norm(f.A @ x @ w + f.B @ w, "fro"))
    quad = np.trace(w @ x.conj().T @ (f.A @ x)).real
    lin = np.trace(w.conj().T @ f.B.conj().T @ x).real
    return SolveReport(
        x_opt=x,
        objective=float(quad + 2 * lin + f.c),
        path="ClosedForm",
        iterations=0,
        kkt_residual=resid,
    )


# ---------------------------------------------------------------------------
# single power constraint: bisection on g(mu)
# ---------------------------------------------------------------------------


def _single_constraint_data(p: QMPProblem):
    if len(p.inequalities) != 1 or p.equalities:
        raise NotSingleConstraintForm("need exactly one inequality constraint")
    for g in p.members():
        if not is_t2(g):
            raise NotSingleConstraintForm("single-constraint form requires D = I")
    con = p.inequalities[0]
    if np.linalg.norm(con.B) > 1e-12 * (1 + np.linalg.norm(con.A)):
        raise NotSingleConstraintForm("constraint must be a pure power term (B = 0)")
    w1 = np.linalg.eigvalsh(con.A)
    if w1[0] <= PD_TOL:
        raise NotSingleConstraintForm("constraint matrix A1 must be positive definite")
    return p.objective, con


def _g_spectrum(a0: np.ndarray, a1: np.ndarray, b0: np.ndarray):
    """Eigen-data so that g(mu) = sum_i w_i / (lam_i + mu)^2.

    Eigenvalue noise of the PSD pencil is clipped at zero and coefficient
    junk far below the dominant weight is dropped, otherwise a singular A0
    with B0 in its range fakes an unbounded power demand at mu = 0.
    """
    t = hermitian_inv_sqrt(a1)
    k = hermitianize(t @ a0 @ t)
    lam, q = np.linalg.eigh(k)
    lam = np.maximum(lam, 0.0)
    bt = q.conj().T @ (t @ b0)
    w = np.sum(np.abs(bt) ** 2, axis=1)
    w_scale = float(np.max(w)) if w.size else 0.0
    w[w < 1e-26 * w_scale] = 0.0
    return lam, w


def _g_value(lam: np.ndarray, w: np.ndarray, mu: float) -> float:
    live = w > 0
    den = lam[live] + mu
    if np.any(den <= 0):
        return float("inf")
    return float(np.sum(w[live] / den**2))


def g_mu(p: QMPProblem, mu: float) -> float:
    """Constraint power Tr(X(mu)^H A1 X(mu)) as a function of the multiplier."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    obj, con = _single_constraint_data(p)
    lam, w = _g_spectrum(obj.A, con.A, obj.B)
    return _g_value(lam, w, mu)


def solve_single_constraint(
    p: QMPProblem,
    power: float | None = None,
    tol: float = 1e-10,
) -> SolveReport:
    """Semi-closed-form solve of min f0 s.t. Tr(X^H A1 X) <= P.

    If g(0) <= P the constraint is inactive and the Wiener point is
    returned (pseudo-inverse stationary point when A0 is PSD-singular).
    Otherwise the multiplier solves g(mu) = P by bisection with bracket
    doubling (200-step caps) to |g(mu) - P| < tol * P.
    """
    obj, con = _single_constraint_data(p)
    if power is None:
        power = -con.c
    if power <= 0:
        raise NotSingleConstraintForm(f"power budget must be positive, got {power}")
    if not is_psd(obj.A, 1e-9):
        raise NotSingleConstraintForm("bisection path requires PSD A0")

    lam, w = _g_spectrum(obj.A, con.A, obj.B)
    iterations = 0
    if _g_value(lam, w, 0.0) <= power:
        mu = 0.0
        w0 = np.linalg.eigvalsh(obj.A)
        if w0[0] > PD_TOL:
            x = -np.linalg.solve(obj.A, obj.B)
        else:
            x = -np.linalg.pinv(obj.A) @ obj.B
    else:
        hi = 1.0
        for _ in range(200):
            iterations += 1
            if _g_value(lam, w, hi) <= power:
                break
            hi *= 2.0
        else:
            raise InfeasibleBracket("no multiplier bracket found after 200 doublings")
        lo = 0.0
        mu = hi
        for _ in range(200):
            iterations += 1
            mu = 0.5 * (lo + hi)
            g = _g_value(lam, w, mu)
            if abs(g - power) < tol * power:
                break
            if g > power:
                lo = mu
            else:
                hi = mu
        x = -np.linalg.solve(obj.A + mu * con.A, obj.B)

    usage = float(np.trace(x.conj().T @ con.A @ x).real)
    if usage > power * (1 + 1e-9):
        # spectral and direct evaluations disagree (ill-conditioned A0 + mu A1):
        # re-bisect on the directly evaluated power
        lo, hi = mu, max(2 * mu, 1.0)
        for _ in range(200):
            iterations += 1
            x_hi = -np.linalg.solve(obj.A + hi * con.A, obj.B)
            if float(np.trace(x_hi.conj().T @ con.A @ x_hi).real) <= power:
                break
            hi *= 2.0
        for _ in range(200):
            iterations += 1
            mu = 0.5 * (lo + hi)
            x = -np.linalg.solve(obj.A + mu * con.A, obj.B)
            usage = float(np.trace(x.conj().T @ con.A @ x).real)
            if abs(usage - power) < tol * power:
                break
            if usage > power:
                lo = mu
            else:
                hi = mu

    resid = float(np.linalg.norm((obj.A + mu * con.A) @ x + obj.B, "fro"))
    return SolveReport(
        x_opt=x,
        objective=evaluate(obj, x),
        path="Bisection",
        iterations=iterations,
        kkt_residual=resid,
        mu=mu,
        constraint_violation=max(0.0, usage - power),
    )


# ---------------------------------------------------------------------------
# conic paths
# ---------------------------------------------------------------------------


def _max_violation(p: QMPProblem, x: np.ndarray) -> float:
    v = 0.0
    for g in p.inequalities:
        v = max(v, evaluate(g, x))
    for g in p.equalities:
        v = max(v, abs(evaluate(g, x)))
    return v


def _run_conic(prog: conic.ConicProgram, tol: float) -> conic.ConicSolution:
    sol = conic.solve(prog, tol=tol)
    if sol.status == "Infeasible":
        raise InfeasibleProblem("conic backend reports an infeasible program")
    if sol.status != "Optimal" and max(sol.primal_residual, sol.dual_residual, sol.gap) > 100 * tol:
        raise ConicSolverFailure(
            f"status={sol.status} residuals=({sol.primal_residual:.2e},"
            f" {sol.dual_residual:.2e}, gap {sol.gap:.2e})"
        )
    return sol


def solve_convex_sdp(p: QMPProblem, tol: float = 1e-9) -> SolveReport:
    """Exact solve of a convex QMP through the Schur-complement SDP form."""
    low = lower_convex_sdp(p)
    sol = _run_conic(low.program, tol)
    x = low.recover_x(sol)
    return SolveReport(
        x_opt=x,
        objective=evaluate(p.objective, x),
        path="ConvexSDP",
        iterations=sol.iterations,
        kkt_residual=max(sol.primal_residual, sol.dual_residual, sol.gap),
        constraint_violation=max(0.0, _max_violation(p, x)),
    )


def solve_socp(p: QMPProblem, tol: float = 1e-9) -> SolveReport:
    """Exact solve of a strictly convex QMP through the SOCP form."""
    low = lower_socp(p)
    sol = _run_conic(low.program, tol)
    x = low.recover_x(sol)
    return SolveReport(
        x_opt=x,
        objective=evaluate(p.objective, x),
        path="SOCP",
        iterations=sol.iterations,
        kkt_residual=max(sol.primal_residual, sol.dual_residual, sol.gap),
        constraint_violation=max(0.0, _max_violation(p, x)),
    )


# ---------------------------------------------------------------------------
# semidefinite relaxation with recovery
# ---------------------------------------------------------------------------


def _embedded_sdr_program(mats, dim, n_ineq, n_eq, pins):
    """Primal-form real SDP for min Tr(M0 U) under sign constraints and pins."""
    builder = conic.SdpBuilder()
    main = builder.add_block(2 * dim)
    builder.add_objective(main, real_embed(mats[0]))
    for i in range(1, 1 + n_ineq):
        builder.add_leq({main: real_embed(mats[i])}, 0.0)
    for j in range(1 + n_ineq, 1 + n_ineq + n_eq):
        builder.add_eq({main: real_embed(mats[j])}, 0.0)
    for (i, j, v) in pins:
        # real parts live in both diagonal quadrants, imaginary in the off ones
        builder.pin_entry(main, i, j, v)
        builder.pin_entry(main, dim + i, dim + j, v)
        builder.pin_entry(main, dim + i, j, 0.0)
        if i != j:
            builder.pin_entry(main, dim + j, i, 0.0)
    return builder.build(), main


def _scale_to_feasible(p: QMPProblem, x: np.ndarray) -> np.ndarray:
    """Rescale X to restore violated pure power rows (B = 0).

    Inequalities bound the scale from above; a pure-power equality pins it
    exactly (the first such row wins, the rest are only verified by the
    caller's feasibility check).
    """
    t = 1.0
    for g in p.equalities:
        if np.linalg.norm(g.B) > 1e-12 or g.c >= 0:
            continue
        quad = float(np.trace(g.D @ x.conj().T @ (g.A @ x)).real)
        if quad > 1e-300:
            t = float(np.sqrt(-g.c / quad))
            break
    for g in p.inequalities:
        if np.linalg.norm(g.B) > 1e-12 or g.c >= 0:
            continue
        quad = float(np.trace(g.D @ x.conj().T @ (g.A @ x)).real)
        if t * t * quad + g.c > 0 and quad > 0:
            t = min(t, np.sqrt(-g.c / quad) * (1 - 1e-12))
    return t * x


def solve_sdr(
    p: QMPProblem,
    tol: float = 1e-9,
    randomization_rounds: int = 100,
    seed: int = 0,
    feas_tol: float = FEAS_TOL,
) -> SolveReport:
    """Solve the semidefinite relaxation and recover a feasible candidate.

    T2 problems go through the homogenized form (dimension n+r); anything
    else through the general lift (dimension nr+1). The report carries the
    relaxation lower bound, the rank gap of the solution block, and the
    residual violation of the best candidate found.
    """
    rng = np.random.default_rng(seed)
    use_homog = p.kind == "T2"
    if use_homog:
        h = homogenize_t2(p)
        dim = h.dim
        pins = [
            (p.n + i, p.n + j, 1.0 if i == j else 0.0)
            for i in range(p.r)
            for j in range(i, p.r)
        ]
        prog, main = _embedded_sdr_program(h.ms, dim, h.n_ineq, h.n_eq, pins)
        rank_cut = p.r
    else:
        l = lift_t1(p)
        dim = l.dim
        pins = [(dim - 1, dim - 1, 1.0)]
        prog, main = _embedded_sdr_program(l.omegas, dim, l.n_ineq, l.n_eq, pins)
        rank_cut = 1

    sol = _run_conic(prog, tol)
    u = real_unembed(sol.x_blocks[main])
    u = hermitianize(u)
    lower_bound = 0.5 * sol.primal_objective

    lam = np.linalg.eigvalsh(u)[::-1]  # descending
    lead = max(lam[rank_cut - 1], 1e-300)
    rank_gap = float(max(lam[rank_cut], 0.0) / lead) if dim > rank_cut else 0.0

    candidates = []
    if use_homog:
        candidates.append(u[: p.n, p.n:])
    else:
        corner = u[-1, -1].real
        if corner > 1e-12:
            candidates.append(unvec(u[:-1, -1] / corner, p.n, p.r))
        w, q = np.linalg.eigh(u)
        v = q[:, -1] * np.sqrt(max(w[-1], 0.0))
        if abs(v[-1]) > 1e-6 * max(1.0, np.linalg.norm(v)):
            candidates.append(unvec(v[:-1] / v[-1], p.n, p.r))
        else:
            # dominant eigenvector decoupled from the corner (B = 0 case):
            # keep its direction and let feasibility rescaling size it
            candidates.append(unvec(v[:-1], p.n, p.r))

    if rank_gap > 1e-6 and randomization_rounds > 0:
        w, q = np.linalg.eigh(u)
        half = (q * np.sqrt(np.maximum(w, 0.0))) @ q.conj().T
        for _ in range(randomization_rounds):
            if use_homog:
                g = (rng.standard_normal((dim, p.r)) + 1j * rng.standard_normal((dim, p.r))) / np.sqrt(2)
                wmat = half @ g
                y0, z0 = wmat[: p.n], wmat[p.n:]
                uu, _, vv = np.linalg.svd(z0)
                unitary = uu @ vv
                candidates.append(y0 @ unitary.conj().T)
            else:
                g = (rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) / np.sqrt(2)
                z = half @ g
                if abs(z[-1]) > 1e-9:
                    candidates.append(unvec(z[:-1] / z[-1], p.n, p.r))

    best_x = None
    best_obj = np.inf
    best_viol = np.inf
    for cand in candidates:
        for x in (cand, _scale_to_feasible(p, cand)):
            viol = _max_violation(p, x)
            obj = evaluate(p.objective, x)
            if viol <= feas_tol:
                if best_viol > feas_tol or obj < best_obj:
                    best_x, best_obj, best_viol = x, obj, viol
            elif best_viol > feas_tol and viol < best_viol:
                best_x, best_obj, best_viol = x, obj, viol

    if best_x is None:
        raise ConicSolverFailure("SDR produced no usable candidate")
    return SolveReport(
        x_opt=best_x,
        objective=best_obj,
        path="SDR",
        iterations=sol.iterations,
        kkt_residual=max(sol.primal_residual, sol.dual_residual, sol.gap),
        sdr_rank_gap=rank_gap,
        lower_bound=lower_bound,
        constraint_violation=max(0.0, best_viol),
    )


# ---------------------------------------------------------------------------
# dispatcher
# ---------------------------------------------------------------------------


def solve_auto(p: QMPProblem, tol: float = 1e-9) -> SolveReport:
    """Route to the cheapest applicable path.

    Order: unconstrained closed form, single-constraint bisection, SOCP
    when everything is strictly PD, convex SDP when PSD, otherwise SDR.
    """
    if not p.inequalities and not p.equalities and p.kind == "T2":
        try:
            return solve_unconstrained(p.objective)
        except SingularA:
            pass
    try:
        return solve_single_constraint(p)
    except NotSingleConstraintForm:
        pass
    if not p.equalities:
        members = p.members()
        if all(is_psd(g.A, 1e-9) and is_psd(g.D, 1e-9) for g in members):
            pd = all(
                np.linalg.eigvalsh(g.A)[0] > 1e-9 and np.linalg.eigvalsh(g.D)[0] > 1e-9
                for g in members
            )
            return solve_socp(p, tol) if pd else solve_convex_sdp(p, tol)
    return solve_sdr(p, tol)
