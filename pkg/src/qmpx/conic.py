# src/qmpx/conic.py

"""Self-contained primal-dual interior-point solver for block-diagonal
real symmetric SDPs in standard form

    min <C, X>   s.t.  <A_i, X> = b_i (i = 1..m),   X >= 0 blockwise,

where 1x1 blocks act as nonnegative scalars (LP part) and second-order
cones enter as arrow-matrix PSD blocks. Search direction is HKM scaling
with a Mehrotra predictor-corrector step and a 0.98 fraction-to-boundary
rule; the Schur system carries a static 1e-10 regularization and one
iterative-refinement pass.

Inequalities <A,X> <= rhs are modeled by the builders with 1x1 slack
blocks. Pinned single entries of a block (corner / identity-block pins)
are stored as ``fixed_entries`` and converted to equality rows by
:func:`presolve`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NumericalBreakdown

DEFAULT_TOL = 1e-8
STEP_FRACTION = 0.98
SCHUR_REGULARIZATION = 1e-10
PIVOT_THRESHOLD = 1e-12


@dataclass
class ConicProgram:
    """Standard-form block SDP data.

    ``rows[i]`` maps block index -> symmetric coefficient matrix (absent
    blocks contribute zero); ``c_blocks`` likewise for the objective.
    ``fixed_entries`` pins single entries of blocks, ``(block, i, j, value)``.
    ``meta`` is free-form space for the lowering passes (recovery info).
    """

    blocks: list
    c_blocks: dict
    rows: list
    b: np.ndarray
    fixed_entries: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    inconsistent: bool = False

    @property
    def m(self) -> int:
        return len(self.rows)

    def row_value(self, i: int, x_blocks) -> float:
        return sum(float(np.sum(mat * x_blocks[bi])) for bi, mat in self.rows[i].items())

    def objective_value(self, x_blocks) -> float:
        return sum(float(np.sum(mat * x_blocks[bi])) for bi, mat in self.c_blocks.items())


@dataclass
class ConicSolution:
    x_blocks: list
    y: np.ndarray
    s_blocks: list
    status: str  # Optimal | Infeasible | MaxIterations
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    primal_objective: float
    dual_objective: float
    certificate: np.ndarray | None = None


class SdpBuilder:
    """Incremental construction of a primal standard-form program."""

    def __init__(self):
        self.blocks = []
        self.c_blocks = {}
        self.rows = []
        self.rhs = []
        self.fixed = []
        self.meta = {}

    def add_block(self, dim: int) -> int:
        self.blocks.append(int(dim))
        return len(self.blocks) - 1

    def add_objective(self, block: int, mat) -> None:
        mat = np.asarray(mat, dtype=float)
        if block in self.c_blocks:
            self.c_blocks[block] = self.c_blocks[block] + mat
        else:
            self.c_blocks[block] = mat.copy()

    def add_eq(self, terms: dict, rhs: float) -> None:
        self.rows.append({b: np.asarray(m, dtype=float).copy() for b, m in terms.items()})
        self.rhs.append(float(rhs))

    def add_leq(self, terms: dict, rhs: float) -> int:
        """<terms, X> <= rhs via a fresh 1x1 slack block; returns slack index."""
        slack = self.add_block(1)
        row = {b: np.asarray(m, dtype=float).copy() for b, m in terms.items()}
        row[slack] = np.array([[1.0]])
        self.rows.append(row)
        self.rhs.append(float(rhs))
        return slack

    def pin_entry(self, block: int, i: int, j: int, value: float) -> None:
        self.fixed.append((block, int(i), int(j), float(value)))

    def build(self) -> ConicProgram:
        return ConicProgram(
            blocks=list(self.blocks),
            c_blocks=dict(self.c_blocks),
            rows=list(self.rows),
            b=np.array(self.rhs, dtype=float),
            fixed_entries=list(self.fixed),
            meta=dict(self.meta),
        )


def lmi_program(f0_blocks: list, f_var_blocks: list, obj_coeffs) -> ConicProgram:
    """Build the standard-form program whose *dual* is the LMI problem

        max  obj_coeffs^T u   s.t.   F0_b + sum_k u_k Fk_b >= 0  per block b.

    ``f0_blocks`` is a list of symmetric matrices (one per block) and
    ``f_var_blocks[k]`` a dict block -> matrix for variable k. The LMI
    solution is read off the dual vector: u = solution.y.
    """
    builder = SdpBuilder()
    for f0 in f0_blocks:
        builder.add_block(np.asarray(f0).shape[0])
        builder.add_objective(len(builder.blocks) - 1, f0)
    obj_coeffs = np.asarray(obj_coeffs, dtype=float)
    for k, terms in enumerate(f_var_blocks):
        builder.add_eq({b: -np.asarray(m, dtype=float) for b, m in terms.items()}, obj_coeffs[k])
    prog = builder.build()
    prog.meta["form"] = "lmi"
    return prog


def _sym_basis_row(dim: int, i: int, j: int) -> np.ndarray:
    e = np.zeros((dim, dim))
    if i == j:
        e[i, i] = 1.0
    else:
        e[i, j] = 0.5
        e[j, i] = 0.5
    return e


def presolve(prog: ConicProgram) -> ConicProgram:
    """Materialize pinned entries as equality rows and drop dependent rows.

    Row dependence is detected with a pivoted QR at relative threshold
    1e-12; dropped rows with inconsistent right-hand sides mark the
    program infeasible (reported by :func:`solve`).
    """
    rows = [dict(r) for r in prog.rows]
    rhs = list(prog.b)
    for (bi, i, j, v) in prog.fixed_entries:
        rows.append({bi: _sym_basis_row(prog.blocks[bi], i, j)})
        rhs.append(v)

    m = len(rows)
    out = ConicProgram(
        blocks=list(prog.blocks),
        c_blocks=dict(prog.c_blocks),
        rows=rows,
        b=np.array(rhs, dtype=float),
        fixed_entries=[],
        meta=dict(prog.meta),
        inconsistent=prog.inconsistent,
    )
    if m <= 1:
        return out

    total = sum(d * d for d in prog.blocks)
    dense = np.zeros((m, total))
    offsets = np.concatenate([[0], np.cumsum([d * d for d in prog.blocks])])
    for i, row in enumerate(rows):
        for bi, mat in row.items():
            dense[i, offsets[bi]:offsets[bi + 1]] = np.asarray(mat).ravel()

    q, r, piv = sla.qr(dense.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    scale = diag[0] if diag.size and diag[0] > 0 else 1.0
    rank = int(np.sum(diag > PIVOT_THRESHOLD * scale))
    if rank == m:
        return out

    keep = np.sort(piv[:rank])
    drop = np.sort(piv[rank:])
    kept_rows = dense[keep]
    inconsistent = out.inconsistent
    for i in drop:
        coef, *_ = np.linalg.lstsq(kept_rows.T, dense[i], rcond=None)
        if abs(out.b[i] - coef @ out.b[keep]) > 1e-8 * (1.0 + np.abs(out.b).max()):
            inconsistent = True
    out.rows = [rows[i] for i in keep]
    out.b = out.b[keep]
    out.inconsistent = inconsistent
    return out


class _Workspace:
    """Stacked per-block data for fast Schur-complement assembly."""

    def __init__(self, prog: ConicProgram):
        self.prog = prog
        self.dense_ids = [i for i, d in enumerate(prog.blocks) if d > 1]
        self.diag_ids = [i for i, d in enumerate(prog.blocks) if d == 1]
        m = prog.m
        self.m = m
        self.a_dense = []  # per dense block: (m, d, d)
        self.a_flat = []  # per dense block: (m, d*d)
        self.c_dense = []
        for bi in self.dense_ids:
            d = prog.blocks[bi]
            stack = np.zeros((m, d, d))
            for i, row in enumerate(prog.rows):
                if bi in row:
                    stack[i] = row[bi]
            self.a_dense.append(stack)
            self.a_flat.append(stack.reshape(m, d * d))
            self.c_dense.append(np.asarray(prog.c_blocks.get(bi, np.zeros((d, d))), dtype=float))
        nd = len(self.diag_ids)
        self.a_diag = np.zeros((m, nd))
        for i, row in enumerate(prog.rows):
            for k, bi in enumerate(self.diag_ids):
                if bi in row:
                    self.a_diag[i, k] = float(np.asarray(row[bi]).ravel()[0])
        self.c_diag = np.array(
            [float(np.asarray(prog.c_blocks.get(bi, np.zeros((1, 1)))).ravel()[0]) for bi in self.diag_ids]
        )
        self.nu = sum(prog.blocks[bi] for bi in self.dense_ids) + nd
        self.c_norm = np.sqrt(sum(np.sum(c * c) for c in self.c_dense) + np.sum(self.c_diag**2))
        self.a_norms = np.sqrt(
            sum(np.sum(f * f, axis=1) for f in self.a_flat) + np.sum(self.a_diag**2, axis=1)
        ) if m else np.zeros(0)

    def apply_a(self, xd, xv):
        out = np.zeros(self.m)
        for f, x in zip(self.a_flat, xd):
            out += f @ x.ravel()
        if self.a_diag.size:
            out += self.a_diag @ xv
        return out

    def apply_at(self, y):
        mats = [np.tensordot(y, st, axes=1) for st in self.a_dense]
        vec = self.a_diag.T @ y if self.a_diag.size else np.zeros(0)
        return mats, vec


def _chol_psd(mat, what):
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        jitter = 1e-14 * max(1.0, float(np.trace(mat)))
        try:
            return np.linalg.cholesky(mat + jitter * np.eye(mat.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown(f"{what} iterate left the cone") from exc


def _max_step_dense(x, dx):
    """Largest a with x + a*dx staying PSD (inf if direction is safe)."""
    try:
        lam = sla.eigh(dx, x, eigvals_only=True, check_finite=False)
    except np.linalg.LinAlgError:
        # iterate is at the numerical cone boundary; fall back to a
        # jittered factorization
        l = _chol_psd(x, "step")
        w = sla.solve_triangular(l, dx, lower=True, check_finite=False)
        w = sla.solve_triangular(l, w.conj().T, lower=True, check_finite=False)
        lam = np.linalg.eigvalsh((w + w.conj().T) / 2)
    lo = lam[0]
    if lo >= -1e-16:
        return np.inf
    return -1.0 / lo


def _max_step_diag(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def solve(
    prog: ConicProgram,
    tol: float = DEFAULT_TOL,
    max_iter: int = 100,
) -> ConicSolution:
    """Run the predictor-corrector interior-point method.

    On ``Optimal`` the normalized primal/dual residuals and the
    complementarity gap Tr(XS)/(1+|Tr(CX)|) are all below ``tol``.
    Divergence over 20 consecutive iterations flags ``Infeasible`` and the
    (normalized) dual vector is reported as the certificate direction.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    prog = presolve(prog)
    if prog.inconsistent:
        return ConicSolution(
            x_blocks=[np.zeros((d, d)) for d in prog.blocks],
            y=np.zeros(prog.m),
            s_blocks=[np.zeros((d, d)) for d in prog.blocks],
            status="Infeasible",
            gap=np.inf,
            primal_residual=np.inf,
            dual_residual=np.inf,
            iterations=0,
            primal_objective=np.nan,
            dual_objective=np.nan,
        )
    ws = _Workspace(prog)
    m = ws.m
    b = prog.b

    # SDPT3-style cold start: scaled identities keep early steps sane.
    dim_max = max(prog.blocks) if prog.blocks else 1
    if m:
        xi = max(10.0, np.sqrt(dim_max), float(np.max((1.0 + np.abs(b)) / (1.0 + ws.a_norms))))
    else:
        xi = max(10.0, np.sqrt(dim_max))
    eta = max(10.0, np.sqrt(dim_max), ws.c_norm, float(np.max(ws.a_norms)) if m else 0.0)
    xd = [xi * np.eye(prog.blocks[bi]) for bi in ws.dense_ids]
    sd = [eta * np.eye(prog.blocks[bi]) for bi in ws.dense_ids]
    xv = xi * np.ones(len(ws.diag_ids))
    sv = eta * np.ones(len(ws.diag_ids))
    y = np.zeros(m)

    b_norm = 1.0 + float(np.linalg.norm(b))
    c_norm = 1.0 + ws.c_norm
    best_merit = np.inf
    stall = 0
    status = "MaxIterations"
    it = 0

    def current_metrics():
        rp = b - ws.apply_a(xd, xv)
        at_mats, at_vec = ws.apply_at(y)
        rd_mats = [c - s - am for c, s, am in zip(ws.c_dense, sd, at_mats)]
        rd_vec = ws.c_diag - sv - at_vec
        dual_norm = np.sqrt(sum(np.sum(r * r) for r in rd_mats) + np.sum(rd_vec**2))
        comp = sum(float(np.sum(x * s)) for x, s in zip(xd, sd)) + float(xv @ sv)
        pobj = sum(float(np.sum(c * x)) for c, x in zip(ws.c_dense, xd)) + float(ws.c_diag @ xv)
        dobj = float(b @ y)
        return rp, rd_mats, rd_vec, dual_norm, comp, pobj, dobj

    def _iterate(rp, rd_mats, rd_vec, mu):
        nonlocal xv, sv, y
        # shared factorizations for this iteration
        sinv = []
        for s in sd:
            ls = _chol_psd(s, "dual")
            inv = sla.cho_solve((ls, True), np.eye(s.shape[0]), check_finite=False)
            inv = (inv + inv.T) / 2
            sinv.append(inv)
        schur = np.zeros((m, m))
        for stack, flat, x, si in zip(ws.a_dense, ws.a_flat, xd, sinv):
            u = np.matmul(np.matmul(x, stack), si)
            w = (u + u.transpose(0, 2, 1)) / 2
            schur += flat @ w.reshape(m, -1).T
        if len(ws.diag_ids):
            schur += (ws.a_diag * (xv / sv)) @ ws.a_diag.T
        schur = (schur + schur.T) / 2
        reg = SCHUR_REGULARIZATION
        factor = None
        while factor is None:
            try:
                factor = sla.cho_factor(schur + reg * np.eye(m), check_finite=False)
            except np.linalg.LinAlgError:
                reg *= 100.0
                if reg > 1e-4:
                    raise NumericalBreakdown("Schur complement singular beyond regularization")

        def schur_solve(rhs):
            dy = sla.cho_solve(factor, rhs, check_finite=False)
            dy += sla.cho_solve(factor, rhs - schur @ dy, check_finite=False)
            return dy

        def assemble(sigma_mu, corr_mats, corr_vec):
            """One HKM direction for complementarity target sigma_mu."""
            rhs = rp.copy()
            aux = np.zeros(m)
            for flat, x, si, rd in zip(ws.a_flat, xd, sinv, rd_mats):
                v = x @ rd @ si
                v = (v + v.T) / 2
                aux += flat @ v.ravel()
                rhs += flat @ x.ravel()
                rhs -= sigma_mu * (flat @ si.ravel())
            if len(ws.diag_ids):
                aux += ws.a_diag @ (xv * rd_vec / sv)
                rhs += ws.a_diag @ xv
                rhs -= sigma_mu * (ws.a_diag @ (1.0 / sv))
            rhs += aux
            if corr_mats is not None:
                for flat, cm in zip(ws.a_flat, corr_mats):
                    rhs += flat @ cm.ravel()
                if len(ws.diag_ids):
                    rhs += ws.a_diag @ corr_vec
            dy = schur_solve(rhs)
            dat_mats, dat_vec = ws.apply_at(dy)
            ds_mats = [rd - am for rd, am in zip(rd_mats, dat_mats)]
            ds_vec = rd_vec - dat_vec
            dx_mats = []
            for x, si, ds, k in zip(xd, sinv, ds_mats, range(len(xd))):
                nxt = sigma_mu * si - x
                v = x @ ds @ si
                nxt -= (v + v.T) / 2
                if corr_mats is not None:
                    nxt -= corr_mats[k]
                dx_mats.append((nxt + nxt.T) / 2)
            if len(ws.diag_ids):
                dx_vec = sigma_mu / sv - xv - xv * ds_vec / sv
                if corr_mats is not None:
                    dx_vec -= corr_vec
            else:
                dx_vec = np.zeros(0)
            return dx_mats, dx_vec, dy, ds_mats, ds_vec

        # predictor
        dxm_a, dxv_a, dy_a, dsm_a, dsv_a = assemble(0.0, None, None)
        ap = min(
            [1.0]
            + [_max_step_dense(x, dx) for x, dx in zip(xd, dxm_a)]
            + ([_max_step_diag(xv, dxv_a)] if len(ws.diag_ids) else [])
        )
        ad = min(
            [1.0]
            + [_max_step_dense(s, ds) for s, ds in zip(sd, dsm_a)]
            + ([_max_step_diag(sv, dsv_a)] if len(ws.diag_ids) else [])
        )
        comp_aff = sum(
            float(np.sum((x + ap * dx) * (s + ad * ds)))
            for x, dx, s, ds in zip(xd, dxm_a, sd, dsm_a)
        ) + float((xv + ap * dxv_a) @ (sv + ad * dsv_a))
        mu_aff = max(comp_aff, 0.0) / max(ws.nu, 1)
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0

        # corrector (second-order term from the affine direction)
        corr_mats = []
        for dx, ds, si in zip(dxm_a, dsm_a, sinv):
            v = dx @ ds @ si
            corr_mats.append((v + v.T) / 2)
        corr_vec = dxv_a * dsv_a / sv if len(ws.diag_ids) else np.zeros(0)
        dxm, dxv, dy, dsm, dsv = assemble(sigma * mu, corr_mats, corr_vec)

        ap = min(
            [1.0 / STEP_FRACTION]
            + [_max_step_dense(x, dx) for x, dx in zip(xd, dxm)]
            + ([_max_step_diag(xv, dxv)] if len(ws.diag_ids) else [])
        )
        ad = min(
            [1.0 / STEP_FRACTION]
            + [_max_step_dense(s, ds) for s, ds in zip(sd, dsm)]
            + ([_max_step_diag(sv, dsv)] if len(ws.diag_ids) else [])
        )
        ap = STEP_FRACTION * ap
        ad = STEP_FRACTION * ad
        for k in range(len(xd)):
            xd[k] = (xd[k] + ap * dxm[k] + (xd[k] + ap * dxm[k]).T) / 2
            sd[k] = (sd[k] + ad * dsm[k] + (sd[k] + ad * dsm[k]).T) / 2
        xv = xv + ap * dxv
        sv = sv + ad * dsv
        y = y + ad * dy

    for it in range(1, max_iter + 1):
        rp, rd_mats, rd_vec, dual_norm, comp, pobj, dobj = current_metrics()
        mu = comp / max(ws.nu, 1)
        pinf = float(np.linalg.norm(rp)) / b_norm
        dinf = dual_norm / c_norm
        relgap = comp / (1.0 + abs(pobj))
        if pinf < tol and dinf < tol and relgap < tol:
            status = "Optimal"
            break

        merit = max(pinf, dinf, relgap)
        if merit < best_merit * (1 - 1e-3):
            best_merit = min(best_merit, merit)
            stall = 0
        else:
            stall += 1
        if (stall > 20 and max(pinf, dinf) > 1e3 * tol) or np.linalg.norm(y) > 1e13:
            status = "Infeasible"
            break
        try:
            _iterate(rp, rd_mats, rd_vec, mu)
        except NumericalBreakdown:
            # breakdown while the residuals refuse to close is the practical
            # infeasibility signature of this simple detector
            if max(pinf, dinf) > 1e3 * tol and it > 3:
                status = "Infeasible"
                break
            if max(pinf, dinf, relgap) < 100 * tol:
                status = "MaxIterations"
                break
            raise

    rp, rd_mats, rd_vec, dual_norm, comp, pobj, dobj = current_metrics()
    x_blocks = [None] * len(prog.blocks)
    s_blocks = [None] * len(prog.blocks)
    for k, bi in enumerate(ws.dense_ids):
        x_blocks[bi] = xd[k]
        s_blocks[bi] = sd[k]
    for k, bi in enumerate(ws.diag_ids):
        x_blocks[bi] = np.array([[xv[k]]])
        s_blocks[bi] = np.array([[sv[k]]])
    return ConicSolution(
        x_blocks=x_blocks,
        y=y,
        s_blocks=s_blocks,
        status=status,
        gap=comp / (1.0 + abs(pobj)),
        primal_residual=float(np.linalg.norm(rp)) / b_norm,
        dual_residual=dual_norm / c_norm,
        iterations=it,
        primal_objective=pobj,
        dual_objective=dobj,
        certificate=(y / max(np.linalg.norm(y), 1e-300)) if status == "Infeasible" else None,
    )


def dump_program(prog: ConicProgram) -> str:
    """Ad-hoc textual dump of the standard-form data for debugging."""
    lines = [f"blocks: {prog.blocks}", f"m: {prog.m}"]
    for bi, mat in sorted(prog.c_blocks.items()):
        lines.append(f"C[{bi}] =\n{np.array_str(np.asarray(mat), precision=4)}")
    for i, row in enumerate(prog.rows):
        lines.append(f"row {i}: rhs={prog.b[i]:.6g}")
        for bi, mat in sorted(row.items()):
            lines.append(f"  A[{i}][{bi}] =\n{np.array_str(np.asarray(mat), precision=4)}")
    for (bi, i, j, v) in prog.fixed_entries:
        lines.append(f"pin block {bi} ({i},{j}) = {v:.6g}")
    return "\n".join(lines)
