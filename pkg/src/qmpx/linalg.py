# src/qmpx/linalg.py

"""Complex dense linear algebra utilities shared by every other module.

Conventions used throughout the package:

* matrices are plain ``numpy`` arrays (complex or real), row-major;
* ``vec`` stacks *columns*, so vec(A X B) = (B^T kron A) vec(X);
* the Hermitian-to-real embedding is [[Re, -Im], [Im, Re]], which doubles
  traces: Tr_real(embed(A) embed(B)) = 2 Tr_complex(A B).
"""

from __future__ import annotations

import numpy as np

from .errors import NotPositiveSemidefinite, ShapeMismatch

PSD_CLIP = 1e-10  # eigenvalues above -PSD_CLIP are treated as nonnegative


def as_matrix(a) -> np.ndarray:
    """Coerce input to a 2-D complex array (scalars/1-D promoted)."""
    m = np.atleast_2d(np.asarray(a, dtype=complex))
    if m.ndim != 2:
        raise ShapeMismatch(f"expected a matrix, got ndim={m.ndim}")
    return m


def hermitianize(a) -> np.ndarray:
    """Return the Hermitian part (A + A^H) / 2."""
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"cannot hermitianize a {a.shape} matrix")
    return (a + a.conj().T) / 2


def check_finite(a, what: str = "matrix") -> np.ndarray:
    a = np.asarray(a)
    if not np.all(np.isfinite(a.view(float) if np.iscomplexobj(a) else a)):
        raise ValueError(f"{what} contains NaN/Inf entries")
    return a


def kron(a, b) -> np.ndarray:
    """Kronecker product, shape (a.rows*b.rows, a.cols*b.cols)."""
    return np.kron(as_matrix(a), as_matrix(b))


def vectorize(m) -> np.ndarray:
    """Stack the columns of ``m`` into a single column vector."""
    m = as_matrix(m)
    return m.reshape(-1, 1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vectorize` for a rows x cols matrix."""
    v = np.asarray(v).reshape(-1)
    if v.size != rows * cols:
        raise ShapeMismatch(f"cannot reshape {v.size} entries to {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def hermitian_sqrt(m, clip: float = PSD_CLIP) -> np.ndarray:
    """Hermitian square root of a PSD matrix.

    Eigenvalues in [-clip, 0) are clipped to zero; anything below -clip
    raises :class:`NotPositiveSemidefinite`.
    """
    m = hermitianize(m)
    w, q = np.linalg.eigh(m)
    if w.size and w[0] < -clip:
        raise NotPositiveSemidefinite(f"min eigenvalue {w[0]:.3e} < -{clip:.0e}")
    w = np.maximum(w, 0.0)
    return hermitianize((q * np.sqrt(w)) @ q.conj().T)


def hermitian_inv_sqrt(m, clip: float = PSD_CLIP) -> np.ndarray:
    """Inverse Hermitian square root; requires strictly positive eigenvalues."""
    m = hermitianize(m)
    w, q = np.linalg.eigh(m)
    if w.size == 0 or w[0] <= clip:
        from .errors import NotPositiveDefinite

        raise NotPositiveDefinite(f"min eigenvalue {w[0] if w.size else 0:.3e} too small")
    return hermitianize((q / np.sqrt(w)) @ q.conj().T)


def real_embed(h) -> np.ndarray:
    """Map a Hermitian matrix to the real symmetric [[Re,-Im],[Im,Re]] form.

    Eigenvalues of the embedding are those of ``h``, each doubled in
    multiplicity, and complex traces double: Tr(embed(A) embed(B)) equals
    2 Tr(A B) for Hermitian A, B.
    """
    h = as_matrix(h)
    re, im = h.real, h.imag
    top = np.hstack([re, -im])
    bot = np.hstack([im, re])
    return np.vstack([top, bot])


def real_unembed(y) -> np.ndarray:
    """Project a real symmetric 2n x 2n matrix back to a Hermitian n x n one.

    Inverse of :func:`real_embed` on structured inputs; on arbitrary
    symmetric inputs it is the trace-preserving projection, so quadratic
    objective/constraint values computed against embedded data are kept.
    """
    y = as_matrix(y).real
    n2 = y.shape[0]
    if n2 % 2 or y.shape[0] != y.shape[1]:
        raise ShapeMismatch(f"cannot unembed shape {y.shape}")
    n = n2 // 2
    p = (y[:n, :n] + y[n:, n:]) / 2
    q = (y[n:, :n] - y[:n, n:]) / 2
    q = (q - q.T) / 2
    return p + 1j * q


def is_psd(m, tol: float) -> bool:
    """True iff the minimum eigenvalue of the Hermitian part is >= -tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    m = hermitianize(m)
    w = np.linalg.eigvalsh(m)
    return bool(w.size == 0 or w[0] >= -tol)


def is_pd(m, tol: float = 1e-9) -> bool:
    """True iff the minimum eigenvalue exceeds ``tol``."""
    m = hermitianize(m)
    w = np.linalg.eigvalsh(m)
    return bool(w.size > 0 and w[0] > tol)


def crandn(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Unit-variance circular complex Gaussian draws: (x + jy)/sqrt(2)."""
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)


def random_psd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    """Random PSD Hermitian matrix G G^H (full rank a.s.)."""
    g = crandn(rng, n, n)
    return hermitianize(scale * (g @ g.conj().T))


def random_pd(rng: np.random.Generator, n: int, ridge: float = 0.1) -> np.ndarray:
    """Random strictly positive definite Hermitian matrix."""
    return hermitianize(random_psd(rng, n) + ridge * np.eye(n))
