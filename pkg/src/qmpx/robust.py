# src/qmpx/robust.py

"""Channel-error calculus for robust designs.

Estimation errors follow the Kronecker model dH = Sigma^{1/2} Hw Psi^{1/2}
with i.i.d. unit complex Gaussian Hw (complex Gaussian convention:
(x + jy)/sqrt(2)). Averaging a quadratic form over the error keeps it
quadratic; the second-order rules are

    E{H M H^H} = Hbar M Hbar^H + Tr(M Psi) Sigma
    E{H^H M H} = Hbar^H M Hbar + Tr(M Sigma) Psi

and first-order terms simply take the mean channel. ``robustify`` reruns
a QM-function assembly with these rules substituted for the exact ones,
so any nominal builder yields its error-averaged counterpart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingErrorModel, ShapeMismatch
from .linalg import as_matrix, crandn, hermitian_sqrt, hermitianize
from .qmp import QMFunction


def matrix_integration(a, b, r) -> np.ndarray:
    """E{Q R W^H} = B Tr(R A^T) for random Q, W with E{vec Q vec^H W} = A kron B.

    The value depends on the draws only through their joint second moment.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    r = as_matrix(r)
    if a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]:
        raise ShapeMismatch("A and B must be square")
    if r.shape != a.shape:
        raise ShapeMismatch(f"R must match A, got {r.shape} vs {a.shape}")
    return b * np.trace(r @ a.T)


@dataclass(frozen=True)
class ChannelError:
    """Mean channel with row (Sigma) and column (Psi) error correlations."""

    hbar: np.ndarray
    sigma: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        hbar = as_matrix(self.hbar)
        sigma = hermitianize(self.sigma)
        psi = hermitianize(self.psi)
        if sigma.shape[0] != hbar.shape[0]:
            raise ShapeMismatch("Sigma dimension must match channel rows")
        if psi.shape[0] != hbar.shape[1]:
            raise ShapeMismatch("Psi dimension must match channel cols")
        object.__setattr__(self, "hbar", hbar)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def exact(cls, h) -> "ChannelError":
        h = as_matrix(h)
        return cls(h, np.zeros((h.shape[0],) * 2), np.zeros((h.shape[1],) * 2))

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """One channel realization Hbar + Sigma^{1/2} Hw Psi^{1/2}."""
        rows, cols = self.hbar.shape
        hw = crandn(rng, rows, cols)
        return self.hbar + hermitian_sqrt(self.sigma) @ hw @ hermitian_sqrt(self.psi)


def expect_first_order(e: ChannelError, x) -> np.ndarray:
    """E{H X} = Hbar X."""
    x = as_matrix(x)
    if x.shape[0] != e.hbar.shape[1]:
        raise ShapeMismatch("X rows must match channel cols")
    return e.hbar @ x


def expect_second_order(e: ChannelError, x) -> np.ndarray:
    """E{H X X^H H^H} = Hbar X X^H Hbar^H + Tr(X X^H Psi) Sigma."""
    x = as_matrix(x)
    if x.shape[0] != e.hbar.shape[1]:
        raise ShapeMismatch("X rows must match channel cols")
    xxh = x @ x.conj().T
    return hermitianize(e.hbar @ xxh @ e.hbar.conj().T + np.trace(xxh @ e.psi) * e.sigma)


class ChannelMoments:
    """Per-channel expectation rules keyed by channel id.

    ``quad_right(ch, M)`` is E{H M H^H}, ``quad_left(ch, M)`` is E{H^H M H},
    and ``mean(ch)`` the first-order channel. Exact channels are registered
    as zero-correlation error models, so one assembly code path serves both
    the nominal and the robust designs.
    """

    def __init__(self, errors: dict):
        self._errors = dict(errors)

    def __contains__(self, ch) -> bool:
        return ch in self._errors

    def model(self, ch) -> ChannelError:
        try:
            return self._errors[ch]
        except KeyError as exc:
            raise MissingErrorModel(f"no error model for channel {ch!r}") from exc

    def mean(self, ch) -> np.ndarray:
        return self.model(ch).hbar

    def quad_right(self, ch, m) -> np.ndarray:
        e = self.model(ch)
        m = as_matrix(m)
        return hermitianize(e.hbar @ m @ e.hbar.conj().T + np.trace(m @ e.psi) * e.sigma)

    def quad_left(self, ch, m) -> np.ndarray:
        e = self.model(ch)
        m = as_matrix(m)
        return hermitianize(e.hbar.conj().T @ m @ e.hbar + np.trace(m @ e.sigma) * e.psi)

    def draw_all(self, rng: np.random.Generator) -> dict:
        return {ch: e.draw(rng) for ch, e in self._errors.items()}


def nominal_moments(channels: dict) -> ChannelMoments:
    """Exact channels wrapped as zero-correlation error models."""
    return ChannelMoments({ch: ChannelError.exact(h) for ch, h in channels.items()})


def robustify(f_builder, errors: dict) -> QMFunction:
    """Average a nominal QM assembly over its channel errors.

    ``f_builder`` takes a :class:`ChannelMoments` and returns a
    :class:`QMFunction`; every channel the assembly touches must have an
    entry in ``errors`` (zero correlations meaning a perfectly known
    channel), otherwise :class:`MissingErrorModel` is raised.
    """
    moments = ChannelMoments(
        {ch: (e if isinstance(e, ChannelError) else ChannelError.exact(e)) for ch, e in errors.items()}
    )
    return f_builder(moments)
