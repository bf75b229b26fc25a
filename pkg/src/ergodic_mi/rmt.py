"""Large-dimensional limits: the Marchenko-Pastur law and ring approximants."""

import math

import numpy as np

from .estimators import _logdet_i_plus, _stack_pairs
from .hpd import hermitize

__all__ = [
    "mp_closed_form",
    "mp_integral",
    "mp_density",
    "mp_cdf",
    "build_ring_matrix",
    "ring_mi",
    "two_block_logdet",
]


def mp_closed_form(rho):
    """``int log(1 + rho x) dMP(x)`` for the unit-ratio Marchenko-Pastur law.

    Equals ``2 log((sqrt(4 rho + 1) + 1) / 2) - (2 rho + 1 - sqrt(4 rho + 1))
    / (2 rho)``, evaluated in a cancellation-free form; zero at ``rho = 0``.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if rho == 0:
        return 0.0
    s = math.sqrt(4.0 * rho + 1.0)
    # (s + 1) / 2 = 1 + 2 rho / (s + 1);  2 rho + 1 - s = 4 rho^2 / (2 rho + 1 + s)
    return 2.0 * math.log1p(2.0 * rho / (s + 1.0)) - 2.0 * rho / (2.0 * rho + 1.0 + s)


def mp_density(x):
    """Density ``sqrt(4 / x - 1) / (2 pi)`` on ``(0, 4]``, zero elsewhere."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0) & (x <= 4)
    out[inside] = np.sqrt(4.0 / x[inside] - 1.0) / (2.0 * np.pi)
    return out


def mp_cdf(x):
    """Distribution function of the unit-ratio Marchenko-Pastur law.

    With ``x = 4 sin^2(t)`` the law becomes ``(4 / pi) cos^2(t) dt`` on
    ``[0, pi / 2]``, whose primitive is ``(2 t + sin 2t) / pi``.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 4.0)
    t = np.arcsin(np.sqrt(x) / 2.0)
    return (2.0 * t + np.sin(2.0 * t)) / np.pi


def mp_integral(rho, n_quad_points=512, f=None):
    """Midpoint quadrature of ``int f(x) dMP(x)``, ``f(x) = log(1 + rho x)``.

    The substitution ``x = 4 sin^2(t)`` turns the law into the smooth weight
    ``(4 / pi) cos^2(t)`` on ``[0, pi / 2]``, removing both endpoint
    singularities. Pass ``f`` to integrate another function (``rho`` is then
    ignored).
    """
    if n_quad_points < 64:
        raise ValueError("use at least 64 quadrature points")
    if f is None:
        if rho < 0:
            raise ValueError("rho must be nonnegative")
        f = lambda x: np.log1p(rho * x)  # noqa: E731
    h = (np.pi / 2.0) / n_quad_points
    t = (np.arange(n_quad_points) + 0.5) * h
    x = 4.0 * np.sin(t) ** 2
    return float(np.sum(f(x) * (4.0 / np.pi) * np.cos(t) ** 2) * h)


def build_ring_matrix(pairs, closed=True):
    """Block matrix with ``G_i`` on the diagonal and ``F_{i+1}`` below it.

    For ``M + 1`` pairs the result is ``(M+1) N x (M+1) K``. With
    ``closed=True`` the corner block (top-right) is ``F_0``, which closes the
    chain into a ring; ``closed=False`` leaves it empty.
    """
    F, G = _stack_pairs(pairs)
    n, N, K = F.shape
    if n < 2:
        raise ValueError("the ring matrix needs at least two pairs")
    H = np.zeros((n * N, n * K), dtype=complex)
    for i in range(n):
        H[i * N:(i + 1) * N, i * K:(i + 1) * K] = G[i]
        if i > 0:
            H[i * N:(i + 1) * N, (i - 1) * K:i * K] = F[i]
    if closed:
        H[:N, (n - 1) * K:] = F[0]
    return H


def ring_mi(pairs, rho, closed=True):
    """``log det(I + rho H H^*) / ((M + 1) N)`` for the ring matrix ``H``."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    H = build_ring_matrix(pairs, closed=closed)
    return _logdet_i_plus(rho, H) / H.shape[0]


def two_block_logdet(F_prev, G_prev, F, G, rho, W_prevprev):
    """Right-hand side of the two-step telescoping identity.

    Returns ``log det(I + diag(V, 0) + rho B B^*)`` with
    ``V = rho F_prev W_prevprev F_prev^*`` and
    ``B = [[G_prev, 0], [F, G]]``. Along the ``W`` recursion this equals the
    sum of the last two per-step increments.
    """
    F_prev, G_prev, F, G = (np.asarray(a, dtype=complex)
                            for a in (F_prev, G_prev, F, G))
    N, K = F.shape
    V = rho * (F_prev @ np.asarray(W_prevprev) @ F_prev.conj().T)
    B = np.zeros((2 * N, 2 * K), dtype=complex)
    B[:N, :K] = G_prev
    B[N:, :K] = F
    B[N:, K:] = G
    A = rho * (B @ B.conj().T)
    A[:N, :N] += V
    A[np.diag_indices(2 * N)] += 1.0
    L = np.linalg.cholesky(hermitize(A))
    return 2.0 * float(np.sum(np.log(np.diag(L).real)))
