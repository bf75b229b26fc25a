"""Mutual information estimators for block-bidiagonal channel operators.

Two routes to the mutual information per component are provided:

* the naive route, ``log det(I + rho H H^*) / (n N)`` for the
  block-bidiagonal truncation ``H`` of ``n`` channel blocks, and
* the recursive route, which propagates a ``K x K`` positive definite state
  ``W`` through ``W <- (I + rho G^* (I + rho F W F^*)^{-1} G)^{-1}`` and
  averages ``log det(I + rho F W_prev F^*) - log det W``.

The high-SNR offset ``kappa`` is estimated with the noiseless limit of the
same recursion, ``Z <- G^* (I + F Z^{-1} F^*)^{-1} G``, which is defined for
singular ``Z`` through an extended map when ``F`` has full column rank.
"""

from dataclasses import dataclass
import math

import numpy as np

from .hpd import (
    NotPositiveDefiniteError,
    RankDeficientError,
    as_hpd,
    has_full_column_rank,
    hermitian_sqrt,
    hermitize,
    orthogonal_complement_projector,
)

__all__ = [
    "MiEstimate",
    "BATCH_LENGTH",
    "DEFAULT_BURN_IN",
    "batch_means_se",
    "average_estimates",
    "as_stream",
    "build_block_bidiagonal",
    "naive_mi",
    "spectral_mi",
    "psi_step",
    "recursive_mi",
    "contraction_factor",
    "h_gamma",
    "z_step",
    "kappa_estimate",
    "w_to_z",
]

BATCH_LENGTH = 100
DEFAULT_BURN_IN = 200
BRANCH_RATIO = 1e-8


@dataclass(frozen=True)
class MiEstimate:
    """A Cesaro-type estimate in nats per component.

    ``std_error`` comes from batch means over batches of ``BATCH_LENGTH``
    increments (increments are serially correlated). ``increments`` holds the
    per-step contributions, already divided by ``N``, when retained.
    """

    value: float
    n_steps: int
    std_error: float = 0.0
    increments: np.ndarray | None = None

    @classmethod
    def from_increments(cls, increments, keep=False, batch=BATCH_LENGTH):
        inc = np.asarray(increments, dtype=float)
        value = float(inc.mean()) if inc.size else 0.0
        return cls(value, int(inc.size), batch_means_se(inc, batch),
                   inc if keep else None)


def batch_means_se(x, batch=BATCH_LENGTH):
    """Standard error of the mean of a correlated series by batch means.

    With fewer than two full batches the i.i.d. formula is used instead.
    """
    x = np.asarray(x, dtype=float)
    n_batches = x.size // batch
    if n_batches >= 2:
        means = x[:n_batches * batch].reshape(n_batches, batch).mean(axis=1)
        return float(means.std(ddof=1) / math.sqrt(n_batches))
    if x.size >= 2:
        return float(x.std(ddof=1) / math.sqrt(x.size))
    return 0.0


def average_estimates(estimates):
    """Average independent replications; the error is the replication SE."""
    values = np.array([e.value for e in estimates], dtype=float)
    if values.size == 0:
        raise ValueError("nothing to average")
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    n = sum(e.n_steps for e in estimates)
    return MiEstimate(float(values.mean()), n, se)


# ---------------------------------------------------------------------------
# stream plumbing


class _ArrayStream:
    def __init__(self, F, G):
        self.F, self.G = F, G
        self.N, self.K = F.shape[1:]
        self._pos = 0

    def take(self, n):
        if self._pos + n > len(self.F):
            raise ValueError(
                f"channel sequence exhausted: {len(self.F)} pairs available")
        sl = slice(self._pos, self._pos + n)
        self._pos += n
        return self.F[sl], self.G[sl]


def _stack_pairs(pairs):
    if isinstance(pairs, tuple) and len(pairs) == 2 and np.ndim(pairs[0]) == 3:
        F, G = pairs
    else:
        pairs = list(pairs)
        if not pairs:
            raise ValueError("empty channel sequence")
        shapes = {np.shape(f) for f, _ in pairs} | {np.shape(g) for _, g in pairs}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise ValueError(f"blocks must share one 2-D shape, got {sorted(shapes)}")
        F = np.stack([f for f, _ in pairs])
        G = np.stack([g for _, g in pairs])
    F = np.asarray(F, dtype=complex)
    G = np.asarray(G, dtype=complex)
    if F.shape != G.shape:
        raise ValueError(f"F and G shapes differ: {F.shape} vs {G.shape}")
    return F, G


def as_stream(source):
    """Wrap a channel model, ``(F, G)`` arrays or a list of pairs as a stream.

    Anything with a ``take(n)`` method is returned unchanged.
    """
    if hasattr(source, "take"):
        return source
    return _ArrayStream(*_stack_pairs(source))


def _stream_chunks(stream, n, chunk=4096):
    while n > 0:
        k = min(n, chunk)
        yield stream.take(k)
        n -= k


# ---------------------------------------------------------------------------
# naive and spectral routes


def build_block_bidiagonal(pairs):
    """Block-bidiagonal ``H`` of size ``n N x (n + 1) K``.

    Block row ``i`` holds ``F_i`` in block column ``i`` and ``G_i`` in block
    column ``i + 1``.
    """
    return _bidiagonal(*_stack_pairs(pairs))


def _bidiagonal(F, G):
    n, N, K = F.shape
    H = np.zeros((n * N, (n + 1) * K), dtype=complex)
    for i in range(n):
        H[i * N:(i + 1) * N, i * K:(i + 1) * K] = F[i]
        H[i * N:(i + 1) * N, (i + 1) * K:(i + 2) * K] = G[i]
    return H


def _logdet_i_plus(rho, H):
    """``log det(I + rho H H^*)`` by Cholesky, accumulated in the log domain."""
    A = rho * (H @ H.conj().T)
    A[np.diag_indices_from(A)] += 1.0
    L = np.linalg.cholesky(hermitize(A))
    return 2.0 * float(np.sum(np.log(np.diag(L).real)))


def naive_mi(pairs, rho):
    """``log det(I + rho H H^*) / (n N)`` for one channel realization."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    F, G = _stack_pairs(pairs)
    H = _bidiagonal(F, G)
    return MiEstimate(_logdet_i_plus(rho, H) / H.shape[0], len(F))


def spectral_mi(pairs, rho, return_eigenvalues=False):
    """Same quantity as :func:`naive_mi` through the eigenvalues of ``H H^*``.

    With ``return_eigenvalues=True`` the (clipped, nonnegative) eigenvalues are
    returned as a second value, for density-of-states histograms.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    F, G = _stack_pairs(pairs)
    H = _bidiagonal(F, G)
    lam = np.clip(np.linalg.eigvalsh(hermitize(H @ H.conj().T)), 0.0, None)
    est = MiEstimate(float(np.sum(np.log1p(rho * lam))) / H.shape[0], len(F))
    return (est, lam) if return_eigenvalues else est


# ---------------------------------------------------------------------------
# recursion for W


def _psi(F, G, rho, W):
    """Fast ``psi`` step; returns ``(W_new, log det A, log det M)`` with
    ``A = I + rho F W F^*`` and ``M = W_new^{-1}``."""
    N, K = F.shape
    A = rho * (F @ W @ F.conj().T)
    A[np.diag_indices(N)] += 1.0
    La = np.linalg.cholesky(A)
    Y = np.linalg.solve(La, G)
    M = rho * (Y.conj().T @ Y)
    M[np.diag_indices(K)] += 1.0
    Lm = np.linalg.cholesky(M)
    Linv = np.linalg.inv(Lm)
    W_new = Linv.conj().T @ Linv
    W_new = 0.5 * (W_new + W_new.conj().T)
    logdet_a = 2.0 * float(np.sum(np.log(np.diag(La).real)))
    logdet_m = 2.0 * float(np.sum(np.log(np.diag(Lm).real)))
    return W_new, logdet_a, logdet_m


def psi_step(F, G, rho, W_prev):
    """``(I + rho G^* (I + rho F W_prev F^*)^{-1} G)^{-1}``.

    The result is positive definite with largest eigenvalue at most one.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    F = np.asarray(F, dtype=complex)
    G = np.asarray(G, dtype=complex)
    W_prev = as_hpd(W_prev)
    if F.shape != G.shape or W_prev.shape != (F.shape[1],) * 2:
        raise ValueError("inconsistent shapes for F, G and W")
    try:
        return _psi(F, G, rho, W_prev)[0]
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "psi step failed: numerical corruption of the state") from exc


def _scalar_increments(f, g, rho, w, n, out):
    """Scalar (N = K = 1) recursion on Python floats; returns the final state."""
    af = (np.abs(f) ** 2).tolist()
    ag = (np.abs(g) ** 2).tolist()
    log = math.log
    for i in range(n):
        a = 1.0 + rho * af[i] * w
        m = 1.0 + rho * ag[i] / a
        w = 1.0 / m
        out[i] = log(a) + log(m)
    return w


def recursive_mi(stream, rho, n_steps, burn_in=DEFAULT_BURN_IN, x_init=None,
                 keep_increments=False):
    """Mutual information per component from the coupled ``W`` recursion.

    Parameters
    ----------
    stream : ChannelModel, (F, G) arrays or list of pairs
        Source of channel blocks; ``n_steps`` pairs are consumed.
    rho : float
        Linear SNR.
    n_steps : int
        Total number of recursion steps.
    burn_in : int
        Leading increments dropped from the average (the state still
        advances through them).
    x_init : array_like, optional
        Initial positive definite state, identity by default.

    Returns
    -------
    MiEstimate
        Average of ``log det(I + rho F_l X_{l-1} F_l^*) - log det X_l``
        over the retained steps, divided by ``N``.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    if not 0 <= burn_in < n_steps:
        raise ValueError("burn_in must satisfy 0 <= burn_in < n_steps")
    stream = as_stream(stream)
    N, K = stream.N, stream.K
    W = np.eye(K, dtype=complex) if x_init is None else as_hpd(x_init)
    inc = np.empty(n_steps)
    pos = 0
    for F, G in _stream_chunks(stream, n_steps):
        n = len(F)
        if N == 1 and K == 1:
            w = _scalar_increments(F[:, 0, 0], G[:, 0, 0], rho,
                                   float(W[0, 0].real), n, inc[pos:pos + n])
            W = np.array([[w]], dtype=complex)
        else:
            for i in range(n):
                W, lda, ldm = _psi(F[i], G[i], rho, W)
                inc[pos + i] = lda + ldm
        pos += n
    return MiEstimate.from_increments(inc[burn_in:] / N, keep=keep_increments)


def contraction_factor(G, rho):
    """Lipschitz constant ``rho ||G||^2 / (rho ||G||^2 + 1)`` of ``psi``."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    G = np.asarray(G)
    s = rho * np.linalg.norm(G, 2) ** 2 if G.size else 0.0
    return float(s / (s + 1.0))


def w_to_z(W, gamma):
    """High-SNR change of variables ``Z = gamma W^{-1}`` (``gamma = 1/rho``)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    W = as_hpd(W)
    return hermitize(gamma * np.linalg.inv(W))


# ---------------------------------------------------------------------------
# noiseless recursion for Z


def _h_defh(F, G, gamma, Z):
    """``gamma I + G^* (I + F Z^{-1} F^*)^{-1} G`` for positive definite ``Z``."""
    N, K = F.shape
    Lz = np.linalg.cholesky(Z)
    P = np.linalg.solve(Lz, F.conj().T)          # F Z^{-1} F^* = P^* P
    A = P.conj().T @ P
    A[np.diag_indices(N)] += 1.0
    La = np.linalg.cholesky(hermitize(A))
    Q = np.linalg.solve(La, G)
    out = Q.conj().T @ Q
    out[np.diag_indices(K)] += gamma
    return hermitize(out)


def _h_hsemi(F, G, gamma, Z):
    """Extension of ``h`` to semidefinite ``Z`` (needs full-rank ``F``)."""
    K = F.shape[1]
    FhF = F.conj().T @ F
    FhF_inv = np.linalg.inv(FhF)
    S = hermitian_sqrt(Z)
    C = S @ FhF_inv @ S
    C[np.diag_indices(K)] += 1.0
    B = G.conj().T @ F @ FhF_inv @ S            # G^* F (F^*F)^{-1} Z^{1/2}
    middle = B @ np.linalg.solve(hermitize(C), B.conj().T)
    Pperp = orthogonal_complement_projector(F)
    out = middle + G.conj().T @ Pperp @ G
    out[np.diag_indices(K)] += gamma
    return hermitize(out)


def h_gamma(F, G, gamma, Z, branch="auto"):
    """Map ``Z -> gamma I + G^* (I + F Z^{-1} F^*)^{-1} G`` on the PSD cone.

    ``branch="auto"`` evaluates the direct formula when
    ``lambda_min(Z) > 1e-8 lambda_max(Z)`` and the square-root form, valid
    for singular ``Z``, otherwise. ``"defh"`` and ``"hsemi"`` force a branch.

    Raises
    ------
    RankDeficientError
        If the square-root form is needed and ``F`` lacks full column rank.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    F = np.asarray(F, dtype=complex)
    G = np.asarray(G, dtype=complex)
    Z = as_hpd(Z, strict=False)
    if branch == "auto":
        lam = np.linalg.eigvalsh(Z)
        branch = "defh" if lam[0] > BRANCH_RATIO * lam[-1] else "hsemi"
    if branch == "defh":
        return _h_defh(F, G, gamma, Z)
    if branch == "hsemi":
        if not has_full_column_rank(F):
            raise RankDeficientError(
                "F must have full column rank to evaluate h at a singular Z")
        return _h_hsemi(F, G, gamma, Z)
    raise ValueError(f"unknown branch {branch!r}")


def _z(F, G, Z):
    lam = np.linalg.eigvalsh(Z)
    if lam[0] > BRANCH_RATIO * lam[-1]:
        return _h_defh(F, G, 0.0, Z)
    return _h_hsemi(F, G, 0.0, Z)


def z_step(F, G, Z_prev):
    """``G^* (I + F Z_prev^{-1} F^*)^{-1} G``, the noiseless state update.

    Requires ``N > K`` and ``F`` of full column rank.
    """
    F = np.asarray(F, dtype=complex)
    G = np.asarray(G, dtype=complex)
    N, K = F.shape
    if N <= K:
        raise ValueError(f"the noiseless recursion needs N > K, got N={N}, K={K}")
    if not has_full_column_rank(F):
        raise RankDeficientError("F does not have full column rank")
    return h_gamma(F, G, 0.0, Z_prev)


def kappa_estimate(stream, n_steps, burn_in=DEFAULT_BURN_IN, x_init=None,
                   keep_increments=False):
    """High-SNR offset ``kappa`` in ``I = (K/N) log rho + kappa + o(1)``.

    Iterates ``X_l = z_step(F_l, G_l, X_{l-1})`` and averages
    ``log det(X_l + F_{l+1}^* F_{l+1}) / N``; ``n_steps + 1`` pairs are
    consumed.

    Raises
    ------
    RankDeficientError
        On the first block whose ``F`` lacks full column rank, with the step
        index in the message.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    if not 0 <= burn_in < n_steps:
        raise ValueError("burn_in must satisfy 0 <= burn_in < n_steps")
    stream = as_stream(stream)
    N, K = stream.N, stream.K
    if N <= K:
        raise ValueError(f"the high-SNR offset needs N > K, got N={N}, K={K}")
    X = np.eye(K, dtype=complex) if x_init is None else as_hpd(x_init)
    inc = np.empty(n_steps)
    F_cur, G_cur = (a[0] for a in stream.take(1))
    step = 0
    for F, G in _stream_chunks(stream, n_steps):
        for i in range(len(F)):
            if not has_full_column_rank(F_cur):
                raise RankDeficientError(
                    f"F lost full column rank at step {step}; the channel "
                    f"model does not satisfy the high-SNR regularity "
                    f"conditions")
            X = _z(F_cur, G_cur, X)
            F_next = F[i]
            S = X + F_next.conj().T @ F_next
            L = np.linalg.cholesky(hermitize(S))
            inc[step] = 2.0 * float(np.sum(np.log(np.diag(L).real)))
            F_cur, G_cur = F_next, G[i]
            step += 1
    return MiEstimate.from_increments(inc[burn_in:] / N, keep=keep_increments)
