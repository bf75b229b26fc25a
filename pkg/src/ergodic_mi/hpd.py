"""Primitives on the cone of Hermitian positive (semi)definite matrices.

All functions take plain ``numpy`` arrays. Inputs claimed to be Hermitian are
symmetrized as ``(M + M^*) / 2`` before use, which absorbs the rounding drift
that builds up in long recursions.
"""

import numpy as np
import scipy.linalg

__all__ = [
    "NotPositiveDefiniteError",
    "RankDeficientError",
    "hermitize",
    "as_hpd",
    "log_det_hpd",
    "geodesic_distance",
    "orthogonal_projector",
    "orthogonal_complement_projector",
    "hermitian_sqrt",
    "extreme_eigenvalues",
    "has_full_column_rank",
]

RANK_TOL = 1e-10
PSD_TOL = 1e-10
_ASYMMETRY_TOL = 1e-8


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix expected to be positive (semi)definite is not."""


class RankDeficientError(ValueError):
    """Raised when a matrix expected to have full column rank does not."""


def hermitize(M):
    """Return the Hermitian part ``(M + M^*) / 2`` of a square matrix."""
    M = np.asarray(M)
    return 0.5 * (M + M.conj().T)


def _max_abs(M):
    return float(np.max(np.abs(M))) if M.size else 0.0


def _checked_hermitian(M):
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if _max_abs(M - M.conj().T) > _ASYMMETRY_TOL * (1.0 + _max_abs(M)):
        raise ValueError("matrix is not Hermitian")
    return hermitize(M)


def as_hpd(M, strict=True):
    """Validate ``M`` as a Hermitian positive (semi)definite matrix.

    Parameters
    ----------
    M : array_like, shape (k, k)
        Candidate matrix. Small asymmetries are removed by symmetrizing.
    strict : bool, default=True
        If True, require positive definiteness (Cholesky must succeed).
        Otherwise require the smallest eigenvalue to be at least
        ``-1e-10 * ||M||``.

    Returns
    -------
    H : ndarray, shape (k, k), complex
        The symmetrized matrix.
    """
    H = _checked_hermitian(M)
    if strict:
        try:
            np.linalg.cholesky(H)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                "matrix is not positive definite") from exc
    else:
        lam = np.linalg.eigvalsh(H)
        if lam.size and lam[0] < -PSD_TOL * max(abs(lam[-1]), abs(lam[0])):
            raise NotPositiveDefiniteError(
                f"matrix is not positive semidefinite (min eigenvalue "
                f"{lam[0]:.3e})")
    return H


def _cholesky(M):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "Cholesky factorization failed: matrix is not positive definite"
        ) from exc


def log_det_hpd(X):
    """Natural log-determinant of a positive definite matrix via Cholesky."""
    L = _cholesky(_checked_hermitian(X))
    return 2.0 * float(np.sum(np.log(np.abs(np.diag(L)))))


def geodesic_distance(X, Y):
    r"""Affine-invariant Riemannian distance between two HPD matrices.

    .. math::
        d(X, Y) = \Big(\sum_i \log^2 \lambda_i\Big)^{1/2}

    where the :math:`\lambda_i` are the eigenvalues of :math:`X Y^{-1}`.
    They are obtained from the Hermitian matrix :math:`L^* Y^{-1} L`, with
    :math:`X = L L^*`, which is similar to :math:`X Y^{-1}`.
    """
    X = as_hpd(X)
    Y = as_hpd(Y)
    if X.shape != Y.shape:
        raise ValueError(f"dimension mismatch: {X.shape} vs {Y.shape}")
    Lx = _cholesky(X)
    Ly = _cholesky(Y)
    # L^* Y^{-1} L = (Ly^{-1} Lx)^* (Ly^{-1} Lx)
    B = scipy.linalg.solve_triangular(Ly, Lx, lower=True)
    lam = np.linalg.eigvalsh(B.conj().T @ B)
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def has_full_column_rank(A, tol=RANK_TOL):
    """Pivoted-QR rank test: every pivot must exceed ``tol * ||A||_F``."""
    A = np.asarray(A)
    n, k = A.shape
    if k > n:
        return False
    if k == 0:
        return True
    R = scipy.linalg.qr(A, mode="r", pivoting=True)[0]
    pivots = np.abs(np.diag(R[:k, :k]))
    return bool(pivots.min() > tol * np.linalg.norm(A))


def orthogonal_projector(A):
    """Orthogonal projector ``A (A^* A)^{-1} A^*`` onto the columns of ``A``.

    Raises
    ------
    RankDeficientError
        If a column pivot of ``A`` falls below ``1e-10 * ||A||_F``.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    n, k = A.shape
    if not has_full_column_rank(A):
        raise RankDeficientError(
            f"matrix of shape {A.shape} does not have full column rank")
    Q = scipy.linalg.qr(A, mode="economic")[0][:, :k]
    return hermitize(Q @ Q.conj().T)


def orthogonal_complement_projector(A):
    """Projector onto the orthogonal complement of the column space of ``A``."""
    P = orthogonal_projector(A)
    return np.eye(P.shape[0]) - P


def hermitian_sqrt(Z):
    """Principal (positive semidefinite) square root of a PSD matrix.

    Eigenvalues within ``-1e-10 * ||Z||`` of zero are clipped to zero; more
    negative eigenvalues raise :class:`NotPositiveDefiniteError`.
    """
    Z = hermitize(np.asarray(Z, dtype=complex))
    lam, V = np.linalg.eigh(Z)
    scale = max(abs(lam[0]), abs(lam[-1])) if lam.size else 0.0
    if lam.size and lam[0] < -PSD_TOL * scale:
        raise NotPositiveDefiniteError(
            f"matrix is not positive semidefinite (min eigenvalue {lam[0]:.3e})")
    root = np.sqrt(np.clip(lam, 0.0, None))
    return hermitize((V * root) @ V.conj().T)


def extreme_eigenvalues(S):
    """Return ``(lambda_min, lambda_max)`` of a Hermitian matrix."""
    lam = np.linalg.eigvalsh(hermitize(np.asarray(S, dtype=complex)))
    return float(lam[0]), float(lam[-1])
