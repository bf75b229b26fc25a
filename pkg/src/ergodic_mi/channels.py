"""Stationary ergodic generators of the channel block stream ``(F_n, G_n)``.

A multipath channel with ``L + 1`` delays and ``R x T`` antenna taps
``c_{m, l}`` is folded into ``N x K`` block pairs, ``N = R L`` and
``K = T L``, by grouping ``L`` consecutive symbols per block. Each model
owns its tap state and a counter-based random stream; two models built from
the same configuration and seed yield bit-identical block streams.

Complex Gaussian draws use a fixed transform: a real standard normal array
of shape ``(..., 2)`` is drawn from a Philox generator and mapped to
``(x[..., 0] + 1j * x[..., 1]) * sqrt(variance / 2)``.
"""

from dataclasses import dataclass, fields
import math

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "UnstableModelError",
    "ModelConfig",
    "ChannelModel",
    "IidGaussianModel",
    "MultipathModel",
    "make_rng",
    "spawn_seeds",
    "complex_gaussian",
    "iid_gaussian_pair",
    "exponential_profile",
    "wyner_profile",
    "flat_profile",
    "taps_to_blocks",
    "ar1_step",
    "general_ar_step",
    "mimo_block_ar_step",
    "rician_los",
    "rician_overlay",
    "companion_spectral_radius",
    "build_model",
]

VARIANTS = ("iid-gaussian", "ar1-multipath", "general-ar", "mimo-block-ar",
            "rician-ar1")
PROFILES = ("exponential", "wyner", "flat")
BURN_IN_TOL = 1e-8
_STABILITY_MARGIN = 1e-9
_CHUNK = 256


class UnstableModelError(ValueError):
    """Raised for AR dynamics whose spectral radius is not below one."""


# ---------------------------------------------------------------------------
# random streams


def make_rng(seed):
    """Counter-based Philox generator from an int or a ``SeedSequence``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def spawn_seeds(seed, n):
    """Independent child seed sequences, one per replication."""
    return np.random.SeedSequence(int(seed)).spawn(n)


def complex_gaussian(rng, shape, variance=1.0):
    """Circular complex Gaussian array with per-entry variance ``variance``."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    x = rng.standard_normal(shape + (2,))
    return (x[..., 0] + 1j * x[..., 1]) * math.sqrt(variance / 2.0)


def iid_gaussian_pair(N, K, variance, rng):
    """A fresh ``(F, G)`` pair with i.i.d. ``CN(0, variance)`` entries."""
    if N < 1 or K < 1:
        raise ValueError("N and K must be positive")
    Z = complex_gaussian(rng, (2, N, K), variance)
    return Z[0], Z[1]


# ---------------------------------------------------------------------------
# power delay profiles


def exponential_profile(L, decay=0.4):
    """Unit-norm amplitude profile with ``a_l`` proportional to ``exp(-decay l)``."""
    if decay < 0:
        raise ValueError("decay must be nonnegative")
    a = np.exp(-decay * np.arange(L + 1))
    return a / np.linalg.norm(a)


def wyner_profile(L):
    """Unit-norm profile with ``a_l^2`` proportional to
    ``1 / (10 + |10 (l - L/2) / L|^3)``, a linear cell layout with ``L`` base
    stations per cell-size unit."""
    if L < 1:
        raise ValueError("the Wyner profile needs L >= 1")
    ell = np.arange(L + 1)
    a2 = 1.0 / (10.0 + np.abs(10.0 * (ell - L / 2.0) / L) ** 3)
    return np.sqrt(a2 / a2.sum())


def flat_profile(L):
    return np.full(L + 1, 1.0 / math.sqrt(L + 1))


# ---------------------------------------------------------------------------
# block folding


def _fold_indices(L):
    i, j = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    f_mask = j >= i
    g_mask = j <= i
    return (i, np.where(f_mask, L + i - j, 0), f_mask,
            np.where(g_mask, i - j, 0), g_mask)


def _fold(windows, L):
    """Vectorized fold of ``(n, L, L+1, R, T)`` tap windows into blocks."""
    n, _, _, R, T = windows.shape
    rows, fd, fm, gd, gm = _fold_indices(L)
    Fb = windows[:, rows, fd] * fm[None, :, :, None, None]
    Gb = windows[:, rows, gd] * gm[None, :, :, None, None]
    # (n, L, L, R, T) -> (n, L R, L T)
    Fb = Fb.transpose(0, 1, 3, 2, 4).reshape(n, L * R, L * T)
    Gb = Gb.transpose(0, 1, 3, 2, 4).reshape(n, L * R, L * T)
    return Fb, Gb


def taps_to_blocks(window, L, R=None, T=None):
    """Fold ``L`` consecutive tap arrays into one ``(F_n, G_n)`` block pair.

    Parameters
    ----------
    window : array_like, shape (L, L + 1, R, T) or (L, L + 1)
        ``window[i, l]`` is the tap ``c_{nL+i, l}``. The 2-D form is the
        single-antenna case.
    L : int
        Channel degree, ``L >= 1``. The memoryless case ``L = 0`` has no
        folding (``F = 0``, ``G = c_{n,0}``) and is handled by the caller.

    Returns
    -------
    F, G : ndarray, shape (R L, T L)
        ``F`` is block upper triangular with delays ``L..1`` along its first
        block row; ``G`` is block lower triangular with delays ``0..L-1``.
    """
    if L < 1:
        raise ValueError("L = 0 has no folding; use F = 0, G = c_{n,0}")
    window = np.asarray(window)
    if window.ndim == 2:
        window = window[:, :, None, None]
    if window.shape[:2] != (L, L + 1):
        raise ValueError(
            f"expected window of shape ({L}, {L + 1}, R, T), got {window.shape}")
    if R is not None and T is not None and window.shape[2:] != (R, T):
        raise ValueError(f"tap blocks are {window.shape[2:]}, expected {(R, T)}")
    F, G = _fold(window[None], L)
    return F[0], G[0]


# ---------------------------------------------------------------------------
# tap dynamics


def ar1_step(taps, alpha, a, rng, T=None):
    """One AR(1) update ``c_l <- alpha c_l + sqrt(1 - alpha^2) a_l u_l``.

    ``taps`` has shape ``(L + 1, R, T)``; the innovations ``u_l`` have
    i.i.d. ``CN(0, 1 / T)`` entries so the stationary per-entry variance of
    ``c_l`` is ``a_l^2 / T``.
    """
    if not 0.0 <= alpha < 1.0:
        raise UnstableModelError(f"AR(1) coefficient must lie in [0, 1), got {alpha}")
    taps = np.asarray(taps)
    T = taps.shape[-1] if T is None else T
    u = complex_gaussian(rng, taps.shape, 1.0 / T)
    scale = math.sqrt(1.0 - alpha * alpha) * np.asarray(a)[:, None, None]
    return alpha * taps + scale * u


def companion_spectral_radius(ar_matrices):
    """Spectral radius of the block companion matrix of ``C_n = sum A_l C_{n-l}``."""
    mats = [np.atleast_2d(np.asarray(A, dtype=complex)) for A in ar_matrices]
    if not mats:
        return 0.0
    d = mats[0].shape[0]
    M = len(mats)
    comp = np.zeros((d * M, d * M), dtype=complex)
    comp[:d, :] = np.hstack(mats)
    if M > 1:
        comp[d:, :-d] = np.eye(d * (M - 1))
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def _check_stable(radius):
    if radius >= 1.0 - _STABILITY_MARGIN:
        raise UnstableModelError(
            f"AR dynamics are not stable: spectral radius {radius:.6g} >= 1")


def _burn_in_steps(radius):
    if radius <= 0.0:
        return 0
    return int(math.ceil(math.log(BURN_IN_TOL) / math.log(radius)))


def general_ar_step(history, ar_matrices, innovation):
    """``C_n = sum_l A_l C_{n-l} + U_n`` along the delay axis.

    ``history[0]`` is ``C_{n-1}``, ``history[1]`` is ``C_{n-2}``, ... Each
    ``C`` has shape ``(L + 1, R, T)`` and each ``A_l`` is ``(L+1) x (L+1)``.
    """
    out = np.array(innovation, dtype=complex, copy=True)
    for A, C in zip(ar_matrices, history):
        out += np.einsum("ij,jrt->irt", A, C)
    return out


def mimo_block_ar_step(taps, H, innovation):
    """``c_l <- H_l c_l + u_l`` for each delay ``l`` (``H_l`` is ``R x R``)."""
    return np.einsum("lrs,lst->lrt", H, taps) + innovation


def rician_los(a, L, R, T):
    """Deterministic line-of-sight taps ``a_l exp(2 i pi (r - t) sin(pi l / L))``."""
    if L < 1:
        raise ValueError("the line-of-sight component needs L >= 1")
    ell = np.arange(L + 1)[:, None, None]
    r = np.arange(R)[None, :, None]
    t = np.arange(T)[None, None, :]
    phase = 2j * np.pi * (r - t) * np.sin(np.pi * ell / L)
    return np.asarray(a)[:, None, None] * np.exp(phase)


def rician_overlay(c, rice_factor, los):
    """Mix diffuse taps ``c`` with line-of-sight taps ``los``."""
    if rice_factor < 0:
        raise ValueError("the Rice factor must be nonnegative")
    if rice_factor == 0:
        return c
    w_los = math.sqrt(rice_factor / (rice_factor + 1.0))
    w_diff = math.sqrt(1.0 / (rice_factor + 1.0))
    return w_los * los + w_diff * c


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ModelConfig:
    """Declarative description of a channel model.

    ``alpha`` may be given directly or through the Doppler frequency ``f_d``
    (``alpha = exp(-f_d)``). ``profile`` is one of ``"exponential"`` (with
    ``decay``), ``"wyner"``, ``"flat"`` or an explicit list of amplitudes,
    which is normalized to unit norm. ``variance`` is the per-entry variance
    of i.i.d. blocks or of AR innovations; ``None`` selects ``1 / (2 T)`` for
    the i.i.d. model and ``1 / T`` otherwise. ``ar_matrices`` holds
    ``A_1..A_M`` for ``general-ar`` and ``H_0..H_L`` for ``mimo-block-ar``.
    For ``iid-gaussian`` the block shape is ``N = R``, ``K = T``.
    """

    variant: str = "ar1-multipath"
    L: int = 0
    R: int = 1
    T: int = 1
    alpha: float | None = None
    f_d: float | None = None
    profile: str | list = "exponential"
    decay: float = 0.4
    rice_factor: float = 0.0
    ar_matrices: list | None = None
    variance: float | None = None
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant: unknown model variant {self.variant!r}")
        for name in ("L", "R", "T"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValueError(f"{name}: must be an integer")
        if self.L < 0 or self.R < 1 or self.T < 1:
            raise ValueError("L must be >= 0 and R, T >= 1")
        if self.f_d is not None and self.f_d < 0:
            raise ValueError("f_d: Doppler frequency must be nonnegative")
        if self.alpha is not None and not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha: must lie in [0, 1), got {self.alpha}")
        if (self.alpha is not None and self.f_d is not None
                and not math.isclose(self.alpha, math.exp(-self.f_d))):
            raise ValueError("alpha and f_d disagree; give only one")
        if self.ar_alpha >= 1.0:
            raise ValueError("f_d: must be positive so that alpha < 1")
        if self.rice_factor < 0:
            raise ValueError("rice_factor: must be nonnegative")
        if self.rice_factor > 0 and self.variant != "rician-ar1":
            raise ValueError(
                "rice_factor: a line-of-sight overlay is only defined for "
                "the rician-ar1 variant")
        if self.variant == "rician-ar1" and self.L < 1:
            raise ValueError("L: the rician-ar1 variant needs L >= 1")
        if self.variance is not None and self.variance < 0:
            raise ValueError("variance: must be nonnegative")
        if isinstance(self.profile, str):
            if self.profile not in PROFILES:
                raise ValueError(f"profile: unknown profile {self.profile!r}")
            if self.profile == "wyner" and self.L < 1:
                raise ValueError("profile: the Wyner profile needs L >= 1")
        else:
            a = np.asarray(self.profile, dtype=float)
            if a.shape != (self.L + 1,) or not np.all(np.isfinite(a)):
                raise ValueError(f"profile: expected {self.L + 1} finite amplitudes")
            if np.linalg.norm(a) == 0:
                raise ValueError("profile: amplitudes are all zero")
        if self.variant in ("general-ar", "mimo-block-ar"):
            if not self.ar_matrices:
                raise ValueError(f"ar_matrices: required for {self.variant}")
            mats = self.matrices()
            if self.variant == "general-ar":
                d = self.L + 1
                if any(A.shape != (d, d) for A in mats):
                    raise ValueError(f"ar_matrices: each A_l must be {d} x {d}")
                _check_stable(companion_spectral_radius(mats))
            else:
                if len(mats) != self.L + 1 or any(
                        H.shape != (self.R, self.R) for H in mats):
                    raise ValueError(
                        f"ar_matrices: expected {self.L + 1} matrices of size "
                        f"{self.R} x {self.R}")
                for H in mats:
                    _check_stable(float(np.max(np.abs(np.linalg.eigvals(H)))))
        elif self.ar_matrices:
            raise ValueError(f"ar_matrices: not used by {self.variant}")

    @property
    def ar_alpha(self):
        if self.alpha is not None:
            return float(self.alpha)
        if self.f_d is not None:
            return math.exp(-self.f_d)
        return 0.0

    @property
    def dims(self):
        """Block shape ``(N, K)``."""
        if self.variant == "iid-gaussian":
            return self.R, self.T
        fold = max(self.L, 1)
        return self.R * fold, self.T * fold

    def amplitudes(self):
        if isinstance(self.profile, str):
            if self.profile == "exponential":
                return exponential_profile(self.L, self.decay)
            if self.profile == "wyner":
                return wyner_profile(self.L)
            return flat_profile(self.L)
        a = np.asarray(self.profile, dtype=float)
        return a / np.linalg.norm(a)

    def matrices(self):
        return [_complex_matrix(A) for A in (self.ar_matrices or [])]

    def innovation_variance(self):
        if self.variance is not None:
            return float(self.variance)
        if self.variant == "iid-gaussian":
            return 1.0 / (2.0 * self.T)
        return 1.0 / self.T

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "profile" and not isinstance(v, str):
                v = [float(x) for x in v]
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown field(s): {', '.join(unknown)}")
        return cls(**data)


def _complex_matrix(A):
    """Matrix from nested lists, a ``{"real", "imag"}`` mapping or an array."""
    if isinstance(A, dict):
        if set(A) - {"real", "imag"} or "real" not in A:
            raise ValueError(
                "complex matrices are given as {'real': ..., 'imag': ...}")
        re = np.asarray(A["real"], dtype=float)
        im = np.asarray(A.get("imag", np.zeros_like(re)), dtype=float)
        return np.atleast_2d(re + 1j * im)
    return np.atleast_2d(np.asarray(A, dtype=complex))


# ---------------------------------------------------------------------------
# generators


class ChannelModel:
    """Base class: buffered stream of ``(F_n, G_n)`` block pairs.

    Subclasses implement ``_generate(n)`` returning two ``(n, N, K)`` arrays.
    Pairs are produced in fixed-size chunks so that the stream does not depend
    on how callers slice it.
    """

    N = K = 1

    def __init__(self, rng):
        self.rng = make_rng(rng)
        self._F = self._G = np.empty((0, self.N, self.K), dtype=complex)
        self._pos = 0

    def _generate(self, n):
        raise NotImplementedError

    def take(self, n):
        """Next ``n`` pairs as arrays ``F, G`` of shape ``(n, N, K)``."""
        outF, outG = [], []
        while n > 0:
            if self._pos == len(self._F):
                self._F, self._G = self._generate(_CHUNK)
                self._pos = 0
            k = min(n, len(self._F) - self._pos)
            outF.append(self._F[self._pos:self._pos + k])
            outG.append(self._G[self._pos:self._pos + k])
            self._pos += k
            n -= k
        if not outF:
            empty = np.empty((0, self.N, self.K), dtype=complex)
            return empty, empty
        return np.concatenate(outF), np.concatenate(outG)

    def pairs(self, n):
        F, G = self.take(n)
        return list(zip(F, G))

    def next_pair(self):
        F, G = self.take(1)
        return F[0], G[0]

    def __iter__(self):
        return self

    def __next__(self):
        return self.next_pair()


class IidGaussianModel(ChannelModel):
    """Independent blocks with i.i.d. ``CN(0, variance)`` entries."""

    def __init__(self, N, K, variance, rng):
        self.N, self.K = N, K
        self.variance = variance
        super().__init__(rng)

    def _generate(self, n):
        Z = complex_gaussian(self.rng, (2, n, self.N, self.K), self.variance)
        return Z[0], Z[1]


class MultipathModel(ChannelModel):
    """Multipath MIMO channel driven by AR tap dynamics.

    Supports the AR(1) tap model (optionally with a Rician line-of-sight
    overlay), the general vector AR model over the delay axis, and the
    per-delay block-diagonal MIMO AR model.
    """

    def __init__(self, config, rng):
        self.config = config
        self.L, self.R, self.T = config.L, config.R, config.T
        self.N, self.K = config.dims
        super().__init__(rng)
        self.a = config.amplitudes()
        self.variant = config.variant
        shape = (self.L + 1, self.R, self.T)
        self.los = None
        if self.variant in ("ar1-multipath", "rician-ar1"):
            self.alpha = config.ar_alpha
            # stationary start: c_{-1,l} ~ CN(0, a_l^2 / T)
            self.taps = (complex_gaussian(self.rng, shape, 1.0 / self.T)
                         * self.a[:, None, None])
            if self.variant == "rician-ar1":
                self.los = rician_los(self.a, self.L, self.R, self.T)
        elif self.variant == "general-ar":
            self.A = config.matrices()
            self.history = [np.zeros(shape, dtype=complex) for _ in self.A]
            for _ in range(_burn_in_steps(companion_spectral_radius(self.A))):
                self._advance()
        elif self.variant == "mimo-block-ar":
            self.H = np.stack(config.matrices())
            self.taps = np.zeros(shape, dtype=complex)
            radius = max(float(np.max(np.abs(np.linalg.eigvals(H))))
                         for H in self.H)
            for _ in range(_burn_in_steps(radius)):
                self._advance()
        else:
            raise ValueError(f"{self.variant} is not a multipath variant")

    def _advance(self):
        """Advance a general or block AR tap process by one symbol."""
        u = complex_gaussian(self.rng, (self.L + 1, self.R, self.T),
                             self.config.innovation_variance())
        if self.variant == "general-ar":
            c = general_ar_step(self.history, self.A, u)
            self.history = [c] + self.history[:-1]
            return c
        self.taps = mimo_block_ar_step(self.taps, self.H, u)
        return self.taps

    def _generate(self, n):
        fold = max(self.L, 1)
        shape = (n * fold, self.L + 1, self.R, self.T)
        if self.variant in ("ar1-multipath", "rician-ar1"):
            alpha = self.alpha
            scale = math.sqrt(1.0 - alpha * alpha) * self.a[None, :, None, None]
            u = complex_gaussian(self.rng, shape, 1.0 / self.T) * scale
            # c_m = alpha c_{m-1} + u_m along the time axis
            taps = lfilter([1.0], [1.0, -alpha], u, axis=0,
                           zi=(alpha * self.taps)[None])[0]
            self.taps = taps[-1].copy()
            if self.los is not None:
                taps = rician_overlay(taps, self.config.rice_factor, self.los)
        else:
            taps = np.empty(shape, dtype=complex)
            for m in range(shape[0]):
                taps[m] = self._advance()
        if self.L == 0:
            G = taps[:, 0]
            return np.zeros_like(G), G
        return _fold(taps.reshape(n, self.L, self.L + 1, self.R, self.T), self.L)


def build_model(config, rng=None):
    """Instantiate the generator described by ``config``.

    ``rng`` may be a seed, a ``SeedSequence`` or a generator; by default the
    configuration's own ``seed`` is used.
    """
    rng = config.seed if rng is None else rng
    if config.variant == "iid-gaussian":
        N, K = config.dims
        return IidGaussianModel(N, K, config.innovation_variance(), rng)
    return MultipathModel(config, rng)
