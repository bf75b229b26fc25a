"""Experiment runners.

Each runner expands an :class:`ExperimentConfig` into independent
replication tasks. Every task owns a channel model seeded from a
pre-assigned child of ``SeedSequence(config.seed)``, so results do not
depend on the number of worker threads. Within a replication the same
channel realization is reused across the SNR grid. Rows are returned
ordered by SNR index, then replication index.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
import logging
import math
import time

import numpy as np

from ..channels import build_model, spawn_seeds
from ..estimators import kappa_estimate, naive_mi, recursive_mi, spectral_mi
from ..rmt import mp_cdf, mp_closed_form, mp_density, ring_mi
from .config import ConfigError
from .rows import ResultRow, format_estimator

__all__ = ["run_experiment", "run_sweep", "run_convergence", "run_high_snr",
           "run_rmt_compare", "run_dos_histogram", "block_length_ladder",
           "rmt_l_grid", "cdf_gap", "DOS_BINS"]

logger = logging.getLogger(__name__)

DOS_BINS = 50
AGGREGATE = -1  # replication index of rows not tied to one replication


class _Clock:
    def __init__(self, enabled):
        self.enabled = enabled

    def __call__(self, fn, *args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        ms = (time.perf_counter() - t0) * 1e3 if self.enabled else 0.0
        return out, ms


def _pool_map(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _order(rows_per_task):
    """Merge task outputs by (SNR index, replication index)."""
    keyed = []
    for rows in rows_per_task:
        keyed.extend(rows)
    keyed.sort(key=lambda item: item[0])
    return [row for _, row in keyed]


def _row(config, snr_db, estimator, est_value, se, n, rep, ms, information=True):
    return ResultRow(config.experiment, float(snr_db), estimator, float(est_value),
                     float(se), int(n), int(rep), float(ms), information)


def block_length_ladder(length):
    """Six block lengths doubling up to ``length``, duplicates removed."""
    return sorted({max(1, round(length / 2 ** k)) for k in range(5, -1, -1)})


def rmt_l_grid(L_max):
    """Powers of two below ``L_max`` followed by ``L_max`` itself."""
    grid = {L_max}
    p = 1
    while p < L_max:
        grid.add(p)
        p *= 2
    return sorted(grid)


# ---------------------------------------------------------------------------


def run_sweep(config, threads=1, timing=False):
    """Recursive (and optionally naive) estimates over the SNR grid."""
    clock = _Clock(timing)
    # children are spawned here, never inside a worker, so that the
    # assignment of streams is independent of scheduling
    seeds = [s.spawn(2) for s in spawn_seeds(config.seed, config.replications)]
    nbl = config.naive_block_length

    def task(rep):
        rec_seed, naive_seed = seeds[rep]
        out = []
        naive_pairs = None
        if nbl > 0:
            naive_pairs = build_model(config.model, naive_seed).take(nbl)
        for k, (db, rho) in enumerate(zip(config.snr_grid_db, config.rho_grid)):
            est, ms = clock(recursive_mi, build_model(config.model, rec_seed),
                            rho, config.n_steps, config.burn_in)
            out.append(((k, rep, 0), _row(config, db, "recursive", est.value,
                                          est.std_error, est.n_steps, rep, ms)))
            if naive_pairs is not None:
                est, ms = clock(naive_mi, naive_pairs, rho)
                out.append(((k, rep, 1), _row(
                    config, db, format_estimator("naive", n=nbl), est.value,
                    est.std_error, nbl, rep, ms)))
        return out

    return _order(_pool_map(task, list(range(config.replications)), threads))


def run_convergence(config, threads=1, timing=False):
    """Naive estimates at increasing block lengths plus a recursive reference."""
    if config.naive_block_length < 1:
        raise ConfigError("naive_block_length",
                          "the convergence study needs a positive block length")
    clock = _Clock(timing)
    ladder = block_length_ladder(config.naive_block_length)
    root = np.random.SeedSequence(config.seed)
    ref_seed, rep_root = root.spawn(2)
    ladder_seeds = [s.spawn(len(ladder)) for s in rep_root.spawn(config.replications)]

    def task(rep):
        out = []
        if rep == AGGREGATE:
            for k, (db, rho) in enumerate(zip(config.snr_grid_db, config.rho_grid)):
                est, ms = clock(recursive_mi, build_model(config.model, ref_seed),
                                rho, config.n_steps, config.burn_in)
                out.append(((k, -1, 0), _row(config, db, "reference", est.value,
                                             est.std_error, est.n_steps, rep, ms)))
            return out
        pairs = {n: build_model(config.model, s).take(n)
                 for n, s in zip(ladder, ladder_seeds[rep])}
        for k, (db, rho) in enumerate(zip(config.snr_grid_db, config.rho_grid)):
            for j, n in enumerate(ladder):
                est, ms = clock(naive_mi, pairs[n], rho)
                out.append(((k, rep, j), _row(config, db,
                                              format_estimator("naive", n=n),
                                              est.value, 0.0, n, rep, ms)))
        return out

    tasks = [AGGREGATE] + list(range(config.replications))
    return _order(_pool_map(task, tasks, threads))


def _doppler(model):
    """Doppler frequency ``-log(alpha)``; infinite for memoryless taps."""
    if model.f_d is not None:
        return float(model.f_d)
    alpha = model.ar_alpha
    return -math.log(alpha) if alpha > 0 else math.inf


def run_high_snr(config, threads=1, timing=False):
    """Mutual information at high SNR against ``(K/N) log rho + kappa``."""
    N, K = config.model.dims
    if N <= K:
        raise ConfigError("model", f"the high-SNR study needs N > K, got N={N}, K={K}")
    clock = _Clock(timing)
    seeds = spawn_seeds(config.seed, config.replications)
    m = config.model
    tags = {"fd": _doppler(m), "KR": float(m.rice_factor)}

    def task(rep):
        out = []
        # common random numbers: kappa and every SNR point share one stream
        kappa, ms = clock(kappa_estimate, build_model(m, seeds[rep]),
                          config.n_steps, config.burn_in)
        out.append(((-1, rep, 0), _row(config, math.inf,
                                       format_estimator("kappa", **tags),
                                       kappa.value, kappa.std_error,
                                       kappa.n_steps, rep, ms)))
        for k, (db, rho) in enumerate(zip(config.snr_grid_db, config.rho_grid)):
            est, ms = clock(recursive_mi, build_model(m, seeds[rep]), rho,
                            config.n_steps, config.burn_in)
            line = K / N * math.log(rho) + kappa.value
            out.append(((k, rep, 0), _row(config, db,
                                          format_estimator("recursive", **tags),
                                          est.value, est.std_error, est.n_steps,
                                          rep, ms)))
            out.append(((k, rep, 1), _row(config, db,
                                          format_estimator("offset_line", **tags),
                                          line, kappa.std_error, kappa.n_steps,
                                          rep, 0.0)))
            out.append(((k, rep, 2), _row(config, db,
                                          format_estimator("gap", **tags),
                                          est.value - line,
                                          math.hypot(est.std_error, kappa.std_error),
                                          est.n_steps, rep, 0.0)))
        return out

    return _order(_pool_map(task, list(range(config.replications)), threads))


def run_rmt_compare(config, threads=1, timing=False):
    """Recursive and ring estimates against the Marchenko-Pastur asymptote
    over a grid of delay spreads ``L``."""
    m = config.model
    if m.variant != "ar1-multipath":
        raise ConfigError("model.variant", "rmt-compare uses the ar1-multipath model")
    if not isinstance(m.profile, str):
        raise ConfigError("model.profile",
                          "rmt-compare needs a named profile that scales with L")
    if m.L < 1:
        raise ConfigError("model.L", "rmt-compare needs L >= 1")
    clock = _Clock(timing)
    grid = rmt_l_grid(m.L)
    # the same two streams per replication are reused for every L
    seeds = [s.spawn(2) for s in spawn_seeds(config.seed, config.replications)]
    nbl = config.naive_block_length

    def task(item):
        rep, li = item
        L = grid[li]
        mL = replace(m, L=L)
        out = []
        if rep == AGGREGATE:
            a = mL.amplitudes()
            out.append(((-1, li, -1, 0), _row(
                config, math.nan, format_estimator("profile_norm", L=L,
                                                   profile=m.profile),
                float(np.linalg.norm(a)), 0.0, 0, rep, 0.0, information=False)))
            for k, (db, rho) in enumerate(zip(config.snr_grid_db, config.rho_grid)):
                out.append(((k, li, -1, 0), _row(
                    config, db, format_estimator("mp_closed_form", L=L),
                    mp_closed_form(rho), 0.0, 0, rep, 0.0)))
            return out
        rec_seed, ring_seed = seeds[rep]
        ring_pairs = build_model(mL, ring_seed).take(nbl) if nbl >= 2 else None
        for k, (db, rho) in enumerate(zip(config.snr_grid_db, config.rho_grid)):
            est, ms = clock(recursive_mi, build_model(mL, rec_seed), rho,
                            config.n_steps, config.burn_in)
            out.append(((k, li, rep, 1), _row(
                config, db, format_estimator("recursive", L=L), est.value,
                est.std_error, est.n_steps, rep, ms)))
            if ring_pairs is not None:
                value, ms = clock(ring_mi, ring_pairs, rho)
                out.append(((k, li, rep, 2), _row(
                    config, db, format_estimator("ring", L=L, M=nbl - 1), value,
                    0.0, nbl, rep, ms)))
        return out

    tasks = [(rep, li) for li in range(len(grid))
             for rep in [AGGREGATE] + list(range(config.replications))]
    return _order(_pool_map(task, tasks, threads))


def _is_square_iid(model):
    N, K = model.dims
    if N != K:
        return False
    if model.variant == "iid-gaussian":
        return True
    return model.variant == "ar1-multipath" and model.ar_alpha == 0.0


def run_dos_histogram(config, threads=1, timing=False):
    """Histogram of the eigenvalues of ``H H^*`` pooled over replications."""
    n = config.naive_block_length
    if n < 1:
        raise ConfigError("naive_block_length",
                          "the density-of-states histogram needs a positive block length")
    clock = _Clock(timing)
    seeds = spawn_seeds(config.seed, config.replications)

    def task(rep):
        pairs = build_model(config.model, seeds[rep]).take(n)
        (est, lam), ms = clock(spectral_mi, pairs, 1.0, return_eigenvalues=True)
        return lam, ms

    results = _pool_map(task, list(range(config.replications)), threads)
    lam = np.sort(np.concatenate([r[0] for r in results]))
    total_ms = sum(r[1] for r in results)
    rows = []
    nan = math.nan
    top = float(lam[-1])
    if top <= 0.0:
        edges = np.array([0.0, 0.0])
        masses = np.array([1.0])
    else:
        edges = np.linspace(0.0, top, DOS_BINS + 1)
        counts, _ = np.histogram(lam, bins=edges)
        masses = counts / lam.size
    square = _is_square_iid(config.model)
    rows.append(_row(config, nan, "eigen_count", lam.size, 0.0, n,
                     AGGREGATE, total_ms, information=False))
    for lo, hi, mass in zip(edges[:-1], edges[1:], masses):
        rows.append(_row(config, nan, format_estimator("dos_mass", lo=float(lo),
                                                       hi=float(hi)),
                         mass, 0.0, n, AGGREGATE, 0.0, information=False))
        if square:
            mid = 0.5 * (lo + hi)
            rows.append(_row(config, nan, format_estimator("mp_density", x=float(mid)),
                             float(mp_density(mid)), 0.0, n, AGGREGATE, 0.0,
                             information=False))
    if square:
        rows.append(_row(config, nan, "mp_cdf_gap", cdf_gap(lam), 0.0, n,
                         AGGREGATE, 0.0, information=False))
    return rows


def cdf_gap(eigenvalues):
    """Kolmogorov distance between the empirical eigenvalue law and the
    unit-ratio Marchenko-Pastur law."""
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    m = lam.size
    F = mp_cdf(lam)
    upper = np.arange(1, m + 1) / m - F
    lower = F - np.arange(m) / m
    return float(max(upper.max(), lower.max()))


_RUNNERS = {
    "sweep": run_sweep,
    "convergence": run_convergence,
    "high-snr": run_high_snr,
    "rmt-compare": run_rmt_compare,
    "dos-histogram": run_dos_histogram,
}


def run_experiment(config, threads=1, timing=False):
    """Dispatch on ``config.experiment`` and return the result rows."""
    logger.info("running %s with %d replication(s) on %d thread(s)",
                config.experiment, config.replications, threads)
    return _RUNNERS[config.experiment](config, threads=threads, timing=timing)

