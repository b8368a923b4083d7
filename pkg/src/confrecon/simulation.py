"""Slot-level Monte Carlo simulator of the source, the RS policy and both receivers.

Each replication owns an independent random stream derived from
``SeedSequence(seed, spawn_key=(run,))``, so the estimate depends only on the
master seed and never on how runs are spread over workers. Within a slot the
uniform draws are consumed in the fixed order (source transition, alpha,
H, H_e).
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .model import ChannelPair, DomainError, Policy, SourceModel, stationary_source

TRACE_CAP = 1_000_000
_CHUNK = 1 << 16
WORKERS_ENV = "CONFRECON_WORKERS"

TRACE_COLUMNS = ("t", "x", "alpha", "h", "h_e", "theta", "theta_e", "xhat", "xhat_e", "cra")


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 50_000
    runs: int = 400
    seed: int = 0
    warmup: int = 1_000

    def __post_init__(self):
        if self.horizon < 1 or self.runs < 1:
            raise DomainError("horizon and runs must be >= 1")
        if not (0 <= self.warmup < self.horizon):
            raise DomainError("warmup must satisfy 0 <= warmup < horizon")


@dataclass(frozen=True)
class SimEstimate:
    mean_cra: float
    mean_accuracy: float
    mean_confidentiality: float
    std_error_cra: float
    std_error_accuracy: float
    std_error_confidentiality: float
    runs_used: int


@dataclass(frozen=True)
class SimTrace:
    """Per-slot records for t = 0..horizon, one array per column."""

    t: np.ndarray
    x: np.ndarray
    alpha: np.ndarray
    h: np.ndarray
    h_e: np.ndarray
    theta: np.ndarray
    theta_e: np.ndarray
    xhat: np.ndarray
    xhat_e: np.ndarray
    cra: np.ndarray

    def to_csv(self, path) -> None:
        cols = [getattr(self, name) for name in TRACE_COLUMNS]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            writer.writerows(zip(*(c.tolist() for c in cols)))


@numba.njit(cache=True, nogil=True)
def _advance(u, state, t0, warmup, p, q, pa, ps, pe, counts, age_hist, stride, trace):
    """Run ``len(u)`` slots starting at slot ``t0``; mutates state/counts in place.

    state = [x, xhat, xhat_e, theta, theta_e]; counts = [cra, acc, conf].
    ``age_hist`` is filled every ``stride`` slots after warmup when non-empty.
    """
    x, xh, xe, th, te = state[0], state[1], state[2], state[3], state[4]
    cap = age_hist.shape[0] - 1
    tracing = trace.shape[0] > 0
    for k in range(u.shape[0]):
        t = t0 + k
        if x == 0:
            if u[k, 0] < p:
                x = 1
        elif u[k, 0] < q:
            x = 0
        alpha = u[k, 1] < pa
        h = u[k, 2] < ps
        he = u[k, 3] < pe
        if alpha and h:
            xh = x
            th = 0
        else:
            th += 1
        if alpha and he:
            xe = x
            te = 0
        else:
            te += 1
        ok = xh == x
        hidden = xe != x
        if t > warmup:
            if ok and hidden:
                counts[0] += 1
            if ok:
                counts[1] += 1
            if hidden:
                counts[2] += 1
            if cap >= 0 and (t - warmup) % stride == 0:
                age_hist[min(th, cap), min(te, cap)] += 1
        if tracing and t < trace.shape[0]:
            trace[t, 0] = t
            trace[t, 1] = x
            trace[t, 2] = alpha
            trace[t, 3] = h
            trace[t, 4] = he
            trace[t, 5] = th
            trace[t, 6] = te
            trace[t, 7] = xh
            trace[t, 8] = xe
            trace[t, 9] = ok and hidden
    state[0], state[1], state[2], state[3], state[4] = x, xh, xe, th, te


def _run(src, ch, pol, cfg, run, age_cap=-1, stride=1, capture=False):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(run,))))
    x0 = int(rng.random() < stationary_source(src)[1])
    # forced synchronizing update at t = 0
    state = np.array([x0, x0, x0, 0, 0], dtype=np.int64)
    counts = np.zeros(3, dtype=np.int64)
    hist = np.zeros((age_cap + 1, age_cap + 1) if age_cap >= 0 else (0, 0), dtype=np.int64)
    trace = np.zeros((min(cfg.horizon, TRACE_CAP - 1) + 1, 10) if capture else (0, 10), dtype=np.int64)
    if capture:
        trace[0] = (0, x0, 1, 1, 1, 0, 0, x0, x0, 0)
    t = 1
    while t <= cfg.horizon:
        n = min(_CHUNK, cfg.horizon - t + 1)
        u = rng.random((n, 4))
        _advance(u, state, t, cfg.warmup, src.p, src.q, pol.p_alpha, ch.p_s, ch.p_s_e,
                 counts, hist, stride, trace)
        t += n
    return counts / (cfg.horizon - cfg.warmup), hist, trace


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_runs(fn, runs, workers):
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or runs == 1:
        return [fn(r) for r in range(runs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(runs)))


def simulate(
    src: SourceModel, ch: ChannelPair, pol: Policy, cfg: SimConfig, workers: int | None = None
) -> SimEstimate:
    per_run = np.array(_map_runs(lambda r: _run(src, ch, pol, cfg, r)[0], cfg.runs, workers))
    means = per_run.mean(axis=0)
    if cfg.runs > 1:
        se = per_run.std(axis=0, ddof=1) / np.sqrt(cfg.runs)
    else:
        se = np.zeros(3)
    return SimEstimate(
        mean_cra=float(means[0]),
        mean_accuracy=float(means[1]),
        mean_confidentiality=float(means[2]),
        std_error_cra=float(se[0]),
        std_error_accuracy=float(se[1]),
        std_error_confidentiality=float(se[2]),
        runs_used=cfg.runs,
    )


def simulate_trace(
    src: SourceModel, ch: ChannelPair, pol: Policy, cfg: SimConfig, run: int = 0
) -> SimTrace:
    """Per-slot trace of one replication (capped at ``TRACE_CAP`` slots)."""
    trace = _run(src, ch, pol, cfg, run, capture=True)[2]
    return SimTrace(*(trace[:, k] for k in range(trace.shape[1])))


def empirical_age_distribution(
    src: SourceModel,
    ch: ChannelPair,
    pol: Policy,
    cfg: SimConfig,
    cap: int = 50,
    stride: int = 1,
    workers: int | None = None,
) -> tuple[np.ndarray, int]:
    """Normalized histogram of (Bob age, Eve age), ages above ``cap`` pooled into ``cap``.

    Ages are sampled every ``stride`` slots after warmup; a stride of a few
    mean inter-reception times makes the samples practically independent.
    Returns the histogram and the number of samples behind it.
    """
    if cap < 0 or stride < 1:
        raise DomainError("cap must be >= 0 and stride >= 1")
    hists = _map_runs(lambda r: _run(src, ch, pol, cfg, r, cap, stride)[1], cfg.runs, workers)
    total = np.sum(hists, axis=0)
    n = int(total.sum())
    return total / n, n


def sweep(
    src: SourceModel, ch: ChannelPair, p_alpha_grid, cfg: SimConfig, workers: int | None = None
) -> list[tuple[float, SimEstimate]]:
    grid = [float(v) for v in p_alpha_grid]
    if not grid:
        raise DomainError("p_alpha grid is empty")
    return [(pa, simulate(src, ch, Policy(pa), cfg, workers)) for pa in grid]
