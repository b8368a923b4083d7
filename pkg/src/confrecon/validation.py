"""Self-check battery comparing every analytical route against its oracle.

Functions are looked up through their modules at call time so a test
harness can patch one of them and confirm the battery notices.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import metrics, optimizer, simulation, stationary
from .model import ChannelPair, Policy, SourceModel, lambda_set

PROB_RANGE = (0.02, 0.98)
P_ALPHA_RANGE = (0.02, 1.0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    cases: int

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.max_error = float(self.max_error)

    @property
    def margin(self) -> float:
        return self.tolerance - self.max_error


def random_tuples(rng: np.random.Generator, n: int, min_gap: float = 0.0):
    """Draw ``n`` rows ``(p, q, p_s, p_s_e, p_alpha)`` uniformly over the test ranges.

    Rows with ``|p_s - p_s_e| <= min_gap`` are redrawn.
    """
    out = []
    while len(out) < n:
        p, q, ps, pe = rng.uniform(*PROB_RANGE, size=4)
        pa = rng.uniform(*P_ALPHA_RANGE)
        if abs(ps - pe) > min_gap:
            out.append((p, q, ps, pe, pa))
    return out


def _split(row):
    p, q, ps, pe, pa = row
    return SourceModel(p, q), ChannelPair(ps, pe), Policy(pa)


def check_three_oracles(rows, terms=stationary.DEFAULT_SERIES_TERMS):
    """Closed form vs linear solve (1e-10) and vs truncated series (1e-8 plus its bound)."""
    worst_numeric = worst_series = 0.0
    for row in rows:
        src, ch, pol = _split(row)
        lam = lambda_set(pol, ch)
        closed = stationary.stationary_closed_form(src, lam)
        numeric = stationary.stationary_numeric(stationary.build_kernel(src, lam))
        series = stationary.stationary_by_series(src, lam, terms)
        worst_numeric = max(worst_numeric, np.abs(closed - numeric).max())
        excess = np.abs(closed - series).max() - stationary.series_error_bound(lam, terms)
        worst_series = max(worst_series, excess)
    return [
        CheckResult("closed_vs_numeric", worst_numeric <= 1e-10, worst_numeric, 1e-10, len(rows)),
        CheckResult("closed_vs_series", worst_series <= 1e-8, worst_series, 1e-8, len(rows)),
    ]


def check_rational(rows, grid_points=20):
    grid = np.linspace(P_ALPHA_RANGE[0], 1.0, grid_points)
    worst = 0.0
    n = 0
    for row in rows:
        src, ch, _ = _split(row)
        if abs(ch.p_s - ch.p_s_e) <= metrics.NEAR_SYMMETRIC_TOL:
            continue
        rational = metrics.cra_coefficients(src, ch)(grid)
        p, q = src.p, src.q
        pi = stationary.closed_form_pi(
            p, q, grid * ch.p_s * ch.p_s_e, grid * ch.p_s * (1 - ch.p_s_e),
            grid * (1 - ch.p_s) * ch.p_s_e, grid * (1 - ch.p_s) * (1 - ch.p_s_e) + 1 - grid,
        )
        worst = max(worst, np.abs(rational - metrics.avg_cra_from_pi(pi)).max())
        n += 1
    return [CheckResult("rational_vs_stationary", worst <= 1e-10, worst, 1e-10, n)]


def check_coefficient_signs(rows):
    worst = 0.0
    n = 0
    for row in rows:
        src, ch, _ = _split(row)
        if ch.symmetric:
            continue
        c = metrics.cra_coefficients(src, ch)
        violation = max(c.B, c.C, c.E, c.A + c.B, 0.0) / c.scale
        delta = c.B**2 * c.C**2 + c.A * c.C * (c.A * c.E - c.B * c.D)
        violation = max(violation, -delta / c.scale**4 - 1e-9)
        worst = max(worst, violation)
        n += 1
    return [CheckResult("coefficient_signs", worst <= 0.0, worst, 0.0, n)]


def check_marginals(rows):
    worst = 0.0
    for row in rows:
        src, ch, pol = _split(row)
        pi = stationary.stationary_closed_form(src, lambda_set(pol, ch))
        acc = pi[[0, 1, 6, 7]].sum()
        conf = pi[[1, 3, 4, 6]].sum()
        worst = max(
            worst,
            abs(metrics.marginal_accuracy(src, ch, pol) - acc),
            abs(metrics.marginal_confidentiality(src, ch, pol) - conf),
        )
    return [CheckResult("marginal_closed_forms", worst <= 1e-10, worst, 1e-10, len(rows))]


def check_optimizer(rows, step=1e-4):
    worst = 0.0
    for row in rows:
        src, ch, _ = _split(row)
        res = optimizer.optimize(src, ch)
        p_grid, _ = optimizer.grid_argmax(src, ch, res.interval, step)
        worst = max(worst, abs(res.p_alpha_star - p_grid))
    return [CheckResult("optimizer_vs_grid", worst <= 2e-4, worst, 2e-4, len(rows))]


def check_simulation(rows, cfg, sigmas=5.0, workers=None):
    """Worst |sim - closed| measured in standard errors."""
    worst = 0.0
    for row in rows:
        src, ch, pol = _split(row)
        est = simulation.simulate(src, ch, pol, cfg, workers)
        exact = metrics.avg_cra_closed(src, ch, pol)
        worst = max(worst, abs(est.mean_cra - exact) / max(est.std_error_cra, 1e-15))
    return [CheckResult("simulation_agreement", worst <= sigmas, worst, sigmas, len(rows))]


def run_battery(tuples=50, seed=0, sim_tuples=5, sim_cfg=None, workers=None) -> dict:
    rng = np.random.default_rng(seed)
    rows = random_tuples(rng, tuples)
    sim_cfg = sim_cfg or simulation.SimConfig(horizon=5_000, runs=50, seed=seed, warmup=1_000)
    checks = []
    checks += check_three_oracles(rows)
    checks += check_rational(rows)
    checks += check_coefficient_signs(rows)
    checks += check_marginals(rows)
    checks += check_optimizer(rows)
    if sim_tuples:
        checks += check_simulation(random_tuples(rng, sim_tuples), sim_cfg, workers=workers)
    return {
        "seed": seed,
        "tuples": tuples,
        "passed": all(c.passed for c in checks),
        "checks": [dict(asdict(c), margin=c.margin) for c in checks],
    }
