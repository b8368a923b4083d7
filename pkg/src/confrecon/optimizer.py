"""Optimal randomized stationary policy for the average CRA."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .metrics import CraRational, cra_coefficients, cra_curve
from .model import EQ_TOL, ChannelPair, DomainError, SourceModel

DEFAULT_P_MIN = 1e-3
# |A*C| below this fraction of scale**2 switches to the affine-M analysis.
DEGENERATE_AC_TOL = 1e-14
# Grid values within this of the maximum count as ties (resolved to smaller p_alpha).
TIE_TOL = 1e-12


class Branch(str, enum.Enum):
    GENERAL_ROOT = "GeneralRoot"
    SYMMETRIC_PERSISTENT = "SymmetricPersistent"
    SYMMETRIC_ALTERNATING = "SymmetricAlternating"
    SYMMETRIC_INDIFFERENT = "SymmetricIndifferent"
    DEGENERATE_A = "DegenerateA"
    CLAMPED = "Clamped"


@dataclass(frozen=True)
class OptimizerResult:
    p_alpha_star: float
    value: float
    branch: Branch
    delta: float
    interval: tuple[float, float] = (DEFAULT_P_MIN, 1.0)


def check_interval(interval) -> tuple[float, float]:
    lo, hi = (float(v) for v in interval)
    if not (0.0 < lo <= hi <= 1.0):
        raise DomainError(f"interval must satisfy 0 < p_ell <= p_u <= 1, got {interval!r}")
    return lo, hi


def derivative_numerator(coeffs: CraRational, p_alpha):
    """M(p_alpha); shares its sign with d(avg CRA)/d(p_alpha)."""
    A, B, C, D, E = coeffs.A, coeffs.B, coeffs.C, coeffs.D, coeffs.E
    x = np.asarray(p_alpha, dtype=float)
    return -A * C * x**2 - 2 * B * C * x + (A * E - B * D)


def discriminant(coeffs: CraRational) -> float:
    A, B, C, D, E = coeffs.A, coeffs.B, coeffs.C, coeffs.D, coeffs.E
    delta = B * B * C * C + A * C * (A * E - B * D)
    if delta < -1e-9 * coeffs.scale**4:
        raise AssertionError(f"discriminant materially negative: {delta!r}")
    return delta


def stationary_root(coeffs: CraRational, delta: float) -> float:
    """The closed-form candidate ``(-BC + sqrt(delta)) / (AC)``.

    Evaluated as ``(AE - BD) / (BC + sqrt(delta))``, the same root rewritten
    through the product of roots; B, C <= 0 keeps the denominator free of
    cancellation.
    """
    A, B, C, D, E = coeffs.A, coeffs.B, coeffs.C, coeffs.D, coeffs.E
    return (A * E - B * D) / (B * C + math.sqrt(max(delta, 0.0)))


def _affine_argmax(coeffs, lo, hi):
    # With A*C ~ 0, M is affine; its endpoint signs fix the monotone pieces.
    m_lo = float(derivative_numerator(coeffs, lo))
    m_hi = float(derivative_numerator(coeffs, hi))
    if m_hi >= 0.0 and m_lo >= 0.0:
        return hi if (m_hi > 0.0 or m_lo > 0.0) else lo
    if m_lo <= 0.0 and m_hi <= 0.0:
        return lo
    if m_lo > 0.0 > m_hi:
        # increasing then decreasing: interior root of the affine M
        slope = -2 * coeffs.B * coeffs.C
        return min(hi, max(lo, -(coeffs.A * coeffs.E - coeffs.B * coeffs.D) / slope))
    # decreasing then increasing: better endpoint, ties to the smaller one
    f_lo, f_hi = coeffs(lo), coeffs(hi)
    return hi if f_hi > f_lo + TIE_TOL else lo


def optimize(
    src: SourceModel, ch: ChannelPair, interval=(DEFAULT_P_MIN, 1.0)
) -> OptimizerResult:
    lo, hi = check_interval(interval)

    def result(p_star, branch, delta):
        value = float(cra_curve(src, ch, p_star))
        return OptimizerResult(p_star, value, branch, delta, (lo, hi))

    if ch.symmetric:
        s = src.p + src.q
        if abs(s - 1.0) < EQ_TOL:
            return result(lo, Branch.SYMMETRIC_INDIFFERENT, 0.0)
        if s > 1.0:
            return result(hi, Branch.SYMMETRIC_ALTERNATING, 0.0)
        return result(lo, Branch.SYMMETRIC_PERSISTENT, 0.0)

    coeffs = cra_coefficients(src, ch)
    delta = discriminant(coeffs)
    if abs(coeffs.A * coeffs.C) < DEGENERATE_AC_TOL * coeffs.scale**2:
        return result(_affine_argmax(coeffs, lo, hi), Branch.DEGENERATE_A, delta)
    candidate = stationary_root(coeffs, delta)
    if lo < candidate < hi:
        return result(candidate, Branch.GENERAL_ROOT, delta)
    return result(min(hi, max(lo, candidate)), Branch.CLAMPED, delta)


def feasible_grid(interval, step: float) -> np.ndarray:
    lo, hi = check_interval(interval)
    if step <= 0:
        raise DomainError("grid step must be positive")
    n = int(math.floor((hi - lo) / step + 1e-9))
    grid = lo + step * np.arange(n + 1)
    if grid[-1] < hi - 1e-12:
        grid = np.append(grid, hi)
    return np.minimum(grid, hi)


def grid_argmax(
    src: SourceModel, ch: ChannelPair, interval=(DEFAULT_P_MIN, 1.0), step: float = 1e-4
) -> tuple[float, float]:
    grid = feasible_grid(interval, step)
    values = cra_curve(src, ch, grid)
    best = values.max()
    k = int(np.flatnonzero(values >= best - TIE_TOL)[0])
    return float(grid[k]), float(values[k])
