"""CRA objective and the marginal accuracy / confidentiality baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EQ_TOL, ChannelPair, DomainError, Policy, SourceModel, lambda_set
from .stationary import closed_form_pi, stationary_closed_form

# |p_s - p_s_e| below this evaluates both routes and cross-checks them.
NEAR_SYMMETRIC_TOL = 1e-6

_BOTH_CORRECT = (0, 7)  # (0,0,0) and (1,1,1)
_BOB_CORRECT = (0, 1, 6, 7)
_EVE_WRONG = (1, 3, 4, 6)


class DegenerateBranchError(ArithmeticError):
    """Rational coefficients requested for a symmetric channel."""


@dataclass(frozen=True)
class CraRational:
    """Coefficients of ``(A*x + B) / (C*x**2 + D*x + E)`` in x = p_alpha."""

    A: float
    B: float
    C: float
    D: float
    E: float

    def __call__(self, p_alpha):
        x = np.asarray(p_alpha, dtype=float)
        return (self.A * x + self.B) / ((self.C * x + self.D) * x + self.E)

    @property
    def scale(self) -> float:
        return max(abs(self.A), abs(self.B), abs(self.C), abs(self.D), abs(self.E))


@dataclass(frozen=True)
class MetricReport:
    cra: float
    accuracy: float
    confidentiality: float
    non_confidential_accuracy: float
    omega: float
    weighted: float


def avg_cra_from_pi(pi) -> float:
    pi = np.asarray(pi)
    return pi[..., 1] + pi[..., 6]


def cra_coefficients(src: SourceModel, ch: ChannelPair) -> CraRational:
    p, q, ps, pe = src.p, src.q, ch.p_s, ch.p_s_e
    if abs(ps - pe) < EQ_TOL:
        raise DegenerateBranchError("p_s == p_s_e: use the stationary route")
    s = p + q
    k = ps * pe - ps - pe
    return CraRational(
        A=p * q * (ps**2 * (1 - pe) * (s - 2) + pe**2 * (1 - ps) * s),
        B=p * q * s * (2 * ps * pe - ps - pe),
        C=k * ps * pe * (s - 1) ** 2 * s,
        D=k * (ps + pe) * (1 - s) * s**2,
        E=k * s**3,
    )


def _cra_via_pi(src, ps, pe, p_alpha):
    pa = np.asarray(p_alpha, dtype=float)
    l11 = pa * ps * pe
    l10 = pa * ps * (1 - pe)
    l01 = pa * (1 - ps) * pe
    l00 = pa * (1 - ps) * (1 - pe) + (1 - pa)
    return avg_cra_from_pi(closed_form_pi(src.p, src.q, l11, l10, l01, l00))


def cra_curve(src: SourceModel, ch: ChannelPair, p_alpha) -> np.ndarray:
    """Vectorized average CRA over an array of transmission probabilities."""
    gap = abs(ch.p_s - ch.p_s_e)
    if gap < EQ_TOL:
        return _cra_via_pi(src, ch.p_s, ch.p_s_e, p_alpha)
    rational = cra_coefficients(src, ch)(p_alpha)
    if gap < NEAR_SYMMETRIC_TOL:
        exact = _cra_via_pi(src, ch.p_s, ch.p_s_e, p_alpha)
        if np.abs(exact - rational).max() > 1e-6:
            raise ArithmeticError("rational form lost precision near p_s == p_s_e")
        return exact
    return rational


def avg_cra_closed(src: SourceModel, ch: ChannelPair, pol: Policy) -> float:
    return float(cra_curve(src, ch, pol.p_alpha))


def _marginal(p, q, rate, numerators):
    s = p + q
    return numerators / (s * (s + rate * (1 - s)))


def marginal_accuracy(src: SourceModel, ch: ChannelPair, pol: Policy) -> float:
    """Bob-side accuracy pi_{X,X_hat}(0,0) + pi_{X,X_hat}(1,1)."""
    p, q = src.p, src.q
    r = pol.p_alpha * ch.p_s
    num = q * (q + r * (1 - q)) + p * (p + r * (1 - p))
    return float(_marginal(p, q, r, num))


def eve_wrong_terms(src: SourceModel, ch: ChannelPair, pol: Policy) -> tuple[float, float]:
    """pi_{X,X_hat_e}(0,1) and pi_{X,X_hat_e}(1,0); identical by construction."""
    p, q = src.p, src.q
    r = pol.p_alpha * ch.p_s_e
    term = float(_marginal(p, q, r, p * q * (1 - r)))
    return term, term


def marginal_confidentiality(src: SourceModel, ch: ChannelPair, pol: Policy) -> float:
    return sum(eve_wrong_terms(src, ch, pol))


def _check_omega(omega):
    omega = float(omega)
    if not (0.0 <= omega <= 1.0):
        raise DomainError(f"omega must lie in [0, 1], got {omega!r}")
    return omega


def weighted_metric(src, ch, pol, omega: float) -> float:
    omega = _check_omega(omega)
    return (1 - omega) * marginal_accuracy(src, ch, pol) + omega * marginal_confidentiality(
        src, ch, pol
    )


def metrics_from_pi(pi, omega: float = 0.5) -> MetricReport:
    omega = _check_omega(omega)
    pi = np.asarray(pi)
    accuracy = float(pi[list(_BOB_CORRECT)].sum())
    confidentiality = float(pi[list(_EVE_WRONG)].sum())
    return MetricReport(
        cra=float(avg_cra_from_pi(pi)),
        accuracy=accuracy,
        confidentiality=confidentiality,
        non_confidential_accuracy=float(pi[list(_BOTH_CORRECT)].sum()),
        omega=omega,
        weighted=(1 - omega) * accuracy + omega * confidentiality,
    )


def metric_report(
    src: SourceModel, ch: ChannelPair, pol: Policy, omega: float = 0.5
) -> MetricReport:
    """All metrics from a single closed-form stationary solve."""
    return metrics_from_pi(stationary_closed_form(src, lambda_set(pol, ch)), omega)
