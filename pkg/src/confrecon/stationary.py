"""Stationary analysis of the joint chain (X, X_hat, X_hat_e) on {0,1}^3.

States are indexed ``4*x + 2*a + b`` where ``a`` is Bob's estimate and ``b``
Eve's. Three independent routes to the stationary vector are provided:

* :func:`stationary_numeric` - augmented linear solve on the 8x8 kernel;
* :func:`stationary_closed_form` - resolvent closed form (vectorizable in
  the reception probabilities);
* :func:`stationary_by_series` - truncated double series over the joint age
  distribution, used as a test oracle.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from .model import LambdaSet, SourceModel, stationary_source

STATES = tuple(itertools.product((0, 1), repeat=3))

DEFAULT_SERIES_TERMS = 2000


class NonErgodicError(ArithmeticError):
    """The stationary linear system is singular or inconsistent."""


def state_index(x: int, a: int, b: int) -> int:
    return 4 * x + 2 * a + b


def build_kernel(src: SourceModel, lam: LambdaSet) -> np.ndarray:
    Q = src.transition_matrix
    P = np.zeros((8, 8))
    for (x, a, b), (x2, a2, b2) in itertools.product(STATES, STATES):
        w = (
            lam.lambda11 * (a2 == x2 and b2 == x2)
            + lam.lambda10 * (a2 == x2 and b2 == b)
            + lam.lambda01 * (a2 == a and b2 == x2)
            + lam.lambda00 * (a2 == a and b2 == b)
        )
        P[state_index(x, a, b), state_index(x2, a2, b2)] = Q[x, x2] * w
    return P


def check_kernel(P: np.ndarray, tol: float = 1e-12) -> None:
    """Raise ``ValueError`` unless P is row-stochastic, irreducible and aperiodic."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("kernel must be square")
    if (P < 0).any():
        raise ValueError("kernel has negative entries")
    if np.abs(P.sum(axis=1) - 1.0).max() > tol:
        raise ValueError("kernel rows do not sum to 1")
    n = P.shape[0]
    reach = ((P > 0) | np.eye(n, dtype=bool)).astype(np.int64)
    for _ in range(int(np.ceil(np.log2(n))) + 1):
        reach = (reach @ reach > 0).astype(np.int64)
    if not reach.all():
        raise ValueError("kernel is not irreducible")
    if not (np.diag(P) > 0).any():
        raise ValueError("kernel has no self-loop; aperiodicity not certified")


def stationary_numeric(P: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    system = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, _, rank, _ = np.linalg.lstsq(system, rhs, rcond=None)
    if rank < n:
        raise NonErgodicError(f"stationary system has rank {rank} < {n}")
    residual = np.abs(pi @ P - pi).max()
    if residual > 1e-12 or abs(pi.sum() - 1.0) > 1e-12:
        raise NonErgodicError(f"stationary residual {residual:.3e}")
    return pi


def _resolvent(p, q, c):
    """(I - c Q)^-1 by the 2x2 adjugate; broadcasts over ``c``."""
    c = np.asarray(c, dtype=float)
    m00 = 1.0 - c * (1.0 - p)
    m11 = 1.0 - c * (1.0 - q)
    det = m00 * m11 - c * c * p * q
    if np.any(det == 0.0):
        raise ArithmeticError("singular resolvent")
    adj = np.stack(
        [np.stack([m11, c * p], axis=-1), np.stack([c * q, m00], axis=-1)], axis=-2
    )
    return adj / det[..., None, None]


def closed_form_pi(p, q, l11, l10, l01, l00):
    """Resolvent closed form for arrays of reception probabilities.

    ``p`` and ``q`` are scalars; the lambdas broadcast together. Returns an
    array of shape ``broadcast_shape + (8,)``.
    """
    l11, l10, l01, l00 = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (l11, l10, l01, l00))
    )
    Q = np.array([[1.0 - p, p], [q, 1.0 - q]])
    v = np.array([q, p]) / (p + q)
    PA = l11 + l10
    PB = l11 + l01
    R0 = _resolvent(p, q, l00)
    RA = Q @ _resolvent(p, q, 1.0 - PA)
    RB = Q @ _resolvent(p, q, 1.0 - PB)
    eye = np.eye(2)
    # axes of the result: ..., x, a, b
    t1 = np.einsum("a,ab,...ax->...xab", v, eye, R0) * l11[..., None, None, None]
    t2 = np.einsum("b,...ba,...ax->...xab", v, RB, R0) * (l10 * PB)[..., None, None, None]
    t3 = np.einsum("a,...ab,...bx->...xab", v, RA, R0) * (l01 * PA)[..., None, None, None]
    return (t1 + t2 + t3).reshape(l11.shape + (8,))


def stationary_closed_form(src: SourceModel, lam: LambdaSet) -> np.ndarray:
    return closed_form_pi(
        src.p, src.q, lam.lambda11, lam.lambda10, lam.lambda01, lam.lambda00
    )


def age_pair_stationary(lam: LambdaSet, i: int, j: int) -> float:
    """Stationary probability that (Bob's age, Eve's age) = (i, j)."""
    if i < 0 or j < 0:
        raise ValueError("ages must be nonnegative")
    if i == j:
        return lam.lambda11 * lam.lambda00**i
    if i < j:
        return lam.lambda10 * lam.P_B * (1.0 - lam.P_B) ** (j - i - 1) * lam.lambda00**i
    return lam.lambda01 * lam.P_A * (1.0 - lam.P_A) ** (i - j - 1) * lam.lambda00**j


@lru_cache(maxsize=4096)
def _qpow(p: float, q: float, k: int) -> np.ndarray:
    out = np.linalg.matrix_power(np.array([[1.0 - p, p], [q, 1.0 - q]]), k)
    out.flags.writeable = False
    return out


def three_time_joint(src: SourceModel, x: int, a: int, b: int, i: int, j: int) -> float:
    """Stationary Pr[X_t = x, X_{t-i} = a, X_{t-j} = b]."""
    v = stationary_source(src)
    p, q = src.p, src.q
    if i == j:
        return float(a == b) * v[a] * _qpow(p, q, i)[a, x]
    if i < j:
        return v[b] * _qpow(p, q, j - i)[b, a] * _qpow(p, q, i)[a, x]
    return v[a] * _qpow(p, q, i - j)[a, b] * _qpow(p, q, j)[b, x]


def matrix_powers(Q: np.ndarray, n: int) -> np.ndarray:
    """Stack ``[Q^0, ..., Q^n]`` built by repeated squaring."""
    out = np.empty((n + 1, 2, 2))
    out[0] = np.eye(2)
    filled = 1
    square = np.asarray(Q, dtype=float)
    while filled <= n:
        take = min(filled, n + 1 - filled)
        out[filled:filled + take] = out[:take] @ square
        filled += take
        square = square @ square
    return out


def series_error_bound(lam: LambdaSet, n: int) -> float:
    """Upper bound on every entry's truncation error in :func:`stationary_by_series`.

    The missing mass is Pr[Bob age > n or Eve age > n], whose geometric
    marginals give ``(1-P_A)^(n+1) + (1-P_B)^(n+1)``.
    """
    r = max(1.0 - lam.P_A, 1.0 - lam.P_B)
    return 2.0 * r ** (n + 1)


def stationary_by_series(
    src: SourceModel, lam: LambdaSet, n: int = DEFAULT_SERIES_TERMS
) -> np.ndarray:
    """Double series over age pairs ``0 <= i, j <= n``.

    The inner geometric sums are accumulated with ``cumsum`` so the whole
    truncated double sum costs O(n) matrix products instead of O(n^2).
    """
    if n < 0:
        raise ValueError("truncation must be nonnegative")
    Q = src.transition_matrix
    v = np.array(stationary_source(src))
    Qk = matrix_powers(Q, n)
    k = np.arange(n + 1)
    g00 = lam.lambda00**k

    diag = np.einsum("i,iax->xa", lam.lambda11 * g00, Qk)
    pi = np.zeros((2, 2, 2))
    for a in (0, 1):
        pi[:, a, a] += v[a] * diag[:, a]

    def offset_sums(fail):
        # S[m] = sum_{d=1}^{m} fail^(d-1) Q^d, S[0] = 0
        w = np.zeros(n + 1)
        w[1:] = fail ** (k[1:] - 1)
        return np.cumsum(w[:, None, None] * Qk, axis=0)

    SB = offset_sums(1.0 - lam.P_B)[::-1]  # SB[i] = S[n - i]
    SA = offset_sums(1.0 - lam.P_A)[::-1]
    # Bob fresher: i < j, path b -(j-i)-> a -(i)-> x
    pi += lam.lambda10 * lam.P_B * np.einsum("b,i,iba,iax->xab", v, g00, SB, Qk)
    # Eve fresher: i > j, path a -(i-j)-> b -(j)-> x
    pi += lam.lambda01 * lam.P_A * np.einsum("a,j,jab,jbx->xab", v, g00, SA, Qk)
    return pi.reshape(8)


def avg_cra_numeric_route(src: SourceModel, lam: LambdaSet) -> float:
    pi = stationary_numeric(build_kernel(src, lam))
    return float(pi[1] + pi[6])
