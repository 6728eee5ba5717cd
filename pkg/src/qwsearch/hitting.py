"""Hitting times: matrix form, spectral form in s, and the derivative identity."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .chain import (
    InterpolatedChain,
    MarkedSet,
    as_chain,
    interpolate,
    projections,
    sin2_theta,
    warn_large_p_M,
)
from .errors import ErgodicityError, InvalidParameterError, SingularityError

SINGULAR_COND = 1e13


def hitting_time_matrix(P, marked, include_p_U: bool = False) -> float:
    """``<U| (I_U - D_UU)^-1 |U>``, the hitting time from ``pi`` without the ``p_U`` factor.

    With ``include_p_U`` the result is multiplied by ``p_U`` and equals the
    expected number of steps to reach ``M`` when the start is drawn from
    ``pi`` itself. The abridged default is the expected time when the start
    is drawn from ``pi`` conditioned on being unmarked.
    """
    chain = as_chain(P)
    M = MarkedSet.of(marked, chain.n)
    if M.m == 0:
        raise InvalidParameterError("hitting time needs a nonempty marked set")
    proj = projections(chain, M)
    warn_large_p_M(proj.p_M)
    unmarked = np.array(M.unmarked, dtype=int)
    if unmarked.size == 0:
        return 0.0
    P_UU = chain.P[np.ix_(unmarked, unmarked)]
    K = np.eye(unmarked.size) - np.sqrt(P_UU * P_UU.T)
    if np.linalg.cond(K) > SINGULAR_COND:
        raise SingularityError("I - D_UU is singular: the marked set is unreachable")
    u = proj.U_state[unmarked]
    ht = float(u @ np.linalg.solve(K, u))
    return ht * proj.p_U if include_p_U else ht


def _excluded(chain: InterpolatedChain) -> np.ndarray:
    """Indices of the eigenvalue-1 eigenspace removed from the spectral sum."""
    lam = chain.spectral.lambdas
    if chain.s < 1.0:
        return np.array([lam.size - 1])
    return np.flatnonzero(lam >= 1.0 - 1e-10)


def hitting_time_spectral(chain: InterpolatedChain) -> float:
    """``HT(s) = sum_{k != n} |<v_k(s)|U>|^2 / (1 - lambda_k(s))``."""
    sd = chain.spectral
    if chain.marked.m == 0:
        raise InvalidParameterError("hitting time needs a nonempty marked set")
    keep = np.ones(sd.n, dtype=bool)
    keep[_excluded(chain)] = False
    alpha = sd.overlaps(chain.U_state)
    if chain.s >= 1.0 and np.abs(alpha[~keep]).max(initial=0.0) > 1e-8:
        raise ErgodicityError("|U> overlaps the eigenvalue-1 eigenspace at s = 1")
    gaps = 1.0 - sd.lambdas[keep]
    if np.any(gaps <= 0):
        raise ErgodicityError("eigenvalue >= 1 outside the stationary line")
    return float(np.sum(alpha[keep] ** 2 / gaps))


def ht_curve(P, marked, s_values) -> np.ndarray:
    return np.array([hitting_time_spectral(interpolate(P, marked, s)) for s in s_values])


def resolvent_A(chain: InterpolatedChain) -> np.ndarray:
    """``A(s) = sum_{k != n} |v_k><v_k| / (1 - lambda_k)``."""
    if chain.s >= 1.0:
        raise SingularityError("A(s) is defined for s < 1")
    sd = chain.spectral
    V = sd.vectors[:, :-1]
    return (V / (1.0 - sd.lambdas[:-1])) @ V.T


def ht_ode_rhs(p_M: float, s: float, ht: float) -> float:
    """Right-hand side ``2 (1 - p_M) / (1 - s (1 - p_M)) * HT(s)``."""
    return 2.0 * (1.0 - p_M) / (1.0 - s * (1.0 - p_M)) * ht


def ht_derivative_check(P, marked, s: float, h: float = 1e-5) -> dict:
    """Compare a central difference of ``HT(s)`` against the ODE right-hand side."""
    if not 0.0 < s < 1.0:
        raise InvalidParameterError(f"derivative check needs s in (0, 1), got {s}")
    h = min(h, s / 2, (1.0 - s) / 2)
    ht = hitting_time_spectral(interpolate(P, marked, s))
    plus = hitting_time_spectral(interpolate(P, marked, s + h))
    minus = hitting_time_spectral(interpolate(P, marked, s - h))
    lhs = (plus - minus) / (2.0 * h)
    p_M = projections(P, marked).p_M
    rhs = ht_ode_rhs(p_M, s, ht)
    return {
        "s": s,
        "step": h,
        "ht": ht,
        "finite_difference": lhs,
        "analytic": rhs,
        "relative_error": abs(lhs - rhs) / abs(rhs),
    }


def ode_ratio(p_M: float, s: float) -> float:
    """``HT(s) / HT(1)`` obtained by integrating the log-derivative from ``s`` to 1."""
    val, _ = integrate.quad(lambda u: 2.0 * (1.0 - p_M) / (1.0 - u * (1.0 - p_M)), s, 1.0,
                            epsabs=1e-14, epsrel=1e-13)
    return math.exp(-val)


def sin4_residual(P, marked, s: float, ht_full: float | None = None) -> dict:
    """``HT(s)`` against ``sin^4 theta(s) * HT(P, M)``."""
    if ht_full is None:
        ht_full = hitting_time_matrix(P, marked)
    chain = interpolate(P, marked, s)
    ht_s = hitting_time_spectral(chain)
    predicted = sin2_theta(chain.p_M, s) ** 2 * ht_full
    return {
        "s": s,
        "ht_s": ht_s,
        "predicted": predicted,
        "abs_error": abs(ht_s - predicted),
        "bound": 1e-8 * (1.0 + ht_full),
    }


def extended_hitting_time(P, marked) -> float:
    """``lim_{s -> 1-} HT(s)``, equal to ``HT(s) / sin^4 theta(s)`` for every ``s < 1``.

    Coincides with :func:`hitting_time_matrix` for a single marked vertex;
    for larger marked sets it can be strictly bigger, since the
    non-stationary eigenvectors of the marked block keep an ``O(1)`` share
    of the spectral sum as ``s -> 1`` while vanishing at ``s = 1``.
    """
    chain = interpolate(P, marked, 0.0)
    return hitting_time_spectral(chain) / chain.p_M**2
