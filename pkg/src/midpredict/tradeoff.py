"""Competing small-gain style sufficient conditions for delayed observers.

Two published tuning recipes for high-gain predictors bound the admissible
delay through Lyapunov matrices of the delay-free loop. Both collapse
quickly as the delay or the scalar gain grows; the operations here evaluate
their inequalities verbatim plus the necessary conditions that expose the
collapse, for comparison against the cascade sizing rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .margins import hurwitz_check
from .synthesis import delay_free_poly

__all__ = [
    "TradeoffVerdict",
    "lyapunov_solve",
    "ahmed_conditions",
    "ahmed_necessary",
    "lei_conditions",
    "matrix_norms",
    "closed_loop_matrix",
]


@dataclass(frozen=True)
class TradeoffVerdict:
    method: str  # "ahmed" | "lei" | "ours"
    satisfied: bool
    details: dict  # per-inequality residuals, positive means satisfied
    derived: dict  # named intermediate quantities


def closed_loop_matrix(gain):
    """A - L C: companion form with characteristic polynomial from the gains."""
    n = gain.n
    m = np.eye(n, k=1)
    m[:, 0] -= np.asarray(gain.l)
    return m


def _require_hurwitz(gain):
    if not hurwitz_check(delay_free_poly(gain)):
        raise ValueError("A - LC must be Hurwitz for this condition")


def lyapunov_solve(gain):
    """Unique symmetric positive definite P with
    P(A-LC) + (A-LC)'P = -I, via the vectorized linear system."""
    _require_hurwitz(gain)
    n = gain.n
    m = closed_loop_matrix(gain)
    eye = np.eye(n)
    kron = np.kron(eye, m.T) + np.kron(m.T, eye)
    p = np.linalg.solve(kron, -eye.reshape(-1)).reshape(n, n)
    p = (p + p.T) / 2
    residual = np.linalg.norm(p @ m + m.T @ p + eye)
    if residual > 1e-10:
        raise RuntimeError("Lyapunov residual %.2e exceeds tolerance" % residual)
    return p


def _spectral_norm(m):
    return float(np.linalg.norm(m, 2))


def matrix_norms(gain):
    """Spectral norms of the pieces entering both sets of conditions."""
    m = closed_loop_matrix(gain)
    lvec = np.asarray(gain.l)
    lc = np.zeros((gain.n, gain.n))
    lc[:, 0] = lvec
    p = lyapunov_solve(gain)
    eigs = np.linalg.eigvalsh(p)
    return {
        "A_minus_LC": _spectral_norm(m),
        "L": float(np.linalg.norm(lvec)),
        "LC": _spectral_norm(lc),
        "PLC": _spectral_norm(p @ lc),
        "P_cond_ratio": float(eigs[-1] / eigs[0]),
    }


def ahmed_conditions(n, gain, lam, h, gamma_phi):
    """First recipe: two inequalities built on a scaled Lyapunov solution.

    The Lyapunov inequality is met with equality by P = h*lam**2 * P0 where
    P0 solves the unit-right-hand-side equation; that is the most favorable
    standard choice, and the verdict reports the P actually used.
    """
    if lam <= 0 or h < 0:
        raise ValueError("gain and delay must be positive")
    _require_hurwitz(gain)
    p0 = lyapunov_solve(gain)
    p = h * lam ** 2 * p0
    norm_p = _spectral_norm(p)
    norm_m = _spectral_norm(closed_loop_matrix(gain))
    lhs1 = h * lam ** 3 / 2.0
    rhs1 = 2.0 * norm_p * gamma_phi + h * lam ** 2 * (norm_m + 2.0 * norm_p * gamma_phi) ** 2
    norm_l = float(np.linalg.norm(gain.l))
    lhs2 = 1.0
    rhs2 = 2.0 * norm_l ** 2 * (norm_p ** 2 + h ** 2 * lam ** 4)
    details = {
        "decay_dominance": lhs1 - rhs1,
        "injection_smallness": lhs2 - rhs2,
    }
    return TradeoffVerdict(
        method="ahmed",
        satisfied=bool(lhs1 > rhs1 and lhs2 > rhs2),
        details=details,
        derived={"P_norm": norm_p, "A_minus_LC": norm_m, "L": norm_l},
    )


def ahmed_necessary(n, h, lam):
    """Necessary screen for the first recipe at dimension >= 2:
    h*lam**2 < 1/(sqrt(2)*n) and h <= 1/(4*sqrt(2)*n)."""
    if n < 2:
        raise ValueError("the necessary conditions assume dimension >= 2")
    return bool(h * lam ** 2 < 1.0 / (math.sqrt(2) * n) and h <= 1.0 / (4.0 * math.sqrt(2) * n))


def lei_conditions(n, gain, lam, h):
    """Second recipe: sigma * h * lam <= 1 with sigma built from the
    Lyapunov solution of the delay-free loop."""
    if lam <= 0 or h < 0:
        raise ValueError("gain and delay must be positive")
    _require_hurwitz(gain)
    p = lyapunov_solve(gain)
    eigs = np.linalg.eigvalsh(p)
    norms = matrix_norms(gain)
    sigma = max(
        8.0 * norms["A_minus_LC"] ** 2 * eigs[-1] / eigs[0],
        8.0 * norms["PLC"] ** 2,
        2.0 * math.sqrt(2.0) * norms["LC"],
    )
    details = {"contraction": 1.0 - sigma * h * lam}
    derived = dict(norms)
    derived["sigma"] = sigma
    return TradeoffVerdict(
        method="lei",
        satisfied=bool(sigma * h * lam <= 1.0),
        details=details,
        derived=derived,
    )
