"""Power-divergence family and divergences between probability vectors.

``phi_lambda`` is the convex generator indexed by a real tuning parameter
``lam``; ``divergence`` evaluates sum_r p_r * phi(q_r / p_r) between two
probability vectors. The two Kullback limit cases ``lam = 0`` and
``lam = -1`` are recognized by exact comparison, never by closeness, so a
floating-point ``lam`` can not silently land in the wrong branch.
"""

from __future__ import annotations

import math

import numpy as np

from .model import as_probability_vector

# A zero cell where the other vector has mass can make a divergence infinite
# (e.g. lam = -1 with q_r = 0). Infinity is the flagged result, not an error.


def phi_lambda(lam: float, x):
    """Evaluate the power-divergence generator at ``x >= 0`` (vectorized).

    For ``lam`` outside {-1, 0}: ``[x^(lam+1) - x - lam(x-1)] / (lam(1+lam))``;
    at ``lam = 0``: ``x log x - x + 1`` (with 0 log 0 = 0); at ``lam = -1``:
    ``-log x + x - 1``, the limit of the family, which is +inf at x = 0.
    Nonnegative everywhere, zero iff x = 1.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("phi_lambda requires x >= 0")
    if lam == 0.0:
        xlogx = np.where(arr > 0, arr * np.log(np.where(arr > 0, arr, 1.0)), 0.0)
        out = xlogx - arr + 1.0
    elif lam == -1.0:
        with np.errstate(divide="ignore"):
            out = np.where(arr > 0, -np.log(np.where(arr > 0, arr, 1.0)), np.inf) + arr - 1.0
    else:
        out = (arr ** (lam + 1.0) - arr - lam * (arr - 1.0)) / (lam * (1.0 + lam))
    # phi(1) = 0 exactly by construction; roundoff can leave tiny negatives
    out = np.where((out < 0) & (out > -1e-15), 0.0, out)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def _kullback(q: np.ndarray, p: np.ndarray) -> float:
    """sum q log(q/p) with 0 log 0 = 0; +inf when q has mass where p has none."""
    pos = q > 0
    if np.any(pos & (p == 0)):
        return math.inf
    return float(np.sum(q[pos] * np.log(q[pos] / p[pos])))


def divergence(lam: float, q, p) -> float:
    """Power divergence of order ``lam`` between probability vectors q and p.

    Evaluates sum_r p_r * phi_lambda(q_r / p_r) under the zero-cell
    conventions 0*phi(0/0) = 0 and 0*phi(q/0) = lim_u q*phi(u)/u. For
    ``lam`` outside {-1, 0} this equals the closed form
    ``[sum q^(lam+1) / p^lam - 1] / (lam(lam+1))``; the limits are the
    Kullback divergences K(q, p) at lam = 0 and K(p, q) at lam = -1.
    Nonnegative; zero iff q = p; +inf is returned (not raised) when a zero
    cell makes the chosen order infinite.
    """
    qv = as_probability_vector(q)
    pv = as_probability_vector(p)
    if qv.shape != pv.shape:
        raise ValueError(f"shape mismatch: {qv.shape} vs {pv.shape}")
    if np.array_equal(qv, pv):
        return 0.0

    if lam == 0.0:
        value = _kullback(qv, pv)
    elif lam == -1.0:
        value = _kullback(pv, qv)
    else:
        if lam < -1.0 and np.any((qv == 0) & (pv > 0)):
            return math.inf
        if lam > 0.0 and np.any((pv == 0) & (qv > 0)):
            return math.inf
        # Cells with q = 0 (lam > -1) or p = 0 (lam in (-1, 0)) contribute 0
        # to the power sum; their mass enters through the -1 term, which is
        # exactly the limit convention.
        both = (qv > 0) & (pv > 0)
        s = float(np.sum(qv[both] ** (lam + 1.0) * pv[both] ** (-lam)))
        value = (s - 1.0) / (lam * (lam + 1.0))
    if value < 0 and value > -1e-12:
        return 0.0
    return value
