"""Power-series algebra in the embedding parameter.

All series are plain sequences of coefficients ``c[0..n]`` representing
``sum(c[d] * alpha**d)``.  The reciprocal and magnitude recurrences are the
order-by-order companions used by the injected-voltage and equivalent-
reactance control modes.
"""

from __future__ import annotations

import numpy as np

#: smallest leading coefficient for which reciprocal/magnitude companions
#: are considered well defined
EPS_ZERO = 1e-9


class SeriesOrderError(ValueError):
    """A coefficient beyond the available order was requested."""


class SingularSeriesError(ZeroDivisionError):
    """Leading coefficient too small for a reciprocal/magnitude recurrence."""


def convolve(a, b, n: int) -> complex:
    """Cauchy-product coefficient ``sum(a[d] * b[n-d], d=0..n)``."""
    if len(a) <= n or len(b) <= n:
        raise SeriesOrderError(
            f"order {n} requested, have {len(a) - 1} and {len(b) - 1}")
    return sum(a[d] * b[n - d] for d in range(n + 1))


def reciprocal_coefficient(f, i_series, n: int) -> complex:
    """Order-n coefficient of the reciprocal of ``i_series``.

    ``f`` holds the reciprocal coefficients through order n-1; the returned
    value makes the Cauchy product of the two series vanish at order n.
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    if len(f) < n or len(i_series) <= n:
        raise SeriesOrderError(f"insufficient coefficients for order {n}")
    lead = i_series[0]
    if abs(lead) <= EPS_ZERO:
        raise SingularSeriesError("reciprocal of a series with ~zero leading "
                                  "coefficient (zero current guess?)")
    return -sum(f[d] * i_series[n - d] for d in range(n)) / lead


def magnitude_coefficient(m, i_series, n: int) -> float:
    """Order-n coefficient of the magnitude series of ``i_series``.

    Defined by the Cauchy-square identity |I|(a) * |I|(a) = I(a) * conj-I(a),
    where conj-I has coefficient-wise conjugated entries.  ``m`` holds the
    magnitude coefficients through order n-1 (m[0] = |i_series[0]|).
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    if len(m) < n or len(i_series) <= n:
        raise SeriesOrderError(f"insufficient coefficients for order {n}")
    lead = abs(i_series[0])
    if lead <= EPS_ZERO:
        raise SingularSeriesError("magnitude series of a series with ~zero "
                                  "leading coefficient")
    cross = sum(i_series[d] * np.conj(i_series[n - d]) for d in range(n + 1))
    self_sq = sum(m[d] * m[n - d] for d in range(1, n))
    return float((cross.real - self_sq) / (2.0 * lead))


def evaluate_at_one(coeffs, pade: bool = False):
    """Value of the series at alpha = 1: partial sum, or a diagonal Pade
    approximant when ``pade`` is set."""
    c = np.asarray(coeffs)
    if c.size == 0:
        raise ValueError("empty series")
    if not pade or c.size < 4:
        return c.sum()
    return pade_at_one(c)


def pade_at_one(coeffs) -> complex:
    """Diagonal Pade approximant of the series evaluated at 1.

    Solves the standard linear system for the denominator coefficients;
    truncates to an odd number of coefficients (L = M diagonal form).
    """
    c = np.asarray(coeffs, dtype=complex)
    nn = (c.size - 1) // 2
    L = M = nn
    if M == 0:
        return c.sum()
    rhs = c[L + 1:L + M + 1]
    A = np.empty((M, M), dtype=complex)
    for i in range(M):
        A[i, :] = c[L - M + i + 1:L + i + 1]
    try:
        x = np.linalg.solve(A, -rhs)
    except np.linalg.LinAlgError:
        return c.sum()
    b = np.concatenate(([1.0 + 0j], x[::-1]))
    a = np.empty(L + 1, dtype=complex)
    a[0] = c[0]
    for k in range(1, L + 1):
        a[k] = sum(c[k - j] * b[j] for j in range(k + 1))
    denom = b.sum()
    if abs(denom) < 1e-12:
        return c.sum()
    return a.sum() / denom
