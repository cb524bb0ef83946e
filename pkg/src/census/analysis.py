"""Closed-form predictions for biased random-walk coverage.

The cover-time bounds come from summing per-shell costs: while a fraction of
nodes is still unvisited, the expected search radius around a token is
roughly ``j`` hops and the search touches about ``j^2 d`` nodes. The
functions below evaluate those partial sums exactly (with a fractional weight
for the last, partial shell) instead of their asymptotic envelopes.
"""
from __future__ import annotations

import math

import numpy as np


class TheoryError(ValueError):
    pass


def theta(p: float) -> float:
    """``-ln(1 - p)``: the Poisson exponent for confidence ``p``."""
    if not 0.0 < p < 1.0:
        raise TheoryError(f"p must be in (0, 1), got {p}")
    return -math.log1p(-p)


def lemma1_threshold(p: float, h: float, d: float) -> float:
    """Smallest unvisited fraction that still leaves an unvisited node within ``h`` hops w.p. ``p``."""
    if h < 1:
        raise TheoryError(f"h must be >= 1, got {h}")
    if d <= 0:
        raise TheoryError(f"d must be positive, got {d}")
    return theta(p) / (h * h * d)


def nn_pdf(rho: float, r):
    """Nearest-neighbour distance density of a planar Poisson process with intensity ``rho``."""
    if rho <= 0:
        raise TheoryError("rho must be positive")
    r = np.asarray(r, dtype=float)
    return 2.0 * math.pi * rho * r * np.exp(-rho * math.pi * r * r)


def nn_cdf(rho: float, r):
    """P(nearest neighbour within ``r``)."""
    if rho <= 0:
        raise TheoryError("rho must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise TheoryError("distance must be non-negative")
    return -np.expm1(-rho * math.pi * r * r)


def _shell_sum(term, last: float) -> float:
    """``sum_{i=1}^{floor(last)} term(i)`` plus the fractional part of ``last`` times the next term."""
    if last <= 0:
        return 0.0
    full = int(math.floor(last))
    total = math.fsum(term(i) for i in range(1, full + 1))
    frac = last - full
    if frac > 0:
        total += frac * term(full + 1)
    return total


def _local_term(i: int) -> float:
    return (2.0 * i + 1.0) / (i * i)


def local_bias_cover_series(n: float, d: float) -> float:
    """Expected transfers for one locally biased token to visit ``n`` nodes.

    ``(N - N/d) + N * sum_{i=1}^{sqrt(z)-1} (2i+1)/i^2`` with ``z = N/d``.
    Shell ``i`` is the stretch where the nearest unvisited node is about
    ``i + 1`` hops away, reached after visiting ``(i+1)^2 d`` nodes.
    """
    if d < 1:
        raise TheoryError(f"d must be >= 1, got {d}")
    if n <= d:
        return float(n)
    z = n / d
    return (n - n / d) + n * _shell_sum(_local_term, math.sqrt(z) - 1.0)


def gradient_cover_series(n: float, d: float) -> float:
    """Expected transfers with gradient bias: ``N (1 + (1/d) sum_{i=1}^{floor(sqrt N)} 1/i^2)``."""
    if n < 1 or d < 1:
        raise TheoryError("need N >= 1 and d >= 1")
    top = int(math.floor(math.sqrt(n)))
    return n * (1.0 + math.fsum(1.0 / (i * i) for i in range(1, top + 1)) / d)


def gradient_cover_bound(n: float, d: float) -> float:
    """Closed upper envelope ``N (1 + pi^2 / (6 d))``."""
    return n * (1.0 + math.pi ** 2 / (6.0 * d))


def gradient_overhead_series(n: float, d: float, k: int) -> float:
    """Expected gradient messages for ``k`` tokens sharing ``n`` nodes.

    Each token owns about ``N/k`` nodes, so the outermost search shell costs
    ``p d = N/k`` messages. Shells run ``j = 1 .. sqrt(p) - 1`` as in the
    local-bias sum, with at least the first shell always counted (a lone
    gradient still floods one neighbourhood); when ``p < 1`` that shell is
    weighted by ``p``.
    """
    if k < 1:
        raise TheoryError(f"k must be >= 1, got {k}")
    if n < 1 or d <= 0:
        raise TheoryError("need N >= 1 and d > 0")
    per = n / k
    p = per / d
    last = max(math.sqrt(p) - 1.0, 1.0) if p >= 1.0 else p
    return per * _shell_sum(_local_term, last)


def per_token_scaling(series, n: float, d: float, k: int) -> float:
    """Transfers per token when ``k`` tokens split ``n`` nodes: ``series(n/k, d)``."""
    if k < 1:
        raise TheoryError(f"k must be >= 1, got {k}")
    return series(n / k, d)


def union_coverage_theory(m: float, c: int) -> float:
    """Coverage of ``c`` independent trials each stopped at fraction ``m``."""
    if not 0.0 < m < 1.0:
        raise TheoryError(f"m must be in (0, 1), got {m}")
    if c < 1:
        raise TheoryError(f"c must be >= 1, got {c}")
    return 1.0 - (1.0 - m) ** c


def loglog_slope(points) -> float:
    """Least-squares slope of ``log(value)`` against ``log(N)``."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise TheoryError("need at least 3 points")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.any(x <= 0) or np.any(y <= 0):
        raise TheoryError("log-log fit needs positive values")
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


def lemma1_table(p: float, d: float, hops=(1, 2, 3, 4)) -> list[dict]:
    """Threshold and the coverage it corresponds to, per hop radius."""
    rows = []
    for h in hops:
        z = lemma1_threshold(p, h, d)
        rows.append({"p": p, "d": d, "h": h, "theta": theta(p), "threshold": z,
                     "coverage": max(0.0, 1.0 - z)})
    return rows


def cover_table(n_list, d: float, k_rule=None) -> list[dict]:
    """Series predictions for a list of network sizes; ``k_rule(N)`` picks the token count."""
    rows = []
    for n in n_list:
        k = 1 if k_rule is None else int(k_rule(n))
        rows.append({
            "n": n, "d": d, "k": k,
            "local_transfers": per_token_scaling(local_bias_cover_series, n, d, k),
            "gradient_transfers": per_token_scaling(gradient_cover_series, n, d, k),
            "gradient_bound": gradient_cover_bound(n / k, d),
            "gradient_messages": gradient_overhead_series(n, d, k),
        })
    return rows
