"""Exponential intensity from grouped and right-censored data.

Observations fall into intervals ``(t_i, t_{i+1}]`` with ``t_0 = 0``; the last
count is right-censored at ``t_m``.  Two ascent algorithms are provided: an MM
update built from a quadratic lower bound on the concave terms
``ln(exp(lambda d_i) - 1)``, safeguarded so ``lambda`` never drops below half
its current value, and the classical EM update based on conditional means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import MMProblem, StoppingRule, run_mm

__all__ = [
    "GroupedExpData",
    "grouped_loglik",
    "grouped_score",
    "grouped_mm_update",
    "grouped_em_update",
    "GroupedExpProblem",
    "fit_grouped",
    "MEILIJSON_DATA",
]

_SERIES_CUTOFF = 1e-8


@dataclass(frozen=True)
class GroupedExpData:
    """Thresholds ``t_1 < ... < t_m`` and counts ``c_0, ..., c_m``.

    Counts may be fractional (proportions work as well as integers).
    """

    thresholds: np.ndarray
    counts: np.ndarray
    gaps: np.ndarray = field(init=False, repr=False)
    edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.thresholds, dtype=float))
        c = np.atleast_1d(np.asarray(self.counts, dtype=float))
        if t.ndim != 1 or t.size == 0:
            raise ValueError("need at least one threshold")
        if not np.all(np.isfinite(t)) or t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be positive and strictly increasing")
        if c.shape != (t.size + 1,):
            raise ValueError(f"expected {t.size + 1} counts for {t.size} thresholds, got {c.size}")
        if not np.all(np.isfinite(c)) or np.any(c < 0) or c.sum() <= 0:
            raise ValueError("counts must be nonnegative with a positive total")
        edges = np.concatenate([[0.0], t])
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "gaps", np.diff(edges))

    @property
    def interior(self) -> np.ndarray:
        return self.counts[:-1]

    @property
    def censored(self) -> float:
        return float(self.counts[-1])


MEILIJSON_DATA = GroupedExpData([1.0, 3.0, 10.0], [0.185, 0.266, 0.410, 0.139])


def _check_lambda(lam):
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"intensity must be positive, got {lam!r}")


def _log_expm1(x):
    # ln(e^x - 1) without overflow for large x
    x = np.asarray(x, dtype=float)
    return np.where(x > 30.0, x + np.log1p(-np.exp(-np.minimum(x, 700.0))), np.log(np.expm1(np.minimum(x, 30.0))))


def grouped_loglik(lam: float, data: GroupedExpData) -> float:
    """Log-likelihood of intensity ``lam`` for grouped, right-censored counts."""
    _check_lambda(lam)
    c, t = data.interior, data.thresholds
    linear = -lam * np.sum(c * data.edges[1:]) - data.censored * lam * t[-1]
    mask = c > 0
    return float(linear + np.sum(c[mask] * _log_expm1(lam * data.gaps[mask])))


def grouped_score(lam: float, data: GroupedExpData) -> float:
    """Derivative of :func:`grouped_loglik` in ``lam``."""
    _check_lambda(lam)
    v = _v_weights(lam, data.gaps)
    return float(np.sum(data.interior * (v - data.edges[1:])) - data.censored * data.thresholds[-1])


def _v_weights(lam, d):
    x = lam * d
    small = x < _SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    exact = d / -np.expm1(-xs)
    series = 1.0 / lam + d / 2.0 + d * x / 12.0
    return np.where(small, series, exact)


def _w_weights(lam, d):
    y = lam * d / 2.0
    small = 2.0 * y < _SERIES_CUTOFF
    ys = np.where(small, 1.0, y)
    # e^y / (e^y - 1)^2 = e^{-y} / (1 - e^{-y})^2
    exact = (d**2 / 4.0) * np.exp(-ys) / np.expm1(-ys) ** 2
    series = 1.0 / lam**2 - d**2 / 48.0
    return np.where(small, series, exact)


def grouped_mm_update(lam: float, data: GroupedExpData) -> float:
    """One MM step from the quadratic lower bound, never below ``lam / 2``."""
    _check_lambda(lam)
    c = data.interior
    if not np.any(c > 0):
        raise ValueError("no interior mass: all counts are right-censored")
    v = _v_weights(lam, data.gaps)
    w = _w_weights(lam, data.gaps)
    num = np.sum(c * (v - data.edges[1:])) - data.censored * data.thresholds[-1]
    den = np.sum(c * w)
    return float(max(0.5 * lam, lam + num / den))


def grouped_em_update(lam: float, data: GroupedExpData) -> float:
    """One EM step: complete-data MLE with each value replaced by its conditional mean."""
    _check_lambda(lam)
    c = data.interior
    if not np.any(c > 0):
        raise ValueError("no interior mass: all counts are right-censored")
    lo, hi = data.edges[:-1], data.edges[1:]
    a, b = np.exp(-lam * lo), np.exp(-lam * hi)
    # a - b = e^{-lam lo} (1 - e^{-lam d})
    denom = -a * np.expm1(-lam * data.gaps)
    cond_mean = 1.0 / lam + (lo * a - hi * b) / denom
    total = np.sum(c * cond_mean) + data.censored * (data.thresholds[-1] + 1.0 / lam)
    return float(data.counts.sum() / total)


class GroupedExpProblem(MMProblem):
    dimension = 1
    sense = "maximize"
    monotone = True

    def __init__(self, data: GroupedExpData, method: str = "mm"):
        if method not in ("mm", "em"):
            raise ValueError(f"method must be 'mm' or 'em', got {method!r}")
        self.data = data
        self.method = method
        self._update = grouped_mm_update if method == "mm" else grouped_em_update

    def objective(self, theta):
        return grouped_loglik(float(theta[0]), self.data)

    def mm_map(self, theta):
        return np.array([self._update(float(theta[0]), self.data)])

    def is_feasible(self, theta):
        return bool(np.isfinite(theta[0]) and theta[0] > 0)


def fit_grouped(
    data: GroupedExpData,
    lambda0: float = 1.0,
    method: str = "mm",
    rule: StoppingRule = StoppingRule(),
    **kwargs,
):
    """Run the MM or EM iteration from ``lambda0``; returns ``(trace, report)``."""
    return run_mm(GroupedExpProblem(data, method), [lambda0], rule, **kwargs)
