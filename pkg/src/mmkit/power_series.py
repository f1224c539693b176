"""Maximum likelihood for power series families by functional iteration.

A power series family has probabilities ``c_k theta^k / q(theta)``.  The MLE
solves ``xbar = theta q'(theta) / q(theta)``, which suggests the map
``M(theta) = xbar q(theta) / q'(theta)``.  When ``q`` is log-concave this map
is an MM algorithm; otherwise it may still converge (logarithmic family) or
diverge (geometric family with ``xbar > 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import EscapedDomainError, MMProblem, StoppingRule, run_mm

__all__ = [
    "PowerSeriesFamily",
    "PowerSeriesSample",
    "PowerSeriesProblem",
    "TRUNCATED_POISSON",
    "GEOMETRIC",
    "LOGARITHMIC",
    "FAMILIES",
    "get_family",
    "ps_iterate",
    "ps_loglik",
    "ps_score",
    "ps_local_rate",
    "ps_moments",
    "log_concavity_check",
    "fit_power_series",
]


@dataclass(frozen=True)
class PowerSeriesFamily:
    """Normalizing function ``q`` and its first two derivatives on an open interval."""

    name: str
    q: Callable[[float], float]
    dq: Callable[[float], float]
    d2q: Callable[[float], float]
    domain: tuple
    log_concave: bool = False
    coefficients: Optional[tuple] = None

    def contains(self, theta: float) -> bool:
        lo, hi = self.domain
        return bool(np.isfinite(theta)) and lo < theta < hi

    @classmethod
    def from_coefficients(cls, name: str, coefficients: Sequence[float]):
        """Finite series ``q(theta) = sum_k a_k theta^k`` on ``(0, inf)``."""
        a = np.asarray(coefficients, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("coefficients must be a nonempty 1-D sequence")
        if np.any(a < 0) or not np.any(a[1:] > 0):
            raise ValueError("coefficients must be nonnegative with some positive a_k, k >= 1")
        p = np.polynomial.Polynomial(a)
        dp, d2p = p.deriv(1), p.deriv(2)
        return cls(
            name=name,
            q=lambda t: float(p(t)),
            dq=lambda t: float(dp(t)),
            d2q=lambda t: float(d2p(t)),
            domain=(0.0, math.inf),
            log_concave=log_concavity_check(a) == "log-concave",
            coefficients=tuple(a),
        )


TRUNCATED_POISSON = PowerSeriesFamily(
    name="trunc-poisson",
    q=lambda t: math.expm1(t),
    dq=lambda t: math.exp(t),
    d2q=lambda t: math.exp(t),
    domain=(0.0, math.inf),
    log_concave=True,
)

GEOMETRIC = PowerSeriesFamily(
    name="geometric",
    q=lambda t: 1.0 / (1.0 - t),
    dq=lambda t: 1.0 / (1.0 - t) ** 2,
    d2q=lambda t: 2.0 / (1.0 - t) ** 3,
    domain=(0.0, 1.0),
)

LOGARITHMIC = PowerSeriesFamily(
    name="logarithmic",
    q=lambda t: -math.log1p(-t),
    dq=lambda t: 1.0 / (1.0 - t),
    d2q=lambda t: 1.0 / (1.0 - t) ** 2,
    domain=(0.0, 1.0),
)

FAMILIES = {f.name: f for f in (TRUNCATED_POISSON, GEOMETRIC, LOGARITHMIC)}


def get_family(name: str) -> PowerSeriesFamily:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


@dataclass(frozen=True)
class PowerSeriesSample:
    """Sufficient statistics of an i.i.d. sample: mean and size."""

    xbar: float
    m: int

    def __post_init__(self):
        if self.xbar < 0 or not math.isfinite(self.xbar):
            raise ValueError("xbar must be a finite nonnegative number")
        if self.m < 1:
            raise ValueError("m must be a positive integer")

    @classmethod
    def from_counts(cls, x: Sequence[float]):
        x = np.asarray(x, dtype=float)
        return cls(float(x.mean()), int(x.size))


def _require_domain(theta, family):
    if not family.contains(theta):
        raise ValueError(f"theta={theta!r} outside the {family.name} domain {family.domain}")


def ps_iterate(theta: float, family: PowerSeriesFamily, sample: PowerSeriesSample) -> float:
    """One step ``xbar q(theta) / q'(theta)``.

    Raises :class:`EscapedDomainError` if the new point leaves the domain.
    """
    _require_domain(theta, family)
    new = sample.xbar * family.q(theta) / family.dq(theta)
    if not family.contains(new):
        raise EscapedDomainError(
            f"iterate escaped domain: theta={new:.10g} not in {family.domain}", new
        )
    return new


def ps_loglik(theta: float, family: PowerSeriesFamily, sample: PowerSeriesSample) -> float:
    _require_domain(theta, family)
    return sample.m * sample.xbar * math.log(theta) - sample.m * math.log(family.q(theta))


def ps_score(theta: float, family: PowerSeriesFamily, sample: PowerSeriesSample) -> float:
    _require_domain(theta, family)
    return sample.m * sample.xbar / theta - sample.m * family.dq(theta) / family.q(theta)


def ps_moments(theta: float, family: PowerSeriesFamily):
    """Mean, second factorial moment and variance of one draw at ``theta``."""
    q = family.q(theta)
    mean = theta * family.dq(theta) / q
    fact2 = theta**2 * family.d2q(theta) / q
    var = mean + fact2 - mean**2
    return mean, fact2, var


def ps_local_rate(
    theta_hat: float,
    family: PowerSeriesFamily,
    sample: Optional[PowerSeriesSample] = None,
    tol: float = 1e-6,
) -> float:
    """Derivative of the iteration map at the MLE, ``1 - variance / mean``.

    When ``sample`` is given, ``theta_hat`` is first checked against the
    moment equation ``xbar = mean(theta_hat)`` to within ``tol``.
    """
    _require_domain(theta_hat, family)
    mean, _, var = ps_moments(theta_hat, family)
    if sample is not None and abs(mean - sample.xbar) > tol * max(1.0, sample.xbar):
        raise ValueError(
            f"theta_hat does not solve the moment equation (mean {mean:.8g} vs xbar {sample.xbar:.8g})"
        )
    if mean == 0:
        raise ValueError("degenerate family: mean is zero at theta_hat")
    return 1.0 - var / mean


def log_concavity_check(coefficients: Sequence[float]) -> str:
    """Sufficient test for log-concavity of ``sum_k a_k x^k`` on ``(0, r)``.

    Returns ``"log-concave"`` when ``(k+1) a_{k+1} / a_k`` is non-increasing
    over the positive coefficients, else ``"inconclusive"``.  Leading zero
    coefficients (a factor ``x^s``) are allowed; zeros after the first
    positive coefficient make the test inconclusive.
    """
    a = np.asarray(coefficients, dtype=float)
    if a.size == 0:
        raise ValueError("empty coefficient sequence")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        return "inconclusive"
    nz = np.flatnonzero(a)
    if nz.size == 0:
        return "inconclusive"
    start = nz[0]
    tail = a[start:]
    if np.any(tail == 0):
        return "inconclusive"
    k = np.arange(start, a.size - 1)
    ratios = (k + 1) * tail[1:] / tail[:-1]
    if np.all(np.diff(ratios) <= 1e-12 * np.abs(ratios[:-1])):
        return "log-concave"
    return "inconclusive"


class PowerSeriesProblem(MMProblem):
    """Log-likelihood maximization by ``theta -> xbar q / q'``."""

    dimension = 1
    sense = "maximize"

    def __init__(self, family: PowerSeriesFamily, sample: PowerSeriesSample):
        self.family = family
        self.sample = sample
        self.monotone = family.log_concave

    def objective(self, theta):
        return ps_loglik(float(theta[0]), self.family, self.sample)

    def mm_map(self, theta):
        return np.array([ps_iterate(float(theta[0]), self.family, self.sample)])

    def is_feasible(self, theta):
        return self.family.contains(float(theta[0]))


def fit_power_series(
    family: PowerSeriesFamily,
    sample: PowerSeriesSample,
    theta0: float,
    rule: StoppingRule = StoppingRule(),
    **kwargs,
):
    """Run the functional iteration; returns ``(trace, report)`` from :func:`run_mm`."""
    return run_mm(PowerSeriesProblem(family, sample), [theta0], rule, **kwargs)
