"""Multivariate t location and scale for fixed degrees of freedom.

Both updates reweight each case by ``w_i = (nu + p) / (nu + d_i)`` where
``d_i`` is its Mahalanobis distance.  The classic EM update divides the
weighted scatter by the case count ``m``; the Kent-Tyler-Vardi variant
divides by the weight total ``s``, which usually converges faster.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .core import MMProblem, StoppingRule, run_mm

__all__ = [
    "MvtSample",
    "MvtParams",
    "CaseWeights",
    "compute_weights",
    "em_update",
    "ktv_update",
    "mvt_loglik",
    "initial_params",
    "MvtProblem",
    "fit_mvt",
    "read_sample_csv",
]


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class MvtSample:
    data: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.data, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ValueError("data must be an m x p matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("data contains non-finite entries")
        m, p = x.shape
        if m < p + 1:
            raise ValueError(f"need at least p + 1 = {p + 1} observations, got {m}")
        object.__setattr__(self, "data", x)

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MvtParams:
    mu: np.ndarray
    omega: np.ndarray
    nu: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        omega = np.atleast_2d(np.asarray(self.omega, dtype=float))
        if omega.shape != (mu.size, mu.size):
            raise ValueError("omega must be p x p with p = len(mu)")
        if not np.allclose(omega, omega.T, rtol=0, atol=1e-12 * max(1.0, np.abs(omega).max())):
            raise ValueError("omega must be symmetric")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "omega", omega)

    def cholesky(self):
        try:
            return linalg.cho_factor(self.omega, lower=True, check_finite=False)
        except linalg.LinAlgError:
            raise NotPositiveDefiniteError("omega not positive definite") from None


@dataclass(frozen=True)
class CaseWeights:
    w: np.ndarray
    d: np.ndarray
    s: float


def _mahalanobis(x, mu, chol):
    c, lower = chol
    z = linalg.solve_triangular(c, (x - mu).T, lower=lower, check_finite=False)
    return np.sum(z * z, axis=0)


def compute_weights(sample: MvtSample, params: MvtParams) -> CaseWeights:
    d = _mahalanobis(sample.data, params.mu, params.cholesky())
    w = (params.nu + sample.p) / (params.nu + d)
    return CaseWeights(w=w, d=d, s=float(w.sum()))


def _weighted_update(sample, params, divide_by_weights):
    cw = compute_weights(sample, params)
    x = sample.data
    mu = cw.w @ x / cw.s
    r = x - mu
    scatter = (r * cw.w[:, None]).T @ r
    omega = scatter / (cw.s if divide_by_weights else sample.m)
    omega = 0.5 * (omega + omega.T)
    new = MvtParams(mu, omega, params.nu)
    try:
        new.cholesky()
    except NotPositiveDefiniteError:
        raise NotPositiveDefiniteError("scale collapsed: updated omega is singular") from None
    return new


def em_update(sample: MvtSample, params: MvtParams) -> MvtParams:
    """Weighted mean, then weighted scatter divided by the case count."""
    return _weighted_update(sample, params, divide_by_weights=False)


def ktv_update(sample: MvtSample, params: MvtParams) -> MvtParams:
    """As :func:`em_update` but the scatter is divided by the weight total."""
    return _weighted_update(sample, params, divide_by_weights=True)


def mvt_loglik(sample: MvtSample, params: MvtParams) -> float:
    chol = params.cholesky()
    d = _mahalanobis(sample.data, params.mu, chol)
    nu, p, m = params.nu, sample.p, sample.m
    logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
    const = gammaln((nu + p) / 2) - gammaln(nu / 2) - 0.5 * p * np.log(nu * np.pi)
    return float(m * const - 0.5 * m * logdet - 0.5 * (nu + p) * np.sum(np.log1p(d / nu)))


def initial_params(sample: MvtSample, nu: float) -> MvtParams:
    """Sample mean and (maximum likelihood) sample covariance."""
    x = sample.data
    mu = x.mean(axis=0)
    r = x - mu
    return MvtParams(mu, r.T @ r / sample.m, nu)


class MvtProblem(MMProblem):
    """Packs ``(mu, vec(omega))`` into one vector for the generic driver."""

    sense = "maximize"
    monotone = True

    def __init__(self, sample: MvtSample, nu: float, variant: str = "em"):
        if variant not in ("em", "ktv"):
            raise ValueError(f"variant must be 'em' or 'ktv', got {variant!r}")
        self.sample = sample
        self.nu = float(nu)
        self.variant = variant
        self.dimension = sample.p + sample.p**2
        self._update = em_update if variant == "em" else ktv_update

    def pack(self, params: MvtParams) -> np.ndarray:
        return np.concatenate([params.mu, params.omega.ravel()])

    def unpack(self, theta) -> MvtParams:
        p = self.sample.p
        omega = np.reshape(theta[p:], (p, p))
        return MvtParams(theta[:p], 0.5 * (omega + omega.T), self.nu)

    def objective(self, theta):
        return mvt_loglik(self.sample, self.unpack(theta))

    def mm_map(self, theta):
        return self.pack(self._update(self.sample, self.unpack(theta)))

    def is_feasible(self, theta):
        if not np.all(np.isfinite(theta)):
            return False
        try:
            self.unpack(theta).cholesky()
        except (NotPositiveDefiniteError, ValueError):
            return False
        return True


def fit_mvt(
    sample: MvtSample,
    nu: float,
    variant: str = "em",
    start: MvtParams | None = None,
    rule: StoppingRule = StoppingRule(),
    **kwargs,
):
    """Fit by EM or KTV iteration.

    Returns ``(params, trace, report)``; the start defaults to
    :func:`initial_params`.
    """
    problem = MvtProblem(sample, nu, variant)
    start = initial_params(sample, nu) if start is None else start
    trace, report = run_mm(problem, problem.pack(start), rule, **kwargs)
    return problem.unpack(report.theta_final), trace, report


def read_sample_csv(path) -> MvtSample:
    """One observation per row; a non-numeric first row is taken as a header."""
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return MvtSample(data)
