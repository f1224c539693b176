"""Hinge-loss and vertex discriminant analysis by quadratic majorization.

Binary classification minimizes ``sum_i [1 - y_i (alpha + z_i' beta)]_+ +
lam |beta|^2``.  Each hinge term is majorized at the current residual by a
quadratic, so every MM step is a ridge-penalized weighted least squares
problem, solved exactly or by one cyclic pass of coordinate descent.

Vertex discriminant analysis (VDA) places the k+1 class indicators at the
vertices of a regular simplex in R^k and minimizes the epsilon-insensitive
Euclidean loss of the linear predictions ``A z + b`` plus a ridge penalty on
the rows of ``A``.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .core import StoppingRule

__all__ = [
    "LabeledDataset",
    "BinaryClassifier",
    "VertexClassifier",
    "LinearClassifier",
    "hinge_majorizer",
    "hinge_objective",
    "hinge_mm_fit",
    "simplex_vertices",
    "eps_distance",
    "vda_objective",
    "vda_surrogate",
    "vda_fit",
    "classify",
    "training_error",
    "read_labeled_csv",
    "standardize",
    "EPS_REG",
]

log = logging.getLogger(__name__)

EPS_REG = 1e-5
_DEAD_ZONE = 1e-12
_RISE_TOL = 1e-13
_GUARD_RETRIES = 6


@dataclass(frozen=True)
class LabeledDataset:
    """Features ``z`` (n x p) and labels: +/-1 (binary) or categories 1..k+1."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.features, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        y = np.asarray(self.labels)
        if z.ndim != 2 or y.shape != (z.shape[0],):
            raise ValueError("features must be n x p and labels length n")
        if not np.all(np.isfinite(z)):
            raise ValueError("features contain non-finite entries")
        if not np.all(y == np.round(y)):
            raise ValueError("labels must be integers")
        object.__setattr__(self, "features", z)
        object.__setattr__(self, "labels", y.astype(int))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def is_binary(self) -> bool:
        return set(np.unique(self.labels)) <= {-1, 1}

    def binary_labels(self) -> np.ndarray:
        """Labels as +/-1; a two-category 1/2 coding maps 1 -> +1, 2 -> -1."""
        if self.is_binary:
            return self.labels.astype(float)
        cats = np.unique(self.labels)
        if not np.array_equal(cats, [1, 2]):
            raise ValueError("binary fit needs labels in {-1, +1} or {1, 2}")
        return np.where(self.labels == 1, 1.0, -1.0)

    def categories(self) -> np.ndarray:
        """Category indices 1..k+1; +/-1 labels map +1 -> 1, -1 -> 2."""
        if self.is_binary:
            return np.where(self.labels == 1, 1, 2)
        cats = np.unique(self.labels)
        if cats[0] != 1 or not np.array_equal(cats, np.arange(1, cats[-1] + 1)):
            raise ValueError("category labels must be 1..k+1 with every category present")
        return self.labels.copy()


@dataclass(frozen=True)
class BinaryClassifier:
    alpha: float
    beta: np.ndarray
    iterations: int = 0
    objective: float = math.nan
    history: tuple = field(default=(), repr=False)
    seconds: float = 0.0

    def decision(self, z) -> np.ndarray:
        return self.alpha + np.atleast_2d(z) @ self.beta


@dataclass(frozen=True)
class VertexClassifier:
    A: np.ndarray
    b: np.ndarray
    vertices: np.ndarray
    iterations: int = 0
    objective: float = math.nan
    history: tuple = field(default=(), repr=False)
    seconds: float = 0.0

    def predict_points(self, z) -> np.ndarray:
        return np.atleast_2d(z) @ self.A.T + self.b


LinearClassifier = Union[BinaryClassifier, VertexClassifier]


def hinge_majorizer(u_n: float, eps_reg: float = EPS_REG):
    """Coefficients ``(a, b, c)`` of ``r(u) = (u + |u_n|)^2 / (4 |u_n| + eps_reg)``.

    ``r(u) = a u^2 + b u + c`` lies above ``max(u, 0)`` up to ``eps_reg / 4``
    and touches it at ``u_n`` to the same accuracy.
    """
    if eps_reg <= 0:
        raise ValueError("eps_reg must be positive")
    au = np.abs(u_n)
    a = 1.0 / (4.0 * au + eps_reg)
    return a, 2.0 * a * au, a * au * au


def hinge_objective(alpha, beta, z, y, lam) -> float:
    margin = 1.0 - y * (alpha + z @ beta)
    return float(np.maximum(margin, 0.0).sum() + lam * beta @ beta)


def _solve_penalized(x, weights, target, penalty):
    # minimize sum_i w_i (t_i - x_i' theta)^2 + theta' diag(penalty) theta
    gram = (x * weights[:, None]).T @ x + np.diag(penalty)
    rhs = (x * weights[:, None]).T @ target
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        warnings.warn("singular weighted normal equations; adding 1e-10 jitter", RuntimeWarning)
        return np.linalg.solve(gram + 1e-10 * np.eye(gram.shape[0]), rhs)


def _coordinate_pass(x, weights, target, penalty, theta):
    theta = theta.copy()
    resid = target - x @ theta
    for j in range(theta.size):
        xj = x[:, j]
        curv = np.sum(weights * xj * xj) + penalty[j]
        if curv <= 0:
            continue
        # exact minimizer along coordinate j
        new = (np.sum(weights * xj * (resid + xj * theta[j]))) / curv
        resid -= xj * (new - theta[j])
        theta[j] = new
    return theta


def hinge_mm_fit(
    data: LabeledDataset,
    lam: float,
    mode: str = "full-wls",
    rule: StoppingRule = StoppingRule(max_iterations=5000, param_tol=None, objective_tol=1e-10),
    eps_reg: float = EPS_REG,
    start=None,
) -> BinaryClassifier:
    """Ridge-penalized hinge-loss classifier.

    Parameters
    ----------
    data : LabeledDataset
        Binary labels.
    lam : float
        Ridge weight on ``beta``; the intercept is unpenalized.
    mode : {"full-wls", "coordinate"}
        Solve each weighted least squares surrogate exactly, or take one
        cyclic coordinate pass (intercept first) per majorization.
    rule : StoppingRule
        ``param_tol`` uses the sup-norm change of ``(alpha, beta)``;
        ``objective_tol`` the absolute change of the objective.

    Notes
    -----
    The ``eps_reg`` guard makes the surrogate a majorizer only to within
    ``eps_reg / 4`` per case.  When a step would raise the objective it is
    retried with the guard divided by 10, up to six times; if it still rises
    the fit stops at the previous iterate.  The recorded objective therefore
    never increases.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if mode not in ("full-wls", "coordinate"):
        raise ValueError(f"mode must be 'full-wls' or 'coordinate', got {mode!r}")
    y = data.binary_labels()
    z = data.features
    x = np.column_stack([np.ones(data.n), z])
    penalty = np.r_[0.0, np.full(data.p, lam)]
    theta = np.zeros(data.p + 1) if start is None else np.asarray(start, dtype=float).copy()

    tic = time.perf_counter()
    f = hinge_objective(theta[0], theta[1:], z, y, lam)
    history = [f]
    n_iter = 0
    for n_iter in range(1, rule.max_iterations + 1):
        u = 1.0 - y * (x @ theta)
        # (u + |u_n|)^2 = (y (1 + |u_n|) - x' theta)^2 because y^2 = 1
        target = y * (1.0 + np.abs(u))
        guard = eps_reg
        for _ in range(_GUARD_RETRIES + 1):
            a, _, _ = hinge_majorizer(u, guard)
            if mode == "full-wls":
                new = _solve_penalized(x, a, target, penalty)
            else:
                new = _coordinate_pass(x, a, target, penalty, theta)
            f_new = hinge_objective(new[0], new[1:], z, y, lam)
            if f_new <= f + _RISE_TOL * max(1.0, abs(f)):
                break
            # the guarded surrogate undershoots by up to guard / 4 per case
            guard /= 10.0
        else:
            n_iter -= 1
            break
        step = np.max(np.abs(new - theta))
        df = abs(f - f_new)
        theta, f = new, f_new
        history.append(f)
        if rule.param_tol is not None and step <= rule.param_tol:
            break
        if rule.objective_tol is not None and df <= rule.objective_tol:
            break
    return BinaryClassifier(
        alpha=float(theta[0]),
        beta=theta[1:].copy(),
        iterations=n_iter,
        objective=f,
        history=tuple(history),
        seconds=time.perf_counter() - tic,
    )


def simplex_vertices(k: int) -> np.ndarray:
    """Vertices of a regular simplex in R^k on the unit sphere, as rows.

    The first vertex is ``k^{-1/2} (1, ..., 1)``; the others are
    ``c 1 + d e_j`` with ``c = -(1 + sqrt(k+1)) / k^{3/2}``, ``d = sqrt((k+1)/k)``.
    Pairwise inner products are ``-1/k``.  For k = 1 this gives +1 and -1.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    v = np.empty((k + 1, k))
    v[0] = 1.0 / math.sqrt(k)
    c = -(1.0 + math.sqrt(k + 1.0)) / k**1.5
    d = math.sqrt((k + 1.0) / k)
    v[1:] = c + d * np.eye(k)
    return v


def eps_distance(v, eps: float) -> float:
    return max(float(np.linalg.norm(v)) - eps, 0.0)


def _residuals(vertices, cats, z, A, b):
    return vertices[cats - 1] - z @ A.T - b


def vda_objective(A, b, z, cats, vertices, lam, eps) -> float:
    r = _residuals(vertices, cats, z, A, b)
    loss = np.maximum(np.linalg.norm(r, axis=1) - eps, 0.0)
    return float(loss.mean() + lam * np.sum(A * A))


def _vda_quadratic(resid, eps, eps_reg):
    """Per-case quadratic ``kappa |v|^2 + ell v_n' v + const`` majorizing ``(|v| - eps)_+``.

    Returns ``(kappa, ell, const)`` chosen so the surrogate equals the loss at
    ``v = v_n``.
    """
    w = np.linalg.norm(resid, axis=1)
    u = w - eps
    au = np.abs(u)
    a = 1.0 / (4.0 * au + eps_reg)
    # r(w) = a w^2 + bw w + c0 after shifting u = w - eps
    bw = 2.0 * a * (au - eps)
    c0 = a * (au - eps) ** 2
    dead = w < _DEAD_ZONE
    safe_w = np.where(dead, 1.0, w)
    pos = bw >= 0
    kappa = a + np.where(pos, bw / (2.0 * safe_w), 0.0)
    ell = np.where(pos, 0.0, bw / safe_w)
    const = c0 + np.where(pos, bw * safe_w / 2.0, 0.0)
    # shift so the surrogate touches the loss exactly at the current residual
    surrogate_now = kappa * w**2 + ell * w**2 + const
    const = const + np.maximum(u, 0.0) - surrogate_now
    kappa = np.where(dead, 0.0, kappa)
    ell = np.where(dead, 0.0, ell)
    const = np.where(dead, np.maximum(u, 0.0), const)
    return kappa, ell, const


def vda_surrogate(A, b, z, cats, vertices, lam, eps, A_n, b_n, eps_reg=EPS_REG) -> float:
    """Surrogate built at ``(A_n, b_n)`` evaluated at ``(A, b)``."""
    r_n = _residuals(vertices, cats, z, A_n, b_n)
    kappa, ell, const = _vda_quadratic(r_n, eps, eps_reg)
    r = _residuals(vertices, cats, z, A, b)
    per_case = kappa * np.sum(r * r, axis=1) + ell * np.sum(r_n * r, axis=1) + const
    return float(per_case.mean() + lam * np.sum(A * A))


def _vda_step(x, r_n, targets, penalty, eps, eps_reg):
    """Minimize the quadratic surrogate at residuals ``r_n``; returns ``(A, b)``."""
    kappa, ell, _ = _vda_quadratic(r_n, eps, eps_reg)
    # kappa |v|^2 + ell v_n'v = kappa |v + ell/(2 kappa) v_n|^2 + const
    shift = np.where(kappa > 0, ell / (2.0 * np.where(kappa > 0, kappa, 1.0)), 0.0)
    target = targets + shift[:, None] * r_n
    gram = (x * kappa[:, None]).T @ x + np.diag(penalty)
    rhs = (x * kappa[:, None]).T @ target
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        warnings.warn("singular weighted normal equations; adding 1e-10 jitter", RuntimeWarning)
        coef = np.linalg.solve(gram + 1e-10 * np.eye(gram.shape[0]), rhs)
    return coef[1:].T, coef[0]


def vda_fit(
    data: LabeledDataset,
    lam: float = 1e-2,
    eps: float | None = None,
    rule: StoppingRule = StoppingRule(max_iterations=5000, param_tol=None, objective_tol=1e-10),
    eps_reg: float = EPS_REG,
) -> VertexClassifier:
    """Vertex discriminant analysis with epsilon-insensitive loss.

    ``eps`` defaults to just below the non-overlap cutoff
    ``sqrt((2k+2)/k) / 2``; larger values only warn.  Each iteration solves
    one weighted ridge system shared by the k output coordinates.  Rising
    steps are retried with a smaller ``eps_reg`` as in :func:`hinge_mm_fit`.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    cats = data.categories()
    k = int(cats.max()) - 1
    if k < 1:
        raise ValueError("need at least two categories")
    cutoff = math.sqrt((2 * k + 2) / k) / 2
    if eps is None:
        eps = 0.9999 * cutoff
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps >= cutoff:
        warnings.warn(f"eps={eps:g} is not below the overlap cutoff {cutoff:g}", RuntimeWarning)

    vertices = simplex_vertices(k)
    z = data.features
    n, p = z.shape
    x = np.column_stack([np.ones(n), z])
    penalty = np.r_[0.0, np.full(p, n * lam)]
    A = np.zeros((k, p))
    b = vertices[cats - 1].mean(axis=0)

    tic = time.perf_counter()
    f = vda_objective(A, b, z, cats, vertices, lam, eps)
    history = [f]
    n_iter = 0
    for n_iter in range(1, rule.max_iterations + 1):
        r_n = _residuals(vertices, cats, z, A, b)
        guard = eps_reg
        for _ in range(_GUARD_RETRIES + 1):
            new_A, new_b = _vda_step(x, r_n, vertices[cats - 1], penalty, eps, guard)
            f_new = vda_objective(new_A, new_b, z, cats, vertices, lam, eps)
            if f_new <= f + _RISE_TOL * max(1.0, abs(f)):
                break
            guard /= 10.0
        else:
            n_iter -= 1
            break
        step = max(np.max(np.abs(new_A - A), initial=0.0), np.max(np.abs(new_b - b)))
        df = abs(f - f_new)
        A, b, f = new_A, new_b, f_new
        history.append(f)
        if rule.param_tol is not None and step <= rule.param_tol:
            break
        if rule.objective_tol is not None and df <= rule.objective_tol:
            break
    return VertexClassifier(
        A=A, b=b, vertices=vertices, iterations=n_iter, objective=f,
        history=tuple(history), seconds=time.perf_counter() - tic,
    )


def classify(model: LinearClassifier, z) -> np.ndarray:
    """Predicted labels: +/-1 for binary models (0 counts as +1), else 1..k+1."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if isinstance(model, BinaryClassifier):
        return np.where(model.decision(z) >= 0, 1, -1)
    pred = model.predict_points(z)
    dist = np.linalg.norm(pred[:, None, :] - model.vertices[None, :, :], axis=2)
    return np.argmin(dist, axis=1) + 1


def training_error(model: LinearClassifier, data: LabeledDataset) -> float:
    pred = classify(model, data.features)
    truth = data.binary_labels() if isinstance(model, BinaryClassifier) else data.categories()
    return float(np.mean(pred != truth))


def standardize(z: np.ndarray) -> np.ndarray:
    """Column z-scores; constant columns are only centered."""
    sd = z.std(axis=0)
    return (z - z.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def read_labeled_csv(path, standardize_features: bool = False) -> LabeledDataset:
    """Numeric CSV, last column the label; a non-numeric first row is a header."""
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    table = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    z, y = table[:, :-1], table[:, -1]
    if standardize_features:
        z = standardize(z)
    return LabeledDataset(z, y)
