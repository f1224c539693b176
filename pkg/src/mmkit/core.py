"""Generic MM iteration driver and convergence diagnostics.

An MM problem supplies an objective and the algorithm map ``theta -> M(theta)``.
:func:`run_mm` iterates the map, records every iterate together with whether
the objective moved in the declared direction, and stops on the first
stopping criterion that fires.  :func:`estimate_rate` and
:func:`spectral_radius_numeric` measure the linear rate of convergence, one
empirically from a trace and one from a finite-difference Jacobian of the map.
"""

from __future__ import annotations

import abc
import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "MMProblem",
    "CallableProblem",
    "StoppingRule",
    "TraceEntry",
    "IterationTrace",
    "ConvergenceReport",
    "DivergenceError",
    "EscapedDomainError",
    "NonFiniteIterateError",
    "run_mm",
    "step_double",
    "estimate_rate",
    "spectral_radius_numeric",
    "SpectralRadius",
]

log = logging.getLogger(__name__)

MONOTONE_TOL = 1e-12


class DivergenceError(RuntimeError):
    """Raised by an MM map when the iteration has run away.

    The driver treats this as a legitimate terminal outcome, not a bug.
    ``theta`` optionally carries the offending point.
    """

    def __init__(self, message: str, theta=None):
        super().__init__(message)
        self.theta = None if theta is None else np.atleast_1d(np.asarray(theta, float))


class EscapedDomainError(DivergenceError):
    """The map produced a point outside the parameter domain."""


class NonFiniteIterateError(FloatingPointError):
    """A NaN or infinite parameter or objective value appeared."""


class MMProblem(abc.ABC):
    """Objective plus MM map over a flat parameter vector.

    Subclasses set ``dimension``, ``sense`` ("minimize" or "maximize") and
    ``monotone``.  A problem whose map is not a genuine MM map (so the
    objective may move the wrong way) sets ``monotone = False``; the driver
    then records violations without warning about them.
    """

    dimension: int
    sense: str = "maximize"
    monotone: bool = True

    @abc.abstractmethod
    def objective(self, theta: np.ndarray) -> float:
        ...

    @abc.abstractmethod
    def mm_map(self, theta: np.ndarray) -> np.ndarray:
        ...

    def is_feasible(self, theta: np.ndarray) -> bool:
        return bool(np.all(np.isfinite(theta)))

    def improves(self, f_new: float, f_old: float, tol: float = 0.0) -> bool:
        """True when ``f_new`` is no worse than ``f_old`` in the declared sense."""
        scale = tol * max(1.0, abs(f_old))
        if self.sense == "maximize":
            return f_new >= f_old - scale
        return f_new <= f_old + scale


class CallableProblem(MMProblem):
    """Wrap plain functions as an :class:`MMProblem`."""

    def __init__(
        self,
        objective: Callable[[np.ndarray], float],
        mm_map: Callable[[np.ndarray], np.ndarray],
        dimension: int,
        sense: str = "maximize",
        monotone: bool = True,
        feasible: Optional[Callable[[np.ndarray], bool]] = None,
    ):
        if sense not in ("minimize", "maximize"):
            raise ValueError(f"sense must be 'minimize' or 'maximize', got {sense!r}")
        self._objective = objective
        self._map = mm_map
        self._feasible = feasible
        self.dimension = int(dimension)
        self.sense = sense
        self.monotone = monotone

    def objective(self, theta):
        return float(self._objective(theta))

    def mm_map(self, theta):
        return np.atleast_1d(np.asarray(self._map(theta), dtype=float))

    def is_feasible(self, theta):
        if not super().is_feasible(theta):
            return False
        return True if self._feasible is None else bool(self._feasible(theta))


@dataclass(frozen=True)
class StoppingRule:
    """Stop on the first of: iteration cap, small parameter step, small objective change.

    ``param_tol`` compares the sup-norm of the step and ``objective_tol`` the
    absolute objective change; ``None`` disables a criterion.
    """

    max_iterations: int = 1000
    param_tol: Optional[float] = 1e-10
    objective_tol: Optional[float] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        for name in ("param_tol", "objective_tol"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class TraceEntry:
    n: int
    theta: Optional[np.ndarray]
    f: float
    monotone: bool
    doubled: bool = False


@dataclass
class IterationTrace:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    def append(self, entry: TraceEntry):
        if self.entries and entry.n <= self.entries[-1].n:
            raise ValueError("iteration indices must increase")
        self.entries.append(entry)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([e.theta for e in self.entries if e.theta is not None])

    @property
    def objectives(self) -> np.ndarray:
        return np.array([e.f for e in self.entries])

    @property
    def monotone_flags(self) -> np.ndarray:
        return np.array([e.monotone for e in self.entries], dtype=bool)

    def to_csv(self, fh=None) -> str:
        """Write ``n,f,monotone,theta_0,...`` rows with 10 significant digits.

        Returns the CSV text; also writes it to ``fh`` when given.
        """
        dim = max((len(e.theta) for e in self.entries if e.theta is not None), default=0)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "f", "monotone"] + [f"theta_{j}" for j in range(dim)])
        for e in self.entries:
            row = [str(e.n), _fmt(e.f), "true" if e.monotone else "false"]
            if e.theta is not None:
                row += [_fmt(v) for v in e.theta]
            writer.writerow(row)
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _fmt(x: float) -> str:
    return f"{x:.10g}"


@dataclass
class ConvergenceReport:
    theta_final: np.ndarray
    iterations: int
    rate_estimate: Optional[float]
    monotone_throughout: bool
    status: str = "converged"
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


def _check_finite(theta, f, n):
    if not np.all(np.isfinite(theta)):
        raise NonFiniteIterateError(f"non-finite parameter at iteration {n}")
    if not np.isfinite(f):
        raise NonFiniteIterateError(f"non-finite objective at iteration {n}")


def run_mm(
    problem: MMProblem,
    theta0,
    rule: StoppingRule = StoppingRule(),
    *,
    use_step_doubling: bool = False,
    store_iterates: bool = True,
    monotone_tol: float = MONOTONE_TOL,
    callback: Optional[Callable[[TraceEntry], None]] = None,
):
    """Iterate ``problem.mm_map`` from ``theta0``.

    Parameters
    ----------
    problem : MMProblem
    theta0 : array_like
        Starting point with ``problem.dimension`` entries.
    rule : StoppingRule
    use_step_doubling : bool
        Replace each plain step by :func:`step_double`.
    store_iterates : bool
        Keep every parameter snapshot in the trace.  Large problems (images)
        switch this off; the first and last snapshots are always kept.
    monotone_tol : float
        Relative tolerance, scaled by ``max(1, |f|)``, for the ascent/descent flag.

    Returns
    -------
    trace : IterationTrace
    report : ConvergenceReport

    Raises
    ------
    ValueError
        ``theta0`` has the wrong dimension or is infeasible.
    NonFiniteIterateError
        NaN or infinity encountered; the message names the iteration.
    """
    theta = np.atleast_1d(np.asarray(theta0, dtype=float)).copy()
    if theta.ndim != 1 or theta.size != problem.dimension:
        raise ValueError(
            f"theta0 has {theta.size} entries, problem dimension is {problem.dimension}"
        )
    if not problem.is_feasible(theta):
        raise ValueError("theta0 is not feasible for this problem")

    f = problem.objective(theta)
    _check_finite(theta, f, 0)
    trace = IterationTrace()
    trace.append(TraceEntry(0, theta.copy(), f, True))
    all_monotone = True
    status, message = "max_iterations", "iteration limit reached"

    for n in range(1, rule.max_iterations + 1):
        try:
            if use_step_doubling:
                new, doubled = _double_step(problem, theta)
            else:
                new, doubled = problem.mm_map(theta), False
        except DivergenceError as exc:
            status, message = "diverged", str(exc)
            if exc.theta is not None:
                trace.append(TraceEntry(n, exc.theta.copy(), float("nan"), False))
            all_monotone = False
            break
        new = np.atleast_1d(np.asarray(new, dtype=float))
        if new.shape != theta.shape:
            raise ValueError(f"mm_map returned shape {new.shape}, expected {theta.shape}")
        if not np.all(np.isfinite(new)):
            raise NonFiniteIterateError(f"non-finite parameter at iteration {n}")
        f_new = problem.objective(new)
        _check_finite(new, f_new, n)

        ok = problem.improves(f_new, f, monotone_tol)
        if not ok:
            all_monotone = False
            if problem.monotone:
                log.warning(
                    "objective moved against %s at iteration %d: %.17g -> %.17g",
                    problem.sense, n, f, f_new,
                )
        step = float(np.max(np.abs(new - theta)))
        df = abs(f_new - f)
        if trace.entries and not store_iterates and len(trace) > 1:
            trace.entries[-1].theta = None
        entry = TraceEntry(n, new.copy(), f_new, ok, doubled)
        trace.append(entry)
        if callback is not None:
            callback(entry)
        theta, f = new, f_new

        if rule.param_tol is not None and step <= rule.param_tol:
            status, message = "converged", f"parameter step {step:.3g} <= {rule.param_tol:g}"
            break
        if rule.objective_tol is not None and df <= rule.objective_tol:
            status, message = "converged", f"objective change {df:.3g} <= {rule.objective_tol:g}"
            break

    usable = sum(1 for e in trace.entries if e.theta is not None and np.isfinite(e.f))
    rate = estimate_rate(trace) if store_iterates and usable >= 4 else None
    last = next(e.theta for e in reversed(trace.entries) if e.theta is not None and np.isfinite(e.f))
    report = ConvergenceReport(
        theta_final=theta.copy() if status != "diverged" else last.copy(),
        iterations=trace.entries[-1].n,
        rate_estimate=rate,
        monotone_throughout=all_monotone,
        status=status,
        message=message,
    )
    return trace, report


def _double_step(problem: MMProblem, theta: np.ndarray):
    plain = np.atleast_1d(np.asarray(problem.mm_map(theta), dtype=float))
    candidate = theta + 2.0 * (plain - theta)
    if not problem.is_feasible(candidate):
        return plain, False
    try:
        f_cand = problem.objective(candidate)
    except (ValueError, FloatingPointError, ArithmeticError):
        return plain, False
    if not np.isfinite(f_cand):
        return plain, False
    if problem.improves(f_cand, problem.objective(plain)):
        return candidate, True
    return plain, False


def step_double(problem: MMProblem, theta) -> np.ndarray:
    """Guarded step doubling: ``theta + 2 (M(theta) - theta)``.

    The doubled point is used only when it is feasible and its objective is no
    worse than that of the plain MM step ``M(theta)``; otherwise the plain step
    is returned.  The result therefore never loses the descent property.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return _double_step(problem, theta)[0]


def estimate_rate(trace: IterationTrace, window: int = 5) -> Optional[float]:
    """Empirical linear rate from successive step-length ratios.

    Returns the median of the last ``window`` ratios
    ``|theta^{n+1}-theta^n| / |theta^n-theta^{n-1}|`` (sup-norm), or ``None``
    when the rate is not estimable because a denominator falls below 1e-14.
    """
    thetas = [e.theta for e in trace.entries if e.theta is not None and np.isfinite(e.f)]
    if len(thetas) < 4:
        raise ValueError("need at least 4 iterates to estimate a rate")
    thetas = np.asarray(thetas)
    steps = np.max(np.abs(np.diff(thetas, axis=0)), axis=1)
    num, den = steps[1:], steps[:-1]
    num, den = num[-window:], den[-window:]
    if np.any(den < 1e-14):
        return None
    return float(np.median(num / den))


@dataclass
class SpectralRadius:
    value: float
    converged: bool
    jacobian: np.ndarray

    def __float__(self):
        return self.value


def _jacobian_column(problem, theta, j, h_rel):
    h = h_rel * max(1.0, abs(theta[j]))
    up, down = theta.copy(), theta.copy()
    up[j] += h
    down[j] -= h
    return (problem.mm_map(up) - problem.mm_map(down)) / (2.0 * h)


def spectral_radius_numeric(
    problem: MMProblem,
    theta_inf,
    *,
    h: float = 1e-5,
    max_iter: int = 200,
    rtol: float = 1e-10,
    fixed_point_tol: float = 1e-8,
    seed: int = 0,
) -> SpectralRadius:
    """Dominant eigenvalue magnitude of the MM map's Jacobian at a fixed point.

    The Jacobian is built by central differences with step ``h`` scaled by
    ``max(1, |theta_j|)``; its dominant eigenvalue magnitude comes from power
    iteration.  ``converged`` is False when power iteration did not settle.
    """
    theta = np.atleast_1d(np.asarray(theta_inf, dtype=float))
    resid = np.max(np.abs(problem.mm_map(theta) - theta))
    if resid >= fixed_point_tol:
        raise ValueError(f"theta_inf is not a fixed point (|M(theta)-theta| = {resid:.3g})")
    d = theta.size
    jac = np.column_stack([_jacobian_column(problem, theta, j, h) for j in range(d)])
    if d == 1:
        return SpectralRadius(abs(float(jac[0, 0])), True, jac)
    value, converged = _power_iteration(jac, max_iter, rtol, seed)
    return SpectralRadius(value, converged, jac)


def _power_iteration(a: np.ndarray, max_iter: int, rtol: float, seed: int):
    # Two-step norm ratio copes with dominant pairs of opposite sign.
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = a @ (a @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, True
        new = float(np.sqrt(nw))
        v = w / nw
        if est > 0 and abs(new - est) <= rtol * new:
            return new, True
        est = new
    return est, False
