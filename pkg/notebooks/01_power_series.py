"""
Functional iteration for power series families
===============================================

For a density proportional to ``c_k theta^k`` the likelihood equation reads
``xbar = theta q'(theta) / q(theta)``.  Rearranging it gives the iteration
``theta <- xbar q(theta) / q'(theta)``, which climbs the likelihood whenever
``q`` is log-concave.
"""

# %%
import numpy as np

from mmkit.core import StoppingRule, estimate_rate
from mmkit.power_series import (
    GEOMETRIC,
    LOGARITHMIC,
    TRUNCATED_POISSON,
    PowerSeriesSample,
    fit_power_series,
    ps_local_rate,
)

sample = PowerSeriesSample(xbar=2.0, m=10)

# %%
# Truncated Poisson: q(t) = e^t - 1 is log-concave, so every step is uphill.
trace, report = fit_power_series(TRUNCATED_POISSON, sample, 1.0, StoppingRule(13, None))
for e in trace:
    print(f"{e.n:3d}  theta={e.theta[0]:.5f}  L={e.f:.5f}")

# %%
# The observed contraction matches the derivative of the map, 1 - var/mean.
trace, report = fit_power_series(TRUNCATED_POISSON, sample, 1.0, StoppingRule(500, 1e-14))
theta_hat = report.theta_final[0]
print("empirical rate", round(estimate_rate(trace), 4))
print("analytic rate ", round(ps_local_rate(theta_hat, TRUNCATED_POISSON, sample), 4))

# %%
# Logarithmic family: not log-concave.  The first step lowers the likelihood,
# then the iterates oscillate into the fixed point (negative derivative).
trace, _ = fit_power_series(LOGARITHMIC, sample, 0.99, StoppingRule(17, None))
print(np.round(trace.objectives[:4], 5))

# %%
# Geometric family: the fixed point 2/3 repels, the map has slope -2 there,
# and the first step from 0.5 already leaves the unit interval.
trace, report = fit_power_series(GEOMETRIC, sample, 0.5, StoppingRule(50, 1e-10))
print(report.status, "-", report.message)
