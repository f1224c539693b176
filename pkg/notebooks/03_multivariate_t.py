"""
Robust location and scale with the multivariate t
=================================================

EM and its Kent-Tyler-Vardi variant share the same case weights
``(nu + p) / (nu + d_i)``.  The only difference is the divisor of the weighted
scatter matrix.
"""

# %%
import numpy as np
from scipy import stats

from mmkit.core import StoppingRule
from mmkit.mvt import MvtSample, fit_mvt

rng = np.random.default_rng(1)
scale = np.array([[2.0, 0.6], [0.6, 1.0]])
x = stats.multivariate_t([1.0, -1.0], scale, df=4).rvs(200, random_state=rng)
x[:5] += 25.0  # a few gross outliers
sample = MvtSample(x)

# %%
rule = StoppingRule(5000, 1e-10)
for variant in ("em", "ktv"):
    params, trace, report = fit_mvt(sample, 4.0, variant, rule=rule)
    print(variant, report.iterations, "iterations, rate", round(report.rate_estimate, 3))
    print("  mu   ", np.round(params.mu, 3))
    print("  omega", np.round(params.omega, 3).tolist())

# %%
# The sample mean is dragged by the outliers; the t location is not.
print("sample mean", np.round(x.mean(axis=0), 3))
