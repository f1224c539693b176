"""
Total-variation denoising and inpainting
========================================

Pixels of one checkerboard colour have no neighbours of the same colour, so
once each TV term is majorized by a quadratic, every pixel of that colour can
be updated at once by a weighted average.
"""

# %%
import numpy as np

from mmkit.imaging import TVConfig, restore

rng = np.random.default_rng(0)
clean = np.full((64, 64), 60.0)
clean[:, 32:] = 190.0
noisy = clean + 20.0 * rng.normal(size=clean.shape)

# %%
mu, trace = restore(noisy, None, TVConfig(lam=15.0, eps=1.0))
print("objective", round(trace[0].f), "->", round(trace[-1].f), "after", trace[-1].n, "sweeps")
print("MSE noisy", round(float(np.mean((noisy - clean) ** 2)), 1),
      "restored", round(float(np.mean((mu - clean) ** 2)), 1))

# %%
# Inpainting: knock out a block and let the neighbours fill it.
mask = np.ones(clean.shape, dtype=bool)
mask[20:30, 10:20] = False
damaged = noisy.copy()
damaged[~mask] = 255.0
mu, _ = restore(damaged, mask, TVConfig(lam=15.0, eps=1.0, sweeps=300))
print("mean inside the hole", round(float(mu[~mask].mean()), 1), "(true level 60)")
