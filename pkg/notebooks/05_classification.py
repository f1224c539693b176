"""
Hinge loss and vertex discriminant analysis
===========================================

Each hinge term is bounded above by a quadratic, turning the fit into a
sequence of weighted ridge regressions.  Vertex discriminant analysis
regresses onto the vertices of a regular simplex with an epsilon-insensitive
loss and classifies by the nearest vertex.
"""

# %%
import numpy as np

from mmkit import dataset_path
from mmkit.discriminant import (
    classify,
    hinge_mm_fit,
    read_labeled_csv,
    simplex_vertices,
    training_error,
    vda_fit,
)

binary = read_labeled_csv(dataset_path("separable_binary.csv"))
for mode in ("full-wls", "coordinate"):
    model = hinge_mm_fit(binary, 1e-3, mode)
    print(f"{mode:10s} iterations={model.iterations:5d} objective={model.objective:.6f} "
          f"error={training_error(model, binary):.2f}")

# %%
# Simplex vertices on the unit sphere, pairwise inner products -1/k.
v = simplex_vertices(3)
print(np.round(v @ v.T, 6))

# %%
three = read_labeled_csv(dataset_path("separable_three_class.csv"))
model = vda_fit(three, lam=1e-2)
print("VDA iterations", model.iterations, "error", training_error(model, three))
print("predictions at the class means:",
      classify(model, [three.features[three.labels == c].mean(axis=0) for c in (1, 2, 3)]))
