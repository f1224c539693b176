import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from mmkit import dataset_path
from mmkit.core import StoppingRule
from mmkit.discriminant import (
    EPS_REG,
    BinaryClassifier,
    LabeledDataset,
    VertexClassifier,
    _solve_penalized,
    _vda_quadratic,
    classify,
    eps_distance,
    hinge_majorizer,
    hinge_mm_fit,
    hinge_objective,
    read_labeled_csv,
    simplex_vertices,
    standardize,
    training_error,
    vda_fit,
    vda_objective,
    vda_surrogate,
)

from oracles import zoom_grid_max


def overlapping_binary(seed=0, n=60):
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1, -1)
    z = rng.normal(size=(n, 2))
    z[:, 0] = y + 1.5 * rng.normal(size=n)
    return LabeledDataset(z, y)


def hinge_oracle(data, lam):
    z, y = data.features, data.binary_labels()
    f = lambda t: hinge_objective(t[0], t[1:], z, y, lam)
    res = minimize(f, np.zeros(data.p + 1), method="Nelder-Mead",
                   options=dict(xatol=1e-12, fatol=1e-13, maxiter=50_000))
    for _ in range(5):
        res = minimize(f, res.x, method="Nelder-Mead",
                       options=dict(xatol=1e-12, fatol=1e-13, maxiter=50_000))
    return res.fun


def blobs(seed, spread=2.0, sd=0.5, n=20):
    rng = np.random.default_rng(seed)
    v = simplex_vertices(2)
    cats = np.repeat([1, 2, 3], n)
    return LabeledDataset(spread * v[cats - 1] + sd * rng.normal(size=(3 * n, 2)), cats)


# hinge majorizer ------------------------------------------------------------

def test_majorizer_examples():
    a, b, c = hinge_majorizer(1.0, 1e-14)
    assert a + b + c == pytest.approx(1.0)
    a, b, c = hinge_majorizer(-1.0)
    assert a - b + c == pytest.approx(0.0, abs=1e-15)
    a, b, c = hinge_majorizer(2.0, 1e-14)
    assert c == pytest.approx(0.5)
    with pytest.raises(ValueError):
        hinge_majorizer(1.0, 0.0)


def test_majorizer_random_pairs(rng):
    u = rng.normal(scale=3.0, size=10_000)
    un = rng.normal(scale=3.0, size=10_000)
    a, b, c = hinge_majorizer(un)
    r = a * u**2 + b * u + c
    assert np.all(r + EPS_REG / 4 >= np.maximum(u, 0.0))
    r_n = a * un**2 + b * un + c
    assert np.all(np.abs(r_n - np.maximum(un, 0.0)) <= EPS_REG / 4)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(1e-9, 1e-2))
def test_majorizer_property(u, un, eps_reg):
    a, b, c = hinge_majorizer(un, eps_reg)
    slack = eps_reg / 4 + 1e-12 * max(1.0, u * u)
    assert a * u * u + b * u + c + slack >= max(u, 0.0)
    assert abs(a * un * un + b * un + c - max(un, 0.0)) <= eps_reg / 4 + 1e-12 * max(1.0, un * un)


# hinge fit ------------------------------------------------------------------

def test_two_point_fit_matches_grid():
    data = LabeledDataset(np.array([[-1.0], [1.0]]), np.array([-1, 1]))
    model = hinge_mm_fit(data, 0.01)
    z, y = data.features, data.binary_labels()
    best, _ = zoom_grid_max(lambda t: -hinge_objective(t[0], t[1:], z, y, 0.01),
                            [-2.0, -2.0], [2.0, 3.0], points=41, rounds=12)
    assert model.alpha == pytest.approx(best[0], abs=1e-3)
    assert model.beta[0] == pytest.approx(best[1], abs=1e-3)
    # the exact minimizer is alpha = 0, beta = 1
    assert model.alpha == pytest.approx(0.0, abs=1e-3)
    assert model.beta[0] == pytest.approx(1.0, abs=1e-3)


@pytest.mark.xfail(strict=True, reason="eps_reg bias and coordinate stalls exceed 1e-6; see README")
def test_modes_agree_to_1e6():
    gaps = []
    for seed in range(4):
        data = overlapping_binary(seed)
        full = hinge_mm_fit(data, 1.0, "full-wls", StoppingRule(50_000, None, 1e-13))
        coord = hinge_mm_fit(data, 1.0, "coordinate", StoppingRule(20_000, None, 1e-13))
        gaps.append(abs(full.objective - coord.objective))
    assert max(gaps) < 1e-6


def test_full_fit_within_guard_scale_of_oracle():
    # the fixed point of the guarded map sits O(eps_reg) above the true minimum
    for seed in range(4):
        data = overlapping_binary(seed)
        model = hinge_mm_fit(data, 1.0, rule=StoppingRule(50_000, None, 1e-13))
        best = hinge_oracle(data, 1.0)
        assert -1e-9 <= model.objective - best < EPS_REG


def test_coordinate_mode_reaches_oracle_when_unpinned():
    data = overlapping_binary(3)
    model = hinge_mm_fit(data, 1.0, "coordinate", StoppingRule(20_000, None, 1e-13))
    assert model.objective - hinge_oracle(data, 1.0) < EPS_REG


def test_history_non_increasing_and_reported():
    data = overlapping_binary(seed=5)
    model = hinge_mm_fit(data, 0.5)
    h = np.array(model.history)
    assert np.all(np.diff(h) <= 1e-10 * np.maximum(1.0, np.abs(h[:-1])))
    assert model.objective == h[-1]
    assert len(h) == model.iterations + 1
    assert model.seconds >= 0


def test_separable_data_zero_error():
    data = read_labeled_csv(dataset_path("separable_binary.csv"))
    for mode in ("full-wls", "coordinate"):
        model = hinge_mm_fit(data, 1e-3, mode)
        assert training_error(model, data) == 0.0


def test_intercept_not_penalized():
    # all labels +1: alpha -> 1 with beta = 0 gives zero hinge loss
    data = LabeledDataset(np.random.default_rng(0).normal(size=(10, 2)), np.ones(10))
    model = hinge_mm_fit(data, 10.0)
    assert model.alpha >= 1.0 - 1e-3
    assert np.abs(model.beta).max() < 1e-3


def test_hinge_validation():
    data = overlapping_binary()
    with pytest.raises(ValueError):
        hinge_mm_fit(data, 0.0)
    with pytest.raises(ValueError):
        hinge_mm_fit(data, 1.0, "newton")
    with pytest.raises(ValueError):
        hinge_mm_fit(LabeledDataset(np.zeros((3, 1)), np.array([1, 2, 3])), 1.0)


def test_singular_system_warns():
    x = np.column_stack([np.ones(4), np.ones(4)])
    with pytest.warns(RuntimeWarning, match="jitter"):
        theta = _solve_penalized(x, np.ones(4), np.ones(4), np.zeros(2))
    assert np.all(np.isfinite(theta))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.floats(1e-3, 10.0), st.sampled_from(["full-wls", "coordinate"]))
def test_hinge_descent_random(seed, lam, mode):
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(4, 40)), int(rng.integers(1, 4))
    z = rng.normal(size=(n, p))
    y = np.where(z[:, 0] + rng.normal(size=n) > 0, 1, -1)
    model = hinge_mm_fit(LabeledDataset(z, y), lam, mode, StoppingRule(200, None, 1e-10))
    h = np.array(model.history)
    assert np.all(np.diff(h) <= 1e-10 * np.maximum(1.0, np.abs(h[:-1])))


# simplex and distances ------------------------------------------------------

def test_simplex_small_cases():
    np.testing.assert_allclose(simplex_vertices(1), [[1.0], [-1.0]])
    v2 = simplex_vertices(2)
    d = np.linalg.norm(v2[:, None] - v2[None], axis=2)
    np.testing.assert_allclose(d[~np.eye(3, dtype=bool)], math.sqrt(3))
    v3 = simplex_vertices(3)
    gram = v3 @ v3.T
    np.testing.assert_allclose(gram[~np.eye(4, dtype=bool)], -1 / 3, atol=1e-12)
    with pytest.raises(ValueError):
        simplex_vertices(0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 60))
def test_simplex_invariants(k):
    v = simplex_vertices(k)
    assert v.shape == (k + 1, k)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(v.sum(axis=0), 0.0, atol=1e-10)
    d = np.linalg.norm(v[:, None] - v[None], axis=2)
    off = ~np.eye(k + 1, dtype=bool)
    np.testing.assert_allclose(d[off], math.sqrt((2 * k + 2) / k), atol=1e-10)


def test_eps_distance():
    assert eps_distance(np.array([0.3, 0.4]), 1.0) == 0.0
    assert eps_distance(np.array([0.0, 3.0]), 1.0) == 2.0
    assert eps_distance(np.zeros(3), 0.0) == 0.0


# VDA ------------------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_vda_surrogate_tangent_and_majorizing(seed, k):
    rng = np.random.default_rng(seed)
    n, p = 12, 3
    z = rng.normal(size=(n, p))
    cats = rng.integers(1, k + 2, size=n)
    v = simplex_vertices(k)
    eps = 0.9 * math.sqrt((2 * k + 2) / k) / 2
    A_n, b_n = rng.normal(size=(k, p)), rng.normal(size=k)
    f_n = vda_objective(A_n, b_n, z, cats, v, 0.1, eps)
    assert vda_surrogate(A_n, b_n, z, cats, v, 0.1, eps, A_n, b_n) == pytest.approx(f_n, abs=1e-10)
    for _ in range(5):
        A, b = A_n + rng.normal(size=(k, p)), b_n + rng.normal(size=k)
        g = vda_surrogate(A, b, z, cats, v, 0.1, eps, A_n, b_n)
        assert g + EPS_REG / 4 + 1e-10 >= vda_objective(A, b, z, cats, v, 0.1, eps)


def test_vda_dead_zone_case_constant():
    resid = np.array([[0.0, 0.0], [3.0, 4.0]])
    kappa, ell, const = _vda_quadratic(resid, 1.0, EPS_REG)
    assert kappa[0] == 0.0 and ell[0] == 0.0 and const[0] == 0.0
    assert kappa[1] > 0


def test_vda_matches_derivative_free_oracle():
    for seed in range(3):
        data = blobs(seed)
        model = vda_fit(data, 1e-2)
        z, cats = data.features, data.categories()
        v = simplex_vertices(2)
        eps = 0.9999 * math.sqrt(3.0) / 2

        def f(t):
            return vda_objective(t[:4].reshape(2, 2), t[4:], z, cats, v, 1e-2, eps)

        rng = np.random.default_rng(100 + seed)
        best = math.inf
        for _ in range(10):
            res = minimize(f, rng.normal(scale=0.5, size=6), method="Nelder-Mead",
                           options=dict(maxiter=20_000, maxfev=20_000, xatol=1e-10, fatol=1e-13))
            for _ in range(3):
                res = minimize(f, res.x, method="Nelder-Mead",
                               options=dict(maxiter=20_000, maxfev=20_000, xatol=1e-10, fatol=1e-13))
            best = min(best, res.fun)
        assert abs(model.objective - best) < 1e-3


def test_vda_binary_separable():
    data = read_labeled_csv(dataset_path("separable_binary.csv"))
    model = vda_fit(data, 1e-2)
    assert training_error(model, data) == 0.0
    np.testing.assert_allclose(model.vertices, [[1.0], [-1.0]])


def test_vda_three_class_bundled():
    data = read_labeled_csv(dataset_path("separable_three_class.csv"))
    model = vda_fit(data, 1e-2)
    assert training_error(model, data) == 0.0
    h = np.array(model.history)
    assert np.all(np.diff(h) <= 1e-10 * np.maximum(1.0, np.abs(h[:-1])))


def test_vda_all_in_dead_zone_is_optimal_at_start():
    # every point at its own vertex already; A = 0 and b = centroid leaves residuals < eps
    cats = np.array([1, 2, 3])
    z = np.zeros((3, 1))
    data = LabeledDataset(z, cats)
    with pytest.warns(RuntimeWarning, match="cutoff"):
        model = vda_fit(data, 1e-2, eps=1.5)
    assert model.objective == 0.0
    np.testing.assert_allclose(model.A, 0.0)


def test_vda_warns_above_cutoff():
    with pytest.warns(RuntimeWarning, match="cutoff"):
        vda_fit(blobs(0), 1e-2, eps=1.0)


def test_vda_validation():
    with pytest.raises(ValueError):
        vda_fit(blobs(0), 0.0)
    with pytest.raises(ValueError):
        vda_fit(blobs(0), 1e-2, eps=-1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.floats(1e-3, 1.0))
def test_vda_descent_random(seed, k, lam):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(k + 2, 30))
    cats = np.r_[np.arange(1, k + 2), rng.integers(1, k + 2, size=n - k - 1)]
    z = rng.normal(size=(n, 2)) + cats[:, None]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = vda_fit(LabeledDataset(z, cats), lam, rule=StoppingRule(100, None, 1e-10))
    h = np.array(model.history)
    assert np.all(np.diff(h) <= 1e-10 * np.maximum(1.0, np.abs(h[:-1])))


# classification and I/O -----------------------------------------------------

def test_classify_ties_and_vertices():
    assert classify(BinaryClassifier(0.0, np.zeros(2)), np.ones(2)).tolist() == [1]
    v = simplex_vertices(2)
    model = VertexClassifier(np.zeros((2, 1)), v[2], v)
    assert classify(model, [[0.0]]).tolist() == [3]
    one_d = VertexClassifier(np.zeros((1, 1)), np.array([0.3]), simplex_vertices(1))
    assert classify(one_d, [[5.0]]).tolist() == [1]
    # equidistant from all vertices: lowest index wins
    centre = VertexClassifier(np.zeros((2, 1)), np.zeros(2), v)
    assert classify(centre, [[0.0]]).tolist() == [1]


def test_classify_relabel_invariance(rng):
    v = simplex_vertices(3)
    A, b = rng.normal(size=(3, 2)), rng.normal(size=3)
    z = rng.normal(size=(50, 2))
    perm = rng.permutation(4)
    base = classify(VertexClassifier(A, b, v), z)
    permuted = classify(VertexClassifier(A, b, v[perm]), z)
    np.testing.assert_array_equal(perm[permuted - 1] + 1, base)


def test_label_coding():
    d = LabeledDataset(np.zeros((4, 1)), np.array([1, 2, 2, 1]))
    assert d.binary_labels().tolist() == [1, -1, -1, 1]
    e = LabeledDataset(np.zeros((2, 1)), np.array([1, -1]))
    assert e.categories().tolist() == [1, 2]
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((3, 1)), np.array([1, 3, 3])).categories()
    with pytest.raises(ValueError):
        LabeledDataset(np.full((2, 1), np.nan), np.array([1, 2]))


def test_read_labeled_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,y\n1,10,1\n3,30,2\n")
    d = read_labeled_csv(path, standardize_features=True)
    np.testing.assert_allclose(d.features, [[-1, -1], [1, 1]])
    assert d.labels.tolist() == [1, 2]
    np.testing.assert_allclose(standardize(np.array([[1.0, 5.0], [3.0, 5.0]])), [[-1, 0], [1, 0]])


def test_missing_dataset():
    with pytest.raises(FileNotFoundError):
        dataset_path("nope.csv")
