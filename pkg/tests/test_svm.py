import numpy as np
import pytest

from heartnoise.errors import DegenerateLabelsError, DimensionError
from heartnoise.models.svm import LinearModel, svm_predict, svm_predict_many, svm_train


def clusters(n=100, seed=0, gap=3.0):
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, -1, 1)
    X = rng.standard_normal((n, 2)) * 0.5
    X[:, 0] += gap * y
    return X, y


def primal_objective(m, X, y, c):
    Z = m.standardize(X)
    margins = y * (Z @ m.weights + m.bias)
    return 0.5 * (m.weights @ m.weights + m.bias ** 2) + c * np.maximum(0, 1 - margins).sum()


def test_separable_clusters_fit_perfectly():
    X, y = clusters()
    m = svm_train(X, y, seed=3)
    assert np.array_equal(svm_predict_many(m, X), y)
    assert m.feature_dim == 2


def test_label_flip_flips_decisions():
    X, y = clusters(seed=1)
    a = svm_train(X, y, seed=0)
    b = svm_train(X, -y, seed=0)
    assert np.all(np.sign(a.decision_function(X)) == -np.sign(b.decision_function(X)))


def test_conflicting_duplicates_do_not_crash():
    X = np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.0], [2.0, 0.0]])
    y = np.array([1, -1, 1, -1])
    m = svm_train(X, y)
    acc = np.mean(svm_predict_many(m, X) == y)
    assert acc <= 3 / 4


def test_near_optimal_against_reference_solver():
    # compare to a long projected run of the same objective solved by scipy
    from scipy.optimize import minimize

    X, y = clusters(n=120, seed=5, gap=0.6)
    c = 1.0
    m = svm_train(X, y, c=c, epochs=60, seed=0)
    Z = m.standardize(X)

    def obj(v):
        w, b = v[:2], v[2]
        return 0.5 * (w @ w + b * b) + c * np.maximum(0, 1 - y * (Z @ w + b)).sum()

    best = min(
        (minimize(obj, x0, method="Powell", options={"xtol": 1e-8, "ftol": 1e-10}) for x0 in (np.zeros(3), np.ones(3))),
        key=lambda r: r.fun,
    )
    assert primal_objective(m, X, y, c) <= best.fun * 1.05


def test_determinism_and_seed_sensitivity():
    X, y = clusters(n=60, seed=2, gap=0.5)
    a, b = svm_train(X, y, seed=4), svm_train(X, y, seed=4)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


def test_predict_tie_and_standardization_idempotent():
    m = LinearModel(np.array([1.0, -1.0]), 0.0, "mel_spec_avg", np.zeros(2), np.ones(2))
    assert svm_predict(m, [1.0, 1.0]) == -1
    assert svm_predict(m, [2.0, 0.0]) == 1
    X, y = clusters()
    fit = svm_train(X, y)
    Z = fit.standardize(X)
    ident = LinearModel(fit.weights, fit.bias, "", np.zeros(2), np.ones(2))
    np.testing.assert_array_equal(ident.standardize(Z), Z)
    np.testing.assert_allclose(ident.decision_function(Z), fit.decision_function(X), rtol=1e-12)


def test_errors():
    X, y = clusters()
    with pytest.raises(DegenerateLabelsError):
        svm_train(X, np.ones(len(y), dtype=int))
    with pytest.raises(DegenerateLabelsError):
        svm_train(X, np.where(y > 0, 2, 0))
    m = svm_train(X, y)
    with pytest.raises(DimensionError):
        svm_predict(m, [1.0, 2.0, 3.0])
