import numpy as np
import pytest

from newsamp.problems import Dataset, make_objective


def random_psd(p, seed, rank=None):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((p, rank or p))
    return G @ G.T / G.shape[1]


def random_dataset(n, p, seed, labels="real"):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    z = X @ rng.standard_normal(p) / np.sqrt(p)
    if labels == "binary":
        y = (rng.random(n) < 1 / (1 + np.exp(-z))).astype(float)
    elif labels == "pm1":
        y = np.where(rng.random(n) < 1 / (1 + np.exp(-2 * z)), 1.0, -1.0)
    elif labels == "count":
        y = rng.poisson(np.exp(0.5 * z)).astype(float)
    else:
        y = z + 0.5 * rng.standard_normal(n)
    return Dataset(X, y)


LABELS = {"ols": "real", "logistic": "binary", "poisson": "count", "svm-hinge2": "pm1", "svm-huber": "pm1"}


def objective_for(kind, n=60, p=5, seed=0, C=0.05):
    return make_objective(random_dataset(n, p, seed, LABELS[kind]), kind, C=C)


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8)


def safe_theta(obj, rng, scale=0.5):
    """Random point whose SVM margins stay away from the loss breakpoints."""
    kinks = (1.0,) if obj.kind == "svm-hinge2" else (0.5, 1.5)
    for _ in range(1000):
        th = scale * rng.standard_normal(obj.p)
        if not obj.is_svm:
            return th
        m = obj.dataset.y * (obj.dataset.X @ th)
        if all(np.min(np.abs(m - k)) > 1e-3 for k in kinks):
            return th
    raise RuntimeError("no point away from the kinks")


@pytest.fixture
def ols_small():
    return objective_for("ols", n=200, p=6, seed=1)
