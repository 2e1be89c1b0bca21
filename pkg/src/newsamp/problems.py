"""Finite-sum objectives ``f(theta) = (1/n) sum_i f_i(theta)``.

GLM kinds use ``f_i = Phi(<x_i, theta>) - y_i <x_i, theta>`` with a canonical
link. SVM kinds use ``f_i = 0.5 ||theta||^2 + (n C / 2) loss(y_i <x_i, theta>)``,
whose average is the usual primal objective ``0.5 ||theta||^2 + (C/2) sum loss``.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .errors import InvalidInputError, PoissonOverflowError

KINDS = ("ols", "logistic", "poisson", "svm-hinge2", "svm-huber")
GLM_KINDS = ("ols", "logistic", "poisson")
SVM_KINDS = ("svm-hinge2", "svm-huber")

POISSON_MAX_ETA = 700.0


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidInputError(f"design matrix must be n x p with n, p >= 1, got {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise InvalidInputError(f"{X.shape[0]} rows but {y.shape[0]} responses")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset contains NaN or Inf")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class GlmLink:
    """Cumulant generating function and its first three derivatives."""

    name: str
    phi: Callable
    phi1: Callable
    phi2: Callable
    phi3: Callable


def _sig_d2(z):
    s = expit(z)
    return s * (1.0 - s)


def _sig_d3(z):
    s = expit(z)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


LINKS = {
    "ols": GlmLink(
        "ols",
        phi=lambda z: z * z,
        phi1=lambda z: 2.0 * z,
        phi2=lambda z: np.full_like(np.asarray(z, dtype=float), 2.0),
        phi3=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
    ),
    "logistic": GlmLink(
        "logistic",
        phi=lambda z: np.logaddexp(0.0, z),
        phi1=expit,
        phi2=_sig_d2,
        phi3=_sig_d3,
    ),
    "poisson": GlmLink("poisson", phi=np.exp, phi1=np.exp, phi2=np.exp, phi3=np.exp),
}

# sup_z |d^3/dz^3 log(1 + e^z)|, attained where sigma(z) = (3 -+ sqrt 3) / 6
LOGISTIC_PHI3_SUP = 1.0 / (6.0 * math.sqrt(3.0))


def hinge2_loss(m):
    """Squared hinge loss ``max(0, 1 - m)^2`` and its first two derivatives in ``m``."""
    slack = np.maximum(0.0, 1.0 - m)
    # second derivative taken as 0 exactly at the kink m == 1
    return slack**2, -2.0 * slack, np.where(m < 1.0, 2.0, 0.0)


def smoothed_huber_loss(m):
    """Three-piece smoothed Huber loss with breakpoints at m = 1/2 and m = 3/2."""
    m = np.asarray(m, dtype=float)
    mid = np.abs(1.0 - m) <= 0.5
    val = np.where(m > 1.5, 0.0, np.where(mid, 0.5 * (1.5 - m) ** 2, 1.0 - m))
    d1 = np.where(m > 1.5, 0.0, np.where(mid, m - 1.5, -1.0))
    d2 = np.where(mid, 1.0, 0.0)
    return val, d1, d2


SVM_LOSSES = {"svm-hinge2": hinge2_loss, "svm-huber": smoothed_huber_loss}


class Objective:
    """Evaluator for one of the supported finite-sum objectives.

    ``kind`` is one of ``ols``, ``logistic``, ``poisson``, ``svm-hinge2``,
    ``svm-huber``. ``C`` is the SVM penalty and is ignored for GLMs.
    Logistic labels must be in {0, 1}; SVM labels in {-1, +1}
    (see :func:`make_objective` for automatic conversion).
    """

    def __init__(self, dataset, kind, C=1.0):
        if kind not in KINDS:
            raise InvalidInputError(f"unknown objective kind {kind!r}; expected one of {KINDS}")
        self.dataset = dataset
        self.kind = kind
        self.C = float(C)
        y = dataset.y
        if kind in SVM_KINDS:
            if not self.C > 0:
                raise InvalidInputError("SVM penalty C must be positive")
            if not np.all(np.isin(y, (-1.0, 1.0))):
                raise InvalidInputError("SVM labels must be -1 or +1")
        if kind == "logistic" and not np.all(np.isin(y, (0.0, 1.0))):
            raise InvalidInputError("logistic labels must be 0 or 1")
        if kind == "poisson" and np.any(y < 0):
            raise InvalidInputError("Poisson responses must be non-negative")
        self.link = LINKS.get(kind)

    def __repr__(self):
        ds = self.dataset
        return f"Objective(kind={self.kind!r}, n={ds.n}, p={ds.p})"

    @property
    def n(self):
        return self.dataset.n

    @property
    def p(self):
        return self.dataset.p

    @property
    def is_svm(self):
        return self.kind in SVM_KINDS

    @property
    def is_quadratic(self):
        return self.kind == "ols"

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape[0] != self.p:
            raise InvalidInputError(f"theta has length {theta.shape[0]}, expected {self.p}")
        if not np.all(np.isfinite(theta)):
            raise InvalidInputError("theta has non-finite entries")
        return theta

    def _linear(self, theta, idx=None):
        X = self.dataset.X if idx is None else self.dataset.X[idx]
        z = X @ theta
        if self.kind == "poisson":
            bad = np.flatnonzero(z > POISSON_MAX_ETA)
            if bad.size:
                i = int(bad[0]) if idx is None else int(np.asarray(idx)[bad[0]])
                raise PoissonOverflowError(i, float(z[bad[0]]))
        return z

    def _parts(self, z, idx=None):
        """Per-sample loss and its first two derivatives w.r.t. the linear predictor."""
        y = self.dataset.y if idx is None else self.dataset.y[idx]
        if self.link is not None:
            lk = self.link
            return lk.phi(z) - y * z, lk.phi1(z) - y, lk.phi2(z)
        scale = 0.5 * self.n * self.C
        val, d1, d2 = SVM_LOSSES[self.kind](y * z)
        return scale * val, scale * d1 * y, scale * d2

    def value(self, theta):
        theta = self._check_theta(theta)
        loss, _, _ = self._parts(self._linear(theta))
        f = math.fsum(loss) / self.n
        if self.is_svm:
            f += 0.5 * float(theta @ theta)
        return f

    def gradient(self, theta):
        theta = self._check_theta(theta)
        _, d1, _ = self._parts(self._linear(theta))
        g = self.dataset.X.T @ d1 / self.n
        if self.is_svm:
            g = g + theta
        return g

    def value_and_gradient(self, theta):
        theta = self._check_theta(theta)
        loss, d1, _ = self._parts(self._linear(theta))
        f = math.fsum(loss) / self.n
        g = self.dataset.X.T @ d1 / self.n
        if self.is_svm:
            f += 0.5 * float(theta @ theta)
            g = g + theta
        return f, g

    def sample_gradient(self, theta, i):
        """Gradient of the single term ``f_i``."""
        theta = self._check_theta(theta)
        idx = np.array([int(i)])
        _, d1, _ = self._parts(self._linear(theta, idx), idx)
        g = d1[0] * self.dataset.X[idx[0]]
        if self.is_svm:
            g = g + theta
        return g

    def subsampled_hessian(self, theta, S):
        """``(1/|S|) sum_{i in S} Hessian(f_i)(theta)``; ``S`` may repeat indices."""
        theta = self._check_theta(theta)
        S = np.asarray(S, dtype=np.intp).reshape(-1)
        if S.size == 0:
            raise InvalidInputError("sub-sample index set is empty")
        if S.min() < 0 or S.max() >= self.n:
            raise InvalidInputError(f"sub-sample indices must lie in [0, {self.n})")
        z = self._linear(theta, S)
        _, _, w = self._parts(z, S)
        XS = self.dataset.X[S]
        H = XS.T @ (w[:, None] * XS) / S.size
        H = 0.5 * (H + H.T)
        if self.is_svm:
            H[np.diag_indices_from(H)] += 1.0
        return H

    def hessian(self, theta):
        return self.subsampled_hessian(theta, np.arange(self.n))

    def hessian_quadform(self, theta, d):
        """``d^T H(theta) d`` in O(np)."""
        theta = self._check_theta(theta)
        d = np.asarray(d, dtype=float)
        _, _, w = self._parts(self._linear(theta))
        Xd = self.dataset.X @ d
        q = float(w @ (Xd * Xd)) / self.n
        if self.is_svm:
            q += float(d @ d)
        return q

    def support_vectors(self, theta):
        """Indices with margin ``y_i <theta, x_i> < 1`` (SVM kinds)."""
        theta = self._check_theta(theta)
        m = self.dataset.y * (self.dataset.X @ theta)
        return np.flatnonzero(m < 1.0)


def make_objective(dataset, kind, C=1.0):
    """Build an objective, converting binary labels to the kind's convention."""
    y = dataset.y
    labels = np.unique(y)
    if kind == "logistic" and labels.size <= 2 and np.all(np.isin(labels, (-1.0, 1.0))):
        dataset = Dataset(dataset.X, (y + 1.0) / 2.0)
    elif kind in SVM_KINDS and labels.size <= 2 and np.all(np.isin(labels, (0.0, 1.0))):
        dataset = Dataset(dataset.X, 2.0 * y - 1.0)
    return Objective(dataset, kind, C=C)


@dataclass(frozen=True)
class ProblemConstants:
    """Hessian bound K, Hessian Lipschitz constant M, max squared row norm, link Lipschitz L.

    ``covered`` is False when K and M are surrogates the convergence theory does not cover.
    """

    K: float
    M: float
    R_x: float
    L: Optional[float]
    covered: bool = True


def linear_predictor_bound(obj, thetas):
    """``max |<x_i, theta>|`` over the data and the given iterates."""
    X = obj.dataset.X
    b = 0.0
    for th in thetas:
        b = max(b, float(np.max(np.abs(X @ np.asarray(th, dtype=float)))))
    return b


def problem_constants(obj, sample_size=None, thetas=None, linear_bound=None):
    """Assumption constants for ``obj``.

    Poisson constants are local: they hold on the box ``|<x_i, theta>| <= b`` where
    ``b`` is ``linear_bound`` or, failing that, the largest linear predictor over
    ``thetas`` (default: just theta = 0). SVM constants are surrogates; ``sample_size``
    (default n) enters the SVM Hessian-bound estimate.
    """
    X = obj.dataset.X
    R_x = float(np.max(np.einsum("ij,ij->i", X, X)))
    if obj.kind == "ols":
        return ProblemConstants(K=2.0 * R_x, M=0.0, R_x=R_x, L=0.0)
    if obj.kind == "logistic":
        L = LOGISTIC_PHI3_SUP
        return ProblemConstants(K=R_x, M=L * R_x**1.5, R_x=R_x, L=L)
    if obj.kind == "poisson":
        if linear_bound is None:
            linear_bound = linear_predictor_bound(obj, thetas if thetas is not None else [np.zeros(obj.p)])
        eb = math.exp(float(linear_bound))
        return ProblemConstants(K=eb * R_x, M=eb * R_x**1.5, R_x=R_x, L=eb)
    s = obj.n if sample_size is None else int(sample_size)
    return ProblemConstants(K=1.0 + obj.n * obj.C * R_x / s, M=math.inf, R_x=R_x, L=None, covered=False)
