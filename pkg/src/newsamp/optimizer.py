"""NewSamp: projected sub-sampled Newton iterations with eigenvalue thresholding.

Each iteration draws ``S_t``, forms the sub-sampled Hessian, keeps its top ``r``
eigenpairs, floors the rest of the spectrum at ``lambda_{r+1}``, and takes
``theta <- P_C(theta - eta_t Q_t grad f(theta))``.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import (
    DegenerateSpectrumError,
    DivergenceError,
    InvalidInputError,
    InvalidRankError,
    NewSampError,
    NumericalFailureError,
)
from .linalg import eig_tol, full_eigen, scaling_from_eigen
from .sampling import SampleScheme, next_sample
from .trace import Trace, TraceRecord

logger = logging.getLogger(__name__)

CONVEX_SET_KINDS = ("unconstrained", "ball", "box")


@dataclass(frozen=True)
class ConvexSet:
    kind: str = "unconstrained"
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in CONVEX_SET_KINDS:
            raise InvalidInputError(f"unknown convex set {self.kind!r}")
        if self.kind == "ball":
            if self.radius is None or not self.radius > 0:
                raise InvalidInputError("ball radius must be positive")
            object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.kind == "box":
            lo = np.asarray(self.lower, dtype=float)
            hi = np.asarray(self.upper, dtype=float)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise InvalidInputError("box needs lower <= upper componentwise")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)

    @classmethod
    def unconstrained(cls):
        return cls("unconstrained")

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", center=center, radius=float(radius))

    @classmethod
    def box(cls, lower, upper):
        return cls("box", lower=lower, upper=upper)

    @property
    def diameter(self):
        if self.kind == "ball":
            return 2.0 * self.radius
        if self.kind == "box":
            return float(np.linalg.norm(self.upper - self.lower))
        return math.inf

    def project(self, theta):
        return project(self, theta)

    def distance(self, theta):
        return float(np.linalg.norm(np.asarray(theta, dtype=float) - project(self, theta)))


def project(cset, theta):
    """Euclidean projection onto ``cset``."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidInputError("cannot project a non-finite point")
    if cset is None or cset.kind == "unconstrained":
        return theta.copy()
    if cset.kind == "ball":
        d = theta - cset.center
        nrm = float(np.linalg.norm(d))
        if nrm <= cset.radius:
            return theta.copy()
        return cset.center + d * (cset.radius / nrm)
    return np.clip(theta, cset.lower, cset.upper)


def step_bound(lam_p, lam_r1):
    """Largest step for which the linear coefficient bound holds: ``2 / (1 + lam_p/lam_r1)``."""
    return 2.0 / (1.0 + lam_p / lam_r1)


def adaptive_step(lam_p, lam_r1, p, sample_size, c_step=1.0):
    """``2 / (1 + lam_p/lam_r1 + gamma)`` with ``gamma = c_step * sqrt(log p / |S|)``."""
    if not lam_r1 > 0:
        raise DegenerateSpectrumError(f"lambda_(r+1) must be positive, got {lam_r1}")
    lam_p = max(float(lam_p), 0.0)
    gamma = c_step * math.sqrt(math.log(p) / sample_size)
    return 2.0 / (1.0 + lam_p / lam_r1 + gamma)


@dataclass
class NewSampConfig:
    """Inputs of a NewSamp run.

    ``step`` is a positive float (constant step) or ``"adaptive"``.
    """

    r: int
    scheme: SampleScheme
    step: Union[float, str] = "adaptive"
    c_step: float = 1.0
    eps: float = 1e-10
    max_iters: int = 100
    theta0: Optional[np.ndarray] = field(default=None, repr=False)

    def validate(self, p):
        if not 1 <= self.r <= p - 1:
            raise InvalidRankError(f"rank threshold r={self.r} requires 1 <= r and r + 1 <= p={p}")
        if not self.eps > 0:
            raise InvalidInputError("eps must be positive")
        if self.step != "adaptive" and not (isinstance(self.step, (int, float)) and self.step > 0):
            raise InvalidInputError(f"step must be a positive number or 'adaptive', got {self.step!r}")
        if self.max_iters < 0:
            raise InvalidInputError("max_iters must be non-negative")


def divergence_threshold(f0):
    return f0 + 10.0 * max(abs(f0), 1.0)


class _Recorder:
    """Shared bookkeeping for all optimizer loops."""

    def __init__(self, method, obj, theta_star=None):
        self.obj = obj
        self.trace = Trace(method=method)
        self.theta_star = None if theta_star is None else np.asarray(theta_star, dtype=float)
        self.start = time.perf_counter()
        self.f0 = None

    def record(self, t, theta, f=None, g=None):
        if f is None or g is None:
            f, g = self.obj.value_and_gradient(theta)
        if not math.isfinite(f) or not np.all(np.isfinite(g)):
            raise NumericalFailureError(f"non-finite objective or gradient at t={t}")
        if self.f0 is None:
            self.f0 = f
        elif f > divergence_threshold(self.f0):
            raise DivergenceError(f"objective {f:.6g} exceeds ten times its start value {self.f0:.6g} at t={t}")
        dist = None if self.theta_star is None else float(np.linalg.norm(theta - self.theta_star))
        rec = TraceRecord(
            t=t, f=f, grad_norm=float(np.linalg.norm(g)), dist=dist,
            elapsed_s=time.perf_counter() - self.start, theta=theta.copy(),
        )
        self.trace.records.append(rec)
        return rec, g

    def fail(self, exc):
        self.trace.terminated_reason = "error"
        self.trace.error = f"{type(exc).__name__}: {exc}"
        exc.trace = self.trace
        return exc


def _check_finite(theta, t):
    if not np.all(np.isfinite(theta)):
        raise NumericalFailureError(f"iterate became non-finite at t={t}")


def _init_theta(obj, theta0, cset):
    theta = np.zeros(obj.p) if theta0 is None else np.asarray(theta0, dtype=float).reshape(-1).copy()
    if theta.shape[0] != obj.p:
        raise InvalidInputError(f"theta0 has length {theta.shape[0]}, expected {obj.p}")
    return project(cset, theta)


def newsamp_run(obj, cfg, cset=None, theta_star=None):
    """Run NewSamp on ``obj``; returns a :class:`Trace`.

    Failures (degenerate spectrum, non-finite iterates, divergence) raise the
    corresponding error with the partial trace attached as ``exc.trace``.
    """
    cfg.validate(obj.p)
    cset = cset or ConvexSet.unconstrained()
    rec = _Recorder("newsamp", obj, theta_star)
    try:
        theta = _init_theta(obj, cfg.theta0, cset)
        cur, g = rec.record(0, theta)
        for t in range(cfg.max_iters):
            S = next_sample(cfg.scheme, t, obj.n)
            H = obj.subsampled_hessian(theta, S)
            eig = full_eigen(H)
            Q = scaling_from_eigen(eig, cfg.r)
            lam_p = float(eig.values[-1])
            lam_r1 = Q.lambda_r1
            if cfg.step == "adaptive":
                eta = adaptive_step(lam_p, lam_r1, obj.p, S.size, cfg.c_step)
            else:
                eta = float(cfg.step)
                if eta > step_bound(max(lam_p, 0.0), lam_r1):
                    logger.warning("step %.4g exceeds 2/(1 + lam_p/lam_r1) = %.4g at t=%d",
                                   eta, step_bound(max(lam_p, 0.0), lam_r1), t)
            new = project(cset, theta - eta * Q.apply(g))
            _check_finite(new, t + 1)
            cur.step, cur.lam_r1, cur.lam_p, cur.sample_size = eta, lam_r1, lam_p, int(S.size)
            moved = float(np.linalg.norm(new - theta))
            theta = new
            cur, g = rec.record(t + 1, theta)
            if moved <= cfg.eps:
                rec.trace.terminated_reason = "eps-reached"
                break
        else:
            rec.trace.terminated_reason = "max-iters"
    except NewSampError as exc:
        raise rec.fail(exc)
    return rec.trace


def plain_subsampled_newton_run(obj, cfg, cset=None, theta_star=None):
    """Same loop as :func:`newsamp_run` with ``Q_t`` the exact inverse of ``H_{S_t}``.

    ``cfg.r`` is ignored. An ``"adaptive"`` step falls back to 1. A (numerically)
    singular sub-sampled Hessian raises :class:`NumericalFailureError`.
    """
    cset = cset or ConvexSet.unconstrained()
    eta = 1.0 if cfg.step == "adaptive" else float(cfg.step)
    rec = _Recorder("plain-subsampled", obj, theta_star)
    try:
        theta = _init_theta(obj, cfg.theta0, cset)
        cur, g = rec.record(0, theta)
        for t in range(cfg.max_iters):
            S = next_sample(cfg.scheme, t, obj.n)
            H = obj.subsampled_hessian(theta, S)
            w, V = np.linalg.eigh(H)
            if w[0] <= eig_tol(w[-1]):
                raise NumericalFailureError(
                    f"sub-sampled Hessian is singular at t={t} (smallest eigenvalue {w[0]:.3e})")
            new = project(cset, theta - eta * (V @ ((V.T @ g) / w)))
            _check_finite(new, t + 1)
            cur.step, cur.lam_p, cur.sample_size = eta, float(w[0]), int(S.size)
            moved = float(np.linalg.norm(new - theta))
            theta = new
            cur, g = rec.record(t + 1, theta)
            if moved <= cfg.eps:
                rec.trace.terminated_reason = "eps-reached"
                break
        else:
            rec.trace.terminated_reason = "max-iters"
    except NewSampError as exc:
        raise rec.fail(exc)
    return rec.trace
