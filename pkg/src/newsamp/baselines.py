"""Reference optimizers sharing the Objective and Trace interfaces.

Batch methods use a constant step ``eta``. BFGS additionally supports
``line_step="exact"``, which takes the minimizing step of the local quadratic
model along the search direction (exact on quadratics).
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NewSampError, NumericalFailureError
from .optimizer import ConvexSet, _check_finite, _init_theta, _Recorder, project
from .sampling import _stream

METHODS = ("gd", "agd", "newton", "bfgs", "lbfgs", "sgd", "adagrad")
BATCH_METHODS = ("gd", "agd", "newton", "bfgs", "lbfgs")
STOCHASTIC_METHODS = ("sgd", "adagrad")

CURVATURE_SKIP = 1e-12


@dataclass
class BaselineConfig:
    """Settings for one baseline run.

    For stochastic methods one iteration is one single-sample step; a trace
    record is written every ``record_every`` steps (default: one pass, n steps)
    and ``eps`` is tested on the movement between records.
    """

    method: str
    eta: float = 1.0
    eps: float = 1e-10
    max_iters: int = 1000
    theta0: Optional[np.ndarray] = field(default=None, repr=False)
    seed: int = 0
    memory: int = 10
    gamma: float = 0.1
    c: float = 100.0
    delta: float = 1e-8
    line_step: str = "constant"
    record_every: Optional[int] = None

    def validate(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown baseline {self.method!r}; expected one of {METHODS}")
        for name in ("eta", "gamma", "c", "delta", "eps"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.memory < 1:
            raise InvalidInputError("L-BFGS memory must be at least 1")
        if self.line_step not in ("constant", "exact"):
            raise InvalidInputError("line_step must be 'constant' or 'exact'")


def sgd_step_size(gamma, c, t):
    return gamma / (1.0 + t / c)


def adagrad_update(accum, g, gamma, delta):
    """Per-coordinate AdaGrad step; returns the new squared-gradient accumulator and the update."""
    accum = accum + g * g
    return accum, gamma / np.sqrt(delta + accum) * g


def run_baseline(obj, cfg, cset=None, theta_star=None):
    """Run the baseline named by ``cfg.method``; errors carry the partial trace."""
    cfg.validate()
    cset = cset or ConvexSet.unconstrained()
    rec = _Recorder(cfg.method, obj, theta_star)
    loop = _stochastic if cfg.method in STOCHASTIC_METHODS else _batch
    try:
        theta = _init_theta(obj, cfg.theta0, cset)
        loop(obj, cfg, cset, rec, theta)
    except NewSampError as exc:
        raise rec.fail(exc)
    return rec.trace


def _batch(obj, cfg, cset, rec, theta):
    cur, g = rec.record(0, theta)
    method = cfg.method
    prev = theta.copy()
    H_inv = np.eye(obj.p)
    pairs = deque(maxlen=cfg.memory)
    for t in range(cfg.max_iters):
        eta = cfg.eta
        if method == "gd":
            new = theta - eta * g
        elif method == "agd":
            # Nesterov momentum (t - 1) / (t + 2), gradient taken at the extrapolated point
            y = theta + ((t - 1.0) / (t + 2.0)) * (theta - prev) if t > 0 else theta
            y = project(cset, y)
            new = y - eta * obj.gradient(y)
        elif method == "newton":
            try:
                cf = scipy.linalg.cho_factor(obj.hessian(theta))
            except np.linalg.LinAlgError as exc:
                raise NumericalFailureError(f"Hessian is not positive definite at t={t}") from exc
            new = theta - eta * scipy.linalg.cho_solve(cf, g)
        else:
            d = -(H_inv @ g) if method == "bfgs" else -_two_loop(g, pairs)
            if cfg.line_step == "exact":
                curv = obj.hessian_quadform(theta, d)
                if not curv > 0:
                    raise NumericalFailureError(f"non-positive curvature along search direction at t={t}")
                eta = -float(g @ d) / curv
            new = theta + eta * d
        new = project(cset, new)
        _check_finite(new, t + 1)
        cur.step = eta
        moved = float(np.linalg.norm(new - theta))
        prev, theta = theta, new
        g_old = g
        cur, g = rec.record(t + 1, theta)
        if method in ("bfgs", "lbfgs"):
            s, yv = theta - prev, g - g_old
            sy = float(s @ yv)
            if sy > CURVATURE_SKIP * np.linalg.norm(s) * np.linalg.norm(yv):
                if method == "bfgs":
                    H_inv = _bfgs_update(H_inv, s, yv, sy)
                else:
                    pairs.append((s, yv, sy))
        if moved <= cfg.eps:
            rec.trace.terminated_reason = "eps-reached"
            return
    rec.trace.terminated_reason = "max-iters"


def _bfgs_update(H, s, y, sy):
    rho = 1.0 / sy
    Hy = H @ y
    # (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded
    H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
    return 0.5 * (H + H.T)


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, sy in reversed(pairs):
        a = float(s @ q) / sy
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, sy = pairs[-1]
        q *= sy / float(y @ y)
    for (s, y, sy), a in zip(pairs, reversed(alphas)):
        b = float(y @ q) / sy
        q += (a - b) * s
    return q


def _stochastic(obj, cfg, cset, rec, theta):
    every = cfg.record_every or obj.n
    cur, _ = rec.record(0, theta)
    rng = _stream(cfg.seed, 5)
    accum = np.zeros(obj.p)
    last = theta.copy()
    for t in range(cfg.max_iters):
        i = int(rng.integers(obj.n))
        g = obj.sample_gradient(theta, i)
        if cfg.method == "sgd":
            step = sgd_step_size(cfg.gamma, cfg.c, t)
            theta = theta - step * g
        else:
            accum, upd = adagrad_update(accum, g, cfg.gamma, cfg.delta)
            theta = theta - upd
            step = cfg.gamma
        theta = project(cset, theta)
        _check_finite(theta, t + 1)
        if (t + 1) % every == 0 or t + 1 == cfg.max_iters:
            cur.step = step
            moved = float(np.linalg.norm(theta - last))
            last = theta.copy()
            cur, _ = rec.record(t + 1, theta)
            if moved <= cfg.eps:
                rec.trace.terminated_reason = "eps-reached"
                return
    rec.trace.terminated_reason = "max-iters"



def reference_minimizer(obj, tol=1e-12, max_iters=200, theta0=None):
    """High-precision minimizer by full Newton with step halving.

    Runs until ``||grad f|| <= tol``, then polishes with a few undamped Newton
    steps so the result is accurate to rounding level, not just to ``tol``.
    """
    theta = np.zeros(obj.p) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    f, g = obj.value_and_gradient(theta)
    polish = 0
    for _ in range(max_iters):
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            polish += 1
            if polish > 3:
                return theta
        try:
            d = scipy.linalg.cho_solve(scipy.linalg.cho_factor(obj.hessian(theta)), g)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError("Hessian is not positive definite in reference solve") from exc
        step = 1.0
        while True:
            cand = theta - step * d
            try:
                fc, gc = obj.value_and_gradient(cand)
            except NewSampError:
                fc = np.inf
            if fc <= f + 1e-12 * max(1.0, abs(f)) or step < 1e-10:
                break
            step *= 0.5
        if step < 1e-10:
            if gn <= tol:
                return theta
            raise NumericalFailureError(f"reference Newton stalled at gradient norm {gn:.3e}")
        if polish and float(np.linalg.norm(cand - theta)) == 0.0:
            return cand
        theta, f, g = cand, fc, gc
    if float(np.linalg.norm(g)) <= tol:
        return theta
    raise NumericalFailureError(f"reference Newton did not reach gradient norm {tol:g} in {max_iters} iterations")
