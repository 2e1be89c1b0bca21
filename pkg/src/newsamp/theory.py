"""Composite convergence coefficients and diagnostics for measured traces.

The error recursion studied here is ``D_{t+1} <= xi1 D_t + xi2 D_t^2`` where
``D_t = ||theta^t - theta*||``: ``xi1`` governs the linear phase near the
optimum, ``xi2`` the quadratic phase far from it.
"""

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (
    DegenerateSpectrumError,
    InsufficientDataError,
    InvalidInputError,
    NoBoundError,
    NoGuaranteeError,
    OutOfRegimeError,
    PhasesUndetectedError,
    RequiresBoundedSetError,
    SampleTooSmallError,
)
from .trace import Trace

C_ABS_S1 = 6.0
C_ABS_S2 = 8.0


@dataclass(frozen=True)
class CoefficientReport:
    xi1: float
    xi2: float
    lambda_p: float
    lambda_r1: float
    eta: float
    K: float
    M: float
    c_abs: float
    scheme_kind: str
    delta: Optional[float] = None
    covered: bool = True
    log_clamped: bool = False

    def to_dict(self):
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _check_spectrum(lam_r1, eta):
    if not lam_r1 > 0:
        raise DegenerateSpectrumError(f"lambda_(r+1) must be positive, got {lam_r1}")
    if not eta > 0:
        raise InvalidInputError(f"step size must be positive, got {eta}")


def _xi2(eta, M, lam_r1):
    if math.isinf(M):
        return math.inf
    return eta * M / (2.0 * lam_r1)


def sampling_scale_s1(p, sample_size):
    """``sqrt(log p / |S|)``, the independent-sampling concentration scale."""
    return math.sqrt(math.log(p) / sample_size)


def coefficients_s1(lam_p, lam_r1, eta, K, M, p, sample_size, c_abs=C_ABS_S1, covered=True):
    """Linear and quadratic coefficients under independent sub-sampling."""
    _check_spectrum(lam_r1, eta)
    s = sampling_scale_s1(p, sample_size)
    xi1 = 1.0 - eta * lam_p / lam_r1 + eta * c_abs * K / lam_r1 * s
    return CoefficientReport(
        xi1=xi1, xi2=_xi2(eta, M, lam_r1), lambda_p=lam_p, lambda_r1=lam_r1, eta=eta,
        K=K, M=M, c_abs=c_abs, scheme_kind="S1", covered=covered and math.isfinite(M),
    )


def coefficients_s2(lam_p, lam_r1, eta, K, M_n, M_S, p, sample_size, diam_c, c_abs=C_ABS_S2, covered=True):
    """Coefficients under sequentially dependent sub-sampling over a bounded set.

    The log term ``log(diam^2 (M_n + M_S)^2 |S| / K^2)`` must have an argument
    above 1; between 1 and e it is clamped to 1 and ``log_clamped`` is set.
    """
    _check_spectrum(lam_r1, eta)
    if not math.isfinite(diam_c):
        raise RequiresBoundedSetError("sequential-sampling coefficients need a bounded parameter set")
    if not diam_c > 0:
        raise InvalidInputError("set diameter must be positive")
    clamped = False
    if K == 0:
        term = 0.0
    else:
        arg = diam_c**2 * (M_n + M_S) ** 2 * sample_size / K**2
        if not arg > 1.0:
            raise OutOfRegimeError(f"log argument {arg:.3g} is not above 1")
        log_term = math.log(arg)
        if log_term < 1.0:
            log_term, clamped = 1.0, True
        term = c_abs * K / lam_r1 * math.sqrt(p / sample_size * log_term)
    xi1 = 1.0 - eta * lam_p / lam_r1 + eta * term
    return CoefficientReport(
        xi1=xi1, xi2=_xi2(eta, M_n, lam_r1), lambda_p=lam_p, lambda_r1=lam_r1, eta=eta,
        K=K, M=M_n, c_abs=c_abs, scheme_kind="S2", covered=covered and math.isfinite(M_n),
        log_clamped=clamped,
    )


def coefficient_drift_bound(k_lower, K, p, sample_size, c1=1.0, c2=1.0):
    """Bound on ``|xi1^t - xi1*|`` for quadratics under independent sampling."""
    s = sampling_scale_s1(p, sample_size)
    gap = k_lower - c2 * K * s
    if not gap > 0:
        raise SampleTooSmallError(f"sample of size {sample_size} too small: k - c2 K sqrt(log p/|S|) = {gap:.3g}")
    return c1 * K * s / (k_lower * gap)


def sufficient_start_radius(xi1_star, xi2_star, delta=0.0):
    """Initial distance below which convergence is guaranteed; ``inf`` when ``xi2* + delta == 0``."""
    if xi1_star + delta >= 1.0:
        raise NoGuaranteeError(f"xi1* + delta = {xi1_star + delta:.4g} >= 1: no convergence guarantee")
    denom = xi2_star + delta
    if denom <= 0:
        return math.inf
    return (1.0 - xi1_star - delta) / denom


@dataclass(frozen=True)
class CompositeBound:
    xi1: float
    xi2: float
    delta0: float


def composite_iterations(delta, xi1, xi2, delta0, eps):
    """Iterations to reach ``eps`` when switching from quadratic to linear analysis at ``delta``."""
    rate = xi1 + delta * xi2
    quad = math.log2(math.log(rate) / math.log(delta0 / delta * rate))
    return quad + math.log(eps / delta) / math.log(rate)


def iteration_interval(bound, eps):
    xi1, xi2, d0 = bound.xi1, bound.xi2, bound.delta0
    if not (0 < xi1 < 1) or not 0 <= xi2:
        raise NoBoundError(f"need 0 < xi1 < 1 and xi2 >= 0, got xi1={xi1}, xi2={xi2}")
    if xi2 > 0 and not d0 < (1.0 - xi1) / xi2:
        raise NoBoundError(f"initial distance {d0} is not below (1 - xi1)/xi2 = {(1 - xi1) / xi2}")
    if not 0 < eps < d0:
        raise NoBoundError(f"need 0 < eps < initial distance, got eps={eps}, delta0={d0}")
    lo = max(eps, xi1 * d0 / (1.0 - xi2 * d0))
    if not lo < d0:
        raise NoBoundError("the switching interval D is empty")
    return lo, d0


def iteration_bound(bound, eps):
    """Minimize the iteration count bound over the switching point; returns ``(T, delta_star)``."""
    lo, hi = iteration_interval(bound, eps)
    nudge = 1e-12 * (hi - lo)
    a, b = lo + nudge, hi - nudge

    def T(d):
        return composite_iterations(d, bound.xi1, bound.xi2, bound.delta0, eps)

    res = minimize_scalar(T, bounds=(a, b), method="bounded", options={"xatol": 1e-6 * (hi - lo)})
    candidates = [(T(a), a), (T(b), b)]
    if res.success and math.isfinite(res.fun):
        candidates.append((float(res.fun), float(res.x)))
    best_T, best_d = min(candidates)
    return max(best_T, 0.0), best_d


def phase_steps(delta, xi1, xi2, delta0, eps):
    """Whole-step counts ``(t1, t2)`` of the quadratic and linear phases when switching at ``delta``."""
    rate = xi1 + delta * xi2
    t1 = math.ceil(math.log2(math.log(rate) / math.log(delta0 / delta * rate)))
    t2 = math.ceil(math.log(eps / delta) / math.log(rate))
    return max(t1, 0), max(t2, 0)


def iteration_bound_steps(bound, eps, grid=512):
    """Integer iteration bound ``min_delta ceil(t1) + ceil(t2)``; returns ``(steps, delta)``.

    Each phase needs a whole number of steps, so rounding the two phase counts
    separately gives a bound that holds for the integer recursion; ``ceil`` of
    the continuous ``T(delta*)`` can be one step short. The minimum is taken
    over a geometric grid of switching points plus ``delta*``.
    """
    lo, hi = iteration_interval(bound, eps)
    _, d_star = iteration_bound(bound, eps)
    nudge = 1e-12 * (hi - lo)
    cands = np.append(np.geomspace(lo + nudge, hi - nudge, grid), d_star)
    best = min((sum(phase_steps(float(d), bound.xi1, bound.xi2, bound.delta0, eps)), float(d)) for d in cands)
    return best


def simulate_composite(xi1, xi2, delta0, eps, max_steps=100000):
    """Steps the worst-case recursion needs to reach ``eps``."""
    d = delta0
    for t in range(max_steps + 1):
        if d <= eps:
            return t
        d = xi1 * d + xi2 * d * d
    return None


def _distances(trace):
    if isinstance(trace, Trace):
        d = trace.dists()
        if np.any(np.isnan(d)):
            raise InsufficientDataError("trace has no distance to a reference minimizer")
        theta = trace.theta
        floor = 1e-12 * max(1.0, float(np.linalg.norm(theta))) if theta is not None else 1e-12
        return d, floor
    return np.asarray(trace, dtype=float), np.finfo(float).tiny


def _above_floor(d, floor):
    """Leading run of distances strictly above the noise floor."""
    bad = np.flatnonzero(~(d > floor))
    return d if bad.size == 0 else d[: bad[0]]


def local_rate(trace, window=10, floor=None):
    """Least-squares slope of ``log D_t`` against ``t`` over the last ``window`` usable records.

    ``exp`` of the result estimates the linear convergence factor.
    """
    d, default_floor = _distances(trace)
    d = _above_floor(d, default_floor if floor is None else floor)
    if d.size < window:
        raise InsufficientDataError(f"only {d.size} distances above the floor, need {window}")
    t = np.arange(d.size)[-window:]
    return float(np.polyfit(t, np.log(d[-window:]), 1)[0])


@dataclass(frozen=True)
class PhaseSplit:
    quad_phase: Optional[range]
    lin_phase: Optional[range]
    quad_slope: Optional[float]
    lin_slope: Optional[float]
    slopes: tuple


def window_slopes(d, width=4):
    """Slope of ``log D_{t+1}`` against ``log D_t`` on each window of ``width`` consecutive iterates.

    A window starting at ``i`` covers ``D_i .. D_{i+width-1}``, i.e. ``width - 1`` pairs.
    """
    if width < 3:
        raise InvalidInputError("window width must be at least 3 iterates")
    x, y = np.log(d[:-1]), np.log(d[1:])
    pairs = width - 1
    return [float(np.polyfit(x[i:i + pairs], y[i:i + pairs], 1)[0]) for i in range(x.size - pairs + 1)]


def phase_split(trace, width=4, quad_min=1.6, lin_max=1.2, floor=None):
    """Locate the quadratic and linear phases of a convergence trace.

    The quadratic phase is the run of windows with slope >= ``quad_min``
    starting at the earliest such window; the linear phase is the run of windows
    with slope <= ``lin_max`` ending at the last such window. Each window spans
    ``width`` iterates; the returned ranges index iterates.
    """
    d, default_floor = _distances(trace)
    d = _above_floor(d, default_floor if floor is None else floor)
    if d.size < 8:
        raise InsufficientDataError(f"only {d.size} usable distances, need 8")
    slopes = window_slopes(d, width)
    quad = [i for i, b in enumerate(slopes) if b >= quad_min]
    lin = [i for i, b in enumerate(slopes) if b <= lin_max]
    if not quad and not lin:
        raise PhasesUndetectedError("no window qualifies as quadratic or linear")
    quad_rng = lin_rng = None
    if quad:
        i = j = quad[0]
        while j + 1 < len(slopes) and slopes[j + 1] >= quad_min:
            j += 1
        quad_rng = range(i, j + width)
    if lin:
        i = j = lin[-1]
        while i - 1 >= 0 and slopes[i - 1] <= lin_max:
            i -= 1
        lin_rng = range(i, j + width)
    return PhaseSplit(
        quad_phase=quad_rng,
        lin_phase=lin_rng,
        quad_slope=slopes[quad[0]] if quad else None,
        lin_slope=slopes[lin[-1]] if lin else None,
        slopes=tuple(slopes),
    )


def suggested_sample_size(K, lam_p, p):
    """Sub-sample size ``(K / lambda_p)^2 log p`` for a small linear coefficient."""
    if not lam_p > 0:
        raise DegenerateSpectrumError("smallest eigenvalue must be positive")
    return (K / lam_p) ** 2 * math.log(p)


def effective_rank(H):
    """Trace over largest eigenvalue."""
    w = np.linalg.eigvalsh(np.asarray(H, dtype=float))
    if not w[-1] > 0:
        raise DegenerateSpectrumError("largest eigenvalue must be positive")
    return float(np.sum(w) / w[-1])
