"""Index-set generators for the sub-sampled Hessian.

Independent schemes (``s1-*``) draw a fresh uniform sample at every iteration
from a stream keyed by ``(seed, t)``. Sequentially dependent schemes (``s2-*``)
are built from one seeded permutation of ``[n]``, so they never look at data.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import InvalidInputError, InvalidSizeError

SCHEME_KINDS = ("s1-with-replacement", "s1-without-replacement", "s2-fixed", "s2-growing")


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *key]))


@dataclass(frozen=True)
class SampleScheme:
    """How ``S_t`` is drawn.

    ``size`` is either a constant or a callable ``t -> |S_t|``. For ``s2-growing``
    it is the initial size and ``increment`` (default ``ceil(size / 2)``) unused
    indices are added per iteration; with ``cover_unused=False`` the additions are
    drawn uniformly from all of ``[n]`` instead.
    """

    kind: str
    size: Union[int, Callable[[int], int]]
    seed: int = 0
    increment: Optional[int] = None
    cover_unused: bool = True

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise InvalidInputError(f"unknown sampling scheme {self.kind!r}; expected one of {SCHEME_KINDS}")
        if self.kind == "s2-growing" and callable(self.size):
            raise InvalidInputError("s2-growing takes an integer initial size")
        if self.increment is not None and self.increment < 0:
            raise InvalidInputError("increment must be non-negative")

    @property
    def independent(self):
        return self.kind.startswith("s1")

    def size_at(self, t, n):
        if self.kind == "s2-growing":
            inc = self.increment if self.increment is not None else math.ceil(self.size / 2)
            size = min(int(self.size) + t * inc, n)
        elif callable(self.size):
            size = int(self.size(t))
        else:
            size = int(self.size)
        if size < 1:
            raise InvalidSizeError(f"sample size must be positive, got {size} at t={t}")
        return size


def next_sample(scheme, t, n):
    """Index multiset ``S_t`` for iteration ``t`` over a dataset of size ``n``."""
    t = int(t)
    n = int(n)
    if t < 0 or n < 1:
        raise InvalidInputError(f"need t >= 0 and n >= 1, got t={t}, n={n}")
    size = scheme.size_at(t, n)
    kind = scheme.kind
    if kind != "s1-with-replacement" and size > n:
        raise InvalidSizeError(f"cannot draw {size} distinct indices from n={n}")

    if kind == "s1-with-replacement":
        return _stream(scheme.seed, 1, t).integers(0, n, size=size)
    if kind == "s1-without-replacement":
        return np.sort(_stream(scheme.seed, 1, t).permutation(n)[:size])
    if kind == "s2-fixed":
        return np.sort(_stream(scheme.seed, 2).permutation(n)[:size])

    # s2-growing: S_t is a prefix of one fixed permutation, hence S_t is a subset of S_{t+1}
    if scheme.cover_unused:
        return np.sort(_stream(scheme.seed, 3).permutation(n)[:size])
    base = scheme.size_at(0, n)
    first = _stream(scheme.seed, 3).permutation(n)[:base]
    extra = [_stream(scheme.seed, 4, tau).integers(0, n, size=scheme.size_at(tau, n) - scheme.size_at(tau - 1, n))
             for tau in range(1, t + 1)]
    return np.sort(np.concatenate([first, *extra]))
