"""Synthetic spiked-covariance data and CSV / LIBSVM ingestion."""

import csv
import hashlib
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidInputError, ParseError, ShapeError
from .problems import Dataset

LABEL_MODELS = ("logistic-planted", "linear-gaussian", "sign-planted")
THETA_SUPPORTS = ("spikes", "uniform")


def default_spikes(r):
    """20 > 15 > 10 for three spikes; evenly spaced between 20 and 10 otherwise."""
    if r == 0:
        return ()
    if r == 1:
        return (20.0,)
    return tuple(float(v) for v in np.linspace(20.0, 10.0, r))


@dataclass(frozen=True)
class SpikedModelSpec:
    """Gaussian design with ``r_spikes`` large eigenvalues above a flat floor.

    ``theta_norm`` is the length of the planted coefficient vector and
    ``noise_sd`` the response noise of the ``linear-gaussian`` model.
    ``theta_support="spikes"`` draws the planted vector inside the span of the
    spiked directions, ``"uniform"`` draws a uniformly random direction.
    """

    n: int
    p: int
    r_spikes: int = 3
    spike_values: Optional[Tuple[float, ...]] = None
    noise_floor: float = 1.0
    label_model: str = "logistic-planted"
    seed: int = 0
    theta_norm: float = 1.5
    noise_sd: float = 1.0
    theta_support: str = "spikes"

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise InvalidInputError("n and p must be positive")
        if not 0 <= self.r_spikes < self.p:
            raise InvalidInputError(f"r_spikes must satisfy 0 <= r_spikes < p (got r_spikes={self.r_spikes}, p={self.p})")
        if not self.noise_floor > 0:
            raise InvalidInputError("noise_floor must be positive")
        spikes = self.spike_values
        if spikes is None:
            spikes = default_spikes(self.r_spikes)
        spikes = tuple(float(s) for s in spikes)
        if len(spikes) != self.r_spikes:
            raise InvalidInputError(f"expected {self.r_spikes} spike values, got {len(spikes)}")
        if any(a <= b for a, b in zip(spikes, spikes[1:])):
            raise InvalidInputError("spike values must be strictly decreasing")
        if any(s <= self.noise_floor for s in spikes):
            raise InvalidInputError("spike values must exceed the noise floor")
        if self.label_model not in LABEL_MODELS:
            raise InvalidInputError(f"unknown label model {self.label_model!r}; expected one of {LABEL_MODELS}")
        if self.theta_support not in THETA_SUPPORTS:
            raise InvalidInputError(f"unknown theta support {self.theta_support!r}; expected one of {THETA_SUPPORTS}")
        object.__setattr__(self, "spike_values", spikes)


def _rng(seed, tag):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), tag]))


def spiked_directions(spec):
    """Seeded orthonormal spike directions (p x r)."""
    if spec.r_spikes == 0:
        return np.zeros((spec.p, 0))
    V, R = np.linalg.qr(_rng(spec.seed, 10).standard_normal((spec.p, spec.r_spikes)))
    return V * np.sign(np.diag(R))


def spiked_covariance(spec):
    V = spiked_directions(spec)
    spikes = np.asarray(spec.spike_values)
    return spec.noise_floor * np.eye(spec.p) + (V * (spikes - spec.noise_floor)) @ V.T


def planted_theta(spec):
    rng = _rng(spec.seed, 11)
    if spec.theta_support == "spikes" and spec.r_spikes > 0:
        v = spiked_directions(spec) @ rng.standard_normal(spec.r_spikes)
    else:
        v = rng.standard_normal(spec.p)
    return spec.theta_norm * v / np.linalg.norm(v)


def generate_spiked(spec):
    """Draw ``x_i ~ N(0, Sigma)`` through the symmetric square root of Sigma, plus labels."""
    V = spiked_directions(spec)
    spikes = np.asarray(spec.spike_values)
    Z = _rng(spec.seed, 12).standard_normal((spec.n, spec.p))
    root_floor = np.sqrt(spec.noise_floor)
    X = root_floor * Z + ((Z @ V) * (np.sqrt(spikes) - root_floor)) @ V.T
    z = X @ planted_theta(spec)
    label_rng = _rng(spec.seed, 13)
    if spec.label_model == "logistic-planted":
        y = (label_rng.random(spec.n) < 1.0 / (1.0 + np.exp(-z))).astype(float)
    elif spec.label_model == "linear-gaussian":
        y = z + spec.noise_sd * label_rng.standard_normal(spec.n)
    else:
        y = np.where(z >= 0, 1.0, -1.0)
    return Dataset(X, y)


def _map_binary(y, binary):
    labels = np.unique(y)
    if binary is True and labels.size > 2:
        raise InvalidInputError(f"expected at most two label values, found {labels.size}")
    if binary is False or labels.size != 2:
        return y
    # two distinct values: smaller -> -1, larger -> +1
    return np.where(y == labels[0], -1.0, 1.0)


def load_csv(path, label_column=-1, binary="auto"):
    """Numeric CSV without quoting; ``label_column`` holds the responses.

    With ``binary="auto"`` a label column with exactly two distinct values is
    mapped to {-1, +1} (smaller value to -1); ``binary=False`` keeps raw values.
    """
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(f"non-numeric field ({exc})", line=lineno) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ShapeError(f"line {lineno}: expected {width} fields, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ShapeError(f"{path}: no data rows")
    if width < 2:
        raise ShapeError("need at least one feature column and one label column")
    A = np.array(rows)
    col = label_column % width
    y = A[:, col]
    X = np.delete(A, col, axis=1)
    return Dataset(X, _map_binary(y, binary))


def write_csv(path, ds):
    """Features followed by the label, written with round-trip precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for x, y in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def load_libsvm(path, p=None, binary="auto"):
    """``label idx:val ...`` lines with 1-based indices, densified to n x p."""
    labels, entries = [], []
    max_idx = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
                row = []
                for tok in parts[1:]:
                    k, v = tok.split(":", 1)
                    k = int(k)
                    if k < 1:
                        raise ValueError(f"feature index {k} < 1")
                    row.append((k, float(v)))
                    max_idx = max(max_idx, k)
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            entries.append(row)
    if not labels:
        raise ShapeError(f"{path}: no data rows")
    if p is None:
        p = max_idx
    elif max_idx > p:
        raise ShapeError(f"feature index {max_idx} exceeds p={p}")
    if p < 1:
        raise ShapeError("no features present")
    X = np.zeros((len(labels), p))
    for i, row in enumerate(entries):
        for k, v in row:
            X[i, k - 1] = v
    return Dataset(X, _map_binary(np.array(labels), binary))


def write_libsvm(path, ds):
    with open(path, "w") as fh:
        for x, y in zip(ds.X, ds.y):
            feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(x) if v != 0.0)
            fh.write(f"{float(y)!r} {feats}".rstrip() + "\n")


def standardize(ds):
    """Center and scale columns to unit population variance (ddof=0).

    Constant columns are left untouched, so an intercept column survives.
    """
    X = ds.X
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    const = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
    Z = (X - mu) / np.where(const, 1.0, sd)
    Z[:, const] = X[:, const]
    return Dataset(Z, ds.y)


def dataset_hash(ds):
    h = hashlib.sha256()
    h.update(np.asarray(ds.X.shape, dtype=np.int64).tobytes())
    h.update(ds.X.tobytes())
    h.update(ds.y.tobytes())
    return h.hexdigest()
