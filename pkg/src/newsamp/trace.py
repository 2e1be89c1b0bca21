"""Per-iteration optimizer records and their JSON-lines serialization."""

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

TRACE_KEYS = ("t", "f", "grad_norm", "step", "lam_r1", "lam_p", "dist", "elapsed_s")
TERMINATION_REASONS = ("eps-reached", "max-iters", "error")

_NUM_OR_NULL = {"type": ["number", "null"]}

# JSON Schema for one line of a trace file. Non-finite floats are written as null.
TRACE_SCHEMA = {
    "type": "object",
    "properties": {
        "t": {"type": "integer", "minimum": 0},
        "f": _NUM_OR_NULL,
        "grad_norm": _NUM_OR_NULL,
        "step": _NUM_OR_NULL,
        "lam_r1": _NUM_OR_NULL,
        "lam_p": _NUM_OR_NULL,
        "dist": _NUM_OR_NULL,
        "elapsed_s": {"type": "number", "minimum": 0},
    },
    "required": list(TRACE_KEYS),
    "additionalProperties": False,
}


@dataclass
class TraceRecord:
    """State at iterate ``t`` plus the step quantities used to leave it.

    ``step``, ``lam_r1`` and ``lam_p`` describe the update from ``theta^t`` to
    ``theta^{t+1}`` and are None on the last record or when not applicable.
    """

    t: int
    f: float
    grad_norm: float
    step: Optional[float] = None
    lam_r1: Optional[float] = None
    lam_p: Optional[float] = None
    dist: Optional[float] = None
    elapsed_s: float = 0.0
    theta: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    sample_size: Optional[int] = field(default=None, compare=False)

    def to_dict(self):
        return {k: _jsonable(getattr(self, k)) for k in TRACE_KEYS}


def _jsonable(v):
    if v is None:
        return None
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class Trace:
    method: str
    records: List[TraceRecord] = field(default_factory=list)
    terminated_reason: Optional[str] = None
    error: Optional[str] = None

    def __len__(self):
        return len(self.records)

    @property
    def iterations(self):
        """Number of updates performed (single-sample steps for stochastic methods)."""
        return self.records[-1].t if self.records else 0

    @property
    def final(self):
        return self.records[-1]

    @property
    def theta(self):
        return self.records[-1].theta

    def dists(self):
        return np.array([np.nan if r.dist is None else r.dist for r in self.records])

    def column(self, key):
        return np.array([np.nan if getattr(r, key) is None else getattr(r, key) for r in self.records], dtype=float)

    def iterations_to(self, tol):
        """First ``t`` with ``||theta^t - theta*|| <= tol``, or None."""
        for r in self.records:
            if r.dist is not None and r.dist <= tol:
                return r.t
        return None

    def to_jsonl(self, fh):
        for r in self.records:
            fh.write(json.dumps(r.to_dict()) + "\n")

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            self.to_jsonl(fh)

    @classmethod
    def read_jsonl(cls, path, method=""):
        records = []
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    records.append(TraceRecord(**json.loads(line)))
        return cls(method=method, records=records)
