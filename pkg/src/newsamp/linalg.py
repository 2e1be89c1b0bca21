"""Dense symmetric eigendecomposition and the thresholded inverse-Hessian scaling.

The scaling matrix keeps the top ``r`` eigenpairs of a (sub-sampled) Hessian
and replaces every eigenvalue below them by the ``(r+1)``-th one before
inverting, so it is stored as a scaled identity plus a rank-``r`` correction.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError, InvalidInputError, InvalidRankError

SYMMETRY_RTOL = 1e-8


def eig_tol(lambda_1):
    """Eigenvalues at or below this are treated as zero."""
    return 1e-10 * max(1.0, float(lambda_1))


@dataclass(frozen=True)
class TruncatedEigen:
    """Leading ``k`` eigenpairs, values in non-increasing order."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def k(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.vectors.shape[0]


def _as_symmetric(H):
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] < 1:
        raise InvalidInputError(f"expected a non-empty square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise InvalidInputError("matrix has non-finite entries")
    asym = np.max(np.abs(H - H.T))
    if asym > 0 and asym > SYMMETRY_RTOL * np.linalg.norm(H, 2):
        raise InvalidInputError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    return H


def _fix_signs(vectors):
    # first coordinate that is not numerically zero is made positive
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            vectors[:, j] = -col
    return vectors


def full_eigen(H):
    """All eigenpairs of a symmetric matrix, largest first."""
    H = _as_symmetric(H)
    w, V = np.linalg.eigh(H)
    w = w[::-1].copy()
    V = _fix_signs(V[:, ::-1].copy())
    return TruncatedEigen(values=w, vectors=V)


def truncated_eigen(H, k):
    """The ``k`` algebraically largest eigenpairs of symmetric ``H``.

    Computed from a full dense decomposition and then truncated.
    """
    H = _as_symmetric(H)
    p = H.shape[0]
    if not 1 <= int(k) <= p:
        raise InvalidRankError(f"rank k={k} must satisfy 1 <= k <= p={p}")
    full = full_eigen(H)
    return TruncatedEigen(values=full.values[:k].copy(), vectors=full.vectors[:, :k].copy())


@dataclass(frozen=True)
class ScalingMatrix:
    """``Q = I/lambda_r1 + U_r (diag(1/Lambda_r) - I/lambda_r1) U_r^T``."""

    lambda_r1: float
    U_r: np.ndarray
    Lambda_r: np.ndarray

    @property
    def p(self):
        return self.U_r.shape[0]

    @property
    def r(self):
        return self.U_r.shape[1]

    @property
    def norm(self):
        """Spectral norm, equal to ``1/lambda_r1``."""
        return 1.0 / self.lambda_r1

    def apply(self, v):
        return apply_scaling(self, v)

    def dense(self):
        """Materialize the p x p matrix (tests and diagnostics only)."""
        return self.apply(np.eye(self.p))

    def inverse_apply(self, v):
        """Multiply by ``Q^{-1}``, the thresholded Hessian approximation."""
        v = np.asarray(v, dtype=float)
        c = self.U_r.T @ v
        d = (self.Lambda_r - self.lambda_r1)
        if v.ndim == 2:
            d = d[:, None]
        return self.lambda_r1 * v + self.U_r @ (d * c)


def scaling_from_eigen(eig, r):
    """Build the scaling matrix from (at least) the top ``r+1`` eigenpairs."""
    r = int(r)
    if r < 0 or r + 1 > eig.k:
        raise InvalidRankError(f"need r+1 <= {eig.k} eigenpairs, got r={r}")
    lam1 = eig.values[0]
    lam_r1 = float(eig.values[r])
    if lam_r1 <= eig_tol(lam1):
        raise DegenerateSpectrumError(
            f"lambda_(r+1) = {lam_r1:.3e} is below tolerance {eig_tol(lam1):.3e}"
        )
    return ScalingMatrix(
        lambda_r1=lam_r1,
        U_r=eig.vectors[:, :r].copy(),
        Lambda_r=eig.values[:r].copy(),
    )


def build_scaling_matrix(H_S, r):
    p = np.shape(H_S)[0]
    if not 1 <= int(r) <= p - 1:
        raise InvalidRankError(f"rank threshold r={r} requires 1 <= r and r+1 <= p={p}")
    return scaling_from_eigen(truncated_eigen(H_S, int(r) + 1), r)


def apply_scaling(Q, v):
    """``Q @ v`` in O(p r) without forming Q; ``v`` may be a vector or a p x m block."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != Q.p or v.ndim > 2:
        raise InvalidInputError(f"vector of length {v.shape[0]} does not match p={Q.p}")
    inv_r1 = 1.0 / Q.lambda_r1
    c = Q.U_r.T @ v
    d = 1.0 / Q.Lambda_r - inv_r1
    if v.ndim == 2:
        d = d[:, None]
    return inv_r1 * v + Q.U_r @ (d * c)


def spectral_norm(A):
    """Largest absolute eigenvalue of a symmetric matrix."""
    A = _as_symmetric(A)
    w = np.linalg.eigvalsh(A)
    return float(np.max(np.abs(w)))
