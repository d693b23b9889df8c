"""Small dense linear algebra: thin SVD, Schatten quantities, spectral-ball projection.

Matrices are plain 2-D ``numpy`` float arrays and vectors 1-D arrays. Every
public function validates its input with :func:`as_matrix` / :func:`as_vector`
so that NaN or Inf never reaches LAPACK.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError

#: Singular values below ``RANK_RTOL * sigma_max`` count as zero.
RANK_RTOL = 1e-10


def as_matrix(M, name="M") -> np.ndarray:
    """Return ``M`` as a finite 2-D float array, raising on anything else."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def as_vector(v, name="v") -> np.ndarray:
    """Return ``v`` as a finite 1-D float array of length at least one."""
    x = np.asarray(v, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1 or x.size < 1:
        raise InvalidInputError(f"{name} must be a non-empty vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return x


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``M = U @ diag(sigma) @ V.T``.

    ``sigma`` is nonincreasing; ``rank`` counts the values above
    ``rank_tol * sigma[0]``.
    """

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    rank_tol: float = RANK_RTOL

    @property
    def rank(self) -> int:
        if self.sigma.size == 0 or self.sigma[0] == 0.0:
            return 0
        return int(np.count_nonzero(self.sigma > self.rank_tol * self.sigma[0]))

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T

    def truncated(self) -> "SvdResult":
        """Drop the numerically zero singular triplets."""
        r = self.rank
        return SvdResult(self.U[:, :r], self.sigma[:r], self.V[:, :r], self.rank_tol)


def svd(M) -> SvdResult:
    """Deterministic thin SVD.

    Each column of ``V`` is flipped so that its first entry of magnitude
    above 1e-12 is positive (``U`` is flipped with it).
    """
    A = as_matrix(M)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    V = Vt.T.copy()
    U = U.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
            U[:, j] = -U[:, j]
    return SvdResult(U, s, V)


def singular_values(M) -> np.ndarray:
    # Same LAPACK path as svd() so both report bit-identical values.
    return np.linalg.svd(as_matrix(M), full_matrices=False)[1]


def _significant(s: np.ndarray) -> np.ndarray:
    if s.size == 0 or s[0] == 0.0:
        return s[:0]
    return s[s > RANK_RTOL * s[0]]


def schatten_qnorm_pow(M, q: float) -> float:
    """``sum_i sigma_i(M) ** q`` over the numerically nonzero singular values.

    This is the Schatten-``q`` quasi-norm raised to the ``q``-th power; for
    ``q = 1`` it is the nuclear norm.
    """
    if not (0.0 < q <= 1.0) or not np.isfinite(q):
        raise InvalidParameterError(f"q must lie in (0, 1], got {q}")
    s = _significant(singular_values(M))
    return float(np.sum(s**q))


def nuclear_norm(M) -> float:
    return schatten_qnorm_pow(M, 1.0)


def spectral_norm(M) -> float:
    return float(singular_values(M)[0])


def frobenius_norm(M) -> float:
    return float(np.linalg.norm(as_matrix(M), "fro"))


def project_spectral_ball(M) -> np.ndarray:
    """Euclidean projection onto ``{Q : ||Q||_2 <= 1}`` by clipping singular values."""
    A = as_matrix(M)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[0] <= 1.0:
        return A.copy()
    return (U * np.minimum(s, 1.0)) @ Vt
