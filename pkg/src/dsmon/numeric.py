"""Numeric policy and small linear-algebra helpers used everywhere.

All rank/zero decisions in the toolkit go through a single
:class:`NumericPolicy` record so that tolerances can be tightened or
relaxed consistently for a whole computation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "NumericPolicy",
    "DEFAULT_POLICY",
    "orth_basis",
    "null_basis",
    "left_null_basis",
    "matrix_rank",
    "empty_basis",
    "policy_pinv",
]


@dataclass(frozen=True)
class NumericPolicy:
    """Tolerances threaded through every numerical decision.

    rank_rtol            relative SVD cutoff; None means max(dim)*eps
    orth_tol             allowed deviation of Q^T Q from identity
    zero_block_tol       max-abs bound certified for "zero" blocks
    angle_tol            largest principal angle for subspace equality
    residual_rtol        relative residual threshold for verdicts
    block_diag_tol       allowed off-block magnitude for partitions
    infinite_rtol        |beta| cutoff separating finite/infinite eigenvalues
    hurwitz_margin       eigenvalues must satisfy Re < -margin
    freq_points          log-grid points per sign for frequency sweeps
    freq_max             sweep bound in rad/s
    savgol_window        window length for smoothing differentiation
    savgol_order         polynomial order for smoothing differentiation
    identify_budget      cap on enumerated candidate attack sets
    seed                 seed for probabilistic (random-point) tests
    """

    rank_rtol: float | None = None
    orth_tol: float = 1e-10
    zero_block_tol: float = 1e-8
    angle_tol: float = 1e-7
    residual_rtol: float = 1e-6
    block_diag_tol: float = 1e-12
    infinite_rtol: float = 1e-9
    hurwitz_margin: float = 1e-9
    freq_points: int = 2001
    freq_max: float = 1e4
    savgol_window: int = 7
    savgol_order: int = 3
    identify_budget: int = 100_000
    seed: int = 12345

    def with_(self, **kwargs) -> "NumericPolicy":
        return replace(self, **kwargs)

    def svd_cutoff(self, svals: np.ndarray, shape: tuple[int, int],
                   scale: float | None = None) -> float:
        """SVD rank cutoff: rtol * max(sigma_max, scale).

        `scale` anchors the decision to the magnitude of the data the
        matrix was computed from, so residual matrices that should be
        exactly zero do not report spurious rank.
        """
        if svals.size == 0:
            return 0.0
        rtol = self.rank_rtol
        if rtol is None:
            # factor 64 gives headroom for chains of SVD-based operations
            rtol = 64 * max(shape) * np.finfo(float).eps
        top = svals[0] if scale is None else max(svals[0], scale)
        return rtol * top


DEFAULT_POLICY = NumericPolicy()


def empty_basis(n: int) -> np.ndarray:
    """Basis of the zero subspace of R^n."""
    return np.zeros((n, 0))


def _svd(M: np.ndarray):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return None
    return np.linalg.svd(M, full_matrices=True)


def matrix_rank(M: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY) -> int:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    svals = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(svals > policy.svd_cutoff(svals, M.shape)))


def orth_basis(M: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY,
               scale: float | None = None) -> np.ndarray:
    """Orthonormal basis of the column space of M (n x r, r = rank)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] == 0 or M.shape[0] == 0 or not np.any(M):
        return empty_basis(M.shape[0])
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = int(np.sum(s > policy.svd_cutoff(s, M.shape, scale)))
    return U[:, :r]


def null_basis(M: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY,
               scale: float | None = None) -> np.ndarray:
    """Orthonormal basis of the (right) kernel of M (cols x k)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    m, n = M.shape
    if n == 0:
        return np.zeros((0, 0))
    if m == 0 or not np.any(M):
        return np.eye(n)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    r = int(np.sum(s > policy.svd_cutoff(s, M.shape, scale)))
    return Vt[r:].T


def left_null_basis(M: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY,
                    scale: float | None = None) -> np.ndarray:
    """Rows spanning {v : v^T M = 0}; returned as a (k x rows) matrix."""
    return null_basis(np.atleast_2d(np.asarray(M, dtype=float)).T, policy, scale).T


def policy_pinv(M: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY,
                scale: float | None = None) -> np.ndarray:
    """Pseudoinverse with the policy's rank cutoff.

    numpy's default rcond can keep roundoff-level singular values, which
    turns nearby projectors like M M^+ into non-idempotent maps.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0 or not np.any(M):
        return np.zeros((M.shape[1], M.shape[0]))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    r = int(np.sum(s > policy.svd_cutoff(s, M.shape, scale)))
    if r == 0:
        return np.zeros((M.shape[1], M.shape[0]))
    return (Vt[:r].T / s[:r]) @ U[:, :r].T
