"""Subspace arithmetic and geometric-control algorithms.

Subspaces are always stored with orthonormal bases; equality is decided
through principal angles, never through basis comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import DescriptorSystem
from .errors import DimensionError, GeometryError
from .numeric import DEFAULT_POLICY, NumericPolicy, empty_basis, null_basis, orth_basis

__all__ = [
    "Subspace",
    "image",
    "kernel",
    "subspace_sum",
    "intersect",
    "preimage",
    "orth_complement",
    "subspaces_equal",
    "principal_angle",
    "conditioned_invariant",
    "output_injection_L",
    "controlled_invariant",
    "output_nulling_invariant",
    "DeflatingTransforms",
    "deflating_transforms",
]


@dataclass(frozen=True)
class Subspace:
    """Subspace of R^n given by an orthonormal basis matrix (n x d)."""

    basis: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if B.shape[1] > B.shape[0]:
            raise DimensionError("basis cannot have more columns than rows")
        if B.shape[1]:
            gram = B.T @ B
            if np.max(np.abs(gram - np.eye(B.shape[1]))) > 1e-10:
                raise DimensionError("basis columns must be orthonormal")
        object.__setattr__(self, "basis", B)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def contains(self, vectors, tol=1e-8) -> bool:
        V = np.atleast_2d(np.asarray(vectors, dtype=float))
        if V.shape[0] != self.ambient_dim:
            V = V.T
        resid = V - self.projector() @ V
        scale = 1.0 + np.linalg.norm(V)
        return float(np.linalg.norm(resid)) <= tol * scale

    @staticmethod
    def zero(n: int) -> "Subspace":
        return Subspace(empty_basis(n))

    @staticmethod
    def full(n: int) -> "Subspace":
        return Subspace(np.eye(n))

    @staticmethod
    def from_span(M, policy: NumericPolicy = DEFAULT_POLICY) -> "Subspace":
        return Subspace(orth_basis(M, policy))


def image(M, policy: NumericPolicy = DEFAULT_POLICY) -> Subspace:
    return Subspace(orth_basis(M, policy))


def kernel(M, policy: NumericPolicy = DEFAULT_POLICY) -> Subspace:
    return Subspace(null_basis(M, policy))


def subspace_sum(S1: Subspace, S2: Subspace, policy: NumericPolicy = DEFAULT_POLICY) -> Subspace:
    if S1.ambient_dim != S2.ambient_dim:
        raise DimensionError("ambient dimensions differ")
    return Subspace(orth_basis(np.hstack([S1.basis, S2.basis]), policy))


def orth_complement(S: Subspace, policy: NumericPolicy = DEFAULT_POLICY) -> Subspace:
    return Subspace(null_basis(S.basis.T, policy))


def intersect(S1: Subspace, S2: Subspace, policy: NumericPolicy = DEFAULT_POLICY) -> Subspace:
    """Intersection via the complement of the sum of complements."""
    if S1.ambient_dim != S2.ambient_dim:
        raise DimensionError("ambient dimensions differ")
    c = subspace_sum(orth_complement(S1, policy), orth_complement(S2, policy), policy)
    return orth_complement(c, policy)


def preimage(M, S: Subspace, policy: NumericPolicy = DEFAULT_POLICY) -> Subspace:
    """{v : M v in S} computed as Ker((I - P_S) M).

    The rank decision is anchored to ||M||: when the residual is zero up
    to roundoff, the preimage is the whole domain.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != S.ambient_dim:
        raise DimensionError("map codomain does not match subspace ambient space")
    if S.dim == S.ambient_dim:
        return Subspace.full(M.shape[1])
    if S.dim == 0:
        return kernel(M, policy)
    resid = M - S.basis @ (S.basis.T @ M)
    scale = float(np.linalg.norm(M, 2)) if M.size else 0.0
    return Subspace(null_basis(resid, policy, scale=scale))


def principal_angle(S1: Subspace, S2: Subspace) -> float:
    """Largest principal angle between two subspaces of equal dimension.

    Returns pi/2 when dimensions differ (the subspaces cannot be equal).
    """
    if S1.dim != S2.dim:
        return float(np.pi / 2)
    if S1.dim == 0:
        return 0.0
    ang = scipy.linalg.subspace_angles(S1.basis, S2.basis)
    return float(np.max(ang)) if ang.size else 0.0


def subspaces_equal(S1: Subspace, S2: Subspace, policy: NumericPolicy = DEFAULT_POLICY) -> bool:
    return S1.dim == S2.dim and principal_angle(S1, S2) <= policy.angle_tol


# ---------------------------------------------------------------------------
# invariant subspaces
# ---------------------------------------------------------------------------

def _cross_product_with_full(S: Subspace, m: int) -> Subspace:
    """S x R^m inside R^{n+m} (block-diagonal orthonormal basis)."""
    n = S.ambient_dim
    top = np.vstack([S.basis, np.zeros((m, S.dim))])
    right = np.vstack([np.zeros((n, m)), np.eye(m)])
    return Subspace(np.hstack([top, right]))


def conditioned_invariant(sys: DescriptorSystem, policy: NumericPolicy = DEFAULT_POLICY) -> Subspace:
    """Smallest subspace S with S = [A B]((E^{-1}S x R^m) ∩ Ker[C D]).

    E^{-1}S is the set preimage {v : E v in S}; the recursion starts from
    the zero subspace, has nondecreasing dimension and stops at the first
    fixed point (at most n+1 steps).
    """
    n, m = sys.n, sys.m
    AB = np.hstack([sys.A, sys.B])
    CD = np.hstack([sys.C, sys.D])
    ab_scale = float(np.linalg.norm(AB, 2)) if AB.size else 0.0
    ker_cd = kernel(CD, policy)
    S = Subspace.zero(n)
    for _ in range(n + 1):
        pre = preimage(sys.E, S, policy)
        lifted = intersect(_cross_product_with_full(pre, m), ker_cd, policy)
        S_next = Subspace(orth_basis(AB @ lifted.basis, policy, scale=ab_scale))
        if subspaces_equal(S_next, S, policy):
            return S_next
        if S_next.dim < S.dim:
            raise GeometryError("conditioned-invariant recursion lost rank")
        S = S_next
    raise GeometryError("conditioned-invariant recursion failed to settle in n+1 steps")


def output_injection_L(sys: DescriptorSystem, S: Subspace,
                       policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Minimum-norm L with [A+LC, B+LD](E^{-1}S x R^m) ⊆ S.

    The containment is linear in L; we solve the stacked least-squares
    problem and verify the residual before returning.
    """
    n, m, p = sys.n, sys.m, sys.p
    V = preimage(sys.E, S, policy).basis          # n x q
    Pperp = np.eye(n) - S.projector()
    # constraints: Pperp (A V + L C V) = 0 and Pperp (B + L D) = 0
    RHS = -Pperp @ np.hstack([sys.A @ V, sys.B])  # n x (q + m)
    CVD = np.hstack([sys.C @ V, sys.D])           # p x (q + m)
    if p == 0 or CVD.shape[1] == 0:
        L = np.zeros((n, p))
    else:
        # vec form: (CVD^T ⊗ Pperp) vec(L) = vec(RHS)
        Mk = np.kron(CVD.T, Pperp)
        sol, *_ = np.linalg.lstsq(Mk, RHS.flatten("F"), rcond=None)
        L = sol.reshape((n, p), order="F")
    resid = np.linalg.norm(Pperp @ ((sys.A + L @ sys.C) @ V)) + \
        np.linalg.norm(Pperp @ (sys.B + L @ sys.D))
    if resid > 1e-8 * (1.0 + np.linalg.norm(sys.A) + np.linalg.norm(L)):
        raise GeometryError(
            f"no output injection satisfies the containment (residual {resid:.3e}); "
            "is S the conditioned invariant subspace of this system?"
        )
    return L


def controlled_invariant(A, Bmap, Cker, policy: NumericPolicy = DEFAULT_POLICY) -> Subspace:
    """Largest V ⊆ Ker(Cker) with A V ⊆ V + Im(Bmap).

    Standard decreasing recursion V_{k+1} = V_k ∩ A^{-1}(V_k + Im Bmap),
    starting from Ker(Cker); stops at the first fixed point.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionError("A must be square")
    Bmap = np.asarray(Bmap, dtype=float).reshape(n, -1)
    Cker = np.atleast_2d(np.asarray(Cker, dtype=float))
    imB = image(Bmap, policy)
    V = kernel(Cker, policy)
    for _ in range(n + 1):
        target = subspace_sum(V, imB, policy)
        V_next = intersect(V, preimage(A, target, policy), policy)
        if subspaces_equal(V_next, V, policy):
            return V_next
        V = V_next
    raise GeometryError("controlled-invariant recursion failed to settle")


def output_nulling_invariant(A, B, C, D, policy: NumericPolicy = DEFAULT_POLICY) -> Subspace:
    """Largest V with [A; C] V ⊆ (V x {0}) + Im[B; D].

    Generalisation of `controlled_invariant` to systems with feedthrough:
    the states from which the output can be held at zero by suitable
    inputs (the weakly unobservable subspace).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    p = C.shape[0]
    D = np.asarray(D, dtype=float).reshape(p, -1)
    if D.shape[1] != B.shape[1]:
        raise DimensionError("B and D must have the same number of columns")
    stacked_map = np.vstack([A, C])
    imBD = image(np.vstack([B, D]), policy)
    V = Subspace.full(n)
    for _ in range(n + 1):
        # target = (V x {0}) + Im [B; D] inside R^{n+p}
        lift = np.vstack([V.basis, np.zeros((p, V.dim))])
        target = Subspace(orth_basis(np.hstack([lift, imBD.basis]), policy))
        V_next = intersect(V, preimage(stacked_map, target, policy), policy)
        if subspaces_equal(V_next, V, policy):
            return V_next
        V = V_next
    raise GeometryError("output-nulling recursion failed to settle")


# ---------------------------------------------------------------------------
# deflating coordinate transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeflatingTransforms:
    """Orthogonal (P, Q) block-triangularising the injected pencil.

    P = [Basis(S), Basis(S^perp)], Q = [Basis(E^{-1}S), Basis((E^{-1}S)^perp)];
    row split at dim(S), column split at dim(E^{-1}S).
    """

    P: np.ndarray
    Q: np.ndarray
    row_split: int
    col_split: int


def deflating_transforms(sys_safe: DescriptorSystem, S: Subspace, L: np.ndarray,
                         policy: NumericPolicy = DEFAULT_POLICY):
    """Build (P, Q) and the partitioned block system for the safe system.

    `sys_safe` is the feedthrough-free system (D = 0); its A matrix already
    includes any algebraic loop removal.  Returns (transforms, blocks)
    where blocks is a dict with keys E11, E12, E22, A11, A12, A22, B1,
    C1, C2 and the injected matrix Ainj = A + L C used for the split.
    Raises GeometryError when a block that must vanish does not.
    """
    n = sys_safe.n
    pre = preimage(sys_safe.E, S, policy)
    P = np.hstack([S.basis, orth_complement(S, policy).basis])
    Q = np.hstack([pre.basis, orth_complement(pre, policy).basis])
    d_row, d_col = S.dim, pre.dim
    Ainj = sys_safe.A + L @ sys_safe.C
    Et = P.T @ sys_safe.E @ Q
    At = P.T @ Ainj @ Q
    Bt = P.T @ sys_safe.B
    Ct = sys_safe.C @ Q
    zero_blocks = {
        "E21": Et[d_row:, :d_col],
        "A21": At[d_row:, :d_col],
        "B2": Bt[d_row:, :],
    }
    scale = 1.0 + max(np.linalg.norm(sys_safe.E), np.linalg.norm(Ainj), np.linalg.norm(sys_safe.B))
    for name, blk in zero_blocks.items():
        mag = np.max(np.abs(blk)) if blk.size else 0.0
        if mag > policy.zero_block_tol * scale:
            raise GeometryError(
                f"deflating transform produced a nonzero {name} block (max abs {mag:.3e})"
            )
    transforms = DeflatingTransforms(P, Q, d_row, d_col)
    blocks = {
        "E11": Et[:d_row, :d_col], "E12": Et[:d_row, d_col:], "E22": Et[d_row:, d_col:],
        "A11": At[:d_row, :d_col], "A12": At[:d_row, d_col:], "A22": At[d_row:, d_col:],
        "B1": Bt[:d_row, :], "C1": Ct[:, :d_col], "C2": Ct[:, d_col:],
        "Ainj": Ainj,
    }
    return transforms, blocks
