"""Centralized, decentralized and waveform-relaxation attack detection.

A detection filter is a Luenberger-style residual generator

    E w'(t) = (A + G C) w(t) - G y(t),      r(t) = C w(t) - y(t),

with (E, A + G C) regular and Hurwitz.  The distributed variant runs the
same filter as a Gauss-Jacobi waveform relaxation over a partition of the
state, exchanging whole sampled trajectories between rounds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import (
    DescriptorSystem,
    FohPropagator,
    Trajectory,
    as_signal,
    integrate_descriptor,
    pencil_decomposition,
    check_regular,
)
from .errors import DesignInfeasibleError, DimensionError, RegularityError
from .numeric import DEFAULT_POLICY, NumericPolicy, matrix_rank

__all__ = [
    "Partition",
    "DetectionFilter",
    "DetectionVerdict",
    "design_centralized",
    "design_decentralized",
    "act_gain",
    "run_detector",
    "detection_verdict",
    "CertificateReport",
    "certify_small_gain",
    "waveform_sigma",
    "BlockDominanceReport",
    "certify_block_dominance",
    "WaveformConfig",
    "WaveformRun",
    "run_waveform_relaxation",
    "decentralized_reference",
    "pencil_is_hurwitz",
]


# ---------------------------------------------------------------------------
# spectra and injection design
# ---------------------------------------------------------------------------

def pencil_finite_eigs(E, M, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    alpha, beta = scipy.linalg.eig(M, E, right=False, homogeneous_eigvals=True)
    alpha = np.asarray(alpha).ravel()
    beta = np.asarray(beta).ravel()
    fin = np.abs(beta) > policy.infinite_rtol * (np.abs(alpha) + np.abs(beta) + 1e-300)
    return alpha[fin] / beta[fin]


def pencil_is_hurwitz(E, M, policy: NumericPolicy = DEFAULT_POLICY):
    """(bool, finite eigenvalues) for the pencil (E, M)."""
    eigs = pencil_finite_eigs(E, M, policy)
    ok = bool(np.all(eigs.real < -policy.hurwitz_margin)) if eigs.size else True
    return ok, eigs


def _detectability_gap(E, A, C, policy) -> list:
    """Finite eigenvalues with Re >= 0 at which [sE - A; C] loses column rank."""
    n = E.shape[0]
    offenders = []
    for lam in pencil_finite_eigs(E, A, policy):
        if lam.real < -policy.hurwitz_margin:
            continue
        M = np.vstack([lam * E - A, C.astype(complex)])
        if matrix_rank(np.vstack([M.real, M.imag]), policy) < n:
            offenders.append(complex(lam))
    return offenders


def _admissible(E, M, policy) -> bool:
    if not check_regular(DescriptorSystem(E, M, np.zeros((E.shape[0], 0)),
                                          np.zeros((0, E.shape[0])), np.zeros((0, 0))), policy):
        return False
    ok, _ = pencil_is_hurwitz(E, M, policy)
    if not ok:
        return False
    try:
        dec = pencil_decomposition((E, M), policy)
    except RegularityError:
        return False
    return dec.index <= 1


def _default_targets(k: int, eigs: np.ndarray) -> np.ndarray:
    # gentle spread: aggressive injections shrink the residual gain from
    # unexplained inputs, which hurts verdict margins
    base = 1.0
    if eigs.size:
        base = max(1.0, 0.5 * float(np.max(np.abs(eigs.real))))
    return -base * (0.3 + 0.3 * np.arange(k))


def _place_injection(E, A, C, targets, policy) -> np.ndarray:
    """Output injection placing the finite spectrum of (E, A + GC).

    For singular E the injection acts on the slow rows of the ordered QZ
    form, which preserves the fast block (and hence regularity and index).
    Row-rank-deficient output maps are compressed first, so projected
    measurements (as used by the identification filters) are handled.
    """
    from scipy.signal import place_poles

    from .numeric import orth_basis

    n = E.shape[0]
    p = C.shape[0]
    dec = pencil_decomposition((E, A), policy)
    k = dec.n_finite
    targets = np.asarray(targets, dtype=complex)
    if targets.size != k:
        raise DesignInfeasibleError(
            f"need exactly {k} target eigenvalues (finite spectrum size), got {targets.size}"
        )
    if targets.size and np.max(np.abs(targets.imag)) < 1e-12:
        targets = targets.real
    if k == 0:
        return np.zeros((n, p))
    # compress C = Theta @ Ceff with Ceff of full row rank
    Rb = orth_basis(C.T, policy)        # n x r, basis of the row space
    Ceff = Rb.T                          # r x n
    Theta = C @ Rb                       # p x r
    if Ceff.shape[0] == 0:
        raise DesignInfeasibleError("output map is zero; cannot place the spectrum")
    S, T, Q, Z = dec.S, dec.T, dec.Q, dec.Z
    E11, A11 = T[:k, :k], S[:k, :k]
    C1z = Ceff @ Z[:, :k]
    As = np.linalg.solve(E11, A11)
    try:
        res = place_poles(As.T, C1z.T, targets)
    except ValueError as exc:
        raise DesignInfeasibleError(f"pole placement failed: {exc}") from exc
    G1 = -E11 @ res.gain_matrix.T
    G_eff = Q @ np.vstack([G1, np.zeros((n - k, Ceff.shape[0]))])
    return G_eff @ np.linalg.pinv(Theta)


def design_injection(E, A, C, policy: NumericPolicy = DEFAULT_POLICY,
                     target_spectrum=None) -> np.ndarray:
    """Gain G making (E, A + GC) regular, Hurwitz and of index <= 1.

    Strategy: explicit targets use pole placement directly; otherwise try
    G = 0, the scaled observability-driven family G = gamma * A C^T, the
    placement fallback, and scaled -C^T.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    offenders = _detectability_gap(E, A, C, policy)
    if offenders:
        raise DesignInfeasibleError(
            "triple (E, A, C) is not detectable; offending eigenvalues: "
            + ", ".join(f"{z:.6g}" for z in offenders)
        )
    if target_spectrum is not None:
        G = _place_injection(E, A, C, target_spectrum, policy)
        if not _admissible(E, A + G @ C, policy):
            raise DesignInfeasibleError("placed injection failed the Hurwitz/regularity check")
        return G

    candidates = [np.zeros((A.shape[0], C.shape[0]))]
    ACt = A @ C.T
    for gamma in (1.0, 0.5, 2.0, 0.1, 5.0, 0.05, 10.0, 20.0, 50.0):
        candidates.append(gamma * ACt)
    for G in candidates:
        if _admissible(E, A + G @ C, policy):
            return G
    # fallback: dual pole placement on the slow subsystem
    eigs = pencil_finite_eigs(E, A, policy)
    try:
        G = _place_injection(E, A, C, _default_targets(len(eigs), eigs), policy)
        if _admissible(E, A + G @ C, policy):
            return G
    except DesignInfeasibleError:
        pass
    for gamma in (1.0, 5.0, 25.0):
        G = -gamma * C.T
        if _admissible(E, A + G @ C, policy):
            return G
    raise DesignInfeasibleError("no admissible output injection found")


# ---------------------------------------------------------------------------
# partitions
# ---------------------------------------------------------------------------

@dataclass
class Partition:
    """Disjoint regions of {1..n} with the induced block structure.

    `regions` holds 1-based node index tuples.  Construction against a
    system checks that E and C are block-diagonal with respect to the
    partition (assumption A4) and derives coupling blocks and neighbor
    sets.
    """

    regions: tuple
    n: int
    output_rows: tuple          # per region: tuple of 0-based rows of C
    A_D: np.ndarray
    A_C: np.ndarray
    in_neighbors: tuple
    out_neighbors: tuple
    boundary_nodes: tuple       # per region: 1-based node indices coupled to outside

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    def region_index_arrays(self):
        return [np.asarray(r, dtype=int) - 1 for r in self.regions]

    @staticmethod
    def build(sys: DescriptorSystem, regions, policy: NumericPolicy = DEFAULT_POLICY) -> "Partition":
        n = sys.n
        regions = tuple(tuple(sorted(int(v) for v in r)) for r in regions)
        flat = [v for r in regions for v in r]
        if sorted(flat) != list(range(1, n + 1)):
            raise DimensionError("regions must partition {1..n}")
        idx = [np.asarray(r, dtype=int) - 1 for r in regions]

        # A4: E block-diagonal w.r.t. the partition
        mask = np.zeros((n, n), dtype=bool)
        for ii in idx:
            mask[np.ix_(ii, ii)] = True
        off = np.abs(sys.E)[~mask]
        if off.size and np.max(off) > policy.block_diag_tol:
            raise DimensionError("E is not block-diagonal with respect to the partition (A4)")

        # A4 for C: every output row must touch exactly one region
        rows = [[] for _ in regions]
        for r in range(sys.p):
            touched = [k for k, ii in enumerate(idx)
                       if np.max(np.abs(sys.C[r, ii])) > policy.block_diag_tol]
            outside = np.max(np.abs(sys.C[r])) > policy.block_diag_tol and len(touched) != 1
            if len(touched) == 0 or outside:
                raise DimensionError(
                    f"output row {r + 1} does not belong to a single region (A4)"
                )
            rows[touched[0]].append(r)
        output_rows = tuple(tuple(rr) for rr in rows)

        A_D = np.zeros_like(sys.A)
        for ii in idx:
            A_D[np.ix_(ii, ii)] = sys.A[np.ix_(ii, ii)]
        A_C = sys.A - A_D

        N = len(regions)
        in_nb, out_nb, boundary = [], [], []
        for i in range(N):
            ins, outs = [], []
            for j in range(N):
                if j == i:
                    continue
                if np.linalg.norm(sys.A[np.ix_(idx[i], idx[j])]) > 0:
                    ins.append(j)
                if np.linalg.norm(sys.A[np.ix_(idx[j], idx[i])]) > 0:
                    outs.append(j)
            in_nb.append(tuple(ins))
            out_nb.append(tuple(outs))
            outside = np.setdiff1d(np.arange(n), idx[i])
            if outside.size:
                b = [int(v + 1) for v in idx[i]
                     if np.max(np.abs(sys.A[v, outside])) > 0]
            else:
                b = []
            boundary.append(tuple(b))
        return Partition(regions, n, output_rows, A_D, A_C,
                         tuple(in_nb), tuple(out_nb), tuple(boundary))

    def region_system(self, sys: DescriptorSystem, i: int) -> DescriptorSystem:
        ii = np.asarray(self.regions[i], dtype=int) - 1
        rr = np.asarray(self.output_rows[i], dtype=int)
        E_i = sys.E[np.ix_(ii, ii)]
        A_i = sys.A[np.ix_(ii, ii)]
        C_i = sys.C[np.ix_(rr, ii)] if rr.size else np.zeros((0, ii.size))
        return DescriptorSystem(E_i, A_i, np.zeros((ii.size, 0)), C_i,
                                np.zeros((C_i.shape[0], 0)))

    def coupling_columns(self, sys: DescriptorSystem, i: int):
        """(B_i^b, source nodes): nonzero external columns of region i's rows."""
        ii = np.asarray(self.regions[i], dtype=int) - 1
        outside = np.setdiff1d(np.arange(self.n), ii)
        block = sys.A[np.ix_(ii, outside)]
        nz = np.where(np.max(np.abs(block), axis=0) > 0)[0]
        return block[:, nz], tuple(int(outside[j] + 1) for j in nz)

    def assemble_gain(self, gains) -> np.ndarray:
        """Block-diagonal G from per-region gains."""
        p = sum(len(rr) for rr in self.output_rows)
        G = np.zeros((self.n, p))
        for i, Gi in enumerate(gains):
            ii = np.asarray(self.regions[i], dtype=int) - 1
            rr = np.asarray(self.output_rows[i], dtype=int)
            if Gi.shape != (ii.size, rr.size):
                raise DimensionError(f"gain {i} has wrong shape")
            G[np.ix_(ii, rr)] = Gi
        return G

    def split_gain(self, G: np.ndarray):
        gains = []
        for i in range(self.n_regions):
            ii = np.asarray(self.regions[i], dtype=int) - 1
            rr = np.asarray(self.output_rows[i], dtype=int)
            gains.append(G[np.ix_(ii, rr)])
        return gains


# ---------------------------------------------------------------------------
# detection filters
# ---------------------------------------------------------------------------

@dataclass
class DetectionFilter:
    plant: DescriptorSystem
    G: np.ndarray
    mode: str = "centralized"
    partition: Partition | None = None
    filter_eigs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        E, A, C = self.plant.E, self.plant.A, self.plant.C
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        if G.shape != (self.plant.n, self.plant.p):
            raise DimensionError("G must be n x p")
        self.G = G
        A_cl = (self.partition.A_D if self.mode == "decentralized" else A) + G @ C
        ok, eigs = pencil_is_hurwitz(E, A_cl, DEFAULT_POLICY)
        if not ok:
            raise DesignInfeasibleError(
                "filter pencil is not Hurwitz; max Re = "
                f"{np.max(eigs.real) if eigs.size else float('nan'):.3e}"
            )
        if not check_regular(DescriptorSystem(E, A_cl, np.zeros((self.plant.n, 0)),
                                              np.zeros((0, self.plant.n)), np.zeros((0, 0)))):
            raise RegularityError("filter pencil is singular")
        self.filter_eigs = eigs

    @property
    def closed_loop_A(self) -> np.ndarray:
        base = self.partition.A_D if self.mode == "decentralized" else self.plant.A
        return base + self.G @ self.plant.C


@dataclass
class DetectionVerdict:
    attacked: bool
    max_residual: float
    threshold: float


def design_centralized(sys: DescriptorSystem, target_spectrum=None,
                       policy: NumericPolicy = DEFAULT_POLICY) -> DetectionFilter:
    """Design the centralized detection filter gain."""
    G = design_injection(sys.E, sys.A, sys.C, policy, target_spectrum)
    return DetectionFilter(sys, G, "centralized")


def act_gain(sys: DescriptorSystem, partition: Partition | None = None) -> np.ndarray:
    """The convenient gain G = A C^T (block-diagonal per region if partitioned).

    Works well on diffusively coupled networks with state measurements;
    admissibility must still be verified (Hurwitz check / certificates).
    """
    if partition is None:
        return sys.A @ sys.C.T
    gains = []
    for i in range(partition.n_regions):
        reg = partition.region_system(sys, i)
        gains.append(reg.A @ reg.C.T)
    return partition.assemble_gain(gains)


def design_decentralized(sys: DescriptorSystem, partition: Partition,
                         policy: NumericPolicy = DEFAULT_POLICY) -> DetectionFilter:
    """Per-region gains G_i assembled into a block-diagonal G.

    Each (E_i, A_i + G_i C_i) is made Hurwitz independently; the coupling
    condition is certified separately by `certify_small_gain`.
    """
    gains = []
    for i in range(partition.n_regions):
        reg = partition.region_system(sys, i)
        try:
            gains.append(design_injection(reg.E, reg.A, reg.C, policy))
        except DesignInfeasibleError as exc:
            raise DesignInfeasibleError(f"region {i + 1}: {exc}") from exc
    G = partition.assemble_gain(gains)
    return DetectionFilter(sys, G, "decentralized", partition)


def run_detector(filt: DetectionFilter, y: Trajectory, x0,
                 threshold: float | None = None,
                 policy: NumericPolicy = DEFAULT_POLICY):
    """Drive the filter with measured y; return (residual, verdict).

    The filter state starts at the known plant initial state, so in the
    attack-free case the residual vanishes up to integration error.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != filt.plant.n:
        raise DimensionError("x0 has wrong dimension")
    if y.dim != filt.plant.p:
        raise DimensionError("y has wrong dimension")
    A_cl = filt.plant.A + filt.G @ filt.plant.C  # waveform handles A_D split
    spline = y.interpolator()
    forcing = as_signal(lambda t: -filt.G @ np.asarray(spline(t), dtype=float).ravel(),
                        filt.plant.n)
    w = integrate_descriptor(filt.plant.E, A_cl, forcing, y.t, x0, policy)
    r = Trajectory(y.t, w.values @ filt.plant.C.T - y.values, "r")
    return r, detection_verdict(r, y, threshold, policy)


def detection_verdict(r: Trajectory, y: Trajectory, threshold: float | None = None,
                      policy: NumericPolicy = DEFAULT_POLICY) -> DetectionVerdict:
    if threshold is None:
        threshold = policy.residual_rtol * (1.0 + y.sup_norm())
    mx = r.sup_norm()
    return DetectionVerdict(bool(mx > threshold), mx, threshold)


# ---------------------------------------------------------------------------
# frequency-domain certificates
# ---------------------------------------------------------------------------

def _omega_grid(policy: NumericPolicy) -> np.ndarray:
    pos = np.logspace(-3, math.log10(policy.freq_max), policy.freq_points)
    return np.concatenate([-pos[::-1], [0.0], pos])


def _spectral_radius(E, Acl, A_C, omega, sigma) -> float:
    M = (sigma + 1j * omega) * E - Acl
    try:
        X = np.linalg.solve(M, A_C)
    except np.linalg.LinAlgError:
        return float("inf")
    ev = np.linalg.eigvals(X)
    return float(np.max(np.abs(ev))) if ev.size else 0.0


def _golden_refine(fun, lo, hi, iters=40):
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fun(d)
    xs = [a, b, c, d]
    vals = [fun(a), fun(b), fc, fd]
    i = int(np.argmax(vals))
    return xs[i], vals[i]


def waveform_sigma(sys: DescriptorSystem, beta: float = 0.0,
                   policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """Shift sigma = max(alpha, beta) for the convergence condition.

    alpha is the least upper bound on the real part of the plant's finite
    spectrum; beta bounds the exponential order of the measurements
    (0 for bounded signals, override for growing ones).
    """
    eigs = pencil_finite_eigs(sys.E, sys.A, policy)
    alpha = float(np.max(eigs.real)) if eigs.size else 0.0
    return max(alpha, beta)


@dataclass
class CertificateReport:
    passed: bool
    max_value: float
    argmax_omega: float
    sigma: float
    margin: float
    grid_points: int
    kind: str = "spectral-radius"

    def __bool__(self):
        return self.passed


def certify_small_gain(sys: DescriptorSystem, partition: Partition, G: np.ndarray,
                       sigma: float = 0.0,
                       policy: NumericPolicy = DEFAULT_POLICY) -> CertificateReport:
    """Numerically certify sup_w rho(((sigma+jw)E - A_D - GC)^{-1} A_C) < 1.

    Sweeps a logarithmic grid over [-freq_max, freq_max] plus w = 0 and
    refines around the maximum by golden section.  The certificate is
    numerical, not a proof: grid density is configurable via the policy.
    """
    Acl = partition.A_D + G @ sys.C
    A_C = partition.A_C
    grid = _omega_grid(policy)
    vals = np.array([_spectral_radius(sys.E, Acl, A_C, w, sigma) for w in grid])
    i = int(np.argmax(vals))
    w_best, v_best = grid[i], vals[i]
    lo = grid[max(0, i - 1)]
    hi = grid[min(grid.size - 1, i + 1)]
    if hi > lo:
        w_ref, v_ref = _golden_refine(
            lambda w: _spectral_radius(sys.E, Acl, A_C, w, sigma), lo, hi)
        if v_ref > v_best:
            w_best, v_best = w_ref, v_ref
    return CertificateReport(bool(v_best < 1.0), float(v_best), float(w_best),
                             sigma, 1.0 - float(v_best), grid.size)


@dataclass
class BlockDominanceReport:
    passed: bool
    per_region: list  # (max norm, argmax omega) per region

    def __bool__(self):
        return self.passed


def certify_block_dominance(sys: DescriptorSystem, partition: Partition, G: np.ndarray,
                            policy: NumericPolicy = DEFAULT_POLICY) -> BlockDominanceReport:
    """Per-region quasi-block diagonal dominance certificate.

    Checks sup_w ||(jw E_i - A_i - G_i C_i)^{-1} [A_ij]_j||_inf < 1 for each
    region; sufficient for the small-gain condition but (strictly) more
    conservative, and checkable with local information only.
    """
    grid = _omega_grid(policy)
    gains = partition.split_gain(G)
    idx = partition.region_index_arrays()
    per_region = []
    ok = True
    for i in range(partition.n_regions):
        reg = partition.region_system(sys, i)
        Acl = reg.A + gains[i] @ reg.C
        rows = idx[i]
        coupling = partition.A_C[rows, :]

        def norm_at(w):
            M = 1j * w * reg.E - Acl
            try:
                X = np.linalg.solve(M, coupling)
            except np.linalg.LinAlgError:
                return float("inf")
            return float(np.max(np.sum(np.abs(X), axis=1))) if X.size else 0.0

        vals = np.array([norm_at(w) for w in grid])
        j = int(np.argmax(vals))
        w_best, v_best = grid[j], vals[j]
        lo, hi = grid[max(0, j - 1)], grid[min(grid.size - 1, j + 1)]
        if hi > lo:
            w_ref, v_ref = _golden_refine(norm_at, lo, hi)
            if v_ref > v_best:
                w_best, v_best = w_ref, v_ref
        per_region.append((float(v_best), float(w_best)))
        ok = ok and v_best < 1.0
    return BlockDominanceReport(bool(ok), per_region)


# ---------------------------------------------------------------------------
# waveform relaxation
# ---------------------------------------------------------------------------

@dataclass
class WaveformConfig:
    k_max: int = 100
    tol: float = 0.0              # successive-iterate sup-norm stop (0: run k_max)
    force: bool = False           # iterate even if the certificate fails
    certify: bool = True
    compute_reference: bool = True
    store_iterates: bool = True


@dataclass
class WaveformRun:
    iterates: list                # Trajectory per stored round
    residuals: list               # per-region residual Trajectory (final round)
    residual: Trajectory          # stacked final residual
    iteration_errors: np.ndarray  # max_t ||w^k - w_ref||_inf (if reference)
    changes: np.ndarray           # successive-iterate sup norms
    converged: bool
    rounds: int
    certificate: CertificateReport | None
    reference: Trajectory | None
    messages: list                # (round, sender, receiver, payload, samples)


def decentralized_reference(sys: DescriptorSystem, partition: Partition, G: np.ndarray,
                            y: Trajectory, w0,
                            policy: NumericPolicy = DEFAULT_POLICY) -> Trajectory:
    """Monolithic simulation of the coupled decentralized filter.

    Solves the same first-order-hold discretization that the waveform
    iteration uses, but with the coupling handled implicitly by a direct
    linear solve per step, so it is the exact fixed point of the
    relaxation on this grid.
    """
    dt = float(y.t[1] - y.t[0])
    prop = FohPropagator(sys.E, partition.A_D + G @ sys.C, dt, policy)
    A_C = partition.A_C
    Gy = y.values @ G.T
    n, N = sys.n, y.t.size
    lhs = np.eye(n) - prop.B1 @ A_C
    lu = scipy.linalg.lu_factor(lhs)
    W = np.empty((N, n))
    W[0] = np.asarray(w0, dtype=float).ravel()
    for k in range(N - 1):
        rhs = prop.AA @ W[k] + prop.B0 @ (A_C @ W[k] - Gy[k]) - prop.B1 @ Gy[k + 1]
        W[k + 1] = scipy.linalg.lu_solve(lu, rhs)
    return Trajectory(y.t, W, "w")


def run_waveform_relaxation(sys: DescriptorSystem, partition: Partition, G: np.ndarray,
                            y: Trajectory, w0, config: WaveformConfig | None = None,
                            policy: NumericPolicy = DEFAULT_POLICY) -> WaveformRun:
    """Gauss-Jacobi waveform relaxation of the decentralized filter.

    Within a round every region integrates independently (block-diagonal
    dynamics), reading only the previous round's neighbor trajectories;
    whole sampled trajectories are exchanged between rounds.  The initial
    guess holds w(0) constant over the horizon.
    """
    config = config or WaveformConfig()
    w0 = np.asarray(w0, dtype=float).ravel()
    if w0.size != sys.n:
        raise DimensionError("w0 has wrong dimension")
    cert = None
    if config.certify:
        cert = certify_small_gain(sys, partition, G, 0.0, policy)
        if not cert.passed and not config.force:
            raise DesignInfeasibleError(
                f"small-gain certificate failed (max rho = {cert.max_value:.4f}); "
                "pass force=True to iterate anyway"
            )

    dt = float(y.t[1] - y.t[0])
    prop = FohPropagator(sys.E, partition.A_D + G @ sys.C, dt, policy)
    A_C = partition.A_C
    Gy = y.values @ G.T
    N = y.t.size
    W_prev = np.tile(w0, (N, 1))

    reference = None
    if config.compute_reference:
        reference = decentralized_reference(sys, partition, G, y, w0, policy)

    idx = partition.region_index_arrays()
    messages = []
    iterates = []
    changes = []
    errors = []
    converged = False
    rounds = 0
    for k in range(1, config.k_max + 1):
        F = W_prev @ A_C.T - Gy
        W = prop.run(y.t, w0, F)
        rounds = k
        change = float(np.max(np.abs(W - W_prev))) if N else 0.0
        changes.append(change)
        if reference is not None:
            errors.append(float(np.max(np.abs(W - reference.values))))
        if config.store_iterates:
            iterates.append(Trajectory(y.t, W.copy(), f"w_k{k}"))
        for i in range(partition.n_regions):
            for j in partition.out_neighbors[i]:
                messages.append((k, i + 1, j + 1, "iterate-trajectory", N * len(idx[i])))
        W_prev = W
        if config.tol > 0 and change < config.tol:
            converged = True
            break
    if config.tol == 0.0:
        converged = True  # ran the prescribed number of rounds
    if not converged:
        warnings.warn("waveform relaxation did not meet the change tolerance "
                      f"after {rounds} rounds", stacklevel=2)

    res_regions = []
    for i in range(partition.n_regions):
        rr = np.asarray(partition.output_rows[i], dtype=int)
        ii = idx[i]
        Ci = sys.C[np.ix_(rr, ii)] if rr.size else np.zeros((0, ii.size))
        ri = y.values[:, rr] - W_prev[:, ii] @ Ci.T
        res_regions.append(Trajectory(y.t, ri, f"r{i + 1}"))
    r_full = Trajectory(y.t, y.values - W_prev @ sys.C.T, "r")
    return WaveformRun(iterates, res_regions, r_full,
                       np.asarray(errors), np.asarray(changes), converged,
                       rounds, cert, reference, messages)
