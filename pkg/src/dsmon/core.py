"""Descriptor-system model, matrix-pencil analysis and simulation.

The central object is the quintuple (E, A, B, C, D) with possibly
singular E.  Systems of differentiation index <= 1 are simulated by
separating the pencil (E, A) into a slow (ODE) part and a fast
(purely algebraic) part via an ordered QZ decomposition.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DimensionError,
    InconsistentStateError,
    RegularityError,
    ScenarioFormatError,
    UnsupportedIndexError,
)
from .numeric import DEFAULT_POLICY, NumericPolicy

__all__ = [
    "DescriptorSystem",
    "attack_model",
    "Trajectory",
    "AttackScenario",
    "NoiseSpec",
    "Signal",
    "ZeroSignal",
    "ConstantSignal",
    "SinusoidSignal",
    "UniformRandomSignal",
    "FourierSignal",
    "PiecewiseSignal",
    "OnsetSignal",
    "RegularityCertificate",
    "check_regular",
    "check_consistent",
    "PencilDecomposition",
    "pencil_decomposition",
    "InvariantZeroReport",
    "invariant_zeros",
    "simulate",
    "FohPropagator",
    "save_matrices",
    "load_matrices",
]


class SmoothnessWarning(UserWarning):
    """Raised when a supplied input signal is not smooth."""


# ---------------------------------------------------------------------------
# system model
# ---------------------------------------------------------------------------

def _as_matrix(M, rows=None, cols=None, name="matrix"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if rows is not None and M.shape[0] != rows:
        raise DimensionError(f"{name} must have {rows} rows, got {M.shape[0]}")
    if cols is not None and M.shape[1] != cols:
        raise DimensionError(f"{name} must have {cols} columns, got {M.shape[1]}")
    return M


@dataclass(frozen=True)
class DescriptorSystem:
    """Linear time-invariant descriptor system

        E x'(t) = A x(t) + B u(t),     y(t) = C x(t) + D u(t),

    with E possibly singular.  Dimension consistency is checked at
    construction; matrices are stored as float arrays and never mutated.
    """

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        E = _as_matrix(self.E, name="E")
        n = E.shape[0]
        if E.shape[1] != n:
            raise DimensionError("E must be square")
        A = _as_matrix(self.A, n, n, "A")
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(n, -1) if B.size else B.reshape(n, 0)
        B = _as_matrix(B, rows=n, name="B")
        C = _as_matrix(self.C, cols=n, name="C")
        p, m = C.shape[0], B.shape[1]
        D = np.asarray(self.D, dtype=float)
        if D.size == 0:
            D = np.zeros((p, m))
        D = _as_matrix(D, p, m, "D")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def with_matrices(self, **kw) -> "DescriptorSystem":
        data = {"E": self.E, "A": self.A, "B": self.B, "C": self.C, "D": self.D}
        data.update(kw)
        return DescriptorSystem(**data)


def attack_model(E, A, C) -> DescriptorSystem:
    """Build the canonical per-channel attack layout B = [I, 0], D = [0, I].

    Every state equation and every measurement gets its own input column,
    so attack sets are subsets of {1, ..., n+p}.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n, p = A.shape[0], C.shape[0]
    B = np.hstack([np.eye(n), np.zeros((n, p))])
    D = np.hstack([np.zeros((p, n)), np.eye(p)])
    return DescriptorSystem(E, A, B, C, D)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Sampled vector signal on a strictly increasing time grid."""

    t: np.ndarray
    values: np.ndarray
    label: str = "x"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        self.values = v
        if self.t.size != self.values.shape[0]:
            raise DimensionError("sample count must equal grid length")
        if self.t.size > 1 and not np.all(np.diff(self.t) > 0):
            raise DimensionError("time grid must be strictly increasing")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def sup_norm(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(np.max(np.abs(self.values)))

    def interpolator(self):
        from scipy.interpolate import CubicSpline

        if self.t.size < 4:
            # fall back to linear interpolation on very short grids
            return lambda s: np.array(
                [np.interp(s, self.t, self.values[:, j]) for j in range(self.dim)]
            )
        return CubicSpline(self.t, self.values, axis=0)

    def select(self, cols) -> "Trajectory":
        cols = np.asarray(cols, dtype=int)
        return Trajectory(self.t, self.values[:, cols], self.label)

    def to_csv(self, path) -> None:
        header = ",".join(["t"] + [f"{self.label}_{j + 1}" for j in range(self.dim)])
        data = np.column_stack([self.t, self.values])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @staticmethod
    def from_csv(path, label=None) -> "Trajectory":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if label is None:
            label = header[1].rsplit("_", 1)[0] if len(header) > 1 else "x"
        return Trajectory(data[:, 0], data[:, 1:], label)


def _same_grid(t1: np.ndarray, t2: np.ndarray) -> bool:
    return t1.size == t2.size and np.allclose(t1, t2, rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# input signals
# ---------------------------------------------------------------------------

class Signal:
    """Time -> R^k callable with RK4 stage-value semantics.

    Smooth signals just evaluate pointwise.  Piecewise-constant signals
    override :meth:`stage_values` so a step falling on a grid boundary is
    held at its left value throughout the step.
    """

    dim: int = 1
    smooth: bool = True

    def __call__(self, t: float) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def stage_values(self, t0: float, h: float):
        return self(t0), self(t0 + 0.5 * h), self(t0 + h)


class ZeroSignal(Signal):
    def __init__(self, dim: int):
        self.dim = dim

    def __call__(self, t):
        return np.zeros(self.dim)


class ConstantSignal(Signal):
    smooth = False  # jump at t=0 when gated by an onset

    def __init__(self, values):
        self.values = np.atleast_1d(np.asarray(values, dtype=float))
        self.dim = self.values.size

    def __call__(self, t):
        return self.values


class SinusoidSignal(Signal):
    def __init__(self, amplitude, frequency_hz, phase=0.0, dim=None):
        self.amplitude = np.atleast_1d(np.asarray(amplitude, dtype=float))
        self.dim = dim if dim is not None else self.amplitude.size
        if self.amplitude.size == 1 and self.dim > 1:
            self.amplitude = np.full(self.dim, self.amplitude[0])
        self.omega = 2.0 * math.pi * float(frequency_hz)
        self.phase = float(phase)

    def __call__(self, t):
        return self.amplitude * math.sin(self.omega * t + self.phase)


class UniformRandomSignal(Signal):
    """Piecewise-constant uniform noise, held over intervals of length `hold`.

    Values are generated deterministically from (seed, interval index), so
    evaluation is stateless and reproducible.
    """

    smooth = False

    def __init__(self, low, high, hold, dim, seed):
        self.low, self.high = float(low), float(high)
        self.hold = float(hold)
        self.dim = int(dim)
        self.seed = int(seed)
        self._cache: dict[int, np.ndarray] = {}

    def _value(self, idx: int) -> np.ndarray:
        v = self._cache.get(idx)
        if v is None:
            rng = np.random.default_rng((self.seed, idx))
            v = rng.uniform(self.low, self.high, self.dim)
            self._cache[idx] = v
        return v

    def _index(self, t: float) -> int:
        return max(0, int(math.floor(t / self.hold + 1e-12)))

    def __call__(self, t):
        return self._value(self._index(t))

    def stage_values(self, t0, h):
        v = self._value(self._index(t0))
        return v, v, v


class FourierSignal(Signal):
    """Smooth random signal: seeded sum of a few sinusoids plus offset."""

    def __init__(self, dim, seed, amplitude=1.0, max_frequency_hz=0.5, terms=3):
        rng = np.random.default_rng(seed)
        self.dim = int(dim)
        self.coef = rng.uniform(-1.0, 1.0, (terms, self.dim)) * float(amplitude)
        self.offs = rng.uniform(-1.0, 1.0, self.dim) * float(amplitude)
        self.omega = rng.uniform(0.1, 1.0, terms) * 2 * math.pi * float(max_frequency_hz)
        self.phase = rng.uniform(0, 2 * math.pi, terms)

    def __call__(self, t):
        s = np.sin(self.omega * t + self.phase)
        return self.offs + s @ self.coef


class PiecewiseSignal(Signal):
    """Left-continuous piecewise-constant signal from breakpoints."""

    smooth = False

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float).ravel()
        self.vals = np.atleast_2d(np.asarray(values, dtype=float))
        if self.vals.shape[0] != self.times.size:
            raise DimensionError("one value row per breakpoint required")
        self.dim = self.vals.shape[1]

    def _value(self, t):
        idx = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        if idx < 0:
            return np.zeros(self.dim)
        return self.vals[idx]

    def __call__(self, t):
        return self._value(t)

    def stage_values(self, t0, h):
        # hold semantics: the value at t0 applies on all of [t0, t0+h)
        v = self._value(t0)
        return v, v, v


class OnsetSignal(Signal):
    """Gate an inner signal to be active for t >= start only."""

    smooth = False

    def __init__(self, inner: Signal, start: float):
        self.inner = inner
        self.start = float(start)
        self.dim = inner.dim

    def __call__(self, t):
        if t < self.start - 1e-12:
            return np.zeros(self.dim)
        return self.inner(t)

    def stage_values(self, t0, h):
        if t0 + h < self.start - 1e-12:
            z = np.zeros(self.dim)
            return z, z, z
        a, b, c = self.inner.stage_values(t0, h)
        if t0 < self.start - 1e-12:
            a = np.zeros(self.dim)
        if t0 + 0.5 * h < self.start - 1e-12:
            b = np.zeros(self.dim)
        return a, b, c


class _CallableSignal(Signal):
    def __init__(self, fn, dim):
        self.fn = fn
        self.dim = dim

    def __call__(self, t):
        return np.atleast_1d(np.asarray(self.fn(t), dtype=float))


def as_signal(sig, dim: int) -> Signal:
    if sig is None:
        return ZeroSignal(dim)
    if isinstance(sig, Signal):
        return sig
    if callable(sig):
        return _CallableSignal(sig, dim)
    return ConstantSignal(sig)


# ---------------------------------------------------------------------------
# attack scenarios
# ---------------------------------------------------------------------------

@dataclass
class NoiseSpec:
    state_cov: np.ndarray
    output_cov: np.ndarray
    seed: int = 0


@dataclass
class AttackScenario:
    """Attack set, mode signal and simulation grid.

    `attack_set` uses 1-based channel indices into {1, ..., n+p}: the
    first n channels act on the state equations, the remaining p on the
    measurements (matching the canonical B = [I,0], D = [0,I] layout).
    """

    attack_set: tuple[int, ...]
    signal: Signal | None
    x0: np.ndarray
    horizon: float
    dt: float
    start_time: float = 0.0
    noise: NoiseSpec | None = None

    def __post_init__(self):
        ks = tuple(sorted(int(k) for k in self.attack_set))
        if len(set(ks)) != len(ks):
            raise DimensionError("attack set indices must be distinct")
        if any(k < 1 for k in ks):
            raise DimensionError("attack set indices are 1-based")
        self.attack_set = ks
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        if self.dt <= 0:
            raise DimensionError("dt must be positive")
        if not (0.0 <= self.start_time <= self.horizon):
            raise DimensionError("start_time must lie in [0, horizon]")

    def grid(self) -> np.ndarray:
        nsteps = int(round(self.horizon / self.dt))
        return np.arange(nsteps + 1) * self.dt

    def input_signal(self, m: int) -> Signal:
        """Full m-dimensional input signal with the attack embedded."""
        if any(k > m for k in self.attack_set):
            raise DimensionError("attack set index exceeds input dimension")
        k = len(self.attack_set)
        if k == 0 or self.signal is None:
            return ZeroSignal(m)
        inner = as_signal(self.signal, k)
        if inner.dim != k:
            raise DimensionError("attack signal dimension must equal |K|")
        gated = OnsetSignal(inner, self.start_time) if self.start_time > 0 else inner
        cols = np.asarray(self.attack_set, dtype=int) - 1

        embed = _EmbeddedSignal(gated, cols, m)
        if not getattr(inner, "smooth", True) or self.start_time > 0:
            warnings.warn(
                "attack signal is not smooth; trajectories are integrated "
                "piecewise and algebraic variables may jump",
                SmoothnessWarning,
                stacklevel=2,
            )
        return embed


class _EmbeddedSignal(Signal):
    def __init__(self, inner: Signal, cols: np.ndarray, m: int):
        self.inner = inner
        self.cols = cols
        self.dim = m

    def _embed(self, v):
        u = np.zeros(self.dim)
        u[self.cols] = v
        return u

    def __call__(self, t):
        return self._embed(self.inner(t))

    def stage_values(self, t0, h):
        a, b, c = self.inner.stage_values(t0, h)
        return self._embed(a), self._embed(b), self._embed(c)


# ---------------------------------------------------------------------------
# regularity and consistency
# ---------------------------------------------------------------------------

@dataclass
class RegularityCertificate:
    is_regular: bool
    points: np.ndarray
    determinants: np.ndarray
    full_rank: np.ndarray

    def __bool__(self):
        return self.is_regular


def _probe_points(count: int, scale: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    radius = scale * rng.uniform(0.3, 3.0, count)
    angle = rng.uniform(0, 2 * math.pi, count)
    return radius * np.exp(1j * angle)


def check_regular(sys: DescriptorSystem, policy: NumericPolicy = DEFAULT_POLICY) -> RegularityCertificate:
    """Probabilistic regularity test for the pencil (E, A).

    det(sE - A) is a polynomial of degree <= n, so evaluating at 2n+1
    random complex points decides whether it vanishes identically up to a
    measure-zero coincidence.  The per-point decision uses the numeric
    rank of sE - A rather than the raw determinant magnitude.
    """
    E, A = sys.E, sys.A
    n = sys.n
    if n == 0:
        return RegularityCertificate(True, np.array([]), np.array([]), np.array([]))
    scale = max(1.0, np.linalg.norm(A, np.inf) / max(np.linalg.norm(E, np.inf), 1e-30))
    pts = _probe_points(2 * n + 1, min(scale, 1e6), policy.seed)
    dets = np.array([np.linalg.det(s * E - A) for s in pts])
    # numeric full-rank test per point (complex SVD)
    full = np.zeros(pts.size, dtype=bool)
    for i, s in enumerate(pts):
        sv = np.linalg.svd(s * E - A, compute_uv=False)
        full[i] = sv[-1] > policy.svd_cutoff(sv, (n, n))
    return RegularityCertificate(bool(np.any(full)), pts, dets, full)


def check_consistent(sys: DescriptorSystem, x0, u0=None, policy: NumericPolicy = DEFAULT_POLICY) -> bool:
    """Check that A x0 + B u0 is orthogonal to Ker(E^T)."""
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != sys.n:
        raise DimensionError("x0 has wrong dimension")
    if u0 is None:
        u0 = np.zeros(sys.m)
    u0 = np.asarray(u0, dtype=float).ravel()
    if u0.size != sys.m:
        raise DimensionError("u0 has wrong dimension")
    v = sys.A @ x0 + sys.B @ u0
    from .numeric import null_basis

    K = null_basis(sys.E.T, policy)  # basis of Ker(E^T)
    if K.shape[1] == 0:
        return True
    resid = np.linalg.norm(K.T @ v)
    return resid <= 1e-9 * (1.0 + np.linalg.norm(v))


# ---------------------------------------------------------------------------
# pencil decomposition (slow/fast separation)
# ---------------------------------------------------------------------------

@dataclass
class PencilDecomposition:
    """Ordered QZ form of (E, A): A = Q @ S @ Z.T, E = Q @ T @ Z.T.

    Finite (slow) generalized eigenvalues occupy the leading `n_finite`
    diagonal positions; the trailing block carries the infinite (fast)
    spectrum.  `index` estimates the nilpotency index of the fast part
    (0 when E is nonsingular, 1 for purely algebraic constraints).
    """

    Q: np.ndarray
    Z: np.ndarray
    S: np.ndarray  # transformed A, quasi upper triangular
    T: np.ndarray  # transformed E, upper triangular
    n_finite: int
    index: int
    alpha: np.ndarray
    beta: np.ndarray

    def finite_eigenvalues(self) -> np.ndarray:
        fin = np.abs(self.beta) > 0
        return (self.alpha[fin] / self.beta[fin])[: self.n_finite] if self.n_finite else np.array([])


def pencil_decomposition(sys_or_pair, policy: NumericPolicy = DEFAULT_POLICY) -> PencilDecomposition:
    if isinstance(sys_or_pair, DescriptorSystem):
        E, A = sys_or_pair.E, sys_or_pair.A
    else:
        E, A = (np.atleast_2d(np.asarray(M, dtype=float)) for M in sys_or_pair)
    n = E.shape[0]
    if n == 0:
        return PencilDecomposition(np.eye(0), np.eye(0), np.eye(0), np.eye(0), 0, 0,
                                   np.array([]), np.array([]))

    def finite_first(alpha, beta):
        return np.abs(beta) > policy.infinite_rtol * (np.abs(alpha) + np.abs(beta) + 1e-300)

    S, T, alpha, beta, Q, Z = scipy.linalg.ordqz(A, E, sort=finite_first, output="real")
    nf = int(np.sum(finite_first(alpha, beta)))

    # nilpotency index of the fast part
    f = n - nf
    if f == 0:
        index = 0
    else:
        A22 = S[nf:, nf:]
        E22 = T[nf:, nf:]
        scale = max(np.linalg.norm(E, np.inf), 1.0)
        try:
            N = np.linalg.solve(A22, E22)
        except np.linalg.LinAlgError as exc:
            raise RegularityError("fast block of the pencil is singular") from exc
        index = 1
        M = N.copy()
        tol = f * np.finfo(float).eps * scale * max(1.0, np.linalg.norm(np.linalg.inv(A22), np.inf))
        while np.linalg.norm(M, np.inf) > tol and index <= f:
            index += 1
            M = M @ N
    return PencilDecomposition(Q, Z, S, T, nf, index, alpha, beta)


class _SlowFastForm:
    """Block-diagonalised realisation used by the integrators.

    Coordinates: x = Zc @ [z1; z2] with Zc = Z @ [[I, X], [0, I]];
    equations premultiplied by [[I, Y], [0, I]] @ Q^T give

        E11 z1' = A11 z1 + g1(t),      0 = A22 z2 + g2(t)

    for index <= 1 pencils, where [g1; g2] = W @ f(t) for the original
    additive input f.
    """

    def __init__(self, E, A, policy: NumericPolicy = DEFAULT_POLICY, require_index_one=True):
        E = np.atleast_2d(np.asarray(E, dtype=float))
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n = E.shape[0]
        dec = pencil_decomposition((E, A), policy)
        if dec.n_finite < n and require_index_one and dec.index > 1:
            raise UnsupportedIndexError(
                f"pencil has index {dec.index}; only index <= 1 is supported"
            )
        k, f = dec.n_finite, n - dec.n_finite
        S, T, Q, Z = dec.S, dec.T, dec.Q, dec.Z
        A11, A12, A22 = S[:k, :k], S[:k, k:], S[k:, k:]
        E11, E12, E22 = T[:k, :k], T[:k, k:], T[k:, k:]

        if f and k:
            X, Y = _solve_coupling(E11, E12, E22, A11, A12, A22)
        else:
            X = np.zeros((k, f))
            Y = np.zeros((k, f))

        self.n, self.k, self.f = n, k, f
        self.dec = dec
        self.E11, self.A11, self.A22 = E11, A11, A22
        Zc = Z @ np.block([[np.eye(k), X], [np.zeros((f, k)), np.eye(f)]]) if f else Z
        self.Zc1 = Zc[:, :k]
        self.Zc2 = Zc[:, k:]
        # z1 recovery from x: z1 = [I, -X] @ Z^T @ x
        Minv = np.block([[np.eye(k), -X], [np.zeros((f, k)), np.eye(f)]]) if f else np.eye(k)
        self.R1 = (Minv @ Z.T)[:k, :]
        # input transforms: g = W @ f_orig, W = [[I, Y], [0, I]] @ Q^T
        W = np.block([[np.eye(k), Y], [np.zeros((f, k)), np.eye(f)]]) @ Q.T if f else Q.T
        self.W1 = W[:k, :]
        self.W2 = W[k:, :]
        self._E11_lu = scipy.linalg.lu_factor(E11) if k else None
        self._A22_lu = scipy.linalg.lu_factor(A22) if f else None
        self.index = dec.index

    # -- coordinate helpers -------------------------------------------------
    def slow_rhs_matrices(self):
        """Return (As, Bs) with z1' = As z1 + Bs f(t)."""
        if self.k == 0:
            return np.zeros((0, 0)), np.zeros((0, self.n))
        As = scipy.linalg.lu_solve(self._E11_lu, self.A11)
        Bs = scipy.linalg.lu_solve(self._E11_lu, self.W1)
        return As, Bs

    def fast_solve(self, f_vec):
        """Algebraic part: z2 = -A22^{-1} W2 f."""
        if self.f == 0:
            return np.zeros(0)
        return -scipy.linalg.lu_solve(self._A22_lu, self.W2 @ f_vec)

    def assemble(self, z1, z2):
        return self.Zc1 @ z1 + (self.Zc2 @ z2 if self.f else 0.0)

    def z1_from_state(self, x):
        return self.R1 @ x

    def consistency_gap(self, x, f_vec):
        """Distance of x's fast component from the algebraic constraint."""
        if self.f == 0:
            return 0.0
        # fast coordinate of x: z2 = [0, I] @ inv([[I,X],[0,I]]) @ Z^T x = (Z^T x)[k:]
        z2 = (self.dec.Z.T @ x)[self.k:]
        return float(np.linalg.norm(z2 - self.fast_solve(f_vec)))


def _solve_coupling(E11, E12, E22, A11, A12, A22):
    """Solve E11 X + Y E22 = -E12,  A11 X + Y A22 = -A12 (dense Kron solve).

    The spectra of the slow and fast blocks are disjoint, so the system is
    nonsingular.  Sizes stay small at toolkit scale.
    """
    k, f = E12.shape
    Ik, If = np.eye(k), np.eye(f)
    top = np.hstack([np.kron(If, E11), np.kron(E22.T, Ik)])
    bot = np.hstack([np.kron(If, A11), np.kron(A22.T, Ik)])
    M = np.vstack([top, bot])
    rhs = -np.concatenate([E12.flatten("F"), A12.flatten("F")])
    sol = np.linalg.solve(M, rhs)
    X = sol[: k * f].reshape((k, f), order="F")
    Y = sol[k * f:].reshape((k, f), order="F")
    return X, Y


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def _rk4_path(form: _SlowFastForm, signal: Signal, grid: np.ndarray,
              z1_0: np.ndarray, noise_map=None, noise_chol=None, rng=None):
    """Fixed-step RK4 on the slow part, pointwise algebraic fast part."""
    As, Bs = form.slow_rhs_matrices()
    N = grid.size
    Z1 = np.empty((N, form.k))
    F = np.empty((N, form.n))
    z1 = z1_0.copy()
    f_now = np.asarray(signal(grid[0]), dtype=float)
    for i in range(N - 1):
        Z1[i] = z1
        F[i] = f_now
        h = grid[i + 1] - grid[i]
        fa, fb, fc = signal.stage_values(grid[i], h)
        k1 = As @ z1 + Bs @ fa
        k2 = As @ (z1 + 0.5 * h * k1) + Bs @ fb
        k3 = As @ (z1 + 0.5 * h * k2) + Bs @ fb
        k4 = As @ (z1 + h * k3) + Bs @ fc
        z1 = z1 + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if noise_map is not None:
            z1 = z1 + math.sqrt(h) * (noise_map @ (noise_chol @ rng.standard_normal(noise_chol.shape[1])))
        f_now = np.asarray(fc, dtype=float)
    Z1[N - 1] = z1
    F[N - 1] = f_now
    # assemble original coordinates
    Xout = np.empty((N, form.n))
    for i in range(N):
        z2 = form.fast_solve(F[i])
        Xout[i] = form.assemble(Z1[i], z2)
    return Xout


def simulate(sys: DescriptorSystem, scenario: AttackScenario,
             policy: NumericPolicy = DEFAULT_POLICY):
    """Integrate the descriptor system under an attack scenario.

    Returns (x, y) trajectories on the scenario grid.  Requires a regular
    pencil of index <= 1 and a consistent initial state.
    """
    cert = check_regular(sys, policy)
    if not cert:
        raise RegularityError("pencil (E, A) is numerically singular")
    form = _SlowFastForm(sys.E, sys.A, policy)
    grid = scenario.grid()
    if scenario.x0.size != sys.n:
        raise DimensionError("x0 has wrong dimension")
    u_sig = scenario.input_signal(sys.m)
    f_sig = _MappedSignal(u_sig, sys.B)

    u0 = u_sig(grid[0])
    if not check_consistent(sys, scenario.x0, u0, policy):
        raise InconsistentStateError(
            "initial state violates the algebraic constraints (A x0 + B u0 "
            "must be orthogonal to Ker(E^T))"
        )
    if form.f:
        gap = form.consistency_gap(scenario.x0, sys.B @ u0)
        if gap > 1e-6 * (1.0 + np.linalg.norm(scenario.x0)):
            raise InconsistentStateError(
                f"initial fast component off the constraint manifold by {gap:.3e}"
            )

    noise_map = noise_chol = rng = None
    if scenario.noise is not None:
        R_eta = np.atleast_2d(np.asarray(scenario.noise.state_cov, dtype=float))
        if np.any(R_eta):
            _, Bs = form.slow_rhs_matrices()
            noise_map = Bs  # same additive channel as the input
            noise_chol = _chol_psd(R_eta)
            rng = np.random.default_rng(scenario.noise.seed)

    z1_0 = form.z1_from_state(scenario.x0)
    X = _rk4_path(form, f_sig, grid, z1_0, noise_map, noise_chol, rng)
    U = np.array([u_sig(t) for t in grid])
    Y = X @ sys.C.T + U @ sys.D.T
    if scenario.noise is not None:
        R_zeta = np.atleast_2d(np.asarray(scenario.noise.output_cov, dtype=float))
        if np.any(R_zeta):
            rng_y = np.random.default_rng((scenario.noise.seed, 1))
            Y = Y + rng_y.standard_normal(Y.shape) @ _chol_psd(R_zeta).T
    return Trajectory(grid, X, "x"), Trajectory(grid, Y, "y")


def _chol_psd(R):
    """Cholesky-like factor for PSD matrices (eigen fallback)."""
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(R)
        w = np.clip(w, 0.0, None)
        return V @ np.diag(np.sqrt(w))


class _MappedSignal(Signal):
    """Compose a signal with a constant matrix map."""

    def __init__(self, inner: Signal, M: np.ndarray):
        self.inner = inner
        self.M = M
        self.dim = M.shape[0]

    def __call__(self, t):
        return self.M @ self.inner(t)

    def stage_values(self, t0, h):
        a, b, c = self.inner.stage_values(t0, h)
        return self.M @ a, self.M @ b, self.M @ c


class _SumSignal(Signal):
    def __init__(self, parts):
        self.parts = [p for p in parts if p is not None]
        self.dim = self.parts[0].dim

    def __call__(self, t):
        return sum(p(t) for p in self.parts)

    def stage_values(self, t0, h):
        vals = [p.stage_values(t0, h) for p in self.parts]
        return tuple(sum(v[i] for v in vals) for i in range(3))


def integrate_descriptor(E, A, forcing: Signal, grid: np.ndarray, x0,
                         policy: NumericPolicy = DEFAULT_POLICY) -> Trajectory:
    """Integrate E x' = A x + f(t) from x(0)=x0 on the given grid."""
    form = _SlowFastForm(E, A, policy)
    x0 = np.asarray(x0, dtype=float).ravel()
    z1_0 = form.z1_from_state(x0)
    X = _rk4_path(form, forcing, grid, z1_0)
    return Trajectory(grid, X, "w")


# ---------------------------------------------------------------------------
# exact FOH propagation (used by the waveform-relaxation machinery)
# ---------------------------------------------------------------------------

class FohPropagator:
    """One-step map x_{k+1} = AA x_k + B0 f_k + B1 f_{k+1} for E x' = A x + f.

    The map is exact for piecewise-linear forcing f (first-order hold) and
    handles index-1 descriptor pencils: the fast component is solved
    algebraically at every grid point.
    """

    def __init__(self, E, A, dt: float, policy: NumericPolicy = DEFAULT_POLICY):
        form = _SlowFastForm(E, A, policy)
        if form.index > 1:
            raise UnsupportedIndexError("FOH propagation needs index <= 1")
        k, f, n = form.k, form.f, form.n
        As, Bs = form.slow_rhs_matrices()
        if k:
            M = np.zeros((3 * k, 3 * k))
            M[:k, :k] = As
            M[:k, k:2 * k] = np.eye(k)
            M[k:2 * k, 2 * k:] = np.eye(k)
            eM = scipy.linalg.expm(M * dt)
            Phi = eM[:k, :k]
            G0 = eM[:k, k:2 * k]
            G1 = eM[:k, 2 * k:]
        else:
            Phi = np.zeros((0, 0))
            G0 = G1 = np.zeros((0, 0))
        # fast contribution: z2_{k+1} = -A22^{-1} W2 f_{k+1}
        if f:
            A22inv_W2 = scipy.linalg.lu_solve(form._A22_lu, form.W2)
            fast1 = -form.Zc2 @ A22inv_W2
        else:
            fast1 = np.zeros((n, n)) * 0.0
        self.AA = form.Zc1 @ Phi @ form.R1 if k else np.zeros((n, n))
        if k:
            B0 = form.Zc1 @ ((G0 - G1 / dt) @ Bs)
            B1 = form.Zc1 @ ((G1 / dt) @ Bs)
        else:
            B0 = np.zeros((n, n))
            B1 = np.zeros((n, n))
        if f:
            B1 = B1 + fast1
        self.B0, self.B1 = B0, B1
        self.dt = dt
        self.n = n

    def run(self, grid: np.ndarray, x0: np.ndarray, F: np.ndarray) -> np.ndarray:
        """Propagate through sampled forcing F (len(grid) x n)."""
        N = grid.size
        X = np.empty((N, self.n))
        X[0] = x0
        for i in range(N - 1):
            X[i + 1] = self.AA @ X[i] + self.B0 @ F[i] + self.B1 @ F[i + 1]
        return X


# ---------------------------------------------------------------------------
# invariant zeros
# ---------------------------------------------------------------------------

@dataclass
class InvariantZeroReport:
    """Zeros of the system pencil [sE - A, B; C, -D].

    For square regular pencils, `zeros` lists the finite generalized
    eigenvalues.  Otherwise the report carries the normal (generic) column
    rank sampled at random points and any verified rank-drop locations.
    """

    zeros: list
    normal_rank: int
    full_column_rank: bool
    has_zero_dynamics: bool
    square: bool
    regular: bool | None = None
    rank_table: list = field(default_factory=list)


def _system_pencil_mats(sys: DescriptorSystem):
    n, m, p = sys.n, sys.m, sys.p
    Me = np.block([[sys.E, np.zeros((n, m))], [np.zeros((p, n)), np.zeros((p, m))]])
    Ma = np.block([[sys.A, -sys.B], [-sys.C, sys.D]])
    return Me, Ma


def invariant_zeros(sys: DescriptorSystem, policy: NumericPolicy = DEFAULT_POLICY) -> InvariantZeroReport:
    """Invariant zeros / zero-dynamics report for (E, A, B, C, D)."""
    n, m, p = sys.n, sys.m, sys.p
    Me, Ma = _system_pencil_mats(sys)
    cols = n + m
    npts = 2 * (n + m) + 1
    scale = max(1.0, np.linalg.norm(Ma, np.inf) / max(np.linalg.norm(Me, np.inf), 1e-30))
    pts = _probe_points(npts, min(scale, 1e6), policy.seed + 17)
    table = []
    ranks = np.empty(npts, dtype=int)
    for i, s in enumerate(pts):
        P = s * Me - Ma
        sv = np.linalg.svd(P, compute_uv=False)
        ranks[i] = int(np.sum(sv > policy.svd_cutoff(sv, P.shape)))
        table.append((complex(s), int(ranks[i])))
    normal_rank = int(np.max(ranks))
    full_col = normal_rank == cols

    square = (m == p)
    if square:
        regular = full_col  # square pencil: generic full rank == regular
        if regular:
            zeros = _finite_gen_eigs(Ma, Me, policy)
            zeros = [z for z in zeros if _rank_drops(Me, Ma, z, normal_rank, policy)]
            return InvariantZeroReport(zeros, normal_rank, full_col,
                                       has_zero_dynamics=len(zeros) > 0,
                                       square=True, regular=True, rank_table=table)
        return InvariantZeroReport([], normal_rank, False,
                                   has_zero_dynamics=True, square=True,
                                   regular=False, rank_table=table)

    if not full_col:
        # column-rank deficient at every point: zero dynamics for all s
        return InvariantZeroReport([], normal_rank, False, True, False, None, table)

    # tall pencil with full column normal rank: compress with a random left
    # map to a square pencil, then verify candidate rank drops.  Candidates
    # far beyond the data scale are infinite eigenvalues perturbed by the
    # compression (the pencil loses rank at infinity whenever Me is rank
    # deficient) and are not finite zeros.
    rng = np.random.default_rng(policy.seed + 23)
    Tmap = rng.standard_normal((cols, n + p))
    zs = _finite_gen_eigs(Tmap @ Ma, Tmap @ Me, policy)
    cap = 1e5 * scale
    zeros = [z for z in zs
             if abs(z) <= cap and _rank_drops(Me, Ma, z, normal_rank, policy)]
    return InvariantZeroReport(zeros, normal_rank, True,
                               has_zero_dynamics=len(zeros) > 0,
                               square=False, regular=None, rank_table=table)


def _finite_gen_eigs(Ma, Me, policy):
    try:
        alpha, beta = scipy.linalg.eig(Ma, Me, right=False, homogeneous_eigvals=True)
    except Exception:
        return []
    alpha = np.asarray(alpha).ravel()
    beta = np.asarray(beta).ravel()
    fin = np.abs(beta) > policy.infinite_rtol * (np.abs(alpha) + np.abs(beta) + 1e-300)
    vals = alpha[fin] / beta[fin]
    vals = vals[np.isfinite(vals)]
    # deduplicate clustered roots
    out = []
    for v in vals:
        if not any(abs(v - w) <= 1e-7 * (1 + abs(w)) for w in out):
            out.append(complex(v))
    return out


def _rank_drops(Me, Ma, s, normal_rank, policy):
    P = s * Me - Ma
    sv = np.linalg.svd(P, compute_uv=False)
    r = int(np.sum(sv > policy.svd_cutoff(sv, P.shape)))
    return r < normal_rank


# ---------------------------------------------------------------------------
# plain-text matrix interchange format
# ---------------------------------------------------------------------------

def save_matrices(path, matrices: dict) -> None:
    """Store named matrices as JSON (nested arrays of decimal literals)."""
    payload = {k: np.asarray(v, dtype=float).tolist() for k, v in matrices.items()}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_matrices(path) -> dict:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(f"not a valid matrix file: {exc}") from exc
    return {k: np.atleast_2d(np.asarray(v, dtype=float)) for k, v in payload.items()}
