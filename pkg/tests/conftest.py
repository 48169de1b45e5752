"""Shared oracles and generators for the test suite."""

import itertools
import math
import warnings

import numpy as np
import pytest

from dsmon.core import DescriptorSystem, Signal, attack_model


@pytest.fixture(autouse=True)
def _silence_smoothness_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


# ---------------------------------------------------------------------------
# polynomial determinant oracle (Leibniz expansion, exact in coefficients)
# ---------------------------------------------------------------------------

def poly_det(Ecoef: np.ndarray, Acoef: np.ndarray) -> np.ndarray:
    """Coefficients (descending powers) of det(s*Ecoef - Acoef), n <= 4.

    Brute-force permutation expansion with polynomial arithmetic; exact up
    to floating point, independent of any eigenvalue routine.
    """
    n = Ecoef.shape[0]
    det = np.zeros(1)
    for perm in itertools.permutations(range(n)):
        sign = _perm_sign(perm)
        poly = np.array([1.0])
        for i, j in enumerate(perm):
            poly = np.convolve(poly, np.array([Ecoef[i, j], -Acoef[i, j]]))
        width = max(det.size, poly.size)
        det = np.pad(det, (width - det.size, 0)) + sign * np.pad(poly, (width - poly.size, 0))
    return det


def _perm_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def rosenbrock_pencil(sys: DescriptorSystem):
    """(Me, Ma) with system pencil P(s) = s*Me - Ma = [sE-A, B; C, -D]."""
    n, m, p = sys.n, sys.m, sys.p
    Me = np.block([[sys.E, np.zeros((n, m))], [np.zeros((p, n)), np.zeros((p, m))]])
    Ma = np.block([[sys.A, -sys.B], [-sys.C, sys.D]])
    return Me, Ma


def oracle_zeros_square(sys: DescriptorSystem, tol=1e-7):
    """Finite zeros of a square system pencil via the determinant polynomial."""
    Me, Ma = rosenbrock_pencil(sys)
    coeffs = poly_det(Me, Ma)
    nz = np.where(np.abs(coeffs) > 1e-12 * max(1.0, np.abs(coeffs).max()))[0]
    if nz.size == 0:
        return None  # identically zero determinant: singular pencil
    coeffs = coeffs[nz[0]:]
    if coeffs.size == 1:
        return []
    return sorted(np.roots(coeffs), key=lambda z: (z.real, z.imag))


# ---------------------------------------------------------------------------
# random system generators
# ---------------------------------------------------------------------------

def random_regular_index1(seed: int, n_max: int = 8, singular: bool | None = None):
    """Random stable regular descriptor system of index <= 1 with outputs."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    A = rng.standard_normal((n, n))
    A = A - (np.abs(A).sum(axis=1).max() + 0.5) * np.eye(n)
    if singular is None:
        singular = bool(rng.integers(0, 2))
    if singular and n >= 3:
        E = np.eye(n)
        E[-1, -1] = 0.0
        # keep the algebraic row well conditioned
        if abs(A[-1, -1]) < 0.5:
            A[-1, -1] = -1.0 - abs(A[-1, -1])
    else:
        E = np.eye(n)
    p = int(rng.integers(1, n + 1))
    C = rng.standard_normal((p, n))
    return attack_model(E, A, C), rng


def consistent_x0(sys: DescriptorSystem, rng) -> np.ndarray:
    """Random initial state satisfying the algebraic constraints (u(0)=0)."""
    from dsmon.core import _SlowFastForm

    x0 = rng.uniform(-1.0, 1.0, sys.n)
    form = _SlowFastForm(sys.E, sys.A)
    if form.f == 0:
        return x0
    z1 = form.z1_from_state(x0)
    z2 = form.fast_solve(np.zeros(sys.n))
    return form.assemble(z1, z2)


class LinComb(Signal):
    """alpha*s1 + beta*s2 for the superposition tests."""

    def __init__(self, s1: Signal, s2: Signal, alpha: float, beta: float):
        self.s1, self.s2 = s1, s2
        self.alpha, self.beta = alpha, beta
        self.dim = s1.dim

    def __call__(self, t):
        return self.alpha * self.s1(t) + self.beta * self.s2(t)

    def stage_values(self, t0, h):
        a1, b1, c1 = self.s1.stage_values(t0, h)
        a2, b2, c2 = self.s2.stage_values(t0, h)
        return (self.alpha * a1 + self.beta * a2,
                self.alpha * b1 + self.beta * b2,
                self.alpha * c1 + self.beta * c2)
