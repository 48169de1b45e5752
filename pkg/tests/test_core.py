"""Core model, pencil analysis and simulation tests."""

import numpy as np
import pytest
import scipy.linalg

from conftest import LinComb, consistent_x0, oracle_zeros_square, poly_det, random_regular_index1
from dsmon.core import (
    AttackScenario,
    ConstantSignal,
    DescriptorSystem,
    FohPropagator,
    FourierSignal,
    NoiseSpec,
    PiecewiseSignal,
    SinusoidSignal,
    Trajectory,
    UniformRandomSignal,
    attack_model,
    check_consistent,
    check_regular,
    invariant_zeros,
    load_matrices,
    pencil_decomposition,
    save_matrices,
    simulate,
)
from dsmon.errors import (
    DimensionError,
    InconsistentStateError,
    UnsupportedIndexError,
)


def _nosys(E, A):
    E = np.atleast_2d(np.asarray(E, dtype=float))
    n = E.shape[0]
    return DescriptorSystem(E, A, np.zeros((n, 0)), np.zeros((0, n)), np.zeros((0, 0)))


# ---------------------------------------------------------------------------
# regularity
# ---------------------------------------------------------------------------

def test_regular_identity_pencil():
    assert check_regular(_nosys(np.eye(2), np.zeros((2, 2)))).is_regular


def test_regular_zero_pencil_is_singular():
    assert not check_regular(_nosys(np.zeros((2, 2)), np.zeros((2, 2))))


def test_regular_singular_E_with_antidiagonal_A():
    # det(sE - A) = -1 identically in s: verified by the polynomial oracle
    E = np.diag([1.0, 0.0])
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    coeffs = np.trim_zeros(poly_det(E, A), "f")
    assert np.allclose(coeffs, [-1.0])
    assert check_regular(_nosys(E, A)).is_regular


def test_regular_witness_table_shape():
    cert = check_regular(_nosys(np.eye(3), np.diag([1.0, 2.0, 3.0])))
    assert cert.points.size == 2 * 3 + 1
    assert cert.determinants.size == cert.points.size


# ---------------------------------------------------------------------------
# consistency
# ---------------------------------------------------------------------------

def test_consistency_nonsingular_E_always_true():
    rng = np.random.default_rng(0)
    sys = attack_model(np.eye(3), rng.standard_normal((3, 3)), rng.standard_normal((2, 3)))
    for _ in range(5):
        assert check_consistent(sys, rng.standard_normal(3), rng.standard_normal(sys.m))


def test_consistency_singular_E():
    sys = _nosys(np.diag([1.0, 0.0]), np.eye(2))
    assert check_consistent(sys, [1.0, 0.0])
    assert not check_consistent(sys, [0.0, 1.0])


def test_consistency_dimension_mismatch():
    sys = _nosys(np.eye(2), np.eye(2))
    with pytest.raises(DimensionError):
        check_consistent(sys, [1.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# invariant zeros
# ---------------------------------------------------------------------------

def test_zeros_full_rank_square_pencil():
    sys = DescriptorSystem([[1.0]], [[0.0]], [[1.0]], [[1.0]], [[0.0]])
    rep = invariant_zeros(sys)
    assert rep.zeros == []
    assert not rep.has_zero_dynamics


def test_zeros_dead_output_row():
    sys = DescriptorSystem([[1.0]], [[0.0]], [[1.0]], [[0.0]], [[0.0]])
    rep = invariant_zeros(sys)
    assert rep.has_zero_dynamics
    assert rep.normal_rank < sys.n + sys.m


def test_zeros_integrator_chain_zero_at_origin():
    # chain x1 -> x2, input on x1, output x1: determinant oracle gives -s
    A = np.array([[0.0, 0.0], [1.0, 0.0]])
    sys = DescriptorSystem(np.eye(2), A, [[1.0], [0.0]], [[1.0, 0.0]], [[0.0]])
    oracle = oracle_zeros_square(sys)
    assert len(oracle) == 1 and abs(oracle[0]) < 1e-9
    rep = invariant_zeros(sys)
    assert len(rep.zeros) == 1
    assert abs(rep.zeros[0]) < 1e-7


@pytest.mark.parametrize("seed", range(12))
def test_zeros_match_determinant_oracle_on_square_systems(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    sys = DescriptorSystem(np.eye(n), rng.standard_normal((n, n)),
                           rng.standard_normal((n, 1)), rng.standard_normal((1, n)),
                           np.zeros((1, 1)))
    oracle = oracle_zeros_square(sys)
    rep = invariant_zeros(sys)
    if oracle is None:
        assert rep.has_zero_dynamics
        return
    got = sorted(rep.zeros, key=lambda z: (z.real, z.imag))
    assert len(got) == len(oracle)
    for a, b in zip(got, oracle):
        assert abs(a - b) < 1e-6 * (1.0 + abs(b))


def test_zeros_wide_pencil_always_has_zero_dynamics():
    # more attack channels than measurements: rank deficient for every s
    rng = np.random.default_rng(3)
    sys = DescriptorSystem(np.eye(2), rng.standard_normal((2, 2)),
                           rng.standard_normal((2, 2)), rng.standard_normal((1, 2)),
                           np.zeros((1, 2)))
    rep = invariant_zeros(sys)
    assert rep.has_zero_dynamics
    assert not rep.full_column_rank


# ---------------------------------------------------------------------------
# pencil decomposition
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(100))
def test_pencil_roundtrip_on_random_regular_pairs(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    A = rng.standard_normal((n, n))
    if seed % 2:
        E = rng.standard_normal((n, n))
    else:
        E = np.eye(n)
        E[-1, -1] = 0.0
        A[-1, -1] = A[-1, -1] if abs(A[-1, -1]) > 0.5 else 1.0
    dec = pencil_decomposition((E, A))
    n_ = np.linalg.norm
    assert n_(dec.Q.T @ dec.Q - np.eye(n), np.inf) < 1e-10
    assert n_(dec.Z.T @ dec.Z - np.eye(n), np.inf) < 1e-10
    assert n_(dec.Q @ dec.S @ dec.Z.T - A, np.inf) <= 1e-10 * max(1.0, n_(A, np.inf))
    assert n_(dec.Q @ dec.T @ dec.Z.T - E, np.inf) <= 1e-10 * max(1.0, n_(E, np.inf))


def test_pencil_index_estimates():
    assert pencil_decomposition((np.eye(2), np.eye(2))).index == 0
    E = np.diag([1.0, 0.0])
    A = np.array([[-1.0, 0.0], [0.0, 1.0]])
    assert pencil_decomposition((E, A)).index == 1
    # nilpotent fast part of size 2: index 2
    E2 = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert pencil_decomposition((E2, np.eye(2))).index == 2


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def test_simulate_scalar_exponential():
    sys = DescriptorSystem([[1.0]], [[-1.0]], np.zeros((1, 0)), [[1.0]], np.zeros((1, 0)))
    sc = AttackScenario((), None, [1.0], 2.0, 1e-3)
    x, y = simulate(sys, sc)
    assert np.max(np.abs(x.values[:, 0] - np.exp(-x.t))) < 1e-6


def test_simulate_zero_equilibrium():
    rng = np.random.default_rng(1)
    sys = attack_model(np.eye(3), rng.standard_normal((3, 3)) - 3 * np.eye(3),
                       rng.standard_normal((2, 3)))
    sc = AttackScenario((), None, np.zeros(3), 1.0, 1e-2)
    x, y = simulate(sys, sc)
    assert x.sup_norm() == 0.0
    assert y.sup_norm() == 0.0


def test_simulate_consensus8_matches_matrix_exponential_oracle():
    from dsmon.scenarios import consensus8_matrices

    A, C, _ = consensus8_matrices(1e-4)
    sys = attack_model(np.eye(8), A, C)
    dt, T = 0.01, 10.0
    sc = AttackScenario((3,), ConstantSignal([1.0]), np.zeros(8), T, dt)
    x, y = simulate(sys, sc)
    # oracle: exact zero-order-hold propagation via the matrix exponential
    b = np.zeros(8)
    b[2] = 1.0
    M = np.zeros((9, 9))
    M[:8, :8] = A * dt
    M[:8, 8] = b * dt
    eM = scipy.linalg.expm(M)
    Ad, bd = eM[:8, :8], eM[:8, 8]
    xe = np.zeros(8)
    worst = 0.0
    for k in range(x.t.size - 1):
        xe = Ad @ xe + bd
        worst = max(worst, np.max(np.abs(y.values[k + 1] - C @ xe)))
    assert worst < 1e-5


@pytest.mark.parametrize("seed", range(10))
def test_simulate_linearity_superposition(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 4)) - 3 * np.eye(4)
    sys = attack_model(np.eye(4), A, rng.standard_normal((2, 4)))
    K = (1, 3)
    s1 = FourierSignal(2, seed=seed + 100, amplitude=1.0)
    s2 = SinusoidSignal([0.5, -0.3], 0.2)
    alpha, beta = 0.7, -1.3
    mix = LinComb(s1, s2, alpha, beta)
    runs = {}
    for name, sig in (("u1", s1), ("u2", s2), ("mix", mix)):
        sc = AttackScenario(K, sig, np.zeros(4), 4.0, 1e-2)
        runs[name], _ = simulate(sys, sc)
    lhs = runs["mix"].values
    rhs = alpha * runs["u1"].values + beta * runs["u2"].values
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_simulate_index1_dae_solves_constraint():
    # x1' = -x1 + u, 0 = -x2 + u  (x2 tracks the input algebraically)
    E = np.diag([1.0, 0.0])
    A = np.array([[-1.0, 0.0], [0.0, -1.0]])
    B = np.array([[1.0], [1.0]])
    sys = DescriptorSystem(E, A, B, np.eye(2), np.zeros((2, 1)))
    sc = AttackScenario((1,), SinusoidSignal(1.0, 0.25), [0.0, 0.0], 4.0, 1e-3)
    x, _ = simulate(sys, sc)
    u = np.array([np.sin(2 * np.pi * 0.25 * t) for t in x.t])
    assert np.max(np.abs(x.values[:, 1] - u)) < 1e-10
    xdot = np.gradient(x.values[:, 0], x.t)
    assert np.max(np.abs(xdot + x.values[:, 0] - u)[5:-5]) < 1e-3


def test_simulate_rejects_higher_index():
    E = np.array([[0.0, 1.0], [0.0, 0.0]])
    sys = DescriptorSystem(E, np.eye(2), np.zeros((2, 0)), np.eye(2), np.zeros((2, 0)))
    sc = AttackScenario((), None, np.zeros(2), 1.0, 1e-2)
    with pytest.raises(UnsupportedIndexError):
        simulate(sys, sc)


def test_simulate_rejects_inconsistent_x0():
    E = np.diag([1.0, 0.0])
    A = np.array([[-1.0, 0.0], [0.0, -1.0]])
    sys = DescriptorSystem(E, A, np.zeros((2, 0)), np.eye(2), np.zeros((2, 0)))
    sc = AttackScenario((), None, [1.0, 0.5], 1.0, 1e-2)
    with pytest.raises(InconsistentStateError):
        simulate(sys, sc)


def test_simulate_seeded_noise_is_reproducible():
    rng = np.random.default_rng(2)
    sys = attack_model(np.eye(3), rng.standard_normal((3, 3)) - 3 * np.eye(3),
                       np.eye(3))
    noise = NoiseSpec(0.01 * np.eye(3), 0.001 * np.eye(3), seed=5)
    sc = AttackScenario((), None, np.zeros(3), 2.0, 1e-2, noise=noise)
    x1, y1 = simulate(sys, sc)
    x2, y2 = simulate(sys, sc)
    assert np.array_equal(x1.values, x2.values)
    assert np.array_equal(y1.values, y2.values)
    assert y1.sup_norm() > 0.0


def test_foh_propagator_matches_rk4_for_smooth_forcing():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((3, 3)) - 2 * np.eye(3)
    grid = np.arange(0, 2.0 + 1e-12, 1e-3)
    F = np.column_stack([np.sin(grid), np.cos(2 * grid), 0.3 * grid])
    prop = FohPropagator(np.eye(3), A, 1e-3)
    X = prop.run(grid, np.zeros(3), F)
    from dsmon.core import as_signal, integrate_descriptor
    from scipy.interpolate import CubicSpline

    spl = CubicSpline(grid, F, axis=0)
    ref = integrate_descriptor(np.eye(3), A, as_signal(lambda t: spl(t), 3), grid, np.zeros(3))
    assert np.max(np.abs(X - ref.values)) < 1e-6


# ---------------------------------------------------------------------------
# signals and scenarios
# ---------------------------------------------------------------------------

def test_uniform_random_signal_is_deterministic_and_held():
    sig = UniformRandomSignal(0.0, 0.5, hold=0.1, dim=2, seed=9)
    sig2 = UniformRandomSignal(0.0, 0.5, hold=0.1, dim=2, seed=9)
    assert np.array_equal(sig(0.05), sig2(0.05))
    assert np.array_equal(sig(0.00), sig(0.09))
    a, b, c = sig.stage_values(0.1, 0.05)
    assert np.array_equal(a, b) and np.array_equal(b, c)


def test_onset_signal_gates_and_warns():
    import warnings as w

    sc = AttackScenario((2,), ConstantSignal([1.0]), np.zeros(3), 1.0, 0.1,
                        start_time=0.5)
    with w.catch_warnings(record=True) as log:
        w.simplefilter("always")
        sig = sc.input_signal(3)
        assert any("smooth" in str(item.message) for item in log)
    assert np.array_equal(sig(0.2), np.zeros(3))
    assert np.allclose(sig(0.7), [0.0, 1.0, 0.0])


def test_attack_scenario_validation():
    with pytest.raises(DimensionError):
        AttackScenario((0,), None, [0.0], 1.0, 0.1)
    with pytest.raises(DimensionError):
        AttackScenario((1, 1), None, [0.0], 1.0, 0.1)
    with pytest.raises(DimensionError):
        AttackScenario((1,), None, [0.0], 1.0, -0.1)
    with pytest.raises(DimensionError):
        AttackScenario((1,), None, [0.0], 1.0, 0.1, start_time=2.0)


def test_piecewise_signal_holds_left_value():
    sig = PiecewiseSignal([0.0, 1.0], [[1.0], [2.0]])
    assert sig(0.5)[0] == 1.0
    assert sig(1.0)[0] == 2.0
    a, b, c = sig.stage_values(0.9, 0.1)
    assert a[0] == b[0] == c[0] == 1.0


# ---------------------------------------------------------------------------
# interchange formats
# ---------------------------------------------------------------------------

def test_matrix_file_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    mats = {"E": np.eye(3), "A": rng.standard_normal((3, 3)),
            "B": rng.standard_normal((3, 2)), "C": rng.standard_normal((1, 3)),
            "D": np.zeros((1, 2))}
    path = tmp_path / "sys.json"
    save_matrices(path, mats)
    back = load_matrices(path)
    for k, v in mats.items():
        assert np.array_equal(back[k], np.atleast_2d(v))


def test_trajectory_csv_roundtrip(tmp_path):
    t = np.linspace(0.0, 1.0, 11)
    vals = np.column_stack([np.sin(t), np.cos(t)])
    traj = Trajectory(t, vals, "y")
    path = tmp_path / "y.csv"
    traj.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,y_1,y_2"
    back = Trajectory.from_csv(path)
    assert back.label == "y"
    assert np.array_equal(back.t, t)
    assert np.array_equal(back.values, vals)


def test_trajectory_validation():
    with pytest.raises(DimensionError):
        Trajectory([0.0, 0.0], [[1.0], [2.0]])
    with pytest.raises(DimensionError):
        Trajectory([0.0, 1.0], [[1.0]])


@pytest.mark.parametrize("seed", range(8))
def test_generated_systems_have_consistent_initial_states(seed):
    sys, rng = random_regular_index1(seed)
    x0 = consistent_x0(sys, rng)
    assert check_consistent(sys, x0, np.zeros(sys.m))
