"""Decoupled-limitation, reconstruction and cooperative-protocol tests."""

import numpy as np
import pytest

from dsmon.core import (
    AttackScenario,
    DescriptorSystem,
    Signal,
    SinusoidSignal,
    attack_model,
    simulate,
)
from dsmon.detection import Partition
from dsmon.errors import GridResolutionError
from dsmon.geometry import Subspace, output_nulling_invariant, principal_angle
from dsmon.regional import (
    DerivativeReconstructor,
    build_region_model,
    check_decoupled_limitations,
    cooperative_round,
    estimate_region_state,
    local_identify,
    reconstruct_states,
)
from dsmon.scenarios import tworegion16_matrices, _ring_matrices


@pytest.fixture(scope="module")
def tworegion():
    A, C, measured = tworegion16_matrices(7)
    sys = attack_model(np.eye(16), A, C)
    part = Partition.build(sys, [list(range(1, 9)), list(range(9, 17))])
    return sys, part


# ---------------------------------------------------------------------------
# decoupled limitations
# ---------------------------------------------------------------------------

def test_boundary_attack_triggers_L5(tworegion):
    sys, part = tworegion
    region1 = build_region_model(sys, part, 1)
    assert set(region1.boundary) == {3, 4}
    rep = check_decoupled_limitations(region1, (3,))
    assert rep.l5
    assert not rep.l3 and not rep.l4


def test_isolated_zero_free_region_grants_L3():
    rng = np.random.default_rng(0)
    A = np.zeros((6, 6))
    A[:3, :3] = rng.standard_normal((3, 3)) - 2 * np.eye(3)
    A[3:, 3:] = rng.standard_normal((3, 3)) - 2 * np.eye(3)
    sys = attack_model(np.eye(6), A, np.eye(6))
    part = Partition.build(sys, [[1, 2, 3], [4, 5, 6]])
    region = build_region_model(sys, part, 1)
    assert region.B_b.shape[1] == 0
    rep = check_decoupled_limitations(region, (1,))
    assert not rep.l5
    assert rep.l3


def test_external_attack_triggers_L6(tworegion):
    sys, part = tworegion
    region2 = build_region_model(sys, part, 2)
    rep = check_decoupled_limitations(region2, (1,), global_attack=(3,))
    assert rep.l6 is True
    rep2 = check_decoupled_limitations(region2, (1,), global_attack=(9,))
    assert rep2.l6 is False


def test_limitation_budget(tworegion):
    sys, part = tworegion
    region1 = build_region_model(sys, part, 1)
    from dsmon.errors import BudgetExceededError

    with pytest.raises(BudgetExceededError):
        check_decoupled_limitations(region1, (1, 2, 3), budget=5)


# ---------------------------------------------------------------------------
# derivative reconstruction
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_reconstructor_row_space_complements_output_nulling(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    m = int(rng.integers(0, 2))
    p = int(rng.integers(1, 4))
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = rng.standard_normal((p, m)) if (m and seed % 2) else np.zeros((p, m))
    rec = DerivativeReconstructor(A, B, C, D)
    V = output_nulling_invariant(A, B, C, D)
    assert rec.T.shape[0] + V.dim == n
    assert principal_angle(rec.unreconstructible(), V) <= 1e-7


def test_reconstructor_classical_observability():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3)) - 2 * np.eye(3)
    C = np.array([[1.0, 0.0, 0.0]])
    rec = DerivativeReconstructor(A, np.zeros((3, 0)), C, np.zeros((1, 0)))
    assert rec.T.shape[0] == 3
    sys = DescriptorSystem(np.eye(3), A, np.zeros((3, 0)), C, np.zeros((1, 0)))
    sc = AttackScenario((), None, [1.0, -0.4, 0.6], 6.0, 5e-4)
    x, y = simulate(sys, sc)
    X = rec.reconstruct(y.values, 5e-4)
    assert np.max(np.abs(X - x.values)) <= 1e-4


def test_reconstructor_blind_system_returns_zero():
    # C = 0: the whole space is uncertain and the estimate is zero
    rng = np.random.default_rng(4)
    A = rng.standard_normal((3, 3))
    rec = DerivativeReconstructor(A, rng.standard_normal((3, 1)),
                                  np.zeros((1, 3)), np.zeros((1, 1)))
    assert rec.T.shape[0] == 0
    X = rec.reconstruct(np.zeros((50, 1)), 0.01)
    assert not np.any(X)


def test_reconstructor_grid_resolution_error():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((3, 3))
    C = np.array([[1.0, 0.0, 0.0]])
    rec = DerivativeReconstructor(A, np.zeros((3, 0)), C, np.zeros((1, 0)))
    with pytest.raises(GridResolutionError):
        rec.reconstruct(np.zeros((3, 1)), 0.01)


def test_reconstruct_states_partitioned_toy():
    rng = np.random.default_rng(4)
    n1, n2, m = 3, 1, 1
    A11 = rng.standard_normal((n1, n1)) - 2 * np.eye(n1)
    A12 = rng.standard_normal((n1, n2))
    A21 = rng.standard_normal((n2, n1))
    A22 = np.array([[1.5]])
    B1 = rng.standard_normal((n1, m))
    B2 = rng.standard_normal((n2, m))
    C1 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    C2 = np.zeros((2, n2))
    D = np.zeros((2, m))
    E = np.block([[np.eye(n1), np.zeros((n1, n2))], [np.zeros((n2, n1 + n2))]])
    A = np.block([[A11, A12], [A21, A22]])
    sys = DescriptorSystem(E, A, np.vstack([B1, B2]), np.hstack([C1, C2]), D)
    x1_0 = np.array([0.8, -0.4, 0.2])
    x2_0 = -np.linalg.solve(A22, A21 @ x1_0)
    sc = AttackScenario((1,), SinusoidSignal(0.5, 0.1), np.concatenate([x1_0, x2_0]),
                        8.0, 1e-3)
    x, y = simulate(sys, sc)
    res = reconstruct_states(A11, A12, A21, A22, B1, B2, C1, C2, D, y)
    P1 = np.eye(n1) - res.V1.basis @ res.V1.basis.T
    P2 = np.eye(n2) - res.V2.basis @ res.V2.basis.T
    assert np.max(np.abs(res.x1_hat.values - x.values[:, :n1] @ P1.T)) <= 1e-3
    assert np.max(np.abs(res.x2_hat.values - x.values[:, n1:] @ P2.T)) <= 1e-3


def test_reconstruct_states_algebraic_sign():
    # no inputs into the constraint: x2 is fully determined by x1 and the
    # recovered value must match the true solution including its sign
    A11 = np.array([[-1.0]])
    A12 = np.array([[0.5]])
    A21 = np.array([[2.0]])
    A22 = np.array([[-4.0]])
    C1 = np.array([[1.0]])
    C2 = np.zeros((1, 1))
    E = np.diag([1.0, 0.0])
    A = np.block([[A11, A12], [A21, A22]])
    sys = DescriptorSystem(E, A, np.zeros((2, 0)), np.hstack([C1, C2]),
                           np.zeros((1, 0)))
    x0 = np.array([1.0, 0.5])  # satisfies 2*x1 - 4*x2 = 0
    sc = AttackScenario((), None, x0, 4.0, 1e-3)
    x, y = simulate(sys, sc)
    res = reconstruct_states(A11, A12, A21, A22, np.zeros((1, 0)), np.zeros((1, 0)),
                             C1, C2, np.zeros((1, 0)), y)
    assert res.V1.dim == 0 and res.V2.dim == 0
    assert np.max(np.abs(res.x1_hat.values[:, 0] - x.values[:, 0])) <= 1e-3
    assert np.max(np.abs(res.x2_hat.values[:, 0] - x.values[:, 1])) <= 1e-3


def test_reconstruct_states_fully_uncertain_x1():
    # C1 = 0 and no constraint coupling: everything lands in the
    # uncertainty subspace and the estimate is zero
    rng = np.random.default_rng(6)
    A11 = rng.standard_normal((2, 2))
    y = __import__("dsmon.core", fromlist=["Trajectory"]).Trajectory(
        np.linspace(0, 1, 101), np.zeros((101, 1)), "y")
    res = reconstruct_states(A11, np.zeros((2, 0)), np.zeros((0, 2)),
                             np.zeros((0, 0)), rng.standard_normal((2, 1)),
                             np.zeros((0, 1)), np.zeros((1, 2)), np.zeros((1, 0)),
                             np.zeros((1, 1)), y)
    assert res.V1.dim == 2
    assert not np.any(res.x1_hat.values)


def test_estimate_region_state_descriptor_region():
    # region with one algebraic node: estimation handles singular E_i
    rng = np.random.default_rng(8)
    A11 = rng.standard_normal((2, 2)) - 2 * np.eye(2)
    A = np.block([[A11, rng.standard_normal((2, 1))],
                  [rng.standard_normal((1, 2)), np.array([[-2.0]])]])
    E = np.diag([1.0, 1.0, 0.0])
    C = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    sys = attack_model(E, A, C)
    part = Partition.build(sys, [[1, 2, 3]])
    region = build_region_model(sys, part, 1)
    x1_0 = np.array([0.4, -0.3])
    x3_0 = -(A[2, :2] @ x1_0) / A[2, 2]
    sc = AttackScenario((), None, np.append(x1_0, x3_0), 4.0, 1e-3)
    x, y = simulate(sys, sc)
    est = estimate_region_state(region, y)
    assert est.F.dim == 0
    assert np.max(np.abs(est.x_hat.values - x.values)) <= 1e-3


# ---------------------------------------------------------------------------
# cooperative protocol
# ---------------------------------------------------------------------------

def _chain3_system(seed=2):
    """3-region chain with partial measurements per region."""
    rng = np.random.default_rng(seed)
    size = 3
    n = 3 * size
    A = np.zeros((n, n))
    for i in range(3):
        blk = rng.uniform(-0.5, 0.5, (size, size))
        A[i * size:(i + 1) * size, i * size:(i + 1) * size] = \
            blk - np.diag(np.abs(blk).sum(axis=1) + 1.0)
    # chain coupling 1 -> 2 -> 3 and back, single-entry columns
    A[size, 0] = 0.15        # region 2 reads node 1
    A[0, size] = 0.12        # region 1 reads node 4
    A[2 * size, size + 1] = 0.15   # region 3 reads node 5
    A[size + 1, 2 * size] = 0.12   # region 2 reads node 7
    C = np.eye(n)
    sys = attack_model(np.eye(n), A, C)
    part = Partition.build(sys, [[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    return sys, part


def test_cooperative_no_attack_all_safe():
    sys, part = _chain3_system()
    rng = np.random.default_rng(0)
    x0 = rng.uniform(-1, 1, 9)
    sc = AttackScenario((), None, x0, 10.0, 0.01)
    x, y = simulate(sys, sc)
    verdict = cooperative_round(sys, part, y, x0, threshold_rel=1e-6)
    assert verdict.suspect_regions == ()
    assert all(c == "C1" for c in verdict.criteria.values())


def test_cooperative_single_corrupted_region_neighbors_cleared():
    sys, part = _chain3_system()
    rng = np.random.default_rng(1)
    x0 = rng.uniform(-1, 1, 9)
    # interior state attack in region 2 (node 6 has no outgoing coupling)
    sc = AttackScenario((6,), SinusoidSignal(0.8, 0.2), x0, 10.0, 0.01)
    x, y = simulate(sys, sc)
    verdict = cooperative_round(sys, part, y, x0, threshold_rel=1e-6)
    assert verdict.suspect_regions == (2,)
    assert set(verdict.safe_regions) == {1, 3}


def test_cooperative_estimates_correct_for_uncorrupted_regions():
    sys, part = _chain3_system()
    rng = np.random.default_rng(5)
    x0 = rng.uniform(-1, 1, 9)
    sc = AttackScenario((6,), SinusoidSignal(0.8, 0.2), x0, 10.0, 0.01)
    x, y = simulate(sys, sc)
    verdict = cooperative_round(sys, part, y, x0, threshold_rel=1e-6)
    for reg in (1, 3):
        est = verdict.estimates[reg]
        idx = np.asarray(part.regions[reg - 1]) - 1
        proj = np.eye(idx.size) - est.F.basis @ est.F.basis.T
        err = np.max(np.abs(est.x_hat.values - x.values[:, idx] @ proj.T))
        assert err <= 1e-3
        # the estimate lives in the complement of its uncertainty subspace
        if est.F.dim:
            assert np.max(np.abs(est.x_hat.values @ est.F.basis)) <= 1e-8


def test_cooperative_messages_are_ordered_and_follow_edges():
    sys, part = _chain3_system()
    sc = AttackScenario((), None, np.zeros(9), 5.0, 0.01)
    x, y = simulate(sys, sc)
    verdict = cooperative_round(sys, part, y, np.zeros(9))
    assert verdict.messages == sorted(verdict.messages)
    pairs = {(s, r) for (_, s, r, _, _) in verdict.messages}
    assert (1, 2) in pairs and (2, 1) in pairs and (2, 3) in pairs
    assert (1, 3) not in pairs


def test_cooperative_two_distant_corrupted_regions_ring():
    A, C, regions = _ring_matrices(5, 4, 0.05, 7)
    sys = attack_model(np.eye(20), A, C)
    part = Partition.build(sys, regions)
    rng = np.random.default_rng(11)
    x0 = rng.uniform(-1, 1, 20)

    class TwoSig(Signal):
        dim = 2

        def __call__(self, t):
            return np.array([0.8 * np.sin(0.5 * t), 0.6 * np.cos(0.4 * t) + 0.3])

    sc = AttackScenario((2, 10), TwoSig(), x0, 20.0, 0.01)
    x, y = simulate(sys, sc)
    verdict = cooperative_round(sys, part, y, x0, threshold_rel=1e-6)
    assert set(verdict.suspect_regions) == {1, 3}
    loc1 = local_identify(sys, part, 1, verdict.estimates, y, x0, cardinality=1)
    loc3 = local_identify(sys, part, 3, verdict.estimates, y, x0, cardinality=1)
    assert loc1.estimate == (2,)   # node 2 is local channel 2 of region 1
    assert loc3.estimate == (2,)   # node 10 is local channel 2 of region 3


def _line5_system(seed=13):
    """5-region line, fully measured, bidirectional single-entry couplings."""
    rng = np.random.default_rng(seed)
    size, N = 3, 5
    n = size * N
    A = np.zeros((n, n))
    for i in range(N):
        blk = rng.uniform(-0.5, 0.5, (size, size))
        A[i * size:(i + 1) * size, i * size:(i + 1) * size] = \
            blk - np.diag(np.abs(blk).sum(axis=1) + 1.0)
    for i in range(N - 1):
        A[(i + 1) * size, i * size + 1] = 0.15      # i -> i+1
        A[i * size + 2, (i + 1) * size + 1] = 0.12  # i+1 -> i
    sys = attack_model(np.eye(n), A, np.eye(n))
    part = Partition.build(sys, [list(range(i * size + 1, (i + 1) * size + 1))
                                 for i in range(N)])
    return sys, part


def test_cooperative_output_attack_cleared_by_C2():
    # an output attack in the middle region corrupts the transmitted
    # estimate: both neighbors fire but are cleared by their mixed
    # out-neighbor pattern, leaving only the corrupted region suspect
    sys, part = _line5_system()
    n = sys.n
    rng = np.random.default_rng(2)
    x0 = rng.uniform(-1, 1, n)
    attacked_output = n + 8  # measurement of node 8 (middle of region 3)
    sc = AttackScenario((attacked_output,), SinusoidSignal(0.6, 0.15), x0, 10.0, 0.01)
    x, y = simulate(sys, sc)
    verdict = cooperative_round(sys, part, y, x0, threshold_rel=1e-6)
    assert verdict.suspect_regions == (3,)
    assert verdict.criteria[2] == "C2"
    assert verdict.criteria[4] == "C2"
    assert verdict.criteria[1] == "C1"
    assert verdict.criteria[5] == "C1"
    # residual dichotomy for the corrupted region's out-neighbors
    zero = {i: verdict.residual_sup[i] <= verdict.thresholds[i]
            for i in verdict.residual_sup}
    outs = [j + 1 for j in part.out_neighbors[2]]
    flags = [zero[j] for j in outs]
    assert all(f == flags[0] for f in flags)
    # S4 finds the corrupted output channel (local channel n_i + row 2)
    loc = local_identify(sys, part, 3, verdict.estimates, y, x0, cardinality=1)
    assert loc.estimate == (3 + 2,)


def test_local_identify_on_safe_region_returns_empty():
    sys, part = _chain3_system()
    rng = np.random.default_rng(3)
    x0 = rng.uniform(-1, 1, 9)
    sc = AttackScenario((), None, x0, 10.0, 0.01)
    x, y = simulate(sys, sc)
    verdict = cooperative_round(sys, part, y, x0)
    loc = local_identify(sys, part, 2, verdict.estimates, y, x0, cardinality=1)
    # all candidates null the (nonexistent) attack: intersection is empty
    assert loc.estimate == ()
    assert len(loc.zero_sets) == loc.local_filter_count


def test_local_identify_filter_count_arithmetic():
    sys, part = _chain3_system()
    rng = np.random.default_rng(6)
    x0 = rng.uniform(-1, 1, 9)
    sc = AttackScenario((6,), SinusoidSignal(0.8, 0.2), x0, 10.0, 0.01)
    x, y = simulate(sys, sc)
    verdict = cooperative_round(sys, part, y, x0, threshold_rel=1e-6)
    loc = local_identify(sys, part, 2, verdict.estimates, y, x0, cardinality=1)
    import math

    n_i = 3
    p_i = 3
    assert loc.local_filter_count == math.comb(n_i + p_i, 1)
    assert loc.centralized_filter_count == math.comb(9 + 9, 1)
    assert loc.local_filter_count < loc.centralized_filter_count
    assert loc.estimate == (3,)  # node 6 is local channel 3 of region 2


def test_cooperative_precondition_reports():
    sys, part = _chain3_system()
    sc = AttackScenario((), None, np.zeros(9), 5.0, 0.01)
    x, y = simulate(sys, sc)
    verdict = cooperative_round(sys, part, y, np.zeros(9),
                                hypotheses={2: (3,)})
    assert 2 in verdict.precondition_reports
