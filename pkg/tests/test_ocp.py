"""Discretization, OCP transcription, and disturbance-sequence plumbing."""

import numpy as np
import pytest

from nestmpc.model import Horizons, SubsystemModel, discretize_network, discretize_zoh
from nestmpc.ocp import (AncillaryInfeasible, DisturbanceSequence,
                         MainInfeasible, assemble_disturbance,
                         solve_ancillary, solve_main)
from nestmpc.rci import ScalingConstants
from nestmpc.sets import Box

from oracles import qp_active_set_oracle


def test_zoh_double_integrator_closed_form():
    Ts = 0.3
    A, B = discretize_zoh([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], Ts)
    np.testing.assert_allclose(A, [[1.0, Ts], [0.0, 1.0]], atol=1e-12)
    np.testing.assert_allclose(B, [[Ts ** 2 / 2.0], [Ts]], atol=1e-12)


def test_zoh_scalar_closed_form():
    a, b, Ts = -2.0, 3.0, 0.25
    A, B = discretize_zoh([[a]], [[b]], Ts)
    assert A[0, 0] == pytest.approx(np.exp(a * Ts), abs=1e-12)
    assert B[0, 0] == pytest.approx((np.exp(a * Ts) - 1.0) * b / a, abs=1e-12)
    with pytest.raises(ValueError):
        discretize_zoh([[a]], [[b]], 0.0)


def _coupled_pair():
    X = Box([-1.0], [1.0])
    U = Box([-1.0], [1.0])
    mk = lambda i, j, g: SubsystemModel(
        id=i, A=[[-1.0]], B=[[1.0]],
        couplings={j: (np.array([[g]]), np.array([[0.0]]))},
        X=X, U=U, Q=np.eye(1), R=np.eye(1))
    return {1: mk(1, 2, 0.3), 2: mk(2, 1, 0.5)}


def test_discretize_network_matches_stacked_exact():
    models = discretize_network(_coupled_pair(), Ts=0.2)
    A_full = np.array([[-1.0, 0.3], [0.5, -1.0]])
    B_full = np.eye(2)
    Ad, Bd = discretize_zoh(A_full, B_full, 0.2)
    np.testing.assert_allclose(models[1].A, Ad[:1, :1], atol=1e-12)
    np.testing.assert_allclose(models[1].couplings[2][0], Ad[:1, 1:], atol=1e-12)
    np.testing.assert_allclose(models[2].couplings[1][1], Bd[1:, :1], atol=1e-12)


def test_horizons_validation():
    Horizons(N=3, H=4)
    with pytest.raises(ValueError):
        Horizons(N=3, H=3)
    with pytest.raises(ValueError):
        Horizons(N=0, H=5)


def _double_integrator_model(u_lim=1.0):
    A, B = discretize_zoh([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], 0.2)
    return SubsystemModel(id=1, A=A, B=B, couplings={},
                          X=Box([-5.0, -5.0], [5.0, 5.0]),
                          U=Box([-u_lim], [u_lim]), Q=np.eye(2), R=np.eye(1))


FULL = ScalingConstants(1.0, 1.0, 0.0, 0.0, 0.0, 0.0)


def test_main_at_origin_is_zero():
    m = _double_integrator_model()
    pred = solve_main(m, FULL, Horizons(N=8, H=9), np.zeros(2))
    assert np.abs(pred.x_seq).max() <= 1e-7
    assert np.abs(pred.u_seq).max() <= 1e-7
    assert pred.cost == pytest.approx(0.0, abs=1e-9)


def test_main_matches_brute_force_oracle():
    # short horizon, small dimensions: compare against active-set enumeration
    m = SubsystemModel(id=1, A=[[1.0]], B=[[1.0]], couplings={},
                       X=Box([-4.0], [4.0]), U=Box([-1.0], [1.0]),
                       Q=np.eye(1), R=np.eye(1))
    hz = Horizons(N=2, H=3)
    pred = solve_main(m, FULL, hz, [2.0])
    # variables (x0, x1, x2, u0, u1), dynamics + pin x0, x2 = 0
    P = np.diag([1.0, 1.0, 0.0, 1.0, 1.0])
    q = np.zeros(5)
    Aeq = np.array([[1, 0, 0, 0, 0],
                    [-1, 1, 0, -1, 0],
                    [0, -1, 1, 0, -1],
                    [0, 0, 1, 0, 0]], dtype=float)
    beq = np.array([2.0, 0.0, 0.0, 0.0])
    Gin = np.zeros((6, 5))
    Gin[0, 1] = 1.0
    Gin[1, 1] = -1.0
    Gin[2:4, 3] = [1.0, -1.0]
    Gin[4:6, 4] = [1.0, -1.0]
    hin = np.array([4.0, 4.0, 1.0, 1.0, 1.0, 1.0])
    _, obj = qp_active_set_oracle(P, q, Aeq, beq, Gin, hin)
    assert pred.cost == pytest.approx(obj, abs=1e-6)


def test_main_rollout_and_terminal_pin():
    m = _double_integrator_model()
    pred = solve_main(m, FULL, Horizons(N=10, H=11), [1.0, -0.5])
    assert pred.rollout_residual(m.A, m.B) <= 1e-9
    assert (pred.x_seq[-1] == 0.0).all()


def test_main_infeasible_when_input_too_weak():
    m = _double_integrator_model(u_lim=0.05)
    with pytest.raises(MainInfeasible):
        solve_main(m, FULL, Horizons(N=3, H=4), [4.0, 0.0])


def test_disturbance_sequence_contract():
    with pytest.raises(ValueError, match="zero"):
        DisturbanceSequence(np.array([[1.0], [0.5]]))
    w = DisturbanceSequence(np.array([[1.0], [0.5], [0.0]]))
    assert w.N == 2
    np.testing.assert_allclose(w.entry(0), [1.0])
    np.testing.assert_allclose(w.entry(7), [0.0])
    tail = w.tail()
    np.testing.assert_allclose(tail.w_seq, [[0.5], [0.0], [0.0]])
    z = DisturbanceSequence.zero(3, 2)
    assert z.w_seq.shape == (4, 2)


def test_disturbance_membership_check():
    from nestmpc.sets import ConvexSet
    W = ConvexSet(np.array([[0.2], [-0.2]]))
    good = DisturbanceSequence(np.array([[0.1], [0.0]]))
    bad = DisturbanceSequence(np.array([[0.5], [0.0]]))
    assert good.max_membership_violation(W) == 0.0
    assert bad.max_membership_violation(W) == pytest.approx(0.5)


def test_assemble_disturbance_matches_manual_sum():
    models = _coupled_pair()
    m = models[1]
    N = 3
    x = np.arange(4, dtype=float).reshape(4, 1)
    u = np.array([[0.1], [0.2], [0.3]])
    x[N] = 0.0
    from nestmpc.ocp import Prediction
    pred = Prediction(x_seq=x, u_seq=u, cost=0.0)
    w = assemble_disturbance(m, {2: pred})
    Aij, Bij = m.couplings[2]
    for k in range(N):
        np.testing.assert_allclose(w.entry(k), Aij @ x[k] + Bij @ u[k], atol=1e-14)
    assert (w.w_seq[N] == 0.0).all()


def test_assemble_disturbance_requires_all_neighbours():
    models = _coupled_pair()
    with pytest.raises(KeyError):
        assemble_disturbance(models[1], {})


def test_assemble_disturbance_no_neighbours_is_zero():
    m = _double_integrator_model()
    w = assemble_disturbance(m, {}, N=5)
    assert w.w_seq.shape == (6, 2)
    assert not w.w_seq.any()


def test_ancillary_rejects_error_with_zero_budget():
    # beta = 0 pins the error sequence to zero; a nonzero start is infeasible
    m = _double_integrator_model()
    zero = ScalingConstants(1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
    hz = Horizons(N=3, H=4)
    w = DisturbanceSequence.zero(hz.N, 2)
    sol = solve_ancillary(m, zero, hz, np.zeros(2), w)
    assert np.abs(sol.e_seq).max() <= 1e-9
    with pytest.raises(AncillaryInfeasible):
        solve_ancillary(m, zero, hz, [0.1, 0.0], w)


def test_ancillary_tracks_disturbance_dynamics():
    m = _double_integrator_model()
    sc = ScalingConstants(0.5, 0.5, 0.5, 0.5, 0.0, 0.0)
    hz = Horizons(N=6, H=10)
    w_seq = np.zeros((hz.N + 1, 2))
    w_seq[0] = [0.05, -0.02]
    w = DisturbanceSequence(w_seq)
    sol = solve_ancillary(m, sc, hz, [0.1, 0.0], w)
    # dynamics with the disturbance must hold exactly
    for k in range(hz.H):
        step = m.A @ sol.e_seq[k] + m.B @ sol.f_seq[k] + w.entry(k)
        np.testing.assert_allclose(sol.e_seq[k + 1], step, atol=1e-7)
    assert (sol.e_seq[-1] == 0.0).all()
    # errors stay inside the beta-scaled box
    assert np.abs(sol.e_seq).max() <= 0.5 * 5.0 + 1e-7
