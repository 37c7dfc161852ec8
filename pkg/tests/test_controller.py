"""Accept/reject logic, cost bookkeeping, and feedback composition."""

import numpy as np
import pytest

from nestmpc.controller import ControllerState, phase_ancillary, phase_main
from nestmpc.model import Horizons, SubsystemModel
from nestmpc.ocp import DisturbanceSequence
from nestmpc.rci import design_scalings
from nestmpc.sets import Box


@pytest.fixture(scope="module")
def setup():
    X = Box([-1.0], [1.0])
    U = Box([-1.0], [1.0])
    mk = lambda i, j: SubsystemModel(
        id=i, A=[[0.5]], B=[[1.0]],
        couplings={j: (np.array([[0.05]]), np.array([[0.0]]))},
        X=X, U=U, Q=np.eye(1), R=np.eye(1))
    models = {1: mk(1, 2), 2: mk(2, 1)}
    designs = design_scalings(models, h=3)
    hz = Horizons(N=5, H=6)
    return models, designs, hz


def _fresh(setup, i=1, x0=0.4):
    models, designs, hz = setup
    cs = ControllerState.initial([x0], hz.N, designs[i].scalings, designs[i].hat)
    return models[i], cs, hz


def test_initial_state_contract(setup):
    _, cs, hz = _fresh(setup)
    assert np.isinf(cs.V_star)
    assert not cs.e_bar.any()
    assert cs.stored_w.w_seq.shape == (hz.N + 1, 1)
    assert not cs.stored_w.w_seq.any()


def test_first_round_accepts_any_feasible_sequence(setup):
    m, cs, hz = _fresh(setup)
    pred = phase_main(cs, m, hz)
    w = DisturbanceSequence.zero(hz.N, 1)
    u, cs2, rec = phase_ancillary(cs, m, hz, pred, w, cs.x_bar)
    assert rec.accepted and not rec.fallback_used
    assert np.isfinite(cs2.V_star)
    # perfect measurement: no unplanned error, no invariance action
    assert rec.e_hat_norm <= 1e-12
    assert np.abs(rec.u_rci).max() <= 1e-8


def test_nominal_state_update(setup):
    m, cs, hz = _fresh(setup)
    pred = phase_main(cs, m, hz)
    w = DisturbanceSequence.zero(hz.N, 1)
    _, cs2, rec = phase_ancillary(cs, m, hz, pred, w, cs.x_bar)
    expect = m.A @ cs.x_bar + m.B @ pred.u_seq[0]
    np.testing.assert_allclose(cs2.x_bar, expect, atol=1e-12)
    np.testing.assert_allclose(cs2.x_bar, pred.x_seq[1], atol=1e-7)


def test_reject_reuses_stored_sequence(setup):
    m, cs, hz = _fresh(setup)
    pred = phase_main(cs, m, hz)
    # an adversarially low certified cost forces the reject path
    cs.V_star = 0.0
    w_seq = np.zeros((hz.N + 1, 1))
    w_seq[0] = 0.01
    w_new = DisturbanceSequence(w_seq)
    _, cs2, rec = phase_ancillary(cs, m, hz, pred, w_new, cs.x_bar)
    assert not rec.accepted and rec.fallback_used
    assert rec.new_feasible
    # the stored (zero) sequence was used, so its tail is stored again
    assert not cs2.stored_w.w_seq.any()


def test_infeasible_new_sequence_falls_back(setup):
    m, cs, hz = _fresh(setup)
    pred = phase_main(cs, m, hz)
    # a disturbance far beyond the ancillary budget is infeasible
    w_seq = np.zeros((hz.N + 1, 1))
    w_seq[:hz.N] = 5.0
    _, _, rec = phase_ancillary(cs, m, hz, pred,
                                DisturbanceSequence(w_seq), cs.x_bar)
    assert not rec.new_feasible
    assert not rec.accepted and rec.fallback_used


def test_double_infeasibility_is_a_hard_error(setup):
    m, cs, hz = _fresh(setup)
    pred = phase_main(cs, m, hz)
    # planned error beyond the budget makes every ancillary problem infeasible
    cs.e_bar = np.array([0.9])
    w_seq = np.zeros((hz.N + 1, 1))
    w_seq[:hz.N] = 5.0
    with pytest.raises(RuntimeError, match="recursive feasibility"):
        phase_ancillary(cs, m, hz, pred, DisturbanceSequence(w_seq), cs.x_bar)


def test_vstar_decreases_by_stage_cost(setup):
    m, cs, hz = _fresh(setup)
    pred = phase_main(cs, m, hz)
    w = DisturbanceSequence.zero(hz.N, 1)
    _, cs2, rec = phase_ancillary(cs, m, hz, pred, w, cs.x_bar)
    stage = m.stage_cost(cs.e_bar, rec.u_anc)
    assert cs2.V_star == pytest.approx(rec.V_anc - stage, abs=1e-12)


def test_unplanned_error_triggers_selection_feedback(setup):
    models, designs, hz = setup
    m, cs, _ = _fresh(setup)
    pred = phase_main(cs, m, hz)
    w = DisturbanceSequence.zero(hz.N, 1)
    offset = 0.5 * designs[1].scalings.xi_x
    u, _, rec = phase_ancillary(cs, m, hz, pred, w, cs.x_bar + offset)
    assert rec.e_hat_norm == pytest.approx(offset, abs=1e-12)
    assert not rec.sel_relaxed
    np.testing.assert_allclose(u, rec.u_main + rec.u_anc + rec.u_rci, atol=1e-12)
