"""Per-subsystem controller state and the two on-line phases.

Each controller owns its nominal state, planned error, stored disturbance
sequence, and cost-to-go bookkeeping. The phases are pure functions from
(state, inputs) to (outputs, next state), so controllers can run
concurrently within a round.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .model import Horizons, SubsystemModel
from .ocp import (AncillaryInfeasible, AncillarySolution, DisturbanceSequence,
                  Prediction, solve_ancillary, solve_main)
from .rci import RciDesign, ScalingConstants, selection_control


@dataclass
class ControllerState:
    """Controller memory across rounds.

    V_star is +inf until the first accepted ancillary solve; stored_w is
    the disturbance sequence the ancillary problem is known feasible for.
    """

    x_bar: np.ndarray
    e_bar: np.ndarray
    stored_w: DisturbanceSequence
    V_star: float
    scalings: ScalingConstants
    design_hat: RciDesign

    @classmethod
    def initial(cls, x0, N: int, scalings: ScalingConstants,
                design_hat: RciDesign) -> "ControllerState":
        x0 = np.asarray(x0, dtype=float).ravel()
        return cls(x_bar=x0.copy(), e_bar=np.zeros_like(x0),
                   stored_w=DisturbanceSequence.zero(N, x0.size),
                   V_star=np.inf, scalings=scalings, design_hat=design_hat)


@dataclass
class StepRecord:
    """Log entry produced by the ancillary phase of one round."""

    accepted: bool
    fallback_used: bool
    new_feasible: bool
    used_feasible: bool
    V_main: float
    V_anc: float
    V_star: float
    e_hat_norm: float
    sel_slack: float
    sel_relaxed: bool
    u_main: np.ndarray = field(default_factory=lambda: np.zeros(0))
    u_anc: np.ndarray = field(default_factory=lambda: np.zeros(0))
    u_rci: np.ndarray = field(default_factory=lambda: np.zeros(0))


def phase_main(cs: ControllerState, model: SubsystemModel,
               horizons: Horizons) -> Prediction:
    """Solve the nominal problem at the controller's nominal state; the
    resulting sequences are the message payload for the neighbours."""
    return solve_main(model, cs.scalings, horizons, cs.x_bar)


def phase_ancillary(cs: ControllerState, model: SubsystemModel,
                    horizons: Horizons, pred: Prediction,
                    w_new: DisturbanceSequence,
                    x_meas) -> tuple[np.ndarray, ControllerState, StepRecord]:
    """Ancillary solve, feedback synthesis, and state bookkeeping.

    The fresh disturbance sequence is accepted only when its problem is
    feasible and does not increase the certified cost; otherwise the
    stored sequence is reused, for which feasibility is guaranteed by the
    shifted previous solution. Both solves failing indicates a design or
    tolerance defect and is surfaced as a hard error.
    """
    x_meas = np.asarray(x_meas, dtype=float).ravel()

    new_feasible = True
    anc: AncillarySolution | None = None
    try:
        anc = solve_ancillary(model, cs.scalings, horizons, cs.e_bar, w_new)
    except AncillaryInfeasible:
        new_feasible = False

    accepted = new_feasible and anc.cost <= cs.V_star
    used_feasible = True
    if accepted:
        used_w = w_new
        V_star = anc.cost
        V_anc = anc.cost
    else:
        used_w = cs.stored_w
        V_star = cs.V_star
        try:
            anc = solve_ancillary(model, cs.scalings, horizons, cs.e_bar, used_w)
            V_anc = anc.cost
        except AncillaryInfeasible:
            raise RuntimeError(
                f"subsystem {model.id}: ancillary problem infeasible for both the new "
                "and the stored disturbance sequence; recursive feasibility is broken")

    e_hat = x_meas - cs.x_bar - cs.e_bar
    sel = selection_control(cs.design_hat, e_hat)
    u_main = pred.u_seq[0]
    u_anc = anc.f_seq[0]
    u_apply = u_main + u_anc + sel.f_hat

    w0 = used_w.entry(0)
    x_bar_next = model.A @ cs.x_bar + model.B @ u_main
    e_bar_next = model.A @ cs.e_bar + model.B @ u_anc + w0
    stage = model.stage_cost(cs.e_bar, u_anc)
    V_star_next = V_star if np.isinf(V_star) else V_star - stage

    cs_next = replace(cs, x_bar=x_bar_next, e_bar=e_bar_next,
                      stored_w=used_w.tail(), V_star=V_star_next)
    record = StepRecord(accepted=accepted, fallback_used=not accepted,
                        new_feasible=new_feasible, used_feasible=used_feasible,
                        V_main=pred.cost, V_anc=V_anc, V_star=V_star,
                        e_hat_norm=float(np.abs(e_hat).max(initial=0.0)),
                        sel_slack=sel.slack, sel_relaxed=sel.relaxed,
                        u_main=u_main.copy(), u_anc=u_anc.copy(),
                        u_rci=sel.f_hat.copy())
    return u_apply, cs_next, record
