"""Round-synchronous execution of the distributed algorithm.

Every round runs three barrier-separated stages: all main solves, message
exchange over the neighbour graph, then all ancillary solves against the
measured plant state. The plant truth is advanced by the full stacked
model; the per-subsystem view of the same update is asserted, never
integrated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .controller import ControllerState, StepRecord, phase_ancillary, phase_main
from .model import Horizons, SubsystemModel, stack_network
from .ocp import DisturbanceSequence, Prediction, assemble_disturbance

_CONSISTENCY_TOL = 1e-12


class ConstraintViolation(RuntimeError):
    """A true state or applied input left its constraint box."""


@dataclass
class Message:
    sender: int
    round: int
    x_seq: np.ndarray
    u_seq: np.ndarray


@dataclass
class PlantState:
    x: np.ndarray
    t: int


class MessageBus:
    """In-process mailbox with a narrow deliver/collect interface."""

    def __init__(self):
        self._boxes: dict[int, list[Message]] = {}

    def deliver(self, recipient: int, msg: Message):
        self._boxes.setdefault(recipient, []).append(msg)

    def collect(self, recipient: int) -> list[Message]:
        return self._boxes.pop(recipient, [])


@dataclass
class RoundLog:
    t: int
    plant_x: np.ndarray
    records: dict[int, StepRecord]
    states: dict[int, dict]


@dataclass
class Trace:
    """Rectangular per-(round, subsystem) record set with CSV export."""

    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([_fmt(v) for v in row])

    def column(self, name: str) -> list:
        idx = self.columns.index(name)
        return [r[idx] for r in self.rows]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


class Coordinator:
    """Owns the plant, the controllers, and the round schedule."""

    def __init__(self, models: dict[int, SubsystemModel],
                 controllers: dict[int, ControllerState], horizons: Horizons,
                 x0_full: np.ndarray):
        self.models = models
        self.controllers = controllers
        self.horizons = horizons
        self.A, self.B, self.xs, self.us = stack_network(models)
        self.plant = PlantState(x=np.asarray(x0_full, dtype=float).copy(), t=0)
        self.bus = MessageBus()

    def run_round(self) -> RoundLog:
        ids = sorted(self.models)
        t = self.plant.t

        # stage 1: all main solves
        preds: dict[int, Prediction] = {}
        for i in ids:
            try:
                preds[i] = phase_main(self.controllers[i], self.models[i], self.horizons)
            except Exception as exc:
                raise type(exc)(f"round {t}: {exc}") from exc

        # stage 2: neighbour-graph message exchange
        for i in ids:
            msg = Message(sender=i, round=t, x_seq=preds[i].x_seq, u_seq=preds[i].u_seq)
            for j in ids:
                if i in self.models[j].couplings:
                    self.bus.deliver(j, msg)

        # stage 3: all ancillary solves against the measured plant state
        u_full = np.zeros(self.B.shape[1])
        records: dict[int, StepRecord] = {}
        states: dict[int, dict] = {}
        next_controllers = {}
        for i in ids:
            inbox = {m.sender: Prediction(m.x_seq, m.u_seq, np.nan)
                     for m in self.bus.collect(i)}
            w_new = assemble_disturbance(self.models[i], inbox, N=self.horizons.N)
            x_meas = self.plant.x[self.xs[i]]
            cs = self.controllers[i]
            try:
                u_i, cs_next, rec = phase_ancillary(
                    cs, self.models[i], self.horizons, preds[i], w_new, x_meas)
            except Exception as exc:
                raise type(exc)(f"round {t}, subsystem {i}: {exc}") from exc
            u_full[self.us[i]] = u_i
            records[i] = rec
            states[i] = {
                "x": x_meas.copy(),
                "x_bar": cs.x_bar.copy(),
                "e_bar": cs.e_bar.copy(),
                "e_hat": x_meas - cs.x_bar - cs.e_bar,
                "u": u_i.copy(),
            }
            next_controllers[i] = cs_next

        # stage 4: plant update by the full stacked model, with the
        # per-subsystem decomposition asserted against it
        x_next = self.A @ self.plant.x + self.B @ u_full
        for i in ids:
            mi = self.models[i]
            w_i = np.zeros(mi.n)
            for j, (Aij, Bij) in mi.couplings.items():
                w_i += Aij @ self.plant.x[self.xs[j]] + Bij @ u_full[self.us[j]]
            local = mi.A @ self.plant.x[self.xs[i]] + mi.B @ u_full[self.us[i]] + w_i
            if np.abs(local - x_next[self.xs[i]]).max() > _CONSISTENCY_TOL:
                raise RuntimeError(
                    f"round {t}, subsystem {i}: local/global dynamics inconsistency")

        log = RoundLog(t=t, plant_x=self.plant.x.copy(), records=records, states=states)
        self.controllers = next_controllers
        self.plant = PlantState(x=x_next, t=t + 1)
        return log


def trace_columns(models: dict[int, SubsystemModel]) -> list[str]:
    n_max = max(m.n for m in models.values())
    m_max = max(m.m for m in models.values())
    cols = ["t", "subsystem"]
    for group in ("x", "x_bar", "e_bar", "e_hat"):
        cols += [f"{group}{k}" for k in range(n_max)]
    for group in ("u", "u_main", "u_anc", "u_rci"):
        cols += [f"{group}{k}" for k in range(m_max)]
    cols += ["V_main", "V_anc", "V_star", "accept", "fallback",
             "anc_new_feasible", "anc_used_feasible", "sel_relaxed",
             "margin_x", "margin_u"]
    return cols


def _pad(v, width):
    out = list(float(x) for x in v)
    return out + [""] * (width - len(out))


def run_simulation(models: dict[int, SubsystemModel],
                   controllers: dict[int, ControllerState],
                   horizons: Horizons, x0: dict[int, np.ndarray],
                   steps: int, enforce_constraints: bool = True) -> tuple[Trace, Coordinator]:
    """Run the closed loop for ``steps`` rounds and collect the trace.

    The true state and applied input of every subsystem are checked
    against their constraint boxes each round; a violation aborts the run
    with the first offending round and subsystem in the message.
    """
    ids = sorted(models)
    x0_full = np.concatenate([np.asarray(x0[i], dtype=float).ravel() for i in ids])
    coord = Coordinator(models, controllers, horizons, x0_full)
    n_max = max(models[i].n for i in ids)
    m_max = max(models[i].m for i in ids)
    trace = Trace(columns=trace_columns(models))
    for _ in range(steps):
        log = coord.run_round()
        for i in ids:
            st = log.states[i]
            rec = log.records[i]
            mi = models[i]
            mx = float(min(np.concatenate([mi.X.hi - st["x"], st["x"] - mi.X.lo])))
            mu = float(min(np.concatenate([mi.U.hi - st["u"], st["u"] - mi.U.lo])))
            if enforce_constraints and (mx < 0 or mu < 0):
                raise ConstraintViolation(
                    f"round {log.t}, subsystem {i}: constraint violated "
                    f"(state margin {mx:.3e}, input margin {mu:.3e})")
            row = [log.t, i]
            for key in ("x", "x_bar", "e_bar", "e_hat"):
                row += _pad(st[key], n_max)
            for vec in (st["u"], rec.u_main, rec.u_anc, rec.u_rci):
                row += _pad(vec, m_max)
            row += [float(rec.V_main), float(rec.V_anc), float(rec.V_star),
                    int(rec.accepted), int(rec.fallback_used),
                    int(rec.new_feasible), int(rec.used_feasible),
                    int(rec.sel_relaxed), mx, mu]
            trace.rows.append(row)
    return trace, coord
