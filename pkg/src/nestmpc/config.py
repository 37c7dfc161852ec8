"""JSON configuration and design-file ingestion.

The config schema is documented in docs/config_schema.md. Continuous-time
subsystem matrices are discretized jointly (one matrix exponential for
the whole network) at parse time, so the in-memory model set is always
discrete.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .model import Horizons, SubsystemModel, discretize_network
from .rci import (RciDesign, RciWeights, ScalingConstants, SubsystemDesign,
                  _stage_matrices)
from .sets import Box, coupling_disturbance_set


class ConfigError(ValueError):
    """Schema violation; the message names the offending field."""


@dataclass
class Config:
    subsystems: dict[int, SubsystemModel]     # discrete-time
    horizons: Horizons
    rci_h: int
    rci_weights: RciWeights
    steps: int
    initial_states: dict[int, np.ndarray]
    Ts: float | None = None
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}: missing required field '{key}'")
    return obj[key]


def _matrix(obj, path: str) -> np.ndarray:
    try:
        M = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a numeric matrix ({exc})") from exc
    if not np.isfinite(M).all():
        raise ConfigError(f"{path}: entries must be finite")
    return M


def parse_config(path) -> Config:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> Config:
    hz_raw = _need(raw, "horizons", "config")
    N = int(_need(hz_raw, "N", "horizons"))
    H = int(_need(hz_raw, "H", "horizons"))
    try:
        horizons = Horizons(N=N, H=H)
    except ValueError as exc:
        raise ConfigError(f"horizons: {exc}") from exc

    rci_raw = raw.get("rci", {})
    rci_h = int(rci_raw.get("h", 10))
    try:
        weights = RciWeights(q_eta=float(rci_raw.get("q_eta", 1.0)),
                             q_theta=float(rci_raw.get("q_theta", 1.0)))
    except ValueError as exc:
        raise ConfigError(f"rci: {exc}") from exc

    subs_raw = _need(raw, "subsystems", "config")
    if not subs_raw:
        raise ConfigError("subsystems: at least one subsystem required")
    continuous_flags = set()
    models = {}
    for idx, s in enumerate(subs_raw):
        path = f"subsystems[{idx}]"
        sid = int(_need(s, "id", path))
        if sid in models:
            raise ConfigError(f"{path}: duplicate id {sid}")
        continuous_flags.add(bool(s.get("continuous", False)))
        A = _matrix(_need(s, "A", path), f"{path}.A")
        B = _matrix(_need(s, "B", path), f"{path}.B")
        try:
            X = Box(_matrix(_need(s, "x_lo", path), f"{path}.x_lo"),
                    _matrix(_need(s, "x_hi", path), f"{path}.x_hi"))
            U = Box(_matrix(_need(s, "u_lo", path), f"{path}.u_lo"),
                    _matrix(_need(s, "u_hi", path), f"{path}.u_hi"))
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        couplings = {}
        for cidx, c in enumerate(s.get("couplings", [])):
            cpath = f"{path}.couplings[{cidx}]"
            j = int(_need(c, "to", cpath))
            Aij = _matrix(_need(c, "A", cpath), f"{cpath}.A")
            Bij = _matrix(_need(c, "B", cpath), f"{cpath}.B")
            couplings[j] = (Aij, Bij)
        try:
            models[sid] = SubsystemModel(
                id=sid, A=A, B=B, couplings=couplings, X=X, U=U,
                Q=_matrix(_need(s, "Q", path), f"{path}.Q"),
                R=_matrix(_need(s, "R", path), f"{path}.R"))
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    for i, m in models.items():
        for j in m.couplings:
            if j not in models:
                raise ConfigError(f"subsystem {i}: coupling to unknown id {j}")

    if len(continuous_flags) > 1:
        raise ConfigError("subsystems: mixed continuous/discrete models are not supported")
    Ts = raw.get("Ts")
    if continuous_flags == {True}:
        if Ts is None or float(Ts) <= 0:
            raise ConfigError("Ts: positive sampling period required for continuous models")
        models = discretize_network(models, float(Ts))

    sim_raw = raw.get("sim", {})
    steps = int(sim_raw.get("steps", 100))
    init_raw = sim_raw.get("initial_states", {})
    initial_states = {}
    for i, m in models.items():
        x0 = init_raw.get(str(i), np.zeros(m.n))
        x0 = _matrix(x0, f"sim.initial_states.{i}").ravel()
        if x0.size != m.n:
            raise ConfigError(f"sim.initial_states.{i}: expected length {m.n}")
        initial_states[i] = x0

    return Config(subsystems=models, horizons=horizons, rci_h=rci_h,
                  rci_weights=weights, steps=steps, initial_states=initial_states,
                  Ts=float(Ts) if Ts is not None else None,
                  seed=int(raw.get("seed", 0)),
                  tolerances=dict(raw.get("tolerances", {})), raw=raw)


def save_design(designs: dict[int, SubsystemDesign], h: int,
                weights: RciWeights, path):
    """Persist the design: scalings, box fractions, and stage matrices
    (row-major, full decimal precision)."""
    out = {"h": h, "q_eta": weights.q_eta, "q_theta": weights.q_theta,
           "subsystems": {}}
    for i, d in sorted(designs.items()):
        sc = d.scalings
        out["subsystems"][str(i)] = {
            "alpha_x": sc.alpha_x, "alpha_u": sc.alpha_u,
            "beta_x": sc.beta_x, "beta_u": sc.beta_u,
            "xi_x": sc.xi_x, "xi_u": sc.xi_u,
            "eta": d.full.eta, "theta": d.full.theta, "delta": d.full.delta,
            "eta_tilde": d.hat.eta, "theta_tilde": d.hat.theta,
            "M": [m.tolist() for m in d.full.M],
        }
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2)


def load_design(path, config: Config) -> dict[int, SubsystemDesign]:
    """Rebuild per-subsystem designs from a design file and the config.

    The disturbance sets and stage matrices D_l are reconstructed from
    the stored M and the neighbours' alphas.
    """
    with open(path) as fh:
        raw = json.load(fh)
    h = int(_need(raw, "h", "design"))
    weights = RciWeights(q_eta=float(raw.get("q_eta", 1.0)),
                         q_theta=float(raw.get("q_theta", 1.0)))
    subs = _need(raw, "subsystems", "design")
    models = config.subsystems
    X = {i: m.X for i, m in models.items()}
    U = {i: m.U for i, m in models.items()}
    alphas = {}
    for i in models:
        entry = subs.get(str(i))
        if entry is None:
            raise ConfigError(f"design: missing subsystem {i}")
        alphas[i] = (float(entry["alpha_x"]), float(entry["alpha_u"]))

    out = {}
    for i, m in models.items():
        entry = subs[str(i)]
        M = [np.asarray(Mi, dtype=float).reshape(m.m, m.n) for Mi in entry["M"]]
        if len(M) != h:
            raise ConfigError(f"design subsystem {i}: expected {h} stage matrices")
        D = _stage_matrices(m.A, m.B, M)
        if np.abs(D[h]).max() > 1e-8:
            raise ConfigError(f"design subsystem {i}: stage matrices do not null D_h")
        W = coupling_disturbance_set(m.couplings, X, U,
                                     {j: 1.0 for j in m.couplings},
                                     {j: 1.0 for j in m.couplings}, m.n)
        W_hat = coupling_disturbance_set(
            m.couplings, X, U,
            {j: 1.0 - alphas[j][0] for j in m.couplings},
            {j: 1.0 - alphas[j][1] for j in m.couplings}, m.n)
        eta, theta = float(entry["eta"]), float(entry["theta"])
        eta_t, theta_t = float(entry["eta_tilde"]), float(entry["theta_tilde"])
        full = RciDesign(h=h, M=M, eta=eta, theta=theta,
                         delta=float(entry.get("delta", weights.q_eta * eta + weights.q_theta * theta)),
                         D=D, W=W, A=m.A, B=m.B)
        hat = full.with_disturbance(W_hat, eta_t, theta_t, weights)
        try:
            sc = ScalingConstants(alpha_x=float(entry["alpha_x"]), alpha_u=float(entry["alpha_u"]),
                                  beta_x=float(entry["beta_x"]), beta_u=float(entry["beta_u"]),
                                  xi_x=float(entry["xi_x"]), xi_u=float(entry["xi_u"]))
        except ValueError as exc:
            raise ConfigError(f"design subsystem {i}: {exc}") from exc
        out[i] = SubsystemDesign(scalings=sc, full=full, hat=hat)
    return out
