"""Four-truck spring-damper benchmark.

A chain of four trucks coupled by springs and dampers: truck 1-2 via
(k=0.5, h=0.2), truck 2-3 via (k=0.75, h=0.25), truck 3-4 via (k=1.0,
h=0.3), with masses (3, 2, 3, 6) kg. Each truck's state is (displacement,
velocity), the input channel is [0; 100], and the constraints are
|r| <= 2, |v| <= 8, |u| <= 4 (trucks 1-3) and |u_4| <= 6. The continuous
dynamics are discretized with the configured sampling period (default
0.1 s, a recorded, overridable choice).
"""

from __future__ import annotations

from .config import Config, config_from_dict

MASSES = {1: 3.0, 2: 2.0, 3: 3.0, 4: 6.0}
SPRINGS = {(1, 2): (0.5, 0.2), (2, 3): (0.75, 0.25), (3, 4): (1.0, 0.3)}
INPUT_GAIN = 100.0
INITIAL_STATES = {1: [1.8, -2.0], 2: [0.5, 5.0], 3: [-0.9, -5.0], 4: [-1.8, 2.0]}
U_LIMITS = {1: 4.0, 2: 4.0, 3: 4.0, 4: 6.0}


def truck_benchmark_dict(Ts: float = 0.1, N: int = 25, H: int | None = None,
                         h: int = 10, q_eta: float = 1.0, q_theta: float = 1.0,
                         steps: int = 300) -> dict:
    """Raw JSON-serializable benchmark config."""
    if H is None:
        H = N + 1
    subsystems = []
    for i in (1, 2, 3, 4):
        m = MASSES[i]
        k_tot = h_tot = 0.0
        couplings = []
        for (a, b), (k, hd) in SPRINGS.items():
            if i in (a, b):
                j = b if i == a else a
                k_tot += k
                h_tot += hd
                couplings.append({
                    "to": j,
                    "A": [[0.0, 0.0], [k / m, hd / m]],
                    "B": [[0.0], [0.0]],
                })
        subsystems.append({
            "id": i,
            "continuous": True,
            "A": [[0.0, 1.0], [-k_tot / m, -h_tot / m]],
            "B": [[0.0], [INPUT_GAIN]],
            "couplings": couplings,
            "x_lo": [-2.0, -8.0], "x_hi": [2.0, 8.0],
            "u_lo": [-U_LIMITS[i]], "u_hi": [U_LIMITS[i]],
            "Q": [[1.0, 0.0], [0.0, 1.0]], "R": [[1.0]],
        })
    return {
        "Ts": Ts,
        "horizons": {"N": N, "H": H},
        "rci": {"h": h, "q_eta": q_eta, "q_theta": q_theta},
        "sim": {"steps": steps,
                "initial_states": {str(i): INITIAL_STATES[i] for i in (1, 2, 3, 4)}},
        "seed": 0,
        "subsystems": subsystems,
    }


def truck_benchmark(**kwargs) -> Config:
    """Parsed (discretized) benchmark configuration."""
    return config_from_dict(truck_benchmark_dict(**kwargs))
