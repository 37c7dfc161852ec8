"""Command line driver: design, simulate, verify.

Exit codes: 0 pass, 1 invariant/constraint failure, 2 usage or config
error, 3 hard solver failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import ConfigError, load_design, parse_config, save_design
from .controller import ControllerState
from .coordinator import ConstraintViolation, run_simulation
from .rci import DesignError, RciInfeasible, design_scalings, verify_rci
from .solver import SolverError

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nestmpc",
                                description="Nested distributed MPC toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="run the off-line scaling design")
    d.add_argument("config")
    d.add_argument("--out", default=None, help="design JSON output path")

    s = sub.add_parser("simulate", help="run the closed loop")
    s.add_argument("config")
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--out", default="trace.csv")
    s.add_argument("--design", default=None, help="reuse a saved design file")
    s.add_argument("--plots", default=None, help="directory for rendered figures")

    v = sub.add_parser("verify", help="invariance certificate and closed-loop audit")
    v.add_argument("config")
    v.add_argument("--samples", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--design", default=None)
    v.add_argument("--steps", type=int, default=50)
    return p


def _get_designs(cfg, args):
    if getattr(args, "design", None):
        return load_design(args.design, cfg)
    return design_scalings(cfg.subsystems, cfg.rci_h, cfg.rci_weights)


def _print_design_table(designs):
    ids = sorted(designs)
    print("constant " + " ".join(f"{'sub ' + str(i):>10}" for i in ids))
    for name, attr in (("alpha_x", "alpha_x"), ("beta_x", "beta_x"), ("xi_x", "xi_x"),
                       ("alpha_u", "alpha_u"), ("beta_u", "beta_u"), ("xi_u", "xi_u")):
        vals = " ".join(f"{getattr(designs[i].scalings, attr):10.4f}" for i in ids)
        print(f"{name:<8} {vals}")


def cmd_design(args) -> int:
    cfg = parse_config(args.config)
    designs = design_scalings(cfg.subsystems, cfg.rci_h, cfg.rci_weights)
    _print_design_table(designs)
    out = args.out or "design.json"
    save_design(designs, cfg.rci_h, cfg.rci_weights, out)
    print(f"design written to {out}")
    return EXIT_OK


def _init_controllers(cfg, designs):
    return {i: ControllerState.initial(cfg.initial_states[i], cfg.horizons.N,
                                       designs[i].scalings, designs[i].hat)
            for i in cfg.subsystems}


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    designs = _get_designs(cfg, args)
    controllers = _init_controllers(cfg, designs)
    steps = args.steps if args.steps is not None else cfg.steps
    try:
        trace, _ = run_simulation(cfg.subsystems, controllers, cfg.horizons,
                                  cfg.initial_states, steps)
    except ConstraintViolation as exc:
        print(f"FAIL: {exc}")
        return EXIT_VIOLATION
    trace.to_csv(args.out)
    print(f"PASS: {steps} rounds, trace written to {args.out}")
    if args.plots:
        from .report import render_figures

        for path in render_figures(trace, cfg.subsystems, args.plots):
            print(f"figure written to {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = parse_config(args.config)
    designs = _get_designs(cfg, args)
    tol = 1e-6
    failed = False

    for i in sorted(designs):
        d = designs[i]
        sc = d.scalings
        budget_x = abs(sc.alpha_x + sc.beta_x + sc.xi_x - 1.0)
        budget_u = abs(sc.alpha_u + sc.beta_u + sc.xi_u - 1.0)
        rep = verify_rci(d.full, cfg.subsystems[i].X, cfg.subsystems[i].U,
                         n_samples=args.samples, seed=args.seed)
        rep_hat = verify_rci(d.hat, cfg.subsystems[i].X, cfg.subsystems[i].U,
                             n_samples=args.samples, seed=args.seed + 1)
        ok = (rep.ok(tol) and rep_hat.ok(tol)
              and budget_x <= 1e-9 and budget_u <= 1e-9)
        print(f"subsystem {i}: max violation full={rep.max_violation():.3e} "
              f"hat={rep_hat.max_violation():.3e} budget=({budget_x:.1e},{budget_u:.1e})"
              f" -> {'OK' if ok else 'VIOLATION'}")
        failed |= not ok

    controllers = _init_controllers(cfg, designs)
    try:
        trace, _ = run_simulation(cfg.subsystems, controllers, cfg.horizons,
                                  cfg.initial_states, args.steps)
        relaxed = sum(int(v) for v in trace.column("sel_relaxed"))
        ehat_ok = _ehat_within_budget(trace, cfg, designs)
        print(f"closed loop: {args.steps} rounds, {relaxed} relaxed selection events, "
              f"unplanned error in budget: {ehat_ok}")
        failed |= relaxed > 0 or not ehat_ok
    except ConstraintViolation as exc:
        print(f"closed loop: FAIL ({exc})")
        failed = True
    print("VERIFY " + ("FAIL" if failed else "PASS"))
    return EXIT_VIOLATION if failed else EXIT_OK


def _ehat_within_budget(trace, cfg, designs, tol: float = 1e-9) -> bool:
    subs = trace.column("subsystem")
    for i, model in cfg.subsystems.items():
        xi = designs[i].scalings.xi_x
        rows = [k for k, s in enumerate(subs) if s == i]
        for d in range(model.n):
            vals = trace.column(f"e_hat{d}")
            for k in rows:
                v = float(vals[k])
                if not (xi * model.X.lo[d] - tol <= v <= xi * model.X.hi[d] + tol):
                    return False
    return True


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "design":
            return cmd_design(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "verify":
            return cmd_verify(args)
        return EXIT_USAGE
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RciInfeasible, DesignError) as exc:
        print(f"design failure: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
