"""
Command-line front end.

Commands: ``model``, ``simulate``, ``transfer``, ``table1``, ``efficiency``,
``bounds`` and ``figures``.  Options may also come from a JSON file given with
``--config``; explicit flags override it.  Exit status: 0 on success, 2 when a
tolerance check fails, 1 on any execution error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import efficiency, resonance_analysis
from .controls import ControlLaw, fourier_coefficient, l1_over_period, parse_shape
from .experiments import (FIGURES, TABLE1_DIVISORS, check_table1_cell, run_table1,
                          transfer_quiet, THEORETICAL_EFFICIENCY)
from .models import (build_model, dimension_for_error, energy_growth_bound,
                     galerkin_error_bound, get_model, system_to_text, truncation_tail_bound)
from .propagator import PropagationOptions, StepSizeWarning, propagate_control, trajectory_to_csv

EXIT_OK, EXIT_ERROR, EXIT_TOLERANCE = 0, 1, 2

PLOT_TEMPLATE = '''\
"""Plot the second-level population from trajectory CSV files written by `qgalerkin figures`."""
import sys

import matplotlib.pyplot as plt
import numpy as np

for path in sys.argv[1:]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(data["t"], data["pop_2"])
    ax.set_xlabel("t")
    ax.set_ylabel("|<phi_2, psi(t)>|^2")
    ax.set_title(path)
    fig.tight_layout()
    fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _dump(record: dict) -> str:
    return json.dumps(record, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(args, record: dict, filename: str) -> None:
    text = _dump(record)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / filename).write_text(text)


def _transition(text: str) -> tuple[int, int]:
    try:
        j, k = (int(x) for x in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"transition must look like 'j,k', got {text!r}") from None
    return j, k


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _control(args) -> ControlLaw:
    if not args.shape:
        raise ValueError("--shape is required")
    law = parse_shape(args.shape)
    if args.divisor is not None:
        law = law.with_divisor(args.divisor)
    return law


# ---------------------------------------------------------------------------
# commands

def cmd_model(args) -> int:
    model_id = args.model_id or args.model
    system = build_model(model_id, args.n)
    text = system_to_text(system)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{model_id}-N{args.n}.txt").write_text(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    system = build_model(args.model, args.n)
    law = _control(args)
    if args.horizon is None:
        raise ValueError("--horizon is required")
    horizon = args.horizon * law.period if args.horizon_in_periods else args.horizon
    grid = np.linspace(0.0, horizon, args.record_points)
    opts = PropagationOptions(step=args.dt, record_grid=grid)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", StepSizeWarning)
        traj = propagate_control(system, law, system.basis_state(args.initial), horizon, opts)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    trajectory_to_csv(traj, out / "trajectory.csv")
    pops = traj.populations
    meta = {
        "command": "simulate", "version": __version__, "model": args.model, "dim": args.n,
        "shape": law.spec(), "divisor": law.divisor, "initial_level": args.initial,
        "horizon": horizon, "record_points": args.record_points,
        "step": traj.meta["step"], "steps": traj.meta["steps"], "method": traj.meta["method"],
        "norm_drift": traj.norm_drift(),
        "max_population": {str(k + 1): float(pops[:, k].max()) for k in range(system.dim)},
        "step_warning": str(caught[0].message) if caught else None,
    }
    (out / "metadata.json").write_text(_dump(meta))
    sys.stdout.write(_dump(meta))
    return EXIT_OK


def cmd_transfer(args) -> int:
    j, k = args.transition
    law = _control(args)
    report = transfer_quiet(args.model, args.n, j, k, law.with_divisor(1), law.divisor,
                            horizon_periods=args.horizon, step=args.dt)
    _emit(args, report.to_dict(), "transfer.json")
    return EXIT_OK


def cmd_table1(args) -> int:
    n_values = args.n_values or list(TABLE1_DIVISORS)
    reports = run_table1(n_values=n_values, dim=args.n, workers=args.workers)
    powers = [p for p in (1, 3, 5) for _ in n_values]
    header = "shape,n,t_dagger,precision,numerical_efficiency,theoretical_efficiency,pass"
    lines = [header]
    all_ok = True
    records = []
    for power, rep in zip(powers, reports):
        checks = check_table1_cell(power, rep.divisor, rep)
        ok = all(checks.values())
        all_ok &= ok
        lines.append(f"cos^{power}(3t),{rep.divisor},{rep.t_dagger:.6g},{rep.precision:.3e},"
                     f"{rep.numerical_efficiency:.6f},{THEORETICAL_EFFICIENCY[power]:.6f},"
                     f"{'yes' if ok else 'no'}")
        records.append({**rep.to_dict(), "checks": checks})
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table1.csv").write_text(table)
        (out / "table1.json").write_text(_dump({"rows": records, "dim": args.n,
                                                "n_values": n_values}))
    return EXIT_OK if all_ok else EXIT_TOLERANCE


def cmd_efficiency(args) -> int:
    system = build_model(args.model, args.n)
    law = _control(args)
    j, k = args.transition
    gap = system.lam(k) - system.lam(j)
    record = {
        "model": args.model, "dim": args.n, "transition": f"{j},{k}", "shape": law.spec(),
        "efficiency": efficiency(law, system, j, k),
        "fourier_coefficient": fourier_coefficient(law, gap),
        "l1_over_period": l1_over_period(law),
    }
    if j < k:
        rep = resonance_analysis(system, j, k, control=law)
        record["classification"] = rep.classification
        record["multiple_pairs"] = [list(p) for p in rep.multiple_pairs]
        record["divisor_pairs"] = [list(p) for p in rep.divisor_pairs]
    _emit(args, record, "efficiency.json")
    return EXIT_OK


def cmd_bounds(args) -> int:
    model = get_model(args.model)
    c = args.c if args.c is not None else model.coupling_constant
    if c is None:
        raise ValueError(f"{args.model}: coupling constant unknown, pass --c")
    system = model.galerkin(args.n)
    lam_next = model.eigenvalue(args.n + 1)
    h0 = args.h0
    B_norm = model.coupling_norm_bound
    record = {
        "model": args.model, "dim": args.n, "c": c, "K": args.K, "h0": h0, "B_norm": B_norm,
        "lambda_next": lam_next,
        "energy_bound": energy_growth_bound(c, args.K, h0),
        "tail_bound": truncation_tail_bound(c, args.K, lam_next, h0),
        "galerkin_error_bound": galerkin_error_bound(c, args.K, lam_next, B_norm, h0),
        "target": args.target,
        "galerkin_coupling_norm": system.coupling_norm,
    }
    if args.K > 0:
        record["dimension_for_target"] = dimension_for_error(
            model, args.K, args.target, c=c, h0=h0, include_tail=False)
        record["dimension_for_target_with_tail"] = dimension_for_error(
            model, args.K, args.target, c=c, h0=h0, include_tail=True)
    _emit(args, record, "bounds.json")
    return EXIT_OK


def cmd_figures(args) -> int:
    out = Path(args.out or "figures")
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for name, sc in FIGURES.items():
        system = build_model(sc.model, sc.dim)
        opts = PropagationOptions(record_grid=np.linspace(0.0, sc.horizon, args.record_points))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StepSizeWarning)
            traj = propagate_control(system, sc.control, system.basis_state(1), sc.horizon, opts)
        trajectory_to_csv(traj, out / f"{name}.csv")
        pop2 = traj.populations[:, 1]
        summary[name] = {"model": sc.model, "dim": sc.dim, "shape": sc.control.spec(),
                         "horizon": sc.horizon, "max_pop_2": float(pop2.max()),
                         "t_max_pop_2": float(traj.times[int(np.argmax(pop2))]),
                         "norm_drift": traj.norm_drift(), "step": traj.meta["step"]}
    (out / "plot_figures.py").write_text(PLOT_TEMPLATE)
    (out / "figures.json").write_text(_dump(summary))
    sys.stdout.write(_dump(summary))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

DEFAULTS = {
    "model": "planar-odd", "n": 22, "shape": None, "divisor": None, "transition": (1, 2),
    "horizon": None, "horizon_in_periods": False, "dt": None, "out": None,
    "workers": None, "initial": 1, "record_points": 2000, "c": None, "K": 13 / 3,
    "h0": 1.0, "target": 1e-2, "n_values": None,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qgalerkin", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, shape=True):
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--model", default=argparse.SUPPRESS, help="model id")
        p.add_argument("--n", type=int, default=argparse.SUPPRESS, help="Galerkin dimension")
        p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
        if shape:
            p.add_argument("--shape", default=argparse.SUPPRESS, help="e.g. 'cospow(l=1, omega=3)'")
            p.add_argument("--divisor", type=int, default=argparse.SUPPRESS)
            p.add_argument("--dt", type=float, default=argparse.SUPPRESS, help="time step")

    p = sub.add_parser("model", help="dump drift vector and coupling triplets")
    p.add_argument("model_id", nargs="?", default=None)
    common(p, shape=False)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("simulate", help="propagate and write a trajectory CSV")
    common(p)
    p.add_argument("--horizon", type=float, default=argparse.SUPPRESS)
    p.add_argument("--horizon-in-periods", action="store_true", default=argparse.SUPPRESS)
    p.add_argument("--initial", type=int, default=argparse.SUPPRESS, help="initial level")
    p.add_argument("--record-points", type=int, default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("transfer", help="first-peak transfer experiment")
    common(p)
    p.add_argument("--transition", type=_transition, default=argparse.SUPPRESS)
    p.add_argument("--horizon", type=float, default=argparse.SUPPRESS,
                   help="horizon in drive periods")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("table1", help="numerical-efficiency table for cos, cos^3, cos^5")
    common(p, shape=False)
    p.add_argument("--n-values", type=_int_list, default=argparse.SUPPRESS)
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("efficiency", help="efficiency and resonance class of a shape")
    common(p)
    p.add_argument("--transition", type=_transition, default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_efficiency)

    p = sub.add_parser("bounds", help="energy, truncation and Galerkin error bounds")
    common(p, shape=False)
    p.add_argument("--c", type=float, default=argparse.SUPPRESS, help="coupling constant")
    p.add_argument("--K", type=float, default=argparse.SUPPRESS, help="L1 budget")
    p.add_argument("--h0", type=float, default=argparse.SUPPRESS, help="initial half-norm")
    p.add_argument("--target", type=float, default=argparse.SUPPRESS, help="target error")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("figures", help="trajectory data for the three population figures")
    common(p, shape=False)
    p.add_argument("--record-points", type=int, default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_figures)
    return parser


def _resolve(ns: argparse.Namespace) -> argparse.Namespace:
    values = dict(DEFAULTS)
    if getattr(ns, "config", None):
        with open(ns.config) as fh:
            cfg = json.load(fh)
        for key, value in cfg.items():
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise ValueError(f"unknown config key {key!r}")
            if key == "transition" and isinstance(value, str):
                value = _transition(value)
            if key == "n_values" and isinstance(value, str):
                value = _int_list(value)
            values[key] = value
    values.update({k: v for k, v in vars(ns).items() if k != "config"})
    return argparse.Namespace(**values)


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        args = _resolve(ns)
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - report and map to the error exit code
        print(f"qgalerkin {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
