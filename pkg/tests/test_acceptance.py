"""
Acceptance criteria, one test per criterion.

Each criterion prints a single ``[PASS]``/``[FAIL]`` line (shown in the pytest
terminal summary, or on stdout with ``python3 tests/test_acceptance.py``).
Tolerances are the stated ones; nothing is relaxed here.
"""
import math
import sys
import time
import warnings

import numpy as np
import pytest

from qgalerkin.averaging import efficiency, run_transfer
from qgalerkin.controls import (AffineCosine, ControlLaw, CosinePower, fourier_coefficient,
                                l1_over_period, l1_up_to)
from qgalerkin.experiments import (FIGURES, TABLE1_REFERENCE, check_table1_cell, run_table1,
                                   transfer_quiet)
from qgalerkin.models import (PLANAR_ODD, build_model, build_planar_even, build_planar_odd,
                              dimension_for_error, energy_growth_bound, galerkin_error_bound)
from qgalerkin.propagator import (PropagationOptions, StepSizeWarning, propagate_control,
                                  propagate_piecewise)
from qgalerkin import cli

RESULTS: dict[str, str] = {}


def report(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS[name] = line
    print(line)
    return ok


def _quiet(fn, *a, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StepSizeWarning)
        return fn(*a, **kw)


# ---------------------------------------------------------------------------

def criterion_1():
    t0 = time.perf_counter()
    odd, even = build_planar_odd(3), build_planar_even(3)
    cases = {
        "E(cos)": (CosinePower(1, 3.0), odd, 1, 2, math.pi / 4),
        "E(cos^3)": (CosinePower(3, 3.0), odd, 1, 2, 9 * math.pi / 32),
        "E(cos^5)": (CosinePower(5, 3.0), odd, 1, 2, 75 * math.pi / 256),
        "E(1+cos)": (AffineCosine(1.0, 1.0, 3.0), odd, 1, 2, 0.5),
        "E(affcos)(1,2)": (AffineCosine(0.1, 0.075, 1.0), even, 1, 2, 3 / 8),
        "E(affcos)(2,3)": (AffineCosine(0.1, 0.075, 1.0), even, 2, 3, 0.0),
    }
    for m in (1, 2, 3, 4):
        cases[f"E(cos^{2 * m})"] = (CosinePower(2 * m, 3.0), odd, 1, 2, 0.0)
    worst = 0.0
    for key, (shape, sys_, j, k, expected) in cases.items():
        gap = sys_.lam(k) - sys_.lam(j)
        closed = efficiency(shape, sys_, j, k)
        quad = (abs(fourier_coefficient(shape, gap, method="quadrature"))
                / l1_over_period(shape, method="quadrature"))
        worst = max(worst, abs(closed - expected), abs(quad - closed))
    ms = 1e3 * (time.perf_counter() - t0)
    return report("C1 closed-form efficiencies", worst <= 1e-10,
                  f"max deviation {worst:.2e} (tol 1e-10) over {len(cases)} cases, {ms:.0f} ms")


_TABLE = {}


def _table1():
    if not _TABLE:
        t0 = time.perf_counter()
        reports = run_table1()
        _TABLE["elapsed"] = time.perf_counter() - t0
        cells = [(p, n) for p in (1, 3, 5) for n in (1, 10, 30)]
        _TABLE["reports"] = dict(zip(cells, reports))
    return _TABLE


def criterion_2():
    table = _table1()
    bad = []
    for (p, n), rep in table["reports"].items():
        checks = check_table1_cell(p, n, rep)
        if not all(checks.values()):
            bad.append(f"cos^{p} n={n} {[k for k, v in checks.items() if not v]}")
    ok = not bad and table["elapsed"] <= 120
    detail = (f"9/9 cells within 3% time, 2 pt efficiency, factor-3 precision; "
              f"{table['elapsed']:.1f} s" if ok else f"failing: {bad}; {table['elapsed']:.1f} s")
    return report("C2 efficiency table", ok, detail)


def criterion_3():
    sc = FIGURES["figure1"]
    s = build_model(sc.model, sc.dim)
    grid = np.linspace(0.0, sc.horizon, 20001)
    traj = _quiet(propagate_control, s, sc.control, s.basis_state(1), sc.horizon,
                  PropagationOptions(record_grid=grid))
    modulus = np.abs(traj.states[:, 1])
    t_max = traj.times[int(np.argmax(modulus))]
    ok = modulus.max() <= 4e-5
    return report("C3 null transfer under cos^2", ok,
                  f"max |<phi_2, psi>| = {modulus.max():.4e} at t = {t_max:.2f} (limit 4e-5); "
                  f"max population = {modulus.max() ** 2:.3e}")


def criterion_4():
    sc = FIGURES["figure3"]
    rep = transfer_quiet(sc.model, sc.dim, 1, 2, sc.control.with_divisor(1), 1)
    leak = rep.leakage_efficiencies[(2, 3)]
    ok = (1e-3 <= rep.precision <= 4e-3 and 0.36 <= rep.numerical_efficiency <= 0.40
          and leak < 5e-4)
    return report("C4 resonant even-subspace case", ok,
                  f"1-p = {rep.precision:.3e}, efficiency = {rep.numerical_efficiency:.4f}, "
                  f"(2,3) leakage = {leak:.2e}")


def criterion_5():
    law = ControlLaw(CosinePower(1, 3.0))
    reps = {n: transfer_quiet("planar-odd", 3, 1, 2, law, n) for n in (30, 100, 300)}
    r = reps[300]
    scaled = [reps[n].deficit_bound * n for n in (30, 100, 300)]
    spread = (max(scaled) - min(scaled)) / scaled[0]
    ok = r.deficit_bound < 1 and r.precision <= r.deficit_bound and spread <= 1e-12
    return report("C5 deficit-bound dominance", ok,
                  f"n=300: 1-p = {r.precision:.3e} <= bound {r.deficit_bound:.4f} < 1; "
                  f"bound*n relative spread {spread:.1e}")


def _random_pieces(rng, K, count):
    d = rng.uniform(0.05, 1.0, count)
    u = rng.normal(size=count)
    u *= K / np.sum(np.abs(u) * d)
    return list(zip(d, u))


def criterion_6():
    notes, ok = [], True
    # unitarity over every run made here
    drifts = [rep.norm_drift for rep in _table1()["reports"].values()]
    for name, sc in FIGURES.items():
        s = build_model(sc.model, sc.dim)
        drifts.append(_quiet(propagate_control, s, sc.control, s.basis_state(1), sc.horizon)
                      .norm_drift())
    ok &= max(drifts) <= 1e-9
    notes.append(f"norm drift {max(drifts):.1e}")

    rng = np.random.default_rng(2024)
    s40 = build_planar_odd(40)
    worst = 0.0
    for _ in range(100):
        K = rng.uniform(0, 2)
        pieces = _random_pieces(rng, K, int(rng.integers(1, 25)))
        horizon = sum(d for d, _ in pieces)
        traj = propagate_piecewise(s40, pieces, s40.basis_state(1),
                                   record_grid=np.linspace(0, horizon, 200))
        h = np.sqrt(traj.populations @ s40.drift_diagonal)
        worst = max(worst, h.max() / energy_growth_bound(1.5, K, 1.0))
    ok &= worst <= 1 + 1e-6
    notes.append(f"energy ratio max {worst:.3f}")

    s22 = build_planar_odd(22)
    fact_ok = True
    for _ in range(50):
        pieces = _random_pieces(rng, rng.uniform(0.1, 2.0), int(rng.integers(1, 30)))
        bounds = np.concatenate([[0.0], np.cumsum([d for d, _ in pieces])])
        running = np.concatenate([[0.0], np.cumsum([d * abs(u) for d, u in pieces])])
        traj = propagate_piecewise(s22, pieces, s22.basis_state(1), record_grid=bounds)
        for k in range(1, 9):
            fact_ok &= bool(np.all(np.abs(traj.states[:, k])
                                   <= running ** k / math.factorial(k) + 1e-14))
    ok &= fact_ok
    notes.append(f"factorial bound {'held' if fact_ok else 'violated'}")

    sc = FIGURES["figure2"]
    T = sc.control.period

    def final(m):
        opts = PropagationOptions(step=T / m, record_grid=[sc.horizon])
        return _quiet(propagate_control, s22, sc.control, s22.basis_state(1), sc.horizon,
                      opts).final_state

    ref = final(3200)
    ratio = np.linalg.norm(final(200) - ref) / np.linalg.norm(final(400) - ref)
    ok &= ratio >= 3.5
    notes.append(f"step-halving ratio {ratio:.2f}")
    return report("C6 invariant suites", ok, ", ".join(notes))


def criterion_7():
    sc = FIGURES["figure2"]
    grid = np.linspace(0.0, sc.horizon, 3001)
    runs = {}
    for N in (22, 30):
        s = build_model(sc.model, N)
        runs[N] = _quiet(propagate_control, s, sc.control, s.basis_state(1), sc.horizon,
                         PropagationOptions(record_grid=grid)).states
    padded = np.hstack([runs[22], np.zeros((grid.size, 8))])
    diff = np.linalg.norm(padded - runs[30], axis=1)
    K = l1_up_to(sc.control, sc.horizon)
    bound = galerkin_error_bound(PLANAR_ODD.coupling_constant, K, PLANAR_ODD.eigenvalue(23), 1.0, 1.0)
    ok = diff[-1] <= 1e-6 and diff.max() <= bound
    return report("C7 Galerkin self-consistency", ok,
                  f"final difference {diff[-1]:.2e} (max {diff.max():.2e}) <= 1e-6 and "
                  f"<= bound {bound:.1f} at lambda_23")


def criterion_8():
    import contextlib
    import io
    import json
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli.main(["bounds", "--model", "planar-odd", "--n", "22", "--c", "1.5",
                         "--K", str(13 / 3), "--target", "1e-2"])
    rec = json.loads(buf.getvalue())
    energy = rec["energy_bound"]
    dim = rec["dimension_for_target"]
    ok = (code == 0 and energy == math.exp(6.5) and round(energy) == 665 and dim == 288228
          and dim == dimension_for_error(PLANAR_ODD, 13 / 3, 1e-2, include_tail=False))
    return report("C8 bound arithmetic", ok, f"energy {energy:.4f} (665), dimension {dim} (288228)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"C{i}" for i in range(1, 9)])
def test_criterion(criterion):
    assert criterion()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
