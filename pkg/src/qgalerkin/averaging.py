"""
Averaging analysis of periodic controls on Galerkin systems.

For a transition ``(j, k)`` with gap ``lambda_k - lambda_j`` and a control
``u*/n`` of period ``T = 2 pi / (lambda_k - lambda_j)``, the averaged dynamics
only retains couplings ``b_lm`` whose gap is a harmonic of the drive
frequency, weighted by the matching Fourier coefficient of ``u*``.  This module
provides

* the efficiency ``E = |int_0^T u* e^{i gap t}| / int_0^T |u*|``,
* enumeration of resonant pairs and the averaged coupling graph,
* the a-priori transfer time ``T*``, constant ``C`` and fidelity deficit bound,
* :func:`run_transfer`, the first-peak transfer experiment.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import linalg, optimize
from scipy.ndimage import maximum_filter1d
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import __version__
from .controls import (ControlLaw, fourier_coefficient, has_closed_form, l1_over_period,
                       l1_up_to)
from .models import GalerkinSystem
from .propagator import (DEFAULT_STEPS_PER_PERIOD, midpoint_sweep, partial_step,
                         propagator_matrix, step_grid)

__all__ = [
    "PeriodMismatchError",
    "UndefinedEfficiencyError",
    "NoDirectCouplingError",
    "ZeroEfficiencyError",
    "HorizonExceededError",
    "ResonanceReport",
    "CouplingGraph",
    "TheoremEstimates",
    "TransferReport",
    "efficiency",
    "resonance_analysis",
    "averaged_coupling_graph",
    "theorem_estimates",
    "floquet_generator",
    "floquet_efficiency",
    "run_transfer",
]

RELATION_TOL = 1e-9
COUPLING_EPS = 1e-15


class PeriodMismatchError(ValueError):
    pass


class UndefinedEfficiencyError(ValueError):
    pass


class NoDirectCouplingError(ValueError):
    pass


class ZeroEfficiencyError(ValueError):
    pass


class HorizonExceededError(RuntimeError):
    def __init__(self, message: str, running_max: float, t_running_max: float):
        super().__init__(message)
        self.running_max = running_max
        self.t_running_max = t_running_max


# ---------------------------------------------------------------------------
# arithmetic helpers

def _integer_valued(values) -> bool:
    a = np.asarray(values, dtype=float)
    return bool(np.all(np.abs(a) < 2 ** 52) and np.all(a == np.round(a)))


def _multiple_of(num: float, den: float, exact: bool) -> Optional[int]:
    """``r >= 1`` with ``num == r * den`` (``num, den > 0``), else ``None``."""
    if den <= 0 or num <= 0:
        return None
    if exact:
        n, d = int(round(num)), int(round(den))
        return n // d if n % d == 0 else None
    r = round(num / den)
    if r >= 1 and abs(num - r * den) <= RELATION_TOL * max(abs(num), abs(den)):
        return int(r)
    return None


def _check_period(control, gap: float, strict: bool = False) -> int:
    """Number of transition periods per control period."""
    drive = 2 * math.pi / gap
    P = control.period
    m = P / drive
    r = round(m)
    ok = r >= 1 and abs(m - r) <= RELATION_TOL * max(1.0, m)
    if strict and r != 1:
        ok = False
    if not ok:
        what = "equal to" if strict else "an integer multiple of"
        raise PeriodMismatchError(
            f"control period {P!r} is not {what} the transition period {drive!r}")
    return int(r)


def _coupled(sys: GalerkinSystem, l: int, m: int) -> bool:
    return abs(sys.coupling_matrix[l - 1, m - 1]) > COUPLING_EPS


def _gap(sys: GalerkinSystem, j: int, k: int) -> float:
    return sys.lam(k) - sys.lam(j)


def _check_levels(sys: GalerkinSystem, j: int, k: int) -> None:
    if not (1 <= j <= sys.dim and 1 <= k <= sys.dim) or j == k:
        raise ValueError(f"invalid transition ({j}, {k}) for dimension {sys.dim}")


# ---------------------------------------------------------------------------
# efficiency

def efficiency(control, sys: GalerkinSystem, j: int, k: int) -> float:
    """Efficiency of the shape of ``control`` for the transition ``(j, k)``.

    The control period may be any integer multiple of ``2 pi / |lambda_k - lambda_j|``;
    both integrals are then taken over the full control period.
    """
    _check_levels(sys, j, k)
    gap = _gap(sys, j, k)
    if gap == 0:
        raise ValueError(f"levels {j} and {k} are degenerate")
    _check_period(control, abs(gap))
    L1 = l1_over_period(control)
    if L1 == 0:
        raise UndefinedEfficiencyError("control shape has zero L1 norm over a period")
    return abs(fourier_coefficient(control, gap)) / L1


# ---------------------------------------------------------------------------
# resonances and averaged coupling graph

@dataclass(frozen=True)
class ResonanceReport:
    transition: tuple[int, int]
    drive_gap: float
    multiple_pairs: list[tuple[int, int, int]]
    divisor_pairs: list[tuple[int, int, int]]
    classification: str


@dataclass(frozen=True)
class CouplingGraph:
    """Averaged coupling graph on levels ``1..N``.

    ``edges`` maps ``(l, m)`` (``l < m``) to the relative Fourier weight
    ``|int_0^T u e^{i (lambda_m - lambda_l) t}| / int_0^T |u|``.
    """

    edges: dict[tuple[int, int], float]
    self_edges: list[int]
    component: frozenset[int]
    classification: str


def _components(N: int, edges) -> np.ndarray:
    if not edges:
        return np.arange(N)
    rows = [l - 1 for l, _ in edges]
    cols = [m - 1 for _, m in edges]
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N))
    _, labels = connected_components(adj, directed=False)
    return labels


def _component_of(N: int, edges, j: int) -> frozenset[int]:
    labels = _components(N, edges)
    return frozenset(int(i) + 1 for i in np.nonzero(labels == labels[j - 1])[0])


def averaged_coupling_graph(sys: GalerkinSystem, control, j: int, k: int,
                            tol: float = 1e-9) -> CouplingGraph:
    """Graph of couplings that survive averaging under ``control``, and the class of ``(j, k)``.

    An edge ``(l, m)`` requires ``b_lm != 0``, a gap that is a harmonic of the
    control frequency, and a Fourier weight (computed by quadrature) above ``tol``.  Classes:
    ``invariant-subspace`` when the component of ``j`` is ``{j, k}``;
    ``constrained`` when this only holds after discarding edges whose
    closed-form coefficient vanishes exactly; ``not-guaranteed`` otherwise.
    """
    _check_levels(sys, j, k)
    omega = (control.shape if isinstance(control, ControlLaw) else control).omega
    N = sys.dim
    L1 = l1_over_period(control)
    if L1 == 0:
        raise UndefinedEfficiencyError("control shape has zero L1 norm over a period")
    exact = _integer_valued(sys.drift_diagonal) and _integer_valued([omega])
    closed = has_closed_form(control)

    edges: dict[tuple[int, int], float] = {}
    exact_zero: set[tuple[int, int]] = set()
    self_edges: list[int] = []
    mean = abs(fourier_coefficient(control, 0.0)) / L1
    for l in range(1, N + 1):
        if _coupled(sys, l, l) and mean > tol:
            self_edges.append(l)
        for m in range(l + 1, N + 1):
            if not _coupled(sys, l, m):
                continue
            g = sys.lam(m) - sys.lam(l)
            if g != 0 and _multiple_of(g, omega, exact) is None:
                continue
            weight = abs(fourier_coefficient(control, g, method="quadrature")) / L1
            if weight > tol:
                edges[(l, m)] = weight
                if closed and fourier_coefficient(control, g, method="closed") == 0:
                    exact_zero.add((l, m))

    pair = (min(j, k), max(j, k))
    target = frozenset((j, k))
    component = _component_of(N, list(edges), j)
    if pair not in edges or component != target:
        cls = "not-guaranteed"
        if pair in edges:
            kept = [e for e in edges if e not in exact_zero]
            if _component_of(N, kept, j) == target:
                cls = "constrained"
    else:
        cls = "invariant-subspace"
    return CouplingGraph(edges, self_edges, component, cls)


def resonance_analysis(sys: GalerkinSystem, j: int, k: int, control=None,
                       tol: float = 1e-9) -> ResonanceReport:
    """Coupled pairs whose gap is a multiple or a divisor of the ``(j, k)`` gap.

    Without ``control`` the classification is structural: when no resonant
    coupled pair touches ``j`` or ``k`` the averaged dynamics keeps
    ``span(phi_j, phi_k)`` invariant for every control of the drive period.
    """
    if not j < k <= sys.dim or j < 1:
        raise ValueError(f"need 1 <= j < k <= {sys.dim}, got ({j}, {k})")
    drive = abs(_gap(sys, j, k))
    if drive == 0:
        raise ValueError(f"degenerate drive gap: lambda_{j} == lambda_{k}")
    exact = _integer_valued(sys.drift_diagonal)
    multiples, divisors = [], []
    for l in range(1, sys.dim + 1):
        for m in range(l + 1, sys.dim + 1):
            if {l, m} == {j, k} or not _coupled(sys, l, m):
                continue
            g = abs(sys.lam(m) - sys.lam(l))
            r = _multiple_of(g, drive, exact)
            if r is not None:
                multiples.append((l, m, r))
            r = _multiple_of(drive, g, exact)
            if r is not None:
                divisors.append((l, m, r))
    if not multiples and not divisors:
        cls = "theorem-direct"
    elif control is not None:
        cls = averaged_coupling_graph(sys, control, j, k, tol).classification
    elif any({l, m} & {j, k} for l, m, _ in multiples):
        cls = "not-guaranteed"
    else:
        cls = "invariant-subspace"
    return ResonanceReport((j, k), drive, multiples, divisors, cls)


# ---------------------------------------------------------------------------
# a-priori estimates

@dataclass(frozen=True)
class TheoremEstimates:
    T: float
    T_star: float
    C: float
    deficit_bound: float
    sine_infimum: float
    infimum_empty: bool
    fourier: complex
    l1: float


def _sine_infimum(sys: GalerkinSystem, j: int, k: int) -> Optional[float]:
    """``inf |sin(2 pi (lambda_l - lambda_m)/(lambda_j - lambda_k))|`` over non-integer ratios."""
    lam = sys.drift_diagonal
    den = lam[j - 1] - lam[k - 1]
    best = None
    if _integer_valued(lam):
        d = int(round(den))
        ilam = [int(round(x)) for x in lam]
        for a in ilam:
            for b in ilam:
                q = Fraction(a - b, d)
                if q.denominator == 1:
                    continue
                s = abs(math.sin(2 * math.pi * (q.numerator % q.denominator) / q.denominator))
                best = s if best is None else min(best, s)
        return best
    ratios = np.subtract.outer(lam, lam).ravel() / den
    frac = np.abs(ratios - np.round(ratios))
    keep = frac > RELATION_TOL * np.maximum(1.0, np.abs(ratios))
    if not np.any(keep):
        return None
    return float(np.abs(np.sin(2 * np.pi * ratios[keep])).min())


def theorem_estimates(sys: GalerkinSystem, j: int, k: int, control, n: int) -> TheoremEstimates:
    """Transfer time ``T*``, constant ``C`` and the bound on ``1 - |<phi_k, X(n T*) phi_j>|``."""
    if not 1 <= j < k <= sys.dim:
        raise ValueError(f"need 1 <= j < k <= {sys.dim}, got ({j}, {k})")
    b = abs(sys.b(j, k))
    if b <= COUPLING_EPS:
        raise NoDirectCouplingError(f"b_{j}{k} = 0: no direct coupling")
    gap = _gap(sys, j, k)
    if gap <= 0:
        raise ValueError(f"need lambda_{k} > lambda_{j}")
    _check_period(control, gap, strict=True)
    T = 2 * math.pi / gap
    fc = fourier_coefficient(control, gap)
    L1 = l1_over_period(control)
    if abs(fc) <= 1e-14 * max(L1, 1e-300):
        raise ZeroEfficiencyError(f"control has zero Fourier weight on transition ({j}, {k})")
    T_star = math.pi * T / (2 * b * abs(fc))
    inf = _sine_infimum(sys, j, k)
    empty = inf is None
    denom = 1.0 if empty else inf
    numer = 1.0 + sys.drift_norm + sys.coupling_norm
    C = math.inf if denom == 0 else numer / denom
    deficit = (C / n) * (math.pi / (2 * b)) * L1 ** 2 / abs(fc)
    return TheoremEstimates(T, T_star, C, deficit, 1.0 if empty else inf, empty, fc, L1)


# ---------------------------------------------------------------------------
# Floquet estimate of averaged couplings

def floquet_generator(sys: GalerkinSystem, control: ControlLaw,
                      steps: int = 2000) -> np.ndarray:
    """``log(e^{-A T} X(T, 0)) / T`` for the applied control over one control period."""
    T = control.period
    X = propagator_matrix(sys, control, np.linspace(0.0, T, steps + 1))
    rot = np.exp(1j * sys.drift_diagonal * T)[:, None] * X
    return linalg.logm(rot) / T


def floquet_efficiency(sys: GalerkinSystem, control: ControlLaw, pairs,
                       generator: Optional[np.ndarray] = None) -> dict[tuple[int, int], float]:
    """Numerical efficiencies ``n |G_lm| T / (|b_lm| int_0^T |u*|)`` from the one-period generator."""
    G = floquet_generator(sys, control) if generator is None else generator
    L1 = l1_over_period(control)
    T = control.period
    out = {}
    for l, m in pairs:
        b = abs(sys.b(l, m))
        if b <= COUPLING_EPS:
            raise NoDirectCouplingError(f"b_{l}{m} = 0")
        out[(l, m)] = float(control.divisor * abs(G[l - 1, m - 1]) * T / (b * L1))
    return out


# ---------------------------------------------------------------------------
# transfer experiment

@dataclass
class TransferReport:
    """Outcome of a first-peak transfer experiment (population ``p_dagger`` at ``t_dagger``)."""

    model: str
    dim: int
    transition: tuple[int, int]
    shape: str
    divisor: int
    t_dagger: float
    p_dagger: float
    numerical_efficiency: float
    theoretical_efficiency: float
    T: float
    T_star: float
    C: float
    deficit_bound: float
    literal_efficiency: float
    floquet_efficiency: float
    leakage_efficiencies: dict = field(default_factory=dict)
    l1_to_peak: float = 0.0
    norm_drift: float = 0.0
    settings: dict = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return 1.0 - self.p_dagger

    def to_dict(self) -> dict:
        d = asdict(self)
        d["transition"] = f"{self.transition[0]},{self.transition[1]}"
        d["leakage_efficiencies"] = {f"{l},{m}": v for (l, m), v in self.leakage_efficiencies.items()}
        d["precision"] = self.precision
        d["version"] = __version__
        return d


def _find_envelope_peak(pop: np.ndarray, window: int) -> Optional[int]:
    """First interior local maximum that also dominates ``window`` samples on each side."""
    if pop.size < 3:
        return None
    dominant = pop >= maximum_filter1d(pop, size=2 * window + 1, mode="nearest")
    idx = np.arange(pop.size)
    local = np.zeros(pop.size, dtype=bool)
    local[1:-1] = (pop[1:-1] > pop[:-2]) & (pop[1:-1] >= pop[2:])
    ok = dominant & local & (idx + window <= pop.size - 1)
    hits = np.nonzero(ok)[0]
    return int(hits[0]) if hits.size else None


def run_transfer(sys: GalerkinSystem, j: int, k: int, control: ControlLaw, n: int,
                 horizon_periods: Optional[float] = None, step: Optional[float] = None,
                 peak_window: float = 0.25, leakage: bool = True) -> TransferReport:
    """Propagate ``phi_j`` under ``control/n`` and measure the first peak of population ``k``.

    The peak is the first local maximum of the population that dominates a
    window of ``peak_window * n * T*`` on both sides, which skips the ripples
    at the drive frequency; it is then refined by golden-section search.
    """
    shape_law = control.with_divisor(1)
    applied = control.with_divisor(n)
    est = theorem_estimates(sys, j, k, shape_law, n)
    T = est.T
    b = abs(sys.b(j, k))
    min_periods = 1.5 * n * est.T_star / T
    if horizon_periods is None:
        horizon_periods = math.ceil(min_periods)
    elif horizon_periods < min_periods:
        raise ValueError(f"horizon of {horizon_periods} periods is below the required "
                         f"{min_periods:.4g} (1.5 n T*/T)")
    dt = T / DEFAULT_STEPS_PER_PERIOD if step is None else float(step)
    if T / dt < 40:
        raise ValueError(f"step {dt} gives fewer than 40 samples per drive period")
    horizon = horizon_periods * T
    nodes = step_grid(horizon, dt)
    states = midpoint_sweep(sys, applied, sys.basis_state(j), nodes,
                            sup_control=applied.sup_norm())
    pop = np.abs(states[:, k - 1]) ** 2
    window = max(1, int(round(peak_window * n * est.T_star / dt)))
    i = _find_envelope_peak(pop, window)
    if i is None:
        best = int(np.argmax(pop))
        raise HorizonExceededError(
            f"no peak of population {k} within {horizon_periods} periods "
            f"(running max {pop[best]:.6g} at t={nodes[best]:.6g})",
            float(pop[best]), float(nodes[best]))

    a, c = nodes[i - 1], nodes[i + 1]
    psi_a = states[i - 1]

    def neg_pop(t):
        return -abs(partial_step(sys, applied, a, psi_a, t - a)[k - 1]) ** 2

    res = optimize.minimize_scalar(neg_pop, bracket=(a, nodes[i], c), method="golden",
                                   options={"xtol": 1e-4 * T / (2 * max(nodes[i], T))})
    t_dag, p_dag = float(res.x), float(-res.fun)
    if not a <= t_dag <= c or p_dag < pop[i]:
        t_dag, p_dag = float(nodes[i]), float(pop[i])

    l1_peak = l1_up_to(shape_law, t_dag)
    eff_num = n * math.pi / (2 * b * l1_peak)
    theo = abs(est.fourier) / est.l1

    leak = {}
    floq = float("nan")
    if leakage:
        G = floquet_generator(sys, applied)
        floq = floquet_efficiency(sys, applied, [(j, k)], G)[(j, k)]
        res_report = resonance_analysis(sys, j, k)
        touching = sorted({(l, m) for l, m, _ in res_report.multiple_pairs + res_report.divisor_pairs
                           if {l, m} & {j, k}})
        if touching:
            leak = floquet_efficiency(sys, applied, touching, G)

    settings = {"method": "midpoint-exponential", "step": dt, "steps": int(nodes.size - 1),
                "horizon_periods": horizon_periods, "peak_window": peak_window,
                "peak_xtol": 1e-4 * T}
    return TransferReport(
        model=sys.name, dim=sys.dim, transition=(j, k), shape=shape_law.spec(), divisor=n,
        t_dagger=t_dag, p_dagger=p_dag, numerical_efficiency=eff_num,
        theoretical_efficiency=theo, T=T, T_star=est.T_star, C=est.C,
        deficit_bound=est.deficit_bound, literal_efficiency=(1 - p_dag) * eff_num,
        floquet_efficiency=floq, leakage_efficiencies=leak, l1_to_peak=l1_peak,
        norm_drift=float(np.abs(np.linalg.norm(states, axis=1) - 1).max()),
        settings=settings,
    )
