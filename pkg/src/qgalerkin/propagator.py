"""
Unitary propagation of Galerkin systems.

Every step exponential ``exp(dt (A_N + u B_N))`` is obtained from the
eigendecomposition of the Hermitian matrix ``H(u) = i (A_N + u B_N)``, so
propagators are unitary to roundoff regardless of the step size.

Two schemes are provided:

* piecewise-exact: controls constant on given pieces, composed exactly;
* midpoint-exponential: for smooth controls, ``u`` frozen at the midpoint
  of each step (second order in ``dt``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .controls import ControlLaw, Sampled
from .models import GalerkinSystem

__all__ = [
    "NormalizationError",
    "SkewAdjointError",
    "StepSizeWarning",
    "PropagationOptions",
    "Trajectory",
    "expm_skew",
    "propagate_piecewise",
    "propagate_control",
    "populations",
    "trajectory_to_csv",
    "DEFAULT_STEPS_PER_PERIOD",
    "DEFAULT_RECORD_POINTS",
]

DEFAULT_STEPS_PER_PERIOD = 200
DEFAULT_RECORD_POINTS = 2000
UNITARY_TOL = 1e-12
NORM_TOL = 1e-10
_BATCH = 4096


class NormalizationError(ValueError):
    pass


class SkewAdjointError(ValueError):
    pass


class StepSizeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PropagationOptions:
    method: str = "midpoint-exponential"
    step: Optional[float] = None
    unitarity_tol: float = UNITARY_TOL
    record_grid: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.method not in ("midpoint-exponential", "piecewise-exact"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.step is not None and not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step!r}")
        if not self.unitarity_tol > 0:
            raise ValueError("unitarity_tol must be positive")

    def as_dict(self) -> dict:
        return {"method": self.method, "step": self.step, "unitarity_tol": self.unitarity_tol,
                "record_points": None if self.record_grid is None else len(self.record_grid)}


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded states; ``states[i]`` holds the amplitudes at ``times[i]``."""

    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def norm_drift(self) -> float:
        return float(np.abs(np.linalg.norm(self.states, axis=1) - 1.0).max())


def _check_skew(B: np.ndarray) -> None:
    scale = max(1.0, float(np.abs(B).max()))
    if np.abs(B + B.conj().T).max() > UNITARY_TOL * scale:
        raise SkewAdjointError("coupling matrix is not skew-adjoint")


def _reorthonormalize(U: np.ndarray) -> np.ndarray:
    W, _, Vh = np.linalg.svd(U)
    return W @ Vh


def expm_skew(diag, coupling, u: float, dt: float, check: bool = True) -> np.ndarray:
    """``exp(dt (-i diag(lambda) + u B))`` via Hermitian eigendecomposition."""
    lam = np.asarray(diag, dtype=float)
    B = np.asarray(coupling, dtype=complex)
    if check:
        _check_skew(B)
    H = np.diag(lam).astype(complex) + 1j * u * B
    w, V = np.linalg.eigh(H)
    U = (V * np.exp(-1j * w * dt)) @ V.conj().T
    err = np.abs(U.conj().T @ U - np.eye(lam.size)).max()
    if err > UNITARY_TOL:
        U = _reorthonormalize(U)
    return U


def _batch_expm(lam: np.ndarray, B: np.ndarray, u: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """Stack of step exponentials for arrays of control values and durations."""
    H = np.diag(lam).astype(complex)[None, :, :] + 1j * u[:, None, None] * B[None, :, :]
    w, V = np.linalg.eigh(H)
    U = (V * np.exp(-1j * w * dt[:, None])[:, None, :]) @ np.conj(np.swapaxes(V, 1, 2))
    err = np.abs(np.conj(np.swapaxes(U, 1, 2)) @ U - np.eye(lam.size)).max(axis=(1, 2))
    for i in np.nonzero(err > UNITARY_TOL)[0]:
        U[i] = _reorthonormalize(U[i])
    return U


def _check_state(sys: GalerkinSystem, psi0) -> np.ndarray:
    psi = np.asarray(psi0, dtype=complex).ravel()
    if psi.size != sys.dim:
        raise ValueError(f"state has {psi.size} amplitudes, system has dimension {sys.dim}")
    norm = float(np.linalg.norm(psi))
    if abs(norm - 1.0) > NORM_TOL:
        raise NormalizationError(f"initial state has norm {norm!r}, expected 1")
    return psi


def _check_finite(psi: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(psi)):
        raise FloatingPointError(f"non-finite amplitude at t={t}")


def propagate_piecewise(sys: GalerkinSystem, pieces: Sequence[tuple[float, float]], psi0,
                        record_grid: Optional[Sequence[float]] = None) -> Trajectory:
    """Exact composition of constant-control exponentials.

    ``pieces`` is a sequence of ``(duration, value)``.  States are recorded at
    ``record_grid`` (default: piece boundaries), each obtained from the start of
    its piece by one exponential so the chosen grid does not affect the result.
    """
    psi = _check_state(sys, psi0)
    _check_skew(sys.coupling_matrix)
    durations = np.array([float(d) for d, _ in pieces])
    if np.any(durations <= 0):
        raise ValueError("piece durations must be positive")
    bounds = np.concatenate([[0.0], np.cumsum(durations)])
    if record_grid is None:
        grid = bounds.copy()
    else:
        grid = np.sort(np.asarray(record_grid, dtype=float))
        if grid.size and (grid[0] < 0 or grid[-1] > bounds[-1] * (1 + 1e-14)):
            raise ValueError(f"record times must lie in [0, {bounds[-1]}]")
    lam = sys.drift_diagonal
    B = sys.coupling_matrix
    out = np.empty((grid.size, sys.dim), dtype=complex)
    gi = 0
    # record times at 0
    while gi < grid.size and grid[gi] <= 0:
        out[gi] = psi
        gi += 1
    for p, (d, value) in enumerate(pieces):
        t0, t1 = bounds[p], bounds[p + 1]
        last = p == len(pieces) - 1
        w, V = np.linalg.eigh(np.diag(lam).astype(complex) + 1j * float(value) * B)
        coeff = V.conj().T @ psi
        while gi < grid.size and (grid[gi] <= t1 or last):
            s = grid[gi] - t0
            out[gi] = V @ (np.exp(-1j * w * s) * coeff)
            gi += 1
        psi = V @ (np.exp(-1j * w * d) * coeff)
        _check_finite(psi, t1)
    return Trajectory(grid, out, meta={"method": "piecewise-exact", "pieces": len(pieces)})


ControlLike = Union[ControlLaw, Callable[[np.ndarray], np.ndarray]]


def _period_of(control) -> Optional[float]:
    period = getattr(control, "period", None)
    return float(period) if period else None


def step_grid(horizon: float, dt: float) -> np.ndarray:
    """Nodes ``0, dt, 2 dt, ...`` ending exactly at ``horizon`` (last step possibly shorter)."""
    count = int(math.ceil(horizon / dt - 1e-9))
    nodes = np.arange(count + 1, dtype=float) * dt
    nodes[-1] = horizon
    return nodes


def midpoint_sweep(sys: GalerkinSystem, control: ControlLike, psi0, nodes: np.ndarray,
                   sup_control: Optional[float] = None) -> np.ndarray:
    """States at every node of the midpoint-exponential scheme.

    When the control is periodic and the uniform step divides its period, the
    step exponentials of one period are computed once and reused.
    """
    psi = _check_state(sys, psi0)
    _check_skew(sys.coupling_matrix)
    lam = sys.drift_diagonal
    B = sys.coupling_matrix
    dts = np.diff(nodes)
    if np.any(dts <= 0):
        raise ValueError("time nodes must be increasing")
    mids = nodes[:-1] + dts / 2
    u_mid = np.asarray(control(mids), dtype=float)
    if not np.all(np.isfinite(u_mid)):
        raise FloatingPointError("control returned non-finite values")
    if sup_control is None:
        sup_control = float(np.abs(u_mid).max()) if u_mid.size else 0.0
    worst = float(dts.max()) * (sys.drift_norm + sup_control * sys.coupling_norm) if dts.size else 0.0
    if worst > 0.5:
        warnings.warn(f"step {dts.max():.3g} exceeds the stability heuristic "
                      f"(dt*(lambda_N + |u|*|B|) = {worst:.3g} > 0.5)", StepSizeWarning,
                      stacklevel=3)

    steps = dts.size
    states = np.empty((steps + 1, sys.dim), dtype=complex)
    states[0] = psi

    period = _period_of(control)
    dt0 = dts[0] if steps else 0.0
    cycle = None
    if period and steps > 1:
        m = period / dt0
        if abs(m - round(m)) < 1e-9 and round(m) < steps:
            m = int(round(m))
            uniform = np.abs(dts[:-1] - dt0) <= 1e-9 * dt0
            if np.all(uniform):
                cycle = m
    if cycle is not None:
        phase_mids = (np.arange(cycle) + 0.5) * dt0
        Ucycle = _batch_expm(lam, B, np.asarray(control(phase_mids), dtype=float),
                             np.full(cycle, dt0))
        full = steps - 1 if abs(dts[-1] - dt0) > 1e-9 * dt0 else steps
        for i in range(full):
            psi = Ucycle[i % cycle] @ psi
            states[i + 1] = psi
        if full < steps:
            psi = expm_skew(lam, B, float(u_mid[-1]), float(dts[-1]), check=False) @ psi
            states[-1] = psi
    else:
        for start in range(0, steps, _BATCH):
            stop = min(start + _BATCH, steps)
            U = _batch_expm(lam, B, u_mid[start:stop], dts[start:stop])
            for i in range(stop - start):
                psi = U[i] @ psi
                states[start + i + 1] = psi
    if not np.all(np.isfinite(states)):
        bad = int(np.argmax(~np.all(np.isfinite(states), axis=1)))
        raise FloatingPointError(f"non-finite amplitude at t={nodes[bad]}")
    return states


def propagator_matrix(sys: GalerkinSystem, control: ControlLike, nodes: np.ndarray) -> np.ndarray:
    """Midpoint-exponential propagator ``X(nodes[-1], nodes[0])`` as a matrix."""
    lam = sys.drift_diagonal
    B = sys.coupling_matrix
    dts = np.diff(nodes)
    u_mid = np.asarray(control(nodes[:-1] + dts / 2), dtype=float)
    X = np.eye(sys.dim, dtype=complex)
    for start in range(0, dts.size, _BATCH):
        stop = min(start + _BATCH, dts.size)
        for U in _batch_expm(lam, B, u_mid[start:stop], dts[start:stop]):
            X = U @ X
    return X


def partial_step(sys: GalerkinSystem, control: ControlLike, t0: float, psi: np.ndarray,
                 s: float) -> np.ndarray:
    """Advance ``psi`` from ``t0`` by one midpoint step of length ``s``."""
    if s == 0:
        return psi
    u = float(np.asarray(control(np.array([t0 + s / 2])), dtype=float)[0])
    return expm_skew(sys.drift_diagonal, sys.coupling_matrix, u, s, check=False) @ psi


def _pieces_for_sampled(control: ControlLaw, horizon: float) -> list[tuple[float, float]]:
    shape = control.shape
    h = shape.bin_width
    pieces = []
    t = 0.0
    i = 0
    while t < horizon * (1 - 1e-15):
        d = min(h, horizon - t)
        if d <= 0:
            break
        pieces.append((d, float(shape.values[i % shape.values.size]) / control.divisor))
        i += 1
        t = i * h
    return pieces


def propagate_control(sys: GalerkinSystem, control: ControlLike, psi0, horizon: float,
                      opts: Optional[PropagationOptions] = None) -> Trajectory:
    """Propagate under a time-dependent control up to ``horizon``.

    Sampled shapes go through :func:`propagate_piecewise`; anything else uses
    midpoint-exponential steps of size ``opts.step`` (default: period / 200).
    Output is recorded on ``opts.record_grid`` (default: 2000 uniform times).
    """
    opts = opts or PropagationOptions()
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    grid = (np.linspace(0.0, horizon, DEFAULT_RECORD_POINTS) if opts.record_grid is None
            else np.sort(np.asarray(opts.record_grid, dtype=float)))
    if grid.size and (grid[0] < 0 or grid[-1] > horizon * (1 + 1e-14)):
        raise ValueError(f"record times must lie in [0, {horizon}]")

    if isinstance(control, ControlLaw) and isinstance(control.shape, Sampled):
        traj = propagate_piecewise(sys, _pieces_for_sampled(control, horizon), psi0,
                                   record_grid=grid)
        return Trajectory(traj.times, traj.states,
                          meta={**opts.as_dict(), "method": "piecewise-exact"})

    if opts.method == "piecewise-exact":
        raise ValueError("piecewise-exact propagation needs sampled controls or explicit pieces")
    dt = opts.step
    if dt is None:
        period = _period_of(control)
        if period is None:
            raise ValueError("step must be given for non-periodic controls")
        dt = period / DEFAULT_STEPS_PER_PERIOD
    nodes = step_grid(horizon, dt)
    sup = control.sup_norm() if isinstance(control, ControlLaw) else None
    states = midpoint_sweep(sys, control, psi0, nodes, sup_control=sup)
    out = np.empty((grid.size, sys.dim), dtype=complex)
    idx = np.clip(np.searchsorted(nodes, grid, side="right") - 1, 0, nodes.size - 1)
    for g, (t, i) in enumerate(zip(grid, idx)):
        s = t - nodes[i]
        out[g] = states[i] if s <= 1e-15 * max(1.0, t) else partial_step(sys, control, nodes[i],
                                                                          states[i], s)
    meta = {**opts.as_dict(), "step": dt, "steps": nodes.size - 1}
    return Trajectory(grid, out, meta=meta)


def populations(traj: Trajectory, k: int) -> np.ndarray:
    """``|<phi_k, psi(t)>|^2`` at every recorded time (1-based ``k``)."""
    if int(k) != k or not 1 <= k <= traj.dim:
        raise IndexError(f"level {k!r} out of range 1..{traj.dim}")
    return np.abs(traj.states[:, int(k) - 1]) ** 2


def trajectory_to_csv(traj: Trajectory, path_or_buf) -> None:
    """Write ``t, re_1, im_1, ..., re_N, im_N, pop_1, ..., pop_N`` with 17 significant digits."""
    N = traj.dim
    header = ["t"]
    for k in range(1, N + 1):
        header += [f"re_{k}", f"im_{k}"]
    header += [f"pop_{k}" for k in range(1, N + 1)]
    pops = traj.populations
    lines = [",".join(header)]
    for t, psi, pop in zip(traj.times, traj.states, pops):
        row = [t]
        for z in psi:
            row += [z.real, z.imag]
        row += list(pop)
        lines.append(",".join(f"{float(x):.17g}" for x in row))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)
