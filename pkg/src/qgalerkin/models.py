"""
Spectral models of weakly-coupled bilinear systems and their Galerkin compressions.

A bilinear system ``psi' = (A + u(t) B) psi`` is described here in the eigenbasis
of the drift: ``A phi_k = -i lambda_k phi_k``, and the coupling operator ``B`` is
given through its matrix entries ``b_jk = <phi_j, B phi_k>``.  Indices are
1-based everywhere so that level 1 is the ground level of either planar-molecule
subspace.

The module also carries the closed-form a-priori estimates for these systems:
energy growth, truncation tail, Galerkin error, and the factorial bound on
population spreading along a tridiagonal ladder.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "InvalidDimensionError",
    "SpectralModel",
    "GalerkinSystem",
    "build_planar_odd",
    "build_planar_even",
    "PLANAR_ODD",
    "PLANAR_EVEN",
    "REGISTRY",
    "get_model",
    "build_model",
    "system_to_text",
    "system_from_text",
    "energy_growth_bound",
    "truncation_tail_bound",
    "galerkin_error_bound",
    "factorial_population_bound",
    "dimension_for_error",
    "coupling_constant_estimate",
]

SKEW_TOL = 1e-12


class InvalidDimensionError(ValueError):
    """Raised when a Galerkin dimension is below the model minimum."""


def _check_nonneg(**values: float) -> None:
    for name, value in values.items():
        if not value >= 0:
            raise ValueError(f"{name} must be nonnegative, got {value!r}")


@dataclass(frozen=True)
class SpectralModel:
    """Abstract pair (A, B) given by its spectrum and coupling entries.

    Parameters
    ----------
    name : str
        Registry identifier.
    eigenvalue : callable
        ``k -> lambda_k`` for 1-based ``k``; nondecreasing and unbounded.
    coupling : callable
        ``(j, k) -> b_jk`` with ``b_kj = -conj(b_jk)``.
    coupling_norm_bound : float
        Upper bound for the operator norm of ``B``.
    coupling_constant : float, optional
        The weak-coupling constant ``c(A, B)`` when known.
    min_dim : int
        Smallest admissible Galerkin dimension.
    """

    name: str
    eigenvalue: Callable[[int], float]
    coupling: Callable[[int, int], complex]
    coupling_norm_bound: float
    coupling_constant: Optional[float] = None
    min_dim: int = 1

    def galerkin(self, N: int) -> "GalerkinSystem":
        """Compress the model onto the span of its first ``N`` eigenvectors."""
        if not isinstance(N, (int, np.integer)) or N < self.min_dim:
            raise InvalidDimensionError(
                f"{self.name}: dimension must be an integer >= {self.min_dim}, got {N!r}"
            )
        N = int(N)
        lam = np.array([float(self.eigenvalue(k)) for k in range(1, N + 1)])
        B = np.zeros((N, N), dtype=complex)
        for j in range(1, N + 1):
            for k in range(1, N + 1):
                B[j - 1, k - 1] = self.coupling(j, k)
        return GalerkinSystem(lam, B, name=self.name, parent=self)


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    """Finite-dimensional system ``x' = (A_N + u B_N) x`` with ``A_N = diag(-i lambda)``.

    Arrays are copied and frozen on construction.
    """

    drift_diagonal: np.ndarray
    coupling_matrix: np.ndarray
    name: str = "custom"
    parent: Optional[SpectralModel] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        lam = np.array(self.drift_diagonal, dtype=float)
        B = np.array(self.coupling_matrix, dtype=complex)
        if lam.ndim != 1 or B.shape != (lam.size, lam.size):
            raise ValueError(
                f"drift of length {lam.size} incompatible with coupling of shape {B.shape}"
            )
        if lam.size < 1:
            raise InvalidDimensionError("empty system")
        if np.any(np.diff(lam) < 0):
            raise ValueError("drift spectrum must be nondecreasing")
        scale = max(1.0, float(np.abs(B).max()))
        if np.abs(B + B.conj().T).max() > SKEW_TOL * scale:
            raise ValueError("coupling matrix is not skew-adjoint")
        lam.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "drift_diagonal", lam)
        object.__setattr__(self, "coupling_matrix", B)

    @property
    def dim(self) -> int:
        return self.drift_diagonal.size

    @property
    def drift_norm(self) -> float:
        return float(np.abs(self.drift_diagonal).max())

    @property
    def coupling_norm(self) -> float:
        return float(np.linalg.norm(self.coupling_matrix, 2))

    def hamiltonian(self, u: float) -> np.ndarray:
        """Hermitian matrix ``i(A_N + u B_N) = diag(lambda) + i u B_N``."""
        return np.diag(self.drift_diagonal).astype(complex) + 1j * u * self.coupling_matrix

    def b(self, j: int, k: int) -> complex:
        """Coupling entry with 1-based indices."""
        return complex(self.coupling_matrix[j - 1, k - 1])

    def lam(self, k: int) -> float:
        return float(self.drift_diagonal[k - 1])

    def half_norm(self, psi: np.ndarray) -> float:
        """Discrete ``||psi||_{1/2} = (sum lambda_k |psi_k|^2)^{1/2}``."""
        psi = np.asarray(psi)
        return float(np.sqrt(np.sum(self.drift_diagonal * np.abs(psi) ** 2)))

    def basis_state(self, k: int) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[k - 1] = 1.0
        return psi

    def coupling_triplets(self) -> list[tuple[int, int, float, float]]:
        """Nonzero entries as ``(j, k, re, im)`` with 1-based indices."""
        rows, cols = np.nonzero(self.coupling_matrix)
        return [
            (int(j) + 1, int(k) + 1, float(self.coupling_matrix[j, k].real) + 0.0,
             float(self.coupling_matrix[j, k].imag) + 0.0)
            for j, k in zip(rows, cols)
        ]


# ---------------------------------------------------------------------------
# Planar rotating molecule, odd and even subspaces

def _tridiagonal(first: complex, rest: complex) -> Callable[[int, int], complex]:
    def coupling(j: int, k: int) -> complex:
        if abs(j - k) != 1:
            return 0.0
        return first if min(j, k) == 1 else rest

    return coupling


PLANAR_ODD = SpectralModel(
    name="planar-odd",
    eigenvalue=lambda k: float(k * k),
    coupling=_tridiagonal(-0.5j, -0.5j),
    coupling_norm_bound=1.0,
    coupling_constant=1.5,
    min_dim=2,
)

PLANAR_EVEN = SpectralModel(
    name="planar-even",
    eigenvalue=lambda k: float((k - 1) * (k - 1)),
    coupling=_tridiagonal(-1j / math.sqrt(2.0), -0.5j),
    coupling_norm_bound=1.0,
    coupling_constant=None,
    min_dim=2,
)

REGISTRY: dict[str, SpectralModel] = {m.name: m for m in (PLANAR_ODD, PLANAR_EVEN)}


def get_model(model_id: str) -> SpectralModel:
    try:
        return REGISTRY[model_id]
    except KeyError:
        raise KeyError(
            f"unknown model id {model_id!r}; known: {', '.join(sorted(REGISTRY))}"
        ) from None


def build_model(model_id: str, N: int) -> GalerkinSystem:
    return get_model(model_id).galerkin(N)


def build_planar_odd(N: int) -> GalerkinSystem:
    """Odd-parity subspace, ``lambda_k = k^2`` and ``b_{k,k+1} = -i/2``."""
    return PLANAR_ODD.galerkin(N)


def build_planar_even(N: int) -> GalerkinSystem:
    """Even-parity subspace, ``lambda_k = (k-1)^2``, ``b_12 = -i/sqrt(2)``, ``b_{k,k+1} = -i/2``."""
    return PLANAR_EVEN.galerkin(N)


# ---------------------------------------------------------------------------
# Text serialization

def system_to_text(sys: GalerkinSystem) -> str:
    """Line-oriented description: name, dimension, drift vector, coupling triplets."""
    lines = [
        f"name: {sys.name}",
        f"dim: {sys.dim}",
        "drift: " + " ".join(f"{x:.17g}" for x in sys.drift_diagonal),
        "coupling:",
    ]
    for j, k, re_, im_ in sys.coupling_triplets():
        lines.append(f"{j} {k} {re_:.17g} {im_:.17g}")
    return "\n".join(lines) + "\n"


def system_from_text(text: str) -> GalerkinSystem:
    header = {}
    body: list[str] = []
    in_coupling = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if in_coupling:
            body.append(line)
            continue
        m = re.match(r"(\w+):\s*(.*)$", line)
        if not m:
            raise ValueError(f"malformed line {raw!r}")
        key, value = m.groups()
        if key == "coupling":
            in_coupling = True
        else:
            header[key] = value
    for key in ("name", "dim", "drift"):
        if key not in header:
            raise ValueError(f"missing field {key!r}")
    N = int(header["dim"])
    lam = np.array([float(x) for x in header["drift"].split()])
    if lam.size != N:
        raise ValueError(f"drift has {lam.size} entries, expected {N}")
    B = np.zeros((N, N), dtype=complex)
    for line in body:
        j, k, re_, im_ = line.split()
        B[int(j) - 1, int(k) - 1] = complex(float(re_), float(im_))
    return GalerkinSystem(lam, B, name=header["name"].strip())


# ---------------------------------------------------------------------------
# A-priori bounds

def energy_growth_bound(c: float, K: float, h0: float) -> float:
    """Upper bound ``e^{cK} h0`` on the half-norm under an L1 budget ``K``."""
    _check_nonneg(c=c, K=K, h0=h0)
    return math.exp(c * K) * h0


def truncation_tail_bound(c: float, K: float, lambda_next: float, h0: float) -> float:
    """Bound on the mass outside the first ``N`` levels, ``e^{cK} h0 / sqrt(lambda_{N+1})``."""
    if not lambda_next > 0:
        raise ValueError(f"lambda_next must be positive, got {lambda_next!r}")
    _check_nonneg(c=c, K=K, h0=h0)
    return math.exp(c * K) * h0 / math.sqrt(lambda_next)


def galerkin_error_bound(c: float, K: float, lambda_next: float, B_norm: float,
                         h0: float) -> float:
    """Bound ``(1 + K ||B||) e^{cK} h0 / sqrt(lambda_{N+1})`` on the Galerkin error."""
    _check_nonneg(B_norm=B_norm)
    return (1.0 + K * B_norm) * truncation_tail_bound(c, K, lambda_next, h0)


def factorial_population_bound(k: int, L1: float) -> float:
    """``L1^k / k!``: bound on ``|<phi_{k+1}, psi(t)>|`` started from ``phi_1``."""
    if int(k) != k or k < 0:
        raise ValueError(f"k must be a nonnegative integer, got {k!r}")
    _check_nonneg(L1=L1)
    k = int(k)
    if L1 == 0:
        return 1.0 if k == 0 else 0.0
    return math.exp(k * math.log(L1) - math.lgamma(k + 1))


def dimension_for_error(model: SpectralModel, K: float, eps: float, c: Optional[float] = None,
                        h0: float = 1.0, B_norm: Optional[float] = None,
                        include_tail: bool = True, max_dim: int = 10**9) -> int:
    """Smallest ``N`` whose Galerkin error estimate is at most ``eps``.

    With ``include_tail`` the full estimate ``(1 + K||B||) e^{cK} h0 / sqrt(lambda_{N+1})``
    is used; without it only the in-subspace part ``K ||B|| e^{cK} h0 / sqrt(lambda_{N+1})``.
    """
    if c is None:
        c = model.coupling_constant
    if c is None:
        raise ValueError(f"{model.name}: coupling constant unknown, pass c explicitly")
    if B_norm is None:
        B_norm = model.coupling_norm_bound
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    _check_nonneg(c=c, K=K, h0=h0, B_norm=B_norm)
    factor = (1.0 + K * B_norm) if include_tail else K * B_norm
    threshold = (factor * math.exp(c * K) * h0 / eps) ** 2

    def ok(N: int) -> bool:
        return model.eigenvalue(N + 1) >= threshold

    lo = model.min_dim
    if ok(lo):
        return lo
    hi = 2 * lo
    while not ok(hi):
        lo, hi = hi, 2 * hi
        if hi > max_dim:
            raise ValueError(f"no dimension below {max_dim} reaches error {eps}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def coupling_constant_estimate(sys: GalerkinSystem) -> float:
    """Galerkin-level coupling constant ``sup |Re<|A|psi, B psi>| / <|A|psi, psi>``.

    Requires a strictly positive drift spectrum.  Computed as the spectral radius
    of ``|A|^{-1/2} S |A|^{-1/2}`` where ``S`` is the Hermitian part of ``|A| B``.
    """
    lam = sys.drift_diagonal
    if np.any(lam <= 0):
        raise ValueError("coupling constant needs a positive drift spectrum")
    M = np.diag(lam) @ sys.coupling_matrix
    S = 0.5 * (M + M.conj().T)
    d = 1.0 / np.sqrt(lam)
    return float(np.abs(np.linalg.eigvalsh(d[:, None] * S * d[None, :])).max())
