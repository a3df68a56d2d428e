"""
Periodic control shapes, their one-period L1 norms and Fourier data.

A :class:`ControlLaw` couples a shape (a periodic real function) with an
amplitude divisor ``n``; the applied control is ``shape(t) / n``.  L1 norms and
Fourier coefficients always refer to the undivided shape over one period
``[0, T]``.

Closed forms are available for cosine powers and affine cosines; pulse trains
go through adaptive quadrature and sampled (piecewise-constant) shapes are
integrated bin by bin.  ``method="quadrature"`` forces the numerical path for
every shape so that it can be checked against the closed forms.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Union

import numpy as np
from scipy import integrate, special

__all__ = [
    "CosinePower",
    "AffineCosine",
    "PulseTrain",
    "Sampled",
    "ControlLaw",
    "QuadratureError",
    "ShapeSpecError",
    "evaluate",
    "l1_over_period",
    "fourier_coefficient",
    "product_efficiency",
    "worst_case",
    "high_order_lower_bound",
    "parse_shape",
]

_QUAD_EPSREL = 1e-12
_QUAD_EPSABS = 1e-14


class QuadratureError(RuntimeError):
    pass


class ShapeSpecError(ValueError):
    pass


@dataclass(frozen=True)
class CosinePower:
    """``cos(omega t)**l``."""

    l: int
    omega: float

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 1:
            raise ValueError(f"power l must be a positive integer, got {self.l!r}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega!r}")

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega

    def __call__(self, t):
        return np.cos(self.omega * np.asarray(t, dtype=float)) ** self.l

    def spec(self) -> str:
        return f"cospow(l={self.l}, omega={self.omega!r}"


@dataclass(frozen=True)
class AffineCosine:
    """``offset + amp * cos(omega t)``."""

    offset: float
    amp: float
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega!r}")

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega

    def __call__(self, t):
        return self.offset + self.amp * np.cos(self.omega * np.asarray(t, dtype=float))

    def spec(self) -> str:
        return f"affcos(offset={self.offset!r}, amp={self.amp!r}, omega={self.omega!r}"


@dataclass(frozen=True)
class PulseTrain:
    """Raised-cosine bumps centred on multiples of the period, unit area each.

    ``width`` is the bump duration as a fraction of the period; ``width=1``
    gives ``(1 + cos(omega t)) / T``.
    """

    width: float
    omega: float

    def __post_init__(self):
        if not 0 < self.width <= 1:
            raise ValueError(f"width must lie in (0, 1], got {self.width!r}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega!r}")

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega

    def __call__(self, t):
        T = self.period
        w = self.width * T
        t = np.asarray(t, dtype=float)
        s = t - T * np.round(t / T)
        inside = np.abs(s) < w / 2
        return np.where(inside, (1.0 + np.cos(2 * math.pi * s / w)) / w, 0.0)

    def breakpoints(self) -> list[float]:
        T = self.period
        half = self.width * T / 2
        if self.width == 1:
            return [0.0, T]
        return [0.0, half, T - half, T]

    def spec(self) -> str:
        return f"pulses(width={self.width!r}, omega={self.omega!r}"


@dataclass(frozen=True, eq=False)
class Sampled:
    """Piecewise-constant shape: ``values[i]`` on ``[i, i+1) * period / len(values)``."""

    values: np.ndarray
    period_: float
    source: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("sampled shape needs at least one value")
        if not self.period_ > 0:
            raise ValueError(f"period must be positive, got {self.period_!r}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def period(self) -> float:
        return self.period_

    @property
    def omega(self) -> float:
        return 2 * math.pi / self.period_

    @property
    def bin_width(self) -> float:
        return self.period_ / self.values.size

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.floor(np.mod(t, self.period_) / self.bin_width).astype(int)
        return self.values[np.clip(idx, 0, self.values.size - 1)]

    def spec(self) -> str:
        return f"sampled(file={self.source}, period={self.period_!r}"


Shape = Union[CosinePower, AffineCosine, PulseTrain, Sampled]


@dataclass(frozen=True)
class ControlLaw:
    """A periodic shape together with the amplitude divisor ``n``."""

    shape: Shape
    divisor: int = 1

    def __post_init__(self):
        if int(self.divisor) != self.divisor or self.divisor < 1:
            raise ValueError(f"divisor must be a positive integer, got {self.divisor!r}")

    @property
    def period(self) -> float:
        return self.shape.period

    @property
    def frequency(self) -> float:
        return self.shape.omega

    def __call__(self, t):
        return self.shape(t) / self.divisor

    def with_divisor(self, n: int) -> "ControlLaw":
        return replace(self, divisor=n)

    def sup_norm(self) -> float:
        """Bound on ``max |u|`` (including the divisor)."""
        s = self.shape
        if isinstance(s, CosinePower):
            m = 1.0
        elif isinstance(s, AffineCosine):
            m = abs(s.offset) + abs(s.amp)
        elif isinstance(s, PulseTrain):
            m = 2.0 / (s.width * s.period)
        else:
            m = float(np.abs(s.values).max())
        return m / self.divisor

    def spec(self) -> str:
        return self.shape.spec() + f", n={self.divisor})"


def _shape(control) -> Shape:
    return control.shape if isinstance(control, ControlLaw) else control


def evaluate(control, t):
    """Applied control value(s) at time(s) ``t``."""
    return control(t)


# ---------------------------------------------------------------------------
# closed forms

def _wallis(l: int) -> float:
    """``int_0^{pi/2} cos^l``."""
    ratio = math.prod(range(l - 1, 0, -2)) / math.prod(range(l, 0, -2))
    return ratio if l % 2 else math.pi / 2 * ratio


def _exp_integral(x: float, T: float) -> complex:
    """``int_0^T e^{i x t} dt``, exact zero when ``x T`` is a nonzero multiple of ``2 pi``."""
    y = x * T / (2 * math.pi)
    r = round(y)
    if r != 0 and abs(y - r) <= 1e-12 * max(1.0, abs(y)):
        return 0j
    return T * complex(np.exp(0.5j * x * T)) * float(np.sinc(y))


def _closed_l1(s: Shape) -> float:
    if isinstance(s, CosinePower):
        return 4.0 * _wallis(s.l) / s.omega
    if isinstance(s, AffineCosine):
        a, b = s.offset, abs(s.amp)
        if abs(a) >= b:
            return abs(a) * s.period
        x0 = math.acos(-a / b)
        return (4 * a * x0 - 2 * math.pi * a + 4 * b * math.sin(x0)) / s.omega
    if isinstance(s, PulseTrain):
        return 1.0
    if isinstance(s, Sampled):
        return float(np.abs(s.values).sum() * s.bin_width)
    raise TypeError(f"unsupported shape {type(s).__name__}")


def _closed_fourier(s: Shape, freq: float) -> complex:
    T = s.period
    if isinstance(s, CosinePower):
        l = s.l
        total = 0j
        for r in range(l + 1):
            total += math.comb(l, r) * _exp_integral((l - 2 * r) * s.omega + freq, T)
        return total / 2 ** l
    if isinstance(s, AffineCosine):
        return (s.offset * _exp_integral(freq, T)
                + 0.5 * s.amp * (_exp_integral(freq + s.omega, T)
                                 + _exp_integral(freq - s.omega, T)))
    if isinstance(s, Sampled):
        h = s.bin_width
        starts = np.arange(s.values.size) * h
        if freq == 0:
            return complex(s.values.sum() * h)
        bins = (np.exp(1j * freq * (starts + h)) - np.exp(1j * freq * starts)) / (1j * freq)
        return complex(np.dot(s.values, bins))
    raise TypeError(f"no closed form for {type(s).__name__}")


# ---------------------------------------------------------------------------
# quadrature path

def _breakpoints(s: Shape) -> list[float]:
    T = s.period
    if isinstance(s, PulseTrain):
        return s.breakpoints()
    if isinstance(s, Sampled):
        return list(np.arange(s.values.size + 1) * s.bin_width)
    if isinstance(s, CosinePower):
        # zeros of cos(omega t) in (0, T): kinks of |cos|^l
        return [0.0, T / 4, 3 * T / 4, T]
    if isinstance(s, AffineCosine):
        pts = [0.0, T]
        if abs(s.amp) > abs(s.offset):
            x0 = math.acos(-s.offset / s.amp)
            pts += [x0 / s.omega, (2 * math.pi - x0) / s.omega]
        return sorted(pts)
    raise TypeError(f"unsupported shape {type(s).__name__}")


def _quad(f, a: float, b: float, **kw) -> float:
    """Adaptive quadrature judged against the integrand scale ``(b - a) max|f|``.

    Coefficients that vanish exactly make a relative target unreachable, so
    QUADPACK round-off warnings are accepted when the error estimate is still
    below ``1e-10`` of that scale.
    """
    scale = (b - a) * max(abs(float(f(x))) for x in np.linspace(a, b, 33))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=_QUAD_EPSABS * max(scale, 1.0),
                                  epsrel=_QUAD_EPSREL, limit=400, **kw)
    if err > 1e-10 * max(abs(val), scale, 1e-300):
        detail = f": {caught[0].message}" if caught else ""
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge "
                              f"(error estimate {err:.3g}){detail}")
    return val


def _segments(s: Shape):
    pts = _breakpoints(s)
    return [(a, b) for a, b in zip(pts[:-1], pts[1:]) if b > a]


def _quad_l1(s: Shape) -> float:
    f = lambda t: abs(float(s(t)))
    return sum(_quad(f, a, b) for a, b in _segments(s))


def _quad_fourier(s: Shape, freq: float) -> complex:
    f = lambda t: float(s(t))
    re_ = im_ = 0.0
    for a, b in _segments(s):
        if freq == 0:
            re_ += _quad(f, a, b)
        else:
            re_ += _quad(f, a, b, weight="cos", wvar=freq)
            im_ += _quad(f, a, b, weight="sin", wvar=freq)
    return complex(re_, im_)


def l1_over_period(control, method: str = "auto") -> float:
    """``int_0^T |shape(t)| dt`` for the undivided shape."""
    s = _shape(control)
    if method == "quadrature":
        return _quad_l1(s)
    if method in ("auto", "closed"):
        return _closed_l1(s)
    raise ValueError(f"unknown method {method!r}")


def fourier_coefficient(control, omega: float, method: str = "auto") -> complex:
    """``int_0^T shape(t) e^{i omega t} dt`` for the undivided shape."""
    s = _shape(control)
    if method == "quadrature" or (method == "auto" and isinstance(s, PulseTrain)):
        return _quad_fourier(s, omega)
    if method in ("auto", "closed"):
        return _closed_fourier(s, omega)
    raise ValueError(f"unknown method {method!r}")


def has_closed_form(control) -> bool:
    return isinstance(_shape(control), (CosinePower, AffineCosine, Sampled))


def l1_up_to(control, t: float) -> float:
    """``int_0^t |u(tau)| dtau`` for the applied (divided) control."""
    s = _shape(control)
    n = control.divisor if isinstance(control, ControlLaw) else 1
    T = s.period
    whole = math.floor(t / T)
    rest = t - whole * T
    total = whole * l1_over_period(s)
    if rest > 0:
        pts = [p for p in _breakpoints(s) if 0 < p < rest]
        knots = [0.0] + pts + [rest]
        f = lambda x: abs(float(s(x)))
        total += sum(_quad(f, a, b) for a, b in zip(knots[:-1], knots[1:]) if b > a)
    return total / n


# ---------------------------------------------------------------------------
# efficiency of piecewise-constant constructions

def product_efficiency(resonances) -> float:
    """``prod cos(pi / (2 a_n))`` over the resonance ratios ``a_n > 1``."""
    a = np.asarray(list(resonances), dtype=float)
    if np.any(a <= 1):
        raise ValueError(f"resonance ratios must exceed 1, got {a[a <= 1].tolist()}")
    return float(np.prod(np.cos(np.pi / (2 * a))))


# Taylor coefficients of -log cos x = sum_k c_k x^{2k}
_NEG_LOG_COS = (1 / 2, 1 / 12, 1 / 45, 17 / 2520, 31 / 14175)


def worst_case(cutoff: int = 1000) -> float:
    """``prod_{n >= 2} cos(pi / 2n)``: direct product up to ``cutoff``, Hurwitz-zeta tail."""
    n = np.arange(2, cutoff + 1, dtype=float)
    log_head = np.sum(np.log(np.cos(np.pi / (2 * n))))
    log_tail = -sum(c * (math.pi / 2) ** (2 * k) * special.zeta(2 * k, cutoff + 1)
                    for k, c in enumerate(_NEG_LOG_COS, start=1))
    return float(math.exp(log_head + log_tail))


def high_order_lower_bound(N: float) -> float:
    """``exp(-pi^2/(4N) - pi^4/(48 N^3))``."""
    if not N > 0:
        raise ValueError(f"N must be positive, got {N!r}")
    return math.exp(-math.pi ** 2 / (4 * N) - math.pi ** 4 / (48 * N ** 3))


# ---------------------------------------------------------------------------
# spec grammar

_SPEC_RE = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$")

_FIELDS = {
    "cospow": ("l", "omega", "n"),
    "affcos": ("offset", "amp", "omega", "n"),
    "pulses": ("width", "omega", "n"),
    "sampled": ("file", "period", "n"),
}


def _number(kind: str, key: str, text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ShapeSpecError(f"{kind}: field '{key}' must be a number, got {text.strip()!r}") from None


def _integer(kind: str, key: str, text: str) -> int:
    value = _number(kind, key, text)
    if value != int(value) or value < 1:
        raise ShapeSpecError(f"{kind}: field '{key}' must be a positive integer, got {text.strip()!r}")
    return int(value)


def parse_shape(spec: str) -> ControlLaw:
    """Parse ``cospow(l=3, omega=3, n=30)`` and friends into a :class:`ControlLaw`."""
    m = _SPEC_RE.match(spec)
    if not m:
        raise ShapeSpecError(f"malformed shape spec {spec!r}; expected name(key=value, ...)")
    kind, body = m.group(1), m.group(2)
    if kind not in _FIELDS:
        raise ShapeSpecError(f"unknown shape {kind!r}; expected one of {', '.join(_FIELDS)}")
    args: dict[str, str] = {}
    for item in filter(None, (p.strip() for p in body.split(","))):
        if "=" not in item:
            raise ShapeSpecError(f"{kind}: argument {item!r} is not of the form key=value")
        key, value = (x.strip() for x in item.split("=", 1))
        if key not in _FIELDS[kind]:
            raise ShapeSpecError(f"{kind}: unknown field '{key}'")
        if key in args:
            raise ShapeSpecError(f"{kind}: field '{key}' given twice")
        args[key] = value
    required = [k for k in _FIELDS[kind] if k != "n"]
    for key in required:
        if key not in args:
            raise ShapeSpecError(f"{kind}: missing field '{key}'")
    n = _integer(kind, "n", args["n"]) if "n" in args else 1

    def positive(key):
        v = _number(kind, key, args[key])
        if not v > 0:
            raise ShapeSpecError(f"{kind}: field '{key}' must be positive, got {args[key]!r}")
        return v

    if kind == "cospow":
        shape = CosinePower(_integer(kind, "l", args["l"]), positive("omega"))
    elif kind == "affcos":
        shape = AffineCosine(_number(kind, "offset", args["offset"]),
                             _number(kind, "amp", args["amp"]), positive("omega"))
    elif kind == "pulses":
        width = positive("width")
        if width > 1:
            raise ShapeSpecError(f"pulses: field 'width' must lie in (0, 1], got {args['width']!r}")
        shape = PulseTrain(width, positive("omega"))
    else:
        path = args["file"]
        try:
            values = np.loadtxt(path, dtype=float, ndmin=1)
        except (OSError, ValueError) as exc:
            raise ShapeSpecError(f"sampled: field 'file' could not be read: {exc}") from None
        if values.size == 0:
            raise ShapeSpecError(f"sampled: field 'file' holds no values ({path})")
        shape = Sampled(values, positive("period"), source=path)
    return ControlLaw(shape, n)
