"""Meshes, nonlinearities, transmission functions and initial data."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

ScalarFn = Callable[[np.ndarray], np.ndarray]


class ConfigError(ValueError):
    """Raised for inadmissible meshes, layouts or nonlinearity choices."""


def cfl_margin(dt: float, dx: float) -> float:
    """Return ``1 - (dt^2/dx^2 + dt^2/4)``; positive when the CFL condition holds."""
    return 1.0 - (dt * dt / (dx * dx) + dt * dt / 4.0)


@dataclass(frozen=True)
class MeshSpec:
    a_minus: float
    a_plus: float
    J: int
    N: int
    T: float

    def __post_init__(self):
        if int(self.J) != self.J or self.J < 1:
            raise ConfigError(f"J must be a positive integer, got {self.J!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N!r}")
        if not self.a_plus > self.a_minus:
            raise ConfigError("a_plus must exceed a_minus")
        if not self.T > 0:
            raise ConfigError("T must be positive")

    @property
    def dx(self) -> float:
        return (self.a_plus - self.a_minus) / self.J

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def x(self) -> np.ndarray:
        return self.a_minus + np.arange(self.J + 1) * self.dx

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    def cfl_margin(self) -> float:
        return cfl_margin(self.dt, self.dx)

    def require_cfl(self) -> None:
        margin = self.cfl_margin()
        if not margin > 0:
            raise ConfigError(
                f"CFL violated: dt={self.dt:.6g}, dx={self.dx:.6g}, margin={margin:.3g}"
            )

    @classmethod
    def from_steps(cls, a_minus: float, a_plus: float, dx: float, dt: float, T: float) -> "MeshSpec":
        """Build a mesh from step sizes; both must divide their intervals."""
        J = round((a_plus - a_minus) / dx)
        N = round(T / dt)
        if abs(J * dx - (a_plus - a_minus)) > 1e-9 * (a_plus - a_minus):
            raise ConfigError(f"dx={dx} does not divide [{a_minus}, {a_plus}]")
        if abs(N * dt - T) > 1e-9 * T:
            raise ConfigError(f"dt={dt} does not divide [0, {T}]")
        return cls(a_minus, a_plus, J, N, T)

    def node_index(self, x: float) -> int:
        """Index of the grid node at ``x``; raises if ``x`` is off-grid."""
        m = round((x - self.a_minus) / self.dx)
        if abs(self.a_minus + m * self.dx - x) > 1e-9 * self.dx or not 0 <= m <= self.J:
            raise ConfigError(f"x={x} is not a grid node of {self}")
        return m

    def sub(self, j0: int, j1: int) -> "MeshSpec":
        """Local mesh covering global nodes ``j0..j1`` with the same dt."""
        return MeshSpec(self.a_minus + j0 * self.dx, self.a_minus + j1 * self.dx, j1 - j0, self.N, self.T)


@dataclass(frozen=True)
class SubdomainLayout:
    """Node ranges of the subdomains on the global grid.

    ``spans`` holds inclusive global node ranges ``(j0, j1)``. Nonoverlapping
    layouts share their end nodes; the overlapping two-domain layout of the
    classical algorithm has ``overlap_cells > 0``.
    """

    mesh: MeshSpec
    spans: tuple
    overlap_cells: int = 0

    @classmethod
    def nonoverlapping(cls, mesh: MeshSpec, interfaces: Sequence[float]) -> "SubdomainLayout":
        """``interfaces`` lists the interior cut points a_2 < ... < a_I."""
        cuts = [0] + [mesh.node_index(a) for a in interfaces] + [mesh.J]
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ConfigError(f"interfaces must be strictly increasing inside the domain: {interfaces}")
        return cls(mesh, tuple(zip(cuts[:-1], cuts[1:])))

    @classmethod
    def overlapping(cls, mesh: MeshSpec, mid: float, overlap: float) -> "SubdomainLayout":
        """Omega_1 = (a, mid + overlap), Omega_2 = (mid, b)."""
        m = mesh.node_index(mid)
        cells = overlap / mesh.dx
        if abs(cells - round(cells)) > 1e-9 or round(cells) < 1:
            raise ConfigError(f"overlap {overlap} is not a positive multiple of dx={mesh.dx}")
        cells = round(cells)
        if m + cells >= mesh.J:
            raise ConfigError("overlap reaches the right end of the domain")
        return cls(mesh, ((0, m + cells), (m, mesh.J)), cells)

    @property
    def interfaces(self) -> list:
        return [self.mesh.a_minus + j0 * self.mesh.dx for j0, _ in self.spans] + [self.mesh.a_plus]

    @property
    def J_i(self) -> list:
        return [j1 - j0 for j0, j1 in self.spans]

    def meshes(self) -> list:
        return [self.mesh.sub(j0, j1) for j0, j1 in self.spans]


def _quad_antiderivative(fn: ScalarFn) -> ScalarFn:
    def F(u):
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape)
        for idx, val in np.ndenumerate(u):
            value, err = integrate.quad(lambda s: float(fn(s)), 0.0, float(val), epsabs=1e-12, epsrel=1e-12)
            if not np.isfinite(value) or err > 1e-8 * max(1.0, abs(value)):
                raise ConfigError(f"quadrature of antiderivative failed at u={val}")
            out[idx] = value
        return out if out.shape else float(out)

    return F


def _zero(u):
    return 0.0 * u


@dataclass(frozen=True)
class NonlinearitySpec:
    """Right-hand side ``f(u, u_t, u_x) = f1(u) + f2(u) u_t + f3(u) u_x``.

    Missing antiderivatives are computed by adaptive quadrature from 0.
    """

    f1: ScalarFn = _zero
    f2: ScalarFn = _zero
    f3: ScalarFn = _zero
    F1: Optional[ScalarFn] = None
    F2: Optional[ScalarFn] = None
    F3: Optional[ScalarFn] = None
    label: str = "custom"
    linear_in_ut_ux: bool = field(default=True, repr=False)

    def __post_init__(self):
        if abs(float(self.f1(0.0))) > 0.0:
            raise ConfigError("f1(0) must vanish")
        for name, fn in (("F1", self.f1), ("F2", self.f2), ("F3", self.f3)):
            if getattr(self, name) is None:
                object.__setattr__(self, name, _quad_antiderivative(fn))

    def __call__(self, u, ut, ux):
        return self.f1(u) + self.f2(u) * ut + self.f3(u) * ux

    @property
    def is_zero(self) -> bool:
        return self.label == "zero"


class GeneralNonlinearity:
    """Arbitrary ``f(u, u_t, u_x)``; usable by the solver only.

    Not affine in ``u_x`` by assumption, so it cannot produce transmission
    functions and is refused by the SWR drivers.
    """

    linear_in_ut_ux = False

    def __init__(self, fn, label: str = "general"):
        if abs(float(fn(0.0, 0.0, 0.0))) > 0.0:
            raise ConfigError("f(0, 0, 0) must vanish")
        self.fn = fn
        self.label = label

    def __call__(self, u, ut, ux):
        return self.fn(u, ut, ux)


def zero_nonlinearity() -> NonlinearitySpec:
    return NonlinearitySpec(F1=_zero, F2=_zero, F3=_zero, label="zero")


def cubic() -> NonlinearitySpec:
    """f = u^3."""
    return NonlinearitySpec(f1=lambda u: u * u * u, F1=lambda u: u ** 4 / 4, F2=_zero, F3=_zero, label="u3")


def u2ux() -> NonlinearitySpec:
    """f = u^2 u_x."""
    return NonlinearitySpec(f3=lambda u: u * u, F1=_zero, F2=_zero, F3=lambda u: u ** 3 / 3, label="u2ux")


def u2ut() -> NonlinearitySpec:
    """f = u^2 u_t."""
    return NonlinearitySpec(f2=lambda u: u * u, F1=_zero, F2=lambda u: u ** 3 / 3, F3=_zero, label="u2ut")


NONLINEARITIES = {"zero": zero_nonlinearity, "u3": cubic, "u2ux": u2ux, "u2ut": u2ut}


def nonlinearity_from_tag(tag: str) -> NonlinearitySpec:
    try:
        return NONLINEARITIES[tag.strip()]()
    except KeyError:
        raise ConfigError(f"unknown nonlinearity {tag!r}; choose from {sorted(NONLINEARITIES)}") from None


@dataclass(frozen=True)
class TransmissionSpec:
    """Functions g+ and g- of the operators ``d_t u +/- d_x u + g(u)``."""

    kind: str
    g_plus: ScalarFn = _zero
    g_minus: ScalarFn = _zero
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "nonlinear", "delta"):
            raise ConfigError(f"unknown transmission kind {self.kind!r}")
        if float(self.g_plus(0.0)) != 0.0 or float(self.g_minus(0.0)) != 0.0:
            raise ConfigError("g+(0) and g-(0) must vanish")

    @property
    def tag(self) -> str:
        if self.kind == "delta":
            return f"delta:{self.delta!r}"
        return self.kind


def linear_transmission() -> TransmissionSpec:
    return TransmissionSpec("linear")


def delta_cubic(delta: float) -> TransmissionSpec:
    """g+(u) = delta u^3, g-(u) = -delta u^3."""
    delta = float(delta)
    return TransmissionSpec(
        "delta",
        g_plus=lambda u: delta * (u * u * u),
        g_minus=lambda u: -delta * (u * u * u),
        delta=delta,
    )


def transmission_from_nonlinearity(f: NonlinearitySpec) -> TransmissionSpec:
    """Nonlinear absorbing functions g+ = -(F2 - F3)/2, g- = -(F2 + F3)/2."""
    if not isinstance(f, NonlinearitySpec):
        raise ConfigError("transmission functions need a structured (f1, f2, f3) nonlinearity")
    F2, F3 = f.F2, f.F3

    def g_plus(u):
        return -0.5 * (F2(u) - F3(u))

    def g_minus(u):
        return -0.5 * (F2(u) + F3(u))

    probe = np.linspace(-2.0, 2.0, 41)
    try:
        if np.all(g_plus(probe) == 0) and np.all(g_minus(probe) == 0):
            return linear_transmission()
    except ConfigError:
        raise
    except Exception as exc:  # user callables may fail in arbitrary ways
        raise ConfigError(f"antiderivative evaluation failed: {exc}") from exc
    return TransmissionSpec("nonlinear", g_plus=g_plus, g_minus=g_minus)


def transmission_from_tag(tag: str, f: Optional[NonlinearitySpec] = None) -> TransmissionSpec:
    """Parse ``linear``, ``nonlinear`` (needs ``f``) or ``delta:<value>``."""
    tag = tag.strip()
    if tag == "linear":
        return linear_transmission()
    if tag == "nonlinear":
        if f is None:
            raise ConfigError("nonlinear transmission needs the nonlinearity")
        return transmission_from_nonlinearity(f)
    if tag.startswith("delta:"):
        return delta_cubic(parse_number(tag[len("delta:"):]))
    raise ConfigError(f"unknown transmission {tag!r}")


def parse_number(text: str) -> float:
    """Parse ``0.25`` or a fraction such as ``1/120``."""
    text = text.strip()
    try:
        if "/" in text:
            num, den = text.split("/")
            return float(num) / float(den)
        return float(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}") from None


@dataclass(frozen=True)
class InitialData:
    p: Callable
    q: Callable
    P: np.ndarray
    Q: np.ndarray


def sample_initial_data(p: Callable, q: Callable, mesh: MeshSpec) -> InitialData:
    x = mesh.x
    P = np.asarray(p(x), dtype=float) * np.ones_like(x)
    Q = np.asarray(q(x), dtype=float) * np.ones_like(x)
    P.flags.writeable = False
    Q.flags.writeable = False
    return InitialData(p, q, P, Q)


def bench_p(x):
    """Initial displacement x^3 (2 - x)^3 on [0, 2], zero elsewhere."""
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= 2), x ** 3 * (2 - x) ** 3, 0.0)


def bench_q(x):
    """Initial velocity 3 x^2 (2 - x)^2 (x - 1) on [0, 2], zero elsewhere."""
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= 2), 3 * x ** 2 * (2 - x) ** 2 * (x - 1), 0.0)


def scaled(fn: Callable, factor: float) -> Callable:
    def g(x):
        return factor * fn(x)

    return g


def theoretical_iteration_count(dx: float, dt: float, T: float, L: float) -> int:
    """Classical Schwarz bound ``ceil((dx/dt) (T/L))``.

    Values within 1e-9 (relative) of an integer are snapped first so that
    binary round-off in e.g. 1.2 * 25 does not push the ceiling up by one.
    """
    if not L > 0:
        raise ConfigError("overlap must be positive")
    value = (dx / dt) * (T / L)
    nearest = round(value)
    if abs(value - nearest) <= 1e-9 * max(1.0, value):
        return max(1, int(nearest))
    return max(1, math.ceil(value))
