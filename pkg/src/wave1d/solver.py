"""Explicit leapfrog solver for one (sub)domain with finite-volume edges.

Interior nodes use the leapfrog scheme with the nonlinear term evaluated at
level n (time derivative from the past only). The edge nodes carry half
cells: the boundary relation ``B-(f, g-) U(0, n) = H-(n)`` (and its mirror at
j = J) is linear in ``U(edge, n+1)`` and is solved for it directly.

Every solve is carried one level past N so that the extraction operators,
whose centered time difference at n = N reads level N + 1, are defined at
every exchanged index. Reported fields stop at N.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .model import ConfigError, InitialData, MeshSpec, TransmissionSpec, linear_transmission


class BlowUpError(FloatingPointError):
    """A non-finite value appeared during time stepping."""

    def __init__(self, j: int, n: int, where: str = ""):
        self.j, self.n, self.where = j, n, where
        super().__init__(f"non-finite value at j={j}, n={n}{' (' + where + ')' if where else ''}")


@dataclass(frozen=True)
class Absorbing:
    """Edge governed by ``B(f, g) U = data`` (absorbing/transmission condition)."""

    data: np.ndarray
    g: Callable = None


@dataclass(frozen=True)
class Dirichlet:
    """Edge value prescribed node by node: ``U(edge, n) = data[n]``."""

    data: np.ndarray


Edge = Union[Absorbing, Dirichlet]


def _zero_g(u):
    return 0.0 * u


@dataclass(frozen=True)
class SubdomainProblem:
    mesh: MeshSpec
    f: Callable
    P: np.ndarray
    Q: np.ndarray
    left: Edge
    right: Edge

    def __post_init__(self):
        J, N = self.mesh.J, self.mesh.N
        if len(self.P) != J + 1 or len(self.Q) != J + 1:
            raise ConfigError(f"initial samples must have {J + 1} entries")
        for edge in (self.left, self.right):
            if len(edge.data) != N + 1:
                raise ConfigError(f"edge data must have {N + 1} entries, got {len(edge.data)}")


@dataclass
class SpaceTimeField:
    """Grid function ``U[j, n]`` for n = 0..N plus the internal level N+1."""

    levels: np.ndarray  # shape (N + 2, J + 1), row n is time level n
    mesh: MeshSpec

    @property
    def U(self) -> np.ndarray:
        return self.levels[: self.mesh.N + 1].T

    def level(self, n: int) -> np.ndarray:
        return self.levels[n]

    def to_csv(self, path) -> None:
        write_field_csv(self, path)


@dataclass
class SubdomainSolution:
    field: SpaceTimeField
    left_trace: Optional[np.ndarray]  # B~+ U(0, .), sent to the left neighbour
    right_trace: Optional[np.ndarray]  # B~- U(J, .), sent to the right neighbour


def update_coefficient(dx: float, dt: float, n: int) -> float:
    """Coefficient of ``U(edge, n+1)`` in the boundary relation at level n."""
    if n == 0:
        return 1.0 / dt + dx / (dt * dt)
    return 1.0 / (2 * dt) + dx / (2 * dt * dt)


def _switched_dt(levels: np.ndarray, n: int, dt: float, cols) -> np.ndarray:
    if n >= 2:
        return (3 * levels[n, cols] - 4 * levels[n - 1, cols] + levels[n - 2, cols]) / (2 * dt)
    return (levels[n, cols] - levels[n - 1, cols]) / dt


def _check(values: np.ndarray, n: int, offset: int = 0, where: str = "") -> None:
    if not np.all(np.isfinite(values)):
        j = int(np.flatnonzero(~np.isfinite(values))[0]) + offset
        raise BlowUpError(j, n, where)


def initial_step(P: np.ndarray, Q: np.ndarray, f: Callable, mesh: MeshSpec) -> np.ndarray:
    """Interior values of level 1 from the Taylor-type initial scheme.

    The nonlinear term is evaluated at ``(P, Q, d_x^0 P)``: the slope of the
    displacement is what the edge operators average to, which keeps the
    monodomain solution a fixed point of the exchange when f depends on u_x.
    """
    dx, dt = mesh.dx, mesh.dt
    lap = (P[2:] - 2 * P[1:-1] + P[:-2]) / (dx * dx)
    px = (P[2:] - P[:-2]) / (2 * dx)
    out = P[1:-1] + dt * Q[1:-1] + (dt * dt / 2) * (lap + f(P[1:-1], Q[1:-1], px))
    _check(out, 1, 1, "initial step")
    return out


def interior_step(levels: np.ndarray, f: Callable, n: int, dx: float, dt: float) -> np.ndarray:
    """Interior values of level n+1 (n >= 1); ``levels`` is indexed [n, j]."""
    if n < 1:
        raise ValueError("interior_step needs n >= 1; use initial_step for level 1")
    u = levels[n]
    c = u[1:-1]
    lap = (u[2:] - 2 * c + u[:-2]) / (dx * dx)
    ux = (u[2:] - u[:-2]) / (2 * dx)
    ut = _switched_dt(levels, n, dt, slice(1, -1))
    out = 2 * c - levels[n - 1, 1:-1] + dt * dt * (lap + f(c, ut, ux))
    _check(out, n + 1, 1)
    return out


def boundary_step(side: str, levels: np.ndarray, H: float, f: Callable, g: Callable, n: int,
                  dx: float, dt: float, P: np.ndarray = None, Q: np.ndarray = None) -> float:
    """Solve the boundary relation at level n for the edge value at level n+1.

    Left edges use ``B-``, right edges ``B+``. For n = 0 the initial form
    with ``P`` and ``Q`` is used (``levels`` is then only read at level 0).
    """
    if side == "left":
        e, nb, sgn = 0, 1, -1.0
    elif side == "right":
        e, nb, sgn = -1, -2, 1.0
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    g = g or _zero_g
    if n == 0:
        p0, q0 = P[e], Q[e]
        # forward difference at the left edge, backward at the right: both are
        # (P[e] - P[nb]) scaled by the outward sign
        px = sgn * (p0 - P[nb]) / dx
        rhs = (H + p0 / dt + dx * p0 / (dt * dt) + dx * q0 / dt - sgn * px
               + (dx / 2) * f(p0, q0, px) - g(p0))
    else:
        u0 = levels[n, e]
        um = levels[n - 1, e]
        ux = sgn * (u0 - levels[n, nb]) / dx
        ut = (u0 - um) / dt if n == 1 else (3 * u0 - 4 * um + levels[n - 2, e]) / (2 * dt)
        rhs = (H + um / (2 * dt) - sgn * ux + (dx / 2) * (2 * u0 - um) / (dt * dt)
               + (dx / 2) * f(u0, ut, ux) - g(u0))
    value = rhs / update_coefficient(dx, dt, n)
    if not np.isfinite(value):
        raise BlowUpError(0 if side == "left" else levels.shape[1] - 1, n + 1, f"{side} edge")
    return float(value)


def extract_trace(side: str, field: SpaceTimeField, f: Callable, g: Callable,
                  P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Outgoing transmission data at an edge, for n = 0..N.

    ``side='left'`` applies ``B~+`` at j = 0 (data for the left neighbour's
    ``B+`` condition); ``side='right'`` applies ``B~-`` at j = J.
    """
    mesh = field.mesh
    dx, dt, N = mesh.dx, mesh.dt, mesh.N
    W = field.levels
    if side == "left":
        e, nb, sgn = 0, 1, -1.0
    elif side == "right":
        e, nb, sgn = -1, -2, 1.0
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    g = g or _zero_g
    u = W[:, e]
    v = W[:, nb]
    out = np.empty(N + 1)

    p0, q0 = P[e], Q[e]
    px = sgn * (p0 - P[nb]) / dx
    dtp = (u[1] - p0) / dt
    out[0] = dtp - sgn * px - (dx / dt) * dtp + (dx / dt) * q0 + (dx / 2) * f(p0, q0, px) + g(p0)

    n = np.arange(1, N + 1)
    un = u[n]
    ux = sgn * (un - v[n]) / dx
    ut = np.empty(N)
    ut[0] = (u[1] - u[0]) / dt
    ut[1:] = (3 * u[2:N + 1] - 4 * u[1:N] + u[0:N - 1]) / (2 * dt)
    dtz = (u[n + 1] - u[n - 1]) / (2 * dt)
    dtt = (u[n + 1] - 2 * un + u[n - 1]) / (dt * dt)
    out[1:] = dtz - sgn * ux - (dx / 2) * dtt + (dx / 2) * f(un, ut, ux) + g(un)
    return out


def solve_subdomain(prob: SubdomainProblem, extract: Optional[tuple] = None) -> SubdomainSolution:
    """March the subdomain problem to level N (+1 internal level).

    ``extract`` optionally gives ``(g_plus, g_minus)`` used by the extraction
    operators; when omitted no traces are computed.
    """
    mesh, f = prob.mesh, prob.f
    mesh.require_cfl()
    dx, dt, J, N = mesh.dx, mesh.dt, mesh.J, mesh.N
    if J < 2:
        raise ConfigError("a subdomain needs at least one interior node (J >= 2)")
    W = np.empty((N + 2, J + 1))
    W[0] = prob.P
    _check(W[0], 0)
    left, right = prob.left, prob.right
    P, Q = prob.P, prob.Q

    # overflow is reported through BlowUpError, not numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(0, N + 1):
            if n == 0:
                W[1, 1:-1] = initial_step(P, Q, f, mesh)
            else:
                W[n + 1, 1:-1] = interior_step(W, f, n, dx, dt)
            W[n + 1, 0] = _edge_value("left", left, W, f, n, dx, dt, P, Q)
            W[n + 1, J] = _edge_value("right", right, W, f, n, dx, dt, P, Q)

    if isinstance(left, Dirichlet):
        W[0, 0] = left.data[0]
    if isinstance(right, Dirichlet):
        W[0, J] = right.data[0]

    field = SpaceTimeField(W, mesh)
    if extract is None:
        return SubdomainSolution(field, None, None)
    g_plus, g_minus = extract
    return SubdomainSolution(
        field,
        extract_trace("left", field, f, g_plus, P, Q),
        extract_trace("right", field, f, g_minus, P, Q),
    )


def _edge_value(side, edge, W, f, n, dx, dt, P, Q):
    if isinstance(edge, Dirichlet):
        # level N+1 is never reported for Dirichlet edges; hold the last datum
        return edge.data[min(n + 1, len(edge.data) - 1)]
    return boundary_step(side, W, edge.data[n], f, edge.g, n, dx, dt, P, Q)


def solve_monodomain(mesh: MeshSpec, f: Callable, g: Optional[TransmissionSpec], init: InitialData) -> SpaceTimeField:
    """Reference solution with homogeneous absorbing data on both ends."""
    g = g or linear_transmission()
    zeros = np.zeros(mesh.N + 1)
    prob = SubdomainProblem(mesh, f, init.P, init.Q, Absorbing(zeros, g.g_minus), Absorbing(zeros, g.g_plus))
    return solve_subdomain(prob).field


def write_field_csv(field: SpaceTimeField, path) -> None:
    mesh = field.mesh
    x, t = mesh.x, mesh.t
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "x", "n", "t", "u"])
        for n in range(mesh.N + 1):
            row = field.levels[n]
            for j in range(mesh.J + 1):
                w.writerow([j, f"{x[j]:.17g}", n, f"{t[n]:.17g}", f"{row[j]:.17g}"])
