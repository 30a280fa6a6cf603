"""Discrete energy diagnostics for the leapfrog/finite-volume scheme.

The energy pairs two consecutive levels. For a grid function ``V`` with
levels ``n`` and ``n+1``::

    E_K(n) = dx * sum'_j (d_t^- V(j, n+1))^2        (trapezoid weights: 1/2 at j = 0, J)
    E_P(n) = a(V(., n+1), V(., n))
    E      = E_K + E_P

With these definitions the summation-by-parts identity of the linear scheme
``(d_t^+ d_t^- - d_x^+ d_x^- + 1) V = F`` with boundary operators
``T-/T+`` and extraction operators ``T~+/T~-`` holds to round-off, and
``E >= (1 - dt^2/dx^2 - dt^2/4) E_K``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .solver import SpaceTimeField, _zero_g


@dataclass(frozen=True)
class EnergySnapshot:
    n: int
    E_K: float
    E_P: float

    @property
    def E(self) -> float:
        return self.E_K + self.E_P


@dataclass(frozen=True)
class RemainderRecord:
    i: int
    k: int
    n: int
    R: float
    lhs: float
    ratio: float


def bilinear_a(V, W, dx: float) -> float:
    """``dx * (sum_{j=1}^{J} d_x^-V d_x^-W + sum_{j=1}^{J-1} V W)``."""
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    if V.shape != W.shape:
        raise ValueError(f"length mismatch: {V.shape} vs {W.shape}")
    dV = np.diff(V) / dx
    dW = np.diff(W) / dx
    return dx * (float(np.dot(dV, dW)) + float(np.dot(V[1:-1], W[1:-1])))


def _trapz_sq(v: np.ndarray) -> float:
    return float(np.dot(v[1:-1], v[1:-1])) + 0.5 * (v[0] * v[0] + v[-1] * v[-1])


def energy_from_levels(Vn: np.ndarray, Vn1: np.ndarray, dx: float, dt: float, n: int = 0) -> EnergySnapshot:
    d = (Vn1 - Vn) / dt
    return EnergySnapshot(n, dx * _trapz_sq(d), bilinear_a(Vn1, Vn, dx))


def discrete_energy(V, n: int, dx: float, dt: float) -> EnergySnapshot:
    """Energy at level n of ``V`` (a SpaceTimeField or an array indexed [n, j])."""
    levels = V.levels if isinstance(V, SpaceTimeField) else np.asarray(V)
    if not 0 <= n < levels.shape[0] - 1:
        raise IndexError(f"energy at n={n} needs levels n and n+1")
    return energy_from_levels(levels[n], levels[n + 1], dx, dt, n)


def cfl_lower_bound_holds(snapshot: EnergySnapshot, dx: float, dt: float) -> bool:
    factor = 1.0 - dt * dt / (dx * dx) - dt * dt / 4.0
    bound = factor * snapshot.E_K
    return snapshot.E >= bound - 1e-12 * (abs(snapshot.E_K) + abs(snapshot.E_P))


# --- linear transmission operators T = B(0, 0), T~ = B~(0, 0) ------------------

def _edge_ops(levels, n, dx, dt, Q, e, nb, sgn):
    """Return (T, T~) at one edge and level n (n >= 0)."""
    u = levels[:, e]
    v = levels[:, nb]
    if n == 0:
        dtp = (u[1] - u[0]) / dt
        ux = sgn * (u[0] - v[0]) / dx
        base = dtp
        corr = sgn * ux + (dx / dt) * dtp - (dx / dt) * Q[e]
    else:
        base = (u[n + 1] - u[n - 1]) / (2 * dt)
        ux = sgn * (u[n] - v[n]) / dx
        corr = sgn * ux + (dx / 2) * (u[n + 1] - 2 * u[n] + u[n - 1]) / (dt * dt)
    return base + corr, base - corr


def linear_operators(levels: np.ndarray, n: int, dx: float, dt: float, Q: Optional[np.ndarray] = None) -> dict:
    """Values of ``T-V(0,n), T~+V(0,n), T+V(J,n), T~-V(J,n)``."""
    Tm, Ttp = _edge_ops(levels, n, dx, dt, Q, 0, 1, -1.0)
    Tp, Ttm = _edge_ops(levels, n, dx, dt, Q, -1, -2, 1.0)
    return {"T-": Tm, "T~+": Ttp, "T+": Tp, "T~-": Ttm}


def solve_linear_scheme(P, Q, F, H_minus, H_plus, dx: float, dt: float) -> np.ndarray:
    """Solve ``(d_t^+ d_t^- - d_x^+ d_x^- + 1) V = F`` with ``T-V = H-``, ``T+V = H+``.

    ``F`` is indexed [n, j] for n = 1..N (row 0 is ignored); ``H_minus`` and
    ``H_plus`` have N+1 entries. Returns levels 0..N+1 indexed [n, j].
    The initial level-1 scheme is ``(d_t^+ - dt/2 (d_x^+ d_x^- - 1)) V = Q``.
    """
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    N = len(H_minus) - 1
    J = len(P) - 1
    V = np.zeros((N + 2, J + 1))
    V[0] = P
    V[1, 1:-1] = P[1:-1] + dt * Q[1:-1] + (dt * dt / 2) * ((P[2:] - 2 * P[1:-1] + P[:-2]) / (dx * dx) - P[1:-1])
    c0 = 1.0 / dt + dx / (dt * dt)
    V[1, 0] = (H_minus[0] + P[0] / dt + dx * P[0] / (dt * dt) + dx * Q[0] / dt + (P[1] - P[0]) / dx) / c0
    V[1, J] = (H_plus[0] + P[J] / dt + dx * P[J] / (dt * dt) + dx * Q[J] / dt - (P[J] - P[J - 1]) / dx) / c0
    c = 1.0 / (2 * dt) + dx / (2 * dt * dt)
    for n in range(1, N + 1):
        u = V[n]
        V[n + 1, 1:-1] = (2 * u[1:-1] - V[n - 1, 1:-1]
                          + dt * dt * ((u[2:] - 2 * u[1:-1] + u[:-2]) / (dx * dx) - u[1:-1] + F[n, 1:-1]))
        um = V[n - 1]
        V[n + 1, 0] = (H_minus[n] + um[0] / (2 * dt) + (u[1] - u[0]) / dx
                       + (dx / 2) * (2 * u[0] - um[0]) / (dt * dt)) / c
        V[n + 1, J] = (H_plus[n] + um[J] / (2 * dt) - (u[J] - u[J - 1]) / dx
                       + (dx / 2) * (2 * u[J] - um[J]) / (dt * dt)) / c
    return V


def energy_identity_terms(V: np.ndarray, F: np.ndarray, n: int, dx: float, dt: float,
                          P: Optional[np.ndarray] = None, Q: Optional[np.ndarray] = None) -> tuple:
    """Left and right sides of the discrete energy identity at level n.

    n >= 1::

        E(n) - E(n-1) + dt/2 [(T~+V(0,n))^2 + (T~-V(J,n))^2]
            = dt/2 [(T-V(0,n))^2 + (T+V(J,n))^2] + 2 dt dx sum_{j=1}^{J-1} F(j,n) d_t^0 V(j,n)

    n = 0 (needs P, Q)::

        E_K(0) + E(0) + dt/4 [(T~+V(0,0))^2 + (T~-V(J,0))^2]
            = dt/4 [(T-V(0,0))^2 + (T+V(J,0))^2] + a(P, P) + 2 dx sum'_j Q(j) d_t^+ V(j,0)

    where sum' uses half weights at j = 0 and j = J.
    """
    V = np.asarray(V)
    if n == 0:
        if P is None or Q is None:
            raise ValueError("the initial identity needs P and Q")
        ops = linear_operators(V, 0, dx, dt, Q)
        e0 = energy_from_levels(V[0], V[1], dx, dt, 0)
        d1 = (V[1] - V[0]) / dt
        wq = float(np.dot(Q[1:-1], d1[1:-1])) + 0.5 * (Q[0] * d1[0] + Q[-1] * d1[-1])
        lhs = e0.E_K + e0.E + (dt / 4) * (ops["T~+"] ** 2 + ops["T~-"] ** 2)
        rhs = (dt / 4) * (ops["T-"] ** 2 + ops["T+"] ** 2) + bilinear_a(P, P, dx) + 2 * dx * wq
        return lhs, rhs
    ops = linear_operators(V, n, dx, dt)
    en = energy_from_levels(V[n], V[n + 1], dx, dt, n)
    em = energy_from_levels(V[n - 1], V[n], dx, dt, n - 1)
    dtz = (V[n + 1, 1:-1] - V[n - 1, 1:-1]) / (2 * dt)
    src = 2 * dt * dx * float(np.dot(F[n, 1:-1], dtz))
    lhs = en.E - em.E + (dt / 2) * (ops["T~+"] ** 2 + ops["T~-"] ** 2)
    rhs = (dt / 2) * (ops["T-"] ** 2 + ops["T+"] ** 2) + src
    return lhs, rhs


def energy_identity_residual(V, F, n: int, dx: float, dt: float, P=None, Q=None) -> float:
    """``|LHS - RHS|`` of the energy identity at level n."""
    lhs, rhs = energy_identity_terms(V, F, n, dx, dt, P, Q)
    return abs(lhs - rhs)


# --- SWR remainder -------------------------------------------------------------

def swr_remainder(U: SpaceTimeField, Ubar: SpaceTimeField, f: Callable, g_plus: Callable,
                  g_minus: Callable, n: int, k: int = 0, i: int = 0) -> RemainderRecord:
    """Remainder of the error energy balance for one subdomain iterate.

    ``U`` is the iterate and ``Ubar`` the reference restricted to the same
    subdomain, both carried to level n+1. The error ``Ubar^k = U - Ubar``
    satisfies the linear scheme with interior source
    ``F = f(U, ...) - f(Ubar, ...) + Ubar^k`` and boundary perturbations
    built from the edge values of ``f(U) - f(Ubar)`` and of ``g+/g-``.
    Valid for n >= 1.
    """
    if n < 1:
        raise ValueError("the remainder is defined for n >= 1")
    mesh = U.mesh
    dx, dt = mesh.dx, mesh.dt
    g_plus = g_plus or _zero_g
    g_minus = g_minus or _zero_g
    W, Wb = U.levels, Ubar.levels
    E = W - Wb

    def fvals(L, cols, ux):
        if n >= 2:
            ut = (3 * L[n, cols] - 4 * L[n - 1, cols] + L[n - 2, cols]) / (2 * dt)
        else:
            ut = (L[n, cols] - L[n - 1, cols]) / dt
        return f(L[n, cols], ut, ux)

    inner = slice(1, -1)
    ux_in = (W[n, 2:] - W[n, :-2]) / (2 * dx)
    uxb_in = (Wb[n, 2:] - Wb[n, :-2]) / (2 * dx)
    F = fvals(W, inner, ux_in) - fvals(Wb, inner, uxb_in) + E[n, 1:-1]

    f0 = fvals(W, 0, (W[n, 1] - W[n, 0]) / dx) - fvals(Wb, 0, (Wb[n, 1] - Wb[n, 0]) / dx)
    fJ = fvals(W, -1, (W[n, -1] - W[n, -2]) / dx) - fvals(Wb, -1, (Wb[n, -1] - Wb[n, -2]) / dx)
    u0, ub0 = W[n, 0], Wb[n, 0]
    uJ, ubJ = W[n, -1], Wb[n, -1]
    G_minus = -(dx / 2) * f0 + g_minus(u0) - g_minus(ub0)
    Gt_plus = (dx / 2) * f0 + g_plus(u0) - g_plus(ub0)
    G_plus = -(dx / 2) * fJ + g_plus(uJ) - g_plus(ubJ)
    Gt_minus = (dx / 2) * fJ + g_minus(uJ) - g_minus(ubJ)

    ops = linear_operators(E, n, dx, dt)
    R = (Gt_plus * (Gt_plus + 2 * ops["T~+"]) + Gt_minus * (Gt_minus + 2 * ops["T~-"])
         - G_minus * (G_minus + 2 * ops["T-"]) - G_plus * (G_plus + 2 * ops["T+"]))
    dtz = (E[n + 1, 1:-1] - E[n - 1, 1:-1]) / (2 * dt)
    lhs = 2 * dx * float(np.dot(F, dtz)) + 0.5 * R
    energy = energy_from_levels(E[n], E[n + 1], dx, dt, n).E
    if energy > 0:
        ratio = lhs / energy
    elif lhs == 0:
        ratio = 0.0
    else:
        ratio = float("inf")
    return RemainderRecord(i, k, n, float(R), float(lhs), float(ratio))


def write_energy_csv(snapshots, dt: float, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "t", "E_K", "E_P", "E"])
        for s in snapshots:
            w.writerow([s.n, f"{s.n * dt:.17g}", f"{s.E_K:.17g}", f"{s.E_P:.17g}", f"{s.E:.17g}"])


def write_remainder_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "k", "n", "R", "lhs", "ratio"])
        for r in records:
            w.writerow([r.i, r.k, r.n, f"{r.R:.17g}", f"{r.lhs:.17g}", f"{r.ratio:.17g}"])
