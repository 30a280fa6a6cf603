"""Schwarz waveform relaxation drivers and their metrics."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .model import (
    ConfigError,
    InitialData,
    MeshSpec,
    NonlinearitySpec,
    SubdomainLayout,
    TransmissionSpec,
    linear_transmission,
    theoretical_iteration_count,
)
from .solver import (
    Absorbing,
    BlowUpError,
    Dirichlet,
    SpaceTimeField,
    SubdomainProblem,
    solve_monodomain,
    solve_subdomain,
)

log = logging.getLogger(__name__)

DEFAULT_TOL = 0.5e-7
DEFAULT_MAX_ITERS = 200


@dataclass
class SwrConfig:
    layout: SubdomainLayout
    f: NonlinearitySpec
    transmission: TransmissionSpec
    init: InitialData
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    # None means zero traces; otherwise one (H_minus, H_plus) pair per subdomain
    # for SWR, or one (left, right) Dirichlet pair for the classical algorithm
    initial_guess: Optional[list] = None
    # condition on the outer ends of the domain (linear absorbing by default)
    exterior: TransmissionSpec = field(default_factory=linear_transmission)
    threads: int = 1
    # what the stopping residual measures: the exchanged traces, or the
    # interface values u of both neighbours (diagnostic alternative)
    residual_on: str = "traces"

    @property
    def mesh(self) -> MeshSpec:
        return self.layout.mesh

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be positive")
        if self.residual_on not in ("traces", "values"):
            raise ConfigError(f"residual_on must be 'traces' or 'values', got {self.residual_on!r}")


@dataclass
class IterationRecord:
    k: int
    residual: float
    error: float
    elapsed_s: float
    blown_up: bool = False
    failure: str = ""


@dataclass
class IterationHistory:
    records: List[IterationRecord]
    converged: bool
    reference: SpaceTimeField
    fields: Optional[list] = None  # subdomain fields of the last iterate
    traces: Optional[list] = None  # exchanged data produced by the last iterate
    failed: bool = False

    @property
    def iterations_used(self) -> int:
        return len(self.records)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "residual", "error", "elapsed_s"])
            for r in self.records:
                w.writerow([r.k, f"{r.residual:.17g}", f"{r.error:.17g}", f"{r.elapsed_s:.17g}"])


def interface_residual(prev: Sequence[np.ndarray], new: Sequence[np.ndarray], dt: float) -> float:
    """Discrete L2(0, T) norm of the change of all exchanged series."""
    if len(prev) != len(new):
        raise ValueError("trace lists differ in length")
    total = 0.0
    for a, b in zip(prev, new):
        a, b = np.asarray(a), np.asarray(b)
        if a.shape != b.shape:
            raise ValueError(f"trace shapes differ: {a.shape} vs {b.shape}")
        d = b - a
        total += dt * float(np.dot(d, d))
    return float(np.sqrt(total))


def glue(fields: Sequence[SpaceTimeField], layout: SubdomainLayout) -> np.ndarray:
    """Assemble subdomain fields on the global grid as ``U[j, n]``.

    Nodes shared by two subdomains take the left subdomain's value.
    """
    mesh = layout.mesh
    out = np.empty((mesh.J + 1, mesh.N + 1))
    for (j0, j1), fld in reversed(list(zip(layout.spans, fields))):
        out[j0:j1 + 1] = fld.U
    return out


def global_error(U: np.ndarray, reference: SpaceTimeField) -> float:
    """``max_n sqrt(dx * sum_j (U - Ubar)^2)`` over n = 0..N."""
    R = reference.U
    if U.shape != R.shape:
        raise ValueError(f"grid mismatch: {U.shape} vs reference {R.shape}")
    d = U - R
    return float(np.sqrt(reference.mesh.dx * np.max(np.sum(d * d, axis=0))))


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def monodomain_reference(cfg: SwrConfig) -> SpaceTimeField:
    return solve_monodomain(cfg.mesh, cfg.f, cfg.exterior, cfg.init)


def run_swr(cfg: SwrConfig, reference: Optional[SpaceTimeField] = None,
            iterations: Optional[int] = None) -> IterationHistory:
    """Nonoverlapping SWR with Jacobi-style trace exchange.

    Stops at the first k with residual <= tol, or after ``iterations``
    (when given, the tolerance is ignored) or ``max_iters`` sweeps.
    """
    layout = cfg.layout
    if layout.overlap_cells:
        raise ConfigError("run_swr needs a nonoverlapping layout")
    if not getattr(cfg.f, "linear_in_ut_ux", False):
        raise ConfigError("SWR needs a nonlinearity affine in u_x")
    mesh = cfg.mesh
    mesh.require_cfl()
    if reference is None:
        reference = monodomain_reference(cfg)
    N, dt = mesh.N, mesh.dt
    I = len(layout.spans)
    meshes = layout.meshes()
    gp, gm = cfg.transmission.g_plus, cfg.transmission.g_minus
    zeros = np.zeros(N + 1)

    if cfg.initial_guess is None:
        H = [(zeros, zeros) for _ in range(I)]
    else:
        if len(cfg.initial_guess) != I:
            raise ConfigError("initial guess needs one (H-, H+) pair per subdomain")
        H = [(np.asarray(a, float), np.asarray(b, float)) for a, b in cfg.initial_guess]

    def problem(i, Hm, Hp):
        j0, j1 = layout.spans[i]
        left = Absorbing(Hm, gm) if i > 0 else Absorbing(zeros, cfg.exterior.g_minus)
        right = Absorbing(Hp, gp) if i < I - 1 else Absorbing(zeros, cfg.exterior.g_plus)
        return SubdomainProblem(meshes[i], cfg.f, cfg.init.P[j0:j1 + 1], cfg.init.Q[j0:j1 + 1], left, right)

    def solve(i):
        return solve_subdomain(problem(i, *H[i]), extract=(gp, gm))

    def edge_values(sols):
        out = []
        for i in range(I):
            if i > 0:
                out.append(sols[i].field.levels[: N + 1, 0])
            if i < I - 1:
                out.append(sols[i].field.levels[: N + 1, -1])
        return out

    prev_vals = [zeros] * (2 * (I - 1))
    limit = iterations if iterations is not None else cfg.max_iters
    records: List[IterationRecord] = []
    converged = False
    sols = None
    start = time.perf_counter()
    for k in range(1, limit + 1):
        try:
            sols = _map(solve, list(range(I)), cfg.threads)
        except BlowUpError as exc:
            log.warning("SWR iteration %d blew up: %s", k, exc)
            records.append(IterationRecord(k, float("nan"), float("nan"), time.perf_counter() - start, True, str(exc)))
            return IterationHistory(records, False, reference, failed=True)
        newH = []
        for i in range(I):
            Hm = sols[i - 1].right_trace if i > 0 else zeros
            Hp = sols[i + 1].left_trace if i < I - 1 else zeros
            newH.append((Hm, Hp))
        prev = [s for i in range(I) for s, use in zip(H[i], (i > 0, i < I - 1)) if use]
        new = [s for i in range(I) for s, use in zip(newH[i], (i > 0, i < I - 1)) if use]
        if cfg.residual_on == "values":
            vals = edge_values(sols)
            res = interface_residual(prev_vals, vals, dt)
            prev_vals = vals
        else:
            res = interface_residual(prev, new, dt)
        H = newH
        U = glue([s.field for s in sols], layout)
        err = global_error(U, reference)
        records.append(IterationRecord(k, res, err, time.perf_counter() - start))
        log.debug("SWR k=%d residual=%.3e error=%.3e", k, res, err)
        if iterations is None and res <= cfg.tol:
            converged = True
            break
    return IterationHistory(records, converged, reference, fields=[s.field for s in sols], traces=H)


def monodomain_traces(cfg: SwrConfig, reference: SpaceTimeField) -> list:
    """Incoming data each subdomain would receive if its neighbours were exact.

    Applies the extraction operators to the reference restricted to each
    subdomain; feeding these as the initial guess makes the first SWR sweep
    reproduce the reference.
    """
    from .solver import extract_trace

    layout = cfg.layout
    I = len(layout.spans)
    gp, gm = cfg.transmission.g_plus, cfg.transmission.g_minus
    out_left, out_right = [], []
    for (j0, j1), m in zip(layout.spans, layout.meshes()):
        fld = SpaceTimeField(np.ascontiguousarray(reference.levels[:, j0:j1 + 1]), m)
        P, Q = cfg.init.P[j0:j1 + 1], cfg.init.Q[j0:j1 + 1]
        out_left.append(extract_trace("left", fld, cfg.f, gp, P, Q))
        out_right.append(extract_trace("right", fld, cfg.f, gm, P, Q))
    zeros = np.zeros(cfg.mesh.N + 1)
    return [
        (out_right[i - 1] if i > 0 else zeros, out_left[i + 1] if i < I - 1 else zeros)
        for i in range(I)
    ]


def classical_zero_threshold(scale: float) -> float:
    return 1e-14 * (1.0 + scale)


def run_classical(cfg: SwrConfig, reference: Optional[SpaceTimeField] = None) -> IterationHistory:
    """Overlapping two-subdomain Schwarz with Dirichlet exchange.

    Runs until the residual is zero up to round-off (see
    ``classical_zero_threshold``) or ``max_iters``.
    """
    layout = cfg.layout
    if not layout.overlap_cells or len(layout.spans) != 2:
        raise ConfigError("run_classical needs a two-subdomain overlapping layout")
    mesh = cfg.mesh
    mesh.require_cfl()
    if reference is None:
        reference = monodomain_reference(cfg)
    N, dt = mesh.N, mesh.dt
    (a0, a1), (b0, b1) = layout.spans
    m1, m2 = layout.meshes()
    zeros = np.zeros(N + 1)
    if cfg.initial_guess is None:
        D1, D2 = zeros, zeros  # Dirichlet data at x = a1 (for Omega_1) and x = b0 (Omega_2)
    else:
        D1, D2 = (np.asarray(v, float) for v in cfg.initial_guess)
    ext = cfg.exterior
    P, Q = cfg.init.P, cfg.init.Q
    scale = float(np.max(np.abs(reference.U)))
    tiny = classical_zero_threshold(scale)

    def solve(which):
        if which == 0:
            prob = SubdomainProblem(m1, cfg.f, P[a0:a1 + 1], Q[a0:a1 + 1], Absorbing(zeros, ext.g_minus), Dirichlet(D1))
        else:
            prob = SubdomainProblem(m2, cfg.f, P[b0:b1 + 1], Q[b0:b1 + 1], Dirichlet(D2), Absorbing(zeros, ext.g_plus))
        return solve_subdomain(prob).field

    records: List[IterationRecord] = []
    converged = False
    fields = None
    start = time.perf_counter()
    for k in range(1, cfg.max_iters + 1):
        try:
            fields = _map(solve, [0, 1], cfg.threads)
        except BlowUpError as exc:
            log.warning("classical iteration %d blew up: %s", k, exc)
            records.append(IterationRecord(k, float("nan"), float("nan"), time.perf_counter() - start, True, str(exc)))
            return IterationHistory(records, False, reference, failed=True)
        f1, f2 = fields
        newD1 = f2.levels[: N + 1, a1 - b0].copy()
        newD2 = f1.levels[: N + 1, b0 - a0].copy()
        res = interface_residual([D1, D2], [newD1, newD2], dt)
        D1, D2 = newD1, newD2
        U = glue(fields, layout)
        err = global_error(U, reference)
        records.append(IterationRecord(k, res, err, time.perf_counter() - start))
        if res <= tiny:
            converged = True
            break
    return IterationHistory(records, converged, reference, fields=fields, traces=[D1, D2])


def classical_counts(history: IterationHistory, mesh: MeshSpec, overlap: float) -> tuple:
    """``(N_comp, N_th)`` for a classical run."""
    return history.iterations_used, theoretical_iteration_count(mesh.dx, mesh.dt, mesh.T, overlap)
