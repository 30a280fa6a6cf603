"""Experiment specs, runners and their CSV/JSON artifacts.

A config is an INI file with sections ``experiment``, ``mesh``, ``problem``
and, depending on the kind, ``schwarz``, ``sweep``, ``energy`` and
``output``. List-valued keys (``steps``, ``transmission``,
``overlap_cells``, ``deltas``) define the sweep; runs are executed mesh by
mesh, then in list order.
"""
from __future__ import annotations

import configparser
import csv
import datetime as _dt
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from importlib import metadata, resources
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from . import energy as en
from .model import (
    ConfigError,
    MeshSpec,
    SubdomainLayout,
    linear_transmission,
    nonlinearity_from_tag,
    bench_p,
    bench_q,
    parse_number,
    sample_initial_data,
    scaled,
    transmission_from_tag,
)
from .solver import BlowUpError, SpaceTimeField, solve_monodomain, write_field_csv
from .swr import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    SwrConfig,
    classical_counts,
    monodomain_reference,
    run_classical,
    run_swr,
)

log = logging.getLogger(__name__)

KINDS = ("solve", "swr", "classical", "sweep", "order", "energy-check")
BUILTINS = ("table1-left", "table1-right", "fig-u3", "fig-u2ux", "delta-sweep", "order-study", "energy-check")


def _bump_p(x):
    """Smooth bump centred at x = 1 with radius 0.8."""
    x = np.asarray(x, dtype=float)
    r = (x - 1.0) / 0.8
    inside = np.abs(r) < 1
    out = np.zeros_like(x)
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _zero_fn(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _one_fn(x):
    return np.ones_like(np.asarray(x, dtype=float))


DATA = {
    "benchmark": (bench_p, bench_q),
    "bump": (_bump_p, _zero_fn),
    "zero": (_zero_fn, _zero_fn),
    "constant": (_one_fn, _zero_fn),  # scaled by ``amplitude``
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _split(text: str, sep: str = ",") -> list:
    return [s.strip() for s in text.split(sep) if s.strip()]


@dataclass
class ExperimentSpec:
    name: str
    kind: str
    a_minus: float
    a_plus: float
    T: float
    steps: list                      # (dx, dt) pairs; several pairs = mesh refinement axis
    f: str = "u3"
    data: str = "benchmark"
    amplitude: float = 1.0
    interfaces: list = field(default_factory=lambda: [2.0])
    transmissions: list = field(default_factory=lambda: ["linear"])
    overlaps: list = field(default_factory=list)       # in cells
    deltas: list = field(default_factory=list)
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    iterations: Optional[int] = None
    residual_on: str = "traces"
    energy: dict = field(default_factory=dict)
    timing: bool = True
    config_text: str = ""

    @property
    def sweep_axis(self) -> tuple:
        if self.kind == "sweep":
            return ("Delta", self.deltas)
        if self.kind == "classical" and len(self.overlaps) > 1:
            return ("Overlap", self.overlaps)
        if len(self.steps) > 1:
            return ("MeshRefine", self.steps)
        return ("None", [])

    def mesh(self, dx: float, dt: float) -> MeshSpec:
        mesh = MeshSpec.from_steps(self.a_minus, self.a_plus, dx, dt, self.T)
        mesh.require_cfl()
        return mesh

    def initial_data(self, mesh: MeshSpec):
        p, q = DATA[self.data]
        if self.amplitude != 1.0:
            p, q = scaled(p, self.amplitude), scaled(q, self.amplitude)
        return sample_initial_data(p, q, mesh)

    def swr_config(self, dx: float, dt: float, transmission: str = "linear",
                   overlap_cells: Optional[int] = None, threads: int = 1) -> SwrConfig:
        mesh = self.mesh(dx, dt)
        f = nonlinearity_from_tag(self.f)
        if overlap_cells is None:
            layout = SubdomainLayout.nonoverlapping(mesh, self.interfaces)
        else:
            if len(self.interfaces) != 1:
                raise ConfigError("the classical algorithm needs exactly one interface")
            layout = SubdomainLayout.overlapping(mesh, self.interfaces[0], overlap_cells * mesh.dx)
        return SwrConfig(layout, f, transmission_from_tag(transmission, f), self.initial_data(mesh),
                         tol=self.tol, max_iters=self.max_iters, residual_on=self.residual_on,
                         threads=threads)


def parse_config(text: str, kind: Optional[str] = None) -> ExperimentSpec:
    """Build an ExperimentSpec from INI text; ``kind`` comes from the CLI command."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None

    def get(section, key, default=None):
        if cp.has_option(section, key):
            return cp.get(section, key)
        return default

    cfg_kind = get("experiment", "kind")
    if kind and cfg_kind and cfg_kind != kind:
        raise ConfigError(f"config is a {cfg_kind!r} experiment, not {kind!r}")
    kind = kind or cfg_kind
    if kind not in KINDS:
        raise ConfigError(f"experiment kind must be one of {KINDS}, got {kind!r}")

    for key in ("a_minus", "a_plus", "T", "steps"):
        if get("mesh", key) is None:
            raise ConfigError(f"[mesh] {key} is required")
    steps = []
    for pair in _split(get("mesh", "steps"), ";"):
        parts = pair.split()
        if len(parts) != 2:
            raise ConfigError(f"mesh steps need 'dx dt' pairs, got {pair!r}")
        steps.append((parse_number(parts[0]), parse_number(parts[1])))

    data = get("problem", "data", "benchmark")
    if data not in DATA:
        raise ConfigError(f"unknown data {data!r}; choose from {sorted(DATA)}")
    it = get("schwarz", "iterations")
    if kind == "sweep":
        it = get("sweep", "iterations", "3")

    spec = ExperimentSpec(
        name=get("experiment", "name", kind),
        kind=kind,
        a_minus=parse_number(get("mesh", "a_minus")),
        a_plus=parse_number(get("mesh", "a_plus")),
        T=parse_number(get("mesh", "T")),
        steps=steps,
        f=get("problem", "f", "u3"),
        data=data,
        amplitude=parse_number(get("problem", "amplitude", "1")),
        interfaces=[parse_number(s) for s in _split(get("schwarz", "interfaces", "2"))],
        transmissions=_split(get("schwarz", "transmission", "linear")),
        overlaps=[int(parse_number(s)) for s in _split(get("schwarz", "overlap_cells", ""))],
        deltas=[parse_number(s) for s in _split(get("sweep", "deltas", ""))],
        tol=parse_number(get("schwarz", "tol", repr(DEFAULT_TOL))),
        max_iters=int(parse_number(get("schwarz", "max_iters", str(DEFAULT_MAX_ITERS)))),
        iterations=int(parse_number(it)) if it else None,
        residual_on=get("schwarz", "residual_on", "traces"),
        energy={k: parse_number(v) for k, v in cp.items("energy")} if cp.has_section("energy") else {},
        timing=cp.getboolean("output", "timing", fallback=True),
        config_text=text,
    )
    validate(spec)
    return spec


def validate(spec: ExperimentSpec) -> None:
    nonlinearity_from_tag(spec.f)
    for dx, dt in spec.steps:
        spec.mesh(dx, dt)
    if spec.kind == "classical" and not spec.overlaps:
        raise ConfigError("classical experiments need [schwarz] overlap_cells")
    if spec.kind == "sweep" and not spec.deltas:
        raise ConfigError("sweep experiments need [sweep] deltas")
    if spec.kind == "order":
        if len(spec.steps) < 3:
            raise ConfigError("an order study needs at least three levels")
        for (dx0, dt0), (dx1, dt1) in zip(spec.steps, spec.steps[1:]):
            if abs(dx0 / dx1 - 2) > 1e-9 or abs(dt0 / dt1 - 2) > 1e-9:
                raise ConfigError("order-study levels must halve dx and dt at each step")
    if spec.iterations is not None and spec.iterations < 1:
        raise ConfigError("iterations must be positive")
    if spec.residual_on not in ("traces", "values"):
        raise ConfigError(f"residual_on must be 'traces' or 'values', got {spec.residual_on!r}")
    for tag in spec.transmissions:
        transmission_from_tag(tag, nonlinearity_from_tag(spec.f))


def builtin_text(name: str) -> str:
    if name not in BUILTINS:
        raise ConfigError(f"no built-in experiment {name!r}; choose from {BUILTINS}")
    return resources.files("wave1d").joinpath("configs", f"{name}.ini").read_text()


def builtin_spec(name: str) -> ExperimentSpec:
    return parse_config(builtin_text(name))


def load_config_text(ref: str) -> str:
    """Read a config file, a manifest JSON, or a built-in experiment name."""
    path = Path(ref)
    if path.is_file():
        text = path.read_text()
        if path.suffix == ".json":
            try:
                return json.loads(text)["config_text"]
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"{ref} is not a run manifest: {exc}") from None
        return text
    if ref in BUILTINS:
        return builtin_text(ref)
    raise ConfigError(f"config {ref!r} not found")


@dataclass
class RunManifest:
    name: str
    kind: str
    config: dict
    config_text: str
    version: str
    started: str
    finished: str = ""
    runs: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @property
    def blown_up(self) -> bool:
        return any(r.get("blown_up") for r in self.runs)

    @property
    def not_converged(self) -> bool:
        return any(r.get("converged") is False for r in self.runs)

    def exit_code(self) -> int:
        if self.blown_up:
            return 3
        if self.not_converged:
            return 4
        return 0

    def write(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _history_rows(history, timing: bool):
    return [(r.k, r.residual, r.error, r.elapsed_s if timing else 0.0) for r in history.records]


def run_experiment(spec: ExperimentSpec, out_dir, threads: int = 1) -> RunManifest:
    """Run every configuration of ``spec`` and write its artifacts to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        name=spec.name, kind=spec.kind,
        config={k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items() if k != "config_text"},
        config_text=spec.config_text, version=_version(), started=_now(),
    )
    runner = RUNNERS[spec.kind]
    runner(spec, out, manifest, threads)
    manifest.finished = _now()
    manifest.write(out / "manifest.json")
    manifest.artifacts.append("manifest.json")
    return manifest


def _swr_runs(spec, out, manifest, threads):
    rows = []
    idx = 0
    for dx, dt in spec.steps:
        ref_cache = {}
        for tag in spec.transmissions:
            idx += 1
            cfg = spec.swr_config(dx, dt, tag, threads=threads)
            run = {"run": idx, "dx": dx, "dt": dt, "transmission": tag}
            try:
                if "ref" not in ref_cache:
                    ref_cache["ref"] = monodomain_reference(cfg)
                h = run_swr(cfg, ref_cache["ref"], iterations=spec.iterations)
            except BlowUpError as exc:
                run.update(blown_up=True, failure=str(exc), converged=None if spec.iterations else False)
                manifest.runs.append(run)
                rows.append((idx, dx, dt, tag, None, False, None, None, True))
                continue
            name = f"run_{idx:02d}.csv"
            write_rows(out / name, ["k", "residual", "error", "elapsed_s"], _history_rows(h, spec.timing))
            manifest.artifacts.append(name)
            last = h.records[-1]
            converged = h.converged if spec.iterations is None else None
            run.update(iterations=h.iterations_used, converged=converged, final_residual=_json_float(last.residual),
                       final_error=_json_float(last.error), blown_up=h.failed)
            manifest.runs.append(run)
            rows.append((idx, dx, dt, tag, h.iterations_used, h.converged, last.residual, last.error, h.failed))
    write_rows(out / "summary.csv",
               ["run", "dx", "dt", "transmission", "iterations", "converged", "final_residual", "final_error", "blown_up"],
               rows)
    manifest.artifacts.append("summary.csv")


def _classical_runs(spec, out, manifest, threads):
    rows = []
    idx = 0
    for dx, dt in spec.steps:
        ref = None
        for cells in spec.overlaps:
            idx += 1
            cfg = spec.swr_config(dx, dt, "linear", overlap_cells=cells, threads=threads)
            run = {"run": idx, "dx": dx, "dt": dt, "overlap_cells": cells}
            try:
                ref = ref if ref is not None else monodomain_reference(cfg)
                h = run_classical(cfg, ref)
            except BlowUpError as exc:
                run.update(blown_up=True, failure=str(exc), converged=False)
                manifest.runs.append(run)
                rows.append((idx, dx, dt, cells, None, None, False, None, True))
                continue
            n_comp, n_th = classical_counts(h, cfg.mesh, cells * cfg.mesh.dx)
            name = f"run_{idx:02d}.csv"
            write_rows(out / name, ["k", "residual", "error", "elapsed_s"], _history_rows(h, spec.timing))
            manifest.artifacts.append(name)
            last = h.records[-1]
            run.update(N_comp=n_comp, N_th=n_th, converged=h.converged, final_residual=_json_float(last.residual),
                       final_error=_json_float(last.error), blown_up=h.failed)
            manifest.runs.append(run)
            rows.append((idx, dx, dt, cells, n_comp, n_th, h.converged, last.error, h.failed))
    write_rows(out / "summary.csv",
               ["run", "dx", "dt", "L_over_dx", "N_comp", "N_th", "converged", "final_error", "blown_up"], rows)
    manifest.artifacts.append("summary.csv")


def delta_sweep(spec: ExperimentSpec, threads: int = 1) -> list:
    """``(delta, error after the fixed iteration count)``, sorted by delta; None marks a blow-up."""
    dx, dt = spec.steps[0]
    iters = spec.iterations or 3
    base = spec.swr_config(dx, dt, "linear", threads=threads)
    try:
        ref = monodomain_reference(base)
    except BlowUpError:
        return [(d, None) for d in sorted(spec.deltas)]
    out = []
    for d in sorted(spec.deltas):
        cfg = spec.swr_config(dx, dt, f"delta:{d!r}", threads=threads)
        h = run_swr(cfg, ref, iterations=iters)
        out.append((d, None if h.failed else h.records[-1].error))
    return out


def _sweep_runs(spec, out, manifest, threads):
    results = delta_sweep(spec, threads)
    for d, err in results:
        manifest.runs.append({"delta": d, "error": None if err is None else _json_float(err),
                              "blown_up": err is None})
    finite = [(e, d) for d, e in results if e is not None]
    if finite:
        manifest.constants["argmin_delta"] = min(finite)[1]
    write_rows(out / "summary.csv", ["delta", "error"], results)
    manifest.artifacts.append("summary.csv")


def order_study(spec: ExperimentSpec) -> tuple:
    """Monodomain errors of each coarse level against the finest, and observed orders."""
    f = nonlinearity_from_tag(spec.f)
    sols = []
    for dx, dt in spec.steps:
        mesh = spec.mesh(dx, dt)
        sols.append(solve_monodomain(mesh, f, linear_transmission(), spec.initial_data(mesh)))
    fine = sols[-1]
    errors = []
    for sol in sols[:-1]:
        r = round(sol.mesh.dx / fine.mesh.dx)
        restricted = fine.U[::r, ::r]
        d = sol.U - restricted
        errors.append(float(np.sqrt(sol.mesh.dx * np.max(np.sum(d * d, axis=0)))))
    orders = []
    for e0, e1 in zip(errors, errors[1:]):
        orders.append(math.log2(e0 / e1) if e0 > 0 and e1 > 0 else float("nan"))
    return errors, orders


def _order_runs(spec, out, manifest, threads):
    try:
        errors, orders = order_study(spec)
    except BlowUpError as exc:
        manifest.runs.append({"blown_up": True, "failure": str(exc)})
        write_rows(out / "summary.csv", ["dx", "dt", "error", "order"], [])
        manifest.artifacts.append("summary.csv")
        return
    rows = []
    for i, (dx, dt) in enumerate(spec.steps[:-1]):
        order = orders[i - 1] if i > 0 else None
        rows.append((dx, dt, errors[i], order))
        manifest.runs.append({"dx": dx, "dt": dt, "error": _json_float(errors[i]),
                              "order": None if order is None else _json_float(order), "blown_up": False})
    manifest.constants["min_order"] = _json_float(min(orders)) if orders else None
    write_rows(out / "summary.csv", ["dx", "dt", "error", "order"], rows)
    manifest.artifacts.append("summary.csv")


def random_linear_battery(trials: int, J: int, N: int, seed: int, ratio: float = 0.8):
    """Yield ``(V, F, P, Q, dx, dt)`` for random linear-scheme solves."""
    rng = np.random.default_rng(seed)
    dx = 1.0 / J
    dt = ratio * dx
    for _ in range(trials):
        P = rng.standard_normal(J + 1)
        Q = rng.standard_normal(J + 1)
        F = rng.standard_normal((N + 1, J + 1))
        Hm = rng.standard_normal(N + 1)
        Hp = rng.standard_normal(N + 1)
        V = en.solve_linear_scheme(P, Q, F, Hm, Hp, dx, dt)
        yield V, F, P, Q, dx, dt


def energy_battery(trials: int = 50, J: int = 20, N: int = 25, seed: int = 12345) -> dict:
    """Worst scaled identity residuals over a random battery (n >= 1 and n = 0)."""
    worst = worst0 = 0.0
    for V, F, P, Q, dx, dt in random_linear_battery(trials, J, N, seed):
        scale = 1.0 + max(abs(en.discrete_energy(V, n, dx, dt).E) for n in range(N + 1))
        for n in range(1, N + 1):
            worst = max(worst, en.energy_identity_residual(V, F, n, dx, dt) / scale)
        worst0 = max(worst0, en.energy_identity_residual(V, F, 0, dx, dt, P, Q) / scale)
    return {"identity": worst, "identity_n0": worst0}


def cfl_bound_violations(count: int = 1000, seed: int = 12345) -> int:
    """Random two-level fields on random CFL-admissible meshes violating the lower bound."""
    rng = np.random.default_rng(seed)
    bad = 0
    done = 0
    while done < count:
        J = int(rng.integers(2, 80))
        dx = 1.0 / J
        dt = dx * rng.uniform(0.05, 1.0)
        if dt * dt / (dx * dx) + dt * dt / 4 >= 1:
            continue
        V = rng.standard_normal((2, J + 1)) * 10.0 ** rng.uniform(-3, 3)
        if not en.cfl_lower_bound_holds(en.energy_from_levels(V[0], V[1], dx, dt), dx, dt):
            bad += 1
        done += 1
    return bad


def remainder_records(cfg: SwrConfig, iterations: int) -> list:
    """Remainder records of every subdomain, iteration and level n >= 1."""
    ref = monodomain_reference(cfg)
    layout = cfg.layout
    records = []
    for k in range(1, iterations + 1):
        h = run_swr(cfg, ref, iterations=k)
        if h.failed:
            raise BlowUpError(-1, -1, f"SWR iteration {k}")
        for i, ((j0, j1), m) in enumerate(zip(layout.spans, layout.meshes())):
            sub_ref = SpaceTimeField(np.ascontiguousarray(ref.levels[:, j0:j1 + 1]), m)
            for n in range(1, m.N + 1):
                records.append(en.swr_remainder(h.fields[i], sub_ref, cfg.f, cfg.transmission.g_plus,
                                                cfg.transmission.g_minus, n, k=k, i=i))
    return records


def _energy_runs(spec, out, manifest, threads):
    e = spec.energy
    trials, J, N = int(e.get("trials", 50)), int(e.get("j", 20)), int(e.get("n", 25))
    seed = int(e.get("seed", 12345))
    fields = int(e.get("fields", 1000))
    battery = energy_battery(trials, J, N, seed)
    violations = cfl_bound_violations(fields, seed)
    rows = [
        ("identity", trials, battery["identity"], 1e-12, battery["identity"] <= 1e-12),
        ("identity_n0", trials, battery["identity_n0"], 1e-12, battery["identity_n0"] <= 1e-12),
        ("cfl_bound_violations", fields, violations, 0, violations == 0),
    ]
    manifest.constants.update(identity=battery["identity"], identity_n0=battery["identity_n0"],
                              cfl_bound_violations=violations)
    dx, dt = spec.steps[0]
    cfg = spec.swr_config(dx, dt, spec.transmissions[0], threads=threads)
    try:
        recs = remainder_records(cfg, spec.iterations or 3)
    except BlowUpError as exc:
        manifest.runs.append({"blown_up": True, "failure": str(exc)})
    else:
        en.write_remainder_csv(recs, out / "remainder.csv")
        manifest.artifacts.append("remainder.csv")
        M = max(r.ratio for r in recs)
        manifest.constants["M"] = _json_float(M)
        rows.append(("remainder_max_ratio", len(recs), M, None, math.isfinite(M)))
        manifest.runs.append({"blown_up": False})
    write_rows(out / "summary.csv", ["check", "cases", "value", "threshold", "passed"], rows)
    manifest.artifacts.append("summary.csv")


def _solve_runs(spec, out, manifest, threads):
    f = nonlinearity_from_tag(spec.f)
    rows = []
    for idx, (dx, dt) in enumerate(spec.steps, start=1):
        mesh = spec.mesh(dx, dt)
        try:
            sol = solve_monodomain(mesh, f, linear_transmission(), spec.initial_data(mesh))
        except BlowUpError as exc:
            manifest.runs.append({"run": idx, "dx": dx, "dt": dt, "blown_up": True, "failure": str(exc)})
            rows.append((idx, dx, dt, None, True))
            continue
        write_field_csv(sol, out / f"field_{idx:02d}.csv")
        snaps = [en.discrete_energy(sol, n, mesh.dx, mesh.dt) for n in range(mesh.N + 1)]
        en.write_energy_csv(snaps, mesh.dt, out / f"energy_{idx:02d}.csv")
        manifest.artifacts += [f"field_{idx:02d}.csv", f"energy_{idx:02d}.csv"]
        umax = float(np.max(np.abs(sol.U)))
        manifest.runs.append({"run": idx, "dx": dx, "dt": dt, "max_abs_u": umax, "blown_up": False})
        rows.append((idx, dx, dt, umax, False))
    write_rows(out / "summary.csv", ["run", "dx", "dt", "max_abs_u", "blown_up"], rows)
    manifest.artifacts.append("summary.csv")


RUNNERS: dict[str, Callable] = {
    "solve": _solve_runs,
    "swr": _swr_runs,
    "classical": _classical_runs,
    "sweep": _sweep_runs,
    "order": _order_runs,
    "energy-check": _energy_runs,
}
