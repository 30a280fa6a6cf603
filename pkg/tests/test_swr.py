import numpy as np
import pytest

from wave1d.model import (
    ConfigError,
    MeshSpec,
    SubdomainLayout,
    cubic,
    linear_transmission,
    bench_p,
    bench_q,
    sample_initial_data,
    scaled,
    transmission_from_nonlinearity,
    u2ux,
)
from wave1d.solver import SpaceTimeField
from wave1d.swr import (
    SwrConfig,
    classical_counts,
    glue,
    global_error,
    interface_residual,
    monodomain_reference,
    monodomain_traces,
    run_classical,
    run_swr,
)


def small_mesh():
    return MeshSpec.from_steps(0, 4, 1 / 25, 1 / 30, 2.0)


def make_cfg(mesh=None, f=None, trans=None, cuts=(2.0,), scale=1.0, **kw):
    mesh = mesh or small_mesh()
    f = f or cubic()
    init = sample_initial_data(scaled(bench_p, scale), scaled(bench_q, scale), mesh)
    lay = SubdomainLayout.nonoverlapping(mesh, list(cuts))
    return SwrConfig(lay, f, trans or linear_transmission(), init, **kw)


def test_interface_residual():
    a = [np.zeros(5), np.ones(5)]
    assert interface_residual(a, a, 0.1) == 0.0
    c = 0.3
    b = [np.full(5, c), np.full(5, 1 + c)]
    assert interface_residual(a, b, 0.1) == pytest.approx(abs(c) * np.sqrt(2 * 5 * 0.1))
    with pytest.raises(ValueError):
        interface_residual(a, a[:1], 0.1)
    with pytest.raises(ValueError):
        interface_residual([np.zeros(4)], [np.zeros(5)], 0.1)


def test_global_error():
    mesh = small_mesh()
    ref = SpaceTimeField(np.zeros((mesh.N + 2, mesh.J + 1)), mesh)
    assert global_error(ref.U.copy(), ref) == 0.0
    U = ref.U.copy()
    U[3, 7] = 2.0
    assert global_error(U, ref) == pytest.approx(2.0 * np.sqrt(mesh.dx))
    with pytest.raises(ValueError):
        global_error(U[:-1], ref)


def test_glue_left_owner():
    mesh = MeshSpec(0.0, 1.0, 4, 2, 1.0)
    lay = SubdomainLayout.nonoverlapping(mesh, [0.5])
    a = SpaceTimeField(np.full((4, 3), 1.0), mesh.sub(0, 2))
    b = SpaceTimeField(np.full((4, 3), 2.0), mesh.sub(2, 4))
    U = glue([a, b], lay)
    assert list(U[:, 0]) == [1, 1, 1, 2, 2]


def test_zero_data_converges_immediately():
    h = run_swr(make_cfg(scale=0.0))
    assert h.converged and h.iterations_used == 1 and h.residuals[0] == 0


def test_fixed_point_property():
    for f in (cubic(), u2ux()):
        cfg = make_cfg(f=f, trans=transmission_from_nonlinearity(f), cuts=(1.0, 2.0, 3.2))
        ref = monodomain_reference(cfg)
        cfg.initial_guess = monodomain_traces(cfg, ref)
        h = run_swr(cfg, ref, iterations=1)
        assert h.residuals[0] <= 1e-12
        assert h.errors[0] <= 1e-12


def test_single_subdomain_reproduces_monodomain():
    mesh = small_mesh()
    init = sample_initial_data(bench_p, bench_q, mesh)
    cfg = SwrConfig(SubdomainLayout.nonoverlapping(mesh, []), cubic(), linear_transmission(), init)
    h = run_swr(cfg)
    assert h.iterations_used == 1 and h.converged
    np.testing.assert_array_equal(glue(h.fields, cfg.layout), h.reference.U)


def test_converged_limit_is_monodomain():
    f = u2ux()
    h = run_swr(make_cfg(f=f, trans=transmission_from_nonlinearity(f), tol=1e-12, max_iters=300))
    assert h.converged
    assert np.max(np.abs(glue(h.fields, make_cfg().layout) - h.reference.U)) <= 1e-10


def test_monotone_stopping_and_history_csv(tmp_path):
    h = run_swr(make_cfg(tol=1e-6))
    r = h.residuals
    assert h.converged and r[-1] <= 1e-6 and np.all(r[:-1] > 1e-6)
    assert [rec.k for rec in h.records] == list(range(1, len(r) + 1))
    path = tmp_path / "h.csv"
    h.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,residual,error,elapsed_s" and len(lines) == len(r) + 1
    assert float(lines[1].split(",")[1]) == r[0]


def test_fixed_iteration_count_ignores_tolerance():
    h = run_swr(make_cfg(tol=1.0), iterations=4)
    assert h.iterations_used == 4 and not h.converged


def test_threads_do_not_change_results():
    a = run_swr(make_cfg(cuts=(1.0, 2.0, 3.0)), iterations=5)
    b = run_swr(make_cfg(cuts=(1.0, 2.0, 3.0), threads=4), iterations=5)
    assert a.residuals.tobytes() == b.residuals.tobytes()
    assert a.errors.tobytes() == b.errors.tobytes()


def test_residual_on_values_option():
    h = run_swr(make_cfg(residual_on="values"), iterations=3)
    assert np.all(np.isfinite(h.residuals))
    with pytest.raises(ConfigError):
        make_cfg(residual_on="energy")


def test_blow_up_is_recorded():
    h = run_swr(make_cfg(scale=50.0), reference=SpaceTimeField(np.zeros((61, 101)), small_mesh()))
    assert h.failed and h.records[-1].blown_up and not h.converged


def test_swr_rejects_overlap_and_general_f():
    mesh = small_mesh()
    init = sample_initial_data(bench_p, bench_q, mesh)
    ov = SubdomainLayout.overlapping(mesh, 2.0, 4 * mesh.dx)
    with pytest.raises(ConfigError):
        run_swr(SwrConfig(ov, cubic(), linear_transmission(), init))
    with pytest.raises(ConfigError):
        run_classical(SwrConfig(SubdomainLayout.nonoverlapping(mesh, [2.0]), cubic(), linear_transmission(), init))
    with pytest.raises(ConfigError):
        SwrConfig(ov, cubic(), linear_transmission(), init, tol=0.0)


def test_classical_finite_convergence():
    mesh = small_mesh()
    init = sample_initial_data(bench_p, bench_q, mesh)
    L = 4 * mesh.dx
    cfg = SwrConfig(SubdomainLayout.overlapping(mesh, 2.0, L), cubic(), linear_transmission(), init, max_iters=100)
    h = run_classical(cfg)
    n_comp, n_th = classical_counts(h, mesh, L)
    assert h.converged and n_comp <= n_th + 4
    assert h.errors[-1] <= 1e-13
