import numpy as np
import pytest

from wave1d import fd_ops
from wave1d.energy import discrete_energy
from wave1d.model import (
    ConfigError,
    MeshSpec,
    cubic,
    linear_transmission,
    bench_p,
    bench_q,
    sample_initial_data,
    scaled,
    transmission_from_nonlinearity,
    u2ux,
    zero_nonlinearity,
)
from wave1d.solver import (
    Absorbing,
    BlowUpError,
    Dirichlet,
    SpaceTimeField,
    SubdomainProblem,
    boundary_step,
    extract_trace,
    initial_step,
    interior_step,
    solve_monodomain,
    solve_subdomain,
    update_coefficient,
    write_field_csv,
)


def cube(u):
    return u * u * u


def f_u3(u, ut, ux):
    return u * u * u


def bench_mesh(T=2.0):
    return MeshSpec.from_steps(0, 4, 1 / 100, 1 / 120, T)


# --- initial and interior steps ---------------------------------------------

def test_initial_step_zero_and_affine():
    mesh = MeshSpec.from_steps(0, 1, 0.1, 0.05, 1)
    z = np.zeros(11)
    assert np.all(initial_step(z, z, cubic(), mesh) == 0)
    P = mesh.x.copy()
    np.testing.assert_allclose(initial_step(P, z, zero_nonlinearity(), mesh), P[1:-1], atol=1e-15)


def test_initial_step_taylor_oracle():
    mesh = bench_mesh()
    dx, dt = mesh.dx, mesh.dt
    init = sample_initial_data(bench_p, bench_q, mesh)
    U1 = initial_step(init.P, init.Q, cubic(), mesh)
    p = np.polynomial.Polynomial([0, 0, 0, 8, -12, 6, -1])  # x^3 (2 - x)^3 expanded
    q = np.polynomial.Polynomial([0, 0, -12, 24, -15, 3])   # 3x^2 (2 - x)^2 (x - 1)
    x = mesh.x[1:-1]
    assert np.allclose(p(x[x <= 2]), init.P[1:-1][x <= 2], atol=1e-14)
    assert np.allclose(q(x[x <= 2]), init.Q[1:-1][x <= 2], atol=1e-14)
    oracle = p(x) + dt * q(x) + dt * dt / 2 * (p.deriv(2)(x) + p(x) ** 3)
    inside = x < 2 - 1e-9
    p4 = np.max(np.abs(p.deriv(4)(np.linspace(0, 2, 201))))
    bound = dt * dt * dx * dx * p4 / 24 + 1e-14
    assert np.max(np.abs(U1[inside] - oracle[inside])) <= bound
    outside = x > 2 + 1e-9
    assert np.all(U1[outside][1:] == 0)


def interior_oracle(levels, n, dx, dt):
    """Scalar re-implementation of one leapfrog step with f = u^3."""
    J = levels.shape[1] - 1
    out = []
    for j in range(1, J):
        u = levels[n, j]
        lap = (levels[n, j + 1] - 2 * u + levels[n, j - 1]) / (dx * dx)
        out.append(2 * u - levels[n - 1, j] + dt * dt * (lap + u * u * u))
    return np.array(out)


def test_interior_step_matches_scalar_oracle_bitwise():
    rng = np.random.default_rng(3)
    levels = rng.uniform(-1, 1, (4, 5))
    for n in (1, 2):
        np.testing.assert_array_equal(interior_step(levels, cubic(), n, 0.25, 0.2),
                                      interior_oracle(levels, n, 0.25, 0.2))


def test_interior_step_constant_and_dalembert():
    levels = np.full((3, 9), 2.5)
    np.testing.assert_array_equal(interior_step(levels, zero_nonlinearity(), 1, 0.1, 0.05), np.full(7, 2.5))
    for dx in (0.02, 0.01):
        dt = 0.8 * dx
        x = np.arange(0, 1 + dx / 2, dx)
        exact = lambda t: np.sin(np.pi * (x - t))
        levels = np.array([exact(0.3 - dt), exact(0.3), exact(0.3 + dt)])
        new = interior_step(levels, zero_nonlinearity(), 1, dx, dt)
        lte = np.max(np.abs(new - levels[2, 1:-1]))
        assert lte <= dt * dt * (dt * dt + dx * dx) * np.pi ** 4 / 12 * 1.01


def test_interior_step_needs_history():
    with pytest.raises(ValueError):
        interior_step(np.zeros((3, 5)), cubic(), 0, 0.1, 0.05)


# --- boundary and extraction operators ----------------------------------------

def bminus_residual(hist0, hist1, n, dx, dt, f, g, H):
    """B- U(0,n) - H written directly with fd_ops; hist0/hist1 are the histories of nodes 0 and 1."""
    ux = fd_ops.spatial_diff("forward", [hist0[n], hist1[n]], dx, 0)
    ut = fd_ops.temporal_diff("switched", hist0, dt, n)
    return (fd_ops.temporal_diff("centered", hist0, dt, n) - ux
            + dx / 2 * fd_ops.second_temporal_diff(hist0, dt, n)
            - dx / 2 * f(hist0[n], ut, ux) + g(hist0[n]) - H)


def test_boundary_step_scalar_oracle():
    dx, dt = 0.5, 0.4
    g = lambda u: -u ** 3 / 6
    levels = np.array([[0.1, 0.0, 0.0], [0.12, 0.11, 0.0], [0.0, 0.0, 0.0]])
    got = boundary_step("left", levels, 0.0, f_u3, g, 1, dx, dt)
    # the relation is affine in the unknown: solve from two evaluations
    r = [bminus_residual({0: 0.1, 1: 0.12, 2: s}, {1: 0.11}, 1, dx, dt, f_u3, g, 0.0) for s in (0.0, 1.0)]
    oracle = -r[0] / (r[1] - r[0])
    assert got == pytest.approx(oracle, abs=1e-15)
    assert abs(bminus_residual({0: 0.1, 1: 0.12, 2: got}, {1: 0.11}, 1, dx, dt, f_u3, g, 0.0)) < 1e-14


def test_boundary_step_initial_form():
    dx, dt = 0.1, 0.08
    P = np.array([0.3, 0.2, 0.1])
    Q = np.array([-0.5, 0.1, 0.2])
    g = lambda u: u ** 3 / 6
    v = boundary_step("right", np.zeros((2, 3)), 0.7, f_u3, g, 0, dx, dt, P, Q)
    # n = 0 form of B+: (dt+ + dx- + dx/dt dt+) U - dx/dt Q - dx/2 f(P, Q, dx- P) + g(P) = H
    px = (P[2] - P[1]) / dx
    dtp = (v - P[2]) / dt
    lhs = dtp + px + dx / dt * dtp - dx / dt * Q[2] - dx / 2 * f_u3(P[2], Q[2], px) + g(P[2])
    assert lhs == pytest.approx(0.7, abs=1e-13)


def test_boundary_step_zero_and_coefficient():
    assert boundary_step("left", np.zeros((3, 4)), 0.0, f_u3, None, 1, 0.1, 0.05) == 0.0
    for dx in (0.1, 0.01):
        for n in (0, 1):
            assert update_coefficient(dx, 0.8 * dx, n) > 0
    with pytest.raises(ValueError):
        boundary_step("top", np.zeros((3, 4)), 0.0, f_u3, None, 1, 0.1, 0.05)


def extraction_oracle(W, P, Q, dx, dt, f, gp, gm):
    """B~+ at j=0 and B~- at j=J from fd_ops, node by node."""
    N = W.shape[0] - 2
    left, right = [], []
    for n in range(N + 1):
        h0 = W[:, 0]
        hJ = W[:, -1]
        if n == 0:
            px0 = fd_ops.spatial_diff("forward", P, dx, 0)
            dtp0 = fd_ops.temporal_diff("forward", h0, dt, 0)
            left.append(dtp0 + px0 - dx / dt * dtp0 + dx / dt * Q[0] + dx / 2 * f(P[0], Q[0], px0) + gp(P[0]))
            pxJ = fd_ops.spatial_diff("backward", P, dx, len(P) - 1)
            dtpJ = fd_ops.temporal_diff("forward", hJ, dt, 0)
            right.append(dtpJ - pxJ - dx / dt * dtpJ + dx / dt * Q[-1] + dx / 2 * f(P[-1], Q[-1], pxJ) + gm(P[-1]))
            continue
        ux0 = fd_ops.spatial_diff("forward", W[n], dx, 0)
        uxJ = fd_ops.spatial_diff("backward", W[n], dx, W.shape[1] - 1)
        left.append(fd_ops.temporal_diff("centered", h0, dt, n) + ux0 - dx / 2 * fd_ops.second_temporal_diff(h0, dt, n)
                    + dx / 2 * f(h0[n], fd_ops.temporal_diff("switched", h0, dt, n), ux0) + gp(h0[n]))
        right.append(fd_ops.temporal_diff("centered", hJ, dt, n) - uxJ - dx / 2 * fd_ops.second_temporal_diff(hJ, dt, n)
                     + dx / 2 * f(hJ[n], fd_ops.temporal_diff("switched", hJ, dt, n), uxJ) + gm(hJ[n]))
    return np.array(left), np.array(right)


def test_extract_trace_scalar_oracle():
    rng = np.random.default_rng(11)
    mesh = MeshSpec(0.0, 1.0, 4, 4, 0.8)
    W = rng.uniform(-0.5, 0.5, (6, 5))
    P, Q = W[0].copy(), rng.uniform(-0.5, 0.5, 5)
    f = u2ux()
    g = transmission_from_nonlinearity(f)
    fld = SpaceTimeField(W, mesh)
    left = extract_trace("left", fld, f, g.g_plus, P, Q)
    right = extract_trace("right", fld, f, g.g_minus, P, Q)
    ol, orr = extraction_oracle(W, P, Q, mesh.dx, mesh.dt, f, g.g_plus, g.g_minus)
    np.testing.assert_allclose(left, ol, rtol=1e-15, atol=1e-15)
    np.testing.assert_allclose(right, orr, rtol=1e-15, atol=1e-15)


def test_extraction_plus_boundary_is_twice_centered_difference():
    rng = np.random.default_rng(5)
    mesh = MeshSpec(0.0, 1.0, 6, 7, 0.7)
    W = rng.standard_normal((9, 7))
    fld = SpaceTimeField(W, mesh)
    zero = zero_nonlinearity()
    P, Q = W[0], rng.standard_normal(7)
    trace = extract_trace("left", fld, zero, None, P, Q)
    dx, dt = mesh.dx, mesh.dt
    for n in range(1, mesh.N + 1):
        u = W[:, 0]
        b_minus = ((u[n + 1] - u[n - 1]) / (2 * dt) - (W[n, 1] - W[n, 0]) / dx
                   + dx / 2 * (u[n + 1] - 2 * u[n] + u[n - 1]) / dt ** 2)
        assert trace[n] + b_minus == pytest.approx((u[n + 1] - u[n - 1]) / dt, abs=1e-12)
    np.testing.assert_array_equal(extract_trace("right", SpaceTimeField(np.zeros((9, 7)), mesh), zero, None,
                                                np.zeros(7), np.zeros(7)), np.zeros(8))


# --- whole solves ---------------------------------------------------------------

def test_zero_data_zero_field():
    mesh = bench_mesh()
    init = sample_initial_data(scaled(bench_p, 0.0), scaled(bench_q, 0.0), mesh)
    fld = solve_monodomain(mesh, cubic(), transmission_from_nonlinearity(u2ux()), init)
    assert np.all(fld.levels == 0)


def test_absorbing_edge_lets_pulse_exit():
    mesh = MeshSpec.from_steps(0, 4, 1 / 100, 1 / 120, 3.5)

    def phi(x):
        r = (np.asarray(x) - 2.0) / 0.8
        out = np.zeros_like(r)
        inside = np.abs(r) < 1
        out[inside] = np.exp(-1 / (1 - r[inside] ** 2))
        return out

    def minus_dphi(x):
        h = 1e-6
        return -(phi(x + h) - phi(x - h)) / (2 * h)

    init = sample_initial_data(phi, minus_dphi, mesh)  # right-going pulse
    fld = solve_monodomain(mesh, zero_nonlinearity(), linear_transmission(), init)
    E0 = discrete_energy(fld, 0, mesh.dx, mesh.dt).E
    E_end = discrete_energy(fld, mesh.N, mesh.dx, mesh.dt).E
    assert E_end <= 1e-2 * E0


def test_linear_bench_data_leaves_domain():
    mesh = bench_mesh(T=4.0)
    init = sample_initial_data(bench_p, bench_q, mesh)
    fld = solve_monodomain(mesh, zero_nonlinearity(), None, init)
    E = [discrete_energy(fld, n, mesh.dx, mesh.dt).E for n in range(mesh.N + 1)]
    assert E[-1] <= 0.05 * max(E)


def test_cubic_bench_run_stays_finite():
    mesh = bench_mesh()
    fld = solve_monodomain(mesh, cubic(), None, sample_initial_data(bench_p, bench_q, mesh))
    assert np.all(np.isfinite(fld.U))
    ref = solve_subdomain(SubdomainProblem(mesh, cubic(), fld.levels[0], sample_initial_data(bench_p, bench_q, mesh).Q,
                                           Absorbing(np.zeros(mesh.N + 1)), Absorbing(np.zeros(mesh.N + 1))))
    np.testing.assert_array_equal(ref.field.levels, fld.levels)


def test_even_symmetry_linear_case():
    mesh = MeshSpec.from_steps(0, 4, 1 / 50, 1 / 60, 2)
    init = sample_initial_data(lambda x: np.exp(-8 * (x - 2) ** 2), lambda x: 0 * x, mesh)
    U = solve_monodomain(mesh, zero_nonlinearity(), None, init).U
    np.testing.assert_allclose(U, U[::-1], atol=1e-13)


def test_determinism():
    mesh = bench_mesh()
    init = sample_initial_data(bench_p, bench_q, mesh)
    a = solve_monodomain(mesh, u2ux(), transmission_from_nonlinearity(u2ux()), init)
    b = solve_monodomain(mesh, u2ux(), transmission_from_nonlinearity(u2ux()), init)
    assert a.levels.tobytes() == b.levels.tobytes()


def test_blow_up_reports_location():
    mesh = bench_mesh()
    init = sample_initial_data(scaled(bench_p, 50.0), scaled(bench_q, 50.0), mesh)
    with pytest.raises(BlowUpError) as err:
        solve_monodomain(mesh, cubic(), None, init)
    assert err.value.n >= 1 and 0 <= err.value.j <= mesh.J


def test_contracts():
    bad = MeshSpec.from_steps(0, 1, 0.1, 0.1, 1)
    z = np.zeros(11)
    with pytest.raises(ConfigError):
        solve_subdomain(SubdomainProblem(bad, cubic(), z, z, Absorbing(z), Absorbing(z)))
    mesh = MeshSpec.from_steps(0, 1, 0.1, 0.05, 1)
    with pytest.raises(ConfigError):
        SubdomainProblem(mesh, cubic(), z, z, Absorbing(np.zeros(5)), Absorbing(np.zeros(21)))


def test_dirichlet_edges_take_data():
    mesh = MeshSpec.from_steps(0, 1, 0.1, 0.05, 1)
    data = np.linspace(0, 1, mesh.N + 1)
    z = np.zeros(mesh.J + 1)
    sol = solve_subdomain(SubdomainProblem(mesh, cubic(), z, z, Absorbing(np.zeros(mesh.N + 1)), Dirichlet(data)))
    np.testing.assert_array_equal(sol.field.U[-1], data)


def test_field_csv(tmp_path):
    mesh = MeshSpec.from_steps(0, 1, 0.25, 0.2, 0.4)
    init = sample_initial_data(lambda x: x * (1 - x), lambda x: 0 * x, mesh)
    fld = solve_monodomain(mesh, cubic(), None, init)
    path = tmp_path / "f.csv"
    write_field_csv(fld, path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "j,x,n,t,u"
    assert len(lines) == 1 + (mesh.J + 1) * (mesh.N + 1)
    j, x, n, t, u = lines[1 + 7].split(",")
    assert (int(j), int(n)) == (2, 1)
    assert float(u) == fld.U[2, 1]
