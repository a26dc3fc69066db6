import numpy as np
import pytest

from vacuumgas.eos import density_profile
from vacuumgas.geometry import FlowState, snapshot
from vacuumgas.grid import build_domain, diff, gradient
from vacuumgas.solver import (
    SolverAbort,
    SolverConfig,
    accel_field,
    force_field,
    initial_acceleration,
    initial_force_rate,
    initial_state,
    run,
    stable_dt,
    step,
)


def test_force_field_identity_map_gamma2():
    # at eta = e: w = D(rho0^2), vertical component 2 x(1-x)(1-2x)
    dom = build_domain(1, None, 257)
    prof = density_profile("parabolic", dom, 2.0)
    state = initial_state(prof, dom.zeros(1))
    w = force_field(state, prof)
    x = dom.coords[0]
    exact = 2 * x * (1 - x) * (1 - 2 * x)
    assert np.max(np.abs(w[..., 0] - exact)) < 5e-4


def test_force_field_constant_density_gives_zero():
    # constant rho0 never validates, but the formula itself returns zero
    from vacuumgas.eos import DensityProfile

    dom = build_domain(1, None, 65)
    rho = np.full(dom.shape, 0.5)
    prof = DensityProfile(
        domain=dom, rho0=rho, grad_rho0=gradient(dom, rho), d=dom.distance_field(),
        gamma=2.0, pow_gm1=rho, vacuum_constant=0.0,
    )
    state = initial_state(prof, dom.zeros(1))
    assert np.max(np.abs(force_field(state, prof))) < 1e-12


def test_force_field_affine_closed_form():
    # eta = 1/2 + r (x - 1/2): w = -4 c rho0 (x - 1/2) / r^2 (symbolically derived)
    dom = build_domain(1, None, 513)
    c, r = 1.0, 1.3
    prof = density_profile("parabolic", dom, 2.0, c=c)
    x = dom.coords[0]
    eta = dom.zeros(1)
    eta[..., 0] = 0.5 + r * (x - 0.5)
    state = FlowState(domain=dom, eta=eta, v=dom.zeros(1))
    w = force_field(state, prof)[..., 0]
    exact = -4 * c * prof.rho0 * (x - 0.5) / r**2
    assert np.max(np.abs(w - exact)) < 1e-4


def test_first_step_from_rest_matches_divided_form():
    dom = build_domain(1, None, 129)
    prof = density_profile("parabolic", dom, 2.0)
    cfg = SolverConfig(kappa=0.0, gamma=2.0, dt=1e-3, t_end=1e-3)
    state = step(initial_state(prof, dom.zeros(1)), prof, cfg)
    # midpoint from rest leaves the map at e for the stage evaluation, so
    # v^1 = -dt * 2 D(rho0) exactly (discrete gradient)
    expected = -1e-3 * 2.0 * diff(dom, prof.rho0, 0, 1)
    assert np.max(np.abs(state.v[..., 0] - expected)) < 1e-15
    # boundary nodes accelerate outward
    assert state.v[-1, 0] > 0 and state.v[0, 0] < 0


def test_initial_acceleration_matches_paper_formula_at_kappa_zero():
    dom = build_domain(1, None, 257)
    prof = density_profile("parabolic", dom, 2.0)
    u0 = dom.zeros(1)
    a0 = initial_acceleration(dom, u0, prof, kappa=0.0)
    assert np.max(np.abs(a0[..., 0] + 2.0 * diff(dom, prof.rho0, 0, 1))) < 1e-14


def test_initial_force_rate_finite_difference_oracle():
    # d/dt of the divided force along eta = e + t u0, centered in t
    dom = build_domain(2, 24, 25)
    prof = density_profile("parabolic", dom, 2.0)
    rng = np.random.default_rng(1)
    from vacuumgas.harness import initial_velocity

    u0 = initial_velocity(dom, "gradient", 0.3) + initial_velocity(dom, "rotation", 0.2)
    rate = initial_force_rate(dom, u0, prof)

    tau = 1e-5
    e = dom.identity_map()
    g_p = accel_field(snapshot(FlowState(domain=dom, eta=e + tau * u0, v=u0)), prof)
    g_m = accel_field(snapshot(FlowState(domain=dom, eta=e - tau * u0, v=u0)), prof)
    fd = (g_p - g_m) / (2 * tau)
    scale = np.max(np.abs(fd))
    assert np.max(np.abs(rate - fd)) / scale < 1e-6


def test_initial_acceleration_consistent_with_rate():
    dom = build_domain(1, None, 129)
    prof = density_profile("parabolic", dom, 2.0)
    from vacuumgas.harness import initial_velocity

    u0 = initial_velocity(dom, "shear", 0.2)
    kappa = 0.05
    state = initial_state(prof, u0)
    g0 = accel_field(snapshot(state), prof)
    a0 = initial_acceleration(dom, u0, prof, kappa)
    rate0 = initial_force_rate(dom, u0, prof)
    assert np.max(np.abs(a0 - (-g0 - kappa * rate0))) < 1e-12


def test_stable_dt_formula_arithmetic():
    # kappa = 0, gamma = 2, max rho0 = 0.25 -> c_max = sqrt(0.5)
    dom = build_domain(1, None, 101)
    prof = density_profile("parabolic", dom, 2.0)
    state = initial_state(prof, dom.zeros(1))
    cfg = SolverConfig(kappa=0.0, cfl_number=0.5)
    dt = stable_dt(state, prof, cfg)
    assert dt == pytest.approx(0.5 * 0.01 / np.sqrt(0.5), rel=1e-6)

    # kappa-dominant bound scales like dx^2 / kappa
    cfg_k = SolverConfig(kappa=1.0, cfl_number=0.5)
    dt_k = stable_dt(state, prof, cfg_k)
    assert dt_k == pytest.approx(0.5 * 0.01**2 / (2.0 * 1.0 * 0.5), rel=1e-6)


def test_run_zero_time_single_sample():
    dom = build_domain(1, None, 65)
    prof = density_profile("parabolic", dom, 2.0)
    traj = run(dom.zeros(1), prof, SolverConfig(t_end=0.0))
    assert len(traj.samples) == 1
    assert traj.samples[0][0] == 0.0
    assert len(traj.reports) == 1


def test_run_rejects_nonfinite_velocity():
    dom = build_domain(1, None, 65)
    prof = density_profile("parabolic", dom, 2.0)
    u0 = dom.zeros(1)
    u0[3] = np.nan
    with pytest.raises(ValueError):
        run(u0, prof, SolverConfig(t_end=0.01))


def test_symmetry_preservation_2d():
    # horizontally uniform symmetric data: flow stays horizontally uniform and
    # v3 stays antisymmetric about the midplane
    dom = build_domain(2, 12, 33)
    prof = density_profile("parabolic", dom, 2.0)
    traj = run(dom.zeros(2), prof, SolverConfig(t_end=0.05, snapshot_stride=5))
    _, state = traj.samples[-1]
    assert np.max(np.abs(state.v[..., 0])) < 1e-13
    spread = np.max(np.abs(state.v - state.v[:1, :, :]))
    assert spread < 1e-13
    v3 = state.v[0, :, 1]
    assert np.max(np.abs(v3 + v3[::-1])) < 1e-12


def test_energy_conservation_and_J_window():
    dom = build_domain(1, None, 257)
    prof = density_profile("parabolic", dom, 2.0)
    traj = run(dom.zeros(1), prof, SolverConfig(kappa=0.0, t_end=0.1, snapshot_stride=10))
    E = np.array([r.physical_energy for r in traj.reports])
    assert np.max(np.abs(E - E[0])) / E[0] < 1e-3
    assert all(0.5 <= r.J_min and r.J_max <= 1.5 for r in traj.reports)


def test_kappa_dissipates_energy():
    dom = build_domain(1, None, 129)
    prof = density_profile("parabolic", dom, 2.0)
    traj = run(dom.zeros(1), prof, SolverConfig(kappa=1e-2, t_end=0.05, snapshot_stride=5))
    E = np.array([r.physical_energy for r in traj.reports])
    assert E[-1] < E[0]
    assert np.max(np.diff(E)) <= 1e-12 * E[0]


def test_vacuum_faces_track_flow_map():
    # the moving boundary is the image of the reference faces under eta, and
    # the face nodes carry zero density for all time
    from vacuumgas.diagnostics import boundary_trace

    dom = build_domain(1, None, 129)
    prof = density_profile("parabolic", dom, 2.0)
    traj = run(dom.zeros(1), prof, SolverConfig(t_end=0.05, snapshot_stride=5))
    assert prof.rho0[0] == 0.0 and prof.rho0[-1] == 0.0
    for _, state in traj.samples:
        trace = boundary_trace(state)
        assert trace.positions["bottom"][0] == state.eta[0, 0]
        assert trace.positions["top"][0] == state.eta[-1, 0]
    # expansion: the top face moves up, the bottom face moves down
    final = traj.samples[-1][1]
    assert final.eta[-1, 0] > 1.0 and final.eta[0, 0] < 0.0


def test_abort_on_jacobian_collapse():
    # strong compression with an oversized fixed step defeats the pressure
    # bounce and drives J through zero
    dom = build_domain(1, None, 65)
    prof = density_profile("parabolic", dom, 2.0)
    u0 = dom.zeros(1)
    u0[..., 0] = -8.0 * (dom.coords[0] - 0.5)
    with pytest.raises(SolverAbort) as exc:
        run(u0, prof, SolverConfig(t_end=0.5, dt=0.05, snapshot_stride=5))
    assert exc.value.time > 0
    assert exc.value.trajectory is not None


def test_deterministic_reruns_bit_identical():
    dom = build_domain(2, 8, 17)
    prof = density_profile("parabolic", dom, 2.0)
    cfg = SolverConfig(t_end=0.02, snapshot_stride=2)
    from vacuumgas.harness import initial_velocity

    u0 = initial_velocity(dom, "gradient", 0.2)
    t1 = run(u0, prof, cfg)
    t2 = run(u0, prof, cfg)
    for (ta, sa), (tb, sb) in zip(t1.samples, t2.samples):
        assert ta == tb
        assert np.array_equal(sa.v, sb.v)
        assert np.array_equal(sa.eta, sb.eta)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(kappa=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(gamma=1.0)
    with pytest.raises(ValueError):
        SolverConfig(cfl_number=0.0)
    with pytest.raises(ValueError):
        SolverConfig(momentum_form="upwind")
    with pytest.raises(ValueError):
        SolverConfig(dt=-1e-3)


def test_conservative_form_close_to_divided():
    dom = build_domain(1, None, 257)
    prof = density_profile("parabolic", dom, 2.0)
    out = {}
    for form in ("divided", "conservative"):
        cfg = SolverConfig(t_end=0.05, snapshot_stride=100, momentum_form=form)
        out[form] = run(dom.zeros(1), prof, cfg).samples[-1][1].v
    err = np.max(np.abs(out["divided"] - out["conservative"]))
    assert 0 < err < 5e-3
