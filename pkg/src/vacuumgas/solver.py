"""Time integration of the degenerate-parabolic kappa-regularized gas flow.

The momentum law is rho0 v_t + a(rho0^g J^-g)' + kappa d/dt[a(rho0^g J^-g)'] = 0
with a free vacuum boundary carried by the flow map itself (no boundary
conditions on eta or v).  Dividing through by rho0 gives the equivalent
nonsingular form

    v_t + b A (rho0^(g-1) J^(1-g))' + kappa b d/dt[A (rho0^(g-1) J^(1-g))'] = 0,

with b = g/(g-1), which differentiates a quantity that is smooth up to the
vacuum faces.  The default scheme uses this divided form at every node (the
conservative form divided pointwise is available for comparison); the kappa
term is a backward difference of the lagged acceleration so the scheme stays
one-step in v, and each step is a two-stage midpoint update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eos import DensityProfile
from .geometry import FlowState, GeometrySnapshot, snapshot
from .grid import DiscreteDomain, diff, gradient

__all__ = [
    "SolverConfig",
    "Trajectory",
    "SolverAbort",
    "force_field",
    "accel_field",
    "initial_state",
    "initial_acceleration",
    "initial_force_rate",
    "step",
    "stable_dt",
    "run",
]

MOMENTUM_FORMS = ("divided", "conservative")

_EPS_SOUND = 1e-12
_EPS_KAPPA = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    kappa: float = 0.0
    gamma: float = 2.0
    dt: float | None = None  # None -> adaptive via stable_dt
    t_end: float = 0.1
    cfl_number: float = 0.5
    snapshot_stride: int = 1
    momentum_form: str = "divided"

    def __post_init__(self) -> None:
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.gamma <= 1:
            raise ValueError("gamma must be > 1")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive (or None for adaptive)")
        if not 0 < self.cfl_number <= 1:
            raise ValueError("cfl_number must lie in (0, 1]")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.momentum_form not in MOMENTUM_FORMS:
            raise ValueError(f"momentum_form must be one of {MOMENTUM_FORMS}")


class SolverAbort(RuntimeError):
    """Raised when a step loses positivity of the Jacobian (J <= 0 somewhere)."""

    def __init__(self, time: float, j_min: float, state: FlowState | None = None, trajectory=None):
        super().__init__(f"step aborted at t = {time:.6g}: min J = {j_min:.6g} <= 0")
        self.time = time
        self.j_min = j_min
        self.state = state
        self.trajectory = trajectory


@dataclass
class Trajectory:
    """Ordered (time, FlowState) samples of one run, with per-sample reports."""

    profile: DensityProfile
    config: SolverConfig
    samples: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    n_steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples])

    def append(self, state: FlowState) -> None:
        if self.samples and state.time <= self.samples[-1][0]:
            raise ValueError("sample times must be strictly increasing")
        self.samples.append((state.time, state))

    def state_at(self, i: int) -> FlowState:
        return self.samples[i][1]


def _cached_snapshot(state: FlowState) -> GeometrySnapshot:
    snap = getattr(state, "_geom", None)
    if snap is None:
        snap = snapshot(state)
        state._geom = snap  # cache; FlowState instances are not mutated afterwards
    return snap


def force_field(state: FlowState, profile: DensityProfile) -> np.ndarray:
    """Conservative pressure force w_i = a^k_i (rho0^g J^-g),_k."""
    snap = _cached_snapshot(state).require_valid()
    dom = state.domain
    P = profile.rho0**profile.gamma * snap.J ** (-profile.gamma)
    DP = gradient(dom, P)
    return np.einsum("...ik,...k->...i", snap.a, DP)


def _divided_force(snap: GeometrySnapshot, profile: DensityProfile) -> np.ndarray:
    """b A^k_i (rho0^(g-1) J^(1-g)),_k -- the acceleration in the divided form."""
    g = profile.gamma
    beta = g / (g - 1.0)
    Q = profile.pow_gm1 * snap.J ** (1.0 - g)
    DQ = gradient(snap.domain, Q)
    return beta * np.einsum("...ik,...k->...i", snap.A, DQ)


def accel_field(
    snap: GeometrySnapshot, profile: DensityProfile, momentum_form: str = "divided"
) -> np.ndarray:
    """Pressure acceleration g with v_t = -g - kappa dg/dt.

    ``divided`` evaluates the nonsingular divided form everywhere;
    ``conservative`` divides the conservative force by rho0 at interior nodes
    and falls back to the divided form on the vacuum faces.
    """
    snap.require_valid()
    divided = _divided_force(snap, profile)
    if momentum_form == "divided":
        return divided
    dom = snap.domain
    P = profile.rho0**profile.gamma * snap.J ** (-profile.gamma)
    DP = gradient(dom, P)
    w = np.einsum("...ik,...k->...i", snap.a, DP)
    out = divided.copy()
    mask = profile.interior_mask()
    out[mask] = w[mask] / profile.rho0[mask][..., None]
    return out


def initial_force_rate(
    domain: DiscreteDomain, u0: np.ndarray, profile: DensityProfile
) -> np.ndarray:
    """d/dt of the divided-form acceleration at t=0 (flow map = identity):
    b [ ((1-g) rho0^(g-1) div u0),_i - u0^k,_i (rho0^(g-1)),_k ].
    """
    g = profile.gamma
    beta = g / (g - 1.0)
    q = profile.pow_gm1
    Du0 = gradient(domain, u0)
    div_u0 = np.einsum("...kk->...", Du0)
    dq = gradient(domain, q)
    first = gradient(domain, (1.0 - g) * q * div_u0)
    second = np.einsum("...ki,...k->...i", Du0, dq)
    return beta * (first - second)


def initial_acceleration(
    domain: DiscreteDomain, u0: np.ndarray, profile: DensityProfile, kappa: float
) -> np.ndarray:
    """v_t at t=0: (kappa g q div u0 - b q),_i + kappa b u0^k,_i q,_k with
    q = rho0^(gamma-1) and b = gamma/(gamma-1)."""
    g = profile.gamma
    beta = g / (g - 1.0)
    q = profile.pow_gm1
    Du0 = gradient(domain, u0)
    div_u0 = np.einsum("...kk->...", Du0)
    dq = gradient(domain, q)
    grad_part = gradient(domain, kappa * g * q * div_u0 - beta * q)
    cross = kappa * beta * np.einsum("...ki,...k->...i", Du0, dq)
    return grad_part + cross


def initial_state(profile: DensityProfile, u0: np.ndarray) -> FlowState:
    """State at t=0: identity flow map with the given initial velocity."""
    dom = profile.domain
    return FlowState(domain=dom, eta=dom.identity_map(), v=np.array(u0, dtype=float), time=0.0)


def stable_dt(state: FlowState, profile: DensityProfile, config: SolverConfig) -> float:
    """CFL bound: cfl * min(dx / max(c, eps), dx^2 / max(2 kappa c^2, eps))
    with c the pulled-back sound speed max over nodes."""
    snap = _cached_snapshot(state).require_valid()
    rho = profile.rho0 / snap.J
    c2_max = float(np.max(profile.gamma * rho ** (profile.gamma - 1.0)))
    dx = min(state.domain.spacing)
    dt_acoustic = dx / max(np.sqrt(c2_max), _EPS_SOUND)
    dt_kappa = dx * dx / max(2.0 * config.kappa * c2_max, _EPS_KAPPA)
    return config.cfl_number * min(dt_acoustic, dt_kappa)


def _kappa_rate(
    state: FlowState, g_now: np.ndarray, profile: DensityProfile, config: SolverConfig
) -> np.ndarray:
    if config.kappa == 0.0:
        return np.zeros_like(g_now)
    if state.w_prev is not None and state.dt_prev > 0:
        return (g_now - state.w_prev) / state.dt_prev
    if state.time == 0.0:
        return initial_force_rate(state.domain, state.v, profile)
    return np.zeros_like(g_now)


def step(
    state: FlowState, profile: DensityProfile, config: SolverConfig, dt: float | None = None
) -> FlowState:
    """One two-stage midpoint step of the kappa-problem.

    The kappa term freezes the backward-difference force rate over the step;
    the first step uses the analytic t=0 rate instead (well-defined because
    the initial flow map is the identity).  Raises SolverAbort when the step
    leaves the J > 0 regime.
    """
    dom = state.domain
    if dt is None:
        dt = config.dt if config.dt is not None else stable_dt(state, profile, config)

    snap0 = _cached_snapshot(state)
    if not snap0.valid:
        raise SolverAbort(state.time, float(snap0.J.min()), state)
    g0 = accel_field(snap0, profile, config.momentum_form)
    rate = _kappa_rate(state, g0, profile, config)
    acc0 = -g0 - config.kappa * rate

    eta_mid = state.eta + (0.5 * dt) * state.v
    v_mid = state.v + (0.5 * dt) * acc0
    mid = FlowState(domain=dom, eta=eta_mid, v=v_mid, time=state.time + 0.5 * dt)
    snap_mid = _cached_snapshot(mid)
    if not snap_mid.valid:
        raise SolverAbort(mid.time, float(snap_mid.J.min()), mid)
    g_mid = accel_field(snap_mid, profile, config.momentum_form)
    acc_mid = -g_mid - config.kappa * rate

    new = FlowState(
        domain=dom,
        eta=state.eta + dt * v_mid,
        v=state.v + dt * acc_mid,
        time=state.time + dt,
        w_prev=g0,
        dt_prev=dt,
    )
    snap_new = _cached_snapshot(new)
    if not snap_new.valid:
        raise SolverAbort(new.time, float(snap_new.J.min()), new)
    return new


def run(u0: np.ndarray, profile: DensityProfile, config: SolverConfig) -> Trajectory:
    """Integrate from (e, u0) to t_end, sampling every snapshot_stride steps.

    Per-sample energy reports are attached afterwards (diagnostics module).
    Step aborts propagate with the partial trajectory attached.
    """
    if not np.all(np.isfinite(u0)):
        raise ValueError("u0 must be finite")
    state = initial_state(profile, u0)
    traj = Trajectory(profile=profile, config=config)
    traj.append(state)

    t_end = config.t_end
    tiny = 1e-14 * max(t_end, 1.0)
    while state.time < t_end - tiny:
        dt = config.dt if config.dt is not None else stable_dt(state, profile, config)
        dt = min(dt, t_end - state.time)
        try:
            state = step(state, profile, config, dt=dt)
        except SolverAbort as ab:
            ab.trajectory = traj
            raise
        traj.n_steps += 1
        if traj.n_steps % config.snapshot_stride == 0 or state.time >= t_end - tiny:
            traj.append(state)

    from .diagnostics import attach_reports  # deferred: diagnostics imports this module's types

    attach_reports(traj)
    return traj
