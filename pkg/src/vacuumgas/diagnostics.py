"""Energy functionals and structural residuals evaluated along trajectories.

The higher-order energy is reported in a deliberately truncated form: spatial
norms use the order-2 stencil budget composed up to fourth derivatives, and
time-derivative levels keep only a in {0, 1} (second time derivatives), since
higher finite differences of sampled trajectories are dominated by noise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .eos import DensityProfile
from .geometry import (
    FlowState,
    GeometrySnapshot,
    lagrangian_curl,
    piola_residual,
    snapshot,
)
from .grid import DiscreteDomain, apply_multi_index, gradient, sobolev_norm

__all__ = [
    "EnergyReport",
    "BoundaryTrace",
    "physical_energy",
    "energy_functional",
    "curl_transport_residual",
    "boundary_trace",
    "attach_reports",
    "fit_growth_constant",
    "ENERGY_COMPONENT_NAMES",
]

ENERGY_COMPONENT_NAMES = (
    "eta_h4",
    "rho_Deta_h4",
    "srho_dbar4_v",
    "etatt_h3",
    "rho_Detatt_h3",
    "srho_dbar3_vtt",
    "curl_h3",
    "rho_dbar4_curl",
)


@dataclass
class EnergyReport:
    t: float
    physical_energy: float
    E_components: dict
    E_total: float
    E_gamma_total: float
    curl_residual: float
    piola_residual_max: float
    J_min: float
    J_max: float

    def __post_init__(self) -> None:
        if not math.isclose(self.E_total, sum(self.E_components.values()), rel_tol=1e-12, abs_tol=1e-300):
            raise ValueError("E_total must equal the sum of its components")
        if self.J_min > self.J_max:
            raise ValueError("J_min must not exceed J_max")


@dataclass
class BoundaryTrace:
    t: float
    positions: dict
    normal_velocity: dict


def _geom(state: FlowState) -> GeometrySnapshot:
    snap = getattr(state, "_geom", None)
    if snap is None:
        snap = snapshot(state)
        state._geom = snap
    return snap


def physical_energy(state: FlowState, profile: DensityProfile) -> float:
    """Conserved energy of the kappa=0 flow:
    integral of rho0 |v|^2 / 2 + rho0^g J^(1-g) / (g-1)."""
    snap = _geom(state).require_valid()
    dom = state.domain
    g = profile.gamma
    kinetic = 0.5 * profile.rho0 * np.sum(state.v * state.v, axis=-1)
    internal = profile.rho0**g * snap.J ** (1.0 - g) / (g - 1.0)
    return dom.integrate(kinetic + internal)


def _fd_weights(times: np.ndarray, t_eval: float, order: int) -> np.ndarray:
    """Finite-difference weights for d^order/dt^order at t_eval on given nodes."""
    n = len(times)
    V = np.empty((n, n))
    for p in range(n):
        V[p] = (times - t_eval) ** p / math.factorial(p)
    rhs = np.zeros(n)
    rhs[order] = 1.0
    return np.linalg.solve(V, rhs)


def _combine(fields: list[np.ndarray], weights: np.ndarray) -> np.ndarray:
    out = weights[0] * fields[0]
    for w, f in zip(weights[1:], fields[1:]):
        out = out + w * f
    return out


def _flow_map_sobolev_sq(domain: DiscreteDomain, eta: np.ndarray, order: int) -> float:
    """||eta||_order^2 through the periodic displacement (D^alpha of the linear
    part contributes the constant basis vector at first order, nothing higher)."""
    disp = eta - domain.identity_map()
    total = domain.integrate(np.sum(eta * eta, axis=-1))
    for m in range(1, order + 1):
        for alpha in itertools.combinations_with_replacement(range(domain.dim), m):
            d = apply_multi_index(domain, disp, alpha)
            if m == 1:
                d = d.copy()
                d[..., alpha[0]] += 1.0
            total += domain.integrate(np.sum(d * d, axis=-1))
    return float(total)


def _horizontal_sq_norm(
    domain: DiscreteDomain, values: np.ndarray, m: int, weight: np.ndarray
) -> float:
    """Sum over horizontal multi-indices |alpha| = m of ||weight * D^alpha values||_0^2."""
    n_horiz = domain.dim - 1
    if n_horiz == 0:
        return 0.0
    total = 0.0
    for alpha in itertools.combinations_with_replacement(range(n_horiz), m):
        d = apply_multi_index(domain, values, alpha)
        sq = (weight[..., None] if d.ndim > domain.dim else weight) * d * d
        while sq.ndim > domain.dim:
            sq = sq.sum(axis=-1)
        total += domain.integrate(sq)
    return total


def energy_functional(
    window: list,
    profile: DensityProfile,
    kappa: float = 0.0,
    at: int | None = None,
) -> EnergyReport:
    """Truncated higher-order energy at one sample of a 3-sample window.

    ``window`` holds (time, FlowState) pairs; ``at`` picks the evaluation
    sample (defaults to the center).  A single-sample window yields a static
    report with the time-derivative components zeroed.
    """
    if not window:
        raise ValueError("window must hold at least one sample")
    if len(window) == 2:
        raise ValueError("window must hold 1 or >= 3 samples for time derivatives")
    static = len(window) == 1
    if at is None:
        at = 0 if static else len(window) // 2
    t_eval, state = window[at]
    dom = state.domain
    snap = _geom(state).require_valid()
    rho = profile.rho0
    sqrt_rho = np.sqrt(rho)
    g = profile.gamma

    if static:
        v_t = np.zeros_like(state.v)
        v_tt = np.zeros_like(state.v)
        j2_tt = np.zeros_like(snap.J)
    else:
        times = np.array([t for t, _ in window])
        w1 = _fd_weights(times, t_eval, 1)
        w2 = _fd_weights(times, t_eval, 2)
        vs = [s.v for _, s in window]
        v_t = _combine(vs, w1)
        v_tt = _combine(vs, w2)
        j2s = [_geom(s).J ** (-2.0) for _, s in window]
        j2_tt = _combine(j2s, w2)

    curl_v = lagrangian_curl(snap, state.v)

    comp = {}
    comp["eta_h4"] = _flow_map_sobolev_sq(dom, state.eta, 4)
    comp["rho_Deta_h4"] = sobolev_norm(dom, rho[..., None, None] * snap.D_eta, 4) ** 2
    comp["srho_dbar4_v"] = _horizontal_sq_norm(dom, state.v, 4, rho)
    comp["etatt_h3"] = sobolev_norm(dom, v_t, 3) ** 2
    comp["rho_Detatt_h3"] = sobolev_norm(dom, rho[..., None, None] * gradient(dom, v_t), 3) ** 2
    comp["srho_dbar3_vtt"] = _horizontal_sq_norm(dom, v_tt, 3, rho)
    comp["curl_h3"] = sobolev_norm(dom, curl_v, 3) ** 2
    comp["rho_dbar4_curl"] = _horizontal_sq_norm(dom, curl_v, 4, rho * rho)
    e_total = sum(comp.values())

    # general-gamma variant adds the weighted J^-2 levels (a in {0,1})
    e_gamma = e_total
    e_gamma += sobolev_norm(dom, rho * snap.J ** (-2.0), 4) ** 2
    e_gamma += sobolev_norm(dom, rho * j2_tt, 3) ** 2

    residual = 0.0 if static else curl_transport_residual(window, profile, kappa, at=at)
    piola_max = float(np.max(np.abs(piola_residual(snap))))

    return EnergyReport(
        t=t_eval,
        physical_energy=physical_energy(state, profile),
        E_components=comp,
        E_total=e_total,
        E_gamma_total=e_gamma,
        curl_residual=residual,
        piola_residual_max=piola_max,
        J_min=float(snap.J.min()),
        J_max=float(snap.J.max()),
    )


def _pullback_hessian(
    snap: GeometrySnapshot, values: np.ndarray
) -> np.ndarray:
    """H[r, j] = A^m_j (A^l_r values,_l),_m: the Eulerian Hessian pulled back."""
    dom = snap.domain
    DQ = gradient(dom, values)
    G = np.einsum("...rl,...l->...r", snap.A, DQ)  # Eulerian gradient, pulled back
    DG = gradient(dom, G)  # [..., r, m]
    return np.einsum("...jm,...rm->...rj", snap.A, DG)


def curl_transport_residual(
    window: list,
    profile: DensityProfile,
    kappa: float = 0.0,
    at: int | None = None,
) -> float:
    """L2 residual of the Lagrangian vorticity transport law at one sample.

    kappa = 0: ||curl_eta v_t||_0 (the transported vorticity is steady).
    kappa > 0: residual against the kappa-flux right side
    kappa b eps_{.ji} v^r,_s A^s_i H_rj with H the pulled-back Hessian of the
    Eulerian rho^(gamma-1).
    """
    if len(window) < 3:
        raise ValueError("window must hold >= 3 samples")
    if at is None:
        at = len(window) // 2
    t_eval, state = window[at]
    dom = state.domain
    snap = _geom(state).require_valid()
    times = np.array([t for t, _ in window])
    w1 = _fd_weights(times, t_eval, 1)
    v_t = _combine([s.v for _, s in window], w1)
    lhs = lagrangian_curl(snap, v_t)

    if kappa > 0.0:
        g = profile.gamma
        beta = g / (g - 1.0)
        Q = profile.pow_gm1 * snap.J ** (1.0 - g)
        H = _pullback_hessian(snap, Q)
        Dv = gradient(dom, state.v)
        T = np.einsum("...rs,...is,...rj->...ji", Dv, snap.A, H)  # v^r,_s A^s_i H_rj
        rhs = dom.zeros(dom.dim)
        if dom.dim == 3:
            rhs[..., 0] = T[..., 1, 2] - T[..., 2, 1]
            rhs[..., 1] = T[..., 2, 0] - T[..., 0, 2]
            rhs[..., 2] = T[..., 0, 1] - T[..., 1, 0]
        elif dom.dim == 2:
            rhs[..., 1] = T[..., 0, 1] - T[..., 1, 0]
        lhs = lhs - kappa * beta * rhs

    sq = np.sum(lhs * lhs, axis=-1)
    return float(np.sqrt(dom.integrate(sq)))


def boundary_trace(state: FlowState) -> BoundaryTrace:
    """Images of the vacuum-face nodes and their outward normal velocities."""
    snap = _geom(state).require_valid()
    dom = state.domain
    ax = dom.vertical_axis
    positions = {}
    vdotn = {}
    for face, idx in (("bottom", 0), ("top", -1)):
        sl: list = [slice(None)] * dom.dim
        sl[ax] = idx
        positions[face] = state.eta[tuple(sl)]
        v_face = state.v[tuple(sl)]
        vdotn[face] = np.sum(v_face * snap.normal[face], axis=-1)
    return BoundaryTrace(t=state.time, positions=positions, normal_velocity=vdotn)


def attach_reports(traj) -> None:
    """Attach an EnergyReport to every stored sample of a trajectory.

    Interior samples use centered 3-point windows; the ends use one-sided
    windows.  Single-sample trajectories get a static report.
    """
    samples = traj.samples
    kappa = traj.config.kappa
    traj.reports = []
    n = len(samples)
    for i in range(n):
        if n < 3:
            report = energy_functional([samples[i]], traj.profile, kappa)
        else:
            lo = min(max(i - 1, 0), n - 3)
            window = samples[lo : lo + 3]
            report = energy_functional(window, traj.profile, kappa, at=i - lo)
        traj.reports.append(report)


def fit_growth_constant(times: np.ndarray, values: np.ndarray, degree: int = 1) -> dict:
    """Fit C in the growth bound f(t) <= f(0) + C t f(t)^degree (reporting aid).

    Returns the smallest admissible C together with the baseline f(0).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1 or len(times) < 2:
        raise ValueError("times and values must be matching 1-D arrays, >= 2 entries")
    m0 = float(values[0])
    mask = times > times[0]
    denom = (times[mask] - times[0]) * values[mask] ** degree
    candidates = (values[mask] - m0) / denom
    return {"M0": m0, "C": float(np.max(candidates, initial=0.0)), "degree": degree}
