"""Run configuration, the exact affine benchmark, and parameter studies."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .eos import DensityProfile, density_profile, mollify_initial_data
from .geometry import (
    FlowState,
    curlcurl_identity_residual,
    lagrangian_curl,
    lagrangian_div,
    piola_residual,
    snapshot,
)
from .grid import DiscreteDomain, build_domain, gradient
from .solver import SolverAbort, SolverConfig, Trajectory, initial_state, run

__all__ = [
    "RunConfig",
    "StudyResult",
    "AffineReference",
    "affine_oracle",
    "kappa_sweep",
    "refinement_study",
    "identity_suite",
    "initial_velocity",
    "smooth_test_map",
    "fit_order",
    "max_workers",
    "THREADS_ENV",
]

THREADS_ENV = "VACUUMGAS_THREADS"

VELOCITY_PRESETS = ("zero", "expansion", "gradient", "rotation", "shear")


@dataclass(frozen=True)
class RunConfig:
    """Flat run description mirroring the config-file sections."""

    # [domain]
    dim: int = 1
    n_horizontal: int = 16
    n_vertical: int = 65
    # [profile]
    profile_kind: str = "parabolic"
    profile_c: float = 1.0
    mollify_radius: float = 0.0
    # [eos]
    gamma: float = 2.0
    c_gamma: float = 1.0
    # [solver]
    kappa: float = 0.0
    dt: float | None = None
    t_end: float = 0.1
    cfl_number: float = 0.5
    snapshot_stride: int = 1
    momentum_form: str = "divided"
    velocity: str = "zero"
    velocity_amplitude: float = 0.1
    # [output]
    output_dir: str | None = None
    write_dumps: bool = False
    dump_stride: int = 1
    # [study]
    kappas: tuple = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
    refine_levels: int = 3
    # top-level
    seed: int = 0
    threads: int | None = None

    _SECTIONS = {
        "domain": ("dim", "n_horizontal", "n_vertical"),
        "profile": ("profile_kind", "profile_c", "mollify_radius"),
        "eos": ("gamma", "c_gamma"),
        "solver": (
            "kappa",
            "dt",
            "t_end",
            "cfl_number",
            "snapshot_stride",
            "momentum_form",
            "velocity",
            "velocity_amplitude",
        ),
        "output": ("output_dir", "write_dumps", "dump_stride"),
        "study": ("kappas", "refine_levels"),
    }
    _ALIASES = {"kind": "profile_kind", "c": "profile_c", "dir": "output_dir", "cfl": "cfl_number"}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        kwargs: dict = {}
        for section, payload in data.items():
            if section in ("seed", "threads"):
                kwargs[section] = payload
                continue
            if section not in cls._SECTIONS:
                raise ValueError(f"unknown config section {section!r}")
            for key, value in payload.items():
                name = cls._ALIASES.get(key, key)
                if name not in cls._SECTIONS[section]:
                    raise ValueError(f"unknown key {key!r} in section [{section}]")
                if isinstance(value, list):
                    value = tuple(value)
                kwargs[name] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.gamma <= 1:
            raise ValueError("gamma must be > 1")
        if self.velocity not in VELOCITY_PRESETS:
            raise ValueError(f"velocity must be one of {VELOCITY_PRESETS}")
        self.solver_config()  # re-checks the solver block invariants

    def build_domain(self) -> DiscreteDomain:
        return build_domain(self.dim, self.n_horizontal, self.n_vertical)

    def build_profile(self, domain: DiscreteDomain | None = None) -> DensityProfile:
        domain = domain or self.build_domain()
        return density_profile(self.profile_kind, domain, self.gamma, c=self.profile_c)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            kappa=self.kappa,
            gamma=self.gamma,
            dt=self.dt,
            t_end=self.t_end,
            cfl_number=self.cfl_number,
            snapshot_stride=self.snapshot_stride,
            momentum_form=self.momentum_form,
        )

    def initial_velocity(self, domain: DiscreteDomain) -> np.ndarray:
        return initial_velocity(domain, self.velocity, self.velocity_amplitude)

    def execute(self) -> Trajectory:
        domain = self.build_domain()
        profile = self.build_profile(domain)
        u0 = self.initial_velocity(domain)
        if self.mollify_radius > 0:
            u0, rho_s = mollify_initial_data(
                domain, u0, profile.rho0, self.mollify_radius, self.gamma
            )
            profile = density_profile("custom", domain, self.gamma, rho0=rho_s)
        return run(u0, profile, self.solver_config())


def initial_velocity(domain: DiscreteDomain, name: str, amplitude: float = 0.1) -> np.ndarray:
    """Named initial velocity fields used by runs and studies.

    ``gradient`` returns a discrete potential gradient, so its discrete curl
    vanishes to roundoff (tensor-product stencils along distinct axes commute).
    """
    u = domain.zeros(domain.dim)
    mesh = domain.mesh()
    x3 = mesh[domain.vertical_axis]
    if name == "zero":
        return u
    if name == "expansion":
        u[..., domain.vertical_axis] = amplitude * (x3 - 0.5)
        return u
    if name == "gradient":
        if domain.dim == 1:
            phi = amplitude * np.sin(np.pi * x3)
        elif domain.dim == 2:
            phi = amplitude * np.sin(2 * np.pi * mesh[0]) * x3 * (1.0 - x3)
        else:
            phi = (
                amplitude
                * np.sin(2 * np.pi * mesh[0])
                * (1.0 + 0.5 * np.cos(2 * np.pi * mesh[1]))
                * x3
                * (1.0 - x3)
            )
        return gradient(domain, phi)
    if name == "rotation":
        if domain.dim == 1:
            raise ValueError("rotation needs dim >= 2")
        if domain.dim == 2:
            u[..., 0] = -amplitude * (x3 - 0.5)
            u[..., 1] = amplitude * np.sin(2 * np.pi * mesh[0]) / (2 * np.pi)
            return u
        u[..., 0] = -amplitude * np.sin(2 * np.pi * mesh[1]) / (2 * np.pi)
        u[..., 1] = amplitude * np.sin(2 * np.pi * mesh[0]) / (2 * np.pi)
        return u
    if name == "shear":
        u[..., domain.vertical_axis] = amplitude * np.sin(2 * np.pi * mesh[0]) if domain.dim > 1 else 0.0
        if domain.dim == 1:
            u[..., 0] = amplitude * np.sin(np.pi * x3)
        return u
    raise ValueError(f"unknown velocity preset {name!r}")


def smooth_test_map(domain: DiscreteDomain, amplitude: float = 0.05) -> np.ndarray:
    """A smooth non-affine flow map (periodic displacement) for identity studies."""
    eta = domain.identity_map()
    mesh = domain.mesh()
    x3 = mesh[domain.vertical_axis]
    if domain.dim == 1:
        eta[..., 0] += amplitude * np.sin(np.pi * x3) * x3
        return eta
    s1 = np.sin(2 * np.pi * mesh[0])
    c1 = np.cos(2 * np.pi * mesh[0])
    if domain.dim == 2:
        eta[..., 0] += amplitude * s1 * x3 * (1.0 - x3)
        eta[..., 1] += amplitude * c1 * (0.5 + x3 * x3 / 2)
        return eta
    s2 = np.sin(2 * np.pi * mesh[1])
    eta[..., 0] += amplitude * s1 * x3 * (1.0 - x3)
    eta[..., 1] += amplitude * s2 * c1 * (1.0 + 0.5 * x3)
    eta[..., 2] += amplitude * s1 * s2 * x3
    return eta


@dataclass
class StudyResult:
    """Table of (parameter, metrics) rows plus fitted convergence orders."""

    rows: list
    fitted_orders: dict = field(default_factory=dict)
    notes: str = ""


def fit_order(hs, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    mask = errors > 0
    if mask.sum() < 2:
        return float("nan")
    slope = np.polyfit(np.log(hs[mask]), np.log(errors[mask]), 1)[0]
    return float(slope)


def max_workers(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return 1


def _run_many(configs, workers: int):
    def one(cfg):
        try:
            return cfg.execute(), None
        except SolverAbort as ab:
            return ab.trajectory, ab

    if workers <= 1:
        return [one(cfg) for cfg in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, configs))


@dataclass
class AffineReference:
    """Exact affine expansion benchmark: eta = 1/2 + r(t)(x - 1/2) in 1-D,
    gamma = 2, rho0 = c x(1-x), with r solving r'' = 4c/r^2."""

    c: float
    r0: float
    rdot0: float
    t_end: float
    dt_ref: float
    times: np.ndarray
    r: np.ndarray
    rdot: np.ndarray
    _dense: object = field(repr=False, default=None)

    def r_at(self, t):
        rt, _ = self._dense(np.atleast_1d(t))
        return rt if np.ndim(t) else float(rt[0])

    def rdot_at(self, t):
        _, rd = self._dense(np.atleast_1d(t))
        return rd if np.ndim(t) else float(rd[0])

    def eta_field(self, domain: DiscreteDomain, t: float) -> np.ndarray:
        x = domain.coords[domain.vertical_axis]
        out = domain.zeros(domain.dim)
        out[..., domain.vertical_axis] = 0.5 + self.r_at(t) * (x - 0.5)
        return out

    def v_field(self, domain: DiscreteDomain, t: float) -> np.ndarray:
        x = domain.coords[domain.vertical_axis]
        out = domain.zeros(domain.dim)
        out[..., domain.vertical_axis] = self.rdot_at(t) * (x - 0.5)
        return out

    def first_integral(self) -> np.ndarray:
        return 0.5 * self.rdot**2 + 4.0 * self.c / self.r

    def first_integral_drift(self) -> float:
        e = self.first_integral()
        return float(np.max(np.abs(e - e[0])) / abs(e[0]))


def affine_oracle(
    c: float, r0: float, rdot0: float, t_end: float, dt_ref: float = 1e-3
) -> AffineReference:
    """Integrate the scale-factor law r'' = 4c/r^2 with a high-order method.

    The reduction of the 1-D momentum law to this ODE under the affine ansatz
    is verified symbolically in the test suite before the oracle is trusted;
    the first integral rdot^2/2 + 4c/r is the runtime validity check.
    """
    if c <= 0:
        raise ValueError("c must be > 0 (c = 0 has no vacuum profile)")
    if r0 <= 0:
        raise ValueError("r0 must be > 0")
    if t_end < 0 or dt_ref <= 0:
        raise ValueError("t_end must be >= 0 and dt_ref > 0")

    def rhs(_t, y):
        return [y[1], 4.0 * c / (y[0] * y[0])]

    def collapse(_t, y):
        return y[0] - 1e-9

    collapse.terminal = True
    sol = solve_ivp(
        rhs,
        (0.0, t_end),
        [r0, rdot0],
        method="DOP853",
        rtol=1e-12,
        atol=1e-13,
        dense_output=True,
        events=collapse,
    )
    if not sol.success or (sol.t_events[0].size > 0):
        raise RuntimeError("scale factor collapsed to zero during integration")
    times = np.arange(0.0, t_end + 0.5 * dt_ref, dt_ref)
    times[-1] = min(times[-1], t_end)
    r, rdot = sol.sol(times)
    return AffineReference(
        c=c, r0=r0, rdot0=rdot0, t_end=t_end, dt_ref=dt_ref,
        times=times, r=r, rdot=rdot, _dense=sol.sol,
    )


def _rel_l2(domain: DiscreteDomain, got: np.ndarray, ref: np.ndarray) -> float:
    diff2 = domain.integrate(np.sum((got - ref) ** 2, axis=-1))
    ref2 = domain.integrate(np.sum(ref * ref, axis=-1))
    return float(np.sqrt(diff2 / ref2)) if ref2 > 0 else float(np.sqrt(diff2))


def affine_benchmark_error(
    n_vertical: int,
    t_end: float = 0.2,
    c: float = 1.0,
    rdot0: float = 0.0,
    cfl: float = 0.5,
    momentum_form: str = "divided",
) -> dict:
    """Run the 1-D affine case and compare with the ODE reference at t_end."""
    oracle = affine_oracle(c, 1.0, rdot0, t_end, dt_ref=min(1e-3, t_end / 10))
    domain = build_domain(1, None, n_vertical)
    profile = density_profile("parabolic", domain, 2.0, c=c)
    config = SolverConfig(
        kappa=0.0, gamma=2.0, t_end=t_end, cfl_number=cfl,
        snapshot_stride=10**9, momentum_form=momentum_form,
    )
    u0 = domain.zeros(1)
    u0[..., 0] = rdot0 * (domain.coords[0] - 0.5)
    traj = run(u0, profile, config)
    t_f, state = traj.samples[-1]
    return {
        "n": n_vertical,
        "h": domain.spacing[0],
        "t": t_f,
        "v_err": _rel_l2(domain, state.v, oracle.v_field(domain, t_f)),
        "eta_err": _rel_l2(domain, state.eta, oracle.eta_field(domain, t_f)),
        "oracle_drift": oracle.first_integral_drift(),
    }


def kappa_sweep(base: RunConfig, kappas=None, workers: int | None = None) -> StudyResult:
    """Run the base configuration across a decreasing kappa list and report
    matched-time L2 velocity differences between consecutive runs."""
    kappas = tuple(base.kappas if kappas is None else kappas)
    if len(kappas) < 3:
        raise ValueError("kappa sweep needs >= 3 values")
    if any(k2 > k1 for k1, k2 in zip(kappas, kappas[1:])):
        raise ValueError("kappa values must be non-increasing")
    if any(k < 0 for k in kappas):
        raise ValueError("kappa values must be >= 0")

    dt = base.dt
    if dt is None:
        # one common step so every run samples identical times
        domain = base.build_domain()
        profile = base.build_profile(domain)
        state = initial_state(profile, base.initial_velocity(domain))
        from .solver import stable_dt

        dt = stable_dt(state, profile, replace(base, kappa=kappas[0]).solver_config())

    configs = [replace(base, kappa=k, dt=dt) for k in kappas]
    outcomes = _run_many(configs, max_workers(workers if workers is not None else base.threads))

    rows = []
    for k, (traj, abort) in zip(kappas, outcomes):
        row = {"kappa": k, "dt": dt, "aborted": abort is not None}
        if abort is not None:
            row["abort_time"] = abort.time
        elif traj is not None and traj.reports:
            row["physical_energy_final"] = traj.reports[-1].physical_energy
            row["J_min"] = min(r.J_min for r in traj.reports)
            row["J_max"] = max(r.J_max for r in traj.reports)
        rows.append(row)

    diffs = []
    for i in range(len(kappas) - 1):
        t_a, ab_a = outcomes[i]
        t_b, ab_b = outcomes[i + 1]
        if ab_a is not None or ab_b is not None:
            diffs.append(float("nan"))
            continue
        domain = t_a.profile.domain
        n = min(len(t_a.samples), len(t_b.samples))
        d = _rel_l2_abs(domain, t_a.samples[n - 1][1].v, t_b.samples[n - 1][1].v)
        diffs.append(d)
    for row, d in zip(rows[:-1], diffs):
        row["v_diff_to_next"] = d

    notes = "matched-time L2 velocity differences between consecutive kappa runs"
    return StudyResult(rows=rows, fitted_orders={}, notes=notes)


def _rel_l2_abs(domain: DiscreteDomain, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(domain.integrate(np.sum((a - b) ** 2, axis=-1))))


def refinement_study(base: RunConfig, levels: int | None = None) -> StudyResult:
    """Halve the grid spacing per level; fit observed orders on the affine
    benchmark error and on the Piola / curl-curl identity residuals."""
    levels = base.refine_levels if levels is None else levels
    if levels < 3:
        raise ValueError("refinement study needs >= 3 levels")

    rows = []
    hs, v_errs, piolas, curls = [], [], [], []
    n0 = max(base.n_vertical, 17)
    map_dim = base.dim if base.dim > 1 else 2
    n_map0 = 8
    for lev in range(levels):
        n_v = (n0 - 1) * 2**lev + 1
        bench = affine_benchmark_error(
            n_v, t_end=base.t_end, c=base.profile_c, cfl=base.cfl_number,
            momentum_form=base.momentum_form,
        )
        n_map = n_map0 * 2**lev
        dom = build_domain(map_dim, n_map, n_map + 1)
        eta = smooth_test_map(dom, amplitude=0.05)
        state = FlowState(domain=dom, eta=eta, v=initial_velocity(dom, "gradient", 0.3))
        snap = snapshot(state)
        piola_max = float(np.max(np.abs(piola_residual(snap))))
        curl_max = float(np.max(np.abs(curlcurl_identity_residual(snap, state.v))))
        row = {
            "level": lev,
            "h": bench["h"],
            "affine_v_err": bench["v_err"],
            "affine_eta_err": bench["eta_err"],
            "map_h": 1.0 / n_map,
            "piola_max": piola_max,
            "curlcurl_max": curl_max,
        }
        rows.append(row)
        hs.append(bench["h"])
        v_errs.append(bench["v_err"])
        piolas.append(piola_max)
        curls.append(curl_max)

    orders = {
        "affine": fit_order(hs, v_errs),
        "piola": fit_order([r["map_h"] for r in rows], piolas),
        "curlcurl": fit_order([r["map_h"] for r in rows], curls),
    }
    return StudyResult(rows=rows, fitted_orders=orders, notes="spacing halved per level")


def identity_suite(dim: int = 3, n: int = 12) -> list:
    """Geometry identity checks at one resolution: (name, value, tol, ok) rows."""
    dom = build_domain(dim, n, n + 1)
    checks = []

    state_id = FlowState(domain=dom, eta=dom.identity_map(), v=dom.zeros(dim))
    snap_id = snapshot(state_id)
    checks.append(("identity_J_equals_1", float(np.max(np.abs(snap_id.J - 1.0))), 1e-12))
    checks.append(("identity_piola", float(np.max(np.abs(piola_residual(snap_id)))), 1e-12))

    # admissible affine maps on the periodic slab deform through x3 only
    rng = np.random.default_rng(0)
    coeff = 0.2 * rng.standard_normal(dim)
    b = rng.standard_normal(dim)
    x3 = dom.vertical_coord()
    eta_aff = dom.identity_map() + b
    for i in range(dim):
        eta_aff[..., i] += coeff[i] * x3
    snap_aff = snapshot(FlowState(domain=dom, eta=eta_aff, v=dom.zeros(dim)))
    checks.append(("affine_piola", float(np.max(np.abs(piola_residual(snap_aff)))), 1e-10))

    eta = smooth_test_map(dom, 0.05)
    v = initial_velocity(dom, "gradient", 0.3)
    state = FlowState(domain=dom, eta=eta, v=v)
    snap = snapshot(state)
    cof_err = np.einsum("...ik,...jk->...ij", snap.a, snap.D_eta)
    for i in range(dim):
        cof_err[..., i, i] -= snap.J
    rel = float(np.max(np.abs(cof_err)) / np.max(np.abs(snap.J)))
    checks.append(("cofactor_identity_rel", rel, 1e-10))

    h = max(dom.spacing)
    checks.append(
        ("piola_smooth", float(np.max(np.abs(piola_residual(snap)))), 50.0 * h * h)
    )
    checks.append(
        (
            "curlcurl_smooth",
            float(np.max(np.abs(curlcurl_identity_residual(snap, v)))),
            500.0 * h * h,
        )
    )
    checks.append(
        (
            "curl_of_gradient",
            float(np.max(np.abs(lagrangian_curl(snap_id, v)))),
            1e-10,
        )
    )
    from .geometry import flow_map_gradient

    w = dom.identity_map()
    div_w = lagrangian_div(snap_id, w, w_grad=flow_map_gradient(dom, w))
    checks.append(("div_identity_field", float(np.max(np.abs(div_w - dim))), 1e-10))
    return [(name, value, tol, value <= tol) for name, value, tol in checks]
