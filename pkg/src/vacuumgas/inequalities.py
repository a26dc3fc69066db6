"""Numerical probes of the weighted functional inequalities behind the theory:
the higher-order boundary-quotient (Hardy) bound, the distance-weighted
embedding, and the exactly integrable relaxation ODE f + kappa f_t = g.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eos import DensityProfile
from .grid import DiscreteDomain, diff, sobolev_norm

__all__ = [
    "InequalityReport",
    "hardy_ratio",
    "boundary_quotient",
    "weighted_embedding_ratio",
    "kelliptic_solve",
    "hardy_refinement_history",
    "TEST_CORPUS",
]


@dataclass
class InequalityReport:
    ratio: float
    constant_estimate: float
    history: list = field(default_factory=list)
    degenerate: bool = False

    def __post_init__(self) -> None:
        if not self.degenerate and not (np.isfinite(self.ratio) and self.ratio > 0):
            raise ValueError(f"ratio must be finite and positive, got {self.ratio}")


def boundary_quotient(domain: DiscreteDomain, u: np.ndarray) -> np.ndarray:
    """u / d with the one-sided derivative quotient at the vacuum faces.

    At x3 = 0 the quotient limits to du/dx3, at x3 = 1 to -du/dx3 (both by
    the vanishing of u on the faces).
    """
    d = domain.distance_field()
    du = diff(domain, u, domain.vertical_axis, 1)
    out = np.empty_like(u)
    np.divide(u, d, out=out, where=d > 0)
    ax = domain.vertical_axis
    sl: list = [slice(None)] * domain.dim
    sl[ax] = 0
    out[tuple(sl)] = du[tuple(sl)]
    sl[ax] = -1
    out[tuple(sl)] = -du[tuple(sl)]
    return out


def hardy_ratio(u: np.ndarray, s: int, profile: DensityProfile) -> InequalityReport:
    """||u/d||_{s-1} / ||u||_s for u vanishing on the vacuum faces."""
    if not 1 <= s <= 3:
        raise ValueError("s must be 1, 2 or 3 (discrete derivative budget)")
    domain = profile.domain
    ax = domain.vertical_axis
    sl: list = [slice(None)] * domain.dim
    scale = float(np.max(np.abs(u)))
    if scale == 0:
        raise ValueError("u vanishes identically")
    for idx, name in ((0, "bottom"), (-1, "top")):
        sl[ax] = idx
        if np.max(np.abs(u[tuple(sl)])) > 1e-12 * scale:
            raise ValueError(f"u must vanish on the {name} face")

    quotient = boundary_quotient(domain, u)
    left = sobolev_norm(domain, quotient, s - 1)
    right = sobolev_norm(domain, u, s)
    ratio = left / right
    return InequalityReport(ratio=ratio, constant_estimate=ratio, history=[ratio])


def weighted_embedding_ratio(F: np.ndarray, p: int, profile: DensityProfile) -> InequalityReport:
    """||F||^2_{1-p/2} against the d^p-weighted H1 integral.

    The fractional norm is approximated by geometric interpolation of the
    discrete order-0 and order-1 norms with exponent 1 - p/2.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    domain = profile.domain
    d = domain.distance_field()
    theta = 1.0 - p / 2.0
    n0 = sobolev_norm(domain, F, 0)
    if n0 == 0.0:
        return InequalityReport(ratio=float("nan"), constant_estimate=float("nan"), degenerate=True)
    n1 = sobolev_norm(domain, F, 1)
    left = n0 ** (1.0 - theta) * n1**theta

    grad_sq = np.zeros(domain.shape)
    for ax in range(domain.dim):
        df = diff(domain, F, ax, 1)
        grad_sq += df * df
    right = domain.integrate(d**p * (F * F + grad_sq))
    ratio = left * left / right
    return InequalityReport(ratio=ratio, constant_estimate=ratio, history=[ratio])


def kelliptic_solve(f0: np.ndarray, g, kappa: float, dt: float, t_end: float):
    """Exact integrating-factor march for f + kappa f_t = g, nodewise.

    g may be a constant array or a callable of time; each step uses its
    midpoint value, so constant forcing is reproduced to machine precision
    and every iterate is a convex combination of forcing and state (hence
    sup_t |f| <= max(|f(0)|, sup |g|) holds exactly).
    """
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    if dt <= 0 or t_end < 0:
        raise ValueError("dt must be > 0 and t_end >= 0")
    decay = np.exp(-dt / kappa)
    n_steps = int(round(t_end / dt))
    f = np.array(f0, dtype=float)
    times = [0.0]
    fields = [f.copy()]
    t = 0.0
    for _ in range(n_steps):
        gbar = np.asarray(g(t + 0.5 * dt) if callable(g) else g, dtype=float)
        f = gbar + (f - gbar) * decay
        t += dt
        times.append(t)
        fields.append(f.copy())
    return np.array(times), fields


TEST_CORPUS = {
    "sin_pi": lambda x: np.sin(np.pi * x),
    "parabola": lambda x: x * (1.0 - x),
    "distance": lambda x: np.minimum(x, 1.0 - x),
    "bump": lambda x: (x * (1.0 - x)) ** 2 * np.exp(np.sin(2.0 * np.pi * x)),
}


def hardy_refinement_history(
    name: str, s: int, gamma: float, sizes=(65, 129, 257)
) -> InequalityReport:
    """Hardy ratio of a named 1-D corpus function across grid refinements."""
    from .eos import density_profile
    from .grid import build_domain

    if name not in TEST_CORPUS:
        raise ValueError(f"unknown corpus function {name!r}; choose from {sorted(TEST_CORPUS)}")
    fn = TEST_CORPUS[name]
    history = []
    for n in sizes:
        domain = build_domain(1, None, n)
        profile = density_profile("parabolic", domain, gamma)
        u = fn(domain.coords[0])
        history.append(hardy_ratio(u, s, profile).ratio)
    return InequalityReport(
        ratio=history[-1], constant_estimate=max(history), history=history
    )
