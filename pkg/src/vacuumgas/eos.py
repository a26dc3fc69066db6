"""Initial density profiles with a physical vacuum boundary, and the gas EOS.

A profile is admissible when rho0 > 0 inside, rho0 = 0 on both faces, and the
enthalpy-like quantity rho0^(gamma-1) has a strictly negative outward slope at
each face (so it degenerates exactly linearly in the boundary distance, and
the gas can accelerate into the vacuum).  Profiles that degenerate faster are
rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import DiscreteDomain, diff, gradient

__all__ = [
    "EosParams",
    "DensityProfile",
    "ProfileError",
    "density_profile",
    "check_physical_vacuum",
    "pressure",
    "sound_speed_sq",
    "mollify_initial_data",
]

PROFILE_KINDS = ("parabolic", "linear_ramp", "custom")


class ProfileError(ValueError):
    """Raised when a density profile violates the physical vacuum condition."""


# minimum admissible face slope of rho0^(gamma-1), relative to its global max;
# linearly degenerate profiles sit at O(1), faster degeneracy at O(h^2)
_SLOPE_FRACTION = 0.1


@dataclass(frozen=True)
class EosParams:
    gamma: float
    c_gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.gamma <= 1.0:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")


def pressure(rho, eos: EosParams):
    """p = c_gamma * rho^gamma."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    out = eos.c_gamma * rho**eos.gamma
    return float(out) if out.ndim == 0 else out


def sound_speed_sq(rho, eos: EosParams):
    """c^2 = dp/drho = gamma * c_gamma * rho^(gamma-1)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    out = eos.gamma * eos.c_gamma * rho ** (eos.gamma - 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class DensityProfile:
    """Validated initial density with vacuum faces at x3 = 0 and x3 = 1.

    ``pow_gm1`` caches rho0^(gamma-1) (linear in boundary distance near each
    face for admissible profiles).  ``vacuum_constant`` is the slope constant
    estimated from the two node layers nearest the faces.
    """

    domain: DiscreteDomain
    rho0: np.ndarray
    grad_rho0: np.ndarray
    d: np.ndarray
    gamma: float
    pow_gm1: np.ndarray
    vacuum_constant: float
    kind: str = "custom"
    slope: float = 1.0

    def eos(self, c_gamma: float = 1.0) -> EosParams:
        return EosParams(gamma=self.gamma, c_gamma=c_gamma)

    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.domain.shape, dtype=bool)
        ax = self.domain.vertical_axis
        sl: list = [slice(None)] * self.domain.dim
        for idx in (0, -1):
            sl[ax] = idx
            mask[tuple(sl)] = False
        return mask

    def hardy_quotient(self) -> np.ndarray:
        """D(rho0)/rho0 as a vector field, zeroed on the vacuum faces.

        Finite in the interior by the vacuum condition; callers pair it with a
        weight vanishing on the faces.
        """
        dom = self.domain
        q = self.pow_gm1
        dq = gradient(dom, q)
        L = np.zeros_like(dq)
        denom = (self.gamma - 1.0) * q
        np.divide(dq, denom[..., None], out=L, where=denom[..., None] > 0.0)
        return L


def _face_values(domain: DiscreteDomain, values: np.ndarray, face: str) -> np.ndarray:
    ax = domain.vertical_axis
    sl: list = [slice(None)] * domain.dim
    sl[ax] = 0 if face == "bottom" else -1
    return values[tuple(sl)]


def _one_sided_vertical_slope(domain: DiscreteDomain, values: np.ndarray, face: str) -> np.ndarray:
    d = diff(domain, values, domain.vertical_axis, 1)
    return _face_values(domain, d, face)


def check_physical_vacuum(
    domain: DiscreteDomain, rho0: np.ndarray, gamma: float
) -> tuple[float, np.ndarray]:
    """Validate the physical vacuum condition; returns (C estimate, rho^(g-1)).

    Raises ProfileError naming the failing face when rho0 does not vanish on a
    face, is not positive inside, or rho0^(gamma-1) has a non-negative outward
    slope at a face (one-sided stencils).
    """
    if gamma <= 1.0:
        raise ProfileError(f"gamma must be > 1, got {gamma}")
    if rho0.shape != domain.shape:
        raise ProfileError(f"rho0 shape {rho0.shape} does not match grid {domain.shape}")
    if np.any(rho0 < 0):
        raise ProfileError("rho0 must be nonnegative")
    scale = float(rho0.max())
    if scale <= 0:
        raise ProfileError("rho0 vanishes identically")
    for face in ("bottom", "top"):
        fv = _face_values(domain, rho0, face)
        if np.max(np.abs(fv)) > 1e-12 * scale:
            raise ProfileError(f"rho0 does not vanish on the {face} face")

    ax = domain.vertical_axis
    sl: list = [slice(None)] * domain.dim
    sl[ax] = slice(1, -1)
    if np.min(rho0[tuple(sl)]) <= 0:
        raise ProfileError("rho0 must be strictly positive at interior nodes")

    q = rho0 ** (gamma - 1.0)
    # outward derivative: dN = -d/dx3 at the bottom, +d/dx3 at the top.
    # Profiles degenerating faster than linearly show a face slope of size
    # O(h^2) instead of O(max q); gate on a fixed fraction of the global scale
    # so the discrete check stays deterministic.
    q_scale = float(q.max())
    threshold = -_SLOPE_FRACTION * q_scale
    for face, orient in (("bottom", -1.0), ("top", 1.0)):
        dn = orient * _one_sided_vertical_slope(domain, q, face)
        if np.max(dn) > threshold:
            raise ProfileError(
                f"physical vacuum violated on the {face} face: "
                f"max dN(rho0^(gamma-1)) = {np.max(dn):.3e} > {threshold:.3e}"
            )

    h = domain.spacing[ax]
    ratios = []
    for layer in (1, 2):
        for idx in (layer, -(layer + 1)):
            sl[ax] = idx
            dist = layer * h
            ratios.append(np.min(q[tuple(sl)]) / dist)
    return float(min(ratios)), q


def density_profile(
    kind: str,
    domain: DiscreteDomain,
    gamma: float,
    c: float = 1.0,
    rho0: np.ndarray | None = None,
) -> DensityProfile:
    """Build and validate an initial density profile.

    * ``parabolic``: rho0 = (c x3(1-x3))^(1/(gamma-1)); for gamma=2 this is the
      plain parabola c x3(1-x3).
    * ``linear_ramp``: rho0 = (c min(x3, 1-x3))^(1/(gamma-1)).
    * ``custom``: caller-supplied field, validated as-is.
    """
    if kind not in PROFILE_KINDS:
        raise ValueError(f"unknown profile kind {kind!r}; choose from {PROFILE_KINDS}")
    if kind != "custom":
        if c <= 0:
            raise ProfileError(f"profile slope c must be > 0, got {c}")
        x3 = domain.vertical_coord()
        base = c * x3 * (1.0 - x3) if kind == "parabolic" else c * domain.distance_field()
        rho0 = base ** (1.0 / (gamma - 1.0))
    elif rho0 is None:
        raise ValueError("custom profile requires a rho0 field")
    rho0 = np.array(rho0, dtype=float)

    constant, q = check_physical_vacuum(domain, rho0, gamma)
    # clamp the faces exactly to zero (custom input may carry roundoff there)
    ax = domain.vertical_axis
    sl: list = [slice(None)] * domain.dim
    for idx in (0, -1):
        sl[ax] = idx
        rho0[tuple(sl)] = 0.0
        q[tuple(sl)] = 0.0

    return DensityProfile(
        domain=domain,
        rho0=rho0,
        grad_rho0=gradient(domain, rho0),
        d=domain.distance_field(),
        gamma=gamma,
        pow_gm1=q,
        vacuum_constant=constant,
        kind=kind,
        slope=c,
    )


def _gaussian_smooth(
    domain: DiscreteDomain, values: np.ndarray, radius: float, odd_vertical: bool
) -> np.ndarray:
    sigmas = [radius / h for h in domain.spacing]
    ax_v = domain.vertical_axis
    out = np.array(values, dtype=float)
    for ax in range(domain.dim):
        if sigmas[ax] <= 0:
            continue
        if domain.is_periodic(ax):
            out = ndimage.gaussian_filter1d(out, sigmas[ax], axis=ax, mode="wrap")
        else:
            pad = int(4.0 * sigmas[ax] + 1.0)
            pad = min(pad, domain.shape[ax_v] - 1)
            width = [(0, 0)] * out.ndim
            width[ax] = (pad, pad)
            rtype = "odd" if odd_vertical else "even"
            padded = np.pad(out, width, mode="reflect", reflect_type=rtype)
            padded = ndimage.gaussian_filter1d(padded, sigmas[ax], axis=ax, mode="nearest")
            sl: list = [slice(None)] * out.ndim
            sl[ax] = slice(pad, padded.shape[ax] - pad)
            out = padded[tuple(sl)]
    return out


def mollify_initial_data(
    domain: DiscreteDomain,
    u0: np.ndarray,
    rho0: np.ndarray,
    radius: float,
    gamma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian smoothing of initial data: periodic horizontally, reflected
    vertically (odd reflection for the density, which preserves its vanishing
    trace).  The smoothed density is re-clamped to zero on the faces and must
    still pass the physical vacuum validator.
    """
    if radius < 0:
        raise ValueError("smoothing radius must be >= 0")
    if radius == 0:
        return u0, rho0
    u_s = _gaussian_smooth(domain, u0, radius, odd_vertical=False)
    r_s = _gaussian_smooth(domain, rho0, radius, odd_vertical=True)
    ax = domain.vertical_axis
    sl: list = [slice(None)] * domain.dim
    for idx in (0, -1):
        sl[ax] = idx
        r_s[tuple(sl)] = 0.0
    r_s = np.maximum(r_s, 0.0)
    check_physical_vacuum(domain, r_s, gamma)
    return u_s, r_s
